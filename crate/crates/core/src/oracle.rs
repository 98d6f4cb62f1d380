//! Partial derivatives of the general solution `(X, Y)(t, x, y)` at a fold,
//! measured by differencing integrations and compared with closed forms.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{flow_to, Tolerances};
use crate::model::{Bounds, Jet, PlanarField, TOL_ROOT};

pub const TOL_LOW_ORDER: f64 = 1e-6;
pub const TOL_THIRD_ORDER: f64 = 1e-4;

const H: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeEntry {
    pub name: &'static str,
    pub order: u8,
    pub formula_value: f64,
    pub numeric_value: f64,
    pub abs_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeReport {
    pub entries: Vec<DerivativeEntry>,
}

impl DerivativeReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, name: &str) -> Option<&DerivativeEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Fourth-order central first derivative.
fn d1(f: &dyn Fn(f64) -> Result<f64>, h: f64) -> Result<f64> {
    Ok((-f(2.0 * h)? + 8.0 * f(h)? - 8.0 * f(-h)? + f(-2.0 * h)?) / (12.0 * h))
}

/// Fourth-order central second derivative.
fn d2(f: &dyn Fn(f64) -> Result<f64>, h: f64) -> Result<f64> {
    Ok((-f(2.0 * h)? + 16.0 * f(h)? - 30.0 * f(0.0)? + 16.0 * f(-h)? - f(-2.0 * h)?) / (12.0 * h * h))
}

/// Fourth-order central third derivative.
fn d3(f: &dyn Fn(f64) -> Result<f64>, h: f64) -> Result<f64> {
    Ok((-f(3.0 * h)? + 8.0 * f(2.0 * h)? - 13.0 * f(h)? + 13.0 * f(-h)? - 8.0 * f(-2.0 * h)?
        + f(-3.0 * h)?)
        / (8.0 * h * h * h))
}

type Comp<'a> = &'a dyn Fn(f64, f64, f64) -> Result<f64>;

/// A component as a function of one of `t`, `x`, `y`, the others at zero.
fn along<'a>(c: Comp<'a>, axis: usize) -> impl Fn(f64) -> Result<f64> + 'a {
    move |s| match axis {
        0 => c(s, 0.0, 0.0),
        1 => c(0.0, s, 0.0),
        _ => c(0.0, 0.0, s),
    }
}

/// `t -> d^n/dv^n c(t, .)` at the origin, `v` being `x` (axis 1) or `y`.
fn t_of<'a>(c: Comp<'a>, axis: usize, n: usize) -> impl Fn(f64) -> Result<f64> + 'a {
    move |t| {
        let inner = move |s: f64| match axis {
            1 => c(t, s, 0.0),
            _ => c(t, 0.0, s),
        };
        if n == 1 {
            d1(&inner, H)
        } else {
            d2(&inner, H)
        }
    }
}

pub fn verify_solution_jets<F: PlanarField + ?Sized>(field: &F, jet: &Jet) -> Result<DerivativeReport> {
    let (f0, _) = field.eval(0.0, 0.0);
    if f0.abs() > TOL_ROOT {
        return Err(Error::NotFold(f0.abs()));
    }
    let tol = Tolerances::high_accuracy();
    let bounds = Bounds::unbounded();
    let flow = |t: f64, x: f64, y: f64| flow_to(field, (x, y), t, &tol, &bounds);
    let xc = |t: f64, x: f64, y: f64| flow(t, x, y).map(|s| s.0);
    let yc = |t: f64, x: f64, y: f64| flow(t, x, y).map(|s| s.1);

    let Jet {
        g0,
        fx,
        fy,
        gx,
        gy,
        fyy,
        ..
    } = *jet;
    let k = fx * fy + fyy * g0 + fy * gy;

    let (cx, cy): (Comp, Comp) = (&xc, &yc);

    let first = |c: Comp, axis: usize| d1(&along(c, axis), H);
    let second = |c: Comp, axis: usize| d2(&along(c, axis), H);
    let tx = |c: Comp, axis: usize| d1(&t_of(c, axis, 1), H);
    let tyy = |c: Comp| d1(&t_of(c, 2, 2), H);
    let tty = |c: Comp| d2(&t_of(c, 2, 1), H);
    let ttt = |c: Comp| d3(&along(c, 0), H);

    let table: Vec<(&'static str, u8, f64, f64)> = vec![
        ("X_t", 1, f0, first(cx, 0)?),
        ("X_x", 1, 1.0, first(cx, 1)?),
        ("X_y", 1, 0.0, first(cx, 2)?),
        ("Y_t", 1, g0, first(cy, 0)?),
        ("Y_x", 1, 0.0, first(cy, 1)?),
        ("Y_y", 1, 1.0, first(cy, 2)?),
        ("X_tx", 2, fx, tx(cx, 1)?),
        ("X_ty", 2, fy, tx(cx, 2)?),
        ("Y_tx", 2, gx, tx(cy, 1)?),
        ("Y_ty", 2, gy, tx(cy, 2)?),
        ("X_tt", 2, fy * g0, second(cx, 0)?),
        ("Y_tt", 2, gy * g0, second(cy, 0)?),
        ("X_xx", 2, 0.0, second(cx, 1)?),
        ("X_yy", 2, 0.0, second(cx, 2)?),
        ("Y_xx", 2, 0.0, second(cy, 1)?),
        ("Y_yy", 2, 0.0, second(cy, 2)?),
        ("X_tyy", 3, fyy, tyy(cx)?),
        ("X_tty", 3, k, tty(cx)?),
        ("X_ttt", 3, k * g0, ttt(cx)?),
    ];

    let entries = table
        .into_iter()
        .map(|(name, order, formula_value, numeric_value)| {
            let abs_error = (formula_value - numeric_value).abs();
            let tolerance = if order == 3 { TOL_THIRD_ORDER } else { TOL_LOW_ORDER };
            DerivativeEntry {
                name,
                order,
                formula_value,
                numeric_value,
                abs_error,
                tolerance,
                pass: abs_error <= tolerance,
            }
        })
        .collect();
    Ok(DerivativeReport { entries })
}
