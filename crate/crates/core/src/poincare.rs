//! Half maps, point transformations and the return map on `{x_param} x R`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hybrid::{exit_line, simulate, StopRule};
use crate::integrator::{advance_to_line, DenseStep, Tolerances};
use crate::model::{Mode, ModelSpec, Reversed};
use crate::normal_form::{analyze, sign_of, Analysis, FoldCoefficients};

/// The wedge slope `m` and outer radius `delta` of the cross-section
/// interval `J = { -sign(g^R(0)) y in [cbrt(|x| / m), delta] }`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Region {
    pub m: f64,
    pub delta: f64,
}

impl Region {
    /// `m = 2 |alpha| / |beta|`, `delta` from the model box.
    pub fn default_for(model: &ModelSpec, coeffs: &FoldCoefficients) -> Self {
        Region {
            m: 2.0 * coeffs.min_wedge_slope(),
            delta: model.default_delta(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m.is_finite() && self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!(
                "region needs positive m and delta, got m = {}, delta = {}",
                self.m, self.delta
            )));
        }
        Ok(())
    }

    /// Inner end of J, as a magnitude.
    pub fn inner(&self, x_param: f64) -> f64 {
        (x_param.abs() / self.m).cbrt()
    }

    /// Whether `s y` lies in `[cbrt(|x| / m), delta]`, `s` being the
    /// section sign.
    pub fn contains(&self, section_sign: i8, x_param: f64, y: f64) -> bool {
        let v = f64::from(section_sign) * y;
        v >= self.inner(x_param) && v <= self.delta
    }
}

#[derive(Clone, Debug)]
pub struct HalfMapResult {
    pub y_out: f64,
    /// Signed; negative when the map was realized backward in time.
    pub flight_time: f64,
    /// Steps of the run, in the integration direction actually used.
    pub steps: Vec<DenseStep>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormalFormResidual {
    pub y: f64,
    pub x_param: f64,
    /// `P(y) - y - alpha y^2 - beta x / y`.
    pub delta_value: f64,
    pub ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PoincareResult {
    pub y_in: f64,
    pub y_out: f64,
    pub period: f64,
    /// Ordinate at the switch into `L`, on `x = -x_param`.
    pub intermediate: f64,
    pub residual: Option<NormalFormResidual>,
}

/// First nonzero return of one mode to the line it starts on.
pub fn half_map_p(
    model: &ModelSpec,
    mode: Mode,
    x_line: f64,
    y: f64,
    tol: &Tolerances,
) -> Result<HalfMapResult> {
    let jet = model.fold_jet(mode)?;
    jet.check_fold_hypothesis()?;
    let u = model.nullcline_u(mode, x_line)?;
    let field = model.field(mode);
    let forward = (y - u) * jet.g0 < 0.0;
    let (event, steps) = if forward {
        advance_to_line(field, (x_line, y), x_line, tol, &model.bounds)?
    } else {
        advance_to_line(&Reversed(field), (x_line, y), x_line, tol, &model.bounds)?
    };
    Ok(HalfMapResult {
        y_out: event.state.1,
        flight_time: if forward { event.t_star } else { -event.t_star },
        steps,
    })
}

/// Passage of one mode from `x = from_line` to `x = to_line`, in whichever
/// time direction the field points.
pub fn half_map_ptilde(
    model: &ModelSpec,
    mode: Mode,
    from_line: f64,
    to_line: f64,
    y: f64,
    m: f64,
    tol: &Tolerances,
) -> Result<HalfMapResult> {
    if from_line.abs() > m * y.abs().powi(3) {
        return Err(Error::DomainViolation(format!(
            "|x| = {:e} exceeds m |y|^3 = {:e}",
            from_line.abs(),
            m * y.abs().powi(3)
        )));
    }
    if from_line == to_line {
        return Ok(HalfMapResult {
            y_out: y,
            flight_time: 0.0,
            steps: Vec::new(),
        });
    }
    let field = model.field(mode);
    let (f, _) = model.eval_field(mode, (from_line, y))?;
    let forward = sign_of(f, 0.0) == sign_of(to_line - from_line, 0.0);
    let (event, steps) = if forward {
        advance_to_line(field, (from_line, y), to_line, tol, &model.bounds)?
    } else {
        advance_to_line(&Reversed(field), (from_line, y), to_line, tol, &model.bounds)?
    };
    Ok(HalfMapResult {
        y_out: event.state.1,
        flight_time: if forward { event.t_star } else { -event.t_star },
        steps,
    })
}

/// Line on which `mode` is switched on.
pub fn entry_line(mode: Mode, x_param: f64) -> f64 {
    exit_line(mode.flip(), x_param)
}

fn mode_jet(a: &Analysis, mode: Mode) -> &crate::model::Jet {
    match mode {
        Mode::L => &a.jet_l,
        Mode::R => &a.jet_r,
    }
}

/// `P^R_x` for `R`, `P^L_{-x}` for `L`: one forward run from the entry line
/// to the exit line.
pub fn point_transform(
    model: &ModelSpec,
    mode: Mode,
    x_param: f64,
    y: f64,
    region: &Region,
    tol: &Tolerances,
) -> Result<HalfMapResult> {
    region.validate()?;
    let a = analyze(model)?;
    let jet = mode_jet(&a, mode);
    let from = entry_line(mode, x_param);
    let x_sign = -sign_of(jet.fy, 0.0) * sign_of(jet.g0, 0.0);
    if from != 0.0 && sign_of(from, 0.0) != x_sign {
        return Err(Error::DomainViolation(format!(
            "mode {mode}: line x = {from:e} is on the wrong side"
        )));
    }
    if !region.contains(-sign_of(jet.g0, 0.0), from, y) {
        return Err(Error::DomainViolation(format!(
            "mode {mode}: y = {y:e} outside [{:e}, {:e}] on the section side",
            region.inner(from),
            region.delta
        )));
    }
    let (event, steps) = advance_to_line(
        model.field(mode),
        (from, y),
        exit_line(mode, x_param),
        tol,
        &model.bounds,
    )?;
    Ok(HalfMapResult {
        y_out: event.state.1,
        flight_time: event.t_star,
        steps,
    })
}

/// Checks the hypotheses under which the composed map is the return map of
/// the switched system, and that `y` lies in J.
pub fn check_section(a: &Analysis, x_param: f64, y: f64, region: &Region) -> Result<()> {
    if sign_of(a.jet_r.g0, 0.0) * sign_of(a.jet_l.g0, 0.0) >= 0 {
        return Err(Error::DomainViolation("g^R(0) g^L(0) < 0 fails".into()));
    }
    if x_param != 0.0 && sign_of(x_param, 0.0) != a.coeffs.admissible_x_sign() {
        return Err(Error::DomainViolation(format!(
            "x = {x_param:e} is not on the admissible side (sign {})",
            a.coeffs.admissible_x_sign()
        )));
    }
    if !region.contains(a.coeffs.section_y_sign(), x_param, y) {
        return Err(Error::DomainViolation(format!(
            "y = {y:e} outside J: {}y in [{:e}, {:e}]",
            if a.coeffs.section_y_sign() < 0 { "-" } else { "" },
            region.inner(x_param),
            region.delta
        )));
    }
    Ok(())
}

/// Return map on `{x_param} x R`, from a hybrid run started in mode `R`.
pub fn poincare_map(
    model: &ModelSpec,
    x_param: f64,
    y: f64,
    region: &Region,
    want_residual: bool,
    tol: &Tolerances,
) -> Result<PoincareResult> {
    region.validate()?;
    let a = analyze(model)?;
    check_section(&a, x_param, y, region)?;
    poincare_map_unchecked(model, &a.coeffs, x_param, y, want_residual, tol)
}

pub(crate) fn poincare_map_unchecked(
    model: &ModelSpec,
    coeffs: &FoldCoefficients,
    x_param: f64,
    y: f64,
    want_residual: bool,
    tol: &Tolerances,
) -> Result<PoincareResult> {
    let tr = simulate(model, x_param, (x_param, y), Mode::R, StopRule::Switches(2), tol)?;
    let (first, second) = (&tr.events[0].event, &tr.events[1].event);
    let y_out = second.state.1;
    let residual = want_residual.then(|| {
        let d = y_out - coeffs.normal_form(x_param, y);
        NormalFormResidual {
            y,
            x_param,
            delta_value: d,
            ratio: d / (y * y),
        }
    });
    Ok(PoincareResult {
        y_in: y,
        y_out,
        period: second.t_star,
        intermediate: first.state.1,
        residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResidualRow {
    pub j: u32,
    pub y: f64,
    pub x: f64,
    pub p: f64,
    pub delta: f64,
    pub ratio: f64,
    /// Flight time of the same-line half map of `R` at `(x, y)`.
    pub t: f64,
    /// Flight time of the `x -> -x` half map of `R` at `(x, y)`.
    pub t_tilde: f64,
}

pub const RESIDUAL_PROBES: u32 = 7;

/// Residual probes `y_j = y0 2^-j`, `x_j = m |y_j|^3 / 2` on the admissible
/// side, `j = 0..6`. `y0` is a magnitude; the section sign is applied here.
pub fn residual_sweep(
    model: &ModelSpec,
    region: &Region,
    y0: f64,
    tol: &Tolerances,
) -> Result<Vec<ResidualRow>> {
    region.validate()?;
    let a = analyze(model)?;
    if !a.verdict.c2_g {
        return Err(Error::DomainViolation("g^R(0) g^L(0) < 0 fails".into()));
    }
    let ys = f64::from(a.coeffs.section_y_sign());
    let xs = f64::from(a.coeffs.admissible_x_sign());
    (0..RESIDUAL_PROBES)
        .into_par_iter()
        .map(|j| {
            let y = ys * y0.abs() * 0.5f64.powi(j as i32);
            let x = xs * region.m * y.abs().powi(3) / 2.0;
            check_section(&a, x, y, region)?;
            let p = poincare_map_unchecked(model, &a.coeffs, x, y, true, tol)?;
            let res = p.residual.expect("requested");
            let t = half_map_p(model, Mode::R, x, y, tol)?.flight_time;
            let t_tilde = half_map_ptilde(model, Mode::R, x, -x, y, region.m, tol)?.flight_time;
            Ok(ResidualRow {
                j,
                y,
                x,
                p: p.y_out,
                delta: res.delta_value,
                ratio: res.ratio,
                t,
                t_tilde,
            })
        })
        .collect()
}
