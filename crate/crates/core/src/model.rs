//! Switched planar models and the local data (jets, nullclines) the
//! normal-form formulas are built from.
//!
//! Every model is expressed in local coordinates: the fold-fold point sits at
//! the origin and `fold_point` records where that origin lives in the
//! model's physical coordinates.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this magnitude `f'_y(0)` or `g(0)` is treated as zero.
pub const TOL_DEGENERATE: f64 = 1e-9;
/// Residual accepted for `f(x, u(x)) = 0` and for the fold condition `f(0) = 0`.
pub const TOL_ROOT: f64 = 1e-12;

/// Which of the two smooth systems is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    L,
    R,
}

impl Mode {
    pub fn flip(self) -> Mode {
        match self {
            Mode::L => Mode::R,
            Mode::R => Mode::L,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::L => "L",
            Mode::R => "R",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A smooth planar vector field `(x, y) -> (f, g)`.
pub trait PlanarField: Send + Sync {
    fn eval(&self, x: f64, y: f64) -> (f64, f64);

    /// Closed-form jet at `(x, y)`, when the field knows its own derivatives.
    fn analytic_jet(&self, _x: f64, _y: f64) -> Option<Jet> {
        None
    }
}

impl<F: PlanarField + ?Sized> PlanarField for &F {
    fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        (**self).eval(x, y)
    }

    fn analytic_jet(&self, x: f64, y: f64) -> Option<Jet> {
        (**self).analytic_jet(x, y)
    }
}

/// The field with time reversed; integrating it forward integrates the
/// original field backward.
#[derive(Clone, Copy, Debug)]
pub struct Reversed<F>(pub F);

impl<F: PlanarField> PlanarField for Reversed<F> {
    fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        let (f, g) = self.0.eval(x, y);
        (-f, -g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JetSource {
    Analytic,
    FiniteDifference,
}

/// Value and low-order partial derivatives of `(f, g)` at a point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jet {
    pub f0: f64,
    pub g0: f64,
    pub fx: f64,
    pub fy: f64,
    pub gx: f64,
    pub gy: f64,
    pub fyy: f64,
    pub source: JetSource,
}

impl Jet {
    /// `f'_y(0) g(0) != 0`, the hypothesis every half map relies on.
    pub fn check_fold_hypothesis(&self) -> Result<()> {
        if self.fy.abs() < TOL_DEGENERATE {
            return Err(Error::DegenerateJet(format!("|f'_y| = {:e}", self.fy.abs())));
        }
        if self.g0.abs() < TOL_DEGENERATE {
            return Err(Error::DegenerateJet(format!("|g(0)| = {:e}", self.g0.abs())));
        }
        Ok(())
    }

    pub fn entries(&self) -> [f64; 7] {
        [self.f0, self.g0, self.fx, self.fy, self.gx, self.gy, self.fyy]
    }
}

/// Central-difference jet. First partials use `h = eps^(1/3) max(1, |p|)`,
/// `f''_yy` uses `h = eps^(1/4) max(1, |p|)`.
pub fn finite_difference_jet<F: PlanarField + ?Sized>(field: &F, point: (f64, f64)) -> Jet {
    let (x, y) = point;
    let scale = x.hypot(y).max(1.0);
    let h1 = f64::EPSILON.cbrt() * scale;
    let h2 = f64::EPSILON.powf(0.25) * scale;

    let (f0, g0) = field.eval(x, y);
    let (fxp, gxp) = field.eval(x + h1, y);
    let (fxm, gxm) = field.eval(x - h1, y);
    let (fyp, gyp) = field.eval(x, y + h1);
    let (fym, gym) = field.eval(x, y - h1);
    let fyy = {
        let (p, _) = field.eval(x, y + h2);
        let (m, _) = field.eval(x, y - h2);
        (p - 2.0 * f0 + m) / (h2 * h2)
    };

    Jet {
        f0,
        g0,
        fx: (fxp - fxm) / (2.0 * h1),
        fy: (fyp - fym) / (2.0 * h1),
        gx: (gxp - gxm) / (2.0 * h1),
        gy: (gyp - gym) / (2.0 * h1),
        fyy,
        source: JetSource::FiniteDifference,
    }
}

/// Damped oscillator `x' = y, y' = -x - c y + d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassSpring {
    pub damping: f64,
    pub forcing: f64,
}

impl PlanarField for MassSpring {
    fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        (y, -x - self.damping * y + self.forcing)
    }

    fn analytic_jet(&self, x: f64, y: f64) -> Option<Jet> {
        let (f0, g0) = self.eval(x, y);
        Some(Jet {
            f0,
            g0,
            fx: 0.0,
            fy: 1.0,
            gx: -1.0,
            gy: -self.damping,
            fyy: 0.0,
            source: JetSource::Analytic,
        })
    }
}

/// Single-corner braking model parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsParams {
    /// Longitudinal vehicle speed.
    pub nu: f64,
    /// Wheel radius.
    pub r: f64,
    /// Wheel moment of inertia.
    pub inertia: f64,
    /// Quarter-car mass.
    pub m_quarter: f64,
    /// Vertical tyre load.
    pub f_z: f64,
    pub theta_r1: f64,
    pub theta_r2: f64,
    pub theta_r3: f64,
    /// Braking torque rate magnitude.
    pub k: f64,
    /// Slip set point.
    pub lambda0: f64,
}

impl Default for AbsParams {
    fn default() -> Self {
        // Burckhardt dry-asphalt friction curve, passenger-car corner.
        AbsParams {
            nu: 20.0,
            r: 0.3,
            inertia: 1.0,
            m_quarter: 250.0,
            f_z: 2450.0,
            theta_r1: 1.28,
            theta_r2: 23.99,
            theta_r3: 0.52,
            k: 1000.0,
            lambda0: 0.1,
        }
    }
}

impl AbsParams {
    /// Road friction `mu(lambda)`.
    pub fn friction(&self, lambda: f64) -> f64 {
        self.theta_r1 * (1.0 - (-lambda * self.theta_r2).exp()) - lambda * self.theta_r3
    }

    pub fn friction_slope(&self, lambda: f64) -> f64 {
        self.theta_r1 * self.theta_r2 * (-lambda * self.theta_r2).exp() - self.theta_r3
    }

    fn load_factor(&self, lambda: f64) -> f64 {
        ((1.0 - lambda) / self.m_quarter + self.r * self.r / self.inertia) * self.f_z / self.nu
    }

    /// Slip restoring term `F(lambda)`.
    pub fn slip_force(&self, lambda: f64) -> f64 {
        self.load_factor(lambda) * self.friction(lambda)
    }

    /// `F'(lambda)`.
    pub fn slip_force_slope(&self, lambda: f64) -> f64 {
        let dload = -self.f_z / (self.m_quarter * self.nu);
        dload * self.friction(lambda) + self.load_factor(lambda) * self.friction_slope(lambda)
    }

    /// Torque gain `F0 = r / (nu J)`.
    pub fn torque_gain(&self) -> f64 {
        self.r / (self.nu * self.inertia)
    }

    /// Braking torque on the nullcline at the set point, `F(lambda0) / F0`.
    pub fn equilibrium_torque(&self) -> f64 {
        self.slip_force(self.lambda0) / self.torque_gain()
    }
}

/// Braking model in coordinates centred on `(lambda0, F(lambda0)/F0)`:
/// `x' = -F(lambda0 + x) + F(lambda0) + F0 y`, `y' = rate`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbsField {
    pub params: AbsParams,
    /// Torque rate in this mode, `+k` or `-k`.
    pub rate: f64,
}

impl PlanarField for AbsField {
    fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        let p = &self.params;
        let f = -(p.slip_force(p.lambda0 + x) - p.slip_force(p.lambda0)) + p.torque_gain() * y;
        (f, self.rate)
    }

    fn analytic_jet(&self, x: f64, y: f64) -> Option<Jet> {
        let (f0, g0) = self.eval(x, y);
        Some(Jet {
            f0,
            g0,
            fx: -self.params.slip_force_slope(self.params.lambda0 + x),
            fy: self.params.torque_gain(),
            gx: 0.0,
            gy: 0.0,
            fyy: 0.0,
            source: JetSource::Analytic,
        })
    }
}

/// Highest total degree accepted for user polynomials.
pub const MAX_POLY_DEGREE: u32 = 4;

/// `c x^i y^j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub i: u32,
    pub j: u32,
    pub coeff: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial {
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(terms: Vec<Monomial>) -> Result<Self> {
        if let Some(t) = terms.iter().find(|t| t.i + t.j > MAX_POLY_DEGREE) {
            return Err(Error::Config(format!(
                "monomial x^{} y^{} exceeds total degree {}",
                t.i, t.j, MAX_POLY_DEGREE
            )));
        }
        if terms.iter().any(|t| !t.coeff.is_finite()) {
            return Err(Error::Config("non-finite polynomial coefficient".into()));
        }
        Ok(Polynomial { terms })
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    /// Evaluates `d^dx/dx^dx d^dy/dy^dy` of the polynomial.
    pub fn derivative(&self, x: f64, y: f64, dx: u32, dy: u32) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.i >= dx && t.j >= dy)
            .map(|t| {
                let cx = falling(t.i, dx);
                let cy = falling(t.j, dy);
                t.coeff * cx * cy * x.powi((t.i - dx) as i32) * y.powi((t.j - dy) as i32)
            })
            .sum()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.derivative(x, y, 0, 0)
    }
}

fn falling(n: u32, k: u32) -> f64 {
    (0..k).map(|m| f64::from(n - m)).product()
}

/// Polynomial field given in physical coordinates and evaluated at
/// `offset + (x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyField {
    pub f: Polynomial,
    pub g: Polynomial,
    pub offset: (f64, f64),
}

impl PolyField {
    pub fn new(f: Polynomial, g: Polynomial) -> Self {
        PolyField {
            f,
            g,
            offset: (0.0, 0.0),
        }
    }
}

impl PlanarField for PolyField {
    fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        let (px, py) = (x + self.offset.0, y + self.offset.1);
        (self.f.eval(px, py), self.g.eval(px, py))
    }

    fn analytic_jet(&self, x: f64, y: f64) -> Option<Jet> {
        let (px, py) = (x + self.offset.0, y + self.offset.1);
        Some(Jet {
            f0: self.f.eval(px, py),
            g0: self.g.eval(px, py),
            fx: self.f.derivative(px, py, 1, 0),
            fy: self.f.derivative(px, py, 0, 1),
            gx: self.g.derivative(px, py, 1, 0),
            gy: self.g.derivative(px, py, 0, 1),
            fyy: self.f.derivative(px, py, 0, 2),
            source: JetSource::Analytic,
        })
    }
}

/// One of the three supported model kinds.
#[derive(Clone, Debug, PartialEq)]
pub enum VectorField {
    MassSpring(MassSpring),
    Abs(AbsField),
    Poly(PolyField),
}

impl PlanarField for VectorField {
    fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        match self {
            VectorField::MassSpring(m) => m.eval(x, y),
            VectorField::Abs(a) => a.eval(x, y),
            VectorField::Poly(p) => p.eval(x, y),
        }
    }

    fn analytic_jet(&self, x: f64, y: f64) -> Option<Jet> {
        match self {
            VectorField::MassSpring(m) => m.analytic_jet(x, y),
            VectorField::Abs(a) => a.analytic_jet(x, y),
            VectorField::Poly(p) => p.analytic_jet(x, y),
        }
    }
}

/// Axis-aligned working box in local coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        if !(x_min < 0.0 && 0.0 < x_max && y_min < 0.0 && 0.0 < y_max) {
            return Err(Error::Config(format!(
                "box [{x_min}, {x_max}] x [{y_min}, {y_max}] must contain the fold point in its interior"
            )));
        }
        Ok(Bounds {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    pub fn unbounded() -> Self {
        Bounds {
            x_min: f64::NEG_INFINITY,
            x_max: f64::INFINITY,
            y_min: f64::NEG_INFINITY,
            y_max: f64::INFINITY,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn check(&self, x: f64, y: f64) -> Result<()> {
        if self.contains(x, y) {
            Ok(())
        } else {
            Err(Error::OutOfBox { x, y })
        }
    }

    /// Distance from the fold point to the nearer horizontal edge.
    pub fn y_radius(&self) -> f64 {
        (-self.y_min).min(self.y_max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MassSpring,
    Abs,
    Poly,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::MassSpring => "mass_spring",
            ModelKind::Abs => "abs",
            ModelKind::Poly => "poly",
        }
    }
}

/// Damping and forcing of the two oscillator modes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassSpringParams {
    pub c_l: f64,
    pub c_r: f64,
    pub d_l: f64,
    pub d_r: f64,
}

impl Default for MassSpringParams {
    fn default() -> Self {
        MassSpringParams {
            c_l: 0.1,
            c_r: 0.1,
            d_l: -1.0,
            d_r: 1.0,
        }
    }
}

/// A pair of planar fields with the relay rule between them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub kind: ModelKind,
    pub params: BTreeMap<String, f64>,
    /// Physical position of the local origin.
    pub fold_point: (f64, f64),
    /// Working box in local coordinates.
    pub bounds: Bounds,
    left: VectorField,
    right: VectorField,
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        kind: ModelKind,
        params: BTreeMap<String, f64>,
        fold_point: (f64, f64),
        bounds: Bounds,
        left: VectorField,
        right: VectorField,
    ) -> Self {
        ModelSpec {
            name: name.into(),
            kind,
            params,
            fold_point,
            bounds,
            left,
            right,
        }
    }

    pub fn mass_spring(p: MassSpringParams) -> Self {
        let params = BTreeMap::from([
            ("c_L".to_string(), p.c_l),
            ("c_R".to_string(), p.c_r),
            ("d_L".to_string(), p.d_l),
            ("d_R".to_string(), p.d_r),
        ]);
        ModelSpec {
            name: "mass_spring".into(),
            kind: ModelKind::MassSpring,
            params,
            fold_point: (0.0, 0.0),
            bounds: Bounds {
                x_min: -5.0,
                x_max: 5.0,
                y_min: -5.0,
                y_max: 5.0,
            },
            left: VectorField::MassSpring(MassSpring {
                damping: p.c_l,
                forcing: p.d_l,
            }),
            right: VectorField::MassSpring(MassSpring {
                damping: p.c_r,
                forcing: p.d_r,
            }),
        }
    }

    /// Braking model. Mode R is the torque-release phase entered when the
    /// slip reaches `lambda0 + dlambda` (rate `-k`); mode L is the apply
    /// phase entered at `lambda0 - dlambda` (rate `+k`).
    pub fn abs(p: AbsParams) -> Self {
        let params = BTreeMap::from([
            ("nu".to_string(), p.nu),
            ("r".to_string(), p.r),
            ("J".to_string(), p.inertia),
            ("m_quarter".to_string(), p.m_quarter),
            ("F_z".to_string(), p.f_z),
            ("theta_r1".to_string(), p.theta_r1),
            ("theta_r2".to_string(), p.theta_r2),
            ("theta_r3".to_string(), p.theta_r3),
            ("k".to_string(), p.k),
            ("lambda0".to_string(), p.lambda0),
        ]);
        ModelSpec {
            name: "abs".into(),
            kind: ModelKind::Abs,
            params,
            fold_point: (p.lambda0, p.equilibrium_torque()),
            bounds: Bounds {
                x_min: -p.lambda0,
                x_max: 1.0 - p.lambda0,
                y_min: -100.0,
                y_max: 100.0,
            },
            left: VectorField::Abs(AbsField {
                params: p,
                rate: p.k,
            }),
            right: VectorField::Abs(AbsField {
                params: p,
                rate: -p.k,
            }),
        }
    }

    /// Polynomial model; the fields are written in physical coordinates and
    /// `bounds` is given in local ones.
    pub fn poly(left: PolyField, right: PolyField, fold_point: (f64, f64), bounds: Bounds) -> Self {
        let shift = |mut p: PolyField| {
            p.offset = fold_point;
            p
        };
        ModelSpec {
            name: "poly".into(),
            kind: ModelKind::Poly,
            params: BTreeMap::new(),
            fold_point,
            bounds,
            left: VectorField::Poly(shift(left)),
            right: VectorField::Poly(shift(right)),
        }
    }

    pub fn with_bounds(mut self, bounds: Bounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn field(&self, mode: Mode) -> &VectorField {
        match mode {
            Mode::L => &self.left,
            Mode::R => &self.right,
        }
    }

    pub fn to_physical(&self, state: (f64, f64)) -> (f64, f64) {
        (state.0 + self.fold_point.0, state.1 + self.fold_point.1)
    }

    pub fn eval_field(&self, mode: Mode, state: (f64, f64)) -> Result<(f64, f64)> {
        self.bounds.check(state.0, state.1)?;
        Ok(self.field(mode).eval(state.0, state.1))
    }

    /// Jet at `point`; closed form when the field provides one.
    pub fn jet_at(&self, mode: Mode, point: (f64, f64)) -> Result<Jet> {
        self.bounds.check(point.0, point.1)?;
        let field = self.field(mode);
        Ok(field
            .analytic_jet(point.0, point.1)
            .unwrap_or_else(|| finite_difference_jet(field, point)))
    }

    pub fn fold_jet(&self, mode: Mode) -> Result<Jet> {
        self.jet_at(mode, (0.0, 0.0))
    }

    /// Default outer radius of the cross-section interval J.
    pub fn default_delta(&self) -> f64 {
        0.1 * self.bounds.y_radius()
    }

    /// The f-nullcline `u(x)` through the fold point: `f(x, u(x)) = 0`.
    pub fn nullcline_u(&self, mode: Mode, x: f64) -> Result<f64> {
        const MAX_ITER: usize = 60;
        let field = self.field(mode);
        let jet = self.fold_jet(mode)?;
        if jet.fy.abs() < TOL_DEGENERATE {
            return Err(Error::DegenerateJet(format!("|f'_y(0)| = {:e}", jet.fy.abs())));
        }

        let slope = |y: f64| match field.analytic_jet(x, y) {
            Some(j) => j.fy,
            None => finite_difference_jet(field, (x, y)).fy,
        };

        let mut u = 0.0;
        let mut res = field.eval(x, u).0;
        for _ in 0..MAX_ITER {
            if res.abs() <= TOL_ROOT {
                return Ok(u);
            }
            let d = slope(u);
            if d.abs() < TOL_DEGENERATE || !d.is_finite() {
                break;
            }
            let step = res / d;
            // backtrack until the residual decreases
            let mut lambda = 1.0;
            loop {
                let cand = u - lambda * step;
                let r = field.eval(x, cand).0;
                if r.abs() < res.abs() || lambda < 1e-6 {
                    u = cand;
                    res = r;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if res.abs() <= TOL_ROOT {
            Ok(u)
        } else {
            Err(Error::NoConvergence(format!(
                "nullcline at x = {x}: residual {res:e} after {MAX_ITER} iterations"
            )))
        }
    }
}
