//! Dormand–Prince 5(4) integration with dense output, and location of the
//! first transversal crossing of a vertical line `x = c`.

use crate::error::{Error, Result};
use crate::model::{Bounds, PlanarField, Reversed};

/// Accuracy and budget knobs shared by every integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Accepted `|X(t*) - c|` at a located crossing.
    pub tol_event: f64,
    /// Crossings with `|f| <= tol_transversal` are rejected as tangential.
    pub tol_transversal: f64,
    /// Longest flight allowed while searching for a crossing.
    pub t_budget: f64,
    /// Earliest admissible crossing when starting on the line itself.
    pub t_min: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            tol_event: 1e-11,
            tol_transversal: 1e-8,
            t_budget: 1e3,
            t_min: 1e-12,
        }
    }
}

impl Tolerances {
    /// Same event settings with tighter step control.
    pub fn high_accuracy() -> Self {
        Tolerances {
            rel_tol: 1e-12,
            abs_tol: 1e-14,
            ..Tolerances::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("tol_event", self.tol_event),
            ("tol_transversal", self.tol_transversal),
            ("t_budget", self.t_budget),
            ("t_min", self.t_min),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.rel_tol > 1e-3 || self.abs_tol > 1e-3 {
            return Err(Error::Config("rel_tol and abs_tol must not exceed 1e-3".into()));
        }
        Ok(())
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

type State = [f64; 2];

fn eval<F: PlanarField + ?Sized>(field: &F, s: State) -> State {
    let (f, g) = field.eval(s[0], s[1]);
    [f, g]
}

fn comb(y: State, h: f64, terms: &[(f64, State)]) -> State {
    let mut out = y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

struct RawStep {
    y_new: State,
    k: [State; 7],
    err: State,
}

fn dopri_step<F: PlanarField + ?Sized>(field: &F, y: State, k1: State, h: f64) -> RawStep {
    let k2 = eval(field, comb(y, h, &[(A21, k1)]));
    let k3 = eval(field, comb(y, h, &[(A31, k1), (A32, k2)]));
    let k4 = eval(field, comb(y, h, &[(A41, k1), (A42, k2), (A43, k3)]));
    let k5 = eval(field, comb(y, h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]));
    let k6 = eval(
        field,
        comb(y, h, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]),
    );
    let y_new = comb(y, h, &[(A71, k1), (A73, k3), (A74, k4), (A75, k5), (A76, k6)]);
    let k7 = eval(field, y_new);
    let err = comb(
        [0.0, 0.0],
        h,
        &[(E1, k1), (E3, k3), (E4, k4), (E5, k5), (E6, k6), (E7, k7)],
    );
    RawStep {
        y_new,
        k: [k1, k2, k3, k4, k5, k6, k7],
        err,
    }
}

/// One accepted step with its continuous extension.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseStep {
    pub t_start: f64,
    pub t_end: f64,
    pub y_start: (f64, f64),
    pub y_end: (f64, f64),
    /// Absolute local error estimate, max over components.
    pub error_estimate: f64,
    rcont: [State; 5],
}

impl DenseStep {
    fn from_raw(t_start: f64, h: f64, y: State, raw: &RawStep) -> Self {
        let k = &raw.k;
        let mut rcont = [[0.0; 2]; 5];
        for i in 0..2 {
            let dy = raw.y_new[i] - y[i];
            let bspl = h * k[0][i] - dy;
            rcont[0][i] = y[i];
            rcont[1][i] = dy;
            rcont[2][i] = bspl;
            rcont[3][i] = dy - h * k[6][i] - bspl;
            rcont[4][i] = h
                * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
        }
        DenseStep {
            t_start,
            t_end: t_start + h,
            y_start: (y[0], y[1]),
            y_end: (raw.y_new[0], raw.y_new[1]),
            error_estimate: raw.err[0].abs().max(raw.err[1].abs()),
            rcont,
        }
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Interpolated state at `t` in `[t_start, t_end]`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let h = self.t_end - self.t_start;
        if h == 0.0 {
            return self.y_start;
        }
        let th = (t - self.t_start) / h;
        let th1 = 1.0 - th;
        let r = &self.rcont;
        let c = |i: usize| r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])));
        (c(0), c(1))
    }

    pub fn shifted(mut self, dt: f64) -> Self {
        self.t_start += dt;
        self.t_end += dt;
        self
    }
}

fn error_norm(y: State, y_new: State, err: State, tol: &Tolerances) -> f64 {
    let mut acc = 0.0;
    for i in 0..2 {
        let sc = tol.abs_tol + tol.rel_tol * y[i].abs().max(y_new[i].abs());
        acc += (err[i] / sc).powi(2);
    }
    (acc / 2.0).sqrt()
}

/// Adaptive stepper over one smooth field.
struct Stepper<'a, F: ?Sized> {
    field: &'a F,
    tol: Tolerances,
    t: f64,
    y: State,
    k1: State,
    h: f64,
}

impl<'a, F: PlanarField + ?Sized> Stepper<'a, F> {
    fn new(field: &'a F, t0: f64, y0: State, tol: Tolerances) -> Self {
        let k1 = eval(field, y0);
        let h = initial_step(field, y0, k1, &tol);
        Stepper {
            field,
            tol,
            t: t0,
            y: y0,
            k1,
            h,
        }
    }

    /// Takes one accepted step, never passing `t_limit`.
    fn step(&mut self, t_limit: f64) -> Result<DenseStep> {
        let remaining = t_limit - self.t;
        let mut h = self.h.min(remaining);
        let mut rejected = false;
        loop {
            if !(h > 16.0 * f64::EPSILON * self.t.abs().max(1.0)) || !h.is_finite() {
                return Err(Error::StepUnderflow { t: self.t });
            }
            let raw = dopri_step(self.field, self.y, self.k1, h);
            let err = error_norm(self.y, raw.y_new, raw.err, &self.tol);
            if !err.is_finite() {
                h *= 0.2;
                rejected = true;
                continue;
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                let step = DenseStep::from_raw(self.t, h, self.y, &raw);
                let reached_limit = h >= remaining;
                self.t = if reached_limit { t_limit } else { self.t + h };
                self.y = raw.y_new;
                self.k1 = raw.k[6];
                let grow = if rejected { fac.min(1.0) } else { fac };
                // keep the proposed step when the last one was clipped by the limit
                self.h = if reached_limit { self.h.max(h * grow) } else { h * grow };
                return Ok(step);
            }
            h *= fac;
            rejected = true;
        }
    }
}

fn initial_step<F: PlanarField + ?Sized>(field: &F, y0: State, f0: State, tol: &Tolerances) -> f64 {
    let sc = |i: usize| tol.abs_tol + tol.rel_tol * y0[i].abs();
    let norm = |v: State| (((v[0] / sc(0)).powi(2) + (v[1] / sc(1)).powi(2)) / 2.0).sqrt();
    let d0 = norm(y0);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = comb(y0, h0, &[(1.0, f0)]);
    let f1 = eval(field, y1);
    let d2 = norm([f1[0] - f0[0], f1[1] - f0[1]]) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

/// Integrates one smooth field on `[0, t_max]`.
pub fn integrate_mode<F: PlanarField + ?Sized>(
    field: &F,
    init: (f64, f64),
    t_max: f64,
    tol: &Tolerances,
    bounds: &Bounds,
) -> Result<Vec<DenseStep>> {
    tol.validate()?;
    if !(t_max >= 0.0) {
        return Err(Error::DomainViolation(format!("t_max = {t_max} must be non-negative")));
    }
    bounds.check(init.0, init.1)?;
    let mut steps = Vec::new();
    if t_max == 0.0 {
        return Ok(steps);
    }
    let mut stepper = Stepper::new(field, 0.0, [init.0, init.1], *tol);
    while stepper.t < t_max {
        let step = stepper.step(t_max)?;
        bounds.check(step.y_end.0, step.y_end.1)?;
        steps.push(step);
    }
    Ok(steps)
}

/// State reached after time `t` (negative `t` integrates backward).
pub fn flow_to<F: PlanarField + ?Sized>(
    field: &F,
    init: (f64, f64),
    t: f64,
    tol: &Tolerances,
    bounds: &Bounds,
) -> Result<(f64, f64)> {
    let steps = if t >= 0.0 {
        integrate_mode(field, init, t, tol, bounds)?
    } else {
        integrate_mode(&Reversed(field), init, -t, tol, bounds)?
    };
    Ok(steps.last().map(|s| s.y_end).unwrap_or(init))
}

/// First arrival at a vertical line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossingEvent {
    pub t_star: f64,
    /// State at the crossing; `state.0` is placed exactly on the line.
    pub state: (f64, f64),
    pub line_x: f64,
    /// Sign of `f` at the crossing.
    pub direction: i8,
    /// `|X(t*) - line_x|` before the state was placed on the line.
    pub residual: f64,
}

/// Outcome of running a field toward a line with an optional time cap.
#[derive(Clone, Debug)]
pub(crate) struct LineRun {
    pub event: Option<CrossingEvent>,
    pub steps: Vec<DenseStep>,
}

const SAMPLES: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

/// Integrates from `init` at time `t0` until `x = line_x` is crossed, or
/// until `t_stop` when one is given.
pub(crate) fn run_to_line<F: PlanarField + ?Sized>(
    field: &F,
    init: (f64, f64),
    t0: f64,
    line_x: f64,
    t_stop: Option<f64>,
    tol: &Tolerances,
    bounds: &Bounds,
) -> Result<LineRun> {
    tol.validate()?;
    bounds.check(init.0, init.1)?;

    let offset0 = init.0 - line_x;
    let mut side = if offset0.abs() <= tol.tol_event {
        // starting on the line: the side is the one we move into
        let (f, _) = field.eval(init.0, init.1);
        if f.abs() <= tol.tol_transversal {
            return Err(Error::TangentialCrossing {
                line_x,
                t: t0,
                speed: f.abs(),
            });
        }
        f.signum()
    } else {
        offset0.signum()
    };

    let budget_end = t0 + tol.t_budget;
    let limit = t_stop.map_or(budget_end, |s| s.min(budget_end));
    let mut stepper = Stepper::new(field, t0, [init.0, init.1], *tol);
    let mut steps: Vec<DenseStep> = Vec::new();

    while stepper.t < limit {
        let step = stepper.step(limit)?;
        bounds.check(step.y_end.0, step.y_end.1)?;

        let mut t_prev = step.t_start;
        let mut bracket = None;
        for th in SAMPLES {
            let t = step.t_start + th * step.duration();
            let r = step.eval(t).0 - line_x;
            if r * side <= 0.0 && t - t0 >= tol.t_min {
                bracket = Some((t_prev, t));
                break;
            }
            if r != 0.0 {
                side = r.signum();
            }
            t_prev = t;
        }

        if let Some((a, b)) = bracket {
            let event = locate(field, &step, a, b, line_x, side, tol)?;
            let h = event.t_star - step.t_start;
            let y = [step.y_start.0, step.y_start.1];
            let raw = dopri_step(field, y, eval(field, y), h);
            steps.push(DenseStep::from_raw(step.t_start, h, y, &raw));
            return Ok(LineRun {
                event: Some(event),
                steps,
            });
        }
        steps.push(step);
    }

    if t_stop.is_some_and(|s| s <= budget_end) {
        Ok(LineRun { event: None, steps })
    } else {
        Err(Error::NoCrossing {
            line_x,
            budget: tol.t_budget,
        })
    }
}

/// Bisection on the interpolant, then Newton on the true step map.
fn locate<F: PlanarField + ?Sized>(
    field: &F,
    step: &DenseStep,
    mut a: f64,
    mut b: f64,
    line_x: f64,
    side: f64,
    tol: &Tolerances,
) -> Result<CrossingEvent> {
    let width = 1e-13_f64.max(4.0 * f64::EPSILON * b.abs());
    for _ in 0..200 {
        if b - a <= width {
            break;
        }
        let mid = 0.5 * (a + b);
        if (step.eval(mid).0 - line_x) * side > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }

    let y0 = [step.y_start.0, step.y_start.1];
    let k1 = eval(field, y0);
    let advance = |t: f64| dopri_step(field, y0, k1, t - step.t_start).y_new;

    let mut t = 0.5 * (a + b);
    let mut state = advance(t);
    for _ in 0..2 {
        let (f, _) = field.eval(state[0], state[1]);
        if f == 0.0 || !f.is_finite() {
            break;
        }
        let cand = t - (state[0] - line_x) / f;
        // stay inside the step
        if !(cand > step.t_start && cand <= step.t_end + (step.t_end - step.t_start)) {
            break;
        }
        let s = advance(cand);
        if (s[0] - line_x).abs() <= (state[0] - line_x).abs() {
            t = cand;
            state = s;
        } else {
            break;
        }
    }

    let (f, _) = field.eval(state[0], state[1]);
    if f.abs() <= tol.tol_transversal {
        return Err(Error::TangentialCrossing {
            line_x,
            t,
            speed: f.abs(),
        });
    }
    Ok(CrossingEvent {
        t_star: t,
        state: (line_x, state[1]),
        line_x,
        direction: if f > 0.0 { 1 } else { -1 },
        residual: (state[0] - line_x).abs(),
    })
}

/// Integrates forward from `init` to the first crossing of `x = line_x`.
/// Starting on the line is allowed; the crossing must then come after
/// `t_min`.
pub fn advance_to_line<F: PlanarField + ?Sized>(
    field: &F,
    init: (f64, f64),
    line_x: f64,
    tol: &Tolerances,
    bounds: &Bounds,
) -> Result<(CrossingEvent, Vec<DenseStep>)> {
    let run = run_to_line(field, init, 0.0, line_x, None, tol, bounds)?;
    match run.event {
        Some(e) => Ok((e, run.steps)),
        None => Err(Error::NoCrossing {
            line_x,
            budget: tol.t_budget,
        }),
    }
}
