//! Fixed points of the return map: location, multiplier, scans over x.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::Tolerances;
use crate::model::ModelSpec;
use crate::normal_form::{analyze, Analysis};
use crate::poincare::{check_section, poincare_map_unchecked, PoincareResult, Region};

pub const TOL_FIX: f64 = 1e-10;
/// Factor applied to the inner end of J before bracketing.
pub const INNER_INFLATE: f64 = 1.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Attracting,
    Repelling,
}

impl Stability {
    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Attracting => "attracting",
            Stability::Repelling => "repelling",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CycleSolution {
    pub x_param: f64,
    pub y_fix: f64,
    pub period: f64,
    pub multiplier: f64,
    pub stability: Stability,
    /// `x_param / y_fix^3`.
    pub scaling_ratio: f64,
    /// `|P(y_fix) - y_fix|`.
    pub fix_residual: f64,
}

/// `P` on J with the hypotheses checked once.
struct SectionMap<'a> {
    model: &'a ModelSpec,
    analysis: Analysis,
    region: Region,
    x: f64,
    tol: Tolerances,
}

impl<'a> SectionMap<'a> {
    fn new(model: &'a ModelSpec, x: f64, region: &Region, tol: &Tolerances) -> Result<Self> {
        region.validate()?;
        tol.validate()?;
        let analysis = analyze(model)?;
        Ok(SectionMap {
            model,
            analysis,
            region: *region,
            x,
            tol: *tol,
        })
    }

    fn require_theorem(&self) -> Result<()> {
        let v = &self.analysis.verdict;
        if !v.all_hold() {
            return Err(Error::InconclusiveVerdict(format!(
                "failed: {}",
                v.failed_conditions().join(", ")
            )));
        }
        Ok(())
    }

    fn sign(&self) -> f64 {
        f64::from(self.analysis.coeffs.section_y_sign())
    }

    fn in_j(&self, y: f64) -> bool {
        self.region.contains(self.analysis.coeffs.section_y_sign(), self.x, y)
    }

    fn apply(&self, y: f64) -> Result<PoincareResult> {
        check_section(&self.analysis, self.x, y, &self.region)?;
        poincare_map_unchecked(self.model, &self.analysis.coeffs, self.x, y, false, &self.tol)
    }

    fn gap(&self, y: f64) -> Result<f64> {
        Ok(self.apply(y)?.y_out - y)
    }

    /// Endpoints of J used for bracketing, inner first.
    fn bracket(&self) -> (f64, f64) {
        let s = self.sign();
        (s * INNER_INFLATE * self.region.inner(self.x), s * self.region.delta)
    }
}

fn multiplier(map: &SectionMap, y: f64) -> Result<f64> {
    let h = (1e-4 * y.abs()).max(1e-7);
    let (mut a, mut b) = (y - h, y + h);
    // keep the stencil inside J; fall back to one-sided near an end
    if !map.in_j(a) {
        a = y;
    }
    if !map.in_j(b) {
        b = y;
    }
    let pa = if a == y { y + map.gap(y)? } else { map.apply(a)?.y_out };
    let pb = if b == y { y + map.gap(y)? } else { map.apply(b)?.y_out };
    Ok((pb - pa) / (b - a))
}

pub fn find_cycle(model: &ModelSpec, x_param: f64, region: &Region, tol: &Tolerances) -> Result<CycleSolution> {
    let map = SectionMap::new(model, x_param, region, tol)?;
    map.require_theorem()?;
    let c = &map.analysis.coeffs;
    if x_param == 0.0 || (x_param > 0.0) != (c.admissible_x_sign() > 0) {
        return Err(Error::DomainViolation(format!(
            "x = {x_param:e}: a cycle needs x of sign {}",
            c.admissible_x_sign()
        )));
    }
    if x_param.abs() >= region.m * region.delta.powi(3) {
        return Err(Error::DomainViolation(format!(
            "|x| = {:e} is not below m delta^3 = {:e}",
            x_param.abs(),
            region.m * region.delta.powi(3)
        )));
    }

    let (mut a, mut b) = map.bracket();
    let (mut ga, gb) = (map.gap(a)?, map.gap(b)?);
    if ga == 0.0 {
        return solution(&map, a);
    }
    if gb == 0.0 {
        return solution(&map, b);
    }
    if ga.signum() == gb.signum() {
        return Err(Error::NoSignChange {
            y_inner: a,
            g_inner: ga,
            y_outer: b,
            g_outer: gb,
        });
    }
    let mut gb = gb;
    while (b - a).abs() > TOL_FIX {
        let mid = 0.5 * (a + b);
        let gm = map.gap(mid)?;
        if gm == 0.0 {
            return solution(&map, mid);
        }
        if gm.signum() == ga.signum() {
            a = mid;
            ga = gm;
        } else {
            b = mid;
            gb = gm;
        }
    }

    // secant polish inside the final bracket
    let mut best = if ga.abs() < gb.abs() { (a, ga) } else { (b, gb) };
    let s = b - gb * (b - a) / (gb - ga);
    if s.is_finite() && (s - a) * (s - b) <= 0.0 {
        let gs = map.gap(s)?;
        if gs.abs() < best.1.abs() {
            best = (s, gs);
        }
    }
    solution(&map, best.0)
}

fn solution(map: &SectionMap, y: f64) -> Result<CycleSolution> {
    let p = map.apply(y)?;
    let fix_residual = (p.y_out - y).abs();
    if fix_residual > TOL_FIX {
        return Err(Error::NoConvergence(format!(
            "|P(y) - y| = {fix_residual:e} at y = {y:e}"
        )));
    }
    let mu = multiplier(map, y)?;
    Ok(CycleSolution {
        x_param: map.x,
        y_fix: y,
        period: p.period,
        multiplier: mu,
        stability: if mu.abs() < 1.0 {
            Stability::Attracting
        } else {
            Stability::Repelling
        },
        scaling_ratio: map.x / (y * y * y),
        fix_residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Orbit {
    /// `y0, P(y0), P^2(y0), ...`; the last entry is outside J when
    /// `escaped` is set.
    pub points: Vec<f64>,
    pub escaped: bool,
}

/// Iterates `P` from `y0` at most `n` times, stopping once an iterate
/// leaves J.
pub fn iterate_map(
    model: &ModelSpec,
    x_param: f64,
    y0: f64,
    n: usize,
    region: &Region,
    tol: &Tolerances,
) -> Result<Orbit> {
    let map = SectionMap::new(model, x_param, region, tol)?;
    check_section(&map.analysis, x_param, y0, region)?;
    let mut points = vec![y0];
    let mut y = y0;
    for _ in 0..n {
        y = map.apply(y)?.y_out;
        points.push(y);
        if !map.in_j(y) {
            return Ok(Orbit {
                points,
                escaped: true,
            });
        }
    }
    Ok(Orbit {
        points,
        escaped: false,
    })
}

/// Sign changes of `P(y) - y` on an `n`-point grid spanning J.
pub fn count_sign_changes(
    model: &ModelSpec,
    x_param: f64,
    n: usize,
    region: &Region,
    tol: &Tolerances,
) -> Result<usize> {
    if n < 2 {
        return Err(Error::Config(format!("grid needs at least 2 points, got {n}")));
    }
    let map = SectionMap::new(model, x_param, region, tol)?;
    let (a, b) = map.bracket();
    let gaps = (0..n)
        .into_par_iter()
        .map(|i| map.gap(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok(gaps.windows(2).filter(|w| w[0].signum() != w[1].signum()).count())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub x_param: f64,
    pub result: std::result::Result<CycleSolution, Error>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    /// Ordered by decreasing `|x_param|`.
    pub rows: Vec<ScanRow>,
    /// Scaling ratio of the successful row with the smallest `|x|`.
    pub limit_ratio_estimate: Option<f64>,
    /// `-alpha / beta`.
    pub theory_ratio: f64,
}

impl ScanResult {
    pub fn solutions(&self) -> impl Iterator<Item = &CycleSolution> {
        self.rows.iter().filter_map(|r| r.result.as_ref().ok())
    }

    /// Relative error of the final ratio against `-alpha / beta`, and
    /// whether it shrinks over the last three rows.
    pub fn scaling_law(&self) -> Option<(f64, bool)> {
        let errs: Vec<f64> = self
            .solutions()
            .map(|s| (s.scaling_ratio - self.theory_ratio).abs())
            .collect();
        if errs.len() < 3 || self.rows.iter().any(|r| r.result.is_err()) {
            return None;
        }
        let last = errs[errs.len() - 3..].to_vec();
        let monotone = last[1] < last[0] && last[2] < last[1];
        Some((last[2] / self.theory_ratio.abs(), monotone))
    }

    /// The scaling-law acceptance check: final ratio within `rel` and
    /// monotone improvement over the last three rows.
    pub fn passes_scaling_check(&self, rel: f64) -> bool {
        matches!(self.scaling_law(), Some((e, true)) if e < rel)
    }
}

pub fn bifurcation_scan(
    model: &ModelSpec,
    x_list: &[f64],
    region: &Region,
    tol: &Tolerances,
) -> Result<ScanResult> {
    let a = analyze(model)?;
    let mut xs = x_list.to_vec();
    xs.sort_by(|p, q| q.abs().total_cmp(&p.abs()));
    let rows: Vec<ScanRow> = xs
        .par_iter()
        .map(|&x| ScanRow {
            x_param: x,
            result: find_cycle(model, x, region, tol),
        })
        .collect();
    let limit_ratio_estimate = rows
        .iter()
        .rev()
        .find_map(|r| r.result.as_ref().ok().map(|s| s.scaling_ratio));
    Ok(ScanResult {
        rows,
        limit_ratio_estimate,
        theory_ratio: a.coeffs.cuberoot_ratio(),
    })
}

/// `-10^-k` style grid on the admissible side.
pub fn decade_grid(sign: f64, k_from: i32, k_to: i32) -> Vec<f64> {
    (k_from..=k_to).map(|k| sign * 10f64.powi(-k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AbsParams, MassSpringParams};
    use crate::normal_form::PredictedStability;

    fn ms() -> ModelSpec {
        ModelSpec::mass_spring(MassSpringParams::default())
    }

    fn region(m: &ModelSpec) -> Region {
        Region::default_for(m, &analyze(m).unwrap().coeffs)
    }

    /// Independent fixed point: bisection on a plain two-switch hybrid run
    /// at tight tolerances.
    fn oracle_fixed_point(m: &ModelSpec, x: f64, lo: f64, hi: f64) -> f64 {
        use crate::hybrid::{simulate, StopRule};
        use crate::model::Mode;
        let tol = Tolerances::high_accuracy();
        let g = |y: f64| {
            let tr = simulate(m, x, (x, y), Mode::R, StopRule::Switches(2), &tol).unwrap();
            tr.events[1].event.state.1 - y
        };
        let (mut a, mut b) = (lo, hi);
        let ga = g(a);
        assert_ne!(ga.signum(), g(b).signum());
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            if g(mid).signum() == ga.signum() {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn mass_spring_cycle() {
        let m = ms();
        let r = region(&m);
        let x = -1e-6;
        let s = find_cycle(&m, x, &r, &Tolerances::default()).unwrap();
        assert!(s.fix_residual <= TOL_FIX);
        let oracle = oracle_fixed_point(&m, x, -0.2, -0.01);
        assert!((s.y_fix - oracle).abs() < 1e-8, "{} vs {oracle}", s.y_fix);
        assert!(s.y_fix < 0.0);
        assert!(s.multiplier > 0.0 && s.multiplier < 1.0);
        assert_eq!(s.stability, Stability::Attracting);
        assert!(s.period > 0.0);
        // x / y^3 sits near the flow-expansion limit at this x
        let c = analyze(&m).unwrap().coeffs;
        assert!((s.scaling_ratio - c.flow_ratio()).abs() < 0.1 * c.flow_ratio());
    }

    #[test]
    fn unique_sign_change_on_j() {
        let m = ms();
        let r = region(&m);
        let n = count_sign_changes(&m, -1e-6, 64, &r, &Tolerances::default()).unwrap();
        assert_eq!(n, 1);
    }

    #[test]
    fn wrong_side_and_too_large() {
        let m = ms();
        let r = region(&m);
        let tol = Tolerances::default();
        assert!(matches!(find_cycle(&m, 1e-6, &r, &tol), Err(Error::DomainViolation(_))));
        assert!(matches!(find_cycle(&m, 0.0, &r, &tol), Err(Error::DomainViolation(_))));
        assert!(matches!(find_cycle(&m, -0.1, &r, &tol), Err(Error::DomainViolation(_))));
    }

    #[test]
    fn delta_too_small_gives_no_sign_change() {
        let m = ms();
        let r = Region {
            delta: 0.03,
            ..region(&m)
        };
        // the fixed point near -0.031 is outside J
        let e = find_cycle(&m, -1e-6, &r, &Tolerances::default());
        assert!(matches!(e, Err(Error::NoSignChange { .. })), "{e:?}");
    }

    #[test]
    fn inconclusive_model_refused() {
        let m = ModelSpec::mass_spring(MassSpringParams {
            c_l: 0.2,
            c_r: -0.1,
            d_l: -2.0,
            d_r: 1.0,
        });
        let r = Region { m: 1.0, delta: 0.5 };
        let e = find_cycle(&m, -1e-6, &r, &Tolerances::default());
        assert!(matches!(e, Err(Error::InconclusiveVerdict(_))));
    }

    #[test]
    fn orbit_contracts_monotonically() {
        let m = ms();
        let r = region(&m);
        let tol = Tolerances::default();
        let x = -1e-5;
        let s = find_cycle(&m, x, &r, &tol).unwrap();
        let orbit = iterate_map(&m, x, 1.3 * s.y_fix, 40, &r, &tol).unwrap();
        assert!(!orbit.escaped);
        assert_eq!(orbit.points.len(), 41);
        let d: Vec<f64> = orbit.points.iter().map(|y| (y - s.y_fix).abs()).collect();
        assert!(d[1..].windows(2).all(|w| w[1] < w[0]), "{d:?}");

        let fixed = iterate_map(&m, x, s.y_fix, 5, &r, &tol).unwrap();
        assert!(fixed.points.iter().all(|y| (y - s.y_fix).abs() <= 1e-9));
    }

    #[test]
    fn orbit_stops_when_leaving_j() {
        let m = ms();
        let tol = Tolerances::default();
        let x = -1e-5;
        let full = region(&m);
        let s = find_cycle(&m, x, &full, &tol).unwrap();
        // J ends just past the start, the orbit moves outward towards y_fix
        let y0 = 0.6 * s.y_fix;
        let r = Region {
            delta: 0.62 * s.y_fix.abs(),
            ..full
        };
        let orbit = iterate_map(&m, x, y0, 100, &r, &tol).unwrap();
        assert!(orbit.escaped);
        assert!(orbit.points.len() < 101);
    }

    #[test]
    fn mirrored_variant_is_stable_too() {
        // d^L = 1, d^R = -1: every condition holds and the cycle attracts
        let m = ModelSpec::mass_spring(MassSpringParams {
            c_l: 0.1,
            c_r: 0.1,
            d_l: 1.0,
            d_r: -1.0,
        });
        let a = analyze(&m).unwrap();
        assert!(a.verdict.all_hold());
        assert_eq!(a.verdict.predicted_stability, PredictedStability::Stable);
        let r = Region::default_for(&m, &a.coeffs);
        let s = find_cycle(&m, 1e-5, &r, &Tolerances::default()).unwrap();
        assert!(s.y_fix > 0.0);
        assert_eq!(s.stability, Stability::Attracting);
    }

    #[test]
    fn abs_cycle() {
        let m = ModelSpec::abs(AbsParams::default());
        let r = region(&m);
        let tol = Tolerances::default();
        let s = find_cycle(&m, 1e-4, &r, &tol).unwrap();
        assert!(s.y_fix > 0.0);
        assert!(s.fix_residual <= TOL_FIX);
        assert!(s.multiplier > 0.0 && s.multiplier < 1.0);
    }

    #[test]
    fn scan_orders_rows_and_records_errors() {
        let m = ms();
        let r = region(&m);
        let xs = [-1e-6, -1e-4, 1e-5, -1e-5];
        let scan = bifurcation_scan(&m, &xs, &r, &Tolerances::default()).unwrap();
        let got: Vec<f64> = scan.rows.iter().map(|r| r.x_param).collect();
        assert_eq!(got, vec![-1e-4, 1e-5, -1e-5, -1e-6]);
        assert!(matches!(scan.rows[1].result, Err(Error::DomainViolation(_))));
        assert_eq!(scan.solutions().count(), 3);
        assert_eq!(scan.limit_ratio_estimate, scan.rows[3].result.as_ref().ok().map(|s| s.scaling_ratio));
        assert!((scan.theory_ratio - 0.1).abs() < 1e-15);
        // a row error disqualifies the scaling check
        assert!(scan.scaling_law().is_none());
    }

    #[test]
    fn scan_period_shrinks() {
        let m = ms();
        let r = region(&m);
        let scan = bifurcation_scan(&m, &decade_grid(-1.0, 4, 7), &r, &Tolerances::default()).unwrap();
        let p: Vec<f64> = scan.solutions().map(|s| s.period).collect();
        assert_eq!(p.len(), 4);
        assert!(p.windows(2).all(|w| w[1] < w[0]), "{p:?}");
        // ratio tends to the flow-expansion limit
        let c = analyze(&m).unwrap().coeffs;
        let errs: Vec<f64> = scan.solutions().map(|s| (s.scaling_ratio - c.flow_ratio()).abs()).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }
}
