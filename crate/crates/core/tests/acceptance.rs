//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Expected values are written out here from the closed forms, not taken
//! from the library.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;

use relayfold::cycle::{bifurcation_scan, decade_grid, find_cycle, iterate_map, CycleSolution};
use relayfold::integrator::Tolerances;
use relayfold::model::{
    finite_difference_jet, AbsParams, MassSpringParams, ModelSpec, Mode, Monomial, PlanarField, PolyField,
    Polynomial,
};
use relayfold::normal_form::{analyze, fold_coefficients, PredictedStability};
use relayfold::oracle::verify_solution_jets;
use relayfold::poincare::{residual_sweep, Region};

type Outcome = (bool, String);

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn ms(p: MassSpringParams) -> ModelSpec {
    ModelSpec::mass_spring(p)
}

fn region(model: &ModelSpec) -> Region {
    let a = analyze(model).unwrap();
    Region::default_for(model, &a.coeffs)
}

fn scan_grid(model: &ModelSpec) -> Vec<f64> {
    let sign = f64::from(analyze(model).unwrap().coeffs.admissible_x_sign());
    decade_grid(sign, 4, 8)
}

fn c1_mass_spring_coefficients() -> Outcome {
    let p = MassSpringParams::default();
    let model = ms(p);
    let c = analyze(&model).unwrap().coeffs;
    // x' = y, y' = -x - c y + d: f_y = 1, g = d, g_y = -c, f_x = f_yy = 0
    let al = -2.0 * p.c_l / p.d_l;
    let ar = -2.0 * p.c_r / p.d_r;
    let bl = -2.0 * p.d_l;
    let br = -2.0 * p.d_r;
    let expect = [(0.2, al), (-0.2, ar), (2.0, bl), (-2.0, br), (0.4, al - ar), (-4.0, br - bl)];
    let got = [c.alpha_l, c.alpha_r, c.beta_l, c.beta_r, c.alpha, c.beta];
    let closed = expect.iter().zip(got).all(|(&(lit, formula), v)| {
        (lit - formula).abs() < 1e-15 && (v - formula).abs() <= 1e-12 * formula.abs()
    });

    let fd_l = finite_difference_jet(model.field(Mode::L), (0.0, 0.0));
    let fd_r = finite_difference_jet(model.field(Mode::R), (0.0, 0.0));
    let fd = fold_coefficients(&fd_l, &fd_r).unwrap();
    let fd_err = [
        rel(fd.alpha_l, c.alpha_l),
        rel(fd.alpha_r, c.alpha_r),
        rel(fd.beta_l, c.beta_l),
        rel(fd.beta_r, c.beta_r),
        rel(fd.alpha, c.alpha),
        rel(fd.beta, c.beta),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    (
        closed && fd_err <= 1e-6,
        format!(
            "alpha_L={} alpha_R={} beta_L={} beta_R={} alpha={} beta={}; finite-difference rel err {fd_err:.2e}",
            c.alpha_l, c.alpha_r, c.beta_l, c.beta_r, c.alpha, c.beta
        ),
    )
}

fn c2_abs_coefficients() -> Outcome {
    let mut detail = String::new();
    let mut ok = true;
    for lambda0 in [0.02, 0.04, 0.06, 0.08, 0.1] {
        let p = AbsParams {
            lambda0,
            ..AbsParams::default()
        };
        // F(l) = (((1-l)/m + r^2/J) F_z / nu) mu(l), mu = t1 (1 - e^{-t2 l}) - t3 l
        let h = 1e-6;
        let big_f = |l: f64| {
            ((1.0 - l) / p.m_quarter + p.r * p.r / p.inertia) * p.f_z / p.nu
                * (p.theta_r1 * (1.0 - (-p.theta_r2 * l).exp()) - p.theta_r3 * l)
        };
        let slope = (big_f(lambda0 + h) - big_f(lambda0 - h)) / (2.0 * h);
        if slope <= 0.0 {
            continue;
        }
        let f0 = p.r / (p.nu * p.inertia);
        let a = analyze(&ModelSpec::abs(p)).unwrap();
        let bl = -2.0 * p.k / f0;
        let br = 2.0 * p.k / f0;
        let this = (a.coeffs.beta_l - bl).abs() <= 1e-12 * bl.abs()
            && (a.coeffs.beta_r - br).abs() <= 1e-12 * br.abs()
            && a.verdict.predicted_stability == PredictedStability::Stable;
        ok &= this;
        detail += &format!(
            "[lambda0={lambda0}: F'={slope:.1} beta_L={:.1} beta_R={:.1} {}] ",
            a.coeffs.beta_l,
            a.coeffs.beta_r,
            a.verdict.predicted_stability.as_str()
        );
    }
    (ok, detail)
}

fn c3_scaling_law() -> Outcome {
    let model = ms(MassSpringParams::default());
    let scan = bifurcation_scan(&model, &scan_grid(&model), &region(&model), &Tolerances::default()).unwrap();
    let ratios: Vec<String> = scan
        .rows
        .iter()
        .map(|r| match &r.result {
            Ok(s) => format!("{:.4}", s.scaling_ratio),
            Err(e) => format!("error({e})"),
        })
        .collect();
    let law = scan.scaling_law();
    let pass = matches!(law, Some((e, true)) if e <= 0.1);
    (
        pass,
        format!(
            "x/y^3 over k=4..8: [{}], target -alpha/beta={}, (rel err, monotone)={law:?}",
            ratios.join(", "),
            scan.theory_ratio
        ),
    )
}

fn multipliers(scan_rows: &[Result<CycleSolution, relayfold::Error>]) -> Vec<f64> {
    scan_rows
        .iter()
        .map(|r| r.as_ref().map(|s| s.multiplier).unwrap_or(f64::NAN))
        .collect()
}

fn c4_stability() -> Outcome {
    let tol = Tolerances::default();
    let stable = ms(MassSpringParams::default());
    let a = analyze(&stable).unwrap();
    let g_r = stable.fold_jet(Mode::R).unwrap().g0;
    let scan = bifurcation_scan(&stable, &scan_grid(&stable), &region(&stable), &tol).unwrap();
    let rows: Vec<_> = scan.rows.iter().map(|r| r.result.clone()).collect();
    let mults = multipliers(&rows);
    let stable_ok = a.coeffs.alpha * g_r > 0.0 && mults.iter().all(|&m| m > 0.0 && m < 1.0);

    // sign-flipped forcing
    let flipped = ms(MassSpringParams {
        d_l: 1.0,
        d_r: -1.0,
        ..MassSpringParams::default()
    });
    let fa = analyze(&flipped).unwrap();
    let fg_r = flipped.fold_jet(Mode::R).unwrap().g0;
    let freg = region(&flipped);
    let mut escapes = Vec::new();
    let mut fmults = Vec::new();
    for x in scan_grid(&flipped) {
        match find_cycle(&flipped, x, &freg, &tol) {
            Ok(s) => {
                fmults.push(s.multiplier);
                let o = iterate_map(&flipped, x, s.y_fix * 1.01, 200, &freg, &tol);
                escapes.push(matches!(o, Ok(ref o) if o.escaped));
            }
            Err(_) => {
                fmults.push(f64::NAN);
                escapes.push(false);
            }
        }
    }
    let repelling_ok = fmults.iter().all(|&m| m > 1.0) && escapes.iter().all(|&e| e);
    (
        stable_ok && repelling_ok,
        format!(
            "alpha*g^R={} multipliers {mults:.6?} (all in (0,1): {stable_ok}); flipped variant alpha*g^R={} verdict {} multipliers {fmults:.6?} escapes {escapes:?} (repelling: {repelling_ok})",
            a.coeffs.alpha * g_r,
            fa.coeffs.alpha * fg_r,
            fa.verdict.predicted_stability.as_str()
        ),
    )
}

fn c5_residual_decay() -> Outcome {
    let mut ok = true;
    let mut detail = String::new();
    for (name, model) in [("mass_spring", ms(MassSpringParams::default())), ("abs", ModelSpec::abs(AbsParams::default()))] {
        let reg = region(&model);
        let rows = residual_sweep(&model, &reg, reg.delta, &Tolerances::default()).unwrap();
        let r0 = rows[0].ratio.abs();
        let r6 = rows[6].ratio.abs();
        let this = r6 < r0 / 4.0;
        ok &= this;
        detail += &format!("[{name}: r0={r0:.4e} r6={r6:.4e} {}] ", if this { "decays" } else { "does not decay" });
    }
    (ok, detail)
}

fn c6_flight_times() -> Outcome {
    let mut ok = true;
    let mut detail = String::new();
    for (name, model) in [("mass_spring", ms(MassSpringParams::default())), ("abs", ModelSpec::abs(AbsParams::default()))] {
        let reg = region(&model);
        let rows = residual_sweep(&model, &reg, reg.delta, &Tolerances::default()).unwrap();
        let jet = model.fold_jet(Mode::R).unwrap();
        let r = rows[6];
        let t_lim = -2.0 / jet.g0;
        let tt_lim = -2.0 / jet.fy;
        let e1 = rel(r.t / r.y, t_lim);
        let e2 = rel(r.t_tilde * r.y / r.x, tt_lim);
        let this = e1 <= 0.05 && e2 <= 0.05;
        ok &= this;
        detail += &format!(
            "[{name}: T/y={:.6} vs {t_lim:.6} ({e1:.1e}), T~y/x={:.6e} vs {tt_lim:.6e} ({e2:.1e})] ",
            r.t / r.y,
            r.t_tilde * r.y / r.x
        );
    }
    (ok, detail)
}

fn c7_oracle() -> Outcome {
    let mono = |t: &[(u32, u32, f64)]| {
        Polynomial::new(t.iter().map(|&(i, j, coeff)| Monomial { i, j, coeff }).collect()).unwrap()
    };
    let parabola = PolyField::new(mono(&[(0, 1, 1.0)]), mono(&[(0, 0, 1.0)]));
    let pj = parabola.analytic_jet(0.0, 0.0).unwrap();
    let p = verify_solution_jets(&parabola, &pj).unwrap();
    let model = ms(MassSpringParams::default());
    let m = verify_solution_jets(model.field(Mode::R), &model.fold_jet(Mode::R).unwrap()).unwrap();
    let worst = |r: &relayfold::oracle::DerivativeReport, order: u8| {
        r.entries
            .iter()
            .filter(|e| (order == 3) == (e.order == 3))
            .map(|e| e.abs_error)
            .fold(0.0, f64::max)
    };
    let ok = [&p, &m].iter().all(|r| {
        r.entries.len() == 19 && worst(r, 1) <= 1e-6 && worst(r, 3) <= 1e-4 && r.all_pass()
    });
    (
        ok,
        format!(
            "(y,1): max err orders 1-2 {:.1e}, order 3 {:.1e}; mass-spring R: {:.1e}, {:.1e}",
            worst(&p, 1),
            worst(&p, 3),
            worst(&m, 1),
            worst(&m, 3)
        ),
    )
}

/// Iterates until the geometric tail bound on the distance to the limit
/// drops below `1e-10`.
fn accumulation_point(model: &ModelSpec, x: f64, y0: f64, reg: &Region, tol: &Tolerances) -> Option<(f64, usize)> {
    let mut y = y0;
    let mut total = 0;
    while total < 200_000 {
        let o = iterate_map(model, x, y, 500, reg, tol).ok()?;
        if o.escaped {
            return None;
        }
        total += 500;
        let n = o.points.len();
        let (a, b, c) = (o.points[n - 3], o.points[n - 2], o.points[n - 1]);
        y = c;
        let d1 = b - a;
        let d2 = c - b;
        if d2 == 0.0 {
            return Some((c, total));
        }
        let rho = d2 / d1;
        if rho.abs() < 1.0 && (d2.abs() * rho.abs() / (1.0 - rho.abs())) < 1e-10 {
            return Some((c, total));
        }
    }
    None
}

fn c8_fixed_point() -> Outcome {
    let model = ms(MassSpringParams::default());
    let reg = region(&model);
    let tol = Tolerances::default();
    let mut ok = true;
    let mut detail = String::new();
    for x in scan_grid(&model) {
        let s = match find_cycle(&model, x, &reg, &tol) {
            Ok(s) => s,
            Err(e) => {
                ok = false;
                detail += &format!("[x={x:e}: {e}] ");
                continue;
            }
        };
        let start = s.y_fix + 0.05 * (reg.delta * s.y_fix.signum() - s.y_fix);
        let acc = accumulation_point(&model, x, start, &reg, &tol);
        let gap = acc.map(|(y, _)| (y - s.y_fix).abs()).unwrap_or(f64::INFINITY);
        let this = s.fix_residual <= 1e-10 && gap <= 1e-8;
        ok &= this;
        detail += &format!(
            "[x={x:e}: |P-y|={:.1e} |y_fix-limit|={gap:.1e} after {} iterates] ",
            s.fix_residual,
            acc.map(|a| a.1).unwrap_or(0)
        );
    }
    (ok, detail)
}

fn c9_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_relayfold");
    let cfg = |n: &str| format!("{}/configs/{n}", env!("CARGO_MANIFEST_DIR"));
    let runs: Vec<Vec<String>> = vec![
        vec!["scan".into(), "--model".into(), cfg("mass_spring.toml")],
        vec!["residuals".into(), "--model".into(), cfg("abs.toml")],
        vec![
            "simulate".into(),
            "--model".into(),
            cfg("mass_spring.toml"),
            "--x".into(),
            "-0.001".into(),
            "--y".into(),
            "-0.05".into(),
        ],
        vec!["coeffs".into(), "--model".into(), cfg("abs.toml")],
    ];
    let mut ok = true;
    let mut detail = String::new();
    for args in runs {
        let a = Command::new(bin).args(&args).output().unwrap();
        let b = Command::new(bin).args(&args).output().unwrap();
        let same = a.stdout == b.stdout && !a.stdout.is_empty() && a.status.code() == b.status.code();
        ok &= same;
        detail += &format!("[{}: {} bytes, identical={same}] ", args[0], a.stdout.len());
    }
    (ok, detail)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("mass-spring coefficients", c1_mass_spring_coefficients),
        ("ABS coefficients and verdict", c2_abs_coefficients),
        ("scaling law x/y^3 -> -alpha/beta", c3_scaling_law),
        ("stability cross-check", c4_stability),
        ("normal-form residual decay", c5_residual_decay),
        ("flight-time asymptotics", c6_flight_times),
        ("derivative oracle", c7_oracle),
        ("fixed point and iteration agree", c8_fixed_point),
        ("CLI determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (pass, detail) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        if !pass {
            failed += 1;
        }
        println!("criterion {} {name}: {} {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
