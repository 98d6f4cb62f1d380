//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or model error, 2 inconclusive,
//! 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{self, LoadedConfig};
use crate::cycle::{bifurcation_scan, decade_grid, find_cycle, CycleSolution};
use crate::error::Error;
use crate::hybrid::{simulate, StopRule};
use crate::model::Mode;
use crate::normal_form::{analyze, PredictedStability};
use crate::oracle::verify_solution_jets;
use crate::poincare::{entry_line, poincare_map, residual_sweep, Region};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Relative error allowed on the final scan ratio.
pub const SCAN_REL_TOL: f64 = 0.1;

#[derive(Parser, Debug)]
#[command(name = "relayfold", version, about = "Limit cycles of planar relay systems near a fold-fold point")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Model file (TOML).
    #[arg(long)]
    model: PathBuf,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Wedge slope of J; defaults to 2|alpha|/|beta|.
    #[arg(long)]
    m: Option<f64>,
    /// Outer radius of J; defaults to a tenth of the box's y-radius.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    L,
    R,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::L => Mode::L,
            ModeArg::R => Mode::R,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fold coefficients and the bifurcation verdict.
    Coeffs {
        #[command(flatten)]
        common: Common,
    },
    /// Trajectory of the switched system, sampled every `dt` plus one row per switch.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Half gap between the switching lines.
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        /// Start ordinate, relative to the fold point.
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
        /// Starting mode; the start lies on the line that switches it on.
        #[arg(long, value_enum, default_value_t = ModeArg::R)]
        mode: ModeArg,
        #[arg(long, conflicts_with = "tmax")]
        switches: Option<usize>,
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
    },
    /// Return map at one x for one or more y.
    Poincare {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        /// Values, comma separated, relative to the fold point.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_values)]
        y: Values,
    },
    /// Normal-form residuals on y_j = y0 2^-j, x_j = m |y_j|^3 / 2.
    Residuals {
        #[command(flatten)]
        common: Common,
        /// Magnitude of the first probe; defaults to delta.
        #[arg(long)]
        y0: Option<f64>,
    },
    /// Limit cycle at each x.
    Cycle {
        #[command(flatten)]
        common: Common,
        /// A value, a comma list, or a log range `a..b:n`.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_values)]
        x: Values,
    },
    /// Cycles over a range of x and the scaling-law check.
    Scan {
        #[command(flatten)]
        common: Common,
        /// Defaults to 10^-4 .. 10^-8 on the admissible side.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_values)]
        x: Option<Values>,
    },
    /// Derivatives of the flow at the fold point against their closed forms.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ModeArg::R)]
        mode: ModeArg,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Values(pub Vec<f64>);

/// `v`, `v1,v2,...`, or `a..b:n` (n points, log spaced, same sign).
pub fn parse_values(s: &str) -> Result<Values, String> {
    let num = |t: &str| -> Result<f64, String> {
        let v: f64 = t.trim().parse().map_err(|_| format!("not a number: `{t}`"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("not finite: `{t}`"))
        }
    };
    if let Some((a, rest)) = s.split_once("..") {
        let (b, n) = rest
            .split_once(':')
            .ok_or_else(|| format!("range `{s}` needs a point count, as in a..b:n"))?;
        let (a, b) = (num(a)?, num(b)?);
        let n: usize = n.trim().parse().map_err(|_| format!("bad point count in `{s}`"))?;
        if n < 2 || a == 0.0 || b == 0.0 || a.signum() != b.signum() {
            return Err(format!("range `{s}` needs n >= 2 and nonzero ends of one sign"));
        }
        let (la, lb) = (a.abs().log10(), b.abs().log10());
        let v = (0..n)
            .map(|i| a.signum() * 10f64.powf(la + (lb - la) * i as f64 / (n - 1) as f64))
            .collect();
        return Ok(Values(v));
    }
    s.split(',').map(num).collect::<Result<Vec<_>, _>>().map(Values)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::DegenerateJet(_) | Error::NotFoldFold(_) | Error::NotFold(_) => EXIT_CONFIG,
        Error::InconclusiveVerdict(_) => EXIT_INCONCLUSIVE,
        _ => EXIT_NUMERICAL,
    }
}

fn emit<T: Serialize>(rows: &[T], format: Format, out: &mut dyn Write) -> std::io::Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r).map_err(std::io::Error::other)?;
            }
            w.flush()
        }
        Format::Jsonl => {
            for r in rows {
                serde_json::to_writer(&mut *out, r)?;
                out.write_all(b"\n")?;
            }
            out.flush()
        }
    }
}

#[derive(Serialize)]
struct KeyValue {
    quantity: &'static str,
    value: String,
}

#[derive(Serialize)]
struct PoincareRow {
    x: f64,
    y_in: f64,
    y_out: f64,
    period: f64,
    intermediate: f64,
    delta: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct CycleRow {
    x: f64,
    y_fix: Option<f64>,
    period: Option<f64>,
    multiplier: Option<f64>,
    stability: Option<&'static str>,
    scaling_ratio: Option<f64>,
    theory_ratio: f64,
    fix_residual: Option<f64>,
    error: String,
}

impl CycleRow {
    fn new(x: f64, theory_ratio: f64, r: &Result<CycleSolution, Error>) -> Self {
        let s = r.as_ref().ok();
        CycleRow {
            x,
            y_fix: s.map(|s| s.y_fix),
            period: s.map(|s| s.period),
            multiplier: s.map(|s| s.multiplier),
            stability: s.map(|s| s.stability.as_str()),
            scaling_ratio: s.map(|s| s.scaling_ratio),
            theory_ratio,
            fix_residual: s.map(|s| s.fix_residual),
            error: r.as_ref().err().map(|e| e.to_string()).unwrap_or_default(),
        }
    }
}

/// What a subcommand produced before it was written out.
struct Outcome {
    code: i32,
    note: Option<String>,
}

impl Outcome {
    fn ok() -> Self {
        Outcome {
            code: EXIT_OK,
            note: None,
        }
    }
}

fn region_for(cfg: &LoadedConfig, common: &Common) -> Result<Region, Error> {
    let a = analyze(&cfg.model)?;
    let d = Region::default_for(&cfg.model, &a.coeffs);
    let r = Region {
        m: common.m.or(cfg.region.m).unwrap_or(d.m),
        delta: common.delta.or(cfg.region.delta).unwrap_or(d.delta),
    };
    r.validate()?;
    Ok(r)
}

/// Runs the command line `args` (program name first), writing data to
/// `out` or the `--out` file and diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let common = match &cli.command {
        Command::Coeffs { common }
        | Command::Simulate { common, .. }
        | Command::Poincare { common, .. }
        | Command::Residuals { common, .. }
        | Command::Cycle { common, .. }
        | Command::Scan { common, .. }
        | Command::Oracle { common, .. } => common,
    };
    let cfg = match config::load(&common.model) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit_code(&e);
        }
    };

    let mut file;
    let sink: &mut dyn Write = match &common.out {
        Some(path) => match std::fs::File::create(path) {
            Ok(f) => {
                file = std::io::BufWriter::new(f);
                &mut file
            }
            Err(e) => {
                let _ = writeln!(err, "error: {}: {e}", path.display());
                return EXIT_CONFIG;
            }
        },
        None => out,
    };

    match dispatch(&cli.command, &cfg, common, sink) {
        Ok(o) => {
            if let Some(n) = o.note {
                let _ = writeln!(err, "{n}");
            }
            o.code
        }
        Err(Failure::Model(e)) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
        Err(Failure::Io(e)) => {
            let _ = writeln!(err, "error: writing output: {e}");
            EXIT_CONFIG
        }
    }
}

enum Failure {
    Model(Error),
    Io(std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

fn dispatch(cmd: &Command, cfg: &LoadedConfig, common: &Common, out: &mut dyn Write) -> Result<Outcome, Failure> {
    let model = &cfg.model;
    let tol = &cfg.tolerances;
    let fmt = common.format;
    match cmd {
        Command::Coeffs { .. } => {
            let a = analyze(model)?;
            let (c, v) = (a.coeffs, a.verdict);
            let f = |q: &'static str, v: f64| KeyValue {
                quantity: q,
                value: v.to_string(),
            };
            let b = |q: &'static str, v: bool| KeyValue {
                quantity: q,
                value: v.to_string(),
            };
            let rows = vec![
                f("alpha_L", c.alpha_l),
                f("alpha_R", c.alpha_r),
                f("beta_L", c.beta_l),
                f("beta_R", c.beta_r),
                f("alpha", c.alpha),
                f("beta", c.beta),
                b("fold_fold", v.fold_fold),
                b("c2_fy", v.c2_fy),
                b("c2_g", v.c2_g),
                b("c3", v.c3),
                b("c4", v.c4),
                f("required_x_sign", f64::from(v.required_x_sign)),
                KeyValue {
                    quantity: "predicted_stability",
                    value: v.predicted_stability.as_str().into(),
                },
                f("predicted_y_sign", f64::from(v.predicted_y_sign)),
                f("cuberoot_ratio", v.predicted_cuberoot_ratio),
                f("alpha_flow_L", c.alpha_flow_l),
                f("alpha_flow_R", c.alpha_flow_r),
                f("alpha_flow", c.alpha_flow),
                f("flow_ratio", c.flow_ratio()),
            ];
            emit(&rows, fmt, out)?;
            Ok(if v.predicted_stability == PredictedStability::Inconclusive {
                Outcome {
                    code: EXIT_INCONCLUSIVE,
                    note: Some(format!("inconclusive: failed {}", v.failed_conditions().join(", "))),
                }
            } else {
                Outcome::ok()
            })
        }
        Command::Simulate {
            x,
            y,
            mode,
            switches,
            tmax,
            dt,
            ..
        } => {
            let stop = match (switches, tmax) {
                (_, Some(t)) => StopRule::Time(*t),
                (Some(n), None) => StopRule::Switches(*n),
                (None, None) => StopRule::default(),
            };
            let mode = Mode::from(*mode);
            let init = (entry_line(mode, *x), *y);
            let tr = simulate(model, *x, init, mode, stop, tol)?;
            emit(&tr.sample(model, *dt)?, fmt, out)?;
            Ok(Outcome::ok())
        }
        Command::Poincare { x, y, .. } => {
            let region = region_for(cfg, common)?;
            let mut rows = Vec::new();
            for &yi in &y.0 {
                let p = poincare_map(model, *x, yi, &region, true, tol)?;
                let r = p.residual.expect("requested");
                rows.push(PoincareRow {
                    x: *x,
                    y_in: p.y_in,
                    y_out: p.y_out,
                    period: p.period,
                    intermediate: p.intermediate,
                    delta: r.delta_value,
                    ratio: r.ratio,
                });
            }
            emit(&rows, fmt, out)?;
            Ok(Outcome::ok())
        }
        Command::Residuals { y0, .. } => {
            let region = region_for(cfg, common)?;
            let rows = residual_sweep(model, &region, y0.unwrap_or(region.delta), tol)?;
            emit(&rows, fmt, out)?;
            Ok(Outcome::ok())
        }
        Command::Cycle { x, .. } => {
            let region = region_for(cfg, common)?;
            let theory = analyze(model)?.coeffs.cuberoot_ratio();
            let results: Vec<_> = x.0.iter().map(|&xi| (xi, find_cycle(model, xi, &region, tol))).collect();
            let rows: Vec<_> = results.iter().map(|(xi, r)| CycleRow::new(*xi, theory, r)).collect();
            emit(&rows, fmt, out)?;
            Ok(match results.iter().find_map(|(_, r)| r.as_ref().err()) {
                Some(e) => Outcome {
                    code: exit_code(e),
                    note: Some(format!("error: {e}")),
                },
                None => Outcome::ok(),
            })
        }
        Command::Scan { x, .. } => {
            let region = region_for(cfg, common)?;
            let a = analyze(model)?;
            let xs = match x {
                Some(v) => v.0.clone(),
                None => decade_grid(f64::from(a.coeffs.admissible_x_sign()), 4, 8),
            };
            let scan = bifurcation_scan(model, &xs, &region, tol)?;
            let rows: Vec<_> = scan
                .rows
                .iter()
                .map(|r| CycleRow::new(r.x_param, scan.theory_ratio, &r.result))
                .collect();
            emit(&rows, fmt, out)?;
            if let Some(e) = scan.rows.iter().find_map(|r| r.result.as_ref().err()) {
                return Ok(Outcome {
                    code: exit_code(e),
                    note: Some(format!("error: {e}")),
                });
            }
            let note = match scan.scaling_law() {
                Some((rel, monotone)) => format!(
                    "final ratio {:?} against {:?}: relative error {:.4}, monotone over last three rows: {monotone}",
                    scan.limit_ratio_estimate.unwrap_or(f64::NAN),
                    scan.theory_ratio,
                    rel
                ),
                None => "scaling check needs at least three rows".to_string(),
            };
            Ok(Outcome {
                code: if scan.passes_scaling_check(SCAN_REL_TOL) {
                    EXIT_OK
                } else {
                    EXIT_INCONCLUSIVE
                },
                note: Some(note),
            })
        }
        Command::Oracle { mode, .. } => {
            let mode = Mode::from(*mode);
            let jet = model.fold_jet(mode)?;
            let report = verify_solution_jets(model.field(mode), &jet)?;
            emit(&report.entries, fmt, out)?;
            Ok(if report.all_pass() {
                Outcome::ok()
            } else {
                Outcome {
                    code: EXIT_NUMERICAL,
                    note: Some("some identities are outside tolerance".into()),
                }
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(name: &str) -> String {
        format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
    }

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut full = vec!["relayfold"];
        full.extend_from_slice(args);
        let code = run(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn values_syntax() {
        assert_eq!(parse_values("-1e-6").unwrap(), Values(vec![-1e-6]));
        assert_eq!(parse_values("1,2.5, 3").unwrap(), Values(vec![1.0, 2.5, 3.0]));
        let r = parse_values("-1e-4..-1e-8:5").unwrap().0;
        let expect = [-1e-4, -1e-5, -1e-6, -1e-7, -1e-8];
        assert!(r.iter().zip(expect).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs()));
        for bad in ["", "x", "1..2", "-1..1:3", "1..2:1", "inf", "1,,2"] {
            assert!(parse_values(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn coeffs_exit_codes() {
        let (code, out, _) = call(&["coeffs", "--model", &cfg("mass_spring.toml")]);
        assert_eq!(code, 0);
        assert!(out.starts_with("quantity,value\n"));
        assert!(out.contains("alpha,0.4\n"));
        assert!(out.contains("beta,-4\n"));
        assert!(out.contains("predicted_stability,stable\n"));
        assert!(out.contains("required_x_sign,-1\n"));

        let (code, out, _) = call(&["coeffs", "--model", &cfg("mass_spring_flat.toml")]);
        assert_eq!(code, 2);
        assert!(out.contains("c3,false"));
    }

    #[test]
    fn config_errors_exit_1() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.toml");
        std::fs::write(&bad, "model = \"mass_spring\"\nwhatever = 1\n").unwrap();
        let (code, _, err) = call(&["coeffs", "--model", bad.to_str().unwrap()]);
        assert_eq!(code, 1);
        assert!(err.contains("whatever"));
        let (code, _, _) = call(&["coeffs", "--model", "/nonexistent/model.toml"]);
        assert_eq!(code, 1);
        let (code, _, _) = call(&["coeffs"]);
        assert_eq!(code, 1);
        let (code, _, _) = call(&["frobnicate"]);
        assert_eq!(code, 1);
    }

    #[test]
    fn simulate_two_switches() {
        let (code, out, _) = call(&[
            "simulate", "--model", &cfg("mass_spring.toml"), "--x", "-0.001", "--y", "-0.05", "--switches", "2",
        ]);
        assert_eq!(code, 0);
        let mut lines = out.lines();
        assert_eq!(lines.next(), Some("t,x,y,mode,event"));
        assert_eq!(out.lines().filter(|l| l.ends_with(",1")).count(), 2);
    }

    #[test]
    fn jsonl_format() {
        let (code, out, _) = call(&[
            "residuals",
            "--model",
            &cfg("mass_spring.toml"),
            "--format",
            "jsonl",
        ]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().count(), 7);
        for l in out.lines() {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            assert!(v.get("ratio").is_some());
        }
    }

    #[test]
    fn residuals_seven_rows() {
        let (code, out, _) = call(&["residuals", "--model", &cfg("abs.toml")]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().count(), 8);
        assert_eq!(out.lines().next(), Some("j,y,x,p,delta,ratio,t,t_tilde"));
    }

    #[test]
    fn cycle_wrong_side_exit_3() {
        let (code, out, err) = call(&["cycle", "--model", &cfg("mass_spring.toml"), "--x", "1e-6"]);
        assert_eq!(code, 3);
        assert!(err.contains("domain violation"));
        assert!(out.lines().nth(1).unwrap().contains("domain violation"));
    }

    #[test]
    fn cycle_rows() {
        let (code, out, _) = call(&["cycle", "--model", &cfg("mass_spring.toml"), "--x", "-1e-5,-1e-6"]);
        assert_eq!(code, 0);
        assert_eq!(
            out.lines().next(),
            Some("x,y_fix,period,multiplier,stability,scaling_ratio,theory_ratio,fix_residual,error")
        );
        assert_eq!(out.lines().count(), 3);
        assert!(out.contains("attracting"));
    }

    #[test]
    fn poincare_rows() {
        let (code, out, _) = call(&[
            "poincare", "--model", &cfg("mass_spring.toml"), "--x", "-1e-5", "--y", "-0.1,-0.2",
        ]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().count(), 3);
        let (code, _, _) = call(&["poincare", "--model", &cfg("mass_spring.toml"), "--x", "-1e-5", "--y", "0.1"]);
        assert_eq!(code, 3);
    }

    #[test]
    fn oracle_passes() {
        let (code, out, _) = call(&["oracle", "--model", &cfg("parabola.toml")]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().count(), 20);
        let (code, _, _) = call(&["oracle", "--model", &cfg("mass_spring.toml"), "--mode", "l"]);
        assert_eq!(code, 0);
    }

    #[test]
    fn out_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let (code, out, _) = call(&[
            "coeffs",
            "--model",
            &cfg("mass_spring.toml"),
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        assert!(out.is_empty());
        assert!(std::fs::read_to_string(&path).unwrap().contains("alpha_L,0.2"));
    }
}
