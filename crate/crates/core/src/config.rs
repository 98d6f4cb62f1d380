//! TOML model files.
//!
//! ```toml
//! model = "mass_spring"            # or "abs", "poly"
//! fold_point = [0.0, 0.0]          # physical; required for "poly"
//!
//! [box]                            # physical coordinates
//! x = [-5.0, 5.0]
//! y = [-5.0, 5.0]
//!
//! [params]                         # per model kind
//! c_L = 0.1
//!
//! [poly.L]                         # terms [i, j, coeff] of x^i y^j
//! f = [[0, 1, 1.0]]
//! g = [[0, 0, -1.0]]
//!
//! [tolerances]
//! rel_tol = 1e-10
//!
//! [region]
//! m = 0.2
//! delta = 0.5
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::integrator::Tolerances;
use crate::model::{AbsParams, Bounds, MassSpringParams, ModelKind, ModelSpec, Monomial, PolyField, Polynomial};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelKind,
    name: Option<String>,
    fold_point: Option<[f64; 2]>,
    #[serde(rename = "box")]
    bbox: Option<RawBox>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    poly: Option<RawPolyPair>,
    tolerances: Option<RawTolerances>,
    region: Option<RegionOverride>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    x: [f64; 2],
    y: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolyPair {
    #[serde(rename = "L")]
    left: RawPoly,
    #[serde(rename = "R")]
    right: RawPoly,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoly {
    f: Vec<(u32, u32, f64)>,
    g: Vec<(u32, u32, f64)>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    tol_event: Option<f64>,
    tol_transversal: Option<f64>,
    t_budget: Option<f64>,
    t_min: Option<f64>,
}

/// Optional overrides of the wedge slope and outer radius of J.
#[derive(Clone, Copy, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionOverride {
    pub m: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedConfig {
    pub model: ModelSpec,
    pub tolerances: Tolerances,
    pub region: RegionOverride,
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<LoadedConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    build(raw)
}

fn take_params(kind: ModelKind, given: &BTreeMap<String, f64>, known: &[&str]) -> Result<()> {
    for (key, v) in given {
        if !known.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "unknown parameter `{key}` for model {}; expected one of {}",
                kind.as_str(),
                known.join(", ")
            )));
        }
        if !v.is_finite() {
            return Err(Error::Config(format!("parameter `{key}` is not finite")));
        }
    }
    Ok(())
}

fn polynomial(terms: &[(u32, u32, f64)]) -> Result<Polynomial> {
    Polynomial::new(terms.iter().map(|&(i, j, coeff)| Monomial { i, j, coeff }).collect())
}

fn build(raw: RawConfig) -> Result<LoadedConfig> {
    let p = &raw.params;
    let get = |k: &str, d: f64| p.get(k).copied().unwrap_or(d);
    let mut model = match raw.model {
        ModelKind::MassSpring => {
            take_params(raw.model, p, &["c_L", "c_R", "d_L", "d_R"])?;
            let d = MassSpringParams::default();
            ModelSpec::mass_spring(MassSpringParams {
                c_l: get("c_L", d.c_l),
                c_r: get("c_R", d.c_r),
                d_l: get("d_L", d.d_l),
                d_r: get("d_R", d.d_r),
            })
        }
        ModelKind::Abs => {
            take_params(
                raw.model,
                p,
                &["nu", "r", "J", "m_quarter", "F_z", "theta_r1", "theta_r2", "theta_r3", "k", "lambda0"],
            )?;
            let d = AbsParams::default();
            let a = AbsParams {
                nu: get("nu", d.nu),
                r: get("r", d.r),
                inertia: get("J", d.inertia),
                m_quarter: get("m_quarter", d.m_quarter),
                f_z: get("F_z", d.f_z),
                theta_r1: get("theta_r1", d.theta_r1),
                theta_r2: get("theta_r2", d.theta_r2),
                theta_r3: get("theta_r3", d.theta_r3),
                k: get("k", d.k),
                lambda0: get("lambda0", d.lambda0),
            };
            for (name, v) in [("nu", a.nu), ("r", a.r), ("J", a.inertia), ("m_quarter", a.m_quarter), ("F_z", a.f_z)] {
                if v <= 0.0 {
                    return Err(Error::Config(format!("parameter `{name}` must be positive")));
                }
            }
            if !(0.0 < a.lambda0 && a.lambda0 < 1.0) {
                return Err(Error::Config("lambda0 must lie in (0, 1)".into()));
            }
            ModelSpec::abs(a)
        }
        ModelKind::Poly => {
            if !p.is_empty() {
                return Err(Error::Config("model poly takes no [params]; use [poly.L] and [poly.R]".into()));
            }
            let pair = raw
                .poly
                .as_ref()
                .ok_or_else(|| Error::Config("model poly needs [poly.L] and [poly.R]".into()))?;
            let fold = raw
                .fold_point
                .ok_or_else(|| Error::Config("model poly needs fold_point".into()))?;
            let bbox = raw
                .bbox
                .as_ref()
                .ok_or_else(|| Error::Config("model poly needs [box]".into()))?;
            let field = |r: &RawPoly| -> Result<PolyField> { Ok(PolyField::new(polynomial(&r.f)?, polynomial(&r.g)?)) };
            let bounds = local_box(bbox, (fold[0], fold[1]))?;
            ModelSpec::poly(field(&pair.left)?, field(&pair.right)?, (fold[0], fold[1]), bounds)
        }
    };
    if raw.model != ModelKind::Poly {
        if raw.poly.is_some() {
            return Err(Error::Config(format!("[poly] is only valid for model poly, not {}", raw.model.as_str())));
        }
        if let Some([fx, fy]) = raw.fold_point {
            let (ex, ey) = model.fold_point;
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
            if !close(fx, ex) || !close(fy, ey) {
                return Err(Error::Config(format!(
                    "fold_point ({fx}, {fy}) does not match the model's fold point ({ex}, {ey})"
                )));
            }
        }
        if let Some(b) = &raw.bbox {
            let bounds = local_box(b, model.fold_point)?;
            model = model.with_bounds(bounds);
        }
    }
    if let Some(name) = raw.name {
        model.name = name;
    }

    let mut tolerances = Tolerances::default();
    if let Some(t) = raw.tolerances {
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut tolerances.rel_tol, t.rel_tol);
        set(&mut tolerances.abs_tol, t.abs_tol);
        set(&mut tolerances.tol_event, t.tol_event);
        set(&mut tolerances.tol_transversal, t.tol_transversal);
        set(&mut tolerances.t_budget, t.t_budget);
        set(&mut tolerances.t_min, t.t_min);
    }
    tolerances.validate()?;

    let region = raw.region.unwrap_or_default();
    for (name, v) in [("m", region.m), ("delta", region.delta)] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("region {name} must be positive, got {v}")));
            }
        }
    }
    Ok(LoadedConfig {
        model,
        tolerances,
        region,
    })
}

fn local_box(b: &RawBox, fold: (f64, f64)) -> Result<Bounds> {
    if b.x[0] >= b.x[1] || b.y[0] >= b.y[1] {
        return Err(Error::Config("box ranges must be increasing".into()));
    }
    Bounds::new(b.x[0] - fold.0, b.x[1] - fold.0, b.y[0] - fold.1, b.y[1] - fold.1)
}
