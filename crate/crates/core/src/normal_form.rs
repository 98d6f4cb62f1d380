//! Closed-form fold coefficients and the bifurcation hypotheses they feed.
//!
//! Per mode, with the jet taken at the fold point,
//!
//! ```text
//! alpha = 2 (f_x + g_y) / g + f_yy / f_y,      beta = -2 g / f_y
//! ```
//!
//! and the composed return map behaves like
//! `P(y) = y + (alpha_L - alpha_R) y^2 + (beta_R - beta_L) x / y + o(y^2)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Jet, Mode, ModelSpec, TOL_DEGENERATE, TOL_ROOT};

/// `+1`, `-1`, or `0` when `|v| <= tol`.
pub fn sign_of(v: f64, tol: f64) -> i8 {
    if v > tol {
        1
    } else if v < -tol {
        -1
    } else {
        0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FoldCoefficients {
    pub alpha_l: f64,
    pub alpha_r: f64,
    pub beta_l: f64,
    pub beta_r: f64,
    /// `alpha_L - alpha_R`.
    pub alpha: f64,
    /// `beta_R - beta_L`.
    pub beta: f64,
    pub sign_g_r0: i8,
    pub sign_f_ry0: i8,
    /// Second-order coefficient of the same-line map obtained by expanding
    /// the flow itself, `(2 (f_x + g_y) / g - f_yy / f_y) / 3`. This is what
    /// integration measures; it is not `alpha_L` / `alpha_R` in general.
    pub alpha_flow_l: f64,
    pub alpha_flow_r: f64,
    pub alpha_flow: f64,
}

impl FoldCoefficients {
    /// Limit of `x / y(x)^3` along the bifurcating branch.
    pub fn cuberoot_ratio(&self) -> f64 {
        -self.alpha / self.beta
    }

    /// `-alpha_flow / beta`, the limit of `x / y(x)^3` seen by integration.
    pub fn flow_ratio(&self) -> f64 {
        -self.alpha_flow / self.beta
    }

    /// Smallest wedge slope the fixed-point argument accepts, `|alpha| / |beta|`.
    pub fn min_wedge_slope(&self) -> f64 {
        self.alpha.abs() / self.beta.abs()
    }

    /// Sign of `x` for which the composed map is the switched system's
    /// return map: `x f^R_y(0) g^R(0) < 0`.
    pub fn admissible_x_sign(&self) -> i8 {
        -self.sign_f_ry0 * self.sign_g_r0
    }

    /// Sign of `y` on the cross-section interval J.
    pub fn section_y_sign(&self) -> i8 {
        -self.sign_g_r0
    }

    /// Leading-order normal form `y + alpha y^2 + beta x / y`.
    pub fn normal_form(&self, x: f64, y: f64) -> f64 {
        y + self.alpha * y * y + self.beta * x / y
    }
}

pub fn mode_alpha(jet: &Jet) -> f64 {
    2.0 * (jet.fx + jet.gy) / jet.g0 + jet.fyy / jet.fy
}

pub fn mode_alpha_flow(jet: &Jet) -> f64 {
    (2.0 * (jet.fx + jet.gy) / jet.g0 - jet.fyy / jet.fy) / 3.0
}

pub fn mode_beta(jet: &Jet) -> f64 {
    -2.0 * jet.g0 / jet.fy
}

pub fn fold_coefficients(jet_l: &Jet, jet_r: &Jet) -> Result<FoldCoefficients> {
    for (name, j) in [("L", jet_l), ("R", jet_r)] {
        if j.f0.abs() > TOL_ROOT {
            return Err(Error::NotFoldFold(format!("|f^{name}(0)| = {:e}", j.f0.abs())));
        }
        if j.fy.abs() < TOL_DEGENERATE || j.g0.abs() < TOL_DEGENERATE {
            return Err(Error::DegenerateJet(format!(
                "mode {name}: f'_y(0) = {:e}, g(0) = {:e}",
                j.fy, j.g0
            )));
        }
    }
    let (alpha_l, alpha_r) = (mode_alpha(jet_l), mode_alpha(jet_r));
    let (beta_l, beta_r) = (mode_beta(jet_l), mode_beta(jet_r));
    let (alpha_flow_l, alpha_flow_r) = (mode_alpha_flow(jet_l), mode_alpha_flow(jet_r));
    Ok(FoldCoefficients {
        alpha_l,
        alpha_r,
        beta_l,
        beta_r,
        alpha: alpha_l - alpha_r,
        beta: beta_r - beta_l,
        sign_g_r0: sign_of(jet_r.g0, 0.0),
        sign_f_ry0: sign_of(jet_r.fy, 0.0),
        alpha_flow_l,
        alpha_flow_r,
        alpha_flow: alpha_flow_l - alpha_flow_r,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictedStability {
    Stable,
    Unstable,
    Inconclusive,
}

impl PredictedStability {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictedStability::Stable => "stable",
            PredictedStability::Unstable => "unstable",
            PredictedStability::Inconclusive => "inconclusive",
        }
    }
}

/// Every hypothesis of the border-splitting theorem, evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheoremVerdict {
    /// `f^L(0) = f^R(0) = 0`.
    pub fold_fold: bool,
    /// `f^R_y(0) f^L_y(0) > 0`.
    pub c2_fy: bool,
    /// `g^R(0) g^L(0) < 0`.
    pub c2_g: bool,
    /// `alpha != 0`.
    pub c3: bool,
    /// `alpha beta f^R_y(0) < 0`.
    pub c4: bool,
    pub required_x_sign: i8,
    pub predicted_stability: PredictedStability,
    pub predicted_y_sign: i8,
    pub predicted_cuberoot_ratio: f64,
}

impl TheoremVerdict {
    pub fn all_hold(&self) -> bool {
        self.fold_fold && self.c2_fy && self.c2_g && self.c3 && self.c4
    }

    pub fn failed_conditions(&self) -> Vec<&'static str> {
        [
            ("fold_fold", self.fold_fold),
            ("c2_fy", self.c2_fy),
            ("c2_g", self.c2_g),
            ("c3", self.c3),
            ("c4", self.c4),
        ]
        .into_iter()
        .filter(|(_, ok)| !ok)
        .map(|(n, _)| n)
        .collect()
    }
}

pub fn check_theorem(coeffs: &FoldCoefficients, jets: (&Jet, &Jet)) -> TheoremVerdict {
    let (jl, jr) = jets;
    let fold_fold = jl.f0.abs() <= TOL_ROOT && jr.f0.abs() <= TOL_ROOT;
    let c2_fy = sign_of(jr.fy, TOL_DEGENERATE) * sign_of(jl.fy, TOL_DEGENERATE) > 0;
    let c2_g = sign_of(jr.g0, TOL_DEGENERATE) * sign_of(jl.g0, TOL_DEGENERATE) < 0;
    let alpha_sign = sign_of(coeffs.alpha, TOL_DEGENERATE);
    let c3 = alpha_sign != 0;
    let c4 = alpha_sign * sign_of(coeffs.beta, TOL_DEGENERATE) * sign_of(jr.fy, TOL_DEGENERATE) < 0;
    let g_r = sign_of(jr.g0, TOL_DEGENERATE);

    let all = fold_fold && c2_fy && c2_g && c3 && c4;
    let predicted_stability = match (all, alpha_sign * g_r) {
        (true, 1) => PredictedStability::Stable,
        (true, -1) => PredictedStability::Unstable,
        _ => PredictedStability::Inconclusive,
    };

    TheoremVerdict {
        fold_fold,
        c2_fy,
        c2_g,
        c3,
        c4,
        required_x_sign: -sign_of(jr.fy, TOL_DEGENERATE) * g_r,
        predicted_stability,
        predicted_y_sign: -g_r,
        predicted_cuberoot_ratio: coeffs.cuberoot_ratio(),
    }
}

/// Leading-order fixed point `y = cbrt(-beta x / alpha)`.
pub fn predicted_fixed_point(coeffs: &FoldCoefficients, x_param: f64) -> Result<f64> {
    let alpha_sign = sign_of(coeffs.alpha, TOL_DEGENERATE);
    if alpha_sign == 0 {
        return Err(Error::InconclusiveVerdict("alpha = 0".into()));
    }
    if alpha_sign * sign_of(coeffs.beta, TOL_DEGENERATE) * coeffs.sign_f_ry0 >= 0 {
        return Err(Error::InconclusiveVerdict("alpha beta f^R_y(0) < 0 fails".into()));
    }
    if x_param != 0.0 && sign_of(x_param, 0.0) != coeffs.admissible_x_sign() {
        return Err(Error::InconclusiveVerdict(format!(
            "x = {x_param:e} lies on the inadmissible side"
        )));
    }
    Ok((-coeffs.beta * x_param / coeffs.alpha).cbrt())
}

/// Jets, coefficients and verdict of a model, taken at its fold point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Analysis {
    pub jet_l: Jet,
    pub jet_r: Jet,
    pub coeffs: FoldCoefficients,
    pub verdict: TheoremVerdict,
}

pub fn analyze(model: &ModelSpec) -> Result<Analysis> {
    let jet_l = model.fold_jet(Mode::L)?;
    let jet_r = model.fold_jet(Mode::R)?;
    let coeffs = fold_coefficients(&jet_l, &jet_r)?;
    let verdict = check_theorem(&coeffs, (&jet_l, &jet_r));
    Ok(Analysis {
        jet_l,
        jet_r,
        coeffs,
        verdict,
    })
}
