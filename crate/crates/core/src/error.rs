use thiserror::Error;

/// Everything that can go wrong between reading a model and classifying a cycle.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("state ({x}, {y}) left the model box")]
    OutOfBox { x: f64, y: f64 },

    #[error("degenerate jet: {0}")]
    DegenerateJet(String),

    #[error("Newton iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("no crossing of x = {line_x} within the time budget {budget}")]
    NoCrossing { line_x: f64, budget: f64 },

    #[error("tangential crossing of x = {line_x} at t = {t} (|f| = {speed:e})")]
    TangentialCrossing { line_x: f64, t: f64, speed: f64 },

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("not a fold-fold point: {0}")]
    NotFoldFold(String),

    #[error("not a fold: |f(0)| = {0:e}")]
    NotFold(f64),

    #[error("inconclusive verdict: {0}")]
    InconclusiveVerdict(String),

    #[error("P(y) - y has the same sign at both ends of J: G({y_inner}) = {g_inner:e}, G({y_outer}) = {g_outer:e}")]
    NoSignChange {
        y_inner: f64,
        g_inner: f64,
        y_outer: f64,
        g_outer: f64,
    },

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
