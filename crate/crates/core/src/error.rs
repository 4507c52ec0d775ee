use thiserror::Error;

pub type Result<T> = std::result::Result<T, BodeError>;

#[derive(Debug, Error)]
pub enum BodeError {
    #[error("polynomial of degree < 1 has no roots")]
    NoRoots,

    #[error("root set is not closed under conjugation: {0}")]
    NotConjugateClosed(String),

    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument { arg: &'static str, reason: String },

    #[error("transfer function denominator is the zero polynomial")]
    ZeroDenominator,

    #[error("degenerate loop: 1 + L(s) is identically zero")]
    DegenerateLoop,

    #[error("transfer function is improper (numerator degree {num} > denominator degree {den})")]
    Improper { num: usize, den: usize },

    #[error(
        "origin condition violated: L has {zeros_at_origin} zero(s) at s = 0 but only {poles_at_origin} pole(s) there"
    )]
    OriginCondition {
        zeros_at_origin: usize,
        poles_at_origin: usize,
    },

    #[error("denominator root(s) on the evaluation grid: {0}")]
    AxisPole(String),

    #[error("stability is indeterminate: closed-loop root(s) within {tol:e} of the imaginary axis: {roots}")]
    IndeterminateStability { tol: f64, roots: String },

    #[error("closed loop is unstable; unstable closed-loop poles: {0}")]
    Unstable(String),

    #[error("|T(0)| = {t0} differs from 1; use the T(0)-normalized weighted integral instead")]
    Normalization { t0: f64 },

    #[error("root(s) within the imaginary-axis band make the bound indeterminate: {0}")]
    AxisRoot(String),

    #[error("S(infinity) = 0, the sensitivity limit term is undefined")]
    ZeroSensitivityAtInfinity,

    #[error("T(0) = 0, the complementary sensitivity limit term is undefined")]
    ZeroComplementaryAtOrigin,

    #[error("record too short: {len} samples, need at least {needed}")]
    RecordTooShort { len: usize, needed: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("every spectral bin fell below the floor")]
    AllMasked,

    #[error("coherence needs at least {needed} segments, got {got}")]
    TooFewSegments { got: usize, needed: usize },

    #[error("mutual information rate diverges: {fraction:.3} of bins have coherence >= 1 - 1e-9")]
    Divergent { fraction: f64 },

    #[error("system is not asymptotically stable")]
    NotStable,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl BodeError {
    pub(crate) fn invalid(arg: &'static str, reason: impl Into<String>) -> Self {
        BodeError::InvalidArgument {
            arg,
            reason: reason.into(),
        }
    }
}

pub(crate) fn format_roots(roots: &[num_complex::Complex64]) -> String {
    roots
        .iter()
        .map(|r| {
            if r.im == 0.0 {
                format!("{:.6}", r.re)
            } else {
                format!("{:.6}{:+.6}j", r.re, r.im)
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}
