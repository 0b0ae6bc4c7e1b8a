use thiserror::Error;

/// Failures raised by the geometry, quadrature and verification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A point falls outside the open hemisphere guard for K = +1.
    #[error("radius {r} leaves the open hemisphere (guard r < pi/2 - {guard:e})")]
    Hemisphere { r: f64, guard: f64 },

    /// Arguments outside the domain of a function (negative radius, bad curvature, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A domain description violates one of its invariants.
    #[error("invalid domain: invariant `{invariant}` violated: {detail}")]
    InvalidDomain {
        invariant: &'static str,
        detail: String,
    },

    /// The operation is not defined for this space form or dimension.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A precondition of a verification step does not hold.
    #[error("precondition `{name}` violated: {detail}")]
    Precondition { name: &'static str, detail: String },

    /// The linear solve or quadrature failed a consistency check.
    #[error("solver failure: {0}")]
    Solver(String),

    /// The equidistant flow produced a non-positive area factor.
    #[error("caustic at t = {t}: area factor {jacobian} at sample {sample}")]
    Caustic {
        t: f64,
        sample: usize,
        jacobian: f64,
    },

    /// The flow would leave the open hemisphere before the requested time.
    #[error("flow leaves the hemisphere: requested t_max = {t_max}, exit bound {exit_bound}")]
    HemisphereExit { t_max: f64, exit_bound: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
