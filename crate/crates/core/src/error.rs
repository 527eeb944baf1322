use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every stage of the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("stencil point {point:?} leaves the field domain")]
    DomainBoundary { point: [f64; 3] },

    #[error("vector field vanishes at {point:?} (|v| = {norm:e})")]
    VanishingField { point: [f64; 3], norm: f64 },

    #[error(
        "reference axis {axis:?} is within {angle:e} rad of the flow direction at {point:?}; \
         try reference axis {suggested:?}"
    )]
    FrameDegeneracy {
        point: [f64; 3],
        axis: [f64; 3],
        angle: f64,
        suggested: [f64; 3],
    },

    #[error("exact derivatives requested but the field does not provide them")]
    NoExactDerivative,

    #[error("grade error: {0}")]
    Grade(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("streamline truncated at s = {s}: {reason}")]
    Truncated { s: f64, reason: String },

    #[error("tube construction failed for seeds {0:?}")]
    TubeConstruction(Vec<String>),

    #[error("Riccati solution blows up at s = {s} inside the requested span; restrict the tube")]
    SpanSplit { s: f64 },

    #[error("degenerate Poisson pair at {point:?}: |mu1 - mu2| = {separation:e}")]
    DegeneratePair { point: [f64; 3], separation: f64 },

    #[error("point {point:?} is not covered by the stream tube")]
    OutsideTube { point: [f64; 3] },

    #[error("input 1-form is not Poisson at {point:?}: normalized Jacobi residual {residual:e}")]
    NotPoisson { point: [f64; 3], residual: f64 },

    #[error("mesh too coarse for transport at triangle {triangle}: {detail}; refine the mesh")]
    RefineMesh { triangle: usize, detail: String },

    #[error("samples are not periodic: boundary mismatch {mismatch:e}")]
    Periodicity { mismatch: f64 },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Short machine-readable tag, used in reports and by the C interface.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DomainBoundary { .. } => "domain-boundary",
            Error::VanishingField { .. } => "vanishing-field",
            Error::FrameDegeneracy { .. } => "frame-degeneracy",
            Error::NoExactDerivative => "no-exact-derivative",
            Error::Grade(_) => "grade",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Truncated { .. } => "truncated",
            Error::TubeConstruction(_) => "tube-construction",
            Error::SpanSplit { .. } => "span-split",
            Error::DegeneratePair { .. } => "degenerate-pair",
            Error::OutsideTube { .. } => "outside-tube",
            Error::NotPoisson { .. } => "not-poisson",
            Error::RefineMesh { .. } => "refine-mesh",
            Error::Periodicity { .. } => "periodicity",
            Error::Mesh(_) => "mesh",
            Error::Scenario(_) => "scenario",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn arr(v: &crate::calc3::Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}
