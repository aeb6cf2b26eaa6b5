use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("conic square root argument is negative at r = {r} mm")]
    SagDomain { r: f64 },
    #[error("r = {r} mm exceeds clear semi-diameter {limit} mm")]
    Aperture { r: f64, limit: f64 },
    #[error("total internal reflection")]
    TotalInternalReflection,
    #[error("wavelength {wavelength} nm outside table span [{min}, {max}] nm for {material}")]
    WavelengthOutOfRange {
        material: String,
        wavelength: f64,
        min: f64,
        max: f64,
    },
    #[error("ray missed surface")]
    Miss,
    #[error("insufficient sampling: {0}")]
    InsufficientSampling(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid assembly: {0}")]
    InvalidAssembly(String),
    #[error("rank-deficient least-squares system: {0}")]
    RankDeficient(String),
    #[error("aliasing guard: {0}")]
    Aliasing(String),
    #[error("image bounds exceeded: {0}")]
    OutOfBounds(String),
    #[error("sampling did not converge: {0}")]
    SamplingConvergence(String),
    #[error("unstable trap: {0}")]
    Unstable(String),
    #[error("underdetermined system: {0}")]
    Underdetermined(String),
    #[error("grid intersects electrode at ({x:.4}, {y:.4}) mm")]
    GridTouchesElectrode { x: f64, y: f64 },
    #[error("ratio {0} outside invertible range")]
    RatioOutOfRange(f64),
    #[error("thermal sum not converged by n_max = {0}")]
    Truncation(usize),
    #[error("fit did not converge: {0}")]
    NonConvergence(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("unknown dipole configuration `{0}`")]
    UnknownDipole(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
