use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QcsError {
    #[error("degenerate lattice: {0}")]
    DegenerateLattice(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration budget exceeded: {needed} candidates > budget {budget}")]
    Budget { needed: u128, budget: u64 },

    #[error("precision failure: {0}")]
    Precision(String),

    #[error("outside certified region: {0}")]
    OutsideCertifiedRegion(String),

    #[error("certified region too small: tail bound {tail_bound:e} exceeds 10% of value {value:e}")]
    CertifiedRegionTooSmall { value: f64, tail_bound: f64 },

    #[error("insufficient decay data: {0}")]
    InsufficientData(String),

    #[error("outside theorem regime: {0}")]
    OutsideRegime(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl QcsError {
    /// Budget and precision failures are operational limits rather than bad input.
    pub fn is_resource_limit(&self) -> bool {
        matches!(
            self,
            QcsError::Budget { .. }
                | QcsError::Precision(_)
                | QcsError::Infeasible(_)
                | QcsError::CertifiedRegionTooSmall { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, QcsError>;
