use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field failed validation. Carries the field name so
    /// CLI users can map the message back to their config file.
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    /// An operation received an argument outside its domain.
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    /// The selected cluster has no base stations or no users, so capacity
    /// is undefined for this draw. Replication drivers retry on this.
    #[error("cluster {cluster} is degenerate: {bs_count} BSs, {user_count} users")]
    EmptyCluster {
        cluster: usize,
        bs_count: usize,
        user_count: usize,
    },

    /// Cholesky factorization failed; the matrix is not positive definite.
    #[error("Hermitian factorization failed: {context}")]
    Factorization { context: &'static str },

    /// The cluster/network dimensions are outside the spiked-Fisher regime.
    #[error("network too small for the spiked-Fisher regime: {reason}")]
    FisherRegime { reason: String },

    /// The user/BS ratio exceeds one; the closed-form path applies instead.
    #[error("user/BS ratio {beta} exceeds 1; use the closed-form path")]
    UseClosedForm { beta: f64 },

    /// An adaptive quadrature did not converge within its refinement cap.
    #[error("quadrature failed to converge: {context}")]
    QuadratureNonConvergence { context: &'static str },

    /// A replication failed with the given index, wrapping the cause.
    #[error("replication {index} failed: {source}")]
    Replication {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Draw-level degeneracy: the realized layout cannot support the
    /// requested estimate (empty target cluster, or too few interferers
    /// for the spiked-Fisher frame). Replication drivers resample the
    /// layout on these instead of aborting the run.
    pub fn is_degenerate_draw(&self) -> bool {
        matches!(
            self,
            Error::EmptyCluster { .. } | Error::FisherRegime { .. }
        )
    }

    pub(crate) fn invalid_config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid_argument(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}
