use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a {expected}-component field, got {found} components")]
    Components { expected: usize, found: usize },

    #[error("field periods differ ({0} vs {1})")]
    PeriodMismatch(f64, f64),

    #[error("field cut-offs differ ({0} vs {1})")]
    BandMismatch(usize, usize),

    #[error("mode ({n1}, {n2}) is outside the band of cut-off {cutoff}")]
    OutOfBand { n1: i64, n2: i64, cutoff: usize },

    #[error("resampling to cut-off {cutoff} would drop a nonzero coefficient at mode ({n1}, {n2})")]
    LossyResample { n1: i64, n2: i64, cutoff: usize },

    #[error("field is not the gradient part of a Leray decomposition (solenoidal residue {residue:e})")]
    NotGradient { residue: f64 },

    #[error("field violates Hermitian symmetry (imaginary residue {residue:e})")]
    NotReal { residue: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical blow-up at layer {k}: {reason}")]
    BlowUp { k: usize, reason: String },

    #[error("exact field has zero norm; relative error undefined")]
    ZeroDenominator,

    #[error("Monte Carlo run {run} failed: {source}")]
    RunFailed {
        run: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the error (or its wrapped cause) is a numerical blow-up.
    pub fn is_blow_up(&self) -> bool {
        match self {
            Error::BlowUp { .. } => true,
            Error::RunFailed { source, .. } => source.is_blow_up(),
            _ => false,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
