use thiserror::Error;

use crate::amino::AminoAcid;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("structure contains no usable residues")]
    EmptyStructure,

    #[error("matrix {name}: missing value for ({a},{b})")]
    IncompleteMatrix { name: String, a: AminoAcid, b: AminoAcid },

    #[error("matrix {name}: asymmetric at ({a},{b})")]
    AsymmetricMatrix { name: String, a: AminoAcid, b: AminoAcid },

    #[error("unknown residue code {0:?}")]
    UnknownResidue(String),

    #[error("residue {0} is not present in the structure")]
    AbsentResidue(String),

    #[error("invalid variant: {0}")]
    InvalidVariant(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("self-kernel is zero; the contact graph has no edges")]
    ZeroSelfKernel,

    #[error("kernel entry {0} is not positive; log-derivative undefined")]
    KernelDomain(f64),

    #[error("kernel system is not positive definite (after jitter {jitter:e})")]
    Indefinite { jitter: f64 },

    #[error("no finite-density initial state found for the scaling chain")]
    ChainInit,

    #[error("objective is not finite at the initial parameters")]
    NonFiniteObjective,

    #[error("correlation undefined: zero variance")]
    UndefinedCorrelation,

    #[error("trimming leaves {0} points; at least 3 required")]
    TooFewSurvivors(usize),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}
