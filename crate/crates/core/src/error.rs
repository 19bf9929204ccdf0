use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Input had no usable content (e.g. a clip shorter than one frame).
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A parameter combination that cannot be realised.
    #[error("configuration error: {0}")]
    Config(String),

    /// Tensor or matrix dimensions disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A network spec failed validation; every violation is listed.
    #[error("invalid network spec: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),

    /// An error raised inside a specific layer of a network.
    #[error("layer {index}: {source}")]
    Layer {
        /// Position of the layer in the spec.
        index: usize,
        /// Underlying error.
        source: alloc::boxed::Box<Error>,
    },

    /// An annotation references a class that is not in the class list.
    #[error("unknown classes: {}", .0.join(", "))]
    UnknownClass(Vec<String>),

    /// Invalid annotation (e.g. offset not after onset).
    #[error("invalid annotation: {0}")]
    Validation(String),

    /// A mixture recipe does not fit its source samples.
    #[error("recipe error: {0}")]
    Recipe(String),

    /// Operation called in the wrong state (e.g. backward without forward).
    #[error("state error: {0}")]
    State(String),

    /// Non-finite value encountered during optimization.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A metric is undefined for the given statistics.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
}

impl Error {
    pub(crate) fn in_layer(self, index: usize) -> Self {
        Error::Layer {
            index,
            source: alloc::boxed::Box::new(self),
        }
    }
}

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
