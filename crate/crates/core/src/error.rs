use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("adjacency entry ({row}, {col}) is {value}, expected 0 or 1")]
    NonBinary { row: usize, col: usize, value: f64 },

    #[error("adjacency has a self-loop at node {0}")]
    SelfLoop(usize),

    #[error("undirected graph has asymmetric adjacency at ({0}, {1})")]
    Asymmetric(usize, usize),

    #[error("feature matrix has {found} rows, expected {expected}")]
    FeatureRows { expected: usize, found: usize },

    #[error("feature dimension must be at least 1")]
    EmptyFeatures,

    #[error("node index {index} out of range for a graph with {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("node index {0} listed more than once")]
    DuplicateNode(usize),

    #[error("hop bound must be at least 1, got {0}")]
    InvalidHops(usize),

    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("unknown dataset kind `{0}`")]
    UnknownDataset(String),

    #[error("node {0} belongs to the base graph and has no ground-truth motif")]
    NoGroundTruth(usize),

    #[error("graph carries no motif ground truth")]
    MissingGroundTruth,

    #[error("training requires labels, but the graph has none")]
    MissingLabels,

    #[error("label {label} is out of range for {classes} classes")]
    InvalidClass { label: usize, classes: usize },

    #[error("predictor does not expose input gradients")]
    GradientUnsupported,

    #[error("predictor task is {found}, this operation needs {expected}")]
    TaskMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("perturbation batch is empty")]
    EmptyBatch,

    #[error("perturbation energy must be positive, got {0}")]
    NonPositiveEnergy(f64),

    #[error("cannot select {requested} nodes from a domain of {available}")]
    SelectionOutOfRange { requested: usize, available: usize },

    #[error("explanation selects {selected} nodes but the ground truth has {truth}")]
    SelectionSizeMismatch { selected: usize, truth: usize },

    #[error("contrastivity needs nodes outside the top {top}, domain has only {available}")]
    NoOutsideNodes { top: usize, available: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
