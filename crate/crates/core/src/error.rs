use thiserror::Error;

/// Errors raised by model construction and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("a multigraph needs at least two nodes, got {0}")]
    TooFewNodes(usize),
    #[error("at most {max} nodes are supported, got {got}")]
    TooManyNodes { got: usize, max: usize },
    #[error("edge ({0},{0}) must be given as a self-loop")]
    LoopInEdgeList(String),
    #[error("multigraph is not connected")]
    Disconnected,
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("measure support does not match the node set")]
    SupportMismatch,
    #[error("split value for `{node}` must lie in (0,1), got {value}")]
    InvalidSplit { node: String, value: String },
    #[error("measure violates the stability condition (margin {margin})")]
    NcondViolated { margin: f64 },
    #[error("the multigraph is a bipartite graph")]
    BipartiteGraph,
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("policy is not class-admissible")]
    NotClassAdmissible,
    #[error("word `{0}` is not an admissible state")]
    InadmissibleWord(String),
    #[error("model is not finite: some node has no self-loop")]
    NotFinite,
    #[error("state set is not closed under the kernel (target `{0}` missing)")]
    NotClosed(String),
    #[error("linear system is singular")]
    Singular,
    #[error("detailed word `{0}` is not admissible for the backward chain")]
    NotBackwardAdmissible(String),
    #[error("time index {n} exceeds horizon {horizon}")]
    BeyondHorizon { n: usize, horizon: usize },
    #[error("trajectory contains no complete excursion")]
    NoExcursion,
    #[error("maximal subgraph is not complete multipartite")]
    NotMultipartite,
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
