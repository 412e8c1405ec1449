use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh mismatch: field is {field_nx}x{field_ny} elements, mesh is {mesh_nx}x{mesh_ny}")]
    MeshMismatch {
        field_nx: usize,
        field_ny: usize,
        mesh_nx: usize,
        mesh_ny: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numerical range error: {0}")]
    NumericalRange(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("could not place {channels} disjoint channels after {attempts} attempts")]
    ChannelPlacement { channels: usize, attempts: usize },

    #[error("dense factorization failed in {0}")]
    Factorization(&'static str),

    #[error("requested {requested} modes but the snapshot set has numerical rank {rank}; use fewer modes")]
    RankDeficient { requested: usize, rank: usize },

    #[error("interpolation matrix is ill-conditioned (condition number {condition:e}); choose different nodes or fewer modes")]
    IllConditioned { condition: f64 },

    #[error("observation point ({x}, {y}) maps to boundary node {node}, where the solution is pinned to zero")]
    BoundaryNode { x: f64, y: f64, node: usize },

    #[error("observation points snap to duplicate node {node}")]
    DuplicateNode { node: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("stage `{stage}` failed (seed {seed}): {source}")]
    Stage {
        stage: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            got,
        }
    }

    /// Wraps an error with the pipeline stage and seed that produced it.
    pub fn in_stage(self, stage: impl Into<String>, seed: u64) -> Self {
        Error::Stage {
            stage: stage.into(),
            seed,
            source: Box::new(self),
        }
    }
}
