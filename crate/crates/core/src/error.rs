use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("support vector violates discrete convexity at index {index} (defect {defect:e})")]
    NotConvex { index: usize, defect: f64 },

    #[error("convexity repair failed: {0}")]
    RepairFailed(String),

    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("meshing failed: {0}")]
    Meshing(String),

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("probe point ({x}, {y}) lies outside the meshed domain")]
    ProbeOutside { x: f64, y: f64 },

    #[error("gradient bound violated: g_max {g_max} exceeds 1.02 × inradius {inradius}")]
    BoundViolation { g_max: f64, inradius: f64 },

    #[error("level curve extraction failed: {0}")]
    Contour(String),

    #[error("random walk failed: {0}")]
    Walk(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
