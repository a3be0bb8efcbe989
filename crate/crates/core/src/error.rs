use thiserror::Error;

#[derive(Debug, Error)]
pub enum FanError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("shape mismatch: field is {field_h}x{field_w}, mask is {mask_h}x{mask_w}")]
    Shape {
        field_h: usize,
        field_w: usize,
        mask_h: usize,
        mask_w: usize,
    },

    #[error("empty region: mask has no set pixels")]
    EmptyRegion,

    #[error("out of range: {0}")]
    Range(String),

    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },

    #[error("feature memory is empty")]
    NoMemory,

    #[error("degenerate query vector (zero norm)")]
    DegenerateQuery,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = FanError> = std::result::Result<T, E>;
