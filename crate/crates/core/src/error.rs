use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("taxonomy: {0}")]
    Taxonomy(String),

    #[error("rule {category}:{subcategory}#{index}: {message}")]
    InvalidRule {
        category: String,
        subcategory: String,
        index: usize,
        message: String,
    },

    #[error("unknown identity `{name}`; valid identities: {}", valid.join(", "))]
    UnknownIdentity { name: String, valid: Vec<String> },

    #[error("{file}: expected header [{}], found [{}]", expected.join(","), found.join(","))]
    Schema {
        file: String,
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular design, collinear terms: {}", .0.join(", "))]
    SingularDesign(Vec<String>),

    #[error("estimation did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
