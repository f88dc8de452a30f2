use thiserror::Error;

/// Failure to read an event, subscription or precision document.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("empty event")]
    EmptyEvent,
    #[error("empty subscription")]
    EmptySubscription,
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ParseError {
    pub(crate) fn invalid(path: impl Into<String>, message: impl Into<String>) -> ParseError {
        ParseError::Invalid { path: path.into(), message: message.into() }
    }

    /// Prefixes the error location with an enclosing path segment.
    pub(crate) fn at(self, prefix: impl AsRef<str>) -> ParseError {
        match self {
            ParseError::Invalid { path, message } => {
                let prefix = prefix.as_ref();
                let path = match path.as_str() {
                    "$" | "term" | "value" | "op" | "predicate" => prefix.to_string(),
                    p if p.starts_with('[') => format!("{prefix}{p}"),
                    p => format!("{prefix}.{p}"),
                };
                ParseError::Invalid { path, message }
            }
            other => other,
        }
    }
}

impl From<serde_json::Error> for ParseError {
    fn from(e: serde_json::Error) -> Self {
        ParseError::Json { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

/// Failure to load an ontology document. Each variant names the offending
/// entry.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OntologyError {
    #[error("malformed ontology document: {0}")]
    Document(String),
    #[error("cycle in hierarchy through {0}")]
    Cycle(String),
    #[error("synonym sets overlap on {term} (already in set rooted at {existing_root})")]
    OverlappingSynonyms { term: String, existing_root: String },
    #[error("mapping {mapping}: capture ${slot} is not bound by exactly one input")]
    UnboundCapture { mapping: String, slot: usize },
    #[error("mapping {mapping}: {message}")]
    InvalidExpr { mapping: String, message: String },
    #[error("mapping {mapping}: {message}")]
    InvalidMapping { mapping: String, message: String },
    #[error("invalid term in {entry}: {message}")]
    Term { entry: String, message: String },
}
