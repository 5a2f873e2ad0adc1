use thiserror::Error;

use crate::game::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("game failed validation: {}", summarize(.0))]
    Validation(Vec<Violation>),

    #[error("unknown state `{0}`")]
    UnknownState(String),

    #[error("unknown player `{0}`")]
    UnknownPlayer(String),

    #[error("unknown action `{action}` for player `{player}` in state `{state}`")]
    UnknownAction {
        state: String,
        player: String,
        action: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("linear program failed: {0}")]
    Lp(#[from] crate::lp::LpError),

    #[error("product chain has more than {cap} (memory, state) pairs")]
    CapExceeded { cap: usize },

    #[error("internal numerical error: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

fn summarize(v: &[Violation]) -> String {
    let mut parts: Vec<String> = v.iter().take(3).map(|x| x.to_string()).collect();
    if v.len() > 3 {
        parts.push(format!("... and {} more", v.len() - 3));
    }
    parts.join("; ")
}
