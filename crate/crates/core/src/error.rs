use thiserror::Error;

use crate::geometry::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("profile is not admissible: {}", summarize(.0))]
    Admissibility(Vec<Violation>),

    #[error("weight vanishes at interior node {index} (x = {x})")]
    DegenerateWeight { index: usize, x: f64 },

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("{role} evaluated outside its domain at node {index} (x = {x}): argument {value}")]
    Domain {
        role: &'static str,
        index: usize,
        x: f64,
        value: String,
    },

    #[error("h(φ) vanishes near x = {x}")]
    SingularPotential { x: f64 },

    #[error("value {value} at x = {x} is outside the range of f′")]
    Range { x: f64, value: f64 },

    #[error("no convergence after {iterations} iterations (last residual {last:e})")]
    Convergence {
        iterations: usize,
        last: f64,
        trace: Vec<f64>,
    },

    #[error("deformation leaves the Kähler class at t = {t}")]
    PathExitsClass { t: f64 },

    #[error("no metric in the class is critical: {0}")]
    NoCriticalMetric(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

fn summarize(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
