//! Experiment driver: parameter sweeps, far-field grids, oversampling
//! studies and convergence tables written as self-describing CSV.

pub mod commands;
pub mod config;
pub mod output;

use std::time::Duration;

use ffembed::embedding::Branch;
use ffembed::experiment::ExperimentError;
use ffembed::geometry::GeometryError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("geometry error: {0}")]
    Geometry(#[from] GeometryError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("numerical failure: {0}")]
    Numerical(ExperimentError),
    #[error("self-test failed: {0}")]
    SelfTest(String),
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Geometry(g) => CliError::Geometry(g),
            other => CliError::Numerical(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) | CliError::SelfTest(_) => 3,
            _ => 2,
        }
    }
}

/// Headline numbers for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub e_in: f64,
    pub e_out: f64,
    pub ratio: f64,
    pub cond: f64,
    pub b_norm: f64,
    pub branch_counts: [usize; 5],
    pub wall_time: Duration,
}

impl ErrorReport {
    pub fn summary(&self) -> String {
        let branches: Vec<String> = Branch::ALL
            .iter()
            .zip(self.branch_counts)
            .map(|(b, n)| format!("{}={n}", b.label()))
            .collect();
        format!(
            "E_in={:.3e} E_out={:.3e} ratio={:.3e} cond={:.3e} |b|={:.3e} branches[{}] time={:.2}s",
            self.e_in,
            self.e_out,
            self.ratio,
            self.cond,
            self.b_norm,
            branches.join(" "),
            self.wall_time.as_secs_f64()
        )
    }
}
