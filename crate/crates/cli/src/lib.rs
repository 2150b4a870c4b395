//! Batch front-end for Lorentzian-basis orbital fits: job files, reports,
//! statevector export and the verification battery.

pub mod error;
pub mod export;
pub mod job;
pub mod pipeline;
pub mod report;
pub mod verify;

pub use error::{CliError, CliResult};
pub use job::JobFile;
pub use report::FitReport;
