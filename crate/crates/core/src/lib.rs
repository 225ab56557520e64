pub mod compress;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod lmo;
pub mod optim;
pub mod persist;
pub mod schedule;

pub use config::{ModelSpec, RunConfig};
pub use error::{Error, Result};
pub use linalg::{Matrix, SvdTriple};
