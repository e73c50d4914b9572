pub mod activation;
pub mod conjecture;
pub mod error;
pub mod flow;
pub mod gauss_hermite;
pub mod integrator;
pub mod network;
pub mod report;
pub mod rng;
pub mod runs;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
