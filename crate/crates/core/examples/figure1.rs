//! Writes the three covariance-map curves as CSV files.
//!
//! `cargo run --example figure1 -- [out-dir]`

use std::path::PathBuf;

use covflow::runs::{Figure1Run, Outcome, Run};

fn main() -> covflow::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("covflow-figure1"));
    if let Outcome::Figure1(paths) = Run::Figure1(Figure1Run { grid: 101 }).execute(&dir)? {
        for p in paths {
            println!("{}", p.display());
        }
    }
    Ok(())
}
