//! Hermite decomposition and zero-mean class of every registered activation.

use covflow::activation::{classify, hermite_coefficients, registry, DEFAULT_TRUNCATION};

fn main() -> covflow::Result<()> {
    println!("{:<14} {:>10} {:>10} {:>10}  class", "activation", "mean", "<s^2>", "a1");
    for spec in registry() {
        let series = hermite_coefficients(&spec, DEFAULT_TRUNCATION)?;
        let class = classify(&spec, &series)?;
        println!(
            "{:<14} {:>10.6} {:>10.6} {:>10.6}  {:?}",
            spec.id,
            series.mean(),
            series.second_moment,
            series.coefficients[1],
            class
        );
    }
    Ok(())
}
