//! Iterates the covariance map from a few starting correlations and reports
//! where each activation's flow ends up.

use covflow::activation::{hermite_coefficients, ActivationSpec, DEFAULT_TRUNCATION};
use covflow::flow::{find_fixed_point, iterate_flow, CovarianceMap};

fn main() -> covflow::Result<()> {
    for name in ["relu", "gelu", "tanh", "relu-shifted"] {
        let spec = ActivationSpec::by_name(name)?;
        let map = CovarianceMap::new(&spec)?;
        let series = hermite_coefficients(&spec, DEFAULT_TRUNCATION)?;
        let report = find_fixed_point(&map, &series)?;
        let ends: Vec<String> = [-0.5, 0.5, 0.99]
            .iter()
            .map(|&k0| Ok(format!("{:.4}", iterate_flow(k0, &map, 50)?.last())))
            .collect::<covflow::Result<_>>()?;
        println!(
            "{name:<13} k* = {:.6} ({:?}); after 50 layers from -0.5, 0.5, 0.99: {}",
            report.fixed_point,
            report.classification,
            ends.join(", ")
        );
    }
    Ok(())
}
