//! The connected four-point correlator halves when the width doubles.

use covflow::activation::ActivationSpec;
use covflow::network::NetworkConfig;
use covflow::simulate::four_point_scaling;

fn main() -> covflow::Result<()> {
    let narrow = NetworkConfig::critical(8, 64, 3, ActivationSpec::tanh(), 5)?;
    let wide = NetworkConfig { width: 128, ..narrow.clone() };
    let s = four_point_scaling(&narrow, &wide, 2000)?;
    println!(
        "n = 64: {:.4e} ± {:.1e}\nn = 128: {:.4e} ± {:.1e}\nratio {:.3}, consistent with 1/n: {}",
        s.narrow.connected_correlator,
        s.narrow.standard_error,
        s.wide.connected_correlator,
        s.wide.standard_error,
        s.ratio,
        s.consistent
    );
    Ok(())
}
