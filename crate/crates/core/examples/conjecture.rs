//! How often a random network maps a sign vector to an all-negative output,
//! against the rate expected if output signs were independent.

use covflow::activation::ActivationSpec;
use covflow::conjecture::{conjecture_network, estimate_rarity, full_cube, RarityMode};

fn main() -> covflow::Result<()> {
    let n = 6;
    let cube = full_cube(n)?;
    let config = conjecture_network(n, 1.0, ActivationSpec::tanh(), 3)?;
    for mode in [RarityMode::Network, RarityMode::SyntheticIndependent] {
        println!("{mode:?}: {}", estimate_rarity(&config, &cube, 2000, mode)?.summary());
    }
    Ok(())
}
