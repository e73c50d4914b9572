//! Checks Gauss-Hermite quadrature against E[He_n(u) He_m(v)] = δ_nm n! k^n.

use covflow::gauss_hermite::{
    expect_2d_correlated, hermite_eval, mehler_moment, CorrelationCoefficient, QuadratureRule, DEFAULT_ORDER,
};

fn main() -> covflow::Result<()> {
    let rule = QuadratureRule::gauss_hermite(DEFAULT_ORDER)?;
    for k in [-0.9, 0.3, 0.9] {
        let kc = CorrelationCoefficient::new(k)?;
        let worst = (0..=8)
            .flat_map(|n| (0..=8).map(move |m| (n, m)))
            .map(|(n, m)| {
                let q = expect_2d_correlated(|a, b| hermite_eval(n, a) * hermite_eval(m, b), kc, &rule)?;
                Ok((q - mehler_moment(n, m, kc)).abs())
            })
            .collect::<covflow::Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        println!("k = {k:+.1}: max error over n, m <= 8 is {worst:.2e}");
    }
    Ok(())
}
