//! Small deterministic statistics helpers shared by the Monte Carlo modules.

/// Neumaier (compensated) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sum of a sequence, always reduced in iteration order.
pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    sum(values.iter().copied()) / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    sum(values.iter().map(|v| (v - m) * (v - m))) / (n - 1) as f64
}

/// Standard error of the mean, treating each value as one independent unit.
pub fn standard_error(values: &[f64]) -> f64 {
    (variance(values) / values.len() as f64).sqrt()
}

/// Mean and standard error in one pass over the slice.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    (mean(values), standard_error(values))
}

/// Delete-one jackknife standard error of a statistic of column totals.
///
/// `rows` holds one vector of per-unit sums (all the same length); `stat`
/// maps the grand totals and the unit count to the estimate.
pub fn jackknife<F>(rows: &[Vec<f64>], stat: F) -> (f64, f64)
where
    F: Fn(&[f64], usize) -> f64,
{
    let units = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    let totals: Vec<f64> = (0..width)
        .map(|c| sum(rows.iter().map(|r| r[c])))
        .collect();
    let estimate = stat(&totals, units);
    if units < 2 {
        return (estimate, f64::NAN);
    }
    let mut scratch = vec![0.0; width];
    let leave_out: Vec<f64> = rows
        .iter()
        .map(|row| {
            for (s, (t, r)) in scratch.iter_mut().zip(totals.iter().zip(row)) {
                *s = t - r;
            }
            stat(&scratch, units - 1)
        })
        .collect();
    let centre = mean(&leave_out);
    let spread = sum(leave_out.iter().map(|v| (v - centre) * (v - centre)));
    let se = ((units - 1) as f64 / units as f64 * spread).sqrt();
    (estimate, se)
}

/// Excess kurtosis from raw power sums `[n, Σx, Σx², Σx³, Σx⁴]`.
pub fn excess_kurtosis_from_sums(sums: &[f64]) -> f64 {
    let n = sums[0];
    let m1 = sums[1] / n;
    let r2 = sums[2] / n;
    let r3 = sums[3] / n;
    let r4 = sums[4] / n;
    let c2 = r2 - m1 * m1;
    let c4 = r4 - 4.0 * m1 * r3 + 6.0 * m1 * m1 * r2 - 3.0 * m1.powi(4);
    c4 / (c2 * c2) - 3.0
}
