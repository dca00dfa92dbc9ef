/// Anything that can be queried for a log-density at a point.
pub trait LogDensity {
    fn dims(&self) -> usize;

    /// Natural log of the density at `x`. May be `-inf` where the density vanishes.
    fn log_density(&self, x: &[f64]) -> f64;
}

impl<T: LogDensity + ?Sized> LogDensity for &T {
    fn dims(&self) -> usize {
        (**self).dims()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        (**self).log_density(x)
    }
}

/// `ln(sum(exp(v)))` without overflow. Empty or all `-inf` input gives `-inf`.
pub fn log_sum_exp<I>(values: I) -> f64
where
    I: IntoIterator<Item = f64>,
    I::IntoIter: Clone,
{
    let iter = values.into_iter();
    let max = iter.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    max + iter.map(|v| (v - max).exp()).sum::<f64>().ln()
}
