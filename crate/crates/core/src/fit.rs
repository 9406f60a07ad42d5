//! Least-squares lines, sample statistics and binomial intervals.

use crate::scalar::Real;

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LineFit<T> {
    pub slope: T,
    pub intercept: T,
    /// Root-mean-square residual.
    pub residual: T,
    pub points: usize,
}

/// Fits a line through `(x, y)` pairs. Returns `None` for fewer than two
/// points or a degenerate abscissa.
pub fn fit_line<T: Real>(points: &[(T, T)]) -> Option<LineFit<T>> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let nf = T::from_usize_lossy(n);
    let mx = points.iter().map(|p| p.0).sum::<T>() / nf;
    let my = points.iter().map(|p| p.1).sum::<T>() / nf;
    let sxx: T = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: T = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= T::zero() || !sxx.is_finite() {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: T = points
        .iter()
        .map(|p| {
            let r = p.1 - intercept - slope * p.0;
            r * r
        })
        .sum();
    Some(LineFit { slope, intercept, residual: (ss / nf).sqrt(), points: n })
}

/// Fits `ln y` against `ln x`; every coordinate must be positive.
pub fn fit_log_log<T: Real>(points: &[(T, T)]) -> Option<LineFit<T>> {
    if points.iter().any(|&(x, y)| x <= T::zero() || y <= T::zero()) {
        return None;
    }
    let logs: Vec<(T, T)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    fit_line(&logs)
}

/// Sample mean and standard error of the mean (zero for a single sample).
/// Uses Welford's update, so identical samples give their value exactly.
pub fn mean_and_stderr<T: Real>(values: impl IntoIterator<Item = T>) -> (T, T) {
    let mut n = 0usize;
    let mut mean = T::zero();
    let mut m2 = T::zero();
    for x in values {
        n += 1;
        let d = x - mean;
        mean += d / T::from_usize_lossy(n);
        m2 += d * (x - mean);
    }
    match n {
        0 => (T::nan(), T::nan()),
        1 => (mean, T::zero()),
        _ => {
            let nf = T::from_usize_lossy(n);
            (mean, (m2 / (nf - T::one()) / nf).sqrt())
        }
    }
}

/// Wilson score interval for `hits` successes out of `n` trials at normal quantile `z`.
pub fn wilson_interval<T: Real>(hits: usize, n: usize, z: T) -> (T, T) {
    if n == 0 {
        return (T::zero(), T::one());
    }
    let nf = T::from_usize_lossy(n);
    let p = T::from_usize_lossy(hits) / nf;
    let z2 = z * z;
    let denom = T::one() + z2 / nf;
    let center = (p + z2 / (nf + nf)) / denom;
    let half = z * (p * (T::one() - p) / nf + z2 / (T::lit(4.0) * nf * nf)).sqrt() / denom;
    ((center - half).max(T::zero()), (center + half).min(T::one()))
}

/// `ln(sum exp(x_i))`, `-inf` for an empty input.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}
