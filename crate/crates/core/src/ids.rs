//! Eigenvalue counting and Monte Carlo estimates of the integrated density of states.

use rayon::prelude::*;
use serde::Serialize;

use crate::disorder::{sample_potential, DisorderError, SingleSiteDist};
use crate::fit::mean_and_stderr;
use crate::operator::{
    assemble_simple, eigensolve_capped, powered_section, Boundary, FiniteSection, IntegerSymbolSpec, Interval, OperatorError,
    Provenance, DEFAULT_DIMENSION_CAP,
};
use crate::scalar::Real;
use crate::symbol::{QuadratureOptions, SublevelMeasure, Symbol, SymbolError};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum IdsError {
    #[error("invalid energy grid: {0}")]
    InvalidGrid(String),
    #[error("at least one sample is required")]
    NoSamples,
    #[error("potential has {got} sites, the section has {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("sections live on different intervals")]
    IntervalMismatch,
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Symbol(#[from] SymbolError),
    #[error(transparent)]
    Disorder(#[from] DisorderError),
}

fn validate_grid<T: Real>(energies: &[T]) -> Result<(), IdsError> {
    if energies.is_empty() {
        return Err(IdsError::InvalidGrid("empty".into()));
    }
    if energies.iter().any(|e| !e.is_finite()) {
        return Err(IdsError::InvalidGrid("energies must be finite".into()));
    }
    Ok(())
}

/// `n` geometrically spaced energies from `lo` to `hi`.
pub fn geometric_grid<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    assert!(lo > T::zero() && hi > lo && n >= 2);
    let ratio = (hi / lo).ln() / T::from_usize_lossy(n - 1);
    (0..n).map(|k| lo * (ratio * T::from_usize_lossy(k)).exp()).collect()
}

/// `#{lambda <= E} / dim` for sorted eigenvalues.
pub fn counts_from_values<T: Real>(values: &[T], energies: &[T]) -> Vec<T> {
    let dim = T::from_usize_lossy(values.len());
    energies.iter().map(|&e| T::from_usize_lossy(values.partition_point(|&v| v <= e)) / dim).collect()
}

/// Normalized counting function of `sec + diag(v)` on an energy grid.
pub fn counting_curve<T: Real>(sec: &FiniteSection<T>, v: Option<&[T]>, energies: &[T]) -> Result<Vec<T>, IdsError> {
    counting_curve_capped(sec, v, energies, DEFAULT_DIMENSION_CAP)
}

pub fn counting_curve_capped<T: Real>(sec: &FiniteSection<T>, v: Option<&[T]>, energies: &[T], cap: usize) -> Result<Vec<T>, IdsError> {
    validate_grid(energies)?;
    let values = match v {
        Some(v) => {
            if v.len() != sec.dim() {
                return Err(IdsError::DimensionMismatch { got: v.len(), expected: sec.dim() });
            }
            eigensolve_capped(&sec.with_diagonal(v), false, cap)?.values
        }
        None => eigensolve_capped(sec, false, cap)?.values,
    };
    Ok(counts_from_values(&values, energies))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeIdsReport<T> {
    pub l: usize,
    pub energies: Vec<T>,
    pub counted: Vec<T>,
    pub closed: Vec<T>,
    pub max_deviation: T,
}

/// Compares the counting function of the simple section on `[-L, L]` with the
/// sublevel-set measure of the symbol. The eigensolver cap is raised to the
/// section's dimension.
pub fn free_ids_check<T: Real>(
    s: &Symbol<T>,
    l: usize,
    energies: &[T],
    quad: &QuadratureOptions<T>,
) -> Result<FreeIdsReport<T>, IdsError> {
    validate_grid(energies)?;
    let interval = Interval::centered(l);
    let coeffs = s.fourier_coefficients(interval.len() - 1, quad)?;
    let sec = assemble_simple(&coeffs, interval);
    let counted = counting_curve_capped(&sec, None, energies, sec.dim())?;
    let measure = SublevelMeasure::new(s, SublevelMeasure::<T>::DEFAULT_LOG2);
    let closed: Vec<T> = energies.iter().map(|&e| measure.measure(e)).collect();
    let max_deviation = counted.iter().zip(&closed).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max);
    Ok(FreeIdsReport { l, energies: energies.to_vec(), counted, closed, max_deviation })
}

/// What a curve was computed from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelDescriptor<T> {
    pub boundary: Boundary,
    pub provenance: Provenance<T>,
    pub dist: SingleSiteDist<T>,
    pub seed: u64,
}

/// Monte Carlo estimate of the normalized counting function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdsCurve<T> {
    pub energies: Vec<T>,
    pub mean: Vec<T>,
    pub stderr: Vec<T>,
    pub interval: Interval,
    pub n_samples: usize,
    pub model: ModelDescriptor<T>,
    /// Counting curves of the individual samples, in sample order.
    #[serde(skip)]
    pub per_sample: Vec<Vec<T>>,
}

impl<T: Real> IdsCurve<T> {
    fn from_samples(energies: &[T], per_sample: Vec<Vec<T>>, sec: &FiniteSection<T>, dist: &SingleSiteDist<T>, seed: u64) -> Self {
        let (mean, stderr): (Vec<T>, Vec<T>) =
            (0..energies.len()).map(|j| mean_and_stderr(per_sample.iter().map(|c| c[j]))).unzip();
        Self {
            energies: energies.to_vec(),
            mean,
            stderr,
            interval: sec.interval,
            n_samples: per_sample.len(),
            model: ModelDescriptor { boundary: sec.boundary, provenance: sec.provenance.clone(), dist: *dist, seed },
            per_sample,
        }
    }

    /// Half-length `L` of a centred interval (`(|Lambda| - 1) / 2`).
    pub fn l(&self) -> usize {
        (self.interval.len() - 1) / 2
    }

    /// `(E, mean, stderr, n, L)` rows.
    pub fn csv_rows(&self) -> Vec<(T, T, T, usize, usize)> {
        (0..self.energies.len())
            .map(|j| (self.energies[j], self.mean[j], self.stderr[j], self.n_samples, self.l()))
            .collect()
    }
}

/// Averages counting curves over `n_samples` potentials; sample `k` uses the
/// potential keyed by `(seed, k)`.
pub fn mc_ids<T: Real>(
    sec: &FiniteSection<T>,
    dist: &SingleSiteDist<T>,
    energies: &[T],
    n_samples: usize,
    seed: u64,
) -> Result<IdsCurve<T>, IdsError> {
    Ok(mc_ids_common(&[sec], dist, energies, n_samples, seed)?.pop().expect("one curve"))
}

/// Curves for several sections on one interval driven by the same potentials.
pub fn mc_ids_common<T: Real>(
    secs: &[&FiniteSection<T>],
    dist: &SingleSiteDist<T>,
    energies: &[T],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<IdsCurve<T>>, IdsError> {
    validate_grid(energies)?;
    dist.validate()?;
    if n_samples == 0 {
        return Err(IdsError::NoSamples);
    }
    let interval = secs[0].interval;
    if secs.iter().any(|s| s.interval != interval) {
        return Err(IdsError::IntervalMismatch);
    }
    let cap = interval.len().max(DEFAULT_DIMENSION_CAP);
    // samples[k][model] = counting curve
    let samples: Vec<Vec<Vec<T>>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let v = sample_potential(dist, interval, seed, k);
            secs.iter().map(|s| counting_curve_capped(s, Some(&v.values), energies, cap)).collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(secs
        .iter()
        .enumerate()
        .map(|(m, s)| {
            let per: Vec<Vec<T>> = samples.iter().map(|row| row[m].clone()).collect();
            IdsCurve::from_samples(energies, per, s, dist, seed)
        })
        .collect())
}

/// Number of `(sample, energy)` pairs where `lower > upper`.
pub fn dominance_violations<T: Real>(lower: &IdsCurve<T>, upper: &IdsCurve<T>) -> usize {
    lower
        .per_sample
        .iter()
        .zip(&upper.per_sample)
        .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x > y).count())
        .sum()
}

/// Dirichlet (lower) and Neumann (upper) curves of the powered sections of
/// `spec` on `[-L, L]`, with common potentials.
pub fn sandwich_curves<T: Real>(
    spec: &IntegerSymbolSpec<T>,
    dist: &SingleSiteDist<T>,
    l: usize,
    energies: &[T],
    n_samples: usize,
    seed: u64,
) -> Result<(IdsCurve<T>, IdsCurve<T>), IdsError> {
    let interval = Interval::centered(l);
    let d = powered_section(spec, interval, Boundary::DirichletMod)?;
    let n = powered_section(spec, interval, Boundary::NeumannMod)?;
    let mut curves = mc_ids_common(&[&d, &n], dist, energies, n_samples, seed)?;
    let upper = curves.pop().expect("two curves");
    let lower = curves.pop().expect("two curves");
    Ok((lower, upper))
}

/// Largest difference between the sorted spectra of `T_f + V` and
/// `T_{f(. + shift)} + V` on `[-L, L]`.
pub fn shift_check<T: Real>(
    s: &Symbol<T>,
    shift: T,
    l: usize,
    v: &[T],
    quad: &QuadratureOptions<T>,
) -> Result<T, IdsError> {
    let interval = Interval::centered(l);
    if v.len() != interval.len() {
        return Err(IdsError::DimensionMismatch { got: v.len(), expected: interval.len() });
    }
    let n_max = interval.len() - 1;
    let a = assemble_simple(&s.fourier_coefficients(n_max, quad)?, interval).with_diagonal(v);
    let b = assemble_simple(&s.shifted(shift).fourier_coefficients(n_max, quad)?, interval).with_diagonal(v);
    let cap = interval.len().max(DEFAULT_DIMENSION_CAP);
    let ea = eigensolve_capped(&a, false, cap)?.values;
    let eb = eigensolve_capped(&b, false, cap)?.values;
    Ok(ea.iter().zip(&eb).map(|(x, y)| (*x - *y).abs()).fold(T::zero(), T::max))
}

/// Envelope comparison with common potentials: simple-section curves of a
/// lower envelope `f1`, the symbol `f` and an upper envelope `f2`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeCurves<T> {
    pub lower_envelope: IdsCurve<T>,
    pub symbol: IdsCurve<T>,
    pub upper_envelope: IdsCurve<T>,
}

impl<T: Real> EnvelopeCurves<T> {
    /// Violations of `curve(f2) <= curve(f) <= curve(f1)` over all samples and energies.
    pub fn violations(&self) -> usize {
        dominance_violations(&self.upper_envelope, &self.symbol) + dominance_violations(&self.symbol, &self.lower_envelope)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn envelope_curves<T: Real>(
    f: &Symbol<T>,
    f1: &Symbol<T>,
    f2: &Symbol<T>,
    dist: &SingleSiteDist<T>,
    l: usize,
    energies: &[T],
    n_samples: usize,
    seed: u64,
    quad: &QuadratureOptions<T>,
) -> Result<EnvelopeCurves<T>, IdsError> {
    let interval = Interval::centered(l);
    let n_max = interval.len() - 1;
    let secs: Vec<FiniteSection<T>> = [f1, f, f2]
        .iter()
        .map(|s| Ok(assemble_simple(&s.fourier_coefficients(n_max, quad)?, interval)))
        .collect::<Result<_, IdsError>>()?;
    let mut c = mc_ids_common(&[&secs[0], &secs[1], &secs[2]], dist, energies, n_samples, seed)?;
    let upper_envelope = c.pop().expect("three curves");
    let symbol = c.pop().expect("three curves");
    let lower_envelope = c.pop().expect("three curves");
    Ok(EnvelopeCurves { lower_envelope, symbol, upper_envelope })
}

/// Stability of a curve under doubling of `L`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoublingDiagnostic<T> {
    pub l: usize,
    /// `max_E |curve_{2L}(E) - curve_L(E)|`.
    pub max_change: T,
    /// Combined standard error at the energy of the largest change.
    pub stderr_at_max: T,
}

/// Runs `mc_ids` at `L` and `2L` for sections produced by `build`.
pub fn doubling_diagnostic<T: Real>(
    build: impl Fn(Interval) -> Result<FiniteSection<T>, IdsError>,
    dist: &SingleSiteDist<T>,
    l: usize,
    energies: &[T],
    n_samples: usize,
    seed: u64,
) -> Result<(IdsCurve<T>, IdsCurve<T>, DoublingDiagnostic<T>), IdsError> {
    let a = mc_ids(&build(Interval::centered(l))?, dist, energies, n_samples, seed)?;
    let b = mc_ids(&build(Interval::centered(2 * l))?, dist, energies, n_samples, seed)?;
    let (mut max_change, mut stderr_at_max) = (T::zero(), T::zero());
    for j in 0..energies.len() {
        let d = (a.mean[j] - b.mean[j]).abs();
        if d > max_change {
            max_change = d;
            stderr_at_max = (a.stderr[j] * a.stderr[j] + b.stderr[j] * b.stderr[j]).sqrt();
        }
    }
    Ok((a, b, DoublingDiagnostic { l, max_change, stderr_at_max }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::assemble_g;
    use crate::symbol::{envelope_bounds, CosineFactor, EnvelopeOptions};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    /// Sturm count of eigenvalues `<= e` of a real symmetric tridiagonal matrix.
    fn sturm_count(diag: &[f64], off: f64, e: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0f64;
        for (i, &d) in diag.iter().enumerate() {
            let prev = if i == 0 { 0.0 } else { off * off / q };
            q = d - e - prev;
            if q == 0.0 {
                q = -1e-300;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn lap_section(l: usize) -> FiniteSection<f64> {
        assemble_g(&IntegerSymbolSpec::laplacian_power(1, 1.0, 1.0).unwrap(), Interval::centered(l), Boundary::Simple).unwrap()
    }

    #[test]
    fn counting_examples() {
        let sec = lap_section(1);
        assert_eq!(counting_curve(&sec, None, &[2.0]).unwrap(), vec![2.0 / 3.0]);
        assert_eq!(counting_curve(&sec, None, &[10.0]).unwrap(), vec![1.0]);
        assert_eq!(counting_curve(&sec, Some(&[0.1, 0.0, 0.3]), &[-0.5]).unwrap(), vec![0.0]);
        assert!(counting_curve(&sec, Some(&[0.1]), &[0.0]).is_err());
    }

    #[test]
    fn free_ids_laplacian_is_close() {
        let s = Symbol::fractional_laplacian(1.0).unwrap();
        let grid: Vec<f64> = (0..13).map(|k| 0.5 + 0.25 * k as f64).collect();
        let r = free_ids_check(&s, 256, &grid, &QuadratureOptions::default()).unwrap();
        assert!(r.max_deviation < 0.01, "{}", r.max_deviation);
        for (e, c) in grid.iter().zip(&r.closed) {
            assert_abs_diff_eq!(*c, (1.0 - e / 2.0).acos() / PI, epsilon = 1e-11);
        }
        let r = free_ids_check(&s, 64, &[4.0 + 1e-9, 5.0], &QuadratureOptions::default()).unwrap();
        assert_eq!(r.max_deviation, 0.0);
    }

    #[test]
    fn point_mass_shifts_the_free_curve() {
        let sec = lap_section(20);
        let energies: Vec<f64> = (0..30).map(|k| -0.2 + 0.17 * k as f64).collect();
        let v = 0.75;
        let shifted: Vec<f64> = energies.iter().map(|e| e - v).collect();
        let free = counting_curve(&sec, None, &shifted).unwrap();
        let c = mc_ids(&sec, &SingleSiteDist::PointMass { value: v }, &energies, 3, 1).unwrap();
        for j in 0..energies.len() {
            assert_eq!(c.mean[j], free[j]);
            assert_eq!(c.stderr[j], 0.0);
        }
    }

    #[test]
    fn single_zero_sample_is_free_counting() {
        let sec = lap_section(10);
        let energies = [0.1, 1.0, 2.0, 3.9];
        let c = mc_ids(&sec, &SingleSiteDist::PointMass { value: 0.0 }, &energies, 1, 0).unwrap();
        assert_eq!(c.mean, counting_curve(&sec, None, &energies).unwrap());
        assert_eq!(c.stderr, vec![0.0; 4]);
        assert_eq!(c.n_samples, 1);
    }

    #[test]
    fn mc_ids_matches_sturm_oracle() {
        // f = 2 - 2cos on [-50, 50] with Uniform(0, 1) disorder
        let l = 50;
        let sec = assemble_simple(
            &Symbol::fractional_laplacian(1.0).unwrap().fourier_coefficients(2 * l, &QuadratureOptions::default()).unwrap(),
            Interval::centered(l),
        );
        let dist = SingleSiteDist::Uniform { hi: 1.0 };
        let energies: Vec<f64> = (0..11).map(|k| 0.05 + 0.5 * k as f64).collect();
        let n = 500;
        let c = mc_ids(&sec, &dist, &energies, n, 2024).unwrap();
        let mut oracle = vec![0.0; energies.len()];
        for k in 0..n as u64 {
            let v = sample_potential(&dist, Interval::centered(l), 2024, k);
            let diag: Vec<f64> = v.values.iter().map(|x| 2.0 + x).collect();
            for (j, &e) in energies.iter().enumerate() {
                oracle[j] += sturm_count(&diag, -1.0, e) as f64 / 101.0;
            }
        }
        for j in 0..energies.len() {
            assert_abs_diff_eq!(c.mean[j], oracle[j] / n as f64, epsilon = 1e-12);
        }
        // monotone, in range
        assert!(c.mean.windows(2).all(|w| w[0] <= w[1]));
        assert!(c.mean.iter().all(|&m| (0.0..=1.0).contains(&m)));
        assert!(c.stderr.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn stderr_halves_with_four_times_the_samples() {
        let sec = lap_section(15);
        let dist = SingleSiteDist::Uniform { hi: 1.0 };
        let e = [0.8];
        let a = mc_ids(&sec, &dist, &e, 100, 5).unwrap();
        let b = mc_ids(&sec, &dist, &e, 400, 5).unwrap();
        let ratio = a.stderr[0] / b.stderr[0];
        assert!((ratio - 2.0).abs() < 0.6, "{ratio}");
    }

    #[test]
    fn sandwich_brackets_free_curve() {
        let spec = IntegerSymbolSpec::laplacian_power(1, 1.0, 1.0).unwrap();
        let energies: Vec<f64> = (0..40).map(|k| 0.1 * k as f64).collect();
        let (lo, up) = sandwich_curves(&spec, &SingleSiteDist::PointMass { value: 0.0 }, 12, &energies, 1, 0).unwrap();
        let free = counting_curve(&lap_section(12), None, &energies).unwrap();
        for j in 0..energies.len() {
            assert!(lo.mean[j] <= free[j] && free[j] <= up.mean[j]);
        }
        let (lo, up) = sandwich_curves(&spec, &SingleSiteDist::Uniform { hi: 1.0 }, 12, &[0.2, 1.0, 7.0], 20, 3).unwrap();
        assert_eq!(dominance_violations(&lo, &up), 0);
        assert_eq!(lo.mean[2], 1.0);
        assert_eq!(up.mean[2], 1.0);
    }

    #[test]
    fn shift_check_examples() {
        let v: Vec<f64> = (0..41).map(|i| ((i * 37) % 11) as f64 / 11.0).collect();
        let s = Symbol::single_well(1.0, 1.3, 1.0).unwrap();
        let d = shift_check(&s, 1.3, 20, &v, &QuadratureOptions::default()).unwrap();
        assert!(d < 1e-10);
        assert_eq!(shift_check(&s, 0.0, 20, &v, &QuadratureOptions::default()).unwrap(), 0.0);

        // the upper envelope of the three-well example and its centred copy
        let f = Symbol::cosine_power_product(
            0.5,
            vec![
                CosineFactor { location: 0.0, exponent: 0.3 },
                CosineFactor { location: 2.5, exponent: 0.6 },
                CosineFactor { location: -2.0, exponent: 0.7 },
            ],
        )
        .unwrap();
        let env = envelope_bounds(&f, &EnvelopeOptions::default()).unwrap();
        let f2 = env.upper_symbol().unwrap();
        let quad = QuadratureOptions { tol: 1e-12, max_log2: 23 };
        let d = shift_check(&f2, env.locations[env.i0], 20, &v, &quad).unwrap();
        assert!(d < 1e-10, "{d}");
    }

    #[test]
    fn geometric_grid_endpoints() {
        let g = geometric_grid(0.01f64, 1.0, 5);
        assert_abs_diff_eq!(g[0], 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(g[4], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g[2], 0.1, epsilon = 1e-14);
    }

    #[test]
    fn doubling_diagnostic_runs() {
        let spec = IntegerSymbolSpec::laplacian_power(1, 1.0, 1.0).unwrap();
        let (_, _, d) = doubling_diagnostic(
            |i| Ok(assemble_g(&spec, i, Boundary::Simple)?),
            &SingleSiteDist::Uniform { hi: 1.0 },
            10,
            &[0.5, 1.5, 2.5],
            10,
            1,
        )
        .unwrap();
        assert!(d.max_change < 0.2);
    }
}
