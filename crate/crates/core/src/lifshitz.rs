//! Lifshitz-tail diagnostics: double-log fits, Temple's inequality, the
//! probability probes behind the upper and lower bounds, and the bump vector.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::{sample_potential, sample_tilted, truncation_threshold, DisorderError, SingleSiteDist};
use crate::fit::{fit_line, mean_and_stderr, wilson_interval, LineFit};
use crate::groundstate::{basis_for_spec, min_form_over_g, GroundError};
use crate::ids::{counts_from_values, IdsCurve};
use crate::linalg::{dot, Mat};
use crate::operator::{
    assemble_g, eigensolve_capped, hermitian_spectrum, powered_section, Boundary, FiniteSection, IntegerSymbolSpec, Interval,
    OperatorError, DEFAULT_DIMENSION_CAP,
};
use crate::quadrature::{gauss_legendre, integrate};
use crate::scalar::{cis, Elem, Real};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum LifshitzError {
    #[error("double log undefined at E = {energy}: value {value}")]
    WindowInvalid { energy: f64, value: f64 },
    #[error("fit window holds {0} points, at least 2 are needed")]
    WindowTooSmall(usize),
    #[error("the gap constant C_0 is required")]
    GapConstantMissing,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("bump on [-{l}, {l}] reaches the boundary layer of width {n}")]
    SupportTooWide { l: usize, n: usize },
    #[error("distribution has no known small-ball exponent")]
    UnsupportedDistribution,
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Ground(#[from] GroundError),
    #[error(transparent)]
    Disorder(#[from] DisorderError),
}

/// Line through `(ln E, ln|ln N(E)|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFit<T> {
    pub e_min: T,
    pub e_max: T,
    pub slope: T,
    pub intercept: T,
    pub residual: T,
    pub points: usize,
    /// Expected slope `-1/b`, when known.
    pub target: Option<T>,
}

impl<T: Real> TailFit<T> {
    fn from_line(fit: LineFit<T>, e_min: T, e_max: T, target: Option<T>) -> Self {
        Self { e_min, e_max, slope: fit.slope, intercept: fit.intercept, residual: fit.residual, points: fit.points, target }
    }
}

/// Fits `ln|ln N(E)|` against `ln E`; every value must lie strictly in `(0, 1)`.
pub fn double_log_fit<T: Real>(points: &[(T, T)], target: Option<T>) -> Result<TailFit<T>, LifshitzError> {
    let mut logs = Vec::with_capacity(points.len());
    for &(e, n) in points {
        if !(n > T::zero() && n < T::one()) {
            return Err(LifshitzError::WindowInvalid { energy: e.to_f64_lossy(), value: n.to_f64_lossy() });
        }
        logs.push((e, n.ln()));
    }
    double_log_fit_ln(&logs, target)
}

/// Same fit from `(E, ln N(E))`, for closed forms whose values underflow.
pub fn double_log_fit_ln<T: Real>(points: &[(T, T)], target: Option<T>) -> Result<TailFit<T>, LifshitzError> {
    if points.len() < 2 {
        return Err(LifshitzError::WindowTooSmall(points.len()));
    }
    let mut xy = Vec::with_capacity(points.len());
    for &(e, ln_n) in points {
        if !(e > T::zero() && ln_n < T::zero() && ln_n.is_finite()) {
            return Err(LifshitzError::WindowInvalid { energy: e.to_f64_lossy(), value: ln_n.exp().to_f64_lossy() });
        }
        xy.push((e.ln(), (-ln_n).ln()));
    }
    let fit = fit_line(&xy).ok_or(LifshitzError::WindowTooSmall(points.len()))?;
    let (e_min, e_max) = bounds(points);
    Ok(TailFit::from_line(fit, e_min, e_max, target))
}

/// Double-log fit of a curve's means restricted to `[e_min, e_max]`.
pub fn double_log_fit_curve<T: Real>(curve: &IdsCurve<T>, window: (T, T), target: Option<T>) -> Result<TailFit<T>, LifshitzError> {
    let pts: Vec<(T, T)> =
        curve.energies.iter().zip(&curve.mean).filter(|(e, _)| **e >= window.0 && **e <= window.1).map(|(&e, &m)| (e, m)).collect();
    double_log_fit(&pts, target)
}

/// Fits `ln N(E)` against `ln E` (the free power law near the band bottom).
pub fn log_log_fit<T: Real>(points: &[(T, T)], target: Option<T>) -> Result<TailFit<T>, LifshitzError> {
    if points.len() < 2 {
        return Err(LifshitzError::WindowTooSmall(points.len()));
    }
    let mut xy = Vec::with_capacity(points.len());
    for &(e, n) in points {
        if !(e > T::zero() && n > T::zero()) {
            return Err(LifshitzError::WindowInvalid { energy: e.to_f64_lossy(), value: n.to_f64_lossy() });
        }
        xy.push((e.ln(), n.ln()));
    }
    let fit = fit_line(&xy).ok_or(LifshitzError::WindowTooSmall(points.len()))?;
    let (e_min, e_max) = bounds(points);
    Ok(TailFit::from_line(fit, e_min, e_max, target))
}

fn bounds<T: Real>(points: &[(T, T)]) -> (T, T) {
    points.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &(e, _)| (lo.min(e), hi.max(e)))
}

/// Roundoff allowance for comparisons against eigenvalues of a matrix of norm `norm`.
fn slack<T: Real>(norm: T, dim: usize) -> T {
    T::epsilon() * T::lit(64.0) * norm.max(T::one()) * T::from_usize_lossy(dim).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TempleSample<T> {
    pub index: u64,
    /// `E_0` of the powered Neumann section plus the truncated potential.
    pub e0: T,
    pub min_form: T,
    /// `E_0 + 6 c~^2 C_0 / L^b`.
    pub lhs: T,
    /// `(1 - 2c~)^2 min_form`.
    pub rhs: T,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TempleReport<T> {
    pub c_tilde: T,
    pub c0: T,
    pub l: usize,
    pub b: T,
    /// Truncation level `c~ C_0 / L^b`.
    pub threshold: T,
    pub samples: Vec<TempleSample<T>>,
    pub pass_rate: T,
}

impl<T: Real> TempleReport<T> {
    pub fn all_pass(&self) -> bool {
        self.samples.iter().all(|s| s.pass)
    }
}

/// Checks the generalized Temple inequality sample by sample on `[-L, L]`.
#[allow(clippy::too_many_arguments)]
pub fn temple_verify<T: Real>(
    spec: &IntegerSymbolSpec<T>,
    dist: &SingleSiteDist<T>,
    l: usize,
    c_tilde: T,
    c0: Option<T>,
    n_samples: usize,
    seed: u64,
) -> Result<TempleReport<T>, LifshitzError> {
    let c0 = c0.ok_or(LifshitzError::GapConstantMissing)?;
    if !(c_tilde > T::zero() && c_tilde < T::lit(0.5)) {
        return Err(LifshitzError::InvalidParameter(format!("c~ must lie in (0, 1/2), got {c_tilde}")));
    }
    if !(c0 > T::zero()) {
        return Err(LifshitzError::InvalidParameter(format!("C_0 must be positive, got {c0}")));
    }
    dist.validate()?;
    let interval = Interval::centered(l);
    let sec = powered_section(spec, interval, Boundary::NeumannMod)?;
    let basis = basis_for_spec(spec, l)?;
    let b = spec.b();
    let threshold = truncation_threshold(c_tilde, c0, l, b);
    let gap_term = T::lit(6.0) * c_tilde * c_tilde * c0 / T::from_usize_lossy(l).powf(b);
    let factor = (T::one() - c_tilde - c_tilde).powi(2);
    let cap = interval.len().max(DEFAULT_DIMENSION_CAP);
    let samples: Vec<TempleSample<T>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let v = sample_potential(dist, interval, seed, k).truncated_at(threshold);
            let spectrum = eigensolve_capped(&sec.with_diagonal(&v.values), false, cap)?;
            let e0 = spectrum.ground_energy();
            let min_form = min_form_over_g(&basis, &v.values)?.value;
            let lhs = e0 + gap_term;
            let rhs = factor * min_form;
            let pass = lhs + slack(spectrum.norm(), interval.len()) >= rhs;
            Ok(TempleSample { index: k, e0, min_form, lhs, rhs, pass })
        })
        .collect::<Result<_, LifshitzError>>()?;
    let passed = samples.iter().filter(|s| s.pass).count();
    let pass_rate = T::from_usize_lossy(passed) / T::from_usize_lossy(samples.len().max(1));
    Ok(TempleReport { c_tilde, c0, l, b, threshold, samples, pass_rate })
}

/// How to pick the exponential tilt of an importance-sampled probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Tilt<T> {
    Fixed { theta: T },
    /// `theta = factor / P_0([0, E))`, floored at 1.
    SmallBall { factor: T },
}

impl<T: Real> Tilt<T> {
    fn theta(&self, dist: &SingleSiteDist<T>, e: T) -> T {
        match *self {
            Tilt::Fixed { theta } => theta,
            Tilt::SmallBall { factor } => {
                let p = dist.small_ball(e);
                if p > T::zero() {
                    (factor / p).max(T::one())
                } else {
                    T::one()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions<T> {
    /// Largest section dimension; energies needing more are skipped.
    pub cap: usize,
    /// Normal quantile of the Wilson interval.
    pub z: T,
    pub tilt: Option<Tilt<T>>,
}

impl<T: Real> Default for ProbeOptions<T> {
    fn default() -> Self {
        Self { cap: DEFAULT_DIMENSION_CAP, z: T::lit(1.96), tilt: None }
    }
}

/// Empirical probability at one energy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbePoint<T> {
    pub energy: T,
    pub l: usize,
    pub n_samples: usize,
    /// Samples with `E_0 < E`.
    pub hits: usize,
    /// Plain frequency, or the importance-sampling estimate when tilted.
    pub probability: T,
    /// Wilson interval (plain) or `+- z` standard errors (tilted).
    pub interval: (T, T),
    pub stderr: T,
    pub theta: Option<T>,
    /// Lower probe: samples with `certificate < E`.
    pub certificate_hits: Option<usize>,
    pub certificate_probability: Option<T>,
    /// Lower probe: samples where the certificate fell below `E_0`.
    pub dominance_failures: Option<usize>,
    /// Lower probe: `C_3`.
    pub c3: Option<T>,
    /// Reason the energy was skipped.
    pub skipped: Option<String>,
}

impl<T: Real> ProbePoint<T> {
    fn skipped(energy: T, l: usize, reason: String) -> Self {
        Self {
            energy,
            l,
            n_samples: 0,
            hits: 0,
            probability: T::nan(),
            interval: (T::nan(), T::nan()),
            stderr: T::nan(),
            theta: None,
            certificate_hits: None,
            certificate_probability: None,
            dominance_failures: None,
            c3: None,
            skipped: Some(reason),
        }
    }

    fn plain(energy: T, l: usize, n: usize, hits: usize, z: T) -> Self {
        let p = T::from_usize_lossy(hits) / T::from_usize_lossy(n);
        let (_, se) = mean_and_stderr((0..n).map(|k| if k < hits { T::one() } else { T::zero() }));
        Self {
            energy,
            l,
            n_samples: n,
            hits,
            probability: p,
            interval: wilson_interval(hits, n, z),
            stderr: se,
            theta: None,
            certificate_hits: None,
            certificate_probability: None,
            dominance_failures: None,
            c3: None,
            skipped: None,
        }
    }
}

/// `L = ceil(gamma E^{-1/b})`, at least `min_l`.
pub fn probe_length<T: Real>(e: T, gamma: T, b: T, min_l: usize) -> usize {
    let l = (gamma * e.powf(-T::one() / b)).ceil().to_usize().unwrap_or(usize::MAX);
    l.max(min_l)
}

fn validate_probe<T: Real>(energies: &[T], gamma: T, n_samples: usize) -> Result<(), LifshitzError> {
    if !(gamma > T::zero()) {
        return Err(LifshitzError::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if energies.iter().any(|e| !(*e > T::zero() && e.is_finite())) {
        return Err(LifshitzError::InvalidParameter("probe energies must be positive".into()));
    }
    if n_samples == 0 {
        return Err(LifshitzError::InvalidParameter("at least one sample is required".into()));
    }
    Ok(())
}

/// Ground energies of `sec + V_k` for the potentials keyed by `(seed, k)`,
/// with log likelihood ratios when tilted.
fn ground_energies<T: Real>(
    sec: &FiniteSection<T>,
    dist: &SingleSiteDist<T>,
    n_samples: usize,
    seed: u64,
    theta: Option<T>,
) -> Result<Vec<(T, T, T)>, LifshitzError> {
    let cap = usize::MAX;
    (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let (v, lw) = match theta {
                Some(t) => {
                    let tp = sample_tilted(dist, sec.interval, seed, k, t);
                    (tp.potential, tp.log_weight)
                }
                None => (sample_potential(dist, sec.interval, seed, k), T::zero()),
            };
            let e0 = eigensolve_capped(&sec.with_diagonal(&v.values), false, cap)?.ground_energy();
            Ok((e0, lw, v.max()))
        })
        .collect()
}

/// Estimates `P(E_0(Neumann powered + V) < E)` with `L = ceil(gamma E^{-1/b})`.
pub fn upper_probe<T: Real>(
    spec: &IntegerSymbolSpec<T>,
    dist: &SingleSiteDist<T>,
    energies: &[T],
    gamma: T,
    n_samples: usize,
    seed: u64,
    opts: &ProbeOptions<T>,
) -> Result<Vec<ProbePoint<T>>, LifshitzError> {
    validate_probe(energies, gamma, n_samples)?;
    dist.validate()?;
    let min_l = 2 * spec.n() + 1;
    let mut out = Vec::with_capacity(energies.len());
    for &e in energies {
        let l = probe_length(e, gamma, spec.b(), min_l);
        if l > opts.cap || 2 * l + 1 > opts.cap {
            out.push(ProbePoint::skipped(e, l, OperatorError::DimensionCap { dim: 2 * l.min(usize::MAX / 4) + 1, cap: opts.cap }.to_string()));
            continue;
        }
        let sec = powered_section(spec, Interval::centered(l), Boundary::NeumannMod)?;
        let theta = opts.tilt.map(|t| t.theta(dist, e));
        let samples = ground_energies(&sec, dist, n_samples, seed, theta)?;
        let hits = samples.iter().filter(|s| s.0 < e).count();
        let point = match theta {
            None => ProbePoint::plain(e, l, n_samples, hits, opts.z),
            Some(t) => {
                let weights = samples.iter().map(|s| if s.0 < e { s.1.exp() } else { T::zero() });
                let (p, se) = mean_and_stderr(weights);
                ProbePoint {
                    probability: p,
                    interval: ((p - opts.z * se).max(T::zero()), (p + opts.z * se).min(T::one())),
                    stderr: se,
                    theta: Some(t),
                    ..ProbePoint::plain(e, l, n_samples, hits, opts.z)
                }
            }
        };
        out.push(point);
    }
    Ok(out)
}

/// Smooth step `S(t)` from 0 at `t <= -1` to 1 at `t >= 1`, built from
/// `h(t) = exp(-1/(1 - t^2))`.
#[derive(Debug, Clone)]
pub struct Bump<T> {
    rule: Vec<(T, T)>,
    panels: usize,
    z: T,
    /// Coefficients (ascending powers of `t`) of the polynomials `P_k` with
    /// `h^{(k)} = P_k h / (1 - t^2)^{2k}`.
    polys: Vec<Vec<T>>,
}

impl<T: Real> Bump<T> {
    pub fn new(max_derivative: usize) -> Self {
        let rule = gauss_legendre(16);
        let panels = 64;
        let h = |t: T| smooth_h(t);
        let z = integrate(h, -T::one(), T::one(), panels, &rule);
        let mut polys = vec![vec![T::one()]];
        for k in 0..max_derivative {
            let p = &polys[k];
            let kt = T::from_usize_lossy(k);
            // P_{k+1} = P_k' (1 - t^2)^2 + 4k t P_k (1 - t^2) - 2t P_k
            let dp = poly_derivative(p);
            let q = vec![T::one(), T::zero(), -T::one()];
            let q2 = poly_mul(&q, &q);
            let mut next = poly_mul(&dp, &q2);
            next = poly_add(&next, &poly_scale(&poly_mul(&poly_mul(&[T::zero(), T::one()], p), &q), T::lit(4.0) * kt));
            next = poly_add(&next, &poly_scale(&poly_mul(&[T::zero(), T::one()], p), -T::lit(2.0)));
            polys.push(next);
        }
        Self { rule, panels, z, polys }
    }

    /// `S(t)`.
    pub fn step(&self, t: T) -> T {
        if t <= -T::one() {
            return T::zero();
        }
        if t >= T::one() {
            return T::one();
        }
        integrate(smooth_h, -T::one(), t, self.panels, &self.rule) / self.z
    }

    /// `S^{(k)}(t)` for `k >= 1`.
    pub fn step_derivative(&self, k: usize, t: T) -> T {
        assert!(k >= 1 && k <= self.polys.len());
        if t <= -T::one() || t >= T::one() {
            return T::zero();
        }
        let q = T::one() - t * t;
        poly_eval(&self.polys[k - 1], t) * smooth_h(t) / q.powi(2 * (k as i32 - 1)) / self.z
    }

    /// `psi_1(x) = S(5 - 8|x|)`: one on `|x| <= 1/2`, zero on `|x| >= 3/4`.
    pub fn psi(&self, x: T) -> T {
        self.step(T::lit(5.0) - T::lit(8.0) * x.abs())
    }

    /// `psi_1^{(k)}(x)`.
    pub fn psi_derivative(&self, k: usize, x: T) -> T {
        if k == 0 {
            return self.psi(x);
        }
        let eight = T::lit(8.0);
        if x >= T::zero() {
            (-eight).powi(k as i32) * self.step_derivative(k, T::lit(5.0) - eight * x)
        } else {
            eight.powi(k as i32) * self.step_derivative(k, T::lit(5.0) + eight * x)
        }
    }
}

fn smooth_h<T: Real>(t: T) -> T {
    if t <= -T::one() || t >= T::one() {
        T::zero()
    } else {
        (-T::one() / (T::one() - t * t)).exp()
    }
}

fn poly_eval<T: Real>(p: &[T], t: T) -> T {
    p.iter().rev().fold(T::zero(), |acc, &c| acc * t + c)
}

fn poly_derivative<T: Real>(p: &[T]) -> Vec<T> {
    if p.len() <= 1 {
        return vec![T::zero()];
    }
    p.iter().enumerate().skip(1).map(|(i, &c)| c * T::from_usize_lossy(i)).collect()
}

fn poly_mul<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); a.len().max(b.len())];
    for (i, &x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, &y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

fn poly_scale<T: Real>(a: &[T], s: T) -> Vec<T> {
    a.iter().map(|&x| x * s).collect()
}

/// Bump vector on `[-L, L]` and its energy under the Dirichlet section of
/// `(2 - 2cos)^N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BumpEnergy<T> {
    pub n: usize,
    pub l: usize,
    pub psi: Vec<T>,
    /// `<psi_L, A_D psi_L>`.
    pub numerator: T,
    pub norm_sq: T,
    /// `max_m |(T^N psi_L)(m) - (-1)^N I_m|` with `I_m` the iterated integral.
    pub formula_diff_deviation: T,
}

/// Options for the iterated-integral comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpOptions {
    /// Gauss-Legendre nodes per integration level.
    pub nodes: usize,
}

impl Default for BumpOptions {
    fn default() -> Self {
        Self { nodes: 1 }
    }
}

/// Samples `psi_1(m / L)` on `[-L, L]`.
pub fn bump_vector<T: Real>(bump: &Bump<T>, l: usize) -> Vec<T> {
    let lt = T::from_usize_lossy(l);
    (-(l as i64)..=l as i64).map(|m| bump.psi(T::lit(m as f64) / lt)).collect()
}

fn check_support<T: Real>(psi: &[T], l: usize, n: usize) -> Result<(), LifshitzError> {
    let len = psi.len();
    if 2 * n >= len || psi[..n].iter().chain(&psi[len - n..]).any(|&v| v != T::zero()) {
        return Err(LifshitzError::SupportTooWide { l, n });
    }
    Ok(())
}

pub fn bump_energy<T: Real>(n: usize, l: usize, opts: &BumpOptions) -> Result<BumpEnergy<T>, LifshitzError> {
    if n == 0 || l == 0 {
        return Err(LifshitzError::InvalidParameter("N and L must be positive".into()));
    }
    let bump = Bump::<T>::new(n);
    let psi = bump_vector(&bump, l);
    check_support(&psi, l, n)?;
    let spec = IntegerSymbolSpec::laplacian_power(n as u32, T::one(), T::one())?;
    let interval = Interval::centered(l);
    let sec = assemble_g(&spec, interval, Boundary::DirichletMod)?;
    let pc: Vec<Complex<T>> = psi.iter().map(|&v| Complex::new(v, T::zero())).collect();
    let numerator = dot(&pc, &sec.matrix.matvec(&pc)).re;
    let norm_sq = psi.iter().map(|v| *v * *v).sum();

    // (T psi)(m) = psi(m) - psi(m + 1), applied N times; zero outside [-L, L]
    let len = psi.len();
    let mut diff = psi.clone();
    for _ in 0..n {
        diff = (0..len).map(|i| diff[i] - if i + 1 < len { diff[i + 1] } else { T::zero() }).collect();
    }
    let rule = gauss_legendre::<T>(opts.nodes.max(1));
    let h = T::one() / T::from_usize_lossy(l);
    let sign = if n % 2 == 0 { T::one() } else { -T::one() };
    let mut deviation = T::zero();
    for (i, m) in (-(l as i64)..=l as i64).enumerate() {
        let a = T::lit(m as f64) * h;
        let integral = iterated_integral(&bump, n, n, a, h, &rule);
        deviation = deviation.max((diff[i] - sign * integral).abs());
    }
    Ok(BumpEnergy { n, l, psi, numerator, norm_sq, formula_diff_deviation: deviation })
}

/// `int_a^{a+h} dt_1 int_{t_1}^{t_1+h} dt_2 ... psi^{(N)}(t_N)` with one
/// Gauss-Legendre panel per level.
fn iterated_integral<T: Real>(bump: &Bump<T>, n: usize, level: usize, a: T, h: T, rule: &[(T, T)]) -> T {
    let half = h / T::lit(2.0);
    let mid = a + half;
    rule.iter()
        .map(|&(x, w)| {
            let t = mid + half * x;
            let inner = if level == 1 { bump.psi_derivative(n, t) } else { iterated_integral(bump, n, level - 1, t, h, rule) };
            w * half * inner
        })
        .sum()
}

/// Normalized bump on `[-L, L]`, phase-modulated to the minimum of a single-well spec.
pub fn normalized_bump<T: Real>(bump: &Bump<T>, spec: &IntegerSymbolSpec<T>, l: usize) -> Result<Vec<Complex<T>>, LifshitzError> {
    let psi = bump_vector(bump, l);
    check_support(&psi, l, spec.n())?;
    let nrm = psi.iter().map(|v| *v * *v).sum::<T>().sqrt();
    let e = spec.locations[0];
    Ok((-(l as i64)..=l as i64).zip(&psi).map(|(m, &v)| cis(-e * T::lit(m as f64)).scale(v / nrm)).collect())
}

/// Estimates `P(E_0(Dirichlet powered + V) < E)` and checks the certificate
/// `C_3 / L^b + max V >= E_0` on every sample. `C_3` is the largest
/// `L^b <phi_L, scale (T^D)^beta phi_L>` over the probe lengths.
pub fn lower_probe<T: Real>(
    spec: &IntegerSymbolSpec<T>,
    dist: &SingleSiteDist<T>,
    energies: &[T],
    gamma: T,
    n_samples: usize,
    seed: u64,
    opts: &ProbeOptions<T>,
) -> Result<Vec<ProbePoint<T>>, LifshitzError> {
    validate_probe(energies, gamma, n_samples)?;
    dist.validate()?;
    if spec.m() != 1 {
        return Err(LifshitzError::InvalidParameter("the lower probe needs a single minimum".into()));
    }
    if dist.small_ball_exponent().is_none() {
        return Err(LifshitzError::UnsupportedDistribution);
    }
    let b = spec.b();
    let min_l = 2 * spec.n() + 1;
    let bump = Bump::<T>::new(1);
    let lengths: Vec<usize> = energies.iter().map(|&e| probe_length(e, gamma, b, min_l)).collect();
    // powered sections and bump energies per distinct length within the cap
    let mut cache: Vec<(usize, FiniteSection<T>, T)> = Vec::new();
    for &l in &lengths {
        if 2 * l + 1 > opts.cap || cache.iter().any(|c| c.0 == l) {
            continue;
        }
        let sec = powered_section(spec, Interval::centered(l), Boundary::DirichletMod)?;
        let phi = normalized_bump(&bump, spec, l)?;
        let rayleigh = dot(&phi, &sec.matrix.matvec(&phi)).re;
        cache.push((l, sec, rayleigh * T::from_usize_lossy(l).powf(b)));
    }
    let c3 = cache.iter().map(|c| c.2).fold(T::zero(), T::max);
    let mut out = Vec::with_capacity(energies.len());
    for (&e, &l) in energies.iter().zip(&lengths) {
        let Some((_, sec, _)) = cache.iter().find(|c| c.0 == l) else {
            out.push(ProbePoint::skipped(e, l, OperatorError::DimensionCap { dim: 2 * l + 1, cap: opts.cap }.to_string()));
            continue;
        };
        let samples = ground_energies(sec, dist, n_samples, seed, None)?;
        let base = c3 / T::from_usize_lossy(l).powf(b);
        let tol = slack(sec.matrix.max_abs() * T::from_usize_lossy(sec.dim()), sec.dim());
        let hits = samples.iter().filter(|s| s.0 < e).count();
        let cert_hits = samples.iter().filter(|s| base + s.2 < e).count();
        let failures = samples.iter().filter(|s| base + s.2 + tol < s.0).count();
        out.push(ProbePoint {
            certificate_hits: Some(cert_hits),
            certificate_probability: Some(T::from_usize_lossy(cert_hits) / T::from_usize_lossy(n_samples)),
            dominance_failures: Some(failures),
            c3: Some(c3),
            ..ProbePoint::plain(e, l, n_samples, hits, opts.z)
        });
    }
    Ok(out)
}

/// Per-sample check of
/// `count(D + V)/|Lambda| <= 1{E_0(N + V) < E} <= 1{E_0(N + V~) < E}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainReport {
    pub samples: usize,
    pub energies: usize,
    pub violations: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn upper_chain_check<T: Real>(
    spec: &IntegerSymbolSpec<T>,
    dist: &SingleSiteDist<T>,
    l: usize,
    energies: &[T],
    c_tilde: T,
    c0: T,
    n_samples: usize,
    seed: u64,
) -> Result<ChainReport, LifshitzError> {
    dist.validate()?;
    let interval = Interval::centered(l);
    let d = powered_section(spec, interval, Boundary::DirichletMod)?;
    let n = powered_section(spec, interval, Boundary::NeumannMod)?;
    let threshold = truncation_threshold(c_tilde, c0, l, spec.b());
    let cap = usize::MAX;
    let violations: Vec<usize> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let v = sample_potential(dist, interval, seed, k);
            let vt = v.truncated_at(threshold);
            let counts = counts_from_values(&eigensolve_capped(&d.with_diagonal(&v.values), false, cap)?.values, energies);
            let e0 = eigensolve_capped(&n.with_diagonal(&v.values), false, cap)?.ground_energy();
            let e0t = eigensolve_capped(&n.with_diagonal(&vt.values), false, cap)?.ground_energy();
            let ind = |x: T, e: T| if x < e { T::one() } else { T::zero() };
            Ok(energies.iter().zip(&counts).filter(|(&e, &c)| c > ind(e0, e) || ind(e0, e) > ind(e0t, e)).count())
        })
        .collect::<Result<_, LifshitzError>>()?;
    Ok(ChainReport { samples: n_samples, energies: energies.len(), violations: violations.iter().sum() })
}

/// Smallest eigenvalue of a Hermitian matrix, for quick certificates.
pub fn min_eigenvalue<T: Real>(m: &Mat<Complex<T>>) -> Result<T, LifshitzError> {
    Ok(hermitian_spectrum(m, false, usize::MAX)?.values[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundstate::gap_scaling;
    use crate::symbol::{free_ids_closed, Symbol};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn lap(beta: f64) -> IntegerSymbolSpec<f64> {
        IntegerSymbolSpec::laplacian_power(1, beta, 1.0).unwrap()
    }

    #[test]
    fn double_log_fit_exact_forms() {
        let pts: Vec<(f64, f64)> = (0..20).map(|k| 1e-3 * 1.3f64.powi(k)).map(|e| (e, (-e.powf(-0.5)).exp())).collect();
        let f = double_log_fit(&pts, Some(-0.5)).unwrap();
        assert_abs_diff_eq!(f.slope, -0.5, epsilon = 1e-12);

        // exp(-5 E^{-1/1.4}) underflows on this window, so pass ln N
        let pts: Vec<(f64, f64)> = (0..30)
            .map(|k| 1e-4 * 100f64.powf(k as f64 / 29.0))
            .map(|e| (e, -5.0 * e.powf(-1.0 / 1.4)))
            .collect();
        let f = double_log_fit_ln(&pts, None).unwrap();
        assert!((f.slope + 1.0 / 1.4).abs() < 0.05);
    }

    #[test]
    fn double_log_fit_rejects_degenerate_values() {
        assert!(matches!(double_log_fit(&[(0.1f64, 0.5), (0.2, 1.0)], None), Err(LifshitzError::WindowInvalid { .. })));
        assert!(matches!(double_log_fit(&[(0.1f64, 0.0), (0.2, 0.3)], None), Err(LifshitzError::WindowInvalid { .. })));
        assert!(matches!(double_log_fit(&[(0.1f64, 0.3)], None), Err(LifshitzError::WindowTooSmall(1))));
    }

    #[test]
    fn free_power_law_fit() {
        let s = Symbol::fractional_laplacian(0.7f64).unwrap();
        let pts: Vec<(f64, f64)> = (0..8).map(|k| 1e-4 * 2f64.powi(k)).map(|e| (e, free_ids_closed(&s, e))).collect();
        let f = log_log_fit(&pts, Some(1.0 / 1.4)).unwrap();
        assert!((f.slope - 1.0 / 1.4).abs() < 0.02, "{f:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn double_log_recovers_planted_exponent(s in 0.2f64..2.0, lo in -6.0f64..-3.0) {
            let pts: Vec<(f64, f64)> = (0..10).map(|k| 10f64.powf(lo + 0.2 * k as f64)).map(|e| (e, (-e.powf(-s)).exp())).filter(|p| p.1 > f64::MIN_POSITIVE && p.1 < 1.0).collect();
            prop_assume!(pts.len() >= 2);
            let f = double_log_fit(&pts, None).unwrap();
            prop_assert!((f.slope + s).abs() < 1e-10);
        }
    }

    #[test]
    fn temple_requires_gap_constant() {
        let r = temple_verify(&lap(1.0), &SingleSiteDist::Uniform { hi: 1.0 }, 16, 0.25, None, 2, 0);
        assert_eq!(r.unwrap_err(), LifshitzError::GapConstantMissing);
    }

    #[test]
    fn temple_trivial_and_uniform() {
        let spec = lap(1.0);
        let c0 = gap_scaling(&spec, &[16, 32]).unwrap().c0;
        let r = temple_verify(&spec, &SingleSiteDist::PointMass { value: 0.0 }, 16, 0.25, Some(c0), 1, 0).unwrap();
        assert!(r.all_pass());
        assert!(r.samples[0].e0.abs() < 1e-12);

        // point mass below the threshold: V~ = v, E_0 = v exactly
        let thr = truncation_threshold(0.25, c0, 16, 2.0);
        let r = temple_verify(&spec, &SingleSiteDist::PointMass { value: 0.5 * thr }, 16, 0.25, Some(c0), 1, 0).unwrap();
        assert_abs_diff_eq!(r.samples[0].e0, 0.5 * thr, epsilon = 1e-12);
        assert_abs_diff_eq!(r.samples[0].min_form, 0.5 * thr, epsilon = 1e-12);
        assert!(r.all_pass());

        let r = temple_verify(&spec, &SingleSiteDist::Uniform { hi: 1.0 }, 16, 0.25, Some(c0), 20, 4).unwrap();
        assert!(r.all_pass());
        assert_eq!(r.pass_rate, 1.0);
    }

    #[test]
    fn probe_lengths() {
        assert_eq!(probe_length(0.25f64, 1.0, 2.0, 3), 3);
        assert_eq!(probe_length(0.01f64, 1.0, 2.0, 3), 10);
        assert_eq!(probe_length(0.0001f64, 2.0, 2.0, 3), 200);
    }

    #[test]
    fn upper_probe_trivial_cases() {
        let spec = lap(1.0);
        let opts = ProbeOptions::default();
        let p = upper_probe(&spec, &SingleSiteDist::Uniform { hi: 1.0 }, &[10.0], 1.0, 20, 0, &opts).unwrap();
        assert_eq!(p[0].probability, 1.0);
        // Neumann ground energy with a point mass v is exactly v
        let p = upper_probe(&spec, &SingleSiteDist::PointMass { value: 0.3 }, &[0.2], 1.0, 20, 0, &opts).unwrap();
        assert_eq!(p[0].probability, 0.0);
        let capped = ProbeOptions { cap: 10, ..opts };
        let p = upper_probe(&spec, &SingleSiteDist::Uniform { hi: 1.0 }, &[1e-3], 1.0, 5, 0, &capped).unwrap();
        assert!(p[0].skipped.is_some());
    }

    #[test]
    fn upper_probe_decreases() {
        let spec = lap(1.0);
        let p = upper_probe(&spec, &SingleSiteDist::Uniform { hi: 1.0 }, &[0.4, 0.2, 0.1], 1.0, 400, 7, &ProbeOptions::default()).unwrap();
        assert!(p[0].probability > p[1].probability && p[1].probability > p[2].probability, "{p:?}");
    }

    #[test]
    fn tilted_probe_agrees_with_plain() {
        let spec = lap(1.0);
        let dist = SingleSiteDist::Uniform { hi: 1.0 };
        let plain = upper_probe(&spec, &dist, &[0.3], 1.0, 4000, 1, &ProbeOptions::default()).unwrap();
        let opts = ProbeOptions { tilt: Some(Tilt::SmallBall { factor: 1.0 }), ..ProbeOptions::default() };
        let tilted = upper_probe(&spec, &dist, &[0.3], 1.0, 4000, 2, &opts).unwrap();
        let (a, b) = (&plain[0], &tilted[0]);
        let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!((a.probability - b.probability).abs() < 4.0 * se, "{a:?} {b:?}");
    }

    #[test]
    fn bump_shape() {
        let b = Bump::<f64>::new(2);
        assert_eq!(b.psi(0.0), 1.0);
        assert_eq!(b.psi(0.5), 1.0);
        assert_eq!(b.psi(-0.75), 0.0);
        assert_eq!(b.psi(0.9), 0.0);
        assert!(b.psi(0.6) > 0.0 && b.psi(0.6) < 1.0);
        assert_abs_diff_eq!(b.step(0.0), 0.5, epsilon = 1e-13);
        // derivatives against central differences
        for &x in &[0.55, 0.62, 0.7, -0.6, -0.68] {
            let h = 1e-5;
            let d1 = (b.psi(x + h) - b.psi(x - h)) / (2.0 * h);
            assert!((b.psi_derivative(1, x) - d1).abs() < 1e-6 * (1.0 + d1.abs()), "x = {x}");
            let d2 = (b.psi_derivative(1, x + h) - b.psi_derivative(1, x - h)) / (2.0 * h);
            assert!((b.psi_derivative(2, x) - d2).abs() < 1e-4 * (1.0 + d2.abs()), "x = {x}");
        }
    }

    #[test]
    fn bump_energy_scaling_and_formula() {
        let opts = BumpOptions::default();
        for (n, want) in [(1usize, -1.0f64), (2, -3.0)] {
            let pts: Vec<(f64, f64)> = [64usize, 128, 256]
                .iter()
                .map(|&l| {
                    let r = bump_energy::<f64>(n, l, &opts).unwrap();
                    (l as f64, r.numerator)
                })
                .collect();
            let f = crate::fit::fit_log_log(&pts).unwrap();
            assert!((f.slope - want).abs() < 0.15, "N = {n}: {f:?}");
        }
        let a = bump_energy::<f64>(2, 64, &opts).unwrap().formula_diff_deviation;
        let b = bump_energy::<f64>(2, 128, &opts).unwrap().formula_diff_deviation;
        assert!(b < a / 2.0, "{a} {b}");
        // bump vs squared forward differences
        let r = bump_energy::<f64>(1, 64, &opts).unwrap();
        let tsq: f64 = r.psi.windows(2).map(|w| (w[0] - w[1]).powi(2)).sum();
        assert_abs_diff_eq!(r.numerator, tsq, epsilon = 1e-12);
    }

    #[test]
    fn bump_support_check() {
        assert!(matches!(bump_energy::<f64>(3, 4, &BumpOptions::default()), Err(LifshitzError::SupportTooWide { .. })));
    }

    #[test]
    fn lower_probe_certificates() {
        let spec = lap(1.0);
        let opts = ProbeOptions::default();
        let p = lower_probe(&spec, &SingleSiteDist::PointMass { value: 0.0 }, &[0.4, 0.2], 1.0, 3, 0, &opts).unwrap();
        for q in &p {
            assert_eq!(q.dominance_failures, Some(0));
            let l = q.l as f64;
            if q.energy > q.c3.unwrap() / (l * l) {
                assert_eq!(q.probability, 1.0);
            }
        }
        let p = lower_probe(&spec, &SingleSiteDist::PowerLaw { kappa: 1.0 }, &[0.4, 0.2, 0.1], 1.0, 50, 3, &opts).unwrap();
        assert!(p.iter().all(|q| q.dominance_failures == Some(0)));
        assert!(p.iter().all(|q| q.certificate_probability.unwrap() <= q.probability));
        assert!(matches!(
            lower_probe(&spec, &SingleSiteDist::Bernoulli { p: 1.0, value: 1.0 }, &[0.1], 1.0, 5, 0, &opts),
            Err(LifshitzError::UnsupportedDistribution)
        ));
    }

    #[test]
    fn upper_chain_holds() {
        let spec = lap(1.0);
        let c0 = gap_scaling(&spec, &[8, 16]).unwrap().c0;
        let r = upper_chain_check(&spec, &SingleSiteDist::Uniform { hi: 1.0 }, 8, &[0.05, 0.2, 0.5, 1.0], 0.25, c0, 50, 2).unwrap();
        assert_eq!(r.violations, 0);
    }
}
