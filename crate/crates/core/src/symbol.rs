//! Symbols on the torus and everything computed from them directly:
//! Fourier coefficients, the free integrated density of states, the minima
//! structure and the algebraic envelopes.

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::fit::{fit_line, fit_log_log, LineFit};
use crate::scalar::{reduce_angle, torus_distance, Real};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SymbolError {
    #[error("invalid symbol: {0}")]
    Invalid(String),
    #[error("Fourier coefficients did not converge to {tol:e} (last change {last_change:e} at grid 2^{log2})")]
    NonConvergent { tol: f64, last_change: f64, log2: u32 },
    #[error("envelope sandwich violated at {violations} grid points (worst x = {worst_x})")]
    AssumptionViolated { violations: usize, worst_x: f64 },
    #[error("exponent fit failed at minimum {location}: {reason}")]
    ExponentFitFailed { location: f64, reason: String },
}

/// One factor `(2 - 2cos(x - location))^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineFactor<T> {
    pub location: T,
    pub exponent: T,
}

/// A real, Hölder-continuous function on the torus with minimum zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Symbol<T> {
    /// `scale * prod_i (2 - 2cos(x - E_i))^{alpha_i}`.
    CosinePowerProduct { scale: T, factors: Vec<CosineFactor<T>> },
    /// Uniform samples at `x_j = -pi + 2 pi j / n`, linearly interpolated and
    /// evaluated at `x + offset`.
    Tabulated {
        samples: Vec<T>,
        holder: T,
        #[serde(default)]
        offset: T,
    },
}

impl<T: Real> Symbol<T> {
    pub fn cosine_power_product(scale: T, factors: Vec<CosineFactor<T>>) -> Result<Self, SymbolError> {
        if !(scale > T::zero() && scale.is_finite()) {
            return Err(SymbolError::Invalid(format!("scale must be positive, got {scale}")));
        }
        if factors.is_empty() {
            return Err(SymbolError::Invalid("at least one factor is required".into()));
        }
        let factors: Vec<CosineFactor<T>> = factors
            .into_iter()
            .map(|f| CosineFactor { location: reduce_angle(f.location), exponent: f.exponent })
            .collect();
        for (i, f) in factors.iter().enumerate() {
            if !(f.exponent > T::zero() && f.exponent.is_finite()) {
                return Err(SymbolError::Invalid(format!("exponent must be positive, got {}", f.exponent)));
            }
            for g in &factors[..i] {
                if torus_distance(f.location, g.location) <= T::epsilon() * T::lit(16.0) {
                    return Err(SymbolError::Invalid(format!("repeated minimum location {}", f.location)));
                }
            }
        }
        Ok(Symbol::CosinePowerProduct { scale, factors })
    }

    /// `(2 - 2cos x)^alpha`, the (fractional) discrete Laplacian.
    pub fn fractional_laplacian(alpha: T) -> Result<Self, SymbolError> {
        Self::cosine_power_product(T::one(), vec![CosineFactor { location: T::zero(), exponent: alpha }])
    }

    /// `scale * (2 - 2cos(x - location))^exponent`.
    pub fn single_well(scale: T, location: T, exponent: T) -> Result<Self, SymbolError> {
        Self::cosine_power_product(scale, vec![CosineFactor { location, exponent }])
    }

    /// Builds a tabulated symbol, shifting the samples so that their minimum is zero.
    pub fn tabulated(samples: Vec<T>, holder: T) -> Result<Self, SymbolError> {
        let n = samples.len();
        if n < 4 || !n.is_power_of_two() {
            return Err(SymbolError::Invalid(format!("sample count must be a power of two >= 4, got {n}")));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(SymbolError::Invalid("samples must be finite".into()));
        }
        if !(holder > T::zero() && holder <= T::one()) {
            return Err(SymbolError::Invalid(format!("Hölder exponent must lie in (0, 1], got {holder}")));
        }
        let min = samples.iter().copied().fold(T::infinity(), T::min);
        let samples = samples.into_iter().map(|v| v - min).collect();
        Ok(Symbol::Tabulated { samples, holder, offset: T::zero() })
    }

    /// The symbol `x -> f(x + shift)`.
    pub fn shifted(&self, shift: T) -> Self {
        match self {
            Symbol::CosinePowerProduct { scale, factors } => Symbol::CosinePowerProduct {
                scale: *scale,
                factors: factors
                    .iter()
                    .map(|f| CosineFactor { location: reduce_angle(f.location - shift), exponent: f.exponent })
                    .collect(),
            },
            Symbol::Tabulated { samples, holder, offset } => Symbol::Tabulated {
                samples: samples.clone(),
                holder: *holder,
                offset: reduce_angle(*offset + shift),
            },
        }
    }

    /// Value at a torus point.
    pub fn eval(&self, x: T) -> T {
        match self {
            Symbol::CosinePowerProduct { scale, factors } => {
                let mut v = *scale;
                for f in factors {
                    v *= two_minus_two_cos(x - f.location).powf(f.exponent);
                }
                v
            }
            Symbol::Tabulated { samples, offset, .. } => {
                let n = samples.len();
                let h = (T::PI() + T::PI()) / T::from_usize_lossy(n);
                let pos = (reduce_angle(x + *offset) + T::PI()) / h;
                let i = pos.floor();
                let frac = pos - i;
                let i = i.to_usize().unwrap_or(0) % n;
                samples[i] * (T::one() - frac) + samples[(i + 1) % n] * frac
            }
        }
    }

    /// Declared (tabulated) or intrinsic (cosine power product) Hölder exponent.
    pub fn holder_exponent(&self) -> T {
        match self {
            Symbol::CosinePowerProduct { factors, .. } => factors
                .iter()
                .map(|f| (f.exponent + f.exponent).min(T::one()))
                .fold(T::one(), T::min),
            Symbol::Tabulated { holder, .. } => *holder,
        }
    }

    pub fn max_value_on_grid(&self, log2: u32) -> T {
        grid_points::<T>(1usize << log2).map(|x| self.eval(x)).fold(T::zero(), T::max)
    }

    pub fn fourier_coefficients(
        &self,
        n_max: usize,
        opts: &QuadratureOptions<T>,
    ) -> Result<FourierCoefficients<T>, SymbolError> {
        fourier_coefficients(self, n_max, opts)
    }
}

/// `2 - 2cos(y)` evaluated as `4 sin^2(y/2)` to keep relative accuracy near zero.
#[inline]
pub fn two_minus_two_cos<T: Real>(y: T) -> T {
    let s = (y / T::lit(2.0)).sin();
    T::lit(4.0) * s * s
}

fn grid_points<T: Real>(n: usize) -> impl Iterator<Item = T> {
    let h = (T::PI() + T::PI()) / T::from_usize_lossy(n);
    (0..n).map(move |j| -T::PI() + h * T::from_usize_lossy(j))
}

/// Controls for the trapezoid computation of Fourier coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions<T> {
    /// Convergence tolerance on successive grid doublings (max norm).
    pub tol: T,
    /// Largest grid, as a power of two.
    pub max_log2: u32,
}

impl<T: Real> Default for QuadratureOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-10), max_log2: 22 }
    }
}

/// Fourier coefficients `a_n`, `|n| <= n_max`, of a real symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCoefficients<T> {
    n_max: usize,
    /// `coeffs[n + n_max] = a_n`.
    coeffs: Vec<Complex<T>>,
    /// Tolerance the coefficients were converged to (zero for exact ones).
    pub tol: T,
    /// Quadrature grid size used (zero for exact ones).
    pub grid: usize,
}

impl<T: Real> FourierCoefficients<T> {
    /// Wraps exactly known coefficients `a_0..a_{n_max}`; negative indices
    /// are filled by Hermitian symmetry.
    pub fn from_nonnegative(nonneg: &[Complex<T>]) -> Self {
        assert!(!nonneg.is_empty());
        let n_max = nonneg.len() - 1;
        let mut coeffs = vec![Complex::new(T::zero(), T::zero()); 2 * n_max + 1];
        for (n, &a) in nonneg.iter().enumerate() {
            coeffs[n_max + n] = a;
            coeffs[n_max - n] = a.conj();
        }
        coeffs[n_max].im = T::zero();
        Self { n_max, coeffs, tol: T::zero(), grid: 0 }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `a_n`, or zero outside the stored range.
    pub fn get(&self, n: i64) -> Complex<T> {
        if n.unsigned_abs() as usize > self.n_max {
            Complex::new(T::zero(), T::zero())
        } else {
            self.coeffs[(n + self.n_max as i64) as usize]
        }
    }

    /// Largest `|a_n - conj(a_{-n})|`.
    pub fn hermitian_defect(&self) -> T {
        (0..=self.n_max as i64)
            .map(|n| (self.get(n) - self.get(-n).conj()).norm())
            .fold(T::zero(), T::max)
    }

    /// `(n, re, im)` rows for `n = -n_max..=n_max`.
    pub fn rows(&self) -> Vec<(i64, T, T)> {
        (-(self.n_max as i64)..=self.n_max as i64)
            .map(|n| {
                let a = self.get(n);
                (n, a.re, a.im)
            })
            .collect()
    }

    /// Measured off-diagonal decay.
    pub fn decay_report(&self) -> DecayReport<T> {
        decay_report(self)
    }
}

fn trapezoid_coefficients<T: Real>(s: &Symbol<T>, n_max: usize, log2: u32, planner: &mut FftPlanner<T>) -> Vec<Complex<T>> {
    let k = 1usize << log2;
    let mut buf: Vec<Complex<T>> = grid_points::<T>(k).map(|x| Complex::new(s.eval(x), T::zero())).collect();
    planner.plan_fft_forward(k).process(&mut buf);
    let inv_k = T::one() / T::from_usize_lossy(k);
    // a_n = (-1)^n / K * sum_j f(x_j) e^{-2 pi i n j / K}, x_j = -pi + 2 pi j / K
    (-(n_max as i64)..=n_max as i64)
        .map(|n| {
            let idx = n.rem_euclid(k as i64) as usize;
            let sign = if n.rem_euclid(2) == 0 { T::one() } else { -T::one() };
            buf[idx] * (inv_k * sign)
        })
        .collect()
}

/// Trapezoid rule on `2^k` uniform samples, doubling `k` until successive
/// coefficient vectors agree to `tol` in max norm, then symmetrized exactly.
pub fn fourier_coefficients<T: Real>(
    s: &Symbol<T>,
    n_max: usize,
    opts: &QuadratureOptions<T>,
) -> Result<FourierCoefficients<T>, SymbolError> {
    if n_max == 0 {
        return Err(SymbolError::Invalid("n_max must be at least 1".into()));
    }
    let mut planner = FftPlanner::new();
    let mut log2 = ((4 * (n_max + 1)) as f64).log2().ceil().max(6.0) as u32;
    if let Symbol::Tabulated { samples, .. } = s {
        log2 = log2.max(samples.len().trailing_zeros() + 1);
    }
    if log2 > opts.max_log2 {
        return Err(SymbolError::NonConvergent { tol: opts.tol.to_f64_lossy(), last_change: f64::INFINITY, log2 });
    }
    let mut prev = trapezoid_coefficients(s, n_max, log2, &mut planner);
    loop {
        if log2 >= opts.max_log2 {
            return Err(SymbolError::NonConvergent {
                tol: opts.tol.to_f64_lossy(),
                last_change: f64::NAN,
                log2,
            });
        }
        log2 += 1;
        let next = trapezoid_coefficients(s, n_max, log2, &mut planner);
        let change = prev.iter().zip(&next).map(|(a, b)| (*a - *b).norm()).fold(T::zero(), T::max);
        prev = next;
        if change < opts.tol {
            break;
        }
        if log2 >= opts.max_log2 {
            return Err(SymbolError::NonConvergent {
                tol: opts.tol.to_f64_lossy(),
                last_change: change.to_f64_lossy(),
                log2,
            });
        }
    }
    let half = T::lit(0.5);
    let mut coeffs = prev;
    for n in 0..=n_max {
        let (p, m) = (n_max + n, n_max - n);
        let avg = (coeffs[p] + coeffs[m].conj()) * half;
        coeffs[p] = avg;
        coeffs[m] = avg.conj();
    }
    Ok(FourierCoefficients { n_max, coeffs, tol: opts.tol, grid: 1usize << log2 })
}

/// Measured polynomial decay `|a_n| ~ n^{-(1 + nu)}` of stored coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayReport<T> {
    /// Measured `nu'`; infinite when the tail is below the noise floor.
    pub nu: T,
    /// `sup_{1 <= n <= n_max} |a_n| n^{1 + nu_used}`.
    pub weighted_sup: T,
    /// Exponent actually used in `weighted_sup` (capped at 1 for band-limited symbols).
    pub nu_used: T,
    /// Whether every coefficient in the fitted tail was below the noise floor.
    pub band_limited: bool,
}

fn decay_report<T: Real>(c: &FourierCoefficients<T>) -> DecayReport<T> {
    let n_max = c.n_max();
    let floor = (c.tol * T::lit(100.0)).max(T::epsilon() * T::lit(1e3) * c.get(0).norm().max(T::one()));
    let lo = (n_max / 8).max(1);
    let tail: Vec<(T, T)> = (lo..=n_max)
        .filter_map(|n| {
            let a = c.get(n as i64).norm();
            (a > floor).then(|| (T::from_usize_lossy(n), a))
        })
        .collect();
    let (nu, band_limited) = if tail.len() < (n_max - lo + 1) / 2 || tail.len() < 2 {
        (T::infinity(), true)
    } else {
        match fit_log_log(&tail) {
            Some(f) => (-f.slope - T::one(), false),
            None => (T::infinity(), true),
        }
    };
    let nu_used = if nu.is_finite() { nu } else { T::one() };
    let weighted_sup = (1..=n_max)
        .map(|n| c.get(n as i64).norm() * T::from_usize_lossy(n).powf(T::one() + nu_used))
        .fold(T::zero(), T::max);
    DecayReport { nu, weighted_sup, nu_used, band_limited }
}

/// Sublevel-set measure `(1/2pi) |{k : f(k) <= E}|` with cached grid samples.
#[derive(Debug, Clone)]
pub struct SublevelMeasure<'a, T> {
    symbol: &'a Symbol<T>,
    values: Vec<T>,
    h: T,
}

impl<'a, T: Real> SublevelMeasure<'a, T> {
    pub const DEFAULT_LOG2: u32 = 20;

    pub fn new(symbol: &'a Symbol<T>, log2: u32) -> Self {
        let n = 1usize << log2;
        let values = grid_points::<T>(n).map(|x| symbol.eval(x)).collect();
        Self { symbol, values, h: (T::PI() + T::PI()) / T::from_usize_lossy(n) }
    }

    fn x(&self, j: usize) -> T {
        -T::PI() + self.h * T::from_usize_lossy(j)
    }

    /// Normalized measure of the sublevel set at `energy`.
    pub fn measure(&self, energy: T) -> T {
        let n = self.values.len();
        let mut full = 0usize;
        let mut total = T::zero();
        for j in 0..n {
            let (a, b) = (self.values[j], self.values[(j + 1) % n]);
            let (ina, inb) = (a <= energy, b <= energy);
            if ina && inb {
                full += 1;
            } else if ina != inb {
                let x0 = self.x(j);
                let root = self.bisect(energy, x0, x0 + self.h, ina);
                total += if ina { root - x0 } else { x0 + self.h - root };
            }
        }
        let frac = T::from_usize_lossy(full) / T::from_usize_lossy(n) + total / (T::PI() + T::PI());
        frac.max(T::zero()).min(T::one())
    }

    /// Crossing of `f = energy` in `[lo, hi]`; `left_inside` says `f(lo) <= energy`.
    fn bisect(&self, energy: T, mut lo: T, mut hi: T, left_inside: bool) -> T {
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(8.0));
        while hi - lo > tol {
            let mid = (lo + hi) / T::lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            let inside = self.symbol.eval(mid) <= energy;
            if inside == left_inside {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo + hi) / T::lit(2.0)
    }
}

/// Free integrated density of states `I_f(E)` on the default `2^20` grid.
pub fn free_ids_closed<T: Real>(s: &Symbol<T>, energy: T) -> T {
    SublevelMeasure::new(s, SublevelMeasure::<T>::DEFAULT_LOG2).measure(energy)
}

/// Options for locating minima and fitting their algebraic exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimaOptions<T> {
    /// Search grid size, as a power of two.
    pub grid_log2: u32,
    /// Fit offsets `h = 2^{-k}` for `k` in this inclusive range.
    pub fit_window: (u32, u32),
    /// Maximum RMS residual of the log-log fit.
    pub residual_tol: T,
    /// A refined local minimum counts as global if `f <= zero_tol * max f`.
    pub zero_tol: T,
    /// Allowed mismatch against the exact exponent of a cosine power product.
    pub exponent_tol: T,
}

impl<T: Real> Default for MinimaOptions<T> {
    fn default() -> Self {
        Self {
            grid_log2: 16,
            fit_window: (6, 16),
            residual_tol: T::lit(1e-2),
            zero_tol: T::lit(1e-6),
            exponent_tol: T::lit(1e-3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinimumFit<T> {
    pub location: T,
    /// Fitted `beta_i` in `f(E_i + h) ~ |h|^{beta_i}`.
    pub exponent: T,
    pub residual: T,
    /// `2 alpha_i` for cosine power products.
    pub exact_exponent: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimaReport<T> {
    pub minima: Vec<MinimumFit<T>>,
    /// `max_i beta_i`.
    pub b: T,
    pub holder: T,
}

impl<T: Real> MinimaReport<T> {
    pub fn locations(&self) -> Vec<T> {
        self.minima.iter().map(|m| m.location).collect()
    }
}

fn golden_section<T: Real>(f: impl Fn(T) -> T, mut a: T, mut b: T) -> T {
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a <= T::epsilon() * (T::one() + a.abs().max(b.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

/// Locates the global minima and fits their algebraic exponents.
pub fn minima_report<T: Real>(s: &Symbol<T>, opts: &MinimaOptions<T>) -> Result<MinimaReport<T>, SymbolError> {
    let n = 1usize << opts.grid_log2;
    let h = (T::PI() + T::PI()) / T::from_usize_lossy(n);
    let xs: Vec<T> = grid_points::<T>(n).collect();
    let vals: Vec<T> = xs.iter().map(|&x| s.eval(x)).collect();
    let fmax = vals.iter().copied().fold(T::zero(), T::max);
    let threshold = opts.zero_tol * fmax.max(T::min_positive_value());

    let mut locations: Vec<T> = Vec::new();
    for j in 0..n {
        let (prev, next) = (vals[(j + n - 1) % n], vals[(j + 1) % n]);
        if !(vals[j] <= prev && vals[j] <= next) {
            continue;
        }
        let loc = reduce_angle(golden_section(|x| s.eval(x), xs[j] - h, xs[j] + h));
        let loc = if s.eval(loc) <= vals[j] { loc } else { xs[j] };
        if s.eval(loc) > threshold {
            continue;
        }
        if locations.iter().all(|&l| torus_distance(l, loc) > h * T::lit(2.0)) {
            locations.push(loc);
        }
    }
    locations.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let exact: Vec<(T, T)> = match s {
        Symbol::CosinePowerProduct { factors, .. } => {
            factors.iter().map(|f| (f.location, f.exponent + f.exponent)).collect()
        }
        Symbol::Tabulated { .. } => Vec::new(),
    };

    let mut minima = Vec::with_capacity(locations.len());
    for loc in locations {
        let mut pts = Vec::new();
        for k in opts.fit_window.0..=opts.fit_window.1 {
            let hk = T::lit(2f64.powi(-(k as i32)));
            for side in [hk, -hk] {
                let v = s.eval(loc + side);
                if v > T::zero() {
                    pts.push((hk.ln(), v.ln()));
                }
            }
        }
        let fit: LineFit<T> = fit_line(&pts).ok_or_else(|| SymbolError::ExponentFitFailed {
            location: loc.to_f64_lossy(),
            reason: "not enough positive samples around the minimum".into(),
        })?;
        if fit.residual > opts.residual_tol {
            return Err(SymbolError::ExponentFitFailed {
                location: loc.to_f64_lossy(),
                reason: format!("log-log residual {} exceeds {}", fit.residual, opts.residual_tol),
            });
        }
        let exact_exponent = exact
            .iter()
            .find(|(l, _)| torus_distance(*l, loc) <= h * T::lit(2.0))
            .map(|&(_, e)| e);
        if let Some(e) = exact_exponent {
            if (fit.slope - e).abs() > opts.exponent_tol {
                return Err(SymbolError::ExponentFitFailed {
                    location: loc.to_f64_lossy(),
                    reason: format!("fitted exponent {} disagrees with exact {}", fit.slope, e),
                });
            }
        }
        minima.push(MinimumFit { location: loc, exponent: fit.slope, residual: fit.residual, exact_exponent });
    }
    if minima.is_empty() {
        return Err(SymbolError::ExponentFitFailed { location: f64::NAN, reason: "no minimum found".into() });
    }
    let b = minima.iter().map(|m| m.exponent).fold(T::neg_infinity(), T::max);
    Ok(MinimaReport { minima, b, holder: s.holder_exponent() })
}

/// Constants of the two-sided algebraic envelope
/// `c_low prod_i (2-2cos(x-E_i))^{b/2} <= f(x) <= c_up (2-2cos(x-E_{i0}))^{b/2}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeBounds<T> {
    pub c_low: T,
    pub c_up: T,
    pub b: T,
    pub i0: usize,
    pub locations: Vec<T>,
    pub exponents: Vec<T>,
}

impl<T: Real> EnvelopeBounds<T> {
    pub fn lower(&self, x: T) -> T {
        let half_b = self.b / T::lit(2.0);
        self.locations
            .iter()
            .fold(self.c_low, |acc, &e| acc * two_minus_two_cos(x - e).powf(half_b))
    }

    pub fn upper(&self, x: T) -> T {
        self.c_up * two_minus_two_cos(x - self.locations[self.i0]).powf(self.b / T::lit(2.0))
    }

    /// Lower envelope as a cosine power product symbol.
    pub fn lower_symbol(&self) -> Result<Symbol<T>, SymbolError> {
        let half_b = self.b / T::lit(2.0);
        Symbol::cosine_power_product(
            self.c_low,
            self.locations.iter().map(|&location| CosineFactor { location, exponent: half_b }).collect(),
        )
    }

    /// Upper envelope as a single-well symbol.
    pub fn upper_symbol(&self) -> Result<Symbol<T>, SymbolError> {
        Symbol::single_well(self.c_up, self.locations[self.i0], self.b / T::lit(2.0))
    }

    /// Same envelope with different constants.
    pub fn with_constants(&self, c_low: T, c_up: T) -> Self {
        Self { c_low, c_up, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOptions<T> {
    /// Exclusion radius around each minimum when bounding `g`.
    pub delta: T,
    /// Sandwich evaluation grid, as a power of two.
    pub grid_log2: u32,
    pub minima: MinimaOptions<T>,
}

impl<T: Real> Default for EnvelopeOptions<T> {
    fn default() -> Self {
        Self { delta: T::lit(1e-3), grid_log2: 12, minima: MinimaOptions::default() }
    }
}

/// Pointwise sandwich check on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichCheck<T> {
    pub points: usize,
    pub lower_violations: usize,
    pub upper_violations: usize,
    /// `max lower / f` over points with `f > 0`.
    pub worst_lower_ratio: T,
    pub worst_lower_x: T,
    /// `max f / upper` over points with `upper > 0`.
    pub worst_upper_ratio: T,
}

impl<T: Real> SandwichCheck<T> {
    pub fn holds(&self) -> bool {
        self.lower_violations == 0 && self.upper_violations == 0
    }
}

/// Relative slack for rounding when comparing an envelope against `f`.
fn sandwich_slack<T: Real>() -> T {
    T::epsilon() * T::lit(64.0)
}

pub fn check_sandwich<T: Real>(s: &Symbol<T>, env: &EnvelopeBounds<T>, grid_log2: u32) -> SandwichCheck<T> {
    let n = 1usize << grid_log2;
    let slack = sandwich_slack::<T>();
    let mut out = SandwichCheck {
        points: n,
        lower_violations: 0,
        upper_violations: 0,
        worst_lower_ratio: T::zero(),
        worst_lower_x: T::nan(),
        worst_upper_ratio: T::zero(),
    };
    for x in grid_points::<T>(n) {
        let (f, lo, up) = (s.eval(x), env.lower(x), env.upper(x));
        if lo > f * (T::one() + slack) + T::min_positive_value() {
            out.lower_violations += 1;
        }
        if f > up * (T::one() + slack) + T::min_positive_value() {
            out.upper_violations += 1;
        }
        if f > T::zero() && lo / f > out.worst_lower_ratio {
            out.worst_lower_ratio = lo / f;
            out.worst_lower_x = x;
        }
        if up > T::zero() && f / up > out.worst_upper_ratio {
            out.worst_upper_ratio = f / up;
        }
    }
    out
}

/// `(t, f(t), lower(t), upper(t))` on a uniform grid of `2^log2` points.
pub fn envelope_table<T: Real>(s: &Symbol<T>, env: &EnvelopeBounds<T>, log2: u32) -> Vec<[T; 4]> {
    grid_points::<T>(1usize << log2).map(|t| [t, s.eval(t), env.lower(t), env.upper(t)]).collect()
}

/// Envelope constants following the compactness argument: bound
/// `g = f / prod (2-2cos(x-E_i))^{beta_i/2}` between `c1` and `C1`, then
/// trade the individual exponents for `b = max beta_i`.
pub fn envelope_bounds<T: Real>(s: &Symbol<T>, opts: &EnvelopeOptions<T>) -> Result<EnvelopeBounds<T>, SymbolError> {
    let report = minima_report(s, &opts.minima)?;
    let (locations, exponents): (Vec<T>, Vec<T>) = match s {
        // exact bookkeeping: g is the constant scale
        Symbol::CosinePowerProduct { factors, .. } => {
            factors.iter().map(|f| (f.location, f.exponent + f.exponent)).unzip()
        }
        Symbol::Tabulated { .. } => report.minima.iter().map(|m| (m.location, m.exponent)).unzip(),
    };
    let (c1, big_c1) = match s {
        Symbol::CosinePowerProduct { scale, .. } => (*scale, *scale),
        Symbol::Tabulated { .. } => {
            let n = 1usize << opts.minima.grid_log2;
            let mut lo = T::infinity();
            let mut hi = T::zero();
            for x in grid_points::<T>(n) {
                if locations.iter().any(|&e| torus_distance(x, e) < opts.delta) {
                    continue;
                }
                let denom = locations
                    .iter()
                    .zip(&exponents)
                    .fold(T::one(), |acc, (&e, &beta)| acc * two_minus_two_cos(x - e).powf(beta / T::lit(2.0)));
                let g = s.eval(x) / denom;
                lo = lo.min(g);
                hi = hi.max(g);
            }
            (lo, hi)
        }
    };
    let (i0, b) = exponents
        .iter()
        .copied()
        .enumerate()
        .fold((0, T::neg_infinity()), |acc, (i, beta)| if beta > acc.1 { (i, beta) } else { acc });
    let m = T::from_usize_lossy(exponents.len());
    let sum_beta: T = exponents.iter().copied().sum();
    let four = T::lit(4.0);
    let c_low = c1 * four.powf((sum_beta - m * b) / T::lit(2.0));
    let others: T = exponents.iter().enumerate().filter(|&(i, _)| i != i0).map(|(_, &e)| e).sum();
    let c_up = big_c1 * four.powf(others);
    let env = EnvelopeBounds { c_low, c_up, b, i0, locations, exponents };
    let check = check_sandwich(s, &env, opts.grid_log2);
    if !check.holds() {
        return Err(SymbolError::AssumptionViolated {
            violations: check.lower_violations + check.upper_violations,
            worst_x: check.worst_lower_x.to_f64_lossy(),
        });
    }
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn three_well() -> Symbol<f64> {
        Symbol::cosine_power_product(
            0.5,
            vec![
                CosineFactor { location: 0.0, exponent: 0.3 },
                CosineFactor { location: 2.5, exponent: 0.6 },
                CosineFactor { location: -2.0, exponent: 0.7 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn eval_examples() {
        let lap = Symbol::fractional_laplacian(1.0f64).unwrap();
        assert_abs_diff_eq!(lap.eval(PI), 4.0, epsilon = 1e-15);
        assert_eq!(three_well().eval(0.0), 0.0);
        let half = Symbol::fractional_laplacian(0.5f64).unwrap();
        assert_abs_diff_eq!(half.eval(PI / 2.0), 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn rejects_invalid_symbols() {
        assert!(Symbol::single_well(0.0f64, 0.0, 1.0).is_err());
        assert!(Symbol::single_well(1.0f64, 0.0, -1.0).is_err());
        let dup = vec![
            CosineFactor { location: 1.0f64, exponent: 1.0 },
            CosineFactor { location: 1.0 + 2.0 * PI, exponent: 2.0 },
        ];
        assert!(Symbol::cosine_power_product(1.0, dup).is_err());
        assert!(Symbol::tabulated(vec![0.0f64; 6], 0.5).is_err());
        assert!(Symbol::tabulated(vec![0.0f64; 8], 0.0).is_err());
    }

    #[test]
    fn tabulated_is_shifted_and_interpolated() {
        let samples: Vec<f64> = (0..8).map(|j| 3.0 + (j as f64)).collect();
        let s = Symbol::tabulated(samples, 1.0).unwrap();
        assert_eq!(s.eval(-PI), 0.0);
        let h = 2.0 * PI / 8.0;
        assert_abs_diff_eq!(s.eval(-PI + 0.5 * h), 0.5, epsilon = 1e-12);
        // wraps from the last sample back to the first
        assert_abs_diff_eq!(s.eval(PI - 0.5 * h), 3.5, epsilon = 1e-12);
        let shifted = s.shifted(h);
        assert_abs_diff_eq!(shifted.eval(-PI), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn laplacian_coefficients() {
        let c = Symbol::fractional_laplacian(1.0f64).unwrap().fourier_coefficients(4, &QuadratureOptions::default()).unwrap();
        assert_abs_diff_eq!(c.get(0).re, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.get(1).re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.get(-1).re, -1.0, epsilon = 1e-12);
        for n in 2..=4 {
            assert!(c.get(n).norm() < 1e-12);
        }
        assert_eq!(c.hermitian_defect(), 0.0);
    }

    #[test]
    fn squared_laplacian_coefficients() {
        // (2 - 2cos x)^2 = 6 - 8cos x + 2cos 2x
        let c = Symbol::fractional_laplacian(2.0f64).unwrap().fourier_coefficients(3, &QuadratureOptions::default()).unwrap();
        let expect = [6.0, -4.0, 1.0, 0.0];
        for (n, &e) in expect.iter().enumerate() {
            assert_abs_diff_eq!(c.get(n as i64).re, e, epsilon = 1e-12);
            assert_abs_diff_eq!(c.get(-(n as i64)).re, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn square_root_laplacian_mean() {
        // (1/2pi) int 2|sin(k/2)| dk = 4/pi; a_n = -4 / (pi (4n^2 - 1))
        let c = Symbol::fractional_laplacian(0.5f64)
            .unwrap()
            .fourier_coefficients(8, &QuadratureOptions { tol: 1e-9, max_log2: 22 })
            .unwrap();
        assert_abs_diff_eq!(c.get(0).re, 4.0 / PI, epsilon = 1e-8);
        for n in 1..=8i64 {
            let exact = -4.0 / (PI * (4.0 * (n * n) as f64 - 1.0));
            assert_abs_diff_eq!(c.get(n).re, exact, epsilon = 1e-8);
        }
    }

    #[test]
    fn shifted_symbol_coefficients_pick_up_phase() {
        // 2 - 2cos(x - E): a_1 = -e^{-iE}, a_{-1} = -e^{iE}
        let e = 0.7f64;
        let c = Symbol::single_well(1.0, e, 1.0).unwrap().fourier_coefficients(2, &QuadratureOptions::default()).unwrap();
        assert!((c.get(1) - Complex::new(-(-e).cos(), -(-e).sin())).norm() < 1e-12);
        assert!((c.get(-1) - Complex::new(-e.cos(), -e.sin())).norm() < 1e-12);
    }

    #[test]
    fn rough_symbol_reports_non_convergence() {
        let s = Symbol::fractional_laplacian(0.1f64).unwrap();
        let err = s.fourier_coefficients(4, &QuadratureOptions { tol: 1e-14, max_log2: 12 }).unwrap_err();
        assert!(matches!(err, SymbolError::NonConvergent { .. }));
    }

    #[test]
    fn decay_of_fractional_symbols() {
        let c = Symbol::fractional_laplacian(0.5f64)
            .unwrap()
            .fourier_coefficients(256, &QuadratureOptions { tol: 1e-9, max_log2: 22 })
            .unwrap();
        let d = c.decay_report();
        // a_n ~ n^{-2}
        assert!(!d.band_limited);
        assert!((d.nu - 1.0).abs() < 0.05, "{d:?}");
        let exact = Symbol::fractional_laplacian(2.0f64).unwrap().fourier_coefficients(32, &QuadratureOptions::default()).unwrap();
        assert!(exact.decay_report().band_limited);
    }

    #[test]
    fn free_ids_examples() {
        let lap = Symbol::fractional_laplacian(1.0f64).unwrap();
        let m = SublevelMeasure::new(&lap, 20);
        assert_eq!(m.measure(4.0), 1.0);
        assert_abs_diff_eq!(m.measure(2.0), 0.5, epsilon = 1e-11);
        assert_abs_diff_eq!(m.measure(0.0), 0.0, epsilon = 1e-12);
        assert_eq!(m.measure(-1.0), 0.0);
        for &e in &[0.01f64, 0.3, 1.0, 3.2, 3.99] {
            let exact = (1.0 - e / 2.0).acos() / PI;
            assert_abs_diff_eq!(m.measure(e), exact, epsilon = 1e-11);
        }
        assert_abs_diff_eq!(free_ids_closed(&lap, 1.0), (0.5f64).acos() / PI, epsilon = 1e-11);
    }

    #[test]
    fn minima_examples() {
        let lap = Symbol::fractional_laplacian(1.0f64).unwrap();
        let r = minima_report(&lap, &MinimaOptions::default()).unwrap();
        assert_eq!(r.minima.len(), 1);
        assert!(r.minima[0].location.abs() < 1e-7);
        assert_abs_diff_eq!(r.minima[0].exponent, 2.0, epsilon = 1e-3);

        let r = minima_report(&three_well(), &MinimaOptions::default()).unwrap();
        let locs = r.locations();
        assert_eq!(locs.len(), 3);
        for (got, want) in locs.iter().zip([-2.0, 0.0, 2.5]) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
        let exps: Vec<f64> = r.minima.iter().map(|m| m.exponent).collect();
        for (got, want) in exps.iter().zip([1.4, 0.6, 1.2]) {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
        assert_abs_diff_eq!(r.b, 1.4, epsilon = 1e-3);
        assert!(r.minima.iter().all(|m| m.exponent >= r.holder - 1e-3));

        let r = minima_report(&Symbol::fractional_laplacian(0.35f64).unwrap(), &MinimaOptions::default()).unwrap();
        assert_abs_diff_eq!(r.minima[0].exponent, 0.7, epsilon = 1e-3);
    }

    #[test]
    fn non_algebraic_minimum_fails_the_fit() {
        // exp(-1/x^2)-type flatness at zero, tabulated
        let n = 1usize << 14;
        let samples: Vec<f64> = (0..n)
            .map(|j| {
                let x = -PI + 2.0 * PI * j as f64 / n as f64;
                if x == 0.0 { 0.0 } else { (-1.0 / (x * x)).exp() }
            })
            .collect();
        let s = Symbol::tabulated(samples, 0.5).unwrap();
        let opts = MinimaOptions { fit_window: (2, 6), ..MinimaOptions::default() };
        assert!(matches!(minima_report(&s, &opts), Err(SymbolError::ExponentFitFailed { .. })));
    }

    #[test]
    fn envelope_of_single_power_is_exact() {
        let s = Symbol::fractional_laplacian(0.35f64).unwrap();
        let env = envelope_bounds(&s, &EnvelopeOptions::default()).unwrap();
        assert_abs_diff_eq!(env.c_low, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(env.c_up, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(env.b, 0.7, epsilon = 1e-15);
    }

    #[test]
    fn envelope_of_two_wells() {
        let s = Symbol::cosine_power_product(
            1.0f64,
            vec![CosineFactor { location: 0.0, exponent: 1.0 }, CosineFactor { location: PI, exponent: 1.0 }],
        )
        .unwrap();
        let r = minima_report(&s, &MinimaOptions::default()).unwrap();
        assert_eq!(r.minima.len(), 2);
        assert!(r.minima.iter().all(|m| (m.exponent - 2.0).abs() < 1e-3));
        let env = envelope_bounds(&s, &EnvelopeOptions::default()).unwrap();
        assert_eq!(env.b, 2.0);
        // brute-force grid oracle for the ratio bounds
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for j in 0..4096 {
            let x = -PI + 2.0 * PI * j as f64 / 4096.0;
            let f = s.eval(x);
            let prod = (2.0 - 2.0 * x.cos()) * (2.0 - 2.0 * (x - PI).cos());
            if prod > 1e-3 {
                lo = lo.min(f / prod);
            }
            let single = 2.0 - 2.0 * x.cos();
            if single > 1e-3 {
                hi = hi.max(f / single);
            }
        }
        assert!(env.c_low <= lo * (1.0 + 1e-12));
        assert!(env.c_up >= hi * (1.0 - 1e-12));
    }

    #[test]
    fn three_well_envelope_constants() {
        let s = three_well();
        let env = envelope_bounds(&s, &EnvelopeOptions::default()).unwrap();
        assert_abs_diff_eq!(env.b, 1.4, epsilon = 1e-15);
        assert_eq!(env.locations[env.i0], -2.0);
        // c = 0.5 * 4^{(3.2 - 4.2)/2}, C = 0.5 * 4^{0.6 + 1.2}
        assert_abs_diff_eq!(env.c_low, 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(env.c_up, 0.5 * 4f64.powf(1.8), epsilon = 1e-12);
        assert!(check_sandwich(&s, &env, 12).holds());
    }

    #[test]
    fn hand_picked_three_well_lower_constant_is_too_large() {
        // The upper constant 3 is valid; with 0.5 the lower envelope exceeds f
        // by a factor of about 1.73.
        let s = three_well();
        let env = envelope_bounds(&s, &EnvelopeOptions::default()).unwrap().with_constants(0.5, 3.0);
        let check = check_sandwich(&s, &env, 12);
        assert_eq!(check.upper_violations, 0);
        assert!(check.lower_violations > 0);
        assert!((check.worst_lower_ratio - 1.7308).abs() < 1e-3, "{check:?}");
        // largest admissible lower constant on this grid
        let c_max = 0.5 / check.worst_lower_ratio;
        assert!((c_max - 0.2889).abs() < 1e-3);
    }

    #[test]
    fn envelope_rejects_bad_constants_for_tabulated() {
        let n = 1usize << 12;
        let samples: Vec<f64> = (0..n)
            .map(|j| {
                let x = -PI + 2.0 * PI * j as f64 / n as f64;
                (2.0 - 2.0 * x.cos()) * (1.5 + x.cos())
            })
            .collect();
        let s = Symbol::tabulated(samples, 1.0).unwrap();
        let opts = EnvelopeOptions { minima: MinimaOptions { grid_log2: 14, fit_window: (3, 8), ..MinimaOptions::default() }, ..EnvelopeOptions::default() };
        let env = envelope_bounds(&s, &opts).unwrap();
        assert!(env.c_low > 0.0 && env.c_low <= env.c_up);
        assert!((env.b - 2.0).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn coefficients_are_hermitian(alpha in 0.5f64..2.5, loc in -3.0f64..3.0) {
            let s = Symbol::single_well(1.0, loc, alpha).unwrap();
            let c = s.fourier_coefficients(16, &QuadratureOptions { tol: 1e-6, max_log2: 20 }).unwrap();
            prop_assert_eq!(c.hermitian_defect(), 0.0);
        }

        #[test]
        fn free_ids_is_monotone(alpha in 0.2f64..2.0, e1 in -0.5f64..5.0, e2 in -0.5f64..5.0) {
            let s = Symbol::fractional_laplacian(alpha).unwrap();
            let m = SublevelMeasure::new(&s, 12);
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let (a, b) = (m.measure(lo), m.measure(hi));
            prop_assert!(a <= b);
            prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        }
    }
}
