//! Finite sections of Laurent operators.
//!
//! Integer-power symbols `g = prod_i (2 - 2cos(x - E_i))^{abar}` factor as
//! `g = |p|^2` with `p(x) = prod_i (1 - e^{i(x - E_i)})^{abar}`. The Laurent
//! operator is then `B^* B` for the banded row map
//! `(Bx)(n) = sum_k p_k x(n - k)`, and the modified boundary conditions are
//! obtained by deciding what to do with the rows of `B` that straddle the
//! interval boundary: drop them (Neumann) or double them (Dirichlet).

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::linalg::{eigh, norm, LinalgError, Mat};
use crate::scalar::{cis, torus_distance, Elem, Real};
use crate::symbol::{two_minus_two_cos, CosineFactor, FourierCoefficients, Symbol, SymbolError};

/// Largest dimension handed to the dense eigensolver unless configured otherwise.
pub const DEFAULT_DIMENSION_CAP: usize = 4096;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("invalid integer symbol: {0}")]
    InvalidSpec(String),
    #[error("invalid interval [{a}, {b}]")]
    InvalidInterval { a: i64, b: i64 },
    #[error("root factor does not reproduce g (max deviation {deviation:e})")]
    FactorMismatch { deviation: f64 },
    #[error("interval of length {len} is shorter than the required {required}")]
    IntervalTooShort { len: usize, required: usize },
    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e}, threshold {threshold:e})")]
    NotPsd { eigenvalue: f64, threshold: f64 },
    #[error("dimension {dim} exceeds the eigensolver cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("bracketing violated on the {side} side: eigenvalue {eigenvalue:e} below {threshold:e}")]
    BracketViolated { side: &'static str, eigenvalue: f64, threshold: f64 },
    #[error("intervals are not adjacent")]
    NotAdjacent,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Symbol(#[from] SymbolError),
}

/// Lattice interval `[a, b]`, both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub a: i64,
    pub b: i64,
}

impl Interval {
    pub fn new(a: i64, b: i64) -> Result<Self, OperatorError> {
        if b < a {
            return Err(OperatorError::InvalidInterval { a, b });
        }
        Ok(Self { a, b })
    }

    /// `[-l, l]`.
    pub fn centered(l: usize) -> Self {
        Self { a: -(l as i64), b: l as i64 }
    }

    pub fn len(&self) -> usize {
        (self.b - self.a + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, n: i64) -> bool {
        self.a <= n && n <= self.b
    }

    /// Local index of the site `n`.
    pub fn index(&self, n: i64) -> usize {
        debug_assert!(self.contains(n));
        (n - self.a) as usize
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        self.a..=self.b
    }

    /// `[a, cut]` and `[cut + 1, b]`.
    pub fn split(&self, cut: i64) -> Result<(Self, Self), OperatorError> {
        Ok((Self::new(self.a, cut)?, Self::new(cut + 1, self.b)?))
    }
}

/// Integer-power data `f = scale * g^beta` with
/// `g = prod_i (2 - 2cos(x - E_i))^{alpha_bar}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegerSymbolSpec<T> {
    pub locations: Vec<T>,
    pub alpha_bar: u32,
    pub beta: T,
    pub scale: T,
}

impl<T: Real> IntegerSymbolSpec<T> {
    pub fn new(scale: T, locations: Vec<T>, alpha_bar: u32, beta: T) -> Result<Self, OperatorError> {
        if locations.is_empty() {
            return Err(OperatorError::InvalidSpec("at least one minimum is required".into()));
        }
        if alpha_bar == 0 {
            return Err(OperatorError::InvalidSpec("alpha_bar must be a positive integer".into()));
        }
        if !(beta > T::zero() && beta <= T::one()) {
            return Err(OperatorError::InvalidSpec(format!("beta must lie in (0, 1], got {beta}")));
        }
        if !(scale > T::zero() && scale.is_finite()) {
            return Err(OperatorError::InvalidSpec(format!("scale must be positive, got {scale}")));
        }
        for (i, &e) in locations.iter().enumerate() {
            if !e.is_finite() {
                return Err(OperatorError::InvalidSpec("locations must be finite".into()));
            }
            if locations[..i].iter().any(|&o| torus_distance(o, e) <= T::epsilon() * T::lit(16.0)) {
                return Err(OperatorError::InvalidSpec(format!("repeated minimum location {e}")));
            }
        }
        Ok(Self { locations, alpha_bar, beta, scale })
    }

    /// `alpha_bar = ceil(alpha)`, `beta = alpha / alpha_bar`.
    pub fn from_alpha(scale: T, locations: Vec<T>, alpha: T) -> Result<Self, OperatorError> {
        if !(alpha > T::zero() && alpha.is_finite()) {
            return Err(OperatorError::InvalidSpec(format!("alpha must be positive, got {alpha}")));
        }
        let alpha_bar = alpha.ceil().to_u32().ok_or_else(|| OperatorError::InvalidSpec("alpha too large".into()))?;
        Self::new(scale, locations, alpha_bar, alpha / T::lit(alpha_bar as f64))
    }

    /// The integer spec of a cosine power product whose factors share one exponent.
    pub fn from_symbol(s: &Symbol<T>) -> Result<Self, OperatorError> {
        match s {
            Symbol::CosinePowerProduct { scale, factors } => {
                let alpha = factors[0].exponent;
                if factors.iter().any(|f| f.exponent != alpha) {
                    return Err(OperatorError::InvalidSpec("factors must share one exponent".into()));
                }
                Self::from_alpha(*scale, factors.iter().map(|f| f.location).collect(), alpha)
            }
            Symbol::Tabulated { .. } => Err(OperatorError::InvalidSpec("tabulated symbols have no integer form".into())),
        }
    }

    /// `(2 - 2cos(x - E))^{alpha_bar}` with the given power and scale.
    pub fn laplacian_power(alpha_bar: u32, beta: T, scale: T) -> Result<Self, OperatorError> {
        Self::new(scale, vec![T::zero()], alpha_bar, beta)
    }

    pub fn m(&self) -> usize {
        self.locations.len()
    }

    /// Half-bandwidth `N = M alpha_bar`.
    pub fn n(&self) -> usize {
        self.m() * self.alpha_bar as usize
    }

    pub fn alpha(&self) -> T {
        self.beta * T::lit(self.alpha_bar as f64)
    }

    /// `b = 2 alpha_bar beta`.
    pub fn b(&self) -> T {
        T::lit(2.0 * self.alpha_bar as f64) * self.beta
    }

    pub fn with_power(&self, beta: T, scale: T) -> Result<Self, OperatorError> {
        Self::new(scale, self.locations.clone(), self.alpha_bar, beta)
    }

    pub fn g(&self, x: T) -> T {
        let ab = self.alpha_bar as i32;
        self.locations.iter().fold(T::one(), |acc, &e| acc * two_minus_two_cos(x - e).powi(ab))
    }

    /// `f = scale * g^beta` as a symbol.
    pub fn symbol(&self) -> Result<Symbol<T>, OperatorError> {
        let alpha = self.alpha();
        Ok(Symbol::cosine_power_product(
            self.scale,
            self.locations.iter().map(|&location| CosineFactor { location, exponent: alpha }).collect(),
        )?)
    }

    /// `g` itself as a symbol.
    pub fn g_symbol(&self) -> Result<Symbol<T>, OperatorError> {
        let ab = T::lit(self.alpha_bar as f64);
        Ok(Symbol::cosine_power_product(
            T::one(),
            self.locations.iter().map(|&location| CosineFactor { location, exponent: ab }).collect(),
        )?)
    }
}

/// Coefficients `p_0..p_N` of `p(x) = sum_k p_k e^{ikx}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RootFactor<T> {
    pub coeffs: Vec<Complex<T>>,
}

impl<T: Real> RootFactor<T> {
    pub fn eval(&self, x: T) -> Complex<T> {
        self.coeffs.iter().enumerate().fold(Complex::new(T::zero(), T::zero()), |acc, (k, &p)| {
            acc + p * cis(x * T::from_usize_lossy(k))
        })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Exact Laurent coefficients of `|p|^2`: `a_n = sum_l p_{l+n} conj(p_l)`.
    pub fn laurent_coefficients(&self) -> FourierCoefficients<T> {
        let n = self.degree();
        let nonneg: Vec<Complex<T>> = (0..=n)
            .map(|shift| {
                (0..=n - shift).fold(Complex::new(T::zero(), T::zero()), |acc, l| {
                    acc + self.coeffs[l + shift] * self.coeffs[l].conj()
                })
            })
            .collect();
        FourierCoefficients::from_nonnegative(&nonneg)
    }
}

/// Builds `p` by convolving the factors `(1, -e^{-iE_i})` and checks `|p|^2 = g`.
pub fn root_factor<T: Real>(spec: &IntegerSymbolSpec<T>) -> Result<RootFactor<T>, OperatorError> {
    let mut coeffs = vec![Complex::new(T::one(), T::zero())];
    for &e in &spec.locations {
        let root = -cis(-e);
        for _ in 0..spec.alpha_bar {
            let mut next = vec![Complex::new(T::zero(), T::zero()); coeffs.len() + 1];
            for (k, &c) in coeffs.iter().enumerate() {
                next[k] += c;
                next[k + 1] += c * root;
            }
            coeffs = next;
        }
    }
    let rf = RootFactor { coeffs };
    let grid = 1usize << 12;
    let mut worst = T::zero();
    let mut gmax = T::zero();
    for j in 0..grid {
        let x = -T::PI() + (T::PI() + T::PI()) * T::from_usize_lossy(j) / T::from_usize_lossy(grid);
        let g = spec.g(x);
        gmax = gmax.max(g);
        worst = worst.max((rf.eval(x).norm_sqr() - g).abs());
    }
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(64.0)) * gmax.max(T::one());
    if !(worst <= tol) {
        return Err(OperatorError::FactorMismatch { deviation: worst.to_f64_lossy() });
    }
    Ok(rf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Simple,
    NeumannMod,
    DirichletMod,
}

impl Boundary {
    pub fn name(self) -> &'static str {
        match self {
            Boundary::Simple => "simple",
            Boundary::NeumannMod => "neumann-mod",
            Boundary::DirichletMod => "dirichlet-mod",
        }
    }
}

/// Where a section's matrix came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum Provenance<T> {
    /// Entries taken from numerically computed Fourier coefficients.
    Coefficients { n_max: usize, tol: T, grid: usize, truncated: bool },
    /// Exact construction from an integer spec, raised to `power` and scaled.
    Spec { spec: IntegerSymbolSpec<T>, power: T, scale: T },
}

/// Hermitian restriction of a Laurent operator to an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSection<T> {
    pub interval: Interval,
    pub matrix: Mat<Complex<T>>,
    pub boundary: Boundary,
    pub provenance: Provenance<T>,
}

impl<T: Real> FiniteSection<T> {
    pub fn dim(&self) -> usize {
        self.interval.len()
    }

    /// Same section with `diag(v)` added.
    pub fn with_diagonal(&self, v: &[T]) -> Self {
        let mut out = self.clone();
        out.matrix.add_diagonal(v);
        out
    }

    /// Block diagonal sum with a section on the adjacent interval to the right.
    pub fn direct_sum(&self, right: &Self) -> Result<Self, OperatorError> {
        if self.interval.b + 1 != right.interval.a {
            return Err(OperatorError::NotAdjacent);
        }
        Ok(Self {
            interval: Interval { a: self.interval.a, b: right.interval.b },
            matrix: self.matrix.direct_sum(&right.matrix),
            boundary: self.boundary,
            provenance: self.provenance.clone(),
        })
    }

    /// `U A U^*` with `U = diag(e^{i m theta})`, the section of `f(. + theta)`.
    pub fn phase_conjugate(&self, theta: T) -> Self {
        let phases: Vec<Complex<T>> = self.interval.sites().map(|m| cis(theta * T::lit(m as f64))).collect();
        let n = self.dim();
        let matrix = Mat::from_fn(n, n, |i, j| phases[i] * self.matrix[(i, j)] * phases[j].conj());
        Self { matrix, ..self.clone() }
    }

    pub fn hermitian_defect(&self) -> T {
        self.matrix.hermitian_defect()
    }

    /// Dense CSV rows: one line per matrix row, `re, im` interleaved.
    pub fn csv_rows(&self) -> Vec<Vec<T>> {
        (0..self.dim())
            .map(|i| self.matrix.row(i).iter().flat_map(|z| [z.re, z.im]).collect())
            .collect()
    }
}

/// `M[m, n] = a_{m-n}` on the interval; entries beyond `n_max` are zero and
/// recorded as truncation.
pub fn assemble_simple<T: Real>(c: &FourierCoefficients<T>, interval: Interval) -> FiniteSection<T> {
    let n = interval.len();
    let matrix = Mat::from_fn(n, n, |i, j| c.get(i as i64 - j as i64));
    FiniteSection {
        interval,
        matrix,
        boundary: Boundary::Simple,
        provenance: Provenance::Coefficients { n_max: c.n_max(), tol: c.tol, grid: c.grid, truncated: c.n_max() + 1 < n },
    }
}

/// Adds `weight * |r><r|` for the row `r` of `B` centred at site `n`, restricted
/// to the interval.
fn add_row<T: Real>(m: &mut Mat<Complex<T>>, p: &[Complex<T>], interval: Interval, n: i64, weight: T) {
    let support: Vec<(usize, Complex<T>)> = p
        .iter()
        .enumerate()
        .filter_map(|(k, &pk)| {
            let site = n - k as i64;
            interval.contains(site).then(|| (interval.index(site), pk))
        })
        .collect();
    for &(i, ri) in &support {
        for &(j, rj) in &support {
            m[(i, j)] += (ri.conj() * rj).scale(weight);
        }
    }
}

/// Section of `g` for any boundary tag, built from the rows of `B`.
pub fn assemble_g<T: Real>(
    spec: &IntegerSymbolSpec<T>,
    interval: Interval,
    bc: Boundary,
) -> Result<FiniteSection<T>, OperatorError> {
    let rf = root_factor(spec)?;
    let big_n = spec.n();
    if bc != Boundary::Simple && interval.len() < 2 * big_n + 1 {
        return Err(OperatorError::IntervalTooShort { len: interval.len(), required: 2 * big_n + 1 });
    }
    let dim = interval.len();
    let mut matrix = Mat::zeros(dim, dim);
    let nn = big_n as i64;
    // rows with any support in [a, b] are centred at n in [a, b + N]
    for n in interval.a..=interval.b + nn {
        let interior = n - nn >= interval.a && n <= interval.b;
        let weight = match (bc, interior) {
            (_, true) | (Boundary::Simple, false) => T::one(),
            (Boundary::NeumannMod, false) => T::zero(),
            (Boundary::DirichletMod, false) => T::lit(2.0),
        };
        if weight != T::zero() {
            add_row(&mut matrix, &rf.coeffs, interval, n, weight);
        }
    }
    hermitize(&mut matrix);
    Ok(FiniteSection {
        interval,
        matrix,
        boundary: bc,
        provenance: Provenance::Spec { spec: spec.clone(), power: T::one(), scale: T::one() },
    })
}

/// Modified Neumann or Dirichlet section of `g`.
pub fn assemble_modified<T: Real>(
    spec: &IntegerSymbolSpec<T>,
    interval: Interval,
    bc: Boundary,
) -> Result<FiniteSection<T>, OperatorError> {
    assemble_g(spec, interval, bc)
}

/// `scale * (section of g)^beta` using the spec's power and scale.
pub fn powered_section<T: Real>(
    spec: &IntegerSymbolSpec<T>,
    interval: Interval,
    bc: Boundary,
) -> Result<FiniteSection<T>, OperatorError> {
    let sec = assemble_g(spec, interval, bc)?;
    matrix_power(&sec, spec.beta, spec.scale)
}

fn hermitize<T: Real>(m: &mut Mat<Complex<T>>) {
    let n = m.rows();
    for i in 0..n {
        m[(i, i)].im = T::zero();
        for j in 0..i {
            let avg = (m[(i, j)] + m[(j, i)].conj()).scale(T::lit(0.5));
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Real part of `m` when its imaginary parts are at rounding level.
fn near_real<T: Real>(m: &Mat<Complex<T>>) -> Option<Mat<T>> {
    let scale = m.max_abs();
    let tol = T::epsilon() * T::lit(16.0) * scale;
    m.as_slice().iter().all(|z| z.im.abs() <= tol).then(|| m.map(|z| z.re))
}

/// Hermitian eigendecomposition that takes the real symmetric path when possible.
fn hermitian_eigh<T: Real>(m: &Mat<Complex<T>>, want_vectors: bool) -> Result<(Vec<T>, Option<Mat<Complex<T>>>), OperatorError> {
    if let Some(re) = near_real(m) {
        let e = eigh(&re, want_vectors)?;
        Ok((e.values, e.vectors.map(|v| v.to_complex())))
    } else {
        let e = eigh(m, want_vectors)?;
        Ok((e.values, e.vectors))
    }
}

/// Applies `x -> scale * max(x, 0)^beta` spectrally.
pub fn matrix_power<T: Real>(sec: &FiniteSection<T>, beta: T, scale: T) -> Result<FiniteSection<T>, OperatorError> {
    let (old_power, old_scale, spec) = match &sec.provenance {
        Provenance::Spec { spec, power, scale } => (*power, *scale, Some(spec.clone())),
        Provenance::Coefficients { .. } => (T::one(), T::one(), None),
    };
    let matrix = if beta == T::one() {
        sec.matrix.scaled(scale)
    } else {
        let (weights, vectors) = psd_power_weights(&sec.matrix, beta, scale)?;
        match near_real(&vectors) {
            Some(re) => Mat::from_spectral(&re, &weights).to_complex(),
            None => Mat::from_spectral(&vectors, &weights),
        }
    };
    let provenance = match spec {
        Some(spec) => Provenance::Spec { spec, power: old_power * beta, scale: scale * old_scale.powf(beta) },
        None => sec.provenance.clone(),
    };
    Ok(FiniteSection { matrix, provenance, ..sec.clone() })
}

/// Spectral weights `scale * lambda^beta` (with clamping) and eigenvectors.
fn psd_power_weights<T: Real>(
    m: &Mat<Complex<T>>,
    beta: T,
    scale: T,
) -> Result<(Vec<T>, Mat<Complex<T>>), OperatorError> {
    let (values, vectors) = hermitian_eigh(m, true)?;
    let norm_a = values.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let neg_tol = T::lit(1e-8) * norm_a;
    if let Some(&lowest) = values.first() {
        if lowest < -neg_tol {
            return Err(OperatorError::NotPsd { eigenvalue: lowest.to_f64_lossy(), threshold: (-neg_tol).to_f64_lossy() });
        }
    }
    let clamp = T::lit(1e-12) * norm_a;
    let weights = values.iter().map(|&v| if v < clamp { T::zero() } else { scale * v.powf(beta) }).collect();
    Ok((weights, vectors.expect("vectors requested")))
}

/// Eigenvalues of `scale * (section of g)^beta` by spectral mapping of the
/// section of `g`, with the same clamping as [`matrix_power`]. Also returns
/// the eigenvalues of the section of `g` itself.
pub fn powered_eigenvalues<T: Real>(
    spec: &IntegerSymbolSpec<T>,
    interval: Interval,
    bc: Boundary,
    cap: usize,
) -> Result<(Vec<T>, Vec<T>), OperatorError> {
    let sec = assemble_g(spec, interval, bc)?;
    let g_values = eigensolve_capped(&sec, false, cap)?.values;
    let norm_a = g_values.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    if let Some(&lowest) = g_values.first() {
        if lowest < -T::lit(1e-8) * norm_a {
            return Err(OperatorError::NotPsd { eigenvalue: lowest.to_f64_lossy(), threshold: (-T::lit(1e-8) * norm_a).to_f64_lossy() });
        }
    }
    let clamp = T::lit(1e-12) * norm_a;
    let powered = g_values
        .iter()
        .map(|&v| if v < clamp { T::zero() } else { spec.scale * v.powf(spec.beta) })
        .collect();
    Ok((powered, g_values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport<T> {
    /// `max_k ||A v_k - lambda_k v_k||`.
    pub max_residual: T,
    /// Spectral norm `max |lambda|`.
    pub norm: T,
    /// Largest deviation of `V^* V` from the identity.
    pub orthogonality: T,
}

impl<T: Real> ResidualReport<T> {
    pub fn relative(&self) -> T {
        if self.norm > T::zero() {
            self.max_residual / self.norm
        } else {
            self.max_residual
        }
    }
}

/// Sorted eigenvalues, optionally with eigenvectors stored as columns.
#[derive(Debug, Clone)]
pub struct Spectrum<T> {
    pub values: Vec<T>,
    pub vectors: Option<Mat<Complex<T>>>,
    pub residual: Option<ResidualReport<T>>,
}

impl<T: Real> Spectrum<T> {
    pub fn norm(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    /// `#{lambda <= e}`.
    pub fn count_below(&self, e: T) -> usize {
        self.values.partition_point(|&v| v <= e)
    }

    pub fn ground_energy(&self) -> T {
        self.values[0]
    }

    pub fn vector(&self, k: usize) -> Option<Vec<Complex<T>>> {
        self.vectors.as_ref().map(|v| v.column(k))
    }
}

pub fn eigensolve<T: Real>(sec: &FiniteSection<T>, want_vectors: bool) -> Result<Spectrum<T>, OperatorError> {
    eigensolve_capped(sec, want_vectors, DEFAULT_DIMENSION_CAP)
}

pub fn eigensolve_capped<T: Real>(sec: &FiniteSection<T>, want_vectors: bool, cap: usize) -> Result<Spectrum<T>, OperatorError> {
    hermitian_spectrum(&sec.matrix, want_vectors, cap)
}

/// Eigendecomposition of any Hermitian matrix under a dimension cap.
pub fn hermitian_spectrum<T: Real>(m: &Mat<Complex<T>>, want_vectors: bool, cap: usize) -> Result<Spectrum<T>, OperatorError> {
    if m.rows() > cap {
        return Err(OperatorError::DimensionCap { dim: m.rows(), cap });
    }
    let (values, vectors) = hermitian_eigh(m, want_vectors)?;
    let residual = vectors.as_ref().map(|v| residual_report(m, &values, v));
    Ok(Spectrum { values, vectors, residual })
}

fn residual_report<T: Real>(m: &Mat<Complex<T>>, values: &[T], vectors: &Mat<Complex<T>>) -> ResidualReport<T> {
    let av = m.matmul(vectors);
    let n = m.rows();
    let mut max_residual = T::zero();
    for (k, &lambda) in values.iter().enumerate() {
        let r: Vec<Complex<T>> = (0..n).map(|i| av[(i, k)] - vectors[(i, k)].scale(lambda)).collect();
        max_residual = max_residual.max(norm(&r));
    }
    let gram = vectors.adjoint().matmul(vectors);
    let orthogonality = gram.sub(&Mat::identity(values.len())).max_abs();
    ResidualReport { max_residual, norm: values.iter().fold(T::zero(), |a, v| a.max(v.abs())), orthogonality }
}

/// Smallest eigenvalues of the two bracketing differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BracketReport<T> {
    pub interval: Interval,
    pub cut: i64,
    /// `min eig(Simple - Neumann (+) Neumann)`.
    pub lower_gap: T,
    /// `min eig(Dirichlet (+) Dirichlet - Simple)`.
    pub upper_gap: T,
    /// Spectral norm of the simple section.
    pub norm: T,
    pub tol: T,
}

impl<T: Real> BracketReport<T> {
    pub fn threshold(&self) -> T {
        -self.tol * self.norm
    }

    pub fn holds(&self) -> bool {
        self.lower_gap >= self.threshold() && self.upper_gap >= self.threshold()
    }

    pub fn check(self) -> Result<Self, OperatorError> {
        let threshold = self.threshold();
        if self.lower_gap < threshold {
            return Err(OperatorError::BracketViolated {
                side: "neumann",
                eigenvalue: self.lower_gap.to_f64_lossy(),
                threshold: threshold.to_f64_lossy(),
            });
        }
        if self.upper_gap < threshold {
            return Err(OperatorError::BracketViolated {
                side: "dirichlet",
                eigenvalue: self.upper_gap.to_f64_lossy(),
                threshold: threshold.to_f64_lossy(),
            });
        }
        Ok(self)
    }
}

/// Relative tolerance of the bracketing certificates.
pub const BRACKET_TOL: f64 = 1e-10;

/// Computes both bracketing differences without judging them.
pub fn bracketing_report<T: Real>(
    spec: &IntegerSymbolSpec<T>,
    interval: Interval,
    cut: i64,
) -> Result<BracketReport<T>, OperatorError> {
    let (left, right) = interval.split(cut)?;
    let required = 2 * spec.n() + 1;
    for part in [left, right] {
        if part.len() < required {
            return Err(OperatorError::IntervalTooShort { len: part.len(), required });
        }
    }
    let simple = assemble_g(spec, interval, Boundary::Simple)?;
    let neumann = assemble_g(spec, left, Boundary::NeumannMod)?.direct_sum(&assemble_g(spec, right, Boundary::NeumannMod)?)?;
    let dirichlet =
        assemble_g(spec, left, Boundary::DirichletMod)?.direct_sum(&assemble_g(spec, right, Boundary::DirichletMod)?)?;
    let cap = usize::MAX;
    let norm = hermitian_spectrum(&simple.matrix, false, cap)?.norm();
    let lower_gap = hermitian_spectrum(&simple.matrix.sub(&neumann.matrix), false, cap)?.values[0];
    let upper_gap = hermitian_spectrum(&dirichlet.matrix.sub(&simple.matrix), false, cap)?.values[0];
    Ok(BracketReport { interval, cut, lower_gap, upper_gap, norm, tol: T::lit(BRACKET_TOL) })
}

/// Neumann and Dirichlet bracketing certificates at a cut point.
pub fn bracketing_check<T: Real>(
    spec: &IntegerSymbolSpec<T>,
    interval: Interval,
    cut: i64,
) -> Result<BracketReport<T>, OperatorError> {
    bracketing_report(spec, interval, cut)?.check()
}
