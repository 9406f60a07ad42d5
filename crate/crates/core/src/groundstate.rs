//! Zero modes of Neumann sections and the quantities built from them.

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::fit::{fit_log_log, LineFit};
use crate::linalg::{dot, eigh, norm, orthonormal_columns, Mat};
use crate::operator::{powered_eigenvalues, Boundary, IntegerSymbolSpec, Interval, OperatorError, DEFAULT_DIMENSION_CAP};
use crate::scalar::{cis, Elem, Real};

/// Eigenvalues of the section of `g` below this count as zero modes.
pub const ZERO_MODE_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GroundError {
    #[error("{vectors} basis vectors do not fit on {sites} sites")]
    TooFewSites { vectors: usize, sites: usize },
    #[error("vector is not in the span of the basis (residual {residual:e})")]
    NotInSpan { residual: f64 },
    #[error("potential has {got} sites, the basis has {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("L = {l}: found {found} zero modes, expected {expected}")]
    KernelDimensionMismatch { l: usize, found: usize, expected: usize },
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Unit vectors `phi^j_{k,L}(m) ~ m^j e^{-imE_k}` on `[-L, L]`, ordered by
/// minimum, then by `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundBasis<T> {
    pub locations: Vec<T>,
    pub alpha_bar: u32,
    pub l: usize,
    pub vectors: Vec<Vec<Complex<T>>>,
}

impl<T: Real> GroundBasis<T> {
    pub fn n(&self) -> usize {
        self.vectors.len()
    }

    pub fn sites(&self) -> usize {
        2 * self.l + 1
    }

    pub fn interval(&self) -> Interval {
        Interval::centered(self.l)
    }

    /// Basis vectors as the columns of a matrix.
    pub fn matrix(&self) -> Mat<Complex<T>> {
        Mat::from_fn(self.sites(), self.n(), |i, k| self.vectors[k][i])
    }

    /// Orthonormal basis of the span, as columns.
    pub fn orthonormal(&self) -> Mat<Complex<T>> {
        orthonormal_columns(&self.matrix(), T::lit(1e-12))
    }

    /// `(m, re_0, im_0, re_1, im_1, ...)` rows.
    pub fn csv_rows(&self) -> Vec<Vec<T>> {
        (0..self.sites())
            .map(|i| {
                let mut row = vec![T::lit(i as f64 - self.l as f64)];
                row.extend(self.vectors.iter().flat_map(|v| [v[i].re, v[i].im]));
                row
            })
            .collect()
    }
}

/// Builds the `M * alpha_bar` normalized zero-mode vectors on `[-L, L]`.
pub fn build_basis<T: Real>(locations: &[T], alpha_bar: u32, l: usize) -> Result<GroundBasis<T>, GroundError> {
    let n = locations.len() * alpha_bar as usize;
    let sites = 2 * l + 1;
    if n > sites {
        return Err(GroundError::TooFewSites { vectors: n, sites });
    }
    let mut vectors = Vec::with_capacity(n);
    for &e in locations {
        for j in 0..alpha_bar as i32 {
            let mut v: Vec<Complex<T>> = (-(l as i64)..=l as i64)
                .map(|m| {
                    let mt = T::lit(m as f64);
                    cis(-mt * e).scale(mt.powi(j))
                })
                .collect();
            let nv = norm(&v);
            v.iter_mut().for_each(|z| *z = z.scale(T::one() / nv));
            vectors.push(v);
        }
    }
    Ok(GroundBasis { locations: locations.to_vec(), alpha_bar, l, vectors })
}

/// Basis matching the minima of an integer spec.
pub fn basis_for_spec<T: Real>(spec: &IntegerSymbolSpec<T>, l: usize) -> Result<GroundBasis<T>, GroundError> {
    build_basis(&spec.locations, spec.alpha_bar, l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramReport<T> {
    pub gram: Mat<Complex<T>>,
    pub max_off_diagonal: T,
    /// `max_off_diagonal * |Lambda_L|`.
    pub scaled_off_diagonal: T,
    /// Largest overlap between vectors attached to different minima.
    pub max_cross: T,
    pub scaled_cross: T,
}

pub fn gram<T: Real>(basis: &GroundBasis<T>) -> GramReport<T> {
    let n = basis.n();
    let ab = basis.alpha_bar as usize;
    let g = Mat::from_fn(n, n, |i, j| dot(&basis.vectors[i], &basis.vectors[j]));
    let mut max_off = T::zero();
    let mut max_cross = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = g[(i, j)].norm();
            max_off = max_off.max(v);
            if i / ab != j / ab {
                max_cross = max_cross.max(v);
            }
        }
    }
    let sites = T::from_usize_lossy(basis.sites());
    GramReport { gram: g, max_off_diagonal: max_off, scaled_off_diagonal: max_off * sites, max_cross, scaled_cross: max_cross * sites }
}

/// Pointwise size of a unit vector in the span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlatnessReport<T> {
    /// `max_l |phi(l)|^2 |Lambda_L|`.
    pub sup_scaled: T,
    /// The bound `2N` on `sup_scaled`.
    pub sup_bound: T,
    pub a: T,
    /// `#{l : |Lambda_L| |phi(l)|^2 >= a}`.
    pub s_count: usize,
    /// `C_{a,N} = (1 - a) / (2N - a)`.
    pub c_an: T,
    pub sites: usize,
}

impl<T: Real> FlatnessReport<T> {
    pub fn sup_holds(&self) -> bool {
        self.sup_scaled <= self.sup_bound
    }

    pub fn count_holds(&self) -> bool {
        T::from_usize_lossy(self.s_count) >= self.c_an * T::from_usize_lossy(self.sites)
    }
}

/// Distance from `phi` to the span, relative to `|phi|`.
pub fn span_residual<T: Real>(q: &Mat<Complex<T>>, phi: &[Complex<T>]) -> T {
    let mut r = phi.to_vec();
    for k in 0..q.cols() {
        let col = q.column(k);
        let c = dot(&col, phi);
        for (x, &qv) in r.iter_mut().zip(&col) {
            *x -= c * qv;
        }
    }
    norm(&r) / norm(phi).max(T::min_positive_value())
}

pub fn flatness_report<T: Real>(basis: &GroundBasis<T>, phi: &[Complex<T>], a: T) -> Result<FlatnessReport<T>, GroundError> {
    if phi.len() != basis.sites() {
        return Err(GroundError::DimensionMismatch { got: phi.len(), expected: basis.sites() });
    }
    let q = basis.orthonormal();
    let residual = span_residual(&q, phi);
    let unit = (norm(phi) - T::one()).abs();
    let tol = T::lit(1e-8);
    if residual > tol || unit > tol {
        return Err(GroundError::NotInSpan { residual: residual.max(unit).to_f64_lossy() });
    }
    Ok(flatness_unchecked(basis, phi, a))
}

fn flatness_unchecked<T: Real>(basis: &GroundBasis<T>, phi: &[Complex<T>], a: T) -> FlatnessReport<T> {
    let sites = basis.sites();
    let st = T::from_usize_lossy(sites);
    let scaled: Vec<T> = phi.iter().map(|z| z.norm_sqr() * st).collect();
    let n2 = T::from_usize_lossy(2 * basis.n());
    FlatnessReport {
        sup_scaled: scaled.iter().copied().fold(T::zero(), T::max),
        sup_bound: n2,
        a,
        s_count: scaled.iter().filter(|&&v| v >= a).count(),
        c_an: (T::one() - a) / (n2 - a),
        sites,
    }
}

/// `sup` of `max_l |phi(l)|^2 |Lambda_L|` over all unit vectors in the span,
/// attained where the Christoffel function `sum_k |Q_{lk}|^2` peaks.
pub fn span_sup_flatness<T: Real>(basis: &GroundBasis<T>) -> T {
    let q = basis.orthonormal();
    let st = T::from_usize_lossy(basis.sites());
    (0..q.rows())
        .map(|i| q.row(i).iter().map(|z| z.norm_sqr()).sum::<T>() * st)
        .fold(T::zero(), T::max)
}

/// Unit vector in the span with Gaussian coefficients in an orthonormal basis.
pub fn random_span_vector<T: Real, R: Rng + ?Sized>(q: &Mat<Complex<T>>, rng: &mut R) -> Vec<Complex<T>> {
    let coeffs: Vec<Complex<T>> = (0..q.cols())
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex::new(T::lit(re), T::lit(im))
        })
        .collect();
    let mut v = q.matvec(&coeffs);
    let nv = norm(&v);
    v.iter_mut().for_each(|z| *z = z.scale(T::one() / nv));
    v
}

/// Flatness of a random unit span vector, skipping the span check.
pub fn random_flatness<T: Real, R: Rng + ?Sized>(basis: &GroundBasis<T>, q: &Mat<Complex<T>>, a: T, rng: &mut R) -> FlatnessReport<T> {
    let phi = random_span_vector(q, rng);
    flatness_unchecked(basis, &phi, a)
}

/// Smallest value of `<phi, V phi>` over unit `phi` in the span.
#[derive(Debug, Clone, PartialEq)]
pub struct MinForm<T> {
    pub value: T,
    pub minimizer: Vec<Complex<T>>,
}

pub fn min_form_over_g<T: Real>(basis: &GroundBasis<T>, v: &[T]) -> Result<MinForm<T>, GroundError> {
    if v.len() != basis.sites() {
        return Err(GroundError::DimensionMismatch { got: v.len(), expected: basis.sites() });
    }
    let q = basis.orthonormal();
    let k = q.cols();
    let mut vq = q.clone();
    for (i, &vi) in v.iter().enumerate() {
        vq.row_mut(i).iter_mut().for_each(|z| *z = z.scale(vi));
    }
    let mut p = q.adjoint().matmul(&vq);
    for i in 0..k {
        p[(i, i)].im = T::zero();
    }
    let e = eigh(&p, true).map_err(OperatorError::from)?;
    let y = e.vectors.expect("vectors requested").column(0);
    Ok(MinForm { value: e.values[0], minimizer: q.matvec(&y) })
}

/// `(a / |Lambda_L|) sum_{l in S^a_L} V(l)` for the set `S^a_L` of `phi`.
pub fn flat_set_lower_bound<T: Real>(phi: &[Complex<T>], v: &[T], a: T) -> T {
    let st = T::from_usize_lossy(phi.len());
    let sum: T = phi.iter().zip(v).filter(|(z, _)| z.norm_sqr() * st >= a).map(|(_, &vi)| vi).sum();
    a / st * sum
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapPoint<T> {
    pub l: usize,
    pub zero_modes: usize,
    /// `mu_{N+1}` of the powered Neumann section.
    pub gap: T,
    /// `mu_{N+1} L^b`.
    pub scaled: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapScaling<T> {
    pub points: Vec<GapPoint<T>>,
    /// Fit of `ln mu_{N+1}` against `ln L`.
    pub fit: LineFit<T>,
    pub b: T,
    /// `min_L mu_{N+1}(L) L^b`.
    pub c0: T,
}

/// One gap measurement on `[-L, L]`.
pub fn gap_point<T: Real>(spec: &IntegerSymbolSpec<T>, l: usize, cap: usize) -> Result<GapPoint<T>, GroundError> {
    let n = spec.n();
    let (powered, g_values) = powered_eigenvalues(spec, Interval::centered(l), Boundary::NeumannMod, cap)?;
    let zero_modes = g_values.iter().filter(|&&v| v.abs() < T::lit(ZERO_MODE_TOL)).count();
    if zero_modes != n {
        return Err(GroundError::KernelDimensionMismatch { l, found: zero_modes, expected: n });
    }
    let gap = powered[n];
    Ok(GapPoint { l, zero_modes, gap, scaled: gap * T::from_usize_lossy(l).powf(spec.b()) })
}

/// Spectral gap of powered Neumann sections over a list of `L`, in parallel.
pub fn gap_scaling<T: Real>(spec: &IntegerSymbolSpec<T>, l_list: &[usize]) -> Result<GapScaling<T>, GroundError> {
    gap_scaling_capped(spec, l_list, DEFAULT_DIMENSION_CAP)
}

pub fn gap_scaling_capped<T: Real>(spec: &IntegerSymbolSpec<T>, l_list: &[usize], cap: usize) -> Result<GapScaling<T>, GroundError> {
    let required = 2 * spec.n() + 1;
    if let Some(&l) = l_list.iter().find(|&&l| 2 * l + 1 < required) {
        return Err(OperatorError::IntervalTooShort { len: 2 * l + 1, required }.into());
    }
    let points: Vec<GapPoint<T>> = l_list.par_iter().map(|&l| gap_point(spec, l, cap)).collect::<Result<_, _>>()?;
    let xy: Vec<(T, T)> = points.iter().map(|p| (T::from_usize_lossy(p.l), p.gap)).collect();
    let fit = fit_log_log(&xy).unwrap_or(LineFit { slope: T::nan(), intercept: T::nan(), residual: T::nan(), points: xy.len() });
    let c0 = points.iter().map(|p| p.scaled).fold(T::infinity(), T::min);
    Ok(GapScaling { points, fit, b: spec.b(), c0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::assemble_modified;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn basis_examples() {
        let b = build_basis(&[0.0f64], 1, 1).unwrap();
        for z in &b.vectors[0] {
            assert_abs_diff_eq!(z.re, 1.0 / 3f64.sqrt(), epsilon = 1e-15);
            assert_eq!(z.im, 0.0);
        }
        let b = build_basis(&[0.0f64], 2, 1).unwrap();
        let s = 1.0 / 2f64.sqrt();
        for (z, want) in b.vectors[1].iter().zip([-s, 0.0, s]) {
            assert_abs_diff_eq!(z.re, want, epsilon = 1e-15);
        }
        let b = build_basis(&[PI], 1, 1).unwrap();
        let t = 1.0 / 3f64.sqrt();
        for (z, want) in b.vectors[0].iter().zip([-t, t, -t]) {
            assert!((z - Complex::new(want, 0.0)).norm() < 1e-15);
        }
        assert!(build_basis(&[0.0f64, 1.0], 2, 1).is_err());
    }

    #[test]
    fn basis_spans_neumann_kernel() {
        for (locs, ab) in [(vec![0.0f64], 1u32), (vec![0.0], 2), (vec![0.3, -2.0], 1), (vec![1.0, -1.0, 2.9], 2)] {
            let spec = IntegerSymbolSpec::new(1.0, locs, ab, 1.0).unwrap();
            for l in [2 * spec.n() + 1, 30] {
                let sec = assemble_modified(&spec, Interval::centered(l), Boundary::NeumannMod).unwrap();
                let basis = basis_for_spec(&spec, l).unwrap();
                let scale = sec.matrix.max_abs();
                for v in &basis.vectors {
                    assert!(norm(&sec.matrix.matvec(v)) <= 1e-8 * scale);
                }
            }
        }
    }

    #[test]
    fn gram_examples() {
        let b = build_basis(&[0.0f64], 2, 10).unwrap();
        let g = gram(&b);
        assert!(g.gram[(0, 1)].norm() < 1e-15);
        assert_eq!(g.max_cross, 0.0);

        let (e1, e2, l) = (0.4f64, -1.1, 20usize);
        let b = build_basis(&[e1, e2], 1, l).unwrap();
        let g = gram(&b);
        let d = e1 - e2;
        let n = (2 * l + 1) as f64;
        let dirichlet = (n * d / 2.0).sin() / (n * (d / 2.0).sin());
        assert_abs_diff_eq!(g.gram[(0, 1)].norm(), dirichlet.abs(), epsilon = 1e-13);
        for i in 0..2 {
            assert_abs_diff_eq!(g.gram[(i, i)].re, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn flatness_examples() {
        let b = build_basis(&[0.0f64], 1, 50).unwrap();
        let r = flatness_report(&b, &b.vectors[0], 0.5).unwrap();
        assert_eq!(r.s_count, 101);
        assert_abs_diff_eq!(r.sup_scaled, 1.0, epsilon = 1e-12);
        assert!(r.sup_holds() && r.count_holds());

        let b = build_basis(&[0.0f64], 2, 200).unwrap();
        let q = b.orthonormal();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let phi = random_span_vector(&q, &mut rng);
            let r = flatness_report(&b, &phi, 0.5).unwrap();
            assert_abs_diff_eq!(r.c_an, 1.0 / 7.0, epsilon = 1e-15);
            let direct = phi.iter().filter(|z| z.norm_sqr() * 401.0 >= 0.5).count();
            assert_eq!(r.s_count, direct);
            assert!(r.s_count as f64 >= 401.0 / 7.0);
        }

        let mut off = vec![Complex::new(0.0, 0.0); 401];
        off[7] = Complex::new(1.0, 0.0);
        assert!(matches!(flatness_report(&b, &off, 0.5), Err(GroundError::NotInSpan { .. })));
    }

    #[test]
    fn span_sup_bounds_random_vectors() {
        let b = build_basis(&[0.0f64, 2.0], 2, 60).unwrap();
        let sup = span_sup_flatness(&b);
        let q = b.orthonormal();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let r = random_flatness(&b, &q, 0.5, &mut rng);
            assert!(r.sup_scaled <= sup * (1.0 + 1e-12));
        }
        // attained by the normalized Christoffel kernel at the peak site
        let (peak, _) = (0..q.rows())
            .map(|i| (i, q.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>()))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let mut phi: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); q.rows()];
        for k in 0..q.cols() {
            let c = q[(peak, k)].conj();
            for i in 0..q.rows() {
                phi[i] += q[(i, k)] * c;
            }
        }
        let n = norm(&phi);
        phi.iter_mut().for_each(|z| *z /= n);
        let r = flatness_report(&b, &phi, 0.5).unwrap();
        assert_abs_diff_eq!(r.sup_scaled, sup, epsilon = 1e-10);
    }

    #[test]
    fn min_form_examples() {
        let b = build_basis(&[0.0f64, 1.5], 1, 8).unwrap();
        assert_abs_diff_eq!(min_form_over_g(&b, &[0.0; 17]).unwrap().value, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(min_form_over_g(&b, &[0.37; 17]).unwrap().value, 0.37, epsilon = 1e-14);

        let l = 6;
        let b = build_basis(&[0.0f64], 1, l).unwrap();
        let mut v = vec![0.0; 2 * l + 1];
        v[l] = 1.0;
        assert_abs_diff_eq!(min_form_over_g(&b, &v).unwrap().value, 1.0 / 13.0, epsilon = 1e-15);
    }

    #[test]
    fn min_form_dominates_flat_set_bound() {
        let b = build_basis(&[0.0f64, 2.2], 2, 40).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let v: Vec<f64> = (0..81).map(|_| rng.gen::<f64>()).collect();
            let m = min_form_over_g(&b, &v).unwrap();
            assert!(m.value >= 0.0);
            assert!(m.value >= flat_set_lower_bound(&m.minimizer, &v, 0.5) - 1e-12);
            let quad: f64 = m.minimizer.iter().zip(&v).map(|(z, &vi)| z.norm_sqr() * vi).sum();
            assert_abs_diff_eq!(quad, m.value, epsilon = 1e-12);
        }
    }

    #[test]
    fn laplacian_gap_closed_form() {
        // Neumann path Laplacian on n sites: eigenvalues 2 - 2cos(k pi / n)
        let spec = IntegerSymbolSpec::laplacian_power(1, 1.0f64, 1.0).unwrap();
        for l in [5usize, 20, 80] {
            let p = gap_point(&spec, l, DEFAULT_DIMENSION_CAP).unwrap();
            let n = (2 * l + 1) as f64;
            assert_abs_diff_eq!(p.gap, 2.0 - 2.0 * (PI / n).cos(), epsilon = 1e-13);
            assert_eq!(p.zero_modes, 1);
        }
        let p = gap_point(&spec, 400, DEFAULT_DIMENSION_CAP).unwrap();
        let n = 801.0f64;
        assert!((p.gap * n * n - PI * PI).abs() < 1e-4);
    }

    #[test]
    fn gap_scaling_slope() {
        let spec = IntegerSymbolSpec::laplacian_power(1, 1.0f64, 1.0).unwrap();
        let r = gap_scaling(&spec, &[16, 32, 64, 128]).unwrap();
        assert!((r.fit.slope + 2.0).abs() < 0.05, "{:?}", r.fit);
        assert!(r.c0 > 0.0);
        let spec = IntegerSymbolSpec::laplacian_power(2, 0.5f64, 1.0).unwrap();
        let r = gap_scaling(&spec, &[16, 32, 64, 128]).unwrap();
        assert!((r.fit.slope + 2.0).abs() < 0.1, "{:?}", r.fit);
    }

    #[test]
    fn gap_scaling_rejects_short_intervals() {
        let spec = IntegerSymbolSpec::laplacian_power(2, 1.0f64, 1.0).unwrap();
        assert!(gap_scaling(&spec, &[1, 10]).is_err());
    }
}
