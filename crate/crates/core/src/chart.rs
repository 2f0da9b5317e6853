//! Charts on commuting varieties and their Jacobians.
//!
//! Two routes to every volume factor live here: closed forms (the
//! Vandermonde factor `κ`, the bordered matrix `Γ_Q` of the unipotent chart
//! and its determinant) and a finite-difference Gram determinant that
//! measures any chart numerically. Charts map into the real coordinates of
//! `(M_n)^d` (real and imaginary part of every entry), which is an isometry
//! for the Frobenius norm, so one Gram formula serves Hermitian and general
//! tuples alike. For a holomorphic chart the real Gram Jacobian equals the
//! complex determinant `det(J* J)` without a square root.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tuple::{CMatrix, EigenConfig, MatrixTuple};

type Embedding = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A smooth map from parameter space into the real coordinates of a tuple space.
#[derive(Clone)]
pub struct ChartMap {
    domain_dim: usize,
    base_point: Vec<f64>,
    embedding: Arc<Embedding>,
}

impl std::fmt::Debug for ChartMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChartMap")
            .field("domain_dim", &self.domain_dim)
            .field("base_point", &self.base_point)
            .finish_non_exhaustive()
    }
}

impl ChartMap {
    pub fn new<F>(base_point: Vec<f64>, embedding: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            domain_dim: base_point.len(),
            base_point,
            embedding: Arc::new(embedding),
        }
    }

    /// The identity embedding of R^k at the origin.
    pub fn identity(k: usize) -> Self {
        Self::new(vec![0.0; k], |x| x.to_vec())
    }

    /// `(θ, S) ↦ e^S (D + D_θ) e^{−S}` at `(0, 0)`, where `D` is the diagonal
    /// Hermitian tuple of `lambda` and `S` ranges over skew-Hermitian matrices
    /// with zero diagonal.
    ///
    /// Parameters: the n·d shifts `θ` (point-major), then for each pair
    /// `i < j` the coefficients of `(E_ij − E_ji)/√2` and `i(E_ij + E_ji)/√2`.
    pub fn hermitian(lambda: &EigenConfig) -> Self {
        let n = lambda.n();
        let d = lambda.d();
        let base: Vec<f64> = (0..n).flat_map(|i| lambda.real_point(i)).collect();
        let pairs = n * (n - 1) / 2;
        Self::new(vec![0.0; n * d + 2 * pairs], move |p| {
            let (theta, s_par) = p.split_at(n * d);
            let s = skew_from_params(n, s_par);
            let e_pos = s.clone().exp();
            let e_neg = (-s).exp();
            let comps: Vec<CMatrix> = (0..d)
                .map(|r| {
                    let diag = CMatrix::from_fn(n, n, |i, j| {
                        if i == j {
                            Complex64::new(base[i * d + r] + theta[i * d + r], 0.0)
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    });
                    &e_pos * diag * &e_neg
                })
                .collect();
            tuple_to_reals(&comps)
        })
    }

    /// `(D̃, Ã) ↦ Ã D̃ Ã^{-1}` from diagonal tuples and unipotent matrices to
    /// upper-triangular tuples, based at `(lambda, a)`.
    ///
    /// Parameters: real and imaginary parts of the n·d eigenvalue
    /// coordinates (point-major), then of the strictly upper entries of `Ã`.
    pub fn unipotent(lambda: &EigenConfig, a: &UnipotentParam) -> Self {
        assert_eq!(
            lambda.n(),
            a.n(),
            "eigenvalue count and unipotent size differ"
        );
        let n = lambda.n();
        let d = lambda.d();
        let mut base: Vec<f64> = (0..n)
            .flat_map(|i| {
                lambda
                    .point(i)
                    .iter()
                    .flat_map(|z| [z.re, z.im])
                    .collect::<Vec<_>>()
            })
            .collect();
        base.extend(a.entries().iter().flat_map(|z| [z.re, z.im]));
        Self::new(base, move |p| {
            let (eig, upper) = p.split_at(2 * n * d);
            let coords: Vec<Complex64> = eig
                .chunks_exact(2)
                .map(|c| Complex64::new(c[0], c[1]))
                .collect();
            let entries: Vec<Complex64> = upper
                .chunks_exact(2)
                .map(|c| Complex64::new(c[0], c[1]))
                .collect();
            let a = UnipotentParam::new(n, entries).expect("sized by construction");
            let (am, ainv) = (a.matrix(), a.inverse());
            let comps: Vec<CMatrix> = (0..d)
                .map(|r| {
                    let diag = CMatrix::from_fn(n, n, |i, j| {
                        if i == j {
                            coords[i * d + r]
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    });
                    &am * diag * &ainv
                })
                .collect();
            tuple_to_reals(&comps)
        })
    }

    pub fn domain_dim(&self) -> usize {
        self.domain_dim
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    pub fn eval(&self, p: &[f64]) -> Vec<f64> {
        (self.embedding)(p)
    }
}

fn skew_from_params(n: usize, params: &[f64]) -> CMatrix {
    let mut s = CMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (params[k] * FRAC_1_SQRT_2, params[k + 1] * FRAC_1_SQRT_2);
            s[(i, j)] += Complex64::new(a, b);
            s[(j, i)] += Complex64::new(-a, b);
            k += 2;
        }
    }
    s
}

/// Orthonormal basis of skew-Hermitian matrices with zero diagonal:
/// `(E_ij − E_ji)/√2` and `i(E_ij + E_ji)/√2` for `i < j`.
pub fn skew_basis(n: usize) -> Vec<CMatrix> {
    let pairs = n * (n - 1) / 2;
    (0..2 * pairs)
        .map(|k| {
            let mut p = vec![0.0; 2 * pairs];
            p[k] = 1.0;
            skew_from_params(n, &p)
        })
        .collect()
}

/// Real and imaginary parts of every entry, component by component, row-major.
pub fn tuple_to_reals(components: &[CMatrix]) -> Vec<f64> {
    let mut out = Vec::with_capacity(components.iter().map(|m| 2 * m.len()).sum());
    for m in components {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.push(m[(i, j)].re);
                out.push(m[(i, j)].im);
            }
        }
    }
    out
}

fn reals_to_tuple(d: usize, n: usize, x: &[f64]) -> Vec<CMatrix> {
    (0..d)
        .map(|r| {
            CMatrix::from_fn(n, n, |i, j| {
                let k = 2 * (r * n * n + i * n + j);
                Complex64::new(x[k], x[k + 1])
            })
        })
        .collect()
}

fn central_jacobian(chart: &ChartMap, h: f64) -> DMatrix<f64> {
    let k = chart.domain_dim;
    let mut cols = Vec::with_capacity(k);
    let mut p = chart.base_point.clone();
    for c in 0..k {
        let x0 = p[c];
        p[c] = x0 + h;
        let plus = chart.eval(&p);
        p[c] = x0 - h;
        let minus = chart.eval(&p);
        p[c] = x0;
        cols.push(DVector::from_iterator(
            plus.len(),
            plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)),
        ));
    }
    DMatrix::from_columns(&cols)
}

/// `√|det(JᵀJ)|`.
pub fn gram_volume(j: &DMatrix<f64>) -> f64 {
    (j.transpose() * j).determinant().abs().sqrt()
}

/// Finite-difference Gram Jacobian `√|det(JᵀJ)|` of a chart at its base point.
///
/// Central differences at `step` and `step/2`; the two Gram values must agree
/// to 1e−3 relative, and the Richardson combination `(4J(h/2) − J(h))/3` is
/// what gets reported.
pub fn numeric_gram_jacobian(chart: &ChartMap, step: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&step) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {step:e} outside [1e-7, 1e-3]"
        )));
    }
    let coarse = central_jacobian(chart, step);
    let fine = central_jacobian(chart, step / 2.0);
    let (g_coarse, g_fine) = (gram_volume(&coarse), gram_volume(&fine));
    let rel_change = (g_coarse - g_fine).abs() / g_fine.abs().max(f64::MIN_POSITIVE);
    if rel_change > 1e-3 {
        return Err(Error::UnstableDerivative { rel_change });
    }
    let richardson = (fine * 4.0 - coarse) / 3.0;
    Ok(gram_volume(&richardson))
}

/// Tangency test for the commuting variety at `q`:
/// `max_{r≠s} ‖[Q^r, Z^s] − [Q^s, Z^r]‖_F ≤ tol`.
pub fn tangent_check(q: &MatrixTuple, z: &MatrixTuple, tol: f64) -> Result<bool> {
    if q.d() != z.d() || q.n() != z.n() {
        return Err(Error::ShapeMismatch(format!(
            "Q is {}x{}x{}, Z is {}x{}x{}",
            q.d(),
            q.n(),
            q.n(),
            z.d(),
            z.n(),
            z.n()
        )));
    }
    Ok(tangent_residual(q.components(), z.components()) <= tol)
}

fn tangent_residual(q: &[CMatrix], z: &[CMatrix]) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..q.len() {
        for s in r + 1..q.len() {
            let lhs = &q[r] * &z[s] - &z[s] * &q[r];
            let rhs = &q[s] * &z[r] - &z[r] * &q[s];
            worst = worst.max((lhs - rhs).norm());
        }
    }
    worst
}

fn check_distinct(lambda: &EigenConfig) -> Result<()> {
    let scale = (0..lambda.n())
        .map(|i| lambda.point(i).iter().map(|z| z.norm_sqr()).sum::<f64>())
        .fold(1.0, f64::max);
    for i in 0..lambda.n() {
        for j in i + 1..lambda.n() {
            if lambda.dist_sq(i, j) <= 1e-24 * scale {
                return Err(Error::DegenerateEigenvalues);
            }
        }
    }
    Ok(())
}

/// Real dimension of the tangent space of the commuting variety at a diagonal
/// tuple, or of the upper-triangular commuting tuples when `triangular_only`.
///
/// Builds the real linear system `Y^s_ij(λ^r_j − λ^r_i) = Y^r_ij(λ^s_j − λ^s_i)`
/// and reports its nullity, with numerical rank cut at `1e−9·σ_max`.
pub fn tangent_dimension(diag: &MatrixTuple, triangular_only: bool) -> Result<usize> {
    if !diag.is_diagonal(0.0) {
        return Err(Error::ShapeMismatch(
            "tangent_dimension expects a diagonal tuple".into(),
        ));
    }
    let lambda = diag.diagonal_config();
    check_distinct(&lambda)?;
    let (n, d) = (diag.n(), diag.d());
    let entries: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| !triangular_only || i <= j)
        .collect();
    // unknown (entry e, component r) -> complex column e*d + r
    let unknowns = 2 * entries.len() * d;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (e, &(i, j)) in entries.iter().enumerate() {
        for r in 0..d {
            for s in r + 1..d {
                let cr = lambda.coord(j, r) - lambda.coord(i, r);
                let cs = lambda.coord(j, s) - lambda.coord(i, s);
                // Y^s cr − Y^r cs = 0, split into real and imaginary parts
                let mut re = vec![0.0; unknowns];
                let mut im = vec![0.0; unknowns];
                for (col, coef) in [(e * d + s, cr), (e * d + r, -cs)] {
                    re[2 * col] += coef.re;
                    re[2 * col + 1] -= coef.im;
                    im[2 * col] += coef.im;
                    im[2 * col + 1] += coef.re;
                }
                rows.push(re);
                rows.push(im);
            }
        }
    }
    Ok(unknowns - numerical_rank(&rows, unknowns))
}

fn numerical_rank(rows: &[Vec<f64>], cols: usize) -> usize {
    if rows.is_empty() || cols == 0 {
        return 0;
    }
    let m = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    let sv = m.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-9 * top).count()
}

/// Orthonormal basis (as columns) of the null space of `m`.
fn null_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    // pad so the thin SVD returns a full right basis
    let padded = if rows < cols {
        m.clone().resize_vertically(cols, 0.0)
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let top = svd.singular_values.max();
    let keep: Vec<usize> = (0..cols)
        .filter(|&k| top == 0.0 || svd.singular_values[k] <= 1e-9 * top)
        .collect();
    DMatrix::from_fn(cols, keep.len(), |i, c| v_t[(keep[c], i)])
}

/// `√|det Λ_Q|` for an upper-triangular commuting tuple `Q`: the Gram volume
/// of `P^⊥ ad_Q(S)` over an orthonormal basis of zero-diagonal skew-Hermitian
/// `S`, where `P^⊥` projects the tangent space of the commuting variety onto
/// the orthogonal complement of the upper-triangular tangent space.
///
/// With this normalization `κ(D) = 2^{−n(n−1)/2} ∏_{i<j} |λ_i − λ_j|²`.
pub fn kappa_numeric(q: &MatrixTuple) -> Result<f64> {
    if !q.is_upper_triangular(1e-12 * q.frobenius_norm().max(1.0)) {
        return Err(Error::WrongCase(
            "kappa_numeric expects an upper-triangular tuple".into(),
        ));
    }
    check_distinct(&q.diagonal_config())?;
    let (n, d) = (q.n(), q.d());
    let dim = 2 * d * n * n;
    let comps = q.components();
    // constraint map Z ↦ ([Q^r,Z^s] − [Q^s,Z^r])_{r<s} in real coordinates
    let constraint = |z: &[CMatrix]| -> Vec<f64> {
        let mut out = Vec::new();
        for r in 0..d {
            for s in r + 1..d {
                let m = (&comps[r] * &z[s] - &z[s] * &comps[r])
                    - (&comps[s] * &z[r] - &z[r] * &comps[s]);
                out.extend(tuple_to_reals(std::slice::from_ref(&m)));
            }
        }
        out
    };
    let columns: Vec<Vec<f64>> = (0..dim)
        .map(|k| {
            let mut e = vec![0.0; dim];
            e[k] = 1.0;
            constraint(&reals_to_tuple(d, n, &e))
        })
        .collect();
    let rows = columns.first().map(Vec::len).unwrap_or(0);
    let lower_coords: Vec<usize> = (0..dim)
        .filter(|&k| {
            let entry = (k / 2) % (n * n);
            entry / n > entry % n
        })
        .collect();
    let (tangent, tri_tangent) = if rows == 0 {
        let all = DMatrix::<f64>::identity(dim, dim);
        let upper: Vec<usize> = (0..dim).filter(|k| !lower_coords.contains(k)).collect();
        let tri = DMatrix::from_fn(
            dim,
            upper.len(),
            |i, c| if i == upper[c] { 1.0 } else { 0.0 },
        );
        (all, tri)
    } else {
        let full = DMatrix::from_fn(rows, dim, |i, k| columns[k][i]);
        let tangent = null_space(&full);
        // upper-triangular tangent vectors: the constraint system plus vanishing lower entries
        let mut with_lower = full
            .clone()
            .resize_vertically(rows + lower_coords.len(), 0.0);
        for (t, &k) in lower_coords.iter().enumerate() {
            with_lower[(rows + t, k)] = 1.0;
        }
        (tangent, null_space(&with_lower))
    };
    let project = |basis: &DMatrix<f64>, v: &DVector<f64>| basis * (basis.transpose() * v);
    let images: Vec<DVector<f64>> = skew_basis(n)
        .iter()
        .map(|s| {
            let ad: Vec<CMatrix> = comps.iter().map(|m| m * s - s * m).collect();
            let v = DVector::from_vec(tuple_to_reals(&ad));
            let in_v = project(&tangent, &v);
            &in_v - project(&tri_tangent, &in_v)
        })
        .collect();
    if images.is_empty() {
        return Ok(1.0);
    }
    Ok(gram_volume(&DMatrix::from_columns(&images)))
}

/// The three cases with a closed-form `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaCase {
    /// `Q` diagonal, any n and d.
    Diagonal,
    /// d = 1, `Q` upper triangular.
    D1,
    /// n = 2, `Q` upper triangular.
    N2,
}

/// `κ(Q) = ∏_{i<j} |λ_i − λ_j|²` with the unknown constant set to 1.
pub fn kappa_closed_form(case: KappaCase, q: &MatrixTuple) -> Result<f64> {
    let tol = 1e-12 * q.frobenius_norm().max(1.0);
    match case {
        KappaCase::Diagonal if !q.is_diagonal(tol) => {
            return Err(Error::WrongCase("Q is not diagonal".into()))
        }
        KappaCase::D1 if q.d() != 1 => {
            return Err(Error::WrongCase(format!(
                "d = {} but the d = 1 case was requested",
                q.d()
            )))
        }
        KappaCase::N2 if q.n() != 2 => {
            return Err(Error::WrongCase(format!(
                "n = {} but the n = 2 case was requested",
                q.n()
            )))
        }
        _ => {}
    }
    if !q.is_upper_triangular(tol) {
        return Err(Error::WrongCase("Q is not upper triangular".into()));
    }
    let lambda = q.diagonal_config();
    let mut prod = 1.0;
    for i in 0..lambda.n() {
        for j in i + 1..lambda.n() {
            prod *= lambda.dist_sq(i, j);
        }
    }
    Ok(prod)
}

/// An n×n upper-triangular matrix with unit diagonal, stored by its strictly
/// upper entries in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct UnipotentParam {
    n: usize,
    entries: Vec<Complex64>,
}

impl UnipotentParam {
    pub fn new(n: usize, entries: Vec<Complex64>) -> Result<Self> {
        if n == 0 || entries.len() != n * (n - 1) / 2 {
            return Err(Error::ShapeMismatch(format!(
                "{n}x{n} unipotent needs {} entries, got {}",
                n * n.saturating_sub(1) / 2,
                entries.len()
            )));
        }
        Ok(Self { n, entries })
    }

    /// The 2×2 matrix `[[1, α], [0, 1]]`.
    pub fn from_alpha(alpha: Complex64) -> Self {
        Self {
            n: 2,
            entries: vec![alpha],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            entries: vec![Complex64::new(0.0, 0.0); n * (n - 1) / 2],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn matrix(&self) -> CMatrix {
        let mut m = CMatrix::identity(self.n, self.n);
        let mut k = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                m[(i, j)] = self.entries[k];
                k += 1;
            }
        }
        m
    }

    /// Exact inverse by back substitution (also unipotent).
    pub fn inverse(&self) -> CMatrix {
        let a = self.matrix();
        let n = self.n;
        let mut inv = CMatrix::identity(n, n);
        for j in 0..n {
            for i in (0..j).rev() {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in i + 1..=j {
                    acc += a[(i, k)] * inv[(k, j)];
                }
                inv[(i, j)] = -acc;
            }
        }
        inv
    }
}

/// The bordered `(2d+1)×(2d+1)` matrix `Γ_Q` of the 2×2 unipotent chart in
/// the basis `(ξ^1_1 … ξ^d_1, ξ^1_2 … ξ^d_2, E_12)`.
pub fn gamma_matrix_2x2(lambda1: &[Complex64], lambda2: &[Complex64], alpha: Complex64) -> CMatrix {
    let d = lambda1.len();
    assert_eq!(lambda2.len(), d);
    let a = alpha.norm_sqr();
    let delta: Vec<Complex64> = lambda1
        .iter()
        .zip(lambda2)
        .map(|(l1, l2)| l2 - l1)
        .collect();
    let delta_sq: f64 = delta.iter().map(|z| z.norm_sqr()).sum();
    let size = 2 * d + 1;
    let corner = 2 * d;
    let mut g = CMatrix::zeros(size, size);
    for s in 0..d {
        g[(s, s)] = Complex64::new(1.0 + a, 0.0);
        g[(d + s, d + s)] = Complex64::new(1.0 + a, 0.0);
        g[(s, d + s)] = Complex64::new(-a, 0.0);
        g[(d + s, s)] = Complex64::new(-a, 0.0);
        g[(s, corner)] = -alpha.conj() * delta[s];
        g[(d + s, corner)] = alpha.conj() * delta[s];
        g[(corner, s)] = -alpha * delta[s].conj();
        g[(corner, d + s)] = alpha * delta[s].conj();
    }
    g[(corner, corner)] = Complex64::new(delta_sq, 0.0);
    g
}

/// `det Γ_Q = (1+2|α|²)^{d−1} |λ₂ − λ₁|²`, assembled from the Schur
/// complement of the corner entry: the leading 2d-block contributes
/// `(1+2|α|²)^d` and the complement `|Δ|² − Σ_r v_r* M^{-1} v_r`.
pub fn gamma_det_closed(
    d: usize,
    lambda1: &[Complex64],
    lambda2: &[Complex64],
    alpha: Complex64,
) -> f64 {
    assert!(lambda1.len() == d && lambda2.len() == d);
    let a = alpha.norm_sqr();
    let block_det = 1.0 + 2.0 * a;
    let lead = block_det.powi(d as i32);
    // M = [[1+a, −a], [−a, 1+a]], M^{-1} = [[1+a, a], [a, 1+a]] / (1+2a)
    let inv = [
        [(1.0 + a) / block_det, a / block_det],
        [a / block_det, (1.0 + a) / block_det],
    ];
    let mut complement = 0.0;
    for r in 0..d {
        let delta = lambda2[r] - lambda1[r];
        complement += delta.norm_sqr();
        let v = [-alpha.conj() * delta, alpha.conj() * delta];
        let mut quad = Complex64::new(0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                quad += v[i].conj() * inv[i][j] * v[j];
            }
        }
        complement -= quad.re;
    }
    lead * complement
}

/// `Γ_Q = dG* dG` for the chart `(D̃, Ã) ↦ Ã D̃ Ã^{-1}` at `(D, A)`, any n,
/// from the exact derivative `dG(E, B) = Ad_A([A^{-1}B, D]) + Ad_A(E)`.
/// Basis order: `ξ^r_p` point-major (p outer, r inner), then `E_ij`, `i < j`
/// row-major.
pub fn gamma_matrix(lambda: &EigenConfig, a: &UnipotentParam) -> CMatrix {
    let (n, d) = (lambda.n(), lambda.d());
    assert_eq!(a.n(), n);
    let am = a.matrix();
    let ainv = a.inverse();
    let diag = |r: usize| {
        CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                lambda.coord(i, r)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    };
    let ds: Vec<CMatrix> = (0..d).map(diag).collect();
    let unit = |i: usize, j: usize| {
        let mut e = CMatrix::zeros(n, n);
        e[(i, j)] = Complex64::new(1.0, 0.0);
        e
    };
    let flatten = |comps: &[CMatrix]| -> Vec<Complex64> {
        comps
            .iter()
            .flat_map(|m| m.transpose().iter().copied().collect::<Vec<_>>())
            .collect()
    };
    let zero = CMatrix::zeros(n, n);
    let mut cols: Vec<Vec<Complex64>> = Vec::new();
    for p in 0..n {
        let ad_e = &am * unit(p, p) * &ainv;
        for r in 0..d {
            let comps: Vec<CMatrix> = (0..d)
                .map(|s| if s == r { ad_e.clone() } else { zero.clone() })
                .collect();
            cols.push(flatten(&comps));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let b = &ainv * unit(i, j);
            let comps: Vec<CMatrix> = ds
                .iter()
                .map(|dm| &am * (&b * dm - dm * &b) * &ainv)
                .collect();
            cols.push(flatten(&comps));
        }
    }
    let k = cols.len();
    CMatrix::from_fn(k, k, |a_idx, b_idx| {
        cols[a_idx]
            .iter()
            .zip(&cols[b_idx])
            .map(|(x, y)| x.conj() * y)
            .sum()
    })
}

/// Log of the integrand of the unipotent-integral formula for the joint
/// eigenvalue density at diagonal `D` and unipotent `A`, Gaussian weight
/// `e^{−γ‖X‖²}`:
/// `−γ‖D‖² − γ‖A D A^{-1} − D‖² + log κ(A D A^{-1}) + log|det Γ|`.
///
/// n = 2 uses the closed forms `κ = |Δ|²` and `det Γ = (1+2|α|²)^{d−1}|Δ|²`;
/// n = 3 uses [`kappa_numeric`] and the determinant of [`gamma_matrix`].
/// Constants are omitted in both cases.
pub fn log_integrand_thmd2(diag: &MatrixTuple, a: &UnipotentParam, gamma: f64) -> Result<f64> {
    let n = diag.n();
    if !(2..=3).contains(&n) {
        return Err(Error::UnsupportedSize(n));
    }
    if a.n() != n {
        return Err(Error::ShapeMismatch(format!(
            "unipotent is {}x{}, tuple is {n}x{n}",
            a.n(),
            a.n()
        )));
    }
    if !diag.is_diagonal(0.0) {
        return Err(Error::ShapeMismatch(
            "log_integrand_thmd2 expects a diagonal tuple".into(),
        ));
    }
    let lambda = diag.diagonal_config();
    check_distinct(&lambda)?;
    let am = a.matrix();
    let ainv = a.inverse();
    let conj: Vec<CMatrix> = diag.components().iter().map(|m| &am * m * &ainv).collect();
    let off_sq: f64 = conj
        .iter()
        .zip(diag.components())
        .map(|(q, m)| (q - m).norm_squared())
        .sum();
    let diag_sq = diag.frobenius_norm().powi(2);
    let gauss = -gamma * diag_sq - gamma * off_sq;
    if n == 2 {
        let alpha = a.entries()[0];
        let (l1, l2) = (lambda.point(0), lambda.point(1));
        let kappa = lambda.dist_sq(0, 1);
        let det = gamma_det_closed(diag.d(), l1, l2, alpha);
        Ok(gauss + kappa.ln() + det.ln())
    } else {
        let q = MatrixTuple::new(conj)?;
        let kappa = kappa_numeric(&q)?;
        let det = gamma_matrix(&lambda, a).determinant().re.abs();
        Ok(gauss + kappa.ln() + det.ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::tuple::{commutator_defect, reconstruct_tuple};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_c<R: Rng>(rng: &mut R) -> Complex64 {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    }

    fn random_complex_config<R: Rng>(n: usize, d: usize, rng: &mut R) -> EigenConfig {
        EigenConfig::from_complex_flat(d, n, (0..n * d).map(|_| random_c(rng)).collect())
    }

    #[test]
    fn identity_chart_has_unit_volume() {
        let v = numeric_gram_jacobian(&ChartMap::identity(5), 1e-5).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        assert!(numeric_gram_jacobian(&ChartMap::identity(2), 1.0).is_err());
    }

    #[test]
    fn kinked_chart_is_unstable() {
        // one-sided square-root kink at the base point makes step halving disagree
        let chart = ChartMap::new(vec![0.0], |x| vec![x[0].max(0.0).sqrt()]);
        assert!(matches!(
            numeric_gram_jacobian(&chart, 1e-4),
            Err(Error::UnstableDerivative { .. })
        ));
    }

    #[test]
    fn hermitian_chart_volume_is_vandermonde_squared() {
        let lambda =
            EigenConfig::from_real_points(&[vec![0.3, -1.0], vec![1.4, 0.2], vec![-0.8, 0.9]]);
        let v = numeric_gram_jacobian(&ChartMap::hermitian(&lambda), 1e-5).unwrap();
        let want: f64 = [(0, 1), (0, 2), (1, 2)]
            .iter()
            .map(|&(i, j)| lambda.dist_sq(i, j))
            .product();
        assert!((v / want - 1.0).abs() < 1e-6, "{v} vs {want}");
    }

    #[test]
    fn unipotent_chart_volume_is_det_gamma() {
        let mut rng = seeded(11);
        for d in 1..=3 {
            let lambda = random_complex_config(2, d, &mut rng);
            let alpha = random_c(&mut rng) * 0.7;
            let chart = ChartMap::unipotent(&lambda, &UnipotentParam::from_alpha(alpha));
            let v = numeric_gram_jacobian(&chart, 1e-5).unwrap();
            let want = gamma_det_closed(d, lambda.point(0), lambda.point(1), alpha);
            assert!((v / want - 1.0).abs() < 1e-6, "d={d}: {v} vs {want}");
        }
    }

    #[test]
    fn gamma_matrix_special_cases() {
        let l1 = [c(0.5, 0.1), c(-1.0, 0.3)];
        let l2 = [c(0.2, -0.4), c(0.7, 0.0)];
        let g = gamma_matrix_2x2(&l1, &l2, c(0.0, 0.0));
        let s = crate::tuple::point_dist_sq(&l1, &l2);
        for i in 0..5 {
            for j in 0..5 {
                let want = if i != j {
                    0.0
                } else if i < 4 {
                    1.0
                } else {
                    s
                };
                assert_abs_diff_eq!(g[(i, j)].re, want, epsilon = 1e-15);
                assert_abs_diff_eq!(g[(i, j)].im, 0.0, epsilon = 1e-15);
            }
        }
        let mut rng = seeded(12);
        for _ in 0..20 {
            let (a, b, alpha) = (
                [random_c(&mut rng)],
                [random_c(&mut rng)],
                random_c(&mut rng),
            );
            let g = gamma_matrix_2x2(&a, &b, alpha);
            assert!((&g - g.adjoint()).norm() < 1e-12);
            let det = g.determinant();
            assert!((det.re / crate::tuple::point_dist_sq(&a, &b) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn gamma_det_routes_agree() {
        let mut rng = seeded(13);
        for _ in 0..200 {
            let d = rng.gen_range(1..=5);
            let l1: Vec<Complex64> = (0..d).map(|_| random_c(&mut rng)).collect();
            let l2: Vec<Complex64> = (0..d).map(|_| random_c(&mut rng)).collect();
            let alpha = random_c(&mut rng);
            let closed = gamma_det_closed(d, &l1, &l2, alpha);
            let direct = gamma_matrix_2x2(&l1, &l2, alpha).determinant();
            let formula = (1.0 + 2.0 * alpha.norm_sqr()).powi(d as i32 - 1)
                * crate::tuple::point_dist_sq(&l1, &l2);
            assert!((closed / formula - 1.0).abs() < 1e-12);
            assert!((direct.re / formula - 1.0).abs() < 1e-10 && direct.im.abs() < 1e-10 * formula);
        }
        assert_abs_diff_eq!(
            gamma_det_closed(
                2,
                &[c(0.0, 0.0), c(0.0, 0.0)],
                &[c(2.0, 0.0), c(0.0, 0.0)],
                c(1.0, 0.0)
            ),
            12.0,
            epsilon = 1e-12
        );
        assert_eq!(
            gamma_det_closed(
                2,
                &[c(1.0, 1.0), c(0.5, 0.0)],
                &[c(1.0, 1.0), c(0.5, 0.0)],
                c(0.3, 0.2)
            ),
            0.0
        );
    }

    #[test]
    fn general_gamma_matrix_matches_bordered_form() {
        let mut rng = seeded(14);
        for d in 1..=3 {
            let lambda = random_complex_config(2, d, &mut rng);
            let alpha = random_c(&mut rng);
            let general = gamma_matrix(&lambda, &UnipotentParam::from_alpha(alpha));
            // general basis interleaves (p, r); reorder to (ξ_1^·, ξ_2^·, E12)
            let order: Vec<usize> = (0..d).chain((0..d).map(|r| d + r))
                .chain([2 * d])
                .collect();
            let bordered = gamma_matrix_2x2(lambda.point(0), lambda.point(1), alpha);
            for (bi, &gi) in order.iter().enumerate() {
                for (bj, &gj) in order.iter().enumerate() {
                    assert!(
                        (general[(gi, gj)] - bordered[(bi, bj)]).norm() < 1e-12,
                        "d={d}"
                    );
                }
            }
        }
    }

    #[test]
    fn general_gamma_determinant_is_numeric_chart_volume_for_n3() {
        let mut rng = seeded(15);
        let lambda = random_complex_config(3, 2, &mut rng);
        let a = UnipotentParam::new(3, (0..3).map(|_| random_c(&mut rng) * 0.5).collect()).unwrap();
        let det = gamma_matrix(&lambda, &a).determinant().re;
        let v = numeric_gram_jacobian(&ChartMap::unipotent(&lambda, &a), 1e-5).unwrap();
        assert!((v / det - 1.0).abs() < 1e-6, "{v} vs {det}");
    }

    #[test]
    fn unipotent_inverse() {
        let a = UnipotentParam::new(3, vec![c(1.0, 2.0), c(-0.5, 0.0), c(0.3, -0.7)]).unwrap();
        let prod = a.matrix() * a.inverse();
        assert!((prod - CMatrix::identity(3, 3)).norm() < 1e-14);
        assert!(UnipotentParam::new(3, vec![c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn conjugation_offset_norm_identity() {
        let mut rng = seeded(16);
        for d in 1..=4 {
            let lambda = random_complex_config(2, d, &mut rng);
            let alpha = random_c(&mut rng);
            let a = UnipotentParam::from_alpha(alpha);
            let diag = MatrixTuple::diagonal(&lambda);
            let off: f64 = diag
                .components()
                .iter()
                .map(|m| (a.matrix() * m * a.inverse() - m).norm_squared())
                .sum();
            let want = alpha.norm_sqr() * lambda.dist_sq(0, 1);
            assert!((off - want).abs() <= 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn tangent_check_examples() {
        let mut rng = seeded(17);
        let lambda =
            EigenConfig::from_real_points(&[vec![0.3, -1.0], vec![1.4, 0.2], vec![-0.8, 0.9]]);
        let q = reconstruct_tuple(&lambda, &crate::tuple::haar_unitary(3, &mut rng)).unwrap();
        // polynomials in the components commute with everything in sight
        let (q0, q1) = (q.component(0), q.component(1));
        let z = MatrixTuple::new(vec![q0 * q1 + q0 * c(2.0, 0.0), q1 * q1 - q0 * q0 * q1]).unwrap();
        assert!(tangent_check(&q, &z, 1e-10).unwrap());
        // d = 1 is vacuous
        let single = MatrixTuple::new(vec![q0.clone()]).unwrap();
        let any =
            MatrixTuple::new(vec![crate::tuple::complex_gaussian_matrix(3, &mut rng)]).unwrap();
        assert!(tangent_check(&single, &any, 0.0).unwrap());
        // a generic perturbation is not tangent
        let bad = MatrixTuple::new(vec![
            crate::tuple::complex_gaussian_matrix(3, &mut rng),
            crate::tuple::complex_gaussian_matrix(3, &mut rng),
        ])
        .unwrap();
        assert!(!tangent_check(&q, &bad, 1e-6).unwrap());
        let wrong_shape = MatrixTuple::new(vec![CMatrix::zeros(2, 2)]).unwrap();
        assert!(matches!(
            tangent_check(&q, &wrong_shape, 1.0),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn tangent_check_accepts_b_construction() {
        // Y^r_ij = B_ij (λ^r_j − λ^r_i) off the diagonal, arbitrary diagonal
        let mut rng = seeded(18);
        let (n, d) = (4, 3);
        let lambda = random_complex_config(n, d, &mut rng);
        let diag = MatrixTuple::diagonal(&lambda);
        let b = CMatrix::from_fn(n, n, |_, _| random_c(&mut rng));
        let y: Vec<CMatrix> = (0..d)
            .map(|r| {
                CMatrix::from_fn(n, n, |i, j| {
                    if i == j {
                        c(0.37 * (i + r) as f64, 0.1)
                    } else {
                        b[(i, j)] * (lambda.coord(j, r) - lambda.coord(i, r))
                    }
                })
            })
            .collect();
        let z = MatrixTuple::new(y).unwrap();
        assert!(tangent_check(&diag, &z, 1e-10).unwrap());
    }

    #[test]
    fn tangent_dimensions() {
        let mut rng = seeded(19);
        for n in 1..=5 {
            for d in 1..=4 {
                let diag = MatrixTuple::diagonal(&random_complex_config(n, d, &mut rng));
                assert_eq!(
                    tangent_dimension(&diag, false).unwrap(),
                    2 * n * n + 2 * (d - 1) * n,
                    "n={n} d={d}"
                );
                assert_eq!(
                    tangent_dimension(&diag, true).unwrap(),
                    n * n + (2 * d - 1) * n,
                    "n={n} d={d}"
                );
            }
        }
        let degenerate = MatrixTuple::diagonal(&EigenConfig::from_real_points(&[
            vec![1.0, 2.0],
            vec![1.0, 2.0],
        ]));
        assert_eq!(
            tangent_dimension(&degenerate, false),
            Err(Error::DegenerateEigenvalues)
        );
    }

    #[test]
    fn kappa_closed_examples() {
        let diag = MatrixTuple::diagonal(&EigenConfig::from_real_points(&[
            vec![0.0],
            vec![1.0],
            vec![2.0],
        ]));
        assert_abs_diff_eq!(
            kappa_closed_form(KappaCase::Diagonal, &diag).unwrap(),
            4.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            kappa_closed_form(KappaCase::D1, &diag).unwrap(),
            4.0,
            epsilon = 1e-15
        );
        let same = MatrixTuple::diagonal(&EigenConfig::from_real_points(&[
            vec![1.0, 1.0],
            vec![1.0, 1.0],
        ]));
        assert_eq!(kappa_closed_form(KappaCase::N2, &same).unwrap(), 0.0);
        assert!(matches!(
            kappa_closed_form(KappaCase::N2, &diag),
            Err(Error::WrongCase(_))
        ));
        let two_d = MatrixTuple::diagonal(&EigenConfig::from_real_points(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        ]));
        assert!(matches!(
            kappa_closed_form(KappaCase::D1, &two_d),
            Err(Error::WrongCase(_))
        ));
    }

    #[test]
    fn kappa_numeric_matches_closed_forms_up_to_constant() {
        let mut rng = seeded(20);
        // diagonal case, n = 3, d = 2: c_3 = 2^{-3}
        let lambda = random_complex_config(3, 2, &mut rng);
        let diag = MatrixTuple::diagonal(&lambda);
        let ratio =
            kappa_numeric(&diag).unwrap() / kappa_closed_form(KappaCase::Diagonal, &diag).unwrap();
        assert!((ratio - 0.125).abs() < 1e-9, "{ratio}");
        // n = 2 with non-trivial α: c_2 = 1/2 for every α
        for d in 1..=3 {
            let lambda = random_complex_config(2, d, &mut rng);
            let a = UnipotentParam::from_alpha(random_c(&mut rng));
            let q = MatrixTuple::new(
                MatrixTuple::diagonal(&lambda)
                    .components()
                    .iter()
                    .map(|m| a.matrix() * m * a.inverse())
                    .collect(),
            )
            .unwrap();
            assert!(commutator_defect(&q) < 1e-10);
            let ratio = kappa_numeric(&q).unwrap() / kappa_closed_form(KappaCase::N2, &q).unwrap();
            assert!((ratio - 0.5).abs() < 1e-9, "d={d}: {ratio}");
        }
        // d = 1, upper-triangular non-diagonal n = 3
        let lambda = random_complex_config(3, 1, &mut rng);
        let a = UnipotentParam::new(3, (0..3).map(|_| random_c(&mut rng)).collect()).unwrap();
        let q = MatrixTuple::new(vec![
            a.matrix() * MatrixTuple::diagonal(&lambda).component(0) * a.inverse(),
        ])
        .unwrap();
        let ratio = kappa_numeric(&q).unwrap() / kappa_closed_form(KappaCase::D1, &q).unwrap();
        assert!((ratio - 0.125).abs() < 1e-8, "{ratio}");
    }

    #[test]
    fn integrand_at_zero_alpha() {
        let lambda = EigenConfig::from_complex_points(&[
            vec![c(0.3, 0.2), c(-0.1, 0.0)],
            vec![c(-0.5, 0.4), c(0.6, -0.2)],
        ]);
        let diag = MatrixTuple::diagonal(&lambda);
        let gamma = 0.9;
        let got = log_integrand_thmd2(&diag, &UnipotentParam::identity(2), gamma).unwrap();
        let s = lambda.dist_sq(0, 1);
        let want = -gamma * diag.frobenius_norm().powi(2) + 2.0 * s.ln();
        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
    }

    #[test]
    fn integrand_decays_in_alpha() {
        let lambda = EigenConfig::from_complex_points(&[
            vec![c(0.3, 0.2), c(-0.1, 0.0), c(0.0, 1.0)],
            vec![c(-0.5, 0.4), c(0.6, -0.2), c(0.2, 0.2)],
        ]);
        let diag = MatrixTuple::diagonal(&lambda);
        let vals: Vec<f64> = [2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&r| {
                log_integrand_thmd2(&diag, &UnipotentParam::from_alpha(c(r, 0.0)), 1.0).unwrap()
            })
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
    }

    #[test]
    fn integrand_sizes() {
        let four = MatrixTuple::diagonal(&EigenConfig::from_real_points(&[
            vec![0.0],
            vec![1.0],
            vec![2.0],
            vec![3.0],
        ]));
        assert_eq!(
            log_integrand_thmd2(&four, &UnipotentParam::identity(4), 1.0),
            Err(Error::UnsupportedSize(4))
        );
        let mut rng = seeded(21);
        let lambda = random_complex_config(3, 2, &mut rng);
        let a = UnipotentParam::new(3, (0..3).map(|_| random_c(&mut rng) * 0.3).collect()).unwrap();
        let v = log_integrand_thmd2(&MatrixTuple::diagonal(&lambda), &a, 1.0).unwrap();
        assert!(v.is_finite());
    }
}
