//! Commuting matrix tuples and their joint spectra.
//!
//! A [`MatrixTuple`] is a d-tuple of n×n complex matrices. Joint eigenvalues
//! are returned as an [`EigenConfig`]: n points in C^d (or R^d when the tuple
//! is Hermitian). Configurations carry no canonical order; every consumer in
//! the crate treats them as multisets.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Absolute Frobenius tolerance for the Hermitian flag.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Absolute Frobenius tolerance for `‖U*U − I‖`.
pub const UNITARY_TOL: f64 = 1e-12;
/// Default tolerance for spectral round-trips.
pub const SPECTRAL_TOL: f64 = 1e-8;

const MAX_COMBINATION_ATTEMPTS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTuple {
    components: Vec<CMatrix>,
    hermitian: bool,
}

impl MatrixTuple {
    /// Builds a tuple from its components. The Hermitian flag is set when
    /// every component is self-adjoint within [`HERMITIAN_TOL`].
    pub fn new(components: Vec<CMatrix>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::ShapeMismatch("tuple needs at least one component".into()))?;
        let n = first.nrows();
        if n == 0 {
            return Err(Error::ShapeMismatch("matrices must be non-empty".into()));
        }
        for (r, m) in components.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::ShapeMismatch(format!(
                    "component {r} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        let hermitian = components
            .iter()
            .all(|m| hermitian_residual(m) <= HERMITIAN_TOL);
        Ok(Self {
            components,
            hermitian,
        })
    }

    /// The diagonal tuple `(diag(λ^1), …, diag(λ^d))`.
    pub fn diagonal(lambda: &EigenConfig) -> Self {
        let n = lambda.n();
        let components = (0..lambda.d())
            .map(|r| {
                CMatrix::from_fn(n, n, |i, j| {
                    if i == j {
                        lambda.coord(i, r)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
            })
            .collect();
        Self {
            components,
            hermitian: lambda.is_real(),
        }
    }

    pub fn d(&self) -> usize {
        self.components.len()
    }

    pub fn n(&self) -> usize {
        self.components[0].nrows()
    }

    pub fn component(&self, r: usize) -> &CMatrix {
        &self.components[r]
    }

    pub fn components(&self) -> &[CMatrix] {
        &self.components
    }

    pub fn hermitian_flag(&self) -> bool {
        self.hermitian
    }

    /// `‖X‖_F`, summed over components.
    pub fn frobenius_norm(&self) -> f64 {
        self.components
            .iter()
            .map(|m| m.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        self.components
            .iter()
            .all(|m| off_part_norm(m, |i, j| i != j) <= tol)
    }

    pub fn is_upper_triangular(&self, tol: f64) -> bool {
        self.components
            .iter()
            .all(|m| off_part_norm(m, |i, j| i > j) <= tol)
    }

    /// Reads the diagonals as a configuration (point j = j-th diagonal entries).
    pub fn diagonal_config(&self) -> EigenConfig {
        let n = self.n();
        let d = self.d();
        let mut coords = Vec::with_capacity(n * d);
        for j in 0..n {
            for m in &self.components {
                coords.push(m[(j, j)]);
            }
        }
        EigenConfig::from_complex_flat(d, n, coords)
    }
}

fn hermitian_residual(m: &CMatrix) -> f64 {
    (m - m.adjoint()).norm()
}

fn off_part_norm(m: &CMatrix, keep: impl Fn(usize, usize) -> bool) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if keep(i, j) {
                acc += m[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// An unordered configuration of n points in C^d (or R^d).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenConfig {
    d: usize,
    n: usize,
    /// Row-major: point i occupies `coords[i*d .. (i+1)*d]`.
    coords: Vec<Complex64>,
    real: bool,
}

impl EigenConfig {
    pub fn from_real_flat(d: usize, n: usize, coords: Vec<f64>) -> Self {
        assert!(d > 0 && n > 0, "configuration needs d, n >= 1");
        assert_eq!(coords.len(), n * d, "expected n*d coordinates");
        Self {
            d,
            n,
            coords: coords.into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
            real: true,
        }
    }

    pub fn from_complex_flat(d: usize, n: usize, coords: Vec<Complex64>) -> Self {
        assert!(d > 0 && n > 0, "configuration needs d, n >= 1");
        assert_eq!(coords.len(), n * d, "expected n*d coordinates");
        let real = coords.iter().all(|z| z.im == 0.0);
        Self { d, n, coords, real }
    }

    pub fn from_real_points(points: &[Vec<f64>]) -> Self {
        let d = points.first().map(Vec::len).unwrap_or(0);
        assert!(points.iter().all(|p| p.len() == d), "ragged point list");
        Self::from_real_flat(d, points.len(), points.concat())
    }

    pub fn from_complex_points(points: &[Vec<Complex64>]) -> Self {
        let d = points.first().map(Vec::len).unwrap_or(0);
        assert!(points.iter().all(|p| p.len() == d), "ragged point list");
        Self::from_complex_flat(d, points.len(), points.concat())
    }

    /// Flat real coordinates in row-major order; for complex configurations
    /// each coordinate contributes `(re, im)`.
    pub fn from_flat_reals(d: usize, n: usize, real: bool, flat: &[f64]) -> Self {
        if real {
            Self::from_real_flat(d, n, flat.to_vec())
        } else {
            assert_eq!(flat.len(), 2 * n * d, "expected 2*n*d reals");
            let coords = flat
                .chunks_exact(2)
                .map(|c| Complex64::new(c[0], c[1]))
                .collect();
            Self {
                d,
                n,
                coords,
                real: false,
            }
        }
    }

    pub fn to_flat_reals(&self) -> Vec<f64> {
        if self.real {
            self.coords.iter().map(|z| z.re).collect()
        } else {
            self.coords.iter().flat_map(|z| [z.re, z.im]).collect()
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn point(&self, i: usize) -> &[Complex64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn coord(&self, i: usize, r: usize) -> Complex64 {
        self.coords[i * self.d + r]
    }

    pub fn real_point(&self, i: usize) -> Vec<f64> {
        self.point(i).iter().map(|z| z.re).collect()
    }

    pub fn points(&self) -> impl Iterator<Item = &[Complex64]> {
        self.coords.chunks_exact(self.d)
    }

    /// `|λ_i − λ_j|²` with the Euclidean norm of R^d or C^d.
    pub fn dist_sq(&self, i: usize, j: usize) -> f64 {
        point_dist_sq(self.point(i), self.point(j))
    }

    /// The same points in a different order.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n);
        let coords = perm
            .iter()
            .flat_map(|&i| self.point(i).iter().copied())
            .collect();
        Self {
            d: self.d,
            n: self.n,
            coords,
            real: self.real,
        }
    }

    /// Largest matched distance under a greedy nearest-neighbour pairing of
    /// the two multisets (sorted order for real one-dimensional data).
    pub fn multiset_distance(&self, other: &EigenConfig) -> f64 {
        assert_eq!(
            (self.d, self.n),
            (other.d, other.n),
            "configurations differ in shape"
        );
        if self.d == 1 && self.real && other.real {
            let mut a: Vec<f64> = self.coords.iter().map(|z| z.re).collect();
            let mut b: Vec<f64> = other.coords.iter().map(|z| z.re).collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            return a
                .iter()
                .zip(&b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
        }
        let mut used = vec![false; other.n];
        let mut worst: f64 = 0.0;
        for p in self.points() {
            let (best, dist) = (0..other.n)
                .filter(|&j| !used[j])
                .map(|j| (j, point_dist_sq(p, other.point(j))))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("equal sizes");
            used[best] = true;
            worst = worst.max(dist.sqrt());
        }
        worst
    }

    /// Multiset equality within `tol` relative to the larger configuration scale.
    pub fn matches_multiset(&self, other: &EigenConfig, tol: f64) -> bool {
        let scale = self.max_abs().max(other.max_abs()).max(1.0);
        self.multiset_distance(other) <= tol * scale
    }

    fn max_abs(&self) -> f64 {
        self.coords.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

pub(crate) fn point_dist_sq(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

/// Largest commutator norm `max_{r<s} ‖X^r X^s − X^s X^r‖_F`.
pub fn commutator_defect(x: &MatrixTuple) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..x.d() {
        for s in r + 1..x.d() {
            let (a, b) = (x.component(r), x.component(s));
            worst = worst.max((a * b - b * a).norm());
        }
    }
    worst
}

/// Joint eigenvalues of a commuting tuple.
///
/// One Schur decomposition of `Σ c_r X^r`, with `c` uniform on the unit
/// sphere, supplies a unitary that triangularizes every component; the
/// diagonals of `U* X^r U` are read off. A coefficient vector that does not
/// triangularize the tuple is redrawn.
pub fn multi_spectrum<R: Rng + ?Sized>(
    x: &MatrixTuple,
    tol: f64,
    rng: &mut R,
) -> Result<EigenConfig> {
    let defect = commutator_defect(x);
    if defect > tol {
        return Err(Error::CommutatorTooLarge { defect, tol });
    }
    let n = x.n();
    let d = x.d();
    let tri_tol = 1e-7 * x.frobenius_norm().max(1.0) + 100.0 * defect;
    for _ in 0..MAX_COMBINATION_ATTEMPTS {
        let c = random_unit_vector(d, rng);
        let mut comb = CMatrix::zeros(n, n);
        for (cr, m) in c.iter().zip(x.components()) {
            comb += m * Complex64::new(*cr, 0.0);
        }
        let (u, _) = comb.schur().unpack();
        let ua = u.adjoint();
        let conjugated: Vec<CMatrix> = x.components().iter().map(|m| &ua * m * &u).collect();
        let lower: f64 = conjugated
            .iter()
            .map(|m| off_part_norm(m, |i, j| i > j).powi(2))
            .sum::<f64>()
            .sqrt();
        if lower > tri_tol {
            continue;
        }
        let mut coords = Vec::with_capacity(n * d);
        for j in 0..n {
            for m in &conjugated {
                let z = m[(j, j)];
                coords.push(if x.hermitian_flag() {
                    Complex64::new(z.re, 0.0)
                } else {
                    z
                });
            }
        }
        return Ok(if x.hermitian_flag() {
            EigenConfig::from_real_flat(d, n, coords.iter().map(|z| z.re).collect())
        } else {
            EigenConfig::from_complex_flat(d, n, coords)
        });
    }
    Err(Error::DegenerateCombination {
        attempts: MAX_COMBINATION_ATTEMPTS,
    })
}

fn random_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `(U diag(λ^1) U*, …, U diag(λ^d) U*)`.
pub fn reconstruct_tuple(lambda: &EigenConfig, u: &CMatrix) -> Result<MatrixTuple> {
    let n = lambda.n();
    if u.nrows() != n || u.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "unitary is {}x{}, expected {n}x{n}",
            u.nrows(),
            u.ncols()
        )));
    }
    let residual = unitarity_residual(u);
    if residual > UNITARY_TOL {
        return Err(Error::NotUnitary { residual });
    }
    let ua = u.adjoint();
    let real = lambda.is_real();
    let components: Vec<CMatrix> = (0..lambda.d())
        .map(|r| {
            let mut scaled = u.clone();
            for j in 0..n {
                let z = lambda.coord(j, r);
                for i in 0..n {
                    scaled[(i, j)] *= z;
                }
            }
            let m = scaled * &ua;
            if real {
                (&m + m.adjoint()) * Complex64::new(0.5, 0.0)
            } else {
                m
            }
        })
        .collect();
    Ok(MatrixTuple {
        components,
        hermitian: real,
    })
}

/// `‖U*U − I‖_F`.
pub fn unitarity_residual(u: &CMatrix) -> f64 {
    (u.adjoint() * u - CMatrix::identity(u.nrows(), u.ncols())).norm()
}

/// Haar-distributed n×n unitary: QR of a complex Ginibre matrix with the
/// column phases fixed so the triangular factor has a positive diagonal.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = complex_gaussian_matrix(n, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let rjj = r[(j, j)];
        let norm = rjj.norm();
        let phase = if norm > 0.0 {
            rjj / norm
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Entries i.i.d. standard complex Gaussian, `E|z|² = 1`.
pub fn complex_gaussian_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(n, n, |_, _| {
        Complex64::new(
            rng.sample::<f64, _>(StandardNormal) * s,
            rng.sample::<f64, _>(StandardNormal) * s,
        )
    })
}

/// A GUE draw: `(G + G*)/2` for a complex Ginibre matrix `G`.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = complex_gaussian_matrix(n, rng);
    (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Both sides of the Hoffman–Wielandt inequality:
/// `Σ_j |μ_j(A) − μ_j(B)|²` over descending spectra, and `‖A − B‖_F²`.
pub fn hoffman_wielandt_gap(a: &CMatrix, b: &CMatrix) -> Result<(f64, f64)> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch(
            "Hoffman-Wielandt needs square matrices of equal size".into(),
        ));
    }
    for m in [a, b] {
        let residual = hermitian_residual(m);
        if residual > HERMITIAN_TOL * m.norm().max(1.0) {
            return Err(Error::NotHermitian { residual });
        }
    }
    let spectrum = |m: &CMatrix| {
        let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        ev
    };
    let (sa, sb) = (spectrum(a), spectrum(b));
    let lhs = sa.iter().zip(&sb).map(|(x, y)| (x - y).powi(2)).sum();
    let rhs = (a - b).norm_squared();
    Ok((lhs, rhs))
}

/// Eigenvalue multiplicity pattern `r_1 ≥ … ≥ r_p ≥ 1` of a Hermitian matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Banner(Vec<usize>);

impl Banner {
    pub fn new(multiplicities: Vec<usize>) -> Result<Self> {
        if multiplicities.is_empty() {
            return Err(Error::InvalidBanner("empty multiplicity list".into()));
        }
        if multiplicities.contains(&0) {
            return Err(Error::InvalidBanner(
                "multiplicities must be positive".into(),
            ));
        }
        if multiplicities.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidBanner(format!(
                "{multiplicities:?} is not non-increasing"
            )));
        }
        Ok(Self(multiplicities))
    }

    /// The generic banner `(1, …, 1)`.
    pub fn generic(n: usize) -> Self {
        Self(vec![1; n])
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.0
    }

    pub fn p(&self) -> usize {
        self.0.len()
    }

    pub fn n(&self) -> usize {
        self.0.iter().sum()
    }
}

/// Real dimension of the banner stratum of commuting Hermitian d-tuples.
pub fn dim_banner_stratum(n: usize, d: usize, banner: &Banner) -> Result<usize> {
    if banner.n() != n {
        return Err(Error::InvalidBanner(format!(
            "multiplicities sum to {}, expected {n}",
            banner.n()
        )));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("d must be positive".into()));
    }
    let p = banner.p();
    Ok(if d == 1 {
        n * n - banner.multiplicities().iter().map(|r| r * r).sum::<usize>() + p
    } else {
        n * n + (d - 2) * n + p
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarietyDimension {
    pub real: usize,
    /// Present for the non-Hermitian (complex) variety.
    pub complex: Option<usize>,
}

/// Dimension of the commuting variety, `n² + (d−1)n` (real for Hermitian
/// tuples, complex otherwise). The non-Hermitian value assumes irreducibility.
pub fn dim_variety(n: usize, d: usize, hermitian: bool) -> VarietyDimension {
    assert!(d > 0, "d must be positive");
    let base = n * n + (d - 1) * n;
    if hermitian {
        VarietyDimension {
            real: base,
            complex: None,
        }
    } else {
        VarietyDimension {
            real: 2 * base,
            complex: Some(base),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Irreducibility {
    Irreducible,
    Reducible,
    Unknown,
}

/// Known irreducibility of the commuting variety of d-tuples of n×n matrices.
///
/// A lookup table, not a decision procedure:
///
/// | condition            | status      |
/// |----------------------|-------------|
/// | d ≤ 2                | irreducible |
/// | n ≤ 3                | irreducible |
/// | d = 3, n ≤ 10        | irreducible |
/// | d = 3, n ≥ 29        | reducible   |
/// | d ≥ 4, n ≥ 4         | reducible   |
/// | otherwise            | unknown     |
pub fn irreducibility_status(d: usize, n: usize) -> Irreducibility {
    use Irreducibility::*;
    match (d, n) {
        (d, _) if d <= 2 => Irreducible,
        (_, n) if n <= 3 => Irreducible,
        (3, n) if n <= 10 => Irreducible,
        (3, n) if n >= 29 => Reducible,
        (d, n) if d >= 4 && n >= 4 => Reducible,
        _ => Unknown,
    }
}
