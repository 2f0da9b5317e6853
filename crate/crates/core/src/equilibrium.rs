//! Logarithmic energy, discrete minimizers and the closed-form equilibrium
//! laws of the quadratic field `Q(x) = γ|x|²`.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::density::ExternalField;
use crate::error::{Error, Result};
use crate::quadrature::TabulatedCdf;
use crate::rng::{seeded, stream};
use crate::tuple::EigenConfig;

/// Knots used to tabulate radial and projected CDFs.
pub const CDF_KNOTS: usize = 10_000;

const RESTARTS: u64 = 3;

/// Support radius `R_d` of the equilibrium law of `γ|x|²` in R^d.
pub fn equilibrium_radius(d: usize, gamma: f64) -> f64 {
    assert!(d >= 1 && gamma > 0.0, "need d >= 1 and gamma > 0");
    match d {
        1 => (2.0 / gamma).sqrt(),
        2 => 1.0 / gamma.sqrt(),
        3 => (2.0 / (3.0 * gamma)).sqrt(),
        _ => 1.0 / (2.0 * gamma).sqrt(),
    }
}

/// Radius for a general field. Only `α = 2` is supported, except in
/// d ≥ 4 with α ≥ 2 where the law is uniform on the sphere of radius
/// `(αγ)^{−1/α}` (the minimizer of `−log r + γ r^α`).
pub fn equilibrium_radius_for(d: usize, q: &ExternalField) -> Result<f64> {
    if q.gamma() <= 0.0 {
        return Err(Error::InvalidArgument(
            "equilibrium radius needs gamma > 0".into(),
        ));
    }
    if q.is_quadratic() {
        Ok(equilibrium_radius(d, q.gamma()))
    } else if d >= 4 && q.alpha() >= 2.0 {
        Ok((q.alpha() * q.gamma()).powf(-1.0 / q.alpha()))
    } else {
        Err(Error::UnsupportedAlpha(q.alpha()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawKind {
    /// d = 1: `(2/(πR²)) √(R² − x²)`.
    Semicircle,
    /// d = 2: uniform on the disk of radius R.
    UniformDisk,
    /// d = 3: `(1/(π²R²)) (R² − |x|²)^{−1/2}` on the ball of radius R.
    BallLaw,
    /// d ≥ 4: normalized surface measure on the sphere of radius R.
    SphereUniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumLaw {
    pub d: usize,
    pub gamma: f64,
    pub kind: LawKind,
    pub radius: f64,
}

impl EquilibriumLaw {
    pub fn quadratic(d: usize, gamma: f64) -> Self {
        let kind = match d {
            1 => LawKind::Semicircle,
            2 => LawKind::UniformDisk,
            3 => LawKind::BallLaw,
            _ => LawKind::SphereUniform,
        };
        Self {
            d,
            gamma,
            kind,
            radius: equilibrium_radius(d, gamma),
        }
    }

    /// Density of `|x|` under the law (`None` for the singular sphere law).
    pub fn radial_density(&self, r: f64) -> Option<f64> {
        let big = self.radius;
        if r < 0.0 || r >= big {
            return match self.kind {
                LawKind::SphereUniform => None,
                _ => Some(0.0),
            };
        }
        match self.kind {
            // |x| for the semicircle: twice the density on [0, R]
            LawKind::Semicircle => Some(4.0 / (PI * big * big) * (big * big - r * r).sqrt()),
            LawKind::UniformDisk => Some(2.0 * r / (big * big)),
            LawKind::BallLaw => Some(4.0 * r * r / (PI * big * big * (big * big - r * r).sqrt())),
            LawKind::SphereUniform => None,
        }
    }

    /// `E|x|²` under the law, in closed form.
    pub fn second_moment(&self) -> f64 {
        let r2 = self.radius * self.radius;
        match self.kind {
            LawKind::Semicircle => r2 / 4.0,
            LawKind::UniformDisk => r2 / 2.0,
            LawKind::BallLaw => 3.0 * r2 / 4.0,
            LawKind::SphereUniform => r2,
        }
    }
}

/// Closed-form CDF of the semicircle law of radius `r`.
pub fn semicircle_cdf(r: f64, x: f64) -> f64 {
    if x <= -r {
        return 0.0;
    }
    if x >= r {
        return 1.0;
    }
    let t = x / r;
    0.5 + (t * (1.0 - t * t).sqrt() + t.asin()) / PI
}

/// CDF of one coordinate of the equilibrium law, tabulated by quadrature of
/// [`crate::density::projected_density`] in the angle variable `x = R sin φ`.
pub fn projected_cdf(d: usize, gamma: f64) -> impl Fn(f64) -> f64 + Send + Sync {
    let r = equilibrium_radius(d, gamma);
    let table = TabulatedCdf::from_density(
        move |phi: f64| crate::density::projected_density(d, gamma, r * phi.sin()) * r * phi.cos(),
        -FRAC_PI_2,
        FRAC_PI_2,
        CDF_KNOTS,
    );
    move |x: f64| {
        if x <= -r {
            0.0
        } else if x >= r {
            1.0
        } else {
            table.eval((x / r).asin())
        }
    }
}

/// Draws `count` points from the law.
pub fn sample_equilibrium(law: &EquilibriumLaw, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded(seed);
    let big = law.radius;
    match law.kind {
        LawKind::Semicircle => (0..count)
            .map(|_| {
                let u: f64 = rng.gen();
                vec![invert_monotone(|x| semicircle_cdf(big, x), u, -big, big)]
            })
            .collect(),
        LawKind::UniformDisk => (0..count)
            .map(|_| {
                let rad = big * rng.gen::<f64>().sqrt();
                let theta = 2.0 * PI * rng.gen::<f64>();
                vec![rad * theta.cos(), rad * theta.sin()]
            })
            .collect(),
        LawKind::BallLaw => {
            // |x| = R sin φ with φ ∈ [0, π/2] carrying density (4/π) sin²φ;
            // tabulating in φ keeps the table smooth at the edge r = R.
            let table = TabulatedCdf::from_density(
                |phi: f64| 4.0 / PI * phi.sin().powi(2),
                0.0,
                FRAC_PI_2,
                CDF_KNOTS,
            );
            (0..count)
                .map(|_| {
                    let rad = big * table.inverse(rng.gen()).sin();
                    unit_vector(3, &mut rng)
                        .into_iter()
                        .map(|v| v * rad)
                        .collect()
                })
                .collect()
        }
        LawKind::SphereUniform => (0..count)
            .map(|_| {
                unit_vector(law.d, &mut rng)
                    .into_iter()
                    .map(|v| v * big)
                    .collect()
            })
            .collect(),
    }
}

fn unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn invert_monotone(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + lo.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Sup-norm distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_distance_1d(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        worst = worst.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(worst)
}

/// First coordinates of a point list.
pub fn axis_projection(points: &[Vec<f64>]) -> Vec<f64> {
    points.iter().map(|p| p[0]).collect()
}

/// Result of a discrete energy minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub energy: f64,
    pub gradient_norm: f64,
    pub config: EigenConfig,
    pub converged: bool,
    pub iterations: usize,
}

/// `(1/n²) Σ_{i≠j} log(1/|x_i − x_j|) + (1/n) Σ_i Q(x_i)`: the logarithmic
/// energy of the empirical measure with the diagonal removed. Equals
/// `K_n(x)/n² + (1/n²) Σ_i Q(x_i)`.
pub fn discrete_energy(x: &EigenConfig, q: &ExternalField) -> Result<f64> {
    let flat = x.to_flat_reals();
    let e = energy_flat(&flat, x.n(), x.d(), q);
    if e.is_finite() {
        Ok(e)
    } else {
        Err(Error::CoincidentPoints)
    }
}

fn energy_flat(x: &[f64], n: usize, d: usize, q: &ExternalField) -> f64 {
    let nf = n as f64;
    let mut pair = 0.0;
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        for j in i + 1..n {
            let xj = &x[j * d..(j + 1) * d];
            let s: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
            if s == 0.0 {
                return f64::INFINITY;
            }
            // two ordered pairs of log(1/|x_i − x_j|)
            pair -= s.ln();
        }
    }
    let field: f64 = x.chunks_exact(d).map(|p| q.eval_real(p)).sum();
    pair / (nf * nf) + field / nf
}

fn gradient_flat(x: &[f64], n: usize, d: usize, q: &ExternalField, out: &mut [f64]) {
    let nf = n as f64;
    let mut gq = vec![0.0; d];
    for i in 0..n {
        q.gradient_real(&x[i * d..(i + 1) * d], &mut gq);
        for r in 0..d {
            out[i * d + r] = gq[r] / nf;
        }
    }
    let scale = 2.0 / (nf * nf);
    let mut diff = vec![0.0; d];
    for i in 0..n {
        for j in i + 1..n {
            let mut s = 0.0;
            for r in 0..d {
                diff[r] = x[i * d + r] - x[j * d + r];
                s += diff[r] * diff[r];
            }
            for r in 0..d {
                let g = scale * diff[r] / s;
                out[i * d + r] -= g;
                out[j * d + r] += g;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes [`discrete_energy`] over n points in R^d.
///
/// Gradient descent with an Armijo backtracking line search; each line
/// search starts from the Barzilai–Borwein step of the previous iterate.
/// Three restarts from seed-derived streams run in parallel and the lowest
/// energy wins. `converged` is false when `max_iter` ran out before the
/// gradient norm dropped below `tol`; the best iterate is still returned.
pub fn minimize_energy(
    n: usize,
    d: usize,
    q: &ExternalField,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<EnergyReport> {
    if n < 2 || d < 1 {
        return Err(Error::InvalidArgument(format!(
            "minimize_energy needs n >= 2 and d >= 1, got n={n}, d={d}"
        )));
    }
    let reports: Vec<EnergyReport> = (0..RESTARTS)
        .into_par_iter()
        .map(|k| descend(n, d, q, seed, k, max_iter, tol))
        .collect();
    Ok(reports
        .into_iter()
        .min_by(|a, b| a.energy.total_cmp(&b.energy))
        .expect("at least one restart"))
}

fn descend(
    n: usize,
    d: usize,
    q: &ExternalField,
    seed: u64,
    restart: u64,
    max_iter: usize,
    tol: f64,
) -> EnergyReport {
    let mut rng = stream(seed, restart);
    let spread = if q.gamma() > 0.0 {
        (2.0 * q.gamma()).powf(-0.5)
    } else {
        1.0
    };
    let mut x: Vec<f64> = (0..n * d)
        .map(|_| spread * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut e = energy_flat(&x, n, d, q);
    let mut g = vec![0.0; n * d];
    gradient_flat(&x, n, d, q, &mut g);
    let mut gnorm = dot(&g, &g).sqrt();
    let mut step = 1e-2 / gnorm.max(1e-12);
    let mut trial = vec![0.0; n * d];
    let mut g_new = vec![0.0; n * d];
    let mut iterations = 0;
    while iterations < max_iter && gnorm >= tol {
        iterations += 1;
        let g_sq = gnorm * gnorm;
        let mut t = step;
        let mut accepted = None;
        for _ in 0..80 {
            for ((tv, xv), gv) in trial.iter_mut().zip(&x).zip(&g) {
                *tv = xv - t * gv;
            }
            let et = energy_flat(&trial, n, d, q);
            if et.is_finite() && et <= e - 1e-4 * t * g_sq {
                accepted = Some(et);
                break;
            }
            t *= 0.5;
        }
        let Some(et) = accepted else { break };
        gradient_flat(&trial, n, d, q, &mut g_new);
        let mut sy = 0.0;
        let mut ss = 0.0;
        for k in 0..n * d {
            let s = trial[k] - x[k];
            sy += s * (g_new[k] - g[k]);
            ss += s * s;
        }
        step = if sy > 0.0 { ss / sy } else { 2.0 * t };
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        e = et;
        gnorm = dot(&g, &g).sqrt();
    }
    EnergyReport {
        energy: e,
        gradient_norm: gnorm,
        config: EigenConfig::from_real_flat(d, n, x),
        converged: gnorm < tol,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::k_n_functional;
    use crate::quadrature::integrate;
    use approx::assert_abs_diff_eq;

    #[test]
    fn radii() {
        assert_abs_diff_eq!(equilibrium_radius(1, 0.5), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(equilibrium_radius(2, 0.5), 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(
            equilibrium_radius(3, 0.5),
            (4.0f64 / 3.0).sqrt(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(equilibrium_radius(9, 0.5), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(equilibrium_radius(2, 1.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(equilibrium_radius(5, 1.0), 0.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn radius_ordering_and_monotonicity() {
        for gamma in [0.1, 0.5, 1.0, 3.0] {
            let r: Vec<f64> = (1..=4).map(|d| equilibrium_radius(d, gamma)).collect();
            assert!(r[0] > r[1] && r[1] > r[2] && r[2] > r[3]);
            for d in 1..=6 {
                assert!(equilibrium_radius(d, gamma) >= equilibrium_radius(d, gamma * 1.5));
            }
        }
    }

    #[test]
    fn general_alpha_radius() {
        let q = ExternalField::new(0.5, 4.0).unwrap();
        assert_abs_diff_eq!(
            equilibrium_radius_for(5, &q).unwrap(),
            2f64.powf(-0.25),
            epsilon = 1e-15
        );
        assert_eq!(
            equilibrium_radius_for(2, &q),
            Err(Error::UnsupportedAlpha(4.0))
        );
        let q2 = ExternalField::gaussian(0.5);
        assert_abs_diff_eq!(
            equilibrium_radius_for(4, &q2).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        // the general formula reproduces the quadratic one at α = 2
        let alpha = 2.0;
        assert_abs_diff_eq!(
            (alpha * 0.5f64).powf(-1.0 / alpha),
            equilibrium_radius(7, 0.5),
            epsilon = 1e-15
        );
    }

    #[test]
    fn radial_densities_have_unit_mass() {
        for d in 1..=3 {
            let law = EquilibriumLaw::quadratic(d, 0.8);
            let big = law.radius;
            // r = R(1 − u²) removes the inverse square-root edge of the ball law
            let moment = |k: i32| {
                integrate(
                    |u| {
                        let r = big * (1.0 - u * u);
                        r.powi(k) * law.radial_density(r).unwrap() * 2.0 * big * u
                    },
                    0.0,
                    1.0,
                    1e-14,
                    1e-13,
                )
                .value
            };
            let mass = moment(0);
            assert!((mass - 1.0).abs() < 1e-9, "d={d}: {mass}");
            let m2 = moment(2);
            assert!((m2 - law.second_moment()).abs() < 1e-9, "d={d}");
        }
    }

    #[test]
    fn sphere_samples_lie_on_sphere() {
        let law = EquilibriumLaw::quadratic(6, 0.5);
        for p in sample_equilibrium(&law, 1000, 3) {
            let r = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - law.radius).abs() < 1e-12);
        }
    }

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn second_moments_of_samples() {
        for d in 1..=3 {
            let law = EquilibriumLaw::quadratic(d, 0.5);
            let sq: Vec<f64> = sample_equilibrium(&law, 100_000, 10 + d as u64)
                .iter()
                .map(|p| p.iter().map(|v| v * v).sum())
                .collect();
            let (mean, se) = mean_and_se(&sq);
            assert!(
                (mean - law.second_moment()).abs() < 3.0 * se,
                "d={d}: {mean} vs {}",
                law.second_moment()
            );
        }
    }

    #[test]
    fn semicircle_cdf_closed_form() {
        assert_abs_diff_eq!(semicircle_cdf(2.0, 0.0), 0.5, epsilon = 1e-15);
        let q = integrate(
            |x| 2.0 / (PI * 4.0) * (4.0 - x * x).sqrt(),
            -2.0,
            0.7,
            1e-14,
            1e-13,
        )
        .value;
        assert_abs_diff_eq!(semicircle_cdf(2.0, 0.7), q, epsilon = 1e-10);
    }

    #[test]
    fn projected_cdf_matches_semicircle_for_small_d() {
        for d in [1, 2, 3, 4] {
            let cdf = projected_cdf(d, 0.5);
            let r = equilibrium_radius(d, 0.5);
            for x in [-0.9, -0.3, 0.0, 0.5, 0.95] {
                assert!(
                    (cdf(x * r) - semicircle_cdf(r, x * r)).abs() < 1e-7,
                    "d={d} x={x}"
                );
            }
        }
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_distance_1d(&[], |x| x), Err(Error::EmptySamples));
        let cdf = |x: f64| x.clamp(0.0, 1.0);
        assert_abs_diff_eq!(ks_distance_1d(&[0.5], cdf).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            ks_distance_1d(&[-3.0, -2.0, -1.0], cdf).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let mut rng = seeded(4);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
        assert!(ks_distance_1d(&xs, cdf).unwrap() < 0.02);
    }

    #[test]
    fn axis_projection_takes_first_coordinate() {
        assert_eq!(
            axis_projection(&[vec![1.0, 2.0], vec![3.0, 4.0]]),
            vec![1.0, 3.0]
        );
    }

    #[test]
    fn discrete_energy_examples() {
        let q = ExternalField::gaussian(0.5);
        let x = EigenConfig::from_real_points(&[vec![-1.0], vec![1.0]]);
        assert_abs_diff_eq!(
            discrete_energy(&x, &q).unwrap(),
            -(2f64.ln()) / 2.0 + 0.5,
            epsilon = 1e-15
        );
        let one = EigenConfig::from_real_points(&[vec![0.7, -0.2]]);
        assert_abs_diff_eq!(
            discrete_energy(&one, &q).unwrap(),
            0.5 * 0.53,
            epsilon = 1e-15
        );
        let same = EigenConfig::from_real_points(&[vec![1.0], vec![1.0]]);
        assert_eq!(discrete_energy(&same, &q), Err(Error::CoincidentPoints));
    }

    #[test]
    fn discrete_energy_matches_k_n_identity() {
        let mut rng = seeded(5);
        let q = ExternalField::gaussian(1.3);
        for n in [2, 5, 17] {
            for d in [1, 2, 4] {
                let flat: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
                let x = EigenConfig::from_real_flat(d, n, flat);
                let field: f64 = (0..n).map(|i| q.eval_real(&x.real_point(i))).sum();
                let nf = n as f64;
                let via_k = k_n_functional(&x, &q).unwrap() / (nf * nf) + field / (nf * nf);
                assert_abs_diff_eq!(discrete_energy(&x, &q).unwrap(), via_k, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seeded(6);
        let (n, d) = (5, 3);
        let q = ExternalField::new(0.7, 3.0).unwrap();
        let x: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        let mut g = vec![0.0; n * d];
        gradient_flat(&x, n, d, &q, &mut g);
        let h = 1e-6;
        for k in 0..n * d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (energy_flat(&xp, n, d, &q) - energy_flat(&xm, n, d, &q)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7, "k={k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn two_particle_minimizer() {
        // E(t) = −½ log(2t) + t²/2 for x = ±t, minimized at t = 1/√2.
        let q = ExternalField::gaussian(0.5);
        let rep = minimize_energy(2, 1, &q, 11, 10_000, 1e-12).unwrap();
        assert!(rep.converged);
        let gap = (rep.config.coord(0, 0).re - rep.config.coord(1, 0).re).abs();
        assert_abs_diff_eq!(gap, 2f64.sqrt(), epsilon = 1e-6);
        assert_abs_diff_eq!(rep.energy, 0.25 - 0.25 * 2f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn minimizer_energy_is_rotation_invariant_across_seeds() {
        let q = ExternalField::gaussian(1.0);
        let a = minimize_energy(12, 2, &q, 1, 20_000, 1e-9).unwrap();
        let b = minimize_energy(12, 2, &q, 2, 20_000, 1e-9).unwrap();
        assert!(a.converged && b.converged);
        assert_abs_diff_eq!(a.energy, b.energy, epsilon = 1e-8);
    }

    #[test]
    fn minimize_rejects_single_particle() {
        assert!(minimize_energy(1, 1, &ExternalField::gaussian(1.0), 0, 10, 1e-6).is_err());
    }
}
