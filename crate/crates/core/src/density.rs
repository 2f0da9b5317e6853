//! Closed-form eigenvalue densities and related functionals.
//!
//! All densities are unnormalized log-values. Configurations in R^d use the
//! Euclidean distance between points, so the pair repulsion is
//! `|λ_i − λ_j|²` in R^d rather than a product over components.

use num_complex::Complex64;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::equilibrium::equilibrium_radius;
use crate::error::{Error, Result};
use crate::tuple::{point_dist_sq, EigenConfig};

/// Confining potential `Q(x) = γ|x|^α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalField {
    gamma: f64,
    alpha: f64,
}

impl ExternalField {
    /// `γ ≥ 0` (zero gives the free field), `α > 0`.
    pub fn new(gamma: f64, alpha: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be finite and non-negative, got {gamma}"
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        Ok(Self { gamma, alpha })
    }

    /// `γ|x|²`.
    pub fn gaussian(gamma: f64) -> Self {
        Self::new(gamma, 2.0).expect("invalid gamma")
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Slack exponent of the growth condition; informational only.
    pub fn epsilon(&self) -> f64 {
        self.alpha / 2.0
    }

    pub fn is_quadratic(&self) -> bool {
        self.alpha == 2.0
    }

    pub fn eval_norm_sq(&self, norm_sq: f64) -> f64 {
        if self.is_quadratic() {
            self.gamma * norm_sq
        } else {
            self.gamma * norm_sq.powf(self.alpha / 2.0)
        }
    }

    pub fn eval(&self, x: &[Complex64]) -> f64 {
        self.eval_norm_sq(x.iter().map(|z| z.norm_sqr()).sum())
    }

    pub fn eval_real(&self, x: &[f64]) -> f64 {
        self.eval_norm_sq(x.iter().map(|v| v * v).sum())
    }

    /// `∇Q(x) = αγ|x|^{α−2} x` for real points.
    pub fn gradient_real(&self, x: &[f64], out: &mut [f64]) {
        let norm_sq: f64 = x.iter().map(|v| v * v).sum();
        let factor = if self.is_quadratic() {
            2.0 * self.gamma
        } else if norm_sq == 0.0 {
            0.0
        } else {
            self.alpha * self.gamma * norm_sq.powf(self.alpha / 2.0 - 1.0)
        };
        for (o, v) in out.iter_mut().zip(x) {
            *o = factor * v;
        }
    }

    fn total(&self, cfg: &EigenConfig) -> f64 {
        cfg.points().map(|p| self.eval(p)).sum()
    }
}

/// An unnormalized log-density value.
///
/// `finite` is false at coincident configurations: `log_value` is then `−∞`
/// where the law vanishes and `+∞` where it diverges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityReport {
    pub log_value: f64,
    pub finite: bool,
}

impl DensityReport {
    pub fn finite(log_value: f64) -> Self {
        Self {
            log_value,
            finite: true,
        }
    }

    pub fn vanishing() -> Self {
        Self {
            log_value: f64::NEG_INFINITY,
            finite: false,
        }
    }

    pub fn divergent() -> Self {
        Self {
            log_value: f64::INFINITY,
            finite: false,
        }
    }
}

/// `Σ_{i<j} log|λ_i − λ_j|²`, or `None` if two points coincide.
fn log_vandermonde_sq(cfg: &EigenConfig) -> Option<f64> {
    let mut acc = 0.0;
    for i in 0..cfg.n() {
        for j in i + 1..cfg.n() {
            let s = cfg.dist_sq(i, j);
            if s == 0.0 {
                return None;
            }
            acc += s.ln();
        }
    }
    Some(acc)
}

/// `−Σ_j Q(λ_j) + 2 Σ_{i<j} log|λ_i − λ_j|`.
pub fn log_ginibre_density(lambda: &EigenConfig, q: &ExternalField) -> DensityReport {
    match log_vandermonde_sq(lambda) {
        Some(v) => DensityReport::finite(v - q.total(lambda)),
        None => DensityReport::vanishing(),
    }
}

/// `−n Σ_j Q(y_j) + 2 Σ_{i<j} log|y_i − y_j|`, the density of the
/// configuration rescaled by `1/√n`.
pub fn log_scaled_density(y: &EigenConfig, q: &ExternalField) -> DensityReport {
    match log_vandermonde_sq(y) {
        Some(v) => DensityReport::finite(v - y.n() as f64 * q.total(y)),
        None => DensityReport::vanishing(),
    }
}

/// `Σ_{i<j} log|y_i − y_j|^{−2} + (n−1) Σ_i Q(y_i)`.
pub fn k_n_functional(y: &EigenConfig, q: &ExternalField) -> Result<f64> {
    let v = log_vandermonde_sq(y).ok_or(Error::CoincidentPoints)?;
    Ok(-v + (y.n() as f64 - 1.0) * q.total(y))
}

/// Log of the 2×2 bracket with the Gaussian factor removed:
/// `s · Σ_{j=0}^{d−1} 2^j / ((d−1−j)! γ^{j+1}) · s^{−j}` at `s = |λ₂ − λ₁|²`.
pub fn log_rho_2x2_stripped(delta_sq: f64, d: usize, gamma: f64) -> DensityReport {
    assert!(d >= 1 && gamma > 0.0);
    if delta_sq == 0.0 {
        return match d {
            1 => DensityReport::vanishing(),
            // only the j = 1 term survives: 2/γ²
            2 => DensityReport::finite((2.0 / (gamma * gamma)).ln()),
            _ => DensityReport::divergent(),
        };
    }
    let log_s = delta_sq.ln();
    let terms: Vec<f64> = (0..d)
        .map(|j| {
            let jf = j as f64;
            jf * std::f64::consts::LN_2 - ln_gamma((d - j) as f64) - (jf + 1.0) * gamma.ln()
                + (1.0 - jf) * log_s
        })
        .collect();
    DensityReport::finite(log_sum_exp(&terms))
}

/// Joint eigenvalue density of a Gaussian commuting d-tuple of 2×2 matrices,
/// `e^{−γ(|λ₁|²+|λ₂|²)} |Δ|² Σ_j 2^j/((d−1−j)! γ^{j+1}) |Δ|^{−2j}`.
pub fn log_rho_2x2(
    lambda1: &[Complex64],
    lambda2: &[Complex64],
    d: usize,
    gamma: f64,
) -> DensityReport {
    assert_eq!(lambda1.len(), d);
    assert_eq!(lambda2.len(), d);
    let gauss = -gamma
        * (lambda1
            .iter()
            .chain(lambda2)
            .map(|z| z.norm_sqr())
            .sum::<f64>());
    let bracket = log_rho_2x2_stripped(point_dist_sq(lambda1, lambda2), d, gamma);
    if bracket.finite {
        DensityReport::finite(gauss + bracket.log_value)
    } else {
        bracket
    }
}

/// CDF of `s = |λ₂ − λ₁|²` under the 2×2 joint law.
///
/// The centre `(λ₁+λ₂)/2` separates off a Gaussian, leaving the density
/// `∝ s^{d−1} e^{−γs/2} · s Σ_j a_j s^{−j}` with the bracket coefficients
/// `a_j = 2^j/((d−1−j)! γ^{j+1})`, a mixture of Gamma laws of shape `d−j+1`.
pub fn delta_sq_marginal_cdf(d: usize, gamma: f64) -> impl Fn(f64) -> f64 + Send + Sync {
    assert!(d >= 1 && gamma > 0.0);
    let rate = gamma / 2.0;
    let log_weights: Vec<f64> = (0..d)
        .map(|j| {
            let jf = j as f64;
            let shape = (d - j + 1) as f64;
            jf * std::f64::consts::LN_2 - ln_gamma((d - j) as f64) - (jf + 1.0) * gamma.ln()
                + ln_gamma(shape)
                - shape * rate.ln()
        })
        .collect();
    let top = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|w| (w - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    move |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        weights
            .iter()
            .enumerate()
            .map(|(j, w)| w * gamma_lr((d - j + 1) as f64, rate * s))
            .sum::<f64>()
            / total
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `∫_0^∞ e^{−kr²} (1+2r²)^{d−1} r dr` in closed form, via the binomial
/// expansion and `∫_0^∞ r^{2j+1} e^{−kr²} dr = j!/(2k^{j+1})`.
pub fn radial_integral(d: usize, k: f64) -> f64 {
    assert!(d >= 1 && k > 0.0);
    let m = d - 1;
    let mut binom = 1.0;
    let mut factorial = 1.0;
    let mut pow2 = 1.0;
    let mut total = 0.0;
    for j in 0..=m {
        if j > 0 {
            binom *= (m - j + 1) as f64 / j as f64;
            factorial *= j as f64;
            pow2 *= 2.0;
        }
        total += binom * pow2 * factorial / (2.0 * k.powi(j as i32 + 1));
    }
    total
}

/// The integrand of [`radial_integral`].
pub fn radial_integrand(d: usize, k: f64, r: f64) -> f64 {
    (-k * r * r).exp() * (1.0 + 2.0 * r * r).powi(d as i32 - 1) * r
}

/// Density of one coordinate of the quadratic-field equilibrium law in R^d:
/// a semicircle on `[−R_d, R_d]` for d ≤ 3, and
/// `Γ(d/2)/(√π R^{d−2} Γ((d−1)/2)) (R² − x²)^{(d−3)/2}` for d ≥ 4.
pub fn projected_density(d: usize, gamma: f64, x: f64) -> f64 {
    let r = equilibrium_radius(d, gamma);
    let gap = r * r - x * x;
    if gap <= 0.0 {
        return 0.0;
    }
    if d <= 3 {
        2.0 / (std::f64::consts::PI * r * r) * gap.sqrt()
    } else {
        let df = d as f64;
        let log_norm = ln_gamma(df / 2.0)
            - 0.5 * std::f64::consts::PI.ln()
            - (df - 2.0) * r.ln()
            - ln_gamma((df - 1.0) / 2.0);
        (log_norm + 0.5 * (df - 3.0) * gap.ln()).exp()
    }
}
