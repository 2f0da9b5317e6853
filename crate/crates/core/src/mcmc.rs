//! Random-walk Metropolis sampling of eigenvalue configurations.
//!
//! Proposals are isotropic Gaussian moves of every real coordinate at once
//! (real and imaginary parts for complex configurations). The proposal scale
//! may adapt during burn-in toward an acceptance rate in `[0.25, 0.40]`; it
//! is frozen afterwards so the retained chain is a time-homogeneous Markov
//! chain with the target as its stationary law.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::density::{k_n_functional, ExternalField};
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::tuple::{point_dist_sq, EigenConfig};

const ADAPT_WINDOW: usize = 50;
const ADAPT_LOW: f64 = 0.25;
const ADAPT_HIGH: f64 = 0.40;
const MIN_ACCEPTANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub seed: u64,
    pub length: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub proposal_sigma: f64,
    pub adapt: bool,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.burn_in >= self.length {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= burn_in < length (burn_in = {}, length = {})",
                self.burn_in, self.length
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be at least 1".into()));
        }
        if !(self.proposal_sigma > 0.0 && self.proposal_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "proposal_sigma must be positive, got {}",
                self.proposal_sigma
            )));
        }
        Ok(())
    }

    /// Number of retained samples, `⌊(length − burn_in)/thin⌋`.
    pub fn retained(&self) -> usize {
        (self.length - self.burn_in) / self.thin
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub samples: Vec<EigenConfig>,
    /// Acceptance rate over the post-burn-in steps.
    pub acceptance_rate: f64,
    pub final_sigma: f64,
}

/// Metropolis acceptance probability `min(1, exp(Δ log π))`.
pub fn acceptance_probability(delta_log: f64) -> f64 {
    if delta_log.is_nan() {
        0.0
    } else if delta_log >= 0.0 {
        1.0
    } else {
        delta_log.exp()
    }
}

pub(crate) struct RawChain {
    pub samples: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
    pub final_sigma: f64,
}

pub(crate) fn run_metropolis<F: FnMut(&[f64]) -> f64>(
    mut target: F,
    init: Vec<f64>,
    cfg: &ChainConfig,
) -> Result<RawChain> {
    cfg.validate()?;
    let mut lp = target(&init);
    if !lp.is_finite() {
        return Err(Error::InitNotFinite);
    }
    let mut rng = seeded(cfg.seed);
    let dim = init.len();
    let mut x = init;
    let mut proposal = vec![0.0; dim];
    let mut sigma = cfg.proposal_sigma;
    let mut window_accepts = 0usize;
    let mut post_accepts = 0usize;
    let mut samples = Vec::with_capacity(cfg.retained());

    for step in 0..cfg.length {
        for (p, xv) in proposal.iter_mut().zip(&x) {
            *p = xv + sigma * rng.sample::<f64, _>(StandardNormal);
        }
        let lp_new = target(&proposal);
        let u: f64 = rng.gen();
        let accepted = lp_new.is_finite() && u < acceptance_probability(lp_new - lp);
        if accepted {
            std::mem::swap(&mut x, &mut proposal);
            lp = lp_new;
        }

        if step < cfg.burn_in {
            window_accepts += accepted as usize;
            if cfg.adapt && (step + 1) % ADAPT_WINDOW == 0 {
                let rate = window_accepts as f64 / ADAPT_WINDOW as f64;
                if rate < ADAPT_LOW {
                    sigma *= 0.8;
                } else if rate > ADAPT_HIGH {
                    sigma *= 1.25;
                }
                window_accepts = 0;
            }
        } else {
            post_accepts += accepted as usize;
            if (step - cfg.burn_in + 1) % cfg.thin == 0 {
                samples.push(x.clone());
            }
        }
    }

    let acceptance_rate = post_accepts as f64 / (cfg.length - cfg.burn_in) as f64;
    if acceptance_rate < MIN_ACCEPTANCE {
        return Err(Error::ZeroAcceptance {
            rate: acceptance_rate,
        });
    }
    Ok(RawChain {
        samples,
        acceptance_rate,
        final_sigma: sigma,
    })
}

/// Samples configurations from an unnormalized log-density.
pub fn sample_chain<F>(target: F, init: &EigenConfig, cfg: &ChainConfig) -> Result<ChainResult>
where
    F: Fn(&EigenConfig) -> f64,
{
    let (d, n, real) = (init.d(), init.n(), init.is_real());
    let raw = run_metropolis(
        |flat| target(&EigenConfig::from_flat_reals(d, n, real, flat)),
        init.to_flat_reals(),
        cfg,
    )?;
    Ok(ChainResult {
        samples: raw
            .samples
            .iter()
            .map(|flat| EigenConfig::from_flat_reals(d, n, real, flat))
            .collect(),
        acceptance_rate: raw.acceptance_rate,
        final_sigma: raw.final_sigma,
    })
}

/// n i.i.d. Gaussian points in R^d with per-coordinate standard deviation `scale`.
pub fn gaussian_init<R: Rng + ?Sized>(n: usize, d: usize, scale: f64, rng: &mut R) -> EigenConfig {
    EigenConfig::from_real_flat(
        d,
        n,
        (0..n * d)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

/// Per-coordinate spread `(2γ)^{−1/2}` of the default initialization.
pub fn default_init_scale(gamma: f64) -> f64 {
    (2.0 * gamma).powf(-0.5)
}

/// One draw of the joint 2×2 chain: eigenvalues and the unipotent entry α of
/// `Q = A D A^{-1}`, `A = [[1, α], [0, 1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint2x2Sample {
    pub lambda1: Vec<Complex64>,
    pub lambda2: Vec<Complex64>,
    pub alpha: Complex64,
}

impl Joint2x2Sample {
    pub fn delta_sq(&self) -> f64 {
        point_dist_sq(&self.lambda1, &self.lambda2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint2x2Chain {
    pub samples: Vec<Joint2x2Sample>,
    pub acceptance_rate: f64,
    pub final_sigma: f64,
}

/// Unnormalized log of the joint law of `(λ₁, λ₂, α)` for a Gaussian
/// commuting d-tuple of 2×2 matrices:
/// `e^{−γ(|λ₁|²+|λ₂|²)} e^{−γ|α|²|Δ|²} |Δ|⁴ (1+2|α|²)^{d−1}`.
pub fn log_joint_2x2(
    lambda1: &[Complex64],
    lambda2: &[Complex64],
    alpha: Complex64,
    d: usize,
    gamma: f64,
) -> f64 {
    let s = point_dist_sq(lambda1, lambda2);
    if s == 0.0 {
        return f64::NEG_INFINITY;
    }
    let a = alpha.norm_sqr();
    let gauss: f64 = lambda1.iter().chain(lambda2).map(|z| z.norm_sqr()).sum();
    -gamma * gauss - gamma * a * s + 2.0 * s.ln() + (d as f64 - 1.0) * (2.0 * a).ln_1p()
}

fn split_joint_state(state: &[f64], d: usize) -> (Vec<Complex64>, Vec<Complex64>, Complex64) {
    let z = |k: usize| Complex64::new(state[2 * k], state[2 * k + 1]);
    let l1 = (0..d).map(z).collect();
    let l2 = (d..2 * d).map(z).collect();
    (l1, l2, z(2 * d))
}

/// MCMC over `(λ₁, λ₂, α) ∈ C^d × C^d × C` targeting [`log_joint_2x2`].
///
/// The walk runs in the coordinates `(λ₁, λ₂, β)` with `β = α|Δ|`, whose
/// conditional scale does not depend on `|Δ|`; the target carries the
/// Jacobian `|Δ|^{−2}` of that change of variables, so the returned `α`
/// follow the stated joint law.
pub fn sample_2x2_joint(d: usize, gamma: f64, cfg: &ChainConfig) -> Result<Joint2x2Chain> {
    if d == 0 || !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need d >= 1 and gamma > 0, got d={d}, gamma={gamma}"
        )));
    }
    let target = |state: &[f64]| {
        let (l1, l2, beta) = split_joint_state(state, d);
        let s = point_dist_sq(&l1, &l2);
        if s == 0.0 {
            return f64::NEG_INFINITY;
        }
        let alpha = beta / s.sqrt();
        log_joint_2x2(&l1, &l2, alpha, d, gamma) - s.ln()
    };
    let mut rng = seeded(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let scale = default_init_scale(gamma);
    let mut init: Vec<f64> = (0..4 * d)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    init.extend([0.0, 0.0]);
    let raw = run_metropolis(target, init, cfg)?;
    let samples = raw
        .samples
        .iter()
        .map(|state| {
            let (lambda1, lambda2, beta) = split_joint_state(state, d);
            let alpha = beta / point_dist_sq(&lambda1, &lambda2).sqrt();
            Joint2x2Sample {
                lambda1,
                lambda2,
                alpha,
            }
        })
        .collect();
    Ok(Joint2x2Chain {
        samples,
        acceptance_rate: raw.acceptance_rate,
        final_sigma: raw.final_sigma,
    })
}

/// Fraction of chain samples with `K_n(y)/n² ≤ energy_estimate + η`.
///
/// `energy_estimate` stands in for the minimal logarithmic energy; the
/// fraction should approach 1 as n grows at fixed `η`.
pub fn ldp_concentration(
    chain: &ChainResult,
    q: &ExternalField,
    energy_estimate: f64,
    eta: f64,
) -> f64 {
    if chain.samples.is_empty() {
        return 0.0;
    }
    let threshold = energy_estimate + eta;
    let inside = chain
        .samples
        .iter()
        .filter(|y| {
            let n2 = (y.n() * y.n()) as f64;
            k_n_functional(y, q)
                .map(|k| k / n2 <= threshold)
                .unwrap_or(false)
        })
        .count();
    inside as f64 / chain.samples.len() as f64
}
