//! Bayesian recalibration of simulator outputs onto the experimental scale.
//!
//! Raw values are mapped through `a·exp(c·y) + b·y + d`. The parameters are
//! sampled by random-walk Metropolis–Hastings against the matched
//! (experimental, simulated) pairs; each simulated point then gets the mean
//! and population variance of its transformed values over the chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta as BetaSampler, Distribution, Gamma as GammaSampler};
use statrs::distribution::{Beta, Continuous, Gamma, Normal};

use crate::error::{Error, Result};

/// Slope of the fixed linear scaling used when no matched pairs exist.
pub const BASELINE_SLOPE: f64 = 0.57;

/// Magnitude at which the transform saturates instead of overflowing.
pub const SATURATION: f64 = 1e300;

const INIT_RETRIES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl ScalingParams {
    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    /// `y ↦ 0.57·y`.
    pub const fn baseline() -> Self {
        Self::new(0.0, BASELINE_SLOPE, 0.0, 0.0)
    }

    fn to_array(self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    /// Inside the prior support: `a ≥ 0`, `0 ≤ b < 2`, `0 ≤ c < 0.3`.
    pub fn in_support(&self) -> bool {
        self.a >= 0.0 && (0.0..2.0).contains(&self.b) && (0.0..0.3).contains(&self.c) && self.d.is_finite()
    }
}

/// `a·exp(c·y) + b·y + d`, saturated at ±[`SATURATION`]. With `a = 0` the
/// exponential term is dropped even where it would overflow.
pub fn transform(p: &ScalingParams, y: f64) -> f64 {
    let growth = if p.a == 0.0 { 0.0 } else { p.a * (p.c * y).exp() };
    let v = growth + p.b * y + p.d;
    if v.is_nan() {
        SATURATION
    } else {
        v.clamp(-SATURATION, SATURATION)
    }
}

/// Prior hyperparameters, noise level and chain settings.
///
/// `a ~ Gamma(shape, scale)`, `b/2 ~ Beta`, `10c/3 ~ Beta`, `d ~ N(-a, d_sd²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingPriorConfig {
    pub a_shape: f64,
    pub a_scale: f64,
    pub b_alpha: f64,
    pub b_beta: f64,
    pub c_alpha: f64,
    pub c_beta: f64,
    pub d_sd: f64,
    /// Variance of experimental values around the transformed simulated ones.
    pub noise_variance: f64,
    /// Total chain length, burn-in included.
    pub n_samples: usize,
    pub burn_in: usize,
    /// Proposal half-widths for (a, b, c, d).
    pub step: [f64; 4],
    pub init: ScalingParams,
    pub seed: u64,
}

impl Default for ScalingPriorConfig {
    fn default() -> Self {
        Self {
            a_shape: 2.0,
            a_scale: 1.5,
            b_alpha: 1.3,
            b_beta: 2.0,
            c_alpha: 2.0,
            c_beta: 5.0,
            d_sd: 0.15,
            noise_variance: 0.5,
            n_samples: 10_000,
            burn_in: 500,
            step: [0.4, 0.04, 0.04, 0.4],
            init: ScalingParams::new(0.1, 0.57, 0.05, -0.1),
            seed: 0,
        }
    }
}

impl ScalingPriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.a_shape,
            self.a_scale,
            self.b_alpha,
            self.b_beta,
            self.c_alpha,
            self.c_beta,
            self.d_sd,
            self.noise_variance,
        ];
        if positive.iter().chain(&self.step).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("scaling prior parameters must be positive".into()));
        }
        if self.burn_in >= self.n_samples {
            return Err(Error::Config(format!(
                "burn-in {} must be below the sample count {}",
                self.burn_in, self.n_samples
            )));
        }
        Ok(())
    }
}

fn bad<E: std::fmt::Display>(e: E) -> Error {
    Error::Config(format!("scaling prior: {e}"))
}

/// Frozen prior densities for repeated evaluation.
pub struct ScalingPrior {
    a: Gamma,
    b: Beta,
    c: Beta,
    d_sd: f64,
}

impl ScalingPrior {
    pub fn new(cfg: &ScalingPriorConfig) -> Result<Self> {
        Ok(Self {
            a: Gamma::new(cfg.a_shape, 1.0 / cfg.a_scale).map_err(bad)?,
            b: Beta::new(cfg.b_alpha, cfg.b_beta).map_err(bad)?,
            c: Beta::new(cfg.c_alpha, cfg.c_beta).map_err(bad)?,
            d_sd: cfg.d_sd,
        })
    }

    /// Sum of the four log densities at `a`, `b/2`, `10c/3`, `d`; `-inf`
    /// outside the support.
    pub fn log_density(&self, p: &ScalingParams) -> f64 {
        if !p.in_support() {
            return f64::NEG_INFINITY;
        }
        let d = Normal::new(-p.a, self.d_sd)
            .map(|n| n.ln_pdf(p.d))
            .unwrap_or(f64::NEG_INFINITY);
        let v = self.a.ln_pdf(p.a) + self.b.ln_pdf(p.b / 2.0) + self.c.ln_pdf(10.0 * p.c / 3.0) + d;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    fn draw<R: Rng>(&self, cfg: &ScalingPriorConfig, rng: &mut R) -> Option<ScalingParams> {
        let a = GammaSampler::new(cfg.a_shape, cfg.a_scale).ok()?.sample(rng);
        let b = 2.0 * BetaSampler::new(cfg.b_alpha, cfg.b_beta).ok()?.sample(rng);
        let c = 0.3 * BetaSampler::new(cfg.c_alpha, cfg.c_beta).ok()?.sample(rng);
        let z: f64 = rand_distr::StandardNormal.sample(rng);
        Some(ScalingParams::new(a, b, c, -a + cfg.d_sd * z))
    }
}

pub fn log_prior(p: &ScalingParams, cfg: &ScalingPriorConfig) -> f64 {
    match ScalingPrior::new(cfg) {
        Ok(prior) => prior.log_density(p),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Gaussian log-likelihood of `(y_exp, y_sim)` pairs around the transform.
pub fn log_likelihood(p: &ScalingParams, pairs: &[(f64, f64)], noise_variance: f64) -> f64 {
    let norm = -0.5 * (2.0 * std::f64::consts::PI * noise_variance).ln();
    pairs
        .iter()
        .map(|&(ye, ys)| {
            let r = ye - transform(p, ys);
            norm - 0.5 * r * r / noise_variance
        })
        .sum()
}

/// Symmetric uniform random-walk Metropolis–Hastings. Runs `n` steps from
/// `init` and returns the states after the first `burn_in` plus the
/// acceptance rate over all steps. Proposals with `-inf` density are rejected.
pub fn random_walk_metropolis<const D: usize, R: Rng>(
    log_target: impl Fn(&[f64; D]) -> f64,
    init: [f64; D],
    half_widths: [f64; D],
    n: usize,
    burn_in: usize,
    rng: &mut R,
) -> (Vec<[f64; D]>, f64) {
    let mut state = init;
    let mut current = log_target(&state);
    let mut kept = Vec::with_capacity(n.saturating_sub(burn_in));
    let mut accepted = 0usize;
    for step in 0..n {
        let mut proposal = state;
        for (x, h) in proposal.iter_mut().zip(&half_widths) {
            *x += h * (2.0 * rng.random::<f64>() - 1.0);
        }
        let target = log_target(&proposal);
        if target > f64::NEG_INFINITY {
            let u: f64 = rng.random();
            if u.ln() < target - current {
                state = proposal;
                current = target;
                accepted += 1;
            }
        }
        if step >= burn_in {
            kept.push(state);
        }
    }
    let rate = if n == 0 { 0.0 } else { accepted as f64 / n as f64 };
    (kept, rate)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingPosterior {
    pub samples: Vec<ScalingParams>,
    pub acceptance_rate: f64,
    /// No matched pairs were available; the samples follow the prior.
    pub prior_only: bool,
}

impl ScalingPosterior {
    /// Degenerate posterior holding a single fixed parameter set.
    pub fn fixed(params: ScalingParams) -> Self {
        Self {
            samples: vec![params],
            acceptance_rate: 0.0,
            prior_only: false,
        }
    }

    pub fn mean_params(&self) -> ScalingParams {
        let n = self.samples.len() as f64;
        let mut acc = [0.0; 4];
        for s in &self.samples {
            for (a, v) in acc.iter_mut().zip(s.to_array()) {
                *a += v / n;
            }
        }
        ScalingParams::from_array(acc)
    }
}

/// Samples the scaling posterior given `(y_exp, y_sim)` pairs.
pub fn sample_posterior(pairs: &[(f64, f64)], cfg: &ScalingPriorConfig) -> Result<ScalingPosterior> {
    cfg.validate()?;
    let prior = ScalingPrior::new(cfg)?;
    let target = |v: &[f64; 4]| {
        let p = ScalingParams::from_array(*v);
        let lp = prior.log_density(&p);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + log_likelihood(&p, pairs, cfg.noise_variance)
    };
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut init = cfg.init;
    let mut tries = 0;
    while !target(&init.to_array()).is_finite() {
        tries += 1;
        if tries > INIT_RETRIES {
            return Err(Error::ChainInit);
        }
        init = prior.draw(cfg, &mut rng).ok_or(Error::ChainInit)?;
    }
    let (kept, rate) = random_walk_metropolis(target, init.to_array(), cfg.step, cfg.n_samples, cfg.burn_in, &mut rng);
    Ok(ScalingPosterior {
        samples: kept.into_iter().map(ScalingParams::from_array).collect(),
        acceptance_rate: rate,
        prior_only: pairs.is_empty(),
    })
}

/// Per raw value: mean and population variance of the transform over the
/// posterior samples.
pub fn apply_posterior(posterior: &ScalingPosterior, raw: &[f64]) -> Vec<(f64, f64)> {
    let n = posterior.samples.len() as f64;
    raw.iter()
        .map(|&y| {
            let mean = posterior.samples.iter().map(|p| transform(p, y)).sum::<f64>() / n;
            let var = posterior
                .samples
                .iter()
                .map(|p| (transform(p, y) - mean).powi(2))
                .sum::<f64>()
                / n;
            (mean, var)
        })
        .collect()
}
