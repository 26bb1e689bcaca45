//! End-to-end training: calibrate simulated values, fuse, optimize, fit.

use std::fmt;
use std::str::FromStr;

use crate::calibrate::{apply_posterior, sample_posterior, ScalingParams, ScalingPosterior, ScalingPriorConfig};
use crate::datasets::{fuse, matched_pairs, Observation, ScaledPoint};
use crate::error::{Error, Result};
use crate::gp::{fit, optimize, ModelParams, NoiseConfig, OptimizeReport, OptimizerConfig, TrainedModel};
use crate::kernel::KernelBank;
use crate::submat::BLOSUM62;

/// Which base kernels a model uses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KernelChoice {
    /// Every matrix in the bank, combined with learned weights and exponents.
    All,
    /// One named matrix.
    Single(String),
}

impl KernelChoice {
    pub fn blosum62() -> Self {
        KernelChoice::Single(BLOSUM62.to_string())
    }

    /// Restricts `bank` to this choice. `BLOSUM62` and `B62` name the AAindex entry.
    pub fn select(&self, bank: &KernelBank) -> Result<KernelBank> {
        match self {
            KernelChoice::All => Ok(bank.clone()),
            KernelChoice::Single(name) => {
                let name = match name.to_ascii_uppercase().as_str() {
                    "BLOSUM62" | "B62" => BLOSUM62.to_string(),
                    _ => name.clone(),
                };
                bank.subset(&[name])
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelMode {
    /// Train on calibrated simulated values in addition to experimental ones.
    pub fusion: bool,
    pub kernels: KernelChoice,
}

impl ModelMode {
    pub fn fusion_all() -> Self {
        Self {
            fusion: true,
            kernels: KernelChoice::All,
        }
    }

    /// The four standard fusion × kernel combinations.
    pub fn standard() -> Vec<Self> {
        vec![
            Self::fusion_all(),
            Self {
                fusion: true,
                kernels: KernelChoice::blosum62(),
            },
            Self {
                fusion: false,
                kernels: KernelChoice::All,
            },
            Self {
                fusion: false,
                kernels: KernelChoice::blosum62(),
            },
        ]
    }
}

/// Labels: `fusion-mkl`, `fusion-HENS920102`, `exp-mkl`, `exp-HENS920102`.
impl fmt::Display for ModelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = if self.fusion { "fusion" } else { "exp" };
        match &self.kernels {
            KernelChoice::All => write!(f, "{data}-mkl"),
            KernelChoice::Single(name) => write!(f, "{data}-{name}"),
        }
    }
}

impl FromStr for ModelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (data, kernels) = s
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("model mode {s:?}: expected <fusion|exp>-<mkl|MATRIX>")))?;
        let fusion = match data {
            "fusion" => true,
            "exp" => false,
            _ => return Err(Error::Config(format!("model mode {s:?}: expected fusion or exp"))),
        };
        let kernels = match kernels {
            "mkl" => KernelChoice::All,
            name => KernelChoice::Single(name.to_string()),
        };
        Ok(Self { fusion, kernels })
    }
}

/// How simulated values are mapped to the experimental scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ScalingMethod {
    /// Sample the transform posterior from matched pairs.
    #[default]
    Bayesian,
    /// Fixed `0.57·y` for every point.
    Baseline,
}

/// Behaviour of Bayesian scaling when no experimental value has a simulated
/// counterpart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NoPairs {
    /// Fall back to the fixed `0.57·y` scaling with zero transform variance.
    #[default]
    Baseline,
    /// Sample the prior.
    PriorOnly,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PipelineConfig {
    pub scaling: ScalingPriorConfig,
    pub scaling_method: ScalingMethod,
    pub no_pairs: NoPairs,
    pub noise: NoiseConfig,
    pub optimizer: OptimizerConfig,
}

#[derive(Clone, Debug)]
pub struct Calibration {
    pub posterior: ScalingPosterior,
    pub scaled: Vec<ScaledPoint>,
    pub n_pairs: usize,
}

/// Calibrates every simulated observation against the matched experimental
/// ones. The chain seed is taken from `seed`, overriding `cfg.scaling.seed`.
pub fn calibrate_simulated(
    experimental: &[Observation],
    simulated: &[Observation],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Calibration> {
    let pairs = matched_pairs(experimental, simulated);
    let posterior = match (cfg.scaling_method, pairs.is_empty(), cfg.no_pairs) {
        (ScalingMethod::Baseline, _, _) | (ScalingMethod::Bayesian, true, NoPairs::Baseline) => {
            ScalingPosterior::fixed(ScalingParams::baseline())
        }
        _ => {
            let scaling = ScalingPriorConfig {
                seed,
                ..cfg.scaling.clone()
            };
            sample_posterior(&pairs, &scaling)?
        }
    };
    let raw: Vec<f64> = simulated.iter().map(|o| o.value).collect();
    let scaled = apply_posterior(&posterior, &raw)
        .into_iter()
        .zip(simulated)
        .map(|((value, transform_variance), o)| ScaledPoint {
            variant: o.variant.clone(),
            value,
            transform_variance,
        })
        .collect();
    Ok(Calibration {
        posterior,
        scaled,
        n_pairs: pairs.len(),
    })
}

pub struct Trained {
    pub model: TrainedModel,
    /// Bank restricted to the model's kernels.
    pub bank: KernelBank,
    pub calibration: Option<Calibration>,
    pub report: OptimizeReport,
}

/// Trains one model mode on the given observations.
pub fn train(
    bank: &KernelBank,
    experimental: &[Observation],
    simulated: &[Observation],
    mode: &ModelMode,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Trained> {
    let bank = mode.kernels.select(bank)?;
    let calibration = if mode.fusion && !simulated.is_empty() {
        Some(calibrate_simulated(experimental, simulated, cfg, seed)?)
    } else {
        None
    };
    let scaled = calibration.as_ref().map_or(&[][..], |c| &c.scaled[..]);
    let dataset = fuse(experimental, scaled)?;
    let bases = bank.grams(dataset.variants())?;
    let init = ModelParams::initial(bases.len(), &cfg.noise);
    let report = optimize(&dataset, &bases, &init, &cfg.noise, &cfg.optimizer)?;
    let model = fit(&dataset, &bases, &report.params, &cfg.noise)?;
    Ok(Trained {
        model,
        bank,
        calibration,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_labels_round_trip() {
        for m in ModelMode::standard() {
            assert_eq!(m.to_string().parse::<ModelMode>().unwrap(), m);
        }
        assert!("both-mkl".parse::<ModelMode>().is_err());
    }
}
