//! Metrics, cross-validation and learning curves.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::datasets::{Observation, Variant};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::kernel::KernelBank;
use crate::pipeline::{calibrate_simulated, train, ModelMode, PipelineConfig, ScalingMethod};

/// Pearson correlation.
pub fn correlation(y: &[f64], mu: &[f64]) -> Result<f64> {
    assert_eq!(y.len(), mu.len(), "length mismatch");
    let n = y.len() as f64;
    if y.len() < 2 {
        return Err(Error::UndefinedCorrelation);
    }
    let my = y.iter().sum::<f64>() / n;
    let mm = mu.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(mu) {
        let (da, db) = (a - my, b - mm);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn rmse(y: &[f64], mu: &[f64]) -> f64 {
    assert_eq!(y.len(), mu.len(), "length mismatch");
    (y.iter().zip(mu).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
}

/// Negative log predictive density summed over points.
pub fn nlpd(y: &[f64], mu: &[f64], var: &[f64]) -> f64 {
    y.iter()
        .zip(mu)
        .zip(var)
        .map(|((a, m), v)| 0.5 * (2.0 * std::f64::consts::PI * v).ln() + (a - m).powi(2) / (2.0 * v))
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trimmed {
    pub rho: f64,
    pub rmse: f64,
    /// Indices removed, in removal order.
    pub removed: Vec<usize>,
}

/// Removes `⌈fraction·N⌉` points one at a time, each time the point whose
/// removal leaves the highest correlation, and scores the survivors.
pub fn trimmed_metrics(y: &[f64], mu: &[f64], fraction: f64) -> Result<Trimmed> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(Error::Config(format!("trim fraction {fraction} outside [0, 0.5)")));
    }
    let n = y.len();
    let k = (fraction * n as f64).ceil() as usize;
    if n < k + 3 {
        return Err(Error::TooFewSurvivors(n.saturating_sub(k)));
    }
    let mut keep: Vec<usize> = (0..n).collect();
    let mut removed = Vec::with_capacity(k);
    let subset = |idx: &[usize]| -> (Vec<f64>, Vec<f64>) {
        (
            idx.iter().map(|&i| y[i]).collect(),
            idx.iter().map(|&i| mu[i]).collect(),
        )
    };
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for pos in 0..keep.len() {
            let mut rest = keep.clone();
            rest.remove(pos);
            let (a, b) = subset(&rest);
            let r = correlation(&a, &b).unwrap_or(f64::NEG_INFINITY);
            if best.is_none_or(|(_, br)| r > br) {
                best = Some((pos, r));
            }
        }
        let (pos, _) = best.expect("at least one candidate");
        removed.push(keep.remove(pos));
    }
    let (a, b) = subset(&keep);
    Ok(Trimmed {
        rho: correlation(&a, &b)?,
        rmse: rmse(&a, &b),
        removed,
    })
}

/// Summary metrics; undefined values are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub n: usize,
    pub rho: f64,
    pub rmse: f64,
    pub nlpd: f64,
    pub rho_trim: f64,
    pub rmse_trim: f64,
}

pub const DEFAULT_TRIM_FRACTION: f64 = 0.1;

impl Metrics {
    pub fn compute(y: &[f64], mean: &[f64], sd: &[f64], trim_fraction: f64) -> Self {
        let var: Vec<f64> = sd.iter().map(|s| s * s).collect();
        let trimmed = trimmed_metrics(y, mean, trim_fraction).ok();
        Self {
            n: y.len(),
            rho: correlation(y, mean).unwrap_or(f64::NAN),
            rmse: if y.is_empty() { f64::NAN } else { rmse(y, mean) },
            nlpd: nlpd(y, mean, &var),
            rho_trim: trimmed.as_ref().map_or(f64::NAN, |t| t.rho),
            rmse_trim: trimmed.as_ref().map_or(f64::NAN, |t| t.rmse),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CvLevel {
    Mutation,
    Position,
    Protein,
}

impl fmt::Display for CvLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CvLevel::Mutation => "mutation",
            CvLevel::Position => "position",
            CvLevel::Protein => "protein",
        })
    }
}

impl FromStr for CvLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mutation" => Ok(CvLevel::Mutation),
            "position" => Ok(CvLevel::Position),
            "protein" => Ok(CvLevel::Protein),
            _ => Err(Error::Config(format!("unknown CV level {s:?}"))),
        }
    }
}

/// Indices into the experimental observation list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub label: String,
    pub test: Vec<usize>,
    pub train: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CvPlan {
    pub level: CvLevel,
    pub folds: Vec<Fold>,
    pub seed: u64,
}

/// Mutation level: leave one out. Position level: one fold per mutated
/// position, testing every variant mutated there and training on those with
/// the wild-type residue there. Protein level: one fold, no experimental
/// training data.
pub fn make_cv_plan(experimental: &[Observation], level: CvLevel, seed: u64) -> CvPlan {
    let n = experimental.len();
    let folds = match level {
        CvLevel::Mutation => (0..n)
            .map(|i| Fold {
                label: i.to_string(),
                test: vec![i],
                train: (0..n).filter(|&j| j != i).collect(),
            })
            .collect(),
        CvLevel::Position => {
            let positions: BTreeSet<usize> = experimental
                .iter()
                .flat_map(|o| o.variant.mutations().iter().map(|m| m.position))
                .collect();
            positions
                .into_iter()
                .map(|p| {
                    let (test, train) = (0..n).partition(|&i| experimental[i].variant.mutates(p));
                    Fold {
                        label: p.to_string(),
                        test,
                        train,
                    }
                })
                .collect()
        }
        CvLevel::Protein => vec![Fold {
            label: "all".into(),
            test: (0..n).collect(),
            train: vec![],
        }],
    };
    CvPlan { level, folds, seed }
}

/// A model mode or the calibrated simulator on its own.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Predictor {
    Gp(ModelMode),
    /// Predicts a variant by its scaled simulated value; variants without
    /// one are not predicted.
    Simulator(ScalingMethod),
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predictor::Gp(m) => m.fmt(f),
            Predictor::Simulator(ScalingMethod::Bayesian) => f.write_str("sim-bayes"),
            Predictor::Simulator(ScalingMethod::Baseline) => f.write_str("sim-linear"),
        }
    }
}

impl FromStr for Predictor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim-bayes" => Ok(Predictor::Simulator(ScalingMethod::Bayesian)),
            "sim-linear" => Ok(Predictor::Simulator(ScalingMethod::Baseline)),
            other => other.parse().map(Predictor::Gp),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRow {
    pub fold: usize,
    /// Index into the experimental observation list.
    pub index: usize,
    pub y: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Trains on `train` experimental indices (plus all simulated data when the
/// predictor uses it) and predicts `test`.
pub fn train_and_predict(
    bank: &KernelBank,
    experimental: &[Observation],
    simulated: &[Observation],
    train_idx: &[usize],
    test_idx: &[usize],
    predictor: &Predictor,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Vec<(usize, f64, f64)>> {
    let train_obs: Vec<Observation> = train_idx.iter().map(|&i| experimental[i].clone()).collect();
    match predictor {
        Predictor::Gp(mode) => {
            let trained = train(bank, &train_obs, simulated, mode, cfg, seed)?;
            let queries: Vec<Variant> = test_idx.iter().map(|&i| experimental[i].variant.clone()).collect();
            let preds = trained.model.predict(&trained.bank, &queries)?;
            Ok(test_idx.iter().zip(preds).map(|(&i, p)| (i, p.mean, p.sd)).collect())
        }
        Predictor::Simulator(method) => {
            let cfg = PipelineConfig {
                scaling_method: *method,
                ..cfg.clone()
            };
            let cal = calibrate_simulated(&train_obs, simulated, &cfg, seed)?;
            let by_variant: HashMap<&Variant, (f64, f64)> = cal
                .scaled
                .iter()
                .map(|s| (&s.variant, (s.value, s.transform_variance.sqrt())))
                .collect();
            Ok(test_idx
                .iter()
                .filter_map(|&i| by_variant.get(&experimental[i].variant).map(|&(m, sd)| (i, m, sd)))
                .collect())
        }
    }
}

#[cfg(feature = "parallel")]
fn map_jobs<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_jobs<T>(n: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Runs every fold of `plan`; rows are ordered by fold, then test index.
/// Fold `i` uses seed `derive_seed(plan.seed, [i])`.
pub fn run_cv(
    bank: &KernelBank,
    experimental: &[Observation],
    simulated: &[Observation],
    plan: &CvPlan,
    predictor: &Predictor,
    cfg: &PipelineConfig,
) -> Result<Vec<PredictionRow>> {
    let per_fold = map_jobs(plan.folds.len(), |f| {
        let fold = &plan.folds[f];
        train_and_predict(
            bank,
            experimental,
            simulated,
            &fold.train,
            &fold.test,
            predictor,
            cfg,
            derive_seed(plan.seed, &[f as u64]),
        )
    });
    let mut rows = Vec::new();
    for (f, preds) in per_fold.into_iter().enumerate() {
        for (index, mean, sd) in preds? {
            rows.push(PredictionRow {
                fold: f,
                index,
                y: experimental[index].value,
                mean,
                sd,
            });
        }
    }
    Ok(rows)
}

/// Metrics over the concatenated rows.
pub fn pooled_metrics(rows: &[PredictionRow], trim_fraction: f64) -> Metrics {
    let y: Vec<f64> = rows.iter().map(|r| r.y).collect();
    let m: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let s: Vec<f64> = rows.iter().map(|r| r.sd).collect();
    Metrics::compute(&y, &m, &s, trim_fraction)
}

/// How to combine several proteins' predictions into one figure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Pooling {
    #[default]
    Concatenate,
    /// Unweighted mean of per-protein metrics.
    Average,
}

pub fn pool_proteins(per_protein: &[Vec<PredictionRow>], pooling: Pooling, trim_fraction: f64) -> Metrics {
    match pooling {
        Pooling::Concatenate => {
            let all: Vec<PredictionRow> = per_protein.iter().flatten().cloned().collect();
            pooled_metrics(&all, trim_fraction)
        }
        Pooling::Average => {
            let ms: Vec<Metrics> = per_protein.iter().map(|r| pooled_metrics(r, trim_fraction)).collect();
            let avg = |f: fn(&Metrics) -> f64| ms.iter().map(f).sum::<f64>() / ms.len() as f64;
            Metrics {
                n: ms.iter().map(|m| m.n).sum(),
                rho: avg(|m| m.rho),
                rmse: avg(|m| m.rmse),
                nlpd: avg(|m| m.nlpd),
                rho_trim: avg(|m| m.rho_trim),
                rmse_trim: avg(|m| m.rmse_trim),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub size: usize,
    pub predictor: String,
    pub repeat: usize,
    pub n_test: usize,
    pub rho: f64,
    pub rmse: f64,
}

/// `C(n, k)` if it does not exceed `cap`.
fn binomial_up_to(n: usize, k: usize, cap: usize) -> Option<usize> {
    let mut c: u128 = 1;
    for i in 0..k.min(n - k) {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > cap as u128 {
            return None;
        }
    }
    Some(c as usize)
}

/// The `r`-th `k`-subset of `0..n` in lexicographic order.
fn nth_subset(n: usize, k: usize, mut r: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    while out.len() < k {
        let rest = k - out.len() - 1;
        let count = binomial_up_to(n - next - 1, rest, usize::MAX).expect("uncapped");
        if r < count {
            out.push(next);
        } else {
            r -= count;
        }
        next += 1;
    }
    out
}

/// For each size and repeat, trains every predictor on the same experimental
/// subset and scores it on the complement. Subsets are random unless `repeats`
/// covers every subset of that size, in which case each is used once in
/// lexicographic order. Job `(size, repeat)` uses seed
/// `derive_seed(seed, [size, repeat])`.
pub fn learning_curve(
    bank: &KernelBank,
    experimental: &[Observation],
    simulated: &[Observation],
    sizes: &[usize],
    repeats: usize,
    predictors: &[Predictor],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Vec<CurveRow>> {
    let n = experimental.len();
    if let Some(&s) = sizes.iter().find(|&&s| s >= n) {
        return Err(Error::Config(format!(
            "learning-curve size {s} leaves no test variants out of {n}"
        )));
    }
    let jobs: Vec<(usize, usize, bool)> = sizes
        .iter()
        .flat_map(|&s| {
            let all = binomial_up_to(n, s, repeats);
            (0..all.unwrap_or(repeats)).map(move |r| (s, r, all.is_some()))
        })
        .collect();
    let results = map_jobs(jobs.len(), |j| -> Result<Vec<CurveRow>> {
        let (size, repeat, exhaustive) = jobs[j];
        let job_seed = derive_seed(seed, &[size as u64, repeat as u64]);
        let train_idx = if exhaustive {
            nth_subset(n, size, repeat)
        } else {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha20Rng::seed_from_u64(job_seed));
            let mut t = order[..size].to_vec();
            t.sort_unstable();
            t
        };
        let test_idx: Vec<usize> = (0..n).filter(|i| train_idx.binary_search(i).is_err()).collect();
        predictors
            .iter()
            .map(|p| {
                let preds = train_and_predict(bank, experimental, simulated, &train_idx, &test_idx, p, cfg, job_seed)?;
                let y: Vec<f64> = preds.iter().map(|&(i, _, _)| experimental[i].value).collect();
                let mu: Vec<f64> = preds.iter().map(|&(_, m, _)| m).collect();
                Ok(CurveRow {
                    size,
                    predictor: p.to_string(),
                    repeat,
                    n_test: y.len(),
                    rho: correlation(&y, &mu).unwrap_or(f64::NAN),
                    rmse: if y.is_empty() { f64::NAN } else { rmse(&y, &mu) },
                })
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveSummary {
    pub size: usize,
    pub predictor: String,
    pub repeats: usize,
    /// Mean over repeats with a defined correlation; NaN if none.
    pub rho_mean: f64,
    pub rmse_mean: f64,
}

/// Averages curve rows per (size, predictor), in first-appearance order.
pub fn summarize_curve(rows: &[CurveRow]) -> Vec<CurveSummary> {
    let mut keys: Vec<(usize, String)> = Vec::new();
    for r in rows {
        let key = (r.size, r.predictor.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let finite_mean = |v: Vec<f64>| {
        let v: Vec<f64> = v.into_iter().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    keys.into_iter()
        .map(|(size, predictor)| {
            let sel: Vec<&CurveRow> = rows
                .iter()
                .filter(|r| r.size == size && r.predictor == predictor)
                .collect();
            CurveSummary {
                size,
                repeats: sel.len(),
                rho_mean: finite_mean(sel.iter().map(|r| r.rho).collect()),
                rmse_mean: finite_mean(sel.iter().map(|r| r.rmse).collect()),
                predictor,
            }
        })
        .collect()
}
