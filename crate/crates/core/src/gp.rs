//! Gaussian-process regression with source-dependent noise: objective,
//! gradients, bound-constrained hyperparameter search, fitting and
//! prediction.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::function::gamma::ln_gamma;

use crate::datasets::{FusedDataset, Variant};
use crate::error::{Error, Result};
use crate::kernel::{combine_matrices, contract_grad, BaseKernel, KernelBank, MklParams};
use crate::optim::{self, LbfgsConfig, Termination};

/// Noise settings. The priors on the experimental and simulated noise
/// standard deviations are Gamma with (shape, scale).
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseConfig {
    /// Noise standard deviation of the wild-type anchor.
    pub sigma0: f64,
    pub exp_shape: f64,
    pub exp_scale: f64,
    pub sim_shape: f64,
    pub sim_scale: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma0: 1e-6,
            exp_shape: 2.5,
            exp_scale: 0.02,
            sim_shape: 50.0,
            sim_scale: 0.007,
        }
    }
}

fn gamma_mode(shape: f64, scale: f64) -> f64 {
    if shape > 1.0 {
        (shape - 1.0) * scale
    } else {
        scale
    }
}

fn ln_gamma_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
}

fn d_ln_gamma_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    (shape - 1.0) / x - 1.0 / scale
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let v = [
            self.sigma0,
            self.exp_shape,
            self.exp_scale,
            self.sim_shape,
            self.sim_scale,
        ];
        if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Config("noise parameters must be positive".into()));
        }
        Ok(())
    }

    pub fn exp_prior_mode(&self) -> f64 {
        gamma_mode(self.exp_shape, self.exp_scale)
    }

    pub fn sim_prior_mode(&self) -> f64 {
        gamma_mode(self.sim_shape, self.sim_scale)
    }

    /// Log prior density of the two noise standard deviations.
    pub fn log_prior(&self, sigma_e: f64, sigma_s: f64) -> f64 {
        ln_gamma_pdf(sigma_e, self.exp_shape, self.exp_scale) + ln_gamma_pdf(sigma_s, self.sim_shape, self.sim_scale)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// Experimental noise standard deviation.
    pub sigma_e: f64,
    /// Extra noise standard deviation of simulated points.
    pub sigma_s: f64,
    /// Multiplier on the per-point transform standard deviation.
    pub t: f64,
    pub mkl: MklParams,
}

impl ModelParams {
    /// Noise terms at their prior modes, `t = 1`, uniform weights, unit exponents.
    pub fn initial(n_kernels: usize, noise: &NoiseConfig) -> Self {
        Self {
            sigma_e: noise.exp_prior_mode(),
            sigma_s: noise.sim_prior_mode(),
            t: 1.0,
            mkl: MklParams::uniform(n_kernels),
        }
    }

    /// `[σ_E, σ_S, t, w_1..w_K, γ_1..γ_K]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.sigma_e, self.sigma_s, self.t];
        v.extend(&self.mkl.weights);
        v.extend(&self.mkl.exponents);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let k = (v.len() - 3) / 2;
        Self {
            sigma_e: v[0],
            sigma_s: v[1],
            t: v[2],
            mkl: MklParams {
                weights: v[3..3 + k].to_vec(),
                exponents: v[3 + k..3 + 2 * k].to_vec(),
            },
        }
    }
}

/// Per-point noise variances: `σ0²` for the wild type, `σ_E²` for
/// experimental points, `(σ_E + σ_S + t·σ_T(i))²` for simulated points.
pub fn noise_vector(dataset: &FusedDataset, params: &ModelParams, sigma0: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(dataset.len());
    v.push(sigma0 * sigma0);
    v.extend(std::iter::repeat_n(
        params.sigma_e * params.sigma_e,
        dataset.n_experimental(),
    ));
    for &var_t in dataset.transform_variance() {
        let sd = params.sigma_e + params.sigma_s + params.t * var_t.sqrt();
        v.push(sd * sd);
    }
    v
}

/// Factorizes `a`, adding diagonal jitter `1e-10·mean(diag)` scaled by up to
/// three decades when the plain factorization fails.
fn factor(mut a: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok((c, 0.0));
    }
    let n = a.nrows();
    let base = 1e-10 * a.diagonal().mean().abs().max(f64::MIN_POSITIVE);
    let mut added = 0.0;
    for decade in 0..=3 {
        let jitter = base * 10f64.powi(decade);
        for i in 0..n {
            a[(i, i)] += jitter - added;
        }
        added = jitter;
        if let Some(c) = Cholesky::new(a.clone()) {
            log::warn!("kernel system needed diagonal jitter {jitter:.3e}");
            return Ok((c, jitter));
        }
    }
    Err(Error::Indefinite { jitter: added })
}

fn grams_of(bases: &[BaseKernel]) -> Vec<DMatrix<f64>> {
    bases.iter().map(|b| b.gram.clone()).collect()
}

fn system(grams: &[DMatrix<f64>], params: &ModelParams, noise: &[f64]) -> DMatrix<f64> {
    let mut a = combine_matrices(grams, &params.mkl);
    for (i, v) in noise.iter().enumerate() {
        a[(i, i)] += v;
    }
    a
}

/// Gradient of the objective, one entry per parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrad {
    pub sigma_e: f64,
    pub sigma_s: f64,
    pub t: f64,
    pub weights: Vec<f64>,
    pub exponents: Vec<f64>,
}

impl ParamGrad {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.sigma_e, self.sigma_s, self.t];
        v.extend(&self.weights);
        v.extend(&self.exponents);
        v
    }
}

struct Evaluation {
    value: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn check_shapes(dataset: &FusedDataset, grams: &[DMatrix<f64>], params: &ModelParams) -> Result<()> {
    if grams.len() != params.mkl.len() || params.mkl.exponents.len() != params.mkl.len() {
        return Err(Error::Config("parameter count does not match kernel count".into()));
    }
    if grams
        .iter()
        .any(|g| g.nrows() != dataset.len() || g.ncols() != dataset.len())
    {
        return Err(Error::Config("Gram size does not match dataset".into()));
    }
    Ok(())
}

fn evaluate(
    dataset: &FusedDataset,
    grams: &[DMatrix<f64>],
    params: &ModelParams,
    cfg: &NoiseConfig,
) -> Result<Evaluation> {
    check_shapes(dataset, grams, params)?;
    let noise = noise_vector(dataset, params, cfg.sigma0);
    let (chol, _) = factor(system(grams, params, &noise))?;
    let y = DVector::from_column_slice(dataset.targets());
    let alpha = chol.solve(&y);
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let value = -0.5 * y.dot(&alpha) - 0.5 * log_det + cfg.log_prior(params.sigma_e, params.sigma_s);
    Ok(Evaluation { value, chol, alpha })
}

fn evaluate_grad(
    dataset: &FusedDataset,
    grams: &[DMatrix<f64>],
    params: &ModelParams,
    cfg: &NoiseConfig,
) -> Result<(f64, ParamGrad)> {
    let ev = evaluate(dataset, grams, params, cfg)?;
    // W = ααᵀ − A⁻¹; every gradient entry is ½ tr(W ∂A).
    let mut w = -ev.chol.inverse();
    w.ger(1.0, &ev.alpha, &ev.alpha, 1.0);

    let mut g_e = 0.0;
    let mut g_s = 0.0;
    let mut g_t = 0.0;
    for i in dataset.experimental_range() {
        g_e += w[(i, i)] * params.sigma_e;
    }
    for (i, &var_t) in dataset.simulated_range().zip(dataset.transform_variance()) {
        let sd_t = var_t.sqrt();
        let sd = params.sigma_e + params.sigma_s + params.t * sd_t;
        g_e += w[(i, i)] * sd;
        g_s += w[(i, i)] * sd;
        g_t += w[(i, i)] * sd * sd_t;
    }
    let (gw, gg) = contract_grad(grams, &params.mkl, &w)?;
    let grad = ParamGrad {
        sigma_e: g_e + d_ln_gamma_pdf(params.sigma_e, cfg.exp_shape, cfg.exp_scale),
        sigma_s: g_s + d_ln_gamma_pdf(params.sigma_s, cfg.sim_shape, cfg.sim_scale),
        t: g_t,
        weights: gw.into_iter().map(|v| 0.5 * v).collect(),
        exponents: gg.into_iter().map(|v| 0.5 * v).collect(),
    };
    Ok((ev.value, grad))
}

/// `-½ yᵀA⁻¹y − ½ log|A|` plus the log priors on the noise terms, with
/// `A = K + diag(noise)`; the `−(N/2) log 2π` constant is omitted.
pub fn log_marginal(
    dataset: &FusedDataset,
    bases: &[BaseKernel],
    params: &ModelParams,
    cfg: &NoiseConfig,
) -> Result<f64> {
    Ok(evaluate(dataset, &grams_of(bases), params, cfg)?.value)
}

/// Objective value and its analytic gradient.
pub fn log_marginal_grad(
    dataset: &FusedDataset,
    bases: &[BaseKernel],
    params: &ModelParams,
    cfg: &NoiseConfig,
) -> Result<(f64, ParamGrad)> {
    evaluate_grad(dataset, &grams_of(bases), params, cfg)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub t_max: f64,
    pub weight_max: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            sigma_min: 1e-6,
            sigma_max: 1e3,
            t_max: 1e3,
            weight_max: 1e6,
            gamma_min: 1.0,
            gamma_max: 8.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct OptimizerConfig {
    pub lbfgs: LbfgsConfig,
    pub bounds: Bounds,
}

#[derive(Clone, Debug)]
pub struct OptimizeReport {
    pub params: ModelParams,
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub history: Vec<f64>,
}

/// Maximizes the objective from `init`. Noise standard deviations are searched
/// in log space; everything is projected onto `cfg.bounds`.
pub fn optimize(
    dataset: &FusedDataset,
    bases: &[BaseKernel],
    init: &ModelParams,
    noise: &NoiseConfig,
    cfg: &OptimizerConfig,
) -> Result<OptimizeReport> {
    noise.validate()?;
    let grams = grams_of(bases);
    let k = init.mkl.len();
    let b = &cfg.bounds;
    let mut lower = vec![b.sigma_min.ln(), b.sigma_min.ln(), 0.0];
    let mut upper = vec![b.sigma_max.ln(), b.sigma_max.ln(), b.t_max];
    lower.extend(std::iter::repeat_n(0.0, k));
    upper.extend(std::iter::repeat_n(b.weight_max, k));
    lower.extend(std::iter::repeat_n(b.gamma_min, k));
    upper.extend(std::iter::repeat_n(b.gamma_max, k));

    let to_search = |p: &ModelParams| {
        let mut v = p.to_vec();
        v[0] = v[0].ln();
        v[1] = v[1].ln();
        v
    };
    let from_search = |u: &[f64]| {
        let mut v = u.to_vec();
        v[0] = v[0].exp();
        v[1] = v[1].exp();
        ModelParams::from_slice(&v)
    };

    let objective = |u: &[f64]| -> Option<(f64, Vec<f64>)> {
        let p = from_search(u);
        let (f, g) = evaluate_grad(dataset, &grams, &p, noise).ok()?;
        let mut gv = g.to_vec();
        gv[0] *= p.sigma_e;
        gv[1] *= p.sigma_s;
        Some((-f, gv.into_iter().map(|x| -x).collect()))
    };

    let x0 = to_search(init);
    let result = optim::minimize(objective, &x0, &lower, &upper, &cfg.lbfgs).ok_or(Error::NonFiniteObjective)?;
    Ok(OptimizeReport {
        params: from_search(&result.x),
        objective: -result.f,
        initial_objective: -result.history[0],
        iterations: result.iterations,
        termination: result.termination,
        history: result.history.iter().map(|v| -v).collect(),
    })
}

/// Factorized kernel system ready for prediction.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub kernel_names: Vec<String>,
    pub params: ModelParams,
    pub sigma0: f64,
    pub dataset: FusedDataset,
    pub noise: Vec<f64>,
    pub alpha: DVector<f64>,
    pub jitter: f64,
    chol: Cholesky<f64, Dyn>,
}

/// Factorizes `K + diag(noise)` once and solves for the weight vector.
pub fn fit(
    dataset: &FusedDataset,
    bases: &[BaseKernel],
    params: &ModelParams,
    cfg: &NoiseConfig,
) -> Result<TrainedModel> {
    let grams = grams_of(bases);
    check_shapes(dataset, &grams, params)?;
    let noise = noise_vector(dataset, params, cfg.sigma0);
    let (chol, jitter) = factor(system(&grams, params, &noise))?;
    let alpha = chol.solve(&DVector::from_column_slice(dataset.targets()));
    Ok(TrainedModel {
        kernel_names: bases.iter().map(|b| b.matrix_name.clone()).collect(),
        params: params.clone(),
        sigma0: cfg.sigma0,
        dataset: dataset.clone(),
        noise,
        alpha,
        jitter,
        chol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub sd: f64,
}

impl TrainedModel {
    pub fn variants(&self) -> &[Variant] {
        self.dataset.variants()
    }

    /// Predictions from per-kernel cross Grams shaped (queries × training).
    pub fn predict_from_cross(&self, cross: &[DMatrix<f64>]) -> Vec<Prediction> {
        let k = combine_matrices(cross, &self.params.mkl);
        let prior_var = self.params.mkl.self_similarity();
        let means = &k * &self.alpha;
        let v = self
            .chol
            .l_dirty()
            .lower_triangle()
            .solve_lower_triangular(&k.transpose())
            .expect("Cholesky factor has a positive diagonal");
        (0..k.nrows())
            .map(|i| {
                let var = prior_var - v.column(i).norm_squared();
                Prediction {
                    mean: means[i],
                    sd: var.max(0.0).sqrt(),
                }
            })
            .collect()
    }

    /// Predictive means and latent standard deviations for `queries`.
    pub fn predict(&self, bank: &KernelBank, queries: &[Variant]) -> Result<Vec<Prediction>> {
        if bank.names() != self.kernel_names {
            return Err(Error::Config("kernel bank does not match the model's kernels".into()));
        }
        let cross = bank.cross_grams(queries, self.dataset.variants())?;
        Ok(self.predict_from_cross(&cross.into_iter().map(|b| b.gram).collect::<Vec<_>>()))
    }
}

const MAGIC: &[u8; 8] = b"DDGFMDL\0";
const VERSION: u32 = 1;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend((s.len() as u32).to_le_bytes());
    out.extend(s.as_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend(v.to_le_bytes());
}

/// Binary model layout, all integers and floats little-endian:
///
/// ```text
/// magic "DDGFMDL\0" | version u32 | dataset digest [32]
/// wild-type sequence (u32 len + UTF-8)
/// K u32 | K × kernel name (u32 len + UTF-8)
/// σ0 σ_E σ_S t  w[K] γ[K]  jitter      (f64)
/// N u64 | N_E u64
/// N × (variant notation (u32 len + UTF-8), target f64, transform variance f64, noise variance f64)
/// α[N] f64
/// ```
pub fn write_model(model: &TrainedModel, bank: &KernelBank) -> Vec<u8> {
    let graph = &bank.graph;
    let mut out = Vec::new();
    out.extend(MAGIC);
    out.extend(VERSION.to_le_bytes());
    out.extend(model.dataset.digest());
    let wt: String = graph.wild_type().iter().map(|a| a.one_letter()).collect();
    put_str(&mut out, &wt);
    out.extend((model.kernel_names.len() as u32).to_le_bytes());
    for n in &model.kernel_names {
        put_str(&mut out, n);
    }
    let p = &model.params;
    for v in [model.sigma0, p.sigma_e, p.sigma_s, p.t] {
        put_f64(&mut out, v);
    }
    for &v in p.mkl.weights.iter().chain(&p.mkl.exponents) {
        put_f64(&mut out, v);
    }
    put_f64(&mut out, model.jitter);
    let ds = &model.dataset;
    out.extend((ds.len() as u64).to_le_bytes());
    out.extend((ds.n_experimental() as u64).to_le_bytes());
    let sim_start = ds.simulated_range().start;
    for (i, (v, y)) in ds.variants().iter().zip(ds.targets()).enumerate() {
        put_str(&mut out, &v.notation(graph));
        put_f64(&mut out, *y);
        let var_t = if i >= sim_start {
            ds.transform_variance()[i - sim_start]
        } else {
            0.0
        };
        put_f64(&mut out, var_t);
        put_f64(&mut out, model.noise[i]);
    }
    for &a in model.alpha.iter() {
        put_f64(&mut out, a);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::ModelFormat("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::ModelFormat("invalid UTF-8".into()))
    }
}

/// Restores a model written by [`write_model`]. The bank must hold the same
/// structure and the model's kernels; the system is refactorized from the
/// stored parameters.
pub fn read_model(bytes: &[u8], bank: &KernelBank) -> Result<TrainedModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::ModelFormat("not a model file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let wt = r.string()?;
    let bank_wt: String = bank.graph.wild_type().iter().map(|a| a.one_letter()).collect();
    if wt != bank_wt {
        return Err(Error::ModelFormat("structure sequence differs from the model's".into()));
    }
    let k = r.u32()? as usize;
    let names = (0..k).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let bank = bank.subset(&names)?;
    let sigma0 = r.f64()?;
    let mut pv = vec![r.f64()?, r.f64()?, r.f64()?];
    for _ in 0..2 * k {
        pv.push(r.f64()?);
    }
    let params = ModelParams::from_slice(&pv);
    let _jitter = r.f64()?;
    let n = r.u64()? as usize;
    let n_exp = r.u64()? as usize;
    if n == 0 || n_exp >= n || n > bytes.len() {
        return Err(Error::ModelFormat("invalid block sizes".into()));
    }
    let mut variants = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut var_t = Vec::new();
    for i in 0..n {
        let text = r.string()?;
        let v = crate::datasets::parse_mutation_string(&text, &bank.graph)
            .map_err(|e| Error::ModelFormat(format!("variant {text:?}: {e}")))?;
        variants.push(v);
        targets.push(r.f64()?);
        let t = r.f64()?;
        if i > n_exp {
            var_t.push(t);
        }
        let _noise = r.f64()?;
    }
    let stored_alpha = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(Error::ModelFormat("trailing bytes".into()));
    }
    let dataset = FusedDataset::from_parts(variants, targets, var_t, n_exp)?;
    if dataset.digest() != digest {
        return Err(Error::ModelFormat("dataset digest mismatch".into()));
    }
    let cfg = NoiseConfig {
        sigma0,
        ..Default::default()
    };
    let bases = bank.grams(dataset.variants())?;
    let model = fit(&dataset, &bases, &params, &cfg)?;
    let drift = model
        .alpha
        .iter()
        .zip(&stored_alpha)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / b.abs().max(1.0)));
    if drift > 1e-6 {
        return Err(Error::ModelFormat(format!(
            "weight vector does not reproduce (drift {drift:.2e})"
        )));
    }
    Ok(model)
}
