use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, Context};
use ddgfusion::calibrate::ScalingPriorConfig;
use ddgfusion::datasets::{load_observations, read_variant_column, AbsentResiduePolicy, Observation, Source, Variant};
use ddgfusion::eval::{
    learning_curve as run_curve, make_cv_plan, pooled_metrics, run_cv, summarize_curve, CvLevel, Metrics, Predictor,
};
use ddgfusion::gp::{read_model, write_model};
use ddgfusion::kernel::{gram, KernelBank};
use ddgfusion::pipeline::{calibrate_simulated, train as train_mode, KernelChoice, ModelMode, NoPairs, PipelineConfig};
use ddgfusion::structio::{
    build_contact_graph, parse_structure, select_chain, ContactGraph, DEFAULT_CONTACT_THRESHOLD,
};
use ddgfusion::submat::{load_matrix_dir, shipped_matrices, MatrixSelection};

use crate::config::{usage, Settings};
use crate::{ChainArgs, DataArgs, MatrixArgs, StructureArgs};

pub struct Ctx {
    pub settings: Settings,
    pub seed: u64,
}

impl Ctx {
    /// The `#` line opening every output CSV. Call after all settings are resolved.
    fn header(&self, command: &str) -> String {
        format!(
            "# ddgfusion {} seed={} config={}\n",
            env!("CARGO_PKG_VERSION"),
            self.seed,
            self.settings.digest(command)
        )
    }

    /// An output location; kept out of the digest so reruns elsewhere match.
    fn output(&mut self, key: &str, flag: Option<String>) -> anyhow::Result<Option<String>> {
        let v = self.settings.get(key, flag)?;
        self.settings.forget(key);
        Ok(v)
    }
}

fn read_text(path: &str) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {path}"))
}

/// Writes to `path`, or stdout when absent.
fn emit(path: Option<&str>, content: &[u8]) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, content).with_context(|| format!("cannot write {p}")),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(content).context("cannot write to stdout")
        }
    }
}

fn quoted(v: &Variant, graph: &ContactGraph) -> String {
    format!("\"{}\"", v.notation(graph))
}

struct Structure {
    graph: ContactGraph,
    path: String,
}

fn load_structure(ctx: &mut Ctx, a: &StructureArgs) -> anyhow::Result<Structure> {
    let path: String = ctx.settings.require("structure", a.structure.clone())?;
    let chain = ctx.settings.get("chain", a.chain)?;
    let threshold = ctx
        .settings
        .get_or("threshold", a.threshold, DEFAULT_CONTACT_THRESHOLD)?;
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(usage(format!("--threshold must be positive, got {threshold}")));
    }
    let text = read_text(&path)?;
    let residues = parse_structure(&text)
        .and_then(|r| select_chain(r, chain))
        .with_context(|| format!("structure {path}"))?;
    let graph = build_contact_graph(&residues, threshold).with_context(|| format!("structure {path}"))?;
    log::info!("{path}: {} residues, {} contacts", graph.len(), graph.edge_count());
    Ok(Structure { graph, path })
}

fn load_matrices(ctx: &mut Ctx, a: &MatrixArgs) -> anyhow::Result<MatrixSelection> {
    match ctx.settings.get::<String>("matrix-dir", a.matrix_dir.clone())? {
        Some(dir) => load_matrix_dir(Path::new(&dir)).with_context(|| format!("matrix directory {dir}")),
        None => Ok(shipped_matrices()),
    }
}

fn load_bank(ctx: &mut Ctx, s: &StructureArgs, m: &MatrixArgs) -> anyhow::Result<(KernelBank, String)> {
    let st = load_structure(ctx, s)?;
    let selection = load_matrices(ctx, m)?;
    Ok((KernelBank::new(st.graph, selection.accepted)?, st.path))
}

struct Data {
    experimental: Vec<Observation>,
    simulated: Vec<Observation>,
    has_simulated: bool,
}

fn load_data(ctx: &mut Ctx, a: &DataArgs, graph: &ContactGraph, need_simulated: bool) -> anyhow::Result<Data> {
    let policy = if ctx.settings.switch("strict-residues", a.strict_residues)? {
        AbsentResiduePolicy::Fail
    } else {
        AbsentResiduePolicy::Skip
    };
    let read = |path: &str, source| -> anyhow::Result<Vec<Observation>> {
        load_observations(&read_text(path)?, graph, source, policy).with_context(|| format!("{path}"))
    };
    let exp_path: String = ctx.settings.require("experimental", a.experimental.clone())?;
    let experimental = read(&exp_path, Source::Experimental)?;
    let sim_path: Option<String> = if need_simulated {
        Some(ctx.settings.require("simulated", a.simulated.clone())?)
    } else {
        ctx.settings.get("simulated", a.simulated.clone())?
    };
    let simulated = match &sim_path {
        Some(p) => read(p, Source::Simulated)?,
        None => Vec::new(),
    };
    log::info!(
        "{} experimental, {} simulated variants",
        experimental.len(),
        simulated.len()
    );
    Ok(Data {
        experimental,
        simulated,
        has_simulated: sim_path.is_some(),
    })
}

fn pipeline_config(ctx: &mut Ctx, a: &ChainArgs, no_pairs_default: &str) -> anyhow::Result<PipelineConfig> {
    let defaults = ScalingPriorConfig::default();
    let n_samples = ctx.settings.get_or("samples", a.samples, defaults.n_samples)?;
    let burn_in = ctx.settings.get_or("burn-in", a.burn_in, defaults.burn_in)?;
    let noise_variance = ctx
        .settings
        .get_or("noise-variance", a.noise_variance, defaults.noise_variance)?;
    let no_pairs = match ctx
        .settings
        .get_or("no-pairs", a.no_pairs.clone(), no_pairs_default.to_string())?
        .as_str()
    {
        "baseline" => NoPairs::Baseline,
        "prior" => NoPairs::PriorOnly,
        other => {
            return Err(usage(format!(
                "--no-pairs must be `baseline` or `prior`, got {other:?}"
            )))
        }
    };
    let scaling = ScalingPriorConfig {
        n_samples,
        burn_in,
        noise_variance,
        ..defaults
    };
    scaling.validate()?;
    Ok(PipelineConfig {
        scaling,
        no_pairs,
        ..PipelineConfig::default()
    })
}

fn default_label(path: &str) -> String {
    Path::new(path)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("protein")
        .to_string()
}

pub fn calibrate(
    ctx: &mut Ctx,
    s: &StructureArgs,
    d: &DataArgs,
    c: &ChainArgs,
    out_dir: Option<String>,
) -> anyhow::Result<()> {
    let st = load_structure(ctx, s)?;
    let data = load_data(ctx, d, &st.graph, true)?;
    let cfg = pipeline_config(ctx, c, "prior")?;
    let out_dir = ctx
        .output("out-dir", out_dir)?
        .ok_or_else(|| usage("--out-dir is required"))?;
    let header = ctx.header("calibrate");

    let cal = calibrate_simulated(&data.experimental, &data.simulated, &cfg, ctx.seed)?;
    if cal.n_pairs == 0 {
        log::warn!("no experimental variant has a simulated value; calibration is prior-only");
    }
    let mut posterior = header.clone() + "sample_index,a,b,c,d\n";
    for (i, p) in cal.posterior.samples.iter().enumerate() {
        let _ = writeln!(posterior, "{i},{},{},{},{}", p.a, p.b, p.c, p.d);
    }
    let mut scaled = header + "variant,y_raw,y_scaled,sigma_T2\n";
    for (o, p) in data.simulated.iter().zip(&cal.scaled) {
        let _ = writeln!(
            scaled,
            "{},{},{},{}",
            quoted(&o.variant, &st.graph),
            o.value,
            p.value,
            p.transform_variance
        );
    }
    std::fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {out_dir}"))?;
    let dir = Path::new(&out_dir);
    emit(dir.join("posterior.csv").to_str(), posterior.as_bytes())?;
    emit(dir.join("scaled.csv").to_str(), scaled.as_bytes())?;
    let m = cal.posterior.mean_params();
    eprintln!(
        "pairs={} samples={} acceptance={:.3} prior_only={} mean=({:.4}, {:.4}, {:.4}, {:.4})",
        cal.n_pairs,
        cal.posterior.samples.len(),
        cal.posterior.acceptance_rate,
        cal.posterior.prior_only,
        m.a,
        m.b,
        m.c,
        m.d
    );
    Ok(())
}

fn parse_mode(text: &str, has_simulated: bool) -> anyhow::Result<ModelMode> {
    let mode: ModelMode = text.parse()?;
    if mode.fusion && !has_simulated {
        return Err(usage(format!("mode {text} needs --simulated")));
    }
    Ok(mode)
}

pub fn train(
    ctx: &mut Ctx,
    s: &StructureArgs,
    m: &MatrixArgs,
    d: &DataArgs,
    c: &ChainArgs,
    mode: Option<String>,
    out_dir: Option<String>,
) -> anyhow::Result<()> {
    let (bank, _) = load_bank(ctx, s, m)?;
    let data = load_data(ctx, d, &bank.graph, false)?;
    let cfg = pipeline_config(ctx, c, "baseline")?;
    let default_mode = ModelMode {
        fusion: data.has_simulated,
        kernels: KernelChoice::blosum62(),
    };
    let mode_text = ctx.settings.get_or("mode", mode, default_mode.to_string())?;
    let mode = parse_mode(&mode_text, data.has_simulated)?;
    let out_dir = ctx
        .output("out-dir", out_dir)?
        .ok_or_else(|| usage("--out-dir is required"))?;
    let header = ctx.header("train");

    let trained = train_mode(&bank, &data.experimental, &data.simulated, &mode, &cfg, ctx.seed)?;
    let r = &trained.report;
    if matches!(r.termination, ddgfusion::optim::Termination::LineSearchFailed) {
        log::warn!(
            "optimizer stopped on a failed line search after {} iterations",
            r.iterations
        );
    }
    let p = &r.params;
    let mut summary = header + "parameter,kernel,value\n";
    let mut row = |name: &str, kernel: &str, value: String| {
        let _ = writeln!(summary, "{name},{kernel},{value}");
    };
    row("mode", "", mode.to_string());
    row("objective", "", r.objective.to_string());
    row("initial_objective", "", r.initial_objective.to_string());
    row("iterations", "", r.iterations.to_string());
    row("termination", "", format!("{:?}", r.termination));
    row("sigma_e", "", p.sigma_e.to_string());
    row("sigma_s", "", p.sigma_s.to_string());
    row("t", "", p.t.to_string());
    for (k, name) in trained.model.kernel_names.iter().enumerate() {
        row("weight", name, p.mkl.weights[k].to_string());
        row("exponent", name, p.mkl.exponents[k].to_string());
    }
    let ds = &trained.model.dataset;
    row("n_experimental", "", ds.n_experimental().to_string());
    row("n_simulated", "", ds.n_simulated().to_string());
    if let Some(cal) = &trained.calibration {
        let mp = cal.posterior.mean_params();
        row("scaling_pairs", "", cal.n_pairs.to_string());
        for (name, v) in [
            ("scaling_a", mp.a),
            ("scaling_b", mp.b),
            ("scaling_c", mp.c),
            ("scaling_d", mp.d),
        ] {
            row(name, "", v.to_string());
        }
    }

    std::fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {out_dir}"))?;
    let dir = Path::new(&out_dir);
    emit(
        dir.join("model.bin").to_str(),
        &write_model(&trained.model, &trained.bank),
    )?;
    emit(dir.join("summary.csv").to_str(), summary.as_bytes())?;
    eprintln!(
        "mode={mode} objective={:.4} iterations={} sigma_e={:.4} sigma_s={:.4} t={:.4}",
        r.objective, r.iterations, p.sigma_e, p.sigma_s, p.t
    );
    Ok(())
}

pub fn predict(
    ctx: &mut Ctx,
    s: &StructureArgs,
    m: &MatrixArgs,
    model: Option<String>,
    variants: Option<String>,
    output: Option<String>,
) -> anyhow::Result<()> {
    let (bank, _) = load_bank(ctx, s, m)?;
    let model_path: String = ctx.settings.require("model", model)?;
    let variants_path: String = ctx.settings.require("variants", variants)?;
    let output = ctx.output("output", output)?;
    let header = ctx.header("predict");

    let bytes = std::fs::read(&model_path).with_context(|| format!("cannot read {model_path}"))?;
    let model = read_model(&bytes, &bank).with_context(|| model_path.clone())?;
    let bank = bank.subset(&model.kernel_names)?;
    let rows = read_variant_column(&read_text(&variants_path)?, &bank.graph).with_context(|| variants_path.clone())?;

    let mut good = Vec::new();
    let mut failures = 0;
    for (line, text, parsed) in rows {
        match parsed {
            Ok(v) => good.push(v),
            Err(e) => {
                failures += 1;
                eprintln!("{variants_path}: line {line}: variant {text:?}: {e}");
            }
        }
    }
    let preds = model.predict(&bank, &good)?;
    let mut out = header + "variant,mean,sd\n";
    for (v, p) in good.iter().zip(&preds) {
        let _ = writeln!(out, "{},{},{}", quoted(v, &bank.graph), p.mean, p.sd);
    }
    emit(output.as_deref(), out.as_bytes())?;
    if failures > 0 {
        return Err(anyhow!("{failures} variant(s) in {variants_path} could not be parsed"));
    }
    Ok(())
}

fn parse_predictors(text: &str, has_simulated: bool) -> anyhow::Result<Vec<Predictor>> {
    text.split(',')
        .map(|t| {
            let p: Predictor = t.trim().parse()?;
            let needs_sim = match &p {
                Predictor::Gp(m) => m.fusion,
                Predictor::Simulator(_) => true,
            };
            if needs_sim && !has_simulated {
                return Err(usage(format!("predictor {t} needs --simulated")));
            }
            Ok(p)
        })
        .collect()
}

fn default_predictors(has_simulated: bool) -> String {
    ModelMode::standard()
        .into_iter()
        .filter(|m| has_simulated || !m.fusion)
        .map(|m| m.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub struct CvArgs {
    pub modes: Option<String>,
    pub level: Option<String>,
    pub protein: Option<String>,
    pub trim: Option<f64>,
    pub output: Option<String>,
    pub folds: Option<String>,
    pub predictions: Option<String>,
}

fn metric_fields(m: &Metrics) -> String {
    format!("{},{},{},{},{},{}", m.n, m.rho, m.rmse, m.nlpd, m.rho_trim, m.rmse_trim)
}

pub fn cv(
    ctx: &mut Ctx,
    s: &StructureArgs,
    m: &MatrixArgs,
    d: &DataArgs,
    c: &ChainArgs,
    a: CvArgs,
) -> anyhow::Result<()> {
    let (bank, path) = load_bank(ctx, s, m)?;
    let data = load_data(ctx, d, &bank.graph, false)?;
    let cfg = pipeline_config(ctx, c, "baseline")?;
    let modes_text = ctx
        .settings
        .get_or("modes", a.modes, default_predictors(data.has_simulated))?;
    let predictors = parse_predictors(&modes_text, data.has_simulated)?;
    let level_text = ctx.settings.get_or("level", a.level, "all".to_string())?;
    let levels: Vec<CvLevel> = if level_text == "all" {
        vec![CvLevel::Mutation, CvLevel::Position, CvLevel::Protein]
    } else {
        level_text
            .split(',')
            .map(|l| l.trim().parse())
            .collect::<Result<_, _>>()?
    };
    let protein = ctx.settings.get_or("protein", a.protein, default_label(&path))?;
    let trim = ctx
        .settings
        .get_or("trim", a.trim, ddgfusion::eval::DEFAULT_TRIM_FRACTION)?;
    if !(0.0..0.5).contains(&trim) {
        return Err(usage(format!("--trim must lie in [0, 0.5), got {trim}")));
    }
    let output = ctx.output("output", a.output)?;
    let folds_path = ctx.output("folds", a.folds)?;
    let predictions_path = ctx.output("predictions", a.predictions)?;
    let header = ctx.header("cv");

    let mut report = header.clone() + "protein,level,mode,n,rho,rmse,nlpd,rho_trim10,rmse_trim10\n";
    let mut folds = header.clone() + "protein,level,mode,fold,label,n,rho,rmse,nlpd,rho_trim10,rmse_trim10\n";
    let mut predictions = header + "protein,level,mode,fold,variant,y,mean,sd\n";
    for &level in &levels {
        let plan = make_cv_plan(&data.experimental, level, ctx.seed);
        for p in &predictors {
            if level == CvLevel::Protein && matches!(p, Predictor::Gp(mode) if !mode.fusion) {
                log::warn!("skipping {p} at protein level: it has no training data");
                continue;
            }
            log::info!("{level} level, {p}: {} folds", plan.folds.len());
            let rows = run_cv(&bank, &data.experimental, &data.simulated, &plan, p, &cfg)?;
            let pooled = pooled_metrics(&rows, trim);
            let _ = writeln!(report, "{protein},{level},{p},{}", metric_fields(&pooled));
            for (f, fold) in plan.folds.iter().enumerate() {
                let in_fold: Vec<_> = rows.iter().filter(|r| r.fold == f).collect();
                let y: Vec<f64> = in_fold.iter().map(|r| r.y).collect();
                let mu: Vec<f64> = in_fold.iter().map(|r| r.mean).collect();
                let sd: Vec<f64> = in_fold.iter().map(|r| r.sd).collect();
                let fm = Metrics::compute(&y, &mu, &sd, trim);
                let _ = writeln!(folds, "{protein},{level},{p},{f},{},{}", fold.label, metric_fields(&fm));
            }
            for r in &rows {
                let v = &data.experimental[r.index].variant;
                let _ = writeln!(
                    predictions,
                    "{protein},{level},{p},{},{},{},{},{}",
                    r.fold,
                    quoted(v, &bank.graph),
                    r.y,
                    r.mean,
                    r.sd
                );
            }
        }
    }
    emit(output.as_deref(), report.as_bytes())?;
    if let Some(p) = folds_path {
        emit(Some(&p), folds.as_bytes())?;
    }
    if let Some(p) = predictions_path {
        emit(Some(&p), predictions.as_bytes())?;
    }
    Ok(())
}

pub struct CurveArgs {
    pub modes: Option<String>,
    pub sizes: Option<String>,
    pub repeats: Option<usize>,
    pub protein: Option<String>,
    pub output: Option<String>,
}

pub fn learning_curve(
    ctx: &mut Ctx,
    s: &StructureArgs,
    m: &MatrixArgs,
    d: &DataArgs,
    c: &ChainArgs,
    a: CurveArgs,
) -> anyhow::Result<()> {
    let (bank, path) = load_bank(ctx, s, m)?;
    let data = load_data(ctx, d, &bank.graph, false)?;
    let cfg = pipeline_config(ctx, c, "baseline")?;
    let modes_text = ctx
        .settings
        .get_or("modes", a.modes, default_predictors(data.has_simulated))?;
    let predictors = parse_predictors(&modes_text, data.has_simulated)?;
    let n = data.experimental.len();
    let default_sizes = (0..n).step_by(10).map(|s| s.to_string()).collect::<Vec<_>>().join(",");
    let sizes_text = ctx.settings.get_or("sizes", a.sizes, default_sizes)?;
    let sizes: Vec<usize> = sizes_text
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| usage(format!("bad size {t:?} in --sizes")))
        })
        .collect::<anyhow::Result<_>>()?;
    if sizes.is_empty() {
        return Err(usage("--sizes is empty"));
    }
    let repeats = ctx.settings.get_or("repeats", a.repeats, 100)?;
    if repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    let protein = ctx.settings.get_or("protein", a.protein, default_label(&path))?;
    let output = ctx.output("output", a.output)?;
    let header = ctx.header("learning-curve");

    let rows = run_curve(
        &bank,
        &data.experimental,
        &data.simulated,
        &sizes,
        repeats,
        &predictors,
        &cfg,
        ctx.seed,
    )?;
    let mut out = header + "protein,size,predictor,repeat,n_test,rho,rmse\n";
    for r in &rows {
        let _ = writeln!(
            out,
            "{protein},{},{},{},{},{},{}",
            r.size, r.predictor, r.repeat, r.n_test, r.rho, r.rmse
        );
    }
    emit(output.as_deref(), out.as_bytes())?;
    for sm in summarize_curve(&rows) {
        eprintln!(
            "size={} predictor={} repeats={} rho={:.3} rmse={:.3}",
            sm.size, sm.predictor, sm.repeats, sm.rho_mean, sm.rmse_mean
        );
    }
    Ok(())
}

pub fn matrices(ctx: &mut Ctx, m: &MatrixArgs, output: Option<String>) -> anyhow::Result<()> {
    let selection = load_matrices(ctx, m)?;
    let output = ctx.output("output", output)?;
    let mut out = ctx.header("matrices") + "name,status,reason\n";
    for mat in &selection.accepted {
        let _ = writeln!(out, "{},accepted,", mat.name);
    }
    for (name, why) in &selection.rejected {
        let _ = writeln!(out, "{name},rejected,\"{why}\"");
    }
    emit(output.as_deref(), out.as_bytes())?;
    eprintln!(
        "{} accepted, {} rejected",
        selection.accepted.len(),
        selection.rejected.len()
    );
    Ok(())
}

pub fn contacts(ctx: &mut Ctx, s: &StructureArgs, output: Option<String>) -> anyhow::Result<()> {
    let st = load_structure(ctx, s)?;
    let output = ctx.output("output", output)?;
    let out = ctx.header("contacts") + &st.graph.to_csv();
    emit(output.as_deref(), out.as_bytes())
}

pub fn kernel_dump(
    ctx: &mut Ctx,
    s: &StructureArgs,
    m: &MatrixArgs,
    matrix: Option<String>,
    variants: Option<String>,
    format: Option<String>,
    output: Option<String>,
) -> anyhow::Result<()> {
    let (bank, _) = load_bank(ctx, s, m)?;
    let name: String = ctx.settings.require("matrix", matrix)?;
    let variants_path: String = ctx.settings.require("variants", variants)?;
    let format = ctx.settings.get_or("format", format, "csv".to_string())?;
    if format != "csv" && format != "bin" {
        return Err(usage(format!("--format must be `csv` or `bin`, got {format:?}")));
    }
    let output = ctx.output("output", output)?;
    let header = ctx.header("kernel-dump");

    let single = KernelChoice::Single(name).select(&bank)?;
    let rows = read_variant_column(&read_text(&variants_path)?, &bank.graph).with_context(|| variants_path.clone())?;
    let vs = rows
        .into_iter()
        .map(|(line, text, v)| v.with_context(|| format!("{variants_path}: line {line}: variant {text:?}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let g = gram(&vs, &bank.graph, &single.matrices[0])?.gram;
    let n = vs.len();
    if format == "bin" {
        let mut bytes = Vec::with_capacity(8 + 8 * n * n);
        bytes.extend((n as u64).to_le_bytes());
        for i in 0..n {
            for j in 0..n {
                bytes.extend(g[(i, j)].to_le_bytes());
            }
        }
        return emit(output.as_deref(), &bytes);
    }
    let mut out = header + "variant";
    for v in &vs {
        out.push(',');
        out += &quoted(v, &bank.graph);
    }
    out.push('\n');
    for (i, v) in vs.iter().enumerate() {
        out += &quoted(v, &bank.graph);
        for j in 0..n {
            let _ = write!(out, ",{}", g[(i, j)]);
        }
        out.push('\n');
    }
    emit(output.as_deref(), out.as_bytes())
}
