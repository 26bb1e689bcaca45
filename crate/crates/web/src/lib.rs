//! Browser bindings: scaling posterior band, kernel heatmap, GP prediction.

use ddgfusion::calibrate::{apply_posterior, sample_posterior, ScalingPriorConfig};
use ddgfusion::datasets::{load_observations, read_variant_column, AbsentResiduePolicy, Source, Variant};
use ddgfusion::kernel::{gram, KernelBank};
use ddgfusion::pipeline::{train, KernelChoice, ModelMode, PipelineConfig};
use ddgfusion::structio::{build_contact_graph, parse_structure, select_chain, ContactGraph, DEFAULT_CONTACT_THRESHOLD};
use ddgfusion::submat::shipped_matrices;
use wasm_bindgen::prelude::*;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn graph_of(pdb: &str) -> Result<ContactGraph, JsError> {
    let residues = parse_structure(pdb).and_then(|r| select_chain(r, None)).map_err(js)?;
    build_contact_graph(&residues, DEFAULT_CONTACT_THRESHOLD).map_err(js)
}

fn variants_of(text: &str, graph: &ContactGraph) -> Result<Vec<Variant>, JsError> {
    read_variant_column(text, graph)
        .map_err(js)?
        .into_iter()
        .map(|(line, t, v)| v.map_err(|e| js(format!("line {line}: {t:?}: {e}"))))
        .collect()
}

/// Names of the bundled substitution matrices that pass validation.
#[wasm_bindgen]
pub fn matrix_names() -> Vec<String> {
    shipped_matrices().accepted.into_iter().map(|m| m.name).collect()
}

/// Samples the scaling posterior from `pairs` laid out as
/// `[y_exp0, y_sim0, y_exp1, y_sim1, ...]` and evaluates it on `grid`.
/// Returns the posterior mean for every grid point followed by the
/// standard deviation for every grid point.
#[wasm_bindgen]
pub fn scaling_band(pairs: &[f64], grid: &[f64], samples: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    if pairs.len() % 2 != 0 {
        return Err(js("pairs must hold an even number of values"));
    }
    let pairs: Vec<(f64, f64)> = pairs.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    let cfg = ScalingPriorConfig {
        n_samples: samples,
        burn_in: (samples / 10).max(1),
        seed,
        ..ScalingPriorConfig::default()
    };
    let posterior = sample_posterior(&pairs, &cfg).map_err(js)?;
    let band = apply_posterior(&posterior, grid);
    Ok(band.iter().map(|b| b.0).chain(band.iter().map(|b| b.1.sqrt())).collect())
}

/// Row-major normalized Gram matrix of one bundled matrix over the variants
/// of a `variant` CSV.
#[wasm_bindgen]
pub fn kernel_heatmap(pdb: &str, matrix: &str, variants_csv: &str) -> Result<Vec<f64>, JsError> {
    let graph = graph_of(pdb)?;
    let vs = variants_of(variants_csv, &graph)?;
    let m = shipped_matrices()
        .accepted
        .into_iter()
        .find(|m| m.name == matrix)
        .ok_or_else(|| js(format!("unknown matrix {matrix}")))?;
    Ok(gram(&vs, &graph, &m).map_err(js)?.gram.transpose().as_slice().to_vec())
}

/// Trains a single-BLOSUM62 model on a `variant,ddg` CSV (fused with a
/// simulated CSV when one is given) and returns `variant,mean,sd` rows for
/// the queries.
#[wasm_bindgen]
pub fn gp_predict(pdb: &str, experimental_csv: &str, simulated_csv: &str, queries_csv: &str) -> Result<String, JsError> {
    let graph = graph_of(pdb)?;
    let load = |text: &str, source| load_observations(text, &graph, source, AbsentResiduePolicy::Skip).map_err(js);
    let experimental = load(experimental_csv, Source::Experimental)?;
    let simulated = if simulated_csv.trim().is_empty() {
        Vec::new()
    } else {
        load(simulated_csv, Source::Simulated)?
    };
    let queries = variants_of(queries_csv, &graph)?;
    let bank = KernelBank::new(graph.clone(), shipped_matrices().accepted).map_err(js)?;
    let mode = ModelMode {
        fusion: !simulated.is_empty(),
        kernels: KernelChoice::blosum62(),
    };
    let cfg = PipelineConfig {
        scaling: ScalingPriorConfig {
            n_samples: 3000,
            burn_in: 300,
            ..ScalingPriorConfig::default()
        },
        ..PipelineConfig::default()
    };
    let trained = train(&bank, &experimental, &simulated, &mode, &cfg, 0).map_err(js)?;
    let preds = trained.model.predict(&trained.bank, &queries).map_err(js)?;
    let mut out = String::from("variant,mean,sd\n");
    for (v, p) in queries.iter().zip(preds) {
        out += &format!("\"{}\",{:.4},{:.4}\n", v.notation(&graph), p.mean, p.sd);
    }
    Ok(out)
}
