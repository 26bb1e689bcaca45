//! Synthetic fixtures shared by the integration tests.
#![allow(dead_code)]

use ddgfusion::calibrate::{transform, ScalingParams};
use ddgfusion::datasets::{fuse, FusedDataset, Observation, ScaledPoint, Source, Variant};
use ddgfusion::kernel::{gram, BaseKernel, KernelBank};
use ddgfusion::structio::{build_contact_graph, parse_structure, ContactGraph, DEFAULT_CONTACT_THRESHOLD};
use ddgfusion::submat::{blosum62, rescale, shipped_matrices, SubstitutionMatrix};
use ddgfusion::synth::{
    all_point_mutants, gp_draw, helix_structure, invert_transform, random_sequence, random_variant,
};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub fn shipped() -> Vec<SubstitutionMatrix> {
    shipped_matrices().accepted
}

pub fn helix_graph<R: Rng>(len: usize, rng: &mut R) -> ContactGraph {
    let seq = random_sequence(len, rng);
    let res = parse_structure(&helix_structure(&seq)).unwrap();
    build_contact_graph(&res, DEFAULT_CONTACT_THRESHOLD).unwrap()
}

pub fn observation(variant: Variant, value: f64, source: Source) -> Observation {
    Observation { variant, value, source }
}

/// `n` distinct non-wild-type variants with at most `max_mutations` each.
pub fn distinct_variants<R: Rng>(graph: &ContactGraph, n: usize, max_mutations: usize, rng: &mut R) -> Vec<Variant> {
    let mut out: Vec<Variant> = Vec::with_capacity(n);
    while out.len() < n {
        let v = random_variant(graph, max_mutations, rng);
        if !v.is_wild_type() && !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// Fused dataset with random targets and transform variances.
pub fn random_fused<R: Rng>(graph: &ContactGraph, n_exp: usize, n_sim: usize, rng: &mut R) -> FusedDataset {
    let vs = distinct_variants(graph, n_exp + n_sim, 3, rng);
    let exp: Vec<Observation> = vs[..n_exp]
        .iter()
        .map(|v| observation(v.clone(), rng.random_range(-3.0..3.0), Source::Experimental))
        .collect();
    let sim: Vec<ScaledPoint> = vs[n_exp..]
        .iter()
        .map(|v| ScaledPoint {
            variant: v.clone(),
            value: rng.random_range(-3.0..3.0),
            transform_variance: rng.random_range(0.0..0.5),
        })
        .collect();
    fuse(&exp, &sim).unwrap()
}

pub fn grams_for(ds: &FusedDataset, graph: &ContactGraph, matrices: &[SubstitutionMatrix]) -> Vec<BaseKernel> {
    matrices
        .iter()
        .map(|m| gram(ds.variants(), graph, m).unwrap())
        .collect()
}

/// Distortion the simulated values undergo; the calibration transform
/// inverts it exactly.
pub fn distortion() -> ScalingParams {
    ScalingParams::new(0.5, 1.0, 0.1, -0.5)
}

/// Single-kernel synthetic protein: a GP draw as ground truth over every
/// point mutant, simulated values for all of them, and noisy experimental
/// values for every mutant at a few sites, in random order.
pub struct FusionProblem {
    pub bank: KernelBank,
    pub experimental: Vec<Observation>,
    pub simulated: Vec<Observation>,
}

pub fn fusion_problem<R: Rng>(len: usize, sites: usize, rng: &mut R) -> FusionProblem {
    let graph = helix_graph(len, rng);
    let b62 = rescale(&blosum62());
    let singles = all_point_mutants(&graph);
    let mut all = vec![Variant::wild_type()];
    all.extend(singles.iter().cloned());
    let g = gram(&all, &graph, &b62).unwrap();
    let draw = gp_draw(&g.gram, rng);
    let truth: Vec<f64> = draw[1..].iter().map(|v| 3.0 * (v - draw[0])).collect();
    let theta = distortion();
    let simulated = singles
        .iter()
        .zip(&truth)
        .map(|(v, &t)| observation(v.clone(), invert_transform(&theta, t, -100.0, 100.0), Source::Simulated))
        .collect();
    let chosen = rand::seq::index::sample(rng, len, sites).into_vec();
    let candidates: Vec<usize> = (0..singles.len())
        .filter(|&i| chosen.contains(&singles[i].mutations()[0].position))
        .collect();
    let noise = Normal::new(0.0, 0.3).unwrap();
    let order = rand::seq::index::sample(rng, candidates.len(), candidates.len()).into_vec();
    let experimental = order
        .into_iter()
        .map(|j| {
            let i = candidates[j];
            observation(singles[i].clone(), truth[i] + noise.sample(rng), Source::Experimental)
        })
        .collect();
    FusionProblem {
        bank: KernelBank::new(graph, vec![b62]).unwrap(),
        experimental,
        simulated,
    }
}

/// `n` matched pairs `(y_exp, y_sim)` with `y_sim` uniform on `[lo, hi]`.
pub fn calibration_pairs<R: Rng>(
    theta: &ScalingParams,
    n: usize,
    sd: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Vec<(f64, f64)> {
    let noise = Normal::new(0.0, sd).unwrap();
    (0..n)
        .map(|_| {
            let ys = rng.random_range(lo..hi);
            (transform(theta, ys) + noise.sample(rng), ys)
        })
        .collect()
}
