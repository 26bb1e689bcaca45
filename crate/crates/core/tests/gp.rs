mod common;

use ddgfusion::datasets::{FusedDataset, Variant};
use ddgfusion::gp::{fit, noise_vector, optimize, read_model, write_model, ModelParams, NoiseConfig, OptimizerConfig};
use ddgfusion::kernel::{combine, KernelBank, MklParams};
use ddgfusion::structio::ContactGraph;
use ddgfusion::submat::SubstitutionMatrix;
use ddgfusion::synth::{all_point_mutants, gp_draw, random_variant};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use common::*;

fn params(k: usize, t: f64) -> ModelParams {
    ModelParams {
        sigma_e: 0.2,
        sigma_s: 0.3,
        t,
        mkl: MklParams {
            weights: (0..k).map(|i| 1.0 + 0.5 * i as f64).collect(),
            exponents: (0..k).map(|i| 1.0 + i as f64).collect(),
        },
    }
}

struct Fixture {
    graph: ContactGraph,
    bank: KernelBank,
    ds: FusedDataset,
}

fn fixture(seed: u64, n_exp: usize, n_sim: usize, kernels: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = helix_graph(10, &mut rng);
    let ds = random_fused(&graph, n_exp, n_sim, &mut rng);
    let matrices: Vec<SubstitutionMatrix> = shipped().into_iter().step_by(5).take(kernels).collect();
    let bank = KernelBank::new(graph.clone(), matrices).unwrap();
    Fixture { graph, bank, ds }
}

fn queries(graph: &ContactGraph, seed: u64) -> Vec<Variant> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..8).map(|_| random_variant(graph, 3, &mut rng)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn predictive_mean_is_linear_in_targets(seed in any::<u64>(), c in -5.0f64..5.0) {
        let f = fixture(seed, 6, 5, 2);
        let p = params(2, 0.7);
        let bases = f.bank.grams(f.ds.variants()).unwrap();
        let scaled = FusedDataset::from_parts(
            f.ds.variants().to_vec(),
            f.ds.targets().iter().map(|y| c * y).collect(),
            f.ds.transform_variance().to_vec(),
            f.ds.n_experimental(),
        ).unwrap();
        let q = queries(&f.graph, seed ^ 1);
        let base = fit(&f.ds, &bases, &p, &NoiseConfig::default()).unwrap().predict(&f.bank, &q).unwrap();
        let lin = fit(&scaled, &bases, &p, &NoiseConfig::default()).unwrap().predict(&f.bank, &q).unwrap();
        for (a, b) in base.iter().zip(&lin) {
            prop_assert!((c * a.mean - b.mean).abs() <= 1e-10 * (1.0 + a.mean.abs() * c.abs()));
            prop_assert_eq!(a.sd, b.sd);
        }
    }

    #[test]
    fn variance_is_nonnegative_and_weights_solve_the_system(seed in any::<u64>()) {
        let f = fixture(seed, 8, 8, 3);
        let p = params(3, 1.0);
        let bases = f.bank.grams(f.ds.variants()).unwrap();
        let m = fit(&f.ds, &bases, &p, &NoiseConfig::default()).unwrap();
        let mut a = combine(&bases, &p.mkl);
        for (i, v) in noise_vector(&f.ds, &p, 1e-6).iter().enumerate() {
            a[(i, i)] += v;
        }
        let y = DVector::from_column_slice(f.ds.targets());
        let residual = (&a * &m.alpha - &y).norm() / y.norm().max(1.0);
        prop_assert!(residual < 1e-8, "residual {}", residual);
        let mut q = queries(&f.graph, seed ^ 2);
        q.extend(f.ds.variants().iter().cloned());
        for pr in m.predict(&f.bank, &q).unwrap() {
            prop_assert!(pr.sd >= 0.0 && pr.sd.is_finite());
        }
    }
}

#[test]
fn uninformative_point_barely_moves_predictions() {
    let f = fixture(3, 6, 4, 2);
    let p = params(2, 1.0);
    let noise = NoiseConfig::default();
    let q = queries(&f.graph, 4);
    let bases = f.bank.grams(f.ds.variants()).unwrap();
    let before = fit(&f.ds, &bases, &p, &noise).unwrap().predict(&f.bank, &q).unwrap();

    // One extra simulated point whose noise variance is about 1e6.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let extra = loop {
        let v = random_variant(&f.graph, 2, &mut rng);
        if !f.ds.variants().contains(&v) {
            break v;
        }
    };
    let mut variants = f.ds.variants().to_vec();
    variants.push(extra);
    let mut targets = f.ds.targets().to_vec();
    targets.push(3.0);
    let mut tv = f.ds.transform_variance().to_vec();
    let sd = 1e3 - p.sigma_e - p.sigma_s;
    tv.push(sd * sd);
    let ds = FusedDataset::from_parts(variants, targets, tv, f.ds.n_experimental()).unwrap();
    assert!((noise_vector(&ds, &p, noise.sigma0).last().unwrap() - 1e6).abs() < 1e-6);
    let bases = f.bank.grams(ds.variants()).unwrap();
    let after = fit(&ds, &bases, &p, &noise).unwrap().predict(&f.bank, &q).unwrap();
    for (a, b) in before.iter().zip(&after) {
        assert!((a.mean - b.mean).abs() < 1e-3);
        assert!((a.sd - b.sd).abs() < 1e-3);
    }
}

#[test]
fn uncertainty_near_simulated_points_grows_with_t() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let graph = helix_graph(10, &mut rng);
    let singles = all_point_mutants(&graph);
    // Simulated-only neighbourhood: every mutant at position 4 but one.
    let at4: Vec<Variant> = singles.iter().filter(|v| v.mutates(4)).cloned().collect();
    let (query, sims) = at4.split_first().unwrap();
    let exp: Vec<Variant> = singles.iter().filter(|v| v.mutates(8)).take(5).cloned().collect();
    let mut variants = vec![Variant::wild_type()];
    variants.extend(exp.iter().cloned());
    variants.extend(sims.iter().cloned());
    let targets: Vec<f64> = std::iter::once(0.0)
        .chain((1..variants.len()).map(|_| rng.random_range(-2.0..2.0)))
        .collect();
    let tv: Vec<f64> = sims.iter().map(|_| rng.random_range(0.05..1.0)).collect();
    let ds = FusedDataset::from_parts(variants, targets, tv, exp.len()).unwrap();
    let bank = KernelBank::new(graph, vec![ddgfusion::submat::rescale(&ddgfusion::submat::blosum62())]).unwrap();
    let bases = bank.grams(ds.variants()).unwrap();
    let mut last = 0.0;
    for t in [0.0, 0.5, 1.0, 2.0] {
        let m = fit(&ds, &bases, &params(1, t), &NoiseConfig::default()).unwrap();
        let sd = m.predict(&bank, std::slice::from_ref(query)).unwrap()[0].sd;
        assert!(sd >= last, "t {t}: {sd} < {last}");
        last = sd;
    }
}

#[test]
fn model_file_round_trip() {
    let f = fixture(8, 7, 6, 3);
    let bases = f.bank.grams(f.ds.variants()).unwrap();
    let m = fit(&f.ds, &bases, &params(3, 0.4), &NoiseConfig::default()).unwrap();
    let bytes = write_model(&m, &f.bank);
    let back = read_model(&bytes, &f.bank).unwrap();
    let q = queries(&f.graph, 9);
    assert_eq!(m.predict(&f.bank, &q).unwrap(), back.predict(&f.bank, &q).unwrap());
    assert_eq!(write_model(&back, &f.bank), bytes);
    let mut corrupt = bytes.clone();
    corrupt[4] ^= 0xff;
    assert!(read_model(&corrupt, &f.bank).is_err());
    assert!(read_model(&bytes[..bytes.len() / 2], &f.bank).is_err());
}

#[test]
fn optimizer_history_never_decreases() {
    for seed in 0..4 {
        let f = fixture(seed, 10, 10, 3);
        let bases = f.bank.grams(f.ds.variants()).unwrap();
        let noise = NoiseConfig::default();
        let init = ModelParams::initial(3, &noise);
        let report = optimize(&f.ds, &bases, &init, &noise, &OptimizerConfig::default()).unwrap();
        assert!(report.objective >= report.initial_objective);
        for w in report.history.windows(2) {
            assert!(w[1] >= w[0], "seed {seed}: {:?}", report.history);
        }
        let again = optimize(&f.ds, &bases, &init, &noise, &OptimizerConfig::default()).unwrap();
        assert_eq!(report.params, again.params);
    }
}

/// Three mutually dissimilar shipped matrices, chosen greedily by largest
/// minimum entrywise distance.
fn distinct_matrices() -> Vec<SubstitutionMatrix> {
    let all = shipped();
    let mut chosen = vec![all[0].clone()];
    while chosen.len() < 3 {
        let next = all
            .iter()
            .max_by(|a, b| {
                let d = |m: &SubstitutionMatrix| chosen.iter().map(|c| c.max_abs_diff(m)).fold(f64::INFINITY, f64::min);
                d(a).total_cmp(&d(b))
            })
            .unwrap();
        chosen.push(next.clone());
    }
    chosen
}

#[test]
fn weights_concentrate_on_the_generating_kernel() {
    let matrices = distinct_matrices();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let graph = helix_graph(8, &mut rng);
    let mut variants = vec![Variant::wild_type()];
    variants.extend(distinct_variants(&graph, 150, 2, &mut rng));
    let bank = KernelBank::new(graph, matrices).unwrap();
    let noise = NoiseConfig::default();
    let bases = bank.grams(&variants).unwrap();
    let n = variants.len();
    for truth in 0..3 {
        // Draw from the generating prior conditioned on a zero wild type.
        let k = bases[truth].gram.map(|v| 4.0 * v);
        let k0 = k.view((1, 0), (n - 1, 1)).clone_owned();
        let cond = k.view((1, 1), (n - 1, n - 1)) - &k0 * k0.transpose() / k[(0, 0)];
        let draw = gp_draw(&cond, &mut rng);
        let e = Normal::new(0.0, 0.03).unwrap();
        let targets: Vec<f64> = std::iter::once(0.0)
            .chain(draw.iter().map(|v| v + e.sample(&mut rng)))
            .collect();
        let ds = FusedDataset::from_parts(variants.clone(), targets, vec![], n - 1).unwrap();
        let report = optimize(
            &ds,
            &bases,
            &ModelParams::initial(3, &noise),
            &noise,
            &OptimizerConfig::default(),
        )
        .unwrap();
        let w = &report.params.mkl.weights;
        let share = w[truth] / w.iter().sum::<f64>();
        assert!(
            share >= 0.8,
            "generating kernel {}: weights {w:?}",
            bases[truth].matrix_name
        );
    }
}

#[test]
fn thousand_predictions_take_under_a_second() {
    let f = fixture(11, 40, 60, 1);
    let bases = f.bank.grams(f.ds.variants()).unwrap();
    let m = fit(&f.ds, &bases, &params(1, 0.5), &NoiseConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let q: Vec<Variant> = (0..1000).map(|_| random_variant(&f.graph, 3, &mut rng)).collect();
    let start = std::time::Instant::now();
    let preds = m.predict(&f.bank, &q).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(preds.len(), 1000);
    assert!(elapsed.as_secs_f64() < 1.0, "{elapsed:?}");
}
