//! Synthetic structures, variants and targets for tests and demos.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::amino::AminoAcid;
use crate::calibrate::{transform, ScalingParams};
use crate::datasets::{Mutation, Variant};
use crate::structio::{format_atom_line, ContactGraph};

/// PDB text for an ideal α-helix carrying `sequence` on chain A, numbered
/// from 1, with N, CA, C, O and one side-chain atom per residue.
pub fn helix_structure(sequence: &[AminoAcid]) -> String {
    let mut out = String::new();
    let mut serial = 1;
    for (i, &aa) in sequence.iter().enumerate() {
        let angle = (100.0f64 * i as f64).to_radians();
        let z = 1.5 * i as f64;
        let at = |r: f64, dphi: f64, dz: f64| {
            let phi = angle + dphi.to_radians();
            [r * phi.cos(), r * phi.sin(), z + dz]
        };
        let atoms = [
            ("N", at(1.6, -28.0, -0.5)),
            ("CA", at(2.3, 0.0, 0.0)),
            ("C", at(1.7, 28.0, 0.6)),
            ("O", at(1.9, 40.0, 1.7)),
            ("CB", at(3.6, 5.0, -0.4)),
        ];
        for (name, coord) in atoms {
            out.push_str(&format_atom_line(serial, name, aa, 'A', i as i32 + 1, coord));
            out.push('\n');
            serial += 1;
        }
    }
    out.push_str("END\n");
    out
}

pub fn random_sequence<R: Rng>(n: usize, rng: &mut R) -> Vec<AminoAcid> {
    (0..n).map(|_| AminoAcid::ALL[rng.random_range(0..20)]).collect()
}

/// Path graph plus `extra` random chords over a random wild type.
pub fn random_graph<R: Rng>(n: usize, extra: usize, rng: &mut R) -> ContactGraph {
    let wt = random_sequence(n, rng);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    if n > 2 {
        for _ in 0..extra {
            let p = rng.random_range(0..n);
            let q = rng.random_range(0..n);
            if p != q {
                edges.push((p, q));
            }
        }
    }
    ContactGraph::from_edges(wt, &edges).expect("valid edges")
}

/// Variant with between 0 and `max_mutations` random substitutions.
pub fn random_variant<R: Rng>(graph: &ContactGraph, max_mutations: usize, rng: &mut R) -> Variant {
    let n = graph.len();
    let k = rng.random_range(0..=max_mutations.min(n));
    let mut positions: Vec<usize> = rand::seq::index::sample(rng, n, k).into_vec();
    positions.sort_unstable();
    let wt = graph.wild_type();
    let muts = positions
        .into_iter()
        .map(|p| {
            let mut to = wt[p];
            while to == wt[p] {
                to = AminoAcid::ALL[rng.random_range(0..20)];
            }
            Mutation {
                position: p,
                from: wt[p],
                to,
            }
        })
        .collect();
    Variant::new(graph, muts).expect("valid random variant")
}

/// Every single substitution, position-major.
pub fn all_point_mutants(graph: &ContactGraph) -> Vec<Variant> {
    let mut out = Vec::with_capacity(graph.len() * 19);
    for p in 0..graph.len() {
        for &aa in &AminoAcid::ALL {
            if aa != graph.wild_type()[p] {
                out.push(Variant::point(graph, p, aa).expect("valid substitution"));
            }
        }
    }
    out
}

/// One draw from `N(0, gram)`, with a small diagonal jitter for stability.
pub fn gp_draw<R: Rng>(gram: &DMatrix<f64>, rng: &mut R) -> Vec<f64> {
    let n = gram.nrows();
    let mut a = gram.clone();
    for i in 0..n {
        a[(i, i)] += 1e-8;
    }
    let l = a.cholesky().expect("PSD Gram").l();
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    (l * z).iter().copied().collect()
}

/// Solves `transform(params, y) = target` by bisection on `[lo, hi]`; the
/// transform is increasing for nonnegative parameters with `b > 0`.
pub fn invert_transform(params: &ScalingParams, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if transform(params, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
