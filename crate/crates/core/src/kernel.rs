//! Weighted decomposition kernel over a contact graph, cosine-normalized base
//! Grams per substitution matrix, and their weighted elementwise-power
//! combination.

use nalgebra::DMatrix;

use crate::amino::AminoAcid;
use crate::datasets::Variant;
use crate::error::{Error, Result};
use crate::structio::ContactGraph;
use crate::submat::SubstitutionMatrix;

/// Literal double sum `Σ_p S(x_p, x'_p) Σ_{l ∈ nbs(p)} S(x_l, x'_l)`.
pub fn wdk_naive(x: &Variant, y: &Variant, graph: &ContactGraph, s: &SubstitutionMatrix) -> f64 {
    let wt = graph.wild_type();
    let xs = x.sequence(wt);
    let ys = y.sequence(wt);
    let sim = |p: usize| s.score(xs[p], ys[p]);
    (0..graph.len())
        .map(|p| sim(p) * graph.neighbors(p).iter().map(|&l| sim(l)).sum::<f64>())
        .sum()
}

/// Kernel evaluator that exploits sparsity: only positions mutated in either
/// variant change terms relative to the wild-type self-kernel.
pub struct Wdk<'a> {
    graph: &'a ContactGraph,
    matrix: &'a SubstitutionMatrix,
    wt_self: Vec<f64>,
    wt_kernel: f64,
}

impl<'a> Wdk<'a> {
    pub fn new(graph: &'a ContactGraph, matrix: &'a SubstitutionMatrix) -> Self {
        let wt_self: Vec<f64> = graph.wild_type().iter().map(|&r| matrix.score(r, r)).collect();
        let wt_kernel = (0..graph.len())
            .map(|p| wt_self[p] * graph.neighbors(p).iter().map(|&l| wt_self[l]).sum::<f64>())
            .sum();
        Self {
            graph,
            matrix,
            wt_self,
            wt_kernel,
        }
    }

    fn residue(&self, v: &Variant, p: usize) -> AminoAcid {
        v.residue_at(self.graph.wild_type(), p)
    }

    pub fn eval(&self, x: &Variant, y: &Variant) -> f64 {
        // Union of mutated positions, sorted.
        let mut diff: Vec<usize> = x.mutations().iter().chain(y.mutations()).map(|m| m.position).collect();
        diff.sort_unstable();
        diff.dedup();
        let sim = |p: usize| self.matrix.score(self.residue(x, p), self.residue(y, p));
        let mut k = self.wt_kernel;
        for &p in &diff {
            let sp = sim(p);
            let s0p = self.wt_self[p];
            for &l in self.graph.neighbors(p) {
                let delta = sp * sim(l) - s0p * self.wt_self[l];
                // Edges with both ends changed are met twice in the outer loop.
                k += if diff.binary_search(&l).is_ok() {
                    delta
                } else {
                    2.0 * delta
                };
            }
        }
        k
    }
}

/// `k_xy / sqrt(k_xx · k_yy)`.
pub fn normalize(k_xy: f64, k_xx: f64, k_yy: f64) -> Result<f64> {
    if !(k_xx > 0.0 && k_yy > 0.0) {
        return Err(Error::ZeroSelfKernel);
    }
    Ok(k_xy / (k_xx * k_yy).sqrt())
}

/// Normalized Gram for one substitution matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseKernel {
    pub matrix_name: String,
    pub gram: DMatrix<f64>,
}

fn check_edges(graph: &ContactGraph) -> Result<()> {
    if graph.edge_count() == 0 {
        return Err(Error::ZeroSelfKernel);
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn rows<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn rows<T>(n: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Normalized training Gram; the diagonal is exactly 1.
pub fn gram(variants: &[Variant], graph: &ContactGraph, s: &SubstitutionMatrix) -> Result<BaseKernel> {
    check_edges(graph)?;
    let w = Wdk::new(graph, s);
    let n = variants.len();
    let diag: Vec<f64> = variants.iter().map(|v| w.eval(v, v)).collect();
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(Error::ZeroSelfKernel);
    }
    let upper: Vec<Vec<f64>> = rows(n, |i| {
        (i + 1..n)
            .map(|j| w.eval(&variants[i], &variants[j]) / (diag[i] * diag[j]).sqrt())
            .collect()
    });
    let mut g = DMatrix::from_element(n, n, 1.0);
    for (i, row) in upper.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let j = i + 1 + k;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(BaseKernel {
        matrix_name: s.name.clone(),
        gram: g,
    })
}

/// Normalized cross Gram with `rows` × `cols` shape.
pub fn cross_gram(
    row_variants: &[Variant],
    col_variants: &[Variant],
    graph: &ContactGraph,
    s: &SubstitutionMatrix,
) -> Result<BaseKernel> {
    check_edges(graph)?;
    let w = Wdk::new(graph, s);
    let rd: Vec<f64> = row_variants.iter().map(|v| w.eval(v, v)).collect();
    let cd: Vec<f64> = col_variants.iter().map(|v| w.eval(v, v)).collect();
    if rd.iter().chain(&cd).any(|&d| d <= 0.0) {
        return Err(Error::ZeroSelfKernel);
    }
    let data = rows(row_variants.len(), |i| {
        col_variants
            .iter()
            .zip(&cd)
            .map(|(c, &dc)| w.eval(&row_variants[i], c) / (rd[i] * dc).sqrt())
            .collect::<Vec<f64>>()
    });
    let g = DMatrix::from_fn(row_variants.len(), col_variants.len(), |i, j| data[i][j]);
    Ok(BaseKernel {
        matrix_name: s.name.clone(),
        gram: g,
    })
}

/// A contact graph with the substitution matrices used as base kernels.
#[derive(Clone, Debug)]
pub struct KernelBank {
    pub graph: ContactGraph,
    pub matrices: Vec<SubstitutionMatrix>,
}

impl KernelBank {
    pub fn new(graph: ContactGraph, matrices: Vec<SubstitutionMatrix>) -> Result<Self> {
        check_edges(&graph)?;
        if matrices.is_empty() {
            return Err(Error::Config("no substitution matrices selected".into()));
        }
        Ok(Self { graph, matrices })
    }

    pub fn names(&self) -> Vec<String> {
        self.matrices.iter().map(|m| m.name.clone()).collect()
    }

    /// Keeps only the named matrices, in the given order.
    pub fn subset(&self, names: &[String]) -> Result<Self> {
        let matrices = names
            .iter()
            .map(|n| {
                self.matrices
                    .iter()
                    .find(|m| &m.name == n)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("unknown substitution matrix {n}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.graph.clone(), matrices)
    }

    pub fn grams(&self, variants: &[Variant]) -> Result<Vec<BaseKernel>> {
        self.matrices.iter().map(|m| gram(variants, &self.graph, m)).collect()
    }

    pub fn cross_grams(&self, rows: &[Variant], cols: &[Variant]) -> Result<Vec<BaseKernel>> {
        self.matrices
            .iter()
            .map(|m| cross_gram(rows, cols, &self.graph, m))
            .collect()
    }
}

/// Per-kernel weights (≥ 0) and elementwise exponents (≥ 1).
#[derive(Clone, Debug, PartialEq)]
pub struct MklParams {
    pub weights: Vec<f64>,
    pub exponents: Vec<f64>,
}

impl MklParams {
    /// Equal weights summing to one, unit exponents.
    pub fn uniform(k: usize) -> Self {
        Self {
            weights: vec![1.0 / k as f64; k],
            exponents: vec![1.0; k],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Prior variance of every point under normalized bases.
    pub fn self_similarity(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[inline]
fn pow(k: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        k
    } else {
        k.powf(gamma)
    }
}

fn combine_raw(grams: &[&DMatrix<f64>], params: &MklParams) -> DMatrix<f64> {
    let (r, c) = grams[0].shape();
    let mut out = DMatrix::zeros(r, c);
    for ((g, &w), &gamma) in grams.iter().zip(&params.weights).zip(&params.exponents) {
        if w == 0.0 {
            continue;
        }
        out.zip_apply(*g, |o, k| *o += w * pow(k, gamma));
    }
    out
}

/// `Σ_m w_m · K_m^{∘γ_m}`.
pub fn combine(bases: &[BaseKernel], params: &MklParams) -> DMatrix<f64> {
    assert_eq!(bases.len(), params.len(), "kernel count mismatch");
    let grams: Vec<&DMatrix<f64>> = bases.iter().map(|b| &b.gram).collect();
    combine_raw(&grams, params)
}

/// Same as [`combine`] for bare matrices.
pub fn combine_matrices(grams: &[DMatrix<f64>], params: &MklParams) -> DMatrix<f64> {
    assert_eq!(grams.len(), params.len(), "kernel count mismatch");
    let refs: Vec<&DMatrix<f64>> = grams.iter().collect();
    combine_raw(&refs, params)
}

/// Derivatives of the combined Gram: per kernel, with respect to its weight
/// and to its exponent.
pub struct CombineGrad {
    pub d_weights: Vec<DMatrix<f64>>,
    pub d_exponents: Vec<DMatrix<f64>>,
}

fn check_domain(g: &DMatrix<f64>) -> Result<()> {
    match g.iter().find(|&&k| k <= 0.0 || k.is_nan()) {
        Some(&k) => Err(Error::KernelDomain(k)),
        None => Ok(()),
    }
}

pub fn combine_grad(bases: &[BaseKernel], params: &MklParams) -> Result<CombineGrad> {
    let mut d_weights = Vec::with_capacity(bases.len());
    let mut d_exponents = Vec::with_capacity(bases.len());
    for ((b, &w), &gamma) in bases.iter().zip(&params.weights).zip(&params.exponents) {
        check_domain(&b.gram)?;
        let powered = b.gram.map(|k| pow(k, gamma));
        d_exponents.push(powered.zip_map(&b.gram, |p, k| w * p * k.ln()));
        d_weights.push(powered);
    }
    Ok(CombineGrad { d_weights, d_exponents })
}

/// Contracts the combined-Gram derivatives against a symmetric matrix `m`,
/// returning `(Σ_ij m_ij ∂K_ij/∂w, Σ_ij m_ij ∂K_ij/∂γ)` per kernel without
/// materializing the derivative matrices.
pub fn contract_grad(grams: &[DMatrix<f64>], params: &MklParams, m: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut gw = Vec::with_capacity(grams.len());
    let mut gg = Vec::with_capacity(grams.len());
    for ((g, &w), &gamma) in grams.iter().zip(&params.weights).zip(&params.exponents) {
        let mut sw = 0.0;
        let mut sg = 0.0;
        for (&k, &mij) in g.iter().zip(m.iter()) {
            if k <= 0.0 || k.is_nan() {
                return Err(Error::KernelDomain(k));
            }
            let p = pow(k, gamma);
            sw += mij * p;
            sg += mij * p * k.ln();
        }
        gw.push(sw);
        gg.push(w * sg);
    }
    Ok((gw, gg))
}
