//! Amino-acid substitution matrices: parsing, rescaling to (0, 1], and the
//! positive-semidefinite / near-duplicate filters that decide which matrices
//! become base kernels.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::amino::AminoAcid;
use crate::error::{Error, Result};

/// AAindex2 accession of BLOSUM62.
pub const BLOSUM62: &str = "HENS920102";

/// Largest entrywise difference under which two rescaled matrices count as
/// the same similarity measure. Chosen so the shipped AAindex2 release
/// reduces to 21 kernels.
pub const DEFAULT_DUPLICATE_THRESHOLD: f64 = 0.065;

/// Relative eigenvalue tolerance for the PSD test.
pub const DEFAULT_PSD_TOLERANCE: f64 = 1e-10;

static BLOSUM62_TEXT: &str = include_str!("../data/aaindex2/HENS920102.txt");

#[derive(Clone, Debug, PartialEq)]
pub struct SubstitutionMatrix {
    pub name: String,
    scores: [[f64; 20]; 20],
}

impl SubstitutionMatrix {
    /// Builds a matrix from a full 20×20 table; fails if it is not symmetric.
    pub fn new(name: impl Into<String>, scores: [[f64; 20]; 20]) -> Result<Self> {
        let name = name.into();
        for i in 0..20 {
            for j in 0..i {
                if scores[i][j] != scores[j][i] {
                    return Err(Error::AsymmetricMatrix {
                        name,
                        a: AminoAcid::ALL[i],
                        b: AminoAcid::ALL[j],
                    });
                }
            }
        }
        Ok(Self { name, scores })
    }

    /// Constant matrix, mostly useful in tests.
    pub fn constant(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            scores: [[value; 20]; 20],
        }
    }

    /// Identity-like matrix with `diag` on the diagonal and `off` elsewhere.
    pub fn diagonal(name: impl Into<String>, diag: f64, off: f64) -> Self {
        let mut scores = [[off; 20]; 20];
        for (i, row) in scores.iter_mut().enumerate() {
            row[i] = diag;
        }
        Self {
            name: name.into(),
            scores,
        }
    }

    #[inline]
    pub fn score(&self, a: AminoAcid, b: AminoAcid) -> f64 {
        self.scores[a.index()][b.index()]
    }

    pub fn scores(&self) -> &[[f64; 20]; 20] {
        &self.scores
    }

    pub fn min(&self) -> f64 {
        self.scores.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.scores.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(20, 20, |i, j| self.scores[i][j])
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &SubstitutionMatrix) -> f64 {
        self.scores
            .iter()
            .flatten()
            .zip(other.scores.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// BLOSUM62 as distributed in AAindex2, unscaled.
pub fn blosum62() -> SubstitutionMatrix {
    parse_matrix(BLOSUM62_TEXT).expect("bundled BLOSUM62 parses")
}

fn parse_value(tok: &str) -> Option<f64> {
    match tok {
        "NA" | "-" | "" | "." => None,
        t => t.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

/// Fills a 20×20 table from (row, col, value) cells, mirroring one-sided cells
/// and rejecting gaps or disagreeing mirror pairs.
fn assemble(name: &str, cells: &[[Option<f64>; 20]; 20]) -> Result<SubstitutionMatrix> {
    let mut scores = [[0.0; 20]; 20];
    for i in 0..20 {
        for j in 0..20 {
            let v = match (cells[i][j], cells[j][i]) {
                (Some(a), Some(b)) if a != b => {
                    return Err(Error::AsymmetricMatrix {
                        name: name.to_string(),
                        a: AminoAcid::ALL[i],
                        b: AminoAcid::ALL[j],
                    })
                }
                (Some(a), _) | (None, Some(a)) => a,
                (None, None) => {
                    return Err(Error::IncompleteMatrix {
                        name: name.to_string(),
                        a: AminoAcid::ALL[i],
                        b: AminoAcid::ALL[j],
                    })
                }
            };
            scores[i][j] = v;
        }
    }
    Ok(SubstitutionMatrix {
        name: name.to_string(),
        scores,
    })
}

fn parse_aaindex(text: &str, fallback_name: &str) -> Result<SubstitutionMatrix> {
    let mut name = fallback_name.to_string();
    let mut labels: Option<(Vec<char>, Vec<char>)> = None;
    let mut cells = [[None; 20]; 20];
    let mut row = 0usize;

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if let Some(acc) = line.strip_prefix("H ") {
            name = acc.trim().to_string();
            continue;
        }
        if line.starts_with("//") {
            break;
        }
        if let Some(spec) = line.strip_prefix("M ") {
            // "rows = ARND..., cols = ARND..."; one release has a stray "cols rows =".
            let mut parts = spec.split(',');
            let grab = |p: Option<&str>| -> Option<Vec<char>> {
                p.and_then(|s| s.split('=').nth(1)).map(|s| s.trim().chars().collect())
            };
            let rows = grab(parts.next()).ok_or_else(|| Error::parse(lineno, "malformed M line"))?;
            let cols = grab(parts.next()).ok_or_else(|| Error::parse(lineno, "malformed M line"))?;
            labels = Some((rows, cols));
            continue;
        }
        let Some((rows, cols)) = &labels else { continue };
        if !line.starts_with(' ') {
            // Any further record ends the matrix block.
            labels = None;
            continue;
        }
        let Some(&row_label) = rows.get(row) else {
            return Err(Error::parse(lineno, "more matrix rows than labels"));
        };
        row += 1;
        let Some(r) = AminoAcid::from_one_letter(row_label) else {
            continue;
        };
        for (k, tok) in line.split_whitespace().enumerate() {
            let Some(&col_label) = cols.get(k) else {
                return Err(Error::parse(lineno, "more values than column labels"));
            };
            if let Some(c) = AminoAcid::from_one_letter(col_label) {
                cells[r.index()][c.index()] = parse_value(tok);
            }
        }
    }
    if row == 0 {
        return Err(Error::parse(0, "no matrix block found"));
    }
    assemble(&name, &cells)
}

fn parse_tsv(text: &str, name: &str) -> Result<SubstitutionMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (hline, header) = lines.next().ok_or_else(|| Error::parse(0, "empty matrix file"))?;
    let cols: Vec<AminoAcid> = header
        .split(|c: char| c == '\t' || c == ',' || c == ' ')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<AminoAcid>()
                .map_err(|_| Error::parse(hline + 1, format!("unknown residue code {t:?}")))
        })
        .collect::<Result<_>>()?;
    let mut cells = [[None; 20]; 20];
    for (i, line) in lines {
        let lineno = i + 1;
        let mut toks = line.split('\t').map(str::trim);
        let label = toks.next().unwrap_or("");
        let r: AminoAcid = label
            .parse()
            .map_err(|_| Error::parse(lineno, format!("unknown residue code {label:?}")))?;
        for (k, tok) in toks.enumerate() {
            let Some(&c) = cols.get(k) else {
                return Err(Error::parse(lineno, "more values than header columns"));
            };
            if !tok.is_empty() {
                let v = parse_value(tok).ok_or_else(|| Error::parse(lineno, format!("bad value {tok:?}")))?;
                cells[r.index()][c.index()] = Some(v);
            }
        }
    }
    assemble(name, &cells)
}

/// Parses an AAindex2 entry or a tab-separated table (header row of residue
/// codes, then one labelled row per residue). Lower-triangle listings are
/// mirrored.
pub fn parse_matrix(text: &str) -> Result<SubstitutionMatrix> {
    parse_matrix_named(text, "unnamed")
}

/// As [`parse_matrix`], with the name used when the text carries none.
pub fn parse_matrix_named(text: &str, name: &str) -> Result<SubstitutionMatrix> {
    let is_aaindex = text.lines().any(|l| l.starts_with("M rows") || l.starts_with("H "));
    if is_aaindex {
        parse_aaindex(text, name)
    } else {
        parse_tsv(text, name)
    }
}

/// Maps scores affinely to (0, 1]: `(S - min + 1) / (max - min + 1)`.
pub fn rescale(raw: &SubstitutionMatrix) -> SubstitutionMatrix {
    let lo = raw.min();
    let span = raw.max() - lo + 1.0;
    let mut scores = raw.scores;
    for v in scores.iter_mut().flatten() {
        *v = (*v - lo + 1.0) / span;
    }
    SubstitutionMatrix {
        name: raw.name.clone(),
        scores,
    }
}

/// Eigenvalues in ascending order.
pub fn eigenvalues(matrix: &SubstitutionMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(matrix.to_dmatrix())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// True iff the smallest eigenvalue is at least `-rel_tol * max|λ|`.
pub fn is_psd(matrix: &SubstitutionMatrix, rel_tol: f64) -> bool {
    let ev = eigenvalues(matrix);
    let scale = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ev[0] >= -rel_tol * scale
}

/// Drops later (by name) matrices within `threshold` of an already kept one.
pub fn dedupe(matrices: Vec<SubstitutionMatrix>, threshold: f64) -> Vec<SubstitutionMatrix> {
    dedupe_with_report(matrices, threshold).0
}

fn dedupe_with_report(
    mut matrices: Vec<SubstitutionMatrix>,
    threshold: f64,
) -> (Vec<SubstitutionMatrix>, Vec<(String, String, f64)>) {
    matrices.sort_by(|a, b| a.name.cmp(&b.name));
    let mut kept: Vec<SubstitutionMatrix> = Vec::new();
    let mut dropped = Vec::new();
    for m in matrices {
        match kept
            .iter()
            .map(|k| (k, k.max_abs_diff(&m)))
            .find(|(_, d)| *d < threshold)
        {
            Some((k, d)) => dropped.push((m.name.clone(), k.name.clone(), d)),
            None => kept.push(m),
        }
    }
    (kept, dropped)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Rejection {
    /// Missing entries among the 20 canonical residues.
    Gap(String),
    Asymmetric(String),
    Unparseable(String),
    NotPsd {
        min_eigenvalue: f64,
    },
    Duplicate {
        of: String,
        max_diff: f64,
    },
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Gap(msg) => write!(f, "gap: {msg}"),
            Rejection::Asymmetric(msg) => write!(f, "asymmetric: {msg}"),
            Rejection::Unparseable(msg) => write!(f, "unparseable: {msg}"),
            Rejection::NotPsd { min_eigenvalue } => write!(f, "non-PSD: min eigenvalue {min_eigenvalue:.3e}"),
            Rejection::Duplicate { of, max_diff } => write!(f, "duplicate of {of} (max diff {max_diff:.4})"),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct MatrixSelection {
    /// Rescaled matrices, sorted by name.
    pub accepted: Vec<SubstitutionMatrix>,
    pub rejected: Vec<(String, Rejection)>,
}

/// Runs parse → rescale → PSD → dedupe over named matrix texts.
pub fn select_matrices<'a>(
    sources: impl IntoIterator<Item = (String, &'a str)>,
    psd_tol: f64,
    duplicate_threshold: f64,
) -> MatrixSelection {
    let mut selection = MatrixSelection::default();
    let mut psd = Vec::new();
    for (name, text) in sources {
        match parse_matrix_named(text, &name) {
            Ok(raw) => {
                let scaled = rescale(&raw);
                let ev = eigenvalues(&scaled);
                let scale = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if ev[0] >= -psd_tol * scale {
                    psd.push(scaled);
                } else {
                    selection
                        .rejected
                        .push((raw.name, Rejection::NotPsd { min_eigenvalue: ev[0] }));
                }
            }
            Err(e @ Error::IncompleteMatrix { .. }) => selection.rejected.push((name, Rejection::Gap(e.to_string()))),
            Err(e @ Error::AsymmetricMatrix { .. }) => {
                selection.rejected.push((name, Rejection::Asymmetric(e.to_string())))
            }
            Err(e) => selection.rejected.push((name, Rejection::Unparseable(e.to_string()))),
        }
    }
    let (kept, dropped) = dedupe_with_report(psd, duplicate_threshold);
    selection.accepted = kept;
    for (name, of, max_diff) in dropped {
        selection.rejected.push((name, Rejection::Duplicate { of, max_diff }));
    }
    selection.rejected.sort_by(|a, b| a.0.cmp(&b.0));
    selection
}

/// The AAindex2 entries bundled with the crate, by accession, sorted.
pub fn shipped_sources() -> &'static [(&'static str, &'static str)] {
    include!(concat!(env!("OUT_DIR"), "/shipped_matrices.rs"))
}

/// [`select_matrices`] over the bundled entries with default tolerances.
pub fn shipped_matrices() -> MatrixSelection {
    select_matrices(
        shipped_sources().iter().map(|&(n, t)| (n.to_string(), t)),
        DEFAULT_PSD_TOLERANCE,
        DEFAULT_DUPLICATE_THRESHOLD,
    )
}

/// Reads every `.txt` / `.tsv` file of a directory (sorted by file name) and
/// runs [`select_matrices`] with default tolerances.
pub fn load_matrix_dir(dir: &Path) -> Result<MatrixSelection> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("txt" | "tsv")))
        .collect();
    files.sort();
    let texts = files
        .iter()
        .map(|p| {
            let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("unnamed").to_string();
            std::fs::read_to_string(p).map(|t| (name, t))
        })
        .collect::<std::io::Result<Vec<_>>>()?;
    Ok(select_matrices(
        texts.iter().map(|(n, t)| (n.clone(), t.as_str())),
        DEFAULT_PSD_TOLERANCE,
        DEFAULT_DUPLICATE_THRESHOLD,
    ))
}
