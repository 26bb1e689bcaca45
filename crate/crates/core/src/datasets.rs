//! Variants, stability observations and the fused training set.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use sha2::{Digest, Sha256};

use crate::amino::AminoAcid;
use crate::error::{Error, Result};
use crate::structio::ContactGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mutation {
    /// 0-based position in the contact graph.
    pub position: usize,
    pub from: AminoAcid,
    pub to: AminoAcid,
}

/// A protein as a set of substitutions from the wild type. Mutations are kept
/// sorted by position, so equality ignores listing order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variant {
    mutations: Vec<Mutation>,
}

impl Variant {
    pub fn wild_type() -> Self {
        Self::default()
    }

    /// Validates against the graph's wild type: one mutation per position,
    /// `from` equal to the wild-type residue, `to` different from it.
    pub fn new(graph: &ContactGraph, mut mutations: Vec<Mutation>) -> Result<Self> {
        mutations.sort();
        for w in mutations.windows(2) {
            if w[0].position == w[1].position {
                return Err(Error::InvalidVariant(format!(
                    "position {} mutated twice",
                    graph.residue_id(w[0].position).seq
                )));
            }
        }
        let wt = graph.wild_type();
        for m in &mutations {
            let Some(&native) = wt.get(m.position) else {
                return Err(Error::InvalidVariant(format!(
                    "position index {} out of range",
                    m.position
                )));
            };
            if native != m.from {
                return Err(Error::InvalidVariant(format!(
                    "{}{}: wild-type residue is {}",
                    m.from,
                    graph.residue_id(m.position).seq,
                    native
                )));
            }
            if m.to == m.from {
                return Err(Error::InvalidVariant(format!(
                    "{}{}{} is not a substitution",
                    m.from,
                    graph.residue_id(m.position).seq,
                    m.to
                )));
            }
        }
        Ok(Self { mutations })
    }

    /// Single substitution at 0-based position `p`.
    pub fn point(graph: &ContactGraph, p: usize, to: AminoAcid) -> Result<Self> {
        let from = *graph
            .wild_type()
            .get(p)
            .ok_or_else(|| Error::InvalidVariant(format!("position index {p} out of range")))?;
        Self::new(graph, vec![Mutation { position: p, from, to }])
    }

    pub fn mutations(&self) -> &[Mutation] {
        &self.mutations
    }

    pub fn is_wild_type(&self) -> bool {
        self.mutations.is_empty()
    }

    /// Number of substituted positions.
    pub fn order(&self) -> usize {
        self.mutations.len()
    }

    pub fn mutates(&self, p: usize) -> bool {
        self.mutations.binary_search_by_key(&p, |m| m.position).is_ok()
    }

    pub fn residue_at(&self, wild_type: &[AminoAcid], p: usize) -> AminoAcid {
        match self.mutations.binary_search_by_key(&p, |m| m.position) {
            Ok(i) => self.mutations[i].to,
            Err(_) => wild_type[p],
        }
    }

    pub fn sequence(&self, wild_type: &[AminoAcid]) -> Vec<AminoAcid> {
        let mut seq = wild_type.to_vec();
        for m in &self.mutations {
            seq[m.position] = m.to;
        }
        seq
    }

    /// Notation in author numbering, e.g. `A23G,V45I`; empty for wild type.
    pub fn notation(&self, graph: &ContactGraph) -> String {
        let mut out = String::new();
        for (i, m) in self.mutations.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let id = graph.residue_id(m.position);
            let _ = write!(out, "{}{}", m.from, id.seq);
            if id.insertion != ' ' {
                out.push(id.insertion);
            }
            out.push(m.to.one_letter());
        }
        out
    }
}

/// Graph-free rendering with 0-based positions, used for digests and logs.
impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, m) in self.mutations.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}@{}{}", m.from, m.position, m.to)?;
        }
        Ok(())
    }
}

fn parse_token(token: &str, graph: &ContactGraph) -> Result<Mutation> {
    let bad = || Error::InvalidVariant(format!("malformed mutation {token:?}"));
    let chars: Vec<char> = token.chars().collect();
    if chars.len() < 3 {
        return Err(bad());
    }
    let from = AminoAcid::from_one_letter(chars[0]).ok_or_else(|| Error::UnknownResidue(chars[0].to_string()))?;
    let to_char = chars[chars.len() - 1];
    let to = AminoAcid::from_one_letter(to_char).ok_or_else(|| Error::UnknownResidue(to_char.to_string()))?;
    let mut middle: String = chars[1..chars.len() - 1].iter().collect();
    let mut insertion = ' ';
    if middle.ends_with(|c: char| c.is_ascii_alphabetic()) {
        insertion = middle.pop().unwrap_or(' ');
    }
    let seq: i32 = middle.parse().map_err(|_| bad())?;
    let position = graph
        .position_of_inserted(seq, insertion)
        .ok_or_else(|| Error::AbsentResidue(token.to_string()))?;
    Ok(Mutation { position, from, to })
}

/// Parses comma-separated `{From}{AuthorPos}{To}` tokens (an optional
/// insertion code may follow the number). The empty string is the wild type.
/// A residue number missing from the structure gives [`Error::AbsentResidue`].
pub fn parse_mutation_string(text: &str, graph: &ContactGraph) -> Result<Variant> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Variant::wild_type());
    }
    let mutations = text
        .split(',')
        .map(|t| parse_token(t.trim(), graph))
        .collect::<Result<Vec<_>>>()?;
    Variant::new(graph, mutations)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Experimental,
    Simulated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub variant: Variant,
    /// kcal/mol for experimental data, simulator units for simulated data.
    pub value: f64,
    pub source: Source,
}

/// What to do with rows whose mutations fall outside the structure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AbsentResiduePolicy {
    #[default]
    Skip,
    Fail,
}

fn with_line(line: usize, e: Error) -> Error {
    match e {
        Error::Parse { .. } => e,
        other => Error::parse(line, other.to_string()),
    }
}

/// Reads a `variant,ddg` CSV. Lines starting with `#` are ignored. Rows with
/// the same variant are averaged into one observation at the position of the
/// first occurrence.
pub fn load_observations(
    csv_content: &str,
    graph: &ContactGraph,
    source: Source,
    policy: AbsentResiduePolicy,
) -> Result<Vec<Observation>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(csv_content.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(vcol), Some(dcol)) = (col("variant"), col("ddg")) else {
        return Err(Error::parse(1, "expected header `variant,ddg`"));
    };

    let mut order: Vec<Variant> = Vec::new();
    let mut sums: HashMap<Variant, (f64, usize)> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let ddg_text = record.get(dcol).unwrap_or("");
        let value: f64 = ddg_text
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::parse(line, format!("non-numeric ddg {ddg_text:?}")))?;
        let variant = match parse_mutation_string(record.get(vcol).unwrap_or(""), graph) {
            Ok(v) => v,
            Err(Error::AbsentResidue(tok)) if policy == AbsentResiduePolicy::Skip => {
                log::warn!("line {line}: skipping {tok}, residue not in structure");
                continue;
            }
            Err(e) => return Err(with_line(line, e)),
        };
        let entry = sums.entry(variant.clone()).or_insert_with(|| {
            order.push(variant);
            (0.0, 0)
        });
        entry.0 += value;
        entry.1 += 1;
    }
    Ok(order
        .into_iter()
        .map(|variant| {
            let (sum, n) = sums[&variant];
            Observation {
                variant,
                value: sum / n as f64,
                source,
            }
        })
        .collect())
}

/// One row of a variant list: line number, the text as written, and the
/// parsed variant or the reason it was rejected.
pub type VariantRow = (usize, String, Result<Variant>);

/// Reads the `variant` column of a CSV; other columns are ignored. Rows are
/// parsed independently so callers can report every bad row.
pub fn read_variant_column(csv_content: &str, graph: &ContactGraph) -> Result<Vec<VariantRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(csv_content.as_bytes());
    let headers = reader.headers()?.clone();
    let Some(vcol) = headers.iter().position(|h| h == "variant") else {
        return Err(Error::parse(1, "expected a `variant` column"));
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let text = record.get(vcol).unwrap_or("").to_string();
        let parsed = parse_mutation_string(&text, graph);
        rows.push((line, text, parsed));
    }
    Ok(rows)
}

/// Writes observations back as `variant,ddg` rows (no header comment).
pub fn observations_to_csv(observations: &[Observation], graph: &ContactGraph) -> String {
    let mut out = String::from("variant,ddg\n");
    for o in observations {
        let _ = writeln!(out, "\"{}\",{}", o.variant.notation(graph), o.value);
    }
    out
}

/// `(y_experimental, y_simulated)` for every variant present in both lists,
/// in experimental order.
pub fn matched_pairs(experimental: &[Observation], simulated: &[Observation]) -> Vec<(f64, f64)> {
    let sim: HashMap<&Variant, f64> = simulated.iter().map(|o| (&o.variant, o.value)).collect();
    experimental
        .iter()
        .filter_map(|o| sim.get(&o.variant).map(|&s| (o.value, s)))
        .collect()
}

/// A calibrated simulated point: variant, transformed mean, transform variance.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledPoint {
    pub variant: Variant,
    pub value: f64,
    pub transform_variance: f64,
}

/// Training set laid out as wild type, experimental block, simulated block.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedDataset {
    variants: Vec<Variant>,
    targets: Vec<f64>,
    transform_variance: Vec<f64>,
    n_experimental: usize,
}

impl FusedDataset {
    /// Rebuilds a dataset from its stored blocks; `transform_variance` covers
    /// the simulated block only.
    pub fn from_parts(
        variants: Vec<Variant>,
        targets: Vec<f64>,
        transform_variance: Vec<f64>,
        n_experimental: usize,
    ) -> Result<Self> {
        let n = variants.len();
        let consistent = n >= 1
            && targets.len() == n
            && n_experimental < n
            && transform_variance.len() == n - 1 - n_experimental
            && variants[0].is_wild_type()
            && targets[0] == 0.0
            && transform_variance.iter().all(|v| *v >= 0.0);
        if !consistent {
            return Err(Error::InvalidDataset("inconsistent fused dataset blocks".into()));
        }
        Ok(Self {
            variants,
            targets,
            transform_variance,
            n_experimental,
        })
    }

    pub fn len(&self) -> usize {
        self.variants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variants.is_empty()
    }

    pub fn variants(&self) -> &[Variant] {
        &self.variants
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn n_experimental(&self) -> usize {
        self.n_experimental
    }

    pub fn n_simulated(&self) -> usize {
        self.variants.len() - 1 - self.n_experimental
    }

    /// Transform variances of the simulated block, in block order.
    pub fn transform_variance(&self) -> &[f64] {
        &self.transform_variance
    }

    pub fn experimental_range(&self) -> std::ops::Range<usize> {
        1..1 + self.n_experimental
    }

    pub fn simulated_range(&self) -> std::ops::Range<usize> {
        1 + self.n_experimental..self.variants.len()
    }

    /// SHA-256 over variants, targets and transform variances.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.variants.len() as u64).to_le_bytes());
        h.update((self.n_experimental as u64).to_le_bytes());
        for (v, y) in self.variants.iter().zip(&self.targets) {
            h.update(v.to_string().as_bytes());
            h.update([0u8]);
            h.update(y.to_le_bytes());
        }
        for s in &self.transform_variance {
            h.update(s.to_le_bytes());
        }
        h.finalize().into()
    }
}

/// Assembles `(x_0, X_E, X_S)` with targets `(0, y_E, ỹ_S)`.
pub fn fuse(experimental: &[Observation], simulated: &[ScaledPoint]) -> Result<FusedDataset> {
    let mut variants = Vec::with_capacity(1 + experimental.len() + simulated.len());
    let mut targets = Vec::with_capacity(variants.capacity());
    variants.push(Variant::wild_type());
    targets.push(0.0);
    for o in experimental {
        if o.variant.is_wild_type() {
            return Err(Error::InvalidDataset(
                "wild type listed among experimental observations".into(),
            ));
        }
        if !o.value.is_finite() {
            return Err(Error::InvalidDataset(format!(
                "non-finite experimental value for {}",
                o.variant
            )));
        }
        variants.push(o.variant.clone());
        targets.push(o.value);
    }
    let mut transform_variance = Vec::with_capacity(simulated.len());
    for s in simulated {
        if !s.value.is_finite() || !(s.transform_variance >= 0.0) || !s.transform_variance.is_finite() {
            return Err(Error::InvalidDataset(format!("invalid scaled value for {}", s.variant)));
        }
        variants.push(s.variant.clone());
        targets.push(s.value);
        transform_variance.push(s.transform_variance);
    }
    Ok(FusedDataset {
        variants,
        targets,
        transform_variance,
        n_experimental: experimental.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amino::parse_sequence;

    fn graph() -> ContactGraph {
        // Author numbering 1..=6.
        ContactGraph::from_edges(
            parse_sequence("AVGLKA").unwrap(),
            &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)],
        )
        .unwrap()
    }

    #[test]
    fn empty_string_is_wild_type() {
        assert!(parse_mutation_string("", &graph()).unwrap().is_wild_type());
    }

    #[test]
    fn maps_author_number() {
        let g = graph();
        let v = parse_mutation_string("V2I", &g).unwrap();
        assert_eq!(
            v.mutations(),
            &[Mutation {
                position: 1,
                from: AminoAcid::Val,
                to: AminoAcid::Ile
            }]
        );
        assert_eq!(v.notation(&g), "V2I");
    }

    #[test]
    fn duplicate_position_rejected() {
        let err = parse_mutation_string("A1G,A1V", &graph()).unwrap_err();
        assert!(matches!(err, Error::InvalidVariant(_)));
    }

    #[test]
    fn wrong_from_residue_rejected() {
        assert!(matches!(
            parse_mutation_string("G2I", &graph()),
            Err(Error::InvalidVariant(_))
        ));
    }

    #[test]
    fn absent_residue() {
        assert!(matches!(
            parse_mutation_string("A99G", &graph()),
            Err(Error::AbsentResidue(_))
        ));
    }

    #[test]
    fn listing_order_is_irrelevant() {
        let g = graph();
        assert_eq!(
            parse_mutation_string("A1G,V2I", &g).unwrap(),
            parse_mutation_string("V2I, A1G", &g).unwrap()
        );
    }

    #[test]
    fn averages_replicates() {
        let g = graph();
        let obs = load_observations(
            "variant,ddg\nA1G,1.0\nV2I,-0.5\nA1G,3.0\n",
            &g,
            Source::Experimental,
            AbsentResiduePolicy::Skip,
        )
        .unwrap();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[0].value, 2.0);
        assert_eq!(obs[1].value, -0.5);
    }

    #[test]
    fn non_numeric_ddg_reports_line() {
        let err = load_observations(
            "variant,ddg\nA1G,1.0\nV2I,abc\n",
            &graph(),
            Source::Experimental,
            AbsentResiduePolicy::Skip,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn absent_policy() {
        let text = "variant,ddg\nA99G,1.0\nV2I,0.5\n";
        let g = graph();
        let kept = load_observations(text, &g, Source::Simulated, AbsentResiduePolicy::Skip).unwrap();
        assert_eq!(kept.len(), 1);
        assert!(load_observations(text, &g, Source::Simulated, AbsentResiduePolicy::Fail).is_err());
    }

    #[test]
    fn quoted_multi_mutants_round_trip() {
        let g = graph();
        let obs = load_observations(
            "variant,ddg\n\"A1G,K5R\",2.5\n",
            &g,
            Source::Experimental,
            AbsentResiduePolicy::Fail,
        )
        .unwrap();
        assert_eq!(obs[0].variant.order(), 2);
        let again = load_observations(
            &observations_to_csv(&obs, &g),
            &g,
            Source::Experimental,
            AbsentResiduePolicy::Fail,
        )
        .unwrap();
        assert_eq!(again, obs);
    }

    #[test]
    fn pairs_and_fusion() {
        let g = graph();
        let sim: Vec<Observation> = (0..6)
            .map(|p| Observation {
                variant: Variant::point(&g, p, AminoAcid::Trp).unwrap(),
                value: p as f64,
                source: Source::Simulated,
            })
            .collect();
        let exp = vec![
            Observation {
                variant: Variant::point(&g, 4, AminoAcid::Trp).unwrap(),
                value: -1.0,
                source: Source::Experimental,
            },
            Observation {
                variant: parse_mutation_string("A1W,V2W", &g).unwrap(),
                value: -2.0,
                source: Source::Experimental,
            },
        ];
        assert_eq!(matched_pairs(&exp, &sim), vec![(-1.0, 4.0)]);
        assert!(matched_pairs(&exp, &[]).is_empty());

        let scaled: Vec<ScaledPoint> = sim
            .iter()
            .take(3)
            .map(|o| ScaledPoint {
                variant: o.variant.clone(),
                value: 0.5 * o.value,
                transform_variance: 0.1,
            })
            .collect();
        let fused = fuse(&exp, &scaled).unwrap();
        assert_eq!(fused.len(), 6);
        assert_eq!(fused.targets()[0], 0.0);
        assert!(fused.variants()[0].is_wild_type());
        assert_eq!(fused.experimental_range(), 1..3);
        assert_eq!(fused.simulated_range(), 3..6);
        assert!(fuse(&[], &scaled).is_ok());
        assert!(fuse(&exp, &[]).is_ok());

        let wt = Observation {
            variant: Variant::wild_type(),
            value: 0.0,
            source: Source::Experimental,
        };
        assert!(fuse(&[wt], &scaled).is_err());
    }

    #[test]
    fn variant_column_keeps_bad_rows() {
        let rows = read_variant_column("id,variant\n1,V2I\n2,X9Z\n3,\"A1G,L4F\"\n", &graph()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].0, 3);
        assert!(rows[0].2.is_ok() && rows[1].2.is_err());
        assert_eq!(rows[2].2.as_ref().unwrap().order(), 2);
    }
}
