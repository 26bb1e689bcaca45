//! PDB coordinate ingestion and the residue contact graph.
//!
//! Only fixed-width `ATOM` records of the first model are read. Positions in
//! the graph are 0-based in file order; the author numbering from the file is
//! kept alongside so mutation strings can address residues the way databases
//! report them.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::amino::AminoAcid;
use crate::error::{Error, Result};

/// Default contact distance between closest atoms, in Ångström.
pub const DEFAULT_CONTACT_THRESHOLD: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub name: String,
    pub coord: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ResidueId {
    pub chain: char,
    pub seq: i32,
    pub insertion: char,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidueRecord {
    pub id: ResidueId,
    pub amino_acid: AminoAcid,
    pub atoms: Vec<Atom>,
}

impl ResidueRecord {
    pub fn chain_id(&self) -> char {
        self.id.chain
    }

    pub fn seq_position(&self) -> i32 {
        self.id.seq
    }
}

fn column(line: &str, start: usize, end: usize) -> &str {
    // PDB columns are 1-based and inclusive.
    let end = end.min(line.len());
    if start > end {
        return "";
    }
    line.get(start - 1..end).unwrap_or("")
}

fn column_char(line: &str, col: usize) -> char {
    column(line, col, col).chars().next().unwrap_or(' ')
}

fn parse_coord(line: &str, lineno: usize, start: usize, end: usize, axis: &str) -> Result<f64> {
    let field = column(line, start, end).trim();
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(lineno, format!("malformed {axis} coordinate {field:?}")))
}

/// Reads residues from PDB text.
///
/// One record per (chain, residue number, insertion code). `HETATM` records,
/// residues with non-canonical names and alternate locations other than blank
/// or `A` are skipped; reading stops at the end of the first model.
pub fn parse_structure(text: &str) -> Result<Vec<ResidueRecord>> {
    let mut residues: Vec<ResidueRecord> = Vec::new();
    let mut index: HashMap<ResidueId, usize> = HashMap::new();

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let record = column(line, 1, 6).trim_end();
        if record == "ENDMDL" {
            break;
        }
        if record != "ATOM" {
            continue;
        }
        let alt = column_char(line, 17);
        if alt != ' ' && alt != 'A' {
            continue;
        }
        let Some(amino_acid) = AminoAcid::from_three_letter(column(line, 18, 20)) else {
            continue;
        };
        let seq_field = column(line, 23, 26).trim();
        let seq = seq_field
            .parse::<i32>()
            .map_err(|_| Error::parse(lineno, format!("malformed residue number {seq_field:?}")))?;
        let x = parse_coord(line, lineno, 31, 38, "x")?;
        let y = parse_coord(line, lineno, 39, 46, "y")?;
        let z = parse_coord(line, lineno, 47, 54, "z")?;

        let id = ResidueId {
            chain: column_char(line, 22),
            seq,
            insertion: column_char(line, 27),
        };
        let atom = Atom {
            name: column(line, 13, 16).trim().to_string(),
            coord: [x, y, z],
        };
        match index.get(&id) {
            Some(&k) => residues[k].atoms.push(atom),
            None => {
                index.insert(id, residues.len());
                residues.push(ResidueRecord {
                    id,
                    amino_acid,
                    atoms: vec![atom],
                });
            }
        }
    }

    if residues.is_empty() {
        return Err(Error::EmptyStructure);
    }
    Ok(residues)
}

/// Keeps the residues of one chain; `None` selects the first chain in the file.
pub fn select_chain(residues: Vec<ResidueRecord>, chain: Option<char>) -> Result<Vec<ResidueRecord>> {
    let Some(target) = chain.or_else(|| residues.first().map(|r| r.id.chain)) else {
        return Err(Error::EmptyStructure);
    };
    let kept: Vec<_> = residues.into_iter().filter(|r| r.id.chain == target).collect();
    if kept.is_empty() {
        return Err(Error::EmptyStructure);
    }
    Ok(kept)
}

/// Wild-type residue adjacency shared by every variant of a protein.
#[derive(Clone, Debug, PartialEq)]
pub struct ContactGraph {
    wild_type: Vec<AminoAcid>,
    neighbors: Vec<Vec<usize>>,
    residue_ids: Vec<ResidueId>,
}

impl ContactGraph {
    /// Builds a graph directly from a sequence and an undirected edge list
    /// (0-based). Author numbering is taken as 1..M.
    pub fn from_edges(wild_type: Vec<AminoAcid>, edges: &[(usize, usize)]) -> Result<Self> {
        let m = wild_type.len();
        if m == 0 {
            return Err(Error::EmptyStructure);
        }
        let mut neighbors = vec![Vec::new(); m];
        for &(p, q) in edges {
            if p >= m || q >= m || p == q {
                return Err(Error::Config(format!("invalid contact edge ({p},{q})")));
            }
            neighbors[p].push(q);
            neighbors[q].push(p);
        }
        for nbs in &mut neighbors {
            nbs.sort_unstable();
            nbs.dedup();
        }
        let residue_ids = (0..m)
            .map(|i| ResidueId {
                chain: 'A',
                seq: i as i32 + 1,
                insertion: ' ',
            })
            .collect();
        Ok(Self {
            wild_type,
            neighbors,
            residue_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.wild_type.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wild_type.is_empty()
    }

    pub fn wild_type(&self) -> &[AminoAcid] {
        &self.wild_type
    }

    /// Sorted neighbor positions of `p`.
    pub fn neighbors(&self, p: usize) -> &[usize] {
        &self.neighbors[p]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges with `p < q`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(p, nbs)| nbs.iter().filter(move |&&q| q > p).map(move |&q| (p, q)))
    }

    pub fn residue_id(&self, p: usize) -> ResidueId {
        self.residue_ids[p]
    }

    /// Maps an author residue number (blank insertion code) to a position.
    pub fn position_of(&self, seq: i32) -> Option<usize> {
        self.position_of_inserted(seq, ' ')
    }

    pub fn position_of_inserted(&self, seq: i32, insertion: char) -> Option<usize> {
        self.residue_ids
            .iter()
            .position(|id| id.seq == seq && id.insertion == insertion)
    }

    /// CSV dump with header `p,q`, one row per undirected edge, 1-based, `p < q`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,q\n");
        for (p, q) in self.edges() {
            let _ = writeln!(out, "{},{}", p + 1, q + 1);
        }
        out
    }
}

struct Envelope {
    center: [f64; 3],
    radius: f64,
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn envelope(atoms: &[Atom]) -> Envelope {
    let n = atoms.len() as f64;
    let mut center = [0.0; 3];
    for a in atoms {
        for k in 0..3 {
            center[k] += a.coord[k] / n;
        }
    }
    let radius = atoms
        .iter()
        .map(|a| dist2(&a.coord, &center).sqrt())
        .fold(0.0, f64::max);
    Envelope { center, radius }
}

/// Two residues are in contact when any pair of their atoms is within
/// `threshold` Ångström.
pub fn build_contact_graph(residues: &[ResidueRecord], threshold: f64) -> Result<ContactGraph> {
    if residues.is_empty() {
        return Err(Error::EmptyStructure);
    }
    if !(threshold > 0.0) {
        return Err(Error::Config(format!(
            "contact threshold must be positive, got {threshold}"
        )));
    }
    if let Some(r) = residues.iter().find(|r| r.atoms.is_empty()) {
        return Err(Error::Config(format!("residue {:?} has no atoms", r.id)));
    }
    let m = residues.len();
    let t2 = threshold * threshold;
    let envelopes: Vec<Envelope> = residues.iter().map(|r| envelope(&r.atoms)).collect();
    let mut neighbors = vec![Vec::new(); m];
    for p in 0..m {
        for q in p + 1..m {
            // Cheap rejection; slightly padded so rounding never drops a true contact.
            let reach = envelopes[p].radius + envelopes[q].radius + threshold + 1e-9;
            if dist2(&envelopes[p].center, &envelopes[q].center) > reach * reach {
                continue;
            }
            let touching = residues[p]
                .atoms
                .iter()
                .any(|a| residues[q].atoms.iter().any(|b| dist2(&a.coord, &b.coord) <= t2));
            if touching {
                neighbors[p].push(q);
                neighbors[q].push(p);
            }
        }
    }
    for nbs in &mut neighbors {
        nbs.sort_unstable();
    }
    Ok(ContactGraph {
        wild_type: residues.iter().map(|r| r.amino_acid).collect(),
        neighbors,
        residue_ids: residues.iter().map(|r| r.id).collect(),
    })
}

/// Formats one `ATOM` line in PDB fixed-width layout.
pub fn format_atom_line(
    serial: usize,
    atom: &str,
    residue: AminoAcid,
    chain: char,
    seq: i32,
    coord: [f64; 3],
) -> String {
    format!(
        "ATOM  {serial:>5} {atom:<4} {res:>3} {chain}{seq:>4}    {x:>8.3}{y:>8.3}{z:>8.3}  1.00  0.00           {el}",
        res = residue.three_letter(),
        x = coord[0],
        y = coord[1],
        z = coord[2],
        el = atom.chars().next().unwrap_or('C'),
    )
}
