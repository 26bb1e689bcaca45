use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// The 20 canonical amino acids, in AAindex row order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum AminoAcid {
    Ala,
    Arg,
    Asn,
    Asp,
    Cys,
    Gln,
    Glu,
    Gly,
    His,
    Ile,
    Leu,
    Lys,
    Met,
    Phe,
    Pro,
    Ser,
    Thr,
    Trp,
    Tyr,
    Val,
}

pub const ORDER: &str = "ARNDCQEGHILKMFPSTWYV";

const THREE: [&str; 20] = [
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE", "LEU", "LYS", "MET", "PHE", "PRO", "SER",
    "THR", "TRP", "TYR", "VAL",
];

impl AminoAcid {
    pub const ALL: [AminoAcid; 20] = [
        AminoAcid::Ala,
        AminoAcid::Arg,
        AminoAcid::Asn,
        AminoAcid::Asp,
        AminoAcid::Cys,
        AminoAcid::Gln,
        AminoAcid::Glu,
        AminoAcid::Gly,
        AminoAcid::His,
        AminoAcid::Ile,
        AminoAcid::Leu,
        AminoAcid::Lys,
        AminoAcid::Met,
        AminoAcid::Phe,
        AminoAcid::Pro,
        AminoAcid::Ser,
        AminoAcid::Thr,
        AminoAcid::Trp,
        AminoAcid::Tyr,
        AminoAcid::Val,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn from_one_letter(c: char) -> Option<Self> {
        ORDER.find(c.to_ascii_uppercase()).and_then(Self::from_index)
    }

    pub fn from_three_letter(code: &str) -> Option<Self> {
        let code = code.trim().to_ascii_uppercase();
        THREE.iter().position(|t| *t == code).and_then(Self::from_index)
    }

    pub fn one_letter(self) -> char {
        ORDER.as_bytes()[self.index()] as char
    }

    pub fn three_letter(self) -> &'static str {
        THREE[self.index()]
    }
}

impl fmt::Display for AminoAcid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.one_letter())
    }
}

impl FromStr for AminoAcid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Self::from_one_letter(c),
            _ => Self::from_three_letter(s),
        }
        .ok_or_else(|| Error::UnknownResidue(s.to_string()))
    }
}

/// Parses a one-letter sequence string.
pub fn parse_sequence(seq: &str) -> Result<Vec<AminoAcid>, Error> {
    seq.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| AminoAcid::from_one_letter(c).ok_or_else(|| Error::UnknownResidue(c.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip() {
        for aa in AminoAcid::ALL {
            assert_eq!(AminoAcid::from_one_letter(aa.one_letter()), Some(aa));
            assert_eq!(AminoAcid::from_three_letter(aa.three_letter()), Some(aa));
        }
        assert_eq!("gly".parse::<AminoAcid>().unwrap(), AminoAcid::Gly);
        assert!("X".parse::<AminoAcid>().is_err());
        assert!(AminoAcid::from_three_letter("MSE").is_none());
    }
}
