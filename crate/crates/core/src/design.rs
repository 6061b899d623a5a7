//! Shared representation of a finished design: `m` codewords of `n`
//! complex symbols each.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Deformation state of a design: a numeric ρ for algorithmic designs, or
/// the `"learned"` marker for designs extracted from a trained autoencoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rho {
    Value(f64),
    Learned(LearnedTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnedTag {
    Learned,
}

impl Rho {
    pub const LEARNED: Rho = Rho::Learned(LearnedTag::Learned);

    pub fn value(self) -> Option<f64> {
        match self {
            Rho::Value(v) => Some(v),
            Rho::Learned(_) => None,
        }
    }
}

/// Row-major `m × n` symbol matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeMatrix {
    m: usize,
    n: usize,
    symbols: Vec<Complex64>,
}

impl CodeMatrix {
    pub fn new(m: usize, n: usize, symbols: Vec<Complex64>) -> Self {
        assert_eq!(symbols.len(), m * n, "symbol count must be m*n");
        assert!(m >= 1 && n >= 1, "empty code matrix");
        Self { m, n, symbols }
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let n = rows.first().map_or(0, Vec::len);
        let symbols: Vec<_> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(rows.len(), n, symbols)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, s: usize) -> &[Complex64] {
        &self.symbols[s * self.n..(s + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Complex64]> {
        self.symbols.chunks_exact(self.n)
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    /// `(1/(mn)) Σ |x|²`.
    pub fn average_power(&self) -> f64 {
        self.symbols.iter().map(|x| x.norm_sqr()).sum::<f64>() / self.symbols.len() as f64
    }

    /// True when every codeword is identical, so no decoder can do better
    /// than guessing.
    pub fn is_degenerate(&self) -> bool {
        let first = self.row(0);
        self.rows().all(|r| r == first)
    }
}

/// Squared Euclidean distance between two codewords.
#[inline]
pub fn dist_sq(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

#[cfg(test)]
pub(crate) fn relative_error(value: f64, target: f64) -> f64 {
    if target == 0.0 {
        value.abs()
    } else {
        ((value - target) / target).abs()
    }
}
