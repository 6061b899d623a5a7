use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::canonical_curve;
use crate::rng::{normal, substream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    Synthetic,
    File,
}

/// Measured or generated (input power, output power) pairs, both in µW.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDataset {
    pairs: Vec<(f64, f64)>,
    source: DatasetSource,
}

#[derive(Serialize, Deserialize)]
struct Row {
    p_in_uw: f64,
    p_out_uw: f64,
}

impl PowerDataset {
    pub fn new(pairs: Vec<(f64, f64)>, source: DatasetSource) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Dataset("dataset is empty".into()));
        }
        if let Some((i, _)) = pairs
            .iter()
            .enumerate()
            .find(|(_, (a, b))| !(a.is_finite() && b.is_finite() && *a >= 0.0 && *b >= 0.0))
        {
            return Err(Error::Dataset(format!(
                "row {i} must hold finite, nonnegative powers"
            )));
        }
        Ok(Self { pairs, source })
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn source(&self) -> DatasetSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Reads `p_in_uw,p_out_uw` CSV.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["p_in_uw", "p_out_uw"] {
            return Err(Error::Dataset(format!(
                "expected header `p_in_uw,p_out_uw`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut pairs = Vec::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            pairs.push((row.p_in_uw, row.p_out_uw));
        }
        Self::new(pairs, DatasetSource::File)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        for &(p_in_uw, p_out_uw) in &self.pairs {
            wtr.serialize(Row { p_in_uw, p_out_uw })?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Samples the canonical curve at zero plus `n_points − 1` log-spaced
/// inputs on `[0.1, p_max]`, with multiplicative Gaussian noise of relative
/// standard deviation `noise_rel`.
pub fn synth_dataset(n_points: usize, p_max: f64, noise_rel: f64, seed: u64) -> Result<PowerDataset> {
    if n_points < 2 {
        return Err(Error::domain("synthetic dataset needs at least 2 points"));
    }
    if !(p_max > 0.1 && p_max.is_finite()) {
        return Err(Error::domain(format!("p_max must exceed 0.1 µW, got {p_max}")));
    }
    if !(noise_rel >= 0.0 && noise_rel.is_finite()) {
        return Err(Error::domain("noise_rel must be finite and nonnegative"));
    }
    let mut rng = substream(seed, 0);
    let (lo, hi) = (0.1f64.ln(), p_max.ln());
    let grid = n_points - 1;
    let mut pairs = Vec::with_capacity(n_points);
    pairs.push((0.0, 0.0));
    for i in 0..grid {
        let frac = if grid == 1 { 1.0 } else { i as f64 / (grid - 1) as f64 };
        let p = (lo + frac * (hi - lo)).exp();
        let clean = canonical_curve(p);
        let out = if noise_rel > 0.0 {
            (clean * (1.0 + noise_rel * normal(&mut rng))).max(0.0)
        } else {
            clean
        };
        pairs.push((p, out));
    }
    PowerDataset::new(pairs, DatasetSource::Synthetic)
}
