//! Quantities of interest against reference observations.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observation index: time (days) and spatial cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub time: f64,
    pub cell: u32,
}

impl Site {
    fn key(&self) -> (i64, u32) {
        // microsecond-ish resolution in days is far below any output spacing
        ((self.time * 1e9).round() as i64, self.cell)
    }
}

/// Reference values aligned with a model output grid; masked-out entries are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl ReferenceSet {
    pub fn new(values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::UndefinedObjective(format!(
                "{} reference values but {} mask entries",
                values.len(),
                mask.len()
            )));
        }
        if let Some(i) = (0..values.len()).find(|&i| mask[i] && !values[i].is_finite()) {
            return Err(Error::UndefinedObjective(format!("reference value {i} is not finite")));
        }
        Ok(ReferenceSet { values, mask })
    }

    /// Everything observed.
    pub fn complete(values: Vec<f64>) -> Result<Self> {
        let mask = vec![true; values.len()];
        Self::new(values, mask)
    }

    /// Align `(site, value)` observations with `sites`; sites without an
    /// observation are masked out.
    pub fn align(sites: &[Site], observations: &[(Site, f64)]) -> Result<Self> {
        let lookup: HashMap<(i64, u32), f64> = observations.iter().map(|(s, v)| (s.key(), *v)).collect();
        let (values, mask) = sites
            .iter()
            .map(|s| match lookup.get(&s.key()) {
                Some(&v) => (v, true),
                None => (0.0, false),
            })
            .unzip();
        Self::new(values, mask)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of observed entries.
    pub fn available(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

/// Mean absolute difference over the observed entries.
pub fn epsilon(model: &[f64], reference: &ReferenceSet) -> Result<f64> {
    if model.len() != reference.len() {
        return Err(Error::UndefinedObjective(format!(
            "{} model values for {} reference entries",
            model.len(),
            reference.len()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, ((&m, &r), &observed)) in model.iter().zip(&reference.values).zip(&reference.mask).enumerate() {
        if !observed {
            continue;
        }
        if !m.is_finite() {
            return Err(Error::UndefinedObjective(format!("model value {i} is not finite")));
        }
        sum += (m - r).abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::UndefinedObjective("no reference entries are available".into()));
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Serialize, Deserialize)]
struct ReferenceRow {
    time: f64,
    cell: u32,
    value: f64,
}

/// Read `time,cell,value` rows.
pub fn read_reference_csv(path: &Path) -> Result<Vec<(Site, f64)>> {
    let context = || format!("reading reference data {}", path.display());
    let mut reader = csv::Reader::from_path(path).map_err(|source| Error::Csv { context: context(), source })?;
    reader
        .deserialize::<ReferenceRow>()
        .map(|row| {
            let row = row.map_err(|source| Error::Csv { context: context(), source })?;
            Ok((Site { time: row.time, cell: row.cell }, row.value))
        })
        .collect()
}

pub fn write_reference_csv(path: &Path, observations: &[(Site, f64)]) -> Result<()> {
    let context = || format!("writing reference data {}", path.display());
    let mut writer = csv::Writer::from_path(path).map_err(|source| Error::Csv { context: context(), source })?;
    for (site, value) in observations {
        writer
            .serialize(ReferenceRow {
                time: site.time,
                cell: site.cell,
                value: *value,
            })
            .map_err(|source| Error::Csv { context: context(), source })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Keep each entry with probability `coverage`, reproducibly from `seed`.
pub fn thin_observations(sites: &[Site], values: &[f64], coverage: f64, seed: u64) -> Vec<(Site, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sites
        .iter()
        .zip(values)
        .filter(|_| rng.random::<f64>() < coverage)
        .map(|(s, v)| (*s, *v))
        .collect()
}
