//! Confusion matrices and the accuracy scores derived from them.
//!
//! Across several tiles two conventions are reported: *pooled* scores are
//! computed on the summed confusion matrix (every sample weighs the same),
//! *averaged* scores are the unweighted mean of per-tile scores.

use std::io::Write;

use crate::error::{Error, Result};
use crate::raster::{ClassId, UNLABELED};

/// Rows are reference classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::DimensionMismatch("confusion matrix must be square".into()));
        }
        Ok(Self {
            num_classes: c,
            counts: rows.concat(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, reference: usize, predicted: usize) -> u64 {
        self.counts[reference * self.num_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn trace(&self) -> u64 {
        (0..self.num_classes).map(|c| self.get(c, c)).sum()
    }

    fn row_sum(&self, c: usize) -> u64 {
        self.counts[c * self.num_classes..(c + 1) * self.num_classes]
            .iter()
            .sum()
    }

    fn col_sum(&self, c: usize) -> u64 {
        (0..self.num_classes).map(|r| self.get(r, c)).sum()
    }

    /// Element-wise sum; both matrices must have the same class count.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::DimensionMismatch(format!(
                "cannot merge {}-class and {}-class matrices",
                self.num_classes, other.num_classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.num_classes)
            .map(<[u64]>::to_vec)
            .collect()
    }
}

/// Counts reference/prediction pairs, skipping unlabeled references.
///
/// Predictions outside `0..num_classes` are rejected.
pub fn confusion(
    reference: &[ClassId],
    predicted: &[ClassId],
    num_classes: usize,
) -> Result<ConfusionMatrix> {
    if reference.len() != predicted.len() {
        return Err(Error::ShapeMismatch {
            reference: reference.len(),
            predicted: predicted.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(num_classes);
    for (i, (&r, &p)) in reference.iter().zip(predicted).enumerate() {
        if r == UNLABELED {
            continue;
        }
        for label in [r, p] {
            if label as usize >= num_classes {
                return Err(Error::LabelOutOfRange {
                    node: i,
                    label,
                    num_classes,
                });
            }
        }
        cm.counts[r as usize * num_classes + p as usize] += 1;
    }
    Ok(cm)
}

/// Overall accuracy: trace / total.
pub fn oa(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// Mean per-class recall over classes present in the reference.
pub fn aa(cm: &ConfusionMatrix) -> Result<f64> {
    let recalls: Vec<f64> = (0..cm.num_classes())
        .filter_map(|c| {
            let row = cm.row_sum(c);
            (row > 0).then(|| cm.get(c, c) as f64 / row as f64)
        })
        .collect();
    if recalls.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Cohen's kappa; 0 when chance agreement is 1.
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let overall = oa(cm)?;
    let total = cm.total() as f64;
    let expected: f64 = (0..cm.num_classes())
        .map(|c| cm.row_sum(c) as f64 * cm.col_sum(c) as f64)
        .sum::<f64>()
        / (total * total);
    if expected >= 1.0 {
        return Ok(0.0);
    }
    Ok((overall - expected) / (1.0 - expected))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
}

impl Scores {
    pub fn of(cm: &ConfusionMatrix) -> Result<Self> {
        Ok(Self {
            oa: oa(cm)?,
            aa: aa(cm)?,
            kappa: kappa(cm)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    /// Scores of the summed confusion matrix.
    pub pooled: Scores,
    /// Unweighted mean of per-tile scores.
    pub averaged: Scores,
    pub per_tile: Vec<Scores>,
}

pub fn aggregate(per_tile: &[ConfusionMatrix]) -> Result<Aggregate> {
    let first = per_tile.first().ok_or(Error::EmptyMatrix)?;
    let mut sum = ConfusionMatrix::new(first.num_classes());
    for cm in per_tile {
        sum.merge(cm)?;
    }
    let tiles = per_tile
        .iter()
        .map(Scores::of)
        .collect::<Result<Vec<_>>>()?;
    let n = tiles.len() as f64;
    let mean = |f: fn(&Scores) -> f64| tiles.iter().map(f).sum::<f64>() / n;
    Ok(Aggregate {
        pooled: Scores::of(&sum)?,
        averaged: Scores {
            oa: mean(|s| s.oa),
            aa: mean(|s| s.aa),
            kappa: mean(|s| s.kappa),
        },
        per_tile: tiles,
    })
}

/// One line of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub tile: String,
    pub layer: String,
    pub method: String,
    pub scores: Scores,
}

/// Writes `tile,layer,method,oa,aa,kappa,kappa_2dp`.
///
/// Scores use four decimals; kappa is repeated at two decimals.
pub fn write_report<W: Write>(mut out: W, rows: &[ReportRow]) -> std::io::Result<()> {
    writeln!(out, "tile,layer,method,oa,aa,kappa,kappa_2dp")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.4},{:.4},{:.4},{:.2}",
            r.tile, r.layer, r.method, r.scores.oa, r.scores.aa, r.scores.kappa, r.scores.kappa
        )?;
    }
    Ok(())
}
