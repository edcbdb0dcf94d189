//! Raster data model: feature grids, label maps, region maps and
//! per-node probability fields.
//!
//! All grids are row-major. Types validate on construction and are
//! immutable afterwards.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Class index. `UNLABELED` marks pixels without reference labels.
pub type ClassId = u16;

/// Sentinel for pixels that carry no reference label.
pub const UNLABELED: ClassId = ClassId::MAX;

/// Sum tolerance for a probability vector to be accepted as-is.
pub const PROB_SUM_TOLERANCE: f64 = 1e-5;

/// Vectors off by at most this much are renormalized instead of rejected.
pub const PROB_RENORMALIZE_TOLERANCE: f64 = 1e-3;

const SD_FLOOR: f64 = 1e-12;

/// H x W grid of m-dimensional feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRaster {
    height: usize,
    width: usize,
    bands: usize,
    values: Vec<f64>,
}

impl FeatureRaster {
    pub fn new(height: usize, width: usize, bands: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::InvalidRaster(format!(
                "dimensions must be positive, got {height}x{width}x{bands}"
            )));
        }
        if values.len() != height * width * bands {
            return Err(Error::DimensionMismatch(format!(
                "raster {height}x{width}x{bands} needs {} values, got {}",
                height * width * bands,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidRaster(format!("non-finite value at index {i}")));
        }
        Ok(Self {
            height,
            width,
            bands,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Feature vector of the pixel with row-major index `idx`.
    pub fn pixel(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.bands..(idx + 1) * self.bands]
    }

    /// Z-scores every band over all pixels.
    ///
    /// Uses the population standard deviation; a band whose deviation is
    /// below 1e-12 maps to all zeros.
    pub fn standardize(&self) -> FeatureRaster {
        let n = self.num_pixels() as f64;
        let mut out = self.values.clone();
        for b in 0..self.bands {
            let band = || self.values.iter().skip(b).step_by(self.bands);
            let mean = band().sum::<f64>() / n;
            let var = band().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = var.sqrt();
            for (o, v) in out.iter_mut().skip(b).step_by(self.bands).zip(band()) {
                *o = if sd < SD_FLOOR { 0.0 } else { (v - mean) / sd };
            }
        }
        FeatureRaster {
            values: out,
            ..*self
        }
    }
}

/// Per-pixel class labels, with `UNLABELED` allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    num_classes: usize,
    labels: Vec<ClassId>,
}

impl LabelMap {
    pub fn new(
        height: usize,
        width: usize,
        num_classes: usize,
        labels: Vec<ClassId>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidLabels("dimensions must be positive".into()));
        }
        if num_classes < 2 || num_classes > UNLABELED as usize {
            return Err(Error::InvalidLabels(format!(
                "number of classes must be in 2..={}, got {num_classes}",
                UNLABELED
            )));
        }
        if labels.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "label map {height}x{width} needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        if let Some(bad) = labels
            .iter()
            .find(|&&l| l != UNLABELED && l as usize >= num_classes)
        {
            return Err(Error::InvalidLabels(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        Ok(Self {
            height,
            width,
            num_classes,
            labels,
        })
    }

    /// Builds a map whose class count is inferred as max label + 1 (at least 2).
    pub fn infer_classes(height: usize, width: usize, labels: Vec<ClassId>) -> Result<Self> {
        let max = labels
            .iter()
            .filter(|&&l| l != UNLABELED)
            .max()
            .map_or(0, |&l| l as usize);
        Self::new(height, width, (max + 1).max(2), labels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if num_classes < self.num_classes {
            return Self::new(self.height, self.width, num_classes, self.labels);
        }
        self.num_classes = num_classes;
        Ok(self)
    }
}

/// Partition of the grid into regions with contiguous ids `0..R`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMap {
    height: usize,
    width: usize,
    num_regions: usize,
    ids: Vec<u32>,
}

impl RegionMap {
    /// Validates that `ids` covers exactly `0..R` for some R.
    pub fn new(height: usize, width: usize, ids: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidRaster(
                "region map dimensions must be positive".into(),
            ));
        }
        if ids.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "region map {height}x{width} needs {} ids, got {}",
                height * width,
                ids.len()
            )));
        }
        let max = *ids.iter().max().expect("non-empty");
        let mut seen = vec![false; max as usize + 1];
        for &id in &ids {
            seen[id as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::NonContiguousRegionIds {
                missing: missing as u32,
                max,
            });
        }
        Ok(Self {
            height,
            width,
            num_regions: max as usize + 1,
            ids,
        })
    }

    /// Accepts arbitrary ids and renumbers them with [`relabel_contiguous`].
    pub fn from_raw(height: usize, width: usize, ids: &[u32]) -> Result<Self> {
        Self::new(height, width, relabel_contiguous(ids))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_pixels(&self) -> usize {
        self.ids.len()
    }

    pub fn num_regions(&self) -> usize {
        self.num_regions
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn region_of(&self, pixel: usize) -> usize {
        self.ids[pixel] as usize
    }

    /// Pixel count of every region.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_regions];
        for &id in &self.ids {
            sizes[id as usize] += 1;
        }
        sizes
    }

    /// Renumbers this map in first-appearance order.
    pub fn relabeled(&self) -> RegionMap {
        RegionMap {
            ids: relabel_contiguous(&self.ids),
            ..*self
        }
    }

    /// Spreads one value per region to pixel resolution.
    pub fn broadcast<T: Copy>(&self, per_region: &[T]) -> Vec<T> {
        self.ids.iter().map(|&id| per_region[id as usize]).collect()
    }
}

/// Maps arbitrary ids to `0..R` in order of first appearance (row-major scan).
pub fn relabel_contiguous(ids: &[u32]) -> Vec<u32> {
    let mut mapping: HashMap<u32, u32> = HashMap::new();
    ids.iter()
        .map(|&id| {
            let next = mapping.len() as u32;
            *mapping.entry(id).or_insert(next)
        })
        .collect()
}

/// Per-node class posteriors, each vector summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField {
    num_classes: usize,
    probs: Vec<f64>,
}

impl ProbabilityField {
    /// Validates entries and sums.
    ///
    /// Vectors whose sum is off by more than 1e-5 but at most 1e-3 are
    /// renormalized with a warning; larger deviations are rejected.
    pub fn new(num_classes: usize, mut probs: Vec<f64>) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidProbability("zero classes".into()));
        }
        if !probs.len().is_multiple_of(num_classes) {
            return Err(Error::DimensionMismatch(format!(
                "{} values are not a multiple of {num_classes} classes",
                probs.len()
            )));
        }
        let mut renormalized = 0usize;
        for (node, row) in probs.chunks_mut(num_classes).enumerate() {
            if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::InvalidProbability(format!(
                    "node {node} has entry {p} outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            let dev = (sum - 1.0).abs();
            if dev > PROB_RENORMALIZE_TOLERANCE {
                return Err(Error::InvalidProbability(format!(
                    "node {node} sums to {sum}"
                )));
            }
            if dev > PROB_SUM_TOLERANCE {
                row.iter_mut().for_each(|p| *p /= sum);
                renormalized += 1;
            }
        }
        if renormalized > 0 {
            log::warn!("renormalized {renormalized} probability vectors with sums off by more than {PROB_SUM_TOLERANCE}");
        }
        Ok(Self { num_classes, probs })
    }

    /// Builds a field from one-hot vectors.
    pub fn one_hot(num_classes: usize, labels: &[ClassId]) -> Result<Self> {
        let mut probs = vec![0.0; labels.len() * num_classes];
        for (node, &l) in labels.iter().enumerate() {
            if l as usize >= num_classes {
                return Err(Error::LabelOutOfRange {
                    node,
                    label: l,
                    num_classes,
                });
            }
            probs[node * num_classes + l as usize] = 1.0;
        }
        Self::new(num_classes, probs)
    }

    pub fn num_nodes(&self) -> usize {
        self.probs.len() / self.num_classes
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn node(&self, idx: usize) -> &[f64] {
        &self.probs[idx * self.num_classes..(idx + 1) * self.num_classes]
    }

    /// Most probable class per node, ties toward the lowest index.
    pub fn argmax(&self) -> Vec<ClassId> {
        self.probs
            .chunks(self.num_classes)
            .map(|row| {
                let mut best = 0;
                for (c, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = c;
                    }
                }
                best as ClassId
            })
            .collect()
    }
}

/// Per-region feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionFeatureTable {
    dims: usize,
    rows: Vec<f64>,
}

impl RegionFeatureTable {
    pub fn new(dims: usize, rows: Vec<f64>) -> Result<Self> {
        if dims == 0 || !rows.len().is_multiple_of(dims) {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not form rows of width {dims}",
                rows.len()
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRaster("non-finite region feature".into()));
        }
        Ok(Self { dims, rows })
    }

    pub fn num_regions(&self) -> usize {
        self.rows.len() / self.dims
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn row(&self, region: usize) -> &[f64] {
        &self.rows[region * self.dims..(region + 1) * self.dims]
    }

    pub fn values(&self) -> &[f64] {
        &self.rows
    }

    /// Column-wise z-scores, same degenerate-variance rule as rasters.
    pub fn standardize(&self) -> RegionFeatureTable {
        let raster = FeatureRaster {
            height: self.num_regions(),
            width: 1,
            bands: self.dims,
            values: self.rows.clone(),
        };
        RegionFeatureTable {
            dims: self.dims,
            rows: raster.standardize().values,
        }
    }
}

/// Checks that raster, regions and labels share one grid.
pub fn validate_alignment(
    raster: &FeatureRaster,
    regions: &RegionMap,
    labels: &LabelMap,
) -> Result<()> {
    let dims = (raster.height(), raster.width());
    for (name, other) in [
        ("region map", (regions.height(), regions.width())),
        ("label map", (labels.height(), labels.width())),
    ] {
        if other != dims {
            return Err(Error::DimensionMismatch(format!(
                "raster is {}x{}, {name} is {}x{}",
                dims.0, dims.1, other.0, other.1
            )));
        }
    }
    // contiguity of region ids is a RegionMap construction invariant
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster(h: usize, w: usize, bands: usize, values: Vec<f64>) -> FeatureRaster {
        FeatureRaster::new(h, w, bands, values).unwrap()
    }

    #[test]
    fn aligned_inputs_validate() {
        let r = raster(4, 4, 1, vec![0.0; 16]);
        let ids = (0..16).map(|i| (i % 2) as u32).collect();
        let regions = RegionMap::new(4, 4, ids).unwrap();
        let labels = LabelMap::new(4, 4, 2, vec![0; 16]).unwrap();
        validate_alignment(&r, &regions, &labels).unwrap();
    }

    #[test]
    fn misaligned_regions_rejected() {
        let r = raster(4, 4, 1, vec![0.0; 16]);
        let regions = RegionMap::new(3, 4, vec![0; 12]).unwrap();
        let labels = LabelMap::new(4, 4, 2, vec![0; 16]).unwrap();
        assert!(matches!(
            validate_alignment(&r, &regions, &labels),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn gap_in_region_ids_rejected() {
        let ids = (0..16).map(|i| if i < 8 { 0 } else { 2 }).collect();
        assert!(matches!(
            RegionMap::new(4, 4, ids),
            Err(Error::NonContiguousRegionIds { missing: 1, max: 2 })
        ));
    }

    #[test]
    fn non_finite_raster_rejected() {
        assert!(FeatureRaster::new(1, 2, 1, vec![0.0, f64::NAN]).is_err());
        assert!(FeatureRaster::new(0, 2, 1, vec![]).is_err());
    }

    #[test]
    fn label_bounds() {
        assert!(LabelMap::new(1, 2, 2, vec![0, 2]).is_err());
        assert!(LabelMap::new(1, 2, 2, vec![0, UNLABELED]).is_ok());
        assert!(LabelMap::new(1, 2, 1, vec![0, 0]).is_err());
    }

    #[test]
    fn standardize_single_band() {
        let s = raster(1, 4, 1, vec![1.0, 2.0, 3.0, 4.0]).standardize();
        let mean = s.values().iter().sum::<f64>() / 4.0;
        let var = s.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var.sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standardize_constant_band_is_zero() {
        let s = raster(2, 2, 1, vec![5.0; 4]).standardize();
        assert_eq!(s.values(), &[0.0; 4]);
    }

    #[test]
    fn standardize_bands_independently() {
        let s = raster(1, 3, 2, vec![1.0, 100.0, 2.0, 300.0, 6.0, 200.0]).standardize();
        for b in 0..2 {
            let mean: f64 = (0..3).map(|i| s.pixel(i)[b]).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-12, "band {b} mean {mean}");
        }
    }

    #[test]
    fn relabel_first_appearance() {
        assert_eq!(relabel_contiguous(&[7, 7, 3]), vec![0, 0, 1]);
        assert_eq!(relabel_contiguous(&[2, 0, 2, 5]), vec![0, 1, 0, 2]);
        let contiguous = RegionMap::new(1, 3, vec![0, 1, 1]).unwrap();
        assert_eq!(contiguous.relabeled(), contiguous);
    }

    #[test]
    fn probability_renormalization_rules() {
        let p = ProbabilityField::new(2, vec![0.5, 0.5005]).unwrap();
        let sum: f64 = p.node(0).iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(ProbabilityField::new(2, vec![0.5, 0.6]).is_err());
        assert!(ProbabilityField::new(2, vec![-0.1, 1.1]).is_err());
        assert!(ProbabilityField::new(2, vec![0.5, 0.5, 0.2]).is_err());
    }

    #[test]
    fn argmax_ties_lowest() {
        let p = ProbabilityField::new(3, vec![0.4, 0.4, 0.2, 0.1, 0.2, 0.7]).unwrap();
        assert_eq!(p.argmax(), vec![0, 2]);
    }
}
