//! Region layer construction.
//!
//! [`segment`] is the Felzenszwalb-Huttenlocher graph-based segmentation on
//! a pixel grid. The other functions derive per-region quantities from a
//! pixel-level input and a [`RegionMap`].

use crate::error::{Error, Result};
use crate::raster::{
    ClassId, FeatureRaster, LabelMap, ProbabilityField, RegionFeatureTable, RegionMap, UNLABELED,
};

/// Grid neighbourhood used to build the segmentation graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl TryFrom<u32> for Connectivity {
    type Error = Error;

    fn try_from(value: u32) -> Result<Self> {
        match value {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::InvalidParameter(format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationParams {
    /// Scale of the merge threshold `k / |C|`, in feature-distance units.
    pub k: f64,
    pub min_size: usize,
    pub connectivity: Connectivity,
}

impl Default for SegmentationParams {
    /// `k = 300`, `min_size = 20` on 0-255 features. These are arbitrary
    /// starting points, not tuned values.
    fn default() -> Self {
        Self {
            k: 300.0,
            min_size: 20,
            connectivity: Connectivity::Eight,
        }
    }
}

impl SegmentationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "k must be positive, got {}",
                self.k
            )));
        }
        if self.min_size == 0 {
            return Err(Error::InvalidParameter("min_size must be at least 1".into()));
        }
        Ok(())
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
    /// Largest edge weight merged inside the component, valid at roots.
    internal: Vec<f64>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize, weight: f64) {
        let (big, small) = if self.size[a] >= self.size[b] {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.internal[big] = self.internal[big].max(self.internal[small]).max(weight);
    }
}

struct GridEdge {
    a: usize,
    b: usize,
    weight: f64,
}

fn grid_edges(raster: &FeatureRaster, connectivity: Connectivity) -> Vec<GridEdge> {
    let (h, w) = (raster.height(), raster.width());
    let offsets: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(0, 1), (1, 0)],
        Connectivity::Eight => &[(0, 1), (1, 0), (1, 1), (1, -1)],
    };
    let mut edges = Vec::with_capacity(h * w * offsets.len());
    for r in 0..h {
        for c in 0..w {
            let a = r * w + c;
            for &(dr, dc) in offsets {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let b = nr as usize * w + nc as usize;
                let (a, b) = (a.min(b), a.max(b));
                edges.push(GridEdge {
                    a,
                    b,
                    weight: euclidean(raster.pixel(a), raster.pixel(b)),
                });
            }
        }
    }
    edges
}

pub(crate) fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Graph-based segmentation of a raster into connected regions.
///
/// Edges are sorted by weight with ties broken by endpoint indices, so the
/// result is fully deterministic. Components smaller than `min_size` are
/// merged afterwards along their cheapest remaining edge.
pub fn segment(raster: &FeatureRaster, params: &SegmentationParams) -> Result<RegionMap> {
    params.validate()?;
    let mut edges = grid_edges(raster, params.connectivity);
    edges.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });

    let mut sets = DisjointSet::new(raster.num_pixels());
    for e in &edges {
        let (ra, rb) = (sets.find(e.a), sets.find(e.b));
        if ra == rb {
            continue;
        }
        let threshold = (sets.internal[ra] + params.k / sets.size[ra] as f64)
            .min(sets.internal[rb] + params.k / sets.size[rb] as f64);
        if e.weight <= threshold {
            sets.union(ra, rb, e.weight);
        }
    }

    if params.min_size > 1 {
        for e in &edges {
            let (ra, rb) = (sets.find(e.a), sets.find(e.b));
            if ra != rb && (sets.size[ra] < params.min_size || sets.size[rb] < params.min_size) {
                sets.union(ra, rb, e.weight);
            }
        }
    }

    let roots: Vec<u32> = (0..raster.num_pixels())
        .map(|p| sets.find(p) as u32)
        .collect();
    RegionMap::from_raw(raster.height(), raster.width(), &roots)
}

fn check_grid(regions: &RegionMap, height: usize, width: usize, what: &str) -> Result<()> {
    if (regions.height(), regions.width()) != (height, width) {
        return Err(Error::DimensionMismatch(format!(
            "{what} is {height}x{width}, region map is {}x{}",
            regions.height(),
            regions.width()
        )));
    }
    Ok(())
}

/// Per region and band: `[min, max, mean, population std]`, band-major.
pub fn region_features(raster: &FeatureRaster, regions: &RegionMap) -> Result<RegionFeatureTable> {
    check_grid(regions, raster.height(), raster.width(), "raster")?;
    let bands = raster.bands();
    let nr = regions.num_regions();
    let mut min = vec![f64::INFINITY; nr * bands];
    let mut max = vec![f64::NEG_INFINITY; nr * bands];
    let mut sum = vec![0.0; nr * bands];
    let sizes = regions.sizes();
    for (p, &id) in regions.ids().iter().enumerate() {
        let base = id as usize * bands;
        for (b, &v) in raster.pixel(p).iter().enumerate() {
            min[base + b] = min[base + b].min(v);
            max[base + b] = max[base + b].max(v);
            sum[base + b] += v;
        }
    }
    let mean: Vec<f64> = sum
        .iter()
        .enumerate()
        .map(|(i, s)| s / sizes[i / bands] as f64)
        .collect();
    // two-pass variance
    let mut sq = vec![0.0; nr * bands];
    for (p, &id) in regions.ids().iter().enumerate() {
        let base = id as usize * bands;
        for (b, &v) in raster.pixel(p).iter().enumerate() {
            let d = v - mean[base + b];
            sq[base + b] += d * d;
        }
    }

    let dims = 4 * bands;
    let mut rows = Vec::with_capacity(nr * dims);
    for (r, &size) in sizes.iter().enumerate() {
        for b in 0..bands {
            let i = r * bands + b;
            rows.extend([min[i], max[i], mean[i], (sq[i] / size as f64).sqrt()]);
        }
    }
    RegionFeatureTable::new(dims, rows)
}

/// Majority reference class per region, ignoring unlabeled pixels.
///
/// Ties go to the lowest class index; regions without labeled pixels get
/// `UNLABELED`.
pub fn majority_label(regions: &RegionMap, labels: &LabelMap) -> Result<Vec<ClassId>> {
    check_grid(regions, labels.height(), labels.width(), "label map")?;
    let c = labels.num_classes();
    let mut counts = vec![0usize; regions.num_regions() * c];
    for (&id, &l) in regions.ids().iter().zip(labels.labels()) {
        if l != UNLABELED {
            counts[id as usize * c + l as usize] += 1;
        }
    }
    Ok(counts
        .chunks(c)
        .map(|row| {
            let mut best: Option<usize> = None;
            for (class, &n) in row.iter().enumerate() {
                if n > 0 && best.is_none_or(|b| n > row[b]) {
                    best = Some(class);
                }
            }
            best.map_or(UNLABELED, |b| b as ClassId)
        })
        .collect())
}

/// Mean of member-pixel posteriors per region, renormalized to sum 1.
pub fn pool_region_probs(
    pixel_probs: &ProbabilityField,
    regions: &RegionMap,
) -> Result<ProbabilityField> {
    if pixel_probs.num_nodes() != regions.num_pixels() {
        return Err(Error::DimensionMismatch(format!(
            "{} pixel posteriors for a {}-pixel region map",
            pixel_probs.num_nodes(),
            regions.num_pixels()
        )));
    }
    let c = pixel_probs.num_classes();
    let mut acc = vec![0.0; regions.num_regions() * c];
    for (p, &id) in regions.ids().iter().enumerate() {
        let row = &mut acc[id as usize * c..(id as usize + 1) * c];
        for (a, &v) in row.iter_mut().zip(pixel_probs.node(p)) {
            *a += v;
        }
    }
    for row in acc.chunks_mut(c) {
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
    }
    ProbabilityField::new(c, acc)
}
