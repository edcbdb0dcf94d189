//! Random instance generators and independent oracles shared by the
//! integration tests.

#![allow(dead_code)]

use crf_fusion::energy::{assemble, EnergyModel, EnergyParams, PottsEdge};
use crf_fusion::graph::{EdgeKind, FusionGraph};
use crf_fusion::raster::{ClassId, FeatureRaster, ProbabilityField, RegionMap};
use crf_fusion::segmentation::region_features;
use rand::seq::SliceRandom;
use rand::Rng;

/// Random forest on `n` nodes with shuffled ids, unaries in `[0, 5)` and
/// weights in `[0, 2)`.
pub fn random_forest<R: Rng>(rng: &mut R, n: usize, classes: usize) -> EnergyModel {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let mut edges = Vec::new();
    for i in 1..n {
        // occasionally leave a node as the root of a new tree
        if rng.gen_bool(0.9) {
            let parent = rng.gen_range(0..i);
            let (a, b) = (ids[i], ids[parent]);
            edges.push(PottsEdge {
                u: a.min(b),
                v: a.max(b),
                weight: rng.gen_range(0.0..2.0),
                kind: EdgeKind::PixelPixel,
            });
        }
    }
    let unary = (0..n * classes).map(|_| rng.gen_range(0.0..5.0)).collect();
    EnergyModel::new(classes, unary, edges).unwrap()
}

/// Random probability vectors with a mild peak.
pub fn random_probs<R: Rng>(rng: &mut R, nodes: usize, classes: usize) -> ProbabilityField {
    let mut probs = Vec::with_capacity(nodes * classes);
    for _ in 0..nodes {
        let raw: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.02..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        probs.extend(raw.iter().map(|v| v / sum));
    }
    ProbabilityField::new(classes, probs).unwrap()
}

/// Random region map of `h x w` with exactly `regions` ids (all present).
pub fn random_regions<R: Rng>(rng: &mut R, h: usize, w: usize, regions: usize) -> RegionMap {
    loop {
        let ids: Vec<u32> = (0..h * w).map(|_| rng.gen_range(0..regions as u32)).collect();
        let mut seen = vec![false; regions];
        ids.iter().for_each(|&i| seen[i as usize] = true);
        if seen.iter().all(|&s| s) {
            return RegionMap::from_raw(h, w, &ids).unwrap();
        }
    }
}

pub struct FlatInstance {
    pub graph: FusionGraph,
    pub model: EnergyModel,
    pub regions: RegionMap,
}

/// Flattened two-layer instance with random features and posteriors.
pub fn random_flat<R: Rng>(
    rng: &mut R,
    h: usize,
    w: usize,
    regions: usize,
    classes: usize,
    params: &EnergyParams,
) -> FlatInstance {
    let regions = random_regions(rng, h, w, regions);
    let graph = FusionGraph::flatten(h, w, &regions).unwrap();
    let raster = FeatureRaster::new(
        h,
        w,
        2,
        (0..h * w * 2).map(|_| rng.gen_range(0.0..10.0)).collect(),
    )
    .unwrap();
    let pixel_probs = random_probs(rng, h * w, classes);
    let region_probs = random_probs(rng, regions.num_regions(), classes);
    let rfeat = region_features(&raster, &regions).unwrap();
    let model = assemble(&graph, &pixel_probs, &region_probs, &raster, &rfeat, params).unwrap();
    FlatInstance {
        graph,
        model,
        regions,
    }
}

/// Exhaustive minimum energy, enumerated independently of the solvers.
pub fn enumerate_min(model: &EnergyModel) -> f64 {
    let n = model.num_nodes();
    let c = model.num_classes();
    let total = c.pow(n as u32);
    let mut labels = vec![0 as ClassId; n];
    let mut best = f64::INFINITY;
    for code in 0..total {
        let mut rest = code;
        for l in labels.iter_mut() {
            *l = (rest % c) as ClassId;
            rest /= c;
        }
        let mut e: f64 = labels
            .iter()
            .enumerate()
            .map(|(v, &l)| model.unary(v)[l as usize])
            .sum();
        for edge in model.edges() {
            if labels[edge.u] != labels[edge.v] {
                e += edge.weight;
            }
        }
        best = best.min(e);
    }
    best
}

/// For each region: argmin over c of region unary(c) + sum of member pixel
/// unaries(c).
pub fn forced_agreement_oracle(model: &EnergyModel, regions: &RegionMap) -> Vec<ClassId> {
    let p = regions.num_pixels();
    let c = model.num_classes();
    let mut cost: Vec<Vec<f64>> = (0..regions.num_regions())
        .map(|r| model.unary(p + r).to_vec())
        .collect();
    for (pixel, &r) in regions.ids().iter().enumerate() {
        for (acc, u) in cost[r as usize].iter_mut().zip(model.unary(pixel)) {
            *acc += u;
        }
    }
    cost.iter()
        .map(|row| {
            let mut best = 0;
            for k in 1..c {
                if row[k] < row[best] {
                    best = k;
                }
            }
            best as ClassId
        })
        .collect()
}
