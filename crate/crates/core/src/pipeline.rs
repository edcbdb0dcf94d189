//! End-to-end runs: fusion, single-layer baselines, evaluation and
//! parameter sweeps. The command-line tool is a thin shell over these.

use rayon::prelude::*;

use crate::energy::{assemble, EnergyModel, EnergyParams};
use crate::error::{Error, Result};
use crate::graph::{FusionGraph, Layer};
use crate::metrics::{confusion, ConfusionMatrix, Scores};
use crate::raster::{
    ClassId, FeatureRaster, LabelMap, ProbabilityField, RegionFeatureTable, RegionMap,
};
use crate::segmentation::{pool_region_probs, region_features};
use crate::solver::{solve, solve_single_layer, SolverConfig, SolverResult};

/// Everything a fusion run reads.
#[derive(Debug, Clone)]
pub struct Scene {
    pub image: FeatureRaster,
    pub regions: RegionMap,
    pub pixel_probs: ProbabilityField,
    pub region_probs: ProbabilityField,
}

impl Scene {
    /// Region posteriors pooled from the pixel posteriors.
    pub fn with_pooled_regions(
        image: FeatureRaster,
        regions: RegionMap,
        pixel_probs: ProbabilityField,
    ) -> Result<Self> {
        let region_probs = pool_region_probs(&pixel_probs, &regions)?;
        Ok(Self {
            image,
            regions,
            pixel_probs,
            region_probs,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.pixel_probs.num_classes()
    }
}

/// Graph and region features shared by every model built on a scene.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub graph: FusionGraph,
    pub region_features: RegionFeatureTable,
}

pub fn prepare(scene: &Scene) -> Result<Prepared> {
    let (h, w) = (scene.image.height(), scene.image.width());
    Ok(Prepared {
        graph: FusionGraph::flatten(h, w, &scene.regions)?,
        region_features: region_features(&scene.image, &scene.regions)?,
    })
}

pub fn build_model(scene: &Scene, prepared: &Prepared, params: &EnergyParams) -> Result<EnergyModel> {
    assemble(
        &prepared.graph,
        &scene.pixel_probs,
        &scene.region_probs,
        &scene.image,
        &prepared.region_features,
        params,
    )
}

#[derive(Debug, Clone)]
pub struct FusionOutput {
    pub result: SolverResult,
    pub pixel_labels: Vec<ClassId>,
    /// One label per region.
    pub region_labels: Vec<ClassId>,
    /// Region labels spread to their pixels.
    pub region_labels_at_pixels: Vec<ClassId>,
}

/// Joint pixel/region inference on the flattened graph.
pub fn fuse(scene: &Scene, params: &EnergyParams, solver: &SolverConfig) -> Result<FusionOutput> {
    let prepared = prepare(scene)?;
    fuse_prepared(scene, &prepared, params, solver)
}

pub fn fuse_prepared(
    scene: &Scene,
    prepared: &Prepared,
    params: &EnergyParams,
    solver: &SolverConfig,
) -> Result<FusionOutput> {
    let model = build_model(scene, prepared, params)?;
    let result = solve(&model, solver)?;
    let p = prepared.graph.num_pixel_nodes();
    let pixel_labels = result.labeling[..p].to_vec();
    let region_labels = result.labeling[p..].to_vec();
    Ok(FusionOutput {
        region_labels_at_pixels: scene.regions.broadcast(&region_labels),
        pixel_labels,
        region_labels,
        result,
    })
}

/// Single-layer CRF on one layer (no cross-layer term). Labels are
/// returned at pixel resolution.
pub fn baseline(
    scene: &Scene,
    layer: Layer,
    params: &EnergyParams,
    solver: &SolverConfig,
) -> Result<(Vec<ClassId>, SolverResult)> {
    let prepared = prepare(scene)?;
    baseline_prepared(scene, &prepared, layer, params, solver)
}

pub fn baseline_prepared(
    scene: &Scene,
    prepared: &Prepared,
    layer: Layer,
    params: &EnergyParams,
    solver: &SolverConfig,
) -> Result<(Vec<ClassId>, SolverResult)> {
    let model = build_model(scene, prepared, params)?;
    let result = solve_single_layer(&model, &prepared.graph, layer, solver)?;
    let labels = match layer {
        Layer::Pixel => result.labeling.clone(),
        Layer::Region => scene.regions.broadcast(&result.labeling),
    };
    Ok((labels, result))
}

/// Confusion of a pixel-resolution prediction against a reference map.
pub fn evaluate_labels(reference: &LabelMap, predicted: &[ClassId]) -> Result<ConfusionMatrix> {
    confusion(reference.labels(), predicted, reference.num_classes())
}

/// `(lambda, mu)` grid; lambda applies to both layers.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub lambdas: Vec<f64>,
    pub mus: Vec<f64>,
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.lambdas
            .iter()
            .flat_map(|&l| self.mus.iter().map(move |&m| (l, m)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub lambda: f64,
    pub mu: f64,
    pub pixel: ConfusionMatrix,
    pub region: ConfusionMatrix,
    pub energy: f64,
}

impl SweepCell {
    pub fn pixel_scores(&self) -> Result<Scores> {
        Scores::of(&self.pixel)
    }

    pub fn region_scores(&self) -> Result<Scores> {
        Scores::of(&self.region)
    }
}

/// Fuses every grid cell and scores both layers against `reference`.
///
/// Cells run on up to `jobs` threads; results keep grid order
/// (lambda-major).
pub fn sweep(
    scene: &Scene,
    reference: &LabelMap,
    grid: &SweepGrid,
    base: &EnergyParams,
    solver: &SolverConfig,
    jobs: usize,
) -> Result<Vec<SweepCell>> {
    if grid.lambdas.is_empty() || grid.mus.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    let prepared = prepare(scene)?;
    let run = || {
        grid.cells()
            .into_par_iter()
            .map(|(lambda, mu)| {
                let params = EnergyParams {
                    lambda_p: lambda,
                    lambda_r: lambda,
                    mu,
                    ..*base
                };
                let out = fuse_prepared(scene, &prepared, &params, solver)?;
                Ok(SweepCell {
                    lambda,
                    mu,
                    pixel: evaluate_labels(reference, &out.pixel_labels)?,
                    region: evaluate_labels(reference, &out.region_labels_at_pixels)?,
                    energy: out.result.energy,
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .install(run)
}

/// Cell with the highest pixel OA; the first one wins ties.
pub fn best_cell(cells: &[SweepCell]) -> Option<&SweepCell> {
    let mut best: Option<(&SweepCell, f64)> = None;
    for cell in cells {
        let oa = cell.pixel_scores().map(|s| s.oa).unwrap_or(f64::NEG_INFINITY);
        if best.is_none_or(|(_, b)| oa > b) {
            best = Some((cell, oa));
        }
    }
    best.map(|(c, _)| c)
}
