//! Energy of the flattened two-layer model.
//!
//! The energy of a labeling `y` over all nodes is
//!
//! ```text
//! U(y) = sum_v D_v(y_v) + sum_(u,v) w_uv [y_u != y_v]
//! ```
//!
//! with `D_v = -ln max(p_v, floor)` from the layer's posteriors and Potts
//! weights
//!
//! * pixel-pixel: `lambda_p * K(x_u, x_v; sigma_p)`
//! * region-region: `lambda_r * K(x_u, x_v; sigma_r)`
//! * pixel-region (cross): `mu`
//!
//! where `K(a, b; s) = exp(-|a - b|^2 / (2 s^2))`. With
//! `lambda_p == lambda_r` this is the joint pixel/region CRF energy with a
//! single smoothness weight.

use crate::error::{Error, Result};
use crate::graph::{EdgeKind, FusionGraph, Layer};
use crate::raster::{ClassId, FeatureRaster, ProbabilityField, RegionFeatureTable};
use crate::segmentation::euclidean;

pub const DEFAULT_PROB_FLOOR: f64 = 1e-6;

/// Mean edge distances below this disable contrast (sigma falls back to 1).
const SIGMA_DEGENERATE: f64 = 1e-12;

/// How the kernel bandwidth of a layer is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaMode {
    /// Half the mean feature distance across the layer's edges.
    Heuristic,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    pub lambda_p: f64,
    pub lambda_r: f64,
    pub mu: f64,
    pub sigma_p: SigmaMode,
    pub sigma_r: SigmaMode,
    pub prob_floor: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            lambda_p: 1.0,
            lambda_r: 1.0,
            mu: 1.0,
            sigma_p: SigmaMode::Heuristic,
            sigma_r: SigmaMode::Heuristic,
            prob_floor: DEFAULT_PROB_FLOOR,
        }
    }
}

impl EnergyParams {
    /// Same smoothness weight on both layers.
    pub fn joint(lambda: f64, mu: f64) -> Self {
        Self {
            lambda_p: lambda,
            lambda_r: lambda,
            mu,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_p", self.lambda_p),
            ("lambda_r", self.lambda_r),
            ("mu", self.mu),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        for s in [self.sigma_p, self.sigma_r] {
            if let SigmaMode::Fixed(v) = s {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "sigma must be positive, got {v}"
                    )));
                }
            }
        }
        if !(self.prob_floor > 0.0 && self.prob_floor < 1.0) {
            return Err(Error::InvalidFloor(self.prob_floor));
        }
        Ok(())
    }
}

/// Potts edge: cost `weight` whenever the endpoint labels differ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PottsEdge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
    pub kind: EdgeKind,
}

/// Pairwise Potts energy over `num_nodes` nodes with `num_classes` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    num_classes: usize,
    unary: Vec<f64>,
    edges: Vec<PottsEdge>,
    /// Resolved kernel bandwidths when built by [`assemble`].
    sigmas: Option<(f64, f64)>,
}

/// Energy split by term.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyTerms {
    pub unary: f64,
    pub pixel_pairwise: f64,
    pub region_pairwise: f64,
    pub cross: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.unary + self.pixel_pairwise + self.region_pairwise + self.cross
    }
}

impl EnergyModel {
    /// Builds a model from a flat node-major unary table and Potts edges.
    pub fn new(num_classes: usize, unary: Vec<f64>, edges: Vec<PottsEdge>) -> Result<Self> {
        if num_classes == 0 || !unary.len().is_multiple_of(num_classes) {
            return Err(Error::DimensionMismatch(format!(
                "{} unary costs do not split into {num_classes} classes",
                unary.len()
            )));
        }
        if let Some(c) = unary.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "unary costs must be finite and non-negative, got {c}"
            )));
        }
        let n = unary.len() / num_classes;
        for e in &edges {
            if e.u >= n || e.v >= n || e.u == e.v {
                return Err(Error::DimensionMismatch(format!(
                    "edge ({}, {}) invalid for {n} nodes",
                    e.u, e.v
                )));
            }
            if !(e.weight >= 0.0 && e.weight.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "edge weight must be finite and non-negative, got {}",
                    e.weight
                )));
            }
        }
        Ok(Self {
            num_classes,
            unary,
            edges,
            sigmas: None,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.unary.len() / self.num_classes
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn unary(&self, node: usize) -> &[f64] {
        &self.unary[node * self.num_classes..(node + 1) * self.num_classes]
    }

    pub fn unary_table(&self) -> &[f64] {
        &self.unary
    }

    pub fn edges(&self) -> &[PottsEdge] {
        &self.edges
    }

    /// `(sigma_p, sigma_r)` used when the model was assembled.
    pub fn sigmas(&self) -> Option<(f64, f64)> {
        self.sigmas
    }

    /// Copy of the model with every edge weight multiplied by the factor
    /// for its kind.
    pub fn scaled(&self, pixel: f64, region: f64, cross: f64) -> EnergyModel {
        let mut out = self.clone();
        for e in &mut out.edges {
            e.weight *= match e.kind {
                EdgeKind::PixelPixel => pixel,
                EdgeKind::RegionRegion => region,
                EdgeKind::Cross => cross,
            };
        }
        out
    }

    fn check_labeling(&self, labeling: &[ClassId]) -> Result<()> {
        if labeling.len() != self.num_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "labeling has {} entries for {} nodes",
                labeling.len(),
                self.num_nodes()
            )));
        }
        if let Some((node, &label)) = labeling
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= self.num_classes)
        {
            return Err(Error::LabelOutOfRange {
                node,
                label,
                num_classes: self.num_classes,
            });
        }
        Ok(())
    }

    /// Energy of `labeling`, split by term.
    pub fn evaluate_terms(&self, labeling: &[ClassId]) -> Result<EnergyTerms> {
        self.check_labeling(labeling)?;
        let mut terms = EnergyTerms {
            unary: labeling
                .iter()
                .enumerate()
                .map(|(v, &l)| self.unary[v * self.num_classes + l as usize])
                .sum(),
            ..EnergyTerms::default()
        };
        for e in &self.edges {
            if labeling[e.u] != labeling[e.v] {
                match e.kind {
                    EdgeKind::PixelPixel => terms.pixel_pairwise += e.weight,
                    EdgeKind::RegionRegion => terms.region_pairwise += e.weight,
                    EdgeKind::Cross => terms.cross += e.weight,
                }
            }
        }
        Ok(terms)
    }

    pub fn evaluate(&self, labeling: &[ClassId]) -> Result<f64> {
        self.evaluate_terms(labeling).map(|t| t.total())
    }

    /// Per-node argmin of the unary costs, ties toward the lowest class.
    pub fn unary_argmin(&self) -> Vec<ClassId> {
        self.unary
            .chunks(self.num_classes)
            .map(|row| argmin(row) as ClassId)
            .collect()
    }

    /// Single-layer model: that layer's unaries and intra-layer edges,
    /// nodes renumbered from zero. Cross edges are dropped.
    pub fn restrict_to_layer(&self, graph: &FusionGraph, layer: Layer) -> Result<EnergyModel> {
        if graph.num_nodes() != self.num_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "graph has {} nodes, model has {}",
                graph.num_nodes(),
                self.num_nodes()
            )));
        }
        let range = graph.layer_nodes(layer);
        let kind = match layer {
            Layer::Pixel => EdgeKind::PixelPixel,
            Layer::Region => EdgeKind::RegionRegion,
        };
        let c = self.num_classes;
        Ok(EnergyModel {
            num_classes: c,
            unary: self.unary[range.start * c..range.end * c].to_vec(),
            edges: self
                .edges
                .iter()
                .filter(|e| e.kind == kind)
                .map(|e| PottsEdge {
                    u: e.u - range.start,
                    v: e.v - range.start,
                    ..*e
                })
                .collect(),
            sigmas: self.sigmas,
        })
    }
}

pub(crate) fn argmin(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v < row[best] {
            best = i;
        }
    }
    best
}

/// `-ln max(p, floor)` per node and class.
pub fn unary_from_probs(probs: &ProbabilityField, prob_floor: f64) -> Result<Vec<f64>> {
    if !(prob_floor > 0.0 && prob_floor < 1.0) {
        return Err(Error::InvalidFloor(prob_floor));
    }
    Ok(probs
        .probs()
        .iter()
        .map(|&p| {
            let cost = -p.max(prob_floor).ln();
            // -ln 1 is -0.0
            cost.max(0.0)
        })
        .collect())
}

/// Gaussian similarity `exp(-|x - y|^2 / (2 sigma^2))`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Half the mean feature distance over `edges`; 1 when that mean vanishes.
pub fn sigma_heuristic<'a, F>(features: F, edges: &[(usize, usize)]) -> Result<f64>
where
    F: Fn(usize) -> &'a [f64],
{
    if edges.is_empty() {
        return Err(Error::NoEdges);
    }
    let mean = edges
        .iter()
        .map(|&(u, v)| euclidean(features(u), features(v)))
        .sum::<f64>()
        / edges.len() as f64;
    Ok(if mean < SIGMA_DEGENERATE { 1.0 } else { 0.5 * mean })
}

fn resolve_sigma<'a, F>(mode: SigmaMode, features: F, edges: &[(usize, usize)]) -> Result<f64>
where
    F: Fn(usize) -> &'a [f64],
{
    match mode {
        SigmaMode::Fixed(s) => Ok(s),
        // a layer without edges never evaluates its kernel
        SigmaMode::Heuristic if edges.is_empty() => Ok(1.0),
        SigmaMode::Heuristic => sigma_heuristic(features, edges),
    }
}

/// Builds the full energy on a flattened graph.
///
/// Pixel features and region feature columns are z-scored before kernel
/// evaluation.
pub fn assemble(
    graph: &FusionGraph,
    pixel_probs: &ProbabilityField,
    region_probs: &ProbabilityField,
    pixel_features: &FeatureRaster,
    region_features: &RegionFeatureTable,
    params: &EnergyParams,
) -> Result<EnergyModel> {
    params.validate()?;
    let p = graph.num_pixel_nodes();
    let r = graph.num_region_nodes();
    if pixel_probs.num_nodes() != p || pixel_features.num_pixels() != p {
        return Err(Error::DimensionMismatch(format!(
            "graph has {p} pixels, posteriors {} and features {}",
            pixel_probs.num_nodes(),
            pixel_features.num_pixels()
        )));
    }
    if region_probs.num_nodes() != r || region_features.num_regions() != r {
        return Err(Error::DimensionMismatch(format!(
            "graph has {r} regions, posteriors {} and features {}",
            region_probs.num_nodes(),
            region_features.num_regions()
        )));
    }
    if pixel_probs.num_classes() != region_probs.num_classes() {
        return Err(Error::DimensionMismatch(format!(
            "pixel posteriors have {} classes, region posteriors {}",
            pixel_probs.num_classes(),
            region_probs.num_classes()
        )));
    }

    let pixel_x = pixel_features.standardize();
    let region_x = region_features.standardize();
    let pixel_feature = |n: usize| pixel_x.pixel(n);
    let region_feature = |n: usize| region_x.row(n - p);

    let edge_pairs = |kind: EdgeKind| -> Vec<(usize, usize)> {
        graph
            .edges()
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| (e.u, e.v))
            .collect()
    };
    let sigma_p = resolve_sigma(params.sigma_p, pixel_feature, &edge_pairs(EdgeKind::PixelPixel))?;
    let sigma_r = resolve_sigma(
        params.sigma_r,
        region_feature,
        &edge_pairs(EdgeKind::RegionRegion),
    )?;

    let mut unary = unary_from_probs(pixel_probs, params.prob_floor)?;
    unary.extend(unary_from_probs(region_probs, params.prob_floor)?);

    let edges = graph
        .edges()
        .iter()
        .map(|e| {
            let weight = match e.kind {
                EdgeKind::PixelPixel => {
                    params.lambda_p * gaussian_kernel(pixel_feature(e.u), pixel_feature(e.v), sigma_p)
                }
                EdgeKind::RegionRegion => {
                    params.lambda_r
                        * gaussian_kernel(region_feature(e.u), region_feature(e.v), sigma_r)
                }
                EdgeKind::Cross => params.mu,
            };
            PottsEdge {
                u: e.u,
                v: e.v,
                weight,
                kind: e.kind,
            }
        })
        .collect();

    let mut model = EnergyModel::new(pixel_probs.num_classes(), unary, edges)?;
    model.sigmas = Some((sigma_p, sigma_r));
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RegionMap;

    fn chain() -> EnergyModel {
        EnergyModel::new(
            2,
            vec![0.0, 1.0, 1.0, 0.0],
            vec![PottsEdge {
                u: 0,
                v: 1,
                weight: 0.4,
                kind: EdgeKind::PixelPixel,
            }],
        )
        .unwrap()
    }

    #[test]
    fn unary_values() {
        let probs = ProbabilityField::new(3, vec![1.0, 0.0, 0.0, 0.5, 0.5, 0.0]).unwrap();
        let u = unary_from_probs(&probs, 1e-6).unwrap();
        assert_eq!(u[0], 0.0);
        assert!((u[1] - 13.815510557964274).abs() < 1e-9);
        assert!((u[3] - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(matches!(
            unary_from_probs(&probs, 0.0),
            Err(Error::InvalidFloor(_))
        ));
        assert!(unary_from_probs(&probs, 1.0).is_err());
    }

    #[test]
    fn kernel_values() {
        assert_eq!(gaussian_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.3), 1.0);
        let sigma = 0.7;
        let d = sigma * 2f64.sqrt();
        let k = gaussian_kernel(&[0.0, 0.0], &[d, 0.0], sigma);
        assert!((k - (-1f64).exp()).abs() < 1e-12);
        assert!(gaussian_kernel(&[0.0], &[100.0], 1.0) < 1e-300);
    }

    #[test]
    fn sigma_rules() {
        let feats = [vec![0.0], vec![1.0], vec![4.0], vec![2.0]];
        let f = |i: usize| feats[i].as_slice();
        assert_eq!(sigma_heuristic(f, &[(0, 1), (1, 2)]).unwrap(), 1.0);
        assert_eq!(sigma_heuristic(f, &[(0, 3), (3, 2)]).unwrap(), 1.0);
        let flat = [vec![3.0], vec![3.0]];
        assert_eq!(sigma_heuristic(|i| flat[i].as_slice(), &[(0, 1)]).unwrap(), 1.0);
        assert!(matches!(sigma_heuristic(f, &[]), Err(Error::NoEdges)));
    }

    #[test]
    fn chain_energies() {
        let m = chain();
        assert!((m.evaluate(&[0, 1]).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(m.evaluate(&[0, 0]).unwrap(), 1.0);
        assert_eq!(m.evaluate(&[1, 1]).unwrap(), 1.0);
        assert!((m.evaluate(&[1, 0]).unwrap() - 2.4).abs() < 1e-15);
        assert!(matches!(
            m.evaluate(&[0, 2]),
            Err(Error::LabelOutOfRange { node: 1, .. })
        ));
        assert!(m.evaluate(&[0]).is_err());
    }

    #[test]
    fn isolated_nodes() {
        let m = EnergyModel::new(2, vec![0.0, 1.0, 1.0, 0.0], vec![]).unwrap();
        assert_eq!(m.evaluate(&[0, 1]).unwrap(), 0.0);
        assert_eq!(m.unary_argmin(), vec![0, 1]);
    }

    fn tiny_instance(params: &EnergyParams) -> (FusionGraph, EnergyModel) {
        let regions = RegionMap::new(2, 2, vec![0, 0, 1, 1]).unwrap();
        let graph = FusionGraph::flatten(2, 2, &regions).unwrap();
        let raster = FeatureRaster::new(2, 2, 1, vec![1.0, 1.0, 5.0, 9.0]).unwrap();
        let probs =
            ProbabilityField::new(2, vec![0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.3, 0.7]).unwrap();
        let rprobs = crate::segmentation::pool_region_probs(&probs, &regions).unwrap();
        let rfeat = crate::segmentation::region_features(&raster, &regions).unwrap();
        let model = assemble(&graph, &probs, &rprobs, &raster, &rfeat, params).unwrap();
        (graph, model)
    }

    #[test]
    fn assemble_weights() {
        let (_, zero) = tiny_instance(&EnergyParams::joint(0.0, 0.0));
        assert!(zero.edges().iter().all(|e| e.weight == 0.0));

        let (_, m) = tiny_instance(&EnergyParams::joint(2.0, 0.75));
        for e in m.edges() {
            match e.kind {
                EdgeKind::Cross => assert_eq!(e.weight, 0.75),
                _ => assert!(e.weight > 0.0 && e.weight <= 2.0),
            }
        }
        // pixels 0 and 1 have identical features
        let e01 = m.edges().iter().find(|e| (e.u, e.v) == (0, 1)).unwrap();
        assert_eq!(e01.weight, 2.0);
        assert_eq!(m.num_nodes(), 6);
        assert!(m.sigmas().is_some());
    }

    #[test]
    fn cross_term_counts_disagreements() {
        let mu = 0.625;
        let (graph, m) = tiny_instance(&EnergyParams::joint(1.0, mu));
        // all pixels agree with their region
        let agree = [0, 0, 1, 1, 0, 1];
        assert_eq!(m.evaluate_terms(&agree).unwrap().cross, 0.0);
        let one_off = [1, 0, 1, 1, 0, 1];
        assert_eq!(m.evaluate_terms(&one_off).unwrap().cross, mu);
        let restricted = m.restrict_to_layer(&graph, Layer::Region).unwrap();
        assert_eq!(restricted.num_nodes(), 2);
        assert_eq!(restricted.edges().len(), 1);
    }

    #[test]
    fn assemble_rejects_mismatch() {
        let regions = RegionMap::new(1, 2, vec![0, 1]).unwrap();
        let graph = FusionGraph::flatten(1, 2, &regions).unwrap();
        let raster = FeatureRaster::new(1, 2, 1, vec![0.0, 1.0]).unwrap();
        let probs = ProbabilityField::new(2, vec![0.5; 4]).unwrap();
        let rfeat = crate::segmentation::region_features(&raster, &regions).unwrap();
        let short = ProbabilityField::new(2, vec![0.5; 2]).unwrap();
        assert!(matches!(
            assemble(&graph, &probs, &short, &raster, &rfeat, &EnergyParams::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
