//! MAP inference on Potts energies.
//!
//! [`trws`] is the main solver, [`icm`] a greedy baseline and [`brute`] an
//! exhaustive oracle for small instances.

use std::io::Write;

use crate::energy::{EnergyModel, PottsEdge};
use crate::error::{Error, Result};
use crate::graph::{FusionGraph, Layer};
use crate::raster::ClassId;

pub mod brute;
pub mod icm;
pub mod trws;

pub use brute::brute_force_solve;
pub use icm::icm_solve;
pub use trws::trws_solve;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Trws,
    Icm,
    BruteForce,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "trws" | "trw-s" => Ok(Method::Trws),
            "icm" => Ok(Method::Icm),
            "brute" | "bruteforce" | "brute-force" => Ok(Method::BruteForce),
            other => Err(Error::InvalidParameter(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once a sweep raises the lower bound by less than this (nats).
    pub energy_tolerance: f64,
    pub method: Method,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            energy_tolerance: 1e-4,
            method: Method::Trws,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be >= 1".into()));
        }
        if self.energy_tolerance.is_nan() || self.energy_tolerance < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "energy_tolerance must be >= 0, got {}",
                self.energy_tolerance
            )));
        }
        Ok(())
    }
}

/// One row of the per-sweep solver trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub sweep: usize,
    pub lower_bound: f64,
    pub current_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub labeling: Vec<ClassId>,
    /// Energy of `labeling`, recomputed from the model.
    pub energy: f64,
    /// Lower bound on the optimum; `-inf` for solvers without one.
    pub lower_bound: f64,
    pub iterations_run: usize,
    pub converged: bool,
    pub trace: Vec<SweepRecord>,
}

impl SolverResult {
    pub fn bound_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.lower_bound).collect()
    }

    /// Writes `sweep,lower_bound,current_energy` CSV.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "sweep,lower_bound,current_energy")?;
        for r in &self.trace {
            writeln!(out, "{},{},{}", r.sweep, r.lower_bound, r.current_energy)?;
        }
        Ok(())
    }
}

/// Runs the configured method.
pub fn solve(model: &EnergyModel, config: &SolverConfig) -> Result<SolverResult> {
    config.validate()?;
    match config.method {
        Method::Trws => Ok(trws_solve(model, config)),
        Method::Icm => Ok(icm_solve(model, config)),
        Method::BruteForce => brute_force_solve(model),
    }
}

/// Solves the single-layer CRF: that layer's unaries and intra-layer
/// edges, without the cross-layer term. Labels are indexed from zero
/// within the layer.
pub fn solve_single_layer(
    model: &EnergyModel,
    graph: &FusionGraph,
    layer: Layer,
    config: &SolverConfig,
) -> Result<SolverResult> {
    solve(&model.restrict_to_layer(graph, layer)?, config)
}

/// Neighbour lists in compressed row form.
pub(crate) struct Adjacency {
    offsets: Vec<usize>,
    /// `(neighbour, edge index)`, sorted by neighbour per node.
    entries: Vec<(usize, usize)>,
}

impl Adjacency {
    pub(crate) fn new(num_nodes: usize, edges: &[PottsEdge]) -> Self {
        let mut degree = vec![0usize; num_nodes + 1];
        for e in edges {
            degree[e.u + 1] += 1;
            degree[e.v + 1] += 1;
        }
        for i in 0..num_nodes {
            degree[i + 1] += degree[i];
        }
        let offsets = degree;
        let mut fill = offsets.clone();
        let mut entries = vec![(0, 0); 2 * edges.len()];
        for (i, e) in edges.iter().enumerate() {
            entries[fill[e.u]] = (e.v, i);
            fill[e.u] += 1;
            entries[fill[e.v]] = (e.u, i);
            fill[e.v] += 1;
        }
        for v in 0..num_nodes {
            entries[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        Self { offsets, entries }
    }

    pub(crate) fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.entries[self.offsets[v]..self.offsets[v + 1]]
    }
}
