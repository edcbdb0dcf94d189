use crate::energy::EnergyModel;
use crate::raster::ClassId;

use super::{Adjacency, SolverConfig, SolverResult, SweepRecord};

/// Iterated conditional modes from the unary argmin.
///
/// A node only moves to a strictly cheaper label, so the energy never
/// increases and a sweep without moves ends the run.
pub fn icm_solve(model: &EnergyModel, config: &SolverConfig) -> SolverResult {
    let n = model.num_nodes();
    let c = model.num_classes();
    let adj = Adjacency::new(n, model.edges());
    let mut labels = model.unary_argmin();
    let mut cost = vec![0.0; c];
    let mut trace = Vec::new();
    let mut converged = false;

    for sweep in 1..=config.max_iterations {
        let mut changed = false;
        for v in 0..n {
            cost.copy_from_slice(model.unary(v));
            for &(w, edge) in adj.neighbors(v) {
                let weight = model.edges()[edge].weight;
                let lw = labels[w] as usize;
                for (x, s) in cost.iter_mut().enumerate() {
                    if x != lw {
                        *s += weight;
                    }
                }
            }
            let current = labels[v] as usize;
            let mut best = current;
            for x in 0..c {
                if cost[x] < cost[best] {
                    best = x;
                }
            }
            if best != current {
                labels[v] = best as ClassId;
                changed = true;
            }
        }
        trace.push(SweepRecord {
            sweep,
            lower_bound: f64::NEG_INFINITY,
            current_energy: model.evaluate(&labels).expect("labels in range"),
        });
        if !changed {
            converged = true;
            break;
        }
    }

    SolverResult {
        energy: model.evaluate(&labels).expect("labels in range"),
        labeling: labels,
        lower_bound: f64::NEG_INFINITY,
        iterations_run: trace.len(),
        converged,
        trace,
    }
}
