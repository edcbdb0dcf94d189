use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::raster::ClassId;

use super::{SolverResult, SweepRecord};

/// Largest search space accepted, in bits (`nodes * log2(classes)`).
pub const MAX_SEARCH_BITS: f64 = 24.0;

/// Exhaustive search over all labelings.
///
/// Labelings are enumerated in lexicographic order (node 0 most
/// significant) and only a strictly lower energy replaces the incumbent,
/// so ties resolve to the lexicographically smallest labeling.
pub fn brute_force_solve(model: &EnergyModel) -> Result<SolverResult> {
    let n = model.num_nodes();
    let c = model.num_classes();
    if n as f64 * (c as f64).log2() > MAX_SEARCH_BITS {
        return Err(Error::InstanceTooLarge {
            nodes: n,
            classes: c,
        });
    }
    let mut labels: Vec<ClassId> = vec![0; n];
    let mut best = labels.clone();
    let mut best_energy = model.evaluate(&labels)?;
    'outer: loop {
        // odometer increment, last node fastest
        let mut i = n;
        loop {
            if i == 0 {
                break 'outer;
            }
            i -= 1;
            labels[i] += 1;
            if (labels[i] as usize) < c {
                break;
            }
            labels[i] = 0;
        }
        let e = model.evaluate(&labels)?;
        if e < best_energy {
            best_energy = e;
            best.copy_from_slice(&labels);
        }
    }
    Ok(SolverResult {
        labeling: best,
        energy: best_energy,
        lower_bound: f64::NEG_INFINITY,
        iterations_run: 1,
        converged: true,
        trace: vec![SweepRecord {
            sweep: 1,
            lower_bound: f64::NEG_INFINITY,
            current_energy: best_energy,
        }],
    })
}
