//! Sequential tree-reweighted message passing (TRW-S) for Potts energies.
//!
//! Nodes are processed in id order. Every edge is covered by exactly one
//! monotonic chain; node `v` lies on `n_v = max(#earlier, #later)`
//! neighbours' chains and its reparameterized unary is shared among them
//! with weight `gamma_v = 1 / n_v`.
//!
//! Messages are kept normalized (minimum zero). After a backward pass each
//! reverse chain is in canonical form: its minimum is the sum of the
//! normalization constants of its messages plus `gamma` times the minimum
//! belief at its final (lowest-ordered) node. Summed over chains this gives
//!
//! ```text
//! bound = sum_(q>u) c_(q->u) + sum_v gamma_v (n_v - #earlier_v) min_x b_v(x)
//! ```
//!
//! which only depends on the neighbour counts, not on how chains are paired.

use crate::energy::{argmin, EnergyModel, PottsEdge};
use crate::raster::ClassId;

use super::{Adjacency, SolverConfig, SolverResult, SweepRecord};

/// Slack under which the best labeling is taken as certified optimal.
const GAP_EPS: f64 = 1e-10;

struct Messages {
    classes: usize,
    /// Per edge: `[u -> v, v -> u]`, each `classes` long.
    values: Vec<f64>,
    /// Normalization constant of the latest update of each directed message.
    constants: Vec<f64>,
}

impl Messages {
    fn new(num_edges: usize, classes: usize) -> Self {
        Self {
            classes,
            values: vec![0.0; 2 * num_edges * classes],
            constants: vec![0.0; 2 * num_edges],
        }
    }

    /// Slot of the message sent from `from` along edge `edge` whose lower
    /// endpoint is `low`.
    fn slot(edge: usize, from: usize, low: usize) -> usize {
        2 * edge + usize::from(from != low)
    }

    fn get(&self, slot: usize) -> &[f64] {
        &self.values[slot * self.classes..(slot + 1) * self.classes]
    }
}

struct State<'a> {
    model: &'a EnergyModel,
    adj: Adjacency,
    msgs: Messages,
    gamma: Vec<f64>,
    earlier: Vec<usize>,
    belief: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> State<'a> {
    fn new(model: &'a EnergyModel) -> Self {
        let n = model.num_nodes();
        let c = model.num_classes();
        let adj = Adjacency::new(n, model.edges());
        let mut gamma = Vec::with_capacity(n);
        let mut earlier = Vec::with_capacity(n);
        for v in 0..n {
            let nb = adj.neighbors(v);
            let before = nb.iter().filter(|&&(w, _)| w < v).count();
            let after = nb.len() - before;
            gamma.push(1.0 / before.max(after).max(1) as f64);
            earlier.push(before);
        }
        Self {
            model,
            adj,
            msgs: Messages::new(model.edges().len(), c),
            gamma,
            earlier,
            belief: vec![0.0; c],
            scratch: vec![0.0; c],
        }
    }

    fn low(&self, edge: usize) -> usize {
        let e = &self.model.edges()[edge];
        e.u.min(e.v)
    }

    /// Unary plus all incoming messages, into `self.belief`.
    fn compute_belief(&mut self, v: usize) {
        self.belief.copy_from_slice(self.model.unary(v));
        for &(w, edge) in self.adj.neighbors(v) {
            let slot = Messages::slot(edge, w, self.low(edge));
            for (b, m) in self.belief.iter_mut().zip(self.msgs.get(slot)) {
                *b += m;
            }
        }
    }

    /// Sends from `v` to every neighbour on the given side of the order.
    fn send(&mut self, v: usize, forward: bool) {
        let c = self.msgs.classes;
        let gamma = self.gamma[v];
        for i in 0..self.adj.neighbors(v).len() {
            let (w, edge) = self.adj.neighbors(v)[i];
            if (w > v) != forward {
                continue;
            }
            let low = self.low(edge);
            let incoming = Messages::slot(edge, w, low);
            let outgoing = Messages::slot(edge, v, low);
            let mut min_h = f64::INFINITY;
            for x in 0..c {
                let h = gamma * self.belief[x] - self.msgs.values[incoming * c + x];
                self.scratch[x] = h;
                min_h = min_h.min(h);
            }
            // Potts: min(h(y), min_x h(x) + w), then shift so the minimum is 0
            let weight = self.model.edges()[edge].weight;
            let out = &mut self.msgs.values[outgoing * c..(outgoing + 1) * c];
            for (o, h) in out.iter_mut().zip(&self.scratch) {
                *o = (h - min_h).min(weight);
            }
            self.msgs.constants[outgoing] = min_h;
        }
    }

    fn forward_pass(&mut self) {
        for v in 0..self.model.num_nodes() {
            self.compute_belief(v);
            self.send(v, true);
        }
    }

    /// Returns the lower bound of the reverse-chain decomposition.
    fn backward_pass(&mut self) -> f64 {
        let mut bound = 0.0;
        for v in (0..self.model.num_nodes()).rev() {
            self.compute_belief(v);
            self.send(v, false);
            let nb = self.adj.neighbors(v);
            let chains = (nb.len() - self.earlier[v]).max(self.earlier[v]).max(1);
            let ending = chains - self.earlier[v];
            if ending > 0 {
                let min_b = self.belief.iter().copied().fold(f64::INFINITY, f64::min);
                bound += self.gamma[v] * ending as f64 * min_b;
            }
            for &(w, edge) in nb {
                if w < v {
                    bound += self.msgs.constants[Messages::slot(edge, v, self.low(edge))];
                }
            }
        }
        bound
    }

    /// Greedy decoding: each node conditions on the labels already chosen
    /// for earlier neighbours and on messages from later ones.
    fn decode(&mut self) -> Vec<ClassId> {
        let n = self.model.num_nodes();
        let mut labels: Vec<ClassId> = vec![0; n];
        for v in 0..n {
            self.scratch.copy_from_slice(self.model.unary(v));
            for &(w, edge) in self.adj.neighbors(v) {
                if w < v {
                    let weight = self.model.edges()[edge].weight;
                    let lw = labels[w] as usize;
                    for (x, s) in self.scratch.iter_mut().enumerate() {
                        if x != lw {
                            *s += weight;
                        }
                    }
                } else {
                    let slot = Messages::slot(edge, w, self.low(edge));
                    for (s, m) in self.scratch.iter_mut().zip(self.msgs.get(slot)) {
                        *s += m;
                    }
                }
            }
            labels[v] = argmin(&self.scratch) as ClassId;
        }
        labels
    }
}

struct ComponentRun {
    labels: Vec<ClassId>,
    bound: f64,
    converged: bool,
    /// `(lower bound, decoded energy)` per sweep.
    sweeps: Vec<(f64, f64)>,
}

fn run_connected(model: &EnergyModel, config: &SolverConfig) -> ComponentRun {
    let mut state = State::new(model);
    let mut best_labels = model.unary_argmin();
    let mut best_energy = model
        .evaluate(&best_labels)
        .expect("argmin labels are in range");
    let mut bound = f64::NEG_INFINITY;
    let mut sweeps = Vec::new();
    let mut converged = false;

    for sweep in 1..=config.max_iterations {
        state.forward_pass();
        let new_bound = state.backward_pass();
        let labels = state.decode();
        let energy = model.evaluate(&labels).expect("decoded labels are in range");
        if energy < best_energy {
            best_energy = energy;
            best_labels = labels;
        }
        sweeps.push((new_bound, energy));
        let improvement = new_bound - bound;
        bound = new_bound;
        log::trace!("trws sweep {sweep}: bound {bound} energy {energy} best {best_energy}");
        if best_energy - bound <= GAP_EPS * best_energy.abs().max(1.0)
            || (sweep > 1 && improvement < config.energy_tolerance)
        {
            converged = true;
            break;
        }
    }
    ComponentRun {
        labels: best_labels,
        bound,
        converged,
        sweeps,
    }
}

/// Connected components over edges of positive weight, each as an
/// ascending node list; components are ordered by their smallest node.
fn components(model: &EnergyModel) -> Vec<Vec<usize>> {
    let n = model.num_nodes();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in model.edges().iter().filter(|e| e.weight > 0.0) {
        let (a, b) = (find(&mut parent, e.u), find(&mut parent, e.v));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut slot = vec![usize::MAX; n];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for v in 0..n {
        let root = find(&mut parent, v);
        if slot[root] == usize::MAX {
            slot[root] = out.len();
            out.push(Vec::new());
        }
        out[slot[root]].push(v);
    }
    out
}

/// `local` maps the component's nodes to `0..nodes.len()` and every other
/// node to `usize::MAX`.
fn submodel(model: &EnergyModel, nodes: &[usize], local: &[usize]) -> EnergyModel {
    let c = model.num_classes();
    let mut unary = Vec::with_capacity(nodes.len() * c);
    for &v in nodes {
        unary.extend_from_slice(model.unary(v));
    }
    let edges = model
        .edges()
        .iter()
        .filter(|e| e.weight > 0.0 && local[e.u] != usize::MAX)
        .map(|e| PottsEdge {
            u: local[e.u],
            v: local[e.v],
            ..*e
        })
        .collect();
    EnergyModel::new(c, unary, edges).expect("sub-model of a valid model")
}

/// Minimizes the energy with TRW-S.
///
/// Edges of zero weight are dropped and every connected component of the
/// remaining graph is solved on its own, nodes in ascending id order. Per
/// component, each sweep is a forward and a backward pass; the lower bound
/// is taken after the backward pass and a labeling is decoded from the
/// current messages, keeping the lowest-energy one seen. A component stops
/// after `max_iterations` sweeps, when its bound rises by less than
/// `energy_tolerance`, or when its best energy meets the bound.
///
/// The reported trace sums the components sweep by sweep, holding finished
/// components at their final values.
pub fn trws_solve(model: &EnergyModel, config: &SolverConfig) -> SolverResult {
    let n = model.num_nodes();
    let mut labeling: Vec<ClassId> = model.unary_argmin();
    let mut runs = Vec::new();
    let mut isolated_bound = 0.0;
    let mut local = vec![usize::MAX; n];
    for nodes in components(model) {
        if let [v] = nodes[..] {
            let u = model.unary(v);
            isolated_bound += u[labeling[v] as usize];
            continue;
        }
        for (i, &v) in nodes.iter().enumerate() {
            local[v] = i;
        }
        let run = run_connected(&submodel(model, &nodes, &local), config);
        for (&v, &l) in nodes.iter().zip(&run.labels) {
            labeling[v] = l;
            local[v] = usize::MAX;
        }
        runs.push(run);
    }

    let sweeps = runs.iter().map(|r| r.sweeps.len()).max().unwrap_or(1);
    let isolated_energy = isolated_bound;
    let trace = (0..sweeps)
        .map(|s| {
            let (mut bound, mut energy) = (isolated_bound, isolated_energy);
            for r in &runs {
                let (b, e) = r.sweeps[s.min(r.sweeps.len() - 1)];
                bound += b;
                energy += e;
            }
            SweepRecord {
                sweep: s + 1,
                lower_bound: bound,
                current_energy: energy,
            }
        })
        .collect();

    SolverResult {
        energy: model.evaluate(&labeling).expect("labels in range"),
        lower_bound: isolated_bound + runs.iter().map(|r| r.bound).sum::<f64>(),
        iterations_run: sweeps,
        converged: runs.iter().all(|r| r.converged),
        labeling,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeKind;
    use crate::solver::brute_force_solve;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn edge(u: usize, v: usize, weight: f64) -> PottsEdge {
        PottsEdge {
            u,
            v,
            weight,
            kind: EdgeKind::PixelPixel,
        }
    }

    fn cfg() -> SolverConfig {
        SolverConfig {
            max_iterations: 200,
            energy_tolerance: 0.0,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn chain_example() {
        let m = EnergyModel::new(2, vec![0.0, 1.0, 1.0, 0.0], vec![edge(0, 1, 0.4)]).unwrap();
        let r = trws_solve(&m, &cfg());
        assert_eq!(r.labeling, vec![0, 1]);
        assert!((r.energy - 0.4).abs() < 1e-12);
        assert!((r.lower_bound - 0.4).abs() < 1e-12);
        assert!(r.converged);
    }

    #[test]
    fn zero_weights_decouple() {
        let unary = vec![3.0, 1.0, 2.0, 0.5, 0.2, 0.9, 4.0, 4.0, 1.0];
        let m = EnergyModel::new(3, unary, vec![edge(0, 1, 0.0), edge(1, 2, 0.0)]).unwrap();
        let r = trws_solve(&m, &cfg());
        assert_eq!(r.labeling, vec![1, 1, 2]);
        assert!((r.energy - 2.2).abs() < 1e-12);
        assert!((r.lower_bound - r.energy).abs() < 1e-12);
    }

    #[test]
    fn frustrated_triangle_bound_below_optimum() {
        // attractive triangle with conflicting unaries
        let unary = vec![0.0, 1.0, 1.0, 0.0, 0.5, 0.5];
        let edges = vec![edge(0, 1, 0.8), edge(1, 2, 0.8), edge(0, 2, 0.8)];
        let m = EnergyModel::new(2, unary, edges).unwrap();
        let r = trws_solve(&m, &cfg());
        let opt = brute_force_solve(&m).unwrap();
        assert!(r.lower_bound <= opt.energy + 1e-9);
        assert!(opt.energy <= r.energy + 1e-12);
    }

    #[test]
    fn bound_trace_monotone_on_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (h, w, c) = (4, 4, 3);
            let unary: Vec<f64> = (0..h * w * c).map(|_| rng.gen_range(0.0..3.0)).collect();
            let edges = crate::graph::pixel_adjacency(h, w)
                .into_iter()
                .map(|(u, v)| edge(u, v, rng.gen_range(0.0..2.0)))
                .collect();
            let m = EnergyModel::new(c, unary, edges).unwrap();
            let r = trws_solve(&m, &cfg());
            for pair in r.bound_trace().windows(2) {
                assert!(pair[1] >= pair[0] - 1e-9, "{pair:?}");
            }
            assert!(r.lower_bound <= r.energy + 1e-9);
        }
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let unary: Vec<f64> = (0..9 * 2).map(|_| rng.gen_range(0.0..1.0)).collect();
        let edges = crate::graph::pixel_adjacency(3, 3)
            .into_iter()
            .map(|(u, v)| edge(u, v, 0.3))
            .collect();
        let m = EnergyModel::new(2, unary, edges).unwrap();
        assert_eq!(trws_solve(&m, &cfg()), trws_solve(&m, &cfg()));
    }
}
