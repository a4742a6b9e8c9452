//! Multi-level k-way graph partitioning: coarsen, partition the coarsest
//! level, project back, and refine with Kernighan–Lin swaps.

mod bisect;
mod coarsen;
mod refine;

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bisect::{initial_partition, InitialPartition};
pub use coarsen::{coarsen, CoarseLevel, CoarsenOptions, CoarseningLadder};
pub use refine::{kl_refine, project_and_refine, RefineStats};

use crate::graph::{DeviceGraph, WeightedGraph};

/// Direction of the cut objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Min,
    Max,
}

impl Objective {
    /// True when `a` is strictly better than `b` under this objective.
    #[inline]
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Objective::Min => a < b,
            Objective::Max => a > b,
        }
    }

    /// Signed improvement of a cut change `delta` (positive is good).
    #[inline]
    pub fn gain(self, delta: f64) -> f64 {
        match self {
            Objective::Min => -delta,
            Objective::Max => delta,
        }
    }

    pub fn flipped(self) -> Objective {
        match self {
            Objective::Min => Objective::Max,
            Objective::Max => Objective::Min,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::Min => "min",
            Objective::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PartitionError {
    #[error("graph has no vertices")]
    EmptyGraph,
    #[error("number of parts must be at least 1")]
    ZeroParts,
    #[error("cannot split {vertices} vertices into {parts} parts")]
    TooManyParts { parts: usize, vertices: usize },
    #[error("balance cap must be at least 1")]
    InvalidCap,
    #[error("unbalanceable")]
    Unbalanceable,
}

/// Disjoint device groups. Groups hold cluster device indices in canonical
/// order and are sorted by their first member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub groups: Vec<Vec<usize>>,
    pub objective: Objective,
    /// Cap that the groups satisfy; above the requested cap only if the
    /// partitioner had to relax it.
    pub balance_cap: f64,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionParams {
    pub balance_cap: f64,
    /// Coarsening stops at `max(2k, coarsen_floor)` supernodes.
    pub coarsen_floor: usize,
    pub kl_max_passes: usize,
}

impl Default for PartitionParams {
    fn default() -> Self {
        PartitionParams {
            balance_cap: 1.2,
            coarsen_floor: 8,
            kl_max_passes: 8,
        }
    }
}

/// Debug record of one partitioning run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartitionTrace {
    /// Vertex count of every ladder level, finest first.
    pub ladder_sizes: Vec<usize>,
    /// Level the initial partition was computed on.
    pub start_level: usize,
    pub initial_cut: f64,
    /// Accepted KL gains per pass, one entry per projected level.
    pub level_gains: Vec<Vec<f64>>,
    pub final_cut: f64,
    pub balance_cap: f64,
}

/// Total weight of edges whose endpoints lie in different parts.
pub fn cut_of(graph: &WeightedGraph, parts: &[usize]) -> f64 {
    graph
        .edges()
        .filter(|&(u, v, _)| parts[u] != parts[v])
        .map(|(_, _, w)| w)
        .sum()
}

/// Heaviest part weight over the average part weight.
pub fn balance_factor_of(graph: &WeightedGraph, parts: &[usize], k: usize) -> f64 {
    let mut loads = alloc::vec![0.0; k];
    for (v, &p) in parts.iter().enumerate() {
        loads[p] += graph.vertex_weight(v);
    }
    let max = loads.iter().copied().fold(0.0, f64::max);
    max / (graph.total_vertex_weight() / k as f64)
}

fn parts_of(dg: &DeviceGraph, partition: &Partition) -> Vec<usize> {
    let mut parts = alloc::vec![usize::MAX; dg.len()];
    for (g, group) in partition.groups.iter().enumerate() {
        for d in group {
            if let Some(i) = dg.devices.iter().position(|x| x == d) {
                parts[i] = g;
            }
        }
    }
    parts
}

/// Crossing bandwidth between the groups of `partition`.
pub fn cut_value(dg: &DeviceGraph, partition: &Partition) -> f64 {
    cut_of(&dg.graph, &parts_of(dg, partition))
}

/// Balance factor of `partition` over the device graph.
pub fn balance_factor(dg: &DeviceGraph, partition: &Partition) -> f64 {
    balance_factor_of(&dg.graph, &parts_of(dg, partition), partition.len())
}

fn check_inputs(graph: &WeightedGraph, k: usize, cap: f64) -> Result<(), PartitionError> {
    if graph.is_empty() {
        return Err(PartitionError::EmptyGraph);
    }
    if k == 0 {
        return Err(PartitionError::ZeroParts);
    }
    if k > graph.len() {
        return Err(PartitionError::TooManyParts {
            parts: k,
            vertices: graph.len(),
        });
    }
    if !(cap >= 1.0) {
        return Err(PartitionError::InvalidCap);
    }
    Ok(())
}

/// Partitions a weighted graph into `k` parts; returns the part of every
/// vertex plus the run trace.
pub fn partition_graph_traced(
    graph: &WeightedGraph,
    k: usize,
    objective: Objective,
    params: PartitionParams,
    seed: u64,
) -> Result<(Vec<usize>, PartitionTrace), PartitionError> {
    check_inputs(graph, k, params.balance_cap)?;
    let mut trace = PartitionTrace::default();
    if k == 1 {
        trace.ladder_sizes.push(graph.len());
        trace.balance_cap = params.balance_cap;
        return Ok((alloc::vec![0; graph.len()], trace));
    }
    let options = CoarsenOptions {
        target: (2 * k).max(params.coarsen_floor),
        objective,
        max_vertex_weight: params.balance_cap * graph.total_vertex_weight() / k as f64,
    };
    let ladder = coarsen(graph, options, seed);
    trace.ladder_sizes = ladder.sizes();

    // Start from the coarsest level that admits a balanced split.
    let mut found = None;
    for level in (0..ladder.levels.len()).rev() {
        let g = &ladder.levels[level].graph;
        if g.len() < k {
            continue;
        }
        match initial_partition(g, k, objective, params.balance_cap) {
            Ok(init) => {
                found = Some((level, init));
                break;
            }
            Err(PartitionError::Unbalanceable) if level > 0 => continue,
            Err(e) => return Err(e),
        }
    }
    let (level, init) = found.ok_or(PartitionError::Unbalanceable)?;
    trace.start_level = level;
    trace.initial_cut = cut_of(&ladder.levels[level].graph, &init.parts);
    trace.balance_cap = init.balance_cap;

    let (parts, stats) = project_and_refine(
        &ladder,
        level,
        init.parts,
        k,
        objective,
        init.balance_cap,
        params.kl_max_passes,
    );
    trace.level_gains = stats.into_iter().map(|s| s.pass_gains).collect();
    trace.final_cut = cut_of(graph, &parts);
    Ok((parts, trace))
}

/// [`partition_graph_traced`] without the trace.
pub fn partition_graph(
    graph: &WeightedGraph,
    k: usize,
    objective: Objective,
    params: PartitionParams,
    seed: u64,
) -> Result<(Vec<usize>, f64), PartitionError> {
    partition_graph_traced(graph, k, objective, params, seed).map(|(p, t)| (p, t.balance_cap))
}

/// Partitions a device graph into `k` device groups.
pub fn partition_devices(
    dg: &DeviceGraph,
    k: usize,
    objective: Objective,
    params: PartitionParams,
    seed: u64,
) -> Result<Partition, PartitionError> {
    let (parts, cap) = partition_graph(&dg.graph, k, objective, params, seed)?;
    Ok(groups_from_parts(dg, &parts, k, objective, cap))
}

/// Converts a part vector into canonical device groups.
pub fn groups_from_parts(
    dg: &DeviceGraph,
    parts: &[usize],
    k: usize,
    objective: Objective,
    balance_cap: f64,
) -> Partition {
    let mut groups: Vec<Vec<usize>> = alloc::vec![Vec::new(); k];
    for (i, &p) in parts.iter().enumerate() {
        groups[p].push(dg.devices[i]);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.retain(|g| !g.is_empty());
    groups.sort();
    Partition {
        groups,
        objective,
        balance_cap,
    }
}

/// Moves vertices until every part's capacity sum reaches `required`.
///
/// Each step takes the neediest part (smallest capacity, then lowest
/// index) and moves in the vertex with the best objective change among
/// vertices whose part keeps at least `required` without it. Moves that
/// keep the balance factor within `balance_cap` are preferred, then the
/// cut change, then the lowest vertex index. Returns false when some part
/// stays short, leaving `parts` in its last state.
pub fn repair_capacity(
    graph: &WeightedGraph,
    parts: &mut [usize],
    k: usize,
    capacity: &[f64],
    required: f64,
    objective: Objective,
    balance_cap: f64,
) -> bool {
    let n = graph.len();
    let bound = balance_cap * graph.total_vertex_weight() / k as f64 * (1.0 + 1e-12);
    let mut loads = alloc::vec![0.0; k];
    let mut caps = alloc::vec![0.0; k];
    let mut sizes = alloc::vec![0usize; k];
    for v in 0..n {
        loads[parts[v]] += graph.vertex_weight(v);
        caps[parts[v]] += capacity[v];
        sizes[parts[v]] += 1;
    }
    // Donors never drop below `required`, so short parts only gain capacity.
    for _ in 0..n * k {
        let Some(target) = (0..k)
            .filter(|&p| caps[p] < required)
            .min_by(|&a, &b| caps[a].total_cmp(&caps[b]).then(a.cmp(&b)))
        else {
            return true;
        };
        let mut best: Option<(bool, f64, usize)> = None;
        for v in 0..n {
            let from = parts[v];
            if from == target || sizes[from] < 2 || caps[from] - capacity[v] < required {
                continue;
            }
            let (mut to_from, mut to_target) = (0.0, 0.0);
            for u in 0..n {
                if u != v {
                    if parts[u] == from {
                        to_from += graph.weight(u, v);
                    } else if parts[u] == target {
                        to_target += graph.weight(u, v);
                    }
                }
            }
            let gain = objective.gain(to_from - to_target);
            let over = loads[target] + graph.vertex_weight(v) > bound;
            let key = (over, -gain, v);
            let better = best.map_or(true, |(o, g, w)| {
                (key.0, key.1) < (o, g) || ((key.0, key.1) == (o, g) && key.2 < w)
            });
            if better {
                best = Some(key);
            }
        }
        let Some((_, _, v)) = best else { return false };
        let from = parts[v];
        loads[from] -= graph.vertex_weight(v);
        caps[from] -= capacity[v];
        sizes[from] -= 1;
        loads[target] += graph.vertex_weight(v);
        caps[target] += capacity[v];
        sizes[target] += 1;
        parts[v] = target;
    }
    (0..k).all(|p| caps[p] >= required)
}

/// Seeded random balanced partition used as the search baseline: shuffle the
/// vertices, seed each part with one vertex, then drop every remaining
/// vertex into a random part that stays within the cap. The cap relaxes like
/// the real partitioner's when a draw gets stuck.
pub fn random_partition(
    graph: &WeightedGraph,
    k: usize,
    balance_cap: f64,
    seed: u64,
) -> Result<(Vec<usize>, f64), PartitionError> {
    check_inputs(graph, k, balance_cap)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = graph.len();
    let avg = graph.total_vertex_weight() / k as f64;
    let mut cap = balance_cap;
    loop {
        for _ in 0..16 {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut parts = alloc::vec![usize::MAX; n];
            let mut loads = alloc::vec![0.0; k];
            let bound = cap * avg * (1.0 + 1e-12);
            let mut ok = true;
            for (i, &v) in order.iter().enumerate() {
                let w = graph.vertex_weight(v);
                let p = if i < k {
                    i
                } else {
                    let open: Vec<usize> = (0..k).filter(|&p| loads[p] + w <= bound).collect();
                    if open.is_empty() {
                        ok = false;
                        break;
                    }
                    open[rng.gen_range(0..open.len())]
                };
                if loads[p] + w > bound {
                    ok = false;
                    break;
                }
                parts[v] = p;
                loads[p] += w;
            }
            if ok {
                return Ok((parts, cap));
            }
        }
        if cap >= balance_cap * 2.0 {
            return Err(PartitionError::Unbalanceable);
        }
        cap = (cap * 1.1).min(balance_cap * 2.0);
    }
}
