//! Projection through the coarsening ladder and Kernighan–Lin refinement.

use alloc::vec::Vec;

use super::{CoarseningLadder, Objective};
use crate::graph::WeightedGraph;

/// Gains accepted in each KL pass on one level.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RefineStats {
    pub pass_gains: Vec<f64>,
}

/// Kernighan–Lin refinement with pairwise swaps and single-vertex moves.
///
/// Each pass repeatedly applies the best strictly improving step that keeps
/// every part nonempty and within the cap: a swap of two unlocked vertices
/// of different parts, or a move of one unlocked vertex. Touched vertices
/// are locked for the rest of the pass. A pass ends when no step improves;
/// refinement ends after an empty pass or after `max_passes`.
pub fn kl_refine(
    graph: &WeightedGraph,
    parts: &mut [usize],
    k: usize,
    objective: Objective,
    balance_cap: f64,
    max_passes: usize,
) -> RefineStats {
    let bound = balance_cap * graph.total_vertex_weight() / k as f64 * (1.0 + 1e-12);
    let bounds = alloc::vec![bound; k];
    let min_sizes = alloc::vec![1; k];
    kl_refine_bounded(graph, parts, &bounds, &min_sizes, objective, max_passes)
}

/// KL core with a weight bound and a minimum vertex count per part.
pub(crate) fn kl_refine_bounded(
    graph: &WeightedGraph,
    parts: &mut [usize],
    bounds: &[f64],
    min_sizes: &[usize],
    objective: Objective,
    max_passes: usize,
) -> RefineStats {
    let n = graph.len();
    let k = bounds.len();
    let mut stats = RefineStats::default();
    if k < 2 || n < 2 {
        return stats;
    }
    let eps = 1e-12 * graph.total_edge_weight();

    // conn[v * k + p]: weight from v into part p.
    let mut conn = alloc::vec![0.0; n * k];
    let mut loads = alloc::vec![0.0; k];
    let mut sizes = alloc::vec![0usize; k];
    for u in 0..n {
        loads[parts[u]] += graph.vertex_weight(u);
        sizes[parts[u]] += 1;
        for v in 0..n {
            if u != v {
                conn[u * k + parts[v]] += graph.weight(u, v);
            }
        }
    }

    for _ in 0..max_passes {
        let mut locked = alloc::vec![false; n];
        let mut pass_gain = 0.0;
        let mut swaps = 0;
        loop {
            let mut best: Option<(Step, f64)> = None;
            for u in 0..n {
                if locked[u] {
                    continue;
                }
                let (pu, wu) = (parts[u], graph.vertex_weight(u));
                let row = &conn[u * k..(u + 1) * k];
                if sizes[pu] > min_sizes[pu] {
                    for p in 0..k {
                        if p == pu || loads[p] + wu > bounds[p] {
                            continue;
                        }
                        let gain = objective.gain(row[pu] - row[p]);
                        if gain > eps && best.map_or(true, |(_, g)| gain > g) {
                            best = Some((Step::Move(u, p), gain));
                        }
                    }
                }
                for v in (u + 1)..n {
                    let pv = parts[v];
                    if locked[v] || pv == pu {
                        continue;
                    }
                    let wv = graph.vertex_weight(v);
                    if loads[pu] - wu + wv > bounds[pu] || loads[pv] - wv + wu > bounds[pv] {
                        continue;
                    }
                    let delta = row[pu] - row[pv] + conn[v * k + pv] - conn[v * k + pu]
                        + 2.0 * graph.weight(u, v);
                    let gain = objective.gain(delta);
                    if gain > eps && best.map_or(true, |(_, g)| gain > g) {
                        best = Some((Step::Swap(u, v), gain));
                    }
                }
            }
            let Some((step, gain)) = best else { break };
            match step {
                Step::Move(u, p) => {
                    sizes[parts[u]] -= 1;
                    sizes[p] += 1;
                    move_vertex(graph, &mut conn, &mut loads, parts, k, u, p);
                    locked[u] = true;
                }
                Step::Swap(u, v) => {
                    let (pu, pv) = (parts[u], parts[v]);
                    move_vertex(graph, &mut conn, &mut loads, parts, k, u, pv);
                    move_vertex(graph, &mut conn, &mut loads, parts, k, v, pu);
                    locked[u] = true;
                    locked[v] = true;
                }
            }
            pass_gain += gain;
            swaps += 1;
        }
        if swaps == 0 {
            break;
        }
        stats.pass_gains.push(pass_gain);
    }
    stats
}

#[derive(Clone, Copy)]
enum Step {
    Move(usize, usize),
    Swap(usize, usize),
}

fn move_vertex(
    graph: &WeightedGraph,
    conn: &mut [f64],
    loads: &mut [f64],
    parts: &mut [usize],
    k: usize,
    u: usize,
    to: usize,
) {
    let from = parts[u];
    let w = graph.vertex_weight(u);
    loads[from] -= w;
    loads[to] += w;
    parts[u] = to;
    for (x, &wx) in graph.row(u).iter().enumerate() {
        if x != u && wx != 0.0 {
            conn[x * k + from] -= wx;
            conn[x * k + to] += wx;
        }
    }
}

/// Refines `parts` (defined on `ladder.levels[level]`) on that level, then
/// projects and refines level by level down to the input graph. Returns the
/// input-level part vector and the stats of each refined level, coarsest
/// first.
pub fn project_and_refine(
    ladder: &CoarseningLadder,
    level: usize,
    mut parts: Vec<usize>,
    k: usize,
    objective: Objective,
    balance_cap: f64,
    max_passes: usize,
) -> (Vec<usize>, Vec<RefineStats>) {
    let mut stats = Vec::new();
    let mut current = level;
    loop {
        let g = &ladder.levels[current].graph;
        stats.push(kl_refine(g, &mut parts, k, objective, balance_cap, max_passes));
        if current == 0 {
            break;
        }
        let map = &ladder.levels[current].fine_to_coarse;
        parts = map.iter().map(|&c| parts[c]).collect();
        current -= 1;
    }
    (parts, stats)
}
