//! Initial k-way partition by recursive bisection.
//!
//! Each bisection grows one side greedily from every start vertex, keeping
//! the best balanced prefix under the cut objective. Weight bounds are
//! inherited down the recursion so every leaf respects the balance cap.

use alloc::vec::Vec;

use super::refine::kl_refine_bounded;
use super::{Objective, PartitionError};
use crate::graph::WeightedGraph;

/// Relaxation ladder for the balance cap: ×1.1 per step, at most ×2.
const RELAX_STEP: f64 = 1.1;
const RELAX_LIMIT: f64 = 2.0;
/// Candidate bisections tried per split before giving up on a subtree.
const ALTERNATIVES_PER_SPLIT: usize = 6;
/// Backtracking budget across one recursive partition attempt.
const BACKTRACK_BUDGET: usize = 64;
/// Start vertices tried per bisection on larger graphs.
const MAX_STARTS: usize = 24;
/// Best greedy candidates polished by KL before the final ranking.
const REFINED_CANDIDATES: usize = 8;
const BISECT_KL_PASSES: usize = 8;

/// Result of the initial partition: part per vertex and the cap that held.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialPartition {
    pub parts: Vec<usize>,
    pub balance_cap: f64,
}

/// Partitions `graph` into exactly `k` nonempty parts.
pub fn initial_partition(
    graph: &WeightedGraph,
    k: usize,
    objective: Objective,
    balance_cap: f64,
) -> Result<InitialPartition, PartitionError> {
    let n = graph.len();
    if k == 0 {
        return Err(PartitionError::ZeroParts);
    }
    if k > n {
        return Err(PartitionError::TooManyParts { parts: k, vertices: n });
    }
    let mut cap = balance_cap;
    let limit = balance_cap * RELAX_LIMIT;
    loop {
        let mut ctx = Recursion {
            graph,
            objective,
            bound_per_part: cap * graph.total_vertex_weight() / k as f64 * (1.0 + 1e-12),
            parts: alloc::vec![usize::MAX; n],
            next_part: 0,
            budget: BACKTRACK_BUDGET,
        };
        let all: Vec<usize> = (0..n).collect();
        if ctx.split(&all, k) {
            return Ok(InitialPartition {
                parts: ctx.parts,
                balance_cap: cap,
            });
        }
        if cap >= limit {
            return Err(PartitionError::Unbalanceable);
        }
        cap = (cap * RELAX_STEP).min(limit);
    }
}

struct Recursion<'g> {
    graph: &'g WeightedGraph,
    objective: Objective,
    bound_per_part: f64,
    parts: Vec<usize>,
    next_part: usize,
    budget: usize,
}

impl Recursion<'_> {
    fn split(&mut self, vertices: &[usize], k: usize) -> bool {
        if k == 1 {
            for &v in vertices {
                self.parts[v] = self.next_part;
            }
            self.next_part += 1;
            return true;
        }
        let k1 = (k + 1) / 2;
        let k2 = k - k1;
        let candidates = self.bisections(vertices, k1, k2);
        for (side_a, _) in candidates.into_iter().take(ALTERNATIVES_PER_SPLIT) {
            let a: Vec<usize> = vertices.iter().copied().filter(|v| side_a[*v]).collect();
            let b: Vec<usize> = vertices.iter().copied().filter(|v| !side_a[*v]).collect();
            let mark = self.next_part;
            if self.split(&a, k1) && self.split(&b, k2) {
                return true;
            }
            self.next_part = mark;
            if self.budget == 0 {
                return false;
            }
            self.budget -= 1;
        }
        false
    }

    /// Balanced bisections of `vertices`, best first. Side A is returned as a
    /// membership mask over the whole graph.
    fn bisections(&self, vertices: &[usize], k1: usize, k2: usize) -> Vec<(Vec<bool>, f64)> {
        let g = self.graph;
        let total: f64 = vertices.iter().map(|&v| g.vertex_weight(v)).sum();
        let upper_a = self.bound_per_part * k1 as f64;
        let upper_b = self.bound_per_part * k2 as f64;
        let target_a = total * k1 as f64 / (k1 + k2) as f64;

        // Degree of every vertex restricted to this subset.
        let mut degree = alloc::vec![0.0; g.len()];
        for &u in vertices {
            degree[u] = vertices.iter().map(|&v| g.weight(u, v)).sum();
        }

        let stride = if vertices.len() > MAX_STARTS {
            (vertices.len() + MAX_STARTS - 1) / MAX_STARTS
        } else {
            1
        };
        let mut found: Vec<(Vec<bool>, f64, f64)> = Vec::new();
        for &start in vertices.iter().step_by(stride) {
            let mut in_a = alloc::vec![false; g.len()];
            let mut conn_a = alloc::vec![0.0; g.len()];
            let mut weight_a = 0.0;
            let mut size_a = 0;
            let mut cut = 0.0;
            let mut next = Some(start);
            while let Some(v) = next {
                cut += degree[v] - 2.0 * conn_a[v];
                in_a[v] = true;
                weight_a += g.vertex_weight(v);
                size_a += 1;
                for &u in vertices {
                    conn_a[u] += g.weight(u, v);
                }
                let size_b = vertices.len() - size_a;
                if size_a >= k1 && size_b >= k2 && weight_a <= upper_a && total - weight_a <= upper_b {
                    let miss = (weight_a - target_a).abs();
                    if !found.iter().any(|(mask, _, _)| *mask == in_a) {
                        found.push((in_a.clone(), cut, miss));
                    }
                }
                if size_b <= k2 {
                    break;
                }
                next = None;
                let mut best_delta = 0.0;
                for &u in vertices {
                    if in_a[u] || weight_a + g.vertex_weight(u) > upper_a {
                        continue;
                    }
                    let delta = degree[u] - 2.0 * conn_a[u];
                    let better = match next {
                        None => true,
                        Some(_) => self.objective.better(delta, best_delta),
                    };
                    if better {
                        next = Some(u);
                        best_delta = delta;
                    }
                }
            }
        }
        let objective = self.objective;
        let rank = |a: &(Vec<bool>, f64, f64), b: &(Vec<bool>, f64, f64)| {
            if objective.better(a.1, b.1) {
                core::cmp::Ordering::Less
            } else if objective.better(b.1, a.1) {
                core::cmp::Ordering::Greater
            } else {
                a.2.total_cmp(&b.2)
            }
        };
        found.sort_by(rank);

        // Polish the leading candidates with KL on the induced subgraph.
        let mut sub = WeightedGraph::new(vertices.iter().map(|&v| g.vertex_weight(v)).collect());
        for (i, &u) in vertices.iter().enumerate() {
            for (j, &v) in vertices.iter().enumerate().skip(i + 1) {
                sub.set_edge(i, j, g.weight(u, v));
            }
        }
        let bounds = [upper_a, upper_b];
        let min_sizes = [k1, k2];
        let mut polished: Vec<(Vec<bool>, f64, f64)> = Vec::new();
        for (mask, _, _) in found.iter().take(REFINED_CANDIDATES) {
            let mut parts: Vec<usize> = vertices.iter().map(|&v| usize::from(!mask[v])).collect();
            kl_refine_bounded(&sub, &mut parts, &bounds, &min_sizes, objective, BISECT_KL_PASSES);
            let mut in_a = alloc::vec![false; g.len()];
            let mut weight_a = 0.0;
            for (i, &v) in vertices.iter().enumerate() {
                if parts[i] == 0 {
                    in_a[v] = true;
                    weight_a += g.vertex_weight(v);
                }
            }
            let cut = super::cut_of(&sub, &parts);
            if !polished.iter().chain(found.iter()).any(|(m, _, _)| *m == in_a) {
                polished.push((in_a, cut, (weight_a - target_a).abs()));
            }
        }
        found.extend(polished);
        found.sort_by(rank);
        found.into_iter().map(|(mask, cut, _)| (mask, cut)).collect()
    }
}
