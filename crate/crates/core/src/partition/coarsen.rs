//! Heavy-edge-matching coarsening.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Objective;
use crate::graph::WeightedGraph;

/// One level of the coarsening ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseLevel {
    pub graph: WeightedGraph,
    /// Original (level-0) vertices merged into each supernode.
    pub members: Vec<Vec<usize>>,
    /// Supernode of this level for every vertex of the previous level; empty
    /// on level 0.
    pub fine_to_coarse: Vec<usize>,
}

/// Levels from finest (`levels[0]`, the input graph) to coarsest.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseningLadder {
    pub levels: Vec<CoarseLevel>,
}

impl CoarseningLadder {
    pub fn coarsest(&self) -> &CoarseLevel {
        self.levels.last().expect("ladder always holds the input level")
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.graph.len()).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CoarsenOptions {
    /// Stop once a level has at most this many vertices.
    pub target: usize,
    /// `Min` matches the heaviest incident edge, `Max` the lightest.
    pub objective: Objective,
    /// Supernodes heavier than this are never formed.
    pub max_vertex_weight: f64,
}

impl Default for CoarsenOptions {
    fn default() -> Self {
        CoarsenOptions {
            target: 1,
            objective: Objective::Min,
            max_vertex_weight: f64::INFINITY,
        }
    }
}

/// Builds the coarsening ladder by repeated matching until the level size
/// reaches `options.target`, no edges remain, or a pass merges nothing.
pub fn coarsen(graph: &WeightedGraph, options: CoarsenOptions, seed: u64) -> CoarseningLadder {
    let mut levels = Vec::new();
    levels.push(CoarseLevel {
        graph: graph.clone(),
        members: (0..graph.len()).map(|v| alloc::vec![v]).collect(),
        fine_to_coarse: Vec::new(),
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let current = levels.last().expect("nonempty");
        if current.graph.len() <= options.target.max(1) {
            break;
        }
        let next = match_once(current, options, &mut rng);
        if next.graph.len() == current.graph.len() {
            break;
        }
        levels.push(next);
    }
    CoarseningLadder { levels }
}

fn match_once(level: &CoarseLevel, options: CoarsenOptions, rng: &mut ChaCha8Rng) -> CoarseLevel {
    let g = &level.graph;
    let n = g.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    const UNMATCHED: usize = usize::MAX;
    let mut fine_to_coarse = alloc::vec![UNMATCHED; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    // Merging stops once the level would shrink to the target size.
    let mut remaining = n;
    let floor = options.target.max(1);
    for &u in &order {
        if fine_to_coarse[u] != UNMATCHED {
            continue;
        }
        let mut partner: Option<(usize, f64)> = None;
        for (v, &w) in g.row(u).iter().enumerate() {
            if remaining <= floor {
                break;
            }
            if v == u || w <= 0.0 || fine_to_coarse[v] != UNMATCHED {
                continue;
            }
            if g.vertex_weight(u) + g.vertex_weight(v) > options.max_vertex_weight {
                continue;
            }
            let better = match partner {
                None => true,
                Some((_, bw)) => match options.objective {
                    Objective::Min => w > bw,
                    Objective::Max => w < bw,
                },
            };
            if better {
                partner = Some((v, w));
            }
        }
        let c = members.len();
        fine_to_coarse[u] = c;
        let mut merged = level.members[u].clone();
        let mut weight = g.vertex_weight(u);
        if let Some((v, _)) = partner {
            remaining -= 1;
            fine_to_coarse[v] = c;
            merged.extend_from_slice(&level.members[v]);
            weight += g.vertex_weight(v);
        }
        merged.sort_unstable();
        members.push(merged);
        weights.push(weight);
    }

    let mut coarse = WeightedGraph::new(weights);
    for (u, v, w) in g.edges() {
        let (cu, cv) = (fine_to_coarse[u], fine_to_coarse[v]);
        if cu != cv {
            coarse.add_edge_weight(cu, cv, w);
        }
    }
    CoarseLevel {
        graph: coarse,
        members,
        fine_to_coarse,
    }
}
