//! Pipeline construction for one device group: split it into stage groups,
//! pick each machine's tensor-parallel layout, order the stages, and assign
//! layers.

use alloc::vec::Vec;

use crate::cluster::{ClusterError, ClusterSpec};
use crate::cost::{pipeline_span, CostError, CostModel, PipelinePlan, StagePlan};
use crate::graph::build_device_graph;
use crate::partition::{partition_devices, Objective, Partition, PartitionError, PartitionParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LayoutError {
    #[error("empty device group")]
    EmptyGroup,
    #[error("more stages than layers ({stages} > {layers})")]
    MoreStagesThanLayers { stages: usize, layers: usize },
    #[error("micro-batch {micro_batch} does not divide batch {batch}")]
    MicroBatch { batch: u32, micro_batch: u32 },
    #[error("tau must be at least 1")]
    ZeroTau,
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// Stage skeletons of one stage group: device sets in pipeline order, layers
/// not yet assigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntraGroupStrategy {
    pub stages: Vec<Vec<usize>>,
    pub source_group: usize,
}

/// Upper bound on enumerated orderings per call.
pub const ORDERING_BUDGET: usize = 4096;

/// Splits a pipeline's device group into `k` stage groups with a min-cut
/// partition, keeping high-bandwidth devices together.
pub fn secondary_partition(
    cost: &CostModel<'_>,
    group: &[usize],
    k: usize,
    params: PartitionParams,
    seed: u64,
) -> Result<Partition, LayoutError> {
    if group.is_empty() {
        return Err(LayoutError::EmptyGroup);
    }
    let dg = build_device_graph(cost.cluster, group)?;
    Ok(partition_devices(&dg, k, Objective::Min, params, seed)?)
}

fn divisors(n: usize) -> impl Iterator<Item = usize> {
    (1..=n).filter(move |d| n % d == 0)
}

/// How [`intra_group_strategy_scored`] ranks tensor-parallel degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TpScore {
    /// Lowest per-layer stage time.
    Latency,
    /// Lowest per-layer time per device (`tp · layer_time`), which favors
    /// more, narrower stages.
    Throughput,
}

/// Best stage layout of one stage group.
///
/// Devices are split by machine (and device type); each such subset becomes
/// `m / tp` stages of `tp` consecutive devices. `tp` ranges over the common
/// divisors of the subset size and the machine's device count; the one with
/// the lowest per-layer stage time that leaves room for at least one layer
/// wins, ties to the lower degree.
pub fn intra_group_strategy(
    cost: &CostModel<'_>,
    stage_group: &[usize],
    micro_batch: u32,
    source_group: usize,
) -> Result<IntraGroupStrategy, LayoutError> {
    intra_group_strategy_scored(cost, stage_group, micro_batch, source_group, TpScore::Latency)
}

/// [`intra_group_strategy`] with a choice of degree ranking.
pub fn intra_group_strategy_scored(
    cost: &CostModel<'_>,
    stage_group: &[usize],
    micro_batch: u32,
    source_group: usize,
    score: TpScore,
) -> Result<IntraGroupStrategy, LayoutError> {
    if stage_group.is_empty() {
        return Err(LayoutError::EmptyGroup);
    }
    let cluster = cost.cluster;
    let mut devices = stage_group.to_vec();
    devices.sort_unstable();
    // Subsets keyed by (machine, flops), ordered by first member.
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    for d in devices {
        let key = (cluster.machine_of(d), cluster.device(d).peak_flops);
        match subsets
            .iter_mut()
            .find(|s| (cluster.machine_of(s[0]), cluster.device(s[0]).peak_flops) == key)
        {
            Some(s) => s.push(d),
            None => subsets.push(alloc::vec![d]),
        }
    }
    let mut stages = Vec::new();
    for subset in subsets {
        let mut best: Option<(usize, f64)> = None;
        let mut fallback = 1;
        let machine_size = cluster.machine_devices(cluster.machine_of(subset[0])).len();
        for tp in divisors(subset.len()).filter(|t| machine_size % t == 0) {
            let stage = &subset[..tp];
            fallback = tp;
            if cost.max_layers_in_memory(stage, micro_batch) == 0 {
                continue;
            }
            let t = cost.layer_time(stage, micro_batch)?;
            let t = match score {
                TpScore::Latency => t,
                TpScore::Throughput => t * tp as f64,
            };
            if best.map_or(true, |(_, bt)| t < bt) {
                best = Some((tp, t));
            }
        }
        let tp = best.map_or(fallback, |b| b.0);
        stages.extend(subset.chunks(tp).map(|c| c.to_vec()));
    }
    Ok(IntraGroupStrategy {
        stages,
        source_group,
    })
}

/// One enumerated ordering and its hop sum.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderCandidate {
    pub order: Vec<usize>,
    pub hop_sum: f64,
}

/// Result of the top-τ ordering search.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingTrace {
    pub best: OrderCandidate,
    pub candidates: Vec<OrderCandidate>,
    /// True if some start vertex hit its share of [`ORDERING_BUDGET`].
    pub truncated: bool,
}

/// Orders strategies into one pipeline.
///
/// Strategies are vertices of a graph weighted by the best bandwidth between
/// their devices. From every start vertex, paths extend through the `tau`
/// highest-bandwidth unvisited vertices; every complete path (plus the
/// identity order) is scored by its summed pipeline hop cost. The lowest sum
/// wins, ties to the lexicographically smallest index sequence. Stages
/// inside a strategy keep their order.
pub fn order_stages_greedy(
    cost: &CostModel<'_>,
    strategies: &[IntraGroupStrategy],
    tau: usize,
    micro_batch: u32,
) -> Result<Vec<Vec<usize>>, LayoutError> {
    let trace = order_stages_traced(cost, strategies, tau, micro_batch)?;
    Ok(trace
        .best
        .order
        .iter()
        .flat_map(|&i| strategies[i].stages.iter().cloned())
        .collect())
}

/// [`order_stages_greedy`] returning every scored candidate.
pub fn order_stages_traced(
    cost: &CostModel<'_>,
    strategies: &[IntraGroupStrategy],
    tau: usize,
    micro_batch: u32,
) -> Result<OrderingTrace, LayoutError> {
    let orders = enumerate_orders(cost, strategies, tau, micro_batch)?;
    let candidates: Vec<OrderCandidate> = (0..orders.len())
        .map(|i| OrderCandidate {
            order: orders.order(i).to_vec(),
            hop_sum: orders.hops[i],
        })
        .collect();
    let mut best = candidates[0].clone();
    for c in &candidates[1..] {
        if c.hop_sum < best.hop_sum || (c.hop_sum == best.hop_sum && c.order < best.order) {
            best = c.clone();
        }
    }
    Ok(OrderingTrace {
        best,
        candidates,
        truncated: orders.truncated,
    })
}

/// Enumerated orders stored back to back, identity first.
struct Orders {
    n: usize,
    flat: Vec<usize>,
    hops: Vec<f64>,
    truncated: bool,
}

impl Orders {
    fn len(&self) -> usize {
        self.hops.len()
    }

    fn order(&self, i: usize) -> &[usize] {
        &self.flat[i * self.n..(i + 1) * self.n]
    }
}

fn enumerate_orders(
    cost: &CostModel<'_>,
    strategies: &[IntraGroupStrategy],
    tau: usize,
    micro_batch: u32,
) -> Result<Orders, LayoutError> {
    if tau == 0 {
        return Err(LayoutError::ZeroTau);
    }
    let n = strategies.len();
    if n == 0 || strategies.iter().any(|s| s.stages.is_empty()) {
        return Err(LayoutError::EmptyGroup);
    }
    let cluster = cost.cluster;
    let devices: Vec<Vec<usize>> = strategies
        .iter()
        .map(|s| s.stages.iter().flatten().copied().collect())
        .collect();
    let mut bw = alloc::vec![0.0; n * n];
    let mut hop = alloc::vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let mut best: f64 = 0.0;
            for &x in &devices[a] {
                for &y in &devices[b] {
                    best = best.max(cluster.bandwidth(x, y));
                }
            }
            bw[a * n + b] = best;
            let last = strategies[a].stages.last().expect("nonempty");
            hop[a * n + b] = cost.comm_pp_hop(last, &strategies[b].stages[0], micro_batch);
        }
    }
    let internal: f64 = strategies
        .iter()
        .map(|s| {
            s.stages
                .windows(2)
                .map(|w| cost.comm_pp_hop(&w[0], &w[1], micro_batch))
                .sum::<f64>()
        })
        .sum();
    let score = |order: &[usize]| internal + order.windows(2).map(|w| hop[w[0] * n + w[1]]).sum::<f64>();

    let identity: Vec<usize> = (0..n).collect();
    let mut orders = Orders {
        n,
        hops: alloc::vec![score(&identity)],
        flat: identity,
        truncated: false,
    };
    // The budget is shared evenly between start vertices.
    let per_start = (ORDERING_BUDGET / n).max(1);
    let mut path = Vec::with_capacity(n);
    let mut visited = alloc::vec![false; n];
    // Neighbours of each vertex, fastest link first.
    let ranked: Vec<Vec<usize>> = (0..n)
        .map(|at| {
            let mut next: Vec<usize> = (0..n).filter(|&v| v != at).collect();
            next.sort_by(|&a, &b| bw[at * n + b].total_cmp(&bw[at * n + a]).then(a.cmp(&b)));
            next
        })
        .collect();
    for start in 0..n {
        path.push(start);
        visited[start] = true;
        let mut emitted = 0;
        extend(&ranked, n, tau, &mut path, &mut visited, &mut |p| {
            if emitted == per_start {
                orders.truncated = true;
                return false;
            }
            emitted += 1;
            orders.flat.extend_from_slice(p);
            orders.hops.push(score(p));
            true
        });
        visited[start] = false;
        path.pop();
    }
    Ok(orders)
}

/// Depth-first path extension; `emit` returns false to stop.
fn extend(
    ranked: &[Vec<usize>],
    n: usize,
    tau: usize,
    path: &mut Vec<usize>,
    visited: &mut [bool],
    emit: &mut dyn FnMut(&[usize]) -> bool,
) -> bool {
    if path.len() == n {
        return emit(path);
    }
    let at = *path.last().expect("path starts nonempty");
    let mut taken = 0;
    for &v in &ranked[at] {
        if taken == tau {
            break;
        }
        if visited[v] {
            continue;
        }
        taken += 1;
        path.push(v);
        visited[v] = true;
        let go_on = extend(ranked, n, tau, path, visited, emit);
        visited[v] = false;
        path.pop();
        if !go_on {
            return false;
        }
    }
    true
}

/// Per-stage layer counts for an ordered list of stages.
///
/// Counts start proportional to per-layer speed (largest remainder, earlier
/// stage first on ties, at least one layer each), are capped by what fits
/// in memory where possible, then improved by single-layer moves between
/// adjacent stages while the pipeline time strictly decreases. A second
/// start at the smallest feasible slowest segment is climbed the same way;
/// the faster result wins, the proportional one on ties.
pub fn assign_layers(
    cost: &CostModel<'_>,
    stages: &[Vec<usize>],
    micro_batch: u32,
    num_micro_batches: u32,
) -> Result<Vec<usize>, LayoutError> {
    let layers = cost.model.layers();
    let n = stages.len();
    if n == 0 {
        return Err(LayoutError::EmptyGroup);
    }
    if layers < n {
        return Err(LayoutError::MoreStagesThanLayers { stages: n, layers });
    }
    let profile = StageProfile::new(cost, stages, micro_batch)?;
    let speeds: Vec<f64> = profile.times.iter().map(|t| 1.0 / t).collect();
    let mut counts = proportional_counts(&speeds, layers);
    repair_memory(&mut counts, &profile.caps, &profile.times);
    let climbed = profile.hill_climb(counts, num_micro_batches);
    // Single-layer moves stall when several stages tie at the slowest
    // segment, so a min-max start is climbed too and the better one kept.
    let Some(start) = profile.minmax_counts(layers) else {
        return Ok(climbed);
    };
    let alternative = profile.hill_climb(start, num_micro_batches);
    if profile.span(&alternative, num_micro_batches) < profile.span(&climbed, num_micro_batches) {
        Ok(alternative)
    } else {
        Ok(climbed)
    }
}

/// Moves single layers between adjacent stages while the pipeline time
/// strictly decreases, never pushing a stage past its memory cap.
pub fn hill_climb_layers(
    cost: &CostModel<'_>,
    stages: &[Vec<usize>],
    counts: Vec<usize>,
    micro_batch: u32,
    num_micro_batches: u32,
) -> Result<Vec<usize>, LayoutError> {
    let profile = StageProfile::new(cost, stages, micro_batch)?;
    Ok(profile.hill_climb(counts, num_micro_batches))
}

/// Per-stage constants for layer placement.
struct StageProfile {
    times: Vec<f64>,
    hops: Vec<f64>,
    caps: Vec<usize>,
}

impl StageProfile {
    fn new(cost: &CostModel<'_>, stages: &[Vec<usize>], micro_batch: u32) -> Result<Self, LayoutError> {
        let n = stages.len();
        let times = stages
            .iter()
            .map(|s| cost.layer_time(s, micro_batch))
            .collect::<Result<Vec<f64>, _>>()?;
        let hops = (0..n)
            .map(|j| match stages.get(j + 1) {
                Some(next) => cost.comm_pp_hop(&stages[j], next, micro_batch),
                None => 0.0,
            })
            .collect();
        let caps = stages
            .iter()
            .map(|s| cost.max_layers_in_memory(s, micro_batch).max(1))
            .collect();
        Ok(StageProfile { times, hops, caps })
    }

    fn span(&self, counts: &[usize], num_micro_batches: u32) -> f64 {
        let segs: Vec<f64> = (0..counts.len())
            .map(|j| counts[j] as f64 * self.times[j] + self.hops[j])
            .collect();
        pipeline_span(&segs, num_micro_batches)
    }

    /// Layers per stage at the smallest achievable slowest segment: each
    /// stage takes as many layers as fit under that bound and memory, then
    /// the surplus leaves the slowest stages first. `None` if memory cannot
    /// hold `layers`.
    fn minmax_counts(&self, layers: usize) -> Option<Vec<usize>> {
        let n = self.times.len();
        if self.caps.iter().sum::<usize>() < layers {
            return None;
        }
        let fill = |bound: f64| -> Option<Vec<usize>> {
            let counts: Vec<usize> = (0..n)
                .map(|j| {
                    let room = (bound - self.hops[j]) / self.times[j];
                    let fit = if room >= 0.0 { (room * (1.0 + 1e-12)) as usize } else { 0 };
                    fit.min(self.caps[j])
                })
                .collect();
            (counts.iter().all(|&c| c >= 1) && counts.iter().sum::<usize>() >= layers).then_some(counts)
        };
        let seg = |j: usize, l: usize| l as f64 * self.times[j] + self.hops[j];
        // Bisect on the bound, then snap to the slowest segment it admits.
        let mut hi = (0..n).map(|j| seg(j, self.caps[j].min(layers))).fold(0.0, f64::max);
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if fill(mid).is_some() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mut counts = fill(hi)?;
        let mut surplus = counts.iter().sum::<usize>() - layers;
        let mut by_time: Vec<usize> = (0..n).collect();
        by_time.sort_by(|&a, &b| self.times[b].total_cmp(&self.times[a]).then(a.cmp(&b)));
        while surplus > 0 {
            let j = *by_time.iter().find(|&&j| counts[j] > 1)?;
            let take = (counts[j] - 1).min(surplus);
            counts[j] -= take;
            surplus -= take;
        }
        Some(counts)
    }

    /// Steepest descent over single-layer moves between adjacent stages.
    /// Each move is scored in constant time from the segment sum and the
    /// three largest segments.
    fn hill_climb(&self, mut counts: Vec<usize>, num_micro_batches: u32) -> Vec<usize> {
        let n = counts.len();
        let tail = num_micro_batches.saturating_sub(1) as f64;
        let mut segs: Vec<f64> = (0..n).map(|j| counts[j] as f64 * self.times[j] + self.hops[j]).collect();
        let mut current = self.span(&counts, num_micro_batches);
        loop {
            let sum: f64 = segs.iter().sum();
            let mut top = [(f64::NEG_INFINITY, usize::MAX); 3];
            for (j, &v) in segs.iter().enumerate() {
                if v > top[2].0 {
                    top[2] = (v, j);
                    if top[2].0 > top[1].0 {
                        top.swap(1, 2);
                        if top[1].0 > top[0].0 {
                            top.swap(0, 1);
                        }
                    }
                }
            }
            let max_without = |a: usize, b: usize| {
                top.iter()
                    .find(|&&(_, j)| j != a && j != b && j != usize::MAX)
                    .map_or(0.0, |&(v, _)| v)
            };
            let mut best: Option<(usize, usize, f64)> = None;
            for j in 0..n.saturating_sub(1) {
                for (from, to) in [(j, j + 1), (j + 1, j)] {
                    if counts[from] <= 1 || counts[to] >= self.caps[to] {
                        continue;
                    }
                    let new_from = segs[from] - self.times[from];
                    let new_to = segs[to] + self.times[to];
                    let new_sum = sum - self.times[from] + self.times[to];
                    let new_max = max_without(from, to).max(new_from).max(new_to);
                    let t = new_sum + tail * new_max;
                    if t < current && best.map_or(true, |(_, _, bt)| t < bt) {
                        best = Some((from, to, t));
                    }
                }
            }
            let Some((from, to, _)) = best else { break };
            counts[from] -= 1;
            counts[to] += 1;
            segs[from] = counts[from] as f64 * self.times[from] + self.hops[from];
            segs[to] = counts[to] as f64 * self.times[to] + self.hops[to];
            // Rescore exactly so accepted moves strictly decrease the span.
            let exact = self.span(&counts, num_micro_batches);
            if exact >= current {
                counts[from] += 1;
                counts[to] -= 1;
                break;
            }
            current = exact;
        }
        counts
    }
}

/// Largest-remainder apportionment of `total` by `weights`, each at least 1.
pub fn proportional_counts(weights: &[f64], total: usize) -> Vec<usize> {
    let n = weights.len();
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|&q| (q as usize).max(1)).collect();
    let mut assigned: usize = counts.iter().sum();
    while assigned > total {
        // Take from the stage furthest above its quota.
        let j = (0..n)
            .filter(|&j| counts[j] > 1)
            .max_by(|&a, &b| {
                (counts[a] as f64 - quotas[a])
                    .total_cmp(&(counts[b] as f64 - quotas[b]))
                    .then(b.cmp(&a))
            })
            .expect("total >= n leaves a stage above one layer");
        counts[j] -= 1;
        assigned -= 1;
    }
    while assigned < total {
        let j = (0..n)
            .max_by(|&a, &b| {
                (quotas[a] - counts[a] as f64)
                    .total_cmp(&(quotas[b] - counts[b] as f64))
                    .then(b.cmp(&a))
            })
            .expect("nonempty");
        counts[j] += 1;
        assigned += 1;
    }
    counts
}

/// Moves layers off stages above their memory cap onto the stage that
/// stays fastest, while any stage has room.
fn repair_memory(counts: &mut [usize], caps: &[usize], times: &[f64]) {
    loop {
        let Some(over) = (0..counts.len()).find(|&j| counts[j] > caps[j]) else {
            return;
        };
        let target = (0..counts.len())
            .filter(|&j| counts[j] < caps[j])
            .min_by(|&a, &b| {
                ((counts[a] + 1) as f64 * times[a])
                    .total_cmp(&((counts[b] + 1) as f64 * times[b]))
                    .then(a.cmp(&b))
            });
        let Some(to) = target else { return };
        counts[over] -= 1;
        counts[to] += 1;
    }
}

/// Builds ordered stage skeletons for one group at a given `k`.
pub fn layout_stages(
    cost: &CostModel<'_>,
    partition: &Partition,
    tau: usize,
    micro_batch: u32,
) -> Result<Vec<Vec<usize>>, LayoutError> {
    let strategies = group_strategies(cost, partition, micro_batch, TpScore::Latency)?;
    order_stages_greedy(cost, &strategies, tau, micro_batch)
}

/// Stage orders for the strategies picked under `score`: every order whose
/// hop sum ties the best one (relative tolerance 1e-9), at most `limit`.
/// Ties are ranked by [`machine_sequence`], then by strategy indices, so
/// groups of the same shape line their stages up on the same machines and
/// their data-parallel groups stay local.
pub fn layout_stage_orders(
    cost: &CostModel<'_>,
    partition: &Partition,
    tau: usize,
    micro_batch: u32,
    score: TpScore,
    limit: usize,
) -> Result<Vec<Vec<Vec<usize>>>, LayoutError> {
    let strategies = group_strategies(cost, partition, micro_batch, score)?;
    let orders = enumerate_orders(cost, &strategies, tau, micro_batch)?;
    let best = orders.hops.iter().copied().fold(f64::INFINITY, f64::min);
    let parts: Vec<Vec<(usize, usize)>> = strategies
        .iter()
        .map(|s| machine_sequence(cost.cluster, &s.stages))
        .collect();
    let stage_count = parts.iter().map(Vec::len).sum();
    let limit = limit.max(1);
    // The `limit` smallest distinct (key, order) pairs among tied orders.
    let mut top: Vec<(Vec<(usize, usize)>, Vec<usize>)> = Vec::with_capacity(limit + 1);
    let mut key = Vec::with_capacity(stage_count);
    for i in 0..orders.len() {
        if orders.hops[i] > best + 1e-9 * best.abs() {
            continue;
        }
        let order = orders.order(i);
        key.clear();
        for &j in order {
            key.extend_from_slice(&parts[j]);
        }
        let probe = (key.as_slice(), order);
        if top.len() == limit && top.last().map_or(false, |w| (w.0.as_slice(), w.1.as_slice()) <= probe) {
            continue;
        }
        match top.binary_search_by(|e| (e.0.as_slice(), e.1.as_slice()).cmp(&probe)) {
            Ok(_) => {}
            Err(at) => {
                top.insert(at, (key.clone(), order.to_vec()));
                top.truncate(limit);
            }
        }
    }
    Ok(top
        .into_iter()
        .map(|(_, order)| order.iter().flat_map(|&i| strategies[i].stages.iter().cloned()).collect())
        .collect())
}

/// `(machine, tp degree)` of every stage in pipeline order.
pub fn machine_sequence(cluster: &ClusterSpec, stages: &[Vec<usize>]) -> Vec<(usize, usize)> {
    stages.iter().map(|s| (cluster.machine_of(s[0]), s.len())).collect()
}

fn group_strategies(
    cost: &CostModel<'_>,
    partition: &Partition,
    micro_batch: u32,
    score: TpScore,
) -> Result<Vec<IntraGroupStrategy>, LayoutError> {
    partition
        .groups
        .iter()
        .enumerate()
        .map(|(i, g)| intra_group_strategy_scored(cost, g, micro_batch, i, score))
        .collect()
}

/// Assembles a pipeline from ordered stages and layer counts.
pub fn pipeline_from_stages(
    stages: Vec<Vec<usize>>,
    counts: &[usize],
    batch: u32,
    micro_batch: u32,
) -> PipelinePlan {
    let mut plan = PipelinePlan {
        stages: stages
            .into_iter()
            .map(|devices| StagePlan {
                devices,
                layer_start: 0,
                layer_count: 0,
            })
            .collect(),
        batch_size: batch,
        micro_batch_size: micro_batch,
    };
    plan.set_layer_counts(counts);
    plan
}

/// Full phase-two construction of one pipeline: secondary partition, intra-
/// group strategies, stage ordering, then layer assignment.
#[allow(clippy::too_many_arguments)]
pub fn build_pipeline(
    cost: &CostModel<'_>,
    group: &[usize],
    k: usize,
    tau: usize,
    batch: u32,
    micro_batch: u32,
    params: PartitionParams,
    seed: u64,
) -> Result<PipelinePlan, LayoutError> {
    if micro_batch == 0 || batch == 0 || batch % micro_batch != 0 {
        return Err(LayoutError::MicroBatch { batch, micro_batch });
    }
    let partition = secondary_partition(cost, group, k, params, seed)?;
    let stages = layout_stages(cost, &partition, tau, micro_batch)?;
    let counts = assign_layers(cost, &stages, micro_batch, batch / micro_batch)?;
    Ok(pipeline_from_stages(stages, &counts, batch, micro_batch))
}
