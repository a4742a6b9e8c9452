//! Iterative two-phase search for an execution plan.
//!
//! Each iteration picks a pipeline count and a cut direction, partitions
//! the cluster into pipeline groups, lays out every pipeline for each
//! candidate stage-group count and micro-batch size, splits the global batch,
//! and keeps the cheapest feasible plan seen so far.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterError, ClusterSpec, ModelSpec};
use crate::cost::{pipeline_span, CostModel, CostReport, ExecutionPlan, MemoryReport, PipelinePlan, StagePlan};
use crate::graph::{build_device_graph, DeviceGraph};
use crate::layout::{
    assign_layers, hill_climb_layers, layout_stage_orders, machine_sequence, pipeline_from_stages, TpScore, proportional_counts,
    secondary_partition, LayoutError,
};
use crate::partition::{
    groups_from_parts, partition_graph, random_partition, repair_capacity, Objective, Partition, PartitionParams,
};

/// Runs independent closures, returning results in input order.
pub trait Executor: Sync {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send;
}

/// Evaluates everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        items.into_iter().map(f).collect()
    }
}

/// How the cluster is split into pipeline groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partitioner {
    Graph,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub global_batch: u32,
    pub micro_batch_candidates: Vec<u32>,
    pub tau: usize,
    pub balance_cap: f64,
    pub iterations: usize,
    pub ema_decay: f64,
    pub seed: u64,
    pub state_multiplier: f64,
    pub partitioner: Partitioner,
}

impl SchedulerConfig {
    pub fn new(global_batch: u32) -> Self {
        SchedulerConfig {
            global_batch,
            micro_batch_candidates: alloc::vec![1, 2, 4, 8],
            tau: 2,
            balance_cap: 1.2,
            iterations: 50,
            ema_decay: 0.5,
            seed: 0,
            state_multiplier: 1.0,
            partitioner: Partitioner::Graph,
        }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.global_batch == 0 {
            return Err(ScheduleError::InvalidConfig("global batch must be positive"));
        }
        if self.micro_batch_candidates.is_empty() || self.micro_batch_candidates.contains(&0) {
            return Err(ScheduleError::InvalidConfig("micro-batch candidates must be positive"));
        }
        if self.tau == 0 {
            return Err(ScheduleError::InvalidConfig("tau must be at least 1"));
        }
        if !(self.balance_cap >= 1.0) {
            return Err(ScheduleError::InvalidConfig("balance cap must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(ScheduleError::InvalidConfig("iterations must be at least 1"));
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return Err(ScheduleError::InvalidConfig("ema decay must lie in (0, 1)"));
        }
        if !(self.state_multiplier > 0.0) {
            return Err(ScheduleError::InvalidConfig("state multiplier must be positive"));
        }
        Ok(())
    }

    pub fn partition_params(&self) -> PartitionParams {
        PartitionParams {
            balance_cap: self.balance_cap,
            ..PartitionParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Input(#[from] ClusterError),
    #[error("global batch too small")]
    GlobalBatchTooSmall,
    #[error("no feasible plan")]
    NoFeasiblePlan {
        /// Memory report of the least-violating candidate, if any was built.
        least_violating: Option<MemoryReport>,
    },
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

/// Search state carried between iterations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchState {
    pub best: Option<(ExecutionPlan, CostReport)>,
    pub ema_dp_cost: Option<f64>,
    pub ema_pipeline_cost: Option<f64>,
    pub iteration_index: usize,
}

impl SearchState {
    /// Folds one observation into the moving averages.
    pub fn observe(&mut self, pipeline: f64, dp: f64, decay: f64) {
        let blend = |ema: Option<f64>, x: f64| Some(ema.map_or(x, |e| decay * e + (1.0 - decay) * x));
        self.ema_pipeline_cost = blend(self.ema_pipeline_cost, pipeline);
        self.ema_dp_cost = blend(self.ema_dp_cost, dp);
    }
}

/// Cut direction for the next global partition: minimize the cut (keep fast
/// links inside pipelines) while pipelines dominate the cost, maximize it
/// while data-parallel synchronization does. Without history, alternate
/// starting with min.
pub fn choose_cut_objective(state: &SearchState) -> Objective {
    match (state.ema_pipeline_cost, state.ema_dp_cost) {
        (Some(p), Some(d)) => {
            if p > d {
                Objective::Min
            } else {
                Objective::Max
            }
        }
        _ => {
            if state.iteration_index % 2 == 0 {
                Objective::Min
            } else {
                Objective::Max
            }
        }
    }
}

/// Per-pipeline batch sizes summing to `global_batch`.
///
/// Starts proportional to throughput at equal batch (in whole micro-batches,
/// at least one each), then moves one micro-batch from the slowest to the
/// fastest pipeline while the slowest time strictly decreases.
pub fn assign_batches(
    cost: &CostModel<'_>,
    pipelines: &[PipelinePlan],
    global_batch: u32,
    micro_batch: u32,
) -> Result<Vec<u32>, ScheduleError> {
    let d = pipelines.len() as u32;
    if d == 0 {
        return Err(ScheduleError::InvalidConfig("no pipelines"));
    }
    if micro_batch == 0 || global_batch % micro_batch != 0 || global_batch < d * micro_batch {
        return Err(ScheduleError::GlobalBatchTooSmall);
    }
    let units = (global_batch / micro_batch) as usize;
    let segments = pipelines
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p.micro_batch_size = micro_batch;
            cost.pipeline_segments(&p)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(LayoutError::from)?;
    let equal = (units / d as usize).max(1) as u32;
    let time = |i: usize, n: u32| pipeline_span(&segments[i], n);
    let throughput: Vec<f64> = (0..pipelines.len()).map(|i| 1.0 / time(i, equal)).collect();
    let mut counts: Vec<u32> = proportional_counts(&throughput, units)
        .into_iter()
        .map(|c| c as u32)
        .collect();
    loop {
        let times: Vec<f64> = counts.iter().enumerate().map(|(i, &n)| time(i, n)).collect();
        let slow = argmax(&times);
        let fast = argmin(&times);
        if slow == fast || counts[slow] <= 1 {
            break;
        }
        let before = times[slow];
        let after_slow = time(slow, counts[slow] - 1);
        let after_fast = time(fast, counts[fast] + 1);
        let mut new_max = after_slow.max(after_fast);
        for (i, &t) in times.iter().enumerate() {
            if i != slow && i != fast {
                new_max = new_max.max(t);
            }
        }
        if new_max < before {
            counts[slow] -= 1;
            counts[fast] += 1;
        } else {
            break;
        }
    }
    Ok(counts.into_iter().map(|c| c * micro_batch).collect())
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

/// One iteration of the search, for traces and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub dp_degree: usize,
    pub objective: Objective,
    /// True when `objective` overrides the moving-average rule.
    pub explored: bool,
    /// Why this pipeline count was chosen: "sweep" or "revisit".
    pub dp_rule: &'static str,
    /// Best time found in this iteration (`+∞` if nothing feasible).
    pub iteration_best: f64,
    pub incumbent_time: f64,
    pub incumbent_mfu: f64,
    pub candidates: usize,
    pub infeasible: usize,
}

/// Result of a scheduler run.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub plan: ExecutionPlan,
    pub report: CostReport,
    pub trace: Vec<IterationRecord>,
    pub candidates: usize,
    pub infeasible: usize,
}

/// Deterministic 64-bit mix for per-iteration seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Largest pipeline count worth trying: bounded by devices, by batch, and by
/// how many full parameter copies fit in aggregate memory.
pub fn max_dp_degree(cost: &CostModel<'_>, config: &SchedulerConfig) -> usize {
    let n = cost.cluster.len();
    let min_mb = config.micro_batch_candidates.iter().copied().min().unwrap_or(1);
    let by_batch = (config.global_batch / min_mb).max(1) as usize;
    let total_memory: f64 = cost.cluster.devices().iter().map(|d| d.memory_bytes).sum();
    let copy = cost.stage_memory(1, cost.model.layers(), min_mb);
    let by_memory = (total_memory / copy) as usize;
    n.min(by_batch).min(by_memory.max(1))
}

/// Pipeline counts in sweep order: a van der Corput permutation of
/// `1..=max`, so early iterations spread over the whole range.
pub fn dp_sweep_order(max: usize) -> Vec<usize> {
    let mut keyed: Vec<(u64, usize)> = (1..=max)
        .map(|d| {
            let mut x = d as u64;
            let mut r = 0u64;
            for _ in 0..64 {
                r = (r << 1) | (x & 1);
                x >>= 1;
            }
            (r, d)
        })
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, d)| d).collect()
}

/// Every this many visits to one pipeline count, the cut objective is the
/// opposite of the moving-average rule, so both directions get sampled.
const EXPLORE_EVERY: usize = 2;

/// Offsets visited around the incumbent on revisit iterations.
const REVISIT_OFFSETS: [isize; 5] = [0, -1, 1, -2, 2];

fn pick_dp(
    iteration: usize,
    sweep: &[usize],
    sweep_pos: &mut usize,
    revisits: &mut usize,
    incumbent: Option<usize>,
    max: usize,
) -> (usize, &'static str) {
    if iteration % 2 == 1 {
        if let Some(best) = incumbent {
            for _ in 0..REVISIT_OFFSETS.len() {
                let off = REVISIT_OFFSETS[*revisits % REVISIT_OFFSETS.len()];
                *revisits += 1;
                let d = best as isize + off;
                if d >= 1 && d as usize <= max {
                    return (d as usize, "revisit");
                }
            }
        }
    }
    let d = sweep[*sweep_pos % sweep.len()];
    *sweep_pos += 1;
    (d, "sweep")
}

/// Stage orders tied on hop sum that are costed with layers assigned.
const ORDER_TIES: usize = 8;

/// A laid-out pipeline for one (group, micro-batch) pair.
#[derive(Debug, Clone)]
struct Layout {
    stages: Vec<Vec<usize>>,
    counts: Vec<usize>,
    time: f64,
    fits: bool,
    key: Vec<(usize, usize)>,
}

impl Layout {
    /// Fitting layouts first, then lower time; times within a relative 1e-12
    /// tie and fall back to the machine sequence.
    fn beats(&self, other: &Layout) -> bool {
        if self.fits != other.fits {
            return self.fits;
        }
        let tol = 1e-12 * other.time.abs();
        if (self.time - other.time).abs() > tol {
            return self.time < other.time;
        }
        self.key < other.key
    }
}

/// Splits one pipeline group into `k` stage groups with the configured
/// partitioner.
fn stage_groups(
    cost: &CostModel<'_>,
    group: &[usize],
    k: usize,
    config: &SchedulerConfig,
    seed: u64,
) -> Option<Partition> {
    match config.partitioner {
        Partitioner::Graph => secondary_partition(cost, group, k, config.partition_params(), seed).ok(),
        Partitioner::Random => {
            let dg = build_device_graph(cost.cluster, group).ok()?;
            let (parts, cap) = random_partition(&dg.graph, k, config.balance_cap, seed).ok()?;
            Some(groups_from_parts(&dg, &parts, k, Objective::Min, cap))
        }
    }
}

/// Best layouts over stage-group counts for one pipeline group, one entry
/// per micro-batch candidate.
fn layout_group(
    cost: &CostModel<'_>,
    group: &[usize],
    nominal_batch: u32,
    config: &SchedulerConfig,
    seed: u64,
) -> Vec<Option<Layout>> {
    let cluster = cost.cluster;
    let mut machines: Vec<usize> = group.iter().map(|&d| cluster.machine_of(d)).collect();
    machines.sort_unstable();
    machines.dedup();
    let k_max = (2 * machines.len()).min(group.len()).min(cost.model.layers());
    let mut best: Vec<Option<Layout>> = alloc::vec![None; config.micro_batch_candidates.len()];
    for k in 1..=k_max {
        let Some(partition) = stage_groups(cost, group, k, config, mix_seed(seed, k as u64)) else {
            continue;
        };
        for (slot, &mb) in best.iter_mut().zip(&config.micro_batch_candidates) {
            let orders = [TpScore::Latency, TpScore::Throughput].into_iter().flat_map(|score| {
                layout_stage_orders(cost, &partition, config.tau, mb, score, ORDER_TIES).unwrap_or_default()
            });
            let mut seen: Vec<Vec<Vec<usize>>> = Vec::new();
            for stages in orders {
                if seen.contains(&stages) {
                    continue;
                }
                seen.push(stages.clone());
                if stages.len() > cost.model.layers() {
                    continue;
                }
                let n_mb = (nominal_batch / mb).max(1);
                let Ok(counts) = assign_layers(cost, &stages, mb, n_mb) else {
                    continue;
                };
                let fits = stages
                    .iter()
                    .zip(&counts)
                    .all(|(s, &c)| c <= cost.max_layers_in_memory(s, mb));
                let plan = pipeline_from_stages(stages.clone(), &counts, n_mb * mb, mb);
                let Ok(time) = cost.pipeline_time(&plan) else { continue };
                let key = machine_sequence(cluster, &stages);
                let candidate = Layout {
                    stages,
                    counts,
                    time,
                    fits,
                    key,
                };
                let better = match slot {
                    None => true,
                    Some(cur) => candidate.beats(cur),
                };
                if better {
                    *slot = Some(candidate);
                }
            }
        }
    }
    best
}

/// Outcome of evaluating one global partition.
struct Evaluation {
    best: Option<(ExecutionPlan, CostReport)>,
    candidates: usize,
    infeasible: usize,
    least_violating: Option<MemoryReport>,
}

fn evaluate_groups<E: Executor>(
    cost: &CostModel<'_>,
    groups: &[Vec<usize>],
    config: &SchedulerConfig,
    seed: u64,
    executor: &E,
) -> Evaluation {
    let total: f64 = groups
        .iter()
        .flatten()
        .map(|&d| cost.cluster.device(d).peak_flops)
        .sum();
    // One layout seed for all groups: groups of the same shape get the same
    // layout, which keeps their data-parallel peers on shared machines.
    let layout_seed = mix_seed(seed, 1000);
    let tasks: Vec<&Vec<usize>> = groups.iter().collect();
    let layouts: Vec<Vec<Option<Layout>>> = executor.map(tasks, |g| {
        let flops: f64 = g.iter().map(|&d| cost.cluster.device(d).peak_flops).sum();
        let nominal = ((config.global_batch as f64 * flops / total) as u32).max(1);
        layout_group(cost, g, nominal, config, layout_seed)
    });

    let mut out = Evaluation {
        best: None,
        candidates: 0,
        infeasible: 0,
        least_violating: None,
    };
    for (m, &mb) in config.micro_batch_candidates.iter().enumerate() {
        let chosen: Option<Vec<&Layout>> = layouts.iter().map(|per_mb| per_mb[m].as_ref()).collect();
        let Some(chosen) = chosen else { continue };
        let skeletons: Vec<PipelinePlan> = chosen
            .iter()
            .map(|l| pipeline_from_stages(l.stages.clone(), &l.counts, mb, mb))
            .collect();
        let Ok(batches) = assign_batches(cost, &skeletons, config.global_batch, mb) else {
            continue;
        };
        let mut pipelines = Vec::with_capacity(chosen.len());
        for (l, &b) in chosen.iter().zip(&batches) {
            let counts = hill_climb_layers(cost, &l.stages, l.counts.clone(), mb, b / mb)
                .unwrap_or_else(|_| l.counts.clone());
            pipelines.push(pipeline_from_stages(l.stages.clone(), &counts, b, mb));
        }
        let plan = ExecutionPlan::new(pipelines, cost.model.layers());
        let Ok(report) = cost.iteration_time(&plan) else { continue };
        out.candidates += 1;
        if !report.feasible {
            out.infeasible += 1;
            let memory = MemoryReport {
                per_device: report.per_device_memory.clone(),
                feasible: false,
            };
            let better = out
                .least_violating
                .as_ref()
                .map_or(true, |m| memory.worst_ratio() < m.worst_ratio());
            if better {
                out.least_violating = Some(memory);
            }
        }
        let better = match &out.best {
            None => true,
            Some((_, r)) => report.cmp_cost(r).is_lt(),
        };
        if better {
            out.best = Some((plan, report));
        }
    }
    out
}

/// Moves single layers between adjacent stages of any pipeline while the
/// full iteration time strictly decreases. Unlike the per-pipeline climb
/// this sees the data-parallel term. Infeasible plans are returned as is.
pub fn polish_layers(cost: &CostModel<'_>, plan: ExecutionPlan, report: CostReport) -> (ExecutionPlan, CostReport) {
    if !report.feasible {
        return (plan, report);
    }
    let layers = cost.model.layers();
    let mut pipelines = plan.pipelines;
    let mut current = report;
    loop {
        let mut best: Option<(usize, usize, usize, CostReport)> = None;
        for p in 0..pipelines.len() {
            let n = pipelines[p].stages.len();
            let mb = pipelines[p].micro_batch_size;
            for j in 0..n.saturating_sub(1) {
                for (from, to) in [(j, j + 1), (j + 1, j)] {
                    let stages = &pipelines[p].stages;
                    if stages[from].layer_count <= 1
                        || stages[to].layer_count >= cost.max_layers_in_memory(&stages[to].devices, mb)
                    {
                        continue;
                    }
                    let mut counts: Vec<usize> = stages.iter().map(|s| s.layer_count).collect();
                    counts[from] -= 1;
                    counts[to] += 1;
                    let mut trial = pipelines.clone();
                    trial[p].set_layer_counts(&counts);
                    let trial = ExecutionPlan::new(trial, layers);
                    let Ok(r) = cost.iteration_time(&trial) else { continue };
                    let bar = best.as_ref().map_or(&current, |b| &b.3);
                    if r.feasible && r.iteration_time < bar.iteration_time {
                        best = Some((p, from, to, r));
                    }
                }
            }
        }
        let Some((p, from, to, r)) = best else { break };
        let mut counts: Vec<usize> = pipelines[p].stages.iter().map(|s| s.layer_count).collect();
        counts[from] -= 1;
        counts[to] += 1;
        pipelines[p].set_layer_counts(&counts);
        current = r;
    }
    (ExecutionPlan::new(pipelines, layers), current)
}

/// Splits the cluster into `d` pipeline groups. The graph partitioner then
/// repairs groups whose total memory cannot hold one copy of the model.
fn global_groups(
    cost: &CostModel<'_>,
    dg: &DeviceGraph,
    d: usize,
    objective: Objective,
    config: &SchedulerConfig,
    seed: u64,
) -> Option<Vec<Vec<usize>>> {
    let params = config.partition_params();
    let (parts, cap) = match config.partitioner {
        Partitioner::Graph => {
            let (mut parts, cap) = partition_graph(&dg.graph, d, objective, params, seed).ok()?;
            let capacity: Vec<f64> = dg.devices.iter().map(|&x| cost.cluster.device(x).memory_bytes).collect();
            let min_mb = config.micro_batch_candidates.iter().copied().min().unwrap_or(1);
            let required = cost.stage_memory(1, cost.model.layers(), min_mb);
            repair_capacity(&dg.graph, &mut parts, d, &capacity, required, objective, cap);
            (parts, cap)
        }
        Partitioner::Random => random_partition(&dg.graph, d, config.balance_cap, seed).ok()?,
    };
    Some(groups_from_parts(dg, &parts, d, objective, cap).groups)
}

/// Runs the search and returns the best feasible plan.
pub fn schedule<E: Executor>(
    cluster: &ClusterSpec,
    model: &ModelSpec,
    config: &SchedulerConfig,
    executor: &E,
) -> Result<Schedule, ScheduleError> {
    config.validate()?;
    model.validate()?;
    let cost = CostModel::new(cluster, model).with_state_multiplier(config.state_multiplier);
    let all: Vec<usize> = (0..cluster.len()).collect();
    let dg = build_device_graph(cluster, &all)?;
    let max_dp = max_dp_degree(&cost, config);
    let sweep = dp_sweep_order(max_dp);

    let mut state = SearchState::default();
    let mut best_dp: Option<usize> = None;
    let (mut sweep_pos, mut revisits) = (0, 0);
    let mut trace = Vec::with_capacity(config.iterations);
    let (mut candidates, mut infeasible) = (0, 0);
    let mut least_violating: Option<MemoryReport> = None;
    let mut visits = alloc::vec![0usize; max_dp + 1];

    for it in 0..config.iterations {
        state.iteration_index = it;
        let (d, rule) = pick_dp(it, &sweep, &mut sweep_pos, &mut revisits, best_dp, max_dp);
        let ruled = choose_cut_objective(&state);
        visits[d] += 1;
        let explored = visits[d] % EXPLORE_EVERY == 0;
        let objective = if explored { ruled.flipped() } else { ruled };
        let seed = mix_seed(config.seed, it as u64);
        let mut iteration_best = f64::INFINITY;
        let (mut it_candidates, mut it_infeasible) = (0, 0);
        if let Some(groups) = global_groups(&cost, &dg, d, objective, config, seed) {
            let eval = evaluate_groups(&cost, &groups, config, seed, executor);
            it_candidates = eval.candidates;
            it_infeasible = eval.infeasible;
            if let Some(m) = eval.least_violating {
                if least_violating.as_ref().map_or(true, |l| m.worst_ratio() < l.worst_ratio()) {
                    least_violating = Some(m);
                }
            }
            if let Some((plan, report)) = eval.best {
                let (plan, report) = polish_layers(&cost, plan, report);
                state.observe(report.max_pipeline_time(), report.dp_comm_time, config.ema_decay);
                if report.feasible {
                    iteration_best = report.iteration_time;
                    let improves = match &state.best {
                        None => true,
                        Some((_, r)) => report.cmp_cost(r).is_lt(),
                    };
                    if improves {
                        best_dp = Some(plan.dp_degree());
                        state.best = Some((plan, report));
                    }
                }
            }
        }
        candidates += it_candidates;
        infeasible += it_infeasible;
        let (incumbent_time, incumbent_mfu) = state
            .best
            .as_ref()
            .map_or((f64::INFINITY, 0.0), |(_, r)| (r.iteration_time, r.mfu));
        trace.push(IterationRecord {
            iteration: it,
            dp_degree: d,
            objective,
            explored,
            dp_rule: rule,
            iteration_best,
            incumbent_time,
            incumbent_mfu,
            candidates: it_candidates,
            infeasible: it_infeasible,
        });
    }
    match state.best {
        Some((plan, report)) => Ok(Schedule {
            plan,
            report,
            trace,
            candidates,
            infeasible,
        }),
        None => Err(ScheduleError::NoFeasiblePlan { least_violating }),
    }
}

/// Shape of a symmetric plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetricShape {
    pub dp: usize,
    pub tp: usize,
    pub pp: usize,
    /// True for tensor, then data, then pipeline rank order; false for
    /// tensor, then pipeline, then data.
    pub dp_inner: bool,
    pub micro_batch: u32,
}

/// Best symmetric plan, or `None` when nothing fits in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricOutcome {
    pub best: Option<(ExecutionPlan, CostReport, SymmetricShape)>,
    pub evaluated: usize,
}

/// Enumerates every `(dp, tp, pp)` with `dp·tp·pp = N` whose tensor groups
/// stay inside one machine and one device type, under both common rank
/// orders, with uniform layers (extra layers to early stages) refined by the
/// layer hill-climb and equal batches.
pub fn symmetric_baseline(
    cluster: &ClusterSpec,
    model: &ModelSpec,
    config: &SchedulerConfig,
) -> Result<SymmetricOutcome, ScheduleError> {
    config.validate()?;
    model.validate()?;
    let cost = CostModel::new(cluster, model).with_state_multiplier(config.state_multiplier);
    let n = cluster.len();
    let layers = model.layers();
    let mut out = SymmetricOutcome {
        best: None,
        evaluated: 0,
    };
    for tp in (1..=n).filter(|t| n % t == 0) {
        let tp_ok = (0..n / tp).all(|g| {
            let first = g * tp;
            (first..first + tp).all(|d| {
                cluster.same_machine(d, first) && cluster.device(d).peak_flops == cluster.device(first).peak_flops
            })
        });
        if !tp_ok {
            continue;
        }
        let rest = n / tp;
        for dp in (1..=rest).filter(|d| rest % d == 0) {
            let pp = rest / dp;
            if pp > layers {
                continue;
            }
            // The two rank orders coincide unless both dp and pp exceed 1.
            let orders: &[bool] = if dp > 1 && pp > 1 { &[true, false] } else { &[true] };
            for &dp_inner in orders {
                for &mb in &config.micro_batch_candidates {
                    if config.global_batch % (dp as u32 * mb) != 0 {
                        continue;
                    }
                    let batch = config.global_batch / dp as u32;
                    let shape = SymmetricShape {
                        dp,
                        tp,
                        pp,
                        dp_inner,
                        micro_batch: mb,
                    };
                    let Ok(plan) = symmetric_plan(&cost, shape, batch) else {
                        continue;
                    };
                    let Ok(report) = cost.iteration_time(&plan) else { continue };
                    out.evaluated += 1;
                    if !report.feasible {
                        continue;
                    }
                    let better = match &out.best {
                        None => true,
                        Some((_, r, _)) => report.cmp_cost(r).is_lt(),
                    };
                    if better {
                        out.best = Some((plan, report, shape));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Builds one symmetric plan from its shape.
pub fn symmetric_plan(cost: &CostModel<'_>, shape: SymmetricShape, batch: u32) -> Result<ExecutionPlan, LayoutError> {
    let SymmetricShape {
        dp,
        tp,
        pp,
        dp_inner,
        micro_batch,
    } = shape;
    let layers = cost.model.layers();
    let mut grid: Vec<Vec<Vec<usize>>> = alloc::vec![alloc::vec![Vec::new(); pp]; dp];
    for rank in 0..dp * tp * pp {
        let group = rank / tp;
        let (i, j) = if dp_inner {
            (group % dp, group / dp)
        } else {
            (group / pp, group % pp)
        };
        grid[i][j].push(rank);
    }
    let uniform: Vec<usize> = (0..pp).map(|j| layers / pp + usize::from(j < layers % pp)).collect();
    let mut pipelines = Vec::with_capacity(dp);
    for stages in grid {
        let counts = hill_climb_layers(cost, &stages, uniform.clone(), micro_batch, batch / micro_batch)?;
        pipelines.push(PipelinePlan {
            stages: stages
                .into_iter()
                .zip(&counts)
                .scan(0, |start, (devices, &c)| {
                    let s = StagePlan {
                        devices,
                        layer_start: *start,
                        layer_count: c,
                    };
                    *start += c;
                    Some(s)
                })
                .collect(),
            batch_size: batch,
            micro_batch_size: micro_batch,
        });
    }
    Ok(ExecutionPlan::new(pipelines, layers))
}
