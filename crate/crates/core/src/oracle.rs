//! Exhaustive planner for small clusters, used as ground truth for the
//! scheduler.
//!
//! The plan space matches the scheduler's: every device is used, each stage
//! is a set of same-machine, same-type devices whose size divides the
//! machine's device count, every stage holds at least one layer, and all
//! pipelines share one micro-batch size. Batch splits are not enumerated
//! one by one: for fixed layouts each pipeline's time is nondecreasing and
//! linear in its micro-batch count, so handing out micro-batches one at a
//! time to the pipeline that would finish earliest yields the exact minimum
//! over all splits.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::cluster::{ClusterError, ClusterSpec, ModelSpec};
use crate::cost::{CostModel, CostReport, ExecutionPlan, PipelinePlan, StagePlan};
use crate::schedule::{Executor, ScheduleError, SchedulerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_devices: usize,
    pub max_layers: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_devices: 6,
            max_layers: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("oracle scale exceeded: {devices} devices (limit {limit})")]
    ScaleExceeded { devices: usize, limit: usize },
    #[error("oracle scale exceeded: {layers} layers (limit {limit})")]
    TooManyLayers { layers: usize, limit: usize },
    #[error(transparent)]
    Config(#[from] ScheduleError),
    #[error(transparent)]
    Input(#[from] ClusterError),
    #[error("no feasible plan")]
    NoFeasiblePlan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub plan: ExecutionPlan,
    pub report: CostReport,
    /// Optimum as computed during the search; equals the report's time.
    pub search_time: f64,
    /// Structural plans in the space, batch splits included.
    pub plan_count: u128,
    /// Layout combinations whose memory fit and were costed.
    pub evaluated: u64,
}

/// Pipeline layout with its costs at one micro-batch size.
#[derive(Debug, Clone)]
struct Candidate {
    pipeline: PipelinePlan,
    fill: f64,
    steady: f64,
    /// Leader device of the stage holding each layer.
    leaders: Vec<u8>,
}

fn check(cluster: &ClusterSpec, model: &ModelSpec, config: &SchedulerConfig, limits: OracleLimits) -> Result<(), OracleError> {
    config.validate()?;
    model.validate()?;
    if cluster.len() > limits.max_devices || cluster.len() > 16 {
        return Err(OracleError::ScaleExceeded {
            devices: cluster.len(),
            limit: limits.max_devices.min(16),
        });
    }
    if model.layers() > limits.max_layers {
        return Err(OracleError::TooManyLayers {
            layers: model.layers(),
            limit: limits.max_layers,
        });
    }
    Ok(())
}

/// Device masks that can form one stage.
fn stage_masks(cluster: &ClusterSpec) -> Vec<u32> {
    let n = cluster.len();
    (1u32..(1 << n))
        .filter(|&m| {
            let devs = members(m);
            let first = devs[0];
            let machine = cluster.machine_of(first);
            let size = cluster.machine_devices(machine).len();
            devs.iter().all(|&d| {
                cluster.machine_of(d) == machine && cluster.device(d).peak_flops == cluster.device(first).peak_flops
            }) && size % devs.len() == 0
        })
        .collect()
}

fn members(mask: u32) -> Vec<usize> {
    (0..32).filter(|b| mask >> b & 1 == 1).collect()
}

/// Every ordered sequence of disjoint stage masks covering `block`.
fn stage_orders(block: u32, stages: &[u32], max_len: usize) -> Vec<Vec<u32>> {
    fn rec(rest: u32, stages: &[u32], max_len: usize, path: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if rest == 0 {
            out.push(path.clone());
            return;
        }
        if path.len() == max_len {
            return;
        }
        for &s in stages {
            if s & rest == s {
                path.push(s);
                rec(rest & !s, stages, max_len, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(block, stages, max_len, &mut Vec::new(), &mut out);
    out
}

/// Compositions of `total` into `parts` positive integers, in
/// lexicographic order.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            path.push(left);
            out.push(path.clone());
            path.pop();
            return;
        }
        for first in 1..=(left - (parts - 1)) {
            path.push(first);
            rec(left - first, parts - 1, path, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    if parts >= 1 && total >= parts {
        rec(total, parts, &mut Vec::new(), &mut out);
    }
    out
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Set partitions of `0..n` as block masks, each block list ordered by
/// smallest member.
fn set_partitions(n: usize) -> Vec<Vec<u32>> {
    fn rec(v: usize, n: usize, blocks: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if v == n {
            out.push(blocks.clone());
            return;
        }
        for b in 0..blocks.len() {
            blocks[b] |= 1 << v;
            rec(v + 1, n, blocks, out);
            blocks[b] &= !(1 << v);
        }
        blocks.push(1 << v);
        rec(v + 1, n, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), &mut out);
    out
}

/// Size of the plan space: set partitions × stage orders × layer
/// compositions × micro-batch sizes × batch splits.
pub fn count_plans(
    cluster: &ClusterSpec,
    model: &ModelSpec,
    config: &SchedulerConfig,
    limits: OracleLimits,
) -> Result<u128, OracleError> {
    check(cluster, model, config, limits)?;
    let layers = model.layers();
    let stages = stage_masks(cluster);
    let mut per_block: BTreeMap<u32, u128> = BTreeMap::new();
    let mut total = 0u128;
    for partition in set_partitions(cluster.len()) {
        let mut layouts = 1u128;
        for &block in &partition {
            let n = *per_block.entry(block).or_insert_with(|| {
                stage_orders(block, &stages, layers)
                    .iter()
                    .map(|o| binomial(layers as u128 - 1, o.len() as u128 - 1))
                    .sum()
            });
            layouts *= n;
        }
        for &mb in &config.micro_batch_candidates {
            if config.global_batch % mb != 0 {
                continue;
            }
            let m = (config.global_batch / mb) as u128;
            let d = partition.len() as u128;
            total += layouts * binomial(m.saturating_sub(1), d - 1) * u128::from(m >= d);
        }
    }
    Ok(total)
}

fn block_candidates(cost: &CostModel<'_>, block: u32, stages: &[u32], mb: u32) -> Vec<Candidate> {
    let layers = cost.model.layers();
    let mut out = Vec::new();
    for order in stage_orders(block, stages, layers) {
        let devs: Vec<Vec<usize>> = order.iter().map(|&m| members(m)).collect();
        let caps: Vec<usize> = devs.iter().map(|d| cost.max_layers_in_memory(d, mb)).collect();
        for counts in compositions(layers, order.len()) {
            if counts.iter().zip(&caps).any(|(&c, &cap)| c > cap) {
                continue;
            }
            let mut start = 0;
            let mut leaders = Vec::with_capacity(layers);
            let stage_plans: Vec<StagePlan> = devs
                .iter()
                .zip(&counts)
                .map(|(d, &c)| {
                    let s = StagePlan {
                        devices: d.clone(),
                        layer_start: start,
                        layer_count: c,
                    };
                    start += c;
                    leaders.extend(core::iter::repeat(s.leader() as u8).take(c));
                    s
                })
                .collect();
            let pipeline = PipelinePlan {
                stages: stage_plans,
                batch_size: mb,
                micro_batch_size: mb,
            };
            let Ok(segs) = cost.pipeline_segments(&pipeline) else { continue };
            out.push(Candidate {
                pipeline,
                fill: segs.iter().sum(),
                steady: segs.iter().copied().fold(0.0, f64::max),
                leaders,
            });
        }
    }
    out
}

/// Best combination for one set partition: (time, candidate indices, batches).
type Best = Option<(f64, Vec<usize>, Vec<u32>)>;

fn search_partition(
    cost: &CostModel<'_>,
    lists: &[&Vec<Candidate>],
    micro_batches: u32,
    dp_memo: &mut [f64],
) -> (Best, u64) {
    let d = lists.len();
    let layers = cost.model.layers();
    if lists.iter().any(|l| l.is_empty()) || (micro_batches as usize) < d {
        return (None, 0);
    }
    let mut idx = alloc::vec![0usize; d];
    let mut best: Best = None;
    let mut evaluated = 0u64;
    let mut per_layer = alloc::vec![0.0; layers];
    let mut n = alloc::vec![1u32; d];
    loop {
        evaluated += 1;
        for (k, slot) in per_layer.iter_mut().enumerate() {
            let mask = idx
                .iter()
                .zip(lists)
                .fold(0usize, |m, (&i, l)| m | 1 << l[i].leaders[k]);
            if dp_memo[mask].is_nan() {
                let group: Vec<usize> = (0..usize::BITS as usize).filter(|b| mask >> b & 1 == 1).collect();
                dp_memo[mask] = cost.comm_dp_layer(&group);
            }
            *slot = dp_memo[mask];
        }
        let dp = idx
            .iter()
            .zip(lists)
            .flat_map(|(&i, l)| l[i].pipeline.stages.iter())
            .map(|s| per_layer[s.layer_start..s.layer_end()].iter().sum::<f64>())
            .fold(0.0, f64::max);

        n.iter_mut().for_each(|x| *x = 1);
        for _ in d as u32..micro_batches {
            let mut pick = 0;
            let mut pick_t = f64::INFINITY;
            for (p, (&i, l)) in idx.iter().zip(lists).enumerate() {
                let c = &l[i];
                let t = c.fill + n[p] as f64 * c.steady;
                if t < pick_t {
                    pick = p;
                    pick_t = t;
                }
            }
            n[pick] += 1;
        }
        let span = idx
            .iter()
            .zip(lists)
            .zip(&n)
            .map(|((&i, l), &m)| pipeline_span_of(&l[i], m))
            .fold(0.0, f64::max);
        let t = span + dp;
        if best.as_ref().map_or(true, |(bt, _, _)| t < *bt) {
            best = Some((t, idx.clone(), n.clone()));
        }

        // Odometer over candidate lists, last pipeline fastest.
        let mut pos = d;
        loop {
            if pos == 0 {
                return (best, evaluated);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < lists[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn pipeline_span_of(c: &Candidate, micro_batches: u32) -> f64 {
    c.fill + micro_batches.saturating_sub(1) as f64 * c.steady
}

/// Exhaustive minimum of the iteration time over the plan space described in
/// the module docs. Ties keep the first plan in enumeration order: micro-batch
/// sizes as configured, set partitions in restricted-growth order, then
/// candidate layouts per pipeline.
pub fn brute_force_schedule<E: Executor>(
    cluster: &ClusterSpec,
    model: &ModelSpec,
    config: &SchedulerConfig,
    limits: OracleLimits,
    executor: &E,
) -> Result<OracleResult, OracleError> {
    let plan_count = count_plans(cluster, model, config, limits)?;
    let cost = CostModel::new(cluster, model).with_state_multiplier(config.state_multiplier);
    let stages = stage_masks(cluster);
    let partitions = set_partitions(cluster.len());
    let mut best: Option<(f64, u32, Vec<Candidate>, Vec<u32>)> = None;
    let mut evaluated = 0u64;
    for &mb in &config.micro_batch_candidates {
        if config.global_batch % mb != 0 {
            continue;
        }
        let micro_batches = config.global_batch / mb;
        let mut blocks: Vec<u32> = partitions.iter().flatten().copied().collect();
        blocks.sort_unstable();
        blocks.dedup();
        let lists: Vec<Vec<Candidate>> = executor.map(blocks.clone(), |b| block_candidates(&cost, b, &stages, mb));
        let table: BTreeMap<u32, &Vec<Candidate>> = blocks.iter().copied().zip(lists.iter()).collect();
        let results = executor.map(partitions.iter().collect::<Vec<_>>(), |partition| {
            let lists: Vec<&Vec<Candidate>> = partition.iter().map(|b| table[b]).collect();
            let mut memo = alloc::vec![f64::NAN; 1 << cluster.len()];
            search_partition(&cost, &lists, micro_batches, &mut memo)
        });
        for (partition, (found, count)) in partitions.iter().zip(results) {
            evaluated += count;
            let Some((t, idx, n)) = found else { continue };
            if best.as_ref().map_or(true, |(bt, ..)| t < *bt) {
                let chosen = partition.iter().zip(&idx).map(|(b, &i)| table[b][i].clone()).collect();
                best = Some((t, mb, chosen, n));
            }
        }
    }
    let (search_time, mb, chosen, n) = best.ok_or(OracleError::NoFeasiblePlan)?;
    let pipelines = chosen
        .into_iter()
        .zip(n)
        .map(|(c, m)| PipelinePlan {
            batch_size: m * mb,
            ..c.pipeline
        })
        .collect();
    let plan = ExecutionPlan::new(pipelines, model.layers());
    let report = cost.iteration_time(&plan).map_err(|_| OracleError::NoFeasiblePlan)?;
    Ok(OracleResult {
        plan,
        report,
        search_time,
        plan_count,
        evaluated,
    })
}
