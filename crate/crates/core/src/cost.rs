//! Analytic cost model: per-layer compute and communication, stage and
//! pipeline times, data-parallel synchronization, memory, and MFU.
//!
//! Every quantity is a closed form over the cluster matrices and the model
//! shape; there is no event simulation. Times are seconds, sizes bytes.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::cluster::{ClusterSpec, ModelSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CostError {
    #[error("mixed-type tensor parallel stage")]
    MixedTypeStage,
    #[error("empty device set")]
    EmptyStage,
    #[error("micro-batch size must be at least 1")]
    ZeroMicroBatch,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("plan has no pipelines")]
    NoPipelines,
    #[error("pipeline {0} has no stages")]
    NoStages(usize),
    #[error("pipeline {0} stage {1} has no devices")]
    EmptyStage(usize, usize),
    #[error("pipeline {0} stage {1} has no layers")]
    NoLayers(usize, usize),
    #[error("pipeline {0} does not cover layers 0..{1} contiguously")]
    LayerCoverage(usize, usize),
    #[error("pipeline {0}: micro-batch {1} does not divide batch {2}")]
    MicroBatch(usize, u32, u32),
    #[error("device {0} appears in more than one stage")]
    DeviceReused(usize),
    #[error("device index {0} is not in the cluster")]
    UnknownDevice(usize),
    #[error("pipeline batches sum to {0}, expected {1}")]
    GlobalBatch(u32, u32),
    #[error("pipeline {0} stage {1} mixes device types")]
    MixedType(usize, usize),
    #[error("data-parallel groups do not match the pipeline layout")]
    DpGroups,
}

/// One pipeline stage: a tensor-parallel device set and its layer range.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StagePlan {
    /// Device indices in canonical order; the first one leads the stage.
    pub devices: Vec<usize>,
    pub layer_start: usize,
    pub layer_count: usize,
}

impl StagePlan {
    pub fn tp_degree(&self) -> usize {
        self.devices.len()
    }

    pub fn layer_end(&self) -> usize {
        self.layer_start + self.layer_count
    }

    pub fn leader(&self) -> usize {
        self.devices[0]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PipelinePlan {
    pub stages: Vec<StagePlan>,
    pub batch_size: u32,
    pub micro_batch_size: u32,
}

impl PipelinePlan {
    /// `n_mb = B_i / B_mb`.
    pub fn num_micro_batches(&self) -> u32 {
        self.batch_size / self.micro_batch_size
    }

    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    pub fn devices(&self) -> impl Iterator<Item = usize> + '_ {
        self.stages.iter().flat_map(|s| s.devices.iter().copied())
    }

    /// Index of the stage hosting `layer`.
    pub fn stage_of_layer(&self, layer: usize) -> Option<usize> {
        self.stages
            .iter()
            .position(|s| layer >= s.layer_start && layer < s.layer_end())
    }

    /// Re-packs layer ranges from per-stage counts.
    pub fn set_layer_counts(&mut self, counts: &[usize]) {
        let mut start = 0;
        for (stage, &c) in self.stages.iter_mut().zip(counts) {
            stage.layer_start = start;
            stage.layer_count = c;
            start += c;
        }
    }
}

/// Devices synchronizing the gradients of one layer: the leader of the stage
/// hosting that layer in every pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DpGroup {
    pub layer_index: usize,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionPlan {
    pub pipelines: Vec<PipelinePlan>,
    pub dp_groups: Vec<DpGroup>,
}

impl ExecutionPlan {
    /// Builds a plan and derives its per-layer data-parallel groups.
    pub fn new(pipelines: Vec<PipelinePlan>, num_layers: usize) -> Self {
        let dp_groups = derive_dp_groups(&pipelines, num_layers);
        ExecutionPlan {
            pipelines,
            dp_groups,
        }
    }

    pub fn dp_degree(&self) -> usize {
        self.pipelines.len()
    }

    pub fn global_batch(&self) -> u32 {
        self.pipelines.iter().map(|p| p.batch_size).sum()
    }

    pub fn devices(&self) -> impl Iterator<Item = usize> + '_ {
        self.pipelines.iter().flat_map(|p| p.devices())
    }

    /// Checks every structural invariant of the plan.
    pub fn validate(
        &self,
        cluster: &ClusterSpec,
        model: &ModelSpec,
        global_batch: Option<u32>,
    ) -> Result<(), PlanError> {
        if self.pipelines.is_empty() {
            return Err(PlanError::NoPipelines);
        }
        let layers = model.layers();
        let mut used = alloc::vec![false; cluster.len()];
        for (i, p) in self.pipelines.iter().enumerate() {
            if p.stages.is_empty() {
                return Err(PlanError::NoStages(i));
            }
            if p.micro_batch_size == 0 || p.batch_size == 0 || p.batch_size % p.micro_batch_size != 0 {
                return Err(PlanError::MicroBatch(i, p.micro_batch_size, p.batch_size));
            }
            let mut next = 0;
            for (j, s) in p.stages.iter().enumerate() {
                if s.devices.is_empty() {
                    return Err(PlanError::EmptyStage(i, j));
                }
                if s.layer_count == 0 {
                    return Err(PlanError::NoLayers(i, j));
                }
                if s.layer_start != next {
                    return Err(PlanError::LayerCoverage(i, layers));
                }
                next = s.layer_end();
                for &d in &s.devices {
                    if d >= cluster.len() {
                        return Err(PlanError::UnknownDevice(d));
                    }
                    if core::mem::replace(&mut used[d], true) {
                        return Err(PlanError::DeviceReused(d));
                    }
                }
                let c0 = cluster.device(s.devices[0]).peak_flops;
                if s.devices.iter().any(|&d| cluster.device(d).peak_flops != c0) {
                    return Err(PlanError::MixedType(i, j));
                }
            }
            if next != layers {
                return Err(PlanError::LayerCoverage(i, layers));
            }
        }
        if let Some(b) = global_batch {
            if self.global_batch() != b {
                return Err(PlanError::GlobalBatch(self.global_batch(), b));
            }
        }
        if self.dp_groups != derive_dp_groups(&self.pipelines, layers) {
            return Err(PlanError::DpGroups);
        }
        Ok(())
    }
}

/// One group per layer; members listed in pipeline order.
pub fn derive_dp_groups(pipelines: &[PipelinePlan], num_layers: usize) -> Vec<DpGroup> {
    let mut cursor = alloc::vec![0usize; pipelines.len()];
    (0..num_layers)
        .map(|k| {
            let members = pipelines
                .iter()
                .zip(cursor.iter_mut())
                .filter_map(|(p, c)| {
                    while *c < p.stages.len() && p.stages[*c].layer_end() <= k {
                        *c += 1;
                    }
                    p.stages.get(*c).filter(|s| s.layer_start <= k).map(|s| s.leader())
                })
                .collect();
            DpGroup {
                layer_index: k,
                members,
            }
        })
        .collect()
}

/// Memory use of one device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceMemory {
    pub device: usize,
    pub bytes: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryReport {
    pub per_device: Vec<DeviceMemory>,
    pub feasible: bool,
}

impl MemoryReport {
    /// Largest overshoot ratio `bytes / capacity` over all devices.
    pub fn worst_ratio(&self) -> f64 {
        self.per_device
            .iter()
            .map(|m| m.bytes / m.capacity)
            .fold(0.0, f64::max)
    }
}

/// Simulated cost of one training iteration.
///
/// The breakdown describes the slowest pipeline: `compute + tp_comm +
/// pp_comm + bubble` equals its span, and adding `dp_comm_time` gives the
/// iteration time of a feasible plan.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub per_pipeline_time: Vec<f64>,
    pub dp_comm_time: f64,
    /// `+∞` when infeasible.
    pub iteration_time: f64,
    pub compute_time: f64,
    pub tp_comm_time: f64,
    pub pp_comm_time: f64,
    pub bubble_time: f64,
    pub per_device_memory: Vec<DeviceMemory>,
    pub feasible: bool,
    pub mfu: f64,
}

impl CostReport {
    pub fn max_pipeline_time(&self) -> f64 {
        self.per_pipeline_time.iter().copied().fold(0.0, f64::max)
    }

    /// Iteration time ignoring memory feasibility.
    pub fn unconstrained_time(&self) -> f64 {
        self.max_pipeline_time() + self.dp_comm_time
    }

    /// Orders reports by cost; infeasible reports sort after every feasible one.
    pub fn cmp_cost(&self, other: &CostReport) -> Ordering {
        match (self.feasible, other.feasible) {
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ => self.iteration_time.total_cmp(&other.iteration_time),
        }
    }
}

/// Evaluates the closed-form costs for one cluster and model.
#[derive(Debug, Clone, Copy)]
pub struct CostModel<'a> {
    pub cluster: &'a ClusterSpec,
    pub model: &'a ModelSpec,
    /// Scales the memory footprint (gradients, optimizer state); 1.0 keeps
    /// parameters plus activations only.
    pub state_multiplier: f64,
}

impl<'a> CostModel<'a> {
    pub fn new(cluster: &'a ClusterSpec, model: &'a ModelSpec) -> Self {
        CostModel {
            cluster,
            model,
            state_multiplier: 1.0,
        }
    }

    pub fn with_state_multiplier(mut self, m: f64) -> Self {
        self.state_multiplier = m;
        self
    }

    /// `B_mb·S·H·B_type`: one micro-batch of activations.
    #[inline]
    pub fn activation_bytes(&self, micro_batch: u32) -> f64 {
        micro_batch as f64 * self.model.s() * self.model.h() * self.model.b()
    }

    /// `12·H²·B_type`: one layer's gradients.
    #[inline]
    pub fn layer_gradient_bytes(&self) -> f64 {
        12.0 * self.model.h() * self.model.h() * self.model.b()
    }

    /// Ring-style all-reduce estimate: the worst member's sum of per-peer
    /// latency plus `payload / (|group|·β)`.
    fn ring_sum(&self, group: &[usize], payload: f64) -> f64 {
        let n = group.len() as f64;
        group
            .iter()
            .map(|&d| {
                group
                    .iter()
                    .filter(|&&o| o != d)
                    .map(|&o| self.cluster.latency(d, o) + payload / (n * self.cluster.bandwidth(d, o)))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Tensor-parallel communication of one layer for one micro-batch.
    pub fn comm_tp_layer(&self, devices: &[usize], micro_batch: u32) -> f64 {
        if devices.len() <= 1 {
            return 0.0;
        }
        12.0 * self.ring_sum(devices, self.activation_bytes(micro_batch))
    }

    /// Gradient synchronization of one layer across its data-parallel group.
    pub fn comm_dp_layer(&self, members: &[usize]) -> f64 {
        if members.len() <= 1 {
            return 0.0;
        }
        2.0 * self.ring_sum(members, self.layer_gradient_bytes())
    }

    /// Activation hand-off between consecutive stages (forward and backward):
    /// the cheapest sender/receiver pair plus the receiver's broadcast.
    pub fn comm_pp_hop(&self, from: &[usize], to: &[usize], micro_batch: u32) -> f64 {
        if from.is_empty() || to.is_empty() {
            return 0.0;
        }
        let act = self.activation_bytes(micro_batch);
        let n_to = to.len() as f64;
        let broadcast: Vec<f64> = to
            .iter()
            .map(|&r| {
                to.iter()
                    .filter(|&&o| o != r)
                    .map(|&o| self.cluster.latency(r, o) + act / (n_to * self.cluster.bandwidth(r, o)))
                    .sum()
            })
            .collect();
        let mut best = f64::INFINITY;
        for &s in from {
            for (&r, &bc) in to.iter().zip(&broadcast) {
                let send = self.cluster.latency(s, r) + act / self.cluster.bandwidth(s, r);
                best = best.min(send + bc);
            }
        }
        2.0 * best
    }

    /// Forward, backward and recompute FLOPs of one layer for one micro-batch.
    #[inline]
    pub fn layer_flops(&self, micro_batch: u32) -> f64 {
        let (s, h) = (self.model.s(), self.model.h());
        96.0 * micro_batch as f64 * s * h * h * (1.0 + s / (6.0 * h))
    }

    /// Compute time of one layer on a tensor-parallel stage.
    pub fn comp_tp_layer(&self, devices: &[usize], micro_batch: u32) -> Result<f64, CostError> {
        let first = *devices.first().ok_or(CostError::EmptyStage)?;
        if micro_batch == 0 {
            return Err(CostError::ZeroMicroBatch);
        }
        let c = self.cluster.device(first).peak_flops;
        if devices.iter().any(|&d| self.cluster.device(d).peak_flops != c) {
            return Err(CostError::MixedTypeStage);
        }
        Ok(self.layer_flops(micro_batch) / (c * devices.len() as f64))
    }

    /// Per-layer stage cost `comp + comm_tp`.
    pub fn layer_time(&self, devices: &[usize], micro_batch: u32) -> Result<f64, CostError> {
        Ok(self.comp_tp_layer(devices, micro_batch)? + self.comm_tp_layer(devices, micro_batch))
    }

    pub fn stage_time(&self, stage: &StagePlan, micro_batch: u32) -> Result<f64, CostError> {
        Ok(stage.layer_count as f64 * self.layer_time(&stage.devices, micro_batch)?)
    }

    /// Per-stage `stage_time + hop` terms; the last stage has no hop.
    pub fn pipeline_segments(&self, pipeline: &PipelinePlan) -> Result<Vec<f64>, CostError> {
        let mb = pipeline.micro_batch_size;
        let stages = &pipeline.stages;
        stages
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let hop = match stages.get(j + 1) {
                    Some(next) => self.comm_pp_hop(&s.devices, &next.devices, mb),
                    None => 0.0,
                };
                Ok(self.stage_time(s, mb)? + hop)
            })
            .collect()
    }

    pub fn pipeline_time(&self, pipeline: &PipelinePlan) -> Result<f64, CostError> {
        let segs = self.pipeline_segments(pipeline)?;
        Ok(pipeline_span(&segs, pipeline.num_micro_batches()))
    }

    /// Bytes per device of a stage holding `layers` layers at tensor degree `tp`.
    pub fn stage_memory(&self, tp: usize, layers: usize, micro_batch: u32) -> f64 {
        let (h, b) = (self.model.h(), self.model.b());
        let per_layer = 48.0 * h * h * b / tp as f64 + self.activation_bytes(micro_batch);
        layers as f64 * per_layer * self.state_multiplier
    }

    /// Most layers a stage over `devices` can hold without exceeding memory.
    pub fn max_layers_in_memory(&self, devices: &[usize], micro_batch: u32) -> usize {
        let cap = devices
            .iter()
            .map(|&d| self.cluster.device(d).memory_bytes)
            .fold(f64::INFINITY, f64::min);
        let per_layer = self.stage_memory(devices.len(), 1, micro_batch);
        let fit = cap / per_layer;
        if fit >= self.model.layers() as f64 {
            self.model.layers()
        } else {
            fit as usize
        }
    }

    pub fn mem_check(&self, plan: &ExecutionPlan) -> MemoryReport {
        let mut per_device = Vec::new();
        for p in &plan.pipelines {
            for s in &p.stages {
                let bytes = self.stage_memory(s.tp_degree(), s.layer_count, p.micro_batch_size);
                for &d in &s.devices {
                    per_device.push(DeviceMemory {
                        device: d,
                        bytes,
                        capacity: self.cluster.device(d).memory_bytes,
                    });
                }
            }
        }
        per_device.sort_by_key(|m| m.device);
        let feasible = per_device.iter().all(|m| m.bytes <= m.capacity);
        MemoryReport {
            per_device,
            feasible,
        }
    }

    /// Per-layer data-parallel cost, one entry per group of the plan.
    pub fn dp_layer_costs(&self, plan: &ExecutionPlan) -> Vec<f64> {
        let mut out = Vec::with_capacity(plan.dp_groups.len());
        let mut last: Option<(&[usize], f64)> = None;
        for g in &plan.dp_groups {
            let cost = match last {
                Some((members, c)) if members == g.members.as_slice() => c,
                _ => self.comm_dp_layer(&g.members),
            };
            last = Some((&g.members, cost));
            out.push(cost);
        }
        out
    }

    /// Data-parallel synchronization, bounded by the stage whose layers take
    /// longest to synchronize.
    pub fn comm_dp(&self, plan: &ExecutionPlan) -> f64 {
        let per_layer = self.dp_layer_costs(plan);
        stage_dp_max(plan, &per_layer)
    }

    /// Full evaluation of a structurally valid plan.
    pub fn iteration_time(&self, plan: &ExecutionPlan) -> Result<CostReport, CostError> {
        let memory = self.mem_check(plan);
        let dp = self.comm_dp(plan);

        let mut per_pipeline_time = Vec::with_capacity(plan.pipelines.len());
        let mut slowest: Option<(usize, Vec<f64>)> = None;
        for (i, p) in plan.pipelines.iter().enumerate() {
            let segs = self.pipeline_segments(p)?;
            let t = pipeline_span(&segs, p.num_micro_batches());
            let replace = match &slowest {
                None => true,
                Some((s, _)) => t > per_pipeline_time[*s],
            };
            if replace {
                slowest = Some((i, segs));
            }
            per_pipeline_time.push(t);
        }

        let (mut compute, mut tp, mut pp, mut bubble) = (0.0, 0.0, 0.0, 0.0);
        if let Some((i, segs)) = slowest {
            let p = &plan.pipelines[i];
            let n = p.num_micro_batches() as f64;
            let b = argmax(&segs);
            let stage = &p.stages[b];
            let layers = stage.layer_count as f64;
            compute = n * layers * self.comp_tp_layer(&stage.devices, p.micro_batch_size)?;
            tp = n * layers * self.comm_tp_layer(&stage.devices, p.micro_batch_size);
            pp = n * (segs[b] - self.stage_time(stage, p.micro_batch_size)?);
            bubble = per_pipeline_time[i] - n * segs[b];
        }

        let span = per_pipeline_time.iter().copied().fold(0.0, f64::max);
        let mut report = CostReport {
            per_pipeline_time,
            dp_comm_time: dp,
            iteration_time: if memory.feasible { span + dp } else { f64::INFINITY },
            compute_time: compute,
            tp_comm_time: tp,
            pp_comm_time: pp,
            bubble_time: bubble,
            per_device_memory: memory.per_device,
            feasible: memory.feasible,
            mfu: 0.0,
        };
        report.mfu = self.mfu(plan, &report);
        Ok(report)
    }

    /// Forward plus backward FLOPs of one full iteration; recomputation is
    /// not counted as useful work.
    pub fn useful_flops(&self, global_batch: u32) -> f64 {
        let (s, h) = (self.model.s(), self.model.h());
        72.0 * global_batch as f64 * s * h * h * (1.0 + s / (6.0 * h)) * self.model.layers() as f64
    }

    /// Model FLOPS utilization against the aggregate peak of every device.
    pub fn mfu(&self, plan: &ExecutionPlan, report: &CostReport) -> f64 {
        if !report.feasible || !(report.iteration_time > 0.0) || !report.iteration_time.is_finite() {
            return 0.0;
        }
        self.useful_flops(plan.global_batch()) / (report.iteration_time * self.cluster.total_flops())
    }
}

/// `Σ_j seg_j + (n_mb − 1)·max_j seg_j`.
pub fn pipeline_span(segments: &[f64], num_micro_batches: u32) -> f64 {
    let fill: f64 = segments.iter().sum();
    let steady = segments.iter().copied().fold(0.0, f64::max);
    fill + (num_micro_batches.saturating_sub(1)) as f64 * steady
}

/// Max over stages of the summed per-layer data-parallel cost.
pub fn stage_dp_max(plan: &ExecutionPlan, per_layer: &[f64]) -> f64 {
    plan.pipelines
        .iter()
        .flat_map(|p| p.stages.iter())
        .map(|s| per_layer[s.layer_start..s.layer_end()].iter().sum::<f64>())
        .fold(0.0, f64::max)
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
