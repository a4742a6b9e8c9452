//! Serializable plan and cost documents, manifests, and text tables.

use std::fmt::Write as _;

use hexplan_core::cluster::ClusterSpec;
use hexplan_core::cost::{CostReport, DeviceMemory, ExecutionPlan};
use hexplan_core::schedule::{IterationRecord, SchedulerConfig};
use serde::Serialize;

use crate::commands::Timing;
use crate::io::InputDigest;

/// Version recorded in every manifest.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// What produced a report. Wall-clock time is kept out so that reports are
/// byte-reproducible; it goes to the separate run record.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub inputs: Vec<InputDigest>,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, inputs: Vec<InputDigest>, seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            version: ARTIFACT_VERSION.to_string(),
            inputs,
            seed,
            config,
        }
    }
}

/// Echo of the scheduler settings plus command-specific parameters.
pub fn config_echo(config: &SchedulerConfig, extra: serde_json::Value) -> serde_json::Value {
    let mut value = serde_json::to_value(config).expect("config serializes");
    if let (Some(map), serde_json::Value::Object(more)) = (value.as_object_mut(), extra) {
        map.extend(more);
    }
    value
}

/// Wall-clock record written next to a report.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub report_sha256: String,
    pub threads: usize,
    pub wall_seconds: f64,
    pub timings: Vec<Timing>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageDoc {
    pub devices: Vec<String>,
    pub tp: usize,
    /// Half-open layer range `[start, end)`.
    pub layers: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineDoc {
    pub batch_size: u32,
    pub micro_batch_size: u32,
    pub num_micro_batches: u32,
    pub time: f64,
    pub stages: Vec<StageDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanDoc {
    pub dp_degree: usize,
    pub pipelines: Vec<PipelineDoc>,
}

impl PlanDoc {
    pub fn new(cluster: &ClusterSpec, plan: &ExecutionPlan, report: &CostReport) -> Self {
        PlanDoc {
            dp_degree: plan.dp_degree(),
            pipelines: plan
                .pipelines
                .iter()
                .zip(&report.per_pipeline_time)
                .map(|(p, &time)| PipelineDoc {
                    batch_size: p.batch_size,
                    micro_batch_size: p.micro_batch_size,
                    num_micro_batches: p.num_micro_batches(),
                    time,
                    stages: p
                        .stages
                        .iter()
                        .map(|s| StageDoc {
                            devices: s.devices.iter().map(|&d| cluster.device(d).id.clone()).collect(),
                            tp: s.tp_degree(),
                            layers: [s.layer_start, s.layer_end()],
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryDoc {
    pub device: String,
    pub bytes: f64,
    pub capacity: f64,
}

pub fn memory_docs(cluster: &ClusterSpec, memory: &[DeviceMemory]) -> Vec<MemoryDoc> {
    memory
        .iter()
        .map(|m| MemoryDoc {
            device: cluster.device(m.device).id.clone(),
            bytes: m.bytes,
            capacity: m.capacity,
        })
        .collect()
}

/// Cost breakdown of the slowest pipeline plus the data-parallel term.
/// `total` is absent when the plan does not fit in memory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostDoc {
    pub compute: f64,
    pub tp_comm: f64,
    pub dp_comm: f64,
    pub pp_comm: f64,
    pub bubble: f64,
    pub total: Option<f64>,
    pub mfu: f64,
    pub feasible: bool,
    pub per_device_memory: Vec<MemoryDoc>,
}

impl CostDoc {
    pub fn new(cluster: &ClusterSpec, report: &CostReport) -> Self {
        CostDoc {
            compute: report.compute_time,
            tp_comm: report.tp_comm_time,
            dp_comm: report.dp_comm_time,
            pp_comm: report.pp_comm_time,
            bubble: report.bubble_time,
            total: report.iteration_time.is_finite().then_some(report.iteration_time),
            mfu: report.mfu,
            feasible: report.feasible,
            per_device_memory: memory_docs(cluster, &report.per_device_memory),
        }
    }
}

/// One scheduler iteration with the rule that picked its pipeline count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceDoc {
    pub iteration: usize,
    pub dp_degree: usize,
    pub dp_rule: String,
    pub objective: String,
    pub explored: bool,
    pub iteration_best: Option<f64>,
    pub incumbent_time: Option<f64>,
    pub incumbent_mfu: f64,
    pub candidates: usize,
    pub infeasible: usize,
}

impl From<&IterationRecord> for TraceDoc {
    fn from(r: &IterationRecord) -> Self {
        TraceDoc {
            iteration: r.iteration,
            dp_degree: r.dp_degree,
            dp_rule: r.dp_rule.to_string(),
            objective: r.objective.name().to_string(),
            explored: r.explored,
            iteration_best: r.iteration_best.is_finite().then_some(r.iteration_best),
            incumbent_time: r.incumbent_time.is_finite().then_some(r.incumbent_time),
            incumbent_mfu: r.incumbent_mfu,
            candidates: r.candidates,
            infeasible: r.infeasible,
        }
    }
}

/// Serializes a report with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

/// Left-aligned text table.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &header.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    line(
        &mut out,
        &widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>(),
    );
    for row in rows {
        line(&mut out, row);
    }
    out
}

pub fn fmt_time(t: Option<f64>) -> String {
    t.map_or_else(|| "inf".to_string(), |v| format!("{v:.3}"))
}

pub fn fmt_pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

/// Per-stage plan table: pipeline, stage, devices, tp, layers, batch.
pub fn plan_table(plan: &PlanDoc) -> String {
    let mut rows = Vec::new();
    for (i, p) in plan.pipelines.iter().enumerate() {
        for (j, s) in p.stages.iter().enumerate() {
            rows.push(vec![
                i.to_string(),
                j.to_string(),
                s.devices.join(","),
                s.tp.to_string(),
                format!("{}-{}", s.layers[0], s.layers[1] - 1),
                if j == 0 { p.batch_size.to_string() } else { String::new() },
                if j == 0 { p.micro_batch_size.to_string() } else { String::new() },
                if j == 0 { format!("{:.3}", p.time) } else { String::new() },
            ]);
        }
    }
    table(
        &["pipeline", "stage", "devices", "tp", "layers", "batch", "micro", "time_s"],
        &rows,
    )
}

/// Cost breakdown rows keyed by field name.
pub fn cost_table(cost: &CostDoc) -> String {
    let rows = vec![
        vec!["compute".into(), format!("{:.3}", cost.compute)],
        vec!["tp_comm".into(), format!("{:.3}", cost.tp_comm)],
        vec!["dp_comm".into(), format!("{:.3}", cost.dp_comm)],
        vec!["pp_comm".into(), format!("{:.3}", cost.pp_comm)],
        vec!["bubble".into(), format!("{:.3}", cost.bubble)],
        vec!["total".into(), fmt_time(cost.total)],
        vec!["mfu".into(), fmt_pct(cost.mfu)],
        vec!["feasible".into(), cost.feasible.to_string()],
    ];
    table(&["field", "value"], &rows)
}

/// Per-device memory table.
pub fn memory_table(memory: &[MemoryDoc]) -> String {
    let gib = 1024.0 * 1024.0 * 1024.0;
    let rows: Vec<Vec<String>> = memory
        .iter()
        .map(|m| {
            vec![
                m.device.clone(),
                format!("{:.2}", m.bytes / gib),
                format!("{:.2}", m.capacity / gib),
                if m.bytes <= m.capacity { "ok".into() } else { "over".into() },
            ]
        })
        .collect();
    table(&["device", "used_gib", "capacity_gib", "fits"], &rows)
}
