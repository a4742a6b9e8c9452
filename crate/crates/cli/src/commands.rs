//! Command bodies. Each returns an [`Outcome`] whose report text depends
//! only on the inputs, seed and version.

use hexplan_core::cluster::{ClusterSpec, ModelSpec};
use hexplan_core::oracle::{brute_force_schedule, count_plans, OracleError, OracleLimits};
use hexplan_core::schedule::{
    schedule, symmetric_baseline, Executor, Partitioner, Schedule, ScheduleError, SchedulerConfig, SymmetricShape,
};
use hexplan_core::synth::large_cluster;
use serde::Serialize;

use crate::error::CliError;
use crate::io::InputDigest;
use crate::report::{
    config_echo, cost_table, fmt_pct, fmt_time, memory_docs, memory_table, plan_table, table, to_json, CostDoc,
    MemoryDoc, PlanDoc, RunManifest, TraceDoc,
};

/// Validated cluster and model with the digests of their files.
pub struct PlanInputs {
    pub cluster: ClusterSpec,
    pub model: ModelSpec,
    pub inputs: Vec<InputDigest>,
}

/// Wall time of one labelled step; kept out of reports.
#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub label: String,
    pub seconds: f64,
}

/// Result of one command.
pub struct Outcome {
    pub command: &'static str,
    /// Machine-readable report, manifest embedded.
    pub json: String,
    /// Human-readable report.
    pub table: String,
    /// True when no feasible plan was found (exit code 2).
    pub infeasible: bool,
    pub timings: Vec<Timing>,
}

fn input_error(e: ScheduleError) -> CliError {
    CliError::Invalid(e.to_string())
}

/// Runs the scheduler; `Ok(Err(..))` carries the least-violating memory
/// report of an infeasible search.
fn run_schedule<E: Executor>(
    inputs: &PlanInputs,
    config: &SchedulerConfig,
    executor: &E,
) -> Result<Result<Schedule, Option<Vec<MemoryDoc>>>, CliError> {
    match schedule(&inputs.cluster, &inputs.model, config, executor) {
        Ok(s) => Ok(Ok(s)),
        Err(ScheduleError::NoFeasiblePlan { least_violating }) => Ok(Err(
            least_violating.map(|m| memory_docs(&inputs.cluster, &m.per_device)),
        )),
        Err(e) => Err(input_error(e)),
    }
}

#[derive(Serialize)]
struct SearchDoc {
    candidates: usize,
    infeasible: usize,
    trace: Vec<TraceDoc>,
}

#[derive(Serialize)]
struct ScheduleDoc {
    manifest: RunManifest,
    status: &'static str,
    plan: Option<PlanDoc>,
    cost: Option<CostDoc>,
    least_violating_memory: Option<Vec<MemoryDoc>>,
    search: Option<SearchDoc>,
}

fn infeasible_table(least: &Option<Vec<MemoryDoc>>) -> String {
    let mut out = String::from("no feasible plan\n");
    if let Some(m) = least {
        out.push_str("\nleast-violating candidate memory\n");
        out.push_str(&memory_table(m));
    }
    out
}

pub fn cmd_schedule<E: Executor>(
    inputs: &PlanInputs,
    config: &SchedulerConfig,
    executor: &E,
) -> Result<Outcome, CliError> {
    let manifest = RunManifest::new(
        "schedule",
        inputs.inputs.clone(),
        config.seed,
        config_echo(config, serde_json::json!({})),
    );
    let (doc, text, infeasible) = match run_schedule(inputs, config, executor)? {
        Ok(s) => {
            let plan = PlanDoc::new(&inputs.cluster, &s.plan, &s.report);
            let cost = CostDoc::new(&inputs.cluster, &s.report);
            let text = format!(
                "{}\n{}\n{}",
                plan_table(&plan),
                cost_table(&cost),
                memory_table(&cost.per_device_memory)
            );
            let doc = ScheduleDoc {
                manifest,
                status: "feasible",
                plan: Some(plan),
                cost: Some(cost),
                least_violating_memory: None,
                search: Some(SearchDoc {
                    candidates: s.candidates,
                    infeasible: s.infeasible,
                    trace: s.trace.iter().map(TraceDoc::from).collect(),
                }),
            };
            (doc, text, false)
        }
        Err(least) => {
            let text = infeasible_table(&least);
            let doc = ScheduleDoc {
                manifest,
                status: "infeasible",
                plan: None,
                cost: None,
                least_violating_memory: least,
                search: None,
            };
            (doc, text, true)
        }
    };
    Ok(Outcome {
        command: "schedule",
        json: to_json(&doc),
        table: text,
        infeasible,
        timings: Vec::new(),
    })
}

#[derive(Serialize)]
struct CompareRow {
    planner: &'static str,
    total: Option<f64>,
    compute: f64,
    tp_comm: f64,
    dp_comm: f64,
    pp_comm: f64,
    bubble: f64,
    mfu: f64,
    speedup_vs_symmetric: Option<f64>,
    gap_vs_oracle: Option<f64>,
}

#[derive(Serialize)]
struct ComparePlan {
    planner: &'static str,
    plan: PlanDoc,
}

#[derive(Serialize)]
struct CompareDoc {
    manifest: RunManifest,
    rows: Vec<CompareRow>,
    symmetric_shape: Option<SymmetricShape>,
    oracle_note: Option<String>,
    plans: Vec<ComparePlan>,
}

/// Scheduler against the best symmetric plan and, when the instance is small
/// enough, the exhaustive optimum.
pub fn cmd_compare<E: Executor>(
    inputs: &PlanInputs,
    config: &SchedulerConfig,
    limits: OracleLimits,
    executor: &E,
) -> Result<Outcome, CliError> {
    let (cluster, model) = (&inputs.cluster, &inputs.model);
    let scheduled = run_schedule(inputs, config, executor)?.ok();
    let symmetric = symmetric_baseline(cluster, model, config).map_err(input_error)?;
    let (oracle, oracle_note) = match brute_force_schedule(cluster, model, config, limits, executor) {
        Ok(r) => (Some(r), None),
        Err(OracleError::NoFeasiblePlan) => (None, Some("oracle: no feasible plan".to_string())),
        Err(e @ (OracleError::ScaleExceeded { .. } | OracleError::TooManyLayers { .. })) => {
            (None, Some(format!("oracle skipped: {e}")))
        }
        Err(e) => return Err(CliError::Invalid(e.to_string())),
    };
    let mut entries = Vec::new();
    if let Some(s) = &scheduled {
        entries.push(("scheduler", &s.plan, &s.report));
    }
    if let Some((plan, report, _)) = &symmetric.best {
        entries.push(("symmetric", plan, report));
    }
    if let Some(o) = &oracle {
        entries.push(("oracle", &o.plan, &o.report));
    }
    let sym_time = symmetric.best.as_ref().map(|b| b.1.iteration_time);
    let oracle_time = oracle.as_ref().map(|o| o.report.iteration_time);
    let rows: Vec<CompareRow> = entries
        .iter()
        .map(|(name, _, r)| {
            let c = CostDoc::new(cluster, r);
            CompareRow {
                planner: name,
                total: c.total,
                compute: c.compute,
                tp_comm: c.tp_comm,
                dp_comm: c.dp_comm,
                pp_comm: c.pp_comm,
                bubble: c.bubble,
                mfu: c.mfu,
                speedup_vs_symmetric: sym_time.map(|t| t / r.iteration_time),
                gap_vs_oracle: oracle_time.map(|t| r.iteration_time / t - 1.0),
            }
        })
        .collect();
    let plans: Vec<ComparePlan> = entries
        .iter()
        .map(|(name, p, r)| ComparePlan {
            planner: name,
            plan: PlanDoc::new(cluster, p, r),
        })
        .collect();
    let mut text = table(
        &[
            "planner", "total_s", "compute", "tp_comm", "dp_comm", "pp_comm", "bubble", "mfu", "speedup", "oracle_gap",
        ],
        &rows
            .iter()
            .map(|r| {
                vec![
                    r.planner.to_string(),
                    fmt_time(r.total),
                    format!("{:.3}", r.compute),
                    format!("{:.3}", r.tp_comm),
                    format!("{:.3}", r.dp_comm),
                    format!("{:.3}", r.pp_comm),
                    format!("{:.3}", r.bubble),
                    fmt_pct(r.mfu),
                    r.speedup_vs_symmetric.map_or("-".into(), |x| format!("{x:.3}x")),
                    r.gap_vs_oracle.map_or("-".into(), fmt_pct),
                ]
            })
            .collect::<Vec<_>>(),
    );
    if scheduled.is_none() {
        text.push_str("scheduler: no feasible plan\n");
    }
    if symmetric.best.is_none() {
        text.push_str("symmetric: no feasible plan\n");
    }
    if let Some(note) = &oracle_note {
        text.push_str(note);
        text.push('\n');
    }
    for p in &plans {
        text.push_str(&format!("\n{} plan\n{}", p.planner, plan_table(&p.plan)));
    }
    let doc = CompareDoc {
        manifest: RunManifest::new(
            "compare",
            inputs.inputs.clone(),
            config.seed,
            config_echo(
                config,
                serde_json::json!({
                    "oracle_max_devices": limits.max_devices,
                    "oracle_max_layers": limits.max_layers,
                }),
            ),
        ),
        rows,
        symmetric_shape: symmetric.best.as_ref().map(|b| b.2),
        oracle_note,
        plans,
    };
    Ok(Outcome {
        command: "compare",
        json: to_json(&doc),
        table: text,
        infeasible: scheduled.is_none(),
        timings: Vec::new(),
    })
}

#[derive(Serialize)]
struct OracleDoc {
    manifest: RunManifest,
    plan_count: String,
    status: &'static str,
    evaluated: Option<u64>,
    plan: Option<PlanDoc>,
    cost: Option<CostDoc>,
}

/// Exhaustive optimum, or only the size of the plan space.
pub fn cmd_oracle<E: Executor>(
    inputs: &PlanInputs,
    config: &SchedulerConfig,
    limits: OracleLimits,
    count_only: bool,
    executor: &E,
) -> Result<Outcome, CliError> {
    let (cluster, model) = (&inputs.cluster, &inputs.model);
    let oracle_err = |e: OracleError| CliError::Invalid(e.to_string());
    let manifest = RunManifest::new(
        "oracle",
        inputs.inputs.clone(),
        config.seed,
        config_echo(
            config,
            serde_json::json!({
                "count_only": count_only,
                "oracle_max_devices": limits.max_devices,
                "oracle_max_layers": limits.max_layers,
            }),
        ),
    );
    let count = count_plans(cluster, model, config, limits).map_err(oracle_err)?;
    let mut doc = OracleDoc {
        manifest,
        // A string keeps 128-bit counts exact in JSON.
        plan_count: count.to_string(),
        status: "counted",
        evaluated: None,
        plan: None,
        cost: None,
    };
    let mut text = format!("plan space: {count} plans\n");
    let mut infeasible = false;
    if !count_only {
        match brute_force_schedule(cluster, model, config, limits, executor) {
            Ok(r) => {
                let plan = PlanDoc::new(cluster, &r.plan, &r.report);
                let cost = CostDoc::new(cluster, &r.report);
                text.push_str(&format!(
                    "evaluated: {}\n\n{}\n{}",
                    r.evaluated,
                    plan_table(&plan),
                    cost_table(&cost)
                ));
                doc.status = "feasible";
                doc.evaluated = Some(r.evaluated);
                doc.plan = Some(plan);
                doc.cost = Some(cost);
            }
            Err(OracleError::NoFeasiblePlan) => {
                text.push_str("no feasible plan\n");
                doc.status = "infeasible";
                infeasible = true;
            }
            Err(e) => return Err(oracle_err(e)),
        }
    }
    Ok(Outcome {
        command: "oracle",
        json: to_json(&doc),
        table: text,
        infeasible,
        timings: Vec::new(),
    })
}

#[derive(Serialize, Clone)]
struct VariantRun {
    final_mfu: f64,
    final_time: Option<f64>,
    candidates: usize,
    infeasible: usize,
    /// Incumbent MFU after each iteration.
    trace: Vec<f64>,
}

impl VariantRun {
    fn from_result(r: Result<Schedule, Option<Vec<MemoryDoc>>>, iterations: usize) -> Self {
        match r {
            Ok(s) => VariantRun {
                final_mfu: s.report.mfu,
                final_time: Some(s.report.iteration_time),
                candidates: s.candidates,
                infeasible: s.infeasible,
                trace: s.trace.iter().map(|t| t.incumbent_mfu).collect(),
            },
            Err(_) => VariantRun {
                final_mfu: 0.0,
                final_time: None,
                candidates: 0,
                infeasible: 0,
                trace: vec![0.0; iterations],
            },
        }
    }
}

#[derive(Serialize)]
struct RunPair {
    seed: u64,
    graph: VariantRun,
    random: VariantRun,
}

#[derive(Serialize)]
struct BaselineSummary {
    runs: usize,
    graph_mean_mfu: f64,
    random_mean_mfu: f64,
    mfu_gap: f64,
    graph_infeasible: usize,
    random_infeasible: usize,
}

#[derive(Serialize)]
struct BaselineDoc {
    manifest: RunManifest,
    summary: BaselineSummary,
    runs: Vec<RunPair>,
}

/// Seeds used by run `i` of a multi-run harness.
pub fn run_seed(base: u64, i: usize) -> u64 {
    base.wrapping_add(i as u64)
}

/// The scheduler against the same loop with random partitions, `runs`
/// seeds each.
pub fn cmd_random_baseline<E: Executor>(
    inputs: &PlanInputs,
    config: &SchedulerConfig,
    runs: usize,
    executor: &E,
) -> Result<Outcome, CliError> {
    if runs == 0 {
        return Err(CliError::Invalid("runs must be at least 1".into()));
    }
    config.validate().map_err(input_error)?;
    let tasks: Vec<(usize, Partitioner)> = (0..runs)
        .flat_map(|i| [(i, Partitioner::Graph), (i, Partitioner::Random)])
        .collect();
    let results = executor.map(tasks, |(i, partitioner)| {
        let cfg = SchedulerConfig {
            seed: run_seed(config.seed, i),
            partitioner,
            ..config.clone()
        };
        run_schedule(inputs, &cfg, executor).map(|r| VariantRun::from_result(r, config.iterations))
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let pairs: Vec<RunPair> = results
        .chunks(2)
        .enumerate()
        .map(|(i, c)| RunPair {
            seed: run_seed(config.seed, i),
            graph: c[0].clone(),
            random: c[1].clone(),
        })
        .collect();
    let mean = |f: &dyn Fn(&RunPair) -> f64| pairs.iter().map(f).sum::<f64>() / runs as f64;
    let summary = BaselineSummary {
        runs,
        graph_mean_mfu: mean(&|p| p.graph.final_mfu),
        random_mean_mfu: mean(&|p| p.random.final_mfu),
        mfu_gap: mean(&|p| p.graph.final_mfu - p.random.final_mfu),
        graph_infeasible: pairs.iter().map(|p| p.graph.infeasible).sum(),
        random_infeasible: pairs.iter().map(|p| p.random.infeasible).sum(),
    };
    let mut text = table(
        &["seed", "graph_mfu", "random_mfu", "graph_oom", "random_oom"],
        &pairs
            .iter()
            .map(|p| {
                vec![
                    p.seed.to_string(),
                    fmt_pct(p.graph.final_mfu),
                    fmt_pct(p.random.final_mfu),
                    p.graph.infeasible.to_string(),
                    p.random.infeasible.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    );
    text.push_str(&format!(
        "\nmean mfu: graph {} random {} gap {}\ninfeasible candidates: graph {} random {}\n",
        fmt_pct(summary.graph_mean_mfu),
        fmt_pct(summary.random_mean_mfu),
        fmt_pct(summary.mfu_gap),
        summary.graph_infeasible,
        summary.random_infeasible
    ));
    let doc = BaselineDoc {
        manifest: RunManifest::new(
            "random-baseline",
            inputs.inputs.clone(),
            config.seed,
            config_echo(config, serde_json::json!({ "runs": runs })),
        ),
        summary,
        runs: pairs,
    };
    Ok(Outcome {
        command: "random-baseline",
        json: to_json(&doc),
        table: text,
        infeasible: false,
        timings: Vec::new(),
    })
}

#[derive(Serialize)]
struct ScaleRow {
    gpus: usize,
    machines: usize,
    dp_degree: Option<usize>,
    iteration_time: Option<f64>,
    mfu: f64,
}

#[derive(Serialize)]
struct ScaleDoc {
    manifest: RunManifest,
    rows: Vec<ScaleRow>,
}

/// Scheduler runs on generated mixed clusters of each size. Sizes run one
/// after another so that their wall times are comparable.
pub fn cmd_scale_bench<E: Executor>(
    model: &ModelSpec,
    inputs: Vec<InputDigest>,
    config: &SchedulerConfig,
    sizes: &[usize],
    cluster_seed: u64,
    executor: &E,
) -> Result<Outcome, CliError> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(CliError::Invalid("sizes must be positive".into()));
    }
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for &n in sizes {
        let cluster = large_cluster(n, cluster_seed).map_err(|e| CliError::Invalid(e.to_string()))?;
        let start = std::time::Instant::now();
        let result = schedule(&cluster, model, config, executor);
        timings.push(Timing {
            label: format!("{n} gpus"),
            seconds: start.elapsed().as_secs_f64(),
        });
        let row = match result {
            Ok(s) => ScaleRow {
                gpus: n,
                machines: cluster.machine_count(),
                dp_degree: Some(s.plan.dp_degree()),
                iteration_time: Some(s.report.iteration_time),
                mfu: s.report.mfu,
            },
            Err(ScheduleError::NoFeasiblePlan { .. }) => ScaleRow {
                gpus: n,
                machines: cluster.machine_count(),
                dp_degree: None,
                iteration_time: None,
                mfu: 0.0,
            },
            Err(e) => return Err(input_error(e)),
        };
        rows.push(row);
    }
    let text = table(
        &["gpus", "machines", "dp", "iteration_s", "mfu"],
        &rows
            .iter()
            .map(|r| {
                vec![
                    r.gpus.to_string(),
                    r.machines.to_string(),
                    r.dp_degree.map_or("-".into(), |d| d.to_string()),
                    fmt_time(r.iteration_time),
                    fmt_pct(r.mfu),
                ]
            })
            .collect::<Vec<_>>(),
    );
    let doc = ScaleDoc {
        manifest: RunManifest::new(
            "scale-bench",
            inputs,
            config.seed,
            config_echo(
                config,
                serde_json::json!({ "sizes": sizes, "cluster_seed": cluster_seed }),
            ),
        ),
        rows,
    };
    Ok(Outcome {
        command: "scale-bench",
        json: to_json(&doc),
        table: text,
        infeasible: false,
        timings,
    })
}

#[derive(Serialize)]
struct SweepRow {
    scale: f64,
    mfu: f64,
    iteration_time: Option<f64>,
    dp_degree: Option<usize>,
    dp_comm: Option<f64>,
    /// Cut direction of the iteration that found the final plan.
    objective: Option<String>,
    /// Whether `objective` differs from the first row's.
    flipped: bool,
}

#[derive(Serialize)]
struct SweepDoc {
    manifest: RunManifest,
    rows: Vec<SweepRow>,
}

/// Cut direction of the iteration that first reached the final incumbent.
fn winning_objective(s: &Schedule) -> Option<String> {
    let best = s.report.iteration_time;
    s.trace
        .iter()
        .find(|t| t.iteration_best == best)
        .map(|t| t.objective.name().to_string())
}

/// Rescales every inter-machine bandwidth and reschedules.
pub fn cmd_bandwidth_sweep<E: Executor>(
    inputs: &PlanInputs,
    config: &SchedulerConfig,
    scales: &[f64],
    executor: &E,
) -> Result<Outcome, CliError> {
    if scales.is_empty() || scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(CliError::Invalid("scales must be positive".into()));
    }
    let clusters = scales
        .iter()
        .map(|&s| {
            inputs
                .cluster
                .with_inter_bandwidth_scaled(s)
                .map_err(|e| CliError::Invalid(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let results = executor.map(clusters.iter().collect(), |cluster| {
        schedule(cluster, &inputs.model, config, executor)
    });
    let mut rows: Vec<SweepRow> = Vec::new();
    for (&scale, result) in scales.iter().zip(results) {
        let row = match result {
            Ok(s) => SweepRow {
                scale,
                mfu: s.report.mfu,
                iteration_time: Some(s.report.iteration_time),
                dp_degree: Some(s.plan.dp_degree()),
                dp_comm: Some(s.report.dp_comm_time),
                objective: winning_objective(&s),
                flipped: false,
            },
            Err(ScheduleError::NoFeasiblePlan { .. }) => SweepRow {
                scale,
                mfu: 0.0,
                iteration_time: None,
                dp_degree: None,
                dp_comm: None,
                objective: None,
                flipped: false,
            },
            Err(e) => return Err(input_error(e)),
        };
        rows.push(row);
    }
    let first = rows[0].objective.clone();
    for r in &mut rows {
        r.flipped = r.objective.is_some() && first.is_some() && r.objective != first;
    }
    let text = table(
        &["scale", "mfu", "iteration_s", "dp", "dp_comm", "objective", "flipped"],
        &rows
            .iter()
            .map(|r| {
                vec![
                    format!("{}", r.scale),
                    fmt_pct(r.mfu),
                    fmt_time(r.iteration_time),
                    r.dp_degree.map_or("-".into(), |d| d.to_string()),
                    fmt_time(r.dp_comm),
                    r.objective.clone().unwrap_or_else(|| "-".into()),
                    r.flipped.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    );
    let doc = SweepDoc {
        manifest: RunManifest::new(
            "bandwidth-sweep",
            inputs.inputs.clone(),
            config.seed,
            config_echo(config, serde_json::json!({ "scales": scales })),
        ),
        rows,
    };
    Ok(Outcome {
        command: "bandwidth-sweep",
        json: to_json(&doc),
        table: text,
        infeasible: false,
        timings: Vec::new(),
    })
}
