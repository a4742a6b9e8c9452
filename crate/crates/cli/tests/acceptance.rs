//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#[path = "../../core/tests/support/derived.rs"]
mod derived;
#[path = "../../core/tests/support/plans.rs"]
mod plans;
#[path = "../../core/tests/support/scalar.rs"]
mod scalar;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use hexplan::commands::{cmd_bandwidth_sweep, cmd_random_baseline, PlanInputs};
use hexplan::exec::PoolExecutor;
use hexplan_core::cluster::{
    ClusterDocument, ClusterSpec, DeviceEntry, InterLinks, LinkOverride, MachineLinks, ModelSpec,
};
use hexplan_core::cost::{CostModel, ExecutionPlan};
use hexplan_core::fixtures::*;
use hexplan_core::oracle::{brute_force_schedule, OracleError, OracleLimits};
use hexplan_core::schedule::{schedule, symmetric_baseline, ScheduleError, SchedulerConfig, Sequential};
use hexplan_core::synth::{large_cluster, small_instance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn executor() -> PoolExecutor {
    PoolExecutor::with_threads(0).expect("thread pool")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn cost_suite() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let examples = derived::examples();
    for e in &examples {
        let err = scalar::rel_err(e.library, e.scalar);
        worst = worst.max(err);
        if err > 1e-9 {
            failures.push(e.name.to_string());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let plans = 500;
    for seed in 0..plans {
        let inst = small_instance(seed, 8, 16);
        let plan = plans::random_plan(&mut rng, &inst.cluster, inst.model.layers());
        let got = CostModel::new(&inst.cluster, &inst.model).iteration_time(&plan).unwrap();
        let want = scalar::evaluate(inst.cluster.document(), &inst.model, &plan, 1.0);
        let mut errs = vec![scalar::rel_err(got.dp_comm_time, want.dp_time)];
        errs.extend(got.per_pipeline_time.iter().zip(&want.pipeline_times).map(|(a, b)| scalar::rel_err(*a, *b)));
        if want.feasible != got.feasible {
            failures.push(format!("feasibility of random plan {seed}"));
        } else if want.feasible {
            errs.push(scalar::rel_err(got.iteration_time, want.iteration_time));
            errs.push(scalar::rel_err(got.mfu, want.mfu));
        }
        let e = errs.into_iter().fold(0.0, f64::max);
        worst = worst.max(e);
        if e > 1e-9 {
            failures.push(format!("random plan {seed}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        failures.is_empty() && secs < 1.0,
        format!(
            "{} worked examples + {plans} random plans, worst relative error {worst:.1e}, {secs:.2} s{}",
            examples.len(),
            if failures.is_empty() { String::new() } else { format!(", mismatches: {failures:?}") }
        ),
    )
}

fn case_study() -> Verdict {
    let start = Instant::now();
    let (cluster, model) = (fig1_cluster(), fig1_model());
    let cfg = SchedulerConfig::new(FIG1_GLOBAL_BATCH);
    let s = schedule(&cluster, &model, &cfg, &executor());
    let sym = symmetric_baseline(&cluster, &model, &cfg);
    let secs = start.elapsed().as_secs_f64();
    let (Ok(s), Ok(sym)) = (s, sym) else {
        return verdict(false, "scheduler or symmetric baseline failed".into());
    };
    let Some((_, sym_report, shape)) = sym.best else {
        return verdict(false, "no feasible symmetric plan".into());
    };
    let (t_sym, t_s) = (sym_report.iteration_time, s.report.iteration_time);
    let sym_ok = (t_sym - 41.52).abs() <= 0.15 * 41.52;
    let s_ok = (t_s - 25.55).abs() <= 0.15 * 25.55;
    let speedup = t_sym / t_s;
    verdict(
        sym_ok && s_ok && speedup >= 1.5 && secs < 10.0,
        format!(
            "symmetric {t_sym:.2} s (dp {} tp {} pp {}), scheduler {t_s:.2} s, speedup {speedup:.2}x, {secs:.2} s",
            shape.dp, shape.tp, shape.pp
        ),
    )
}

fn optimality_gap() -> Verdict {
    let start = Instant::now();
    let exec = executor();
    let (mut within, mut worst, mut detail) = (0, 1.0f64, Vec::new());
    for seed in 0..20u64 {
        let inst = small_instance(seed, 5, 12);
        let cfg = SchedulerConfig::new(inst.global_batch);
        let o = brute_force_schedule(&inst.cluster, &inst.model, &cfg, OracleLimits::default(), &exec);
        let s = schedule(&inst.cluster, &inst.model, &cfg, &exec);
        match (o, s) {
            (Ok(o), Ok(s)) => {
                let r = s.report.iteration_time / o.report.iteration_time;
                worst = worst.max(r);
                if r <= 1.02 {
                    within += 1;
                } else {
                    detail.push(format!("seed {seed}: {r:.3}"));
                }
            }
            (Err(OracleError::NoFeasiblePlan), Err(ScheduleError::NoFeasiblePlan { .. })) => within += 1,
            (o, s) => {
                worst = f64::INFINITY;
                detail.push(format!("seed {seed}: oracle ok {} scheduler ok {}", o.is_ok(), s.is_ok()));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        within >= 18 && worst <= 1.10 && secs < 300.0,
        format!("{within}/20 within 2%, worst ratio {worst:.4}, {secs:.1} s {detail:?}"),
    )
}

fn partition_vs_random() -> Verdict {
    let start = Instant::now();
    let inputs = PlanInputs {
        cluster: setting3_cluster(),
        model: llama30b(),
        inputs: Vec::new(),
    };
    let cfg = SchedulerConfig::new(SETTING3_GLOBAL_BATCH);
    let out = match cmd_random_baseline(&inputs, &cfg, 20, &executor()) {
        Ok(o) => o,
        Err(e) => return verdict(false, format!("command failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let doc: serde_json::Value = serde_json::from_str(&out.json).unwrap();
    let graph = doc["summary"]["graph_mean_mfu"].as_f64().unwrap();
    let random = doc["summary"]["random_mean_mfu"].as_f64().unwrap();
    let monotone = doc["runs"].as_array().unwrap().iter().all(|r| {
        let t: Vec<f64> = r["graph"]["trace"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        t.windows(2).all(|w| w[1] >= w[0])
    });
    verdict(
        graph >= random + 0.05 && monotone && secs < 300.0,
        format!(
            "mean MFU graph {:.2}% random {:.2}% gap {:.2} points, traces non-decreasing: {monotone}, {secs:.1} s",
            100.0 * graph,
            100.0 * random,
            100.0 * (graph - random)
        ),
    )
}

fn scalability() -> Verdict {
    let cluster = large_cluster(320, 0).unwrap();
    let model = llama30b();
    let exec = executor();
    let mut runs = Vec::new();
    for seed in 0..3 {
        let cfg = SchedulerConfig {
            seed,
            ..SchedulerConfig::new(SETTING3_GLOBAL_BATCH)
        };
        let start = Instant::now();
        let mfu = schedule(&cluster, &model, &cfg, &exec).map(|s| s.report.mfu).unwrap_or(0.0);
        runs.push((mfu, start.elapsed().as_secs_f64()));
    }
    let mean = runs.iter().map(|r| r.0).sum::<f64>() / 3.0;
    let spread = runs.iter().map(|r| (r.0 - mean).abs()).fold(0.0, f64::max);
    let slowest = runs.iter().map(|r| r.1).fold(0.0, f64::max);
    verdict(
        runs.iter().all(|r| r.0 > 0.0) && spread <= 0.01 && slowest < 120.0,
        format!(
            "{} threads; MFU {} (max deviation from mean {:.2} points); slowest run {slowest:.1} s",
            exec.threads(),
            runs.iter().map(|r| format!("{:.2}%", 100.0 * r.0)).collect::<Vec<_>>().join(", "),
            100.0 * spread
        ),
    )
}

fn monotonicity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = Vec::new();
    for i in 0..100u64 {
        let inst = small_instance(5000 + i, 8, 16);
        let plan = plans::random_plan(&mut rng, &inst.cluster, inst.model.layers());
        let c = &inst.cluster;
        let time = |c: &ClusterSpec| CostModel::new(c, &inst.model).iteration_time(&plan).unwrap().unconstrained_time();
        let base = time(c);
        let a = rng.gen_range(0..c.len());
        let b = (a + rng.gen_range(1..c.len())) % c.len();
        let (bw, lat) = c.link_in_document_units(a, b);
        if time(&c.with_link(a, b, bw * 5.0, lat).unwrap()) > base {
            violations.push(format!("pair {i}: bandwidth"));
        }
        if time(&c.with_link(a, b, bw, lat * 5.0).unwrap()) < base {
            violations.push(format!("pair {i}: latency"));
        }
        if time(&c.with_compute_scaled(2.0).unwrap()) > base {
            violations.push(format!("pair {i}: compute"));
        }
    }
    let inputs = PlanInputs {
        cluster: setting1_cluster(),
        model: llama7b(),
        inputs: Vec::new(),
    };
    let cfg = SchedulerConfig::new(SETTING1_GLOBAL_BATCH);
    let sweep = cmd_bandwidth_sweep(&inputs, &cfg, &[0.5, 1.0, 5.0], &executor()).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&sweep.json).unwrap();
    let mfu: Vec<f64> = doc["rows"].as_array().unwrap().iter().map(|r| r["mfu"].as_f64().unwrap()).collect();
    let sweep_ok = mfu.windows(2).all(|w| w[1] >= w[0]);
    verdict(
        violations.is_empty() && sweep_ok,
        format!(
            "100 plan/cluster pairs, {} violations; sweep MFU {}",
            violations.len(),
            mfu.iter().map(|m| format!("{:.2}%", 100.0 * m)).collect::<Vec<_>>().join(" -> ")
        ),
    )
}

fn fuzz_case(rng: &mut ChaCha8Rng) -> (ClusterDocument, ModelSpec, SchedulerConfig) {
    let machines = rng.gen_range(1..=4);
    let mut devices = Vec::new();
    let mut links = BTreeMap::new();
    let intra_floor = rng.gen_range(1.0..400.0);
    for m in 0..machines {
        let name = format!("m{m}");
        let memory = rng.gen_range(1.0..96.0);
        let tflops = rng.gen_range(5.0..500.0);
        for i in 0..rng.gen_range(1..=4) {
            devices.push(DeviceEntry {
                id: format!("{name}-{i}"),
                machine: name.clone(),
                memory_gib: memory,
                peak_tflops: tflops,
            });
        }
        links.insert(
            name,
            MachineLinks {
                intra_bandwidth_gbps: intra_floor * rng.gen_range(1.0..2.0),
                intra_latency_us: rng.gen_range(0.0..20.0),
            },
        );
    }
    let mut overrides = Vec::new();
    if devices.len() >= 2 && rng.gen_bool(0.3) {
        let a = rng.gen_range(0..devices.len());
        let b = (a + rng.gen_range(1..devices.len())) % devices.len();
        overrides.push(LinkOverride {
            a: devices[a].id.clone(),
            b: devices[b].id.clone(),
            bandwidth_gbps: rng.gen_range(0.1..300.0),
            latency_us: rng.gen_range(0.0..200.0),
        });
    }
    let doc = ClusterDocument {
        devices,
        machines: links,
        inter: InterLinks {
            bandwidth_gbps: rng.gen_range(0.05..(intra_floor / 2.0).max(0.1)),
            latency_us: rng.gen_range(0.0..500.0),
        },
        overrides,
    };
    let model = ModelSpec {
        num_layers: rng.gen_range(1..=48),
        hidden_dim: [256, 1024, 2048, 4096, 8192, 16384][rng.gen_range(0..6)],
        seq_len: [128, 512, 2048, 8192][rng.gen_range(0..4)],
        bytes_per_element: [2, 4][rng.gen_range(0..2)],
    };
    let mut micro: Vec<u32> = [1, 2, 4, 8].into_iter().filter(|_| rng.gen_bool(0.6)).collect();
    if micro.is_empty() {
        micro.push(1);
    }
    let cfg = SchedulerConfig {
        micro_batch_candidates: micro,
        tau: rng.gen_range(1..=3),
        balance_cap: rng.gen_range(1.0..2.0),
        iterations: rng.gen_range(1..=3),
        seed: rng.gen(),
        ..SchedulerConfig::new(rng.gen_range(1..=64))
    };
    (doc, model, cfg)
}

fn structural_validity() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut plans, mut infeasible, mut bad) = (0, 0, Vec::new());
    for run in 0..1000 {
        let (doc, model, cfg) = fuzz_case(&mut rng);
        let outcome = catch_unwind(AssertUnwindSafe(|| {
            let cluster = ClusterSpec::from_document(doc.clone()).map_err(|e| format!("cluster rejected: {e}"))?;
            match schedule(&cluster, &model, &cfg, &Sequential) {
                Ok(s) => {
                    s.plan
                        .validate(&cluster, &model, Some(cfg.global_batch))
                        .map_err(|e| format!("invalid plan: {e}"))?;
                    let memory = CostModel::new(&cluster, &model).mem_check(&s.plan);
                    if !memory.feasible || !s.report.feasible {
                        return Err("plan exceeds memory".to_string());
                    }
                    Ok(true)
                }
                Err(ScheduleError::NoFeasiblePlan { .. }) => Ok(false),
                Err(e) => Err(format!("unexpected error: {e}")),
            }
        }));
        match outcome {
            Ok(Ok(true)) => plans += 1,
            Ok(Ok(false)) => infeasible += 1,
            Ok(Err(e)) => bad.push(format!("run {run}: {e}")),
            Err(_) => bad.push(format!("run {run}: panic")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    bad.truncate(5);
    verdict(
        bad.is_empty(),
        format!("{plans} valid plans, {infeasible} clean infeasible, {secs:.1} s {bad:?}"),
    )
}

fn run_cli(threads: &str, dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let (c, m) = (fixture("setting1_cluster.toml"), fixture("llama7b.toml"));
    let status = Command::new(env!("CARGO_BIN_EXE_hexplan"))
        .args(["schedule", "--cluster"])
        .arg(&c)
        .arg("--model")
        .arg(&m)
        .args(["--global-batch", "512", "--iterations", "10", "--seed", "5", "--output-dir"])
        .arg(dir)
        .env("HEXPLAN_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    ["schedule.json", "schedule.txt"]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).map(|b| (f.to_string(), b)).map_err(|e| e.to_string()))
        .collect()
}

fn determinism() -> Verdict {
    let max_threads = std::thread::available_parallelism().map_or(1, |n| n.get()).max(8).to_string();
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in ["1", max_threads.as_str(), max_threads.as_str()].iter().enumerate() {
        match run_cli(threads, &tmp.path().join(format!("run{i}"))) {
            Ok(files) => outputs.push(files),
            Err(e) => return verdict(false, format!("cli run failed: {e}")),
        }
    }
    let files_equal = outputs.windows(2).all(|w| w[0] == w[1]);

    // Several searches at once, each on its own wide pool.
    let (cluster, model) = (setting3_cluster(), llama30b());
    let cfg = SchedulerConfig {
        iterations: 10,
        seed: 9,
        ..SchedulerConfig::new(SETTING3_GLOBAL_BATCH)
    };
    let reference = schedule(&cluster, &model, &cfg, &Sequential).map(|s| format!("{:?}{:?}{:?}", s.plan, s.report, s.trace));
    let concurrent: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..4)
            .map(|_| {
                scope.spawn(|| {
                    let exec = PoolExecutor::with_threads(8).unwrap();
                    schedule(&cluster, &model, &cfg, &exec).map(|s| format!("{:?}{:?}{:?}", s.plan, s.report, s.trace))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let in_process_equal = reference.is_ok() && concurrent.iter().all(|c| *c == reference);
    verdict(
        files_equal && in_process_equal,
        format!(
            "cli files identical across 1/{max_threads}/{max_threads} threads: {files_equal}; 4 concurrent 8-thread searches match sequential: {in_process_equal}"
        ),
    )
}

/// Per pipeline: (tp degree, layer count) of each stage.
fn shape(plan: &ExecutionPlan) -> Vec<Vec<(usize, usize)>> {
    plan.pipelines
        .iter()
        .map(|p| p.stages.iter().map(|s| (s.tp_degree(), s.layer_count)).collect())
        .collect()
}

fn table3_shape() -> Verdict {
    let (cluster, model) = (setting3_cluster(), llama30b());
    let cfg = SchedulerConfig::new(SETTING3_GLOBAL_BATCH);
    let s = match schedule(&cluster, &model, &cfg, &executor()) {
        Ok(s) => s,
        Err(e) => return verdict(false, format!("schedule failed: {e}")),
    };
    let shapes = shape(&s.plan);
    let nvlink = (0..cluster.machine_count())
        .find(|&m| cluster.machine_devices(m).iter().all(|&d| cluster.device(d).peak_flops == 312e12))
        .expect("fixture has an A800 machine");
    let tp8_alone = s.plan.pipelines.iter().any(|p| {
        p.stages.len() == 1 && p.stages[0].tp_degree() == 8 && cluster.machine_of(p.stages[0].leader()) == nvlink
    });
    let others_ok = s
        .plan
        .pipelines
        .iter()
        .filter(|p| !(p.stages.len() == 1 && p.stages[0].tp_degree() == 8))
        .all(|p| p.stages.iter().all(|st| st.tp_degree() == 4 || st.tp_degree() == 2));
    let layers_ok = s
        .plan
        .pipelines
        .iter()
        .all(|p| p.stages.iter().map(|st| st.layer_count).sum::<usize>() == model.layers());
    // Expected splits per pipeline, compared after sorting stages.
    let expected: [Vec<(usize, usize)>; 3] = [
        vec![(8, 60)],
        vec![(4, 18), (4, 18), (4, 18), (2, 6)],
        vec![(4, 18), (4, 18), (2, 6), (2, 6), (2, 6), (2, 6)],
    ];
    let near = |got: &Vec<(usize, usize)>| {
        let mut g = got.clone();
        g.sort_unstable();
        expected.iter().any(|e| {
            let mut e = e.clone();
            e.sort_unstable();
            e.len() == g.len() && e.iter().zip(&g).all(|(a, b)| a.0 == b.0 && a.1.abs_diff(b.1) <= 2)
        })
    };
    let splits_ok = shapes.iter().all(near);
    verdict(
        s.plan.pipelines.len() == 4 && tp8_alone && others_ok && layers_ok && splits_ok,
        format!(
            "{} pipelines, MFU {:.2}%, (tp, layers) per stage {:?}",
            s.plan.pipelines.len(),
            100.0 * s.report.mfu,
            shapes
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("cost oracle suite", cost_suite),
        ("case study", case_study),
        ("optimality gap", optimality_gap),
        ("partitioner vs random", partition_vs_random),
        ("scalability", scalability),
        ("monotonicity", monotonicity),
        ("structural validity", structural_validity),
        ("determinism", determinism),
        ("pipeline shape on setting 3", table3_shape),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let v = match catch_unwind(check) {
            Ok(v) => v,
            Err(_) => verdict(false, "panicked".into()),
        };
        println!("{} {id}. {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
