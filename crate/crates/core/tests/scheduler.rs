use hexplan_core::cluster::{ClusterSpec, ModelSpec};
use hexplan_core::cost::{CostModel, ExecutionPlan, PipelinePlan, StagePlan};
use hexplan_core::fixtures::*;
use hexplan_core::partition::Objective;
use hexplan_core::schedule::*;

fn pipeline(stages: &[(&[usize], usize)], batch: u32, mb: u32) -> PipelinePlan {
    let mut start = 0;
    PipelinePlan {
        stages: stages
            .iter()
            .map(|&(d, c)| {
                let s = StagePlan {
                    devices: d.to_vec(),
                    layer_start: start,
                    layer_count: c,
                };
                start += c;
                s
            })
            .collect(),
        batch_size: batch,
        micro_batch_size: mb,
    }
}

#[test]
fn cut_objective_follows_the_dominant_cost() {
    let mut state = SearchState::default();
    assert_eq!(choose_cut_objective(&state), Objective::Min);
    state.iteration_index = 1;
    assert_eq!(choose_cut_objective(&state), Objective::Max);
    state.observe(10.0, 1.0, 0.5);
    assert_eq!(choose_cut_objective(&state), Objective::Min);
    state.observe(0.0, 30.0, 0.5);
    // EMA: pipeline 5, dp 15.5.
    assert_eq!(choose_cut_objective(&state), Objective::Max);
    assert_eq!(state.ema_pipeline_cost, Some(5.0));
    assert_eq!(state.ema_dp_cost, Some(15.5));
}

#[test]
fn batches_sum_to_global_and_favour_fast_pipelines() {
    let cluster = fig1_cluster();
    let model = fig1_model();
    let cost = CostModel::new(&cluster, &model);
    let layers = model.layers();
    // An A800 against a 3090: the faster pipeline should take more.
    let fast = pipeline(&[(&[0], layers)], 1, 1);
    let slow = pipeline(&[(&[6], layers)], 1, 1);
    let batches = assign_batches(&cost, &[fast.clone(), slow.clone()], 24, 2).unwrap();
    assert_eq!(batches.iter().sum::<u32>(), 24);
    assert!(batches.iter().all(|b| b % 2 == 0 && *b >= 2));
    assert!(batches[0] > batches[1]);
    let same = assign_batches(&cost, &[fast.clone(), fast.clone()], 24, 2).unwrap();
    assert_eq!(same, vec![12, 12]);
    assert!(matches!(
        assign_batches(&cost, &[fast, slow], 3, 2),
        Err(ScheduleError::GlobalBatchTooSmall)
    ));
}

#[test]
fn sweep_order_is_a_permutation() {
    for max in 1..40 {
        let mut order = dp_sweep_order(max);
        order.sort_unstable();
        assert_eq!(order, (1..=max).collect::<Vec<_>>());
    }
    assert_eq!(dp_sweep_order(4), vec![4, 2, 1, 3]);
}

#[test]
fn scheduled_plan_is_valid_and_uses_every_device() {
    let cluster = fig1_cluster();
    let model = fig1_model();
    let cfg = SchedulerConfig::new(FIG1_GLOBAL_BATCH);
    let s = schedule(&cluster, &model, &cfg, &Sequential).unwrap();
    s.plan.validate(&cluster, &model, Some(FIG1_GLOBAL_BATCH)).unwrap();
    let mut used: Vec<usize> = s.plan.devices().collect();
    used.sort_unstable();
    assert_eq!(used, (0..cluster.len()).collect::<Vec<_>>());
    assert!(s.report.feasible);
    let again = CostModel::new(&cluster, &model).iteration_time(&s.plan).unwrap();
    assert_eq!(again, s.report);
    assert_eq!(s.trace.len(), cfg.iterations);
    for w in s.trace.windows(2) {
        assert!(w[1].incumbent_time <= w[0].incumbent_time);
        assert!(w[1].incumbent_mfu >= w[0].incumbent_mfu);
    }
    assert_eq!(s.trace.last().unwrap().incumbent_time, s.report.iteration_time);
}

#[test]
fn scheduler_beats_symmetric_on_the_example_cluster() {
    let cluster = fig1_cluster();
    let model = fig1_model();
    let cfg = SchedulerConfig::new(FIG1_GLOBAL_BATCH);
    let s = schedule(&cluster, &model, &cfg, &Sequential).unwrap();
    let sym = symmetric_baseline(&cluster, &model, &cfg).unwrap();
    let (plan, report, _) = sym.best.unwrap();
    plan.validate(&cluster, &model, Some(FIG1_GLOBAL_BATCH)).unwrap();
    assert!((report.iteration_time - 41.52).abs() <= 0.15 * 41.52);
    assert!(report.iteration_time / s.report.iteration_time >= 1.5);
}

#[test]
fn runs_are_deterministic() {
    let cluster = setting1_cluster();
    let model = llama7b();
    let mut cfg = SchedulerConfig::new(SETTING1_GLOBAL_BATCH);
    cfg.iterations = 8;
    cfg.seed = 11;
    let a = schedule(&cluster, &model, &cfg, &Sequential).unwrap();
    let b = schedule(&cluster, &model, &cfg, &Sequential).unwrap();
    assert_eq!(a.plan, b.plan);
    assert_eq!(a.report, b.report);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn oversized_model_has_no_feasible_plan() {
    let cluster = fig1_cluster();
    let model = ModelSpec {
        num_layers: 8,
        hidden_dim: 65536,
        seq_len: 4096,
        bytes_per_element: 2,
    };
    let mut cfg = SchedulerConfig::new(8);
    cfg.iterations = 4;
    assert!(matches!(
        schedule(&cluster, &model, &cfg, &Sequential),
        Err(ScheduleError::NoFeasiblePlan { .. })
    ));
}

#[test]
fn invalid_configs_are_rejected() {
    let cluster = fig1_cluster();
    let model = fig1_model();
    let mut bad = Vec::new();
    let base = SchedulerConfig::new(8);
    bad.push(SchedulerConfig { global_batch: 0, ..base.clone() });
    bad.push(SchedulerConfig { tau: 0, ..base.clone() });
    bad.push(SchedulerConfig { iterations: 0, ..base.clone() });
    bad.push(SchedulerConfig { balance_cap: 0.5, ..base.clone() });
    bad.push(SchedulerConfig { ema_decay: 1.0, ..base.clone() });
    bad.push(SchedulerConfig { micro_batch_candidates: vec![0], ..base.clone() });
    for cfg in bad {
        assert!(matches!(
            schedule(&cluster, &model, &cfg, &Sequential),
            Err(ScheduleError::InvalidConfig(_))
        ));
    }
}

#[test]
fn polishing_never_slows_a_plan() {
    let cluster = fig1_cluster();
    let model = fig1_model();
    let cost = CostModel::new(&cluster, &model);
    let layers = model.layers();
    let p = pipeline(&[(&[2], 1), (&[0, 1], layers - 1)], 24, 2);
    let plan = ExecutionPlan::new(vec![p], layers);
    let report = cost.iteration_time(&plan).unwrap();
    let (polished, after) = polish_layers(&cost, plan.clone(), report.clone());
    polished.validate(&cluster, &model, Some(24)).unwrap();
    assert!(after.iteration_time <= report.iteration_time);
}

#[test]
fn random_partitioner_yields_valid_plans() {
    let cluster = setting1_cluster();
    let model = llama7b();
    let mut cfg = SchedulerConfig::new(SETTING1_GLOBAL_BATCH);
    cfg.iterations = 6;
    cfg.partitioner = Partitioner::Random;
    let s = schedule(&cluster, &model, &cfg, &Sequential).unwrap();
    s.plan.validate(&cluster, &model, Some(SETTING1_GLOBAL_BATCH)).unwrap();
}

#[test]
fn max_dp_respects_memory_and_batch() {
    let cluster: ClusterSpec = fig1_cluster();
    let model = fig1_model();
    let cost = CostModel::new(&cluster, &model);
    let cfg = SchedulerConfig::new(2);
    assert!(max_dp_degree(&cost, &cfg) <= 2);
    let cfg = SchedulerConfig::new(FIG1_GLOBAL_BATCH);
    assert!(max_dp_degree(&cost, &cfg) <= cluster.len());
}
