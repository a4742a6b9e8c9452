//! Straight-line reference evaluation of a plan, written from the cost
//! formulas without touching the library's cost model or link matrices.

#![allow(dead_code)]

use hexplan_core::cluster::{ClusterDocument, ModelSpec};
use hexplan_core::cost::ExecutionPlan;

pub struct Reference {
    pub iteration_time: f64,
    pub dp_time: f64,
    pub pipeline_times: Vec<f64>,
    pub feasible: bool,
    pub mfu: f64,
}

fn link(doc: &ClusterDocument, a: usize, b: usize) -> (f64, f64) {
    let (da, db) = (&doc.devices[a], &doc.devices[b]);
    for o in &doc.overrides {
        if (o.a == da.id && o.b == db.id) || (o.a == db.id && o.b == da.id) {
            return (o.bandwidth_gbps * 1e9, o.latency_us * 1e-6);
        }
    }
    if da.machine == db.machine {
        let m = &doc.machines[&da.machine];
        (m.intra_bandwidth_gbps * 1e9, m.intra_latency_us * 1e-6)
    } else {
        (doc.inter.bandwidth_gbps * 1e9, doc.inter.latency_us * 1e-6)
    }
}

fn ring(doc: &ClusterDocument, group: &[usize], payload: f64) -> f64 {
    let n = group.len() as f64;
    let mut worst: f64 = 0.0;
    for &d in group {
        let mut sum = 0.0;
        for &o in group {
            if o != d {
                let (bw, lat) = link(doc, d, o);
                sum += lat + payload / (n * bw);
            }
        }
        worst = worst.max(sum);
    }
    worst
}

fn hop(doc: &ClusterDocument, from: &[usize], to: &[usize], act: f64) -> f64 {
    let mut best = f64::INFINITY;
    for &s in from {
        for &r in to {
            let (bw, lat) = link(doc, s, r);
            let mut t = lat + act / bw;
            for &o in to {
                if o != r {
                    let (bw, lat) = link(doc, r, o);
                    t += lat + act / (to.len() as f64 * bw);
                }
            }
            best = best.min(t);
        }
    }
    2.0 * best
}

pub fn evaluate(doc: &ClusterDocument, model: &ModelSpec, plan: &ExecutionPlan, state_multiplier: f64) -> Reference {
    let h = model.hidden_dim as f64;
    let s = model.seq_len as f64;
    let b = model.bytes_per_element as f64;
    let layers = model.num_layers as usize;
    let flops = |d: usize| doc.devices[d].peak_tflops * 1e12;
    let memory = |d: usize| doc.devices[d].memory_gib * 1024.0 * 1024.0 * 1024.0;

    let mut feasible = true;
    let mut pipeline_times = Vec::new();
    for p in &plan.pipelines {
        let mb = p.micro_batch_size as f64;
        let act = mb * s * h * b;
        let n_mb = (p.batch_size / p.micro_batch_size) as f64;
        let mut segs = Vec::new();
        for (j, st) in p.stages.iter().enumerate() {
            let tp = st.devices.len() as f64;
            let comp = 96.0 * mb * s * h * h * (1.0 + s / (6.0 * h)) / (flops(st.devices[0]) * tp);
            let tp_comm = if st.devices.len() > 1 { 12.0 * ring(doc, &st.devices, act) } else { 0.0 };
            let mut seg = st.layer_count as f64 * (comp + tp_comm);
            if let Some(next) = p.stages.get(j + 1) {
                seg += hop(doc, &st.devices, &next.devices, act);
            }
            segs.push(seg);
            let bytes = st.layer_count as f64 * (48.0 * h * h * b / tp + act) * state_multiplier;
            for &d in &st.devices {
                if bytes > memory(d) {
                    feasible = false;
                }
            }
        }
        let max = segs.iter().cloned().fold(0.0, f64::max);
        pipeline_times.push(segs.iter().sum::<f64>() + (n_mb - 1.0) * max);
    }

    // Per layer: leaders of the hosting stage in each pipeline.
    let grad = 12.0 * h * h * b;
    let mut per_layer = vec![0.0; layers];
    for (k, cost) in per_layer.iter_mut().enumerate() {
        let mut members = Vec::new();
        for p in &plan.pipelines {
            for st in &p.stages {
                if st.layer_start <= k && k < st.layer_start + st.layer_count {
                    members.push(st.devices[0]);
                }
            }
        }
        *cost = if members.len() > 1 { 2.0 * ring(doc, &members, grad) } else { 0.0 };
    }
    let mut dp_time: f64 = 0.0;
    for p in &plan.pipelines {
        for st in &p.stages {
            let sum: f64 = per_layer[st.layer_start..st.layer_start + st.layer_count].iter().sum();
            dp_time = dp_time.max(sum);
        }
    }

    let span = pipeline_times.iter().cloned().fold(0.0, f64::max);
    let iteration_time = if feasible { span + dp_time } else { f64::INFINITY };
    let global: f64 = plan.pipelines.iter().map(|p| p.batch_size as f64).sum();
    let total_flops: f64 = (0..doc.devices.len()).map(flops).sum();
    let useful = 72.0 * global * s * h * h * (1.0 + s / (6.0 * h)) * layers as f64;
    let mfu = if feasible { useful / (iteration_time * total_flops) } else { 0.0 };
    Reference {
        iteration_time,
        dp_time,
        pipeline_times,
        feasible,
        mfu,
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}
