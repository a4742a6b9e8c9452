//! Random structurally valid plans for cost checks.

use hexplan_core::cluster::ClusterSpec;
use hexplan_core::cost::{ExecutionPlan, PipelinePlan, StagePlan};
use rand::seq::SliceRandom;
use rand::Rng;

/// Groups devices by machine and type, shuffles, and cuts the cluster into
/// random pipelines of random same-type stages with random layer counts.
pub fn random_plan<R: Rng>(rng: &mut R, cluster: &ClusterSpec, layers: usize) -> ExecutionPlan {
    let n = cluster.len();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for d in 0..n {
        let home = blocks.iter_mut().find(|b| {
            cluster.same_machine(b[0], d) && cluster.device(b[0]).peak_flops == cluster.device(d).peak_flops
        });
        match home {
            Some(b) => b.push(d),
            None => blocks.push(vec![d]),
        }
    }
    // Split each block into random stage-sized chunks.
    let mut stages: Vec<Vec<usize>> = Vec::new();
    for mut b in blocks {
        b.shuffle(rng);
        while !b.is_empty() {
            let take = rng.gen_range(1..=b.len());
            stages.push(b.drain(..take).collect());
        }
    }
    stages.shuffle(rng);
    let max_pipes = stages.len().min(layers.max(1)).min(4);
    let d = rng.gen_range(1..=max_pipes);
    let mut groups: Vec<Vec<Vec<usize>>> = vec![Vec::new(); d];
    for (i, s) in stages.into_iter().enumerate() {
        let g = if i < d { i } else { rng.gen_range(0..d) };
        groups[g].push(s);
    }
    let mb = [1u32, 2, 4][rng.gen_range(0..3)];
    let pipelines = groups
        .into_iter()
        .map(|mut g| {
            g.truncate(layers);
            let k = g.len();
            let mut counts = vec![1usize; k];
            for _ in k..layers {
                counts[rng.gen_range(0..k)] += 1;
            }
            let mut start = 0;
            let stages = g
                .into_iter()
                .zip(&counts)
                .map(|(devices, &c)| {
                    let s = StagePlan {
                        devices,
                        layer_start: start,
                        layer_count: c,
                    };
                    start += c;
                    s
                })
                .collect();
            PipelinePlan {
                stages,
                batch_size: mb * rng.gen_range(1..=8),
                micro_batch_size: mb,
            }
        })
        .collect();
    ExecutionPlan::new(pipelines, layers)
}
