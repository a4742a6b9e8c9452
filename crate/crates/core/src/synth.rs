//! Seeded synthetic clusters: large mixed clusters for scale runs and small
//! random instances for exhaustive comparison.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster::{ClusterDocument, ClusterError, ClusterSpec, ModelSpec};
use crate::cost::CostModel;
use crate::fixtures::{build_document, MachineTemplate, A800, RTX3080TI, RTX3090, RTX4090};

/// Machine shapes of the large mixed cluster with the share of GPUs each
/// contributes: (GPU, devices per machine, intra GB/s, GPU share).
/// Shares follow a 240-GPU reference mix of 5×8×3090, 6×4×3090, 20×8×4090
/// and 2×8×A800.
pub const LARGE_MIX: [((&str, f64, f64), usize, f64, f64); 4] = [
    (RTX3090, 8, 24.0, 40.0 / 240.0),
    (RTX3090, 4, 24.0, 24.0 / 240.0),
    (RTX4090, 8, 32.0, 160.0 / 240.0),
    (A800, 8, 200.0, 16.0 / 240.0),
];

/// Inter-machine bandwidth of the large mixed cluster, GB/s.
pub const LARGE_INTER_GBPS: f64 = 0.7;

/// Draws machines from [`LARGE_MIX`] until `num_gpus` devices exist. Each
/// draw picks a shape with probability proportional to its GPU share divided
/// by its size (so the expected GPU mix matches the shares), restricted to
/// shapes that still fit; a remainder below 4 devices becomes one small
/// 3090 machine.
pub fn large_cluster_document(num_gpus: usize, seed: u64) -> ClusterDocument {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut machines = Vec::new();
    let mut left = num_gpus;
    while left > 0 {
        let fitting: Vec<usize> = (0..LARGE_MIX.len()).filter(|&i| LARGE_MIX[i].1 <= left).collect();
        let (gpu, count, intra) = if fitting.is_empty() {
            (RTX3090, left, 24.0)
        } else {
            let pick = *fitting
                .choose_weighted(&mut rng, |&i| LARGE_MIX[i].3 / LARGE_MIX[i].1 as f64)
                .expect("weights are positive");
            let (gpu, count, intra, _) = LARGE_MIX[pick];
            (gpu, count, intra)
        };
        machines.push(MachineTemplate {
            name: format!("m{:03}-{}x{}", machines.len(), count, gpu.0),
            gpu,
            count,
            intra_gbps: intra,
        });
        left -= count;
    }
    build_document(&machines, LARGE_INTER_GBPS)
}

pub fn large_cluster(num_gpus: usize, seed: u64) -> Result<ClusterSpec, ClusterError> {
    ClusterSpec::from_document(large_cluster_document(num_gpus, seed))
}

/// A small random instance for exhaustive comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallInstance {
    pub cluster: ClusterSpec,
    pub model: ModelSpec,
    pub global_batch: u32,
}

/// GPU types for small instances with their intra-machine bandwidth, GB/s.
const SMALL_GPUS: [((&str, f64, f64), f64); 4] = [(A800, 200.0), (RTX4090, 32.0), (RTX3090, 16.0), (RTX3080TI, 24.0)];

/// Random cluster of 2..=`max_devices` GPUs on 1..=3 machines, random
/// inter-machine bandwidth in [0.5, 10] GB/s, and a random model of
/// 2..=`max_layers` layers whose width shrinks until two full copies fit the
/// cluster's total memory.
pub fn small_instance(seed: u64, max_devices: usize, max_layers: usize) -> SmallInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_devices.max(2));
    let machines = rng.gen_range(1..=n.min(3));
    // Random composition of n into `machines` positive sizes.
    let mut cuts: Vec<usize> = (1..n).collect();
    cuts.shuffle(&mut rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(machines - 1).collect();
    cuts.sort_unstable();
    cuts.push(n);
    let mut templates = Vec::new();
    let mut prev = 0;
    for (i, &c) in cuts.iter().enumerate() {
        let (gpu, intra) = SMALL_GPUS[rng.gen_range(0..SMALL_GPUS.len())];
        templates.push(MachineTemplate {
            name: format!("s{i}"),
            gpu,
            count: c - prev,
            intra_gbps: intra,
        });
        prev = c;
    }
    let inter = rng.gen_range(0.5..10.0);
    let doc = build_document(&templates, inter);
    let cluster = ClusterSpec::from_document(doc).expect("generated document is valid");
    let hidden_options = [1024, 2048, 4096];
    let mut model = ModelSpec {
        num_layers: rng.gen_range(2..=max_layers.max(2)) as u32,
        hidden_dim: hidden_options[rng.gen_range(0..hidden_options.len())],
        seq_len: [1024, 2048, 4096][rng.gen_range(0..3)],
        bytes_per_element: 2,
    };
    // Shrink the width until two full copies fit in total memory.
    let total: f64 = cluster.devices().iter().map(|d| d.memory_bytes).sum();
    while model.hidden_dim > hidden_options[0]
        && 2.0 * CostModel::new(&cluster, &model).stage_memory(1, model.layers(), 1) > total
    {
        model.hidden_dim /= 2;
    }
    SmallInstance {
        cluster,
        model,
        global_batch: [8, 16][rng.gen_range(0..2)],
    }
}
