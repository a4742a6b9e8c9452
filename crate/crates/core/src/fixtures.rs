//! Reference clusters and models used by tests, examples, and the CLI's
//! bundled fixture files.
//!
//! Hardware constants (dense tensor throughput at 16-bit precision with
//! 32-bit accumulation; usable memory):
//!
//! | GPU      | TFLOPS | GiB |
//! |----------|--------|-----|
//! | A800     | 312    | 80  |
//! | 4090     | 165    | 24  |
//! | 3090     | 71     | 24  |
//! | 3080 Ti  | 68     | 12  |
//!
//! Link latencies are fixed at 10 µs within a machine and 100 µs across
//! machines.
//!
//! The three-machine case-study cluster trains a 13B-parameter shape
//! (40 layers, hidden 5120) at sequence length 8192 with 2-byte elements,
//! global batch 24, micro-batch 1. Neither sequence length nor element width
//! is pinned by the original case study; these values reproduce its reported
//! iteration times within tolerance and are the documented calibration.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::cluster::{
    ClusterDocument, ClusterSpec, DeviceEntry, InterLinks, MachineLinks, ModelSpec,
};

/// GPU model constants: (name, TFLOPS, GiB).
pub const A800: (&str, f64, f64) = ("a800", 312.0, 80.0);
pub const RTX4090: (&str, f64, f64) = ("4090", 165.0, 24.0);
pub const RTX3090: (&str, f64, f64) = ("3090", 71.0, 24.0);
pub const RTX3080TI: (&str, f64, f64) = ("3080ti", 68.0, 12.0);

pub const INTRA_LATENCY_US: f64 = 10.0;
pub const INTER_LATENCY_US: f64 = 100.0;

/// One machine in a fixture: name, GPU model, device count, intra bandwidth.
pub struct MachineTemplate<'a> {
    pub name: String,
    pub gpu: (&'a str, f64, f64),
    pub count: usize,
    pub intra_gbps: f64,
}

/// Assembles a document from machine templates.
pub fn build_document(machines: &[MachineTemplate<'_>], inter_gbps: f64) -> ClusterDocument {
    let mut devices = Vec::new();
    let mut links = BTreeMap::new();
    for m in machines {
        for i in 0..m.count {
            devices.push(DeviceEntry {
                id: format!("{}-{}", m.name, i),
                machine: m.name.clone(),
                memory_gib: m.gpu.2,
                peak_tflops: m.gpu.1,
            });
        }
        links.insert(
            m.name.clone(),
            MachineLinks {
                intra_bandwidth_gbps: m.intra_gbps,
                intra_latency_us: INTRA_LATENCY_US,
            },
        );
    }
    ClusterDocument {
        devices,
        machines: links,
        inter: InterLinks {
            bandwidth_gbps: inter_gbps,
            latency_us: INTER_LATENCY_US,
        },
        overrides: Vec::new(),
    }
}

fn machine<'a>(name: &str, gpu: (&'a str, f64, f64), count: usize, intra_gbps: f64) -> MachineTemplate<'a> {
    MachineTemplate {
        name: name.to_string(),
        gpu,
        count,
        intra_gbps,
    }
}

/// Three machines: 3×A800 (200 GB/s), 3×4090 (32 GB/s), 2×3090 (16 GB/s),
/// joined by 1 GB/s.
pub fn fig1_document() -> ClusterDocument {
    build_document(
        &[
            machine("A", A800, 3, 200.0),
            machine("B", RTX4090, 3, 32.0),
            machine("C", RTX3090, 2, 16.0),
        ],
        1.0,
    )
}

pub fn fig1_cluster() -> ClusterSpec {
    ClusterSpec::from_document(fig1_document()).expect("fixture is valid")
}

/// 13B-parameter shape used with [`fig1_cluster`].
pub fn fig1_model() -> ModelSpec {
    ModelSpec {
        num_layers: 40,
        hidden_dim: 5120,
        seq_len: 8192,
        bytes_per_element: 2,
    }
}

pub const FIG1_GLOBAL_BATCH: u32 = 24;

/// 8×3080Ti, 8×3090 (24 GB/s each), 3×8×4090 (32 GB/s); 0.7 GB/s between
/// machines.
pub fn setting1_document() -> ClusterDocument {
    build_document(
        &[
            machine("m3080ti", RTX3080TI, 8, 24.0),
            machine("m3090", RTX3090, 8, 24.0),
            machine("m4090a", RTX4090, 8, 32.0),
            machine("m4090b", RTX4090, 8, 32.0),
            machine("m4090c", RTX4090, 8, 32.0),
        ],
        0.7,
    )
}

pub fn setting1_cluster() -> ClusterSpec {
    ClusterSpec::from_document(setting1_document()).expect("fixture is valid")
}

/// 7B-parameter shape (32 layers, hidden 4096).
pub fn llama7b() -> ModelSpec {
    ModelSpec {
        num_layers: 32,
        hidden_dim: 4096,
        seq_len: 4096,
        bytes_per_element: 2,
    }
}

pub const SETTING1_GLOBAL_BATCH: u32 = 512;

/// 1×8×3090, 2×4×3090 (24 GB/s), 4×8×4090 (32 GB/s), 1×8×A800 NVLink
/// (200 GB/s); 0.7 GB/s between machines. 56 GPUs.
pub fn setting3_document() -> ClusterDocument {
    build_document(
        &[
            machine("m3090x8", RTX3090, 8, 24.0),
            machine("m3090x4a", RTX3090, 4, 24.0),
            machine("m3090x4b", RTX3090, 4, 24.0),
            machine("m4090a", RTX4090, 8, 32.0),
            machine("m4090b", RTX4090, 8, 32.0),
            machine("m4090c", RTX4090, 8, 32.0),
            machine("m4090d", RTX4090, 8, 32.0),
            machine("a800", A800, 8, 200.0),
        ],
        0.7,
    )
}

pub fn setting3_cluster() -> ClusterSpec {
    ClusterSpec::from_document(setting3_document()).expect("fixture is valid")
}

/// 30B-parameter shape (60 layers, hidden 6656).
pub fn llama30b() -> ModelSpec {
    ModelSpec {
        num_layers: 60,
        hidden_dim: 6656,
        seq_len: 4096,
        bytes_per_element: 2,
    }
}

pub const SETTING3_GLOBAL_BATCH: u32 = 1024;

/// 70B-parameter shape (80 layers, hidden 8192).
pub fn llama70b() -> ModelSpec {
    ModelSpec {
        num_layers: 80,
        hidden_dim: 8192,
        seq_len: 4096,
        bytes_per_element: 2,
    }
}
