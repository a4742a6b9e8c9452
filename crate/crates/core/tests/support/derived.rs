//! Worked cost examples: each pairs the library's value with the same
//! quantity written out as plain arithmetic.

use std::collections::BTreeMap;

use hexplan_core::cluster::{ClusterDocument, ClusterSpec, DeviceEntry, InterLinks, MachineLinks, ModelSpec};
use hexplan_core::cost::{pipeline_span, CostModel, StagePlan};
use hexplan_core::fixtures::{fig1_cluster, fig1_model};

pub struct Example {
    pub name: &'static str,
    pub library: f64,
    pub scalar: f64,
}

/// `machines[i]` devices on machine `i`, each link given in bytes/s and
/// seconds.
fn cluster(machines: &[usize], intra: (f64, f64), inter: (f64, f64), tflops: f64) -> ClusterSpec {
    let mut devices = Vec::new();
    let mut links = BTreeMap::new();
    for (m, &count) in machines.iter().enumerate() {
        let name = format!("m{m}");
        for i in 0..count {
            devices.push(DeviceEntry {
                id: format!("{name}-{i}"),
                machine: name.clone(),
                memory_gib: 80.0,
                peak_tflops: tflops,
            });
        }
        links.insert(
            name,
            MachineLinks {
                intra_bandwidth_gbps: intra.0 / 1e9,
                intra_latency_us: intra.1 * 1e6,
            },
        );
    }
    let doc = ClusterDocument {
        devices,
        machines: links,
        inter: InterLinks {
            bandwidth_gbps: inter.0 / 1e9,
            latency_us: inter.1 * 1e6,
        },
        overrides: Vec::new(),
    };
    ClusterSpec::from_document(doc).unwrap()
}

fn model(h: u32, s: u32) -> ModelSpec {
    ModelSpec {
        num_layers: 10,
        hidden_dim: h,
        seq_len: s,
        bytes_per_element: 2,
    }
}

pub fn examples() -> Vec<Example> {
    let mut out = Vec::new();
    let m4096 = model(4096, 4096);
    let act = 4096.0 * 4096.0 * 2.0;
    let grad = 12.0 * 4096.0 * 4096.0 * 2.0;

    let c = cluster(&[2], (16e9, 0.0), (1e9, 0.0), 100.0);
    out.push(Example {
        name: "tp comm, 2 devices, no latency",
        library: CostModel::new(&c, &m4096).comm_tp_layer(&[0, 1], 1),
        scalar: 12.0 * act / (2.0 * 16e9),
    });
    let c = cluster(&[2], (16e9, 1e-4), (1e9, 0.0), 100.0);
    out.push(Example {
        name: "tp comm, 2 devices, 1e-4 s latency",
        library: CostModel::new(&c, &m4096).comm_tp_layer(&[0, 1], 1),
        scalar: 12.0 * act / (2.0 * 16e9) + 12.0 * 1e-4,
    });

    let c = cluster(&[3], (1e9, 0.0), (1e9, 0.0), 100.0);
    out.push(Example {
        name: "dp comm, 2 members",
        library: CostModel::new(&c, &m4096).comm_dp_layer(&[0, 1]),
        scalar: 2.0 * grad / (2.0 * 1e9),
    });
    out.push(Example {
        name: "dp comm, 3 members",
        library: CostModel::new(&c, &m4096).comm_dp_layer(&[0, 1, 2]),
        scalar: 2.0 * 2.0 * grad / (3.0 * 1e9),
    });

    let c = cluster(&[1, 1], (1e9, 1e-4), (1e9, 1e-4), 100.0);
    out.push(Example {
        name: "pp hop to one device",
        library: CostModel::new(&c, &m4096).comm_pp_hop(&[0], &[1], 1),
        scalar: 2.0 * (1e-4 + act / 1e9),
    });
    let c = cluster(&[1, 2], (200e9, 0.0), (1e9, 0.0), 100.0);
    out.push(Example {
        name: "pp hop to two devices",
        library: CostModel::new(&c, &m4096).comm_pp_hop(&[0], &[1, 2], 1),
        scalar: 2.0 * (act / 1e9 + act / (2.0 * 200e9)),
    });

    let c = cluster(&[1], (1e9, 0.0), (1e9, 0.0), 100.0);
    let m2048 = model(2048, 2048);
    let (s, h) = (2048.0f64, 2048.0f64);
    out.push(Example {
        name: "layer compute, tp 1",
        library: CostModel::new(&c, &m2048).comp_tp_layer(&[0], 1).unwrap(),
        scalar: 96.0 * s * h * h * (1.0 + s / (6.0 * h)) / 1e14,
    });

    let fig1 = fig1_cluster();
    let fm = fig1_model();
    let cost = CostModel::new(&fig1, &fm);
    let a = cost.comp_tp_layer(&[0, 1, 2], 1).unwrap();
    let b = cost.comp_tp_layer(&[3], 1).unwrap();
    let (s, h) = (fm.seq_len as f64, fm.hidden_dim as f64);
    let flops = 96.0 * s * h * h * (1.0 + s / (6.0 * h));
    out.push(Example {
        name: "example cluster, 3xA800 stage compute",
        library: a,
        scalar: flops / (3.0 * 312e12),
    });
    out.push(Example {
        name: "example cluster, 4090 stage compute",
        library: b,
        scalar: flops / 165e12,
    });
    out.push(Example {
        name: "example cluster, A800 stage is faster",
        library: f64::from(u8::from(a < b)),
        scalar: 1.0,
    });

    out.push(Example {
        name: "pipeline span, 2 stages",
        library: pipeline_span(&[1.1, 2.0], 4),
        scalar: (1.1 + 2.0) + 3.0 * 2.0,
    });

    let c = cluster(&[4], (1e9, 0.0), (1e9, 0.0), 100.0);
    let m = ModelSpec {
        num_layers: 10,
        hidden_dim: 4096,
        seq_len: 2048,
        bytes_per_element: 2,
    };
    let stage = StagePlan {
        devices: vec![0, 1, 2, 3],
        layer_start: 0,
        layer_count: 10,
    };
    out.push(Example {
        name: "stage memory, tp 4, 10 layers",
        library: CostModel::new(&c, &m).stage_memory(stage.tp_degree(), stage.layer_count, 2),
        scalar: 4_362_076_160.0,
    });
    out
}
