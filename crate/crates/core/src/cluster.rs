//! Hardware and model universe.
//!
//! A cluster is described at machine granularity: every machine carries one
//! intra-machine link class, one inter-machine class applies between machines,
//! and optional per-pair overrides refine individual links. [`ClusterSpec`]
//! expands that shorthand into dense N×N bandwidth/latency matrices in SI
//! units while keeping the canonical document so it can be written back out
//! unchanged.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Bytes per GiB.
pub const GIB: f64 = 1_073_741_824.0;
/// FLOPS per TFLOPS.
pub const TERA: f64 = 1e12;
/// Bytes/s per GB/s.
pub const GBPS: f64 = 1e9;
/// Seconds per microsecond.
pub const MICROS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("cluster has no devices")]
    Empty,
    #[error("duplicate device id `{0}`")]
    DuplicateDevice(String),
    #[error("unknown device id `{0}`")]
    UnknownDevice(String),
    #[error("device `{device}` references undefined machine `{machine}`")]
    UnknownMachine { device: String, machine: String },
    #[error("device `{0}` must have positive memory")]
    NonPositiveMemory(String),
    #[error("device `{0}` must have positive peak throughput")]
    NonPositiveFlops(String),
    #[error("non-positive bandwidth on link {0}")]
    NonPositiveBandwidth(String),
    #[error("negative latency on link {0}")]
    NegativeLatency(String),
    #[error("asymmetric bandwidth between `{0}` and `{1}`")]
    AsymmetricBandwidth(String, String),
    #[error("asymmetric latency between `{0}` and `{1}`")]
    AsymmetricLatency(String, String),
    #[error("override links device `{0}` to itself")]
    SelfLink(String),
    #[error("model field `{0}` must be a positive integer")]
    InvalidModel(&'static str),
}

/// One accelerator entry of a cluster document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEntry {
    pub id: String,
    pub machine: String,
    pub memory_gib: f64,
    pub peak_tflops: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineLinks {
    pub intra_bandwidth_gbps: f64,
    pub intra_latency_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterLinks {
    pub bandwidth_gbps: f64,
    pub latency_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkOverride {
    pub a: String,
    pub b: String,
    pub bandwidth_gbps: f64,
    pub latency_us: f64,
}

/// Machine-level cluster description, in document units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDocument {
    pub devices: Vec<DeviceEntry>,
    pub machines: BTreeMap<String, MachineLinks>,
    pub inter: InterLinks,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<LinkOverride>,
}

/// A single accelerator.
#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub id: String,
    pub machine: String,
    /// Device memory `m_d` in bytes.
    pub memory_bytes: f64,
    /// Peak tensor throughput `c_d` in FLOP/s.
    pub peak_flops: f64,
}

/// Validated cluster with dense link matrices (bytes/s and seconds).
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    document: ClusterDocument,
    devices: Vec<Device>,
    machine_names: Vec<String>,
    machine_of: Vec<usize>,
    bandwidth: Vec<f64>,
    latency: Vec<f64>,
    warnings: Vec<String>,
}

impl ClusterSpec {
    /// Expands and validates a machine-level document.
    pub fn from_document(document: ClusterDocument) -> Result<Self, ClusterError> {
        if document.devices.is_empty() {
            return Err(ClusterError::Empty);
        }
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut machine_names: Vec<String> = Vec::new();
        let mut machine_of = Vec::with_capacity(document.devices.len());
        let mut devices = Vec::with_capacity(document.devices.len());
        for (i, entry) in document.devices.iter().enumerate() {
            if index.insert(entry.id.as_str(), i).is_some() {
                return Err(ClusterError::DuplicateDevice(entry.id.clone()));
            }
            if !document.machines.contains_key(&entry.machine) {
                return Err(ClusterError::UnknownMachine {
                    device: entry.id.clone(),
                    machine: entry.machine.clone(),
                });
            }
            if !(entry.memory_gib > 0.0) || !entry.memory_gib.is_finite() {
                return Err(ClusterError::NonPositiveMemory(entry.id.clone()));
            }
            if !(entry.peak_tflops > 0.0) || !entry.peak_tflops.is_finite() {
                return Err(ClusterError::NonPositiveFlops(entry.id.clone()));
            }
            let m = match machine_names.iter().position(|n| *n == entry.machine) {
                Some(m) => m,
                None => {
                    machine_names.push(entry.machine.clone());
                    machine_names.len() - 1
                }
            };
            machine_of.push(m);
            devices.push(Device {
                id: entry.id.clone(),
                machine: entry.machine.clone(),
                memory_bytes: entry.memory_gib * GIB,
                peak_flops: entry.peak_tflops * TERA,
            });
        }

        for (name, links) in &document.machines {
            check_link(name, links.intra_bandwidth_gbps, links.intra_latency_us)?;
        }
        check_link("inter", document.inter.bandwidth_gbps, document.inter.latency_us)?;

        let n = devices.len();
        let mut bandwidth = alloc::vec![0.0; n * n];
        let mut latency = alloc::vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (bw, lat) = if machine_of[i] == machine_of[j] {
                    let links = &document.machines[&devices[i].machine];
                    (links.intra_bandwidth_gbps, links.intra_latency_us)
                } else {
                    (document.inter.bandwidth_gbps, document.inter.latency_us)
                };
                bandwidth[i * n + j] = bw * GBPS;
                latency[i * n + j] = lat * MICROS;
            }
        }

        // Overrides are directional as written; a pair given in both directions
        // must agree or the matrices would be asymmetric.
        let mut seen: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
        for o in &document.overrides {
            let a = *index
                .get(o.a.as_str())
                .ok_or_else(|| ClusterError::UnknownDevice(o.a.clone()))?;
            let b = *index
                .get(o.b.as_str())
                .ok_or_else(|| ClusterError::UnknownDevice(o.b.clone()))?;
            if a == b {
                return Err(ClusterError::SelfLink(o.a.clone()));
            }
            check_link(&format!("{}-{}", o.a, o.b), o.bandwidth_gbps, o.latency_us)?;
            let key = (a.min(b), a.max(b));
            if let Some(&(bw, lat)) = seen.get(&key) {
                if bw != o.bandwidth_gbps {
                    return Err(ClusterError::AsymmetricBandwidth(o.a.clone(), o.b.clone()));
                }
                if lat != o.latency_us {
                    return Err(ClusterError::AsymmetricLatency(o.a.clone(), o.b.clone()));
                }
            }
            seen.insert(key, (o.bandwidth_gbps, o.latency_us));
            for (x, y) in [(a, b), (b, a)] {
                bandwidth[x * n + y] = o.bandwidth_gbps * GBPS;
                latency[x * n + y] = o.latency_us * MICROS;
            }
        }

        let mut spec = ClusterSpec {
            document,
            devices,
            machine_names,
            machine_of,
            bandwidth,
            latency,
            warnings: Vec::new(),
        };
        spec.warnings = spec.topology_warnings();
        Ok(spec)
    }

    fn topology_warnings(&self) -> Vec<String> {
        let n = self.len();
        let mut max_inter = alloc::vec![0.0f64; n];
        for i in 0..n {
            for j in 0..n {
                if i != j && !self.same_machine(i, j) {
                    max_inter[i] = max_inter[i].max(self.bandwidth(i, j));
                }
            }
        }
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.same_machine(i, j) {
                    let bound = max_inter[i].max(max_inter[j]);
                    if self.bandwidth(i, j) < bound {
                        out.push(format!(
                            "intra-machine link {}-{} is slower than an inter-machine link touching it",
                            self.devices[i].id, self.devices[j].id
                        ));
                    }
                }
            }
        }
        out
    }

    /// Number of devices `N`.
    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn device(&self, d: usize) -> &Device {
        &self.devices[d]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.devices.iter().position(|d| d.id == id)
    }

    /// Bandwidth β between two devices in bytes/s; 0 on the diagonal.
    #[inline]
    pub fn bandwidth(&self, a: usize, b: usize) -> f64 {
        self.bandwidth[a * self.devices.len() + b]
    }

    /// Latency α between two devices in seconds; 0 on the diagonal.
    #[inline]
    pub fn latency(&self, a: usize, b: usize) -> f64 {
        self.latency[a * self.devices.len() + b]
    }

    #[inline]
    pub fn machine_of(&self, d: usize) -> usize {
        self.machine_of[d]
    }

    #[inline]
    pub fn same_machine(&self, a: usize, b: usize) -> bool {
        self.machine_of[a] == self.machine_of[b]
    }

    pub fn machine_count(&self) -> usize {
        self.machine_names.len()
    }

    pub fn machine_name(&self, m: usize) -> &str {
        &self.machine_names[m]
    }

    /// Devices of machine `m` in canonical order.
    pub fn machine_devices(&self, m: usize) -> Vec<usize> {
        (0..self.len()).filter(|&d| self.machine_of[d] == m).collect()
    }

    /// Aggregate peak FLOP/s over every device.
    pub fn total_flops(&self) -> f64 {
        self.devices.iter().map(|d| d.peak_flops).sum()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn document(&self) -> &ClusterDocument {
        &self.document
    }

    pub fn to_document(&self) -> ClusterDocument {
        self.document.clone()
    }

    /// Multiplies every inter-machine bandwidth, including overrides that
    /// cross machines, by `factor`.
    pub fn with_inter_bandwidth_scaled(&self, factor: f64) -> Result<Self, ClusterError> {
        let mut doc = self.document.clone();
        doc.inter.bandwidth_gbps *= factor;
        for o in &mut doc.overrides {
            let (a, b) = (self.index_of(&o.a), self.index_of(&o.b));
            if let (Some(a), Some(b)) = (a, b) {
                if !self.same_machine(a, b) {
                    o.bandwidth_gbps *= factor;
                }
            }
        }
        Self::from_document(doc)
    }

    /// Replaces the link between two devices (by index) with explicit values.
    pub fn with_link(
        &self,
        a: usize,
        b: usize,
        bandwidth_gbps: f64,
        latency_us: f64,
    ) -> Result<Self, ClusterError> {
        let mut doc = self.document.clone();
        let (ida, idb) = (self.devices[a].id.clone(), self.devices[b].id.clone());
        doc.overrides
            .retain(|o| !((o.a == ida && o.b == idb) || (o.a == idb && o.b == ida)));
        doc.overrides.push(LinkOverride {
            a: ida,
            b: idb,
            bandwidth_gbps,
            latency_us,
        });
        Self::from_document(doc)
    }

    /// Multiplies every device's peak throughput by `factor`.
    pub fn with_compute_scaled(&self, factor: f64) -> Result<Self, ClusterError> {
        let mut doc = self.document.clone();
        for d in &mut doc.devices {
            d.peak_tflops *= factor;
        }
        Self::from_document(doc)
    }

    /// Current link between two devices in document units (GB/s, µs).
    pub fn link_in_document_units(&self, a: usize, b: usize) -> (f64, f64) {
        (self.bandwidth(a, b) / GBPS, self.latency(a, b) / MICROS)
    }
}

fn check_link(name: &str, bandwidth_gbps: f64, latency_us: f64) -> Result<(), ClusterError> {
    if !(bandwidth_gbps > 0.0) || !bandwidth_gbps.is_finite() {
        return Err(ClusterError::NonPositiveBandwidth(String::from(name)));
    }
    if !(latency_us >= 0.0) || !latency_us.is_finite() {
        return Err(ClusterError::NegativeLatency(String::from(name)));
    }
    Ok(())
}

/// Transformer shape driving every cost formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// L
    pub num_layers: u32,
    /// H
    pub hidden_dim: u32,
    /// S
    pub seq_len: u32,
    /// B_type
    pub bytes_per_element: u32,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), ClusterError> {
        for (name, v) in [
            ("num_layers", self.num_layers),
            ("hidden_dim", self.hidden_dim),
            ("seq_len", self.seq_len),
            ("bytes_per_element", self.bytes_per_element),
        ] {
            if v == 0 {
                return Err(ClusterError::InvalidModel(name));
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.num_layers as usize
    }

    pub(crate) fn h(&self) -> f64 {
        self.hidden_dim as f64
    }

    pub(crate) fn s(&self) -> f64 {
        self.seq_len as f64
    }

    pub(crate) fn b(&self) -> f64 {
        self.bytes_per_element as f64
    }
}
