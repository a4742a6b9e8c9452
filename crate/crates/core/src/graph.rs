//! Weighted device graphs.

use alloc::vec::Vec;

use crate::cluster::{ClusterError, ClusterSpec};

/// Undirected weighted graph with a dense adjacency matrix.
///
/// Vertex `i` carries weight `vertex_weights[i]`; a zero matrix entry means no
/// edge. Dense storage fits the workload: device graphs are complete.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    vertex_weights: Vec<f64>,
    adjacency: Vec<f64>,
}

impl WeightedGraph {
    pub fn new(vertex_weights: Vec<f64>) -> Self {
        let n = vertex_weights.len();
        WeightedGraph {
            vertex_weights,
            adjacency: alloc::vec![0.0; n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.vertex_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertex_weights.is_empty()
    }

    pub fn vertex_weight(&self, v: usize) -> f64 {
        self.vertex_weights[v]
    }

    pub fn vertex_weights(&self) -> &[f64] {
        &self.vertex_weights
    }

    pub fn total_vertex_weight(&self) -> f64 {
        self.vertex_weights.iter().sum()
    }

    #[inline]
    pub fn weight(&self, u: usize, v: usize) -> f64 {
        self.adjacency[u * self.len() + v]
    }

    #[inline]
    pub(crate) fn row(&self, u: usize) -> &[f64] {
        let n = self.len();
        &self.adjacency[u * n..(u + 1) * n]
    }

    pub fn set_edge(&mut self, u: usize, v: usize, w: f64) {
        let n = self.len();
        self.adjacency[u * n + v] = w;
        self.adjacency[v * n + u] = w;
    }

    pub(crate) fn add_edge_weight(&mut self, u: usize, v: usize, w: f64) {
        let n = self.len();
        self.adjacency[u * n + v] += w;
        self.adjacency[v * n + u] += w;
    }

    /// Edges as `(u, v, w)` with `u < v`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.len();
        (0..n).flat_map(move |u| {
            ((u + 1)..n).filter_map(move |v| {
                let w = self.weight(u, v);
                (w > 0.0).then_some((u, v, w))
            })
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    pub fn total_edge_weight(&self) -> f64 {
        self.edges().map(|(_, _, w)| w).sum()
    }
}

/// Complete graph over a subset of cluster devices: vertex weight `c_d`,
/// edge weight `β_{d,d'}`. Local vertex `i` is device `devices[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceGraph {
    pub devices: Vec<usize>,
    pub graph: WeightedGraph,
}

impl DeviceGraph {
    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }
}

/// Builds the device graph induced by `subset` (device indices).
///
/// The subset is kept in the given order; callers pass canonical order.
pub fn build_device_graph(cluster: &ClusterSpec, subset: &[usize]) -> Result<DeviceGraph, ClusterError> {
    for &d in subset {
        if d >= cluster.len() {
            return Err(ClusterError::UnknownDevice(alloc::format!("#{d}")));
        }
    }
    let weights = subset.iter().map(|&d| cluster.device(d).peak_flops).collect();
    let mut graph = WeightedGraph::new(weights);
    for (i, &a) in subset.iter().enumerate() {
        for (j, &b) in subset.iter().enumerate().skip(i + 1) {
            graph.set_edge(i, j, cluster.bandwidth(a, b));
        }
    }
    Ok(DeviceGraph {
        devices: subset.to_vec(),
        graph,
    })
}

/// Same as [`build_device_graph`] but resolves device ids.
pub fn build_device_graph_by_id(cluster: &ClusterSpec, ids: &[&str]) -> Result<DeviceGraph, ClusterError> {
    let subset = ids
        .iter()
        .map(|id| cluster.index_of(id).ok_or_else(|| ClusterError::UnknownDevice((*id).into())))
        .collect::<Result<Vec<_>, _>>()?;
    build_device_graph(cluster, &subset)
}
