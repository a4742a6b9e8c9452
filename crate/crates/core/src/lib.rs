//! Planning engine for asymmetric data/pipeline/tensor parallel training on
//! heterogeneous GPU clusters.
//!
//! The crate is `no_std` (with `alloc`): it holds the cluster model, the
//! analytic cost model, the multilevel graph partitioner, pipeline layout,
//! the iterative scheduler, the symmetric baseline, and the exhaustive
//! oracle. File formats, reports, and the CLI live in the `hexplan` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod cluster;
pub mod cost;
pub mod fixtures;
pub mod graph;
pub mod layout;
pub mod oracle;
pub mod partition;
pub mod schedule;
pub mod synth;
