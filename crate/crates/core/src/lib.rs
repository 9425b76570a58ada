//! Dual-channel self-supervised representation learning for heterogeneous
//! graphs: masked feature and meta-path reconstruction combined with
//! cross-view contrastive learning over GCN-reaggregated views, with
//! positive-sample augmentation from meta-path connection counts and
//! clustering.

pub mod cluster;
pub mod diff;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod graph;
pub mod masking;
pub mod metapath;
pub mod objectives;
pub mod trainer;

pub use error::{Error, Result};
