//! Random-cluster (Fortuin–Kasteleyn) model laboratory.

pub mod configuration;
pub mod critical;
pub mod error;
pub mod events;
pub mod exact;
pub mod experiments;
pub mod lattice;
pub mod sampler;
pub mod snapshot;
pub mod union_find;

pub use configuration::{BcKind, BoundaryCondition, ClusterStructure, Configuration};
pub use error::{Error, Result};
pub use exact::{Enumerator, Params};
pub use lattice::{DualMap, Family, Lattice, LatticeId, RectSpec, RectView, Size};
pub use sampler::{Kernel, MCEstimate, RunConfig};
pub use snapshot::Snapshot;
