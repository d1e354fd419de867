//! Discrete-event simulator of SACK TCP traffic carried over cell-switched
//! virtual circuits, built to study how FIFO buffer-management policies at a
//! bottleneck switch divide throughput between connections.
//!
//! The crate is organized around a deterministic event engine ([`sim`]), a
//! TCP endpoint model ([`tcp`]), frame segmentation/reassembly and VC merging
//! ([`aal5`]), shared-FIFO output ports with per-VC accounting and drop
//! policies ([`switch`]), canned topologies ([`topology`]), and throughput
//! bookkeeping plus CSV reports ([`metrics`], [`report`]).

pub mod aal5;
pub mod ids;
pub mod metrics;
pub mod net;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod switch;
pub mod tcp;
pub mod topology;

pub use ids::{ConnId, Direction, FlowId, FrameId, NodeId, PortId, VcId};
pub use net::{RunOutput, Simulation};
pub use scenario::{ScenarioError, ScenarioFile};
pub use sim::{Engine, EventHandle, RandomSource, SimTime};
pub use topology::ScenarioConfig;
