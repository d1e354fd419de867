//! Small integer identifiers shared across the simulator.

use std::fmt;

/// One TCP connection (a sender/receiver pair).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConnId(pub u32);

/// A virtual circuit as seen by a switch port. Forward data and reverse ACK
/// paths use distinct VC ids, as do the access and merged segments of a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VcId(pub u32);

/// Direction of a flow relative to its connection: data toward the sink, or
/// ACKs back toward the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Data,
    Ack,
}

/// A (connection, direction) pair; the routing key used by every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub u32);

impl FlowId {
    pub fn new(conn: ConnId, dir: Direction) -> FlowId {
        FlowId(conn.0 * 2 + if matches!(dir, Direction::Ack) { 1 } else { 0 })
    }

    pub fn conn(self) -> ConnId {
        ConnId(self.0 / 2)
    }

    pub fn dir(self) -> Direction {
        if self.0.is_multiple_of(2) {
            Direction::Data
        } else {
            Direction::Ack
        }
    }
}

/// AAL5 frame identity, unique across a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameId(pub u64);

/// Index into the simulation's node table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub u32);

/// Index into the simulation's output-port table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PortId(pub u32);

impl fmt::Display for ConnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "conn{}", self.0)
    }
}

impl fmt::Display for VcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "vc{}", self.0)
    }
}
