//! Canned network layouts. Both are dumbbells around one bottleneck link:
//! either every connection rides its own virtual circuit end to end, or
//! connections are merged in groups onto shared circuits at edge devices
//! feeding the first switch and split apart again at the second.

use crate::aal5::{MergeScheduler, Reassembler};
use crate::ids::{ConnId, Direction, FlowId, NodeId, PortId, VcId};
use crate::net::{
    ConnState, LinkParams, MergeUnit, Node, Port, PortKind, RouteAction, Simulation, World,
};
use crate::sim::SimTime;
use crate::switch::{DropPolicy, FifoPort, PortConfig};
use crate::tcp::{TcpConfig, TcpReceiver, TcpSender};

/// Which dumbbell variant to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    /// One circuit per connection, all policed individually at the
    /// bottleneck.
    PerConnVc,
    /// Connections merged in groups onto shared circuits at the first
    /// switch; the bottleneck polices the merged circuits.
    MergedVc,
}

/// A fully resolved scenario: everything a build needs, nothing optional.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub kind: TopologyKind,
    pub n_conns: u32,
    /// Connections per bottleneck circuit (1 unless merging).
    pub conns_per_vc: u32,
    /// Per-circuit fair-share thresholds at the bottleneck, in cells; one
    /// entry per bottleneck account.
    pub thresholds_cells: Vec<u64>,
    /// Per-circuit drop-probability weights (probabilistic policy only).
    pub weights: Vec<f64>,
    pub policy: DropPolicy,
    /// Bottleneck buffer capacity in cells.
    pub capacity_cells: u64,
    /// Global congestion threshold in cells (probabilistic policy).
    pub congestion_threshold_cells: u64,
    /// Discard-band width multiplier (probabilistic policy).
    pub occupancy_scale: f64,
    pub tag_sensitive: bool,
    pub mss: u64,
    pub rcv_wnd: u64,
    pub delayed_ack: bool,
    /// Largest frame payload a circuit carries.
    pub max_frame_bytes: u64,
    /// Sender-side dropper: suppress one segment whenever the congestion
    /// window reaches this many bytes.
    pub cwnd_drop_threshold: Option<u64>,
    pub link_rate_bps: u64,
    pub access_prop: SimTime,
    pub backbone_prop: SimTime,
    pub duration: SimTime,
    pub warmup_frac: f64,
    pub seed: u64,
    pub sample_interval: SimTime,
    pub start_stagger: SimTime,
    pub rto_min: SimTime,
    pub rto_granularity: SimTime,
    pub initial_window_segments: u64,
}

impl ScenarioConfig {
    pub fn tcp_config(&self) -> TcpConfig {
        TcpConfig {
            mss: self.mss,
            rcv_wnd: self.rcv_wnd,
            delayed_ack: self.delayed_ack,
            rto_min: self.rto_min,
            rto_granularity: self.rto_granularity,
            initial_window_segments: self.initial_window_segments,
        }
    }

    /// Build the network this scenario describes.
    pub fn build(&self) -> Simulation {
        match self.kind {
            TopologyKind::PerConnVc => build_per_conn_vc(self),
            TopologyKind::MergedVc => build_merged_vc(self),
        }
    }
}

/// Buffer size used for every queue the experiment is not about.
const PLAIN_CAPACITY: u64 = 1 << 40;

fn plain_fifo(vc_base: u32, accounts: usize, link: LinkParams, dst: NodeId) -> Port {
    let mut fifo = FifoPort::new(
        PortConfig {
            capacity_cells: PLAIN_CAPACITY,
            congestion_threshold_cells: PLAIN_CAPACITY,
            occupancy_scale: 2.0,
            tag_sensitive: false,
            policy: DropPolicy::Off,
        },
        &vec![0; accounts],
        &vec![1.0; accounts],
    );
    fifo.set_vc_base(vc_base);
    Port::new(PortKind::Fifo(fifo), link, dst)
}

fn bottleneck_fifo(cfg: &ScenarioConfig, vc_base: u32, link: LinkParams, dst: NodeId) -> Port {
    let mut fifo = FifoPort::new(
        PortConfig {
            capacity_cells: cfg.capacity_cells,
            congestion_threshold_cells: cfg.congestion_threshold_cells,
            occupancy_scale: cfg.occupancy_scale,
            tag_sensitive: cfg.tag_sensitive,
            policy: cfg.policy,
        },
        &cfg.thresholds_cells,
        &cfg.weights,
    );
    fifo.set_vc_base(vc_base);
    Port::new(PortKind::Fifo(fifo), link, dst)
}

fn adapter(link: LinkParams, dst: NodeId) -> Port {
    Port::new(PortKind::Adapter(MergeScheduler::new(1)), link, dst)
}

fn empty_routes(n_conns: u32) -> Vec<Option<RouteAction>> {
    vec![None; 2 * n_conns as usize]
}

fn data_flow(conn: u32) -> usize {
    FlowId::new(ConnId(conn), Direction::Data).0 as usize
}

fn ack_flow(conn: u32) -> usize {
    FlowId::new(ConnId(conn), Direction::Ack).0 as usize
}

fn conn_state(
    cfg: &ScenarioConfig,
    conn: u32,
    fwd_vc: u32,
    rev_vc: u32,
    src_port: u32,
    sink_port: u32,
) -> ConnState {
    ConnState::new(
        TcpSender::new(ConnId(conn), cfg.tcp_config()),
        TcpReceiver::new(ConnId(conn), cfg.delayed_ack),
        VcId(fwd_vc),
        VcId(rev_vc),
        PortId(src_port),
        PortId(sink_port),
        cfg.cwnd_drop_threshold,
    )
}

/// Dumbbell with one circuit per connection.
///
/// Node/port layout for N connections (all links run at the same rate;
/// access links have microsecond propagation, the middle link carries the
/// long haul):
///
/// ```text
/// hosts 0..N --(access)--> SW1 ==(bottleneck FIFO, policed)==> SW2 --(access)--> sinks
///   acks flow back through SW2's reverse FIFO and SW1's per-host ports
/// ```
///
/// Circuit ids: forward = conn, reverse = N + conn.
fn build_per_conn_vc(cfg: &ScenarioConfig) -> Simulation {
    let n = cfg.n_conns;
    assert_eq!(cfg.conns_per_vc, 1, "per-connection circuits cannot share");
    assert_eq!(cfg.thresholds_cells.len() as u32, n);

    let src_host = |i: u32| NodeId(i);
    let sw1 = NodeId(n);
    let sw2 = NodeId(n + 1);
    let sink_host = |i: u32| NodeId(n + 2 + i);

    // Port ids, in construction order.
    let src_nic = |i: u32| i;
    let sw1_fwd = n;
    let sw2_fwd = |i: u32| n + 1 + i;
    let sink_nic = |i: u32| 2 * n + 1 + i;
    let sw2_rev = 3 * n + 1;
    let sw1_rev = |i: u32| 3 * n + 2 + i;

    let access = LinkParams::new(cfg.link_rate_bps, cfg.access_prop);
    let backbone = LinkParams::new(cfg.link_rate_bps, cfg.backbone_prop);

    let mut ports = Vec::new();
    for _ in 0..n {
        ports.push(adapter(access.clone(), sw1));
    }
    ports.push(bottleneck_fifo(cfg, 0, backbone.clone(), sw2));
    for i in 0..n {
        ports.push(plain_fifo(i, 1, access.clone(), sink_host(i)));
    }
    for _ in 0..n {
        ports.push(adapter(access.clone(), sw2));
    }
    ports.push(plain_fifo(n, n as usize, backbone, sw1));
    for i in 0..n {
        ports.push(plain_fifo(n + i, 1, access.clone(), src_host(i)));
    }
    assert_eq!(ports.len() as u32, 4 * n + 2);

    let mut nodes: Vec<Node> = (0..2 * n + 2)
        .map(|_| Node {
            routes: empty_routes(n),
            merge: None,
        })
        .collect();

    for i in 0..n {
        nodes[src_host(i).0 as usize].routes[ack_flow(i)] =
            Some(RouteAction::DeliverAck(ConnId(i)));
        nodes[sw1.0 as usize].routes[data_flow(i)] = Some(RouteAction::Forward {
            port: PortId(sw1_fwd),
            restamp: None,
        });
        nodes[sw1.0 as usize].routes[ack_flow(i)] = Some(RouteAction::Forward {
            port: PortId(sw1_rev(i)),
            restamp: None,
        });
        nodes[sw2.0 as usize].routes[data_flow(i)] = Some(RouteAction::Forward {
            port: PortId(sw2_fwd(i)),
            restamp: None,
        });
        nodes[sw2.0 as usize].routes[ack_flow(i)] = Some(RouteAction::Forward {
            port: PortId(sw2_rev),
            restamp: None,
        });
        nodes[sink_host(i).0 as usize].routes[data_flow(i)] =
            Some(RouteAction::DeliverData(ConnId(i)));
    }

    let conns = (0..n)
        .map(|i| conn_state(cfg, i, i, n + i, src_nic(i), sink_nic(i)))
        .collect();

    let members = (0..n).map(|i| vec![i]).collect();
    Simulation::new(World::new(
        cfg.clone(),
        nodes,
        ports,
        conns,
        PortId(sw1_fwd),
        0,
        members,
    ))
}

/// Dumbbell with connections merged onto shared circuits.
///
/// Each group of senders hangs off its own edge device, which reassembles
/// the per-connection frames and re-emits them, whole, on the group's merged
/// circuit over a paced uplink (frame-level store and forward, so merged
/// circuits never interleave frames and the backbone switch sees cells at
/// line rate, not bursts). The backbone bottleneck polices the merged
/// circuits; the second switch splits cells back out by connection. ACKs
/// merge in reverse at the far switch.
///
/// Circuit ids for N connections in G groups: forward per-conn = conn,
/// forward merged = N + group, reverse per-conn = N + G + conn, reverse
/// merged = 2N + G + group.
fn build_merged_vc(cfg: &ScenarioConfig) -> Simulation {
    let n = cfg.n_conns;
    let per = cfg.conns_per_vc;
    assert!(
        per > 1,
        "merged circuits need at least two connections each"
    );
    assert_eq!(n % per, 0, "group size must divide the connection count");
    let g = n / per;
    assert_eq!(cfg.thresholds_cells.len() as u32, g);
    let group_of = |conn: u32| conn / per;

    let fwd_merged_base = n;
    let rev_conn_base = n + g;
    let rev_merged_base = 2 * n + g;

    let src_host = |i: u32| NodeId(i);
    let edge = |grp: u32| NodeId(n + grp);
    let sw1 = NodeId(n + g);
    let sw2 = NodeId(n + g + 1);
    let sink_host = |i: u32| NodeId(n + g + 2 + i);

    let src_nic = |i: u32| i;
    let edge_up = |grp: u32| n + grp;
    let sw1_fwd = n + g;
    let sw2_fwd = |i: u32| n + g + 1 + i;
    let sink_nic = |i: u32| 2 * n + g + 1 + i;
    let sw2_rev = 3 * n + g + 1;
    let sw1_rev = |i: u32| 3 * n + g + 2 + i;

    let access = LinkParams::new(cfg.link_rate_bps, cfg.access_prop);
    let backbone = LinkParams::new(cfg.link_rate_bps, cfg.backbone_prop);

    let mut ports = Vec::new();
    for i in 0..n {
        ports.push(adapter(access.clone(), edge(group_of(i))));
    }
    for _ in 0..g {
        ports.push(plain_fifo(fwd_merged_base, g as usize, access.clone(), sw1));
    }
    ports.push(bottleneck_fifo(cfg, fwd_merged_base, backbone.clone(), sw2));
    for i in 0..n {
        ports.push(plain_fifo(i, 1, access.clone(), sink_host(i)));
    }
    for _ in 0..n {
        ports.push(adapter(access.clone(), sw2));
    }
    ports.push(plain_fifo(
        rev_merged_base,
        g as usize,
        backbone.clone(),
        sw1,
    ));
    for i in 0..n {
        ports.push(plain_fifo(
            rev_conn_base + i,
            1,
            access.clone(),
            src_host(i),
        ));
    }
    assert_eq!(ports.len() as u32, 4 * n + g + 2);

    let mut nodes: Vec<Node> = (0..2 * n + g + 2)
        .map(|_| Node {
            routes: empty_routes(n),
            merge: None,
        })
        .collect();

    for grp in 0..g {
        nodes[edge(grp).0 as usize].merge = Some(MergeUnit {
            reasm: (0..n).map(|_| Reassembler::new()).collect(),
            restamp: (0..n)
                .map(|c| VcId(fwd_merged_base + group_of(c)))
                .collect(),
            out_port: PortId(edge_up(grp)),
        });
    }
    nodes[sw2.0 as usize].merge = Some(MergeUnit {
        reasm: (0..n).map(|_| Reassembler::new()).collect(),
        restamp: (0..n)
            .map(|c| VcId(rev_merged_base + group_of(c)))
            .collect(),
        out_port: PortId(sw2_rev),
    });

    for i in 0..n {
        nodes[src_host(i).0 as usize].routes[ack_flow(i)] =
            Some(RouteAction::DeliverAck(ConnId(i)));
        nodes[edge(group_of(i)).0 as usize].routes[data_flow(i)] = Some(RouteAction::MergeStep);
        nodes[sw1.0 as usize].routes[data_flow(i)] = Some(RouteAction::Forward {
            port: PortId(sw1_fwd),
            restamp: None,
        });
        nodes[sw1.0 as usize].routes[ack_flow(i)] = Some(RouteAction::Forward {
            port: PortId(sw1_rev(i)),
            restamp: Some(VcId(rev_conn_base + i)),
        });
        nodes[sw2.0 as usize].routes[data_flow(i)] = Some(RouteAction::Forward {
            port: PortId(sw2_fwd(i)),
            restamp: Some(VcId(i)),
        });
        nodes[sw2.0 as usize].routes[ack_flow(i)] = Some(RouteAction::MergeStep);
        nodes[sink_host(i).0 as usize].routes[data_flow(i)] =
            Some(RouteAction::DeliverData(ConnId(i)));
    }

    let conns = (0..n)
        .map(|i| conn_state(cfg, i, i, rev_conn_base + i, src_nic(i), sink_nic(i)))
        .collect();

    let members = (0..g)
        .map(|grp| (grp * per..(grp + 1) * per).collect())
        .collect();
    Simulation::new(World::new(
        cfg.clone(),
        nodes,
        ports,
        conns,
        PortId(sw1_fwd),
        fwd_merged_base,
        members,
    ))
}
