//! The wiring that turns the passive pieces (TCP endpoints, FIFO ports,
//! reassemblers) into a running network: nodes with per-flow route tables,
//! output ports that pace cells onto links, timers, and the event dispatch
//! loop. Everything downstream of a scenario build lives here.

use crate::aal5::{segment_frame, Cell, Frame, MergeScheduler, Reassembler, CELL_WIRE_BITS};
use crate::ids::{ConnId, FrameId, NodeId, PortId, VcId};
use crate::sim::{Engine, EventHandle, RandomSource, SimTime};
use crate::switch::{DropPolicy, FifoPort};
use crate::tcp::{ReceiverOutput, SenderOutput, TcpReceiver, TcpSender, TimerOp};
use crate::topology::ScenarioConfig;

/// Everything that can happen in the simulated network.
#[derive(Debug)]
pub enum Ev {
    /// A connection's sender begins transmitting.
    Start(ConnId),
    /// A cell finishes propagating and lands at a node.
    CellArrive {
        node: NodeId,
        cell: Cell,
    },
    /// A port finishes serializing a cell and can pick up the next one.
    TxDone {
        port: PortId,
    },
    RtoFire {
        conn: ConnId,
    },
    DelAckFire {
        conn: ConnId,
    },
    /// Periodic trace sample.
    Sample,
    /// End of the warm-up window: snapshot counters so steady-state numbers
    /// exclude startup transients.
    WarmupMark,
}

/// Serialization pacing for one link: integer-nanosecond cell times with the
/// fractional remainder carried forward so long runs never drift.
#[derive(Debug, Clone)]
pub struct LinkParams {
    /// Numerator of the per-cell time in nanoseconds: wire bits x 1e9.
    num: u64,
    /// Denominator: the link rate in bits per second.
    den: u64,
    rem: u64,
    /// Propagation delay to the far end.
    pub prop: SimTime,
}

impl LinkParams {
    pub fn new(rate_bps: u64, prop: SimTime) -> LinkParams {
        assert!(rate_bps > 0, "zero-rate link");
        LinkParams {
            num: CELL_WIRE_BITS * 1_000_000_000,
            den: rate_bps,
            rem: 0,
            prop,
        }
    }

    /// Time to serialize the next cell; remainders accumulate so that the
    /// long-run average equals the exact rational cell time.
    pub fn next_cell_time(&mut self) -> SimTime {
        let total = self.num + self.rem;
        self.rem = total % self.den;
        SimTime(total / self.den)
    }
}

/// What a port does with the cells handed to it.
#[derive(Debug)]
pub enum PortKind {
    /// Shared FIFO buffer with per-VC accounting and a drop policy.
    Fifo(FifoPort),
    /// Frame queue paced onto the wire (host adapters).
    Adapter(MergeScheduler),
}

/// One output port: a buffer plus the link it drains onto.
#[derive(Debug)]
pub struct Port {
    pub kind: PortKind,
    pub link: LinkParams,
    pub dst: NodeId,
    busy: bool,
    /// Cumulative nanoseconds spent transmitting.
    pub busy_ns: u64,
}

impl Port {
    pub fn new(kind: PortKind, link: LinkParams, dst: NodeId) -> Port {
        Port {
            kind,
            link,
            dst,
            busy: false,
            busy_ns: 0,
        }
    }
}

/// How a node disposes of an arriving cell, looked up by flow.
#[derive(Debug, Clone, Copy)]
pub enum RouteAction {
    /// Switch the cell toward a port, optionally rewriting its circuit id
    /// (demultiplexing a merged circuit back onto per-connection circuits).
    Forward { port: PortId, restamp: Option<VcId> },
    /// Reassemble per-connection frames and re-emit them on a merged circuit
    /// into this node's merge output port (frame-level store and forward).
    MergeStep,
    /// Terminal delivery to the connection's receiver.
    DeliverData(ConnId),
    /// Terminal delivery to the connection's sender.
    DeliverAck(ConnId),
}

/// Frame-level VC merging state at a switch: per-connection reassembly, the
/// merged circuit each connection maps to, and the output port.
#[derive(Debug)]
pub struct MergeUnit {
    pub reasm: Vec<Reassembler>,
    pub restamp: Vec<VcId>,
    pub out_port: PortId,
}

/// One network node: a route table and, for merging switches, a merge unit.
#[derive(Debug)]
pub struct Node {
    /// Indexed by `FlowId`; `None` means the flow never reaches this node.
    pub routes: Vec<Option<RouteAction>>,
    pub merge: Option<MergeUnit>,
}

/// Sender-side single-frame dropper: suppress one fresh segment each time
/// the congestion window climbs to the threshold, modelling a push-out drop
/// pegged to window growth rather than buffer state.
#[derive(Debug)]
pub struct WindowDropper {
    pub threshold: u64,
    armed: bool,
}

impl WindowDropper {
    pub fn new(threshold: u64) -> WindowDropper {
        WindowDropper {
            threshold,
            armed: true,
        }
    }
}

/// Per-connection endpoint state and plumbing.
#[derive(Debug)]
pub struct ConnState {
    pub sender: TcpSender,
    pub receiver: TcpReceiver,
    pub data_reasm: Reassembler,
    pub ack_reasm: Reassembler,
    pub fwd_vc: VcId,
    pub rev_vc: VcId,
    pub src_port: PortId,
    pub sink_port: PortId,
    rto_timer: Option<EventHandle>,
    delack_timer: Option<EventHandle>,
    pub window_drop: Option<WindowDropper>,
    received_at_warmup: u64,
    pub segments_suppressed: u64,
}

impl ConnState {
    pub fn new(
        sender: TcpSender,
        receiver: TcpReceiver,
        fwd_vc: VcId,
        rev_vc: VcId,
        src_port: PortId,
        sink_port: PortId,
        cwnd_drop_threshold: Option<u64>,
    ) -> ConnState {
        ConnState {
            sender,
            receiver,
            data_reasm: Reassembler::new(),
            ack_reasm: Reassembler::new(),
            fwd_vc,
            rev_vc,
            src_port,
            sink_port,
            rto_timer: None,
            delack_timer: None,
            window_drop: cwnd_drop_threshold.map(WindowDropper::new),
            received_at_warmup: 0,
            segments_suppressed: 0,
        }
    }
}

/// One point of the bottleneck queue trace.
#[derive(Debug, Clone)]
pub struct QueueSample {
    pub t: f64,
    pub total_cells: u64,
    pub per_vc_cells: Vec<u64>,
}

/// Steady-state results for one connection.
#[derive(Debug, Clone)]
pub struct ConnStats {
    pub conn: ConnId,
    pub goodput_mbps: f64,
    pub delivered_bytes: u64,
    pub timeouts: u64,
    pub loss_events: u64,
    pub first_rtt: Option<f64>,
    pub final_cwnd: u64,
    pub segments_suppressed: u64,
}

/// Steady-state results for one circuit at the bottleneck port.
#[derive(Debug, Clone)]
pub struct VcStats {
    pub vc: VcId,
    pub threshold_cells: u64,
    pub weight: f64,
    pub goodput_mbps: f64,
    pub max_occupancy_cells: u64,
    pub frames_in: u64,
    pub frames_refused: u64,
    pub frames_truncated: u64,
}

/// Everything a finished run reports.
#[derive(Debug)]
pub struct RunOutput {
    pub per_conn: Vec<ConnStats>,
    pub per_vc: Vec<VcStats>,
    pub total_goodput_mbps: f64,
    /// Fraction of the post-warm-up window the bottleneck link spent
    /// transmitting.
    pub utilization: f64,
    /// Whole-run peak of the bottleneck buffer, in cells.
    pub max_queue_cells: u64,
    pub cwnd_traces: Vec<Vec<(f64, u64)>>,
    pub queue_trace: Vec<QueueSample>,
    pub events_processed: u64,
    pub duration_s: f64,
    pub warmup_s: f64,
}

/// The assembled network. Built by the topology module, driven by `handle`.
#[derive(Debug)]
pub struct World {
    pub cfg: ScenarioConfig,
    pub nodes: Vec<Node>,
    pub ports: Vec<Port>,
    pub conns: Vec<ConnState>,
    /// The port whose buffer the experiment is about.
    pub bottleneck: PortId,
    /// Circuit id of the bottleneck port's first account.
    pub bottleneck_vc_base: u32,
    /// Connections feeding each bottleneck account, in account order.
    pub account_members: Vec<Vec<u32>>,
    pub rng: RandomSource,
    frame_seq: u64,
    busy_ns_at_warmup: u64,
    cwnd_traces: Vec<Vec<(f64, u64)>>,
    queue_trace: Vec<QueueSample>,
}

impl World {
    pub fn new(
        cfg: ScenarioConfig,
        nodes: Vec<Node>,
        ports: Vec<Port>,
        conns: Vec<ConnState>,
        bottleneck: PortId,
        bottleneck_vc_base: u32,
        account_members: Vec<Vec<u32>>,
    ) -> World {
        let n = conns.len();
        let rng = RandomSource::new(cfg.seed);
        World {
            cfg,
            nodes,
            ports,
            conns,
            bottleneck,
            bottleneck_vc_base,
            account_members,
            rng,
            frame_seq: 0,
            busy_ns_at_warmup: 0,
            cwnd_traces: vec![Vec::new(); n],
            queue_trace: Vec::new(),
        }
    }

    fn next_frame_id(&mut self) -> FrameId {
        self.frame_seq += 1;
        FrameId(self.frame_seq)
    }

    pub fn handle(&mut self, eng: &mut Engine<Ev>, now: SimTime, ev: Ev) {
        match ev {
            Ev::Start(conn) => {
                let out = self.conns[conn.0 as usize].sender.on_start(now);
                self.apply_sender_output(eng, conn, out);
            }
            Ev::CellArrive { node, cell } => self.cell_arrive(eng, now, node, cell),
            Ev::TxDone { port } => {
                self.ports[port.0 as usize].busy = false;
                self.try_start_tx(eng, port);
            }
            Ev::RtoFire { conn } => {
                let c = &mut self.conns[conn.0 as usize];
                c.rto_timer = None;
                let out = c.sender.on_rto(now);
                self.apply_sender_output(eng, conn, out);
            }
            Ev::DelAckFire { conn } => {
                let c = &mut self.conns[conn.0 as usize];
                c.delack_timer = None;
                let out = c.receiver.on_delack_timer();
                self.apply_receiver_output(eng, conn, out);
            }
            Ev::Sample => {
                self.record_sample(now);
                let next = now + self.cfg.sample_interval;
                if next <= self.cfg.duration {
                    eng.schedule(next, Ev::Sample);
                }
            }
            Ev::WarmupMark => {
                for c in &mut self.conns {
                    c.received_at_warmup = c.receiver.received_unique_bytes();
                }
                self.busy_ns_at_warmup = self.ports[self.bottleneck.0 as usize].busy_ns;
            }
        }
    }

    fn cell_arrive(&mut self, eng: &mut Engine<Ev>, now: SimTime, node: NodeId, cell: Cell) {
        let action = self.nodes[node.0 as usize].routes[cell.flow.0 as usize]
            .unwrap_or_else(|| panic!("flow {:?} has no route at node {:?}", cell.flow, node));
        match action {
            RouteAction::Forward { port, restamp } => {
                let mut cell = cell;
                if let Some(vc) = restamp {
                    cell.vc = vc;
                }
                self.fifo_admit(port, cell);
                self.try_start_tx(eng, port);
            }
            RouteAction::MergeStep => {
                let conn = cell.flow.conn().0 as usize;
                let unit = self.nodes[node.0 as usize]
                    .merge
                    .as_mut()
                    .expect("merge step routed to a node without a merge unit");
                if let Some(mut frame) = unit.reasm[conn].push(cell) {
                    frame.vc = unit.restamp[conn];
                    let out = unit.out_port;
                    self.frame_into_fifo(out, &frame);
                    self.try_start_tx(eng, out);
                }
            }
            RouteAction::DeliverData(conn) => {
                if let Some(frame) = self.conns[conn.0 as usize].data_reasm.push(cell) {
                    let out = self.conns[conn.0 as usize]
                        .receiver
                        .on_data(&frame.segment, now);
                    self.apply_receiver_output(eng, conn, out);
                }
            }
            RouteAction::DeliverAck(conn) => {
                if let Some(frame) = self.conns[conn.0 as usize].ack_reasm.push(cell) {
                    let out = self.conns[conn.0 as usize]
                        .sender
                        .on_ack(&frame.segment, now);
                    self.apply_sender_output(eng, conn, out);
                }
            }
        }
    }

    /// Admit one cell into a FIFO port, drawing randomness only where the
    /// probabilistic policy can consume it (keeps the stream reproducible).
    fn fifo_admit(&mut self, pid: PortId, cell: Cell) {
        let port = &mut self.ports[pid.0 as usize];
        let PortKind::Fifo(fifo) = &mut port.kind else {
            panic!("cell forwarded into a non-FIFO port")
        };
        let uniform = if cell.is_first() && fifo.policy() == DropPolicy::GfrProbabilistic {
            self.rng.next_uniform()
        } else {
            0.0
        };
        fifo.on_cell_arrival(cell, uniform);
    }

    /// Store-and-forward admission of a whole frame (VC merge output).
    fn frame_into_fifo(&mut self, pid: PortId, frame: &Frame) {
        for cell in frame.cells() {
            self.fifo_admit(pid, cell);
        }
    }

    /// If the port is idle and has traffic, put the next cell on the wire.
    fn try_start_tx(&mut self, eng: &mut Engine<Ev>, pid: PortId) {
        let port = &mut self.ports[pid.0 as usize];
        if port.busy {
            return;
        }
        let cell = match &mut port.kind {
            PortKind::Fifo(f) => f.dequeue(),
            PortKind::Adapter(m) => m.next_cell(),
        };
        let Some(cell) = cell else { return };
        port.busy = true;
        let tx = port.link.next_cell_time();
        port.busy_ns += tx.0;
        eng.schedule_after(tx, Ev::TxDone { port: pid });
        eng.schedule_after(
            tx + port.link.prop,
            Ev::CellArrive {
                node: port.dst,
                cell,
            },
        );
    }

    fn apply_sender_output(&mut self, eng: &mut Engine<Ev>, conn: ConnId, out: SenderOutput) {
        let ci = conn.0 as usize;
        let mut to_send = Vec::with_capacity(out.emissions.len());
        {
            let cwnd = self.conns[ci].sender.cwnd_bytes();
            let c = &mut self.conns[ci];
            for e in out.emissions {
                if !e.retransmission {
                    if let Some(wd) = &mut c.window_drop {
                        if cwnd < wd.threshold {
                            wd.armed = true;
                        }
                        if wd.armed && cwnd >= wd.threshold {
                            wd.armed = false;
                            c.segments_suppressed += 1;
                            continue;
                        }
                    }
                }
                to_send.push(e.segment);
            }
        }
        if !to_send.is_empty() {
            let (vc, src_port) = (self.conns[ci].fwd_vc, self.conns[ci].src_port);
            let flow = crate::ids::FlowId::new(conn, crate::ids::Direction::Data);
            let mfs = self.cfg.max_frame_bytes;
            for seg in to_send {
                let id = self.next_frame_id();
                let frame = segment_frame(vc, flow, id, seg, mfs);
                self.adapter_push(src_port, frame);
            }
            self.try_start_tx(eng, self.conns[ci].src_port);
        }
        self.set_timer(eng, conn, out.timer, Timer::Rto);
    }

    fn apply_receiver_output(&mut self, eng: &mut Engine<Ev>, conn: ConnId, out: ReceiverOutput) {
        let ci = conn.0 as usize;
        if let Some(ack) = out.ack {
            let (vc, sink_port) = (self.conns[ci].rev_vc, self.conns[ci].sink_port);
            let flow = crate::ids::FlowId::new(conn, crate::ids::Direction::Ack);
            let id = self.next_frame_id();
            let frame = segment_frame(vc, flow, id, ack, self.cfg.max_frame_bytes);
            self.adapter_push(sink_port, frame);
            self.try_start_tx(eng, sink_port);
        }
        self.set_timer(eng, conn, out.timer, Timer::DelAck);
    }

    fn adapter_push(&mut self, pid: PortId, frame: Frame) {
        let PortKind::Adapter(m) = &mut self.ports[pid.0 as usize].kind else {
            panic!("frame pushed into a non-adapter port")
        };
        m.push(0, frame);
    }

    fn set_timer(&mut self, eng: &mut Engine<Ev>, conn: ConnId, op: TimerOp, which: Timer) {
        let ci = conn.0 as usize;
        let slot = match which {
            Timer::Rto => &mut self.conns[ci].rto_timer,
            Timer::DelAck => &mut self.conns[ci].delack_timer,
        };
        match op {
            TimerOp::Keep => {}
            TimerOp::Cancel => {
                if let Some(h) = slot.take() {
                    eng.cancel(h);
                }
            }
            TimerOp::ResetTo(at) => {
                if let Some(h) = slot.take() {
                    eng.cancel(h);
                }
                let ev = match which {
                    Timer::Rto => Ev::RtoFire { conn },
                    Timer::DelAck => Ev::DelAckFire { conn },
                };
                *slot = Some(eng.schedule(at, ev));
            }
        }
    }

    fn record_sample(&mut self, now: SimTime) {
        let t = now.as_secs_f64();
        for (i, c) in self.conns.iter().enumerate() {
            self.cwnd_traces[i].push((t, c.sender.cwnd_bytes()));
        }
        if let PortKind::Fifo(f) = &self.ports[self.bottleneck.0 as usize].kind {
            self.queue_trace.push(QueueSample {
                t,
                total_cells: f.occupancy(),
                per_vc_cells: f.accounts().iter().map(|a| a.occupancy).collect(),
            });
        }
    }

    fn finish(self, events_processed: u64) -> RunOutput {
        let duration_s = self.cfg.duration.as_secs_f64();
        let warmup_s = duration_s * self.cfg.warmup_frac;
        let span = duration_s - warmup_s;
        assert!(span > 0.0, "warm-up swallowed the whole run");

        let per_conn: Vec<ConnStats> = self
            .conns
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let post = c.receiver.received_unique_bytes() - c.received_at_warmup;
                ConnStats {
                    conn: ConnId(i as u32),
                    goodput_mbps: post as f64 * 8.0 / span / 1e6,
                    delivered_bytes: c.receiver.delivered_bytes(),
                    timeouts: c.sender.timeouts,
                    loss_events: c.sender.loss_events,
                    first_rtt: c.sender.first_rtt_sample(),
                    final_cwnd: c.sender.cwnd_bytes(),
                    segments_suppressed: c.segments_suppressed,
                }
            })
            .collect();

        let bport = &self.ports[self.bottleneck.0 as usize];
        let (per_vc, max_queue) = match &bport.kind {
            PortKind::Fifo(f) => {
                let stats = f
                    .accounts()
                    .iter()
                    .enumerate()
                    .map(|(i, a)| VcStats {
                        vc: VcId(self.bottleneck_vc_base + i as u32),
                        threshold_cells: a.threshold,
                        weight: a.weight,
                        goodput_mbps: self.account_members[i]
                            .iter()
                            .map(|&m| per_conn[m as usize].goodput_mbps)
                            .sum(),
                        max_occupancy_cells: a.max_occupancy,
                        frames_in: a.frames_in,
                        frames_refused: a.frames_refused,
                        frames_truncated: a.frames_truncated,
                    })
                    .collect();
                (stats, f.max_occupancy)
            }
            PortKind::Adapter(_) => (Vec::new(), 0),
        };

        let busy_delta = bport.busy_ns - self.busy_ns_at_warmup;
        let utilization = busy_delta as f64 / (span * 1e9);

        RunOutput {
            total_goodput_mbps: per_conn.iter().map(|c| c.goodput_mbps).sum(),
            per_conn,
            per_vc,
            utilization,
            max_queue_cells: max_queue,
            cwnd_traces: self.cwnd_traces,
            queue_trace: self.queue_trace,
            events_processed,
            duration_s,
            warmup_s,
        }
    }
}

enum Timer {
    Rto,
    DelAck,
}

/// A built scenario, ready to run to completion.
#[derive(Debug)]
pub struct Simulation {
    pub engine: Engine<Ev>,
    pub world: World,
}

impl Simulation {
    pub fn new(world: World) -> Simulation {
        Simulation {
            engine: Engine::new(),
            world,
        }
    }

    /// Drive the network for the configured duration and collect results.
    pub fn run(mut self) -> RunOutput {
        let cfg = &self.world.cfg;
        let duration = cfg.duration;
        for i in 0..self.world.conns.len() {
            let at = SimTime(cfg.start_stagger.0 * i as u64);
            self.engine.schedule(at, Ev::Start(ConnId(i as u32)));
        }
        self.engine.schedule(
            SimTime::from_secs_f64(duration.as_secs_f64() * cfg.warmup_frac),
            Ev::WarmupMark,
        );
        if cfg.sample_interval > SimTime::ZERO {
            self.engine.schedule(SimTime::ZERO, Ev::Sample);
        }
        let world = &mut self.world;
        self.engine
            .run_until(duration, |eng, now, ev| world.handle(eng, now, ev));
        let processed = self.engine.processed();
        self.world.finish(processed)
    }
}
