//! SACK TCP endpoint model: a bulk-transfer sender with slow start,
//! congestion avoidance, fast recovery driven by selective acknowledgments,
//! and a coarse retransmission timer; and a receiver that generates
//! cumulative ACKs with up to three SACK blocks.
//!
//! Endpoints are passive state machines: each input (ACK arrival, data
//! arrival, timer expiry) returns the segments to put on the wire plus the
//! desired timer state, and the caller owns actual scheduling.

use crate::aal5::TCPIP_HEADER_BYTES;
use crate::ids::ConnId;
use crate::sim::SimTime;

/// Sender/receiver tuning knobs.
#[derive(Debug, Clone)]
pub struct TcpConfig {
    /// Segment payload size in bytes.
    pub mss: u64,
    /// Effective receiver window in bytes (already scaled).
    pub rcv_wnd: u64,
    /// Acknowledge every second segment instead of every segment.
    pub delayed_ack: bool,
    /// Lower bound on the retransmission timer.
    pub rto_min: SimTime,
    /// Timer quantum; computed RTOs round up to a multiple of this.
    pub rto_granularity: SimTime,
    /// Initial congestion window, in segments.
    pub initial_window_segments: u64,
}

impl TcpConfig {
    /// Effective receive window from an advertised value and a window-scale
    /// shift count.
    pub fn scaled_window(advertised: u64, scale: u8) -> u64 {
        advertised << scale
    }
}

/// Half-open range of payload bytes acknowledged out of order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SackBlock {
    pub start: u64,
    pub end: u64,
}

/// One TCP segment. Sequence numbers are absolute byte offsets; the model
/// never wraps them.
#[derive(Debug, Clone)]
pub struct TcpSegment {
    pub conn: ConnId,
    pub seq: u64,
    pub len: u64,
    pub is_ack: bool,
    pub ack: u64,
    pub sack: Vec<SackBlock>,
}

impl TcpSegment {
    pub fn data(conn: ConnId, seq: u64, len: u64) -> TcpSegment {
        TcpSegment {
            conn,
            seq,
            len,
            is_ack: false,
            ack: 0,
            sack: Vec::new(),
        }
    }

    pub fn ack(conn: ConnId, ack: u64, sack: Vec<SackBlock>) -> TcpSegment {
        TcpSegment {
            conn,
            seq: 0,
            len: 0,
            is_ack: true,
            ack,
            sack,
        }
    }

    /// Bytes this segment occupies inside a frame (payload plus TCP/IP
    /// headers; the frame trailer is adaptation-layer overhead).
    pub fn wire_len(&self) -> u64 {
        self.len + TCPIP_HEADER_BYTES
    }
}

/// Requested state of a one-shot timer after an endpoint event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimerOp {
    #[default]
    Keep,
    Cancel,
    ResetTo(SimTime),
}

/// A segment to transmit, with a flag the wire layer uses to distinguish
/// fresh data from retransmissions.
#[derive(Debug, Clone)]
pub struct Emission {
    pub segment: TcpSegment,
    pub retransmission: bool,
}

/// Result of a sender event: segments to emit and the retransmission-timer
/// state to apply.
#[derive(Debug, Default)]
pub struct SenderOutput {
    pub emissions: Vec<Emission>,
    pub timer: TimerOp,
}

/// Selective-acknowledgment bookkeeping: which byte ranges above the
/// cumulative ACK the receiver holds, and how far retransmission has
/// progressed through the holes between them.
#[derive(Debug, Default)]
struct Scoreboard {
    /// Sorted, disjoint ranges, all above the cumulative ACK point.
    ranges: Vec<(u64, u64)>,
    /// Retransmissions have covered everything below this.
    high_rxt: u64,
}

impl Scoreboard {
    fn insert(&mut self, start: u64, end: u64) {
        assert!(start < end, "empty SACK block");
        let mut merged = (start, end);
        let mut out = Vec::with_capacity(self.ranges.len() + 1);
        for &(s, e) in &self.ranges {
            if e < merged.0 || s > merged.1 {
                out.push((s, e));
            } else {
                merged = (merged.0.min(s), merged.1.max(e));
            }
        }
        let pos = out.partition_point(|&(s, _)| s < merged.0);
        out.insert(pos, merged);
        self.ranges = out;
    }

    /// Drop everything at or below the new cumulative ACK.
    fn advance(&mut self, ack: u64) {
        self.ranges.retain_mut(|r| {
            r.0 = r.0.max(ack);
            r.0 < r.1
        });
        self.high_rxt = self.high_rxt.max(ack);
    }

    fn sacked_total(&self) -> u64 {
        self.ranges.iter().map(|&(s, e)| e - s).sum()
    }

    fn sacked_above(&self, seq: u64) -> u64 {
        self.ranges
            .iter()
            .map(|&(s, e)| e.saturating_sub(s.max(seq)))
            .sum()
    }

    /// True when some hole has at least `threshold` bytes acknowledged above
    /// it, the signal that the hole's segment was lost rather than reordered.
    fn loss_indicated(&self, una: u64, threshold: u64) -> bool {
        !self.ranges.is_empty() && self.sacked_above(una) >= threshold
    }

    /// Lowest not-yet-retransmitted span of a lost hole below `point`.
    /// The tail above the last SACKed range has no SACK evidence, so it is
    /// reachable only when the caller waives the threshold (post-timeout).
    fn next_retransmit(&self, una: u64, loss_threshold: u64, point: u64) -> Option<(u64, u64)> {
        let mut gap_start = una;
        for &(s, e) in &self.ranges {
            if gap_start < s {
                let lo = gap_start.max(self.high_rxt);
                let hi = s.min(point);
                if lo < hi && self.sacked_above(lo) >= loss_threshold {
                    return Some((lo, hi));
                }
            }
            gap_start = gap_start.max(e);
        }
        let lo = gap_start.max(self.high_rxt);
        if lo < point && self.sacked_above(lo) >= loss_threshold {
            return Some((lo, point));
        }
        None
    }

    /// Bytes in lost holes below `end` that have not been retransmitted yet;
    /// these are gone from the network and do not count toward data in
    /// flight. As above, the tail gap needs the threshold waived.
    fn lost_unretransmitted(&self, una: u64, loss_threshold: u64, end: u64) -> u64 {
        let mut total = 0;
        let mut gap_start = una;
        for &(s, e) in &self.ranges {
            if gap_start >= end {
                break;
            }
            if gap_start < s {
                let lo = gap_start.max(self.high_rxt);
                let hi = s.min(end);
                if lo < hi && self.sacked_above(lo) >= loss_threshold {
                    total += hi - lo;
                }
            }
            gap_start = gap_start.max(e);
        }
        let lo = gap_start.max(self.high_rxt);
        if lo < end && self.sacked_above(lo) >= loss_threshold {
            total += end - lo;
        }
        total
    }

    fn mark_retransmitted(&mut self, upto: u64) {
        self.high_rxt = self.high_rxt.max(upto);
    }

    fn reset_retransmit_progress(&mut self, una: u64) {
        self.high_rxt = una;
    }
}

/// Bulk-transfer SACK TCP sender with an unlimited backlog of data.
#[derive(Debug)]
pub struct TcpSender {
    conn: ConnId,
    cfg: TcpConfig,
    cwnd: f64,
    ssthresh: f64,
    snd_una: u64,
    snd_nxt: u64,
    dup_acks: u32,
    scoreboard: Scoreboard,
    /// End of the window that loss recovery is working through; cleared when
    /// the cumulative ACK passes it. At most one window reduction happens per
    /// recovery episode.
    recovery_point: Option<u64>,
    /// True while recovering from a timeout: everything un-SACKed below the
    /// recovery point is presumed lost, since nothing sent before the timeout
    /// can still be in flight.
    rto_recovery: bool,
    srtt: Option<f64>,
    rttvar: f64,
    rto: SimTime,
    backoff: u32,
    /// One in-flight RTT measurement: (sequence it completes at, send time).
    /// Dropped whenever a retransmission could contaminate the sample.
    rtt_probe: Option<(u64, SimTime)>,
    pub timeouts: u64,
    pub loss_events: u64,
    first_rtt: Option<f64>,
}

impl TcpSender {
    pub fn new(conn: ConnId, cfg: TcpConfig) -> TcpSender {
        let cwnd = (cfg.initial_window_segments * cfg.mss) as f64;
        let ssthresh = cfg.rcv_wnd as f64;
        TcpSender {
            conn,
            cfg,
            cwnd,
            ssthresh,
            snd_una: 0,
            snd_nxt: 0,
            dup_acks: 0,
            scoreboard: Scoreboard::default(),
            recovery_point: None,
            rto_recovery: false,
            srtt: None,
            rttvar: 0.0,
            rto: SimTime::from_secs_f64(1.0),
            backoff: 0,
            rtt_probe: None,
            timeouts: 0,
            loss_events: 0,
            first_rtt: None,
        }
    }

    pub fn cwnd_bytes(&self) -> u64 {
        self.cwnd as u64
    }

    pub fn srtt(&self) -> Option<f64> {
        self.srtt
    }

    pub fn first_rtt_sample(&self) -> Option<f64> {
        self.first_rtt
    }

    pub fn bytes_outstanding(&self) -> u64 {
        self.snd_nxt - self.snd_una
    }

    fn effective_window(&self) -> u64 {
        (self.cwnd as u64).min(self.cfg.rcv_wnd)
    }

    fn loss_threshold(&self) -> u64 {
        if self.rto_recovery {
            0
        } else {
            3 * self.cfg.mss
        }
    }

    /// Data in flight during recovery: outstanding minus what the receiver
    /// already holds minus what is known lost and not yet resent. Loss is
    /// only ever presumed below the recovery point; anything sent after the
    /// window reduction counts as in flight until SACKed.
    fn pipe(&self) -> u64 {
        let lost_end = self.recovery_point.unwrap_or(self.snd_nxt);
        (self.snd_nxt - self.snd_una)
            .saturating_sub(self.scoreboard.sacked_total())
            .saturating_sub(self.scoreboard.lost_unretransmitted(
                self.snd_una,
                self.loss_threshold(),
                lost_end,
            ))
    }

    fn current_rto(&self) -> SimTime {
        let backed = self.rto.0.saturating_mul(1 << self.backoff.min(7));
        SimTime(backed.min(SimTime::from_secs_f64(64.0).0))
    }

    fn take_rtt_sample(&mut self, sample: SimTime) {
        let s = sample.as_secs_f64();
        if self.first_rtt.is_none() {
            self.first_rtt = Some(s);
        }
        match self.srtt {
            None => {
                self.srtt = Some(s);
                self.rttvar = s / 2.0;
            }
            Some(prev) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (prev - s).abs();
                self.srtt = Some(0.875 * prev + 0.125 * s);
            }
        }
        let raw = self.srtt.unwrap() + 4.0 * self.rttvar;
        let quantum = self.cfg.rto_granularity.0.max(1);
        let ticks = SimTime::from_secs_f64(raw).0.div_ceil(quantum);
        self.rto = SimTime((ticks * quantum).max(self.cfg.rto_min.0));
    }

    /// Kick off the transfer: emit the initial window and start the timer.
    pub fn on_start(&mut self, now: SimTime) -> SenderOutput {
        let emissions = self.transmit(now);
        SenderOutput {
            timer: if emissions.is_empty() {
                TimerOp::Keep
            } else {
                TimerOp::ResetTo(now + self.current_rto())
            },
            emissions,
        }
    }

    /// Process one incoming ACK.
    pub fn on_ack(&mut self, seg: &TcpSegment, now: SimTime) -> SenderOutput {
        assert!(seg.is_ack, "data segment delivered to sender");
        assert!(
            seg.ack <= self.snd_nxt,
            "ACK {} for data never sent (snd_nxt {})",
            seg.ack,
            self.snd_nxt
        );

        for b in &seg.sack {
            if b.end > self.snd_una {
                assert!(b.end <= self.snd_nxt, "SACK beyond sent data");
                self.scoreboard.insert(b.start.max(self.snd_una), b.end);
            }
        }

        let advanced = seg.ack > self.snd_una;
        if advanced {
            self.snd_una = seg.ack;
            self.scoreboard.advance(seg.ack);
            self.dup_acks = 0;
            self.backoff = 0;
            if let Some((probe_end, sent_at)) = self.rtt_probe {
                if seg.ack >= probe_end {
                    self.take_rtt_sample(now - sent_at);
                    self.rtt_probe = None;
                }
            }
            // Window growth. Fast recovery holds the window flat (cwnd ==
            // ssthresh); after a timeout cwnd sits below ssthresh and slow
            // start applies even while holes are still being repaired.
            if self.recovery_point.is_none() || self.cwnd < self.ssthresh {
                if self.cwnd < self.ssthresh {
                    self.cwnd += self.cfg.mss as f64;
                } else {
                    self.cwnd += (self.cfg.mss * self.cfg.mss) as f64 / self.cwnd;
                }
                // The advertised window caps growth but never squeezes cwnd
                // below one segment; a closed window blocks in transmit().
                self.cwnd = self.cwnd.min((self.cfg.rcv_wnd.max(self.cfg.mss)) as f64);
            }
            if let Some(point) = self.recovery_point {
                if seg.ack >= point {
                    self.recovery_point = None;
                    self.rto_recovery = false;
                }
            }
        } else if self.snd_una < self.snd_nxt {
            self.dup_acks += 1;
        }

        let mut emissions = Vec::new();
        if self.recovery_point.is_none()
            && (self.dup_acks >= 3
                || self
                    .scoreboard
                    .loss_indicated(self.snd_una, self.loss_threshold()))
        {
            self.on_loss_detected(&mut emissions);
        }
        emissions.extend(self.transmit(now));

        let timer = if self.snd_una == self.snd_nxt {
            TimerOp::Cancel
        } else if advanced {
            TimerOp::ResetTo(now + self.current_rto())
        } else {
            TimerOp::Keep
        };
        SenderOutput { emissions, timer }
    }

    /// Halve the window and retransmit the first hole. Called at most once
    /// per recovery episode; further loss signals inside the same window are
    /// absorbed by the open recovery.
    fn on_loss_detected(&mut self, emissions: &mut Vec<Emission>) {
        self.loss_events += 1;
        self.ssthresh = (self.cwnd / 2.0).max((2 * self.cfg.mss) as f64);
        self.cwnd = self.ssthresh;
        self.recovery_point = Some(self.snd_nxt);
        self.dup_acks = 0;

        let (start, end) = self
            .scoreboard
            .next_retransmit(self.snd_una, self.loss_threshold(), self.snd_nxt)
            .unwrap_or((self.snd_una, self.snd_una + self.cfg.mss));
        let len = (end - start).min(self.cfg.mss);
        self.scoreboard.mark_retransmitted(start + len);
        self.rtt_probe = None;
        emissions.push(Emission {
            segment: TcpSegment::data(self.conn, start, len),
            retransmission: true,
        });
    }

    /// Retransmission timer expiry: collapse to one segment and slow-start
    /// back up. SACK state survives so known-received data is not resent.
    pub fn on_rto(&mut self, now: SimTime) -> SenderOutput {
        assert!(
            self.snd_una < self.snd_nxt,
            "retransmission timer fired with nothing outstanding"
        );
        self.timeouts += 1;
        self.ssthresh = (self.cwnd / 2.0).max((2 * self.cfg.mss) as f64);
        self.cwnd = self.cfg.mss as f64;
        self.backoff = (self.backoff + 1).min(12);
        self.recovery_point = Some(self.snd_nxt);
        self.rto_recovery = true;
        self.dup_acks = 0;
        self.scoreboard.reset_retransmit_progress(self.snd_una);
        self.rtt_probe = None;

        let hole_end = self
            .scoreboard
            .ranges
            .first()
            .map(|&(s, _)| s)
            .unwrap_or(self.snd_nxt)
            .min(self.snd_nxt);
        let len = (hole_end - self.snd_una).min(self.cfg.mss);
        self.scoreboard.mark_retransmitted(self.snd_una + len);
        SenderOutput {
            emissions: vec![Emission {
                segment: TcpSegment::data(self.conn, self.snd_una, len),
                retransmission: true,
            }],
            timer: TimerOp::ResetTo(now + self.current_rto()),
        }
    }

    /// Emit whatever the window allows: during recovery, resend lost holes
    /// first (pipe-limited), then new data.
    fn transmit(&mut self, now: SimTime) -> Vec<Emission> {
        let mut out = Vec::new();
        loop {
            let wnd = self.effective_window();
            if let Some(point) = self.recovery_point {
                if let Some((start, end)) =
                    self.scoreboard
                        .next_retransmit(self.snd_una, self.loss_threshold(), point)
                {
                    let len = (end - start).min(self.cfg.mss);
                    if self.pipe() + len > wnd {
                        break;
                    }
                    self.scoreboard.mark_retransmitted(start + len);
                    self.rtt_probe = None;
                    out.push(Emission {
                        segment: TcpSegment::data(self.conn, start, len),
                        retransmission: true,
                    });
                    continue;
                }
            }
            let in_flight = if self.recovery_point.is_some() {
                self.pipe()
            } else {
                self.snd_nxt - self.snd_una
            };
            if in_flight + self.cfg.mss > wnd {
                break;
            }
            if self.rtt_probe.is_none() {
                self.rtt_probe = Some((self.snd_nxt + self.cfg.mss, now));
            }
            out.push(Emission {
                segment: TcpSegment::data(self.conn, self.snd_nxt, self.cfg.mss),
                retransmission: false,
            });
            self.snd_nxt += self.cfg.mss;
        }
        debug_assert!(self.cwnd >= self.cfg.mss as f64, "window collapsed");
        out
    }
}

/// Result of a receiver event.
#[derive(Debug, Default)]
pub struct ReceiverOutput {
    pub ack: Option<TcpSegment>,
    pub timer: TimerOp,
}

/// TCP receiver: tracks the in-order delivery point and out-of-order islands,
/// and acknowledges with up to three SACK blocks (most recent first).
#[derive(Debug)]
pub struct TcpReceiver {
    conn: ConnId,
    delayed_ack: bool,
    rcv_nxt: u64,
    /// Sorted, disjoint ranges above rcv_nxt.
    out_of_order: Vec<(u64, u64)>,
    /// Sequence positions of recent out-of-order arrivals, newest first;
    /// used to order SACK blocks by recency.
    recent: Vec<u64>,
    received_unique: u64,
    unacked_segments: u32,
    delack_armed: bool,
}

impl TcpReceiver {
    pub fn new(conn: ConnId, delayed_ack: bool) -> TcpReceiver {
        TcpReceiver {
            conn,
            delayed_ack,
            rcv_nxt: 0,
            out_of_order: Vec::new(),
            recent: Vec::new(),
            received_unique: 0,
            unacked_segments: 0,
            delack_armed: false,
        }
    }

    /// Payload bytes delivered in order so far; duplicates never count twice.
    pub fn delivered_bytes(&self) -> u64 {
        self.rcv_nxt
    }

    /// Payload bytes received so far, counted once on first arrival whether
    /// or not they are deliverable yet. Rate measurements cut at window
    /// boundaries want this counter: in-order delivery credits a filled hole
    /// all at once, smearing pre-window arrivals into the window.
    pub fn received_unique_bytes(&self) -> u64 {
        self.received_unique
    }

    /// Length of [start, end) not yet seen (below rcv_nxt or buffered).
    fn uncovered_len(&self, start: u64, end: u64) -> u64 {
        let lo = start.max(self.rcv_nxt);
        if lo >= end {
            return 0;
        }
        let covered: u64 = self
            .out_of_order
            .iter()
            .map(|&(s, e)| e.min(end).saturating_sub(s.max(lo)))
            .sum();
        (end - lo) - covered
    }

    /// Process one data segment.
    pub fn on_data(&mut self, seg: &TcpSegment, now: SimTime) -> ReceiverOutput {
        assert!(!seg.is_ack, "ACK delivered to receiver data path");
        let start = seg.seq;
        let end = seg.seq + seg.len;
        self.received_unique += self.uncovered_len(start, end);

        let in_order_advance = start <= self.rcv_nxt && end > self.rcv_nxt;
        if in_order_advance {
            self.rcv_nxt = end;
            // Absorb islands now contiguous with the delivery point.
            while let Some(&(s, e)) = self.out_of_order.first() {
                if s > self.rcv_nxt {
                    break;
                }
                self.rcv_nxt = self.rcv_nxt.max(e);
                self.out_of_order.remove(0);
            }
            self.recent.retain(|&p| p >= self.rcv_nxt);
        } else if end > self.rcv_nxt {
            self.insert_out_of_order(start.max(self.rcv_nxt), end);
            self.recent.retain(|&p| p != start);
            self.recent.insert(0, start);
            self.recent.truncate(8);
        }

        // Anything out of order (or a pure duplicate) is acknowledged
        // immediately so the sender sees the hole; in-order data may be
        // delayed if configured.
        if in_order_advance && self.out_of_order.is_empty() && self.delayed_ack {
            self.unacked_segments += 1;
            if self.unacked_segments >= 2 {
                return self.flush_ack();
            }
            if !self.delack_armed {
                self.delack_armed = true;
                return ReceiverOutput {
                    ack: None,
                    timer: TimerOp::ResetTo(now + SimTime::from_millis(200)),
                };
            }
            return ReceiverOutput::default();
        }
        self.flush_ack()
    }

    /// Delayed-ACK timer expiry.
    pub fn on_delack_timer(&mut self) -> ReceiverOutput {
        self.delack_armed = false;
        let mut out = self.flush_ack();
        out.timer = TimerOp::Keep;
        out
    }

    fn flush_ack(&mut self) -> ReceiverOutput {
        self.unacked_segments = 0;
        let timer = if self.delack_armed {
            self.delack_armed = false;
            TimerOp::Cancel
        } else {
            TimerOp::Keep
        };
        ReceiverOutput {
            ack: Some(TcpSegment::ack(self.conn, self.rcv_nxt, self.sack_blocks())),
            timer,
        }
    }

    fn insert_out_of_order(&mut self, start: u64, end: u64) {
        if start >= end {
            return;
        }
        let mut merged = (start, end);
        let mut out = Vec::with_capacity(self.out_of_order.len() + 1);
        for &(s, e) in &self.out_of_order {
            if e < merged.0 || s > merged.1 {
                out.push((s, e));
            } else {
                merged = (merged.0.min(s), merged.1.max(e));
            }
        }
        let pos = out.partition_point(|&(s, _)| s < merged.0);
        out.insert(pos, merged);
        self.out_of_order = out;
    }

    /// Up to three islands, ordered by arrival recency.
    fn sack_blocks(&self) -> Vec<SackBlock> {
        let mut blocks: Vec<SackBlock> = Vec::new();
        for &p in &self.recent {
            if let Some(&(s, e)) = self.out_of_order.iter().find(|&&(s, e)| s <= p && p < e) {
                let b = SackBlock { start: s, end: e };
                if !blocks.contains(&b) {
                    blocks.push(b);
                    if blocks.len() == 3 {
                        break;
                    }
                }
            }
        }
        blocks
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MSS: u64 = 1024;

    fn config() -> TcpConfig {
        TcpConfig {
            mss: MSS,
            rcv_wnd: 600_000,
            delayed_ack: false,
            rto_min: SimTime::from_millis(500),
            rto_granularity: SimTime::from_millis(100),
            initial_window_segments: 1,
        }
    }

    fn sender() -> TcpSender {
        TcpSender::new(ConnId(0), config())
    }

    fn plain_ack(n: u64) -> TcpSegment {
        TcpSegment::ack(ConnId(0), n, vec![])
    }

    fn sack_ack(n: u64, blocks: &[(u64, u64)]) -> TcpSegment {
        TcpSegment::ack(
            ConnId(0),
            n,
            blocks
                .iter()
                .map(|&(start, end)| SackBlock { start, end })
                .collect(),
        )
    }

    #[test]
    fn initial_window_emits_one_segment() {
        let mut s = sender();
        let out = s.on_start(SimTime::ZERO);
        assert_eq!(out.emissions.len(), 1);
        assert_eq!(out.emissions[0].segment.seq, 0);
        assert_eq!(out.emissions[0].segment.len, MSS);
        assert!(matches!(out.timer, TimerOp::ResetTo(_)));
    }

    #[test]
    fn window_limits_how_much_is_emitted() {
        // cwnd of 4 segments, nothing outstanding: exactly 4 emitted.
        let mut s = sender();
        s.cwnd = (4 * MSS) as f64;
        let out = s.on_start(SimTime::ZERO);
        assert_eq!(out.emissions.len(), 4);
        // Window now closed: nothing more.
        assert!(s.transmit(SimTime::ZERO).is_empty());
    }

    #[test]
    fn receiver_window_caps_emission() {
        let mut s = sender();
        s.cfg.rcv_wnd = 2 * MSS;
        s.cwnd = (8 * MSS) as f64;
        let out = s.on_start(SimTime::ZERO);
        assert_eq!(out.emissions.len(), 2);
    }

    #[test]
    fn slow_start_adds_one_mss_per_ack() {
        let mut s = sender();
        s.on_start(SimTime::ZERO);
        assert_eq!(s.cwnd_bytes(), MSS);
        let out = s.on_ack(&plain_ack(MSS), SimTime::from_millis(30));
        assert_eq!(s.cwnd_bytes(), 2 * MSS);
        // The doubled window is refilled.
        assert_eq!(out.emissions.len(), 2);
    }

    #[test]
    fn congestion_avoidance_adds_one_mss_per_window_of_acks() {
        let mut s = sender();
        s.ssthresh = 0.0; // force congestion avoidance
        s.cwnd = (10 * MSS) as f64;
        s.on_start(SimTime::ZERO);
        let start_cwnd = s.cwnd;
        let mut acked = 0;
        for _ in 0..10 {
            acked += MSS;
            s.on_ack(&plain_ack(acked), SimTime::from_millis(30));
        }
        let grown = s.cwnd - start_cwnd;
        assert!(
            (grown - MSS as f64).abs() < MSS as f64 * 0.06,
            "one window of ACKs grew cwnd by {grown} bytes"
        );
    }

    #[test]
    fn cwnd_plateaus_at_the_receive_window() {
        let mut s = sender();
        s.cfg.rcv_wnd = 8 * MSS;
        s.ssthresh = s.cfg.rcv_wnd as f64;
        let mut acked = 0;
        s.on_start(SimTime::ZERO);
        for _ in 0..100 {
            acked += MSS;
            s.on_ack(&plain_ack(acked), SimTime::from_millis(1));
        }
        assert_eq!(s.cwnd_bytes(), 8 * MSS);
    }

    #[test]
    fn three_sacked_segments_above_a_hole_trigger_recovery() {
        let mut s = sender();
        s.cwnd = (10 * MSS) as f64;
        s.on_start(SimTime::ZERO);
        let t = SimTime::from_millis(30);
        // Segment 0 lost; 1..=3 arrive and are SACKed.
        s.on_ack(&sack_ack(0, &[(MSS, 2 * MSS)]), t);
        assert!(s.recovery_point.is_none());
        s.on_ack(&sack_ack(0, &[(MSS, 3 * MSS)]), t);
        assert!(s.recovery_point.is_none());
        let out = s.on_ack(&sack_ack(0, &[(MSS, 4 * MSS)]), t);
        assert!(s.recovery_point.is_some());
        assert_eq!(s.loss_events, 1);
        // The hole is retransmitted at once.
        let rxt: Vec<_> = out.emissions.iter().filter(|e| e.retransmission).collect();
        assert_eq!(rxt.len(), 1);
        assert_eq!(rxt[0].segment.seq, 0);
    }

    #[test]
    fn loss_halves_the_window_once_per_episode() {
        let mut s = sender();
        s.cwnd = 200_000.0;
        s.ssthresh = 0.0;
        s.on_start(SimTime::ZERO);
        let t = SimTime::from_millis(30);
        s.on_ack(&sack_ack(0, &[(MSS, 4 * MSS)]), t);
        assert_eq!(s.cwnd_bytes(), 100_000);
        assert_eq!(s.ssthresh as u64, 100_000);
        // A second loss signal inside the same recovery window: no change.
        s.on_ack(&sack_ack(0, &[(MSS, 6 * MSS)]), t);
        assert_eq!(s.cwnd_bytes(), 100_000);
        assert_eq!(s.loss_events, 1);
    }

    #[test]
    fn halving_never_goes_below_two_segments() {
        let mut s = sender();
        s.cwnd = (3 * MSS) as f64;
        s.on_start(SimTime::ZERO);
        s.on_ack(
            &sack_ack(0, &[(MSS, 2 * MSS), (2 * MSS, 3 * MSS)]),
            SimTime::from_millis(30),
        );
        let mut emissions = Vec::new();
        s.on_loss_detected(&mut emissions);
        assert_eq!(s.cwnd_bytes(), 2 * MSS);
    }

    #[test]
    fn cumulative_ack_past_recovery_point_ends_recovery() {
        let mut s = sender();
        s.cwnd = (10 * MSS) as f64;
        s.on_start(SimTime::ZERO);
        let t = SimTime::from_millis(30);
        s.on_ack(&sack_ack(0, &[(MSS, 4 * MSS)]), t);
        let point = s.recovery_point.expect("in recovery");
        s.on_ack(&plain_ack(point), SimTime::from_millis(60));
        assert!(s.recovery_point.is_none());
    }

    #[test]
    fn timeout_collapses_to_one_segment_and_keeps_sack_state() {
        let mut s = sender();
        s.cwnd = (100 * MSS) as f64;
        s.on_start(SimTime::ZERO);
        let t = SimTime::from_millis(30);
        s.on_ack(&sack_ack(0, &[(2 * MSS, 3 * MSS)]), t);
        let sacked_before = s.scoreboard.sacked_total();
        let out = s.on_rto(SimTime::from_secs_f64(1.0));
        assert_eq!(s.cwnd_bytes(), MSS);
        assert_eq!(s.ssthresh as u64, 50 * MSS);
        assert_eq!(s.timeouts, 1);
        assert_eq!(s.scoreboard.sacked_total(), sacked_before);
        // Retransmits from the front, not past the SACKed island.
        assert_eq!(out.emissions.len(), 1);
        assert_eq!(out.emissions[0].segment.seq, 0);
        assert!(out.emissions[0].segment.len <= 2 * MSS);
    }

    #[test]
    fn timeout_recovery_retransmits_holes_lacking_sack_evidence() {
        let mut s = sender();
        s.cwnd = (10 * MSS) as f64;
        s.on_start(SimTime::ZERO);
        let t = SimTime::from_millis(30);
        // One thin SACK island high up: far below the three-segment
        // evidence bar that gates retransmission in fast recovery.
        s.on_ack(&sack_ack(0, &[(8 * MSS, 9 * MSS)]), t);
        let out = s.on_rto(SimTime::from_secs_f64(1.0));
        assert_eq!(out.emissions[0].segment.seq, 0);
        // The ACK for the retransmitted head must pull the next hole out
        // immediately: after a timeout nothing older than the timeout can
        // still be in flight, so the evidence bar is waived.
        let out = s.on_ack(
            &sack_ack(MSS, &[(8 * MSS, 9 * MSS)]),
            SimTime::from_secs_f64(1.03),
        );
        assert!(!out.emissions.is_empty(), "sender wedged after its timeout");
        assert_eq!(out.emissions[0].segment.seq, MSS);
        assert!(out.emissions[0].retransmission);
    }

    #[test]
    fn timeout_recovery_reaches_the_tail_above_the_last_sacked_range() {
        let mut s = sender();
        s.cwnd = (6 * MSS) as f64;
        s.on_start(SimTime::ZERO);
        s.on_ack(
            &sack_ack(0, &[(2 * MSS, 3 * MSS)]),
            SimTime::from_millis(30),
        );
        s.on_rto(SimTime::from_secs_f64(1.0));
        // The cumulative ACK collects everything through the island; what
        // remains is the pure tail, with no SACK evidence above it at all.
        let out = s.on_ack(&plain_ack(3 * MSS), SimTime::from_secs_f64(1.03));
        assert!(!out.emissions.is_empty(), "tail never retransmitted");
        assert_eq!(out.emissions[0].segment.seq, 3 * MSS);
        assert!(out.emissions[0].retransmission);
    }

    #[test]
    fn sack_evidence_bar_returns_once_timeout_recovery_ends() {
        let mut s = sender();
        s.cwnd = (10 * MSS) as f64;
        s.on_start(SimTime::ZERO);
        s.on_rto(SimTime::from_secs_f64(1.0));
        // Clearing the whole timeout window ends recovery and resumes new
        // data in slow start.
        let out = s.on_ack(&plain_ack(10 * MSS), SimTime::from_secs_f64(1.03));
        assert!(s.recovery_point.is_none());
        assert!(out.emissions.iter().all(|e| !e.retransmission));
        // A lone SACKed segment above a fresh hole is not loss evidence
        // outside a timeout: nothing below it may be resent.
        let out = s.on_ack(
            &sack_ack(10 * MSS, &[(11 * MSS, 12 * MSS)]),
            SimTime::from_secs_f64(1.06),
        );
        assert!(out.emissions.iter().all(|e| !e.retransmission));
    }

    #[test]
    fn timer_cancels_when_everything_is_acked() {
        let mut s = sender();
        s.on_start(SimTime::ZERO);
        let out = s.on_ack(&plain_ack(MSS), SimTime::from_millis(30));
        // New data goes out immediately, so the timer re-arms instead.
        assert!(matches!(out.timer, TimerOp::ResetTo(_)));
        // Forbid new data and ack it all: timer stops.
        s.cfg.rcv_wnd = 0;
        let out = s.on_ack(&plain_ack(s.snd_nxt), SimTime::from_millis(60));
        assert!(matches!(out.timer, TimerOp::Cancel));
    }

    #[test]
    #[should_panic(expected = "ACK")]
    fn ack_for_unsent_data_is_a_model_bug() {
        let mut s = sender();
        s.on_start(SimTime::ZERO);
        s.on_ack(&plain_ack(100 * MSS), SimTime::from_millis(1));
    }

    #[test]
    fn rto_respects_floor_and_granularity() {
        let mut s = sender();
        s.take_rtt_sample(SimTime::from_millis(30));
        // 30 ms srtt + variance is far below the 500 ms floor.
        assert_eq!(s.rto, SimTime::from_millis(500));
        s.srtt = None;
        s.take_rtt_sample(SimTime::from_millis(170));
        // 170 + 4*85 = 510 ms, rounded up to the 100 ms grid.
        assert_eq!(s.rto, SimTime::from_millis(600));
    }

    #[test]
    fn receiver_acks_in_order_data_without_sack() {
        let mut r = TcpReceiver::new(ConnId(0), false);
        let out = r.on_data(&TcpSegment::data(ConnId(0), 0, MSS), SimTime::ZERO);
        let ack = out.ack.expect("immediate ack");
        assert_eq!(ack.ack, MSS);
        assert!(ack.sack.is_empty());
        assert_eq!(r.delivered_bytes(), MSS);
    }

    #[test]
    fn receiver_reports_islands_and_absorbs_them_in_order() {
        let mut r = TcpReceiver::new(ConnId(0), false);
        r.on_data(&TcpSegment::data(ConnId(0), 0, MSS), SimTime::ZERO);
        // Segment at MSS lost; 2*MSS arrives.
        let out = r.on_data(&TcpSegment::data(ConnId(0), 2 * MSS, MSS), SimTime::ZERO);
        let ack = out.ack.expect("dup ack is immediate");
        assert_eq!(ack.ack, MSS);
        assert_eq!(
            ack.sack,
            vec![SackBlock {
                start: 2 * MSS,
                end: 3 * MSS
            }]
        );
        // The hole fills: cumulative jumps over the island.
        let out = r.on_data(&TcpSegment::data(ConnId(0), MSS, MSS), SimTime::ZERO);
        assert_eq!(out.ack.expect("ack").ack, 3 * MSS);
        assert_eq!(r.delivered_bytes(), 3 * MSS);
    }

    #[test]
    fn receiver_orders_sack_blocks_by_recency_and_caps_at_three() {
        let mut r = TcpReceiver::new(ConnId(0), false);
        // Four separate islands arrive.
        for k in [2u64, 4, 6, 8] {
            r.on_data(&TcpSegment::data(ConnId(0), k * MSS, MSS), SimTime::ZERO);
        }
        let out = r.on_data(&TcpSegment::data(ConnId(0), 4 * MSS, MSS), SimTime::ZERO);
        let ack = out.ack.expect("ack");
        assert_eq!(ack.sack.len(), 3);
        // Most recent first.
        assert_eq!(ack.sack[0].start, 4 * MSS);
    }

    #[test]
    fn duplicate_delivery_never_inflates_the_byte_count() {
        let mut r = TcpReceiver::new(ConnId(0), false);
        let seg = TcpSegment::data(ConnId(0), 0, MSS);
        r.on_data(&seg, SimTime::ZERO);
        r.on_data(&seg, SimTime::ZERO);
        assert_eq!(r.delivered_bytes(), MSS);
    }

    #[test]
    fn delayed_ack_acks_every_second_segment() {
        let mut r = TcpReceiver::new(ConnId(0), true);
        let out1 = r.on_data(&TcpSegment::data(ConnId(0), 0, MSS), SimTime::ZERO);
        assert!(out1.ack.is_none());
        assert!(matches!(out1.timer, TimerOp::ResetTo(_)));
        let out2 = r.on_data(&TcpSegment::data(ConnId(0), MSS, MSS), SimTime::ZERO);
        assert_eq!(out2.ack.expect("second segment acked").ack, 2 * MSS);
        assert!(matches!(out2.timer, TimerOp::Cancel));
    }

    #[test]
    fn delayed_ack_timer_flushes_a_lone_segment() {
        let mut r = TcpReceiver::new(ConnId(0), true);
        r.on_data(&TcpSegment::data(ConnId(0), 0, MSS), SimTime::ZERO);
        let out = r.on_delack_timer();
        assert_eq!(out.ack.expect("flushed").ack, MSS);
    }

    #[test]
    fn delayed_ack_halves_ack_volume_in_order() {
        // One window of 8 in-order segments: 8 immediate ACKs normally,
        // 4 when delayed ACKs pair segments up.
        let count_acks = |delayed: bool| {
            let mut r = TcpReceiver::new(ConnId(0), delayed);
            let mut acks = 0;
            for i in 0..8u64 {
                if r.on_data(&TcpSegment::data(ConnId(0), i * MSS, MSS), SimTime::ZERO)
                    .ack
                    .is_some()
                {
                    acks += 1;
                }
            }
            acks
        };
        assert_eq!(count_acks(false), 8);
        assert_eq!(count_acks(true), 4);
    }

    #[test]
    fn scaled_window_matches_shift() {
        assert_eq!(TcpConfig::scaled_window(37_500, 4), 600_000);
    }

    proptest! {
        // Scoreboard ranges stay sorted, disjoint, and above the cumulative
        // ACK under arbitrary insert/advance interleavings.
        #[test]
        fn scoreboard_stays_canonical(
            ops in proptest::collection::vec((0u64..100, 1u64..20, proptest::bool::ANY), 1..80)
        ) {
            let mut sb = Scoreboard::default();
            let mut ack = 0u64;
            for (a, b, is_insert) in ops {
                if is_insert {
                    // Mirror the sender's contract: blocks at or below the
                    // cumulative ACK are stale and get clipped before insert.
                    let (s, e) = (a * MSS, (a + b) * MSS);
                    if e > ack {
                        sb.insert(s.max(ack), e);
                    }
                } else {
                    ack = ack.max(a * MSS);
                    sb.advance(ack);
                }
                let mut prev_end = ack;
                for &(s, e) in &sb.ranges {
                    prop_assert!(s < e);
                    prop_assert!(s >= prev_end, "overlapping or unsorted ranges");
                    prev_end = e;
                }
            }
        }

        // The congestion window never collapses below one segment no matter
        // how loss signals and timeouts interleave with ACK progress.
        #[test]
        fn cwnd_never_drops_below_one_segment(
            ops in proptest::collection::vec(0u8..4, 1..60)
        ) {
            let mut s = sender();
            s.on_start(SimTime::ZERO);
            let mut now = SimTime::ZERO;
            for op in ops {
                now += SimTime::from_millis(10);
                match op {
                    0 => {
                        let target = (s.snd_una + MSS).min(s.snd_nxt);
                        if target > s.snd_una {
                            s.on_ack(&plain_ack(target), now);
                        }
                    }
                    1 => {
                        if s.snd_nxt > s.snd_una + 4 * MSS {
                            let blocks = [(s.snd_una + MSS, s.snd_una + 4 * MSS)];
                            s.on_ack(&sack_ack(s.snd_una, &blocks), now);
                        }
                    }
                    2 => {
                        if s.snd_una < s.snd_nxt {
                            s.on_rto(now);
                        }
                    }
                    _ => {
                        s.transmit(now);
                    }
                }
                prop_assert!(s.cwnd_bytes() >= MSS);
            }
        }
    }
}
