//! Frame/cell adaptation: TCP segments ride in AAL5 frames, frames are cut
//! into fixed-size cells, and cells are reassembled back into frames at the
//! far side. Also home to the frame-boundary merge scheduler used by edge
//! devices that multiplex several TCP streams onto one virtual circuit.

use crate::ids::{FlowId, FrameId, VcId};
use crate::tcp::TcpSegment;

/// Payload bytes carried per cell.
pub const CELL_PAYLOAD_BYTES: u64 = 48;
/// Wire size of one cell including its header.
pub const CELL_WIRE_BYTES: u64 = 53;
/// Wire bits per cell; what a link serializes per cell.
pub const CELL_WIRE_BITS: u64 = CELL_WIRE_BYTES * 8;
/// Frame trailer added to every frame before cell division.
pub const FRAME_TRAILER_BYTES: u64 = 8;
/// TCP/IP header bytes prepended to every segment payload.
pub const TCPIP_HEADER_BYTES: u64 = 40;

/// Number of cells needed for a frame payload of `payload_len` bytes
/// (headers included, trailer added here).
pub fn cells_for_payload(payload_len: u64) -> u32 {
    assert!(payload_len > 0, "zero-length frame");
    ((payload_len + FRAME_TRAILER_BYTES).div_ceil(CELL_PAYLOAD_BYTES)) as u32
}

/// A whole frame: one TCP segment plus adaptation overhead, about to be (or
/// just reassembled from) `cell_count` cells.
#[derive(Debug, Clone)]
pub struct Frame {
    pub vc: VcId,
    pub flow: FlowId,
    pub id: FrameId,
    pub cell_count: u32,
    pub segment: TcpSegment,
    pub tagged: bool,
}

/// Metadata carried on a frame's final cell so the reassembler can hand the
/// segment up without a side registry of in-flight frames.
#[derive(Debug, Clone)]
pub struct FrameEnd {
    pub segment: TcpSegment,
    pub cell_count: u32,
}

/// One cell. `end` is present exactly on the last cell of its frame.
#[derive(Debug, Clone)]
pub struct Cell {
    pub vc: VcId,
    pub flow: FlowId,
    pub frame: FrameId,
    pub index: u32,
    pub end: Option<Box<FrameEnd>>,
    pub tagged: bool,
}

impl Cell {
    pub fn is_first(&self) -> bool {
        self.index == 0
    }

    pub fn is_last(&self) -> bool {
        self.end.is_some()
    }
}

/// Wrap a TCP segment into a frame bound for `vc`.
///
/// `max_frame_bytes` is the largest frame payload the circuit accepts;
/// exceeding it is a configuration error, not a runtime drop.
pub fn segment_frame(
    vc: VcId,
    flow: FlowId,
    id: FrameId,
    segment: TcpSegment,
    max_frame_bytes: u64,
) -> Frame {
    let payload_len = segment.wire_len();
    assert!(
        payload_len <= max_frame_bytes,
        "frame payload {payload_len} exceeds the configured maximum {max_frame_bytes}"
    );
    let cell_count = cells_for_payload(payload_len);
    Frame {
        vc,
        flow,
        id,
        cell_count,
        segment,
        tagged: false,
    }
}

impl Frame {
    /// Materialize the `i`-th cell of this frame.
    pub fn cell(&self, index: u32) -> Cell {
        assert!(index < self.cell_count);
        let end = (index + 1 == self.cell_count).then(|| {
            Box::new(FrameEnd {
                segment: self.segment.clone(),
                cell_count: self.cell_count,
            })
        });
        Cell {
            vc: self.vc,
            flow: self.flow,
            frame: self.id,
            index,
            end,
            tagged: self.tagged,
        }
    }

    /// All cells of the frame in order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cell_count).map(|i| self.cell(i))
    }
}

#[derive(Debug)]
struct InProgress {
    frame: FrameId,
    vc: VcId,
    flow: FlowId,
    tagged: bool,
    next_index: u32,
    /// Set when a cell went missing mid-frame; the rest of the frame is
    /// consumed and then discarded.
    poisoned: bool,
}

/// Per-stream frame reassembler. A frame is delivered only when every one of
/// its cells arrived in order; a truncated or gapped frame is counted and
/// dropped whole.
///
/// Interleaving two frames on one stream is a contract violation upstream of
/// here (frames on a VC never interleave), so it panics rather than recovers.
#[derive(Debug, Default)]
pub struct Reassembler {
    current: Option<InProgress>,
    discarded: u64,
    delivered: u64,
}

impl Reassembler {
    pub fn new() -> Reassembler {
        Reassembler::default()
    }

    /// Frames dropped because of missing cells (truncation or mid-frame gap).
    pub fn discarded(&self) -> u64 {
        self.discarded
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    /// Feed one cell; returns a whole frame when this cell completes one.
    pub fn push(&mut self, cell: Cell) -> Option<Frame> {
        if cell.is_first() {
            // A new frame may begin while the previous one is unterminated:
            // that is upstream truncation (tail discarded in a full buffer),
            // and the incomplete frame is dropped here.
            if self.current.take().is_some() {
                self.discarded += 1;
            }
            self.current = Some(InProgress {
                frame: cell.frame,
                vc: cell.vc,
                flow: cell.flow,
                tagged: cell.tagged,
                next_index: 0,
                poisoned: false,
            });
        }

        let cur = self
            .current
            .as_mut()
            .unwrap_or_else(|| panic!("cell stream for {} began mid-frame", cell.vc));
        assert!(
            cur.frame == cell.frame,
            "frames interleaved on {}: cell of {:?} arrived inside {:?}",
            cell.vc,
            cell.frame,
            cur.frame
        );

        if cell.index != cur.next_index {
            assert!(
                cell.index > cur.next_index,
                "duplicate cell {} of {:?}",
                cell.index,
                cell.frame
            );
            cur.poisoned = true;
        }
        cur.next_index = cell.index + 1;

        if let Some(end) = cell.end {
            let cur = self.current.take().expect("frame state vanished");
            let complete = !cur.poisoned && cur.next_index == end.cell_count;
            if complete {
                self.delivered += 1;
                return Some(Frame {
                    vc: cur.vc,
                    flow: cur.flow,
                    id: cur.frame,
                    cell_count: end.cell_count,
                    segment: end.segment,
                    tagged: cur.tagged,
                });
            }
            self.discarded += 1;
        }
        None
    }
}

/// Multiplexes whole frames from several inputs onto one output cell stream.
///
/// Frames are never interleaved: once a frame's first cell is emitted, every
/// following cell belongs to it until its last. At each frame boundary the
/// next input is chosen round-robin over the non-empty inputs. A single-input
/// scheduler degenerates to FIFO passthrough, which is how plain host NICs
/// use it.
#[derive(Debug)]
pub struct MergeScheduler {
    inputs: Vec<std::collections::VecDeque<Frame>>,
    next_input: usize,
    active: Option<(Frame, u32)>,
}

impl MergeScheduler {
    pub fn new(inputs: usize) -> MergeScheduler {
        assert!(inputs > 0);
        MergeScheduler {
            inputs: (0..inputs).map(|_| Default::default()).collect(),
            next_input: 0,
            active: None,
        }
    }

    pub fn push(&mut self, input: usize, frame: Frame) {
        self.inputs[input].push_back(frame);
    }

    /// Frames waiting (not counting a partially emitted one).
    pub fn queued_frames(&self) -> usize {
        self.inputs.iter().map(|q| q.len()).sum()
    }

    pub fn is_idle(&self) -> bool {
        self.active.is_none() && self.queued_frames() == 0
    }

    /// Next cell to put on the wire, if any input has traffic.
    pub fn next_cell(&mut self) -> Option<Cell> {
        if self.active.is_none() {
            let n = self.inputs.len();
            let start = self.next_input;
            let chosen = (0..n)
                .map(|k| (start + k) % n)
                .find(|&i| !self.inputs[i].is_empty())?;
            self.next_input = (chosen + 1) % n;
            let frame = self.inputs[chosen].pop_front().expect("non-empty input");
            self.active = Some((frame, 0));
        }
        let (frame, idx) = self.active.as_mut().expect("active frame");
        let cell = frame.cell(*idx);
        *idx += 1;
        if *idx == frame.cell_count {
            self.active = None;
        }
        Some(cell)
    }
}
