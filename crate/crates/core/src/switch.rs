//! Output-buffered FIFO switch port with per-virtual-circuit accounting and
//! frame-aware drop policies.
//!
//! Admission decisions are made on the first cell of each frame (early packet
//! discard); once a frame is accepted its remaining cells are admitted unless
//! the buffer physically fills, in which case the tail of the frame is cut
//! (partial packet discard). Both policies see the buffer through two
//! counters: total occupancy and the admitting circuit's occupancy.

use crate::aal5::Cell;
use std::collections::VecDeque;

/// Frame-level drop policy applied at the first cell of every frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropPolicy {
    /// Accept while the buffer has room; drop whole frames only when full.
    Off,
    /// Drop exactly one frame each time the circuit's occupancy crosses its
    /// threshold from below, then hold off until it drains back under.
    ThresholdCrossing,
    /// Probabilistic early discard in a band above the per-circuit fair
    /// share, with guaranteed admission below it.
    GfrProbabilistic,
}

/// Static configuration of one FIFO port.
#[derive(Debug, Clone)]
pub struct PortConfig {
    /// Buffer capacity in cells (hard limit).
    pub capacity_cells: u64,
    /// Global congestion threshold in cells; no early discard below it.
    pub congestion_threshold_cells: u64,
    /// Width of the discard band as a multiple of each circuit's threshold.
    pub occupancy_scale: f64,
    /// Honor the frame tag bit: tagged frames get no probabilistic grace.
    pub tag_sensitive: bool,
    pub policy: DropPolicy,
}

impl PortConfig {
    fn validate(&self, thresholds: &[u64]) {
        assert!(self.capacity_cells > 0, "zero-capacity port");
        assert!(
            self.congestion_threshold_cells <= self.capacity_cells,
            "congestion threshold beyond capacity"
        );
        if self.policy == DropPolicy::GfrProbabilistic {
            assert!(
                self.occupancy_scale > 1.0,
                "occupancy scale must exceed 1 for a non-empty discard band"
            );
            for (i, &r) in thresholds.iter().enumerate() {
                assert!(
                    r > 0,
                    "circuit {i} has a zero threshold under the probabilistic policy"
                );
            }
        }
    }
}

/// What happened to an arriving cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalOutcome {
    Enqueued,
    /// First cell refused: the whole frame will be dropped.
    FrameRefused,
    /// Mid-frame cell dropped (buffer full or earlier cut); the frame is
    /// already doomed but its enqueued prefix stays.
    CellDropped,
}

/// Where a circuit stands within the current frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FrameState {
    Idle,
    Accepting,
    Discarding,
}

/// Per-virtual-circuit admission state and statistics.
#[derive(Debug)]
pub struct VcAccount {
    /// Cells of this circuit currently buffered.
    pub occupancy: u64,
    /// Fair-share threshold in cells.
    pub threshold: u64,
    /// Drop-probability weight in (0, 1].
    pub weight: f64,
    /// Threshold-crossing policy: ready to drop on the next crossing.
    armed: bool,
    state: FrameState,
    current_frame: Option<u64>,
    next_index: u32,
    pub frames_in: u64,
    pub frames_refused: u64,
    pub frames_truncated: u64,
    pub cells_enqueued: u64,
    pub max_occupancy: u64,
}

impl VcAccount {
    fn new(threshold: u64, weight: f64) -> VcAccount {
        assert!(weight > 0.0 && weight <= 1.0, "weight outside (0, 1]");
        VcAccount {
            occupancy: 0,
            threshold,
            weight,
            armed: true,
            state: FrameState::Idle,
            current_frame: None,
            next_index: 0,
            frames_in: 0,
            frames_refused: 0,
            frames_truncated: 0,
            cells_enqueued: 0,
            max_occupancy: 0,
        }
    }
}

/// Probability of refusing a frame in the probabilistic discard band:
/// proportional to how far the circuit sits above its threshold, scaled by
/// its weight, and clamped so the weight is also the ceiling.
pub fn drop_probability(occupancy: u64, threshold: u64, scale: f64, weight: f64) -> f64 {
    let r = threshold as f64;
    let raw = weight * (occupancy as f64 - r) / (r * (scale - 1.0));
    raw.clamp(0.0, weight)
}

/// First-cell admission under the probabilistic policy. `uniform` is one
/// draw from [0, 1).
pub fn gfr_first_cell_decision(
    cfg: &PortConfig,
    total_occupancy: u64,
    acct: &VcAccount,
    tagged: bool,
    uniform: f64,
) -> bool {
    let under_global = total_occupancy < cfg.congestion_threshold_cells;
    if acct.occupancy < acct.threshold && under_global {
        return true;
    }
    if !under_global {
        return false;
    }
    let band_top = (cfg.occupancy_scale * acct.threshold as f64) as u64;
    if acct.occupancy >= band_top {
        return false;
    }
    if cfg.tag_sensitive && tagged {
        return false;
    }
    let p = drop_probability(
        acct.occupancy,
        acct.threshold,
        cfg.occupancy_scale,
        acct.weight,
    );
    uniform >= p
}

/// First-cell admission under the threshold-crossing policy: drop one frame
/// per upward crossing of the circuit's threshold.
fn threshold_crossing_decision(acct: &mut VcAccount) -> bool {
    if acct.armed && acct.occupancy >= acct.threshold {
        acct.armed = false;
        return false;
    }
    true
}

/// An output-buffered FIFO port.
#[derive(Debug)]
pub struct FifoPort {
    cfg: PortConfig,
    queue: VecDeque<Cell>,
    occupancy: u64,
    accounts: Vec<VcAccount>,
    /// Circuit ids on this port start here; account index = vc - base.
    vc_base: u32,
    pub max_occupancy: u64,
    pub cells_dropped: u64,
}

impl FifoPort {
    /// Build a port serving circuits with ids `0..thresholds.len()` mapped
    /// by the caller; `vc_index` passed to arrival must index this table.
    pub fn new(cfg: PortConfig, thresholds: &[u64], weights: &[f64]) -> FifoPort {
        assert_eq!(thresholds.len(), weights.len());
        cfg.validate(thresholds);
        let accounts = thresholds
            .iter()
            .zip(weights)
            .map(|(&t, &w)| VcAccount::new(t, w))
            .collect();
        FifoPort {
            cfg,
            queue: VecDeque::new(),
            occupancy: 0,
            accounts,
            vc_base: 0,
            max_occupancy: 0,
            cells_dropped: 0,
        }
    }

    pub fn occupancy(&self) -> u64 {
        self.occupancy
    }

    pub fn policy(&self) -> DropPolicy {
        self.cfg.policy
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn account(&self, vc_index: usize) -> &VcAccount {
        &self.accounts[vc_index]
    }

    pub fn accounts(&self) -> &[VcAccount] {
        &self.accounts
    }

    fn check_accounting(&self) {
        debug_assert_eq!(
            self.occupancy,
            self.accounts.iter().map(|a| a.occupancy).sum::<u64>(),
            "per-circuit occupancies out of sync with the total"
        );
        debug_assert_eq!(self.occupancy as usize, self.queue.len());
    }

    /// Process one arriving cell; its circuit id selects the account.
    /// `uniform` is a fresh [0, 1) draw, consumed only by the probabilistic
    /// policy on first cells.
    pub fn on_cell_arrival(&mut self, cell: Cell, uniform: f64) -> ArrivalOutcome {
        let vc_index = (cell.vc.0 - self.vc_base) as usize;
        let acct = &mut self.accounts[vc_index];

        if cell.is_first() {
            // A first cell while a frame is still open means the previous
            // frame was truncated upstream (its tail never made it here);
            // the state machine simply starts over. Only interleaving is a
            // contract violation, and that is caught below.
            acct.state = FrameState::Idle;
            acct.current_frame = None;
            acct.frames_in += 1;
            let admit = match self.cfg.policy {
                DropPolicy::Off => true,
                DropPolicy::ThresholdCrossing => threshold_crossing_decision(acct),
                DropPolicy::GfrProbabilistic => {
                    gfr_first_cell_decision(&self.cfg, self.occupancy, acct, cell.tagged, uniform)
                }
            };
            // A full buffer refuses the frame regardless of policy.
            let admit = admit && self.occupancy < self.cfg.capacity_cells;
            acct.current_frame = Some(cell.frame.0);
            acct.next_index = 0;
            if !admit {
                acct.frames_refused += 1;
                acct.state = if cell.is_last() {
                    FrameState::Idle
                } else {
                    FrameState::Discarding
                };
                if cell.is_last() {
                    acct.current_frame = None;
                }
                self.cells_dropped += 1;
                self.check_accounting();
                return ArrivalOutcome::FrameRefused;
            }
            acct.state = FrameState::Accepting;
        } else {
            let acct_frame = acct
                .current_frame
                .expect("cell stream began mid-frame at a port");
            assert_eq!(
                acct_frame, cell.frame.0,
                "frames interleaved on {}",
                cell.vc
            );
            acct.next_index += 1;
            debug_assert_eq!(acct.next_index, cell.index, "cell gap inside a frame");
        }

        let last = cell.is_last();
        let outcome = match acct.state {
            FrameState::Accepting => {
                if self.occupancy < self.cfg.capacity_cells {
                    acct.occupancy += 1;
                    acct.max_occupancy = acct.max_occupancy.max(acct.occupancy);
                    acct.cells_enqueued += 1;
                    self.occupancy += 1;
                    self.max_occupancy = self.max_occupancy.max(self.occupancy);
                    self.queue.push_back(cell);
                    ArrivalOutcome::Enqueued
                } else {
                    // Buffer filled mid-frame: cut the tail, keep the prefix.
                    acct.state = FrameState::Discarding;
                    acct.frames_truncated += 1;
                    self.cells_dropped += 1;
                    ArrivalOutcome::CellDropped
                }
            }
            FrameState::Discarding => {
                self.cells_dropped += 1;
                ArrivalOutcome::CellDropped
            }
            FrameState::Idle => unreachable!("mid-frame cell with no frame in progress"),
        };

        if last {
            let acct = &mut self.accounts[vc_index];
            acct.state = FrameState::Idle;
            acct.current_frame = None;
            acct.next_index = 0;
        }
        self.check_accounting();
        outcome
    }

    /// Remove the head cell for transmission.
    pub fn dequeue(&mut self) -> Option<Cell> {
        let cell = self.queue.pop_front()?;
        self.occupancy -= 1;
        let idx = self.vc_index_of(&cell);
        let acct = &mut self.accounts[idx];
        acct.occupancy -= 1;
        if self.cfg.policy == DropPolicy::ThresholdCrossing
            && !acct.armed
            && acct.occupancy < acct.threshold
        {
            acct.armed = true;
        }
        self.check_accounting();
        Some(cell)
    }

    /// The account table is indexed by the caller's mapping; the port itself
    /// records which index each queued cell used via the cell's circuit id
    /// relative to the port's base. Callers with non-contiguous circuit ids
    /// set `vc_base` so index = vc - base.
    fn vc_index_of(&self, cell: &Cell) -> usize {
        (cell.vc.0 - self.vc_base) as usize
    }

    pub fn set_vc_base(&mut self, base: u32) {
        self.vc_base = base;
    }
}
