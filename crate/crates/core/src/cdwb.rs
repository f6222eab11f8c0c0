//! Segment-based collision detector that assumes a unique leader and
//! population bounds `n_lower <= n <= n_upper`.
//!
//! Ranks in `[1, n_upper]` are cut into `z` segments of length `ell`. The
//! phase clock walks through epochs `1..=r*z`; epoch `i` is dedicated to
//! segment `(i - 1) mod z`. Members of that segment mint a group identifier
//! (offset within the segment, one-bit nonce) that spreads to at most
//! `2^i_max` agents. Two copies with equal offsets and different nonces can
//! only come from two agents holding the same rank, so their meeting raises
//! the flag. A direct same-rank meeting (the backup) raises it as well.
//!
//! Epochs never decrease, so a group identifier from one epoch never meets
//! another epoch's identifier under the `a.epoch == b.epoch` guard. That is
//! why no flag is ever raised on distinct ranks, whatever the leader count or
//! bounds.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{bits_for_domain, Coins, Events, Protocol};
use crate::error::{Error, Result};
use crate::primitives::{epidemic_step, phase_clock_step, LeaderAssignment, PhaseClockState};
use crate::sizing::bounds_from_log_num;

/// Design parameters derived from the population bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub n_lower: u64,
    pub n_upper: u64,
    pub eta: f64,
    /// Segment length, `ceil(sqrt(n_lower * log2 n_lower))`.
    pub ell: u64,
    /// Segment count, `ceil(n_upper / ell)`.
    pub z: u64,
    /// Epochs per segment, `ceil(3 * eta * log2 n_upper)`.
    pub r: u64,
    /// Phase-clock cap `r * z + 1`.
    pub cap: u32,
    /// Initial infectivity, `floor(log2 n_lower - log2 ell) - 2`, at least 0.
    pub i_max: u32,
}

impl SegmentParams {
    pub fn derive(n_lower: u64, n_upper: u64, eta: f64) -> Result<Self> {
        if n_lower < 2 {
            return Err(Error::input(format!("n_lower must be at least 2, got {n_lower}")));
        }
        if n_lower > n_upper {
            return Err(Error::input(format!(
                "n_lower {n_lower} exceeds n_upper {n_upper}"
            )));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::input(format!("eta must be positive, got {eta}")));
        }
        let nl = n_lower as f64;
        let ell = (nl * nl.log2()).sqrt().ceil() as u64;
        let z = n_upper.div_ceil(ell);
        let r = (3.0 * eta * (n_upper as f64).log2()).ceil() as u64;
        let cap = r
            .checked_mul(z)
            .and_then(|f| f.checked_add(1))
            .and_then(|f| u32::try_from(f).ok())
            .ok_or_else(|| Error::input("epoch cap r*z+1 does not fit in 32 bits"))?;
        // floor(log2(n_lower / ell)) is the largest j with ell * 2^j <= n_lower.
        let i_max = if ell > n_lower {
            0
        } else {
            let j = (n_lower / ell).ilog2();
            j.saturating_sub(2)
        };
        Ok(Self {
            n_lower,
            n_upper,
            eta,
            ell,
            z,
            r,
            cap,
            i_max,
        })
    }

    /// Bounds `2^(floor(log2 n) - 1)` and `2^(floor(log2 n) + 1)`, what an
    /// exact size estimate would hand the detector.
    pub fn for_population(n: usize, eta: f64) -> Result<Self> {
        let log_num = (n.max(2)).ilog2();
        let (lo, hi) = bounds_from_log_num(log_num, (1, 1));
        Self::derive(lo, hi, eta)
    }

    /// Segment holding `rank`, if any.
    pub fn segment_of(&self, rank: u32) -> Option<u64> {
        let rank = rank as u64;
        (rank >= 1 && rank <= self.n_upper).then(|| (rank - 1) / self.ell)
    }

    /// Segment an epoch is dedicated to; epoch 0 has none.
    pub fn segment_for_epoch(&self, epoch: u32) -> Option<u64> {
        (epoch > 0).then(|| (epoch as u64 - 1) % self.z)
    }

    /// Most agents that can carry a group identifier during one epoch when at
    /// most `2 ell` agents belong to the active segment.
    pub fn non_null_cap(&self) -> u64 {
        2 * self.ell * (1u64 << self.i_max)
    }
}

/// Group identifier: offset within the active segment and a one-bit nonce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Gid {
    pub offset: u32,
    pub nonce: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Nonces come from a fair coin.
    #[default]
    Randomized,
    /// Nonces come from the scheduler: an agent whose epoch went up waits
    /// for its next interaction and takes 0 as initiator, 1 as responder.
    Derandomized,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "randomized" => Ok(Mode::Randomized),
            "derandomized" => Ok(Mode::Derandomized),
            _ => Err(Error::input(format!("unknown mode {s:?}"))),
        }
    }
}

/// Detector variables of one agent. The rank is held by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CdwbState {
    pub collision: bool,
    pub gid: Option<Gid>,
    pub infectivity: u8,
    pub clock: PhaseClockState,
    pub waiting: bool,
}

impl CdwbState {
    pub fn initial(leader: bool, m: u16) -> Self {
        Self {
            collision: false,
            gid: None,
            infectivity: 0,
            clock: PhaseClockState::initial(leader, m),
            waiting: false,
        }
    }

    /// Back to initial values, keeping the output bit unless `clear_output`.
    pub fn reset(&mut self, leader: bool, m: u16, clear_output: bool) {
        let collision = self.collision && !clear_output;
        *self = Self::initial(leader, m);
        self.collision = collision;
    }

    pub fn is_null(&self) -> bool {
        self.gid.is_none()
    }
}

/// Mints the group identifier for the current epoch, or nulls the agent when
/// its rank lies outside the dedicated segment.
fn enter_epoch(state: &mut CdwbState, rank: u32, params: &SegmentParams, nonce: bool) {
    let k = params
        .segment_for_epoch(state.clock.epoch)
        .expect("epoch increased past 0");
    if params.segment_of(rank) == Some(k) {
        state.gid = Some(Gid {
            offset: (rank as u64 - k * params.ell) as u32,
            nonce,
        });
        state.infectivity = params.i_max as u8;
    } else {
        state.gid = None;
        state.infectivity = 0;
    }
}

fn finish_waiting(state: &mut CdwbState, rank: u32, params: &SegmentParams, nonce: bool) {
    state.waiting = false;
    let k = params.segment_for_epoch(state.clock.epoch);
    if k.is_some() && params.segment_of(rank) == k {
        enter_epoch(state, rank, params, nonce);
    }
}

/// One detector interaction, initiator `a` and responder `b`.
#[allow(clippy::too_many_arguments)]
pub fn cdwb_interact(
    a: &mut CdwbState,
    a_rank: u32,
    b: &mut CdwbState,
    b_rank: u32,
    params: &SegmentParams,
    m: u16,
    mode: Mode,
    coins: &mut Coins,
) -> Events {
    let mut events = Events::empty();

    if mode == Mode::Derandomized {
        if a.waiting {
            finish_waiting(a, a_rank, params, false);
        }
        if b.waiting {
            finish_waiting(b, b_rank, params, true);
        }
    }

    // Backup: equal ranks meet.
    if a_rank == b_rank {
        if !b.collision {
            events |= Events::RAISED_BACKUP;
        }
        b.collision = true;
    }

    if phase_clock_step(&a.clock, &mut b.clock, m, params.cap) {
        events |= Events::EPOCH_INCREASE;
        match mode {
            Mode::Randomized => {
                let nonce = coins.gen::<bool>();
                enter_epoch(b, b_rank, params, nonce);
            }
            Mode::Derandomized => {
                b.waiting = true;
                b.gid = None;
                b.infectivity = 0;
            }
        }
    }

    if a.clock.epoch == b.clock.epoch && b.clock.epoch > 0 {
        if let (Some(gid), true, None) = (a.gid, a.infectivity > 0, b.gid) {
            b.gid = Some(gid);
            a.infectivity -= 1;
            b.infectivity = a.infectivity;
        }
        if let (Some(ga), Some(gb)) = (a.gid, b.gid) {
            if ga.offset == gb.offset && ga.nonce != gb.nonce {
                events |= Events::CDWB_MISMATCH;
                if !b.collision {
                    events |= Events::RAISED_CDWB;
                }
                b.collision = true;
            }
        }
    }

    b.collision = epidemic_step(a.collision, b.collision);
    events
}

/// Bits of the detector variables under `params`.
pub fn cdwb_state_bits(params: &SegmentParams, m: u16, mode: Mode) -> u32 {
    let mut bits = bits_for_domain(m as u64)
        + bits_for_domain(params.cap as u64 + 1)
        + 1
        + bits_for_domain(2 * params.ell + 1)
        + bits_for_domain(params.i_max as u64 + 1);
    if mode == Mode::Derandomized {
        bits += 1;
    }
    bits
}

/// The detector run on its own with a leader fixed by the harness.
#[derive(Debug, Clone, Copy)]
pub struct CdwbProtocol {
    pub params: SegmentParams,
    pub m: u16,
    pub mode: Mode,
    pub leaders: LeaderAssignment,
}

impl CdwbProtocol {
    pub fn new(params: SegmentParams, m: u16, mode: Mode) -> Self {
        assert!(m >= 2, "phase clock needs m >= 2");
        Self {
            params,
            m,
            mode,
            leaders: LeaderAssignment::Single,
        }
    }

    pub fn with_leaders(mut self, leaders: LeaderAssignment) -> Self {
        self.leaders = leaders;
        self
    }
}

impl Protocol for CdwbProtocol {
    type State = CdwbState;

    fn name(&self) -> &'static str {
        "cdwb"
    }

    fn initial_state(&self, id: usize, _rank: u32) -> CdwbState {
        CdwbState::initial(self.leaders.is_leader(id), self.m)
    }

    fn interact(
        &self,
        a: &mut CdwbState,
        a_rank: u32,
        b: &mut CdwbState,
        b_rank: u32,
        coins: &mut Coins,
    ) -> Events {
        cdwb_interact(a, a_rank, b, b_rank, &self.params, self.m, self.mode, coins)
    }

    fn collision(&self, state: &CdwbState) -> bool {
        state.collision
    }

    fn state_bits(&self, _state: &CdwbState) -> u32 {
        cdwb_state_bits(&self.params, self.m, self.mode)
    }

    fn epoch(&self, state: &CdwbState) -> u32 {
        state.clock.epoch
    }
}

/// Whether all non-null agents that share an epoch and an offset also share
/// a nonce. Holds at every step of a run on distinct ranks.
pub fn nonce_coherent<'a>(states: impl IntoIterator<Item = &'a CdwbState>) -> bool {
    let mut seen: HashMap<(u32, u32), bool> = HashMap::new();
    for s in states {
        if let Some(g) = s.gid {
            match seen.insert((s.clock.epoch, g.offset), g.nonce) {
                Some(prev) if prev != g.nonce => return false,
                _ => {}
            }
        }
    }
    true
}
