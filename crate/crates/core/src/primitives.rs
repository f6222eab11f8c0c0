//! One-way epidemic and the leader-driven phase clock.

use serde::{Deserialize, Serialize};

use crate::engine::{bits_for_domain, Coins, Events, Protocol};

/// One-way epidemic: the responder keeps the larger of the two values.
#[inline]
pub fn epidemic_step<T: Ord + Copy>(initiator: T, responder: T) -> T {
    initiator.max(responder)
}

/// Ring maximum used by non-leader timers: `x` wins when it is ahead of `y`
/// by between 1 and `floor(m / 2)` positions modulo `m`.
#[inline]
pub fn max_m(x: u16, y: u16, m: u16) -> u16 {
    debug_assert!(x < m && y < m);
    let ahead = (x + m - y) % m;
    if ahead >= 1 && ahead <= m / 2 {
        x
    } else {
        y
    }
}

/// Phase-clock variables of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhaseClockState {
    pub timer: u16,
    pub epoch: u32,
    pub leader: bool,
}

impl PhaseClockState {
    /// Leaders start at timer 0, everyone else at `m - 1`.
    pub fn initial(leader: bool, m: u16) -> Self {
        Self {
            timer: if leader { 0 } else { m - 1 },
            epoch: 0,
            leader,
        }
    }
}

/// Updates the responder `b` after meeting initiator `a`. Returns whether
/// `b.epoch` increased, either by the leader's own wrap or by adoption.
pub fn phase_clock_step(a: &PhaseClockState, b: &mut PhaseClockState, m: u16, cap: u32) -> bool {
    let start = b.epoch;
    if b.leader {
        if a.timer == b.timer {
            b.timer = (b.timer + 1) % m;
            if b.timer == 0 {
                b.epoch = (b.epoch + 1).min(cap);
            }
        }
    } else {
        b.timer = max_m(a.timer, b.timer, m);
    }
    b.epoch = epidemic_step(a.epoch, b.epoch);
    b.epoch > start
}

/// Who starts as leader in runs that assume a pre-elected one. The honest
/// setting is [`LeaderAssignment::Single`]; the others are adversarial
/// fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeaderAssignment {
    /// Agent 0 leads.
    #[default]
    Single,
    None,
    /// Agents 0 and 1 both lead.
    Two,
}

impl LeaderAssignment {
    pub fn is_leader(self, id: usize) -> bool {
        match self {
            LeaderAssignment::Single => id == 0,
            LeaderAssignment::None => false,
            LeaderAssignment::Two => id < 2,
        }
    }
}

/// Standalone epidemic: agent 0 starts with the value 1, everyone else with
/// 0. The output slot reports whether the agent has been reached.
#[derive(Debug, Clone, Copy, Default)]
pub struct EpidemicProtocol;

impl Protocol for EpidemicProtocol {
    type State = u8;

    fn name(&self) -> &'static str {
        "epidemic"
    }

    fn initial_state(&self, id: usize, _rank: u32) -> u8 {
        u8::from(id == 0)
    }

    fn interact(&self, a: &mut u8, _: u32, b: &mut u8, _: u32, _: &mut Coins) -> Events {
        *b = epidemic_step(*a, *b);
        Events::empty()
    }

    fn collision(&self, state: &u8) -> bool {
        *state >= 1
    }

    fn state_bits(&self, _state: &u8) -> u32 {
        1
    }

    fn detects_collisions(&self) -> bool {
        false
    }
}

/// Standalone phase clock with a fixed epoch cap.
#[derive(Debug, Clone, Copy)]
pub struct PhaseClockProtocol {
    pub m: u16,
    pub cap: u32,
    pub leaders: LeaderAssignment,
}

impl PhaseClockProtocol {
    pub fn new(m: u16, cap: u32) -> Self {
        assert!(m >= 2, "phase clock needs m >= 2");
        Self {
            m,
            cap,
            leaders: LeaderAssignment::Single,
        }
    }
}

impl Protocol for PhaseClockProtocol {
    type State = PhaseClockState;

    fn name(&self) -> &'static str {
        "phaseclock"
    }

    fn initial_state(&self, id: usize, _rank: u32) -> PhaseClockState {
        PhaseClockState::initial(self.leaders.is_leader(id), self.m)
    }

    fn interact(
        &self,
        a: &mut PhaseClockState,
        _: u32,
        b: &mut PhaseClockState,
        _: u32,
        _: &mut Coins,
    ) -> Events {
        if phase_clock_step(a, b, self.m, self.cap) {
            Events::EPOCH_INCREASE
        } else {
            Events::empty()
        }
    }

    fn collision(&self, _state: &PhaseClockState) -> bool {
        false
    }

    fn state_bits(&self, _state: &PhaseClockState) -> u32 {
        bits_for_domain(self.m as u64) + bits_for_domain(self.cap as u64 + 1)
    }

    fn epoch(&self, state: &PhaseClockState) -> u32 {
        state.epoch
    }

    fn detects_collisions(&self) -> bool {
        false
    }
}
