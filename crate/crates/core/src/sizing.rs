//! Size-estimator slot.
//!
//! The composed detector needs four observable variables from its estimator:
//! `level`, `log_num`, `count_fin` and `leader`, with these guarantees:
//!
//! - `level` never decreases and only changes while the agent is responder;
//! - `log_num` is frozen while `count_fin = 1`;
//! - `count_fin` drops from 1 to 0 only together with a level increase;
//! - `count_fin` spreads from initiator to responder between agents on equal
//!   levels, and only leaders set it on their own.
//!
//! [`EstimatorKind::Ideal`] preloads the exact `floor(log2 n)` and a single
//! leader, which isolates the detector. [`EstimatorKind::Geometric`] is an
//! in-model estimator built on maxima of geometric samples. Both are checked
//! against the guarantees above by [`contract_violations`].

use std::cmp::Ordering;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{bit_length, Coins, Events};
use crate::error::{Error, Result};

/// Geometric samples drawn per agent; `log_num` averages their maxima.
pub const GEOMETRIC_SAMPLES: usize = 2;

/// Default `c_fin` for the geometric estimator's countdown.
pub const DEFAULT_C_FIN: u32 = crate::calibration::C_FIN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Ideal,
    Geometric,
}

impl EstimatorKind {
    /// Bound offsets `(c_L, c_U)` used with this estimator unless overridden.
    pub fn default_offsets(self) -> (u32, u32) {
        match self {
            EstimatorKind::Ideal => (1, 1),
            EstimatorKind::Geometric => (2, 2),
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Ideal => "ideal",
            EstimatorKind::Geometric => "geometric",
        })
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(EstimatorKind::Ideal),
            "geometric" => Ok(EstimatorKind::Geometric),
            _ => Err(Error::input(format!("unknown estimator {s:?}"))),
        }
    }
}

/// `(n_L, n_U) = (2^(log_num - c_L), 2^(log_num + c_U))`, with `n_L` held at
/// 2 or more.
pub fn bounds_from_log_num(log_num: u32, offsets: (u32, u32)) -> (u64, u64) {
    let (c_l, c_u) = offsets;
    let lower = if log_num > c_l {
        1u64 << (log_num - c_l).min(62)
    } else {
        2
    };
    let upper = (1u64 << (log_num + c_u).min(62)).max(lower);
    (lower, upper)
}

/// Leader-election ticket: geometric sample, then a random key compared as a
/// bit string (a proper prefix sorts first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Ticket {
    pub g: u8,
    pub key: u64,
    pub key_len: u8,
}

impl Ticket {
    const MAX_KEY: u8 = 64;

    fn extend(&mut self, bit: bool) {
        if self.key_len < Self::MAX_KEY {
            self.key = (self.key << 1) | u64::from(bit);
            self.key_len += 1;
        }
    }
}

impl Ord for Ticket {
    fn cmp(&self, other: &Self) -> Ordering {
        self.g.cmp(&other.g).then_with(|| {
            let common = self.key_len.min(other.key_len);
            let prefix = |t: &Ticket| {
                if common == 0 {
                    0
                } else {
                    t.key >> (t.key_len - common)
                }
            };
            prefix(self)
                .cmp(&prefix(other))
                .then(self.key_len.cmp(&other.key_len))
        })
    }
}

impl PartialOrd for Ticket {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Estimator variables of one agent. The fields after `leader` are private
/// to the geometric estimator and stay at their defaults for the ideal one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct EstimatorState {
    pub level: u32,
    pub log_num: u32,
    pub count_fin: bool,
    pub leader: bool,
    pub drawn: bool,
    pub best: Ticket,
    pub max_g: [u8; GEOMETRIC_SAMPLES],
    pub countdown: u32,
}

/// Estimator behaviour for one population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimator {
    pub kind: EstimatorKind,
    /// Population size, used only to preload the ideal estimator.
    pub n: usize,
    pub c_fin: u32,
}

/// What one estimator interaction did to the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EstimatorStep {
    pub responder_level_increased: bool,
    pub events: Events,
}

fn log_num_of(max_g: &[u8; GEOMETRIC_SAMPLES]) -> u32 {
    let sum: u32 = max_g.iter().map(|&g| g as u32).sum();
    (sum / GEOMETRIC_SAMPLES as u32).saturating_sub(1).max(1)
}

/// Flips until the first head.
fn geometric(coins: &mut Coins) -> u8 {
    (coins.gen::<u64>().trailing_zeros() + 1).min(64) as u8
}

impl Estimator {
    pub fn new(kind: EstimatorKind, n: usize) -> Self {
        Self {
            kind,
            n,
            c_fin: DEFAULT_C_FIN,
        }
    }

    pub fn with_c_fin(mut self, c_fin: u32) -> Self {
        self.c_fin = c_fin;
        self
    }

    /// Agent 0 is the ideal estimator's leader.
    pub fn initial(&self, id: usize) -> EstimatorState {
        match self.kind {
            EstimatorKind::Ideal => EstimatorState {
                log_num: self.n.max(2).ilog2(),
                leader: id == 0,
                ..EstimatorState::default()
            },
            EstimatorKind::Geometric => EstimatorState {
                log_num: 1,
                ..EstimatorState::default()
            },
        }
    }

    pub fn interact(
        &self,
        a: &mut EstimatorState,
        b: &mut EstimatorState,
        coins: &mut Coins,
    ) -> EstimatorStep {
        match self.kind {
            EstimatorKind::Ideal => ideal_interact(a, b),
            EstimatorKind::Geometric => self.geometric_interact(a, b, coins),
        }
    }

    fn countdown_target(&self, s: &EstimatorState) -> u32 {
        let g = s.max_g.iter().copied().max().unwrap_or(0) as u32;
        self.c_fin.saturating_mul(g * g).max(1)
    }

    fn geometric_interact(
        &self,
        a: &mut EstimatorState,
        b: &mut EstimatorState,
        coins: &mut Coins,
    ) -> EstimatorStep {
        let mut events = Events::empty();
        let before = b.max_g;

        if !b.drawn {
            b.drawn = true;
            let samples: [u8; GEOMETRIC_SAMPLES] = std::array::from_fn(|_| geometric(coins));
            let key_len = samples[0].min(48);
            let own = Ticket {
                g: samples[0],
                key: coins.gen::<u64>() >> (64 - key_len as u32),
                key_len,
            };
            for (m, s) in b.max_g.iter_mut().zip(samples) {
                *m = (*m).max(s);
            }
            if own > b.best {
                b.best = own;
                b.leader = true;
            }
        }

        for (mb, ma) in b.max_g.iter_mut().zip(a.max_g) {
            *mb = (*mb).max(ma);
        }
        let increased = b.max_g != before;
        if increased {
            b.level = b.max_g.iter().map(|&g| g as u32).sum();
            b.log_num = log_num_of(&b.max_g);
            b.count_fin = false;
        }

        match a.best.cmp(&b.best) {
            Ordering::Greater => {
                b.best = a.best;
                b.leader = false;
            }
            Ordering::Equal if a.leader && b.leader => {
                // Two candidates holding identical tickets: grow both keys. A
                // candidate's best ticket is its own.
                a.best.extend(coins.gen());
                b.best.extend(coins.gen());
                match a.best.cmp(&b.best) {
                    Ordering::Greater => {
                        b.best = a.best;
                        b.leader = false;
                    }
                    Ordering::Less => {
                        a.best = b.best;
                        a.leader = false;
                    }
                    Ordering::Equal => {}
                }
            }
            _ => {}
        }

        for (s, restarted) in [(&mut *a, false), (&mut *b, increased)] {
            if !s.leader || s.count_fin {
                s.countdown = 0;
                continue;
            }
            if restarted || s.countdown == 0 {
                s.countdown = self.countdown_target(s);
            }
            if !restarted {
                s.countdown -= 1;
                if s.countdown == 0 {
                    s.count_fin = true;
                    events |= Events::COUNTFIN_RAISED | Events::COUNTFIN_ORIGINATED;
                }
            }
        }

        spread_count_fin(a, b, &mut events);
        EstimatorStep {
            responder_level_increased: increased,
            events,
        }
    }

    pub fn state_bits(&self, s: &EstimatorState) -> u32 {
        let common = bit_length(s.level as u64) + bit_length(s.log_num as u64) + 2;
        match self.kind {
            EstimatorKind::Ideal => common,
            EstimatorKind::Geometric => {
                let ticket = |t: &Ticket| {
                    bit_length(t.g as u64) + t.key_len as u32 + bit_length(t.key_len as u64)
                };
                common
                    + 1
                    + s.max_g.iter().map(|&g| bit_length(g as u64)).sum::<u32>()
                    + ticket(&s.best)
                    + bit_length(s.countdown as u64)
            }
        }
    }
}

fn ideal_interact(a: &mut EstimatorState, b: &mut EstimatorState) -> EstimatorStep {
    let mut events = Events::empty();
    if a.leader && !a.count_fin {
        a.count_fin = true;
        events |= Events::COUNTFIN_RAISED | Events::COUNTFIN_ORIGINATED;
    }
    spread_count_fin(a, b, &mut events);
    EstimatorStep {
        responder_level_increased: false,
        events,
    }
}

fn spread_count_fin(a: &EstimatorState, b: &mut EstimatorState, events: &mut Events) {
    if a.count_fin && !b.count_fin && (a.level, a.log_num) == (b.level, b.log_num) {
        b.count_fin = true;
        *events |= Events::COUNTFIN_RAISED;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContractViolation {
    LevelDecreased,
    LevelRoseAsInitiator,
    LogNumChangedWhileFinished,
    CountFinDroppedWithoutLevelIncrease,
    CountFinFromNowhere,
}

impl fmt::Display for ContractViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContractViolation::LevelDecreased => "level decreased",
            ContractViolation::LevelRoseAsInitiator => "level increased on the initiator",
            ContractViolation::LogNumChangedWhileFinished => "log_num changed while count_fin = 1",
            ContractViolation::CountFinDroppedWithoutLevelIncrease => {
                "count_fin reverted without a level increase"
            }
            ContractViolation::CountFinFromNowhere => {
                "non-leader raised count_fin without an equal-level initiator holding it"
            }
        })
    }
}

/// Checks one interaction (initiator `a`, responder `b`, before and after)
/// against the estimator contract.
pub fn contract_violations(
    a0: &EstimatorState,
    b0: &EstimatorState,
    a1: &EstimatorState,
    b1: &EstimatorState,
) -> Vec<ContractViolation> {
    let mut out = Vec::new();
    for (before, after, responder) in [(a0, a1, false), (b0, b1, true)] {
        if after.level < before.level {
            out.push(ContractViolation::LevelDecreased);
        }
        if !responder && after.level > before.level {
            out.push(ContractViolation::LevelRoseAsInitiator);
        }
        if before.count_fin && after.count_fin && before.log_num != after.log_num {
            out.push(ContractViolation::LogNumChangedWhileFinished);
        }
        if before.count_fin && !after.count_fin && after.level <= before.level {
            out.push(ContractViolation::CountFinDroppedWithoutLevelIncrease);
        }
        if !before.count_fin && after.count_fin && !(before.leader || after.leader) {
            let inherited = responder && a1.count_fin && a1.level == b1.level;
            if !inherited {
                out.push(ContractViolation::CountFinFromNowhere);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn coins() -> Coins {
        Coins::seed_from_u64(17)
    }

    #[test]
    fn bounds_examples() {
        assert_eq!(bounds_from_log_num(10, (1, 1)), (512, 2048));
        assert_eq!(bounds_from_log_num(10, (2, 2)), (256, 4096));
        assert_eq!(bounds_from_log_num(1, (2, 2)).0, 2);
        assert_eq!(bounds_from_log_num(2, (2, 2)), (2, 16));
    }

    #[test]
    fn ideal_preload() {
        let est = Estimator::new(EstimatorKind::Ideal, 1000);
        let s = est.initial(0);
        assert_eq!((s.log_num, s.level, s.count_fin, s.leader), (9, 0, false, true));
        assert!(!est.initial(5).leader);
    }

    #[test]
    fn ideal_leader_originates_as_initiator_and_hands_it_on() {
        let est = Estimator::new(EstimatorKind::Ideal, 64);
        let mut leader = est.initial(0);
        let mut other = est.initial(1);
        let step = est.interact(&mut leader, &mut other, &mut coins());
        assert!(leader.count_fin && other.count_fin);
        assert!(step.events.contains(Events::COUNTFIN_ORIGINATED));
        assert!(contract_violations(&est.initial(0), &est.initial(1), &leader, &other).is_empty());
    }

    #[test]
    fn ideal_leader_waits_while_responder() {
        let est = Estimator::new(EstimatorKind::Ideal, 64);
        let mut leader = est.initial(0);
        let mut other = est.initial(1);
        est.interact(&mut other, &mut leader, &mut coins());
        assert!(!leader.count_fin && !other.count_fin);
    }

    #[test]
    fn count_fin_spreads_between_equal_levels_only() {
        let est = Estimator::new(EstimatorKind::Ideal, 64);
        let mut a = est.initial(1);
        a.count_fin = true;
        let mut b = est.initial(2);
        est.interact(&mut a, &mut b, &mut coins());
        assert!(b.count_fin);

        let mut c = est.initial(3);
        c.log_num += 1;
        est.interact(&mut a, &mut c, &mut coins());
        assert!(!c.count_fin);
    }

    #[test]
    fn geometric_responder_adopts_larger_maximum() {
        let est = Estimator::new(EstimatorKind::Geometric, 64);
        let mut a = EstimatorState {
            drawn: true,
            max_g: [5, 5],
            level: 10,
            log_num: 4,
            ..Default::default()
        };
        let mut b = EstimatorState {
            drawn: true,
            max_g: [3, 3],
            level: 6,
            log_num: 2,
            count_fin: true,
            ..Default::default()
        };
        let (a0, b0) = (a, b);
        let step = est.interact(&mut a, &mut b, &mut coins());
        assert_eq!(b.max_g, [5, 5]);
        assert!(step.responder_level_increased);
        assert!(b.level > b0.level);
        assert!(!b.count_fin);
        assert_eq!(b.log_num, 4);
        assert!(contract_violations(&a0, &b0, &a, &b).is_empty());
    }

    #[test]
    fn ticket_order_is_lexicographic() {
        let t = |g, key, key_len| Ticket { g, key, key_len };
        assert!(t(3, 0, 0) > t(2, 0xff, 8));
        assert!(t(3, 0b10, 2) > t(3, 0b01, 2));
        assert!(t(3, 0b1, 1) < t(3, 0b10, 2));
        assert!(t(3, 0b1, 1) > t(3, 0b01, 2));
        assert_eq!(t(3, 0b1, 1).cmp(&t(3, 0b1, 1)), Ordering::Equal);
    }

    #[test]
    fn tied_candidates_split() {
        let est = Estimator::new(EstimatorKind::Geometric, 64);
        let ticket = Ticket { g: 4, key: 3, key_len: 8 };
        let mut rng = coins();
        let mut a = EstimatorState {
            drawn: true,
            leader: true,
            best: ticket,
            max_g: [4, 4],
            ..Default::default()
        };
        let mut b = a;
        for _ in 0..64 {
            est.interact(&mut a, &mut b, &mut rng);
            if a.leader != b.leader {
                break;
            }
        }
        assert!(a.leader ^ b.leader);
        assert_eq!(a.best, b.best);
    }

    #[test]
    fn checker_flags_each_rule() {
        let base = EstimatorState {
            level: 3,
            log_num: 5,
            ..Default::default()
        };
        let fin = EstimatorState { count_fin: true, ..base };

        let raised_initiator = EstimatorState { level: 4, ..base };
        assert!(contract_violations(&base, &base, &raised_initiator, &base)
            .contains(&ContractViolation::LevelRoseAsInitiator));

        let dropped = EstimatorState { level: 2, ..base };
        assert!(contract_violations(&base, &base, &base, &dropped)
            .contains(&ContractViolation::LevelDecreased));

        let moved = EstimatorState { log_num: 6, ..fin };
        assert!(contract_violations(&base, &fin, &base, &moved)
            .contains(&ContractViolation::LogNumChangedWhileFinished));

        assert!(contract_violations(&base, &fin, &base, &base)
            .contains(&ContractViolation::CountFinDroppedWithoutLevelIncrease));

        assert!(contract_violations(&base, &base, &base, &fin)
            .contains(&ContractViolation::CountFinFromNowhere));
        assert!(contract_violations(&fin, &base, &fin, &fin).is_empty());
    }

    #[test]
    fn ideal_uses_fewer_bits() {
        let ideal = Estimator::new(EstimatorKind::Ideal, 1024);
        let geo = Estimator::new(EstimatorKind::Geometric, 1024);
        let s = ideal.initial(1);
        assert!(ideal.state_bits(&s) < geo.state_bits(&s));
    }
}
