//! Uniformly random scheduler and trial runner.
//!
//! A [`Simulation`] owns the population (one protocol state per agent plus the
//! immutable rank inputs), the interaction counter and two ChaCha streams
//! derived from a single 64-bit seed: stream 0 drives the scheduler, stream 1
//! supplies the coin flips that randomized transition functions may draw.
//! Keeping them apart means a replay that feeds the same interaction pairs
//! also reproduces the same coins.

mod ranks;

use std::fmt;

use bitflags::bitflags;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ranks::{colliding_pairs, generate_ranks, has_duplicate, read_rank_file, InputKind};

/// Coin source handed to transition functions.
pub type Coins = ChaCha8Rng;

bitflags! {
    /// Things that happened during one interaction.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct Events: u16 {
        /// Some participant's phase-clock epoch went up.
        const EPOCH_INCREASE = 1 << 0;
        /// A collision flag went 0 -> 1 because two equal ranks met.
        const RAISED_BACKUP = 1 << 1;
        /// A collision flag went 0 -> 1 through a group-identifier mismatch.
        const RAISED_CDWB = 1 << 2;
        /// The mismatch guard held, whether or not the flag was already up.
        const CDWB_MISMATCH = 1 << 3;
        /// The responder's detector state was reset after a level increase.
        const CDWB_RESET = 1 << 4;
        /// Some participant's countFin went 0 -> 1.
        const COUNTFIN_RAISED = 1 << 5;
        /// A leader set countFin on its own.
        const COUNTFIN_ORIGINATED = 1 << 6;
        /// A runtime check of the estimator contract failed.
        const CONTRACT_VIOLATION = 1 << 7;
    }
}

impl Events {
    pub fn collision_raised(self) -> bool {
        self.intersects(Events::RAISED_BACKUP | Events::RAISED_CDWB)
    }

    /// Short tags joined by `|`, used in traces.
    pub fn tags(self) -> String {
        const NAMES: [(Events, &str); 8] = [
            (Events::EPOCH_INCREASE, "epoch"),
            (Events::RAISED_BACKUP, "raise_backup"),
            (Events::RAISED_CDWB, "raise_cdwb"),
            (Events::CDWB_MISMATCH, "mismatch"),
            (Events::CDWB_RESET, "reset"),
            (Events::COUNTFIN_RAISED, "countfin"),
            (Events::COUNTFIN_ORIGINATED, "countfin_origin"),
            (Events::CONTRACT_VIOLATION, "contract"),
        ];
        NAMES
            .iter()
            .filter(|(flag, _)| self.contains(*flag))
            .map(|(_, name)| *name)
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// A population protocol: per-agent state plus a transition function applied
/// to an ordered (initiator, responder) pair.
pub trait Protocol: Sync {
    type State: Clone + fmt::Debug + Send;

    fn name(&self) -> &'static str;

    /// State of agent `id` in an initialized configuration.
    fn initial_state(&self, id: usize, rank: u32) -> Self::State;

    fn interact(
        &self,
        a: &mut Self::State,
        a_rank: u32,
        b: &mut Self::State,
        b_rank: u32,
        coins: &mut Coins,
    ) -> Events;

    /// The agent's output bit.
    fn collision(&self, state: &Self::State) -> bool;

    /// Bits needed to store the state, rank excluded.
    fn state_bits(&self, state: &Self::State) -> u32;

    fn epoch(&self, _state: &Self::State) -> u32 {
        0
    }

    /// Whether the output bit answers the collision question. Plain epidemic
    /// and phase-clock runs reuse the output slot for other purposes.
    fn detects_collisions(&self) -> bool {
        true
    }

    /// Whether the output bit may only go 0 -> 1.
    fn collision_monotone(&self) -> bool {
        true
    }
}

/// Bits for the state of a protocol, rank excluded.
pub fn measure_state_bits<P: Protocol>(protocol: &P, state: &P::State) -> u32 {
    protocol.state_bits(state)
}

/// `ceil(log2(domain))`, the bits needed to tell `domain` values apart.
pub fn bits_for_domain(domain: u64) -> u32 {
    if domain <= 1 {
        0
    } else {
        64 - (domain - 1).leading_zeros()
    }
}

/// Bit length of an unbounded counter's current value (at least one bit).
pub fn bit_length(value: u64) -> u32 {
    (64 - value.leading_zeros()).max(1)
}

/// Mixes a base seed with cell coordinates so every (n, trial) cell of a sweep
/// has its own reproducible stream.
pub fn derive_seed(base: u64, n: usize, trial: usize) -> u64 {
    let mut x = base ^ 0x9e37_79b9_7f4a_7c15;
    for word in [n as u64, trial as u64] {
        x = splitmix64(x ^ word.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    }
    x
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub t: u64,
    pub initiator: usize,
    pub responder: usize,
    #[serde(with = "events_serde")]
    pub events: Events,
}

mod events_serde {
    use super::Events;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(events: &Events, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u16(events.bits())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Events, D::Error> {
        Ok(Events::from_bits_truncate(u16::deserialize(d)?))
    }
}

/// A population under the uniformly random scheduler.
#[derive(Debug, Clone)]
pub struct Simulation<P: Protocol> {
    protocol: P,
    agents: Vec<P::State>,
    ranks: Vec<u32>,
    step: u64,
    seed: u64,
    scheduler: ChaCha8Rng,
    coins: Coins,
}

impl<P: Protocol> Simulation<P> {
    /// Builds an initialized configuration. The population size is the length
    /// of `ranks`; every rank must lie in `[1, n]`.
    pub fn new(protocol: P, ranks: Vec<u32>, seed: u64) -> Result<Self> {
        let n = ranks.len();
        if n < 2 {
            return Err(Error::input(format!("population size must be at least 2, got {n}")));
        }
        if let Some((i, &r)) = ranks
            .iter()
            .enumerate()
            .find(|(_, &r)| r == 0 || r as usize > n)
        {
            return Err(Error::input(format!("rank {r} of agent {i} is outside [1, {n}]")));
        }
        let agents = ranks
            .iter()
            .enumerate()
            .map(|(id, &rank)| protocol.initial_state(id, rank))
            .collect();
        let scheduler = ChaCha8Rng::seed_from_u64(seed);
        let mut coins = ChaCha8Rng::seed_from_u64(seed);
        coins.set_stream(1);
        Ok(Self {
            protocol,
            agents,
            ranks,
            step: 0,
            seed,
            scheduler,
            coins,
        })
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn protocol(&self) -> &P {
        &self.protocol
    }

    pub fn agents(&self) -> &[P::State] {
        &self.agents
    }

    /// Test fixtures use this to start from hand-built configurations.
    pub fn agents_mut(&mut self) -> &mut [P::State] {
        &mut self.agents
    }

    pub fn ranks(&self) -> &[u32] {
        &self.ranks
    }

    /// Draws an ordered pair `(u, v)`, `u != v`, each with probability
    /// `1 / (n (n - 1))`.
    pub fn sample_pair(&mut self) -> (usize, usize) {
        let n = self.agents.len();
        let u = self.scheduler.gen_range(0..n);
        let mut v = self.scheduler.gen_range(0..n - 1);
        if v >= u {
            v += 1;
        }
        (u, v)
    }

    /// Applies one interaction with `u` as initiator and `v` as responder.
    pub fn interact(&mut self, u: usize, v: usize) -> InteractionRecord {
        assert_ne!(u, v, "an agent cannot interact with itself");
        let (a, b) = pair_mut(&mut self.agents, u, v);
        let events = self
            .protocol
            .interact(a, self.ranks[u], b, self.ranks[v], &mut self.coins);
        let record = InteractionRecord {
            t: self.step,
            initiator: u,
            responder: v,
            events,
        };
        self.step += 1;
        record
    }

    /// One scheduler step.
    pub fn step(&mut self) -> InteractionRecord {
        let (u, v) = self.sample_pair();
        self.interact(u, v)
    }

    pub fn collision_count(&self) -> usize {
        self.agents
            .iter()
            .filter(|s| self.protocol.collision(s))
            .count()
    }
}

fn pair_mut<T>(items: &mut [T], u: usize, v: usize) -> (&mut T, &mut T) {
    if u < v {
        let (lo, hi) = items.split_at_mut(v);
        (&mut lo[u], &mut hi[0])
    } else {
        let (lo, hi) = items.split_at_mut(u);
        (&mut hi[0], &mut lo[v])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopCondition {
    /// Stop once every agent outputs 1.
    AllCollisionOne,
    /// Run the whole budget; used to watch for false positives.
    Horizon,
    /// Stop at the first raised flag, whatever its channel.
    FirstFlag,
}

impl StopCondition {
    pub fn for_ranks(ranks: &[u32]) -> Self {
        if has_duplicate(ranks) {
            StopCondition::AllCollisionOne
        } else {
            StopCondition::Horizon
        }
    }
}

/// Which mechanism raised the first collision flag of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionChannel {
    Cdwb,
    Backup,
    None,
}

impl fmt::Display for DetectionChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectionChannel::Cdwb => "cdwb",
            DetectionChannel::Backup => "backup",
            DetectionChannel::None => "none",
        })
    }
}

/// Per-run metrics; one CSV row per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub n: usize,
    pub seed: u64,
    pub input_kind: String,
    pub steps_to_stable: Option<u64>,
    pub parallel_time: Option<f64>,
    pub max_state_bits: u32,
    pub detection_channel: DetectionChannel,
    pub epochs_elapsed: u32,
    pub false_positive: bool,
}

pub const CSV_HEADER: &str = "n,seed,input_kind,steps_to_stable,parallel_time,max_state_bits,detection_channel,epochs_elapsed,false_positive";

/// A [`TrialResult`] plus bookkeeping that does not go into the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub result: TrialResult,
    pub steps_run: u64,
    pub first_flag_step: Option<u64>,
    pub contract_violations: u64,
    pub collision_reversions: u64,
}

/// Runs `sim` until `stop` fires or `budget` steps have been applied,
/// calling `observe` after every interaction.
pub fn run_trial_with<P, F>(
    sim: &mut Simulation<P>,
    input_kind: &str,
    stop: StopCondition,
    budget: u64,
    mut observe: F,
) -> TrialReport
where
    P: Protocol,
    F: FnMut(&Simulation<P>, &InteractionRecord),
{
    let n = sim.n();
    let detector = sim.protocol.detects_collisions();
    let duplicate = has_duplicate(&sim.ranks);
    let monotone = sim.protocol.collision_monotone();

    let mut collided = sim.collision_count();
    let mut max_bits = sim
        .agents
        .iter()
        .map(|s| sim.protocol.state_bits(s))
        .max()
        .unwrap_or(0);
    let mut max_epoch = sim
        .agents
        .iter()
        .map(|s| sim.protocol.epoch(s))
        .max()
        .unwrap_or(0);
    let mut first_flag: Option<(u64, DetectionChannel)> = None;
    let mut all_one_at = (collided == n).then_some(sim.step);
    let mut contract_violations = 0;
    let mut collision_reversions = 0;
    let start = sim.step;

    while sim.step - start < budget {
        if stop == StopCondition::AllCollisionOne && all_one_at.is_some() {
            break;
        }
        if stop == StopCondition::FirstFlag && first_flag.is_some() {
            break;
        }
        let (u, v) = sim.sample_pair();
        let before = (
            sim.protocol.collision(&sim.agents[u]),
            sim.protocol.collision(&sim.agents[v]),
        );
        let record = sim.interact(u, v);
        let after = (
            sim.protocol.collision(&sim.agents[u]),
            sim.protocol.collision(&sim.agents[v]),
        );
        for (was, is) in [(before.0, after.0), (before.1, after.1)] {
            match (was, is) {
                (false, true) => collided += 1,
                (true, false) => {
                    collided -= 1;
                    collision_reversions += 1;
                }
                _ => {}
            }
        }
        if first_flag.is_none() && record.events.collision_raised() {
            // Backup runs before the mismatch check inside one interaction.
            let channel = if record.events.contains(Events::RAISED_BACKUP) {
                DetectionChannel::Backup
            } else {
                DetectionChannel::Cdwb
            };
            first_flag = Some((record.t + 1, channel));
        }
        if record.events.contains(Events::CONTRACT_VIOLATION) {
            contract_violations += 1;
        }
        max_bits = max_bits
            .max(sim.protocol.state_bits(&sim.agents[u]))
            .max(sim.protocol.state_bits(&sim.agents[v]));
        max_epoch = max_epoch
            .max(sim.protocol.epoch(&sim.agents[u]))
            .max(sim.protocol.epoch(&sim.agents[v]));
        if collided == n {
            all_one_at.get_or_insert(sim.step);
        } else if !monotone {
            all_one_at = None;
        }
        observe(sim, &record);
    }

    let false_positive = detector && !duplicate && first_flag.is_some();
    let steps_to_stable = if detector && !duplicate {
        (!false_positive).then_some(0)
    } else {
        all_one_at.map(|t| t - start)
    };
    if monotone {
        debug_assert_eq!(collision_reversions, 0, "{} reverted a flag", sim.protocol.name());
    }

    TrialReport {
        result: TrialResult {
            n,
            seed: sim.seed,
            input_kind: input_kind.to_string(),
            steps_to_stable,
            parallel_time: steps_to_stable.map(|s| s as f64 / n as f64),
            max_state_bits: max_bits,
            detection_channel: first_flag.map_or(DetectionChannel::None, |(_, c)| c),
            epochs_elapsed: max_epoch,
            false_positive,
        },
        steps_run: sim.step - start,
        first_flag_step: first_flag.map(|(t, _)| t - start),
        contract_violations,
        collision_reversions,
    }
}

pub fn run_trial<P: Protocol>(
    sim: &mut Simulation<P>,
    input_kind: &str,
    stop: StopCondition,
    budget: u64,
) -> TrialReport {
    run_trial_with(sim, input_kind, stop, budget, |_, _| {})
}

/// Default budget: `50 n^2` steps for every input kind.
pub fn default_budget(n: usize) -> u64 {
    50 * (n as u64) * (n as u64)
}
