//! Instrumented runs behind the calibration targets and the acceptance
//! checks. Each function drives a [`Simulation`] step by step and keeps its
//! own per-agent shadow of the quantities it watches.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cdwb::{CdwbProtocol, Mode, SegmentParams};
use crate::cold::{ColdParams, CollisionDetection};
use crate::engine::{Events, Simulation};
use crate::error::Result;
use crate::primitives::{EpidemicProtocol, PhaseClockProtocol};

/// `n ln n`, the unit most bounds are stated in.
pub fn n_ln_n(n: usize) -> f64 {
    n as f64 * (n as f64).ln()
}

fn identity_ranks(n: usize) -> Vec<u32> {
    (1..=n as u32).collect()
}

/// Steps until a one-source epidemic reaches everybody.
pub fn epidemic_steps(n: usize, seed: u64) -> Result<u64> {
    let mut sim = Simulation::new(EpidemicProtocol, identity_ranks(n), seed)?;
    let mut informed = 1;
    while informed < n {
        let (u, v) = sim.sample_pair();
        let before = sim.agents()[v];
        sim.interact(u, v);
        if before == 0 && sim.agents()[v] == 1 {
            informed += 1;
        }
    }
    Ok(sim.step_count())
}

/// Per-epoch occupancy of a phase-clock run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockProfile {
    /// For every epoch below the cap, the number of steps during which all
    /// agents were in it (0 when they never were at once).
    pub windows: Vec<u64>,
    /// Longest time one agent stayed in an epoch below the cap.
    pub max_hold: u64,
    /// Whether every agent reached the cap within the budget.
    pub completed: bool,
    pub steps: u64,
}

/// Tracks which epoch each agent is in and derives all-agent windows and
/// per-agent holding times.
struct EpochTracker {
    cur: Vec<u32>,
    entered: Vec<u64>,
    count: Vec<usize>,
    full_since: Vec<Option<u64>>,
    windows: Vec<u64>,
    max_hold: u64,
    cap: u32,
    at_cap: usize,
}

impl EpochTracker {
    fn new(n: usize, cap: u32) -> Self {
        let mut count = vec![0; cap as usize + 1];
        count[0] = n;
        let mut full_since = vec![None; cap as usize + 1];
        full_since[0] = Some(0);
        Self {
            cur: vec![0; n],
            entered: vec![0; n],
            count,
            full_since,
            windows: vec![0; cap as usize],
            max_hold: 0,
            cap,
            at_cap: 0,
        }
    }

    fn update(&mut self, agent: usize, epoch: u32, t: u64) {
        let old = self.cur[agent];
        if epoch == old {
            return;
        }
        let n = self.cur.len();
        let (o, e) = (old as usize, epoch as usize);
        self.max_hold = self.max_hold.max(t - self.entered[agent]);
        if let Some(since) = self.full_since[o].take() {
            self.windows[o] += t - since;
        }
        self.count[o] -= 1;
        self.count[e] += 1;
        if self.count[e] == n {
            self.full_since[e] = Some(t);
        }
        if epoch == self.cap {
            self.at_cap += 1;
        }
        self.cur[agent] = epoch;
        self.entered[agent] = t;
    }
}

/// Runs the standalone phase clock until every agent is at `cap` or
/// `budget` steps pass.
pub fn clock_profile(n: usize, m: u16, cap: u32, seed: u64, budget: u64) -> Result<ClockProfile> {
    let protocol = PhaseClockProtocol::new(m, cap);
    let mut sim = Simulation::new(protocol, identity_ranks(n), seed)?;
    let mut tr = EpochTracker::new(n, cap);
    while tr.at_cap < n && sim.step_count() < budget {
        let rec = sim.step();
        let t = sim.step_count();
        tr.update(rec.responder, sim.agents()[rec.responder].epoch, t);
    }
    let t = sim.step_count();
    // Agents still below the cap have held their epoch at least this long.
    for v in 0..n {
        if tr.cur[v] < cap {
            tr.max_hold = tr.max_hold.max(t - tr.entered[v]);
        }
    }
    for e in 0..cap as usize {
        if let Some(since) = tr.full_since[e] {
            tr.windows[e] += t - since;
        }
    }
    Ok(ClockProfile {
        windows: tr.windows,
        max_hold: tr.max_hold,
        completed: tr.at_cap == n,
        steps: t,
    })
}

/// Group-identifier spreading observed over the first epochs of a
/// standalone detector run on distinct ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProliferationProfile {
    /// For epochs `1..=epochs`, steps from the moment all agents are in the
    /// epoch until all of them also have infectivity 0, or `None` when the
    /// epoch ended first.
    pub completion: Vec<Option<u64>>,
    /// Largest number of non-null agents sharing one epoch at any step.
    pub max_non_null: u64,
    pub params: SegmentParams,
}

pub fn proliferation_profile(
    n: usize,
    params: SegmentParams,
    m: u16,
    epochs: u32,
    seed: u64,
    budget: u64,
) -> Result<ProliferationProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut ranks = identity_ranks(n);
    ranks.shuffle(&mut rng);
    let protocol = CdwbProtocol::new(params, m, Mode::Randomized);
    let mut sim = Simulation::new(protocol, ranks, seed)?;

    let cap = params.cap as usize;
    let mut epoch = vec![0u32; n];
    let mut non_null = vec![false; n];
    let mut positive = vec![false; n];
    let mut count = vec![0usize; cap + 1];
    count[0] = n;
    let mut non_null_count = vec![0u64; cap + 1];
    let mut positive_total = 0usize;
    let mut full_since: Vec<Option<u64>> = vec![None; epochs as usize + 2];
    let mut completion: Vec<Option<u64>> = vec![None; epochs as usize + 1];
    let mut max_non_null = 0;
    let last = (epochs as usize + 1).min(cap);

    while count[..last].iter().sum::<usize>() > 0 && sim.step_count() < budget {
        let rec = sim.step();
        let t = sim.step_count();
        for v in [rec.initiator, rec.responder] {
            let s = sim.agents()[v];
            let (e0, e1) = (epoch[v] as usize, s.clock.epoch as usize);
            if non_null[v] {
                non_null_count[e0] -= 1;
            }
            if positive[v] {
                positive_total -= 1;
            }
            if e0 != e1 {
                count[e0] -= 1;
                count[e1] += 1;
                if e0 < full_since.len() {
                    full_since[e0] = None;
                }
                if count[e1] == n && e1 < full_since.len() {
                    full_since[e1] = Some(t);
                }
            }
            epoch[v] = e1 as u32;
            non_null[v] = s.gid.is_some();
            positive[v] = s.infectivity > 0;
            if non_null[v] {
                non_null_count[e1] += 1;
                max_non_null = max_non_null.max(non_null_count[e1]);
            }
            if positive[v] {
                positive_total += 1;
            }
        }
        if positive_total == 0 {
            for e in 1..=epochs as usize {
                if let (Some(since), None) = (full_since[e], completion[e]) {
                    completion[e] = Some(t - since);
                }
            }
        }
    }
    completion.remove(0);
    Ok(ProliferationProfile {
        completion,
        max_non_null,
        params,
    })
}

/// Distinct ranks except that one rank of the first segment appears twice,
/// so that epoch 1 is dedicated to the colliding pair.
pub fn ranks_with_pair_in_first_segment(n: usize, ell: u64, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ab_5e6e);
    let mut ranks = identity_ranks(n);
    ranks.shuffle(&mut rng);
    let dup = rng.gen_range(1..=ell.min(n as u64) as u32);
    let at = ranks.iter().position(|&r| r == dup).unwrap();
    let mut other = rng.gen_range(0..n - 1);
    if other >= at {
        other += 1;
    }
    ranks[other] = dup;
    ranks
}

/// Whether the detector itself (not the backup) flags the colliding pair
/// during epoch 1. The run ends once every agent has left epoch 1.
pub fn dedicated_epoch_detection(
    n: usize,
    params: SegmentParams,
    m: u16,
    mode: Mode,
    seed: u64,
    budget: u64,
) -> Result<bool> {
    let ranks = ranks_with_pair_in_first_segment(n, params.ell, seed);
    let mut sim = Simulation::new(CdwbProtocol::new(params, m, mode), ranks, seed)?;
    let mut behind = n;
    let mut epoch = vec![0u32; n];
    while behind > 0 && sim.step_count() < budget {
        let rec = sim.step();
        let e = sim.agents()[rec.responder].clock.epoch;
        if rec.events.contains(Events::CDWB_MISMATCH) && e == 1 {
            return Ok(true);
        }
        if epoch[rec.responder] < 2 && e >= 2 {
            behind -= 1;
        }
        epoch[rec.responder] = e;
    }
    Ok(false)
}

/// Step at which the two agents holding equal ranks first meet, which is
/// when the backup rule fires.
pub fn backup_first_flag(ranks: Vec<u32>, seed: u64, budget: u64) -> Result<Option<u64>> {
    let mut sim = Simulation::new(EpidemicProtocol, ranks, seed)?;
    while sim.step_count() < budget {
        let (u, v) = sim.sample_pair();
        if sim.ranks()[u] == sim.ranks()[v] {
            return Ok(Some(sim.step_count() + 1));
        }
        sim.interact(u, v);
    }
    Ok(None)
}

/// How `countFin` first appeared in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstCountFin {
    pub step: u64,
    /// Agents with `countFin = 1` right after that step.
    pub holders: usize,
    /// Whether a leader is among them.
    pub leader_included: bool,
    /// Whether the originator's estimate was not final yet: some agent had
    /// not drawn its samples, or larger samples existed elsewhere.
    pub premature: bool,
}

/// What the estimator did during one composed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorAudit {
    pub steps: u64,
    pub contract_violations: u64,
    pub first_count_fin: Option<FirstCountFin>,
    /// Step at which all agents had drawn and agreed on their maxima.
    pub settled_at: Option<u64>,
    /// Distinct `logNum` values at the end.
    pub log_nums: Vec<u32>,
    pub leaders: usize,
    pub count_fin_holders: usize,
}

/// Runs the composed protocol for `horizon` steps, or until `countFin`
/// first appears when `stop_at_count_fin` is set.
pub fn estimator_audit(
    params: ColdParams,
    ranks: Vec<u32>,
    seed: u64,
    horizon: u64,
    stop_at_count_fin: bool,
) -> Result<EstimatorAudit> {
    let n = ranks.len();
    let protocol = CollisionDetection::new(params, n);
    let mut sim = Simulation::new(protocol, ranks, seed)?;

    let mut max_g: Vec<[u8; 2]> = sim.agents().iter().map(|s| s.est.max_g).collect();
    let mut hist: HashMap<[u8; 2], usize> = HashMap::new();
    for g in &max_g {
        *hist.entry(*g).or_default() += 1;
    }
    let mut drawn_by: Vec<bool> = sim.agents().iter().map(|s| s.est.drawn).collect();
    let mut drawn = drawn_by.iter().filter(|&&d| d).count();
    let ideal = params.estimator == crate::sizing::EstimatorKind::Ideal;
    let settled = |drawn: usize, hist: &HashMap<[u8; 2], usize>| {
        ideal || (drawn == n && hist.len() == 1)
    };
    let mut settled_at = settled(drawn, &hist).then_some(0);
    let mut global = [0u8; 2];
    let mut holders = sim.agents().iter().filter(|s| s.est.count_fin).count();
    let mut count_fin: Vec<bool> = sim.agents().iter().map(|s| s.est.count_fin).collect();
    let mut first_count_fin = None;
    let mut violations = 0;

    while sim.step_count() < horizon {
        let rec = sim.step();
        let t = sim.step_count();
        if rec.events.contains(Events::CONTRACT_VIOLATION) {
            violations += 1;
        }
        for v in [rec.initiator, rec.responder] {
            let s = sim.agents()[v].est;
            if s.max_g != max_g[v] {
                let old = hist.get_mut(&max_g[v]).unwrap();
                *old -= 1;
                if *old == 0 {
                    hist.remove(&max_g[v]);
                }
                *hist.entry(s.max_g).or_default() += 1;
                max_g[v] = s.max_g;
                for (g, x) in global.iter_mut().zip(s.max_g) {
                    *g = (*g).max(x);
                }
            }
            if s.drawn && !drawn_by[v] {
                drawn_by[v] = true;
                drawn += 1;
            }
            if s.count_fin != count_fin[v] {
                if s.count_fin {
                    holders += 1;
                } else {
                    holders -= 1;
                }
                count_fin[v] = s.count_fin;
            }
        }
        if settled_at.is_none() && settled(drawn, &hist) {
            settled_at = Some(t);
        }
        if first_count_fin.is_none() && holders > 0 {
            let originator = [rec.initiator, rec.responder]
                .into_iter()
                .find(|&v| sim.agents()[v].est.leader && count_fin[v]);
            let premature = !ideal
                && (drawn < n || originator.map_or(true, |v| max_g[v] != global));
            first_count_fin = Some(FirstCountFin {
                step: t,
                holders,
                leader_included: originator.is_some(),
                premature,
            });
            if stop_at_count_fin {
                break;
            }
        }
    }

    let mut log_nums: Vec<u32> = sim.agents().iter().map(|s| s.est.log_num).collect();
    log_nums.sort_unstable();
    log_nums.dedup();
    Ok(EstimatorAudit {
        steps: sim.step_count(),
        contract_violations: violations,
        first_count_fin,
        settled_at,
        log_nums,
        leaders: sim.agents().iter().filter(|s| s.est.leader).count(),
        count_fin_holders: holders,
    })
}
