//! The composed detector: size estimator, restart on level increase, the
//! segment detector guarded by a finished estimate, and an outer backup.

use serde::{Deserialize, Serialize};

use crate::cdwb::{cdwb_interact, cdwb_state_bits, CdwbState, Mode, SegmentParams};
use crate::engine::{Coins, Events, Protocol};
use crate::primitives::epidemic_step;
use crate::sizing::{
    bounds_from_log_num, contract_violations, Estimator, EstimatorKind, EstimatorState,
    DEFAULT_C_FIN,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColdParams {
    pub m: u16,
    pub eta: f64,
    pub mode: Mode,
    pub estimator: EstimatorKind,
    /// `(c_L, c_U)` for [`bounds_from_log_num`].
    pub offsets: (u32, u32),
    pub c_fin: u32,
    /// Also clear the output bit when the detector restarts.
    pub reset_clears_output: bool,
    /// Check every estimator step against the estimator contract.
    pub check_contract: bool,
}

impl ColdParams {
    pub fn new(estimator: EstimatorKind) -> Self {
        Self {
            m: crate::calibration::PHASE_CLOCK_M,
            eta: 1.0,
            mode: Mode::Randomized,
            estimator,
            offsets: estimator.default_offsets(),
            c_fin: DEFAULT_C_FIN,
            reset_clears_output: false,
            check_contract: false,
        }
    }
}

impl Default for ColdParams {
    fn default() -> Self {
        Self::new(EstimatorKind::Ideal)
    }
}

/// One agent of the composed protocol. The rank input lives in the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentState {
    pub est: EstimatorState,
    /// Detector variables; `cdwb.collision` is the shared output bit.
    pub cdwb: CdwbState,
}

impl AgentState {
    pub fn collision(&self) -> bool {
        self.cdwb.collision
    }
}

const MAX_LOG_NUM: usize = 64;

#[derive(Debug, Clone)]
pub struct CollisionDetection {
    pub params: ColdParams,
    estimator: Estimator,
    /// Detector parameters per `log_num`; `None` where they do not fit.
    segments: Vec<Option<SegmentParams>>,
}

impl CollisionDetection {
    /// `n` only matters for preloading the ideal estimator.
    pub fn new(params: ColdParams, n: usize) -> Self {
        let estimator = Estimator::new(params.estimator, n).with_c_fin(params.c_fin);
        let segments = (0..=MAX_LOG_NUM as u32)
            .map(|log_num| {
                let (lo, hi) = bounds_from_log_num(log_num, params.offsets);
                SegmentParams::derive(lo, hi, params.eta).ok()
            })
            .collect();
        Self {
            params,
            estimator,
            segments,
        }
    }

    pub fn estimator(&self) -> &Estimator {
        &self.estimator
    }

    /// Detector parameters an agent with this estimate would run with.
    pub fn segment_params(&self, log_num: u32) -> Option<&SegmentParams> {
        self.segments.get(log_num as usize).and_then(Option::as_ref)
    }

    /// Whether the pair runs the detector after the estimator step.
    pub fn guard(a: &EstimatorState, b: &EstimatorState) -> bool {
        a.count_fin && b.count_fin && (a.level, a.log_num) == (b.level, b.log_num)
    }
}

impl Protocol for CollisionDetection {
    type State = AgentState;

    fn name(&self) -> &'static str {
        "cold"
    }

    fn initial_state(&self, id: usize, _rank: u32) -> AgentState {
        let est = self.estimator.initial(id);
        AgentState {
            est,
            cdwb: CdwbState::initial(est.leader, self.params.m),
        }
    }

    fn interact(
        &self,
        a: &mut AgentState,
        a_rank: u32,
        b: &mut AgentState,
        b_rank: u32,
        coins: &mut Coins,
    ) -> Events {
        let m = self.params.m;
        let before = self.params.check_contract.then_some((a.est, b.est));

        let step = self.estimator.interact(&mut a.est, &mut b.est, coins);
        let mut events = step.events;
        a.cdwb.clock.leader = a.est.leader;
        b.cdwb.clock.leader = b.est.leader;

        if step.responder_level_increased {
            b.cdwb
                .reset(b.est.leader, m, self.params.reset_clears_output);
            events |= Events::CDWB_RESET;
        }

        if Self::guard(&a.est, &b.est) {
            if let Some(params) = self.segment_params(a.est.log_num) {
                events |= cdwb_interact(
                    &mut a.cdwb,
                    a_rank,
                    &mut b.cdwb,
                    b_rank,
                    params,
                    m,
                    self.params.mode,
                    coins,
                );
            }
        }

        if a_rank == b_rank {
            if !b.cdwb.collision {
                events |= Events::RAISED_BACKUP;
            }
            b.cdwb.collision = true;
        }
        b.cdwb.collision = epidemic_step(a.cdwb.collision, b.cdwb.collision);

        if let Some((a0, b0)) = before {
            if !contract_violations(&a0, &b0, &a.est, &b.est).is_empty() {
                events |= Events::CONTRACT_VIOLATION;
            }
        }
        events
    }

    fn collision(&self, state: &AgentState) -> bool {
        state.cdwb.collision
    }

    fn state_bits(&self, state: &AgentState) -> u32 {
        let detector = self
            .segment_params(state.est.log_num)
            .map_or(1, |p| cdwb_state_bits(p, self.params.m, self.params.mode));
        detector + self.estimator.state_bits(&state.est)
    }

    fn epoch(&self, state: &AgentState) -> u32 {
        state.cdwb.clock.epoch
    }

    fn collision_monotone(&self) -> bool {
        !self.params.reset_clears_output
    }
}
