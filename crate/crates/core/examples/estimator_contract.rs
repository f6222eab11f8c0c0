//! Audits both size estimators: contract checks on every step, when
//! countFin first appears and what the agents settle on.

use popcd::cold::ColdParams;
use popcd::engine::{generate_ranks, InputKind};
use popcd::experiments::measure::{estimator_audit, n_ln_n};
use popcd::sizing::EstimatorKind;

fn main() -> popcd::Result<()> {
    let n = 1024;
    for kind in [EstimatorKind::Ideal, EstimatorKind::Geometric] {
        let mut params = ColdParams::new(kind);
        params.check_contract = true;
        for seed in 0..3 {
            let ranks = generate_ranks(&InputKind::Distinct, n, seed)?;
            let a = estimator_audit(params, ranks, seed, (30.0 * n_ln_n(n)) as u64, false)?;
            println!(
                "{kind:9} seed {seed}: logNum {:?}, {} leader(s), {} violations, first countFin {:?}",
                a.log_nums, a.leaders, a.contract_violations, a.first_count_fin
            );
        }
    }
    Ok(())
}
