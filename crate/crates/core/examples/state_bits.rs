//! Largest per-agent state, rank excluded, as n doubles.

use popcd::engine::InputKind;
use popcd::experiments::{run_single, ProtocolConfig, ProtocolKind, TrialSpec};
use popcd::sizing::EstimatorKind;

fn main() -> popcd::Result<()> {
    for n in [128, 256, 512, 1024, 2048] {
        let mut line = format!("n={n:5}");
        for estimator in [EstimatorKind::Ideal, EstimatorKind::Geometric] {
            let mut config = ProtocolConfig::new(ProtocolKind::Cold);
            config.estimator = estimator;
            let r = run_single(&TrialSpec::new(config, n, InputKind::Pair, 2), 0)?;
            line += &format!("  {estimator}: {} bits", r.report.result.max_state_bits);
        }
        println!("{line}");
    }
    Ok(())
}
