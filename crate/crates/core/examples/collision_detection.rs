//! The composed protocol, size estimation included, on a few inputs.

use popcd::engine::InputKind;
use popcd::experiments::{run_single, ProtocolConfig, ProtocolKind, TrialSpec};
use popcd::sizing::EstimatorKind;

fn main() -> popcd::Result<()> {
    let n = 512;
    for estimator in [EstimatorKind::Ideal, EstimatorKind::Geometric] {
        let mut config = ProtocolConfig::new(ProtocolKind::Cold);
        config.estimator = estimator;
        config.offsets = Some(estimator.default_offsets());
        for input in [InputKind::Distinct, InputKind::Pair, InputKind::Dup(8)] {
            let spec = TrialSpec::new(config, n, input.clone(), 21);
            let r = run_single(&spec, 0)?.report.result;
            println!(
                "{estimator:9} {input:8} steps_to_stable={:?} channel={:?} bits={}",
                r.steps_to_stable, r.detection_channel, r.max_state_bits
            );
        }
    }
    Ok(())
}
