//! Distinct ranks never raise a flag, whatever the detector is told about
//! leaders or population bounds.

use popcd::engine::InputKind;
use popcd::experiments::{sweep, ProtocolConfig, ProtocolKind, SweepSpec};
use popcd::primitives::LeaderAssignment;

fn main() -> popcd::Result<()> {
    let cases = [
        ("honest", LeaderAssignment::Single, None),
        ("no leader", LeaderAssignment::None, None),
        ("two leaders", LeaderAssignment::Two, None),
        ("bounds too high", LeaderAssignment::Single, Some((256, 1024))),
        ("bounds too low", LeaderAssignment::Single, Some((8, 32))),
    ];
    for (name, leaders, bounds) in cases {
        let mut config = ProtocolConfig::new(ProtocolKind::Cdwb);
        config.leaders = leaders;
        config.bounds = bounds;
        let spec = SweepSpec {
            config,
            n_list: vec![64, 128],
            trials: 20,
            input: InputKind::Distinct,
            budget: None,
            base_seed: 1,
        };
        let flagged = sweep(&spec)?.iter().filter(|r| r.result.false_positive).count();
        println!("{name:16} {flagged} false positives in 40 runs");
    }
    Ok(())
}
