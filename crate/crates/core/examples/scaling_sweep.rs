//! Median stabilization time on a single colliding pair and the fitted
//! log-log slope. Pass a trial count to change the default of 10.

use popcd::engine::InputKind;
use popcd::experiments::{summarize, sweep, ProtocolConfig, ProtocolKind, SweepSpec};

fn main() -> popcd::Result<()> {
    let trials = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let spec = SweepSpec {
        config: ProtocolConfig::new(ProtocolKind::Cold),
        n_list: vec![256, 512, 1024, 2048],
        trials,
        input: InputKind::Pair,
        budget: None,
        base_seed: 7,
    };
    let rows: Vec<_> = sweep(&spec)?.into_iter().map(|r| r.result).collect();
    let summary = summarize(&rows);
    for s in &summary.sizes {
        println!(
            "n={:5} median {:>10.0}  detector share {:.2}",
            s.n,
            s.median_steps.unwrap_or(f64::NAN),
            s.cdwb_fraction
        );
    }
    if let Some(fit) = summary.fit {
        println!("slope {:.3}", fit.slope);
    }
    Ok(())
}
