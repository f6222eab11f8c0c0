//! The segment detector on its own, with a pre-elected leader and known
//! bounds, on a population holding one duplicated rank.

use popcd::cdwb::{CdwbProtocol, Mode, SegmentParams};
use popcd::engine::{generate_ranks, run_trial, InputKind, Simulation, StopCondition};

fn main() -> popcd::Result<()> {
    let n = 2048;
    let params = SegmentParams::for_population(n, 1.0)?;
    println!(
        "bounds [{}, {}]: ell={} z={} r={} F={} i_max={}",
        params.n_lower, params.n_upper, params.ell, params.z, params.r, params.cap, params.i_max
    );
    for seed in 0..5 {
        let ranks = generate_ranks(&InputKind::Pair, n, seed)?;
        let mut sim = Simulation::new(CdwbProtocol::new(params, 16, Mode::Randomized), ranks, seed)?;
        let report = run_trial(&mut sim, "pair", StopCondition::AllCollisionOne, 50 * (n * n) as u64);
        let r = &report.result;
        println!(
            "seed {seed}: stable after {:?} steps, first flag by {:?}, {} epochs",
            r.steps_to_stable, r.detection_channel, r.epochs_elapsed
        );
    }
    Ok(())
}
