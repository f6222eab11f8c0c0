//! Runs the leader-driven phase clock and prints how long all agents shared
//! each of the first epochs.

use popcd::experiments::measure::{clock_profile, n_ln_n};

fn main() -> popcd::Result<()> {
    let (n, m, cap) = (1024, 16, 12);
    let p = clock_profile(n, m, cap, 1, u64::MAX)?;
    println!("n={n} m={m}: reached epoch {cap} after {} steps", p.steps);
    for (epoch, w) in p.windows.iter().enumerate() {
        println!("epoch {epoch:2}: all agents together for {:.2} n ln n", *w as f64 / n_ln_n(n));
    }
    println!("longest stay in one epoch: {:.2} n ln n", p.max_hold as f64 / n_ln_n(n));
    Ok(())
}
