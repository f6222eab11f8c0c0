//! One-way epidemic from a single source: steps until everyone is reached,
//! in units of n ln n.

use popcd::experiments::measure::{epidemic_steps, n_ln_n};

fn main() -> popcd::Result<()> {
    for n in [256, 1024, 4096] {
        let runs: Vec<f64> = (0..20)
            .map(|seed| epidemic_steps(n, seed).map(|t| t as f64 / n_ln_n(n)))
            .collect::<popcd::Result<_>>()?;
        let worst = runs.iter().copied().fold(0.0, f64::max);
        let mean = runs.iter().sum::<f64>() / runs.len() as f64;
        println!("n={n:5}  mean {mean:.2}  worst {worst:.2}  (x n ln n)");
    }
    Ok(())
}
