//! How often the detector, rather than the backup, raises the first flag on
//! a single colliding pair. The expectation comes from an independent count
//! of the detector's meeting opportunities.

use popcd::engine::{DetectionChannel, InputKind};
use popcd::experiments::{sweep, ProtocolConfig, ProtocolKind, SweepSpec};

/// Upper estimate of the detector's share of first flags with the ideal
/// estimator. Per step the backup fires with probability 2/(n(n-1)). The
/// detector needs a dedicated epoch (1 in z) and a meeting between the two
/// groups, each at most 2^i_max agents strong, with differing nonces (1/2).
fn predicted_share(n: u64) -> f64 {
    let log_num = 63 - n.leading_zeros() as u64;
    let lo = 1u64 << (log_num - 1);
    let hi = 1u64 << (log_num + 1);
    let ell = ((lo as f64) * (lo as f64).log2()).sqrt().ceil();
    let z = (hi as f64 / ell).ceil();
    let i_max = ((lo as f64 / ell).log2().floor() - 2.0).max(0.0);
    let g = 2f64.powf(i_max);
    let ratio = g * g / (2.0 * z);
    ratio / (1.0 + ratio)
}

#[test]
fn oracle_predicts_a_backup_majority() {
    for n in [2048, 4096, 8192] {
        assert!(predicted_share(n) < 0.2, "n={n}: {}", predicted_share(n));
    }
}

#[test]
fn measured_share_matches_the_oracle() {
    let trials = 40;
    let rows = sweep(&SweepSpec {
        config: ProtocolConfig::new(ProtocolKind::Cold),
        n_list: vec![2048, 4096],
        trials,
        input: InputKind::Pair,
        budget: None,
        base_seed: 0xd15c,
    })
    .unwrap();
    for n in [2048usize, 4096] {
        let cdwb = rows
            .iter()
            .filter(|r| r.result.n == n && r.result.detection_channel == DetectionChannel::Cdwb)
            .count();
        let share = cdwb as f64 / trials as f64;
        let s = predicted_share(n as u64);
        let tol = 4.0 * (s * (1.0 - s) / trials as f64).sqrt() + 1.0 / trials as f64;
        assert!(share <= s + tol, "n={n}: measured {share}, predicted {s}");
        assert!(share < 0.5);
    }
}
