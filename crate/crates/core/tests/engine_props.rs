use popcd::cdwb::{CdwbProtocol, Mode, SegmentParams};
use popcd::cold::{ColdParams, CollisionDetection};
use popcd::engine::{generate_ranks, InputKind, Simulation};
use popcd::sizing::EstimatorKind;
use proptest::prelude::*;

#[test]
fn scheduler_is_uniform_over_ordered_pairs() {
    let n = 10;
    let ranks: Vec<u32> = (1..=n as u32).collect();
    let params = SegmentParams::for_population(n, 1.0).unwrap();
    let mut sim = Simulation::new(CdwbProtocol::new(params, 16, Mode::Randomized), ranks, 99).unwrap();
    let steps = 1_000_000;
    let mut counts = vec![0u64; n * n];
    for _ in 0..steps {
        let (u, v) = sim.sample_pair();
        assert_ne!(u, v);
        counts[u * n + v] += 1;
    }
    let expected = steps as f64 / (n * (n - 1)) as f64;
    let chi2: f64 = (0..n * n)
        .filter(|i| i / n != i % n)
        .map(|i| (counts[i] as f64 - expected).powi(2) / expected)
        .sum();
    // 89 degrees of freedom; 150 is far in the upper tail (p < 1e-4).
    assert!(chi2 < 150.0, "chi2 = {chi2}");
}

fn cold_sim(n: usize, input: &InputKind, kind: EstimatorKind, seed: u64) -> Simulation<CollisionDetection> {
    let ranks = generate_ranks(input, n, seed).unwrap();
    let protocol = CollisionDetection::new(ColdParams::new(kind), n);
    Simulation::new(protocol, ranks, seed).unwrap()
}

#[test]
fn only_the_interacting_pair_changes() {
    for kind in [EstimatorKind::Ideal, EstimatorKind::Geometric] {
        let mut sim = cold_sim(16, &InputKind::Pair, kind, 4);
        let ranks = sim.ranks().to_vec();
        for _ in 0..20_000 {
            let before = sim.agents().to_vec();
            let rec = sim.step();
            for (i, (a, b)) in before.iter().zip(sim.agents()).enumerate() {
                if i != rec.initiator && i != rec.responder {
                    assert_eq!(a, b, "agent {i} changed at step {}", rec.t);
                }
            }
            assert_eq!(sim.ranks(), &ranks[..]);
        }
    }
}

#[test]
fn same_seed_same_run() {
    let run = |seed| {
        let mut sim = cold_sim(32, &InputKind::Dup(2), EstimatorKind::Geometric, seed);
        let trace: Vec<_> = (0..5000).map(|_| sim.step()).collect();
        (trace, sim.agents().to_vec())
    };
    assert_eq!(run(8), run(8));
    assert_ne!(run(8).0, run(9).0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn distinct_ranks_never_raise_a_flag(n in 4usize..40, seed in any::<u64>()) {
        let mut sim = cold_sim(n, &InputKind::Distinct, EstimatorKind::Ideal, seed);
        for _ in 0..20 * n * n {
            let rec = sim.step();
            prop_assert!(!rec.events.collision_raised());
        }
    }

    #[test]
    fn flags_never_drop(n in 4usize..24, seed in any::<u64>()) {
        let mut sim = cold_sim(n, &InputKind::Pair, EstimatorKind::Geometric, seed);
        let mut seen = vec![false; n];
        for _ in 0..10 * n * n {
            sim.step();
            for (i, s) in sim.agents().iter().enumerate() {
                prop_assert!(s.collision() || !seen[i]);
                seen[i] = s.collision();
            }
        }
    }
}
