use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// How the rank inputs of a trial are produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputKind {
    /// A uniformly random permutation of `[1, n]`.
    Distinct,
    /// A permutation with exactly one duplicated value.
    Pair,
    /// Exactly `x` unordered colliding pairs.
    Dup(usize),
    /// Newline-separated integers, one per agent.
    File(PathBuf),
}

impl InputKind {
    pub fn has_collision(&self) -> Option<bool> {
        match self {
            InputKind::Distinct => Some(false),
            InputKind::Pair => Some(true),
            InputKind::Dup(x) => Some(*x > 0),
            InputKind::File(_) => None,
        }
    }
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputKind::Distinct => f.write_str("distinct"),
            InputKind::Pair => f.write_str("pair"),
            InputKind::Dup(x) => write!(f, "dup:{x}"),
            InputKind::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distinct" => Ok(InputKind::Distinct),
            "pair" => Ok(InputKind::Pair),
            _ => {
                if let Some(x) = s.strip_prefix("dup:") {
                    x.parse()
                        .map(InputKind::Dup)
                        .map_err(|_| Error::input(format!("bad pair count in {s:?}")))
                } else if let Some(path) = s.strip_prefix("file:") {
                    Ok(InputKind::File(PathBuf::from(path)))
                } else {
                    Err(Error::input(format!(
                        "unknown input kind {s:?} (expected distinct, pair, dup:X or file:PATH)"
                    )))
                }
            }
        }
    }
}

/// Produces a rank vector of length `n` matching `kind`.
pub fn generate_ranks(kind: &InputKind, n: usize, seed: u64) -> Result<Vec<u32>> {
    if n < 2 {
        return Err(Error::input(format!("population size must be at least 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranks: Vec<u32> = (1..=n as u32).collect();
    ranks.shuffle(&mut rng);
    match kind {
        InputKind::Distinct => {}
        InputKind::Pair => {
            let i = rng.gen_range(0..n);
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            ranks[j] = ranks[i];
        }
        InputKind::Dup(x) => {
            let x = *x;
            if 2 * x > n {
                return Err(Error::input(format!(
                    "dup:{x} needs at least {} agents, got {n}",
                    2 * x
                )));
            }
            // Positions are already shuffled, so pairing neighbours is uniform.
            for t in 0..x {
                ranks[2 * t + 1] = ranks[2 * t];
            }
            ranks.shuffle(&mut rng);
        }
        InputKind::File(path) => return read_rank_file(path, n),
    }
    Ok(ranks)
}

/// Reads a rank file: UTF-8, exactly `n` lines, one integer in `[1, n]` each.
pub fn read_rank_file(path: &Path, n: usize) -> Result<Vec<u32>> {
    let text = fs::read_to_string(path)?;
    parse_ranks(&text, n)
}

fn parse_ranks(text: &str, n: usize) -> Result<Vec<u32>> {
    let ranks = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let r: u32 = line
                .trim()
                .parse()
                .map_err(|_| Error::input(format!("line {}: not an integer: {line:?}", i + 1)))?;
            if r == 0 || r as usize > n {
                return Err(Error::input(format!("line {}: rank {r} outside [1, {n}]", i + 1)));
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    if ranks.len() != n {
        return Err(Error::input(format!("expected {n} ranks, found {}", ranks.len())));
    }
    Ok(ranks)
}

/// Number of unordered pairs of agents sharing a rank.
pub fn colliding_pairs(ranks: &[u32]) -> u64 {
    let mut counts: HashMap<u32, u64> = HashMap::new();
    for &r in ranks {
        *counts.entry(r).or_default() += 1;
    }
    counts.values().map(|&c| c * (c - 1) / 2).sum()
}

pub fn has_duplicate(ranks: &[u32]) -> bool {
    let mut seen = vec![false; ranks.len() + 1];
    for &r in ranks {
        let slot = r as usize;
        if slot >= seen.len() {
            seen.resize(slot + 1, false);
        }
        if seen[slot] {
            return true;
        }
        seen[slot] = true;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_is_a_permutation() {
        for n in [2, 3, 17, 256] {
            let mut r = generate_ranks(&InputKind::Distinct, n, 9).unwrap();
            r.sort_unstable();
            assert_eq!(r, (1..=n as u32).collect::<Vec<_>>());
        }
    }

    #[test]
    fn pair_has_one_colliding_pair() {
        for seed in 0..20 {
            let r = generate_ranks(&InputKind::Pair, 4, seed).unwrap();
            assert_eq!(colliding_pairs(&r), 1);
            assert!(r.iter().all(|&x| (1..=4).contains(&x)));
        }
        let tiny = generate_ranks(&InputKind::Pair, 2, 0).unwrap();
        assert_eq!(tiny[0], tiny[1]);
    }

    #[test]
    fn dup_matches_requested_count() {
        let n = 1024;
        let x = ((n as f64) * (n as f64).log2()).sqrt().ceil() as usize;
        let r = generate_ranks(&InputKind::Dup(x), n, 4).unwrap();
        assert_eq!(colliding_pairs(&r), x as u64);
        assert!(generate_ranks(&InputKind::Dup(3), 5, 0).is_err());
        assert_eq!(colliding_pairs(&generate_ranks(&InputKind::Dup(0), 8, 0).unwrap()), 0);
    }

    #[test]
    fn parse_kinds() {
        assert_eq!("pair".parse::<InputKind>().unwrap(), InputKind::Pair);
        assert_eq!("dup:7".parse::<InputKind>().unwrap(), InputKind::Dup(7));
        assert_eq!(
            "file:/tmp/r.txt".parse::<InputKind>().unwrap(),
            InputKind::File("/tmp/r.txt".into())
        );
        assert!("dup:x".parse::<InputKind>().is_err());
        assert!("random".parse::<InputKind>().is_err());
        assert_eq!(InputKind::Dup(3).to_string(), "dup:3");
    }

    #[test]
    fn rank_file_checks_range_and_count() {
        assert_eq!(parse_ranks("1\n2\n2\n", 3).unwrap(), vec![1, 2, 2]);
        assert!(parse_ranks("1\n2\n4\n", 3).is_err());
        assert!(parse_ranks("1\n2\n", 3).is_err());
        assert!(parse_ranks("1\nx\n3\n", 3).is_err());
        assert!(parse_ranks("0\n1\n2\n", 3).is_err());
    }

    #[test]
    fn duplicate_detection() {
        assert!(has_duplicate(&[3, 1, 3]));
        assert!(!has_duplicate(&[3, 1, 2]));
    }
}
