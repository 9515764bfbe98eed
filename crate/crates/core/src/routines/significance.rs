use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::sequence::count_occurrences;
use super::sequitur::sequitur;

pub const DEFAULT_SHUFFLES: usize = 1000;
pub const Z_THRESHOLD: f64 = 2.0;

/// Candidate routine with its shuffle statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutineScore {
    pub pattern: Vec<u32>,
    pub occurrences: usize,
    pub mean: f64,
    pub std: f64,
    pub z_score: f64,
}

impl RoutineScore {
    pub fn is_significant(&self) -> bool {
        self.z_score > Z_THRESHOLD
    }
}

/// Scores every rule expansion of the sequence's grammar against
/// `n_shuffles` uniform permutations of the sequence. In each shuffle a
/// candidate counts its non-overlapping occurrences if it is also a rule
/// expansion of that shuffle's grammar, and zero otherwise.
pub fn score_routines(seq: &[u32], n_shuffles: usize, seed: u64) -> Vec<RoutineScore> {
    let candidates: Vec<Vec<u32>> = {
        let mut c = sequitur(seq).rule_expansions();
        c.sort();
        c.dedup();
        c
    };
    if candidates.is_empty() {
        return Vec::new();
    }
    let observed: Vec<usize> = candidates.iter().map(|c| count_occurrences(seq, c)).collect();
    let mut sum = vec![0.0; candidates.len()];
    let mut sum_sq = vec![0.0; candidates.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = seq.to_vec();
    for _ in 0..n_shuffles {
        shuffled.copy_from_slice(seq);
        shuffled.shuffle(&mut rng);
        let rules: HashSet<Vec<u32>> = sequitur(&shuffled).rule_expansions().into_iter().collect();
        for (k, c) in candidates.iter().enumerate() {
            if rules.contains(c) {
                let n = count_occurrences(&shuffled, c) as f64;
                sum[k] += n;
                sum_sq[k] += n * n;
            }
        }
    }
    let n = n_shuffles.max(1) as f64;
    candidates
        .into_iter()
        .zip(observed)
        .enumerate()
        .map(|(k, (pattern, occurrences))| {
            let mean = sum[k] / n;
            let std = (sum_sq[k] / n - mean * mean).max(0.0).sqrt();
            RoutineScore {
                pattern,
                occurrences,
                mean,
                std,
                z_score: z_score(occurrences as f64, mean, std),
            }
        })
        .collect()
}

/// Standard score with the degenerate cases resolved: zero spread gives +inf
/// when the observation exceeds the mean and 0 otherwise.
pub fn z_score(observed: f64, mean: f64, std: f64) -> f64 {
    if std > 1e-12 {
        (observed - mean) / std
    } else if observed > mean + 1e-12 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Routines with z-score above 2.
pub fn significant_routines(seq: &[u32], n_shuffles: usize, seed: u64) -> Vec<RoutineScore> {
    score_routines(seq, n_shuffles, seed)
        .into_iter()
        .filter(RoutineScore::is_significant)
        .collect()
}

/// Per-user seed derived from a run seed, stable across platforms.
pub fn user_seed(seed: u64, user_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(user_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_degenerate_cases() {
        assert_eq!(z_score(3.0, 3.0, 0.0), 0.0);
        assert_eq!(z_score(4.0, 3.0, 0.0), f64::INFINITY);
        assert_eq!(z_score(5.0, 3.0, 1.0), 2.0);
        assert!(!RoutineScore { pattern: vec![], occurrences: 5, mean: 3.0, std: 1.0, z_score: 2.0 }.is_significant());
    }

    #[test]
    fn constant_sequence_not_significant() {
        let seq = vec![4u32; 40];
        let scores = score_routines(&seq, 50, 1);
        assert!(!scores.is_empty());
        for s in &scores {
            assert_eq!(s.std, 0.0);
            assert_eq!(s.z_score, 0.0);
        }
    }

    #[test]
    fn seeds_are_deterministic() {
        let seq: Vec<u32> = (0..60).map(|i| (i * 7 % 5) as u32).collect();
        assert_eq!(score_routines(&seq, 30, 9), score_routines(&seq, 30, 9));
        assert_ne!(user_seed(1, "a"), user_seed(1, "b"));
    }
}
