use memarch::archive::{allocate, stratified_log_sample, Allocation, LogEntry};
use memarch::environments::Trajectory;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Enumerates every feasible split and keeps the one nearest the
/// proportional quota, preferring more successes on ties.
fn brute_force(successes: usize, failures: usize, k: usize) -> Allocation {
    let n = successes + failures;
    if k >= n {
        return Allocation { successes, failures };
    }
    let mut best: Option<(usize, usize)> = None;
    for s in 0..=k {
        let f = k - s;
        if s > successes || f > failures {
            continue;
        }
        if k >= 2 && ((successes > 0 && s == 0) || (failures > 0 && f == 0)) {
            continue;
        }
        // |s - k*S/n| scaled by n.
        let dist = (s * n).abs_diff(k * successes);
        best = match best {
            Some((bd, bs)) if bd < dist || (bd == dist && bs > s) => Some((bd, bs)),
            _ => Some((dist, s)),
        };
    }
    let s = best.expect("a feasible split exists").1;
    Allocation { successes: s, failures: k - s }
}

#[test]
fn allocation_matches_brute_force() {
    for n in 0..=12 {
        for successes in 0..=n {
            for k in 0..=8 {
                let got = allocate(successes, n - successes, k);
                let want = brute_force(successes, n - successes, k);
                assert_eq!(got, want, "S={successes} F={} k={k}", n - successes);
            }
        }
    }
}

#[test]
fn reference_splits() {
    let a = |s, f| {
        let x = allocate(s, f, 6);
        (x.successes, x.failures)
    };
    assert_eq!(a(9, 1), (5, 1));
    assert_eq!(a(1, 9), (1, 5));
    assert_eq!(a(5, 5), (3, 3));
    assert_eq!(a(3, 5), (2, 4));
    assert_eq!(a(7, 5), (4, 2));
    // Quota 2.5 each: the tie goes to successes.
    assert_eq!((allocate(5, 5, 5).successes, allocate(5, 5, 5).failures), (3, 2));
    assert_eq!(a(0, 10), (0, 6));
    assert_eq!(a(2, 2), (2, 2));
}

fn entry(i: usize, success: bool) -> LogEntry {
    let feedback = if success { 1.0 } else { 0.0 };
    LogEntry {
        task_id: format!("t{i}"),
        knowledge: String::new(),
        trajectory: Trajectory {
            task_id: format!("t{i}"),
            goal: String::new(),
            steps: Vec::new(),
            final_observation: String::new(),
            feedback,
            truncated: false,
            fault: None,
        },
        feedback,
    }
}

#[test]
fn every_outcome_pattern_up_to_ten_entries() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 0..=10usize {
        for mask in 0u32..(1 << n) {
            let entries: Vec<LogEntry> = (0..n).map(|i| entry(i, mask & (1 << i) != 0)).collect();
            let s = mask.count_ones() as usize;
            for k in [1, 2, 6] {
                let picked = stratified_log_sample(&entries, k, &mut rng, 1.0);
                let want = allocate(s, n - s, k);
                let got_s = picked.iter().filter(|e| e.feedback >= 1.0).count();
                assert_eq!((got_s, picked.len() - got_s), (want.successes, want.failures));
                // Picked entries appear in their original order.
                let idx: Vec<usize> = picked.iter().map(|e| e.task_id[1..].parse().unwrap()).collect();
                assert!(idx.windows(2).all(|w| w[0] < w[1]), "{idx:?}");
            }
        }
    }
}

proptest! {
    #[test]
    fn sample_is_an_ordered_subset(pattern in prop::collection::vec(any::<bool>(), 0..40), k in 0usize..12, seed in any::<u64>()) {
        let entries: Vec<LogEntry> = pattern.iter().enumerate().map(|(i, &s)| entry(i, s)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picked = stratified_log_sample(&entries, k, &mut rng, 1.0);
        prop_assert_eq!(picked.len(), k.min(entries.len()));
        let idx: Vec<usize> = picked.iter().map(|e| e.task_id[1..].parse().unwrap()).collect();
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        for (i, e) in idx.iter().zip(&picked) {
            prop_assert_eq!(&entries[*i], e);
        }
        let mut again = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(stratified_log_sample(&entries, k, &mut again, 1.0), picked);
    }
}
