//! Success/failure stratified subsampling of deployment logs.

use rand::seq::index;
use rand::RngCore;

use super::LogEntry;

/// Per-stratum counts chosen for a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Allocation {
    pub successes: usize,
    pub failures: usize,
}

/// Largest-remainder split of `k` between two strata of sizes
/// `successes` and `failures`, with every non-empty stratum getting at least
/// one slot when `k` allows it. Equal remainders favour the success stratum.
pub fn allocate(successes: usize, failures: usize, k: usize) -> Allocation {
    let n = successes + failures;
    if k >= n {
        return Allocation { successes, failures };
    }
    // Exact integer arithmetic: quota_s = k * successes / n.
    let num_s = k * successes;
    let num_f = k * failures;
    let mut s = num_s / n;
    let mut f = num_f / n;
    if s + f < k {
        // With two strata at most one slot is left over.
        let rem_s = num_s % n;
        let rem_f = num_f % n;
        if rem_s >= rem_f {
            s += 1;
        } else {
            f += 1;
        }
    }
    if k >= 2 {
        if successes > 0 && s == 0 {
            s = 1;
            f -= 1;
        } else if failures > 0 && f == 0 {
            f = 1;
            s -= 1;
        }
    }
    Allocation { successes: s, failures: f }
}

/// Draws `k_f` entries, balanced between successes (`feedback >=
/// success_threshold`) and failures. Entries keep their input order.
pub fn stratified_log_sample<R: RngCore + ?Sized>(
    entries: &[LogEntry],
    k_f: usize,
    rng: &mut R,
    success_threshold: f64,
) -> Vec<LogEntry> {
    if k_f >= entries.len() {
        return entries.to_vec();
    }
    let (success_idx, failure_idx): (Vec<usize>, Vec<usize>) =
        (0..entries.len()).partition(|&i| entries[i].feedback >= success_threshold);
    let alloc = allocate(success_idx.len(), failure_idx.len(), k_f);

    let mut chosen: Vec<usize> = Vec::with_capacity(k_f);
    for (pool, take) in [(&success_idx, alloc.successes), (&failure_idx, alloc.failures)] {
        chosen.extend(index::sample(rng, pool.len(), take).into_iter().map(|j| pool[j]));
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| entries[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportional_with_remainder() {
        assert_eq!(allocate(7, 3, 6), Allocation { successes: 4, failures: 2 });
    }

    #[test]
    fn empty_failure_stratum() {
        assert_eq!(allocate(10, 0, 6), Allocation { successes: 6, failures: 0 });
    }

    #[test]
    fn small_stratum_gets_one() {
        assert_eq!(allocate(11, 1, 3), Allocation { successes: 2, failures: 1 });
        assert_eq!(allocate(1, 11, 3), Allocation { successes: 1, failures: 2 });
    }

    #[test]
    fn k_exceeds_population() {
        assert_eq!(allocate(3, 1, 6), Allocation { successes: 3, failures: 1 });
    }
}
