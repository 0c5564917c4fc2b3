use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::interactions::BinaryInteractions;

/// `k` distinct items drawn uniformly from `pool` minus the user's
/// positives. `pool` must be sorted.
pub fn sample_negatives<R: Rng + ?Sized>(
    user: usize,
    positives: &BinaryInteractions,
    pool: &[usize],
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    debug_assert!(pool.windows(2).all(|w| w[0] < w[1]));
    let pos = positives.positives(user);
    let blocked = pos.iter().filter(|i| pool.binary_search(i).is_ok()).count();
    let available = pool.len() - blocked;
    if available < k {
        return Err(Error::Sampling {
            user,
            available,
            requested: k,
        });
    }
    if available <= 2 * k {
        let mut candidates: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|i| pos.binary_search(i).is_err())
            .collect();
        let (chosen, _) = candidates.partial_shuffle(rng, k);
        return Ok(chosen.to_vec());
    }
    // rejection sampling: uniform over k-subsets of the complement
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let cand = pool[rng.gen_range(0..pool.len())];
        if pos.binary_search(&cand).is_ok() || out.contains(&cand) {
            continue;
        }
        out.push(cand);
    }
    Ok(out)
}
