use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One train/validation split of a k-fold partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    /// 1-based fold number.
    pub index: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

const FOLD_STREAM: u64 = 0x666f_6c64;

/// Mixes a base seed with a sequence of tags (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut state = seed;
    for tag in tags {
        state = state
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(tag.wrapping_mul(0xD1B5_4A32_D192_ED03));
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        state = z ^ (z >> 31);
    }
    state
}

/// Shuffles `0..n_pairs` once and cuts it into `k` contiguous validation
/// blocks whose sizes differ by at most one.
///
/// The split depends only on `(n_pairs, k, seed)`. Pairs are shuffled as a
/// single pool, so grouped datasets get validation sets spanning groups.
pub fn make_folds(n_pairs: usize, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::Config(format!("fold count must be at least 2, got {k}")));
    }
    if k > n_pairs {
        return Err(Error::Config(format!(
            "cannot split {n_pairs} pairs into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n_pairs).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[FOLD_STREAM, n_pairs as u64, k as u64]));
    order.shuffle(&mut rng);

    let base = n_pairs / k;
    let extra = n_pairs % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        let mut val = order[start..start + size].to_vec();
        val.sort_unstable();
        let mut train: Vec<usize> = order[..start]
            .iter()
            .chain(&order[start + size..])
            .copied()
            .collect();
        train.sort_unstable();
        folds.push(FoldSplit {
            index: i + 1,
            train,
            val,
        });
        start += size;
    }
    Ok(folds)
}
