use rand::seq::index::sample;
use rand::Rng as _;

use crate::diffnum::Matrix;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

fn check_rate(name: &str, rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("{name} = {rate} outside [0, 1]")));
    }
    Ok(())
}

/// Zeroes each entry of `x` independently with probability `p_v`.
pub fn augment_features(x: &Matrix, p_v: f64, seed: u64) -> Result<Matrix> {
    check_rate("p_v", p_v)?;
    let mut rng = rng_from_seed(seed);
    let mut out = x.clone();
    for v in out.as_mut_slice() {
        if !rng.random_bool(1.0 - p_v) {
            *v = 0.0;
        }
    }
    Ok(out)
}

/// Number of hyperedges kept by [`augment_hyperedges`].
pub fn kept_hyperedges(num_hyperedges: usize, p_e: f64) -> usize {
    let kept = ((num_hyperedges as f64) * (1.0 - p_e) - 1e-9).ceil().max(0.0) as usize;
    kept.min(num_hyperedges)
}

/// Keeps a uniformly random subset of `⌈|E|(1-p_e)⌉` hyperedges in their
/// original order.
pub fn augment_hyperedges(hyperedges: &[Vec<usize>], p_e: f64, seed: u64) -> Result<Vec<Vec<usize>>> {
    check_rate("p_e", p_e)?;
    let m = hyperedges.len();
    let keep = kept_hyperedges(m, p_e);
    let mut rng = rng_from_seed(seed);
    let mut chosen: Vec<usize> = sample(&mut rng, m, keep).into_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|j| hyperedges[j].clone()).collect())
}
