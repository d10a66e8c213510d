use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Node swapping: `iterations` rounds of picking two distinct hyperedges
/// uniformly, one member of each uniformly, and exchanging the two members.
///
/// A round whose exchange would place a node twice in one hyperedge (the
/// picked node is already a member of the other hyperedge) leaves the
/// hyperedges unchanged, so sizes and the distinct-member invariant hold.
pub fn node_swap(hyperedges: &[Vec<usize>], iterations: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if hyperedges.len() < 2 {
        return Err(Error::invalid(format!(
            "node swapping needs at least 2 hyperedges, got {}",
            hyperedges.len()
        )));
    }
    if hyperedges.iter().any(Vec::is_empty) {
        return Err(Error::invalid("node swapping on an empty hyperedge"));
    }
    let mut edges = hyperedges.to_vec();
    let mut rng = rng_from_seed(seed);
    let m = edges.len();
    for _ in 0..iterations {
        let a = rng.random_range(0..m);
        let mut b = rng.random_range(0..m - 1);
        if b >= a {
            b += 1;
        }
        let pa = rng.random_range(0..edges[a].len());
        let pb = rng.random_range(0..edges[b].len());
        let (va, vb) = (edges[a][pa], edges[b][pb]);
        if va == vb || edges[a].contains(&vb) || edges[b].contains(&va) {
            continue;
        }
        edges[a][pa] = vb;
        edges[b][pb] = va;
    }
    Ok(edges)
}
