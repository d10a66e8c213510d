use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;

use crate::diffnum::{dot, Matrix};
use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;

/// Node and query representations whose inner products separate the
/// completing nodes of every query subset from all other nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasonableSolution {
    /// `|V| x r`.
    pub z: Matrix,
    /// `|Q| x r`.
    pub q: Matrix,
    pub rank: usize,
    /// Distinct query subsets, sorted.
    pub queries: Vec<Vec<usize>>,
    /// Completing nodes `S_j` of each query subset.
    pub completions: Vec<Vec<usize>>,
    /// Indicator matrix `B` with `B_ij = 1` iff node `i` completes query `j`.
    pub indicator: Matrix,
}

impl ReasonableSolution {
    /// Smallest `z_iᵀq_j - z_kᵀq_j` over all queries `j`, completing nodes
    /// `i` and non-completing nodes `k`. Errors with the violating triple
    /// if the margin is not positive.
    pub fn margin(&self) -> Result<f64> {
        let n = self.z.rows();
        let mut margin = f64::INFINITY;
        for (j, completing) in self.completions.iter().enumerate() {
            let qj = self.q.row(j);
            let scores: Vec<f64> = (0..n).map(|i| dot(self.z.row(i), qj)).collect();
            let inside: BTreeSet<usize> = completing.iter().copied().collect();
            let (i_min, lo) = completing
                .iter()
                .map(|&i| (i, scores[i]))
                .fold((usize::MAX, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            let Some((k_max, hi)) = (0..n)
                .filter(|k| !inside.contains(k))
                .map(|k| (k, scores[k]))
                .fold(None, |a: Option<(usize, f64)>, b| match a {
                    Some(a) if a.1 >= b.1 => Some(a),
                    _ => Some(b),
                })
            else {
                continue;
            };
            if lo <= hi {
                return Err(Error::Verification(format!(
                    "query {:?}: node {i_min} scores {lo} <= node {k_max} scores {hi}",
                    self.queries[j]
                )));
            }
            margin = margin.min(lo - hi);
        }
        Ok(margin)
    }

    /// Frobenius norm of `Z Qᵀ - B`.
    pub fn reconstruction_error(&self) -> Result<f64> {
        let r = self.z.matmul_transposed(&self.q)?;
        let mut diff = r;
        diff.add_assign(&self.indicator.scale(-1.0))?;
        Ok(diff.frobenius_norm())
    }
}

/// Builds `B` from the distinct query subsets and factors it by thin SVD:
/// `Z = UΣ`, `Q = V`, keeping singular values above `1e-12·σ_1`.
pub fn reasonable_solution(hypergraph: &Hypergraph) -> Result<ReasonableSolution> {
    let mut completions: BTreeMap<Vec<usize>, BTreeSet<usize>> = BTreeMap::new();
    for e in hypergraph.hyperedges() {
        if e.len() < 2 {
            continue;
        }
        for (k, &v) in e.iter().enumerate() {
            let mut q: Vec<usize> = e[..k].iter().chain(&e[k + 1..]).copied().collect();
            q.sort_unstable();
            completions.entry(q).or_default().insert(v);
        }
    }
    if completions.is_empty() {
        return Err(Error::invalid(
            "a reasonable solution needs a hyperedge of size >= 2",
        ));
    }
    let n = hypergraph.num_nodes();
    let queries: Vec<Vec<usize>> = completions.keys().cloned().collect();
    let completions: Vec<Vec<usize>> = completions
        .into_values()
        .map(|s| s.into_iter().collect())
        .collect();
    let m = queries.len();
    let mut indicator = Matrix::zeros(n, m);
    for (j, s) in completions.iter().enumerate() {
        for &i in s {
            indicator.row_mut(i)[j] = 1.0;
        }
    }

    // nalgebra's SVD is unreliable on wide inputs, so factor the tall side
    let wide = n < m;
    let b = if wide {
        DMatrix::from_fn(m, n, |j, i| indicator[(i, j)])
    } else {
        DMatrix::from_fn(n, m, |i, j| indicator[(i, j)])
    };
    let svd = b.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Verification("SVD did not return singular vectors".into())),
    };
    let sigma = svd.singular_values;
    let top = sigma.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..sigma.len()).filter(|&k| sigma[k] > 1e-12 * top).collect();
    let rank = keep.len();
    // B = UΣVᵀ, or Bᵀ = UΣVᵀ when wide
    let left = |i: usize, c: usize| if wide { vt[(keep[c], i)] } else { u[(i, keep[c])] };
    let right = |j: usize, c: usize| if wide { u[(j, keep[c])] } else { vt[(keep[c], j)] };
    let z = Matrix::from_fn(n, rank, |i, c| left(i, c) * sigma[keep[c]]);
    let q = Matrix::from_fn(m, rank, right);
    Ok(ReasonableSolution {
        z,
        q,
        rank,
        queries,
        completions,
        indicator,
    })
}
