//! Shared fixtures and oracles for the integration tests.

#![allow(dead_code)]

use hypeboy::diffnum::Matrix;
use hypeboy::hypergraph::{generate_synthetic, FeatureMatrix, Hypergraph, LabelVector, SyntheticSpec};

/// Central-difference derivative of `f` at every entry of `x`.
pub fn finite_difference(x: &Matrix, h: f64, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for k in 0..x.as_slice().len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + h;
        let up = f(&probe);
        probe.as_mut_slice()[k] = orig - h;
        let down = f(&probe);
        probe.as_mut_slice()[k] = orig;
        out.as_mut_slice()[k] = (up - down) / (2.0 * h);
    }
    out
}

/// `|a - b| / max(|a|, |b|, floor)`, maximized over entries.
pub fn max_relative_error(analytic: &Matrix, numeric: &Matrix, floor: f64) -> f64 {
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Two-class Gaussian hypergraph: 200 nodes, 32 features, 100 size-4
/// hyperedges, affinity 0.9.
pub fn synthetic_benchmark(seed: u64) -> (Hypergraph, FeatureMatrix, LabelVector) {
    generate_synthetic(&SyntheticSpec {
        nodes_per_class: 100,
        dim: 32,
        affinity: 0.9,
        edge_sizes: vec![4; 100],
        seed,
    })
    .expect("valid synthetic spec")
}
