//! Two-class synthetic hypergraphs with Gaussian features.
//!
//! Nodes `0..N` form class 1 with features drawn from `N(0.5·1, I)`, nodes
//! `N..2N` form class 0 with features from `N(-0.5·1, I)`. Each hyperedge
//! draws a class `c ~ Bernoulli(0.5)` and puts
//! `Binomial(|e|, P^c (1-P)^(1-c))` of its members in class 1; members are
//! picked uniformly without replacement inside each class.

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, Hypergraph, LabelVector};
use crate::diffnum::Matrix;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};

pub const CLASS1_MEAN: f64 = 0.5;
pub const CLASS0_MEAN: f64 = -0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Nodes per class.
    pub nodes_per_class: usize,
    pub dim: usize,
    /// Hyperedge affinity in `[0, 1]`.
    pub affinity: f64,
    pub edge_sizes: Vec<usize>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_class == 0 {
            return Err(Error::invalid("nodes per class must be >= 1"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("feature dimension must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.affinity) {
            return Err(Error::invalid(format!(
                "affinity {} outside [0, 1]",
                self.affinity
            )));
        }
        let max = 2 * self.nodes_per_class;
        if let Some(&s) = self.edge_sizes.iter().find(|&&s| s < 2 || s > max) {
            return Err(Error::invalid(format!(
                "hyperedge size {s} outside [2, {max}]"
            )));
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Hypergraph, FeatureMatrix, LabelVector)> {
    spec.validate()?;
    let n = spec.nodes_per_class;
    let mut rng = rng_from_seed(spec.seed);

    let labels: Vec<usize> = (0..2 * n).map(|i| usize::from(i < n)).collect();
    let features = Matrix::from_fn(2 * n, spec.dim, |i, _| {
        let mean = if i < n { CLASS1_MEAN } else { CLASS0_MEAN };
        let z: f64 = StandardNormal.sample(&mut rng);
        mean + z
    });

    let edges = spec
        .edge_sizes
        .iter()
        .map(|&size| sample_hyperedge(&mut rng, n, size, spec.affinity))
        .collect();

    Ok((
        Hypergraph::new(2 * n, edges)?,
        FeatureMatrix::new(features)?,
        LabelVector::new(labels)?,
    ))
}

/// Number of class-1 members for one hyperedge, redrawn until both class
/// pools can supply their share.
pub(crate) fn draw_class1_count(rng: &mut Rng, size: usize, affinity: f64, pool: usize) -> usize {
    loop {
        let class1_edge = rng.random_bool(0.5);
        let p = if class1_edge { affinity } else { 1.0 - affinity };
        let count = Binomial::new(size as u64, p)
            .expect("probability in [0, 1]")
            .sample(rng) as usize;
        if count <= pool && size - count <= pool {
            return count;
        }
    }
}

fn sample_hyperedge(rng: &mut Rng, n: usize, size: usize, affinity: f64) -> Vec<usize> {
    let in_class1 = draw_class1_count(rng, size, affinity, n);
    let mut edge: Vec<usize> = sample(rng, n, in_class1).into_iter().collect();
    edge.extend(sample(rng, n, size - in_class1).into_iter().map(|i| n + i));
    edge.sort_unstable();
    edge
}
