//! Node and hyperedge splits.
//!
//! Ratio splits take `floor(n·r)` for each part and give the remainder to
//! the training part.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::LabelVector;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Ratios {
    pub const fn new(train: f64, valid: f64, test: f64) -> Self {
        Self { train, valid, test }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::invalid(format!("split ratios must be positive: {parts:?}")));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split ratios sum to {total}, not 1")));
        }
        Ok(())
    }

    /// `(train, valid, test)` counts for `n` items.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let part = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
        let (valid, test) = (part(self.valid), part(self.test));
        (n - valid - test, valid, test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SplitSpec {
    Ratios(Ratios),
    /// Fixed train/valid counts per class, the rest to test.
    PerClass { train: usize, valid: usize },
}

/// Sorted node indices per part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Sorted hyperedge indices per part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_nodes(labels: &LabelVector, spec: &SplitSpec, seed: u64) -> Result<NodeSplit> {
    let mut rng = rng_from_seed(seed);
    let counts = labels.class_counts();
    let mut split = match *spec {
        SplitSpec::Ratios(r) => {
            r.validate()?;
            if let Some(c) = counts.iter().position(|&k| k == 0) {
                return Err(Error::invalid(format!("class {c} has no nodes")));
            }
            let n = labels.len();
            let (n_train, n_valid, _) = r.counts(n);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);

            // first node of each class in shuffled order seeds the train set
            let mut seen = vec![false; labels.num_classes()];
            let mut train = Vec::new();
            let mut remaining = Vec::with_capacity(n);
            for &v in &order {
                let c = labels.get(v);
                if !seen[c] {
                    seen[c] = true;
                    train.push(v);
                } else {
                    remaining.push(v);
                }
            }
            let extra = n_train.saturating_sub(train.len());
            train.extend_from_slice(&remaining[..extra]);
            let rest = &remaining[extra..];
            let n_valid = n_valid.min(rest.len());
            NodeSplit {
                train,
                valid: rest[..n_valid].to_vec(),
                test: rest[n_valid..].to_vec(),
            }
        }
        SplitSpec::PerClass { train, valid } => {
            if train == 0 {
                return Err(Error::invalid("per-class split needs >= 1 training node"));
            }
            if let Some((c, &k)) = counts.iter().enumerate().find(|(_, &k)| k < train + valid) {
                return Err(Error::invalid(format!(
                    "class {c} has {k} nodes, needs at least {}",
                    train + valid
                )));
            }
            let mut split = NodeSplit {
                train: Vec::new(),
                valid: Vec::new(),
                test: Vec::new(),
            };
            for c in 0..labels.num_classes() {
                let mut members: Vec<usize> =
                    (0..labels.len()).filter(|&v| labels.get(v) == c).collect();
                members.shuffle(&mut rng);
                split.train.extend_from_slice(&members[..train]);
                split.valid.extend_from_slice(&members[train..train + valid]);
                split.test.extend_from_slice(&members[train + valid..]);
            }
            split
        }
    };
    split.train.sort_unstable();
    split.valid.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

pub fn split_hyperedges(num_hyperedges: usize, ratios: &Ratios, seed: u64) -> Result<EdgeSplit> {
    ratios.validate()?;
    if num_hyperedges < 5 {
        return Err(Error::invalid(format!(
            "hyperedge split needs at least 5 hyperedges, got {num_hyperedges}"
        )));
    }
    let (n_train, n_valid, _) = ratios.counts(num_hyperedges);
    let mut order: Vec<usize> = (0..num_hyperedges).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut train = order[..n_train].to_vec();
    let mut valid = order[n_train..n_train + n_valid].to_vec();
    let mut test = order[n_train + n_valid..].to_vec();
    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();
    Ok(EdgeSplit { train, valid, test })
}
