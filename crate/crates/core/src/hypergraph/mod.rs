//! Hypergraph data structures, text I/O, synthetic generation, topology
//! corruption and dataset splitting.

mod io;
mod split;
mod swap;
mod synthetic;

pub use io::{
    load_dataset, parse_dataset, read_embeddings, save_dataset, write_dataset, write_embeddings,
    Dataset,
};
pub use split::{split_hyperedges, split_nodes, EdgeSplit, NodeSplit, Ratios, SplitSpec};
pub use swap::node_swap;
pub(crate) use synthetic::draw_class1_count;
pub use synthetic::{generate_synthetic, SyntheticSpec, CLASS0_MEAN, CLASS1_MEAN};

use std::collections::HashSet;

use crate::diffnum::Matrix;
use crate::error::{Error, Result};

/// A node count plus an ordered list of hyperedges. Duplicate hyperedges are
/// allowed and kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypergraph {
    num_nodes: usize,
    hyperedges: Vec<Vec<usize>>,
}

impl Hypergraph {
    pub fn new(num_nodes: usize, hyperedges: Vec<Vec<usize>>) -> Result<Self> {
        for (j, e) in hyperedges.iter().enumerate() {
            validate_edge(num_nodes, e).map_err(|m| Error::invalid(format!("hyperedge {j}: {m}")))?;
        }
        Ok(Self {
            num_nodes,
            hyperedges,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_hyperedges(&self) -> usize {
        self.hyperedges.len()
    }

    pub fn hyperedges(&self) -> &[Vec<usize>] {
        &self.hyperedges
    }

    pub fn into_hyperedges(self) -> Vec<Vec<usize>> {
        self.hyperedges
    }

    /// Same node set, different hyperedges.
    pub fn with_hyperedges(&self, hyperedges: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(self.num_nodes, hyperedges)
    }

    /// Hyperedges selected by index, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            num_nodes: self.num_nodes,
            hyperedges: indices.iter().map(|&j| self.hyperedges[j].clone()).collect(),
        }
    }

    /// Incident hyperedge indices for every node.
    pub fn node_incidence(&self) -> Vec<Vec<usize>> {
        incidence(self.num_nodes, &self.hyperedges)
    }

    /// Σ |e_j|.
    pub fn total_membership(&self) -> usize {
        self.hyperedges.iter().map(Vec::len).sum()
    }

    pub fn sorted_sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.hyperedges.iter().map(Vec::len).collect();
        s.sort_unstable();
        s
    }
}

pub(crate) fn incidence(num_nodes: usize, hyperedges: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut inc = vec![Vec::new(); num_nodes];
    for (j, e) in hyperedges.iter().enumerate() {
        for &v in e {
            inc[v].push(j);
        }
    }
    inc
}

fn validate_edge(num_nodes: usize, edge: &[usize]) -> std::result::Result<(), String> {
    if edge.is_empty() {
        return Err("empty hyperedge".into());
    }
    let mut seen = HashSet::with_capacity(edge.len());
    for &v in edge {
        if v >= num_nodes {
            return Err(format!("node id {v} out of range for {num_nodes} nodes"));
        }
        if !seen.insert(v) {
            return Err(format!("node id {v} repeated"));
        }
    }
    Ok(())
}

/// Node feature matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Matrix);

impl FeatureMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        if let Some(pos) = values.as_slice().iter().position(|v| !v.is_finite()) {
            let cols = values.cols().max(1);
            return Err(Error::NonFinite(format!(
                "feature ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self(values))
    }

    pub fn num_nodes(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Per-node class indices, contiguous from 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut present = vec![false; num_classes];
        for &l in &labels {
            present[l] = true;
        }
        if let Some(missing) = present.iter().position(|p| !p) {
            return Err(Error::invalid(format!(
                "class labels must be contiguous from 0; class {missing} is missing"
            )));
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, node: usize) -> usize {
        self.labels[node]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Fraction of same-class node pairs among all unordered within-hyperedge
/// pairs; each hyperedge contributes its own pairs.
pub fn pairwise_homophily(hypergraph: &Hypergraph, labels: &LabelVector) -> Result<f64> {
    if labels.len() != hypergraph.num_nodes() {
        return Err(Error::invalid(format!(
            "{} labels for {} nodes",
            labels.len(),
            hypergraph.num_nodes()
        )));
    }
    let (mut same, mut total) = (0u64, 0u64);
    for e in hypergraph.hyperedges() {
        for (a, &u) in e.iter().enumerate() {
            for &v in &e[a + 1..] {
                total += 1;
                if labels.get(u) == labels.get(v) {
                    same += 1;
                }
            }
        }
    }
    if total == 0 {
        return Err(Error::invalid(
            "homophily is undefined without a hyperedge of size >= 2",
        ));
    }
    Ok(same as f64 / total as f64)
}
