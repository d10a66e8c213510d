use std::rc::Rc;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{cross_entropy, select_by_validation, EvalConfig, Selection};
use crate::diffnum::{Matrix, Tape};
use crate::encoder::{accumulate, bind, bind_frozen, Mlp, Module};
use crate::error::{Error, Result};
use crate::hypergraph::EdgeSplit;
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// A candidate hyperedge with its ground-truth label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSample {
    pub nodes: Vec<usize>,
    pub positive: bool,
}

/// Fake hyperedges whose sizes follow the size distribution of
/// `reference`, with members drawn uniformly without replacement. Sizes
/// larger than `num_nodes` are redrawn.
pub fn sample_negative_hyperedges(
    reference: &[Vec<usize>],
    count: usize,
    num_nodes: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if reference.is_empty() {
        return Err(Error::invalid("negative sampling needs reference hyperedges"));
    }
    if !reference.iter().any(|e| !e.is_empty() && e.len() <= num_nodes) {
        return Err(Error::invalid(format!(
            "no reference hyperedge fits in {num_nodes} nodes"
        )));
    }
    let mut rng = rng_from_seed(seed);
    Ok((0..count)
        .map(|_| draw_negative(&mut rng, reference, num_nodes))
        .collect())
}

fn draw_negative(rng: &mut Rng, reference: &[Vec<usize>], num_nodes: usize) -> Vec<usize> {
    let size = loop {
        let s = reference[rng.random_range(0..reference.len())].len();
        if s >= 1 && s <= num_nodes {
            break s;
        }
    };
    let mut e = sample(rng, num_nodes, size).into_vec();
    e.sort_unstable();
    e
}

/// Coordinate-wise max minus min of the member rows of `z`.
pub fn hyperedge_embedding(z: &Matrix, edge: &[usize]) -> Result<Vec<f64>> {
    let Some((&first, rest)) = edge.split_first() else {
        return Err(Error::invalid("empty hyperedge has no embedding"));
    };
    if let Some(&bad) = edge.iter().find(|&&v| v >= z.rows()) {
        return Err(Error::invalid(format!("node {bad} out of range")));
    }
    let mut hi = z.row(first).to_vec();
    let mut lo = hi.clone();
    for &v in rest {
        for ((h, l), &x) in hi.iter_mut().zip(lo.iter_mut()).zip(z.row(v)) {
            *h = h.max(x);
            *l = l.min(x);
        }
    }
    Ok(hi.iter().zip(&lo).map(|(h, l)| h - l).collect())
}

/// Mann–Whitney AUROC: the probability that a random positive outscores a
/// random negative, ties counting one half.
pub fn auroc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            positive.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = positive.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid(
            "AUROC needs both positive and negative samples",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the Mann–Whitney U, kept integral
    let (mut u2, mut negs_below, mut k) = (0u128, 0u128, 0);
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[k]] {
            end += 1;
        }
        let tied = &order[k..=end];
        let tp = tied.iter().filter(|&&i| positive[i]).count() as u128;
        let tn = tied.len() as u128 - tp;
        u2 += tp * (2 * negs_below + tn);
        negs_below += tn;
        k = end + 1;
    }
    Ok(u2 as f64 / (2 * pos * neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeConfig {
    pub train: EvalConfig,
    pub hidden_dim: usize,
    pub dropout: f64,
}

impl EdgeConfig {
    /// Hidden width 128, dropout 0.5, on top of [`EvalConfig::with_seed`].
    pub fn with_seed(seed: u64) -> Self {
        Self {
            train: EvalConfig::with_seed(seed),
            hidden_dim: 128,
            dropout: 0.5,
        }
    }
}

/// Positives of each split part plus an equal number of size-matched
/// negatives, drawn once per part from `seed`.
pub fn edge_samples(
    hyperedges: &[Vec<usize>],
    split: &EdgeSplit,
    num_nodes: usize,
    seed: u64,
) -> Result<[Vec<EdgeSample>; 3]> {
    let part = |ids: &[usize], stream: u64| -> Result<Vec<EdgeSample>> {
        let pos: Vec<Vec<usize>> = ids.iter().map(|&j| hyperedges[j].clone()).collect();
        let neg = sample_negative_hyperedges(&pos, pos.len(), num_nodes, derive_seed(seed, stream))?;
        Ok(pos
            .into_iter()
            .map(|nodes| EdgeSample {
                nodes,
                positive: true,
            })
            .chain(neg.into_iter().map(|nodes| EdgeSample {
                nodes,
                positive: false,
            }))
            .collect())
    };
    Ok([
        part(&split.train, 0)?,
        part(&split.valid, 1)?,
        part(&split.test, 2)?,
    ])
}

fn embed_samples(z: &Matrix, samples: &[EdgeSample]) -> Result<Matrix> {
    let rows = samples
        .iter()
        .map(|s| hyperedge_embedding(z, &s.nodes))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows)
}

/// Two-layer classifier on max-min hyperedge embeddings of frozen `z`;
/// returns the test AUROC of the validation-selected checkpoint.
pub fn hyperedge_prediction(
    z: &Matrix,
    samples: &[Vec<EdgeSample>; 3],
    config: &EdgeConfig,
) -> Result<Selection> {
    if !(0.0..1.0).contains(&config.dropout) {
        return Err(Error::invalid(format!("dropout {} outside [0, 1)", config.dropout)));
    }
    let [train, valid, test] = samples;
    let train_x = embed_samples(z, train)?;
    let valid_x = embed_samples(z, valid)?;
    let test_x = embed_samples(z, test)?;
    let label = |s: &[EdgeSample]| s.iter().map(|e| e.positive).collect::<Vec<_>>();
    let (valid_y, test_y) = (label(valid), label(test));
    let train_y = Rc::new(
        train
            .iter()
            .map(|e| usize::from(e.positive))
            .collect::<Vec<_>>(),
    );

    let mut mlp = Mlp::new(
        z.cols(),
        config.hidden_dim,
        2,
        &mut rng_from_seed(derive_seed(config.train.seed, 0)),
    );
    let mut optimizer = config.train.adam();
    let mut dropout_rng = rng_from_seed(derive_seed(config.train.seed, 1));
    let (rate, hidden) = (config.dropout, config.hidden_dim);

    let evaluate = |m: &Mlp| -> Result<(f64, f64)> {
        Ok((
            auroc(&scores(m, &valid_x)?, &valid_y)?,
            auroc(&scores(m, &test_x)?, &test_y)?,
        ))
    };

    select_by_validation(
        &config.train,
        &mut mlp,
        |m| {
            let mask = (rate > 0.0).then(|| {
                Rc::new(Matrix::from_fn(train_x.rows(), hidden, |_, _| {
                    if dropout_rng.random::<f64>() < rate {
                        0.0
                    } else {
                        1.0 / (1.0 - rate)
                    }
                }))
            });
            let mut tape = Tape::new();
            let vars = bind(&mut tape, &*m);
            let x = tape.constant(train_x.clone());
            let logits = Mlp::forward(&mut tape, &vars, x, mask)?;
            let loss = cross_entropy(&mut tape, logits, &train_y)?;
            let grads = tape.backward(loss)?;
            accumulate(m, &vars, &grads)?;
            optimizer.step(&mut m.parameters_mut())
        },
        evaluate,
    )
}

/// Positive-class logit margin for each row.
fn scores(mlp: &Mlp, x: &Matrix) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let vars = bind_frozen(&mut tape, mlp);
    let xv = tape.constant(x.clone());
    let logits = Mlp::forward(&mut tape, &vars, xv, None)?;
    Ok(tape
        .value(logits)
        .iter_rows()
        .map(|r| r[1] - r[0])
        .collect())
}
