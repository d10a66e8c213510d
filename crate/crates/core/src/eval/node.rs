use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::{argmax_rows, cross_entropy, select_by_validation, Selection};
use crate::diffnum::{Adam, AdamConfig, Matrix, Parameter, Tape};
use crate::encoder::{accumulate, bind, bind_frozen, HypergraphEncoder, Linear, Module, Topology};
use crate::error::{Error, Result};
use crate::hypergraph::{LabelVector, NodeSplit};
use crate::rng::{derive_seed, rng_from_seed};

/// Downstream training protocol shared by the probes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Validation interval in epochs.
    pub eval_every: usize,
    pub seed: u64,
}

impl EvalConfig {
    /// 200 epochs, learning rate 1e-3, validation every 10 epochs.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            epochs: 200,
            lr: 1e-3,
            weight_decay: 1e-6,
            eval_every: 10,
            seed,
        }
    }

    pub(crate) fn adam(&self) -> Adam {
        Adam::new(AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        })
    }
}

fn check_split(labels: &LabelVector, split: &NodeSplit, rows: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::invalid(format!("{} labels for {rows} rows", labels.len())));
    }
    for (name, part) in [
        ("train", &split.train),
        ("valid", &split.valid),
        ("test", &split.test),
    ] {
        if part.is_empty() {
            return Err(Error::invalid(format!("{name} split is empty")));
        }
        if let Some(&bad) = part.iter().find(|&&i| i >= rows) {
            return Err(Error::invalid(format!("{name} node {bad} out of range")));
        }
    }
    Ok(())
}

fn accuracy(pred: &[usize], labels: &LabelVector, nodes: &[usize]) -> f64 {
    let hits = nodes.iter().filter(|&&i| pred[i] == labels.get(i)).count();
    hits as f64 / nodes.len() as f64
}

fn labels_of(labels: &LabelVector, nodes: &[usize]) -> Vec<usize> {
    nodes.iter().map(|&i| labels.get(i)).collect()
}

/// Multinomial logistic regression on frozen `z`, zero-initialized; returns the test accuracy
/// of the validation-selected checkpoint.
pub fn linear_probe(
    z: &Matrix,
    labels: &LabelVector,
    split: &NodeSplit,
    config: &EvalConfig,
) -> Result<Selection> {
    check_split(labels, split, z.rows())?;
    let mut head = Linear {
        weight: Parameter::new(Matrix::zeros(z.cols(), labels.num_classes())),
        bias: Parameter::new(Matrix::zeros(1, labels.num_classes())),
    };
    let mut optimizer = config.adam();
    let train_x = z.select_rows(&split.train);
    let train_y = Rc::new(labels_of(labels, &split.train));

    let evaluate = |head: &Linear| -> Result<(f64, f64)> {
        let logits = affine(z, head)?;
        let pred = argmax_rows(&logits);
        Ok((
            accuracy(&pred, labels, &split.valid),
            accuracy(&pred, labels, &split.test),
        ))
    };

    select_by_validation(
        config,
        &mut head,
        |head| {
            let mut tape = Tape::new();
            let vars = bind(&mut tape, &*head);
            let x = tape.constant(train_x.clone());
            let y = tape.matmul(x, vars[0])?;
            let logits = tape.add_bias(y, vars[1])?;
            let loss = cross_entropy(&mut tape, logits, &train_y)?;
            let grads = tape.backward(loss)?;
            accumulate(head, &vars, &grads)?;
            optimizer.step(&mut head.parameters_mut())
        },
        evaluate,
    )
}

fn affine(x: &Matrix, layer: &Linear) -> Result<Matrix> {
    let mut y = x.matmul(&layer.weight.value)?;
    let b = layer.bias.value.row(0);
    for i in 0..y.rows() {
        y.row_mut(i).iter_mut().zip(b).for_each(|(v, bi)| *v += bi);
    }
    Ok(y)
}

/// Encoder and affine head trained jointly on the train nodes; the encoder
/// starts from `encoder` (pretrained or freshly initialized).
pub fn fine_tune(
    x: &Matrix,
    hyperedges: &[Vec<usize>],
    encoder: &HypergraphEncoder,
    labels: &LabelVector,
    split: &NodeSplit,
    config: &EvalConfig,
) -> Result<Selection> {
    check_split(labels, split, x.rows())?;
    if encoder.in_dim() != x.cols() {
        return Err(Error::shape(
            "fine_tune",
            format!("encoder expects {} features, got {}", encoder.in_dim(), x.cols()),
        ));
    }
    let n = x.rows();
    let topology = Topology::new(n, hyperedges);
    let mut model = FineTuneModel {
        encoder: encoder.clone(),
        head: Linear::new(
            encoder.out_dim(),
            labels.num_classes(),
            &mut rng_from_seed(derive_seed(config.seed, 0)),
        ),
    };
    let mut optimizer = config.adam();
    let mut dropout_rng = rng_from_seed(derive_seed(config.seed, 1));
    let train_nodes = Rc::new(split.train.clone());
    let train_y = Rc::new(labels_of(labels, &split.train));

    let evaluate = |m: &FineTuneModel| -> Result<(f64, f64)> {
        let logits = m.logits(x, &topology)?;
        let pred = argmax_rows(&logits);
        Ok((
            accuracy(&pred, labels, &split.valid),
            accuracy(&pred, labels, &split.test),
        ))
    };

    select_by_validation(
        config,
        &mut model,
        |m| {
            let masks = (m.encoder.dropout > 0.0).then(|| m.encoder.sample_dropout(n, &mut dropout_rng));
            let mut tape = Tape::new();
            let vars = bind(&mut tape, &*m);
            let xv = tape.constant(x.clone());
            let nl = m.encoder.layers.len() * 2;
            let z = m
                .encoder
                .forward(&mut tape, &vars[..nl], xv, &topology, masks.as_deref())?;
            let zt = tape.gather_rows(z, train_nodes.clone())?;
            let y = tape.matmul(zt, vars[nl])?;
            let logits = tape.add_bias(y, vars[nl + 1])?;
            let loss = cross_entropy(&mut tape, logits, &train_y)?;
            let grads = tape.backward(loss)?;
            accumulate(m, &vars, &grads)?;
            optimizer.step(&mut m.parameters_mut())
        },
        evaluate,
    )
}

struct FineTuneModel {
    encoder: HypergraphEncoder,
    head: Linear,
}

impl FineTuneModel {
    fn logits(&self, x: &Matrix, topology: &Topology) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = bind_frozen(&mut tape, self);
        let xv = tape.constant(x.clone());
        let nl = self.encoder.layers.len() * 2;
        let z = self.encoder.forward(&mut tape, &vars[..nl], xv, topology, None)?;
        let y = tape.matmul(z, vars[nl])?;
        let logits = tape.add_bias(y, vars[nl + 1])?;
        Ok(tape.value(logits).clone())
    }
}

impl Module for FineTuneModel {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut p = self.encoder.parameters();
        p.extend(self.head.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = self.encoder.parameters_mut();
        p.extend(self.head.parameters_mut());
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{ModelConfig, ModelParams};
    use crate::hypergraph::{split_nodes, Ratios, SplitSpec};

    fn setup() -> (LabelVector, NodeSplit) {
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let labels = LabelVector::new(labels).unwrap();
        let split = split_nodes(
            &labels,
            &SplitSpec::Ratios(Ratios::new(0.5, 0.25, 0.25)),
            4,
        )
        .unwrap();
        (labels, split)
    }

    #[test]
    fn one_hot_embeddings_are_perfectly_separable() {
        let (labels, split) = setup();
        let z = Matrix::from_fn(60, 3, |i, j| f64::from(labels.get(i) == j));
        let r = linear_probe(&z, &labels, &split, &EvalConfig::with_seed(1)).unwrap();
        assert_eq!(r.test, 1.0);
    }

    #[test]
    fn zero_embeddings_predict_a_single_class() {
        let labels = LabelVector::new((0..40).map(|i| usize::from(i % 4 == 0)).collect()).unwrap();
        let split = split_nodes(&labels, &SplitSpec::Ratios(Ratios::new(0.5, 0.25, 0.25)), 2).unwrap();
        let z = Matrix::zeros(40, 5);
        let r = linear_probe(&z, &labels, &split, &EvalConfig::with_seed(3)).unwrap();
        let majority = split.test.iter().filter(|&&i| labels.get(i) == 0).count() as f64
            / split.test.len() as f64;
        assert!(r.test == majority || r.test == 1.0 - majority);
        assert!(r.best_epoch.is_multiple_of(10));
    }

    #[test]
    fn probe_does_not_mutate_input_and_is_deterministic() {
        let (labels, split) = setup();
        let z = Matrix::from_fn(60, 4, |i, j| ((i * 13 + j * 7) % 11) as f64 - 5.0);
        let before = z.clone();
        let a = linear_probe(&z, &labels, &split, &EvalConfig::with_seed(8)).unwrap();
        let b = linear_probe(&z, &labels, &split, &EvalConfig::with_seed(8)).unwrap();
        assert_eq!(z, before);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_split_rejected() {
        let (labels, mut split) = setup();
        split.valid.clear();
        let z = Matrix::zeros(60, 2);
        assert!(linear_probe(&z, &labels, &split, &EvalConfig::with_seed(0)).is_err());
    }

    #[test]
    fn fine_tune_runs_and_is_deterministic() {
        let (labels, split) = setup();
        let x = Matrix::from_fn(60, 4, |i, j| f64::from(labels.get(i) == j % 3) + 0.1 * j as f64);
        let edges: Vec<Vec<usize>> = (0..20).map(|k| vec![k, k + 3, k + 6]).collect();
        let params = ModelParams::init(
            ModelConfig {
                hidden_dim: 8,
                embed_dim: 6,
                head_dim: 6,
                ..ModelConfig::with_input_dim(4)
            },
            1,
        )
        .unwrap();
        let mut config = EvalConfig::with_seed(2);
        config.epochs = 30;
        let a = fine_tune(&x, &edges, &params.encoder, &labels, &split, &config).unwrap();
        let b = fine_tune(&x, &edges, &params.encoder, &labels, &split, &config).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.test));
    }
}
