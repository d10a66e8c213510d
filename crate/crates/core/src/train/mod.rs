//! Self-supervised training: augmentation, the hyperedge-filling loss, the
//! feature-reconstruction warm-up and the two-stage loop.

mod augment;
mod filling;
mod warmup;

pub use augment::{augment_features, augment_hyperedges, kept_hyperedges};
pub use filling::{
    enumerate_instances, filling_loss, filling_probabilities, query_groups, FillingInstance,
};
pub use warmup::{warmup_epoch, warmup_loss, WarmupDraw};

use std::fmt;
use std::io::Write;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::diffnum::{Adam, AdamConfig, Groups, Matrix, Parameter, Tape, Var};
use crate::encoder::{
    accumulate, bind, sum_queries, ModelConfig, ModelParams, Module, ProjectionHeads, Topology,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Feature-mask rate p_v.
    pub p_v: f64,
    /// Hyperedge-drop rate p_e.
    pub p_e: f64,
    pub warmup_epochs: usize,
    pub warmup_mask_rate: f64,
    pub warmup_p_e: f64,
    pub filling_epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub head_dim: usize,
    pub dropout: f64,
    /// Softmax temperature applied to cosine logits.
    pub temperature: f64,
    /// Redraw augmentations every filling epoch (otherwise once per run).
    pub fresh_augmentation: bool,
    /// Use the projection heads; `false` feeds raw embeddings to the loss.
    pub use_heads: bool,
}

impl TrainConfig {
    /// Defaults for everything except the two augmentation rates and the
    /// number of filling epochs.
    pub fn new(p_v: f64, p_e: f64, filling_epochs: usize) -> Self {
        Self {
            p_v,
            p_e,
            warmup_epochs: 300,
            warmup_mask_rate: 0.5,
            warmup_p_e: 0.2,
            filling_epochs,
            lr: 1e-3,
            weight_decay: 1e-6,
            seed: 0,
            hidden_dim: 128,
            embed_dim: 128,
            head_dim: 128,
            dropout: 0.5,
            temperature: 1.0,
            fresh_augmentation: true,
            use_heads: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("p_v", self.p_v),
            ("p_e", self.p_e),
            ("warmup_p_e", self.warmup_p_e),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid(format!("{name} = {r} outside [0, 1]")));
            }
        }
        if self.warmup_epochs > 0 && !(self.warmup_mask_rate > 0.0 && self.warmup_mask_rate < 1.0) {
            return Err(Error::invalid(format!(
                "warmup_mask_rate = {} outside (0, 1)",
                self.warmup_mask_rate
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(Error::invalid(format!(
                "lr {} / weight_decay {} invalid",
                self.lr, self.weight_decay
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        Ok(())
    }

    pub fn model_config(&self, in_dim: usize) -> ModelConfig {
        ModelConfig {
            in_dim,
            hidden_dim: self.hidden_dim,
            embed_dim: self.embed_dim,
            head_dim: self.head_dim,
            dropout: self.dropout,
        }
    }

    fn adam(&self) -> Adam {
        Adam::new(AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Warmup,
    Filling,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Warmup => "warmup",
            Stage::Filling => "filling",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub epoch: usize,
    pub stage: Stage,
    pub loss: f64,
}

/// Writes the `epoch,stage,loss` training log.
pub fn write_log<W: Write>(out: W, log: &[LogEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in log {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<LogEntry>,
}

/// Hyperedge-filling objective for already bound parameters. `head_vars`
/// is `None` for the variant without projection heads.
#[allow(clippy::too_many_arguments)]
pub fn filling_objective(
    tape: &mut Tape,
    params: &ModelParams,
    encoder_vars: &[Var],
    head_vars: Option<&[Var]>,
    x: &Matrix,
    topology: &Topology,
    instances: &[FillingInstance],
    queries: Groups,
    dropout: Option<&[Rc<Matrix>]>,
    temperature: f64,
) -> Result<Var> {
    let xv = tape.constant(x.clone());
    let z = params
        .encoder
        .forward(tape, encoder_vars, xv, topology, dropout)?;
    let (h, q) = match head_vars {
        Some(hv) => (
            ProjectionHeads::project_node(tape, hv, z)?,
            ProjectionHeads::project_set(tape, hv, z, queries)?,
        ),
        None => (z, sum_queries(tape, z, queries)?),
    };
    filling_loss(tape, h, q, instances, temperature)
}

const STREAM_INIT: u64 = 0;
const STREAM_WARMUP: u64 = 1;
const STREAM_FILLING: u64 = 2;

/// Two-stage training: feature-reconstruction warm-up, then hyperedge
/// filling with fresh Adam state. Filling instances come from the full
/// hyperedge list while messages pass over the augmented one.
pub fn train(x: &Matrix, hyperedges: &[Vec<usize>], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let n = x.rows();
    let mut params = ModelParams::init(
        config.model_config(x.cols()),
        derive_seed(config.seed, STREAM_INIT),
    )?;
    let mut log = Vec::with_capacity(config.warmup_epochs + config.filling_epochs);

    let warmup_root = derive_seed(config.seed, STREAM_WARMUP);
    let mut optimizer = config.adam();
    for epoch in 0..config.warmup_epochs {
        let seed = derive_seed(warmup_root, epoch as u64);
        let loss = warmup_epoch(x, hyperedges, &mut params, &mut optimizer, config, seed)
            .map_err(|e| at_epoch(e, Stage::Warmup, epoch))?;
        log.push(LogEntry {
            epoch,
            stage: Stage::Warmup,
            loss,
        });
    }

    if config.filling_epochs > 0 {
        let instances = enumerate_instances(hyperedges);
        if instances.is_empty() {
            return Err(Error::invalid(
                "no hyperedge of size >= 2, nothing to fill",
            ));
        }
        let queries = query_groups(&instances);
        let filling_root = derive_seed(config.seed, STREAM_FILLING);
        let mut optimizer = config.adam();
        for epoch in 0..config.filling_epochs {
            let epoch_seed = derive_seed(filling_root, epoch as u64);
            let aug_seed = if config.fresh_augmentation {
                epoch_seed
            } else {
                derive_seed(filling_root, 0)
            };
            let x_aug = augment_features(x, config.p_v, derive_seed(aug_seed, 0))?;
            let e_aug = augment_hyperedges(hyperedges, config.p_e, derive_seed(aug_seed, 1))?;
            let topology = Topology::new(n, &e_aug);
            let dropout = (config.dropout > 0.0).then(|| {
                params
                    .encoder
                    .sample_dropout(n, &mut rng_from_seed(derive_seed(epoch_seed, 2)))
            });
            let loss = filling_step(
                &mut params,
                &mut optimizer,
                config,
                &x_aug,
                &topology,
                &instances,
                queries.clone(),
                dropout.as_deref(),
            )
            .map_err(|e| at_epoch(e, Stage::Filling, epoch))?;
            log.push(LogEntry {
                epoch,
                stage: Stage::Filling,
                loss,
            });
        }
    }
    Ok(TrainOutcome { params, log })
}

#[allow(clippy::too_many_arguments)]
fn filling_step(
    params: &mut ModelParams,
    optimizer: &mut Adam,
    config: &TrainConfig,
    x: &Matrix,
    topology: &Topology,
    instances: &[FillingInstance],
    queries: Groups,
    dropout: Option<&[Rc<Matrix>]>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let enc = bind(&mut tape, &params.encoder);
    let heads = config.use_heads.then(|| bind(&mut tape, &params.heads));
    let loss = filling_objective(
        &mut tape,
        params,
        &enc,
        heads.as_deref(),
        x,
        topology,
        instances,
        queries,
        dropout,
        config.temperature,
    )?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("filling loss {value}")));
    }
    let grads = tape.backward(loss)?;
    accumulate(&mut params.encoder, &enc, &grads)?;
    let mut slots: Vec<&mut Parameter> = params.encoder.parameters_mut();
    if let Some(hv) = &heads {
        accumulate(&mut params.heads, hv, &grads)?;
        slots.extend(params.heads.parameters_mut());
    }
    optimizer.step(&mut slots)?;
    Ok(value)
}

fn at_epoch(err: Error, stage: Stage, epoch: usize) -> Error {
    match err {
        Error::NonFinite(m) => Error::NonFinite(format!("{stage} epoch {epoch}: {m}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Matrix, Vec<Vec<usize>>) {
        let x = Matrix::from_fn(8, 4, |i, j| {
            let sign = if i < 4 { 1.0 } else { -1.0 };
            sign * 0.5 + ((i * 5 + j * 3) % 7) as f64 * 0.1
        });
        let e = vec![
            vec![0, 1, 2],
            vec![1, 2, 3],
            vec![4, 5, 6],
            vec![5, 6, 7],
            vec![0, 3],
            vec![4, 7],
        ];
        (x, e)
    }

    fn small(p_v: f64, p_e: f64, filling: usize, warmup: usize) -> TrainConfig {
        TrainConfig {
            warmup_epochs: warmup,
            hidden_dim: 8,
            embed_dim: 6,
            head_dim: 6,
            seed: 13,
            ..TrainConfig::new(p_v, p_e, filling)
        }
    }

    #[test]
    fn zero_epochs_return_initialization() {
        let (x, e) = toy();
        let config = small(0.2, 0.2, 0, 0);
        let out = train(&x, &e, &config).unwrap();
        let init = ModelParams::init(config.model_config(4), derive_seed(13, STREAM_INIT)).unwrap();
        assert_eq!(out.params, init);
        assert!(out.log.is_empty());
    }

    #[test]
    fn filling_loss_decreases_on_toy() {
        let (x, e) = toy();
        let mut config = small(0.0, 0.0, 50, 0);
        config.dropout = 0.0;
        let out = train(&x, &e, &config).unwrap();
        let first = out.log.first().unwrap().loss;
        let last = out.log.last().unwrap().loss;
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn warmup_loss_decreases() {
        let (x, e) = toy();
        let out = train(&x, &e, &small(0.0, 0.0, 0, 100)).unwrap();
        let early: f64 = out.log[..10].iter().map(|l| l.loss).sum();
        let late: f64 = out.log[90..].iter().map(|l| l.loss).sum();
        assert!(late < early, "{early} -> {late}");
    }

    #[test]
    fn training_is_deterministic() {
        let (x, e) = toy();
        let config = small(0.3, 0.4, 5, 5);
        let a = train(&x, &e, &config).unwrap();
        let b = train(&x, &e, &config).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn no_heads_variant_leaves_heads_untouched() {
        let (x, e) = toy();
        let mut config = small(0.2, 0.2, 3, 0);
        config.use_heads = false;
        let out = train(&x, &e, &config).unwrap();
        let init = ModelParams::init(config.model_config(4), derive_seed(13, STREAM_INIT)).unwrap();
        assert_eq!(out.params.heads, init.heads);
        assert_ne!(out.params.encoder, init.encoder);
    }

    #[test]
    fn singleton_only_hypergraph_cannot_fill() {
        let (x, _) = toy();
        assert!(train(&x, &[vec![0], vec![1]], &small(0.0, 0.0, 1, 0)).is_err());
    }

    #[test]
    fn log_csv_has_header() {
        let mut buf = Vec::new();
        write_log(
            &mut buf,
            &[LogEntry {
                epoch: 0,
                stage: Stage::Warmup,
                loss: 0.5,
            }],
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,stage,loss\n0,warmup,0.5\n");
    }
}
