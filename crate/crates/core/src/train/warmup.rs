use std::rc::Rc;

use rand::seq::index::sample;

use super::augment::augment_hyperedges;
use super::TrainConfig;
use crate::diffnum::{Adam, Matrix, Parameter, Tape, Var};
use crate::encoder::{accumulate, bind, ModelParams, Module, Topology};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// The random choices behind one warm-up step.
#[derive(Debug, Clone)]
pub struct WarmupDraw {
    /// `true` for nodes in V'.
    pub masked: Vec<bool>,
    /// Augmented hyperedges E'.
    pub hyperedges: Vec<Vec<usize>>,
    pub encoder_dropout: Option<Vec<Rc<Matrix>>>,
    pub decoder_dropout: Option<Vec<Rc<Matrix>>>,
}

impl WarmupDraw {
    /// `⌊n·rate⌋` masked nodes chosen uniformly, E' dropped at `warmup_p_e`,
    /// fresh dropout masks.
    pub fn sample(
        params: &ModelParams,
        num_nodes: usize,
        hyperedges: &[Vec<usize>],
        config: &TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        let rate = config.warmup_mask_rate;
        if !(rate > 0.0 && rate < 1.0) {
            return Err(Error::invalid(format!(
                "warm-up mask rate {rate} outside (0, 1)"
            )));
        }
        let count = ((num_nodes as f64) * rate + 1e-9).floor() as usize;
        let mut masked = vec![false; num_nodes];
        for i in sample(&mut rng_from_seed(derive_seed(seed, 0)), num_nodes, count) {
            masked[i] = true;
        }
        let hyperedges = augment_hyperedges(hyperedges, config.warmup_p_e, derive_seed(seed, 1))?;
        let (encoder_dropout, decoder_dropout) = if params.encoder.dropout > 0.0 {
            let mut rng = rng_from_seed(derive_seed(seed, 2));
            (
                Some(params.encoder.sample_dropout(num_nodes, &mut rng)),
                Some(params.warmup.decoder.sample_dropout(num_nodes, &mut rng)),
            )
        } else {
            (None, None)
        };
        Ok(Self {
            masked,
            hyperedges,
            encoder_dropout,
            decoder_dropout,
        })
    }
}

/// Feature-reconstruction loss `L' = mean_{v∈V'} (1 - cos(x̂_v, x_v))`.
///
/// `encoder_vars` and `warmup_vars` are the bound parameters of
/// `params.encoder` and `params.warmup`. An empty V' gives `L' = 0` with
/// zero gradients.
pub fn warmup_loss(
    tape: &mut Tape,
    params: &ModelParams,
    encoder_vars: &[Var],
    warmup_vars: &[Var],
    x: &Matrix,
    draw: &WarmupDraw,
) -> Result<Var> {
    let n = x.rows();
    if draw.masked.len() != n {
        return Err(Error::shape(
            "warmup_loss",
            format!("mask of {} for {n} nodes", draw.masked.len()),
        ));
    }
    let nd = warmup_vars.len() - 2;
    let (input_token, embed_token) = (warmup_vars[nd], warmup_vars[nd + 1]);
    let topology = Topology::new(n, &draw.hyperedges);
    let mask = Rc::new(draw.masked.clone());

    let xv = tape.constant(x.clone());
    let x_masked = tape.masked_assign(xv, mask.clone(), input_token)?;
    let z = params.encoder.forward(
        tape,
        encoder_vars,
        x_masked,
        &topology,
        draw.encoder_dropout.as_deref(),
    )?;
    let z_masked = tape.masked_assign(z, mask, embed_token)?;
    let x_hat = params.warmup.decoder.forward(
        tape,
        &warmup_vars[..nd],
        z_masked,
        &topology,
        draw.decoder_dropout.as_deref(),
    )?;

    let rows: Vec<usize> = (0..n).filter(|&i| draw.masked[i]).collect();
    if rows.is_empty() {
        let s = tape.sum(x_hat);
        return Ok(tape.scale(s, 0.0));
    }
    let rows = Rc::new(rows);
    let predicted = tape.gather_rows(x_hat, rows.clone())?;
    let target = tape.gather_rows(xv, rows)?;
    let cos = tape.cosine_rows(predicted, target)?;
    let mean = tape.mean(cos)?;
    let neg = tape.scale(mean, -1.0);
    Ok(tape.add_scalar(neg, 1.0))
}

/// One warm-up optimizer step on (θ, ψ, m^(I), m^(E)); returns `L'`.
pub fn warmup_epoch(
    x: &Matrix,
    hyperedges: &[Vec<usize>],
    params: &mut ModelParams,
    optimizer: &mut Adam,
    config: &TrainConfig,
    seed: u64,
) -> Result<f64> {
    let draw = WarmupDraw::sample(params, x.rows(), hyperedges, config, seed)?;
    let mut tape = Tape::new();
    let enc = bind(&mut tape, &params.encoder);
    let warm = bind(&mut tape, &params.warmup);
    let loss = warmup_loss(&mut tape, params, &enc, &warm, x, &draw)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("warm-up loss {value}")));
    }
    let grads = tape.backward(loss)?;
    accumulate(&mut params.encoder, &enc, &grads)?;
    accumulate(&mut params.warmup, &warm, &grads)?;
    let mut slots: Vec<&mut Parameter> = params.encoder.parameters_mut();
    slots.extend(params.warmup.parameters_mut());
    optimizer.step(&mut slots)?;
    Ok(value)
}
