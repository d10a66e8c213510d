//! Mean-pooling hypergraph encoder and the node/set projection heads.
//!
//! Each encoder layer averages member node vectors into hyperedge vectors,
//! averages incident hyperedge vectors back into node vectors, then applies
//! an affine map (and a rectifier on every layer but the last). A node with
//! no incident hyperedge aggregates to the zero vector.

use std::fs;
use std::path::Path;
use std::rc::Rc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diffnum::{Gradients, Groups, Matrix, Parameter, Tape, Var};
use crate::error::{Error, Result};
use crate::hypergraph::incidence;
use crate::rng::{rng_from_seed, Rng};

/// Anything that owns parameters in a fixed order.
pub trait Module {
    fn parameters(&self) -> Vec<&Parameter>;
    fn parameters_mut(&mut self) -> Vec<&mut Parameter>;
}

/// Records every parameter of `module` on the tape as a leaf, in
/// [`Module::parameters`] order.
pub fn bind<M: Module + ?Sized>(tape: &mut Tape, module: &M) -> Vec<Var> {
    module
        .parameters()
        .into_iter()
        .map(|p| tape.leaf(p.value.clone()))
        .collect()
}

/// Same as [`bind`] but as constants (no gradient tracking).
pub fn bind_frozen<M: Module + ?Sized>(tape: &mut Tape, module: &M) -> Vec<Var> {
    module
        .parameters()
        .into_iter()
        .map(|p| tape.constant(p.value.clone()))
        .collect()
}

/// Adds the gradients of `vars` (as returned by [`bind`]) into the module's
/// parameters.
pub fn accumulate<M: Module + ?Sized>(module: &mut M, vars: &[Var], grads: &Gradients) -> Result<()> {
    let params = module.parameters_mut();
    if params.len() != vars.len() {
        return Err(Error::invalid(format!(
            "{} bound variables for {} parameters",
            vars.len(),
            params.len()
        )));
    }
    for (p, &v) in params.into_iter().zip(vars) {
        p.accumulate(&grads.get(v))?;
    }
    Ok(())
}

/// Affine map `x·W + b` with `W` stored as `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Linear {
    /// Uniform initialization in `[-1/√fan_in, 1/√fan_in]`.
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut draw = |r, c| Matrix::from_fn(r, c, |_, _| rng.random_range(-bound..=bound));
        let weight = draw(fan_in, fan_out);
        let bias = draw(1, fan_out);
        Self {
            weight: Parameter::new(weight),
            bias: Parameter::new(bias),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.cols()
    }

    fn apply(tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let y = tape.matmul(x, vars[0])?;
        tape.add_bias(y, vars[1])
    }
}

impl Module for Linear {
    fn parameters(&self) -> Vec<&Parameter> {
        vec![&self.weight, &self.bias]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Two affine layers with a rectifier between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub first: Linear,
    pub second: Linear,
}

impl Mlp {
    pub fn new(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut Rng) -> Self {
        Self {
            first: Linear::new(in_dim, hidden, rng),
            second: Linear::new(hidden, out_dim, rng),
        }
    }

    /// Forward pass; `dropout` multiplies the hidden activations.
    pub fn forward(
        tape: &mut Tape,
        vars: &[Var],
        x: Var,
        dropout: Option<Rc<Matrix>>,
    ) -> Result<Var> {
        let h = Linear::apply(tape, &vars[0..2], x)?;
        let mut h = tape.rectify(h);
        if let Some(mask) = dropout {
            h = tape.mul_mask(h, mask)?;
        }
        Linear::apply(tape, &vars[2..4], h)
    }
}

impl Module for Mlp {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut p = self.first.parameters();
        p.extend(self.second.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = self.first.parameters_mut();
        p.extend(self.second.parameters_mut());
        p
    }
}

/// Node/hyperedge membership lists for segment reductions.
#[derive(Debug, Clone)]
pub struct Topology {
    num_nodes: usize,
    pub(crate) edge_members: Groups,
    pub(crate) node_edges: Groups,
}

impl Topology {
    pub fn new(num_nodes: usize, hyperedges: &[Vec<usize>]) -> Self {
        Self {
            num_nodes,
            edge_members: Rc::new(hyperedges.to_vec()),
            node_edges: Rc::new(incidence(num_nodes, hyperedges)),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_hyperedges(&self) -> usize {
        self.edge_members.len()
    }
}

/// Two-layer mean-pooling hypergraph network.
#[derive(Debug, Clone, PartialEq)]
pub struct HypergraphEncoder {
    pub layers: Vec<Linear>,
    pub dropout: f64,
}

impl HypergraphEncoder {
    pub fn new(in_dim: usize, hidden: usize, out_dim: usize, dropout: f64, rng: &mut Rng) -> Self {
        let first = Linear::new(in_dim, hidden, rng);
        let second = Linear::new(hidden, out_dim, rng);
        Self {
            layers: vec![first, second],
            dropout,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Inverted-dropout masks for each layer input (`1/(1-rate)` or 0).
    pub fn sample_dropout(&self, num_nodes: usize, rng: &mut Rng) -> Vec<Rc<Matrix>> {
        let rate = self.dropout;
        let keep = 1.0 - rate;
        self.layers
            .iter()
            .map(|l| {
                Rc::new(Matrix::from_fn(num_nodes, l.in_dim(), |_, _| {
                    if rate > 0.0 && rng.random::<f64>() < rate {
                        0.0
                    } else if rate > 0.0 {
                        1.0 / keep
                    } else {
                        1.0
                    }
                }))
            })
            .collect()
    }

    /// Forward pass on `x` (`num_nodes x in_dim`). `vars` come from
    /// [`bind`]/[`bind_frozen`] on this encoder; `dropout` holds one mask per
    /// layer in training mode.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        x: Var,
        topology: &Topology,
        dropout: Option<&[Rc<Matrix>]>,
    ) -> Result<Var> {
        let (rows, cols) = tape.shape(x);
        if rows != topology.num_nodes() || cols != self.in_dim() {
            return Err(Error::shape(
                "encode",
                format!(
                    "input {rows}x{cols}, expected {}x{}",
                    topology.num_nodes(),
                    self.in_dim()
                ),
            ));
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        for (l, _) in self.layers.iter().enumerate() {
            if let Some(masks) = dropout {
                h = tape.mul_mask(h, masks[l].clone())?;
            }
            let edges = tape.segment_mean(h, topology.edge_members.clone())?;
            let nodes = tape.segment_mean(edges, topology.node_edges.clone())?;
            h = Linear::apply(tape, &vars[2 * l..2 * l + 2], nodes)?;
            if l != last {
                h = tape.rectify(h);
            }
        }
        Ok(h)
    }

    /// Evaluation-mode embeddings.
    pub fn encode(&self, x: &Matrix, topology: &Topology) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = bind_frozen(&mut tape, self);
        let xv = tape.constant(x.clone());
        let z = self.forward(&mut tape, &vars, xv, topology, None)?;
        Ok(tape.value(z).clone())
    }
}

impl Module for HypergraphEncoder {
    fn parameters(&self) -> Vec<&Parameter> {
        self.layers.iter().flat_map(Linear::parameters).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers.iter_mut().flat_map(Linear::parameters_mut).collect()
    }
}

/// Node head φ and set head ρ.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHeads {
    pub node: Mlp,
    pub set: Mlp,
}

impl ProjectionHeads {
    pub fn new(embed_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let node = Mlp::new(embed_dim, out_dim, out_dim, rng);
        let set = Mlp::new(embed_dim, out_dim, out_dim, rng);
        Self { node, set }
    }

    /// `h_i = φ(z_i)` for every row of `z`. `vars` are the head's bound
    /// parameters in [`Module::parameters`] order.
    pub fn project_node(tape: &mut Tape, vars: &[Var], z: Var) -> Result<Var> {
        Mlp::forward(tape, &vars[0..4], z, None)
    }

    /// `q = ρ(Σ_{t∈query} z_t)` for each query subset.
    pub fn project_set(tape: &mut Tape, vars: &[Var], z: Var, queries: Groups) -> Result<Var> {
        let summed = sum_queries(tape, z, queries)?;
        Mlp::forward(tape, &vars[4..8], summed, None)
    }
}

/// Row-wise sums of `z` over each (non-empty) query subset, accumulated in
/// ascending node order so the result does not depend on member order.
pub fn sum_queries(tape: &mut Tape, z: Var, queries: Groups) -> Result<Var> {
    if let Some(j) = queries.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!("query subset {j} is empty")));
    }
    let queries = if queries.iter().all(|q| q.is_sorted()) {
        queries
    } else {
        let mut sorted = queries.as_ref().clone();
        sorted.iter_mut().for_each(|q| q.sort_unstable());
        Rc::new(sorted)
    };
    tape.segment_sum(z, queries)
}

impl Module for ProjectionHeads {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut p = self.node.parameters();
        p.extend(self.set.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = self.node.parameters_mut();
        p.extend(self.set.parameters_mut());
        p
    }
}

/// Feature-reconstruction extras: decoder ψ, input token m^(I) and
/// embedding token m^(E).
#[derive(Debug, Clone, PartialEq)]
pub struct WarmupParams {
    pub decoder: HypergraphEncoder,
    pub input_token: Parameter,
    pub embed_token: Parameter,
}

impl Module for WarmupParams {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut p = self.decoder.parameters();
        p.push(&self.input_token);
        p.push(&self.embed_token);
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = self.decoder.parameters_mut();
        p.push(&mut self.input_token);
        p.push(&mut self.embed_token);
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// Projection head output dimension k.
    pub head_dim: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// Hidden and embedding width 128, dropout 0.5, k = d'.
    pub fn with_input_dim(in_dim: usize) -> Self {
        Self {
            in_dim,
            hidden_dim: 128,
            embed_dim: 128,
            head_dim: 128,
            dropout: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.hidden_dim == 0 || self.embed_dim == 0 || self.head_dim == 0 {
            return Err(Error::invalid(format!("zero dimension in {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// All learnable parameters: encoder θ, heads (φ, ρ) and warm-up extras.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub encoder: HypergraphEncoder,
    pub heads: ProjectionHeads,
    pub warmup: WarmupParams,
}

impl ModelParams {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(seed);
        let ModelConfig {
            in_dim,
            hidden_dim,
            embed_dim,
            head_dim,
            dropout,
        } = config;
        let encoder = HypergraphEncoder::new(in_dim, hidden_dim, embed_dim, dropout, &mut rng);
        let heads = ProjectionHeads::new(embed_dim, head_dim, &mut rng);
        let decoder = HypergraphEncoder::new(embed_dim, hidden_dim, in_dim, dropout, &mut rng);
        let warmup = WarmupParams {
            decoder,
            input_token: Parameter::new(Matrix::zeros(1, in_dim)),
            embed_token: Parameter::new(Matrix::zeros(1, embed_dim)),
        };
        Ok(Self {
            config,
            encoder,
            heads,
            warmup,
        })
    }

    fn named(&self) -> Vec<(String, &Parameter)> {
        let mut out = Vec::new();
        for (l, layer) in self.encoder.layers.iter().enumerate() {
            out.push((format!("encoder.{l}.weight"), &layer.weight));
            out.push((format!("encoder.{l}.bias"), &layer.bias));
        }
        for (head, mlp) in [("node_head", &self.heads.node), ("set_head", &self.heads.set)] {
            for (l, layer) in [&mlp.first, &mlp.second].into_iter().enumerate() {
                out.push((format!("{head}.{l}.weight"), &layer.weight));
                out.push((format!("{head}.{l}.bias"), &layer.bias));
            }
        }
        for (l, layer) in self.warmup.decoder.layers.iter().enumerate() {
            out.push((format!("decoder.{l}.weight"), &layer.weight));
            out.push((format!("decoder.{l}.bias"), &layer.bias));
        }
        out.push(("input_token".into(), &self.warmup.input_token));
        out.push(("embed_token".into(), &self.warmup.embed_token));
        out
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: self.config,
            tensors: self
                .named()
                .into_iter()
                .map(|(name, p)| NamedTensor {
                    name,
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                    data: p.value.as_slice().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let mut params = Self::init(ck.config, 0)?;
        let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
        if names.len() != ck.tensors.len() {
            return Err(Error::invalid(format!(
                "checkpoint has {} tensors, expected {}",
                ck.tensors.len(),
                names.len()
            )));
        }
        let mut slots = params.parameters_mut();
        for ((name, slot), t) in names.iter().zip(slots.iter_mut()).zip(&ck.tensors) {
            if &t.name != name || (t.rows, t.cols) != slot.shape() {
                return Err(Error::invalid(format!(
                    "checkpoint tensor {} {}x{} does not match {name} {:?}",
                    t.name,
                    t.rows,
                    t.cols,
                    slot.shape()
                )));
            }
            slot.value = Matrix::from_vec(t.rows, t.cols, t.data.clone())?;
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_checkpoint(&serde_json::from_str(&text)?)
    }
}

impl Module for ModelParams {
    fn parameters(&self) -> Vec<&Parameter> {
        self.named().into_iter().map(|(_, p)| p).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = self.encoder.parameters_mut();
        p.extend(self.heads.parameters_mut());
        p.extend(self.warmup.parameters_mut());
        p
    }
}

pub const CHECKPOINT_FORMAT: &str = "hypeboy-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk JSON checkpoint: named row-major tensors plus the model shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ModelConfig {
        ModelConfig {
            in_dim: 3,
            hidden_dim: 4,
            embed_dim: 5,
            head_dim: 5,
            dropout: 0.5,
        }
    }

    #[test]
    fn identical_features_in_one_hyperedge_give_identical_rows() {
        let params = ModelParams::init(small_config(), 1).unwrap();
        let x = Matrix::from_fn(4, 3, |_, j| j as f64 - 0.3);
        let topo = Topology::new(4, &[vec![0, 1, 2, 3]]);
        let z = params.encoder.encode(&x, &topo).unwrap();
        for i in 1..4 {
            assert_eq!(z.row(i), z.row(0));
        }
    }

    #[test]
    fn no_hyperedges_yield_final_bias() {
        let params = ModelParams::init(small_config(), 2).unwrap();
        let x = Matrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64);
        let z = params.encoder.encode(&x, &Topology::new(3, &[])).unwrap();
        for i in 0..3 {
            assert_eq!(z.row(i), params.encoder.layers[1].bias.value.row(0));
        }
    }

    #[test]
    fn isolated_node_gets_zero_aggregate() {
        let params = ModelParams::init(small_config(), 3).unwrap();
        let x = Matrix::from_fn(3, 3, |i, j| (i + j) as f64);
        let z1 = params.encoder.encode(&x, &Topology::new(3, &[vec![0, 1]])).unwrap();
        let z2 = params.encoder.encode(&x, &Topology::new(3, &[])).unwrap();
        assert_eq!(z1.row(2), z2.row(0));
    }

    #[test]
    fn encoder_rejects_wrong_input_dim() {
        let params = ModelParams::init(small_config(), 1).unwrap();
        let x = Matrix::zeros(3, 2);
        assert!(params.encoder.encode(&x, &Topology::new(3, &[])).is_err());
    }

    #[test]
    fn singleton_query_projects_single_row() {
        let params = ModelParams::init(small_config(), 4).unwrap();
        let z = Matrix::from_fn(3, 5, |i, j| (i as f64) * 0.3 - (j as f64) * 0.1);
        let mut tape = Tape::new();
        let vars = bind_frozen(&mut tape, &params.heads);
        let zv = tape.constant(z.clone());
        let q = ProjectionHeads::project_set(&mut tape, &vars, zv, Rc::new(vec![vec![2]])).unwrap();
        let z2 = tape.constant(z.select_rows(&[2]));
        let direct = Mlp::forward(&mut tape, &vars[4..8], z2, None).unwrap();
        assert_eq!(tape.value(q), tape.value(direct));
    }

    #[test]
    fn empty_query_rejected() {
        let mut tape = Tape::new();
        let z = tape.constant(Matrix::zeros(2, 2));
        assert!(sum_queries(&mut tape, z, Rc::new(vec![vec![0], vec![]])).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let params = ModelParams::init(small_config(), 9).unwrap();
        let ck = params.to_checkpoint();
        let text = serde_json::to_string(&ck).unwrap();
        let back = ModelParams::from_checkpoint(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn checkpoint_shape_mismatch_rejected() {
        let params = ModelParams::init(small_config(), 9).unwrap();
        let mut ck = params.to_checkpoint();
        ck.tensors[0].rows += 1;
        assert!(ModelParams::from_checkpoint(&ck).is_err());
    }

    #[test]
    fn dropout_masks_use_inverted_scaling() {
        let enc = HypergraphEncoder::new(3, 4, 2, 0.5, &mut rng_from_seed(0));
        let masks = enc.sample_dropout(50, &mut rng_from_seed(1));
        assert_eq!(masks.len(), 2);
        assert!(masks[0].as_slice().iter().all(|&v| v == 0.0 || v == 2.0));
        let no_drop = HypergraphEncoder::new(3, 4, 2, 0.0, &mut rng_from_seed(0));
        let masks = no_drop.sample_dropout(5, &mut rng_from_seed(1));
        assert!(masks[1].as_slice().iter().all(|&v| v == 1.0));
    }
}
