use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use hypeboy::diagnostics::{alignment, singular_spectrum, uniformity};
use hypeboy::diffnum::Matrix;
use hypeboy::encoder::{ModelConfig, ModelParams, Topology};
use hypeboy::eval::{
    edge_samples, fine_tune, hyperedge_prediction, linear_probe, summarize, write_results,
    EdgeConfig, EvalConfig, ResultRow,
};
use hypeboy::hypergraph::{
    generate_synthetic, load_dataset, node_swap, read_embeddings, save_dataset,
    split_hyperedges, split_nodes, write_embeddings, Dataset, Ratios, SyntheticSpec,
};
use hypeboy::rng::derive_seed;
use hypeboy::theory::theory_grid;
use hypeboy::train::{train, write_log, TrainConfig};

use crate::config::{
    optional, parse_int_range, parse_ratios, parse_real_range, parse_sizes, parse_split, required,
    value, Key, Resolved,
};

pub struct Command {
    pub name: &'static str,
    pub about: &'static str,
    pub keys: &'static [Key],
    pub run: fn(&Resolved, &Path) -> Result<Vec<String>>,
}

const SEED: Key = required("seed", "global random seed");
const OUT: Key = value("out", "hypeboy-out", "output directory");
const INPUT: Key = required("input", "hypergraph file");

const EPOCHS: Key = value("epochs", "200", "downstream training epochs");
const LR: Key = value("lr", "0.001", "learning rate");
const WEIGHT_DECAY: Key = value("weight-decay", "0.000001", "decoupled weight decay");
const EVAL_EVERY: Key = value("eval-every", "10", "validation interval in epochs");
const RUNS: Key = value("runs", "1", "number of repetitions");

pub const COMMANDS: &[Command] = &[
    Command {
        name: "generate",
        about: "Generate a two-class synthetic hypergraph with Gaussian features",
        keys: &[
            required("N", "nodes per class"),
            required("d", "feature dimension"),
            required("P", "hyperedge affinity in [0, 1]"),
            required("sizes", "hyperedge sizes, e.g. 4x100 or 3x50,4x50"),
            SEED,
            OUT,
        ],
        run: generate,
    },
    Command {
        name: "swap",
        about: "Perturb hyperedges by repeated node swapping",
        keys: &[
            INPUT,
            required("iterations", "number of swap rounds"),
            SEED,
            OUT,
        ],
        run: swap,
    },
    Command {
        name: "train",
        about: "Pretrain an encoder by feature-reconstruction warm-up and hyperedge filling",
        keys: &[
            INPUT,
            required("p-v", "feature masking probability"),
            required("p-e", "hyperedge dropping probability"),
            required("epochs", "hyperedge-filling epochs"),
            value("warmup-epochs", "300", "feature-reconstruction epochs"),
            value("warmup-mask-rate", "0.5", "fraction of nodes masked during warm-up"),
            value("warmup-p-e", "0.2", "hyperedge dropping probability during warm-up"),
            LR,
            WEIGHT_DECAY,
            value("hidden", "128", "encoder hidden width"),
            value("embed-dim", "128", "embedding width"),
            value("head-dim", "128", "projection head width"),
            value("dropout", "0.5", "encoder dropout"),
            value("temperature", "1", "softmax temperature of the filling loss"),
            value("fresh-augmentation", "true", "redraw augmentation every epoch"),
            value("heads", "true", "use projection heads"),
            optional("edge-split", "train only on the training part of this hyperedge split"),
            optional("split-seed", "seed of the hyperedge split"),
            SEED,
            OUT,
        ],
        run: train_cmd,
    },
    Command {
        name: "embed",
        about: "Encode nodes with a trained checkpoint",
        keys: &[
            INPUT,
            required("checkpoint", "checkpoint JSON"),
            optional("edge-split", "encode with the training part of this hyperedge split"),
            optional("split-seed", "seed of the hyperedge split"),
            OUT,
        ],
        run: embed,
    },
    Command {
        name: "eval-node",
        about: "Node classification by linear probe, fine-tuning or raw features",
        keys: &[
            INPUT,
            value("protocol", "linear", "linear, finetune or raw"),
            optional("embeddings", "embedding CSV for the linear protocol"),
            optional("checkpoint", "pretrained checkpoint for fine-tuning; random init if absent"),
            value("split", "0.1,0.1,0.8", "train,valid,test fractions or per-class:TRAIN,VALID"),
            value("hidden", "128", "encoder hidden width for random init"),
            value("embed-dim", "128", "embedding width for random init"),
            value("dropout", "0.5", "encoder dropout for random init"),
            RUNS,
            EPOCHS,
            LR,
            WEIGHT_DECAY,
            EVAL_EVERY,
            SEED,
            OUT,
        ],
        run: eval_node,
    },
    Command {
        name: "eval-edge",
        about: "Hyperedge prediction against size-matched negatives",
        keys: &[
            INPUT,
            required("embeddings", "embedding CSV"),
            value("edge-split", "0.6,0.2,0.2", "train,valid,test hyperedge fractions"),
            required("split-seed", "seed of the hyperedge split"),
            value("hidden", "128", "classifier hidden width"),
            value("dropout", "0.5", "classifier dropout"),
            RUNS,
            EPOCHS,
            LR,
            WEIGHT_DECAY,
            EVAL_EVERY,
            SEED,
            OUT,
        ],
        run: eval_edge,
    },
    Command {
        name: "theory-grid",
        about: "Closed-form versus Monte Carlo condition probability over an (S, d, P) grid",
        keys: &[
            value("S", "2..8", "hyperedge sizes"),
            value("d", "2..8", "feature dimensions"),
            value("P", "0:0.1:1", "affinities, start:step:end"),
            value("N", "1000", "nodes per class"),
            value("trials", "100000", "accepted samples per cell"),
            SEED,
            OUT,
        ],
        run: grid,
    },
    Command {
        name: "diagnose",
        about: "Covariance spectrum, alignment and uniformity of embeddings",
        keys: &[
            required("embeddings", "embedding CSV"),
            optional("input", "hypergraph file with labels, for alignment"),
            OUT,
        ],
        run: diagnose,
    },
];

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes `manifest.json` after all artifacts of the run exist.
pub fn write_manifest(out: &Path, command: &str, config: &Resolved, outputs: &[String]) -> Result<()> {
    write_json(
        &out.join("manifest.json"),
        &json!({
            "tool": "hypeboy",
            "version": env!("CARGO_PKG_VERSION"),
            "manifest_version": 1,
            "command": command,
            "config": config.values(),
            "outputs": outputs,
        }),
    )
}

fn load(c: &Resolved) -> Result<Dataset> {
    let path = c.str("input")?;
    load_dataset(path).with_context(|| format!("cannot load hypergraph {path}"))
}

fn features(ds: &Dataset) -> Result<&Matrix> {
    ds.features
        .as_ref()
        .map(|f| f.matrix())
        .ok_or_else(|| anyhow!("the hypergraph file has no node features"))
}

fn labels(ds: &Dataset) -> Result<&hypeboy::hypergraph::LabelVector> {
    ds.labels
        .as_ref()
        .ok_or_else(|| anyhow!("the hypergraph file has no labels"))
}

fn load_embeddings(c: &Resolved, nodes: Option<usize>) -> Result<Matrix> {
    let path = c.str("embeddings")?;
    let file = File::open(path).with_context(|| format!("cannot read embeddings {path}"))?;
    let z = read_embeddings(file).with_context(|| format!("in embeddings {path}"))?;
    if let Some(n) = nodes {
        if z.rows() != n {
            bail!("embeddings have {} rows, the hypergraph has {n} nodes", z.rows());
        }
    }
    Ok(z)
}

/// Hyperedges visible to the encoder: all, or the training part of the
/// split named by `edge-split` and `split-seed`.
fn observed_hyperedges(c: &Resolved, ds: &Dataset) -> Result<Vec<Vec<usize>>> {
    let edges = ds.hypergraph.hyperedges();
    let Some(ratios) = c.opt_with("edge-split", parse_ratios)? else {
        return Ok(edges.to_vec());
    };
    let seed: u64 = c
        .opt("split-seed")?
        .ok_or_else(|| anyhow!("missing required key `split-seed` (needed with `edge-split`)"))?;
    let split = split_hyperedges(edges.len(), &ratios, seed)?;
    Ok(split.train.iter().map(|&j| edges[j].clone()).collect())
}

fn generate(c: &Resolved, out: &Path) -> Result<Vec<String>> {
    let spec = SyntheticSpec {
        nodes_per_class: c.get("N")?,
        dim: c.get("d")?,
        affinity: c.get("P")?,
        edge_sizes: c.with("sizes", parse_sizes)?,
        seed: c.get("seed")?,
    };
    let (hypergraph, x, y) = generate_synthetic(&spec)?;
    let ds = Dataset {
        hypergraph,
        features: Some(x),
        labels: Some(y),
    };
    save_dataset(out.join("hypergraph.txt"), &ds)?;
    Ok(vec!["hypergraph.txt".into()])
}

fn swap(c: &Resolved, out: &Path) -> Result<Vec<String>> {
    let ds = load(c)?;
    let edges = node_swap(ds.hypergraph.hyperedges(), c.get("iterations")?, c.get("seed")?)?;
    let ds = Dataset {
        hypergraph: ds.hypergraph.with_hyperedges(edges)?,
        ..ds
    };
    save_dataset(out.join("hypergraph.txt"), &ds)?;
    Ok(vec!["hypergraph.txt".into()])
}

fn train_cmd(c: &Resolved, out: &Path) -> Result<Vec<String>> {
    let ds = load(c)?;
    let x = features(&ds)?;
    let config = TrainConfig {
        p_v: c.get("p-v")?,
        p_e: c.get("p-e")?,
        filling_epochs: c.get("epochs")?,
        warmup_epochs: c.get("warmup-epochs")?,
        warmup_mask_rate: c.get("warmup-mask-rate")?,
        warmup_p_e: c.get("warmup-p-e")?,
        lr: c.get("lr")?,
        weight_decay: c.get("weight-decay")?,
        seed: c.get("seed")?,
        hidden_dim: c.get("hidden")?,
        embed_dim: c.get("embed-dim")?,
        head_dim: c.get("head-dim")?,
        dropout: c.get("dropout")?,
        temperature: c.get("temperature")?,
        fresh_augmentation: c.get("fresh-augmentation")?,
        use_heads: c.get("heads")?,
    };
    let edges = observed_hyperedges(c, &ds)?;
    let outcome = train(x, &edges, &config)?;
    outcome.params.save(out.join("checkpoint.json"))?;
    write_log(create(&out.join("train_log.csv"))?, &outcome.log)?;
    Ok(vec!["checkpoint.json".into(), "train_log.csv".into()])
}

fn embed(c: &Resolved, out: &Path) -> Result<Vec<String>> {
    let ds = load(c)?;
    let x = features(&ds)?;
    let params = ModelParams::load(c.str("checkpoint")?)
        .with_context(|| format!("cannot load checkpoint {}", c.str("checkpoint").unwrap_or("")))?;
    let edges = observed_hyperedges(c, &ds)?;
    let z = params.encoder.encode(x, &Topology::new(x.rows(), &edges))?;
    write_embeddings(create(&out.join("embeddings.csv"))?, &z)?;
    Ok(vec!["embeddings.csv".into()])
}

fn eval_config(c: &Resolved, seed: u64) -> Result<EvalConfig> {
    Ok(EvalConfig {
        epochs: c.get("epochs")?,
        lr: c.get("lr")?,
        weight_decay: c.get("weight-decay")?,
        eval_every: c.get("eval-every")?,
        seed,
    })
}

fn write_results_and_summary(out: &Path, rows: &[ResultRow]) -> Result<Vec<String>> {
    write_results(create(&out.join("results.csv"))?, rows)?;
    write_json(&out.join("summary.json"), &serde_json::to_value(summarize(rows))?)?;
    Ok(vec!["results.csv".into(), "summary.json".into()])
}

fn result_rows(method: &str, task: &str, seed: u64, split_id: usize, pairs: &[(&str, f64)]) -> Vec<ResultRow> {
    pairs
        .iter()
        .map(|&(metric, value)| ResultRow {
            method: method.into(),
            task: task.into(),
            seed,
            split_id,
            metric: metric.into(),
            value,
        })
        .collect()
}

fn eval_node(c: &Resolved, out: &Path) -> Result<Vec<String>> {
    let ds = load(c)?;
    let y = labels(&ds)?;
    let n = ds.hypergraph.num_nodes();
    let split_spec = c.with("split", parse_split)?;
    let runs: usize = c.get("runs")?;
    let seed: u64 = c.get("seed")?;
    let protocol = c.str("protocol")?;

    enum Input {
        Frozen(Matrix),
        FineTune(Box<ModelParams>),
    }
    let (method, input) = match protocol {
        "linear" => {
            if c.raw("embeddings").is_none() {
                bail!("missing required key `embeddings` (needed by protocol linear)");
            }
            ("linear", Input::Frozen(load_embeddings(c, Some(n))?))
        }
        "raw" => ("raw", Input::Frozen(features(&ds)?.clone())),
        "finetune" => {
            let x = features(&ds)?;
            match c.raw("checkpoint") {
                Some(path) => (
                    "finetune",
                    Input::FineTune(Box::new(
                        ModelParams::load(path)
                            .with_context(|| format!("cannot load checkpoint {path}"))?,
                    )),
                ),
                None => {
                    let config = ModelConfig {
                        hidden_dim: c.get("hidden")?,
                        embed_dim: c.get("embed-dim")?,
                        dropout: c.get("dropout")?,
                        ..ModelConfig::with_input_dim(x.cols())
                    };
                    (
                        "finetune-random",
                        Input::FineTune(Box::new(ModelParams::init(config, derive_seed(seed, u64::MAX))?)),
                    )
                }
            }
        }
        other => bail!("invalid value \"{other}\" for key `protocol`: expected linear, finetune or raw"),
    };

    let mut rows = Vec::new();
    for r in 0..runs {
        let run_seed = derive_seed(seed, r as u64);
        let split = split_nodes(y, &split_spec, derive_seed(run_seed, 0))?;
        let config = eval_config(c, derive_seed(run_seed, 1))?;
        let sel = match &input {
            Input::Frozen(z) => linear_probe(z, y, &split, &config)?,
            Input::FineTune(params) => fine_tune(
                features(&ds)?,
                ds.hypergraph.hyperedges(),
                &params.encoder,
                y,
                &split,
                &config,
            )?,
        };
        rows.extend(result_rows(
            method,
            "node",
            run_seed,
            r,
            &[
                ("accuracy", sel.test),
                ("valid_accuracy", sel.valid),
                ("best_epoch", sel.best_epoch as f64),
            ],
        ));
    }
    write_results_and_summary(out, &rows)
}

fn eval_edge(c: &Resolved, out: &Path) -> Result<Vec<String>> {
    let ds = load(c)?;
    let n = ds.hypergraph.num_nodes();
    let z = load_embeddings(c, Some(n))?;
    let ratios: Ratios = c.with("edge-split", parse_ratios)?;
    let edges = ds.hypergraph.hyperedges();
    let split = split_hyperedges(edges.len(), &ratios, c.get("split-seed")?)?;
    let runs: usize = c.get("runs")?;
    let seed: u64 = c.get("seed")?;
    let mut rows = Vec::new();
    for r in 0..runs {
        let run_seed = derive_seed(seed, r as u64);
        let samples = edge_samples(edges, &split, n, derive_seed(run_seed, 0))?;
        let config = EdgeConfig {
            train: eval_config(c, derive_seed(run_seed, 1))?,
            hidden_dim: c.get("hidden")?,
            dropout: c.get("dropout")?,
        };
        let sel = hyperedge_prediction(&z, &samples, &config)?;
        rows.extend(result_rows(
            "linear",
            "edge",
            run_seed,
            r,
            &[
                ("auroc", sel.test),
                ("valid_auroc", sel.valid),
                ("best_epoch", sel.best_epoch as f64),
            ],
        ));
    }
    write_results_and_summary(out, &rows)
}

fn grid(c: &Resolved, out: &Path) -> Result<Vec<String>> {
    let rows = theory_grid(
        &c.with("S", parse_int_range)?,
        &c.with("d", parse_int_range)?,
        &c.with("P", parse_real_range)?,
        c.get("N")?,
        c.get("trials")?,
        c.get("seed")?,
    )?;
    let mut w = csv_writer(&out.join("grid.csv"))?;
    w.write_record(["S", "d", "P", "closed_form", "mc_estimate", "mc_stderr"])?;
    for r in &rows {
        w.write_record([
            r.size.to_string(),
            r.dim.to_string(),
            r.affinity.to_string(),
            r.closed_form.to_string(),
            r.mc_estimate.to_string(),
            r.mc_stderr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(vec!["grid.csv".into()])
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn diagnose(c: &Resolved, out: &Path) -> Result<Vec<String>> {
    let ds = c.raw("input").map(|_| load(c)).transpose()?;
    let z = load_embeddings(c, ds.as_ref().map(|d| d.hypergraph.num_nodes()))?;
    let spectrum = singular_spectrum(&z)?;
    let mut w = csv_writer(&out.join("spectrum.csv"))?;
    w.write_record(["index", "sigma", "relative"])?;
    for (k, (s, r)) in spectrum.singular_values.iter().zip(&spectrum.relative).enumerate() {
        w.write_record([k.to_string(), s.to_string(), r.to_string()])?;
    }
    w.flush()?;

    let align = match ds.as_ref().and_then(|d| d.labels.as_ref()) {
        Some(y) => Some(alignment(&z, y)?),
        None => None,
    };
    let uni = uniformity(&z)?;
    write_json(
        &out.join("diagnostics.json"),
        &json!({
            "alignment": align.map(|a| a.value),
            "alignment_excluded_rows": align.map(|a| a.excluded_rows),
            "uniformity": uni.value,
            "uniformity_excluded_rows": uni.excluded_rows,
            "effective_rank": spectrum.effective_rank,
        }),
    )?;
    Ok(vec!["spectrum.csv".into(), "diagnostics.json".into()])
}

pub fn out_dir(c: &Resolved) -> Result<PathBuf> {
    let out = PathBuf::from(c.str("out")?);
    fs::create_dir_all(&out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    Ok(out)
}
