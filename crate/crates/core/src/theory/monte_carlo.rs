use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{closed_form_condition_prob, gnb_classify, update_representation};
use crate::diffnum::Matrix;
use crate::error::{Error, Result};
use crate::hypergraph::{draw_class1_count, CLASS0_MEAN, CLASS1_MEAN};
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Parameters of a Monte Carlo experiment on the two-class model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryModel {
    /// Nodes per class.
    pub nodes_per_class: usize,
    pub dim: usize,
    pub affinity: f64,
    /// Hyperedge size S.
    pub size: usize,
    /// Gradient step size γ.
    pub gamma: f64,
    /// Accepted (conditioned) samples to collect.
    pub trials: usize,
    pub seed: u64,
}

impl TheoryModel {
    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::invalid(format!("hyperedge size {} must be >= 2", self.size)));
        }
        if self.dim == 0 || self.trials == 0 {
            return Err(Error::invalid("dimension and trials must be >= 1"));
        }
        if 2 * self.nodes_per_class < self.size {
            return Err(Error::invalid(format!(
                "{} nodes cannot hold a hyperedge of size {}",
                2 * self.nodes_per_class,
                self.size
            )));
        }
        if !(0.0..=1.0).contains(&self.affinity) {
            return Err(Error::invalid(format!("affinity {} outside [0, 1]", self.affinity)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("step size {} must be >= 0", self.gamma)));
        }
        Ok(())
    }
}

const CHUNK: usize = 8192;

/// Runs `trials` samples in fixed-size chunks with per-chunk seeds, so the
/// result does not depend on the thread count.
fn chunked<T: Send>(trials: usize, seed: u64, run: impl Fn(&mut Rng, usize) -> T + Sync) -> Vec<T> {
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(trials - c * CHUNK);
            run(&mut rng_from_seed(derive_seed(seed, c as u64)), len)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    /// Binomial standard error `√(p(1-p)/n)`.
    pub stderr: f64,
    pub trials: usize,
    /// Draws including rejected ones.
    pub attempts: usize,
}

/// Estimates `P(1ᵀ Σ_{k∈q} x_k > 0)` for a class-1 missing node. Each draw
/// samples a hyperedge, picks a uniformly random member as the missing
/// node and is rejected unless that member is in class 1.
pub fn mc_condition_prob(model: &TheoryModel) -> Result<McEstimate> {
    model.validate()?;
    let m = *model;
    let parts = chunked(m.trials, m.seed, |rng, len| {
        let (mut hits, mut attempts) = (0usize, 0usize);
        for _ in 0..len {
            loop {
                attempts += 1;
                let s = draw_class1_count(rng, m.size, m.affinity, m.nodes_per_class);
                if rng.random_range(0..m.size) >= s {
                    continue;
                }
                let mut total = 0.0;
                for k in 0..m.size - 1 {
                    let mean = if k < s - 1 { CLASS1_MEAN } else { CLASS0_MEAN };
                    for _ in 0..m.dim {
                        let z: f64 = StandardNormal.sample(rng);
                        total += mean + z;
                    }
                }
                if total > 0.0 {
                    hits += 1;
                }
                break;
            }
        }
        (hits, attempts)
    });
    let hits: usize = parts.iter().map(|p| p.0).sum();
    let attempts: usize = parts.iter().map(|p| p.1).sum();
    let n = m.trials as f64;
    let p = hits as f64 / n;
    Ok(McEstimate {
        estimate: p,
        stderr: (p * (1.0 - p) / n).sqrt(),
        trials: m.trials,
        attempts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectivenessReport {
    pub acc_x: f64,
    pub acc_z: f64,
    pub trials: usize,
    /// Samples where only `z` is classified correctly, and where only `x` is.
    pub z_only: usize,
    pub x_only: usize,
    /// Percentile bootstrap 95% interval for `acc_z - acc_x`.
    pub gain_ci: (f64, f64),
}

impl EffectivenessReport {
    pub fn gain(&self) -> f64 {
        self.acc_z - self.acc_x
    }
}

const BOOTSTRAP_RESAMPLES: usize = 2000;

/// Accuracy of the Gaussian classifier on raw features `x_i` versus the
/// one-step updated `z_i`. Trials are split evenly between a class-1
/// missing node (condition `1ᵀs > 0`) and its class-0 mirror (`1ᵀs < 0`);
/// `enforce_condition = false` keeps every sample.
pub fn mc_effectiveness_gain(
    model: &TheoryModel,
    universe: usize,
    enforce_condition: bool,
) -> Result<EffectivenessReport> {
    model.validate()?;
    if universe < model.size || !universe.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "node universe {universe} must be even and >= hyperedge size {}",
            model.size
        )));
    }
    let m = *model;
    let half = m.trials / 2;
    let mut outcomes = Vec::with_capacity(2);
    for (target, count) in [(1usize, m.trials - half), (0usize, half)] {
        let seed = derive_seed(m.seed, target as u64);
        let parts = chunked(count, seed, |rng, len| -> Result<[usize; 4]> {
            let mut cells = [0usize; 4];
            for _ in 0..len {
                let (x_ok, z_ok) =
                    effectiveness_sample(rng, &m, universe, target, enforce_condition)?;
                cells[usize::from(x_ok) * 2 + usize::from(z_ok)] += 1;
            }
            Ok(cells)
        });
        for p in parts {
            outcomes.push(p?);
        }
    }
    let mut cells = [0usize; 4];
    for o in &outcomes {
        for k in 0..4 {
            cells[k] += o[k];
        }
    }
    let n = m.trials as f64;
    let acc_x = (cells[2] + cells[3]) as f64 / n;
    let acc_z = (cells[1] + cells[3]) as f64 / n;
    let (z_only, x_only) = (cells[1], cells[2]);
    let gain_ci = bootstrap_gain(m.trials, z_only, x_only, derive_seed(m.seed, 2))?;
    Ok(EffectivenessReport {
        acc_x,
        acc_z,
        trials: m.trials,
        z_only,
        x_only,
        gain_ci,
    })
}

fn effectiveness_sample(
    rng: &mut Rng,
    m: &TheoryModel,
    universe: usize,
    target: usize,
    enforce_condition: bool,
) -> Result<(bool, bool)> {
    let pool = universe / 2;
    loop {
        // nodes 0..pool are class 1, pool..universe class 0
        let x = Matrix::from_fn(universe, m.dim, |i, _| {
            let mean = if i < pool { CLASS1_MEAN } else { CLASS0_MEAN };
            let z: f64 = StandardNormal.sample(rng);
            mean + z
        });
        let s = draw_class1_count(rng, m.size, m.affinity, pool);
        let mut members: Vec<usize> = sample(rng, pool, s).into_vec();
        members.extend(sample(rng, pool, m.size - s).into_iter().map(|i| pool + i));
        let pick = rng.random_range(0..m.size);
        let node = members[pick];
        if usize::from(node < pool) != target {
            continue;
        }
        members.swap_remove(pick);
        if enforce_condition {
            let t: f64 = members.iter().map(|&k| x.row(k).iter().sum::<f64>()).sum();
            let holds = if target == 1 { t > 0.0 } else { t < 0.0 };
            if !holds {
                continue;
            }
        }
        let z = update_representation(&x, node, &members, m.gamma)?;
        return Ok((
            gnb_classify(x.row(node)) == target,
            gnb_classify(&z) == target,
        ));
    }
}

/// Resamples the paired per-sample differences (+1, 0, -1) with
/// multinomial counts and returns the 2.5% and 97.5% quantiles of the mean.
fn bootstrap_gain(n: usize, plus: usize, minus: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = rng_from_seed(seed);
    let (pp, pm) = (plus as f64 / n as f64, minus as f64 / n as f64);
    let mut means = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let p = Binomial::new(n as u64, pp)
            .map_err(|e| Error::invalid(e.to_string()))?
            .sample(&mut rng);
        let rest = n as u64 - p;
        let cond = if pp < 1.0 { (pm / (1.0 - pp)).min(1.0) } else { 0.0 };
        let q = Binomial::new(rest, cond)
            .map_err(|e| Error::invalid(e.to_string()))?
            .sample(&mut rng);
        means.push((p as f64 - q as f64) / n as f64);
    }
    means.sort_by(f64::total_cmp);
    let at = |f: f64| means[((f * (BOOTSTRAP_RESAMPLES - 1) as f64).round()) as usize];
    Ok((at(0.025), at(0.975)))
}

/// One `(S, d, P)` cell of the closed-form versus Monte Carlo grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    #[serde(rename = "S")]
    pub size: usize,
    #[serde(rename = "d")]
    pub dim: usize,
    #[serde(rename = "P")]
    pub affinity: f64,
    pub closed_form: f64,
    pub mc_estimate: f64,
    pub mc_stderr: f64,
}

/// Evaluates every `(S, d, P)` combination, in that nesting order; cell `k`
/// uses seed `derive_seed(seed, k)`.
pub fn theory_grid(
    sizes: &[usize],
    dims: &[usize],
    affinities: &[f64],
    nodes_per_class: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<GridRow>> {
    let cells: Vec<(usize, usize, f64)> = sizes
        .iter()
        .flat_map(|&s| {
            dims.iter()
                .flat_map(move |&d| affinities.iter().map(move |&p| (s, d, p)))
        })
        .collect();
    cells
        .par_iter()
        .enumerate()
        .map(|(k, &(size, dim, affinity))| {
            let model = TheoryModel {
                nodes_per_class,
                dim,
                affinity,
                size,
                gamma: 0.0,
                trials,
                seed: derive_seed(seed, k as u64),
            };
            let mc = mc_condition_prob(&model)?;
            Ok(GridRow {
                size,
                dim,
                affinity,
                closed_form: closed_form_condition_prob(size, dim, affinity)?,
                mc_estimate: mc.estimate,
                mc_stderr: mc.stderr,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(size: usize, dim: usize, affinity: f64, trials: usize) -> TheoryModel {
        TheoryModel {
            nodes_per_class: 100,
            dim,
            affinity,
            size,
            gamma: 1.0,
            trials,
            seed: 17,
        }
    }

    #[test]
    fn condition_prob_matches_closed_form_at_full_affinity() {
        let est = mc_condition_prob(&model(3, 8, 1.0, 50_000)).unwrap();
        let exact = closed_form_condition_prob(3, 8, 1.0).unwrap();
        assert!((est.estimate - exact).abs() <= 3.0 * est.stderr, "{est:?} vs {exact}");
        assert!((0.0..=1.0).contains(&est.estimate));
    }

    #[test]
    fn estimate_independent_of_thread_count() {
        let m = model(4, 3, 0.7, 20_000);
        let a = mc_condition_prob(&m).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| mc_condition_prob(&m).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn stderr_halves_when_trials_quadruple() {
        let a = mc_condition_prob(&model(4, 2, 0.6, 10_000)).unwrap();
        let b = mc_condition_prob(&model(4, 2, 0.6, 40_000)).unwrap();
        let ratio = b.stderr / a.stderr;
        assert!((ratio - 0.5).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn zero_step_gives_equal_accuracies() {
        let mut m = model(4, 4, 0.9, 4000);
        m.gamma = 0.0;
        let r = mc_effectiveness_gain(&m, 20, true).unwrap();
        assert_eq!(r.acc_x, r.acc_z);
        assert_eq!((r.z_only, r.x_only), (0, 0));
    }

    #[test]
    fn unconditioned_raw_accuracy_matches_gaussian_rate() {
        let m = model(4, 4, 0.9, 40_000);
        let r = mc_effectiveness_gain(&m, 20, false).unwrap();
        let p = super::super::normal_cdf(1.0);
        let sigma = (p * (1.0 - p) / 40_000.0).sqrt();
        assert!((r.acc_x - p).abs() <= 3.0 * sigma, "{} vs {p}", r.acc_x);
    }

    #[test]
    fn conditioned_update_never_hurts() {
        let r = mc_effectiveness_gain(&model(4, 4, 0.9, 10_000), 20, true).unwrap();
        assert_eq!(r.x_only, 0);
        assert!(r.acc_z >= r.acc_x);
        assert!(r.gain_ci.0 <= r.gain() && r.gain() <= r.gain_ci.1);
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(mc_condition_prob(&model(1, 2, 0.5, 10)).is_err());
        assert!(mc_effectiveness_gain(&model(4, 2, 0.5, 10), 3, true).is_err());
        let mut m = model(4, 2, 0.5, 10);
        m.nodes_per_class = 1;
        assert!(m.validate().is_err());
    }

    #[test]
    fn grid_rows_in_nesting_order() {
        let rows = theory_grid(&[2, 3], &[1], &[0.0, 1.0], 50, 200, 1).unwrap();
        let keys: Vec<(usize, f64)> = rows.iter().map(|r| (r.size, r.affinity)).collect();
        assert_eq!(keys, vec![(2, 0.0), (2, 1.0), (3, 0.0), (3, 1.0)]);
    }
}
