//! Downstream evaluation: node classification (linear probe, fine-tuning)
//! and hyperedge prediction with size-matched negatives.

mod edge;
mod node;
mod results;

pub use edge::{
    auroc, edge_samples, hyperedge_embedding, hyperedge_prediction, sample_negative_hyperedges,
    EdgeConfig, EdgeSample,
};
pub use node::{fine_tune, linear_probe, EvalConfig};
pub use results::{summarize, write_results, ResultRow, Summary};

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::diffnum::{Matrix, Tape, Var};
use crate::error::{Error, Result};

/// The checkpoint picked by validation and its test metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub best_epoch: usize,
    pub valid: f64,
    pub test: f64,
}

/// Evaluates at epoch 0 and after every `eval_every` steps; keeps the first
/// checkpoint with the highest validation metric.
pub(crate) fn select_by_validation<M>(
    config: &EvalConfig,
    model: &mut M,
    mut step: impl FnMut(&mut M) -> Result<()>,
    evaluate: impl Fn(&M) -> Result<(f64, f64)>,
) -> Result<Selection> {
    if config.eval_every == 0 {
        return Err(Error::invalid("eval_every must be >= 1"));
    }
    let (valid, test) = evaluate(model)?;
    let mut best = Selection {
        best_epoch: 0,
        valid,
        test,
    };
    for epoch in 1..=config.epochs {
        step(model).map_err(|e| match e {
            Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch}: {m}")),
            other => other,
        })?;
        if epoch % config.eval_every == 0 {
            let (valid, test) = evaluate(model)?;
            if valid > best.valid {
                best = Selection {
                    best_epoch: epoch,
                    valid,
                    test,
                };
            }
        }
    }
    Ok(best)
}

/// Mean negative log-likelihood of `labels` under row-wise softmax.
pub(crate) fn cross_entropy(tape: &mut Tape, logits: Var, labels: &Rc<Vec<usize>>) -> Result<Var> {
    let lp = tape.log_softmax_row(logits);
    let entries = labels.iter().enumerate().map(|(i, &c)| (i, c)).collect();
    let picked = tape.pick_sum(lp, Rc::new(entries))?;
    Ok(tape.scale(picked, -1.0 / labels.len() as f64))
}

/// Index of the largest entry per row; ties go to the lowest index.
pub(crate) fn argmax_rows(m: &Matrix) -> Vec<usize> {
    m.iter_rows()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                    if v > bv {
                        (i, v)
                    } else {
                        (bi, bv)
                    }
                })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_prefers_earliest_best() {
        let config = EvalConfig {
            epochs: 40,
            eval_every: 10,
            ..EvalConfig::with_seed(0)
        };
        let valid = [0.5, 0.7, 0.7, 0.6, 0.7];
        let mut t = 0usize;
        let sel = select_by_validation(
            &config,
            &mut t,
            |t| {
                *t += 1;
                Ok(())
            },
            |&t| Ok((valid[t / 10], t as f64)),
        )
        .unwrap();
        assert_eq!(sel.best_epoch, 10);
        assert_eq!(sel.test, 10.0);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(argmax_rows(&m), vec![0, 1]);
    }
}
