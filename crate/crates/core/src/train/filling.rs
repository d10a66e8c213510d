use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::diffnum::{Groups, Matrix, Tape, Var};
use crate::error::{Error, Result};

/// One (missing node, query subset) split of a hyperedge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillingInstance {
    pub missing: usize,
    pub query: Vec<usize>,
    pub source: usize,
}

/// Every member of every hyperedge of size ≥ 2 taken in turn as the missing
/// node. Duplicated hyperedges give duplicated instances.
pub fn enumerate_instances(hyperedges: &[Vec<usize>]) -> Vec<FillingInstance> {
    let mut out = Vec::new();
    for (j, e) in hyperedges.iter().enumerate() {
        if e.len() < 2 {
            continue;
        }
        for (k, &v) in e.iter().enumerate() {
            let query = e[..k].iter().chain(&e[k + 1..]).copied().collect();
            out.push(FillingInstance {
                missing: v,
                query,
                source: j,
            });
        }
    }
    out
}

/// Query subsets in instance order, for [`crate::encoder::sum_queries`].
pub fn query_groups(instances: &[FillingInstance]) -> Groups {
    Rc::new(instances.iter().map(|i| i.query.clone()).collect())
}

/// `-Σ log softmax_k(cos(h_k, q)/τ)[missing]` over all instances, the
/// softmax running over every node. Rows of `h` and `q` must be non-zero.
pub fn filling_loss(
    tape: &mut Tape,
    h: Var,
    q: Var,
    instances: &[FillingInstance],
    temperature: f64,
) -> Result<Var> {
    let log_probs = filling_log_probs(tape, h, q, instances.len(), temperature)?;
    let n = tape.shape(h).0;
    if let Some(bad) = instances.iter().find(|i| i.missing >= n) {
        return Err(Error::invalid(format!(
            "missing node {} out of range for {n} nodes",
            bad.missing
        )));
    }
    let entries = instances
        .iter()
        .enumerate()
        .map(|(k, i)| (k, i.missing))
        .collect();
    let picked = tape.pick_sum(log_probs, Rc::new(entries))?;
    Ok(tape.scale(picked, -1.0))
}

fn filling_log_probs(
    tape: &mut Tape,
    h: Var,
    q: Var,
    count: usize,
    temperature: f64,
) -> Result<Var> {
    if tape.shape(q).0 != count {
        return Err(Error::shape(
            "filling_loss",
            format!("{} query rows for {count} instances", tape.shape(q).0),
        ));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(format!("temperature {temperature} must be positive")));
    }
    let hn = tape.row_normalize(h)?;
    let qn = tape.row_normalize(q)?;
    let mut logits = tape.matmul_transposed(qn, hn)?;
    if temperature != 1.0 {
        logits = tape.scale(logits, 1.0 / temperature);
    }
    Ok(tape.log_softmax_row(logits))
}

/// Filling probabilities `p(v | q_k)` as an `instances x nodes` matrix.
pub fn filling_probabilities(h: &Matrix, q: &Matrix, temperature: f64) -> Result<Matrix> {
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let qv = tape.constant(q.clone());
    let lp = filling_log_probs(&mut tape, hv, qv, q.rows(), temperature)?;
    Ok(tape.value(lp).map(f64::exp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn loss_value(h: &Matrix, q: &Matrix, inst: &[FillingInstance]) -> f64 {
        let mut tape = Tape::new();
        let hv = tape.constant(h.clone());
        let qv = tape.constant(q.clone());
        let l = filling_loss(&mut tape, hv, qv, inst, 1.0).unwrap();
        tape.scalar(l)
    }

    #[test]
    fn enumerates_one_instance_per_member() {
        let inst = enumerate_instances(&[vec![0, 1, 2]]);
        let pairs: Vec<(usize, Vec<usize>)> =
            inst.iter().map(|i| (i.missing, i.query.clone())).collect();
        assert_eq!(
            pairs,
            vec![(0, vec![1, 2]), (1, vec![0, 2]), (2, vec![0, 1])]
        );
        assert!(enumerate_instances(&[vec![4]]).is_empty());
        let dup = enumerate_instances(&[vec![0, 1], vec![0, 1]]);
        assert_eq!(dup.len(), 4);
        assert_eq!(dup[0].query, dup[2].query);
        assert_eq!(dup[2].source, 1);
    }

    #[test]
    fn identical_node_rows_give_log_n_per_instance() {
        let h = Matrix::filled(6, 3, 0.7);
        let q = Matrix::from_fn(4, 3, |i, j| (i + j) as f64 - 1.5);
        let inst = enumerate_instances(&[vec![0, 1], vec![2, 3]]);
        let l = loss_value(&h, &q, &inst);
        assert!((l - 4.0 * 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_projected_row_rejected() {
        let mut h = Matrix::filled(3, 2, 1.0);
        h.row_mut(1).fill(0.0);
        let q = Matrix::filled(2, 2, 1.0);
        let inst = enumerate_instances(&[vec![0, 2]]);
        let mut tape = Tape::new();
        let hv = tape.constant(h);
        let qv = tape.constant(q);
        assert!(matches!(
            filling_loss(&mut tape, hv, qv, &inst, 1.0),
            Err(Error::ZeroNorm { .. })
        ));
    }

    fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        prop::collection::vec(0.1f64..2.0, rows * cols).prop_map(move |mut v| {
            // alternate signs so rows are not all parallel
            for (k, x) in v.iter_mut().enumerate() {
                if k % 3 == 1 {
                    *x = -*x;
                }
            }
            Matrix::from_vec(rows, cols, v).unwrap()
        })
    }

    proptest! {
        #[test]
        fn probabilities_normalize(h in matrix(7, 4), q in matrix(5, 4)) {
            let p = filling_probabilities(&h, &q, 1.0).unwrap();
            for r in p.iter_rows() {
                prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn loss_invariant_to_positive_row_scaling(
            h in matrix(6, 3),
            q in matrix(6, 3),
            hs in prop::collection::vec(0.01f64..100.0, 6),
            qs in prop::collection::vec(0.01f64..100.0, 6),
        ) {
            let inst = enumerate_instances(&[vec![0, 1, 2], vec![3, 4, 5]]);
            let base = loss_value(&h, &q, &inst);
            let h2 = Matrix::from_fn(6, 3, |i, j| h[(i, j)] * hs[i]);
            let q2 = Matrix::from_fn(6, 3, |i, j| q[(i, j)] * qs[i]);
            prop_assert!((loss_value(&h2, &q2, &inst) - base).abs() < 1e-9);
        }

        #[test]
        fn loss_respects_cosine_bounds(h in matrix(5, 3), q in matrix(4, 3)) {
            let inst = enumerate_instances(&[vec![0, 1], vec![2, 4]]);
            let l = loss_value(&h, &q, &inst);
            let k = inst.len() as f64;
            prop_assert!(l >= k * 5f64.ln() - 2.0 * k - 1e-12);
            prop_assert!(l <= k * 5f64.ln() + 2.0 * k + 1e-12);
        }

        #[test]
        fn instance_count_is_total_membership(
            sizes in prop::collection::vec(1usize..6, 0..12),
        ) {
            let edges: Vec<Vec<usize>> = sizes.iter().map(|&s| (0..s).collect()).collect();
            let inst = enumerate_instances(&edges);
            let expected: usize = sizes.iter().filter(|&&s| s >= 2).sum();
            prop_assert_eq!(inst.len(), expected);
            for i in &inst {
                prop_assert!(!i.query.contains(&i.missing));
                prop_assert_eq!(i.query.len() + 1, edges[i.source].len());
            }
        }
    }
}
