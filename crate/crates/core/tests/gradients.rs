//! Every tape primitive against central finite differences on random inputs.

mod common;

use std::rc::Rc;

use proptest::prelude::*;

use hypeboy::diffnum::{Matrix, Tape, Var};

use common::{finite_difference, max_relative_error};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-6;

/// Contracts the primitive's output with `weights` so that every entry of
/// the Jacobian contributes to the checked gradient.
fn check(
    inputs: &[Matrix],
    weights: &Matrix,
    build: impl Fn(&mut Tape, &[Var]) -> Var,
) -> Result<(), TestCaseError> {
    let eval = |xs: &[Matrix]| -> (f64, Vec<Matrix>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = build(&mut tape, &vars);
        let w = Rc::new(weights.clone());
        let masked = tape.mul_mask(out, w).expect("weights match output shape");
        let loss = tape.sum(masked);
        let grads = tape.backward(loss).unwrap();
        (tape.scalar(loss), vars.iter().map(|&v| grads.get(v)).collect())
    };
    let (_, analytic) = eval(inputs);
    for k in 0..inputs.len() {
        let numeric = finite_difference(&inputs[k], H, |x| {
            let mut probe = inputs.to_vec();
            probe[k] = x.clone();
            eval(&probe).0
        });
        let err = max_relative_error(&analytic[k], &numeric, FLOOR);
        prop_assert!(err <= TOL, "input {k}: relative error {err}");
    }
    Ok(())
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0f64..1.0, rows * cols)
        .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn away_from_zero(m: &Matrix) -> bool {
    m.as_slice().iter().all(|v| v.abs() > 1e-3)
}

fn has_row_norms_above(m: &Matrix, floor: f64) -> bool {
    m.iter_rows().all(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt() > floor)
}

fn groups() -> Rc<Vec<Vec<usize>>> {
    Rc::new(vec![vec![0, 2], vec![1], vec![0, 1, 3], vec![3, 3]])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matmul_and_transposed(a in matrix(3, 4), b in matrix(4, 2), c in matrix(5, 4), w in matrix(3, 2), w2 in matrix(3, 5)) {
        check(&[a.clone(), b], &w, |t, v| t.matmul(v[0], v[1]).unwrap())?;
        check(&[a, c], &w2, |t, v| t.matmul_transposed(v[0], v[1]).unwrap())?;
    }

    #[test]
    fn add_bias_and_add(a in matrix(3, 4), b in matrix(1, 4), c in matrix(3, 4), w in matrix(3, 4)) {
        check(&[a.clone(), b], &w, |t, v| t.add_bias(v[0], v[1]).unwrap())?;
        check(&[a, c], &w, |t, v| t.add(v[0], v[1]).unwrap())?;
    }

    #[test]
    fn rectify_and_elementwise(a in matrix(3, 4), mask in matrix(3, 4), w in matrix(3, 4), f in -2.0f64..2.0) {
        prop_assume!(away_from_zero(&a));
        check(std::slice::from_ref(&a), &w, |t, v| t.rectify(v[0]))?;
        check(std::slice::from_ref(&a), &w, |t, v| t.mul_mask(v[0], Rc::new(mask.clone())).unwrap())?;
        check(std::slice::from_ref(&a), &w, |t, v| t.scale(v[0], f))?;
        check(&[a], &w, |t, v| t.add_scalar(v[0], f))?;
    }

    #[test]
    fn normalization_and_cosine(a in matrix(4, 3), b in matrix(4, 3), w in matrix(4, 3), wc in matrix(4, 1)) {
        prop_assume!(has_row_norms_above(&a, 0.1) && has_row_norms_above(&b, 0.1));
        check(std::slice::from_ref(&a), &w, |t, v| t.row_normalize(v[0]).unwrap())?;
        check(&[a, b], &wc, |t, v| t.cosine_rows(v[0], v[1]).unwrap())?;
    }

    #[test]
    fn log_softmax(a in matrix(3, 5), w in matrix(3, 5)) {
        check(&[a], &w, |t, v| t.log_softmax_row(v[0]))?;
    }

    #[test]
    fn segment_reductions(a in matrix(4, 3), w in matrix(4, 3)) {
        check(std::slice::from_ref(&a), &w, |t, v| t.segment_mean(v[0], groups()).unwrap())?;
        check(&[a], &w, |t, v| t.segment_sum(v[0], groups()).unwrap())?;
    }

    #[test]
    fn row_selection(a in matrix(4, 3), token in matrix(1, 3), w in matrix(4, 3), w5 in matrix(5, 3), w1 in matrix(1, 1)) {
        let mask = Rc::new(vec![true, false, false, true]);
        check(&[a.clone(), token], &w, |t, v| t.masked_assign(v[0], mask.clone(), v[1]).unwrap())?;
        check(std::slice::from_ref(&a), &w5, |t, v| t.gather_rows(v[0], Rc::new(vec![3, 0, 0, 2, 1])).unwrap())?;
        check(std::slice::from_ref(&a), &w1, |t, v| t.pick_sum(v[0], Rc::new(vec![(0, 1), (2, 2), (0, 1), (3, 0)])).unwrap())?;
        check(std::slice::from_ref(&a), &w1, |t, v| t.sum(v[0]))?;
        check(&[a], &w1, |t, v| t.mean(v[0]).unwrap())?;
    }

    #[test]
    fn log_softmax_rows_normalize_and_ignore_shifts(a in matrix(3, 6), shift in prop::collection::vec(-50.0f64..50.0, 3)) {
        let mut tape = Tape::new();
        let x = tape.constant(a.clone());
        let y = tape.log_softmax_row(x);
        let moved = Matrix::from_fn(3, 6, |i, j| a[(i, j)] + shift[i]);
        let xm = tape.constant(moved);
        let ym = tape.log_softmax_row(xm);
        for i in 0..3 {
            let total: f64 = tape.value(y).row(i).iter().map(|v| v.exp()).sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
        }
        prop_assert!(tape.value(y).max_abs_diff(tape.value(ym)) <= 1e-9);
    }

    #[test]
    fn gradients_are_bit_identical_across_runs(a in matrix(4, 3), b in matrix(3, 2)) {
        let run = || {
            let mut tape = Tape::new();
            let x = tape.leaf(a.clone());
            let wv = tape.leaf(b.clone());
            let h = tape.matmul(x, wv).unwrap();
            let s = tape.segment_mean(h, groups()).unwrap();
            let l = tape.log_softmax_row(s);
            let loss = tape.sum(l);
            let g = tape.backward(loss).unwrap();
            (g.get(x), g.get(wv))
        };
        prop_assert_eq!(run(), run());
    }
}
