//! Numerical checks of the filling-task theory on the two-class Gaussian
//! hypergraph model: filling probability, one-step representation update,
//! the Gaussian classifier, the closed-form condition probability, Monte
//! Carlo estimates and the SVD construction of a reasonable solution.

mod monte_carlo;
mod solution;

pub use monte_carlo::{
    mc_condition_prob, mc_effectiveness_gain, theory_grid, EffectivenessReport, GridRow,
    McEstimate, TheoryModel,
};
pub use solution::{reasonable_solution, ReasonableSolution};

use libm::erfc;

use crate::diffnum::{dot, Matrix};
use crate::error::{Error, Result};
use crate::hypergraph::{CLASS0_MEAN, CLASS1_MEAN};

/// Standard normal CDF.
pub fn normal_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / std::f64::consts::SQRT_2)
}

fn query_sum(x: &Matrix, query: &[usize]) -> Result<Vec<f64>> {
    if query.is_empty() {
        return Err(Error::invalid("query subset is empty"));
    }
    let mut s = vec![0.0; x.cols()];
    for &k in query {
        if k >= x.rows() {
            return Err(Error::invalid(format!("query node {k} out of range")));
        }
        s.iter_mut().zip(x.row(k)).for_each(|(a, b)| *a += b);
    }
    Ok(s)
}

/// `exp(x_iᵀs) / Σ_t exp(x_tᵀs)` with `s = Σ_{k∈q} x_k`.
pub fn filling_prob_raw(x: &Matrix, node: usize, query: &[usize]) -> Result<f64> {
    let s = query_sum(x, query)?;
    filling_prob_with_sum(x, node, &s)
}

fn filling_prob_with_sum(x: &Matrix, node: usize, s: &[f64]) -> Result<f64> {
    if node >= x.rows() {
        return Err(Error::invalid(format!("node {node} out of range")));
    }
    let logits: Vec<f64> = x.iter_rows().map(|r| dot(r, s)).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    Ok((logits[node] - max).exp() / denom)
}

/// One gradient step on `-log p(node | query)` w.r.t. `x_node`:
/// `z = x_i + γ(1 - f)·s`.
pub fn update_representation(x: &Matrix, node: usize, query: &[usize], gamma: f64) -> Result<Vec<f64>> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("step size {gamma} must be >= 0")));
    }
    let s = query_sum(x, query)?;
    let f = filling_prob_with_sum(x, node, &s)?;
    let xi = x.row(node).to_vec();
    if gamma == 0.0 {
        return Ok(xi);
    }
    let c = gamma * (1.0 - f);
    Ok(xi.iter().zip(&s).map(|(a, b)| a + c * b).collect())
}

/// Gaussian naive Bayes with identity covariance and means `±0.5·1`;
/// equal densities resolve to class 0.
pub fn gnb_classify(x: &[f64]) -> usize {
    let sq = |mean: f64| x.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    // log densities up to the shared normalizer
    let log1 = -0.5 * sq(CLASS1_MEAN);
    let log0 = -0.5 * sq(CLASS0_MEAN);
    usize::from(log1 > log0)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Probability that a class-1 missing node's query sum points into the
/// class-1 half-space, in closed form.
pub fn closed_form_condition_prob(size: usize, dim: usize, affinity: f64) -> Result<f64> {
    if size < 2 {
        return Err(Error::invalid(format!("hyperedge size {size} must be >= 2")));
    }
    if dim == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    if !(0.0..=1.0).contains(&affinity) {
        return Err(Error::invalid(format!("affinity {affinity} outside [0, 1]")));
    }
    let (p, q) = (affinity, 1.0 - affinity);
    let scale = (dim as f64 / (4.0 * (size - 1) as f64)).sqrt();
    let total: f64 = (0..=size)
        .map(|s| {
            let mix = p.powi(s as i32) * q.powi((size - s) as i32)
                + q.powi(s as i32) * p.powi((size - s) as i32);
            let t = (2.0 * s as f64 - size as f64 - 1.0) * scale;
            binomial(size, s) * s as f64 * mix * normal_cdf(t)
        })
        .sum();
    Ok(total / size as f64)
}
