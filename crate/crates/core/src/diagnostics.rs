//! Embedding diagnostics: covariance spectrum for dimensional collapse and
//! hypersphere alignment/uniformity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diffnum::{norm, Matrix};
use crate::error::{Error, Result};
use crate::hypergraph::LabelVector;

/// Singular values above this fraction of the largest count towards the
/// effective rank.
pub const COLLAPSE_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Singular values of the covariance, descending.
    pub singular_values: Vec<f64>,
    /// Same values divided by the largest (all zero for a zero spectrum).
    pub relative: Vec<f64>,
    pub effective_rank: usize,
}

/// Spectrum of `(1/(n-1))·ZcᵀZc`, with `Zc` the column-centered `z`.
pub fn singular_spectrum(z: &Matrix) -> Result<SpectrumReport> {
    let (n, d) = z.shape();
    if n < 2 {
        return Err(Error::invalid("spectrum needs at least 2 rows"));
    }
    let means = z.column_means();
    let centered = DMatrix::from_fn(n, d, |i, j| z[(i, j)] - means[(0, j)]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let mut values: Vec<f64> = cov.singular_values().iter().map(|v| v.max(0.0)).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let top = values.first().copied().unwrap_or(0.0);
    let relative = values
        .iter()
        .map(|v| if top > 0.0 { v / top } else { 0.0 })
        .collect();
    let effective_rank = if top > 0.0 {
        values.iter().filter(|&&v| v > COLLAPSE_THRESHOLD * top).count()
    } else {
        0
    };
    Ok(SpectrumReport {
        singular_values: values,
        relative,
        effective_rank,
    })
}

/// A hypersphere metric plus the number of zero rows left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereMetric {
    pub value: f64,
    pub excluded_rows: usize,
}

fn unit_rows(z: &Matrix) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let mut kept = Vec::new();
    let mut rows = Vec::new();
    for (i, r) in z.iter_rows().enumerate() {
        let nr = norm(r);
        if nr > 0.0 && nr.is_finite() {
            kept.push(i);
            rows.push(r.iter().map(|v| v / nr).collect());
        }
    }
    if kept.is_empty() {
        return Err(Error::invalid("every embedding row has zero norm"));
    }
    Ok((kept, rows))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Mean squared distance between unit-normalized rows of the same class.
pub fn alignment(z: &Matrix, labels: &LabelVector) -> Result<SphereMetric> {
    if labels.len() != z.rows() {
        return Err(Error::invalid(format!("{} labels for {} rows", labels.len(), z.rows())));
    }
    let (kept, rows) = unit_rows(z)?;
    let (mut total, mut pairs) = (0.0, 0usize);
    for a in 0..kept.len() {
        for b in a + 1..kept.len() {
            if labels.get(kept[a]) == labels.get(kept[b]) {
                total += sq_dist(&rows[a], &rows[b]);
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return Err(Error::invalid("alignment needs a class with two non-zero rows"));
    }
    Ok(SphereMetric {
        value: total / pairs as f64,
        excluded_rows: z.rows() - kept.len(),
    })
}

/// `log mean exp(-2‖u-v‖²)` over distinct pairs of unit-normalized rows.
pub fn uniformity(z: &Matrix) -> Result<SphereMetric> {
    let (kept, rows) = unit_rows(z)?;
    if kept.len() < 2 {
        return Err(Error::invalid("uniformity needs two non-zero rows"));
    }
    let mut total = 0.0;
    for a in 0..rows.len() {
        for b in a + 1..rows.len() {
            total += (-2.0 * sq_dist(&rows[a], &rows[b])).exp();
        }
    }
    let pairs = rows.len() * (rows.len() - 1) / 2;
    Ok(SphereMetric {
        value: (total / pairs as f64).ln(),
        excluded_rows: z.rows() - kept.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn gaussian_rows_have_flat_spectrum() {
        let mut rng = rng_from_seed(3);
        let z = Matrix::from_fn(10_000, 16, |_, _| StandardNormal.sample(&mut rng));
        let r = singular_spectrum(&z).unwrap();
        assert!(r.singular_values.iter().all(|v| (v - 1.0).abs() < 0.2));
        assert_eq!(r.effective_rank, 16);
    }

    #[test]
    fn rank_one_embeddings_collapse() {
        let a = [1.0, -2.0, 0.5];
        let z = Matrix::from_fn(20, 3, |i, j| (i as f64 - 3.0) * a[j]);
        let r = singular_spectrum(&z).unwrap();
        assert_eq!(r.effective_rank, 1);
        assert!(r.singular_values[1] < 1e-12 * r.singular_values[0]);
        assert_eq!(r.relative[0], 1.0);
    }

    #[test]
    fn constant_embeddings_have_zero_spectrum() {
        let r = singular_spectrum(&Matrix::filled(5, 3, 2.0)).unwrap();
        assert_eq!(r.effective_rank, 0);
        assert!(r.singular_values.iter().all(|&v| v == 0.0));
        assert!(singular_spectrum(&Matrix::filled(1, 3, 2.0)).is_err());
    }

    #[test]
    fn spectrum_ignores_translation() {
        let z = Matrix::from_fn(30, 4, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let moved = Matrix::from_fn(30, 4, |i, j| z[(i, j)] + 5.0 * j as f64 - 2.0);
        let a = singular_spectrum(&z).unwrap();
        let b = singular_spectrum(&moved).unwrap();
        for (x, y) in a.singular_values.iter().zip(&b.singular_values) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_rows_are_aligned_and_not_uniform() {
        let z = Matrix::filled(4, 3, 0.7);
        let labels = LabelVector::new(vec![0, 0, 1, 1]).unwrap();
        assert_eq!(alignment(&z, &labels).unwrap().value, 0.0);
        assert_eq!(uniformity(&z).unwrap().value, 0.0);
    }

    #[test]
    fn antipodal_pair_uniformity() {
        let z = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let u = uniformity(&z).unwrap();
        assert!((u.value + 8.0).abs() < 1e-12);
        assert_eq!(u.excluded_rows, 1);
        assert!(uniformity(&Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn circle_is_more_uniform_than_clusters() {
        let circle = Matrix::from_fn(360, 2, |i, j| {
            let t = (i as f64).to_radians();
            if j == 0 { t.cos() } else { t.sin() }
        });
        let clustered = Matrix::from_fn(360, 2, |i, j| {
            let t = ((i % 4) as f64 * 90.0 + (i as f64) * 0.01).to_radians();
            if j == 0 { t.cos() } else { t.sin() }
        });
        let two = Matrix::from_fn(360, 2, |i, j| if j == 0 { if i % 2 == 0 { 1.0 } else { -1.0 } } else { 0.1 });
        let u = uniformity(&circle).unwrap().value;
        assert!(u < uniformity(&clustered).unwrap().value);
        assert!(u < uniformity(&two).unwrap().value);
    }

    #[test]
    fn alignment_invariant_to_rotation_and_permutation() {
        let z = Matrix::from_fn(12, 2, |i, j| ((i * 5 + j * 3) % 7) as f64 - 3.0 + 0.1);
        let labels = LabelVector::new((0..12).map(|i| i % 3).collect()).unwrap();
        let base = alignment(&z, &labels).unwrap().value;
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let rotated = Matrix::from_fn(12, 2, |i, j| {
            let (x, y) = (z[(i, 0)], z[(i, 1)]);
            if j == 0 { c * x - s * y } else { s * x + c * y }
        });
        assert!((alignment(&rotated, &labels).unwrap().value - base).abs() < 1e-9);
        let perm: Vec<usize> = (0..12).rev().collect();
        let pz = z.select_rows(&perm);
        let pl = LabelVector::new(perm.iter().map(|&i| labels.get(i)).collect()).unwrap();
        assert!((alignment(&pz, &pl).unwrap().value - base).abs() < 1e-12);
    }
}
