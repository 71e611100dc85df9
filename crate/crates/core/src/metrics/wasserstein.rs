use nalgebra::DMatrix;
use rand::RngCore;

use crate::error::{check_dim, invalid, Result};
use crate::prior::standard_normal;

/// Largest cloud size accepted by the exact solver.
pub const EXACT_W2_CAP: usize = 2048;

/// Points (one per row) with optional probability weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: DMatrix<f64>,
    pub weights: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn uniform(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() < 1 {
            return Err(invalid("points", "cloud needs at least one point"));
        }
        Ok(Self {
            points,
            weights: None,
        })
    }

    pub fn weighted(points: DMatrix<f64>, weights: Vec<f64>) -> Result<Self> {
        check_dim(points.nrows(), weights.len())?;
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(invalid("weights", "must be a probability vector"));
        }
        Ok(Self {
            points,
            weights: Some(weights),
        })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    fn is_uniform(&self) -> bool {
        match &self.weights {
            None => true,
            Some(w) => {
                let u = 1.0 / w.len() as f64;
                w.iter().all(|v| (v - u).abs() < 1e-12)
            }
        }
    }
}

/// Minimum-cost perfect matching on a square cost matrix by successive
/// shortest augmenting paths with dual potentials, `O(n³)`. Returns the column
/// assigned to each row.
pub fn assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    // 1-based bookkeeping with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0; n];
    for j in 1..=n {
        col_of_row[row_of[j] - 1] = j - 1;
    }
    col_of_row
}

fn sq_dist_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        a.row(i)
            .iter()
            .zip(b.row(j).iter())
            .map(|(p, q)| (p - q) * (p - q))
            .sum()
    })
}

/// Exact 2-Wasserstein distance between equal-size uniform clouds.
pub fn wasserstein2_exact(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    if a.len() != b.len() {
        return Err(invalid(
            "points",
            format!("exact W2 needs equal sizes, got {} and {}", a.len(), b.len()),
        ));
    }
    if a.len() > EXACT_W2_CAP {
        return Err(invalid(
            "points",
            format!(
                "{} points exceeds the exact-solver cap of {EXACT_W2_CAP}; use wasserstein2_sliced",
                a.len()
            ),
        ));
    }
    if !a.is_uniform() || !b.is_uniform() {
        return Err(invalid("weights", "exact W2 supports uniform weights only"));
    }
    let cost = sq_dist_matrix(&a.points, &b.points);
    let perm = assignment(&cost);
    // summing in sorted order makes the result exactly symmetric in (a, b)
    let mut matched: Vec<f64> = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).collect();
    matched.sort_by(f64::total_cmp);
    let total: f64 = matched.iter().sum();
    Ok((total / a.len() as f64).max(0.0).sqrt())
}

/// 2-Wasserstein distance between uniform empirical measures on the line,
/// via the quantile coupling. Sizes may differ.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        let s: f64 = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum();
        return (s / a.len() as f64).sqrt();
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut pos = 0.0;
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let ea = (i + 1) as f64 / na;
        let eb = (j + 1) as f64 / nb;
        let next = ea.min(eb);
        total += (next - pos) * (a[i] - b[j]).powi(2);
        pos = next;
        if ea <= eb {
            i += 1;
        }
        if eb <= ea {
            j += 1;
        }
    }
    total.max(0.0).sqrt()
}

/// Sliced 2-Wasserstein distance `sqrt(d · mean_θ W2²(θ·a, θ·b))` over
/// `n_projections` random unit directions. The factor `d` makes it agree with
/// the exact distance for translated clouds and bound it from below in
/// general.
pub fn wasserstein2_sliced(
    a: &PointCloud,
    b: &PointCloud,
    n_projections: usize,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    if n_projections < 1 {
        return Err(invalid("n_projections", "must be at least 1"));
    }
    if !a.is_uniform() || !b.is_uniform() {
        return Err(invalid("weights", "sliced W2 supports uniform weights only"));
    }
    let d = a.dim();
    let mut acc = 0.0;
    for _ in 0..n_projections {
        let theta = if d == 1 {
            nalgebra::DVector::from_element(1, 1.0)
        } else {
            let g = standard_normal(rng, d);
            let n = g.norm();
            g / n
        };
        let pa: Vec<f64> = (&a.points * &theta).iter().copied().collect();
        let pb: Vec<f64> = (&b.points * &theta).iter().copied().collect();
        acc += wasserstein_1d(&pa, &pb).powi(2);
    }
    Ok((d as f64 * acc / n_projections as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::chain_rng;

    fn cloud(rows: usize, cols: usize, v: &[f64]) -> PointCloud {
        PointCloud::uniform(DMatrix::from_row_slice(rows, cols, v)).unwrap()
    }

    #[test]
    fn identical_clouds_have_zero_distance() {
        let a = cloud(3, 2, &[0.0, 1.0, 2.0, 3.0, -1.0, 0.5]);
        assert_eq!(wasserstein2_exact(&a, &a).unwrap(), 0.0);
        assert_eq!(wasserstein2_sliced(&a, &a, 16, &mut chain_rng(0, 0)).unwrap(), 0.0);
    }

    #[test]
    fn singletons() {
        let a = cloud(1, 2, &[0.0, 0.0]);
        let b = cloud(1, 2, &[3.0, 4.0]);
        assert!((wasserstein2_exact(&a, &b).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn one_dimensional_sliced_equals_sorting_formula() {
        let a = cloud(4, 1, &[0.3, -1.0, 2.0, 0.0]);
        let b = cloud(4, 1, &[1.0, 1.5, -0.2, 0.7]);
        let exact = wasserstein_1d(&[0.3, -1.0, 2.0, 0.0], &[1.0, 1.5, -0.2, 0.7]);
        let s = wasserstein2_sliced(&a, &b, 3, &mut chain_rng(0, 0)).unwrap();
        assert!((s - exact).abs() < 1e-14);
        assert!((wasserstein2_exact(&a, &b).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn unequal_sizes_in_one_dimension() {
        // {0, 1} vs {0, 0, 1, 1}: identical measures
        assert!(wasserstein_1d(&[0.0, 1.0], &[0.0, 0.0, 1.0, 1.0]) < 1e-15);
        // {0} vs {0, 2}: half the mass moves by 2
        assert!((wasserstein_1d(&[0.0], &[0.0, 2.0]) - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn exact_rejects_bad_inputs() {
        let a = cloud(2, 1, &[0.0, 1.0]);
        let b = cloud(3, 1, &[0.0, 1.0, 2.0]);
        assert!(wasserstein2_exact(&a, &b).is_err());
        let big = PointCloud::uniform(DMatrix::zeros(EXACT_W2_CAP + 1, 1)).unwrap();
        let err = wasserstein2_exact(&big, &big).unwrap_err().to_string();
        assert!(err.contains("sliced"), "{err}");
    }
}
