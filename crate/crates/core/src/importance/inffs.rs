//! Graph-based feature ranking: features are vertices of a fully connected
//! weighted graph and a feature's score is the total weight of all paths of
//! every length through it, summed in closed form as `(I − rA)⁻¹ − I`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::ImportanceError;

pub const DEFAULT_ALPHA_MIX: f64 = 0.5;
pub const DEFAULT_BETA: f64 = 0.9;

/// Sample standard deviation of every column.
pub fn column_std(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(
        x.ncols(),
        x.column_iter().map(|c| {
            let mean = c.mean();
            let ss: f64 = c.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1.0)).sqrt()
        }),
    )
}

/// Ranks with ties averaged, 1-based.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation between all column pairs. Constant columns are
/// uncorrelated with everything but themselves.
pub fn spearman(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let mut ranked = DMatrix::zeros(n, d);
    for (j, col) in x.column_iter().enumerate() {
        let r = average_ranks(col.as_slice());
        ranked.set_column(j, &DVector::from_vec(r));
    }
    let mut norms = Vec::with_capacity(d);
    for mut col in ranked.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        norms.push(col.norm());
    }
    let gram = ranked.transpose() * &ranked;
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else if norms[i] == 0.0 || norms[j] == 0.0 {
            0.0
        } else {
            (gram[(i, j)] / (norms[i] * norms[j])).clamp(-1.0, 1.0)
        }
    })
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Row sums of `(I − rA)⁻¹ − I` with `r = beta / ρ(A)`.
pub fn path_energy(a: &DMatrix<f64>, beta: f64) -> Result<DVector<f64>, ImportanceError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(ImportanceError::Parameter(format!("beta must lie in (0, 1), got {beta}")));
    }
    let d = a.nrows();
    let rho = spectral_radius(a);
    if rho == 0.0 {
        return Ok(DVector::zeros(d));
    }
    let r = beta / rho;
    let system = DMatrix::identity(d, d) - a * r;
    let inv = system.try_inverse().ok_or(ImportanceError::Singular)?;
    let s = inv - DMatrix::identity(d, d);
    Ok(DVector::from_iterator(d, s.row_iter().map(|row| row.sum())))
}

/// Adjacency `A_ij = α·max(σ_i, σ_j) + (1 − α)·(1 − |ρ_ij|)`, with σ the
/// column standard deviations divided by their maximum and ρ the Spearman
/// correlation.
pub fn inffs_adjacency(x: &DMatrix<f64>, alpha_mix: f64) -> DMatrix<f64> {
    let std = column_std(x);
    let max = std.max();
    let sigma = if max > 0.0 { std / max } else { std };
    let rho = spearman(x);
    let d = x.ncols();
    DMatrix::from_fn(d, d, |i, j| {
        alpha_mix * sigma[i].max(sigma[j]) + (1.0 - alpha_mix) * (1.0 - rho[(i, j)].abs())
    })
}

pub fn inffs_scores(x: &DMatrix<f64>, alpha_mix: f64, beta: f64) -> Result<DVector<f64>, ImportanceError> {
    if x.ncols() < 2 {
        return Err(ImportanceError::Shape(format!("need at least 2 features, got {}", x.ncols())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ImportanceError::NonFinite);
    }
    if !(0.0..=1.0).contains(&alpha_mix) {
        return Err(ImportanceError::Parameter(format!("alpha_mix must lie in [0, 1], got {alpha_mix}")));
    }
    path_energy(&inffs_adjacency(x, alpha_mix), beta)
}
