//! Partial least squares by NIPALS, and variable importance in projection.

use nalgebra::{DMatrix, DVector};

use super::ImportanceError;

const INNER_TOL: f64 = 1e-12;
const INNER_MAX_ITER: usize = 500;

/// A fitted PLS model. Component `k` lives in column `k` of each matrix.
#[derive(Debug, Clone)]
pub struct PlsModel {
    /// Unit-norm weight vectors (D × c).
    pub weights: DMatrix<f64>,
    /// Score vectors (N × c).
    pub scores: DMatrix<f64>,
    /// X loadings (D × c).
    pub loadings: DMatrix<f64>,
    /// Response loadings (q × c); for a single response these are the
    /// regression scalars `b_k`.
    pub y_loadings: DMatrix<f64>,
    pub x_mean: DVector<f64>,
    pub y_mean: DVector<f64>,
}

impl PlsModel {
    pub fn n_components(&self) -> usize {
        self.weights.ncols()
    }

    /// Response sum of squares explained by each component: `||q_k||²·t_kᵀt_k`.
    pub fn explained_ss(&self) -> Vec<f64> {
        (0..self.n_components())
            .map(|k| self.y_loadings.column(k).norm_squared() * self.scores.column(k).norm_squared())
            .collect()
    }

    /// Fitted response on the training rows.
    pub fn fitted(&self) -> DMatrix<f64> {
        let mut y = &self.scores * self.y_loadings.transpose();
        for mut row in y.row_iter_mut() {
            row += self.y_mean.transpose();
        }
        y
    }

    /// Regression coefficients `W (PᵀW)⁻¹ Qᵀ` on centered inputs (D × q).
    pub fn coefficients(&self) -> Option<DMatrix<f64>> {
        let ptw = self.loadings.transpose() * &self.weights;
        let inv = ptw.try_inverse()?;
        Some(&self.weights * inv * self.y_loadings.transpose())
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let b = self.coefficients()?;
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.x_mean.transpose();
        }
        let mut y = centered * b;
        for mut row in y.row_iter_mut() {
            row += self.y_mean.transpose();
        }
        Some(y)
    }
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.mean()))
}

fn center(m: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut col, mean) in out.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(-mean);
    }
    out
}

/// Fits `c` PLS components of `y` (N × q) on `x` (N × D). Both are centered
/// internally.
///
/// For a single response each component is one NIPALS step: `w = Xᵀy/‖Xᵀy‖`,
/// `t = Xw`, `p = Xᵀt/tᵀt`, `b = yᵀt/tᵀt`, followed by deflation of both `X`
/// and `y`. Multiple responses use the PLS2 inner loop, started from the
/// first response column with non-zero variance.
///
/// Fitting stops early, with fewer than `c` components, once the residual
/// response has no covariance left with the residual features.
pub fn pls_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, c: usize) -> Result<PlsModel, ImportanceError> {
    let (n, d) = x.shape();
    if y.nrows() != n || y.ncols() == 0 {
        return Err(ImportanceError::Shape(format!("response is {}×{}, features have {n} rows", y.nrows(), y.ncols())));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(ImportanceError::NonFinite);
    }
    let max_c = (n.saturating_sub(1)).min(d);
    if c == 0 || c > max_c {
        return Err(ImportanceError::TooManyComponents { requested: c, max: max_c });
    }

    let x_mean = column_means(x);
    let y_mean = column_means(y);
    let mut xr = center(x, &x_mean);
    let mut yr = center(y, &y_mean);

    let y_scale = yr.norm();
    if y_scale == 0.0 {
        return Err(ImportanceError::ZeroVarianceResponse);
    }
    let x_scale = xr.norm();

    let q = y.ncols();
    let mut weights = Vec::with_capacity(c);
    let mut scores = Vec::with_capacity(c);
    let mut loadings = Vec::with_capacity(c);
    let mut y_loadings = Vec::with_capacity(c);

    for _ in 0..c {
        let Some(start) = yr.column_iter().position(|col| col.norm() > 1e-12 * y_scale) else {
            break;
        };
        let mut u: DVector<f64> = yr.column(start).into_owned();
        let mut w = DVector::zeros(d);
        let mut t = DVector::zeros(n);
        let mut found = false;
        for _ in 0..INNER_MAX_ITER {
            let xtu = xr.transpose() * &u;
            let norm = xtu.norm();
            if norm <= 1e-12 * x_scale * u.norm() {
                break;
            }
            found = true;
            w = xtu / norm;
            let t_new = &xr * &w;
            let shift = (&t_new - &t).norm();
            t = t_new;
            if q == 1 {
                break;
            }
            let qk = yr.transpose() * &t / t.norm_squared();
            u = &yr * &qk / qk.norm_squared();
            if shift <= INNER_TOL * t.norm() {
                break;
            }
        }
        let tt = t.norm_squared();
        if !found || tt == 0.0 {
            break;
        }
        let p = xr.transpose() * &t / tt;
        let qk = yr.transpose() * &t / tt;
        xr -= &t * p.transpose();
        yr -= &t * qk.transpose();
        weights.push(w);
        scores.push(t);
        loadings.push(p);
        y_loadings.push(qk);
    }

    if weights.is_empty() {
        return Err(ImportanceError::Degenerate("response has no covariance with the features".into()));
    }

    Ok(PlsModel {
        weights: DMatrix::from_columns(&weights),
        scores: DMatrix::from_columns(&scores),
        loadings: DMatrix::from_columns(&loadings),
        y_loadings: DMatrix::from_columns(&y_loadings),
        x_mean,
        y_mean,
    })
}

/// Single-response convenience wrapper around [`pls_fit`].
pub fn pls_fit_single(x: &DMatrix<f64>, y: &DVector<f64>, c: usize) -> Result<PlsModel, ImportanceError> {
    pls_fit(x, &DMatrix::from_column_slice(y.len(), 1, y.as_slice()), c)
}

/// `VIP_j = sqrt(D · Σ_k SS_k·w_jk² / Σ_k SS_k)`. Squares sum to `D`.
pub fn vip_scores(m: &PlsModel) -> Result<DVector<f64>, ImportanceError> {
    let ss = m.explained_ss();
    let total: f64 = ss.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(ImportanceError::Degenerate("PLS components explain no response variance".into()));
    }
    let d = m.weights.nrows();
    Ok(DVector::from_iterator(
        d,
        m.weights.row_iter().map(|row| {
            let acc: f64 = row.iter().zip(&ss).map(|(w, s)| s * w * w).sum();
            (d as f64 * acc / total).sqrt()
        }),
    ))
}

/// One-hot class indicators (N × K) in class-index order; [`pls_fit`]
/// centers them.
pub fn class_indicators(labels: &[usize]) -> DMatrix<f64> {
    let k = labels.iter().max().map_or(1, |m| m + 1);
    let mut y = DMatrix::zeros(labels.len(), k);
    for (r, &l) in labels.iter().enumerate() {
        y[(r, l)] = 1.0;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn single_factor_recovers_column() {
        let x = random(40, 5, 1);
        let y: DVector<f64> = x.column(1).into_owned();
        let m = pls_fit_single(&x, &y, 1).unwrap();
        let w = m.weights.column(0);
        // w ∝ Xcᵀ x1, dominated by the column itself
        assert!(w[1].abs() > 0.9, "{w}");
        let y_hat = m.fitted();
        let direct = m.predict(&x).unwrap();
        assert!((&direct - &y_hat).norm() < 1e-9);
    }

    #[test]
    fn y_equal_to_only_column_is_exact() {
        let x = random(30, 1, 2);
        let y: DVector<f64> = x.column(0).into_owned();
        let m = pls_fit_single(&x, &y, 1).unwrap();
        assert!((m.weights[(0, 0)].abs() - 1.0).abs() < 1e-15);
        let err = (m.fitted().column(0) - &y).amax();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = random(10, 4, 3);
        let y = DVector::from_element(10, 1.0);
        assert_eq!(pls_fit_single(&x, &y, 1).unwrap_err(), ImportanceError::ZeroVarianceResponse);
        let y = x.column(0).into_owned();
        assert_eq!(
            pls_fit_single(&x, &y, 5).unwrap_err(),
            ImportanceError::TooManyComponents { requested: 5, max: 4 }
        );
        let mut bad = x.clone();
        bad[(0, 0)] = f64::NAN;
        assert_eq!(pls_fit_single(&bad, &y, 1).unwrap_err(), ImportanceError::NonFinite);
    }

    #[test]
    fn weights_unit_and_scores_orthogonal() {
        for seed in 0..10 {
            let x = random(50, 8, 100 + seed);
            let y = random(50, 1, 200 + seed);
            let m = pls_fit(&x, &y, 5).unwrap();
            for k in 0..m.n_components() {
                assert!((m.weights.column(k).norm() - 1.0).abs() < 1e-12);
                for j in 0..k {
                    let dot = m.scores.column(j).dot(&m.scores.column(k)).abs();
                    let bound = 1e-8 * m.scores.column(j).norm() * m.scores.column(k).norm();
                    assert!(dot <= bound, "seed {seed}: t{j}·t{k} = {dot}");
                }
            }
        }
    }

    #[test]
    fn vip_zero_for_constant_column() {
        let mut x = random(30, 4, 5);
        x.column_mut(2).fill(3.0);
        let y = x.column(0).into_owned() + x.column(1).into_owned();
        let m = pls_fit_single(&x, &y, 2).unwrap();
        let vip = vip_scores(&m).unwrap();
        assert_eq!(vip[2], 0.0);
        assert!(((vip.norm_squared() - 4.0) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn multiclass_response() {
        let x = random(60, 6, 9);
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let y = class_indicators(&labels);
        let m = pls_fit(&x, &y, 3).unwrap();
        let vip = vip_scores(&m).unwrap();
        assert!(((vip.norm_squared() - 6.0) / 6.0).abs() < 1e-9);
    }

    #[test]
    fn stops_early_on_rank_one_data() {
        let x = DMatrix::from_fn(20, 3, |r, c| if r % 2 == 0 { 1.0 } else { -1.0 } * (c + 1) as f64);
        let y = DVector::from_fn(20, |r, _| if r % 2 == 0 { 1.0 } else { -1.0 });
        let m = pls_fit_single(&x, &y, 2).unwrap();
        assert_eq!(m.n_components(), 1);
    }
}
