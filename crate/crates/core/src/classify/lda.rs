//! Linear discriminant analysis with diagonal shrinkage.

use ndarray::{Array1, Array2};

use super::{finish, prepare, ClassifierKind, ClassifierModel, ClassifierParams, FeatureMatrix};
use crate::error::{Error, Result};

/// In-place lower Cholesky factor of a symmetric positive definite matrix.
fn cholesky(a: &mut Array2<f64>) -> Result<()> {
    let n = a.nrows();
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= a[[j, k]] * a[[j, k]];
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::Numerical(format!(
                "pooled covariance not positive definite (pivot {j}: {d:e})"
            )));
        }
        let d = d.sqrt();
        a[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = s / d;
        }
    }
    Ok(())
}

fn cholesky_solve(l: &Array2<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * b[k];
        }
        b[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[[k, i]] * b[k];
        }
        b[i] = s / l[[i, i]];
    }
}

/// Class means and pooled within-class covariance `S / (n - C)`, shrunk to
/// `(1 - gamma) S + gamma diag(S)`. A ridge of `1e-9` times the mean
/// diagonal (or `1e-9` outright if that is zero) keeps rank-deficient
/// problems solvable.
pub fn train_lda(train: &FeatureMatrix, params: &ClassifierParams) -> Result<ClassifierModel> {
    let p = prepare(train)?;
    let (n, d) = p.x.dim();
    let c = p.classes.len();
    let mut means = Array2::<f64>::zeros((c, d));
    let mut counts = vec![0usize; c];
    for (row, &yi) in p.x.outer_iter().zip(&p.y) {
        let mut m = means.row_mut(yi);
        m += &row;
        counts[yi] += 1;
    }
    for (mut m, &k) in means.outer_iter_mut().zip(&counts) {
        m /= k as f64;
    }
    let mut centered = p.x.clone();
    for (mut row, &yi) in centered.outer_iter_mut().zip(&p.y) {
        row -= &means.row(yi);
    }
    let dof = n.saturating_sub(c).max(1) as f64;
    let mut cov = centered.t().dot(&centered) / dof;
    let gamma = params.shrinkage;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                cov[[i, j]] *= 1.0 - gamma;
            }
        }
    }
    let mean_diag = cov.diag().sum() / d as f64;
    let ridge = if mean_diag > 0.0 {
        1e-9 * mean_diag
    } else {
        1e-9
    };
    for i in 0..d {
        cov[[i, i]] += ridge;
    }
    cholesky(&mut cov)?;
    let mut w = Array2::<f64>::zeros((c, d));
    let mut b = Array1::<f64>::zeros(c);
    for k in 0..c {
        let mu = means.row(k).to_vec();
        let mut a = mu.clone();
        cholesky_solve(&cov, &mut a);
        b[k] = -0.5 * mu.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>()
            + (counts[k] as f64 / n as f64).ln();
        w.row_mut(k).assign(&Array1::from(a));
    }
    Ok(finish(ClassifierKind::Lda, p, w, b, 0))
}
