//! One-vs-rest linear SVM by primal subgradient descent on the hinge loss.

use ndarray::{s, Array1, Array2, Axis};

use super::{finish, prepare, ClassifierKind, ClassifierModel, ClassifierParams, FeatureMatrix};
use crate::error::Result;

/// Epochs over which the best objective must improve by more than the
/// tolerance for training to continue.
const PATIENCE: usize = 100;

/// `lambda/2 |w|^2 + mean hinge` for one binary problem with `+1/-1`
/// targets, where `x` already carries the constant bias column. Returns
/// `(objective, mean hinge)`.
pub fn hinge_objective(w: &Array1<f64>, x: &Array2<f64>, y: &[f64], lambda: f64) -> (f64, f64) {
    let margins = x.dot(w);
    let hinge = margins
        .iter()
        .zip(y)
        .map(|(m, t)| (1.0 - t * m).max(0.0))
        .sum::<f64>()
        / y.len() as f64;
    (0.5 * lambda * w.dot(w) + hinge, hinge)
}

/// Each class is separated from the rest by minimizing
/// `lambda/2 |w|^2 + mean_i max(0, 1 - y_i w.x_i)` with `lambda = 1/(C n)`,
/// which has the same minimizer as `1/2 |w|^2 + C sum_i hinge_i`. The bias
/// rides along as a constant feature. Steps are `1/(lambda t)` with a
/// projection onto the ball of radius `1/sqrt(lambda)`; the best iterate
/// seen is kept.
pub fn train_svm(train: &FeatureMatrix, params: &ClassifierParams) -> Result<ClassifierModel> {
    let p = prepare(train)?;
    let (n, d) = p.x.dim();
    let c = p.classes.len();
    let mut xa = Array2::<f64>::ones((n, d + 1));
    xa.slice_mut(s![.., ..d]).assign(&p.x);
    let lambda = 1.0 / (params.c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    // targets, one row per class
    let y: Array2<f64> =
        Array2::from_shape_fn((c, n), |(k, i)| if p.y[i] == k { 1.0 } else { -1.0 });

    let mut w = Array2::<f64>::zeros((c, d + 1));
    let mut best = w.clone();
    let mut best_obj = vec![f64::INFINITY; c];
    let mut history: Vec<f64> = Vec::new();
    let mut epochs = 0;
    for t in 1..=params.svm_epochs {
        epochs = t;
        let margins = xa.dot(&w.t()) * y.t();
        let total: f64 = (0..c)
            .map(|k| {
                let wk = w.row(k);
                let hinge = margins
                    .column(k)
                    .iter()
                    .map(|m| (1.0 - m).max(0.0))
                    .sum::<f64>()
                    / n as f64;
                let obj = 0.5 * lambda * wk.dot(&wk) + hinge;
                if obj < best_obj[k] {
                    best_obj[k] = obj;
                    best.row_mut(k).assign(&wk);
                }
                best_obj[k]
            })
            .sum();
        history.push(total);
        if t > PATIENCE {
            let old = history[t - 1 - PATIENCE];
            if old - total <= params.svm_tol * total.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        // subgradient of the mean hinge: -(1/n) sum over violators of y_i x_i
        let active = Array2::from_shape_fn((c, n), |(k, i)| {
            if margins[[i, k]] < 1.0 {
                y[[k, i]]
            } else {
                0.0
            }
        });
        let g_hinge = active.dot(&xa) / n as f64;
        let eta = 1.0 / (lambda * t as f64);
        w = &w * (1.0 - eta * lambda) + &(g_hinge * eta);
        for mut row in w.axis_iter_mut(Axis(0)) {
            let norm = row.dot(&row).sqrt();
            if norm > radius {
                row *= radius / norm;
            }
        }
    }
    let weights = best.slice(s![.., ..d]).to_owned();
    let biases = best.column(d).to_owned();
    Ok(finish(ClassifierKind::Svm, p, weights, biases, epochs))
}
