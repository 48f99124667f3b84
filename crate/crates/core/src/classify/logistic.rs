//! Multinomial logistic regression by full-batch gradient descent.

use ndarray::{Array1, Array2, Axis};

use super::{finish, prepare, ClassifierKind, ClassifierModel, ClassifierParams, FeatureMatrix};
use crate::error::{Error, Result};

/// Mean cross-entropy plus `lambda/2 |W|^2` (bias unpenalized) and its
/// gradient with respect to `W` (classes x features) and `b`.
pub fn loss_and_gradient(
    w: &Array2<f64>,
    b: &Array1<f64>,
    x: &Array2<f64>,
    y: &[usize],
    lambda: f64,
) -> (f64, Array2<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    let mut p = x.dot(&w.t()) + b;
    let mut loss = 0.0;
    for (mut row, &yi) in p.outer_iter_mut().zip(y) {
        let m = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        loss += z.ln() - (row[yi].ln());
        row /= z;
        row[yi] -= 1.0;
    }
    loss = loss / n + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    let gw = p.t().dot(x) / n + &(w * lambda);
    let gb = p.sum_axis(Axis(0)) / n;
    (loss, gw, gb)
}

/// Largest eigenvalue of `[X 1]^T [X 1] / n` by power iteration.
fn gram_norm(x: &Array2<f64>) -> f64 {
    let (n, d) = x.dim();
    let mut v = Array1::from_elem(d + 1, 1.0 / ((d + 1) as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..100 {
        let xv = x.dot(&v.slice(ndarray::s![..d])) + v[d];
        let mut next = Array1::zeros(d + 1);
        next.slice_mut(ndarray::s![..d]).assign(&x.t().dot(&xv));
        next[d] = xv.sum();
        next /= n as f64;
        let norm = next.dot(&next).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let converged = (norm - lambda).abs() <= 1e-10 * norm;
        lambda = norm;
        v = next / norm;
        if converged {
            break;
        }
    }
    lambda
}

/// Nesterov-accelerated gradient descent from zero weights with step
/// `1 / L`, `L = |[X 1]|^2 / (2n) + lambda`. Stops when the gradient
/// max-norm drops to `grad_tol` or after `max_iter` iterations.
pub fn train_logistic(train: &FeatureMatrix, params: &ClassifierParams) -> Result<ClassifierModel> {
    let p = prepare(train)?;
    let (c, d) = (p.classes.len(), p.x.ncols());
    // 2% headroom over the power-iteration estimate
    let lipschitz = 0.5 * gram_norm(&p.x) * 1.02 + params.lambda;
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::Numerical(format!(
            "degenerate design matrix (L = {lipschitz})"
        )));
    }
    let step = 1.0 / lipschitz;
    let mut w = Array2::<f64>::zeros((c, d));
    let mut b = Array1::<f64>::zeros(c);
    let (mut w_prev, mut b_prev) = (w.clone(), b.clone());
    let mut t = 1.0f64;
    let mut iterations = 0;
    for it in 0..params.max_iter {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / t_next;
        let wy = &w + &((&w - &w_prev) * mom);
        let by = &b + &((&b - &b_prev) * mom);
        let (loss, gw, gb) = loss_and_gradient(&wy, &by, &p.x, &p.y, params.lambda);
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "logistic loss became non-finite at iteration {it}"
            )));
        }
        iterations = it + 1;
        let gmax = gw
            .iter()
            .chain(gb.iter())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        if gmax <= params.grad_tol {
            w = wy;
            b = by;
            break;
        }
        w_prev = std::mem::replace(&mut w, wy - gw * step);
        b_prev = std::mem::replace(&mut b, by - gb * step);
        t = t_next;
    }
    Ok(finish(ClassifierKind::Lr, p, w, b, iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{evaluate, Source};

    fn toy() -> FeatureMatrix {
        FeatureMatrix::new(
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![5.0, 5.0],
                vec![5.0, 6.0],
            ],
            vec![0, 0, 1, 1],
            Source::Raw,
        )
        .unwrap()
    }

    #[test]
    fn separable_toy_is_fit() {
        let m = train_logistic(&toy(), &ClassifierParams::default()).unwrap();
        assert_eq!(evaluate(&m, &toy()).unwrap().accuracy, 1.0);
    }

    #[test]
    fn duplicate_columns_do_not_change_predictions() {
        let f = FeatureMatrix::new(
            vec![
                vec![0.0, 1.0],
                vec![1.0, 0.5],
                vec![2.0, 2.0],
                vec![3.0, 1.0],
                vec![0.5, 3.0],
                vec![2.5, 0.0],
            ],
            vec![0, 0, 1, 1, 2, 2],
            Source::Raw,
        )
        .unwrap();
        let dup = FeatureMatrix::new(
            f.rows.iter().map(|r| vec![r[0], r[0], r[1]]).collect(),
            f.labels.clone(),
            Source::Raw,
        )
        .unwrap();
        let p = ClassifierParams::default();
        let a = train_logistic(&f, &p).unwrap();
        let b = train_logistic(&dup, &p).unwrap();
        for x in [[0.1, 0.2], [1.5, 1.5], [3.0, 0.1], [0.2, 2.9], [2.0, -1.0]] {
            assert_eq!(
                a.predict(&x).unwrap(),
                b.predict(&[x[0], x[0], x[1]]).unwrap()
            );
        }
    }

    #[test]
    fn label_permutation_is_equivariant() {
        let p = ClassifierParams::default();
        let f = FeatureMatrix::new(
            vec![
                vec![0.0, 1.0],
                vec![1.0, 0.5],
                vec![2.0, 2.0],
                vec![3.0, 1.0],
                vec![0.5, 3.0],
                vec![2.5, 0.0],
            ],
            vec![0, 0, 1, 1, 2, 2],
            Source::Raw,
        )
        .unwrap();
        let perm = [2u8, 0, 1];
        let g = FeatureMatrix::new(
            f.rows.clone(),
            f.labels.iter().map(|&l| perm[l as usize]).collect(),
            Source::Raw,
        )
        .unwrap();
        let a = train_logistic(&f, &p).unwrap();
        let b = train_logistic(&g, &p).unwrap();
        for x in [[0.1, 0.2], [1.5, 1.5], [3.0, 0.1], [0.2, 2.9]] {
            assert_eq!(
                perm[a.predict(&x).unwrap() as usize],
                b.predict(&x).unwrap()
            );
        }
    }
}
