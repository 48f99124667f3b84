//! Feature extraction by subsampling, stratified splitting, three linear
//! classifiers and their evaluation.

mod lda;
mod logistic;
mod metrics;
mod svm;

use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::util;

pub use lda::train_lda;
pub use logistic::{loss_and_gradient, train_logistic};
pub use metrics::{precision_recall, EvalReport};
pub use svm::{hinge_objective, train_svm};

/// Subset sizes swept by the benchmark: 1, 2, 4, ..., 1024.
pub const SUBSET_SIZES: [usize; 11] = [1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Raw,
    Nanowire,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Raw => "raw",
            Source::Nanowire => "nanowire",
        }
    }
}

/// Indices `floor(i * n / k)` for `i` in `0..k`.
pub fn subsample_indices(n: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "subset size {k} must be in 1..={n}"
        )));
    }
    Ok((0..k)
        .map(|i| ((i as u128 * n as u128) / k as u128) as usize)
        .collect())
}

/// `k` evenly spaced samples of `trace`, no averaging.
pub fn subsample(trace: &[f64], k: usize) -> Result<Vec<f64>> {
    Ok(subsample_indices(trace.len(), k)?
        .into_iter()
        .map(|i| trace[i])
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub subset_size: usize,
    pub source: Source,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<u8>, source: Source) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let k = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != k) {
            return Err(Error::Shape(format!(
                "row {bad} has {} features, expected {k}",
                rows[bad].len()
            )));
        }
        Ok(Self {
            rows,
            labels,
            subset_size: k,
            source,
        })
    }

    /// Subsample every trace to `k` features.
    pub fn from_traces<T: AsRef<[f64]>>(
        traces: &[T],
        labels: &[u8],
        k: usize,
        source: Source,
    ) -> Result<Self> {
        let rows = traces
            .iter()
            .map(|t| subsample(t.as_ref(), k))
            .collect::<Result<_>>()?;
        Self::new(rows, labels.to_vec(), source)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.subset_size
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            subset_size: self.subset_size,
            source: self.source,
        }
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<u8> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    fn check_finite(&self) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            if let Some(j) = r.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite feature at row {i}, column {j}"
                )));
            }
        }
        Ok(())
    }
}

/// Stratified split indices `(train, test)`, each sorted ascending. Per class
/// `round(test_fraction * count)` samples go to test, at least one and at
/// most `count - 1`.
pub fn split_indices(
    labels: &[u8],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} not in [0, 1)"
        )));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for &c in &classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "class {c} has {} sample(s); a split needs at least 2",
                members.len()
            )));
        }
        let n_test =
            ((test_fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        members.shuffle(&mut util::rng(util::derive_seed(
            seed,
            "split",
            u64::from(c),
        )));
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(
    features: &FeatureMatrix,
    test_fraction: f64,
    seed: u64,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let (train, test) = split_indices(&features.labels, test_fraction, seed)?;
    Ok((features.select(&train), features.select(&test)))
}

/// Per-feature affine map fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Population mean and standard deviation; constant features get scale 1.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                // relative floor so round-off in a constant column is not blown up
                if sd.is_finite() && sd > 1e-12 * m.abs().max(f64::MIN_POSITIVE) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn matrix(&self, rows: &[Vec<f64>]) -> Array2<f64> {
        let d = self.mean.len();
        let mut out = Array2::zeros((rows.len(), d));
        for (i, r) in rows.iter().enumerate() {
            for j in 0..d {
                out[[i, j]] = (r[j] - self.mean[j]) / self.scale[j];
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Lr,
    Lda,
    Svm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] =
        [ClassifierKind::Lr, ClassifierKind::Lda, ClassifierKind::Svm];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Lr => "lr",
            ClassifierKind::Lda => "lda",
            ClassifierKind::Svm => "svm",
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" | "logistic" => Ok(Self::Lr),
            "lda" => Ok(Self::Lda),
            "svm" => Ok(Self::Svm),
            other => Err(Error::InvalidArgument(format!(
                "unknown classifier `{other}` (lr, lda, svm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierParams {
    /// L2 penalty for logistic regression.
    pub lambda: f64,
    pub max_iter: usize,
    /// Gradient max-norm at which logistic regression stops.
    pub grad_tol: f64,
    /// Hinge-loss weight for the SVM.
    pub c: f64,
    pub svm_epochs: usize,
    /// Relative objective change at which the SVM stops.
    pub svm_tol: f64,
    /// LDA covariance shrinkage toward its diagonal.
    pub shrinkage: f64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            max_iter: 10_000,
            grad_tol: 1e-6,
            c: 1.0,
            svm_epochs: 10_000,
            svm_tol: 1e-6,
            shrinkage: 0.1,
        }
    }
}

impl ClassifierParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda >= 0.0
            && self.lambda.is_finite()
            && self.max_iter >= 1
            && self.grad_tol >= 0.0
            && self.c > 0.0
            && self.c.is_finite()
            && self.svm_epochs >= 1
            && self.svm_tol >= 0.0
            && (0.0..=1.0).contains(&self.shrinkage);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid classifier parameters {self:?}"
            )))
        }
    }
}

/// Linear model over standardized features: `score_c = w_c . z + b_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub kind: ClassifierKind,
    pub classes: Vec<u8>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub standardization: Standardization,
    /// Optimizer iterations (epochs for the SVM, 0 for LDA).
    #[serde(default)]
    pub iterations: usize,
    /// Wall-clock training time, seconds.
    #[serde(default)]
    pub train_time_s: f64,
}

impl ClassifierModel {
    pub fn n_features(&self) -> usize {
        self.standardization.mean.len()
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features() {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.n_features(),
                x.len()
            )));
        }
        let z = self.standardization.apply(x);
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + b)
            .collect())
    }

    /// Highest-scoring class; ties go to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        let s = self.scores(x)?;
        Ok(self.classes[argmax(&s)])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).at(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(serde_json::from_str(
            &std::fs::read_to_string(path).at(path)?,
        )?)
    }
}

/// First index of the maximum.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate().skip(1) {
        if s > v[best] {
            best = i;
        }
    }
    best
}

/// Standardized design matrix and class-index targets shared by the trainers.
struct Prepared {
    classes: Vec<u8>,
    standardization: Standardization,
    x: Array2<f64>,
    y: Vec<usize>,
}

fn prepare(train: &FeatureMatrix) -> Result<Prepared> {
    if train.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    train.check_finite()?;
    let classes = train.classes();
    if classes.len() < 2 {
        return Err(Error::DegenerateLabels(format!(
            "training set has a single class ({})",
            classes[0]
        )));
    }
    let standardization = Standardization::fit(&train.rows);
    let x = standardization.matrix(&train.rows);
    let y = train
        .labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label is in class list"))
        .collect();
    Ok(Prepared {
        classes,
        standardization,
        x,
        y,
    })
}

fn finish(
    kind: ClassifierKind,
    p: Prepared,
    w: Array2<f64>,
    b: Array1<f64>,
    iterations: usize,
) -> ClassifierModel {
    ClassifierModel {
        kind,
        classes: p.classes,
        weights: w.outer_iter().map(|r| r.to_vec()).collect(),
        biases: b.to_vec(),
        standardization: p.standardization,
        iterations,
        train_time_s: 0.0,
    }
}

/// Train the requested classifier, recording wall-clock time.
pub fn train(
    kind: ClassifierKind,
    data: &FeatureMatrix,
    params: &ClassifierParams,
) -> Result<ClassifierModel> {
    params.validate()?;
    let start = Instant::now();
    let mut model = match kind {
        ClassifierKind::Lr => train_logistic(data, params)?,
        ClassifierKind::Lda => train_lda(data, params)?,
        ClassifierKind::Svm => train_svm(data, params)?,
    };
    model.train_time_s = start.elapsed().as_secs_f64();
    Ok(model)
}

pub fn evaluate(model: &ClassifierModel, test: &FeatureMatrix) -> Result<EvalReport> {
    if !test.is_empty() && test.n_features() != model.n_features() {
        return Err(Error::Shape(format!(
            "model expects {} features, test set has {}",
            model.n_features(),
            test.n_features()
        )));
    }
    let predicted = test
        .rows
        .iter()
        .map(|r| model.predict(r))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_predictions(
        &model.classes,
        &test.labels,
        &predicted,
        model.train_time_s,
        model.n_features(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_index_rule() {
        assert_eq!(subsample_indices(8, 4).unwrap(), vec![0, 2, 4, 6]);
        assert_eq!(subsample_indices(10, 3).unwrap(), vec![0, 3, 6]);
        let x: Vec<f64> = (0..16).map(f64::from).collect();
        assert_eq!(subsample(&x, 16).unwrap(), x);
        assert_eq!(subsample(&x, 1).unwrap(), vec![0.0]);
        assert!(subsample(&x, 0).is_err());
        assert!(subsample(&x, 17).is_err());
    }

    #[test]
    fn stratified_split_counts() {
        let labels: Vec<u8> = (0..10u8).flat_map(|c| std::iter::repeat_n(c, 40)).collect();
        let (train, test) = split_indices(&labels, 0.1, 9).unwrap();
        assert_eq!(test.len(), 40);
        assert_eq!(train.len(), 360);
        for c in 0..10u8 {
            assert_eq!(test.iter().filter(|&&i| labels[i] == c).count(), 4);
        }
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..400).collect::<Vec<_>>());
        assert_eq!(split_indices(&labels, 0.1, 9).unwrap(), (train, test));

        let (tr, te) = split_indices(&[3, 3], 0.1, 0).unwrap();
        assert_eq!((tr.len(), te.len()), (1, 1));
        assert!(matches!(
            split_indices(&[3, 3, 4], 0.1, 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn standardization_constant_column() {
        let s = Standardization::fit(&[vec![1.0, 5.0], vec![3.0, 5.0]]);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        assert_eq!(s.apply(&[3.0, 5.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn argmax_tie_goes_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn single_class_is_degenerate() {
        let f = FeatureMatrix::new(vec![vec![0.0], vec![1.0]], vec![2, 2], Source::Raw).unwrap();
        for kind in ClassifierKind::ALL {
            assert!(matches!(
                train(kind, &f, &ClassifierParams::default()),
                Err(Error::DegenerateLabels(_))
            ));
        }
        let bad =
            FeatureMatrix::new(vec![vec![f64::NAN], vec![1.0]], vec![0, 1], Source::Raw).unwrap();
        assert!(matches!(
            train(ClassifierKind::Lr, &bad, &ClassifierParams::default()),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn model_json_round_trip_and_shape_check() {
        let f = FeatureMatrix::new(
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![5.0, 5.0],
                vec![5.0, 6.0],
            ],
            vec![0, 0, 1, 1],
            Source::Raw,
        )
        .unwrap();
        let m = train(ClassifierKind::Lr, &f, &ClassifierParams::default()).unwrap();
        let back: ClassifierModel = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(matches!(m.predict(&[1.0]), Err(Error::Shape(_))));
        let wrong = FeatureMatrix::new(vec![vec![1.0]], vec![0], Source::Raw).unwrap();
        assert!(matches!(evaluate(&m, &wrong), Err(Error::Shape(_))));
    }
}
