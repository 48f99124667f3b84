use rayon::prelude::*;
use serde::Serialize;

use super::{raw_traces, select_entries, Emitter, ExperimentConfig};
use crate::audio::DatasetManifest;
use crate::error::{Error, Result};
use crate::util::fmt_f64;

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Pairwise-distance structure of a labeled set of equal-length vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceReport {
    pub digits: Vec<u8>,
    /// Mean distance between clips of digit `i` and digit `j`; the diagonal
    /// holds the intraclass mean (`None` when a digit has a single clip).
    pub inter_matrix: Vec<Vec<Option<f64>>>,
    pub intra_mean: Vec<Option<f64>>,
    pub intra_std: Vec<Option<f64>>,
    pub inter_mean: Vec<f64>,
    pub inter_std: Vec<f64>,
    pub n_clips: usize,
}

#[derive(Clone, Copy, Default)]
struct Acc {
    n: usize,
    sum: f64,
    sumsq: f64,
}

impl Acc {
    fn add(&mut self, d: f64) {
        self.n += 1;
        self.sum += d;
        self.sumsq += d * d;
    }

    fn merge(&mut self, o: &Acc) {
        self.n += o.n;
        self.sum += o.sum;
        self.sumsq += o.sumsq;
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }

    /// Population standard deviation.
    fn std(&self) -> Option<f64> {
        self.mean()
            .map(|m| (self.sumsq / self.n as f64 - m * m).max(0.0).sqrt())
    }
}

impl DistanceReport {
    /// All-pairs distances between `vectors`, grouped by `labels`.
    pub fn compute(vectors: &[Vec<f64>], labels: &[u8]) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} vectors but {} labels",
                vectors.len(),
                labels.len()
            )));
        }
        let mut digits = labels.to_vec();
        digits.sort_unstable();
        digits.dedup();
        let c = digits.len();
        let cls: Vec<usize> = labels
            .iter()
            .map(|l| digits.binary_search(l).unwrap())
            .collect();
        // one accumulator table per first index, merged in order
        let partial: Vec<Result<Vec<Acc>>> = (0..vectors.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![Acc::default(); c * c];
                for j in i + 1..vectors.len() {
                    let d = euclidean_distance(&vectors[i], &vectors[j])?;
                    let (a, b) = (cls[i].min(cls[j]), cls[i].max(cls[j]));
                    acc[a * c + b].add(d);
                }
                Ok(acc)
            })
            .collect();
        let mut pair = vec![Acc::default(); c * c];
        for p in partial {
            for (t, s) in pair.iter_mut().zip(&p?) {
                t.merge(s);
            }
        }
        let at = |a: usize, b: usize| pair[a.min(b) * c + a.max(b)];
        let inter_matrix = (0..c)
            .map(|a| (0..c).map(|b| at(a, b).mean()).collect())
            .collect();
        let mut inter_mean = Vec::with_capacity(c);
        let mut inter_std = Vec::with_capacity(c);
        for a in 0..c {
            let mut acc = Acc::default();
            for b in (0..c).filter(|&b| b != a) {
                acc.merge(&at(a, b));
            }
            inter_mean.push(acc.mean().unwrap_or(0.0));
            inter_std.push(acc.std().unwrap_or(0.0));
        }
        Ok(Self {
            intra_mean: (0..c).map(|a| at(a, a).mean()).collect(),
            intra_std: (0..c).map(|a| at(a, a).std()).collect(),
            digits,
            inter_matrix,
            inter_mean,
            inter_std,
            n_clips: vectors.len(),
        })
    }

    pub fn matrix_csv(&self) -> String {
        let mut out = String::from("digit");
        for d in &self.digits {
            out.push_str(&format!(",{d}"));
        }
        out.push('\n');
        for (d, row) in self.digits.iter().zip(&self.inter_matrix) {
            out.push_str(&d.to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.map(fmt_f64).unwrap_or_default());
            }
            out.push('\n');
        }
        out
    }

    /// Per-digit band summary; empty intra cells mark an undefined class.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("digit,intra_mean,intra_std,inter_mean,inter_std\n");
        for (i, d) in self.digits.iter().enumerate() {
            out.push_str(&format!(
                "{d},{},{},{},{}\n",
                self.intra_mean[i].map(fmt_f64).unwrap_or_default(),
                self.intra_std[i].map(fmt_f64).unwrap_or_default(),
                fmt_f64(self.inter_mean[i]),
                fmt_f64(self.inter_std[i]),
            ));
        }
        out
    }
}

/// Distances between length-standardized raw clips (unit drive).
pub fn distance_analysis(
    manifest: &DatasetManifest,
    config: &ExperimentConfig,
    out: &mut Emitter,
) -> Result<DistanceReport> {
    let s = &config.distance;
    let entries = select_entries(manifest, s.speakers.as_deref(), s.trials_per_digit)?;
    let traces = raw_traces(&entries, config.reservoir.t)?;
    let labels: Vec<u8> = entries.iter().map(|e| e.digit).collect();
    let report = DistanceReport::compute(&traces, &labels)?;
    out.write("fig2_matrix.csv", &report.matrix_csv())?;
    out.write("fig2_summary.csv", &report.summary_csv())?;
    Ok(report)
}
