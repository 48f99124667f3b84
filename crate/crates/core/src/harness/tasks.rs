use std::collections::HashSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use super::{select_entries, Corpus, Emitter, ExperimentConfig};
use crate::audio::DatasetManifest;
use crate::classify::{
    evaluate, split_indices, train, ClassifierKind, ClassifierParams, EvalReport, FeatureMatrix,
    Source,
};
use crate::error::{Error, Result};
use crate::reservoir::Reservoir;
use crate::util::{self, fmt_f64};

/// All `k`-element subsets of `items`, in lexicographic order.
pub fn combinations(items: &[u8], k: usize) -> Vec<Vec<u8>> {
    fn rec(items: &[u8], k: usize, start: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= items.len() {
        rec(items, k, 0, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

fn distinct(labels: &[u8]) -> Vec<u8> {
    let mut d = labels.to_vec();
    d.sort_unstable();
    d.dedup();
    d
}

/// Both feature sources of a corpus at one subset size.
struct Features {
    raw: FeatureMatrix,
    hybrid: FeatureMatrix,
}

impl Features {
    fn new(corpus: &Corpus, k: usize) -> Result<Self> {
        Ok(Self {
            raw: FeatureMatrix::from_traces(&corpus.raw, &corpus.labels, k, Source::Raw)?,
            hybrid: FeatureMatrix::from_traces(
                &corpus.hybrid,
                &corpus.labels,
                k,
                Source::Nanowire,
            )?,
        })
    }

    fn get(&self, source: Source) -> &FeatureMatrix {
        match source {
            Source::Raw => &self.raw,
            Source::Nanowire => &self.hybrid,
        }
    }
}

fn fit_eval(
    data: &FeatureMatrix,
    train_rows: &[usize],
    test_rows: &[usize],
    kind: ClassifierKind,
    params: &ClassifierParams,
) -> Result<EvalReport> {
    let model = train(kind, &data.select(train_rows), params)?;
    evaluate(&model, &data.select(test_rows))
}

/// Stratified split of the corpus rows `rows`, returned as corpus rows.
fn split_rows(
    corpus: &Corpus,
    rows: &[usize],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let labels: Vec<u8> = rows.iter().map(|&i| corpus.labels[i]).collect();
    let (tr, te) = split_indices(&labels, test_fraction, seed)?;
    Ok((
        tr.into_iter().map(|i| rows[i]).collect(),
        te.into_iter().map(|i| rows[i]).collect(),
    ))
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComboResult {
    pub classes: Vec<u8>,
    pub raw_acc: f64,
    pub hybrid_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedRow {
    pub class_count: usize,
    pub raw_mean_acc: f64,
    pub raw_max_acc: f64,
    pub hybrid_mean_acc: f64,
    pub hybrid_max_acc: f64,
    pub combinations: Vec<ComboResult>,
}

/// Seeded sample of up to `n` distinct `k`-class combinations.
pub fn sample_combinations(classes: &[u8], k: usize, n: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut all = combinations(classes, k);
    all.shuffle(&mut util::rng(seed));
    all.truncate(n);
    all
}

pub fn run_reduced_class(
    manifest: &DatasetManifest,
    config: &ExperimentConfig,
    out: &mut Emitter,
) -> Result<(usize, Vec<ReducedRow>)> {
    let s = &config.reduced_class;
    let entries = select_entries(manifest, s.speakers.as_deref(), s.trials_per_digit)?;
    let reservoir = Reservoir::new(config.reservoir)?;
    let corpus = Corpus::build(entries, &reservoir, None)?;
    let feats = Features::new(&corpus, config.subset_size)?;
    let digits = distinct(&corpus.labels);
    let (kind, params) = (config.classifier.kind, &config.classifier.params);
    let mut rows = Vec::new();
    for &count in &s.class_counts {
        if count > digits.len() {
            return Err(Error::InsufficientData(format!(
                "{count}-class task but only {} digits present",
                digits.len()
            )));
        }
        let combos = sample_combinations(
            &digits,
            count,
            s.combinations,
            util::derive_seed(config.master_seed, "combos", count as u64),
        );
        let results: Vec<Result<ComboResult>> = combos
            .par_iter()
            .enumerate()
            .map(|(i, combo)| {
                let member = corpus.rows_where(|e| combo.contains(&e.digit));
                let seed = util::derive_seed(
                    config.master_seed,
                    "reduced-split",
                    (count * 100_000 + i) as u64,
                );
                let (tr, te) = split_rows(&corpus, &member, config.test_fraction, seed)?;
                Ok(ComboResult {
                    classes: combo.clone(),
                    raw_acc: fit_eval(&feats.raw, &tr, &te, kind, params)?.accuracy,
                    hybrid_acc: fit_eval(&feats.hybrid, &tr, &te, kind, params)?.accuracy,
                })
            })
            .collect();
        let combinations = results.into_iter().collect::<Result<Vec<_>>>()?;
        let raw: Vec<f64> = combinations.iter().map(|c| c.raw_acc).collect();
        let hyb: Vec<f64> = combinations.iter().map(|c| c.hybrid_acc).collect();
        rows.push(ReducedRow {
            class_count: count,
            raw_mean_acc: mean(&raw),
            raw_max_acc: max(&raw),
            hybrid_mean_acc: mean(&hyb),
            hybrid_max_acc: max(&hyb),
            combinations,
        });
    }
    let mut table = String::from("class_count,combinations,raw_mean_accuracy,raw_max_accuracy,hybrid_mean_accuracy,hybrid_max_accuracy\n");
    let mut detail = String::from("class_count,classes,raw_accuracy,hybrid_accuracy\n");
    for r in &rows {
        table.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.class_count,
            r.combinations.len(),
            fmt_f64(r.raw_mean_acc),
            fmt_f64(r.raw_max_acc),
            fmt_f64(r.hybrid_mean_acc),
            fmt_f64(r.hybrid_max_acc)
        ));
        for c in &r.combinations {
            let names: Vec<String> = c.classes.iter().map(u8::to_string).collect();
            detail.push_str(&format!(
                "{},{},{},{}\n",
                r.class_count,
                names.join("-"),
                fmt_f64(c.raw_acc),
                fmt_f64(c.hybrid_acc)
            ));
        }
    }
    out.write("table1.csv", &table)?;
    out.write("table1_combinations.csv", &detail)?;
    Ok((corpus.len(), rows))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TenClassResult {
    pub dataset: String,
    pub classifier: ClassifierKind,
    pub n_train: usize,
    pub n_test: usize,
    pub raw: EvalReport,
    pub hybrid: EvalReport,
}

impl TenClassResult {
    pub fn accuracy_delta(&self) -> f64 {
        self.hybrid.accuracy - self.raw.accuracy
    }
}

/// Report JSON without the wall-clock field.
fn timeless(r: &EvalReport) -> Result<Value> {
    let mut v = serde_json::to_value(r)?;
    if let Some(o) = v.as_object_mut() {
        o.remove("train_time_s");
    }
    Ok(v)
}

pub(crate) fn ten_class_summary(results: &[TenClassResult]) -> Result<Value> {
    results
        .iter()
        .map(|r| {
            Ok(serde_json::json!({
                "dataset": r.dataset,
                "classifier": r.classifier,
                "n_train": r.n_train,
                "n_test": r.n_test,
                "accuracy_delta": r.accuracy_delta(),
                "raw": timeless(&r.raw)?,
                "hybrid": timeless(&r.hybrid)?,
            }))
        })
        .collect::<Result<Vec<_>>>()
        .map(Value::Array)
}

pub fn run_ten_class(
    manifest: &DatasetManifest,
    config: &ExperimentConfig,
    out: &mut Emitter,
) -> Result<(usize, Vec<TenClassResult>)> {
    let s = &config.ten_class;
    let mut speakers: Vec<String> = s.datasets.iter().flatten().cloned().collect();
    speakers.sort();
    speakers.dedup();
    let entries = select_entries(manifest, Some(&speakers), s.trials_per_digit)?;
    let reservoir = Reservoir::new(config.reservoir)?;
    let corpus = Corpus::build(entries, &reservoir, None)?;
    let feats = Features::new(&corpus, config.subset_size)?;
    let params = &config.classifier.params;
    let mut results = Vec::new();
    for (di, members) in s.datasets.iter().enumerate() {
        let name = members.join("+");
        let rows = corpus.rows_where(|e| members.contains(&e.speaker));
        let (tr, te) = split_rows(
            &corpus,
            &rows,
            config.test_fraction,
            util::derive_seed(config.master_seed, "ten-split", di as u64),
        )?;
        let jobs: Vec<(ClassifierKind, Source)> = s
            .classifiers
            .iter()
            .flat_map(|&k| [(k, Source::Raw), (k, Source::Nanowire)])
            .collect();
        let reports = jobs
            .par_iter()
            .map(|&(kind, src)| fit_eval(feats.get(src), &tr, &te, kind, params))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        for (i, &kind) in s.classifiers.iter().enumerate() {
            results.push(TenClassResult {
                dataset: name.clone(),
                classifier: kind,
                n_train: tr.len(),
                n_test: te.len(),
                raw: reports[2 * i].clone(),
                hybrid: reports[2 * i + 1].clone(),
            });
        }
    }
    let mut acc = String::from("dataset,classifier,raw_accuracy,hybrid_accuracy,delta\n");
    for r in &results {
        acc.push_str(&format!(
            "{},{},{},{},{}\n",
            r.dataset,
            r.classifier.as_str(),
            fmt_f64(r.raw.accuracy),
            fmt_f64(r.hybrid.accuracy),
            fmt_f64(r.accuracy_delta())
        ));
        let mut conf = String::from("source,");
        let mut pr = String::from("class,raw_precision,hybrid_precision,precision_delta,raw_recall,hybrid_recall,recall_delta\n");
        for (src, rep) in [("raw", &r.raw), ("nanowire", &r.hybrid)] {
            let csv = rep.confusion_csv();
            let mut lines = csv.lines();
            if src == "raw" {
                conf.push_str(lines.next().unwrap_or_default());
                conf.push('\n');
            } else {
                lines.next();
            }
            for l in lines {
                conf.push_str(&format!("{src},{l}\n"));
            }
        }
        for (i, c) in r.raw.classes.iter().enumerate() {
            pr.push_str(&format!(
                "{c},{},{},{},{},{},{}\n",
                fmt_f64(r.raw.precision[i]),
                fmt_f64(r.hybrid.precision[i]),
                fmt_f64(r.hybrid.precision[i] - r.raw.precision[i]),
                fmt_f64(r.raw.recall[i]),
                fmt_f64(r.hybrid.recall[i]),
                fmt_f64(r.hybrid.recall[i] - r.raw.recall[i]),
            ));
        }
        let stem = format!("{}_{}", r.dataset, r.classifier.as_str());
        out.write(&format!("fig4_confusion_{stem}.csv"), &conf)?;
        out.write(&format!("fig4_precision_recall_{stem}.csv"), &pr)?;
    }
    out.write("fig4_accuracy.csv", &acc)?;
    Ok((corpus.len(), results))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchPoint {
    pub k: usize,
    pub raw_acc: f64,
    pub hybrid_acc: f64,
    /// Median training time over the repetitions, seconds.
    pub raw_time_s: f64,
    pub hybrid_time_s: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Accuracy and median train time of one source at one subset size.
fn timed_fit(
    data: &FeatureMatrix,
    tr: &[usize],
    te: &[usize],
    kind: ClassifierKind,
    params: &ClassifierParams,
    reps: usize,
) -> Result<(f64, f64)> {
    let train_set = data.select(tr);
    let test_set = data.select(te);
    let mut times = Vec::with_capacity(reps);
    let mut report = None;
    for _ in 0..reps {
        let start = Instant::now();
        let model = train(kind, &train_set, params)?;
        times.push(start.elapsed().as_secs_f64());
        if report.is_none() {
            report = Some(evaluate(&model, &test_set)?);
        }
    }
    Ok((report.map_or(0.0, |r| r.accuracy), median(times)))
}

/// Accuracy and training time against subset size. Points run one after
/// another so the timings do not compete for cores.
pub fn run_subsample_bench(
    manifest: &DatasetManifest,
    config: &ExperimentConfig,
    out: &mut Emitter,
) -> Result<(usize, Vec<BenchPoint>)> {
    let s = &config.subsample_bench;
    let entries = select_entries(manifest, s.speakers.as_deref(), s.trials_per_digit)?;
    let reservoir = Reservoir::new(config.reservoir)?;
    let corpus = Corpus::build(entries, &reservoir, None)?;
    let all: Vec<usize> = (0..corpus.len()).collect();
    let (tr, te) = split_rows(
        &corpus,
        &all,
        config.test_fraction,
        util::derive_seed(config.master_seed, "bench-split", 0),
    )?;
    let (kind, params) = (config.classifier.kind, &config.classifier.params);
    let mut points = Vec::new();
    for &k in &s.subset_sizes {
        let feats = Features::new(&corpus, k)?;
        let (raw_acc, raw_time_s) = timed_fit(&feats.raw, &tr, &te, kind, params, s.repetitions)?;
        let (hybrid_acc, hybrid_time_s) =
            timed_fit(&feats.hybrid, &tr, &te, kind, params, s.repetitions)?;
        points.push(BenchPoint {
            k,
            raw_acc,
            hybrid_acc,
            raw_time_s,
            hybrid_time_s,
        });
    }
    let mut curve = String::from("k,raw_accuracy,hybrid_accuracy\n");
    let mut timing = String::from("k,raw_train_time_s,hybrid_train_time_s\n");
    for p in &points {
        curve.push_str(&format!(
            "{},{},{}\n",
            p.k,
            fmt_f64(p.raw_acc),
            fmt_f64(p.hybrid_acc)
        ));
        timing.push_str(&format!(
            "{},{},{}\n",
            p.k,
            fmt_f64(p.raw_time_s),
            fmt_f64(p.hybrid_time_s)
        ));
    }
    out.write("fig5_curve.csv", &curve)?;
    out.write("fig5_timing.csv", &timing)?;
    Ok((corpus.len(), points))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairResult {
    pub digits: (u8, u8),
    /// `(raw, hybrid)` accuracy per test group, in `SpeakerGenReport::groups` order.
    pub accuracy: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeakerGenReport {
    pub train_speaker: String,
    /// Test speakers, then `<train speaker>_self` when held-out trials are scored.
    pub groups: Vec<String>,
    pub cross_speaker: Vec<bool>,
    pub pairs: Vec<PairResult>,
    pub n_clips: usize,
}

impl SpeakerGenReport {
    /// Mean `(raw, hybrid)` accuracy of one group over all pairs.
    pub fn group_mean(&self, g: usize) -> (f64, f64) {
        let raw: Vec<f64> = self.pairs.iter().map(|p| p.accuracy[g].0).collect();
        let hyb: Vec<f64> = self.pairs.iter().map(|p| p.accuracy[g].1).collect();
        (mean(&raw), mean(&hyb))
    }

    /// Mean `(raw, hybrid)` accuracy over all cross-speaker groups and pairs.
    pub fn cross_speaker_mean(&self) -> (f64, f64) {
        let groups: Vec<usize> = (0..self.groups.len())
            .filter(|&g| self.cross_speaker[g])
            .collect();
        let means: Vec<(f64, f64)> = groups.iter().map(|&g| self.group_mean(g)).collect();
        (
            mean(&means.iter().map(|m| m.0).collect::<Vec<_>>()),
            mean(&means.iter().map(|m| m.1).collect::<Vec<_>>()),
        )
    }

    /// Mean `(raw, hybrid)` accuracy of the pairs containing `digit`.
    pub fn digit_mean(&self, g: usize, digit: u8) -> (f64, f64) {
        let sel: Vec<&PairResult> = self
            .pairs
            .iter()
            .filter(|p| p.digits.0 == digit || p.digits.1 == digit)
            .collect();
        let raw: Vec<f64> = sel.iter().map(|p| p.accuracy[g].0).collect();
        let hyb: Vec<f64> = sel.iter().map(|p| p.accuracy[g].1).collect();
        (mean(&raw), mean(&hyb))
    }

    pub fn summary(&self) -> Value {
        let (raw, hybrid) = self.cross_speaker_mean();
        serde_json::json!({
            "train_speaker": self.train_speaker,
            "pairs": self.pairs.len(),
            "cross_speaker_raw_mean": raw,
            "cross_speaker_hybrid_mean": hybrid,
            "groups": (0..self.groups.len()).map(|g| {
                let (r, h) = self.group_mean(g);
                serde_json::json!({"group": self.groups[g], "cross_speaker": self.cross_speaker[g], "raw_mean": r, "hybrid_mean": h})
            }).collect::<Vec<_>>(),
        })
    }
}

pub fn run_speaker_generalization(
    manifest: &DatasetManifest,
    config: &ExperimentConfig,
    out: &mut Emitter,
) -> Result<SpeakerGenReport> {
    let s = &config.speaker_gen;
    let train_sp = std::slice::from_ref(&s.train_speaker);
    let train_entries = select_entries(manifest, Some(train_sp), Some(s.train_trials))?;
    let mut groups = Vec::new();
    let mut cross = Vec::new();
    let mut entries = train_entries.clone();
    let mut group_of = vec![None; entries.len()];
    for (g, sp) in s.test_speakers.iter().enumerate() {
        let e = select_entries(
            manifest,
            Some(std::slice::from_ref(sp)),
            Some(s.test_trials),
        )?;
        group_of.extend(std::iter::repeat_n(Some(g), e.len()));
        entries.extend(e);
        groups.push(sp.clone());
        cross.push(true);
    }
    if s.self_test {
        let all = select_entries(
            manifest,
            Some(train_sp),
            Some(s.train_trials + s.test_trials),
        )?;
        let used: HashSet<(u8, u32)> = train_entries.iter().map(|e| (e.digit, e.trial)).collect();
        let held: Vec<_> = all
            .into_iter()
            .filter(|e| !used.contains(&(e.digit, e.trial)))
            .collect();
        if !held.is_empty() {
            group_of.extend(std::iter::repeat_n(Some(groups.len()), held.len()));
            entries.extend(held);
            groups.push(format!("{}_self", s.train_speaker));
            cross.push(false);
        }
    }
    // test data must never overlap the training clips
    let train_keys: HashSet<(&str, u8, u32)> = train_entries
        .iter()
        .map(|e| (e.speaker.as_str(), e.digit, e.trial))
        .collect();
    for (e, g) in entries.iter().zip(&group_of) {
        if let Some(g) = *g {
            if train_keys.contains(&(e.speaker.as_str(), e.digit, e.trial))
                || (cross[g] && e.speaker == s.train_speaker)
            {
                return Err(Error::InvalidArgument(format!(
                    "test clip {} overlaps the training data",
                    e.clip_ref()
                )));
            }
        }
    }
    let reservoir = Reservoir::new(config.reservoir)?;
    let corpus = Corpus::build(entries, &reservoir, None)?;
    let feats = Features::new(&corpus, config.subset_size)?;
    let (kind, params) = (config.classifier.kind, &config.classifier.params);
    let digits = distinct(&corpus.labels[..train_entries.len()]);
    let pairs = combinations(&digits, 2);
    let results: Vec<Result<PairResult>> = pairs
        .par_iter()
        .map(|pair| {
            let in_pair = |i: usize| pair.contains(&corpus.labels[i]);
            let tr: Vec<usize> = (0..corpus.len())
                .filter(|&i| group_of[i].is_none() && in_pair(i))
                .collect();
            let models = [
                train(kind, &feats.raw.select(&tr), params)?,
                train(kind, &feats.hybrid.select(&tr), params)?,
            ];
            let accuracy = (0..groups.len())
                .map(|g| {
                    let te: Vec<usize> = (0..corpus.len())
                        .filter(|&i| group_of[i] == Some(g) && in_pair(i))
                        .collect();
                    Ok((
                        evaluate(&models[0], &feats.raw.select(&te))?.accuracy,
                        evaluate(&models[1], &feats.hybrid.select(&te))?.accuracy,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PairResult {
                digits: (pair[0], pair[1]),
                accuracy,
            })
        })
        .collect();
    let report = SpeakerGenReport {
        train_speaker: s.train_speaker.clone(),
        groups,
        cross_speaker: cross,
        pairs: results.into_iter().collect::<Result<_>>()?,
        n_clips: corpus.len(),
    };
    let mut summary = String::from("group,cross_speaker,raw_mean_accuracy,hybrid_mean_accuracy\n");
    for (g, name) in report.groups.iter().enumerate() {
        let mut per_pair = String::from("digit_a,digit_b,raw_accuracy,hybrid_accuracy\n");
        for p in &report.pairs {
            let (r, h) = p.accuracy[g];
            per_pair.push_str(&format!(
                "{},{},{},{}\n",
                p.digits.0,
                p.digits.1,
                fmt_f64(r),
                fmt_f64(h)
            ));
        }
        let mut per_digit = String::from("digit,raw_mean_accuracy,hybrid_mean_accuracy\n");
        for &d in &digits {
            let (r, h) = report.digit_mean(g, d);
            per_digit.push_str(&format!("{d},{},{}\n", fmt_f64(r), fmt_f64(h)));
        }
        out.write(&format!("fig6_{name}.csv"), &per_pair)?;
        out.write(&format!("fig6_{name}_digits.csv"), &per_digit)?;
        let (r, h) = report.group_mean(g);
        summary.push_str(&format!(
            "{name},{},{},{}\n",
            report.cross_speaker[g],
            fmt_f64(r),
            fmt_f64(h)
        ));
    }
    out.write("fig6_summary.csv", &summary)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combination_counts() {
        let d: Vec<u8> = (0..10).collect();
        assert_eq!(combinations(&d, 2).len(), 45);
        assert_eq!(combinations(&d, 3).len(), 120);
        assert_eq!(combinations(&d, 4).len(), 210);
        assert_eq!(combinations(&d, 5).len(), 252);
        assert_eq!(combinations(&d, 2)[0], vec![0, 1]);
        assert!(combinations(&d, 11).is_empty());
    }

    #[test]
    fn sampled_combinations_are_distinct_and_seeded() {
        let d: Vec<u8> = (0..10).collect();
        let a = sample_combinations(&d, 2, 33, 4);
        assert_eq!(a.len(), 33);
        assert_eq!(a, sample_combinations(&d, 2, 33, 4));
        let set: HashSet<_> = a.iter().collect();
        assert_eq!(set.len(), 33);
        assert_eq!(sample_combinations(&d, 2, 100, 4).len(), 45);
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
