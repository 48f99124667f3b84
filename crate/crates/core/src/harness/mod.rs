//! Experiment orchestration: configuration, data preparation, the task
//! runners and their CSV/JSON artifacts.

mod distance;
mod sweep;
mod tasks;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::audio::{
    build_manifest, standardize_trace, AudioClip, DatasetManifest, ManifestEntry, NamingPattern,
};
use crate::classify::{ClassifierKind, ClassifierParams, SUBSET_SIZES};
use crate::error::{Error, IoContext, Result};
use crate::reservoir::{read_pack, ClipRef, Reservoir, ReservoirConfig};
use crate::util::fmt_f64;

pub use distance::{distance_analysis, euclidean_distance, DistanceReport};
pub use sweep::{
    parameter_sweep, saturation_fraction, sweep_clip, SweepParam, SweepPoint, SweepReport,
};
pub use tasks::{
    combinations, run_reduced_class, run_speaker_generalization, run_subsample_bench,
    run_ten_class, sample_combinations, BenchPoint, ComboResult, PairResult, ReducedRow,
    SpeakerGenReport, TenClassResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Sweep,
    Distance,
    ReducedClass,
    TenClass,
    SubsampleBench,
    SpeakerGen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSettings {
    pub kind: ClassifierKind,
    pub params: ClassifierParams,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::Lr,
            params: ClassifierParams::default(),
        }
    }
}

/// Identifies one clip by speaker, digit and trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipSelector {
    pub speaker: String,
    pub digit: u8,
    pub trial: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub param: SweepParam,
    /// Empty means the default grid for `param`.
    pub grid: Vec<f64>,
    /// Defaults to george/0/0, falling back to the first manifest entry.
    pub probe: Option<ClipSelector>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            param: SweepParam::KP,
            grid: Vec::new(),
            probe: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceSettings {
    pub speakers: Option<Vec<String>>,
    pub trials_per_digit: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReducedSettings {
    pub class_counts: Vec<usize>,
    pub combinations: usize,
    pub speakers: Option<Vec<String>>,
    pub trials_per_digit: Option<u32>,
}

impl Default for ReducedSettings {
    fn default() -> Self {
        Self {
            class_counts: vec![2, 3, 4, 5],
            combinations: 33,
            speakers: None,
            trials_per_digit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TenClassSettings {
    /// Each dataset is the union of the listed speakers.
    pub datasets: Vec<Vec<String>>,
    pub classifiers: Vec<ClassifierKind>,
    pub trials_per_digit: Option<u32>,
}

impl Default for TenClassSettings {
    fn default() -> Self {
        Self {
            datasets: vec![
                vec!["jackson".into()],
                vec!["lucas".into()],
                vec!["jackson".into(), "lucas".into()],
            ],
            classifiers: ClassifierKind::ALL.to_vec(),
            trials_per_digit: Some(40),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub subset_sizes: Vec<usize>,
    /// Training repetitions per point; the median time is reported.
    pub repetitions: usize,
    pub speakers: Option<Vec<String>>,
    pub trials_per_digit: Option<u32>,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            subset_sizes: SUBSET_SIZES.to_vec(),
            repetitions: 5,
            speakers: None,
            trials_per_digit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeakerGenSettings {
    pub train_speaker: String,
    pub test_speakers: Vec<String>,
    pub train_trials: u32,
    pub test_trials: u32,
    /// Also score held-out trials of the training speaker.
    pub self_test: bool,
}

impl Default for SpeakerGenSettings {
    fn default() -> Self {
        Self {
            train_speaker: "jackson".into(),
            test_speakers: vec!["george".into(), "lucas".into()],
            train_trials: 40,
            test_trials: 10,
            self_test: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub reservoir: ReservoirConfig,
    pub classifier: ClassifierSettings,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Manifest JSON; takes precedence over `data_root`.
    pub manifest: Option<PathBuf>,
    pub data_root: Option<PathBuf>,
    pub naming_pattern: String,
    pub test_fraction: f64,
    pub subset_size: usize,
    pub sweep: SweepSettings,
    pub distance: DistanceSettings,
    pub reduced_class: ReducedSettings,
    pub ten_class: TenClassSettings,
    pub subsample_bench: BenchSettings,
    pub speaker_gen: SpeakerGenSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::TenClass,
            reservoir: ReservoirConfig::default(),
            classifier: ClassifierSettings::default(),
            master_seed: 0,
            output_dir: PathBuf::from("out"),
            manifest: None,
            data_root: None,
            naming_pattern: crate::audio::DEFAULT_PATTERN.into(),
            test_fraction: 0.1,
            subset_size: 32,
            sweep: SweepSettings::default(),
            distance: DistanceSettings::default(),
            reduced_class: ReducedSettings::default(),
            ten_class: TenClassSettings::default(),
            subsample_bench: BenchSettings::default(),
            speaker_gen: SpeakerGenSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).at(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.reservoir.validate()?;
        self.classifier.params.validate()?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction {} not in (0, 1)",
                self.test_fraction
            )));
        }
        check_subset(self.subset_size, self.reservoir.t)?;
        match self.task {
            Task::Sweep => {
                if self.sweep.grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::Config("sweep grid values must be positive".into()));
                }
            }
            Task::ReducedClass => {
                let r = &self.reduced_class;
                if r.class_counts.is_empty()
                    || r.class_counts.iter().any(|&c| !(2..=10).contains(&c))
                {
                    return Err(Error::Config(
                        "reduced_class.class_counts must lie in 2..=10".into(),
                    ));
                }
                if r.combinations == 0 {
                    return Err(Error::Config(
                        "reduced_class.combinations must be >= 1".into(),
                    ));
                }
            }
            Task::TenClass => {
                let t = &self.ten_class;
                if t.datasets.is_empty()
                    || t.datasets.iter().any(Vec::is_empty)
                    || t.classifiers.is_empty()
                {
                    return Err(Error::Config(
                        "ten_class needs non-empty datasets and classifiers".into(),
                    ));
                }
            }
            Task::SubsampleBench => {
                let b = &self.subsample_bench;
                if b.subset_sizes.is_empty() || b.repetitions == 0 {
                    return Err(Error::Config(
                        "subsample_bench needs subset sizes and repetitions >= 1".into(),
                    ));
                }
                for &k in &b.subset_sizes {
                    if !k.is_power_of_two() {
                        return Err(Error::Config(format!(
                            "subset size {k} is not a power of two"
                        )));
                    }
                    check_subset(k, self.reservoir.t)?;
                }
            }
            Task::SpeakerGen => {
                let s = &self.speaker_gen;
                if s.test_speakers.is_empty() || s.train_trials == 0 || s.test_trials == 0 {
                    return Err(Error::Config(
                        "speaker_gen needs test speakers and trial counts >= 1".into(),
                    ));
                }
                if s.test_speakers.contains(&s.train_speaker) {
                    return Err(Error::Config(format!(
                        "speaker `{}` cannot be both training and test speaker (use self_test)",
                        s.train_speaker
                    )));
                }
            }
            Task::Distance => {}
        }
        Ok(())
    }

    /// Dataset manifest named by `manifest` or scanned from `data_root`.
    pub fn load_manifest(&self) -> Result<DatasetManifest> {
        match (&self.manifest, &self.data_root) {
            (Some(m), _) => DatasetManifest::load(m),
            (None, Some(root)) => build_manifest(root, &NamingPattern::new(&self.naming_pattern)?),
            (None, None) => Err(Error::Config(
                "either `manifest` or `data_root` must be set".into(),
            )),
        }
    }
}

fn check_subset(k: usize, t: usize) -> Result<()> {
    if k == 0 || k > t {
        return Err(Error::Config(format!("subset size {k} must be in 1..={t}")));
    }
    Ok(())
}

/// Apply a `dotted.path=value` override to a JSON config document. The
/// value is parsed as JSON, falling back to a plain string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("`{}` is not an object", keys[..i].join("."))))?;
        if i + 1 == keys.len() {
            obj.insert((*key).to_string(), value);
            return Ok(());
        }
        cur = obj.entry(*key).or_insert_with(|| json!({}));
    }
    Ok(())
}

/// Worker pool honoring `NANORES_THREADS` (0 or unset = one per core).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let n = match std::env::var("NANORES_THREADS") {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| {
            Error::Config(format!(
                "NANORES_THREADS=`{v}` is not a non-negative integer"
            ))
        })?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Entries of the listed speakers (all if `None`), keeping per speaker and
/// digit the first `trials_per_digit` trials in trial order.
pub fn select_entries(
    manifest: &DatasetManifest,
    speakers: Option<&[String]>,
    trials_per_digit: Option<u32>,
) -> Result<Vec<ManifestEntry>> {
    if let Some(list) = speakers {
        let known = manifest.speakers();
        if let Some(missing) = list.iter().find(|s| !known.contains(s)) {
            return Err(Error::InsufficientData(format!(
                "speaker `{missing}` is not in the manifest"
            )));
        }
    }
    let mut out: Vec<ManifestEntry> = Vec::new();
    let mut count = 0u32;
    let mut last: Option<(&str, u8)> = None;
    for e in &manifest.entries {
        if speakers.is_some_and(|l| !l.contains(&e.speaker)) {
            continue;
        }
        let key = (e.speaker.as_str(), e.digit);
        if last != Some(key) {
            last = Some(key);
            count = 0;
        }
        if trials_per_digit.is_none_or(|cap| count < cap) {
            out.push(e.clone());
        }
        count += 1;
    }
    if out.is_empty() {
        return Err(Error::InsufficientData("no clips selected".into()));
    }
    Ok(out)
}

/// Length-standardized amplitude traces at unit drive, one per entry.
pub fn raw_traces(entries: &[ManifestEntry], t: usize) -> Result<Vec<Vec<f64>>> {
    let results: Vec<Result<Vec<f64>>> = entries
        .par_iter()
        .map(|e| {
            let clip = AudioClip::load(e)?;
            Ok(standardize_trace(&clip, t, 1.0)?.values)
        })
        .collect();
    collect_batch(results)
}

/// Conductance traces of every entry through the reservoir.
pub fn hybrid_traces(entries: &[ManifestEntry], reservoir: &Reservoir) -> Result<Vec<Vec<f64>>> {
    let results: Vec<Result<Vec<f64>>> = entries
        .par_iter()
        .map(|e| reservoir.run_entry(e).map(|t| t.values))
        .collect();
    collect_batch(results)
}

fn collect_batch<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    let total = results.len();
    let mut ok = Vec::with_capacity(total);
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => failures.push(e),
        }
    }
    if failures.is_empty() {
        Ok(ok)
    } else {
        Err(Error::Batch { total, failures })
    }
}

/// Selected clips with both feature sources, aligned by row.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub entries: Vec<ManifestEntry>,
    pub labels: Vec<u8>,
    pub raw: Vec<Vec<f64>>,
    pub hybrid: Vec<Vec<f64>>,
}

impl Corpus {
    /// Simulate every entry. If a trace pack is given, its traces are used
    /// for matching clips and only the rest are simulated.
    pub fn build(
        entries: Vec<ManifestEntry>,
        reservoir: &Reservoir,
        pack: Option<&Path>,
    ) -> Result<Self> {
        let raw = raw_traces(&entries, reservoir.config().t)?;
        let hybrid = match pack {
            Some(dir) => {
                let packed = read_pack(dir)?;
                let lookup: std::collections::HashMap<ClipRef, Vec<f64>> =
                    packed.into_iter().map(|t| (t.clip_ref, t.values)).collect();
                let results: Vec<Result<Vec<f64>>> = entries
                    .par_iter()
                    .map(|e| match lookup.get(&ClipRef::from(e)) {
                        Some(v) if v.len() == reservoir.config().t => Ok(v.clone()),
                        _ => reservoir.run_entry(e).map(|t| t.values),
                    })
                    .collect();
                collect_batch(results)?
            }
            None => hybrid_traces(&entries, reservoir)?,
        };
        let labels = entries.iter().map(|e| e.digit).collect();
        Ok(Self {
            entries,
            labels,
            raw,
            hybrid,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Row indices whose entry satisfies `keep`.
    pub fn rows_where(&self, keep: impl Fn(&ManifestEntry) -> bool) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| keep(&self.entries[i]))
            .collect()
    }
}

/// Outcome of one task: deterministic summary data plus the artifacts written.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub task: Task,
    pub master_seed: u64,
    pub n_clips: usize,
    pub results: Value,
    pub outputs: Vec<String>,
}

/// Writes artifacts into one output directory and remembers their names.
pub struct Emitter {
    dir: PathBuf,
    written: Vec<String>,
}

impl Emitter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).at(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).at(&path)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn finish(mut self) -> Vec<String> {
        self.written.sort();
        self.written
    }
}

/// Comma-joined CSV row of floats.
pub(crate) fn csv_floats(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(fmt_f64)
        .collect::<Vec<_>>()
        .join(",")
}

/// Run the configured task end to end, writing its artifacts and
/// `run_summary.json` into `output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let pool = thread_pool()?;
    pool.install(|| {
        let manifest = config.load_manifest()?;
        let mut out = Emitter::new(&config.output_dir)?;
        let (n_clips, results) = match config.task {
            Task::Sweep => {
                let r = parameter_sweep(&manifest, config, &mut out)?;
                (1, serde_json::to_value(r.summary())?)
            }
            Task::Distance => {
                let r = distance_analysis(&manifest, config, &mut out)?;
                (r.n_clips, serde_json::to_value(&r)?)
            }
            Task::ReducedClass => {
                let (n, rows) = run_reduced_class(&manifest, config, &mut out)?;
                (n, serde_json::to_value(rows)?)
            }
            Task::TenClass => {
                let (n, results) = run_ten_class(&manifest, config, &mut out)?;
                (n, tasks::ten_class_summary(&results)?)
            }
            Task::SubsampleBench => {
                let (n, points) = run_subsample_bench(&manifest, config, &mut out)?;
                // timings are kept out of the summary so it stays reproducible
                let acc: Vec<Value> = points
                    .iter()
                    .map(|p| json!({"k": p.k, "raw_acc": p.raw_acc, "hybrid_acc": p.hybrid_acc}))
                    .collect();
                (n, Value::Array(acc))
            }
            Task::SpeakerGen => {
                let r = run_speaker_generalization(&manifest, config, &mut out)?;
                (r.n_clips, serde_json::to_value(r.summary())?)
            }
        };
        let mut outputs = out.finish();
        outputs.push("run_summary.json".into());
        let summary = RunSummary {
            task: config.task,
            master_seed: config.master_seed,
            n_clips,
            results,
            outputs,
        };
        let path = config.output_dir.join("run_summary.json");
        fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n").at(&path)?;
        Ok(summary)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_unknown_keys() {
        let c = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.reservoir.assembly.n_wires, 1500);
        assert_eq!(c.reservoir.dynamics.k_p, 0.001);
        assert_eq!(c.reservoir.t, 1024);
        let err =
            ExperimentConfig::from_json(r#"{"reservoir": {"dynamics": {"kp": 1}}}"#).unwrap_err();
        assert!(err.to_string().contains("kp"), "{err}");
    }

    #[test]
    fn overrides_patch_nested_fields() {
        let mut doc = json!({"reservoir": {"t": 64}});
        apply_override(&mut doc, "reservoir.dynamics.k_p=0.5").unwrap();
        apply_override(&mut doc, "task=sweep").unwrap();
        let c: ExperimentConfig = serde_json::from_value(doc).unwrap();
        assert_eq!(c.reservoir.dynamics.k_p, 0.5);
        assert_eq!(c.reservoir.t, 64);
        assert_eq!(c.task, Task::Sweep);
        assert!(apply_override(&mut json!({}), "novalue").is_err());
    }

    #[test]
    fn speaker_gen_rejects_overlap() {
        let c = ExperimentConfig {
            task: Task::SpeakerGen,
            speaker_gen: SpeakerGenSettings {
                test_speakers: vec!["jackson".into()],
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn entry_selection_caps_trials() {
        let entries = ["a", "b"]
            .iter()
            .flat_map(|s| {
                (0..2u8).flat_map(move |d| {
                    (0..5u32).map(move |t| ManifestEntry {
                        path: PathBuf::from(format!("{d}_{s}_{t}.wav")),
                        speaker: s.to_string(),
                        digit: d,
                        trial: t,
                    })
                })
            })
            .collect();
        let m = DatasetManifest::from_entries(".", entries).unwrap();
        let sel = select_entries(&m, Some(&["b".to_string()]), Some(2)).unwrap();
        assert_eq!(sel.len(), 4);
        assert!(sel.iter().all(|e| e.speaker == "b" && e.trial < 2));
        assert_eq!(select_entries(&m, None, None).unwrap().len(), 20);
        assert!(select_entries(&m, Some(&["zed".to_string()]), None).is_err());
    }
}
