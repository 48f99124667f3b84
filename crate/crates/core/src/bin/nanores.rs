use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use nanores::audio::{build_manifest, DatasetManifest, NamingPattern};
use nanores::classify::{evaluate, split_indices, train, ClassifierModel, FeatureMatrix, Source};
use nanores::harness::{
    apply_override, run_experiment, select_entries, thread_pool, Corpus, ExperimentConfig,
};
use nanores::network::assemble;
use nanores::reservoir::{write_pack, write_trace_csv, Reservoir};
use nanores::synth::{write_corpus, SynthConfig};
use nanores::Error;

#[derive(Parser)]
#[command(
    name = "nanores",
    version,
    about = "Memristive nanowire reservoir simulator and spoken-digit harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment config JSON; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set reservoir.dynamics.k_p=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed; also seeds network assembly.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct Data {
    /// Dataset manifest JSON.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory of WAV files to scan instead of a manifest.
    #[arg(long)]
    root: Option<PathBuf>,
    /// Restrict to these speakers (comma separated).
    #[arg(long, value_delimiter = ',')]
    speakers: Vec<String>,
    /// Keep the first N trials per speaker and digit.
    #[arg(long)]
    trials_per_digit: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a directory of `{digit}_{speaker}_{trial}.wav` files into a manifest.
    Manifest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        pattern: Option<String>,
    },
    /// Write the synthetic spoken-digit corpus.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        speakers: Vec<String>,
        #[arg(long)]
        trials: Option<u32>,
    },
    /// Assemble a network and write its topology JSON.
    Netgen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        wires: Option<usize>,
        #[arg(long)]
        side: Option<f64>,
    },
    /// Drive every selected clip through the reservoir.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        /// One CSV per clip instead of a binary pack.
        #[arg(long)]
        csv: bool,
    },
    /// Sweep one dynamics parameter on the probe clip.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        param: Option<String>,
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
    },
    /// Pairwise Euclidean distances between standardized clips.
    Distance {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
    },
    /// Train a classifier on the training split and write the model JSON.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Evaluate a trained model on the held-out split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        model: ModelArgs,
        /// Model JSON written by `train`.
        #[arg(long)]
        model_path: PathBuf,
    },
    /// Accuracy and training time against subset size.
    Bench {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
    },
    /// Train on one speaker, test on others, over all digit pairs.
    Genspeaker {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        train_speaker: Option<String>,
        #[arg(long, value_delimiter = ',')]
        test_speakers: Vec<String>,
    },
    /// Run the task named in the config.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
    },
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Feature source: `nanowire` or `raw`.
    #[arg(long, default_value = "nanowire")]
    source: String,
    /// lr, lda or svm; defaults to the config's classifier.
    #[arg(long)]
    classifier: Option<String>,
    #[arg(long)]
    subset_size: Option<usize>,
    /// Trace pack from `simulate`; clips missing from it are simulated.
    #[arg(long)]
    traces: Option<PathBuf>,
}

/// Exit status 2 marks usage and configuration problems.
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Usage(m),
            other => Failure::Run(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn set(doc: &mut Value, key: &str, value: Value) -> CliResult<()> {
    apply_override(doc, &format!("{key}={value}")).map_err(Failure::from)
}

fn load_config(
    common: &Common,
    data: Option<&Data>,
    extra: &[(&str, Value)],
) -> CliResult<ExperimentConfig> {
    let mut doc: Value = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("config {}: {e}", p.display())))?
        }
        None => json!({}),
    };
    if !doc.is_object() {
        return Err(Failure::Usage("config must be a JSON object".into()));
    }
    for o in &common.overrides {
        apply_override(&mut doc, o)?;
    }
    if let Some(seed) = common.seed {
        set(&mut doc, "master_seed", json!(seed))?;
        set(&mut doc, "reservoir.assembly.seed", json!(seed))?;
    }
    if let Some(d) = data {
        if let Some(m) = &d.manifest {
            set(&mut doc, "manifest", json!(m))?;
        }
        if let Some(r) = &d.root {
            set(&mut doc, "data_root", json!(r))?;
        }
    }
    for (k, v) in extra {
        set(&mut doc, k, v.clone())?;
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(doc).map_err(|e| Failure::Usage(format!("config: {e}")))?;
    Ok(cfg)
}

fn require_out(common: &Common) -> CliResult<&Path> {
    common
        .out
        .as_deref()
        .ok_or_else(|| Failure::Usage("--out is required".into()))
}

fn speakers(data: &Data) -> Option<&[String]> {
    (!data.speakers.is_empty()).then_some(data.speakers.as_slice())
}

/// Run a harness task with `--out` as the output directory.
fn task(common: &Common, data: &Data, name: &str, extra: Vec<(&str, Value)>) -> CliResult<()> {
    let mut extra = extra;
    extra.push(("task", json!(name)));
    if let Some(out) = &common.out {
        extra.push(("output_dir", json!(out)));
    }
    let cfg = load_config(common, Some(data), &extra)?;
    let summary = run_experiment(&cfg)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&summary.results).map_err(Error::from)?
    );
    eprintln!(
        "wrote {} artifact(s) to {}",
        summary.outputs.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

/// Selection fields for the task that owns `speakers`/`trials_per_digit`.
fn selection(prefix: &str, data: &Data) -> Vec<(String, Value)> {
    let mut v = Vec::new();
    if let Some(s) = speakers(data) {
        v.push((format!("{prefix}.speakers"), json!(s)));
    }
    if let Some(n) = data.trials_per_digit {
        v.push((format!("{prefix}.trials_per_digit"), json!(n)));
    }
    v
}

fn borrowed(v: &[(String, Value)]) -> Vec<(&str, Value)> {
    v.iter().map(|(k, x)| (k.as_str(), x.clone())).collect()
}

/// Corpus, features and split shared by `train` and `eval`.
fn model_data(
    common: &Common,
    data: &Data,
    args: &ModelArgs,
) -> CliResult<(ExperimentConfig, FeatureMatrix, Vec<usize>, Vec<usize>)> {
    let mut extra: Vec<(&str, Value)> = Vec::new();
    if let Some(k) = args.subset_size {
        extra.push(("subset_size", json!(k)));
    }
    if let Some(c) = &args.classifier {
        extra.push(("classifier.kind", json!(c.to_ascii_lowercase())));
    }
    let cfg = load_config(common, Some(data), &extra)?;
    cfg.validate()?;
    let source = match args.source.as_str() {
        "nanowire" | "hybrid" => Source::Nanowire,
        "raw" => Source::Raw,
        other => {
            return Err(Failure::Usage(format!(
                "unknown --source `{other}` (nanowire, raw)"
            )))
        }
    };
    let manifest = cfg.load_manifest()?;
    let entries = select_entries(&manifest, speakers(data), data.trials_per_digit)?;
    let pool = thread_pool()?;
    let corpus = pool.install(|| -> nanores::Result<Corpus> {
        let reservoir = Reservoir::new(cfg.reservoir)?;
        if source == Source::Raw {
            // hybrid traces are not needed
            let raw = nanores::harness::raw_traces(&entries, cfg.reservoir.t)?;
            let labels = entries.iter().map(|e| e.digit).collect();
            return Ok(Corpus {
                entries,
                labels,
                hybrid: raw.clone(),
                raw,
            });
        }
        Corpus::build(entries, &reservoir, args.traces.as_deref())
    })?;
    let traces = if source == Source::Raw {
        &corpus.raw
    } else {
        &corpus.hybrid
    };
    let features = FeatureMatrix::from_traces(traces, &corpus.labels, cfg.subset_size, source)?;
    let (tr, te) = split_indices(&features.labels, cfg.test_fraction, cfg.master_seed)?;
    Ok((cfg, features, tr, te))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Manifest {
            common,
            root,
            pattern,
        } => {
            let out = require_out(&common)?;
            let naming = NamingPattern::new(
                pattern
                    .as_deref()
                    .unwrap_or(nanores::audio::DEFAULT_PATTERN),
            )
            .map_err(Failure::from)?;
            let m = build_manifest(&root, &naming)?;
            m.save(out)?;
            eprintln!(
                "{} entries, {} speaker(s) -> {}",
                m.len(),
                m.speakers().len(),
                out.display()
            );
        }
        Command::Synth {
            common,
            speakers,
            trials,
        } => {
            let out = require_out(&common)?;
            let mut cfg = SynthConfig::default();
            if !speakers.is_empty() {
                cfg.speakers = speakers;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            let m = write_corpus(out, &cfg)?;
            m.save(out.join("manifest.json"))?;
            eprintln!("{} clips -> {}", m.len(), out.display());
        }
        Command::Netgen {
            common,
            wires,
            side,
        } => {
            let out = require_out(&common)?.to_path_buf();
            let mut extra = Vec::new();
            if let Some(w) = wires {
                extra.push(("reservoir.assembly.n_wires", json!(w)));
            }
            if let Some(s) = side {
                extra.push(("reservoir.assembly.substrate_side", json!(s)));
            }
            let cfg = load_config(&common, None, &extra)?;
            let topo = assemble(&cfg.reservoir.assembly)?;
            topo.save(&out)?;
            println!(
                "{}",
                json!({"seed": topo.seed, "wires": topo.n_wires(), "junctions": topo.n_junctions(),
                       "source": topo.source_wire, "ground": topo.ground_wire})
            );
        }
        Command::Simulate { common, data, csv } => {
            let out = require_out(&common)?.to_path_buf();
            let cfg = load_config(&common, Some(&data), &[])?;
            cfg.validate()?;
            let manifest: DatasetManifest = cfg.load_manifest()?;
            let entries = select_entries(&manifest, speakers(&data), data.trials_per_digit)?;
            let selected = DatasetManifest::from_entries(manifest.root.clone(), entries)?;
            let traces = thread_pool()?.install(|| -> nanores::Result<_> {
                let reservoir = Reservoir::new(cfg.reservoir)?;
                reservoir.run_dataset(&selected).into_traces()
            })?;
            if csv {
                fs::create_dir_all(&out).map_err(|e| {
                    Failure::Run(Error::Io {
                        path: out.clone(),
                        source: e,
                    })
                })?;
                for t in &traces {
                    let r = &t.clip_ref;
                    write_trace_csv(
                        out.join(format!("{}_{}_{}.csv", r.speaker, r.digit, r.trial)),
                        t,
                    )?;
                }
            } else {
                write_pack(&out, &traces)?;
            }
            eprintln!("{} trace(s) -> {}", traces.len(), out.display());
        }
        Command::Sweep {
            common,
            data,
            param,
            grid,
        } => {
            let mut extra = Vec::new();
            if let Some(p) = param {
                let p: nanores::harness::SweepParam = p.parse().map_err(Failure::from_usage)?;
                extra.push(("sweep.param", json!(p)));
            }
            if !grid.is_empty() {
                extra.push(("sweep.grid", json!(grid)));
            }
            task(&common, &data, "sweep", extra)?;
        }
        Command::Distance { common, data } => {
            let sel = selection("distance", &data);
            task(&common, &data, "distance", borrowed(&sel))?;
        }
        Command::Bench { common, data } => {
            let sel = selection("subsample_bench", &data);
            task(&common, &data, "subsample_bench", borrowed(&sel))?;
        }
        Command::Genspeaker {
            common,
            data,
            train_speaker,
            test_speakers,
        } => {
            let mut extra = Vec::new();
            if let Some(s) = train_speaker {
                extra.push(("speaker_gen.train_speaker", json!(s)));
            }
            if !test_speakers.is_empty() {
                extra.push(("speaker_gen.test_speakers", json!(test_speakers)));
            }
            task(&common, &data, "speaker_gen", extra)?;
        }
        Command::Run { common, data } => {
            let cfg = load_config(&common, Some(&data), &[])?;
            let name = serde_json::to_value(cfg.task).map_err(Error::from)?;
            task(
                &common,
                &data,
                name.as_str().unwrap_or("ten_class"),
                Vec::new(),
            )?;
        }
        Command::Train {
            common,
            data,
            model,
        } => {
            let out = require_out(&common)?.to_path_buf();
            let (cfg, features, tr, _) = model_data(&common, &data, &model)?;
            let m = train(
                cfg.classifier.kind,
                &features.select(&tr),
                &cfg.classifier.params,
            )?;
            m.save(&out)?;
            eprintln!(
                "{} model on {} training rows, k = {}, {} iteration(s) -> {}",
                m.kind.as_str(),
                tr.len(),
                m.n_features(),
                m.iterations,
                out.display()
            );
        }
        Command::Eval {
            common,
            data,
            model,
            model_path,
        } => {
            let out = require_out(&common)?.to_path_buf();
            let m = ClassifierModel::load(&model_path)?;
            let args = ModelArgs {
                subset_size: Some(model.subset_size.unwrap_or(m.n_features())),
                ..model
            };
            let (_, features, _, te) = model_data(&common, &data, &args)?;
            let report = evaluate(&m, &features.select(&te))?;
            let write = |p: &Path, s: String| {
                fs::write(p, s).map_err(|e| {
                    Failure::Run(Error::Io {
                        path: p.to_path_buf(),
                        source: e,
                    })
                })
            };
            write(&out, report.to_json()?)?;
            write(&out.with_extension("confusion.csv"), report.confusion_csv())?;
            println!(
                "accuracy {:.4} on {} test rows",
                report.accuracy,
                report.n_test()
            );
        }
    }
    Ok(())
}

impl Failure {
    fn from_usage(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(1)
        }
    }
}
