mod common;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use proptest::prelude::*;

use common::dense_assembly;
use nanores::audio::{standardize_trace, write_wav, AudioClip, DatasetManifest, ManifestEntry};
use nanores::classify::{subsample, FeatureMatrix, Source};
use nanores::harness::{
    combinations, run_experiment, sample_combinations, sweep_clip, DistanceReport,
    ExperimentConfig, Task, TenClassSettings,
};
use nanores::network::{assemble, Nanowire, NetworkTopology, Point};
use nanores::reservoir::{ClipRef, Reservoir, ReservoirConfig};
use nanores::synth::{write_corpus, SynthConfig};

fn small_reservoir() -> ReservoirConfig {
    ReservoirConfig {
        assembly: dense_assembly(120, 5),
        t: 128,
        ..Default::default()
    }
}

fn small_corpus(dir: &Path, trials: u32) -> PathBuf {
    let cfg = SynthConfig {
        trials,
        ..Default::default()
    };
    let m = write_corpus(dir, &cfg).unwrap();
    let p = dir.join("manifest.json");
    m.save(&p).unwrap();
    p
}

fn config(task: Task, manifest: &Path, out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        task,
        reservoir: small_reservoir(),
        manifest: Some(manifest.to_path_buf()),
        output_dir: out.to_path_buf(),
        ten_class: TenClassSettings {
            datasets: vec![vec!["jackson".into()]],
            ..Default::default()
        },
        ..Default::default()
    }
}

fn sine_entry(dir: &Path) -> ManifestEntry {
    let path = dir.join("0_tone_0.wav");
    let samples: Vec<f64> = (0..4000).map(|i| 0.8 * (i as f64 * 0.07).sin()).collect();
    write_wav(&path, &samples, 8000).unwrap();
    ManifestEntry {
        path,
        speaker: "tone".into(),
        digit: 0,
        trial: 0,
    }
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

proptest! {
    #[test]
    fn sampled_combinations_are_distinct(k in 1usize..6, n in 1usize..60, seed in any::<u64>()) {
        let digits: Vec<u8> = (0..10).collect();
        let combos = sample_combinations(&digits, k, n, seed);
        prop_assert_eq!(combos.len(), n.min(binomial(10, k)));
        let mut seen = HashSet::new();
        for c in &combos {
            prop_assert_eq!(c.len(), k);
            prop_assert!(c.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(seen.insert(c.clone()));
        }
        prop_assert_eq!(sample_combinations(&digits, k, n, seed), combos);
    }

    #[test]
    fn distance_report_matches_pairwise_loop(
        rows in prop::collection::vec((0u8..4, prop::collection::vec(-3.0f64..3.0, 5)), 2..25),
    ) {
        let (labels, vectors): (Vec<u8>, Vec<Vec<f64>>) = rows.into_iter().unzip();
        let r = DistanceReport::compute(&vectors, &labels).unwrap();
        prop_assert_eq!(r.n_clips, vectors.len());
        for (a, &da) in r.digits.iter().enumerate() {
            for (b, &db) in r.digits.iter().enumerate() {
                let mut ds = Vec::new();
                for i in 0..vectors.len() {
                    for j in i + 1..vectors.len() {
                        let hit = (labels[i] == da && labels[j] == db)
                            || (labels[i] == db && labels[j] == da);
                        if hit {
                            let d: f64 = vectors[i]
                                .iter()
                                .zip(&vectors[j])
                                .map(|(x, y)| (x - y) * (x - y))
                                .sum::<f64>()
                                .sqrt();
                            ds.push(d);
                        }
                    }
                }
                let want = (!ds.is_empty()).then(|| ds.iter().sum::<f64>() / ds.len() as f64);
                let got = r.inter_matrix[a][b];
                prop_assert_eq!(got.is_some(), want.is_some());
                if let (Some(g), Some(w)) = (got, want) {
                    prop_assert!((g - w).abs() <= 1e-9 * w.max(1.0));
                }
                prop_assert_eq!(r.inter_matrix[a][b], r.inter_matrix[b][a]);
            }
            prop_assert_eq!(r.intra_mean[a], r.inter_matrix[a][a]);
            prop_assert!(r.inter_std[a] >= 0.0);
        }
    }
}

#[test]
fn combinations_are_exhaustive() {
    let digits: Vec<u8> = (0..10).collect();
    for k in 0..=10 {
        assert_eq!(combinations(&digits, k).len(), binomial(10, k));
    }
    assert!(combinations(&digits, 11).is_empty());
}

#[test]
fn raw_and_hybrid_share_test_rows_and_artifacts_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_corpus(dir.path(), 6);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let sa = run_experiment(&config(Task::TenClass, &manifest, &a)).unwrap();
    let sb = run_experiment(&config(Task::TenClass, &manifest, &b)).unwrap();
    assert_eq!(sa.outputs, sb.outputs);
    for name in &sa.outputs {
        let (x, y) = (std::fs::read(a.join(name)), std::fs::read(b.join(name)));
        assert_eq!(x.unwrap(), y.unwrap(), "{name} differs between runs");
    }
    for r in sa.results.as_array().unwrap() {
        let row_sums = |src: &str| -> Vec<u64> {
            r[src]["confusion"]
                .as_array()
                .unwrap()
                .iter()
                .map(|row| {
                    row.as_array()
                        .unwrap()
                        .iter()
                        .map(|v| v.as_u64().unwrap())
                        .sum()
                })
                .collect()
        };
        assert_eq!(row_sums("raw"), row_sums("hybrid"));
        assert_eq!(
            row_sums("raw").iter().sum::<u64>(),
            r["n_test"].as_u64().unwrap()
        );
    }
}

#[test]
fn distance_task_writes_consistent_tables() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_corpus(dir.path(), 3);
    let out = dir.path().join("d");
    let s = run_experiment(&config(Task::Distance, &manifest, &out)).unwrap();
    assert_eq!(s.n_clips, 90);
    let r: serde_json::Value = s.results;
    let m = r["inter_matrix"].as_array().unwrap();
    assert_eq!(m.len(), 10);
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.as_array().unwrap().iter().enumerate() {
            assert_eq!(*v, m[j][i]);
            assert!(v.as_f64().unwrap() >= 0.0);
        }
    }
    for name in &s.outputs {
        assert!(out.join(name).is_file(), "{name}");
    }
}

#[test]
fn one_point_sweep_equals_reservoir_run() {
    let dir = tempfile::tempdir().unwrap();
    let entry = sine_entry(dir.path());
    let clip = AudioClip::load(&entry).unwrap();
    let cfg = small_reservoir();
    let topo = assemble(&cfg.assembly).unwrap();
    let points = sweep_clip(
        &clip,
        &topo,
        &cfg,
        "k_p".parse().unwrap(),
        &[cfg.dynamics.k_p],
    )
    .unwrap();
    let drive = standardize_trace(&clip, cfg.t, cfg.v_p).unwrap();
    let direct = Reservoir::new(cfg)
        .unwrap()
        .run_clip(&drive, &ClipRef::from(&entry))
        .unwrap();
    assert_eq!(points[0].trace, direct.values);
}

#[test]
fn larger_drive_amplitude_raises_single_junction_state() {
    let dir = tempfile::tempdir().unwrap();
    let clip = AudioClip::load(&sine_entry(dir.path())).unwrap();
    let wires = vec![
        Nanowire::new(0, Point::new(0.0, 0.0), Point::new(6.0, 6.0)),
        Nanowire::new(1, Point::new(2.0, 8.0), Point::new(8.0, 2.0)),
    ];
    let topo = NetworkTopology::from_wires(wires, 10.0, 0).unwrap();
    assert_eq!(topo.n_junctions(), 1);
    let cfg = ReservoirConfig {
        t: 256,
        ..Default::default()
    };
    let points = sweep_clip(&clip, &topo, &cfg, "v_p".parse().unwrap(), &[0.5, 5.0]).unwrap();
    assert!(
        points[1].final_mean_g > points[0].final_mean_g,
        "{} vs {}",
        points[1].final_mean_g,
        points[0].final_mean_g
    );
}

#[test]
fn full_length_subset_is_the_identity() {
    let traces: Vec<Vec<f64>> = (0..4)
        .map(|i| (0..1024).map(|j| ((i * 1024 + j) as f64).sin()).collect())
        .collect();
    for t in &traces {
        assert_eq!(&subsample(t, 1024).unwrap(), t);
    }
    let fm = FeatureMatrix::from_traces(&traces, &[0, 1, 0, 1], 1024, Source::Raw).unwrap();
    assert_eq!(fm.rows, traces);
}

#[test]
fn overlapping_speaker_split_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_corpus(dir.path(), 1);
    let mut cfg = config(Task::SpeakerGen, &manifest, &dir.path().join("o"));
    cfg.speaker_gen.test_speakers = vec!["jackson".into()];
    assert!(run_experiment(&cfg).is_err());
    let m = DatasetManifest::load(&manifest).unwrap();
    assert_eq!(m.len(), 30);
}
