use std::path::PathBuf;

use proptest::prelude::*;

use nanores::audio::{
    bin_range, build_manifest, decode_wav, encode_wav, standardize_samples, write_wav,
    DatasetManifest, ManifestEntry, NamingPattern,
};
use nanores::Error;

proptest! {
    #[test]
    fn wav_round_trip_within_one_lsb(
        samples in prop::collection::vec(-1.0f64..1.0, 1..500),
        rate in 1000u32..48000,
    ) {
        let bytes = encode_wav(&samples, rate);
        let w = decode_wav(&bytes, std::path::Path::new("mem.wav")).unwrap();
        prop_assert_eq!(w.sample_rate, rate);
        prop_assert_eq!(w.samples.len(), samples.len());
        for (a, b) in samples.iter().zip(&w.samples) {
            prop_assert!((a - b).abs() <= 1.0 / 32768.0, "{} vs {}", a, b);
        }
    }

    #[test]
    fn standardize_is_idempotent(
        samples in prop::collection::vec(-1.0f64..1.0, 1..3000),
        t in 1usize..300,
        v_p in 0.5f64..5.0,
    ) {
        let once = standardize_samples(&samples, t, v_p).unwrap();
        let twice = standardize_samples(&once.values, t, v_p).unwrap();
        prop_assert_eq!(once.values.len(), t);
        prop_assert_eq!(&once.values, &twice.values);
        let peak = once.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(peak == 0.0 || peak == v_p);
    }

    #[test]
    fn bins_partition_the_padded_clip(n in 1usize..5000, t in 1usize..1100) {
        let padded = n.max(t);
        let mut next = 0;
        for i in 0..t {
            let (lo, hi) = bin_range(i, padded, t);
            prop_assert_eq!(lo, next);
            prop_assert!(hi > lo);
            next = hi;
        }
        prop_assert_eq!(next, padded);
    }

    #[test]
    fn manifest_is_order_independent(
        keys in prop::collection::btree_set((0u8..10, 0u32..20), 1..30),
        seed in any::<u64>(),
    ) {
        let entries: Vec<ManifestEntry> = keys
            .iter()
            .map(|&(d, t)| ManifestEntry {
                path: PathBuf::from(format!("{d}_x_{t}.wav")),
                speaker: "x".into(),
                digit: d,
                trial: t,
            })
            .collect();
        let mut shuffled = entries.clone();
        // Fisher-Yates driven by a splitmix stream
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = s;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            shuffled.swap(i, (z % (i as u64 + 1)) as usize);
        }
        let a = DatasetManifest::from_entries("r", entries).unwrap();
        let b = DatasetManifest::from_entries("r", shuffled).unwrap();
        prop_assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }
}

#[test]
fn standardize_examples() {
    let v = standardize_samples(&[0.2, 0.4, 0.6, 0.8], 2, 1.0).unwrap();
    assert!((v.values[0] - 3.0 / 7.0).abs() < 1e-15);
    assert_eq!(v.values[1], 1.0);
    let c = standardize_samples(&[0.5; 2048], 1024, 2.0).unwrap();
    assert!(c.values.iter().all(|&x| x == 2.0));
    let id: Vec<f64> = (0..1024).map(|i| ((i as f64) * 0.37).sin()).collect();
    let peak = id.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scaled: Vec<f64> = id.iter().map(|v| v / peak).collect();
    assert_eq!(
        standardize_samples(&scaled, 1024, 1.0).unwrap().values,
        scaled
    );
    assert!(standardize_samples(&[0.0; 10], 4, 1.0)
        .unwrap()
        .values
        .iter()
        .all(|&x| x == 0.0));
    assert!(matches!(
        standardize_samples(&[1.0], 0, 1.0),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn manifest_builds_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (d, s, t) in [(0, "ann", 0), (3, "ann", 1), (9, "bob", 0), (1, "bob", 12)] {
        write_wav(
            dir.path().join(format!("{d}_{s}_{t}.wav")),
            &[0.1, -0.2, 0.3],
            8000,
        )
        .unwrap();
    }
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let pat = NamingPattern::default();
    let a = build_manifest(dir.path(), &pat).unwrap();
    let b = build_manifest(dir.path(), &pat).unwrap();
    assert_eq!(a.len(), 4);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let p = dir.path().join("m.json");
    a.save(&p).unwrap();
    assert_eq!(DatasetManifest::load(&p).unwrap(), a);
}

#[test]
fn corrupt_and_empty_files_are_rejected() {
    let p = std::path::Path::new("bad.wav");
    assert!(decode_wav(b"RIFF\x00\x00", p).is_err());
    assert!(decode_wav(b"not a wav file at all, clearly", p).is_err());
    let empty = encode_wav(&[], 8000);
    assert!(decode_wav(&empty, p).is_err() || decode_wav(&empty, p).unwrap().samples.is_empty());
}
