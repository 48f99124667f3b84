//! Raw PCM WAV ingest, dataset manifests and fixed-length voltage drives.
//!
//! No filtering, trimming or spectral transform is applied anywhere in this
//! module: the drive is the bin-averaged, peak-normalized waveform itself.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

/// Default drive length in timesteps.
pub const DEFAULT_STEPS: usize = 1024;

/// Default manifest filename pattern (public spoken-digit corpus layout).
pub const DEFAULT_PATTERN: &str = "{digit}_{speaker}_{trial}.wav";

/// Decoded PCM samples, normalized to [-1, 1] and mixed down to mono.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// A labeled spoken-digit recording.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub label: u8,
    pub speaker: String,
    pub trial: u32,
}

impl AudioClip {
    pub fn load(entry: &ManifestEntry) -> Result<Self> {
        let wave = read_wav(&entry.path)?;
        Ok(Self {
            samples: wave.samples,
            sample_rate: wave.sample_rate,
            label: entry.digit,
            speaker: entry.speaker.clone(),
            trial: entry.trial,
        })
    }
}

fn parse_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn unsupported(path: &Path, reason: impl Into<String>) -> Error {
    Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

const WAVE_FORMAT_PCM: u16 = 0x0001;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

struct FmtChunk {
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

/// Read a RIFF/WAVE file holding 8-bit unsigned or 16-bit signed PCM.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let bytes = fs::read(path).at(path)?;
    decode_wav(&bytes, path)
}

/// Decode an in-memory WAV image; `path` is only used for error messages.
pub fn decode_wav(bytes: &[u8], path: &Path) -> Result<Waveform> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(parse_err(path, "missing RIFF/WAVE signature"));
    }
    let mut pos = 12;
    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        // Truncated data chunks are common in the wild; clamp to what exists.
        let body_end = body_start.saturating_add(size).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => fmt = Some(parse_fmt(body, path)?),
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }
    let fmt = fmt.ok_or_else(|| parse_err(path, "no fmt chunk"))?;
    let data = data.ok_or_else(|| parse_err(path, "no data chunk"))?;

    let channels = fmt.channels as usize;
    let frame_bytes = channels * (fmt.bits as usize / 8);
    let frames = data.len() / frame_bytes;
    if frames == 0 {
        return Err(Error::EmptyClip(path.to_path_buf()));
    }
    let mut samples = Vec::with_capacity(frames);
    for frame in data.chunks_exact(frame_bytes) {
        let sum: f64 = match fmt.bits {
            8 => frame.iter().map(|&b| (f64::from(b) - 128.0) / 128.0).sum(),
            _ => frame
                .chunks_exact(2)
                .map(|s| f64::from(i16::from_le_bytes([s[0], s[1]])) / 32768.0)
                .sum(),
        };
        samples.push(sum / channels as f64);
    }
    Ok(Waveform {
        samples,
        sample_rate: fmt.sample_rate,
    })
}

fn parse_fmt(body: &[u8], path: &Path) -> Result<FmtChunk> {
    if body.len() < 16 {
        return Err(parse_err(path, "fmt chunk shorter than 16 bytes"));
    }
    let u16_at = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]);
    let mut tag = u16_at(0);
    let channels = u16_at(2);
    let sample_rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
    let bits = u16_at(14);
    if tag == WAVE_FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return Err(parse_err(path, "truncated WAVE_FORMAT_EXTENSIBLE header"));
        }
        // first two bytes of the sub-format GUID carry the real format tag
        tag = u16_at(24);
    }
    if tag != WAVE_FORMAT_PCM {
        let kind = match tag {
            0x0003 => "IEEE float",
            0x0006 | 0x0007 => "G.711 companded",
            _ => "compressed",
        };
        return Err(unsupported(
            path,
            format!("{kind} encoding (format tag {tag:#06x})"),
        ));
    }
    if channels == 0 {
        return Err(parse_err(path, "zero channels"));
    }
    if sample_rate == 0 {
        return Err(parse_err(path, "zero sample rate"));
    }
    if bits != 8 && bits != 16 {
        return Err(unsupported(path, format!("{bits}-bit PCM")));
    }
    Ok(FmtChunk {
        channels,
        sample_rate,
        bits,
    })
}

/// Write mono 16-bit PCM. Samples outside [-1, 1] are clipped.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav(samples, sample_rate)).at(path)
}

pub fn encode_wav(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + samples.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// One labeled recording on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub speaker: String,
    pub digit: u8,
    pub trial: u32,
}

impl ManifestEntry {
    /// Stable textual id, `speaker/digit/trial`.
    pub fn clip_ref(&self) -> String {
        format!("{}/{}/{}", self.speaker, self.digit, self.trial)
    }
}

/// Labeled audio inventory, sorted by (speaker, digit, trial).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn from_entries(root: impl Into<PathBuf>, mut entries: Vec<ManifestEntry>) -> Result<Self> {
        entries.sort_by(|a, b| (&a.speaker, a.digit, a.trial).cmp(&(&b.speaker, b.digit, b.trial)));
        for pair in entries.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if (&a.speaker, a.digit, a.trial) == (&b.speaker, b.digit, b.trial) {
                return Err(Error::DuplicateEntry {
                    speaker: a.speaker.clone(),
                    digit: a.digit,
                    trial: a.trial,
                    first: a.path.clone(),
                    second: b.path.clone(),
                });
            }
        }
        Ok(Self {
            root: root.into(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self.entries.iter().map(|e| e.speaker.clone()).collect();
        s.dedup();
        s
    }

    /// Entries matching `keep`, order preserved.
    pub fn filter(&self, keep: impl Fn(&ManifestEntry) -> bool) -> Self {
        Self {
            root: self.root.clone(),
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.entries)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").at(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).at(path)?;
        let mut entries: Vec<ManifestEntry> = serde_json::from_str(&text)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        // relative clip paths are taken relative to the manifest file
        for e in &mut entries {
            if e.path.is_relative() {
                e.path = root.join(&e.path);
            }
        }
        Self::from_entries(root, entries)
    }
}

/// Filename matcher compiled from a `{digit}`/`{speaker}`/`{trial}` pattern.
#[derive(Debug, Clone)]
pub struct NamingPattern {
    source: String,
    re: Regex,
}

impl NamingPattern {
    pub fn new(pattern: &str) -> Result<Self> {
        let mut re = String::from("^");
        let mut rest = pattern;
        let mut seen = [false; 3];
        while let Some(open) = rest.find('{') {
            re.push_str(&regex::escape(&rest[..open]));
            let close = rest[open..].find('}').ok_or_else(|| {
                Error::InvalidArgument(format!("unclosed placeholder in `{pattern}`"))
            })? + open;
            let (slot, group) = match &rest[open + 1..close] {
                "digit" => (0, "(?P<digit>[0-9])"),
                "speaker" => (1, "(?P<speaker>[A-Za-z0-9-]+?)"),
                "trial" => (2, "(?P<trial>[0-9]+)"),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown placeholder {{{other}}} in `{pattern}`"
                    )))
                }
            };
            if seen[slot] {
                return Err(Error::InvalidArgument(format!(
                    "repeated placeholder in `{pattern}`"
                )));
            }
            seen[slot] = true;
            re.push_str(group);
            rest = &rest[close + 1..];
        }
        re.push_str(&regex::escape(rest));
        re.push('$');
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument(format!(
                "pattern `{pattern}` must contain {{digit}}, {{speaker}} and {{trial}}"
            )));
        }
        let re = Regex::new(&re).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(Self {
            source: pattern.to_string(),
            re,
        })
    }

    /// Parse `(speaker, digit, trial)` out of a file name.
    pub fn parse(&self, file_name: &str) -> Option<(String, u8, u32)> {
        let caps = self.re.captures(file_name)?;
        let digit = caps["digit"].parse().ok()?;
        let trial = caps["trial"].parse().ok()?;
        Some((caps["speaker"].to_string(), digit, trial))
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }
}

impl Default for NamingPattern {
    fn default() -> Self {
        Self::new(DEFAULT_PATTERN).expect("default pattern compiles")
    }
}

/// Scan `root` (non-recursively) for files matching `naming`.
pub fn build_manifest(root: impl AsRef<Path>, naming: &NamingPattern) -> Result<DatasetManifest> {
    let root = root.as_ref();
    let root = &fs::canonicalize(root).at(root)?;
    let mut by_key: BTreeMap<(String, u8, u32), PathBuf> = BTreeMap::new();
    let mut names: Vec<_> = fs::read_dir(root)
        .at(root)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .at(root)?;
    names.sort();
    for path in names {
        if !path.is_file() {
            continue;
        }
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(key) = naming.parse(name) else {
            continue;
        };
        if let Some(first) = by_key.get(&key) {
            return Err(Error::DuplicateEntry {
                speaker: key.0,
                digit: key.1,
                trial: key.2,
                first: first.clone(),
                second: path,
            });
        }
        by_key.insert(key, path);
    }
    if by_key.is_empty() {
        return Err(Error::EmptyDataset {
            root: root.to_path_buf(),
            pattern: naming.as_str().to_string(),
        });
    }
    let entries = by_key
        .into_iter()
        .map(|((speaker, digit, trial), path)| ManifestEntry {
            path,
            speaker,
            digit,
            trial,
        })
        .collect();
    DatasetManifest::from_entries(root, entries)
}

/// Fixed-length voltage drive derived from one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageTrace {
    pub values: Vec<f64>,
    pub v_p: f64,
}

impl VoltageTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Half-open source range `[start, end)` covered by output bin `i` when `n`
/// source samples are folded into `t` bins.
pub fn bin_range(i: usize, n: usize, t: usize) -> (usize, usize) {
    let lo = (i as u128 * n as u128 / t as u128) as usize;
    let hi = ((i as u128 + 1) * n as u128 / t as u128) as usize;
    (lo, hi)
}

pub fn standardize_trace(clip: &AudioClip, t: usize, v_p: f64) -> Result<VoltageTrace> {
    standardize_samples(&clip.samples, t, v_p)
}

/// Bin-average `samples` into `t` contiguous bins (zero-padding short clips
/// at the end) and peak-normalize to `v_p`. Silent input stays all-zero.
pub fn standardize_samples(samples: &[f64], t: usize, v_p: f64) -> Result<VoltageTrace> {
    if t == 0 {
        return Err(Error::InvalidArgument("timestep count must be >= 1".into()));
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot standardize an empty clip".into(),
        ));
    }
    if !(v_p.is_finite() && v_p > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "v_p must be positive, got {v_p}"
        )));
    }
    let n = samples.len().max(t);
    let at = |i: usize| samples.get(i).copied().unwrap_or(0.0);
    let mut values: Vec<f64> = (0..t)
        .map(|i| {
            let (lo, hi) = bin_range(i, n, t);
            (lo..hi).map(at).sum::<f64>() / (hi - lo) as f64
        })
        .collect();

    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 && peak != v_p {
        let scale = v_p / peak;
        for v in &mut values {
            *v = if v.abs() == peak {
                v_p.copysign(*v)
            } else {
                (*v * scale).clamp(-v_p, v_p)
            };
        }
    }
    Ok(VoltageTrace { values, v_p })
}
