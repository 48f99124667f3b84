use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{csv_floats, Emitter, ExperimentConfig};
use crate::audio::{standardize_trace, AudioClip, DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::network::{assemble, NetworkTopology};
use crate::reservoir::{ReservoirConfig, Simulation};
use crate::util::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "k_p", alias = "kp")]
    KP,
    #[serde(rename = "k_d", alias = "kd")]
    KD,
    #[serde(rename = "v_p", alias = "vp")]
    VP,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::KP => "k_p",
            SweepParam::KD => "k_d",
            SweepParam::VP => "v_p",
        }
    }

    /// Short form used in file names.
    pub fn tag(self) -> &'static str {
        match self {
            SweepParam::KP => "kp",
            SweepParam::KD => "kd",
            SweepParam::VP => "vp",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepParam::KP => vec![0.0001, 0.001, 0.01, 0.1, 0.5],
            SweepParam::KD => vec![0.3, 0.4, 0.5],
            SweepParam::VP => vec![0.5, 1.0, 2.0, 5.0],
        }
    }

    pub fn apply(self, base: &ReservoirConfig, value: f64) -> ReservoirConfig {
        let mut c = *base;
        match self {
            SweepParam::KP => c.dynamics.k_p = value,
            SweepParam::KD => c.dynamics.k_d = value,
            SweepParam::VP => c.v_p = value,
        }
        c
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k_p" | "kp" => Ok(Self::KP),
            "k_d" | "kd" => Ok(Self::KD),
            "v_p" | "vp" => Ok(Self::VP),
            other => Err(Error::InvalidArgument(format!(
                "unknown sweep parameter `{other}` (k_p, k_d, v_p)"
            ))),
        }
    }
}

/// Fraction of steps within the top 2% of the trace's range. A flat trace
/// counts as fully saturated.
pub fn saturation_fraction(trace: &[f64]) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    let (lo, hi) = trace
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let cut = hi - 0.02 * (hi - lo);
    trace.iter().filter(|&&v| v >= cut).count() as f64 / trace.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub trace: Vec<f64>,
    pub saturation: f64,
    /// Mean junction state after the last step.
    pub final_mean_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub param: SweepParam,
    pub probe: String,
    pub topology_seed: u64,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    /// Everything but the traces.
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "param": self.param,
            "probe": self.probe,
            "topology_seed": self.topology_seed,
            "points": self.points.iter().map(|p| serde_json::json!({
                "value": p.value,
                "saturation": p.saturation,
                "final_mean_g": p.final_mean_g,
            })).collect::<Vec<_>>(),
        })
    }

    pub fn traces_csv(&self) -> String {
        let mut out = String::from("timestep");
        for p in &self.points {
            out.push_str(&format!(",{}={}", self.param.name(), p.value));
        }
        out.push('\n');
        let t = self.points.first().map_or(0, |p| p.trace.len());
        for i in 0..t {
            out.push_str(&format!(
                "{i},{}\n",
                csv_floats(self.points.iter().map(|p| p.trace[i]))
            ));
        }
        out
    }

    pub fn saturation_csv(&self) -> String {
        let mut out = format!("{},saturation_fraction,final_mean_g\n", self.param.name());
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{}\n",
                p.value,
                fmt_f64(p.saturation),
                fmt_f64(p.final_mean_g)
            ));
        }
        out
    }
}

/// Drive one clip through `topology` once per grid value, varying `param`
/// and holding everything else at `base`.
pub fn sweep_clip(
    clip: &AudioClip,
    topology: &NetworkTopology,
    base: &ReservoirConfig,
    param: SweepParam,
    grid: &[f64],
) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    grid.par_iter()
        .map(|&value| {
            let cfg = param.apply(base, value);
            cfg.validate()?;
            let drive = standardize_trace(clip, cfg.t, cfg.v_p)?;
            let mut sim = Simulation::new(topology, cfg.dynamics, cfg.v_p)?;
            let trace = sim.run(&drive.values).map_err(|(t, e)| Error::Clip {
                clip: format!("{}={value} probe", param.name()),
                timestep: Some(t),
                source: Box::new(e),
            })?;
            let states = sim.states();
            let final_mean_g = if states.is_empty() {
                0.0
            } else {
                states.iter().sum::<f64>() / states.len() as f64
            };
            Ok(SweepPoint {
                value,
                saturation: saturation_fraction(&trace),
                trace,
                final_mean_g,
            })
        })
        .collect()
}

fn probe_entry<'a>(
    manifest: &'a DatasetManifest,
    config: &ExperimentConfig,
) -> Result<&'a ManifestEntry> {
    let find = |s: &str, d: u8, t: u32| {
        manifest
            .entries
            .iter()
            .find(|e| e.speaker == s && e.digit == d && e.trial == t)
    };
    match &config.sweep.probe {
        Some(p) => find(&p.speaker, p.digit, p.trial).ok_or_else(|| {
            Error::InsufficientData(format!(
                "probe clip {}/{}/{} not in manifest",
                p.speaker, p.digit, p.trial
            ))
        }),
        None => find("george", 0, 0)
            .or(manifest.entries.first())
            .ok_or_else(|| Error::InsufficientData("manifest is empty".into())),
    }
}

pub fn parameter_sweep(
    manifest: &DatasetManifest,
    config: &ExperimentConfig,
    out: &mut Emitter,
) -> Result<SweepReport> {
    let entry = probe_entry(manifest, config)?;
    let clip = AudioClip::load(entry)?;
    let topology = assemble(&config.reservoir.assembly)?;
    let param = config.sweep.param;
    let grid = if config.sweep.grid.is_empty() {
        param.default_grid()
    } else {
        config.sweep.grid.clone()
    };
    let points = sweep_clip(&clip, &topology, &config.reservoir, param, &grid)?;
    let report = SweepReport {
        param,
        probe: entry.clip_ref(),
        topology_seed: topology.seed,
        points,
    };
    out.write(
        &format!("fig3_sweep_{}.csv", param.tag()),
        &report.traces_csv(),
    )?;
    out.write(
        &format!("fig3_saturation_{}.csv", param.tag()),
        &report.saturation_csv(),
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturation_fraction_counts_top_band() {
        assert_eq!(saturation_fraction(&[0.0, 1.0, 0.5, 0.99]), 0.5);
        assert_eq!(saturation_fraction(&[2.0; 4]), 1.0);
        let ramp: Vec<f64> = (0..100).map(f64::from).collect();
        // values >= 99 - 1.98
        assert_eq!(saturation_fraction(&ramp), 0.02);
    }

    #[test]
    fn param_names_round_trip() {
        for p in [SweepParam::KP, SweepParam::KD, SweepParam::VP] {
            assert_eq!(p.name().parse::<SweepParam>().unwrap(), p);
            assert_eq!(p.tag().parse::<SweepParam>().unwrap(), p);
            let j = serde_json::to_string(&p).unwrap();
            assert_eq!(serde_json::from_str::<SweepParam>(&j).unwrap(), p);
        }
        let c = SweepParam::VP.apply(&ReservoirConfig::default(), 5.0);
        assert_eq!(c.v_p, 5.0);
    }
}
