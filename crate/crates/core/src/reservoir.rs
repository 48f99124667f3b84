//! Per-clip reservoir simulation: Kirchhoff solve, readout, junction update.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{
    standardize_trace, AudioClip, DatasetManifest, ManifestEntry, VoltageTrace, DEFAULT_STEPS,
};
use crate::dynamics::{advance, DynamicsParams};
use crate::error::{Error, IoContext, Result};
use crate::network::{assemble, AssemblyConfig, NetworkTopology};
use crate::solver::{
    build_matrix, junction_conductances, CircuitSolver, ConductanceMatrix, SolveResult,
};
use crate::util::{self, fmt_f64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirConfig {
    pub assembly: AssemblyConfig,
    pub dynamics: DynamicsParams,
    /// Drive length in timesteps.
    pub t: usize,
    /// Drive amplitude, volts.
    pub v_p: f64,
    pub fresh_topology_per_clip: bool,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            assembly: AssemblyConfig::default(),
            dynamics: DynamicsParams::default(),
            t: DEFAULT_STEPS,
            v_p: 1.0,
            fresh_topology_per_clip: false,
        }
    }
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        self.assembly.validate()?;
        self.dynamics.validate()?;
        if self.t == 0 {
            return Err(Error::InvalidArgument("t must be >= 1".into()));
        }
        if !(self.v_p > 0.0 && self.v_p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "v_p must be > 0, got {}",
                self.v_p
            )));
        }
        self.dynamics.substeps_for(self.v_p)?;
        Ok(())
    }
}

/// Identity of the clip a trace came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClipRef {
    pub speaker: String,
    pub digit: u8,
    pub trial: u32,
}

impl ClipRef {
    pub fn new(speaker: impl Into<String>, digit: u8, trial: u32) -> Self {
        Self {
            speaker: speaker.into(),
            digit,
            trial,
        }
    }
}

impl From<&ManifestEntry> for ClipRef {
    fn from(e: &ManifestEntry) -> Self {
        Self::new(e.speaker.clone(), e.digit, e.trial)
    }
}

impl std::fmt::Display for ClipRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.speaker, self.digit, self.trial)
    }
}

/// Effective-conductance readout of one clip, one value per drive step.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceTrace {
    pub values: Vec<f64>,
    pub clip_ref: ClipRef,
    pub topology_seed: u64,
}

/// Stepwise simulation of one network. Every junction starts at `g = 0`.
pub struct Simulation<'a> {
    topology: &'a NetworkTopology,
    params: DynamicsParams,
    substeps: usize,
    matrix: ConductanceMatrix,
    solver: CircuitSolver,
    states: Vec<f64>,
    last: Option<SolveResult>,
}

impl<'a> Simulation<'a> {
    /// `v_max` bounds the drive magnitude and sets the Euler sub-step count.
    pub fn new(topology: &'a NetworkTopology, params: DynamicsParams, v_max: f64) -> Result<Self> {
        params.validate()?;
        let substeps = params.substeps_for(v_max)?;
        let states = vec![0.0; topology.n_junctions()];
        let matrix = build_matrix(topology, &states, &params)?;
        let solver = CircuitSolver::new(&matrix, topology.source_wire, topology.ground_wire)?;
        Ok(Self {
            topology,
            params,
            substeps,
            matrix,
            solver,
            states,
            last: None,
        })
    }

    /// Reuse the symbolic analysis of another simulation on the same topology.
    fn with_solver(
        topology: &'a NetworkTopology,
        params: DynamicsParams,
        substeps: usize,
        solver: CircuitSolver,
    ) -> Result<Self> {
        let states = vec![0.0; topology.n_junctions()];
        let matrix = build_matrix(topology, &states, &params)?;
        Ok(Self {
            topology,
            params,
            substeps,
            matrix,
            solver,
            states,
            last: None,
        })
    }

    pub fn topology(&self) -> &NetworkTopology {
        self.topology
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    /// Solve result of the most recent step (pre-update conductances).
    pub fn last_solve(&self) -> Option<&SolveResult> {
        self.last.as_ref()
    }

    pub fn reset(&mut self) {
        self.states.iter_mut().for_each(|g| *g = 0.0);
        self.last = None;
    }

    /// Solve at the current states, record `g_eff`, then advance every
    /// junction using its solved drop. Returns the pre-update `g_eff`.
    pub fn step(&mut self, v_drive: f64) -> Result<f64> {
        self.matrix
            .set_weights(&junction_conductances(&self.states, &self.params))?;
        let res = self.solver.solve(&self.matrix, v_drive)?;
        for (j, (g, &drop)) in self.states.iter_mut().zip(&res.junction_drops).enumerate() {
            *g = advance(*g, drop, &self.params, self.substeps).map_err(|e| match e {
                Error::Saturated { voltage, .. } => Error::Saturated {
                    junction: Some(j),
                    voltage,
                },
                other => other,
            })?;
        }
        let g_eff = res.g_eff;
        self.last = Some(res);
        Ok(g_eff)
    }

    pub fn run(&mut self, drive: &[f64]) -> std::result::Result<Vec<f64>, (usize, Error)> {
        drive
            .iter()
            .enumerate()
            .map(|(t, &v)| self.step(v).map_err(|e| (t, e)))
            .collect()
    }
}

fn clip_error(clip: &ClipRef, timestep: Option<usize>, source: Error) -> Error {
    Error::Clip {
        clip: clip.to_string(),
        timestep,
        source: Box::new(source),
    }
}

/// A configured reservoir: the shared topology (unless each clip gets its
/// own) plus the solver analysis that goes with it.
pub struct Reservoir {
    config: ReservoirConfig,
    shared: Option<(NetworkTopology, CircuitSolver)>,
    substeps: usize,
}

impl Reservoir {
    pub fn new(config: ReservoirConfig) -> Result<Self> {
        config.validate()?;
        let substeps = config.dynamics.substeps_for(config.v_p)?;
        let shared = if config.fresh_topology_per_clip {
            None
        } else {
            let topo = assemble(&config.assembly)?;
            let solver = analyse(&topo, &config.dynamics)?;
            Some((topo, solver))
        };
        Ok(Self {
            config,
            shared,
            substeps,
        })
    }

    /// Reservoir over a caller-supplied topology (always shared).
    pub fn with_topology(config: ReservoirConfig, topology: NetworkTopology) -> Result<Self> {
        config.validate()?;
        let substeps = config.dynamics.substeps_for(config.v_p)?;
        let solver = analyse(&topology, &config.dynamics)?;
        Ok(Self {
            config: ReservoirConfig {
                fresh_topology_per_clip: false,
                ..config
            },
            shared: Some((topology, solver)),
            substeps,
        })
    }

    pub fn config(&self) -> &ReservoirConfig {
        &self.config
    }

    pub fn topology(&self) -> Option<&NetworkTopology> {
        self.shared.as_ref().map(|(t, _)| t)
    }

    /// Per-clip topology seed in fresh-topology mode.
    pub fn clip_seed(&self, clip: &ClipRef) -> u64 {
        util::fnv1a(&[
            &self.config.assembly.seed.to_le_bytes(),
            clip.speaker.as_bytes(),
            &[clip.digit],
            &clip.trial.to_le_bytes(),
        ])
    }

    pub fn run_clip(&self, trace: &VoltageTrace, clip: &ClipRef) -> Result<ConductanceTrace> {
        if trace.len() != self.config.t {
            return Err(clip_error(
                clip,
                None,
                Error::Shape(format!(
                    "drive has {} steps, config expects {}",
                    trace.len(),
                    self.config.t
                )),
            ));
        }
        let drive = &trace.values;
        let (values, seed) = match &self.shared {
            Some((topo, solver)) => {
                let mut sim = Simulation::with_solver(
                    topo,
                    self.config.dynamics,
                    self.substeps,
                    solver.clone(),
                )
                .map_err(|e| clip_error(clip, None, e))?;
                (sim.run(drive), topo.seed)
            }
            None => {
                let assembly = AssemblyConfig {
                    seed: self.clip_seed(clip),
                    ..self.config.assembly
                };
                let topo = assemble(&assembly).map_err(|e| clip_error(clip, None, e))?;
                let mut sim = Simulation::new(&topo, self.config.dynamics, self.config.v_p)
                    .map_err(|e| clip_error(clip, None, e))?;
                (sim.run(drive), topo.seed)
            }
        };
        let values = values.map_err(|(t, e)| clip_error(clip, Some(t), e))?;
        Ok(ConductanceTrace {
            values,
            clip_ref: clip.clone(),
            topology_seed: seed,
        })
    }

    /// Load, standardize and simulate one manifest entry.
    pub fn run_entry(&self, entry: &ManifestEntry) -> Result<ConductanceTrace> {
        let clip_ref = ClipRef::from(entry);
        let clip = AudioClip::load(entry).map_err(|e| clip_error(&clip_ref, None, e))?;
        let drive = standardize_trace(&clip, self.config.t, self.config.v_p)
            .map_err(|e| clip_error(&clip_ref, None, e))?;
        self.run_clip(&drive, &clip_ref)
    }

    /// Every manifest entry, in manifest order, on the current rayon pool.
    pub fn run_dataset(&self, manifest: &DatasetManifest) -> DatasetRun {
        let results = manifest
            .entries
            .par_iter()
            .map(|e| self.run_entry(e))
            .collect();
        DatasetRun { results }
    }
}

fn analyse(topology: &NetworkTopology, params: &DynamicsParams) -> Result<CircuitSolver> {
    let states = vec![0.0; topology.n_junctions()];
    let matrix = build_matrix(topology, &states, params)?;
    CircuitSolver::new(&matrix, topology.source_wire, topology.ground_wire)
}

/// Convenience wrapper building a reservoir for a single clip.
pub fn run_clip(
    trace: &VoltageTrace,
    config: &ReservoirConfig,
    clip: &ClipRef,
) -> Result<ConductanceTrace> {
    Reservoir::new(*config)?.run_clip(trace, clip)
}

pub fn run_dataset(manifest: &DatasetManifest, config: &ReservoirConfig) -> Result<DatasetRun> {
    if manifest.is_empty() {
        return Err(Error::InsufficientData("manifest is empty".into()));
    }
    Ok(Reservoir::new(*config)?.run_dataset(manifest))
}

/// Per-clip outcomes of a dataset run, in manifest order.
#[derive(Debug)]
pub struct DatasetRun {
    pub results: Vec<Result<ConductanceTrace>>,
}

impl DatasetRun {
    pub fn failures(&self) -> impl Iterator<Item = &Error> {
        self.results.iter().filter_map(|r| r.as_ref().err())
    }

    /// All traces, or every failure bundled into one error.
    pub fn into_traces(self) -> Result<Vec<ConductanceTrace>> {
        let total = self.results.len();
        let mut ok = Vec::with_capacity(total);
        let mut failures = Vec::new();
        for r in self.results {
            match r {
                Ok(t) => ok.push(t),
                Err(e) => failures.push(e),
            }
        }
        if failures.is_empty() {
            Ok(ok)
        } else {
            Err(Error::Batch { total, failures })
        }
    }
}

pub fn write_trace_csv(path: impl AsRef<Path>, trace: &ConductanceTrace) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("timestep,g_eff_siemens\n");
    for (t, v) in trace.values.iter().enumerate() {
        out.push_str(&format!("{t},{}\n", fmt_f64(*v)));
    }
    fs::write(path, out).at(path)
}

pub fn read_trace_csv(
    path: impl AsRef<Path>,
    clip_ref: ClipRef,
    topology_seed: u64,
) -> Result<ConductanceTrace> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).at(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("timestep,g_eff_siemens") {
        return Err(Error::Config(format!(
            "{} lacks the trace CSV header",
            path.display()
        )));
    }
    let values = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_once(',')
                .and_then(|(_, v)| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Config(format!("bad trace row `{l}` in {}", path.display())))
        })
        .collect::<Result<_>>()?;
    Ok(ConductanceTrace {
        values,
        clip_ref,
        topology_seed,
    })
}

pub const PACK_DATA: &str = "traces.bin";
pub const PACK_INDEX: &str = "index.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PackIndex {
    t: usize,
    clips: Vec<PackEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PackEntry {
    speaker: String,
    digit: u8,
    trial: u32,
    topology_seed: u64,
    /// Row offset of this clip's block in the data file.
    offset: usize,
}

/// Columnar pack: little-endian f64 blocks of `t` rows, one per clip, plus a
/// JSON index.
pub fn write_pack(dir: impl AsRef<Path>, traces: &[ConductanceTrace]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).at(dir)?;
    let t = traces.first().map_or(0, |tr| tr.values.len());
    let mut data = Vec::with_capacity(traces.len() * t * 8);
    let mut clips = Vec::with_capacity(traces.len());
    for (i, tr) in traces.iter().enumerate() {
        if tr.values.len() != t {
            return Err(Error::Shape(format!(
                "trace {} has {} rows, expected {t}",
                tr.clip_ref,
                tr.values.len()
            )));
        }
        for v in &tr.values {
            data.extend_from_slice(&v.to_le_bytes());
        }
        clips.push(PackEntry {
            speaker: tr.clip_ref.speaker.clone(),
            digit: tr.clip_ref.digit,
            trial: tr.clip_ref.trial,
            topology_seed: tr.topology_seed,
            offset: i * t,
        });
    }
    let data_path = dir.join(PACK_DATA);
    let mut f = fs::File::create(&data_path).at(&data_path)?;
    f.write_all(&data).at(&data_path)?;
    let index_path = dir.join(PACK_INDEX);
    fs::write(
        &index_path,
        serde_json::to_string_pretty(&PackIndex { t, clips })? + "\n",
    )
    .at(index_path)
}

pub fn read_pack(dir: impl AsRef<Path>) -> Result<Vec<ConductanceTrace>> {
    let dir = dir.as_ref();
    let index_path = dir.join(PACK_INDEX);
    let index: PackIndex = serde_json::from_str(&fs::read_to_string(&index_path).at(&index_path)?)?;
    let data_path = dir.join(PACK_DATA);
    let data = fs::read(&data_path).at(&data_path)?;
    index
        .clips
        .into_iter()
        .map(|c| {
            let start = c.offset * 8;
            let end = start + index.t * 8;
            let block = data.get(start..end).ok_or_else(|| {
                Error::Shape(format!(
                    "pack truncated at clip {}/{}/{}",
                    c.speaker, c.digit, c.trial
                ))
            })?;
            let values = block
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            Ok(ConductanceTrace {
                values,
                clip_ref: ClipRef::new(c.speaker, c.digit, c.trial),
                topology_seed: c.topology_seed,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{conductance, step};
    use crate::network::{Junction, Nanowire, Point};
    use approx::assert_relative_eq;

    fn two_wire() -> NetworkTopology {
        let wires = vec![
            Nanowire::new(0, Point::new(0.0, 0.0), Point::new(2.0, 2.0)),
            Nanowire::new(1, Point::new(1.0, 3.0), Point::new(3.0, 1.0)),
        ];
        let junctions = vec![Junction {
            id: 0,
            wire_a: 0,
            wire_b: 1,
            position: Point::new(2.0, 2.0),
        }];
        NetworkTopology::from_parts(wires, junctions, 0, 1, 4.0, 0).unwrap()
    }

    fn small_config() -> ReservoirConfig {
        ReservoirConfig {
            assembly: AssemblyConfig {
                n_wires: 150,
                mean_length: 40.0,
                std_length: 14.0,
                substrate_side: Some(120.0),
                seed: 5,
                max_retries: 32,
            },
            t: 64,
            ..Default::default()
        }
    }

    #[test]
    fn single_junction_matches_scalar_recurrence() {
        let cfg = ReservoirConfig {
            t: 50,
            v_p: 1.0,
            ..Default::default()
        };
        let res = Reservoir::with_topology(cfg, two_wire()).unwrap();
        let drive = VoltageTrace {
            values: vec![1.0; 50],
            v_p: 1.0,
        };
        let out = res.run_clip(&drive, &ClipRef::new("x", 0, 0)).unwrap();
        let p = cfg.dynamics;
        let mut g = 0.0;
        for &v in &out.values {
            assert_relative_eq!(v, conductance(g, &p), max_relative = 1e-13);
            g = step(g, 1.0, &p).unwrap();
        }
    }

    #[test]
    fn zero_drive_relaxation_is_monotone() {
        let cfg = small_config();
        let res = Reservoir::new(cfg).unwrap();
        let drive = VoltageTrace {
            values: vec![0.0; cfg.t],
            v_p: cfg.v_p,
        };
        let out = res.run_clip(&drive, &ClipRef::new("x", 0, 0)).unwrap();
        assert!(out.values.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)));
        assert!(out.values.iter().all(|&v| v > 0.0));
        let topo = res.topology().unwrap();
        let params = cfg.dynamics;
        let target = params.k_p / (params.k_p + params.k_d);
        let mut sim = Simulation::new(topo, params, cfg.v_p).unwrap();
        for _ in 0..cfg.t {
            sim.step(0.0).unwrap();
        }
        assert!(sim.states().iter().all(|&g| (g - target).abs() < 1e-12));
    }

    #[test]
    fn deterministic_and_isolated() {
        let cfg = small_config();
        let res = Reservoir::new(cfg).unwrap();
        let drive = VoltageTrace {
            values: (0..cfg.t).map(|i| ((i as f64) * 0.7).sin()).collect(),
            v_p: 1.0,
        };
        let clip = ClipRef::new("a", 1, 2);
        let a = res.run_clip(&drive, &clip).unwrap();
        let other = VoltageTrace {
            values: vec![1.0; cfg.t],
            v_p: 1.0,
        };
        res.run_clip(&other, &clip).unwrap();
        let b = res.run_clip(&drive, &clip).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values.len(), cfg.t);
    }

    #[test]
    fn fresh_topology_seeds_are_clip_stable() {
        let cfg = ReservoirConfig {
            fresh_topology_per_clip: true,
            ..small_config()
        };
        let res = Reservoir::new(cfg).unwrap();
        assert!(res.topology().is_none());
        let a = ClipRef::new("a", 1, 2);
        let b = ClipRef::new("a", 1, 3);
        assert_eq!(res.clip_seed(&a), res.clip_seed(&a.clone()));
        assert_ne!(res.clip_seed(&a), res.clip_seed(&b));
        let drive = VoltageTrace {
            values: vec![0.5; cfg.t],
            v_p: 1.0,
        };
        let ta = res.run_clip(&drive, &a).unwrap();
        assert_eq!(ta, res.run_clip(&drive, &a).unwrap());
    }

    #[test]
    fn wrong_drive_length_is_rejected() {
        let res = Reservoir::with_topology(
            ReservoirConfig {
                t: 4,
                ..Default::default()
            },
            two_wire(),
        )
        .unwrap();
        let drive = VoltageTrace {
            values: vec![0.0; 3],
            v_p: 1.0,
        };
        assert!(matches!(
            res.run_clip(&drive, &ClipRef::new("x", 0, 0)),
            Err(Error::Clip { .. })
        ));
    }

    #[test]
    fn pack_and_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let traces = vec![
            ConductanceTrace {
                values: vec![0.1, 0.2, 1.0 / 3.0],
                clip_ref: ClipRef::new("a", 0, 0),
                topology_seed: 7,
            },
            ConductanceTrace {
                values: vec![1e-3, 2e-3, 3e-3],
                clip_ref: ClipRef::new("b", 9, 4),
                topology_seed: 7,
            },
        ];
        write_pack(dir.path(), &traces).unwrap();
        assert_eq!(read_pack(dir.path()).unwrap(), traces);
        let csv = dir.path().join("t.csv");
        write_trace_csv(&csv, &traces[0]).unwrap();
        let back = read_trace_csv(&csv, traces[0].clip_ref.clone(), 7).unwrap();
        assert_eq!(back, traces[0]);
    }
}
