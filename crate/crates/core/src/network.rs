//! Monte Carlo self-assembly of a 2-D nanowire network.
//!
//! Wires are straight segments dropped on a square substrate. Every proper
//! crossing of two wires becomes a memristive junction; each wire is treated
//! as a single equipotential circuit node.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::util;

/// Relative tolerance used for on-segment checks.
pub const GEOMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nanowire {
    pub id: usize,
    pub p1: Point,
    pub p2: Point,
}

impl Nanowire {
    pub fn new(id: usize, p1: Point, p2: Point) -> Self {
        Self { id, p1, p2 }
    }

    pub fn length(&self) -> f64 {
        self.p1.dist(self.p2)
    }

    pub fn midpoint(&self) -> Point {
        Point::new(0.5 * (self.p1.x + self.p2.x), 0.5 * (self.p1.y + self.p2.y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Junction {
    pub id: usize,
    pub wire_a: usize,
    pub wire_b: usize,
    pub position: Point,
}

/// Crossing point of two open segments.
///
/// Parallel, collinear-overlapping and endpoint-touching pairs have no
/// junction.
pub fn intersect(a: &Nanowire, b: &Nanowire) -> Option<Point> {
    let da = a.p2.sub(a.p1);
    let db = b.p2.sub(b.p1);
    let denom = da.cross(db);
    if denom == 0.0 {
        return None;
    }
    let o1 = da.cross(b.p1.sub(a.p1));
    let o2 = da.cross(b.p2.sub(a.p1));
    let o3 = db.cross(a.p1.sub(b.p1));
    let o4 = db.cross(a.p2.sub(b.p1));
    let straddles = |u: f64, v: f64| (u > 0.0 && v < 0.0) || (u < 0.0 && v > 0.0);
    if !(straddles(o1, o2) && straddles(o3, o4)) {
        return None;
    }
    let t = b.p1.sub(a.p1).cross(db) / denom;
    Some(Point::new(a.p1.x + t * da.x, a.p1.y + t * da.y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssemblyConfig {
    pub n_wires: usize,
    /// nm
    pub mean_length: f64,
    /// nm
    pub std_length: f64,
    /// Side of the square substrate in nm. `None` means 7 x mean_length.
    pub substrate_side: Option<f64>,
    pub seed: u64,
    pub max_retries: u32,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self {
            n_wires: 1500,
            mean_length: 40.0,
            std_length: 14.0,
            substrate_side: None,
            seed: 0,
            max_retries: 16,
        }
    }
}

impl AssemblyConfig {
    pub fn side(&self) -> f64 {
        self.substrate_side.unwrap_or(7.0 * self.mean_length)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_wires < 2 {
            return bad(format!("n_wires must be >= 2, got {}", self.n_wires));
        }
        if !(self.mean_length > 0.0 && self.mean_length.is_finite()) {
            return bad(format!("mean_length must be > 0, got {}", self.mean_length));
        }
        if !(self.std_length >= 0.0 && self.std_length.is_finite()) {
            return bad(format!("std_length must be >= 0, got {}", self.std_length));
        }
        let side = self.side();
        if !(side > 0.0 && side.is_finite()) {
            return bad(format!("substrate_side must be > 0, got {side}"));
        }
        Ok(())
    }
}

/// Union-find labeling of the wire-junction graph.
#[derive(Debug, Clone)]
pub struct Components {
    /// Component label per wire; labels are the smallest wire id in the component.
    pub label: Vec<usize>,
}

impl Components {
    pub fn new(n_wires: usize, junctions: &[Junction]) -> Self {
        let mut parent: Vec<usize> = (0..n_wires).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for j in junctions {
            let ra = find(&mut parent, j.wire_a);
            let rb = find(&mut parent, j.wire_b);
            if ra != rb {
                // keep the smaller id as root so labels are canonical
                let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                parent[hi] = lo;
            }
        }
        let label = (0..n_wires).map(|w| find(&mut parent, w)).collect();
        Self { label }
    }

    pub fn connected(&self, a: usize, b: usize) -> bool {
        self.label[a] == self.label[b]
    }

    pub fn size_of(&self, wire: usize) -> usize {
        let l = self.label[wire];
        self.label.iter().filter(|&&x| x == l).count()
    }

    pub fn count(&self) -> usize {
        self.label
            .iter()
            .enumerate()
            .filter(|(i, &l)| *i == l)
            .count()
    }
}

/// Immutable description of an assembled network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub wires: Vec<Nanowire>,
    pub junctions: Vec<Junction>,
    pub source_wire: usize,
    pub ground_wire: usize,
    pub substrate_side: f64,
    pub seed: u64,
    /// Incident junction ids per wire.
    pub adjacency: Vec<Vec<usize>>,
}

impl NetworkTopology {
    /// Build from explicit parts, checking ids and percolation.
    pub fn from_parts(
        wires: Vec<Nanowire>,
        junctions: Vec<Junction>,
        source_wire: usize,
        ground_wire: usize,
        substrate_side: f64,
        seed: u64,
    ) -> Result<Self> {
        let n = wires.len();
        if wires.iter().enumerate().any(|(i, w)| w.id != i) {
            return Err(Error::InvalidArgument(
                "wire ids must be 0..n in order".into(),
            ));
        }
        if junctions.iter().enumerate().any(|(i, j)| j.id != i) {
            return Err(Error::InvalidArgument(
                "junction ids must be 0..m in order".into(),
            ));
        }
        if source_wire >= n || ground_wire >= n || source_wire == ground_wire {
            return Err(Error::InvalidArgument(format!(
                "invalid electrodes: source {source_wire}, ground {ground_wire}, {n} wires"
            )));
        }
        let mut adjacency = vec![Vec::new(); n];
        let mut seen = std::collections::HashSet::new();
        for j in &junctions {
            if j.wire_a >= n || j.wire_b >= n || j.wire_a == j.wire_b {
                return Err(Error::InvalidArgument(format!(
                    "junction {} has invalid wires",
                    j.id
                )));
            }
            let key = (j.wire_a.min(j.wire_b), j.wire_a.max(j.wire_b));
            if !seen.insert(key) {
                return Err(Error::InvalidArgument(format!(
                    "more than one junction between wires {} and {}",
                    key.0, key.1
                )));
            }
            adjacency[j.wire_a].push(j.id);
            adjacency[j.wire_b].push(j.id);
        }
        let topo = Self {
            wires,
            junctions,
            source_wire,
            ground_wire,
            substrate_side,
            seed,
            adjacency,
        };
        let comps = topo.components();
        if !comps.connected(source_wire, ground_wire) {
            return Err(Error::PercolationFailure {
                attempts: 1,
                source_component: comps.size_of(source_wire),
                ground_component: comps.size_of(ground_wire),
                components: comps.count(),
            });
        }
        Ok(topo)
    }

    /// Detect junctions among hand-placed wires and pick corner electrodes.
    pub fn from_wires(wires: Vec<Nanowire>, substrate_side: f64, seed: u64) -> Result<Self> {
        let junctions = find_junctions(&wires, substrate_side);
        let (source, ground) = corner_electrodes(&wires, substrate_side)?;
        Self::from_parts(wires, junctions, source, ground, substrate_side, seed)
    }

    pub fn n_wires(&self) -> usize {
        self.wires.len()
    }

    pub fn n_junctions(&self) -> usize {
        self.junctions.len()
    }

    pub fn components(&self) -> Components {
        Components::new(self.wires.len(), &self.junctions)
    }

    pub fn percolates(&self) -> bool {
        percolates(
            self.wires.len(),
            &self.junctions,
            self.source_wire,
            self.ground_wire,
        )
        .0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&TopologyFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: TopologyFile = serde_json::from_str(text)?;
        f.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").at(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).at(path)?)
    }
}

/// Connectivity check between source and ground plus the component labeling.
pub fn percolates(
    n_wires: usize,
    junctions: &[Junction],
    source: usize,
    ground: usize,
) -> (bool, Components) {
    let comps = Components::new(n_wires, junctions);
    (comps.connected(source, ground), comps)
}

/// Wires whose midpoints are nearest the (0,0) and (side,side) corners.
pub fn corner_electrodes(wires: &[Nanowire], side: f64) -> Result<(usize, usize)> {
    let nearest = |corner: Point| {
        wires
            .iter()
            .map(|w| (w.midpoint().dist(corner), w.id))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id)
    };
    let source = nearest(Point::new(0.0, 0.0));
    let ground = nearest(Point::new(side, side));
    match (source, ground) {
        (Some(s), Some(g)) if s != g => Ok((s, g)),
        _ => Err(Error::InvalidArgument(
            "source and ground resolve to the same wire".into(),
        )),
    }
}

fn on_substrate(p: Point, side: f64) -> bool {
    let tol = GEOMETRY_TOL * side.max(1.0);
    (-tol..=side + tol).contains(&p.x) && (-tol..=side + tol).contains(&p.y)
}

/// All junctions among `wires`, via a uniform spatial grid. Crossings that
/// fall outside the substrate square are discarded. Output is sorted by
/// (wire_a, wire_b) with `wire_a < wire_b`.
pub fn find_junctions(wires: &[Nanowire], side: f64) -> Vec<Junction> {
    if wires.is_empty() {
        return Vec::new();
    }
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    let mut max_len = 0.0f64;
    for w in wires {
        min_x = min_x.min(w.p1.x.min(w.p2.x));
        min_y = min_y.min(w.p1.y.min(w.p2.y));
        max_x = max_x.max(w.p1.x.max(w.p2.x));
        max_y = max_y.max(w.p1.y.max(w.p2.y));
        max_len = max_len.max(w.length());
    }
    let extent = (max_x - min_x).max(max_y - min_y).max(f64::MIN_POSITIVE);
    let cells_per_side =
        ((extent / max_len.max(f64::MIN_POSITIVE)).floor() as usize).clamp(1, 1024);
    let cell = extent / cells_per_side as f64;
    let idx = |v: f64, lo: f64| (((v - lo) / cell) as usize).min(cells_per_side - 1);

    let mut grid: Vec<Vec<usize>> = vec![Vec::new(); cells_per_side * cells_per_side];
    let mut spans = Vec::with_capacity(wires.len());
    for w in wires {
        let (cx0, cx1) = (
            idx(w.p1.x.min(w.p2.x), min_x),
            idx(w.p1.x.max(w.p2.x), min_x),
        );
        let (cy0, cy1) = (
            idx(w.p1.y.min(w.p2.y), min_y),
            idx(w.p1.y.max(w.p2.y), min_y),
        );
        for cy in cy0..=cy1 {
            for cx in cx0..=cx1 {
                grid[cy * cells_per_side + cx].push(w.id);
            }
        }
        spans.push((cx0, cx1, cy0, cy1));
    }

    let mut pairs = Vec::new();
    let mut candidates = Vec::new();
    for a in wires {
        let (cx0, cx1, cy0, cy1) = spans[a.id];
        candidates.clear();
        for cy in cy0..=cy1 {
            for cx in cx0..=cx1 {
                candidates.extend(
                    grid[cy * cells_per_side + cx]
                        .iter()
                        .copied()
                        .filter(|&b| b > a.id),
                );
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
        for &b in &candidates {
            if let Some(p) = intersect(a, &wires[b]) {
                if on_substrate(p, side) {
                    pairs.push((a.id, b, p));
                }
            }
        }
    }
    pairs.sort_by_key(|p| (p.0, p.1));
    pairs
        .into_iter()
        .enumerate()
        .map(|(id, (a, b, position))| Junction {
            id,
            wire_a: a,
            wire_b: b,
            position,
        })
        .collect()
}

/// Drop `n_wires` random segments for one seed.
pub fn place_wires(config: &AssemblyConfig, seed: u64) -> Vec<Nanowire> {
    let side = config.side();
    let mut rng = util::rng(seed);
    let normal = Normal::new(config.mean_length, config.std_length).expect("std_length >= 0");
    let floor = config.mean_length / 10.0;
    (0..config.n_wires)
        .map(|id| {
            let cx = rng.random::<f64>() * side;
            let cy = rng.random::<f64>() * side;
            let theta = rng.random::<f64>() * std::f64::consts::PI;
            let len = loop {
                let l = normal.sample(&mut rng);
                if l >= floor {
                    break l;
                }
            };
            let (dx, dy) = (0.5 * len * theta.cos(), 0.5 * len * theta.sin());
            Nanowire::new(
                id,
                Point::new(cx - dx, cy - dy),
                Point::new(cx + dx, cy + dy),
            )
        })
        .collect()
}

/// Assemble a percolating network, reseeding (seed+1, seed+2, ...) on failure.
pub fn assemble(config: &AssemblyConfig) -> Result<NetworkTopology> {
    config.validate()?;
    let side = config.side();
    let attempts = config.max_retries.max(1);
    let mut last = None;
    for attempt in 0..attempts {
        let seed = config.seed.wrapping_add(u64::from(attempt));
        let wires = place_wires(config, seed);
        let junctions = find_junctions(&wires, side);
        let (source, ground) = corner_electrodes(&wires, side)?;
        let (ok, comps) = percolates(wires.len(), &junctions, source, ground);
        if ok {
            return NetworkTopology::from_parts(wires, junctions, source, ground, side, seed);
        }
        last = Some((comps.size_of(source), comps.size_of(ground), comps.count()));
    }
    let (source_component, ground_component, components) = last.unwrap_or_default();
    Err(Error::PercolationFailure {
        attempts,
        source_component,
        ground_component,
        components,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    id: usize,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JunctionRecord {
    id: usize,
    a: usize,
    b: usize,
    x: f64,
    y: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyFile {
    seed: u64,
    substrate_side: f64,
    wires: Vec<WireRecord>,
    junctions: Vec<JunctionRecord>,
    source: usize,
    ground: usize,
}

impl From<&NetworkTopology> for TopologyFile {
    fn from(t: &NetworkTopology) -> Self {
        Self {
            seed: t.seed,
            substrate_side: t.substrate_side,
            wires: t
                .wires
                .iter()
                .map(|w| WireRecord {
                    id: w.id,
                    x1: w.p1.x,
                    y1: w.p1.y,
                    x2: w.p2.x,
                    y2: w.p2.y,
                })
                .collect(),
            junctions: t
                .junctions
                .iter()
                .map(|j| JunctionRecord {
                    id: j.id,
                    a: j.wire_a,
                    b: j.wire_b,
                    x: j.position.x,
                    y: j.position.y,
                })
                .collect(),
            source: t.source_wire,
            ground: t.ground_wire,
        }
    }
}

impl TryFrom<TopologyFile> for NetworkTopology {
    type Error = Error;

    fn try_from(f: TopologyFile) -> Result<Self> {
        let wires = f
            .wires
            .into_iter()
            .map(|w| Nanowire::new(w.id, Point::new(w.x1, w.y1), Point::new(w.x2, w.y2)))
            .collect();
        let junctions = f
            .junctions
            .into_iter()
            .map(|j| Junction {
                id: j.id,
                wire_a: j.a,
                wire_b: j.b,
                position: Point::new(j.x, j.y),
            })
            .collect();
        NetworkTopology::from_parts(
            wires,
            junctions,
            f.source,
            f.ground,
            f.substrate_side,
            f.seed,
        )
    }
}
