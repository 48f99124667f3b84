//! Kirchhoff solve of the junction resistor network.
//!
//! Wires are nodes and junctions are conductance edges. The weighted graph
//! Laplacian is reduced by eliminating the ground node and imposing the source
//! voltage as a Dirichlet condition; the remaining SPD system is solved with a
//! sparse Cholesky factorization. The elimination ordering and fill pattern
//! depend only on the topology, so [`CircuitSolver`] computes them once and
//! refactors numerically at each timestep.

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use crate::dynamics::{conductance, DynamicsParams};
use crate::error::{Error, Result};
use crate::network::NetworkTopology;

/// Relative residual contract for every solve.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Sparse symmetric weighted Laplacian over wire nodes, stored as CSR with the
/// diagonal kept separately. Off-diagonal entries are `-G` for the junction
/// between the two wires.
#[derive(Debug, Clone)]
pub struct ConductanceMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    /// Edge index behind each off-diagonal slot.
    slot_edge: Vec<usize>,
    edges: Vec<(usize, usize)>,
    weights: Vec<f64>,
    diag: Vec<f64>,
}

impl ConductanceMatrix {
    /// Laplacian of `n` nodes joined by `edges` with conductances `weights`.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], weights: &[f64]) -> Result<Self> {
        if edges.len() != weights.len() {
            return Err(Error::Shape(format!(
                "{} edges but {} weights",
                edges.len(),
                weights.len()
            )));
        }
        let mut per_row: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (e, &(a, b)) in edges.iter().enumerate() {
            if a >= n || b >= n || a == b {
                return Err(Error::InvalidArgument(format!(
                    "edge {e} = ({a}, {b}) is invalid for {n} nodes"
                )));
            }
            per_row[a].push((b, e));
            per_row[b].push((a, e));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::with_capacity(2 * edges.len());
        let mut slot_edge = Vec::with_capacity(2 * edges.len());
        row_ptr.push(0);
        for row in &mut per_row {
            row.sort_unstable();
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidArgument(
                    "parallel edges between one node pair".into(),
                ));
            }
            for &(c, e) in row.iter() {
                col.push(c);
                slot_edge.push(e);
            }
            row_ptr.push(col.len());
        }
        let mut m = Self {
            n,
            row_ptr,
            col,
            slot_edge,
            edges: edges.to_vec(),
            weights: vec![0.0; edges.len()],
            diag: vec![0.0; n],
        };
        m.set_weights(weights)?;
        Ok(m)
    }

    /// Replace all edge conductances, keeping the sparsity pattern.
    pub fn set_weights(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.edges.len() {
            return Err(Error::Shape(format!(
                "{} edges but {} weights",
                self.edges.len(),
                weights.len()
            )));
        }
        if let Some((e, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::Numerical(format!(
                "edge {e} has non-positive conductance {w}"
            )));
        }
        self.weights.copy_from_slice(weights);
        self.diag.iter_mut().for_each(|d| *d = 0.0);
        for (&(a, b), &w) in self.edges.iter().zip(weights) {
            self.diag[a] += w;
            self.diag[b] += w;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Neighbors of `node` with the connecting edge index.
    pub fn row(&self, node: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let r = self.row_ptr[node]..self.row_ptr[node + 1];
        self.col[r.clone()]
            .iter()
            .copied()
            .zip(self.slot_edge[r].iter().copied())
    }

    /// Entry `(i, j)` of the Laplacian.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col[r.clone()].binary_search(&j) {
            Ok(k) => -self.weights[self.slot_edge[r.start + k]],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// `L x` over all nodes.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                self.diag[i] * x[i]
                    - self
                        .row(i)
                        .map(|(j, e)| self.weights[e] * x[j])
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Junction conductances for the given memory states.
pub fn junction_conductances(states: &[f64], params: &DynamicsParams) -> Vec<f64> {
    states.iter().map(|&g| conductance(g, params)).collect()
}

/// Laplacian of a topology with junction `j` weighted by `conductance(states[j])`.
pub fn build_matrix(
    topology: &NetworkTopology,
    states: &[f64],
    params: &DynamicsParams,
) -> Result<ConductanceMatrix> {
    if states.len() != topology.n_junctions() {
        return Err(Error::Shape(format!(
            "{} states for {} junctions",
            states.len(),
            topology.n_junctions()
        )));
    }
    let edges: Vec<(usize, usize)> = topology
        .junctions
        .iter()
        .map(|j| (j.wire_a, j.wire_b))
        .collect();
    ConductanceMatrix::from_edges(
        topology.n_wires(),
        &edges,
        &junction_conductances(states, params),
    )
}

/// Result of one Kirchhoff solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    /// Volts per wire; ground = 0, source = drive, isolated wires 0.
    pub node_voltages: Vec<f64>,
    /// Signed drop `V[a] - V[b]` per edge.
    pub junction_drops: Vec<f64>,
    /// Amperes into the network at the source.
    pub source_current: f64,
    /// Source-to-ground conductance, siemens.
    pub g_eff: f64,
    /// Relative residual of the reduced system at unit drive.
    pub residual: f64,
    pub refinements: usize,
}

/// Elimination order and fill pattern for the reduced system.
#[derive(Debug, Clone)]
struct Symbolic {
    /// Reduced-system node at each elimination position.
    order: Vec<usize>,
    /// Strictly-lower column pattern of the factor (positions), CSC.
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// For each position j: (column k < j, slot in column k holding row j).
    row_refs_ptr: Vec<usize>,
    row_refs: Vec<(usize, usize)>,
    /// For each position j: (slot in column j, original edge index) for the
    /// entries of the reduced matrix below the diagonal.
    a_ptr: Vec<usize>,
    a_entries: Vec<(usize, usize)>,
}

/// Greedy minimum-degree elimination on the reduced graph. Returns the order
/// and, for each eliminated node, its neighbor set at elimination time.
fn minimum_degree(adj: &[Vec<usize>]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let m = adj.len();
    let mut sets: Vec<BTreeSet<usize>> = adj.iter().map(|a| a.iter().copied().collect()).collect();
    let mut alive = vec![true; m];
    let mut order = Vec::with_capacity(m);
    let mut patterns = vec![Vec::new(); m];
    for _ in 0..m {
        let v = (0..m)
            .filter(|&v| alive[v])
            .min_by_key(|&v| (sets[v].len(), v))
            .expect("a live node remains");
        alive[v] = false;
        let nbrs: Vec<usize> = std::mem::take(&mut sets[v]).into_iter().collect();
        for &u in &nbrs {
            sets[u].remove(&v);
            for &w in &nbrs {
                if w != u {
                    sets[u].insert(w);
                }
            }
        }
        order.push(v);
        patterns[v] = nbrs;
    }
    (order, patterns)
}

/// Factorization-ready view of the electrode component of a network.
#[derive(Debug, Clone)]
pub struct CircuitSolver {
    n_nodes: usize,
    source: usize,
    ground: usize,
    /// Reduced index per node (None for electrodes and isolated nodes).
    unknown_of: Vec<Option<usize>>,
    /// Node per reduced index.
    nodes: Vec<usize>,
    /// For each reduced index: edges into the source (contribute to rhs).
    source_edges: Vec<Vec<usize>>,
    /// Edges incident to the source node.
    source_row: Vec<(usize, usize)>,
    sym: Symbolic,
    // numeric workspace
    diag_l: Vec<f64>,
    val_l: Vec<f64>,
    work: Vec<f64>,
}

impl CircuitSolver {
    /// Analyse the pattern of `matrix` for the given electrodes.
    pub fn new(matrix: &ConductanceMatrix, source: usize, ground: usize) -> Result<Self> {
        let n = matrix.n();
        if source >= n || ground >= n || source == ground {
            return Err(Error::InvalidArgument(format!(
                "invalid electrodes source={source} ground={ground} for {n} nodes"
            )));
        }
        // electrode component by BFS from the source
        let mut reached = vec![false; n];
        reached[source] = true;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for (v, _) in matrix.row(u) {
                if !reached[v] {
                    reached[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if !reached[ground] {
            return Err(Error::NotPercolating);
        }
        let mut unknown_of = vec![None; n];
        let mut nodes = Vec::new();
        for v in 0..n {
            if reached[v] && v != source && v != ground {
                unknown_of[v] = Some(nodes.len());
                nodes.push(v);
            }
        }
        let m = nodes.len();
        let mut adj = vec![Vec::new(); m];
        let mut source_edges = vec![Vec::new(); m];
        for (i, &v) in nodes.iter().enumerate() {
            for (u, e) in matrix.row(v) {
                if let Some(j) = unknown_of[u] {
                    adj[i].push(j);
                } else if u == source {
                    source_edges[i].push(e);
                }
            }
        }
        let source_row = matrix.row(source).collect();

        let (order, patterns) = minimum_degree(&adj);
        let mut pos = vec![0; m];
        for (p, &v) in order.iter().enumerate() {
            pos[v] = p;
        }
        let mut col_ptr = Vec::with_capacity(m + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for &v in &order {
            let mut rows: Vec<usize> = patterns[v].iter().map(|&u| pos[u]).collect();
            rows.sort_unstable();
            row_idx.extend(rows);
            col_ptr.push(row_idx.len());
        }
        let mut refs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m];
        for k in 0..m {
            for slot in col_ptr[k]..col_ptr[k + 1] {
                refs[row_idx[slot]].push((k, slot));
            }
        }
        let mut row_refs_ptr = vec![0];
        let mut row_refs = Vec::new();
        for r in refs {
            row_refs.extend(r);
            row_refs_ptr.push(row_refs.len());
        }
        let mut a_ptr = vec![0];
        let mut a_entries = Vec::new();
        for (j, &v) in order.iter().enumerate() {
            let node = nodes[v];
            let col_rows = &row_idx[col_ptr[j]..col_ptr[j + 1]];
            for (u, e) in matrix.row(node) {
                if let Some(ui) = unknown_of[u] {
                    let pu = pos[ui];
                    if pu > j {
                        let slot =
                            col_ptr[j] + col_rows.binary_search(&pu).expect("edge in fill pattern");
                        a_entries.push((slot, e));
                    }
                }
            }
            a_ptr.push(a_entries.len());
        }
        let nnz = row_idx.len();
        Ok(Self {
            n_nodes: n,
            source,
            ground,
            unknown_of,
            nodes,
            source_edges,
            source_row,
            sym: Symbolic {
                order,
                col_ptr,
                row_idx,
                row_refs_ptr,
                row_refs,
                a_ptr,
                a_entries,
            },
            diag_l: vec![0.0; m],
            val_l: vec![0.0; nnz],
            work: vec![0.0; m],
        })
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn ground(&self) -> usize {
        self.ground
    }

    /// Number of interior unknowns in the reduced system.
    pub fn n_unknowns(&self) -> usize {
        self.nodes.len()
    }

    /// Number of stored off-diagonal factor entries.
    pub fn factor_nnz(&self) -> usize {
        self.sym.row_idx.len()
    }

    /// Whether `node` belongs to the source/ground component.
    pub fn in_circuit(&self, node: usize) -> bool {
        node == self.source || node == self.ground || self.unknown_of[node].is_some()
    }

    fn check_matrix(&self, matrix: &ConductanceMatrix) -> Result<()> {
        if matrix.n() != self.n_nodes {
            return Err(Error::Shape(format!(
                "solver analysed {} nodes, matrix has {}",
                self.n_nodes,
                matrix.n()
            )));
        }
        Ok(())
    }

    fn factorize(&mut self, matrix: &ConductanceMatrix) -> Result<()> {
        let sym = &self.sym;
        let m = sym.order.len();
        let w = &mut self.work;
        let weights = matrix.weights();
        for j in 0..m {
            let node = self.nodes[sym.order[j]];
            let mut djj = matrix.diag()[node];
            for &(slot, e) in &sym.a_entries[sym.a_ptr[j]..sym.a_ptr[j + 1]] {
                w[sym.row_idx[slot]] = -weights[e];
            }
            for &(k, slot) in &sym.row_refs[sym.row_refs_ptr[j]..sym.row_refs_ptr[j + 1]] {
                let ljk = self.val_l[slot];
                djj -= ljk * ljk;
                for t in slot + 1..sym.col_ptr[k + 1] {
                    w[sym.row_idx[t]] -= self.val_l[t] * ljk;
                }
            }
            if !(djj > 0.0 && djj.is_finite()) {
                return Err(Error::Numerical(format!(
                    "reduced Laplacian not positive definite at node {node} (pivot {djj:e})"
                )));
            }
            let ljj = djj.sqrt();
            self.diag_l[j] = ljj;
            for t in sym.col_ptr[j]..sym.col_ptr[j + 1] {
                let r = sym.row_idx[t];
                self.val_l[t] = w[r] / ljj;
                w[r] = 0.0;
            }
        }
        Ok(())
    }

    /// Solve `L Lᵀ x = b` in place, `b` given in elimination positions.
    fn substitute(&self, x: &mut [f64]) {
        let sym = &self.sym;
        let m = x.len();
        for j in 0..m {
            let xj = x[j] / self.diag_l[j];
            x[j] = xj;
            for t in sym.col_ptr[j]..sym.col_ptr[j + 1] {
                x[sym.row_idx[t]] -= self.val_l[t] * xj;
            }
        }
        for j in (0..m).rev() {
            let mut s = x[j];
            for t in sym.col_ptr[j]..sym.col_ptr[j + 1] {
                s -= self.val_l[t] * x[sym.row_idx[t]];
            }
            x[j] = s / self.diag_l[j];
        }
    }

    /// Residual `b - A u` of the reduced system at unit drive, in reduced indices.
    fn reduced_residual(&self, matrix: &ConductanceMatrix, u: &[f64]) -> (Vec<f64>, f64) {
        let weights = matrix.weights();
        let mut r = Vec::with_capacity(self.nodes.len());
        let mut b_norm2 = 0.0;
        for (i, &node) in self.nodes.iter().enumerate() {
            let b: f64 = self.source_edges[i].iter().map(|&e| weights[e]).sum();
            b_norm2 += b * b;
            let mut au = matrix.diag()[node] * u[i];
            for (v, e) in matrix.row(node) {
                if let Some(j) = self.unknown_of[v] {
                    au -= weights[e] * u[j];
                }
            }
            r.push(b - au);
        }
        (r, b_norm2.sqrt())
    }

    /// Node voltages at unit source drive (reduced unknowns only) plus the
    /// relative residual and number of refinement passes.
    fn solve_unit(&mut self, matrix: &ConductanceMatrix) -> Result<(Vec<f64>, f64, usize)> {
        self.check_matrix(matrix)?;
        let m = self.nodes.len();
        if m == 0 {
            return Ok((Vec::new(), 0.0, 0));
        }
        self.factorize(matrix)?;
        let weights = matrix.weights();
        let order = &self.sym.order;
        let mut x: Vec<f64> = order
            .iter()
            .map(|&v| self.source_edges[v].iter().map(|&e| weights[e]).sum())
            .collect();
        self.substitute(&mut x);
        let mut u = vec![0.0; m];
        for (p, &v) in order.iter().enumerate() {
            u[v] = x[p];
        }
        let (mut r, b_norm) = self.reduced_residual(matrix, &u);
        let rel =
            |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt() / b_norm.max(f64::MIN_POSITIVE);
        let mut res = rel(&r);
        let mut refinements = 0;
        while res > 1e-12 && refinements < 2 {
            let mut d: Vec<f64> = order.iter().map(|&v| r[v]).collect();
            self.substitute(&mut d);
            for (p, &v) in order.iter().enumerate() {
                u[v] += d[p];
            }
            refinements += 1;
            let (r2, _) = self.reduced_residual(matrix, &u);
            r = r2;
            res = rel(&r);
        }
        if res.is_nan() || res > RESIDUAL_TOL {
            return Err(Error::SolverDiverged {
                iterations: refinements,
                residual: res,
            });
        }
        Ok((u, res, refinements))
    }

    /// Unit-drive node voltages over all nodes and the effective conductance.
    pub fn unit_voltages(&mut self, matrix: &ConductanceMatrix) -> Result<(Vec<f64>, f64)> {
        let (u, _, _) = self.solve_unit(matrix)?;
        let volts = self.scatter(&u, 1.0);
        let g_eff = self.source_current(matrix, &volts);
        Ok((volts, g_eff))
    }

    fn scatter(&self, u: &[f64], v_drive: f64) -> Vec<f64> {
        let mut volts = vec![0.0; self.n_nodes];
        volts[self.source] = v_drive;
        for (i, &node) in self.nodes.iter().enumerate() {
            volts[node] = v_drive * u[i];
        }
        volts
    }

    fn source_current(&self, matrix: &ConductanceMatrix, volts: &[f64]) -> f64 {
        let vs = volts[self.source];
        self.source_row
            .iter()
            .map(|&(v, e)| matrix.weights()[e] * (vs - volts[v]))
            .sum()
    }

    /// Full solve at drive `v_drive`. The factorization is done at unit drive
    /// and scaled, so `g_eff` is defined for `v_drive = 0` as well.
    pub fn solve(&mut self, matrix: &ConductanceMatrix, v_drive: f64) -> Result<SolveResult> {
        if !v_drive.is_finite() {
            return Err(Error::Numerical(format!("non-finite drive {v_drive}")));
        }
        let (u, residual, refinements) = self.solve_unit(matrix)?;
        let unit = self.scatter(&u, 1.0);
        let g_eff = self.source_current(matrix, &unit);
        let node_voltages = self.scatter(&u, v_drive);
        let junction_drops = matrix
            .edges()
            .iter()
            .map(|&(a, b)| node_voltages[a] - node_voltages[b])
            .collect();
        Ok(SolveResult {
            node_voltages,
            junction_drops,
            source_current: g_eff * v_drive,
            g_eff,
            residual,
            refinements,
        })
    }
}

/// One-shot solve of `matrix` with `source` held at `v_drive` and `ground` at 0 V.
pub fn solve(
    matrix: &ConductanceMatrix,
    source: usize,
    ground: usize,
    v_drive: f64,
) -> Result<SolveResult> {
    CircuitSolver::new(matrix, source, ground)?.solve(matrix, v_drive)
}

/// Two-point source-to-ground conductance.
pub fn effective_conductance(
    matrix: &ConductanceMatrix,
    source: usize,
    ground: usize,
) -> Result<f64> {
    Ok(solve(matrix, source, ground, 1.0)?.g_eff)
}
