//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use nanores::network::{AssemblyConfig, Nanowire};

/// Dense Gaussian elimination with partial pivoting. `a` is row-major n x n.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        assert!(d != 0.0, "singular system");
        for r in col + 1..n {
            let f = a[r][col] / d;
            if f == 0.0 {
                continue;
            }
            let pivot = a[col].clone();
            for (v, p) in a[r].iter_mut().zip(&pivot).skip(col) {
                *v -= f * p;
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Nodes reachable from `start` over `edges`.
pub fn reachable(n: usize, edges: &[(usize, usize)], start: usize) -> Vec<bool> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut q = VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                q.push_back(v);
            }
        }
    }
    seen
}

/// Node voltages from a dense nodal analysis of the source component:
/// source at `v`, ground at 0, every other reachable node solved from KCL,
/// unreachable nodes at 0.
pub fn dense_voltages(
    n: usize,
    edges: &[(usize, usize)],
    weights: &[f64],
    source: usize,
    ground: usize,
    v: f64,
) -> Vec<f64> {
    let live = reachable(n, edges, source);
    assert!(live[ground], "ground not reachable from source");
    let unknowns: Vec<usize> = (0..n)
        .filter(|&i| live[i] && i != source && i != ground)
        .collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in unknowns.iter().enumerate() {
        pos[i] = k;
    }
    let m = unknowns.len();
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for (&(p, q), &w) in edges.iter().zip(weights) {
        for (x, y) in [(p, q), (q, p)] {
            if pos[x] == usize::MAX {
                continue;
            }
            a[pos[x]][pos[x]] += w;
            if pos[y] != usize::MAX {
                a[pos[x]][pos[y]] -= w;
            } else if y == source {
                b[pos[x]] += w * v;
            }
        }
    }
    let x = if m > 0 { gauss_solve(a, b) } else { Vec::new() };
    let mut out = vec![0.0; n];
    out[source] = v;
    for (k, &i) in unknowns.iter().enumerate() {
        out[i] = x[k];
    }
    out
}

/// Current leaving the source node.
pub fn source_current(
    edges: &[(usize, usize)],
    weights: &[f64],
    volts: &[f64],
    source: usize,
) -> f64 {
    edges
        .iter()
        .zip(weights)
        .map(|(&(a, b), &w)| {
            if a == source {
                w * (volts[a] - volts[b])
            } else if b == source {
                w * (volts[b] - volts[a])
            } else {
                0.0
            }
        })
        .sum()
}

/// Proper crossing of two segments by solving the 2x2 system for both
/// parameters; `None` for parallel pairs or crossings at or past an end.
pub fn brute_crossing(a: &Nanowire, b: &Nanowire) -> Option<(f64, f64)> {
    let (ax, ay) = (a.p2.x - a.p1.x, a.p2.y - a.p1.y);
    let (bx, by) = (b.p2.x - b.p1.x, b.p2.y - b.p1.y);
    // a.p1 + s*(ax,ay) = b.p1 + t*(bx,by)
    let det = ax * (-by) - (-bx) * ay;
    if det == 0.0 {
        return None;
    }
    let (rx, ry) = (b.p1.x - a.p1.x, b.p1.y - a.p1.y);
    let s = (rx * (-by) - (-bx) * ry) / det;
    let t = (ax * ry - ay * rx) / det;
    let eps = 1e-12;
    (s > eps && s < 1.0 - eps && t > eps && t < 1.0 - eps)
        .then_some((a.p1.x + s * ax, a.p1.y + s * ay))
}

/// Every pair `(i, j, point)` with `i < j` whose crossing lies on the substrate.
pub fn brute_junctions(wires: &[Nanowire], side: f64) -> Vec<(usize, usize, (f64, f64))> {
    let mut out = Vec::new();
    for i in 0..wires.len() {
        for j in i + 1..wires.len() {
            if let Some(p) = brute_crossing(&wires[i], &wires[j]) {
                if (0.0..=side).contains(&p.0) && (0.0..=side).contains(&p.1) {
                    out.push((i, j, p));
                }
            }
        }
    }
    out
}

/// Analytic solution of dg/dt = Kp(1-g) - Kd g from g(0) = 0.
pub fn closed_form_g(kp: f64, kd: f64, t: f64) -> f64 {
    kp / (kp + kd) * (1.0 - (-(kp + kd) * t).exp())
}

/// Indices picked by enumerating candidates: the `i`-th index is the largest
/// `j` with `j * k <= i * n`.
pub fn brute_subsample(n: usize, k: usize) -> Vec<usize> {
    (0..k)
        .map(|i| (0..n).filter(|&j| j * k <= i * n).max().unwrap())
        .collect()
}

/// Assembly config for a network of `n` wires dense enough to percolate
/// reliably (about three times the critical density).
pub fn dense_assembly(n: usize, seed: u64) -> AssemblyConfig {
    AssemblyConfig {
        n_wires: n,
        substrate_side: Some(10.0 * (n as f64).sqrt()),
        seed,
        max_retries: 64,
        ..Default::default()
    }
}

/// Small xorshift for test fixtures that must not depend on the crate's RNG.
pub struct XorShift(pub u64);

impl XorShift {
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
