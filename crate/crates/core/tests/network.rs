mod common;

use proptest::prelude::*;

use common::{brute_junctions, dense_assembly, reachable};
use nanores::network::{
    assemble, find_junctions, place_wires, AssemblyConfig, Nanowire, NetworkTopology, Point,
};

fn wire_strategy(side: f64) -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.0..side, 0.0..side, 0.0..std::f64::consts::PI, 5.0..60.0)
}

proptest! {
    #[test]
    fn grid_search_matches_brute_force(
        raw in prop::collection::vec(wire_strategy(100.0), 2..80),
    ) {
        let side = 100.0;
        let wires: Vec<Nanowire> = raw
            .iter()
            .enumerate()
            .map(|(id, &(cx, cy, th, len))| {
                let (dx, dy) = (0.5 * len * th.cos(), 0.5 * len * th.sin());
                Nanowire::new(id, Point::new(cx - dx, cy - dy), Point::new(cx + dx, cy + dy))
            })
            .collect();
        let got = find_junctions(&wires, side);
        let want = brute_junctions(&wires, side);
        prop_assert_eq!(got.len(), want.len());
        for (j, (a, b, p)) in got.iter().zip(&want) {
            prop_assert_eq!((j.wire_a, j.wire_b), (*a, *b));
            prop_assert!((j.position.x - p.0).abs() < 1e-9 && (j.position.y - p.1).abs() < 1e-9);
            prop_assert!((0.0..=side).contains(&j.position.x) && (0.0..=side).contains(&j.position.y));
        }
    }

    #[test]
    fn assembled_networks_are_consistent(n in 20usize..200, seed in 0u64..1000) {
        let topo = assemble(&dense_assembly(n, seed)).unwrap();
        let side = topo.substrate_side;
        for (i, j) in topo.junctions.iter().enumerate() {
            prop_assert_eq!(j.id, i);
            prop_assert!(j.wire_a < j.wire_b);
            prop_assert!((0.0..=side).contains(&j.position.x) && (0.0..=side).contains(&j.position.y));
            prop_assert!(topo.adjacency[j.wire_a].contains(&i));
            prop_assert!(topo.adjacency[j.wire_b].contains(&i));
        }
        let edges: Vec<_> = topo.junctions.iter().map(|j| (j.wire_a, j.wire_b)).collect();
        prop_assert!(reachable(topo.n_wires(), &edges, topo.source_wire)[topo.ground_wire]);
        prop_assert_eq!(topo.junctions.len(), brute_junctions(&topo.wires, side).len());
    }
}

#[test]
fn assembly_is_reproducible_and_serializable() {
    let cfg = dense_assembly(150, 3);
    let a = assemble(&cfg).unwrap();
    let b = assemble(&cfg).unwrap();
    assert_eq!(a, b);
    let back = NetworkTopology::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
    assert_ne!(assemble(&dense_assembly(150, 4)).unwrap().wires, a.wires);
}

#[test]
fn length_statistics_at_full_scale() {
    let cfg = AssemblyConfig::default();
    let (mut means, mut stds) = (0.0, 0.0);
    let seeds = 8;
    for seed in 0..seeds {
        let lens: Vec<f64> = place_wires(&cfg, seed)
            .iter()
            .map(Nanowire::length)
            .collect();
        let m = lens.iter().sum::<f64>() / lens.len() as f64;
        let v = lens.iter().map(|l| (l - m) * (l - m)).sum::<f64>() / lens.len() as f64;
        means += m;
        stds += v.sqrt();
    }
    let (m, s) = (means / seeds as f64, stds / seeds as f64);
    assert!((m - 40.0).abs() <= 0.05 * 40.0, "mean {m}");
    assert!((s - 14.0).abs() <= 0.15 * 14.0, "std {s}");
}

#[test]
fn electrodes_are_the_corner_wires() {
    let topo = assemble(&dense_assembly(200, 11)).unwrap();
    let side = topo.substrate_side;
    let d = |w: &Nanowire, c: Point| w.midpoint().dist(c);
    let nearest = |c: Point| {
        topo.wires
            .iter()
            .min_by(|a, b| d(a, c).total_cmp(&d(b, c)))
            .unwrap()
            .id
    };
    assert_eq!(topo.source_wire, nearest(Point::new(0.0, 0.0)));
    assert_eq!(topo.ground_wire, nearest(Point::new(side, side)));
}

#[test]
fn sparse_substrate_reports_percolation_failure() {
    let cfg = AssemblyConfig {
        n_wires: 10,
        max_retries: 3,
        ..Default::default()
    };
    assert!(matches!(
        assemble(&cfg),
        Err(nanores::Error::PercolationFailure { attempts: 3, .. })
    ));
}
