mod common;

use proptest::prelude::*;

use common::closed_form_g;
use nanores::dynamics::{advance, fixed_point, rates, step, DynamicsParams, VoltageMode};

fn params(k_p: f64, k_d: f64) -> DynamicsParams {
    DynamicsParams {
        k_p,
        k_d,
        ..Default::default()
    }
}

proptest! {
    #[test]
    fn state_stays_bounded(
        g0 in 0.0f64..=1.0,
        drive in prop::collection::vec(-5.0f64..5.0, 1..200),
        k_p in 1e-4f64..0.5,
        k_d in 0.3f64..0.5,
        signed in any::<bool>(),
    ) {
        let mut p = params(k_p, k_d);
        if signed {
            p.mode = VoltageMode::Signed;
        }
        let n = p.substeps_for(5.0).unwrap();
        let mut g = g0;
        for &v in &drive {
            g = advance(g, v, &p, n).unwrap();
            prop_assert!((0.0..=1.0).contains(&g));
            // a single unsplit step is clamped too
            prop_assert!((0.0..=1.0).contains(&step(g, v, &p).unwrap()));
        }
    }

    #[test]
    fn response_is_monotone_in_k_p(
        g in 0.0f64..=1.0,
        v in 0.0f64..2.0,
        k_d in 0.3f64..0.5,
        a in 1e-4f64..0.2,
        b in 1e-4f64..0.2,
    ) {
        let (lo, hi) = (a.min(b), a.max(b));
        let p_lo = params(lo, k_d);
        let p_hi = params(hi, k_d);
        prop_assert!(step(g, v, &p_hi).unwrap() >= step(g, v, &p_lo).unwrap());
    }

    #[test]
    fn zero_input_relaxes_to_rate_ratio(g0 in 0.0f64..=1.0, k_p in 1e-4f64..0.4, k_d in 0.3f64..0.5) {
        let p = params(k_p, k_d);
        let mut g = g0;
        for _ in 0..200 {
            g = step(g, 0.0, &p).unwrap();
        }
        prop_assert!((g - k_p / (k_p + k_d)).abs() < 1e-12);
    }
}

#[test]
fn rate_examples() {
    let p = DynamicsParams::default();
    assert_eq!(rates(0.0, &p).unwrap(), (0.001, 0.5));
    let (kp, kd) = rates(1.0, &p).unwrap();
    assert!((kp - 0.001 * std::f64::consts::E).abs() < 1e-18);
    assert!((kd - 0.5 / std::f64::consts::E).abs() < 1e-15);
    let flat = DynamicsParams {
        eta_p: 0.0,
        eta_d: 0.0,
        ..p
    };
    assert_eq!(rates(3.7, &flat).unwrap(), (0.001, 0.5));
    // g = 0, dt = 1 gives g' = Kp
    assert_eq!(step(0.0, 1.0, &p).unwrap(), kp);
    let gs = fixed_point(0.7, &p).unwrap();
    assert!((step(gs, 0.7, &p).unwrap() - gs).abs() < 1e-16);
    assert!(step(f64::NAN, 0.0, &p).is_err());
    assert!(step(0.5, f64::INFINITY, &p).is_err());
}

#[test]
fn euler_is_first_order() {
    let dev = |dt: f64| {
        let p = DynamicsParams {
            dt,
            ..Default::default()
        };
        let (kp, kd) = rates(1.0, &p).unwrap();
        let mut g = 0.0;
        let mut worst = 0.0f64;
        let steps = (20.0 / dt).round() as usize;
        for i in 1..=steps {
            g = step(g, 1.0, &p).unwrap();
            worst = worst.max((g - closed_form_g(kp, kd, i as f64 * dt)).abs());
        }
        worst
    };
    let d = [dev(0.1), dev(0.05), dev(0.025)];
    for w in d.windows(2) {
        let r = w[0] / w[1];
        assert!((1.8..=2.2).contains(&r), "ratio {r} from {d:?}");
    }
}
