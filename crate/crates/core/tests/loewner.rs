use proptest::prelude::*;
use slelab::loewner::{evolve_point, invert_map, map_forward, tip_at, trace_curve, DrivingPath};
use slelab::Complex64;

fn sqrt_driver(c: f64, steps: usize) -> DrivingPath {
    DrivingPath::from_fn(1.0, steps, |t| c * t.sqrt()).unwrap()
}

/// RK4 on `∂_t g = 2/(g − c√t)` with a fine uniform step.
fn reference_flow(z: Complex64, c: f64, t_end: f64, steps: usize) -> Complex64 {
    let h = t_end / steps as f64;
    let f = |t: f64, g: Complex64| 2.0 / (g - c * t.sqrt());
    let mut g = z;
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = f(t, g);
        let k2 = f(t + h / 2.0, g + k1 * (h / 2.0));
        let k3 = f(t + h / 2.0, g + k2 * (h / 2.0));
        let k4 = f(t + h, g + k3 * h);
        g += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
    }
    g
}

#[test]
fn sqrt_driver_flow_matches_fine_ode() {
    let d = sqrt_driver(1.0, 20_000);
    for z in [Complex64::new(0.5, 1.0), Complex64::new(-1.0, 0.3), Complex64::new(2.0, 2.0)] {
        let got = evolve_point(&d, z).unwrap().last();
        let want = reference_flow(z, 1.0, 1.0, 200_000);
        assert!((got - want).norm() < 1e-6, "{z}: {got} vs {want}");
    }
}

#[test]
fn sqrt_driver_tip_self_converges() {
    let coarse = tip_at(&sqrt_driver(1.5, 400), 400);
    let fine = tip_at(&sqrt_driver(1.5, 4000), 4000);
    assert!((coarse - fine).norm() / fine.norm() < 1e-3, "{coarse} vs {fine}");
}

#[test]
fn halving_dt_shrinks_tip_error() {
    let drv = |steps| DrivingPath::from_fn(1.0, steps, |t| (3.0 * t).sin()).unwrap();
    let reference = tip_at(&drv(6400), 6400);
    let err = |steps| (tip_at(&drv(steps), steps) - reference).norm();
    for steps in [100, 200, 400] {
        let ratio = err(steps) / err(2 * steps);
        assert!(ratio >= 1.8, "steps {steps}: ratio {ratio}");
    }
}

#[test]
fn capacity_additivity() {
    let d = DrivingPath::from_fn(1.0, 600, |t| (5.0 * t).cos() - 1.0).unwrap();
    let j = 250;
    let first = d.truncated(j);
    let t0 = d.times()[j];
    let rest_t: Vec<f64> = d.times()[j..].iter().map(|t| t - t0).collect();
    let rest = DrivingPath::new(rest_t, d.values()[j..].to_vec()).unwrap();
    for z in [Complex64::new(0.3, 0.8), Complex64::new(-2.0, 0.5), Complex64::new(4.0, 0.0)] {
        let composed = map_forward(&rest, map_forward(&first, z));
        assert!((composed - map_forward(&d, z)).norm() < 1e-8);
    }
}

#[test]
fn scaling_covariance_at_two_resolutions() {
    let lambda = 2.0;
    for steps in [200, 400] {
        let base = DrivingPath::from_fn(1.0, steps, |t| (2.0 * t).sin()).unwrap();
        let scaled = base.rescaled(lambda);
        assert!((scaled.final_time() - lambda * lambda).abs() < 1e-12);
        let a = trace_curve(&base).unwrap();
        let b = trace_curve(&scaled).unwrap();
        for (p, q) in a.vertices.iter().zip(&b.vertices) {
            assert!((p * lambda - q).norm() < 1e-9);
        }
    }
}

#[test]
fn trace_starts_at_driver_and_stays_in_closed_half_plane() {
    let d = DrivingPath::from_fn(1.0, 300, |t| 0.7 + (4.0 * t).sin()).unwrap();
    let tr = trace_curve(&d).unwrap();
    assert_eq!(tr.vertices[0], Complex64::new(0.7, 0.0));
    assert!(tr.vertices.iter().all(|v| v.im >= 0.0));
    assert_eq!(tr.capacities.len(), tr.vertices.len());
}

fn random_walk(seeds: &[f64]) -> DrivingPath {
    let n = seeds.len();
    let dt = 1.0 / n as f64;
    let mut w = vec![0.0];
    for s in seeds {
        w.push(w.last().unwrap() + s * dt.sqrt());
    }
    DrivingPath::new((0..=n).map(|k| k as f64 * dt).collect(), w).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn boundary_order_is_preserved(
        incs in prop::collection::vec(-2.0f64..2.0, 50..120),
        x in 1.5f64..4.0,
        gap in 0.05f64..1.0,
    ) {
        let d = random_walk(&incs);
        let a = evolve_point(&d, Complex64::new(x, 0.0)).unwrap();
        let b = evolve_point(&d, Complex64::new(x + gap, 0.0)).unwrap();
        let k = a.images.len().min(b.images.len());
        for i in 0..k {
            prop_assert!(a.images[i].re < b.images[i].re);
            prop_assert!(a.images[i].re > d.values()[i]);
        }
    }

    #[test]
    fn inverse_round_trip(
        incs in prop::collection::vec(-2.0f64..2.0, 50..120),
        x in -1.0f64..1.0,
        y in 0.7f64..1.5,
    ) {
        let d = random_walk(&incs);
        let z = Complex64::new(x, y + 1.2);
        let w = map_forward(&d, z);
        let back = invert_map(&d, d.final_time(), w).unwrap();
        prop_assert!((back - z).norm() < 1e-6, "{} vs {}", back, z);
    }
}
