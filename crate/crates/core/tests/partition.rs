use proptest::prelude::*;
use slelab::partition::{
    bpz_residual, check_partition_identity, eval_r, limit_probability, log_density, normalize, ordered_uniform,
    MarkedConfig, Method, Parity,
};
use slelab::rng::replica_rng;

const K83: f64 = 8.0 / 3.0;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn translation_leaves_everything_fixed() {
    for (kappa, xs, next) in [(3.0, vec![0.0, 1.0], 2.0), (K83, vec![0.0, 0.7, 1.5], 2.5), (3.0, vec![0.2], 1.0)] {
        let cfg = MarkedConfig::spread(kappa, xs.clone(), next).unwrap();
        let moved = cfg.affine(1.0, 3.7);
        let a = check_partition_identity(&cfg, Method::quadrature()).unwrap();
        let b = check_partition_identity(&moved, Method::quadrature()).unwrap();
        assert!((a.rel_err - b.rel_err).abs() < 1e-10);
        assert!(rel(a.z.value(), b.z.value()) < 1e-9);
        assert!(rel(a.w.value(), b.w.value()) < 1e-9);
        let ys: Vec<f64> = xs.iter().map(|x| x + 3.7).collect();
        assert!(rel(eval_r(&xs, next).unwrap(), eval_r(&ys, next + 3.7).unwrap()) < 1e-12);
    }
}

#[test]
fn scaling_follows_homogeneity_exponents() {
    let lambda = 2.5;
    for (kappa, xs, next) in [(3.0, vec![0.0, 1.0], 2.0), (K83, vec![0.0, 0.7, 1.5], 2.5), (K83, vec![0.0], 1.0)] {
        let cfg = MarkedConfig::spread(kappa, xs.clone(), next).unwrap();
        let big = cfg.affine(lambda, 0.0);
        for parity in [Parity::Odd, Parity::Even] {
            let a = normalize(&cfg, parity, Method::quadrature()).unwrap().value();
            let b = normalize(&big, parity, Method::quadrature()).unwrap().value();
            let want = a * lambda.powf(cfg.homogeneity(parity));
            assert!(rel(b, want) < 1e-8, "{parity:?} N={}: {b} vs {want}", xs.len());
        }
        let n = xs.len() as f64;
        let ys: Vec<f64> = xs.iter().map(|x| lambda * x).collect();
        let r = eval_r(&xs, next).unwrap() * lambda.powf(-n / 2.0);
        assert!(rel(eval_r(&ys, lambda * next).unwrap(), r) < 1e-12);
    }
}

#[test]
fn scaling_holds_for_monte_carlo_within_error() {
    let cfg = MarkedConfig::spread(3.0, vec![0.0, 1.0, 2.0], 3.0).unwrap();
    let big = cfg.affine(3.0, 0.0);
    let m = |seed| Method::MonteCarlo { samples: 200_000, seed };
    let a = normalize(&cfg, Parity::Even, m(1)).unwrap();
    let b = normalize(&big, Parity::Even, m(2)).unwrap();
    let f = 3.0f64.powf(cfg.homogeneity(Parity::Even));
    let se = (b.std_error.powi(2) + (f * a.std_error).powi(2)).sqrt();
    assert!((b.value() - f * a.value()).abs() < 3.0 * se);
}

#[test]
fn log_densities_survive_extreme_scales() {
    let cfg = MarkedConfig::spread(3.0, vec![0.0, 1.0], 2.0).unwrap();
    let pts = [3.0];
    let base = log_density(&cfg, Parity::Odd, &pts);
    for s in [1e-150, 1e150] {
        let c = cfg.affine(s, 0.0);
        let v = log_density(&c, Parity::Odd, &[3.0 * s]);
        assert!(v.is_finite(), "scale {s}");
        // density degree: the normalization degree minus one per integrated point
        let deg = cfg.homogeneity(Parity::Odd) - 1.0;
        assert!((v - base - deg * s.ln()).abs() < 1e-9 * (1.0 + v.abs()));
    }
}

#[test]
fn r_is_positive_on_random_configurations() {
    let mut rng = replica_rng(99, 0);
    for k in 0..1000 {
        let n = 1 + k % 6;
        let pts = ordered_uniform(&mut rng, n + 1, -5.0, 5.0);
        if pts.windows(2).any(|w| w[1] - w[0] < 1e-9) {
            continue;
        }
        let r = eval_r(&pts[..n], pts[n]).unwrap();
        assert!(r > 0.0, "{pts:?}: {r}");
    }
}

#[test]
fn r_reduces_at_confluence() {
    // (y_{N+1} − y_N)^{1/2} R_N → R_{N−1}(y_1..y_{N−1}; y_N)
    for ys in [vec![0.0, 1.0], vec![0.0, 0.6, 1.3], vec![0.0, 0.5, 1.1, 2.0]] {
        let n = ys.len();
        let y_next = ys[n - 1];
        let gap: f64 = 1e-6;
        let mut close = ys.clone();
        close[n - 1] = y_next - gap;
        let lhs = gap.sqrt() * eval_r(&close, y_next).unwrap();
        let rhs = eval_r(&ys[..n - 1], y_next).unwrap();
        assert!(rel(lhs, rhs) < 1e-4, "N={n}: {lhs} vs {rhs}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn bpz_holds_at_random_points(gaps in prop::collection::vec(0.2f64..2.0, 3..6), x0 in -2.0f64..2.0) {
        let mut pts = vec![x0];
        for g in &gaps {
            pts.push(pts.last().unwrap() + g);
        }
        let n = pts.len() - 1;
        let h = 1e-3 * gaps.iter().cloned().fold(f64::INFINITY, f64::min);
        for i in 0..n {
            let r = bpz_residual(&pts[..n], pts[n], i, h).unwrap();
            prop_assert!(r.abs() < 1e-4, "i={} residual {}", i, r);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn limit_probability_is_a_probability(gaps in prop::collection::vec(0.3f64..2.0, 3..5)) {
        let mut pts = vec![0.0];
        for g in &gaps {
            pts.push(pts.last().unwrap() + g);
        }
        let n = pts.len() - 1;
        let f = limit_probability(&pts[..n], pts[n], 3.0).unwrap();
        prop_assert!(f.value > 0.0 && f.value < 1.0, "{}", f.value);
        prop_assert!(rel(f.via_z, f.via_w) < 1e-6);
    }
}
