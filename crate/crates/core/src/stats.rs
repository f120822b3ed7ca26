//! Statistics helpers shared by the verification routines.

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
    #[error("non-finite value in sample")]
    NonFinite,
}

fn sorted(sample: &[f64]) -> Result<Vec<f64>, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::Empty);
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

/// Two-sided one-sample KS statistic against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64, StatsError> {
    let v = sorted(sample)?;
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(((i + 1) as f64 / n - f).abs()).max((f - i as f64 / n).abs());
    }
    Ok(d)
}

/// Two-sample KS statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic KS tail `P(sqrt(n_eff) D > x)`.
pub fn ks_pvalue(d: f64, n_eff: f64) -> f64 {
    let x = d * n_eff.sqrt();
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * x * x).exp();
        s += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// Pairwise summation; the result does not depend on how the input was produced.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 16 {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn mean(x: &[f64]) -> f64 {
    pairwise_sum(x) / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    let d: Vec<f64> = x.iter().map(|v| (v - m) * (v - m)).collect();
    pairwise_sum(&d) / (x.len() as f64 - 1.0)
}

/// Standard error of the mean.
pub fn std_error(x: &[f64]) -> f64 {
    (variance(x) / x.len() as f64).sqrt()
}

/// Bootstrap summary of a scalar statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bootstrap {
    pub estimate: f64,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Percentile bootstrap (95%) of `stat` with `reps` resamples.
pub fn bootstrap<R: Rng>(
    data: &[f64],
    reps: usize,
    rng: &mut R,
    stat: impl Fn(&[f64]) -> f64,
) -> Bootstrap {
    let n = data.len();
    let mut buf = vec![0.0; n];
    let mut vals: Vec<f64> = (0..reps)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = data[rng.random_range(0..n)];
            }
            stat(&buf)
        })
        .collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| vals[((p * (reps - 1) as f64).round() as usize).min(reps - 1)];
    Bootstrap {
        estimate: stat(data),
        sigma: variance(&vals).sqrt(),
        lo: q(0.025),
        hi: q(0.975),
    }
}

/// Histogram of (optionally weighted) values on `bins` equal cells of `[lo, hi]`,
/// normalized to total mass one. Values outside are clamped to the end cells.
pub fn histogram(values: &[f64], weights: Option<&[f64]>, lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    let width = (hi - lo) / bins as f64;
    for (i, &x) in values.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let k = (((x - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        h[k] += w;
    }
    let total = pairwise_sum(&h);
    h.iter_mut().for_each(|v| *v /= total);
    h
}

/// Total-variation distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Kish effective sample size of importance weights.
pub fn effective_sample_size(w: &[f64]) -> f64 {
    let s: f64 = pairwise_sum(w);
    let s2: f64 = pairwise_sum(&w.iter().map(|x| x * x).collect::<Vec<_>>());
    s * s / s2
}

/// Discrete Fréchet distance between vertex sequences.
///
/// An upper bound for the reparametrization-infimum sup distance; exact when
/// the optimal coupling is a monotone vertex matching.
pub fn discrete_frechet(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "polylines must be nonempty");
    let m = b.len();
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0f64; m];
    for (i, p) in a.iter().enumerate() {
        for j in 0..m {
            let d = (p - b[j]).norm();
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

/// Potential scale reduction factor over equal-length chains.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let grand = mean(&means);
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = chains.iter().map(|c| variance(c)).sum::<f64>() / m;
    if w == 0.0 {
        return 1.0;
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Integrated autocorrelation time with Sokal's automatic window (c = 5).
pub fn integrated_autocorrelation(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return 1.0;
    }
    let m = mean(x);
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c: f64 = (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / (n as f64 * var);
        tau += 2.0 * c;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn ks_edge_cases() {
        let s = [0.1, 0.4, 0.2, 0.9];
        assert_eq!(ks_two_sample(&s, &s).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(ks_one_sample(&[], |x| x), Err(StatsError::Empty));
        // single point at 0.5 against U(0,1): D = 0.5
        assert!((ks_one_sample(&[0.5], |x| x).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ks_uniform_sample_is_small() {
        use rand::Rng;
        let mut rng = replica_rng(11, 0);
        let x: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let d = ks_one_sample(&x, |v| v.clamp(0.0, 1.0)).unwrap();
        assert!(d <= 0.02, "D = {d}");
        assert!(ks_pvalue(d, 1e4) > 0.01);
    }

    #[test]
    fn frechet_shifted_segment() {
        let n = 50;
        let a: Vec<Complex64> = (0..=n).map(|k| c(0.0, k as f64 / n as f64)).collect();
        let b: Vec<Complex64> = a.iter().map(|z| z + 0.3).collect();
        assert!((discrete_frechet(&a, &b) - 0.3).abs() < 1e-12);
        assert_eq!(discrete_frechet(&a, &a), 0.0);
        let r: Vec<Complex64> = a.iter().rev().cloned().collect();
        assert_eq!(discrete_frechet(&a, &r), discrete_frechet(&r, &a));
    }

    #[test]
    fn histogram_and_tv() {
        let h = histogram(&[0.1, 0.2, 0.9, 5.0], None, 0.0, 1.0, 2);
        assert_eq!(h, vec![0.5, 0.5]);
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert!((effective_sample_size(&[1.0; 10]) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn gelman_rubin_identical_chains() {
        let a: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let r = gelman_rubin(&[a.clone(), a.clone(), a.clone(), a]);
        assert!(r < 1.0 + 1e-9);
    }
}
