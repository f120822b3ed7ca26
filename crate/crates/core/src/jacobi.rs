//! β-Jacobi ensembles: density, a tridiagonal sampler and an MCMC oracle.
//!
//! `Jacobi(n; β, a, b)` is the law of `0 < y_1 < … < y_n < 1` with density
//! proportional to `∏_{i<j} |y_j − y_i|^β ∏_j y_j^a (1 − y_j)^b`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::rng::{derive_seed, replica_rng};
use crate::stats::{gelman_rubin, integrated_autocorrelation, ks_two_sample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JacobiError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("eigen-solver did not converge after {0} sweeps")]
    EigenSolver(usize),
    #[error("MCMC did not converge: Gelman-Rubin {0:.4} > 1.05")]
    NotConverged(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JacobiParams {
    pub n: usize,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
}

impl JacobiParams {
    pub fn new(n: usize, beta: f64, a: f64, b: f64) -> Result<Self, JacobiError> {
        let p = Self { n, beta, a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), JacobiError> {
        if self.n == 0 {
            return Err(JacobiError::Params("n must be ≥ 1".into()));
        }
        if !(self.beta > 0.0) {
            return Err(JacobiError::Params("beta must be > 0".into()));
        }
        if !(self.a > -1.0 && self.b > -1.0) {
            return Err(JacobiError::Params("a and b must exceed −1".into()));
        }
        Ok(())
    }

    /// `(a, b) → (b, a)`; the law is carried by `y → 1 − y`.
    pub fn swapped(&self) -> Self {
        Self { a: self.b, b: self.a, ..*self }
    }
}

/// Ordered points in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum(pub Vec<f64>);

impl Spectrum {
    /// Sorts and checks the support.
    pub fn from_unsorted(mut v: Vec<f64>) -> Option<Self> {
        v.sort_by(|a, b| a.total_cmp(b));
        let s = Spectrum(v);
        s.is_valid().then_some(s)
    }

    pub fn is_valid(&self) -> bool {
        let v = &self.0;
        !v.is_empty()
            && v.iter().all(|&y| y > 0.0 && y < 1.0)
            && v.windows(2).all(|w| w[1] > w[0])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Unnormalized log density; `−∞` outside the ordered support.
pub fn log_density(p: &JacobiParams, ys: &[f64]) -> f64 {
    if ys.len() != p.n || !Spectrum(ys.to_vec()).is_valid() {
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0;
    for (j, &y) in ys.iter().enumerate() {
        acc += p.a * y.ln() + p.b * (-y).ln_1p();
        for &x in &ys[..j] {
            acc += p.beta * (y - x).ln();
        }
    }
    acc
}

/// `B(s, t)` on `[−1, 1]`: density ∝ `(1 − x)^{s−1} (1 + x)^{t−1}`.
fn sample_b<R: Rng>(rng: &mut R, s: f64, t: f64) -> f64 {
    let u: f64 = Beta::new(t, s).unwrap().sample(rng);
    2.0 * u - 1.0
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit-shift QL.
///
/// `d` is the diagonal, `e[i]` couples rows `i` and `i+1`.
pub fn tridiag_eigenvalues(d: &[f64], e: &[f64]) -> Result<Vec<f64>, JacobiError> {
    let n = d.len();
    let mut d = d.to_vec();
    let mut e: Vec<f64> = e.iter().cloned().chain(std::iter::once(0.0)).collect();
    e.truncate(n);
    const MAX_ITER: usize = 60;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_ITER {
                return Err(JacobiError::EigenSolver(MAX_ITER));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(d)
}

/// One draw from the Beta-variable tridiagonal model.
///
/// Verblunsky-type coefficients `α_0, …, α_{2n−2}` are independent with
/// `α_k ~ B((2n−k−2)β/4 + a + 1, (2n−k−2)β/4 + b + 1)` for even `k` and
/// `α_k ~ B((2n−k−3)β/4 + a + b + 2, (2n−k−1)β/4)` for odd `k`. The
/// resulting Jacobi matrix has spectrum in `[−2, 2]` with weight
/// `(2 − x)^a (2 + x)^b`, which `y = (2 − x)/4` carries to `y^a (1 − y)^b`.
pub fn sample_tridiag_with<R: Rng>(p: &JacobiParams, rng: &mut R) -> Result<Spectrum, JacobiError> {
    p.validate()?;
    let n = p.n;
    let nf = n as f64;
    // alpha[k + 1] holds α_k for k = −1..=2n−1
    let mut alpha = vec![-1.0; 2 * n + 1];
    for k in 0..=(2 * n - 2) {
        let kf = k as f64;
        alpha[k + 1] = if k % 2 == 0 {
            let s = (2.0 * nf - kf - 2.0) * p.beta / 4.0;
            sample_b(rng, s + p.a + 1.0, s + p.b + 1.0)
        } else {
            sample_b(
                rng,
                (2.0 * nf - kf - 3.0) * p.beta / 4.0 + p.a + p.b + 2.0,
                (2.0 * nf - kf - 1.0) * p.beta / 4.0,
            )
        };
    }
    let al = |k: i64| -> f64 {
        if k < -1 {
            0.0
        } else {
            alpha[(k + 1) as usize]
        }
    };
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n as i64 {
        diag.push((1.0 - al(2 * k - 1)) * al(2 * k) - (1.0 + al(2 * k - 1)) * al(2 * k - 2));
        if (k as usize) + 1 < n {
            let v = (1.0 - al(2 * k - 1)) * (1.0 - al(2 * k) * al(2 * k)) * (1.0 + al(2 * k + 1));
            off.push(v.max(0.0).sqrt());
        }
    }
    let eig = tridiag_eigenvalues(&diag, &off)?;
    let ys: Vec<f64> = eig.iter().map(|x| ((2.0 - x) / 4.0).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)).collect();
    Spectrum::from_unsorted(ys).ok_or_else(|| JacobiError::Params("degenerate spectrum".into()))
}

pub fn sample_tridiag(p: &JacobiParams, seed: u64) -> Result<Spectrum, JacobiError> {
    sample_tridiag_with(p, &mut replica_rng(seed, 0))
}

/// `count` independent draws, replicate `i` seeded by stream `i`.
pub fn sample_tridiag_batch(p: &JacobiParams, seed: u64, count: usize) -> Result<Vec<Spectrum>, JacobiError> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i as u64);
            // eigen-solver failure: retry on a derived stream
            sample_tridiag_with(p, &mut rng).or_else(|_| sample_tridiag_with(p, &mut rng))
        })
        .collect()
}

/// Budget and diagnostics for the Metropolis oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcBudget {
    pub draws: usize,
    pub chains: usize,
    /// Iterations used to estimate the autocorrelation time.
    pub pilot: usize,
}

impl McmcBudget {
    pub fn draws(draws: usize) -> Self {
        Self { draws, chains: 4, pilot: 20_000 }
    }
}

fn metropolis_step(p: &JacobiParams, rng: &mut ChaCha8Rng, y: &mut [f64], lp: &mut f64, step: f64) -> bool {
    let prop: Vec<f64> = y
        .iter()
        .map(|v| v + step * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let lq = log_density(p, &prop);
    if lq > f64::NEG_INFINITY && (lq - *lp) >= rng.random::<f64>().ln() {
        y.copy_from_slice(&prop);
        *lp = lq;
        true
    } else {
        false
    }
}

/// Random-walk Metropolis in the ordered simplex.
///
/// Chains start at evenly spaced points; burn-in is ten autocorrelation
/// times and thinning one autocorrelation time, both from a pilot run.
pub fn sample_mcmc(p: &JacobiParams, seed: u64, budget: McmcBudget) -> Result<Vec<Spectrum>, JacobiError> {
    p.validate()?;
    let n = p.n;
    let step = 0.3 / (n as f64).powf(1.5) / (1.0 + p.beta.max(p.a).max(p.b)).sqrt();
    let per_chain = budget.draws.div_ceil(budget.chains);
    let chains: Vec<Vec<Vec<f64>>> = (0..budget.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = replica_rng(seed, c as u64);
            let mut y: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
            let mut lp = log_density(p, &y);
            let mut trace = Vec::with_capacity(budget.pilot);
            for _ in 0..budget.pilot {
                metropolis_step(p, &mut rng, &mut y, &mut lp, step);
                trace.push(y.iter().sum::<f64>());
            }
            let tau = integrated_autocorrelation(&trace[budget.pilot / 2..]).ceil() as usize;
            for _ in 0..10 * tau {
                metropolis_step(p, &mut rng, &mut y, &mut lp, step);
            }
            let mut out = Vec::with_capacity(per_chain);
            while out.len() < per_chain {
                for _ in 0..tau {
                    metropolis_step(p, &mut rng, &mut y, &mut lp, step);
                }
                out.push(y.clone());
            }
            out
        })
        .collect();
    let stat: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|y| y.iter().sum()).collect()).collect();
    let r = gelman_rubin(&stat);
    if r > 1.05 {
        return Err(JacobiError::NotConverged(r));
    }
    Ok(chains.into_iter().flatten().take(budget.draws).map(Spectrum).collect())
}

/// Per-index two-sample KS between tridiagonal and Metropolis draws.
pub fn compare_samplers(p: &JacobiParams, draws: usize, seed: u64) -> Result<Vec<f64>, JacobiError> {
    let a = sample_tridiag_batch(p, derive_seed(seed, 1), draws)?;
    let b = sample_mcmc(p, derive_seed(seed, 2), McmcBudget::draws(draws))?;
    Ok((0..p.n)
        .map(|i| {
            let xa: Vec<f64> = a.iter().map(|s| s.0[i]).collect();
            let xb: Vec<f64> = b.iter().map(|s| s.0[i]).collect();
            ks_two_sample(&xa, &xb).expect("nonempty samples")
        })
        .collect())
}
