//! Hitting-point densities `r`, `ρ`, their normalizations `Z_N`, `W_N`, the
//! pair-partition functions `R_N`, the Ising limit `F_N` and the BPZ residual.
//!
//! Integrals over the ordered unbounded simplex `x_{N+1} < z_1 < … < z_d`
//! use `z = x_{N+1} + L s / (1 − s)` with `L = x_{N+1} − x_1`, mapping onto
//! `0 < s_1 < … < s_d < 1`. Everything is evaluated in log space.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::quad::{self, Node};
use crate::report::{Check, Metric, StatReport};
use crate::rng::replica_rng;
use crate::stats::pairwise_sum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("integral diverges: {0}")]
    NonIntegrable(String),
    #[error("quadrature supports at most 3 hitting points, got {0}")]
    TooManyForQuadrature(usize),
    #[error("R_N limited to N ≤ 12 (pair-partition count grows as (2m−1)!!), got {0}")]
    TooLarge(usize),
    #[error("step h = {0:e} too small for central differences at this scale")]
    StepTooSmall(f64),
    #[error("the two limit-probability expressions disagree: {a} vs {b}")]
    Disagreement { a: f64, b: f64 },
    #[error("R_N = {0} is not positive")]
    NonPositiveR(f64),
}

/// Which construction a hitting vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    /// `z`-vector, `M = ⌊N/2⌋` points, normalization `Z_N`.
    Odd,
    /// `w`-vector, `N − M` points, normalization `W_N`.
    Even,
}

impl Parity {
    pub fn flip(self) -> Self {
        match self {
            Parity::Odd => Parity::Even,
            Parity::Even => Parity::Odd,
        }
    }
}

/// Marked boundary points `x_1 < … < x_N < x_{N+1}` and κ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkedConfig {
    pub kappa: f64,
    /// Distinct points, or the single collapsed point.
    pub xs: Vec<f64>,
    n: usize,
    pub x_next: f64,
    pub collapsed: bool,
}

impl MarkedConfig {
    pub fn spread(kappa: f64, xs: Vec<f64>, x_next: f64) -> Result<Self, PartitionError> {
        let cfg = Self { kappa, n: xs.len(), xs, x_next, collapsed: false };
        cfg.validate()?;
        Ok(cfg)
    }

    /// All `n` points merged at `x`.
    pub fn collapsed(kappa: f64, x: f64, n: usize, x_next: f64) -> Result<Self, PartitionError> {
        let cfg = Self { kappa, xs: vec![x], n, x_next, collapsed: true };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PartitionError> {
        let bad = |m: &str| Err(PartitionError::Config(m.into()));
        if !(self.kappa > 0.0 && self.kappa < 4.0) {
            return bad("kappa must lie in (0,4)");
        }
        if self.n == 0 || self.xs.is_empty() {
            return bad("need N ≥ 1");
        }
        if self.collapsed && self.xs.len() != 1 {
            return bad("collapsed mode stores one point");
        }
        if self.xs.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("marked points must be strictly increasing");
        }
        if !(self.x_next > *self.xs.last().unwrap()) || !self.x_next.is_finite() {
            return bad("x_next must exceed every marked point");
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.n / 2
    }

    /// Number of hitting points for a parity.
    pub fn count(&self, parity: Parity) -> usize {
        match parity {
            Parity::Odd => self.m(),
            Parity::Even => self.n - self.m(),
        }
    }

    /// Leftmost marked point.
    pub fn x_first(&self) -> f64 {
        self.xs[0]
    }

    /// Substitution scale `L = x_{N+1} − x_1`.
    pub fn scale(&self) -> f64 {
        self.x_next - self.xs[0]
    }

    /// Marked points with multiplicity (collapsed point repeated `N` times).
    pub fn expanded(&self) -> Vec<f64> {
        if self.collapsed {
            vec![self.xs[0]; self.n]
        } else {
            self.xs.clone()
        }
    }

    /// Affine image `a x + b` of every coordinate (`a > 0`).
    pub fn affine(&self, a: f64, b: f64) -> Self {
        Self {
            kappa: self.kappa,
            xs: self.xs.iter().map(|x| a * x + b).collect(),
            n: self.n,
            x_next: a * self.x_next + b,
            collapsed: self.collapsed,
        }
    }

    /// Exponent of `(z − x_{N+1})`.
    fn next_exponent(&self, parity: Parity) -> f64 {
        match parity {
            Parity::Odd => (6.0 - self.kappa) / self.kappa,
            Parity::Even => (2.0 - self.kappa) / self.kappa,
        }
    }

    /// Scaling degree of the normalization: `norm(λx) = λ^deg norm(x)`.
    pub fn homogeneity(&self, parity: Parity) -> f64 {
        let d = self.count(parity) as f64;
        let k = self.kappa;
        d * (-4.0 * self.n as f64 / k + self.next_exponent(parity)) + 4.0 / k * d * (d - 1.0) + d
    }
}

/// `log B(2/κ, 2/κ)`.
pub fn log_beta_const(kappa: f64) -> f64 {
    ln_beta(2.0 / kappa, 2.0 / kappa)
}

/// Unnormalized log density of a hitting vector; `−∞` outside the support.
pub fn log_density(cfg: &MarkedConfig, parity: Parity, pts: &[f64]) -> f64 {
    if pts.len() != cfg.count(parity) {
        return f64::NEG_INFINITY;
    }
    let mut prev = cfg.x_next;
    for &p in pts {
        if !(p > prev) || !p.is_finite() {
            return f64::NEG_INFINITY;
        }
        prev = p;
    }
    let k = cfg.kappa;
    let ce = cfg.next_exponent(parity);
    let mut acc = 0.0;
    for (j, &z) in pts.iter().enumerate() {
        if cfg.collapsed {
            acc += -4.0 * cfg.n as f64 / k * (z - cfg.xs[0]).ln();
        } else {
            acc += cfg.xs.iter().map(|&x| -4.0 / k * (z - x).ln()).sum::<f64>();
        }
        acc += ce * (z - cfg.x_next).ln();
        for &zi in &pts[..j] {
            acc += 8.0 / k * (z - zi).ln();
        }
    }
    acc
}

/// Density `r` of the odd construction (log, unnormalized).
pub fn log_density_r(cfg: &MarkedConfig, z: &[f64]) -> f64 {
    log_density(cfg, Parity::Odd, z)
}

/// Density `ρ` of the even construction (log, unnormalized).
pub fn log_density_rho(cfg: &MarkedConfig, w: &[f64]) -> f64 {
    log_density(cfg, Parity::Even, w)
}

/// Log integrand in simplex coordinates, Jacobian included.
///
/// `s` sorted in (0,1), `cs = 1 − s` supplied separately for accuracy.
pub fn log_integrand_s(cfg: &MarkedConfig, parity: Parity, s: &[f64], cs: &[f64]) -> f64 {
    let k = cfg.kappa;
    let l = cfg.scale();
    let ce = cfg.next_exponent(parity);
    let mut acc = 0.0;
    for j in 0..s.len() {
        if !(s[j] > 0.0 && cs[j] > 0.0) {
            return f64::NEG_INFINITY;
        }
        // log(z − x_next), kept finite when 1 − s is subnormal
        let lu = l.ln() + s[j].ln() - cs[j].ln();
        acc += ce * lu;
        let ln_gap = |a: f64| {
            let la = a.ln();
            la.max(lu) + (-(la - lu).abs()).exp().ln_1p()
        };
        if cfg.collapsed {
            acc += -4.0 * cfg.n as f64 / k * ln_gap(cfg.x_next - cfg.xs[0]);
        } else {
            for &x in &cfg.xs {
                acc += -4.0 / k * ln_gap(cfg.x_next - x);
            }
        }
        acc += l.ln() - 2.0 * cs[j].ln();
        for i in 0..j {
            let ds = if s[j] < 0.5 { s[j] - s[i] } else { cs[i] - cs[j] };
            if !(ds > 0.0) {
                return f64::NEG_INFINITY;
            }
            acc += 8.0 / k * (l.ln() + ds.ln() - cs[i].ln() - cs[j].ln());
        }
    }
    acc
}

/// Normalization method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Quadrature { rel_tol: f64 },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Method {
    pub fn quadrature() -> Self {
        Method::Quadrature { rel_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalKind {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

/// A positive normalization constant with an error bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionEval {
    pub log_value: f64,
    pub sign: f64,
    /// Absolute standard error (0 for closed forms).
    pub std_error: f64,
    pub method: EvalKind,
}

impl PartitionEval {
    pub fn value(&self) -> f64 {
        self.sign * self.log_value.exp()
    }

    pub fn rel_error(&self) -> f64 {
        self.std_error / self.value().abs()
    }

    fn one() -> Self {
        Self { log_value: 0.0, sign: 1.0, std_error: 0.0, method: EvalKind::ClosedForm }
    }
}

/// Exponent-based integrability check (the tail-window diagnostic).
///
/// Near `x_{N+1}` the single-point exponent must exceed −1; at infinity the
/// single-point decay and the joint scaling degree must both beat the volume.
pub fn check_integrable(cfg: &MarkedConfig, parity: Parity) -> Result<(), PartitionError> {
    let d = cfg.count(parity) as f64;
    if d == 0.0 {
        return Ok(());
    }
    let k = cfg.kappa;
    let ce = cfg.next_exponent(parity);
    if ce <= -1.0 {
        return Err(PartitionError::NonIntegrable(format!("exponent {ce} at x_next")));
    }
    let single = -4.0 * cfg.n as f64 / k + ce + 8.0 * (d - 1.0) / k;
    if single >= -1.0 {
        return Err(PartitionError::NonIntegrable(format!("single-point tail exponent {single}")));
    }
    let joint = cfg.homogeneity(parity);
    if joint >= 0.0 {
        return Err(PartitionError::NonIntegrable(format!("joint tail degree {joint}")));
    }
    Ok(())
}

/// Compute `Z_N` (odd) or `W_N` (even).
pub fn normalize(cfg: &MarkedConfig, parity: Parity, method: Method) -> Result<PartitionEval, PartitionError> {
    cfg.validate()?;
    let d = cfg.count(parity);
    if d == 0 {
        return Ok(PartitionEval::one());
    }
    check_integrable(cfg, parity)?;
    match method {
        Method::Quadrature { rel_tol } => quadrature(cfg, parity, rel_tol),
        Method::MonteCarlo { samples, seed } => Ok(monte_carlo(cfg, parity, samples, seed)),
    }
}

/// Closed form `W_1 = B(2/κ, 2/κ) (x_2 − x_1)^{−2/κ}`.
pub fn w1_closed_form(kappa: f64, x1: f64, x2: f64) -> f64 {
    (log_beta_const(kappa) - 2.0 / kappa * (x2 - x1).ln()).exp()
}

fn nested(
    cfg: &MarkedConfig,
    parity: Parity,
    nodes: &[Node],
    d: usize,
    log_ref: f64,
    s: &mut Vec<f64>,
    cs: &mut Vec<f64>,
) -> f64 {
    let depth = s.len();
    let (lo, clo) = if depth == 0 { (0.0, 1.0) } else { (s[depth - 1], cs[depth - 1]) };
    let mut acc = 0.0;
    for n in nodes {
        s.push(lo + clo * n.v);
        cs.push(clo * n.cv);
        let y = if depth + 1 == d {
            (log_integrand_s(cfg, parity, s, cs) - log_ref).exp()
        } else {
            nested(cfg, parity, nodes, d, log_ref, s, cs)
        };
        s.pop();
        cs.pop();
        acc += n.w * clo * y;
    }
    acc
}

fn quadrature(cfg: &MarkedConfig, parity: Parity, rel_tol: f64) -> Result<PartitionEval, PartitionError> {
    let d = cfg.count(parity);
    if d > 3 {
        return Err(PartitionError::TooManyForQuadrature(d));
    }
    // Reference magnitude at the simplex barycenter keeps exp() in range.
    let s0: Vec<f64> = (1..=d).map(|j| j as f64 / (d + 1) as f64).collect();
    let cs0: Vec<f64> = s0.iter().map(|v| 1.0 - v).collect();
    let log_ref = log_integrand_s(cfg, parity, &s0, &cs0);
    let (first, last) = match d {
        1 => (3, 9),
        2 => (3, 6),
        _ => (2, 4),
    };
    let eval = |level: u32| {
        let nodes = quad::unit_nodes(level);
        // Outer dimension in parallel; inner sums are sequential so the result is deterministic.
        let parts: Vec<f64> = nodes
            .par_iter()
            .map(|n| {
                let mut s = vec![n.v];
                let mut cs = vec![n.cv];
                let y = if d == 1 {
                    (log_integrand_s(cfg, parity, &s, &cs) - log_ref).exp()
                } else {
                    nested(cfg, parity, &nodes, d, log_ref, &mut s, &mut cs)
                };
                n.w * y
            })
            .collect();
        pairwise_sum(&parts)
    };
    let mut prev = eval(first);
    let mut err = f64::INFINITY;
    let mut cur = prev;
    for level in first + 1..=last {
        cur = eval(level);
        err = (cur - prev).abs();
        if err <= rel_tol * cur.abs() {
            break;
        }
        prev = cur;
    }
    Ok(PartitionEval {
        log_value: cur.ln() + log_ref,
        sign: 1.0,
        std_error: err * log_ref.exp(),
        method: EvalKind::Quadrature,
    })
}

/// Beta proposal exponents `(α, β)` per coordinate on `(0,1)`.
fn proposal(cfg: &MarkedConfig, parity: Parity) -> (f64, f64) {
    let d = cfg.count(parity) as f64;
    let k = cfg.kappa;
    let ce = cfg.next_exponent(parity);
    let alpha = ce + 1.0;
    // single-point integrand ~ (1 − s)^{−e−2} near s = 1; soften for finite variance
    let e = -4.0 * cfg.n as f64 / k + ce + 8.0 * (d - 1.0) / k;
    let beta = 0.8 * (-e - 1.0);
    (alpha, beta)
}

const MC_BLOCK: usize = 50_000;

/// Importance sampling with symmetric product-Beta proposals.
fn monte_carlo(cfg: &MarkedConfig, parity: Parity, samples: usize, seed: u64) -> PartitionEval {
    let d = cfg.count(parity);
    let (alpha, beta) = proposal(cfg, parity);
    let ga = Gamma::new(alpha, 1.0).unwrap();
    let gb = Gamma::new(beta, 1.0).unwrap();
    let log_norm = ln_gamma(alpha + beta) - ln_gamma(alpha) - ln_gamma(beta);
    let log_fact: f64 = (1..=d).map(|j| (j as f64).ln()).sum();
    let s0: Vec<f64> = (1..=d).map(|j| j as f64 / (d + 1) as f64).collect();
    let cs0: Vec<f64> = s0.iter().map(|v| 1.0 - v).collect();
    let log_ref = log_integrand_s(cfg, parity, &s0, &cs0);
    let blocks = samples.div_ceil(MC_BLOCK).max(1);
    let sums: Vec<(f64, f64, usize)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = replica_rng(seed, b as u64);
            let n = MC_BLOCK.min(samples - b * MC_BLOCK);
            let mut vals = Vec::with_capacity(n);
            let mut pts: Vec<(f64, f64)> = vec![(0.0, 0.0); d];
            let mut s = vec![0.0; d];
            let mut cs = vec![0.0; d];
            for _ in 0..n {
                let mut log_q = 0.0;
                for p in pts.iter_mut() {
                    let (x, y): (f64, f64) = (ga.sample(&mut rng), gb.sample(&mut rng));
                    let (v, cv) = (x / (x + y), y / (x + y));
                    log_q += log_norm + (alpha - 1.0) * v.ln() + (beta - 1.0) * cv.ln();
                    *p = (v, cv);
                }
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                for (j, p) in pts.iter().enumerate() {
                    s[j] = p.0;
                    cs[j] = p.1;
                }
                let lf = log_integrand_s(cfg, parity, &s, &cs);
                vals.push((lf - log_q - log_fact - log_ref).exp());
            }
            let sq: Vec<f64> = vals.iter().map(|v| v * v).collect();
            (pairwise_sum(&vals), pairwise_sum(&sq), n)
        })
        .collect();
    let total: f64 = pairwise_sum(&sums.iter().map(|s| s.0).collect::<Vec<_>>());
    let total_sq: f64 = pairwise_sum(&sums.iter().map(|s| s.1).collect::<Vec<_>>());
    let n: usize = sums.iter().map(|s| s.2).sum();
    let nf = n as f64;
    let mean = total / nf;
    let var = (total_sq / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
    let scale = log_ref.exp();
    PartitionEval {
        log_value: mean.ln() + log_ref,
        sign: 1.0,
        std_error: (var / nf).sqrt() * scale,
        method: EvalKind::MonteCarlo,
    }
}

/// Outcome of the identity `B^{1{N odd}} Z_N = ∏(x_{N+1} − x_i)^{2/κ} W_N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub z: PartitionEval,
    pub w: PartitionEval,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
    /// Combined relative standard error of the two sides.
    pub combined_rel_se: f64,
}

pub fn check_partition_identity(cfg: &MarkedConfig, method: Method) -> Result<IdentityCheck, PartitionError> {
    let z = normalize(cfg, Parity::Odd, method)?;
    let w_method = match method {
        Method::MonteCarlo { samples, seed } => Method::MonteCarlo { samples, seed: seed ^ 0x5eed },
        m => m,
    };
    let w = normalize(cfg, Parity::Even, w_method)?;
    let k = cfg.kappa;
    let odd = cfg.n() % 2 == 1;
    let log_lhs = if odd { log_beta_const(k) } else { 0.0 } + z.log_value;
    let log_prod: f64 = cfg.expanded().iter().map(|x| 2.0 / k * (cfg.x_next - x).ln()).sum();
    let log_rhs = log_prod + w.log_value;
    let rel_err = ((log_lhs - log_rhs).exp() - 1.0).abs();
    Ok(IdentityCheck {
        z,
        w,
        lhs: log_lhs.exp(),
        rhs: log_rhs.exp(),
        rel_err,
        combined_rel_se: (z.rel_error().powi(2) + w.rel_error().powi(2)).sqrt(),
    })
}

/// Perfect matching `{{a_1,b_1},…}` with `a_1 < … < a_n`, `a_j < b_j` (0-based).
pub type Pairing = Vec<(usize, usize)>;

/// All pair partitions of `{0,…,2n−1}` by pairing the smallest unpaired index.
pub fn pair_partitions(n: usize) -> Vec<Pairing> {
    fn rec(free: &mut Vec<usize>, cur: &mut Pairing, out: &mut Vec<Pairing>) {
        if free.is_empty() {
            out.push(cur.clone());
            return;
        }
        let a = free.remove(0);
        for i in 0..free.len() {
            let b = free.remove(i);
            cur.push((a, b));
            rec(free, cur, out);
            cur.pop();
            free.insert(i, b);
        }
        free.insert(0, a);
    }
    let mut out = Vec::new();
    rec(&mut (0..2 * n).collect(), &mut Vec::new(), &mut out);
    out
}

/// Sign of `∏_{i<j} (a_i−a_j)(a_i−b_j)(b_i−a_j)(b_i−b_j)`, by counting negative factors.
pub fn pairing_sign(w: &[(usize, usize)]) -> i32 {
    let mut neg = 0usize;
    for i in 0..w.len() {
        for j in i + 1..w.len() {
            let (ai, bi) = (w[i].0 as i64, w[i].1 as i64);
            let (aj, bj) = (w[j].0 as i64, w[j].1 as i64);
            for f in [ai - aj, ai - bj, bi - aj, bi - bj] {
                if f < 0 {
                    neg += 1;
                }
            }
        }
    }
    if neg % 2 == 0 {
        1
    } else {
        -1
    }
}

/// `R_N(y_1,…,y_N; y_{N+1})`.
pub fn eval_r(ys: &[f64], y_next: f64) -> Result<f64, PartitionError> {
    let n = ys.len();
    if n == 0 {
        return Err(PartitionError::Config("need N ≥ 1".into()));
    }
    if n > 12 {
        return Err(PartitionError::TooLarge(n));
    }
    if ys.windows(2).any(|w| !(w[1] > w[0])) || !(y_next > ys[n - 1]) {
        return Err(PartitionError::Config("points must be strictly increasing".into()));
    }
    let pref: f64 = ys.iter().map(|y| -0.5 * (y_next - y).ln()).sum::<f64>().exp();
    // Odd N: index N (0-based) is y_next itself and its pair drops out of the product.
    let mut all = ys.to_vec();
    if n % 2 == 1 {
        all.push(y_next);
    }
    let pairs = all.len() / 2;
    let mut terms = Vec::new();
    for w in pair_partitions(pairs) {
        let mut prod = pairing_sign(&w) as f64;
        for &(a, b) in &w {
            if n % 2 == 1 && b == n {
                continue;
            }
            prod *= (2.0 * y_next - all[a] - all[b]) / (all[b] - all[a]);
        }
        terms.push(prod);
    }
    Ok(pref * pairwise_sum(&terms))
}

/// BPZ operator at κ = 3, `h = 1/2`, applied to `R_N` by central differences
/// in coordinate `i` (0-based), divided by `|R_N|`.
pub fn bpz_residual(ys: &[f64], y_next: f64, i: usize, h: f64) -> Result<f64, PartitionError> {
    let n = ys.len();
    if i >= n {
        return Err(PartitionError::Config(format!("index {i} out of range")));
    }
    let mut y: Vec<f64> = ys.to_vec();
    y.push(y_next);
    let min_gap = y.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if !(h > 1e-7 * min_gap.max(1e-300)) || h < 1e-8 {
        return Err(PartitionError::StepTooSmall(h));
    }
    if h * 2.0 >= min_gap {
        return Err(PartitionError::Config("step exceeds half the smallest gap".into()));
    }
    let r = |v: &[f64]| eval_r(&v[..n], v[n]);
    let shifted = |j: usize, d: f64| -> Result<f64, PartitionError> {
        let mut v = y.clone();
        v[j] += d;
        r(&v)
    };
    let r0 = r(&y)?;
    let kappa = 3.0;
    let hw = 0.5;
    let d2 = (shifted(i, h)? - 2.0 * r0 + shifted(i, -h)?) / (h * h);
    let mut acc = kappa / 2.0 * d2;
    for j in 0..=n {
        if j == i {
            continue;
        }
        let dj = (shifted(j, h)? - shifted(j, -h)?) / (2.0 * h);
        acc += 2.0 / (y[j] - y[i]) * dj;
        if j < n {
            acc -= 2.0 * hw / (y[j] - y[i]).powi(2) * r0;
        }
    }
    acc -= 0.125 / (y[n] - y[i]).powi(2) * r0;
    Ok(acc / r0.abs())
}

/// Evenly spaced marked points `0, 1, …, N−1` with `x_{N+1} = N`.
pub fn default_points(n: usize) -> (Vec<f64>, f64) {
    ((0..n).map(|i| i as f64).collect(), n as f64)
}

/// Partition identity report. N = 1 is checked against the closed forms;
/// larger N compares quadrature with two independent Monte Carlo estimates.
pub fn verify_partition(cfg: &MarkedConfig, mc_samples: usize, seed: u64) -> Result<StatReport, PartitionError> {
    let ident = "eqn partition_func";
    let mut rep = StatReport::new("partition");
    let quad = check_partition_identity(cfg, Method::quadrature())?;
    if cfg.n() == 1 && !cfg.collapsed {
        let exact = w1_closed_form(cfg.kappa, cfg.xs[0], cfg.x_next);
        rep.push(Metric::new("identity_rel_err", quad.rel_err, 1e-10, Check::AtMost, ident));
        rep.push(Metric::new("w1_rel_err", (quad.w.value() / exact - 1.0).abs(), 1e-10, Check::AtMost, "closed form of W_1"));
        rep.push(Metric::new("z1_equals_one", (quad.z.value() - 1.0).abs(), 0.0, Check::AtMost, "closed form of Z_1"));
        return Ok(rep);
    }
    rep.push(Metric::new("identity_rel_err", quad.rel_err, 1e-8, Check::AtMost, ident));
    rep.push(Metric::info("z_quadrature", quad.z.value(), "Z_N"));
    rep.push(Metric::info("w_quadrature", quad.w.value(), "W_N"));
    let mc = check_partition_identity(cfg, Method::MonteCarlo { samples: mc_samples, seed })?;
    let sig = |est: &PartitionEval, reference: &PartitionEval| (est.value() - reference.value()).abs() / est.std_error;
    rep.push(Metric::new("identity_mc_sigmas", mc.rel_err / mc.combined_rel_se, 3.0, Check::AtMost, ident));
    rep.push(Metric::info("z_mc_vs_quadrature_sigmas", sig(&mc.z, &quad.z), "Z_N"));
    rep.push(Metric::info("w_mc_vs_quadrature_sigmas", sig(&mc.w, &quad.w), "W_N"));
    rep.push(Metric::info("identity_mc_rel_err", mc.rel_err, ident));
    rep.push(Metric::info("mc_samples", mc_samples as f64, ident));
    Ok(rep)
}

/// BPZ residuals of `R_N` at κ = 3: the exact N = 1 case, O(h²) decay of the
/// central-difference error, and its relative size at `h`. The N = 1 case is
/// differenced at `min(h, 1e-4)` since its residual is pure truncation error.
pub fn verify_pde(ys: &[f64], y_next: f64, h: f64) -> Result<StatReport, PartitionError> {
    let ident = "eqn BPZ";
    let mut rep = StatReport::new("pde");
    let n = ys.len();
    let at = |h: f64| -> Result<f64, PartitionError> {
        (0..n).map(|i| bpz_residual(ys, y_next, i, h).map(f64::abs)).try_fold(0.0, |m: f64, r| r.map(|r| m.max(r)))
    };
    if n == 1 {
        let res = at(h.min(1e-4))?;
        rep.push(Metric::new("residual", res, 1e-7, Check::AtMost, ident));
        return Ok(rep);
    }
    let res = at(h)?;
    rep.push(Metric::new("relative_residual", res, 1e-4, Check::AtMost, ident));
    let hs: Vec<f64> = (0..4).map(|k| 16.0 * h / f64::powi(2.0, k)).collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for w in hs.windows(2) {
        for i in 0..n {
            let r = bpz_residual(ys, y_next, i, w[0])? / bpz_residual(ys, y_next, i, w[1])?;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    rep.push(Metric::new("halving_ratio_min", lo, 3.5, Check::AtLeast, "second-order differences"));
    rep.push(Metric::new("halving_ratio_max", hi, 4.5, Check::AtMost, "second-order differences"));
    rep.push(Metric::info("r_value", eval_r(ys, y_next)?, "R_N"));
    Ok(rep)
}

/// Both lines of the Ising limit formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitProbability {
    pub via_z: f64,
    pub via_w: f64,
    pub value: f64,
    pub r: f64,
    pub z: PartitionEval,
    pub w: PartitionEval,
}

/// `F_N` at κ (the limit theorem uses κ = 3); both expressions must agree.
pub fn limit_probability(ys: &[f64], y_next: f64, kappa: f64) -> Result<LimitProbability, PartitionError> {
    let cfg = MarkedConfig::spread(kappa, ys.to_vec(), y_next)?;
    let n = ys.len();
    let r = eval_r(ys, y_next)?;
    if !(r > 0.0) {
        return Err(PartitionError::NonPositiveR(r));
    }
    let z = normalize(&cfg, Parity::Odd, Method::quadrature())?;
    let w = normalize(&cfg, Parity::Even, Method::quadrature())?;
    let lb = log_beta_const(kappa);
    let mut pair = 0.0;
    for j in 0..n {
        for i in 0..j {
            pair += 2.0 / kappa * (ys[j] - ys[i]).ln();
        }
    }
    let lsum: f64 = ys.iter().map(|y| (y_next - y).ln()).sum();
    let via_z = (-((n / 2) as f64) * lb + pair + (kappa - 6.0) / (2.0 * kappa) * lsum + z.log_value - r.ln()).exp();
    let via_w = (-(((n + 1) / 2) as f64) * lb + pair + (kappa - 2.0) / (2.0 * kappa) * lsum + w.log_value - r.ln()).exp();
    let tol = 1e-6 + 3.0 * (z.rel_error() + w.rel_error());
    if ((via_z - via_w) / via_w).abs() > tol {
        return Err(PartitionError::Disagreement { a: via_z, b: via_w });
    }
    Ok(LimitProbability { via_z, via_w, value: 0.5 * (via_z + via_w), r, z, w })
}

/// Ordered uniform draw on `(lo, hi)` used by property tests and samplers.
pub fn ordered_uniform<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}
