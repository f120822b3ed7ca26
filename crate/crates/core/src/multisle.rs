//! Multiple SLE_κ((κ−6)/2, (κ−6)/2) curve systems built by the cascade.
//!
//! Each level samples hitting points from the odd (`z`) or even (`w`)
//! density, runs the rightmost curve as an SLE_κ(ρ) with the matching force
//! list, maps the remaining marked points forward and flips the parity. The
//! landing point `W_τ` becomes the next level's `x_{N+1}`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::jacobi::{self, JacobiError, JacobiParams};
use crate::loewner::{self, DrivingPath, LoewnerError, TracePolyline};
use crate::partition::{
    self, log_beta_const, log_integrand_s, MarkedConfig, Method, Parity, PartitionError,
};
use crate::quad;
use crate::report::{Check, Metric, StatReport};
use crate::rng::{derive_seed, replica_rng};
use crate::sde::{self, ForcePointSpec, SdeError, SdeRun, SleRunConfig, StopRule};
use crate::stats::{self, bootstrap, gelman_rubin, integrated_autocorrelation, ks_one_sample, ks_two_sample, mean};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultiError {
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Loewner(#[from] LoewnerError),
    #[error(transparent)]
    Jacobi(#[from] JacobiError),
    #[error("hitting-point MCMC did not converge: Gelman-Rubin {0:.4} > 1.05")]
    NotConverged(f64),
    #[error("curve {curve} did not reach (x_{{N+1}}, ∞): {reason}")]
    NoLanding { curve: usize, reason: String },
    #[error("invalid request: {0}")]
    Request(String),
}

/// Ordered hitting points of one construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingPoints {
    pub parity: Parity,
    pub values: Vec<f64>,
}

/// Map `s ∈ (0,1)` (with `1 − s` supplied) to `x_{N+1} + L s/(1 − s)`.
fn from_s(cfg: &MarkedConfig, s: f64, cs: f64) -> f64 {
    cfg.x_next + cfg.scale() * s / cs
}

fn to_s(cfg: &MarkedConfig, z: f64) -> f64 {
    let u = (z - cfg.x_next) / cfg.scale();
    u / (1.0 + u)
}

/// One-dimensional hitting law in `s` coordinates, normalized by quadrature.
struct Law1d<'a> {
    cfg: &'a MarkedConfig,
    parity: Parity,
    log_ref: f64,
    total: f64,
}

impl<'a> Law1d<'a> {
    fn new(cfg: &'a MarkedConfig, parity: Parity) -> Self {
        let log_ref = log_integrand_s(cfg, parity, &[0.5], &[0.5]);
        let mut law = Self { cfg, parity, log_ref, total: 1.0 };
        law.total = law.mass_below(1.0, 0.0);
        law
    }

    fn f(&self, s: f64, cs: f64) -> f64 {
        (log_integrand_s(self.cfg, self.parity, &[s], &[cs]) - self.log_ref).exp()
    }

    /// `∫_0^{s0} f`, substituting `s = s0 t` so `1 − s = (1 − s0) + s0 (1 − t)`.
    fn mass_below(&self, s0: f64, cs0: f64) -> f64 {
        if s0 <= 0.0 {
            return 0.0;
        }
        quad::integrate01(|t, ct| s0 * self.f(s0 * t, cs0 + s0 * ct), 1e-12).value
    }

    fn cdf_s(&self, s: f64) -> f64 {
        (self.mass_below(s, 1.0 - s) / self.total).clamp(0.0, 1.0)
    }

    /// Inverse CDF by safeguarded Newton on `s`.
    fn quantile(&self, u: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut s = 0.5;
        for _ in 0..100 {
            let g = self.cdf_s(s) - u;
            if g.abs() < 1e-13 {
                break;
            }
            if g > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let d = self.f(s, 1.0 - s) / self.total;
            let newton = s - g / d;
            s = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 {
                break;
            }
        }
        s
    }
}

/// Exact CDF of the single hitting point (count 1), in original coordinates.
pub fn hitting_cdf_1d(cfg: &MarkedConfig, parity: Parity) -> Result<impl Fn(f64) -> f64 + '_, MultiError> {
    if cfg.count(parity) != 1 {
        return Err(MultiError::Request("CDF available for a single hitting point only".into()));
    }
    partition::check_integrable(cfg, parity)?;
    let law = Law1d::new(cfg, parity);
    Ok(move |z: f64| if z <= cfg.x_next { 0.0 } else { law.cdf_s(to_s(cfg, z)) })
}

/// Metropolis in logit coordinates of the ordered simplex.
struct SimplexChain<'a> {
    cfg: &'a MarkedConfig,
    parity: Parity,
    u: Vec<f64>,
    lp: f64,
    step: f64,
}

fn sigmoid_pair(u: f64) -> (f64, f64) {
    // (s, 1 − s) without cancellation
    if u >= 0.0 {
        let e = (-u).exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = u.exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    }
}

impl<'a> SimplexChain<'a> {
    fn target(cfg: &MarkedConfig, parity: Parity, u: &[f64]) -> f64 {
        if u.windows(2).any(|w| !(w[1] > w[0])) {
            return f64::NEG_INFINITY;
        }
        let (s, cs): (Vec<f64>, Vec<f64>) = u.iter().map(|&v| sigmoid_pair(v)).unzip();
        let jac: f64 = s.iter().zip(&cs).map(|(a, b)| a.ln() + b.ln()).sum();
        log_integrand_s(cfg, parity, &s, &cs) + jac
    }

    fn new<R: Rng>(cfg: &'a MarkedConfig, parity: Parity, rng: &mut R) -> Self {
        let d = cfg.count(parity);
        let mut u: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        u.sort_by(|a, b| a.total_cmp(b));
        let lp = Self::target(cfg, parity, &u);
        Self { cfg, parity, u, lp, step: 1.0 / (d as f64).sqrt() }
    }

    fn step<R: Rng>(&mut self, rng: &mut R) -> bool {
        let prop: Vec<f64> = self.u.iter().map(|v| v + self.step * rng.sample::<f64, _>(StandardNormal)).collect();
        let lq = Self::target(self.cfg, self.parity, &prop);
        if lq > f64::NEG_INFINITY && lq - self.lp >= rng.random::<f64>().ln() {
            self.u = prop;
            self.lp = lq;
            true
        } else {
            false
        }
    }

    /// Robbins–Monro adaptation toward 30% acceptance, then an autocorrelation estimate.
    fn adapt<R: Rng>(&mut self, rng: &mut R, pilot: usize) -> usize {
        let mut trace = Vec::with_capacity(pilot);
        for i in 0..pilot {
            let acc = self.step(rng) as u8 as f64;
            if i < pilot / 2 {
                self.step *= ((acc - 0.3) / (1.0 + i as f64).sqrt()).exp();
            } else {
                trace.push(self.u.iter().sum::<f64>());
            }
        }
        integrated_autocorrelation(&trace).ceil() as usize
    }

    fn point(&self) -> Vec<f64> {
        self.u
            .iter()
            .map(|&v| {
                let (s, cs) = sigmoid_pair(v);
                from_s(self.cfg, s, cs)
            })
            .collect()
    }
}

/// MCMC settings for hitting points with two or more coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitBudget {
    pub chains: usize,
    pub pilot: usize,
}

impl Default for HitBudget {
    fn default() -> Self {
        Self { chains: 4, pilot: 4000 }
    }
}

/// One draw; count 1 by inverse CDF, count ≥ 2 by a fresh chain run for
/// ten autocorrelation times past its adaptation phase.
pub fn draw_hitting_points<R: Rng>(
    cfg: &MarkedConfig,
    parity: Parity,
    rng: &mut R,
    budget: HitBudget,
) -> Result<HittingPoints, MultiError> {
    let d = cfg.count(parity);
    if d == 0 {
        return Ok(HittingPoints { parity, values: vec![] });
    }
    partition::check_integrable(cfg, parity)?;
    if d == 1 {
        let law = Law1d::new(cfg, parity);
        let s = law.quantile(rng.random::<f64>());
        return Ok(HittingPoints { parity, values: vec![from_s(cfg, s, 1.0 - s)] });
    }
    let mut chain = SimplexChain::new(cfg, parity, rng);
    let tau = chain.adapt(rng, budget.pilot);
    for _ in 0..10 * tau {
        chain.step(rng);
    }
    Ok(HittingPoints { parity, values: chain.point() })
}

/// `count` draws for a fixed configuration.
///
/// Count 1 uses independent inverse-CDF draws. Otherwise `budget.chains`
/// chains run with burn-in of ten autocorrelation times and thinning by one;
/// a Gelman–Rubin statistic above 1.05 on any coordinate is an error.
pub fn sample_hitting_points(
    cfg: &MarkedConfig,
    parity: Parity,
    seed: u64,
    count: usize,
    budget: HitBudget,
) -> Result<Vec<HittingPoints>, MultiError> {
    cfg.validate()?;
    let d = cfg.count(parity);
    if d == 0 {
        return Ok(vec![HittingPoints { parity, values: vec![] }; count]);
    }
    partition::check_integrable(cfg, parity)?;
    if d == 1 {
        let law = Law1d::new(cfg, parity);
        return Ok((0..count)
            .into_par_iter()
            .map(|i| {
                let u: f64 = replica_rng(seed, i as u64).random();
                let s = law.quantile(u);
                HittingPoints { parity, values: vec![from_s(cfg, s, 1.0 - s)] }
            })
            .collect());
    }
    let per = count.div_ceil(budget.chains);
    let chains: Vec<Vec<Vec<f64>>> = (0..budget.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = replica_rng(seed, c as u64);
            let mut chain = SimplexChain::new(cfg, parity, &mut rng);
            let tau = chain.adapt(&mut rng, budget.pilot);
            for _ in 0..10 * tau {
                chain.step(&mut rng);
            }
            (0..per)
                .map(|_| {
                    for _ in 0..tau {
                        chain.step(&mut rng);
                    }
                    chain.point()
                })
                .collect()
        })
        .collect();
    for j in 0..d {
        let coord: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|p| to_s(cfg, p[j])).collect()).collect();
        let r = gelman_rubin(&coord);
        if r > 1.05 {
            return Err(MultiError::NotConverged(r));
        }
    }
    Ok(chains
        .into_iter()
        .flatten()
        .take(count)
        .map(|values| HittingPoints { parity, values })
        .collect())
}

/// Force list of curve `j` (1-based) for the given construction.
///
/// Left: weight 2 at `x_{j−1}, …, x_1` (one prime end of weight `2(j−1)` in
/// collapsed mode). Right: weight 2 at `x_{j+1}, …, x_N`, then `(κ−6)/2`
/// (odd) or `(κ−2)/2` (even) at `x_{N+1}`, then −4 at each hitting point.
pub fn flow_line_config(
    cfg: &MarkedConfig,
    j: usize,
    parity: Parity,
    hits: &HittingPoints,
    dt: f64,
) -> Result<SleRunConfig, MultiError> {
    let n = cfg.n();
    if j == 0 || j > n {
        return Err(MultiError::Request(format!("curve index {j} outside 1..={n}")));
    }
    if hits.parity != parity || hits.values.len() != cfg.count(parity) {
        return Err(MultiError::Request("hitting points do not match the construction".into()));
    }
    let k = cfg.kappa;
    let mut forces = Vec::new();
    let start;
    if cfg.collapsed {
        start = cfg.xs[0];
        if j > 1 {
            forces.push(ForcePointSpec::prime_end(2.0 * (j - 1) as f64));
        }
        if j < n {
            return Err(MultiError::Request("collapsed mode runs the outermost curve only".into()));
        }
    } else {
        start = cfg.xs[j - 1];
        for i in (0..j - 1).rev() {
            forces.push(ForcePointSpec::left(cfg.xs[i], 2.0));
        }
        for i in j..n {
            forces.push(ForcePointSpec::right(cfg.xs[i], 2.0));
        }
    }
    let rho = match parity {
        Parity::Odd => (k - 6.0) / 2.0,
        Parity::Even => (k - 2.0) / 2.0,
    };
    forces.push(ForcePointSpec::right(cfg.x_next, rho));
    for &v in &hits.values {
        forces.push(ForcePointSpec::right(v, -4.0));
    }
    let sc = SleRunConfig::new(k, start, forces)
        .with_dt(dt * cfg.scale().powi(2))
        .with_stop(StopRule::HitInterval { a: cfg.x_next, b: f64::INFINITY });
    Ok(sc)
}

/// Step cap relative to the tip height, used when curves are traced: later
/// levels are pulled back through earlier maps, so steps must be small on the
/// scale of the nearby boundary.
const TIP_FRACTION: f64 = 0.5;

/// A sampled marginal flow line.
#[derive(Debug, Clone)]
pub struct FlowLine {
    pub run: SdeRun,
    pub trace: Option<TracePolyline>,
    /// Driver at the hitting time, in the level's coordinates.
    pub hit_point: f64,
    /// Landing point in the level's input coordinates.
    pub landing: f64,
}

pub fn sample_flow_line_marginal<R: Rng>(
    cfg: &MarkedConfig,
    j: usize,
    parity: Parity,
    hits: &HittingPoints,
    opts: &SystemOptions,
    rng: &mut R,
) -> Result<FlowLine, MultiError> {
    let mut sc = flow_line_config(cfg, j, parity, hits, opts.dt)?;
    if opts.resolution.is_some() || opts.fine_steps {
        sc.control.tip_fraction = Some(TIP_FRACTION);
    }
    let run = sde::sample_driver_with(&sc, rng)?;
    let Some(hit) = run.hit else {
        return Err(MultiError::NoLanding { curve: j, reason: format!("{:?}", run.reason) });
    };
    let trace = match opts.resolution {
        Some(tol) => Some(refined_trace(&run.driving, hit.landing, tol * cfg.scale(), |z| Ok(z))?),
        None => None,
    };
    Ok(FlowLine { hit_point: hit.hit_point, landing: hit.landing, run, trace })
}

/// Knobs for [`sample_system`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemOptions {
    /// Parity of the first (outermost) level.
    pub start: Parity,
    /// Base SDE step, relative to `(x_{N+1} − x_1)²`.
    pub dt: f64,
    /// Largest polyline segment, relative to `x_{N+1} − x_1`; `None` skips tracing.
    pub resolution: Option<f64>,
    /// Cap steps by the tip height even when not tracing.
    pub fine_steps: bool,
    pub hit_budget: HitBudget,
}

impl Default for SystemOptions {
    fn default() -> Self {
        Self { start: Parity::Odd, dt: 1e-3, resolution: None, fine_steps: false, hit_budget: HitBudget::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveSystem {
    /// Curve `j` at index `j − 1`, in original coordinates (empty when not traced).
    #[serde(skip)]
    pub curves: Vec<TracePolyline>,
    /// Landing point of curve `j` at index `j − 1`.
    pub endpoints: Vec<f64>,
    /// Construction used at each level, outermost first.
    pub parity_history: Vec<Parity>,
}

impl CurveSystem {
    /// Landing points of curves `N−1, N−3, …` (the `z` class) in increasing order.
    pub fn odd_class(&self) -> Vec<f64> {
        let n = self.endpoints.len();
        (1..=n).rev().filter(|j| (n - j) % 2 == 1).map(|j| self.endpoints[j - 1]).collect()
    }

    /// Landing points of curves `N, N−2, …` (the `w` class) in increasing order.
    pub fn even_class(&self) -> Vec<f64> {
        let n = self.endpoints.len();
        (1..=n).rev().filter(|j| (n - j) % 2 == 0).map(|j| self.endpoints[j - 1]).collect()
    }

    pub fn class(&self, parity: Parity) -> Vec<f64> {
        match parity {
            Parity::Odd => self.odd_class(),
            Parity::Even => self.even_class(),
        }
    }
}

/// Endpoints interlace iff they strictly decrease in the curve index.
pub fn interlaces(endpoints: &[f64]) -> bool {
    endpoints.windows(2).all(|w| w[0] > w[1])
}

fn segments_cross(p1: Complex64, p2: Complex64, q1: Complex64, q2: Complex64) -> bool {
    let cross = |a: Complex64, b: Complex64, c: Complex64| (b - a).re * (c - a).im - (b - a).im * (c - a).re;
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Proper crossing between two polylines; touching endpoints do not count.
pub fn polylines_cross(a: &TracePolyline, b: &TracePolyline) -> bool {
    let (va, vb) = (&a.vertices, &b.vertices);
    for i in 1..va.len() {
        let (p1, p2) = (va[i - 1], va[i]);
        let (lo, hi) = (p1.re.min(p2.re), p1.re.max(p2.re));
        for k in 1..vb.len() {
            let (q1, q2) = (vb[k - 1], vb[k]);
            if q1.re.max(q2.re) < lo || q1.re.min(q2.re) > hi {
                continue;
            }
            if segments_cross(p1, p2, q1, q2) {
                return true;
            }
        }
    }
    false
}

pub fn non_crossing(curves: &[TracePolyline]) -> bool {
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            if polylines_cross(&curves[i], &curves[j]) {
                return false;
            }
        }
    }
    true
}

struct Level {
    driving: DrivingPath,
}

fn pull_back(levels: &[Level], y: f64) -> f64 {
    levels.iter().rev().fold(y, |x, l| loewner::invert_real(&l.driving, x))
}

fn pull_back_point(levels: &[Level], z: Complex64) -> Result<Complex64, LoewnerError> {
    let mut z = z;
    for l in levels.iter().rev() {
        z = if z.im <= 0.0 {
            Complex64::new(loewner::invert_real(&l.driving, z.re), 0.0)
        } else {
            loewner::invert_map(&l.driving, l.driving.final_time(), z)?
        };
    }
    Ok(z)
}

const MAX_TRACE_VERTICES: usize = 20_000;

/// Grid-time tips of `driving` ending at `landing`, pushed through `map`.
/// Starting from about 256 evenly spaced steps, a segment is bisected (in
/// step index) while its mapped length exceeds `tol`; neighbouring grid tips
/// are never split further. Capacities are those of the driving path itself.
pub fn refined_trace(
    driving: &DrivingPath,
    landing: f64,
    tol: f64,
    map: impl Fn(Complex64) -> Result<Complex64, LoewnerError>,
) -> Result<TracePolyline, LoewnerError> {
    let times = driving.times();
    let at = |k: usize| -> Result<Complex64, LoewnerError> {
        let v = loewner::tip_at(driving, k);
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(LoewnerError::Resolution { step: k, last_valid_time: times[k.saturating_sub(1)] });
        }
        map(Complex64::new(v.re, v.im.max(0.0)))
    };
    let n = driving.steps();
    let stride = (n / 256).max(1);
    let mut coarse: Vec<usize> = (0..=n).step_by(stride).collect();
    if *coarse.last().unwrap() != n {
        coarse.push(n);
    }
    let mut out = TracePolyline::default();
    let mut prev = (0usize, at(0)?);
    out.vertices.push(prev.1);
    out.capacities.push(times[0]);
    for &kb in &coarse[1..] {
        let mut stack = vec![(kb, at(kb)?)];
        while let Some(&(k, p)) = stack.last() {
            let long = (p - prev.1).norm() > tol;
            if long && k - prev.0 > 1 && out.vertices.len() + stack.len() < MAX_TRACE_VERTICES {
                let km = (prev.0 + k) / 2;
                stack.push((km, at(km)?));
            } else {
                stack.pop();
                out.vertices.push(p);
                out.capacities.push(times[k]);
                prev = (k, p);
            }
        }
    }
    out.vertices.push(map(Complex64::new(landing, 0.0))?);
    out.capacities.push(driving.final_time());
    Ok(out)
}

/// Sample the full system by the cascade, outermost curve first.
pub fn sample_system_with<R: Rng>(cfg: &MarkedConfig, opts: &SystemOptions, rng: &mut R) -> Result<CurveSystem, MultiError> {
    cfg.validate()?;
    let n = cfg.n();
    let mut endpoints = vec![0.0; n];
    let mut curves = vec![TracePolyline::default(); n];
    let mut history = Vec::with_capacity(n);
    let mut levels: Vec<Level> = Vec::with_capacity(n);
    let mut level_cfg = cfg.clone();
    let mut parity = opts.start;
    for j in (1..=n).rev() {
        let hits = draw_hitting_points(&level_cfg, parity, rng, opts.hit_budget)?;
        let local = SystemOptions { resolution: None, fine_steps: opts.resolution.is_some(), ..*opts };
        let line = sample_flow_line_marginal(&level_cfg, j, parity, &hits, &local, rng)?;
        endpoints[j - 1] = pull_back(&levels, line.landing);
        if let Some(tol) = opts.resolution {
            let back = |z| pull_back_point(&levels, z);
            curves[j - 1] = refined_trace(&line.run.driving, line.landing, tol * cfg.scale(), back)?;
        }
        history.push(parity);
        if j > 1 {
            let images = line.run.final_images();
            let next = if level_cfg.collapsed {
                MarkedConfig::collapsed(level_cfg.kappa, images[0], j - 1, line.hit_point)?
            } else {
                // left force points were listed x_{j−1}, …, x_1
                let xs: Vec<f64> = images[..j - 1].iter().rev().cloned().collect();
                MarkedConfig::spread(level_cfg.kappa, xs, line.hit_point)?
            };
            level_cfg = next;
        }
        levels.push(Level { driving: line.run.driving });
        parity = parity.flip();
    }
    Ok(CurveSystem { curves, endpoints, parity_history: history })
}

pub fn sample_system(cfg: &MarkedConfig, seed: u64, index: u64, opts: &SystemOptions) -> Result<CurveSystem, MultiError> {
    sample_system_with(cfg, opts, &mut replica_rng(seed, index))
}

/// Replicates `0..count`; failed replicates are dropped and counted.
pub fn sample_systems(cfg: &MarkedConfig, seed: u64, count: usize, opts: &SystemOptions) -> (Vec<CurveSystem>, Vec<String>) {
    let results: Vec<Result<CurveSystem, MultiError>> =
        (0..count).into_par_iter().map(|i| sample_system(cfg, seed, i as u64, opts)).collect();
    let mut ok = Vec::with_capacity(count);
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => ok.push(s),
            Err(e) => failures.push(format!("replicate {i}: {e}")),
        }
    }
    (ok, failures)
}

fn fraction_interlaced(systems: &[CurveSystem]) -> f64 {
    systems.iter().filter(|s| interlaces(&s.endpoints)).count() as f64 / systems.len().max(1) as f64
}

fn column(rows: &[Vec<f64>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i]).collect()
}

/// KS per coordinate between cascade endpoints and direct density draws,
/// for both the odd and even classes.
pub fn verify_hitting_law(
    cfg: &MarkedConfig,
    replicates: usize,
    seed: u64,
    opts: &SystemOptions,
    ks_tol: f64,
) -> Result<StatReport, MultiError> {
    let n = cfg.n();
    if n > 3 {
        return Err(MultiError::Request("desk-scale hitting-law checks support N ≤ 3".into()));
    }
    if replicates < 100 {
        return Err(MultiError::Request("need at least 100 replicates for a KS comparison".into()));
    }
    let mut rep = StatReport::new("hitting-law");
    let (systems, failures) = sample_systems(cfg, seed, replicates, opts);
    rep.notes.extend(failures);
    rep.push(Metric::info("replicates_used", systems.len() as f64, "Corollary hitting_law"));
    rep.push(Metric::new(
        "interlaced_fraction",
        fraction_interlaced(&systems),
        1.0,
        Check::AtLeast,
        "interlacing of odd/even landing points",
    ));
    for parity in [Parity::Odd, Parity::Even] {
        let d = cfg.count(parity);
        if d == 0 {
            continue;
        }
        let tag = match parity {
            Parity::Odd => "odd",
            Parity::Even => "even",
        };
        let cascade: Vec<Vec<f64>> = systems.iter().map(|s| s.class(parity)).collect();
        let direct = sample_hitting_points(cfg, parity, derive_seed(seed, 0xd1ec + d as u64), 10 * replicates, opts.hit_budget)?;
        let direct: Vec<Vec<f64>> = direct.into_iter().map(|h| h.values).collect();
        for i in 0..d {
            let a = column(&cascade, i);
            let b = column(&direct, i);
            let ks = ks_two_sample(&a, &b).map_err(|e| MultiError::Request(e.to_string()))?;
            rep.push(Metric::new(&format!("ks_{tag}_{}", i + 1), ks, ks_tol, Check::AtMost, "Corollary hitting_law"));
            let mut brng = replica_rng(derive_seed(seed, 0xb007), i as u64);
            let m = bootstrap(&a, 400, &mut brng, mean);
            rep.push(
                Metric::info(&format!("mean_{tag}_{}_cascade", i + 1), m.estimate, "first moment").with_ci(m.lo, m.hi),
            );
            rep.push(Metric::info(&format!("mean_{tag}_{}_direct", i + 1), mean(&b), "first moment"));
        }
        if d == 1 {
            let cdf = hitting_cdf_1d(cfg, parity)?;
            let a = column(&cascade, 0);
            let ks = ks_one_sample(&a, &cdf).map_err(|e| MultiError::Request(e.to_string()))?;
            rep.push(Metric::info(&format!("ks_{tag}_exact_cdf"), ks, "quadrature CDF"));
        }
        if d >= 2 {
            let prod = |rows: &[Vec<f64>]| mean(&rows.iter().map(|r| to_s(cfg, r[0]) * to_s(cfg, r[1])).collect::<Vec<_>>());
            rep.push(Metric::info(&format!("joint_s1s2_{tag}_cascade"), prod(&cascade), "second joint moment"));
            rep.push(Metric::info(&format!("joint_s1s2_{tag}_direct"), prod(&direct), "second joint moment"));
        }
    }
    Ok(rep)
}

/// Jacobi parameters as literally listed for the collapsed corollary.
pub fn corollary_jacobi_params(n: usize, kappa: f64, parity: Parity) -> Result<JacobiParams, JacobiError> {
    let (nf, m) = (n as f64, (n / 2) as f64);
    match parity {
        Parity::Odd => JacobiParams::new(n / 2, 8.0 / kappa, (2.0 * nf - 4.0 * m + 1.0) / 2.0, 1.5),
        Parity::Even => JacobiParams::new(n - n / 2, 8.0 / kappa, (4.0 * m - 2.0 * nf + 3.0) / 2.0, 0.5),
    }
}

/// Jacobi parameters obtained by pushing the collapsed density through
/// `ψ(z) = 1/z`: `β = 8/κ`, `b = c`, `a = 4N/κ − c − 2 − 8(d−1)/κ`, where
/// `c` is the exponent of `(z − 1)` and `d` the point count.
pub fn pushforward_jacobi_params(n: usize, kappa: f64, parity: Parity) -> Result<JacobiParams, JacobiError> {
    let d = match parity {
        Parity::Odd => n / 2,
        Parity::Even => n - n / 2,
    };
    let c = match parity {
        Parity::Odd => (6.0 - kappa) / kappa,
        Parity::Even => (2.0 - kappa) / kappa,
    };
    let a = 4.0 * n as f64 / kappa - c - 2.0 - 8.0 * (d as f64 - 1.0) / kappa;
    JacobiParams::new(d, 8.0 / kappa, a, c)
}

fn jacobi_columns(p: &JacobiParams, seed: u64, count: usize) -> Result<Vec<Vec<f64>>, MultiError> {
    Ok(jacobi::sample_tridiag_batch(p, seed, count)?.into_iter().map(|s| s.0).collect())
}

/// Collapsed system on `(H; 0; 1, ∞)`, `ψ` applied to endpoints, compared
/// with tridiagonal Jacobi draws.
///
/// The `literal_*` metrics use the parameters exactly as listed for the
/// corollary; the `pushforward_*` metrics use the law obtained by
/// transforming the collapsed densities through `ψ`.
pub fn verify_jacobi_link(
    n: usize,
    kappa: f64,
    replicates: usize,
    seed: u64,
    opts: &SystemOptions,
    ks_tol: f64,
) -> Result<StatReport, MultiError> {
    if replicates < 100 {
        return Err(MultiError::Request("need at least 100 replicates".into()));
    }
    let cfg = MarkedConfig::collapsed(kappa, 0.0, n, 1.0)?;
    let mut rep = StatReport::new("jacobi-link");
    let (systems, failures) = sample_systems(&cfg, seed, replicates, opts);
    rep.notes.extend(failures);
    rep.push(Metric::info("replicates_used", systems.len() as f64, "Corollary same_point_hitting_law"));
    let all_in = systems.iter().all(|s| s.endpoints.iter().all(|&e| e > 1.0));
    rep.push(Metric::new("psi_in_unit_interval", all_in as u8 as f64, 1.0, Check::AtLeast, "ψ(z)=1/z maps (1,∞) to (0,1)"));
    for parity in [Parity::Even, Parity::Odd] {
        let d = cfg.count(parity);
        if d == 0 {
            continue;
        }
        let tag = match parity {
            Parity::Odd => "odd",
            Parity::Even => "even",
        };
        let psi: Vec<Vec<f64>> = systems
            .iter()
            .map(|s| {
                let mut v: Vec<f64> = s.class(parity).iter().map(|z| 1.0 / z).collect();
                v.sort_by(|a, b| a.total_cmp(b));
                v
            })
            .collect();
        for (label, p) in [
            ("literal", corollary_jacobi_params(n, kappa, parity)?),
            ("pushforward", pushforward_jacobi_params(n, kappa, parity)?),
        ] {
            let reference = jacobi_columns(&p, derive_seed(seed, 0x7a11 + d as u64), 10 * replicates)?;
            for i in 0..d {
                let a = column(&psi, i);
                let b = column(&reference, i);
                let ks = ks_two_sample(&a, &b).map_err(|e| MultiError::Request(e.to_string()))?;
                let ident = format!("Corollary same_point_hitting_law ({label} Jacobi({}; {:.4}, {:.4}, {:.4}))", p.n, p.beta, p.a, p.b);
                rep.push(Metric::new(&format!("{label}_ks_{tag}_{}", i + 1), ks, ks_tol, Check::AtMost, &ident));
                let se = stats::std_error(&a);
                let m = mean(&a);
                let target = if d == 1 { (p.a + 1.0) / (p.a + p.b + 2.0) } else { mean(&b) };
                rep.push(
                    Metric::new(&format!("{label}_mean_sigmas_{tag}_{}", i + 1), (m - target).abs() / se, 3.0, Check::AtMost, &ident)
                        .with_ci(m - 3.0 * se, m + 3.0 * se),
                );
                rep.push(Metric::info(&format!("{label}_target_mean_{tag}_{}", i + 1), target, &ident));
                if label == "literal" {
                    rep.push(Metric::info(&format!("mean_{tag}_{}", i + 1), m, &ident));
                }
            }
        }
    }
    Ok(rep)
}

fn histogram_s(cfg: &MarkedConfig, xs: &[f64], w: Option<&[f64]>, bins: usize) -> Vec<f64> {
    let s: Vec<f64> = xs.iter().map(|&x| to_s(cfg, x)).collect();
    stats::histogram(&s, w, 0.0, 1.0, bins)
}

/// Base curve `SLE_κ(2,…,2; (κ−6)/2)` from `x_N`, landing weight by
/// `W_{N−1}/Z_N` (odd) or the Beta-prefactored `Z_{N−1}/W_N` ratio (even).
///
/// Landing points of the weighted base runs are compared with the landing
/// points of curve `N` from the direct cascade started in `parity`, on 50
/// equal bins of the compactified coordinate `s = u/(1+u)`,
/// `u = (p − x_{N+1})/L`.
pub fn verify_cascade_weight(
    cfg: &MarkedConfig,
    parity: Parity,
    replicates: usize,
    seed: u64,
    opts: &SystemOptions,
    tv_tol: f64,
) -> Result<StatReport, MultiError> {
    let n = cfg.n();
    if !(2..=3).contains(&n) || cfg.collapsed {
        return Err(MultiError::Request("cascade-weight check needs spread N ∈ {2,3}".into()));
    }
    let k = cfg.kappa;
    let mut forces: Vec<ForcePointSpec> = (0..n - 1).rev().map(|i| ForcePointSpec::left(cfg.xs[i], 2.0)).collect();
    forces.push(ForcePointSpec::right(cfg.x_next, (k - 6.0) / 2.0));
    let base = SleRunConfig::new(k, cfg.xs[n - 1], forces)
        .with_dt(opts.dt * cfg.scale().powi(2))
        .with_stop(StopRule::HitInterval { a: cfg.x_next, b: f64::INFINITY });
    let z_n = partition::normalize(cfg, Parity::Odd, Method::quadrature())?;
    let w_n = partition::normalize(cfg, Parity::Even, Method::quadrature())?;
    let lb = log_beta_const(k);
    let log_prod0: f64 = cfg.xs.iter().map(|x| 2.0 / k * (cfg.x_next - x).ln()).sum();

    let runs: Vec<Result<(f64, f64), MultiError>> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let run = sde::sample_driver(&base, derive_seed(seed, 0xba5e), i as u64)?;
            let hit = run.hit.ok_or(MultiError::NoLanding { curve: n, reason: format!("{:?}", run.reason) })?;
            let imgs = run.final_images();
            let xs: Vec<f64> = imgs[..n - 1].iter().rev().cloned().collect();
            let next = MarkedConfig::spread(k, xs.clone(), hit.hit_point)?;
            let log_w = match parity {
                Parity::Odd => partition::normalize(&next, Parity::Even, Method::quadrature())?.log_value - z_n.log_value,
                Parity::Even => {
                    // g_τ(x_{N+1}) is swallowed together with the landing point: it equals W_τ
                    let lp: f64 = xs.iter().map(|x| -2.0 / k * (hit.hit_point - x).ln()).sum();
                    lb + lp + partition::normalize(&next, Parity::Odd, Method::quadrature())?.log_value
                        - log_prod0
                        - w_n.log_value
                }
            };
            Ok((hit.landing, log_w.exp()))
        })
        .collect();
    let mut rep = StatReport::new("cascade-weight");
    let (mut land, mut wts) = (Vec::new(), Vec::new());
    for (i, r) in runs.into_iter().enumerate() {
        match r {
            Ok((l, w)) => {
                land.push(l);
                wts.push(w);
            }
            Err(e) => rep.notes.push(format!("base replicate {i}: {e}")),
        }
    }
    let direct_opts = SystemOptions { start: parity, resolution: None, ..*opts };
    let (systems, failures) = sample_systems(cfg, derive_seed(seed, 0xd19e), replicates, &direct_opts);
    rep.notes.extend(failures);
    let direct: Vec<f64> = systems.iter().map(|s| s.endpoints[n - 1]).collect();

    let ident = match parity {
        Parity::Odd => "eqn weight_ell",
        Parity::Even => "eqn weight_eta",
    };
    let bins = 50;
    let hw = histogram_s(cfg, &land, Some(&wts), bins);
    let hd = histogram_s(cfg, &direct, None, bins);
    rep.push(Metric::new("tv_distance", stats::total_variation(&hw, &hd), tv_tol, Check::AtMost, ident));
    // sampling-noise reference: two independent direct samples of the same size
    let (twin, _) = sample_systems(cfg, derive_seed(seed, 0x7a1e), replicates, &direct_opts);
    let twin: Vec<f64> = twin.iter().map(|s| s.endpoints[n - 1]).collect();
    let ht = histogram_s(cfg, &twin, None, bins);
    rep.push(Metric::info("tv_direct_vs_direct", stats::total_variation(&hd, &ht), "noise floor at this sample size"));
    let positive = wts.iter().all(|&w| w > 0.0 && w.is_finite());
    rep.push(Metric::new("weights_positive", positive as u8 as f64, 1.0, Check::AtLeast, ident));
    let mw = mean(&wts);
    let se = stats::std_error(&wts);
    rep.push(Metric::new("mean_weight_sigmas", (mw - 1.0).abs() / se, 3.0, Check::AtMost, ident).with_ci(mw - 3.0 * se, mw + 3.0 * se));
    rep.push(Metric::info("mean_weight", mw, ident));
    let ess = stats::effective_sample_size(&wts);
    rep.push(Metric::info("effective_sample_size", ess, ident));
    if ess < 0.1 * wts.len() as f64 {
        rep.notes.push(format!("low effective sample size {ess:.0} of {}", wts.len()));
    }
    Ok(rep)
}

/// Martingale test settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleOptions {
    pub horizon: f64,
    pub grid_points: usize,
    /// `ε` of the stopping time `τ_ε`; `None` disables stopping (negative control).
    pub eps: Option<f64>,
    /// `K` of `L_K`.
    pub cap: f64,
    pub dt: f64,
}

impl Default for MartingaleOptions {
    fn default() -> Self {
        Self { horizon: 1.0, grid_points: 20, eps: Some(0.05), cap: 10.0, dt: 1e-3 }
    }
}

/// `log M_t` up to the constant `−log M_0`.
fn log_m(g: &[f64], w: f64, g_next: f64) -> Result<f64, PartitionError> {
    let m = g.len();
    let mut acc = 0.0;
    for j in 0..m {
        for i in 0..j {
            acc += -2.0 / 3.0 * (g[j] - g[i]).ln();
        }
        acc += 0.5 * (g_next - g[j]).ln() - 2.0 / 3.0 * (w - g[j]).ln();
    }
    acc += 0.5 * (g_next - w).ln();
    let mut ys = g.to_vec();
    ys.push(w);
    let r = partition::eval_r(&ys, g_next)?;
    if !(r > 0.0) {
        return Err(PartitionError::NonPositiveR(r));
    }
    Ok(acc + r.ln())
}

/// `Ê[M_{t∧T}] / M_0` on a time grid for `SLE_3(2,…,2; −3/2)` from `y_N`.
pub fn verify_martingale(
    ys: &[f64],
    y_next: f64,
    paths: usize,
    seed: u64,
    mo: &MartingaleOptions,
) -> Result<StatReport, MultiError> {
    let n = ys.len();
    let kappa = 3.0;
    MarkedConfig::spread(kappa, ys.to_vec(), y_next)?;
    let scale = y_next - ys[0];
    let mut forces: Vec<ForcePointSpec> = (0..n - 1).rev().map(|i| ForcePointSpec::left(ys[i], 2.0)).collect();
    forces.push(ForcePointSpec::right(y_next, (kappa - 6.0) / 2.0));
    let sc = SleRunConfig::new(kappa, ys[n - 1], forces)
        .with_dt(mo.dt * scale * scale)
        .with_horizon(mo.horizon * scale * scale);
    let grid: Vec<f64> = (1..=mo.grid_points).map(|i| mo.horizon * scale * scale * i as f64 / mo.grid_points as f64).collect();
    let log_m0 = log_m(&ys[..n - 1], ys[n - 1], y_next)?;

    let rows: Vec<Result<(Vec<f64>, bool), MultiError>> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let run = sde::sample_driver(&sc, seed, p as u64)?;
            let times = run.driving.times();
            let w = run.driving.values();
            let mut frozen: Option<f64> = None;
            let mut out = Vec::with_capacity(grid.len());
            let mut k = 0usize;
            let mut sup = 0.0f64;
            let mut stopped = false;
            let mut current = 1.0;
            for &tg in &grid {
                while k < times.len() && times[k] <= tg && frozen.is_none() {
                    let g: Vec<f64> = (0..n - 1).rev().map(|i| run.force_paths[i][k]).collect();
                    let g_next = run.force_paths[n - 1][k];
                    current = (log_m(&g, w[k], g_next)? - log_m0).exp();
                    sup = sup.max((w[k] - ys[n - 1]).abs());
                    if let Some(eps) = mo.eps {
                        if g_next - w[k] < eps * scale || 4.0 * sup >= scale / eps || current >= mo.cap {
                            frozen = Some(current);
                            stopped = true;
                        }
                    }
                    k += 1;
                }
                out.push(frozen.unwrap_or(current));
            }
            Ok((out, stopped))
        })
        .collect();
    let mut rep = StatReport::new("martingale");
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(paths);
    let mut stopped = 0usize;
    for (i, r) in rows.into_iter().enumerate() {
        match r {
            Ok((row, s)) => {
                stopped += s as usize;
                table.push(row);
            }
            Err(e) => rep.notes.push(format!("path {i}: {e}")),
        }
    }
    rep.push(Metric::new("m0_ratio", 1.0, 1.0, Check::AtMost, "M_0/M_0"));
    let mut worst = 0.0f64;
    let mut worst_dev = 0.0f64;
    for (gi, &t) in grid.iter().enumerate() {
        let col = column(&table, gi);
        let mut brng = replica_rng(derive_seed(seed, 0xb00), gi as u64);
        let b = bootstrap(&col, 200, &mut brng, mean);
        let dev = (b.estimate - 1.0).abs();
        worst = worst.max(dev / b.sigma);
        worst_dev = worst_dev.max(dev);
        rep.push(Metric::info(&format!("mean_M_t{gi:02}"), b.estimate, &format!("t = {t:.4}")).with_ci(b.lo, b.hi));
    }
    let ident = "Lemma mart_gammaN local martingale";
    if mo.eps.is_some() {
        rep.push(Metric::new("max_dev_sigmas", worst, 3.0, Check::AtMost, ident));
    } else {
        rep.push(Metric::info("max_dev_sigmas", worst, ident));
    }
    rep.push(Metric::info("max_rel_dev", worst_dev, ident));
    let frac = stopped as f64 / table.len().max(1) as f64;
    rep.push(Metric::info("stopped_fraction", frac, "τ_ε ∧ L_K"));
    if mo.eps.is_some() && !(0.02..=0.98).contains(&frac) {
        rep.notes.push(format!("stopped fraction {frac:.3} is unbalanced; adjust horizon or ε"));
    }
    Ok(rep)
}
