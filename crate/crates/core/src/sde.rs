//! SLE_κ(ρ) driving processes.
//!
//! Euler–Maruyama for `dW = sqrt(κ) dB + Σ ρ_j dt / (W − V_j)`. Force point
//! images follow the exact slit map of the same step (driver frozen at the
//! step midpoint), so the returned `V_j` paths coincide with the Loewner flow
//! of the returned driving path.
//!
//! Landing: a cluster of consecutive right points whose cumulative weight is
//! below `κ/2 − 2` can be hit by the driver (Bessel dimension below two).
//! When the driver comes within `land_eps` of that cluster the run stops. If
//! the cluster holds more than one point and its cumulative weight is `≤ −2`
//! the curve is absorbed exactly at the outermost force point, otherwise it
//! lands strictly to its right and the landing point is read off by
//! reflecting the gap and pulling back. A lone first point never absorbs:
//! for κ ≤ 2 the weight (κ−6)/2 is `≤ −2` yet the landing law has no atom.
//!
//! Left points the driver can hit are rejected. A point whose Bessel dimension
//! is only slightly above two can come closer than the step control resolves;
//! such runs fail with [`SdeError::StepControl`] instead of jumping the point.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::loewner::{self, slit_map_real, DrivingPath, LoewnerError};
use crate::rng::replica_rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("step control failed at t = {t}: {msg}")]
    StepControl { t: f64, msg: String },
    #[error(transparent)]
    Loewner(#[from] LoewnerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceLocation {
    At(f64),
    /// The boundary point immediately left of the start.
    PrimeEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForcePointSpec {
    pub side: Side,
    pub location: ForceLocation,
    pub weight: f64,
}

impl ForcePointSpec {
    pub fn left(x: f64, weight: f64) -> Self {
        Self { side: Side::Left, location: ForceLocation::At(x), weight }
    }

    pub fn right(x: f64, weight: f64) -> Self {
        Self { side: Side::Right, location: ForceLocation::At(x), weight }
    }

    pub fn prime_end(weight: f64) -> Self {
        Self { side: Side::Left, location: ForceLocation::PrimeEnd, weight }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    FixedHorizon,
    /// Stop at the first swallowing of a point of `(a, b)`; `b` may be infinite.
    HitInterval { a: f64, b: f64 },
    /// Stop when the trace leaves the disk of this radius about the start.
    HitRadius { radius: f64 },
}

/// Step-size policy; every threshold is relative to the local gap `|W − V|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepControl {
    /// Drift displacement per step ≤ this fraction of the gap.
    pub drift_fraction: f64,
    /// Diffusive displacement `sqrt(κ h)` ≤ this fraction of the gap.
    pub diffusion_fraction: f64,
    /// Landing threshold as a fraction of the configuration scale.
    pub land_eps: f64,
    /// Offset of the prime end as a fraction of the configuration scale.
    pub prime_eps: f64,
    /// When set, `sqrt(κ h)` ≤ this fraction of the tip's height, so each new
    /// slit is small next to the distance from the trace to the boundary.
    pub tip_fraction: Option<f64>,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            drift_fraction: 0.1,
            diffusion_fraction: 0.2,
            land_eps: 1e-5,
            prime_eps: 1e-9,
            tip_fraction: None,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SleRunConfig {
    pub kappa: f64,
    pub start: f64,
    pub forces: Vec<ForcePointSpec>,
    /// Base step in capacity units at gaps up to the configuration scale;
    /// beyond that it grows with the squared gap to the nearest force point.
    pub dt: f64,
    pub max_time: f64,
    pub stop: StopRule,
    pub control: StepControl,
}

impl SleRunConfig {
    pub fn new(kappa: f64, start: f64, forces: Vec<ForcePointSpec>) -> Self {
        Self {
            kappa,
            start,
            forces,
            dt: 1e-2,
            max_time: 1e12,
            stop: StopRule::FixedHorizon,
            control: StepControl::default(),
        }
    }

    pub fn with_stop(mut self, stop: StopRule) -> Self {
        self.stop = stop;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_horizon(mut self, t: f64) -> Self {
        self.max_time = t;
        self
    }

    /// Distance from the start to the nearest real marked location.
    pub fn scale(&self) -> f64 {
        let mut s = f64::INFINITY;
        for f in &self.forces {
            if let ForceLocation::At(x) = f.location {
                s = s.min((x - self.start).abs());
            }
        }
        if let StopRule::HitInterval { a, .. } = self.stop {
            s = s.min((a - self.start).abs());
        }
        if s.is_finite() && s > 0.0 {
            s
        } else {
            1.0
        }
    }

    /// Resolved coordinates of the force points, prime ends included.
    pub fn force_locations(&self) -> Vec<f64> {
        let eps = self.control.prime_eps * self.scale();
        self.forces
            .iter()
            .map(|f| match f.location {
                ForceLocation::At(x) => x,
                ForceLocation::PrimeEnd => self.start - eps,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), SdeError> {
        let bad = |m: String| Err(SdeError::Config(m));
        if !(self.kappa > 0.0 && self.kappa < 4.0) {
            return bad(format!("kappa {} outside (0,4)", self.kappa));
        }
        if !(self.dt > 0.0) || !(self.max_time > 0.0) {
            return bad("dt and max_time must be positive".into());
        }
        if !self.start.is_finite() {
            return bad("start must be finite".into());
        }
        let locs = self.force_locations();
        let mut last_left = self.start;
        let mut last_right = self.start;
        for (f, &x) in self.forces.iter().zip(&locs) {
            if !f.weight.is_finite() || !x.is_finite() {
                return bad("non-finite force point".into());
            }
            match f.side {
                Side::Left => {
                    if !(x < last_left) {
                        return bad(format!("left force point {x} misordered"));
                    }
                    last_left = x;
                }
                Side::Right => {
                    if !(x > last_right) {
                        return bad(format!("right force point {x} misordered"));
                    }
                    last_right = x;
                }
            }
            if f.location == ForceLocation::PrimeEnd && f.side != Side::Left {
                return bad("prime end must be a left force point".into());
            }
        }
        // landing is only implemented on the right
        let mut near_first: Vec<(f64, f64)> =
            self.forces.iter().zip(&locs).filter(|(f, _)| f.side == Side::Left).map(|(f, &x)| (x, f.weight)).collect();
        near_first.sort_by(|p, q| q.0.total_cmp(&p.0));
        let mut cum = 0.0;
        for (x, w) in near_first {
            cum += w;
            if cum < self.kappa / 2.0 - 2.0 {
                return bad(format!("left force point {x} can be hit (cumulative weight {cum} < κ/2 − 2); unsupported"));
            }
        }
        if let StopRule::HitInterval { a, b } = self.stop {
            if !(a > self.start) || !(b > a) {
                return bad(format!("hit interval ({a},{b}) must lie right of the start"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Horizon,
    HitInterval,
    /// Landing on a force point of cumulative weight ≤ −2.
    Absorbed,
    /// Landing outside the requested interval (or with no interval requested).
    Landed,
    HitRadius,
    MaxSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HitRecord {
    pub hit_time: f64,
    /// Driver value at swallowing, in the mapped coordinates at `hit_time`.
    pub hit_point: f64,
    /// Landing point in the original coordinates.
    pub landing: f64,
    pub reason: StopReason,
    /// Index into the force list of the absorbing force point.
    pub absorbed_by: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeRun {
    pub driving: DrivingPath,
    /// `V_j(t_k)` per force point, in input order.
    pub force_paths: Vec<Vec<f64>>,
    pub force_locations: Vec<f64>,
    pub hit: Option<HitRecord>,
    pub reason: StopReason,
}

impl SdeRun {
    /// Images of the force points at the final time.
    pub fn final_images(&self) -> Vec<f64> {
        self.force_paths.iter().map(|p| *p.last().unwrap()).collect()
    }
}

struct Tracked {
    x: f64,
    v: f64,
    weight: f64,
    /// index into the force list, `None` for passive interval endpoints
    force: Option<usize>,
}

/// Sample one driving path with replica seeding `(seed, index)`.
pub fn sample_driver(cfg: &SleRunConfig, seed: u64, index: u64) -> Result<SdeRun, SdeError> {
    let mut rng = replica_rng(seed, index);
    sample_driver_with(cfg, &mut rng)
}

/// Sample one driving path from an existing generator.
/// Tip after the last recorded step, with the midpoint driver.
fn running_tip(times: &[f64], values: &[f64]) -> Complex64 {
    let k = times.len() - 1;
    let step = |j: usize| (0.5 * (values[j] + values[j + 1]), times[j + 1] - times[j]);
    let (u, dt) = step(k - 1);
    let mut w = Complex64::new(u, 2.0 * dt.sqrt());
    for j in (0..k - 1).rev() {
        let (u, dt) = step(j);
        w = loewner::slit_inverse(w, u, dt);
    }
    w
}

pub fn sample_driver_with<R: Rng>(cfg: &SleRunConfig, rng: &mut R) -> Result<SdeRun, SdeError> {
    cfg.validate()?;
    let kappa = cfg.kappa;
    let sk = kappa.sqrt();
    let ctl = cfg.control;
    let scale = cfg.scale();
    let locs = cfg.force_locations();

    let mut left: Vec<Tracked> = Vec::new();
    let mut right: Vec<Tracked> = Vec::new();
    for (i, (f, &x)) in cfg.forces.iter().zip(&locs).enumerate() {
        let t = Tracked { x, v: x, weight: f.weight, force: Some(i) };
        match f.side {
            Side::Left => left.push(t),
            Side::Right => right.push(t),
        }
    }
    if let StopRule::HitInterval { a, b } = cfg.stop {
        for e in [a, b] {
            if e.is_finite() && !right.iter().any(|r| r.x == e) {
                right.push(Tracked { x: e, v: e, weight: 0.0, force: None });
            }
        }
    }
    left.sort_by(|p, q| q.x.total_cmp(&p.x));
    right.sort_by(|p, q| p.x.total_cmp(&q.x));

    // Hit-able cluster: first prefix of right points with cumulative weight below κ/2 − 2.
    let threshold = kappa / 2.0 - 2.0;
    let mut cluster: Option<usize> = None;
    let mut cum = 0.0;
    for (m, r) in right.iter().enumerate() {
        cum += r.weight;
        if cum < threshold {
            cluster = Some(m);
            break;
        }
    }
    let absorbing = matches!(cluster, Some(m) if m > 0) && cum <= -2.0;

    let mut times = vec![0.0];
    let mut values = vec![cfg.start];
    let mut paths: Vec<Vec<f64>> = locs.iter().map(|&x| vec![x]).collect();
    let mut w = cfg.start;
    let mut t = 0.0;
    let mut sup_dev: f64 = 0.0;
    let mut tip_height = 0.0;
    let mut reason = StopReason::Horizon;
    let mut landed = false;

    for _step in 0..ctl.max_steps {
        if t >= cfg.max_time {
            break;
        }
        let mut drift = 0.0;
        let mut gap = f64::INFINITY;
        for p in left.iter().chain(right.iter()) {
            let d = w - p.v;
            if p.weight != 0.0 {
                drift += p.weight / d;
            }
            gap = gap.min(d.abs());
        }
        // The base step grows with the squared gap once the driver is far
        // from every force point, keeping the scheme scale invariant.
        let base = if gap.is_finite() { cfg.dt * (gap / scale).powi(2).max(1.0) } else { cfg.dt };
        let mut h = base.min(cfg.max_time - t);
        if gap.is_finite() {
            if drift != 0.0 {
                h = h.min(ctl.drift_fraction * gap / drift.abs());
            }
            h = h.min((ctl.diffusion_fraction * gap).powi(2) / kappa);
        }
        if let Some(c) = ctl.tip_fraction {
            h = h.min(((c * tip_height).powi(2) / kappa).max(1e-10 * scale * scale));
        }
        // A repelling point squeezed between the driver and an imminent hit
        // stalls the step size; the landing is already determined to within
        // the wider tolerance, so stop there.
        if let Some(m) = cluster {
            let local = scale.max(t.sqrt());
            if h < 1e-12 * local * local && right[m].v - w < 100.0 * ctl.land_eps * local {
                landed = true;
                break;
            }
        }
        if !(h > 0.0) || t + h <= t {
            return Err(SdeError::StepControl { t, msg: format!("step collapsed (gap {gap:e}, drift {drift:e}, w {w}, right {:?})", right.iter().map(|p| p.v).collect::<Vec<_>>()) });
        }
        // Redraw with a smaller step when the proposal jumps over a point that
        // cannot be hit; such proposals are many-sigma events.
        let mut tries = 0;
        let w_next = loop {
            let xi: f64 = rng.sample(StandardNormal);
            let cand = w + drift * h + sk * h.sqrt() * xi;
            let over_left = left.first().is_some_and(|p| cand <= p.v);
            let over_right = right.first().is_some_and(|p| cand >= p.v);
            if over_right && cluster == Some(0) {
                break None;
            }
            if !over_left && !over_right {
                break Some(cand);
            }
            tries += 1;
            if tries > 40 {
                return Err(SdeError::StepControl { t, msg: "driver keeps crossing a force point".into() });
            }
            h *= 0.25;
        };
        let Some(w_next) = w_next else {
            landed = true;
            break;
        };
        let u = 0.5 * (w + w_next);
        for p in left.iter_mut().chain(right.iter_mut()) {
            p.v = slit_map_real(p.v, u, h);
            if let Some(i) = p.force {
                paths[i].push(p.v);
            }
        }
        w = w_next;
        t += h;
        times.push(t);
        values.push(w);
        sup_dev = sup_dev.max((w - cfg.start).abs());
        let k = times.len() - 1;
        if ctl.tip_fraction.is_some() && k % (k / 16).max(1) == 0 {
            tip_height = running_tip(&times, &values).im;
        }

        if let Some(m) = cluster {
            // tolerance follows the hull size once it outgrows the marks
            if right[m].v - w < ctl.land_eps * scale.max(t.sqrt()) {
                landed = true;
                break;
            }
        }
        if let StopRule::HitRadius { radius } = cfg.stop {
            // rad(K_t) ≤ 4 max(sqrt t, sup|W − W_0|); only then pay for the tip.
            if 4.0 * t.sqrt().max(sup_dev) >= radius {
                let path = DrivingPath::new(times.clone(), values.clone())?;
                let tip = loewner::tip_at(&path, path.steps());
                if (tip - Complex64::new(cfg.start, 0.0)).norm() >= radius {
                    reason = StopReason::HitRadius;
                    break;
                }
            }
        }
        if times.len() > ctl.max_steps {
            reason = StopReason::MaxSteps;
            break;
        }
    }
    if !landed && reason == StopReason::Horizon && t < cfg.max_time {
        reason = StopReason::MaxSteps;
    }

    let driving = DrivingPath::new(times, values)?;
    let mut hit = None;
    if landed {
        let m = cluster.expect("landing requires a hit-able cluster");
        let (hit_point, landing, absorbed_by) = if absorbing {
            (right[m].v, right[m].x, right[m].force)
        } else {
            let reflect = right[m].v + (right[m].v - w).max(0.0);
            let y = match right.get(m + 1) {
                Some(next) if reflect >= next.v => 0.5 * (right[m].v + next.v),
                _ => reflect,
            };
            (y, loewner::invert_real(&driving, y), None)
        };
        reason = if absorbing {
            StopReason::Absorbed
        } else {
            match cfg.stop {
                StopRule::HitInterval { a, b } if landing > a && landing < b => StopReason::HitInterval,
                _ => StopReason::Landed,
            }
        };
        hit = Some(HitRecord {
            hit_time: driving.final_time(),
            hit_point,
            landing,
            reason,
            absorbed_by,
        });
    }
    Ok(SdeRun {
        driving,
        force_paths: paths,
        force_locations: locs,
        hit,
        reason,
    })
}
