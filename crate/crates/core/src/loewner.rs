//! Chordal Loewner chains discretized as compositions of vertical-slit maps.
//!
//! On each grid step `[t_k, t_{k+1}]` the driver is frozen at the midpoint
//! `U_k = (W_k + W_{k+1}) / 2`, so the flow over the step is the exact map
//! `f_k(z) = U_k + sqrt((z - U_k)^2 + 4 dt_k)`. Forward flow, tracing and
//! inversion all use the same per-step maps, which makes round trips exact up
//! to floating point.

use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the Loewner engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoewnerError {
    #[error("driving path invalid: {0}")]
    InvalidPath(String),
    #[error("point {0} is not in the closed upper half-plane")]
    OutsideHalfPlane(Complex64),
    #[error("non-finite value at step {step} (last valid time {last_valid_time})")]
    Resolution { step: usize, last_valid_time: f64 },
    #[error("inverse ill-conditioned at step {step}: distance to slit base {distance:e}")]
    IllConditioned { step: usize, distance: f64 },
    #[error("capacity time {0} outside the driving path")]
    TimeOutOfRange(f64),
    #[error("csv: {0}")]
    Csv(String),
}

/// Sampled driving function on a capacity-time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingPath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl DrivingPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, LoewnerError> {
        if times.is_empty() || times.len() != values.len() {
            return Err(LoewnerError::InvalidPath(format!(
                "{} times vs {} values",
                times.len(),
                values.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(LoewnerError::InvalidPath("first time must be 0".into()));
        }
        if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(LoewnerError::InvalidPath(format!(
                "times not strictly increasing at index {}",
                k + 1
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(LoewnerError::InvalidPath(format!("non-finite value at index {k}")));
        }
        Ok(Self { times, values })
    }

    /// Uniform grid with `steps` steps on `[0, horizon]` sampling `f`.
    pub fn from_fn(horizon: f64, steps: usize, f: impl Fn(f64) -> f64) -> Result<Self, LoewnerError> {
        let times: Vec<f64> = (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    pub fn constant(c: f64, horizon: f64, steps: usize) -> Result<Self, LoewnerError> {
        Self::from_fn(horizon, steps, |_| c)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Frozen driver and duration of step `k`.
    #[inline]
    pub fn step(&self, k: usize) -> (f64, f64) {
        (
            0.5 * (self.values[k] + self.values[k + 1]),
            self.times[k + 1] - self.times[k],
        )
    }

    /// Keep grid points `0..=k`.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            times: self.times[..=k].to_vec(),
            values: self.values[..=k].to_vec(),
        }
    }

    /// Driver `lambda * W(t / lambda^2)` on the grid scaled by `lambda^2`.
    pub fn rescaled(&self, lambda: f64) -> Self {
        Self {
            times: self.times.iter().map(|t| t * lambda * lambda).collect(),
            values: self.values.iter().map(|w| w * lambda).collect(),
        }
    }

    /// CSV with header `t,w`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,w\n");
        for (t, w) in self.times.iter().zip(&self.values) {
            let _ = writeln!(out, "{},{}", fmt_f64(*t), fmt_f64(*w));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, LoewnerError> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("t,w") => {}
            other => return Err(LoewnerError::Csv(format!("bad header {other:?}"))),
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let (t, w) = line
                .split_once(',')
                .ok_or_else(|| LoewnerError::Csv(format!("line {}: expected two fields", i + 2)))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| LoewnerError::Csv(format!("line {}: {e}", i + 2)))
            };
            times.push(parse(t)?);
            values.push(parse(w)?);
        }
        Self::new(times, values)
    }
}

/// Format with 17 significant digits (round-trip exact for f64).
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.16e}")
}

/// Branch of `sqrt` in the closed upper half-plane; on the real axis the
/// sign follows `hint`.
#[inline]
fn sqrt_upper(w: Complex64, hint: f64) -> Complex64 {
    let s = w.sqrt();
    if s.im < 0.0 || (s.im == 0.0 && s.re * hint < 0.0) {
        -s
    } else {
        s
    }
}

/// Vertical slit map `U + sqrt((z-U)^2 + 4 dt)`.
#[inline]
pub fn slit_map(z: Complex64, u: f64, dt: f64) -> Complex64 {
    let d = z - u;
    u + sqrt_upper(d * d + 4.0 * dt, d.re)
}

/// Inverse of [`slit_map`]: `U + sqrt((w-U)^2 - 4 dt)` in the closed upper half-plane.
#[inline]
pub fn slit_inverse(w: Complex64, u: f64, dt: f64) -> Complex64 {
    let d = w - u;
    u + sqrt_upper(d * d - 4.0 * dt, d.re)
}

/// Real-line restriction of [`slit_map`] for points off the driver.
#[inline]
pub fn slit_map_real(x: f64, u: f64, dt: f64) -> f64 {
    let d = x - u;
    u + d.signum() * (d * d + 4.0 * dt).sqrt()
}

/// Real inverse for points outside the slit base `[U - 2 sqrt(dt), U + 2 sqrt(dt)]`.
#[inline]
pub fn slit_inverse_real(y: f64, u: f64, dt: f64) -> f64 {
    let d = y - u;
    u + d.signum() * (d * d - 4.0 * dt).max(0.0).sqrt()
}

/// Flow of one point under the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFlow {
    pub point: Complex64,
    /// `g_{t_k}(point)` for every grid index up to termination.
    pub images: Vec<Complex64>,
    /// Grid index and capacity time of swallowing, if it happened.
    pub swallowed_at: Option<(usize, f64)>,
}

impl PointFlow {
    pub fn is_real(&self) -> bool {
        self.point.im == 0.0
    }

    pub fn last(&self) -> Complex64 {
        *self.images.last().unwrap()
    }
}

/// Swallowing threshold `1e-6 (1 + |z|)`.
pub fn swallow_threshold(z: Complex64) -> f64 {
    1e-6 * (1.0 + z.norm())
}

/// Evolve `z` under the chain, stopping at swallowing.
pub fn evolve_point(driving: &DrivingPath, z: Complex64) -> Result<PointFlow, LoewnerError> {
    if z.im < 0.0 || !z.re.is_finite() || !z.im.is_finite() {
        return Err(LoewnerError::OutsideHalfPlane(z));
    }
    let real = z.im == 0.0;
    if real && z.re == driving.values[0] {
        return Err(LoewnerError::InvalidPath("real point sits on W(0)".into()));
    }
    let eps = swallow_threshold(z);
    let mut images = Vec::with_capacity(driving.len());
    images.push(z);
    let mut g = z;
    for k in 0..driving.steps() {
        let (u, dt) = driving.step(k);
        let w_next = driving.values[k + 1];
        if real {
            let side = (g.re - driving.values[k]).signum();
            // The frozen map never crosses U; a driver jump across the image is a swallow.
            if (g.re - u).signum() != side {
                return Ok(swallowed(z, images, k, driving));
            }
            g = Complex64::new(slit_map_real(g.re, u, dt), 0.0);
            if (g.re - w_next).signum() != side || (g.re - w_next).abs() < eps {
                images.push(g);
                return Ok(swallowed(z, images, k + 1, driving));
            }
        } else {
            g = slit_map(g, u, dt);
            if (g - w_next).norm() < eps {
                images.push(g);
                return Ok(swallowed(z, images, k + 1, driving));
            }
        }
        if !g.re.is_finite() || !g.im.is_finite() {
            return Err(LoewnerError::Resolution {
                step: k,
                last_valid_time: driving.times[k],
            });
        }
        images.push(g);
    }
    Ok(PointFlow {
        point: z,
        images,
        swallowed_at: None,
    })
}

fn swallowed(z: Complex64, images: Vec<Complex64>, k: usize, driving: &DrivingPath) -> PointFlow {
    PointFlow {
        point: z,
        images,
        swallowed_at: Some((k, driving.times[k])),
    }
}

/// `g_{t_k}(z)` at the final grid time without storing the history.
pub fn map_forward(driving: &DrivingPath, z: Complex64) -> Complex64 {
    (0..driving.steps()).fold(z, |g, k| {
        let (u, dt) = driving.step(k);
        slit_map(g, u, dt)
    })
}

/// Polyline approximation of the trace.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TracePolyline {
    pub vertices: Vec<Complex64>,
    pub capacities: Vec<f64>,
}

impl TracePolyline {
    pub fn tip(&self) -> Complex64 {
        *self.vertices.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Tip `gamma(t_k)` computed by unwinding `k - 1` slit inverses (O(k)).
pub fn tip_at(driving: &DrivingPath, k: usize) -> Complex64 {
    if k == 0 {
        return Complex64::new(driving.values[0], 0.0);
    }
    let (u, dt) = driving.step(k - 1);
    let mut w = Complex64::new(u, 2.0 * dt.sqrt());
    for j in (0..k - 1).rev() {
        let (u, dt) = driving.step(j);
        w = slit_inverse(w, u, dt);
    }
    w
}

/// Tip `gamma(t)` at any capacity time; inside a step the driver is
/// constant, so the partial step is an exact vertical slit.
pub fn tip_at_time(driving: &DrivingPath, t: f64) -> Result<Complex64, LoewnerError> {
    let (k, rest) = locate(driving, t)?;
    if rest == 0.0 {
        return Ok(tip_at(driving, k));
    }
    let (u, _) = driving.step(k);
    let mut w = Complex64::new(u, 2.0 * rest.sqrt());
    for j in (0..k).rev() {
        let (u, dt) = driving.step(j);
        w = slit_inverse(w, u, dt);
    }
    Ok(w)
}

/// Trace by the zipper: vertex `k` is the image of step `k-1`'s slit tip
/// pulled back through all earlier steps. Cost is quadratic in the step count.
pub fn trace_curve(driving: &DrivingPath) -> Result<TracePolyline, LoewnerError> {
    trace_curve_every(driving, 1)
}

/// As [`trace_curve`] but keeping every `stride`-th vertex (and the last).
pub fn trace_curve_every(driving: &DrivingPath, stride: usize) -> Result<TracePolyline, LoewnerError> {
    let stride = stride.max(1);
    let n = driving.steps();
    let mut keep: Vec<usize> = (0..=n).step_by(stride).collect();
    if *keep.last().unwrap() != n {
        keep.push(n);
    }
    let mut out = TracePolyline {
        vertices: Vec::with_capacity(keep.len()),
        capacities: Vec::with_capacity(keep.len()),
    };
    for k in keep {
        let v = tip_at(driving, k);
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(LoewnerError::Resolution {
                step: k,
                last_valid_time: driving.times[k.saturating_sub(1)],
            });
        }
        out.vertices.push(Complex64::new(v.re, v.im.max(0.0)));
        out.capacities.push(driving.times[k]);
    }
    Ok(out)
}

/// Grid index `k` with `t_k <= t` plus the leftover duration inside step `k`.
fn locate(driving: &DrivingPath, t: f64) -> Result<(usize, f64), LoewnerError> {
    let times = &driving.times;
    let tol = 1e-12 * (1.0 + driving.final_time());
    if t < 0.0 || t > driving.final_time() + tol {
        return Err(LoewnerError::TimeOutOfRange(t));
    }
    let k = times.partition_point(|&s| s <= t).saturating_sub(1);
    let rest = t - times[k];
    if k == driving.steps() || rest <= tol {
        Ok((k, 0.0))
    } else {
        Ok((k, rest))
    }
}

/// `g_t^{-1}(w)` for `w` in the upper half-plane (or on the real line away
/// from the hull), composing per-step inverses in reverse.
pub fn invert_map(driving: &DrivingPath, t: f64, w: Complex64) -> Result<Complex64, LoewnerError> {
    let (k, rest) = locate(driving, t)?;
    let mut z = w;
    if rest > 0.0 {
        z = checked_inverse(z, driving.values[k], rest, k)?;
    }
    for j in (0..k).rev() {
        let (u, dt) = driving.step(j);
        z = checked_inverse(z, u, dt, j)?;
    }
    Ok(z)
}

fn checked_inverse(w: Complex64, u: f64, dt: f64, step: usize) -> Result<Complex64, LoewnerError> {
    let d = w - u;
    let arg = d * d - 4.0 * dt;
    // Derivative of the inverse is (w-U)/sqrt(arg): blows up at the slit base.
    if arg.norm() < 1e-26 * (d.norm_sqr() + 4.0 * dt) {
        return Err(LoewnerError::IllConditioned {
            step,
            distance: arg.norm().sqrt(),
        });
    }
    let z = slit_inverse(w, u, dt);
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(LoewnerError::Resolution {
            step,
            last_valid_time: f64::NAN,
        });
    }
    Ok(z)
}

/// Real preimage `g_t^{-1}(y)` of a boundary point right or left of the hull image.
pub fn invert_real(driving: &DrivingPath, y: f64) -> f64 {
    (0..driving.steps()).rev().fold(y, |x, j| {
        let (u, dt) = driving.step(j);
        slit_inverse_real(x, u, dt)
    })
}

/// Recover a driving path from curve vertices by successive slit unzipping.
///
/// Vertex 0 must be real; each later vertex is pushed through the maps
/// already found and contributes one slit step. Quadratic cost.
pub fn unzip_curve(points: &[Complex64]) -> Result<DrivingPath, LoewnerError> {
    if points.is_empty() || points[0].im != 0.0 {
        return Err(LoewnerError::InvalidPath("curve must start on the real line".into()));
    }
    let mut work: Vec<Complex64> = points.to_vec();
    let mut times = vec![0.0];
    let mut values = vec![points[0].re];
    let mut t = 0.0;
    for k in 1..work.len() {
        let z = work[k];
        let (u, dt) = (z.re, 0.25 * z.im.max(0.0).powi(2));
        if dt <= 0.0 {
            continue;
        }
        for p in work.iter_mut().skip(k + 1) {
            *p = slit_map(*p, u, dt);
        }
        // Frozen driver u over the step, so endpoints are chosen to average to u.
        let w_prev = *values.last().unwrap();
        t += dt;
        times.push(t);
        values.push(2.0 * u - w_prev);
    }
    DrivingPath::new(times, values)
}

/// As [`unzip_curve`] but records the frozen per-step drivers, which are the
/// natural driving samples for lattice curves.
pub fn unzip_drivers(points: &[Complex64]) -> Result<(Vec<f64>, Vec<f64>), LoewnerError> {
    if points.is_empty() || points[0].im != 0.0 {
        return Err(LoewnerError::InvalidPath("curve must start on the real line".into()));
    }
    let mut work: Vec<Complex64> = points.to_vec();
    let mut times = vec![0.0];
    let mut drivers = vec![points[0].re];
    let mut t = 0.0;
    for k in 1..work.len() {
        let z = work[k];
        let (u, dt) = (z.re, 0.25 * z.im.max(0.0).powi(2));
        if !(dt > 0.0) {
            continue;
        }
        for p in work.iter_mut().skip(k + 1) {
            *p = slit_map(*p, u, dt);
        }
        t += dt;
        times.push(t);
        drivers.push(u);
    }
    Ok((times, drivers))
}
