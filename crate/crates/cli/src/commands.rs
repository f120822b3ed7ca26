//! Subcommand arguments and their runners.

use std::path::Path;

use clap::Args;
use serde_json::{json, Value};
use thiserror::Error;

use slelab::ising::{self, Algorithm, Domain, IsingError, PaOptions};
use slelab::jacobi::{self, JacobiError, JacobiParams, McmcBudget};
use slelab::loewner::{self, LoewnerError};
use slelab::multisle::{self, MartingaleOptions, MultiError, SystemOptions};
use slelab::partition::{self, MarkedConfig, Method, Parity, PartitionError};
use slelab::report::{Check, StatReport};
use slelab::rng::derive_seed;
use slelab::sde::{self, ForcePointSpec, SdeError, SleRunConfig, StopRule};

use crate::emit::{to_json, Csv};

const DEFAULT_SEED: u64 = 20_251_016;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Loewner(#[from] LoewnerError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Multi(#[from] MultiError),
    #[error(transparent)]
    Jacobi(#[from] JacobiError),
    #[error(transparent)]
    Ising(#[from] IsingError),
}

type Res<T> = Result<T, CliError>;

/// Everything a subcommand produces.
pub struct Outcome {
    pub stem: &'static str,
    pub json: Value,
    /// `(suffix, text)`, written as `<stem>-<suffix>.csv`.
    pub csvs: Vec<(String, String)>,
    pub reports: Vec<StatReport>,
    pub passed: bool,
}

impl Outcome {
    fn sample(stem: &'static str, json: Value, csvs: Vec<(String, String)>) -> Self {
        Self { stem, json, csvs, reports: Vec::new(), passed: true }
    }

    fn verify(stem: &'static str, mut json: Value, reports: Vec<StatReport>) -> Self {
        let passed = reports.iter().all(StatReport::passed);
        json["passed"] = json!(passed);
        json["reports"] = serde_json::to_value(&reports).expect("reports serialize");
        Self { stem, json, csvs: Vec::new(), reports, passed }
    }

    pub fn write(&self, dir: &Path) -> Res<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.json", self.stem)), to_json(&self.json))?;
        for (suffix, text) in &self.csvs {
            std::fs::write(dir.join(format!("{}-{suffix}.csv", self.stem)), text)?;
        }
        Ok(())
    }

    pub fn print_summary(&self, dir: &Path) {
        for rep in &self.reports {
            println!("{}", rep.name);
            for m in &rep.metrics {
                let verdict = match (m.check, m.pass) {
                    (Check::Info, _) => "info",
                    (_, true) => "pass",
                    (_, false) => "FAIL",
                };
                let bound = match m.check {
                    Check::AtMost => format!(" <= {}", loewner::fmt_f64(m.tolerance)),
                    Check::AtLeast => format!(" >= {}", loewner::fmt_f64(m.tolerance)),
                    Check::Info => String::new(),
                };
                println!("  [{verdict}] {} = {}{bound}  ({})", m.name, loewner::fmt_f64(m.value), m.identity);
            }
            for n in &rep.notes {
                println!("  note: {n}");
            }
        }
        println!("wrote {}", dir.join(format!("{}.json", self.stem)).display());
        for (suffix, _) in &self.csvs {
            println!("wrote {}", dir.join(format!("{}-{suffix}.csv", self.stem)).display());
        }
    }
}

fn parse_parity(s: &str) -> Result<Parity, String> {
    match s {
        "odd" | "z" => Ok(Parity::Odd),
        "even" | "w" => Ok(Parity::Even),
        _ => Err(format!("expected odd or even, got {s:?}")),
    }
}

/// `left:x:w`, `right:x:w` or `prime:w`.
fn parse_force(s: &str) -> Result<ForcePointSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    match parts.as_slice() {
        ["left", x, w] => Ok(ForcePointSpec::left(num(x)?, num(w)?)),
        ["right", x, w] => Ok(ForcePointSpec::right(num(x)?, num(w)?)),
        ["prime", w] => Ok(ForcePointSpec::prime_end(num(w)?)),
        _ => Err(format!("force {s:?}: expected left:x:w, right:x:w or prime:w")),
    }
}

/// `horizon`, `radius:R` or `interval:a:b` (b may be `inf`).
fn parse_stop(s: &str) -> Result<StopRule, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    match parts.as_slice() {
        ["horizon"] => Ok(StopRule::FixedHorizon),
        ["radius", r] => Ok(StopRule::HitRadius { radius: num(r)? }),
        ["interval", a, b] => Ok(StopRule::HitInterval { a: num(a)?, b: num(b)? }),
        _ => Err(format!("stop {s:?}: expected horizon, radius:R or interval:a:b")),
    }
}

/// Marked points on R shared by the verify subcommands.
#[derive(Debug, Clone, Args)]
pub struct PointArgs {
    /// Number of curves.
    #[arg(long = "N", visible_alias = "n", default_value_t = 2)]
    pub n: usize,
    /// x_1 < … < x_N (comma separated); default 0, 1, …, N−1.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub xs: Option<Vec<f64>>,
    /// x_{N+1}; default one past the last point.
    #[arg(long = "x-next", allow_hyphen_values = true)]
    pub x_next: Option<f64>,
}

impl PointArgs {
    fn points(&self) -> Res<(Vec<f64>, f64)> {
        if self.n == 0 {
            return Err(CliError::Usage("--N must be at least 1".into()));
        }
        match &self.xs {
            None => {
                let (xs, next) = partition::default_points(self.n);
                Ok((xs, self.x_next.unwrap_or(next)))
            }
            Some(xs) if xs.len() == self.n => {
                let next = self.x_next.unwrap_or(xs[xs.len() - 1] + 1.0);
                Ok((xs.clone(), next))
            }
            Some(xs) => Err(CliError::Usage(format!("--xs has {} points but --N is {}", xs.len(), self.n))),
        }
    }
}

// ---------------------------------------------------------------------------
// sampling

#[derive(Debug, Args)]
pub struct SampleSle {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub start: f64,
    /// Force point, repeatable: left:x:w, right:x:w or prime:w.
    #[arg(long = "force", value_parser = parse_force, allow_hyphen_values = true)]
    pub forces: Vec<ForcePointSpec>,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// horizon, radius:R or interval:a:b.
    #[arg(long, value_parser = parse_stop, default_value = "horizon", allow_hyphen_values = true)]
    pub stop: StopRule,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    /// Also write traces, keeping every `trace-stride`-th vertex.
    #[arg(long)]
    pub trace: bool,
    #[arg(long = "trace-stride", default_value_t = 1)]
    pub trace_stride: usize,
    #[arg(long)]
    pub seed: u64,
}

pub fn sample_sle(a: &SampleSle) -> Res<Outcome> {
    let cfg = SleRunConfig::new(a.kappa, a.start, a.forces.clone())
        .with_horizon(a.horizon)
        .with_dt(a.dt)
        .with_stop(a.stop);
    cfg.validate()?;
    let mut drivers = Csv::new("replicate,t,w");
    let mut traces = Csv::new("replicate,k,x,y");
    let mut records = Vec::new();
    for r in 0..a.replicates {
        let run = sde::sample_driver(&cfg, a.seed, r as u64)?;
        for (&t, &w) in run.driving.times().iter().zip(run.driving.values()) {
            drivers.row(&[r as u64], &[t, w]);
        }
        if a.trace {
            let poly = loewner::trace_curve_every(&run.driving, a.trace_stride.max(1))?;
            for (k, z) in poly.vertices.iter().enumerate() {
                traces.row(&[r as u64, k as u64], &[z.re, z.im]);
            }
        }
        let (hit_time, hit_point, landing) = match run.hit {
            Some(h) => (h.hit_time, h.hit_point, h.landing),
            None => (run.driving.final_time(), f64::NAN, f64::NAN),
        };
        records.push(json!({
            "replicate": r,
            "seed": a.seed,
            "kappa": a.kappa,
            "forces": cfg.forces,
            "hit_time": hit_time,
            "hit_point": hit_point,
            "landing": landing,
            "reason": run.reason,
        }));
    }
    let json = json!({ "subcommand": "sample-sle", "seed": a.seed, "config": cfg, "records": records });
    let mut csvs = vec![("drivers".to_string(), drivers.into_string())];
    if a.trace {
        csvs.push(("traces".to_string(), traces.into_string()));
    }
    Ok(Outcome::sample("sample-sle", json, csvs))
}

#[derive(Debug, Args)]
pub struct SampleMultisle {
    #[arg(long = "N", visible_alias = "n")]
    pub n: usize,
    #[arg(long)]
    pub kappa: f64,
    /// spread: distinct x_1..x_N; collapsed: all N curves start at 0 with x_{N+1} = 1.
    #[arg(long, default_value = "spread", value_parser = ["spread", "collapsed"])]
    pub mode: String,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub xs: Option<Vec<f64>>,
    #[arg(long = "x-next", allow_hyphen_values = true)]
    pub x_next: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    /// Largest polyline segment relative to the configuration scale;
    /// when given, curve polylines are written too.
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Parity of the outermost level.
    #[arg(long, value_parser = parse_parity, default_value = "odd")]
    pub start: Parity,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long)]
    pub seed: u64,
}

pub fn sample_multisle(a: &SampleMultisle) -> Res<Outcome> {
    let cfg = if a.mode == "collapsed" {
        MarkedConfig::collapsed(a.kappa, 0.0, a.n, 1.0)?
    } else {
        let (xs, next) = PointArgs { n: a.n, xs: a.xs.clone(), x_next: a.x_next }.points()?;
        MarkedConfig::spread(a.kappa, xs, next)?
    };
    let opts = SystemOptions { start: a.start, dt: a.dt, resolution: a.resolution, ..Default::default() };
    let mut endpoints = Csv::new("replicate,curve_index,endpoint");
    let mut polylines = Csv::new("replicate,curve_index,k,x,y");
    let mut failures = Vec::new();
    let mut interlacing = 0usize;
    for r in 0..a.replicates {
        match multisle::sample_system(&cfg, a.seed, r as u64, &opts) {
            Ok(sys) => {
                interlacing += usize::from(multisle::interlaces(&sys.endpoints));
                for (j, &e) in sys.endpoints.iter().enumerate() {
                    endpoints.row(&[r as u64, j as u64 + 1], &[e]);
                }
                for (j, c) in sys.curves.iter().enumerate() {
                    for (k, z) in c.vertices.iter().enumerate() {
                        polylines.row(&[r as u64, j as u64 + 1, k as u64], &[z.re, z.im]);
                    }
                }
            }
            Err(e) => failures.push(json!({ "replicate": r, "error": e.to_string() })),
        }
    }
    let json = json!({
        "subcommand": "sample-multisle",
        "seed": a.seed,
        "N": a.n,
        "kappa": a.kappa,
        "mode": a.mode,
        "xs": cfg.xs,
        "x_next": cfg.x_next,
        "replicates": a.replicates,
        "interlacing": interlacing,
        "failures": failures,
    });
    let mut csvs = vec![("endpoints".to_string(), endpoints.into_string())];
    if a.resolution.is_some() {
        csvs.push(("polylines".to_string(), polylines.into_string()));
    }
    Ok(Outcome::sample("sample-multisle", json, csvs))
}

#[derive(Debug, Args)]
pub struct SampleJacobi {
    #[arg(long = "N", visible_alias = "n")]
    pub n: usize,
    #[arg(long)]
    pub beta: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub a: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub b: f64,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, default_value = "tridiag", value_parser = ["tridiag", "mcmc"])]
    pub method: String,
    #[arg(long)]
    pub seed: u64,
}

pub fn sample_jacobi(a: &SampleJacobi) -> Res<Outcome> {
    let p = JacobiParams::new(a.n, a.beta, a.a, a.b)?;
    let spectra = if a.method == "mcmc" {
        jacobi::sample_mcmc(&p, a.seed, McmcBudget::draws(a.replicates))?
    } else {
        jacobi::sample_tridiag_batch(&p, a.seed, a.replicates)?
    };
    let mut csv = Csv::new("replicate,index,value");
    let mut sums = vec![0.0; a.n];
    for (r, s) in spectra.iter().enumerate() {
        for (i, &y) in s.values().iter().enumerate() {
            csv.row(&[r as u64, i as u64 + 1], &[y]);
            sums[i] += y;
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / spectra.len().max(1) as f64).collect();
    let json = json!({
        "subcommand": "sample-jacobi",
        "seed": a.seed,
        "params": p,
        "method": a.method,
        "replicates": spectra.len(),
        "means": means,
    });
    Ok(Outcome::sample("sample-jacobi", json, vec![("spectra".to_string(), csv.into_string())]))
}

#[derive(Debug, Args)]
pub struct EstimateIsing {
    #[arg(long = "N", visible_alias = "n", default_value_t = 1)]
    pub n: usize,
    /// Lattice mesh; the domain sides must be multiples of it.
    #[arg(long, default_value_t = 1.0 / 32.0)]
    pub delta: f64,
    #[arg(long, default_value = "rectangle", value_parser = ["rectangle", "box"])]
    pub geometry: String,
    /// Rectangle width, or the full width of the box.
    #[arg(long, default_value_t = 1.0)]
    pub width: f64,
    #[arg(long, default_value_t = 1.0)]
    pub height: f64,
    /// Rectangle: N+2 counterclockwise arclengths from the lower-left corner.
    /// Box: N+1 bottom coordinates. Default: side midpoints of the unit square.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub marks: Option<Vec<f64>>,
    /// Burn-in sweeps per chain.
    #[arg(long, default_value_t = 200)]
    pub sweeps: usize,
    /// Sweeps between recorded configurations.
    #[arg(long, default_value_t = 2)]
    pub spacing: usize,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 2000)]
    pub replicates: usize,
    #[arg(long, default_value = "sw")]
    pub algorithm: Algorithm,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    /// Write the interfaces of this many independent configurations.
    #[arg(long, default_value_t = 0)]
    pub interfaces: usize,
    #[arg(long)]
    pub seed: u64,
}

pub fn estimate_ising(a: &EstimateIsing) -> Res<Outcome> {
    let domain = if a.geometry == "box" {
        Domain::HalfPlaneBox { half_width: a.width / 2.0, height: a.height }
    } else {
        Domain::Rectangle { width: a.width, height: a.height }
    };
    let marks = match (&a.marks, a.geometry.as_str(), a.n) {
        (Some(m), _, _) => m.clone(),
        (None, "rectangle", 1) if a.width == 1.0 && a.height == 1.0 => vec![0.5, 1.5, 3.5],
        (None, "rectangle", 2) if a.width == 1.0 && a.height == 1.0 => vec![0.5, 1.5, 2.5, 3.5],
        _ => return Err(CliError::Usage("--marks is required for this geometry".into())),
    };
    let lat = ising::build_polygon(domain, a.n, &marks, a.delta)?;
    let opts = PaOptions {
        algorithm: a.algorithm,
        burn_in: a.sweeps,
        spacing: a.spacing,
        chains: a.chains,
        bootstrap: a.bootstrap,
        max_half_width: None,
    };
    let est = ising::estimate_pa(&lat, a.replicates, a.seed, &opts)?;
    let mut csvs = Vec::new();
    if a.interfaces > 0 {
        let mut csv = Csv::new("sample,curve_index,k,x,y");
        let iseed = derive_seed(a.seed, 0x1face);
        for s in 0..a.interfaces {
            let cfg = ising::sample_spins(&lat, a.sweeps.max(1), a.algorithm, derive_seed(iseed, s as u64));
            for j in 1..=a.n {
                let path = ising::trace_interface(&lat, &cfg, j)?;
                for (k, &(x, y)) in path.vertices.iter().enumerate() {
                    csv.row(&[s as u64, j as u64, k as u64], &[x as f64 * a.delta, y as f64 * a.delta]);
                }
            }
        }
        csvs.push(("interfaces".to_string(), csv.into_string()));
    }
    let json = json!({
        "subcommand": "estimate-ising",
        "seed": a.seed,
        "N": a.n,
        "delta": a.delta,
        "domain": domain,
        "marks": marks,
        "options": opts,
        "pA_hat": est.p_hat,
        "ci": [est.ci.0, est.ci.1],
        "sigma": est.sigma,
        "tau_int": est.tau_int,
        "block": est.block,
        "replicates": est.replicates,
        "F_N": est.f_n,
        "marked_images": { "ys": est.images.ys, "y_next": est.images.y_next, "raw": est.images.raw, "corners": est.images.corners },
    });
    println!(
        "P[A] = {}  CI [{}, {}]  F_N = {}",
        loewner::fmt_f64(est.p_hat),
        loewner::fmt_f64(est.ci.0),
        loewner::fmt_f64(est.ci.1),
        loewner::fmt_f64(est.f_n)
    );
    Ok(Outcome::sample("estimate-ising", json, csvs))
}

// ---------------------------------------------------------------------------
// verification

#[derive(Debug, Args)]
pub struct VerifyPartition {
    #[command(flatten)]
    pub points: PointArgs,
    #[arg(long, default_value_t = 3.0)]
    pub kappa: f64,
    /// Monte Carlo samples for the independent normalizations (N ≥ 2).
    #[arg(long = "mc-samples", default_value_t = 1_000_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

pub fn verify_partition(a: &VerifyPartition) -> Res<Outcome> {
    let (xs, next) = a.points.points()?;
    let cfg = MarkedConfig::spread(a.kappa, xs.clone(), next)?;
    let id = partition::check_partition_identity(&cfg, Method::quadrature())?;
    let rep = partition::verify_partition(&cfg, a.mc_samples, a.seed)?;
    let r = partition::eval_r(&xs, next)?;
    let f_n = partition::limit_probability(&xs, next, 3.0).map(|l| l.value).unwrap_or(f64::NAN);
    let json = json!({
        "subcommand": "verify-partition",
        "seed": a.seed,
        "N": a.points.n,
        "kappa": a.kappa,
        "xs": xs,
        "x_next": next,
        "Z": id.z.value(),
        "W": id.w.value(),
        "identity_rel_err": id.rel_err,
        "R": r,
        "F_N": f_n,
    });
    Ok(Outcome::verify("verify-partition", json, vec![rep]))
}

#[derive(Debug, Args)]
pub struct VerifyPde {
    #[command(flatten)]
    pub points: PointArgs,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-3)]
    pub h: f64,
}

pub fn verify_pde(a: &VerifyPde) -> Res<Outcome> {
    let (xs, next) = a.points.points()?;
    let rep = partition::verify_pde(&xs, next, a.h)?;
    let json = json!({ "subcommand": "verify-pde", "N": a.points.n, "kappa": 3.0, "xs": xs, "x_next": next, "h": a.h });
    Ok(Outcome::verify("verify-pde", json, vec![rep]))
}

#[derive(Debug, Args)]
pub struct VerifyMartingale {
    #[command(flatten)]
    pub points: PointArgs,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long = "grid-points", default_value_t = 20)]
    pub grid_points: usize,
    /// Stopping distance ε; `--no-stop` disables stopping.
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    #[arg(long = "no-stop")]
    pub no_stop: bool,
    /// Cap K on the weight.
    #[arg(long, default_value_t = 10.0)]
    pub cap: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

pub fn verify_martingale(a: &VerifyMartingale) -> Res<Outcome> {
    let (xs, next) = a.points.points()?;
    let mo = MartingaleOptions {
        horizon: a.horizon,
        grid_points: a.grid_points,
        eps: (!a.no_stop).then_some(a.eps),
        cap: a.cap,
        dt: a.dt,
    };
    let rep = multisle::verify_martingale(&xs, next, a.paths, a.seed, &mo)?;
    let json = json!({
        "subcommand": "verify-martingale",
        "seed": a.seed,
        "N": a.points.n,
        "kappa": 3.0,
        "xs": xs,
        "x_next": next,
        "paths": a.paths,
        "horizon": a.horizon,
        "eps": mo.eps,
        "cap": a.cap,
    });
    Ok(Outcome::verify("verify-martingale", json, vec![rep]))
}

#[derive(Debug, Args)]
pub struct VerifyCascade {
    #[command(flatten)]
    pub points: PointArgs,
    #[arg(long, default_value_t = 3.0)]
    pub kappa: f64,
    /// Parity of the direct cascade; `both` runs the two.
    #[arg(long, default_value = "both", value_parser = ["odd", "even", "both"])]
    pub parity: String,
    #[arg(long, default_value_t = 2000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long = "tv-tol", default_value_t = 0.08)]
    pub tv_tol: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

fn parities(s: &str) -> Vec<Parity> {
    match s {
        "odd" => vec![Parity::Odd],
        "even" => vec![Parity::Even],
        _ => vec![Parity::Odd, Parity::Even],
    }
}

pub fn verify_cascade(a: &VerifyCascade) -> Res<Outcome> {
    let (xs, next) = a.points.points()?;
    let cfg = MarkedConfig::spread(a.kappa, xs.clone(), next)?;
    let opts = SystemOptions { dt: a.dt, ..Default::default() };
    let mut reports = Vec::new();
    for (i, p) in parities(&a.parity).into_iter().enumerate() {
        let seed = derive_seed(a.seed, i as u64);
        reports.push(multisle::verify_cascade_weight(&cfg, p, a.replicates, seed, &opts, a.tv_tol)?);
    }
    let json = json!({
        "subcommand": "verify-cascade",
        "seed": a.seed,
        "N": a.points.n,
        "kappa": a.kappa,
        "xs": xs,
        "x_next": next,
        "replicates": a.replicates,
    });
    Ok(Outcome::verify("verify-cascade", json, reports))
}

#[derive(Debug, Args)]
pub struct VerifyHitting {
    #[command(flatten)]
    pub points: PointArgs,
    #[arg(long, default_value_t = 8.0 / 3.0)]
    pub kappa: f64,
    /// Parity of the outermost level; `both` runs the two.
    #[arg(long, default_value = "both", value_parser = ["odd", "even", "both"])]
    pub parity: String,
    #[arg(long, default_value_t = 2000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long = "ks-tol", default_value_t = 0.05)]
    pub ks_tol: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

pub fn verify_hitting(a: &VerifyHitting) -> Res<Outcome> {
    let (xs, next) = a.points.points()?;
    let cfg = MarkedConfig::spread(a.kappa, xs.clone(), next)?;
    let mut reports = Vec::new();
    for (i, p) in parities(&a.parity).into_iter().enumerate() {
        let opts = SystemOptions { start: p, dt: a.dt, ..Default::default() };
        let seed = derive_seed(a.seed, i as u64);
        reports.push(multisle::verify_hitting_law(&cfg, a.replicates, seed, &opts, a.ks_tol)?);
    }
    let json = json!({
        "subcommand": "verify-hitting",
        "seed": a.seed,
        "N": a.points.n,
        "kappa": a.kappa,
        "xs": xs,
        "x_next": next,
        "replicates": a.replicates,
    });
    Ok(Outcome::verify("verify-hitting", json, reports))
}

#[derive(Debug, Args)]
pub struct VerifyJacobiLink {
    #[arg(long = "N", visible_alias = "n", default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 8.0 / 3.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 2000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long = "ks-tol", default_value_t = 0.05)]
    pub ks_tol: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

pub fn verify_jacobi_link(a: &VerifyJacobiLink) -> Res<Outcome> {
    let opts = SystemOptions { dt: a.dt, ..Default::default() };
    let rep = multisle::verify_jacobi_link(a.n, a.kappa, a.replicates, a.seed, &opts, a.ks_tol)?;
    let json = json!({
        "subcommand": "verify-jacobi-link",
        "seed": a.seed,
        "N": a.n,
        "kappa": a.kappa,
        "replicates": a.replicates,
    });
    Ok(Outcome::verify("verify-jacobi-link", json, vec![rep]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn force_and_stop_specs() {
        assert_eq!(parse_force("left:-1:2").unwrap(), ForcePointSpec::left(-1.0, 2.0));
        assert_eq!(parse_force("prime:-1.5").unwrap(), ForcePointSpec::prime_end(-1.5));
        assert!(parse_force("up:1:1").is_err());
        assert_eq!(parse_stop("interval:1:inf").unwrap(), StopRule::HitInterval { a: 1.0, b: f64::INFINITY });
        assert!(parse_stop("radius").is_err());
    }

    #[test]
    fn default_points_follow_n() {
        let p = PointArgs { n: 3, xs: None, x_next: None };
        assert_eq!(p.points().unwrap(), (vec![0.0, 1.0, 2.0], 3.0));
        let bad = PointArgs { n: 2, xs: Some(vec![0.0]), x_next: None };
        assert!(bad.points().is_err());
    }
}
