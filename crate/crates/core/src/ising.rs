//! Critical Ising model on faces of δZ² inside a rectangle, with alternating
//! fixed arcs, one free arc, interfaces and the crossing event A.
//!
//! Faces live on a padded grid: the `nx × ny` squares of the domain plus one
//! ring of outside squares. A ring square is frozen when it shares an edge
//! with a fixed arc and absent otherwise (free arc, outer corners). Boundary
//! vertices are indexed counterclockwise from the lower-left corner.

use std::f64::consts::PI;
use std::str::FromStr;

use num_complex::Complex64;
use petgraph::unionfind::UnionFind;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::loewner::{self, LoewnerError};
use crate::partition::{self, PartitionError};
use crate::rng::{derive_seed, replica_rng};
use crate::stats::{bootstrap, integrated_autocorrelation, mean};

/// Critical inverse temperature `−½ log(√2 − 1)`.
pub fn beta_c() -> f64 {
    -0.5 * (2f64.sqrt() - 1.0).ln()
}

const NONE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IsingError {
    #[error("invalid domain: {0}")]
    Domain(String),
    #[error("invalid marked points: {0}")]
    Marks(String),
    #[error("aspect ratio {0} outside [0.1, 10]")]
    Aspect(f64),
    #[error("interface from x_{j} revisits a directed edge at ({x}, {y})")]
    Revisit { j: usize, x: i32, y: i32 },
    #[error("interface from x_{j} stops at ({x}, {y}), neither a marked point nor the free arc")]
    Stranded { j: usize, x: i32, y: i32 },
    #[error("interface criterion gives {interfaces} but cluster criterion gives {clusters}")]
    Disagreement { interfaces: bool, clusters: bool },
    #[error("CI half-width {half:.4} above target {target:.4} (p = {p:.4}); about {advise} replicates needed")]
    WideCi { p: f64, half: f64, target: f64, advise: usize },
    #[error("exact enumeration needs at most 20 free faces, got {0}")]
    TooLarge(usize),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Loewner(#[from] LoewnerError),
}

/// Supported domain shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// `[0, width] × [0, height]`; marks are counterclockwise arclength from
    /// the lower-left corner, one per marked point.
    Rectangle { width: f64, height: f64 },
    /// `[−half_width, half_width] × [0, height]` standing in for H. Marks are
    /// real coordinates of x_1..x_{N+1}; x_{N+2} is the top midpoint.
    HalfPlaneBox { half_width: f64, height: f64 },
}

impl Domain {
    fn size(&self) -> (f64, f64) {
        match *self {
            Domain::Rectangle { width, height } => (width, height),
            Domain::HalfPlaneBox { half_width, height } => (2.0 * half_width, height),
        }
    }
}

/// What a face of the padded grid is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Site {
    Absent,
    Active,
    Frozen(i8),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticePolygon {
    pub delta: f64,
    pub nx: i32,
    pub ny: i32,
    pub n: usize,
    /// Boundary vertex indices of x_1..x_{N+2}.
    pub marks: Vec<usize>,
    /// Arc label per boundary edge (edge b joins vertex b to b+1):
    /// 1..=N+1 fixed with spin (−1)^k, N+2 free.
    pub edge_arc: Vec<usize>,
    sites: Vec<Site>,
    arc_of: Vec<usize>,
    active: Vec<u32>,
    nbrs: Vec<[u32; 4]>,
    free_faces: Vec<u32>,
}

fn arc_sign(k: usize) -> i8 {
    if k % 2 == 0 {
        1
    } else {
        -1
    }
}

impl LatticePolygon {
    fn empty(delta: f64, nx: i32, ny: i32) -> Self {
        let len = ((nx + 2) * (ny + 2)) as usize;
        Self {
            delta,
            nx,
            ny,
            n: 0,
            marks: Vec::new(),
            edge_arc: vec![0; (2 * (nx + ny)) as usize],
            sites: vec![Site::Absent; len],
            arc_of: vec![0; len],
            active: Vec::new(),
            nbrs: vec![[NONE; 4]; len],
            free_faces: Vec::new(),
        }
    }

    /// Toy lattice with every boundary edge free and no marked points.
    pub fn free_rectangle(nx: i32, ny: i32) -> Self {
        let mut lat = Self::empty(1.0, nx, ny);
        for j in 0..ny {
            for i in 0..nx {
                let id = lat.idx(i, j);
                lat.sites[id] = Site::Active;
            }
        }
        lat.rebuild();
        lat
    }

    #[inline]
    pub fn idx(&self, i: i32, j: i32) -> usize {
        ((j + 1) * (self.nx + 2) + (i + 1)) as usize
    }

    #[inline]
    pub fn coords(&self, id: usize) -> (i32, i32) {
        let w = (self.nx + 2) as usize;
        ((id % w) as i32 - 1, (id / w) as i32 - 1)
    }

    pub fn grid_len(&self) -> usize {
        self.sites.len()
    }

    /// Site at face `(i, j)` (lower-left corner `δ(i, j)`); absent off the grid.
    pub fn site(&self, i: i32, j: i32) -> Site {
        if i < -1 || j < -1 || i > self.nx || j > self.ny {
            Site::Absent
        } else {
            self.sites[self.idx(i, j)]
        }
    }

    pub fn active_faces(&self) -> &[u32] {
        &self.active
    }

    pub fn frozen_count(&self, arc: usize) -> usize {
        self.arc_of.iter().zip(&self.sites).filter(|(a, s)| **a == arc && matches!(s, Site::Frozen(_))).count()
    }

    pub fn perimeter(&self) -> usize {
        (2 * (self.nx + self.ny)) as usize
    }

    /// Lattice coordinates of boundary vertex `b`.
    pub fn vertex(&self, b: usize) -> (i32, i32) {
        let (nx, ny) = (self.nx, self.ny);
        let b = (b % self.perimeter()) as i32;
        if b < nx {
            (b, 0)
        } else if b < nx + ny {
            (nx, b - nx)
        } else if b < 2 * nx + ny {
            (nx - (b - nx - ny), ny)
        } else {
            (0, ny - (b - 2 * nx - ny))
        }
    }

    pub fn boundary_index(&self, x: i32, y: i32) -> Option<usize> {
        let (nx, ny) = (self.nx, self.ny);
        let b = if y == 0 && (0..nx).contains(&x) {
            x
        } else if x == nx && (0..ny).contains(&y) {
            nx + y
        } else if y == ny && (1..=nx).contains(&x) {
            nx + ny + (nx - x)
        } else if x == 0 && (1..=ny).contains(&y) {
            2 * nx + ny + (ny - y)
        } else {
            return None;
        };
        Some(b as usize)
    }

    fn is_corner(&self, b: usize) -> bool {
        let (nx, ny) = (self.nx as usize, self.ny as usize);
        b == 0 || b == nx || b == nx + ny || b == 2 * nx + ny
    }

    /// (outside, inside) faces of boundary edge `b`.
    fn edge_faces(&self, b: usize) -> ((i32, i32), (i32, i32)) {
        let (nx, ny) = (self.nx, self.ny);
        let b = b as i32;
        if b < nx {
            ((b, -1), (b, 0))
        } else if b < nx + ny {
            let j = b - nx;
            ((nx, j), (nx - 1, j))
        } else if b < 2 * nx + ny {
            let i = nx - (b - nx - ny) - 1;
            ((i, ny), (i, ny - 1))
        } else {
            let j = ny - (b - 2 * nx - ny) - 1;
            ((-1, j), (0, j))
        }
    }

    /// Continuous position of x_k (1-based) in rectangle coordinates.
    pub fn mark_point(&self, k: usize) -> Complex64 {
        let (x, y) = self.vertex(self.marks[k - 1]);
        Complex64::new(x as f64 * self.delta, y as f64 * self.delta)
    }

    /// Whether boundary vertex `b` lies strictly inside the free arc.
    pub fn on_free_arc(&self, b: usize) -> bool {
        if self.n == 0 {
            return true;
        }
        let p = self.perimeter();
        let (a, e) = (self.marks[self.n], self.marks[self.n + 1]);
        let off = (b + p - a) % p;
        off > 0 && off < (e + p - a) % p
    }

    fn rebuild(&mut self) {
        self.active.clear();
        for id in 0..self.sites.len() {
            self.nbrs[id] = [NONE; 4];
            if self.sites[id] != Site::Active {
                continue;
            }
            self.active.push(id as u32);
            let (i, j) = self.coords(id);
            for (s, (di, dj)) in [(1, 0), (0, 1), (-1, 0), (0, -1)].into_iter().enumerate() {
                if self.site(i + di, j + dj) != Site::Absent {
                    self.nbrs[id][s] = self.idx(i + di, j + dj) as u32;
                }
            }
        }
        self.free_faces = (0..self.perimeter())
            .filter(|&b| self.n == 0 || self.edge_arc[b] == self.n + 2)
            .map(|b| {
                let (_, (i, j)) = self.edge_faces(b);
                self.idx(i, j) as u32
            })
            .collect();
    }

    /// Exchange of + and − arcs: every frozen spin negated.
    pub fn flipped(&self) -> Self {
        let mut lat = self.clone();
        for s in lat.sites.iter_mut() {
            if let Site::Frozen(v) = s {
                *v = -*v;
            }
        }
        lat
    }

    /// The free arc replaced by a fixed arc of spin `spin`.
    pub fn with_free_arc_fixed(&self, spin: i8) -> Self {
        let mut lat = self.clone();
        for b in 0..lat.perimeter() {
            if lat.edge_arc[b] == lat.n + 2 {
                let ((i, j), _) = lat.edge_faces(b);
                let id = lat.idx(i, j);
                lat.sites[id] = Site::Frozen(spin);
                lat.arc_of[id] = lat.n + 2;
            }
        }
        lat.rebuild();
        lat
    }

    /// Freeze selected domain faces at given spins.
    pub fn with_frozen(&self, cells: &[((i32, i32), i8)]) -> Self {
        let mut lat = self.clone();
        for &((i, j), s) in cells {
            let id = lat.idx(i, j);
            lat.sites[id] = Site::Frozen(s);
        }
        lat.rebuild();
        lat
    }

    /// Images of x_1..x_{N+2} under the rectangle map.
    pub fn marked_images(&self) -> Result<MarkedImages, IsingError> {
        let pts: Vec<Complex64> = (1..=self.n + 2).map(|k| self.mark_point(k)).collect();
        rectangle_to_halfplane(self.nx as f64 * self.delta, self.ny as f64 * self.delta, &pts)
    }
}

/// Discretize `domain` at mesh `delta` with N curves and label the arcs.
pub fn build_polygon(domain: Domain, n: usize, marks: &[f64], delta: f64) -> Result<LatticePolygon, IsingError> {
    if n == 0 {
        return Err(IsingError::Marks("need N >= 1".into()));
    }
    let (w, h) = domain.size();
    if !(delta > 0.0 && w > 0.0 && h > 0.0) {
        return Err(IsingError::Domain(format!("size {w} x {h} at mesh {delta}")));
    }
    let cells = |len: f64| -> Result<i32, IsingError> {
        let c = (len / delta).round();
        if (c * delta - len).abs() > 1e-9 * len || c < 2.0 {
            return Err(IsingError::Domain(format!("side {len} is not a multiple (>= 2) of mesh {delta}")));
        }
        Ok(c as i32)
    };
    let (nx, ny) = (cells(w)?, cells(h)?);
    let arclength: Vec<f64> = match domain {
        Domain::Rectangle { .. } => {
            if marks.len() != n + 2 {
                return Err(IsingError::Marks(format!("expected {} marks, got {}", n + 2, marks.len())));
            }
            marks.to_vec()
        }
        Domain::HalfPlaneBox { half_width, height } => {
            if marks.len() != n + 1 {
                return Err(IsingError::Marks(format!("expected {} marks, got {}", n + 1, marks.len())));
            }
            if marks.iter().any(|x| x.abs() >= half_width) {
                return Err(IsingError::Marks("marks must lie inside the bottom side".into()));
            }
            let mut s: Vec<f64> = marks.iter().map(|x| x + half_width).collect();
            s.push(3.0 * half_width + height);
            s
        }
    };
    let mut lat = LatticePolygon::empty(delta, nx, ny);
    lat.n = n;
    let p = lat.perimeter();
    let mut idx = Vec::with_capacity(n + 2);
    for (k, s) in arclength.iter().enumerate() {
        if !s.is_finite() || *s < 0.0 {
            return Err(IsingError::Marks(format!("x_{} has arclength {s}", k + 1)));
        }
        let b = ((s / delta).round() as usize) % p;
        if lat.is_corner(b) {
            return Err(IsingError::Marks(format!("x_{} sits at a corner", k + 1)));
        }
        idx.push(b);
    }
    let off: Vec<usize> = idx.iter().map(|b| (b + p - idx[0]) % p).collect();
    for k in 1..off.len() {
        if off[k] < off[k - 1] + 2 {
            return Err(IsingError::Marks(format!(
                "x_{} and x_{} out of counterclockwise order or closer than 2δ",
                k,
                k + 1
            )));
        }
    }
    if p - off[n + 1] < 2 {
        return Err(IsingError::Marks(format!("x_{} and x_1 closer than 2δ", n + 2)));
    }
    lat.marks = idx;
    for b in 0..p {
        let o = (b + p - lat.marks[0]) % p;
        let k = off.iter().rposition(|&d| d <= o).unwrap() + 1;
        lat.edge_arc[b] = if k == n + 2 { 1 } else { k + 1 };
    }
    for j in 0..ny {
        for i in 0..nx {
            let id = lat.idx(i, j);
            lat.sites[id] = Site::Active;
        }
    }
    for b in 0..p {
        let arc = lat.edge_arc[b];
        if arc <= n + 1 {
            let ((i, j), _) = lat.edge_faces(b);
            let id = lat.idx(i, j);
            lat.sites[id] = Site::Frozen(arc_sign(arc));
            lat.arc_of[id] = arc;
        }
    }
    lat.rebuild();
    Ok(lat)
}

/// Spins on the padded grid; absent faces hold 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinConfig {
    pub spins: Vec<i8>,
}

impl SpinConfig {
    pub fn uniform(lat: &LatticePolygon, s: i8) -> Self {
        let spins = lat
            .sites
            .iter()
            .map(|site| match site {
                Site::Absent => 0,
                Site::Active => s,
                Site::Frozen(v) => *v,
            })
            .collect();
        Self { spins }
    }

    pub fn random<R: Rng>(lat: &LatticePolygon, rng: &mut R) -> Self {
        let mut c = Self::uniform(lat, 1);
        for &id in &lat.active {
            if rng.random::<bool>() {
                c.spins[id as usize] = -1;
            }
        }
        c
    }

    /// Build from a function of face coordinates (evaluated on active faces).
    pub fn from_fn(lat: &LatticePolygon, f: impl Fn(i32, i32) -> i8) -> Self {
        let mut c = Self::uniform(lat, 1);
        for &id in &lat.active {
            let (i, j) = lat.coords(id as usize);
            c.spins[id as usize] = f(i, j);
        }
        c
    }

    pub fn get(&self, lat: &LatticePolygon, i: i32, j: i32) -> Option<i8> {
        if lat.site(i, j) == Site::Absent {
            None
        } else {
            Some(self.spins[lat.idx(i, j)])
        }
    }

    pub fn set(&mut self, lat: &LatticePolygon, i: i32, j: i32, s: i8) {
        if lat.site(i, j) == Site::Active {
            self.spins[lat.idx(i, j)] = s;
        }
    }

    /// Mean spin over active faces.
    pub fn magnetization(&self, lat: &LatticePolygon) -> f64 {
        if lat.active.is_empty() {
            return 0.0;
        }
        lat.active.iter().map(|&id| self.spins[id as usize] as f64).sum::<f64>() / lat.active.len() as f64
    }

    /// Frozen faces carry their values and active faces are ±1.
    pub fn is_valid(&self, lat: &LatticePolygon) -> bool {
        self.spins.len() == lat.sites.len()
            && lat.sites.iter().zip(&self.spins).all(|(site, &s)| match site {
                Site::Absent => s == 0,
                Site::Active => s == 1 || s == -1,
                Site::Frozen(v) => s == *v,
            })
    }
}

/// `Σ σ(x)σ(y)` over neighbouring pairs with at least one active face.
pub fn interaction_sum(lat: &LatticePolygon, cfg: &SpinConfig) -> i64 {
    let mut e = 0i64;
    for &id in &lat.active {
        let s = cfg.spins[id as usize] as i64;
        for &nb in &lat.nbrs[id as usize] {
            if nb == NONE || (lat.sites[nb as usize] == Site::Active && nb < id) {
                continue;
            }
            e += s * cfg.spins[nb as usize] as i64;
        }
    }
    e
}

/// Index of a configuration in the enumeration order: bit t set iff active face t is +1.
pub fn state_index(lat: &LatticePolygon, cfg: &SpinConfig) -> usize {
    lat.active
        .iter()
        .enumerate()
        .filter(|(_, &id)| cfg.spins[id as usize] > 0)
        .map(|(t, _)| 1usize << t)
        .sum()
}

/// Exact Boltzmann law at β_c over all active-face assignments.
pub fn enumerate_boltzmann(lat: &LatticePolygon) -> Result<Vec<f64>, IsingError> {
    let m = lat.active.len();
    if m > 20 {
        return Err(IsingError::TooLarge(m));
    }
    let beta = beta_c();
    let mut cfg = SpinConfig::uniform(lat, 1);
    let logw: Vec<f64> = (0..1usize << m)
        .map(|state| {
            for (t, &id) in lat.active.iter().enumerate() {
                cfg.spins[id as usize] = if state >> t & 1 == 1 { 1 } else { -1 };
            }
            beta * interaction_sum(lat, &cfg) as f64
        })
        .collect();
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Metropolis,
    Wolff,
    #[default]
    SwendsenWang,
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "metropolis" => Ok(Self::Metropolis),
            "wolff" => Ok(Self::Wolff),
            "sw" | "swendsen-wang" => Ok(Self::SwendsenWang),
            other => Err(format!("unknown algorithm {other:?} (metropolis, wolff, sw)")),
        }
    }
}

/// Markov chain on a fixed lattice. Frozen faces are never touched: Metropolis
/// skips them, Wolff rejects any cluster that bonds to one, Swendsen–Wang keeps
/// every cluster that contains one.
pub struct Sampler<'a> {
    lat: &'a LatticePolygon,
    cfg: SpinConfig,
    rng: ChaCha8Rng,
    p_bond: f64,
    accept: [f64; 9],
    stamp: Vec<u32>,
    generation: u32,
    stack: Vec<u32>,
    cluster: Vec<u32>,
}

impl<'a> Sampler<'a> {
    pub fn new(lat: &'a LatticePolygon, cfg: SpinConfig, rng: ChaCha8Rng) -> Self {
        let beta = beta_c();
        let mut accept = [1.0; 9];
        for (k, a) in accept.iter_mut().enumerate() {
            let sh = k as f64 - 4.0;
            *a = (-2.0 * beta * sh).exp().min(1.0);
        }
        Self {
            lat,
            cfg,
            rng,
            p_bond: 1.0 - (-2.0 * beta).exp(),
            accept,
            stamp: vec![0; lat.grid_len()],
            generation: 0,
            stack: Vec::new(),
            cluster: Vec::new(),
        }
    }

    pub fn config(&self) -> &SpinConfig {
        &self.cfg
    }

    pub fn into_config(self) -> SpinConfig {
        self.cfg
    }

    pub fn sweep(&mut self, alg: Algorithm) {
        if self.lat.active.is_empty() {
            return;
        }
        match alg {
            Algorithm::Metropolis => self.metropolis_sweep(),
            Algorithm::Wolff => self.wolff_sweep(),
            Algorithm::SwendsenWang => self.sw_sweep(),
        }
    }

    pub fn run(&mut self, sweeps: usize, alg: Algorithm) {
        for _ in 0..sweeps {
            self.sweep(alg);
        }
    }

    fn metropolis_sweep(&mut self) {
        let m = self.lat.active.len();
        for _ in 0..m {
            let id = self.lat.active[self.rng.random_range(0..m)] as usize;
            let s = self.cfg.spins[id];
            let h: i8 = self.lat.nbrs[id]
                .iter()
                .filter(|&&nb| nb != NONE)
                .map(|&nb| self.cfg.spins[nb as usize])
                .sum();
            let a = self.accept[(s * h + 4) as usize];
            if a >= 1.0 || self.rng.random::<f64>() < a {
                self.cfg.spins[id] = -s;
            }
        }
    }

    /// Grow one cluster from a random active face; flip it unless it bonded to a frozen face.
    fn wolff_step(&mut self) -> usize {
        let lat = self.lat;
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        let g = self.generation;
        let seed = lat.active[self.rng.random_range(0..lat.active.len())];
        let s = self.cfg.spins[seed as usize];
        self.stack.clear();
        self.cluster.clear();
        self.stack.push(seed);
        self.stamp[seed as usize] = g;
        let mut ghost = false;
        while let Some(id) = self.stack.pop() {
            self.cluster.push(id);
            for &nb in &lat.nbrs[id as usize] {
                if nb == NONE || self.stamp[nb as usize] == g || self.cfg.spins[nb as usize] != s {
                    continue;
                }
                if self.rng.random::<f64>() >= self.p_bond {
                    continue;
                }
                if lat.sites[nb as usize] != Site::Active {
                    ghost = true;
                    break;
                }
                self.stamp[nb as usize] = g;
                self.stack.push(nb);
            }
            if ghost {
                break;
            }
        }
        if !ghost {
            for &id in &self.cluster {
                self.cfg.spins[id as usize] = -s;
            }
        }
        self.cluster.len() + self.stack.len()
    }

    /// Cluster moves until their sizes add up to the number of active faces.
    /// A fixed ⌈√m⌉ cluster moves for m active faces. The count must not depend
    /// on the state, or recording at sweep ends biases the law.
    fn wolff_sweep(&mut self) {
        let moves = (self.lat.active.len() as f64).sqrt().ceil() as usize;
        for _ in 0..moves {
            self.wolff_step();
        }
    }

    fn sw_sweep(&mut self) {
        let lat = self.lat;
        let ghost = lat.grid_len();
        let mut uf = UnionFind::<u32>::new(ghost + 1);
        for (id, site) in lat.sites.iter().enumerate() {
            if matches!(site, Site::Frozen(_)) {
                uf.union(id as u32, ghost as u32);
            }
        }
        for &id in &lat.active {
            let s = self.cfg.spins[id as usize];
            for &nb in &lat.nbrs[id as usize] {
                if nb == NONE || (lat.sites[nb as usize] == Site::Active && nb < id) {
                    continue;
                }
                if self.cfg.spins[nb as usize] == s && self.rng.random::<f64>() < self.p_bond {
                    uf.union(id, nb);
                }
            }
        }
        let frozen_root = uf.find_mut(ghost as u32);
        // 0 undecided, 1 keep, 2 flip
        let mut decision = vec![0u8; ghost + 1];
        decision[frozen_root as usize] = 1;
        for &id in &lat.active {
            let r = uf.find_mut(id) as usize;
            if decision[r] == 0 {
                decision[r] = if self.rng.random::<bool>() { 2 } else { 1 };
            }
            if decision[r] == 2 {
                self.cfg.spins[id as usize] = -self.cfg.spins[id as usize];
            }
        }
    }
}

/// `sweeps` sweeps of `alg` from a uniformly random start.
pub fn sample_spins(lat: &LatticePolygon, sweeps: usize, alg: Algorithm, seed: u64) -> SpinConfig {
    let mut rng = replica_rng(seed, 0);
    let start = SpinConfig::random(lat, &mut rng);
    sample_from(lat, start, sweeps, alg, rng)
}

/// Continue a chain from `cfg`.
pub fn sample_from(lat: &LatticePolygon, cfg: SpinConfig, sweeps: usize, alg: Algorithm, rng: ChaCha8Rng) -> SpinConfig {
    let mut s = Sampler::new(lat, cfg, rng);
    s.run(sweeps, alg);
    s.into_config()
}

/// Where an interface stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FreeArc,
    Marked(usize),
}

/// Edge path on δZ² from x_j; vertices in lattice coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterfacePath {
    pub j: usize,
    pub vertices: Vec<(i32, i32)>,
    pub end: Termination,
}

impl InterfacePath {
    /// Directed edges as (vertex, direction code) pairs.
    pub fn directed_edges(&self) -> Vec<((i32, i32), u8)> {
        self.vertices
            .windows(2)
            .map(|w| (w[0], dir_code((w[1].0 - w[0].0, w[1].1 - w[0].1))))
            .collect()
    }

    /// `x,y` rows in domain units.
    pub fn to_csv(&self, delta: f64) -> String {
        let mut out = String::from("x,y\n");
        for &(x, y) in &self.vertices {
            out.push_str(&format!(
                "{},{}\n",
                loewner::fmt_f64(x as f64 * delta),
                loewner::fmt_f64(y as f64 * delta)
            ));
        }
        out
    }
}

fn dir_code(d: (i32, i32)) -> u8 {
    match d {
        (1, 0) => 0,
        (0, 1) => 1,
        (-1, 0) => 2,
        _ => 3,
    }
}

/// Face spanned at vertex `v` by unit vectors `a` and `b`.
#[inline]
fn face_at(v: (i32, i32), a: (i32, i32), b: (i32, i32)) -> (i32, i32) {
    (v.0 + a.0.min(0) + b.0.min(0), v.1 + a.1.min(0) + b.1.min(0))
}

/// Walk from x_j keeping (−1)^j on the left, turning left whenever two
/// continuations are legal.
pub fn trace_interface(lat: &LatticePolygon, cfg: &SpinConfig, j: usize) -> Result<InterfacePath, IsingError> {
    if j == 0 || j > lat.n {
        return Err(IsingError::Marks(format!("no interface starts at x_{j} for N = {}", lat.n)));
    }
    let (left, right) = (arc_sign(j), -arc_sign(j));
    let b0 = lat.marks[j - 1];
    let mut v = lat.vertex(b0);
    let (nx, ny) = (lat.nx, lat.ny);
    let mut d = if v.1 == 0 {
        (0, 1)
    } else if v.0 == nx {
        (-1, 0)
    } else if v.1 == ny {
        (0, -1)
    } else {
        (1, 0)
    };
    let spin = |f: (i32, i32)| cfg.get(lat, f.0, f.1);
    let w = (nx + 3) as usize;
    let mut seen = vec![0u8; w * (ny + 3) as usize];
    let mut vertices = vec![v];
    let cap = 4 * (nx as usize + 3) * (ny as usize + 3);
    loop {
        let l = (-d.1, d.0);
        let r = (d.1, -d.0);
        let fl = spin(face_at(v, d, l));
        let fr = spin(face_at(v, d, r));
        let next = if fl == Some(right) {
            l
        } else if fl == Some(left) && fr == Some(right) {
            d
        } else if fr == Some(left) {
            r
        } else {
            break;
        };
        let cell = (v.1 + 1) as usize * w + (v.0 + 1) as usize;
        let bit = 1u8 << dir_code(next);
        if seen[cell] & bit != 0 || vertices.len() > cap {
            return Err(IsingError::Revisit { j, x: v.0, y: v.1 });
        }
        seen[cell] |= bit;
        d = next;
        v = (v.0 + d.0, v.1 + d.1);
        vertices.push(v);
    }
    let stranded = IsingError::Stranded { j, x: v.0, y: v.1 };
    let anchor = if lat.boundary_index(v.0, v.1).is_some() {
        v
    } else if vertices.len() >= 2 {
        vertices[vertices.len() - 2]
    } else {
        return Err(stranded);
    };
    let b = lat.boundary_index(anchor.0, anchor.1).ok_or(stranded.clone())?;
    let end = if let Some(k) = lat.marks.iter().position(|&m| m == b) {
        Termination::Marked(k + 1)
    } else if lat.on_free_arc(b) && anchor == v {
        Termination::FreeArc
    } else {
        return Err(stranded);
    };
    Ok(InterfacePath { j, vertices, end })
}

/// All N interfaces end strictly inside the free arc.
pub fn interface_criterion(lat: &LatticePolygon, cfg: &SpinConfig) -> Result<bool, IsingError> {
    for j in 1..=lat.n {
        if trace_interface(lat, cfg, j)?.end != Termination::FreeArc {
            return Ok(false);
        }
    }
    Ok(true)
}

/// For each fixed arc k, a cluster of sign (−1)^k joins it to the free arc.
///
/// Arcs 1..N use nearest-neighbour clusters; arc N+1 also links diagonal
/// faces. The left-turn rule makes an interface follow a 4-connected chain on
/// its left and an 8-connected chain on its right, and arc N+1 is only ever
/// on the right (of γ_N), so this is the exact lattice counterpart. Faces
/// diagonal across an absent square (at x_{N+1}, x_{N+2} and outer corners)
/// count as adjacent for both sides.
pub fn cluster_criterion(lat: &LatticePolygon, cfg: &SpinConfig) -> bool {
    let g = lat.grid_len();
    let n = lat.n;
    let last = arc_sign(n + 1);
    let mut uf4 = UnionFind::<u32>::new(g + n + 3);
    for id in 0..g {
        if lat.arc_of[id] != 0 && matches!(lat.sites[id], Site::Frozen(_)) {
            uf4.union(id as u32, (g + lat.arc_of[id]) as u32);
        }
    }
    let present = |i: i32, j: i32| lat.site(i, j) != Site::Absent;
    for j in -1..=lat.ny {
        for i in -1..=lat.nx {
            if !present(i, j) {
                continue;
            }
            let a = lat.idx(i, j);
            for (di, dj) in [(1, 0), (0, 1)] {
                if present(i + di, j + dj) {
                    let b = lat.idx(i + di, j + dj);
                    if cfg.spins[a] == cfg.spins[b] {
                        uf4.union(a as u32, b as u32);
                    }
                }
            }
        }
    }
    // Diagonal pairs whose other diagonal has an absent face: the walk can
    // only go round the gap, so the pair is linked for either side.
    for j in -1..lat.ny {
        for i in -1..lat.nx {
            for ((a, b), (c, d)) in [
                (((i, j), (i + 1, j + 1)), ((i + 1, j), (i, j + 1))),
                (((i + 1, j), (i, j + 1)), ((i, j), (i + 1, j + 1))),
            ] {
                if present(a.0, a.1) && present(b.0, b.1) && !(present(c.0, c.1) && present(d.0, d.1)) {
                    let (ia, ib) = (lat.idx(a.0, a.1), lat.idx(b.0, b.1));
                    if cfg.spins[ia] == cfg.spins[ib] {
                        uf4.union(ia as u32, ib as u32);
                    }
                }
            }
        }
    }
    let mut uf8 = uf4.clone();
    for j in -1..lat.ny {
        for i in -1..lat.nx {
            for (a, b) in [((i, j), (i + 1, j + 1)), ((i + 1, j), (i, j + 1))] {
                if present(a.0, a.1) && present(b.0, b.1) {
                    let (ia, ib) = (lat.idx(a.0, a.1), lat.idx(b.0, b.1));
                    if cfg.spins[ia] == last && cfg.spins[ib] == last {
                        uf8.union(ia as u32, ib as u32);
                    }
                }
            }
        }
    }
    (1..=n + 1).all(|k| {
        let s = arc_sign(k);
        let uf = if k == n + 1 { &uf8 } else { &uf4 };
        let root = uf.find((g + k) as u32);
        lat.free_faces
            .iter()
            .any(|&f| cfg.spins[f as usize] == s && uf.find(f) == root)
    })
}

/// Event A, traced and cross-checked against the cluster formulation.
pub fn detect_event_a(lat: &LatticePolygon, cfg: &SpinConfig) -> Result<bool, IsingError> {
    let interfaces = interface_criterion(lat, cfg)?;
    let clusters = cluster_criterion(lat, cfg);
    if interfaces != clusters {
        return Err(IsingError::Disagreement { interfaces, clusters });
    }
    Ok(interfaces)
}

// ---------------------------------------------------------------------------
// Rectangle to upper half-plane

/// Arithmetic-geometric mean.
pub fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        if (a - b).abs() <= 1e-16 * a {
            break;
        }
        let m = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = m;
    }
    0.5 * (a + b)
}

/// Jacobi sn, cn, dn at modulus `k` (complement `kp`) by descending AGM.
/// `iterations` fixes the AGM depth; `None` runs to convergence.
pub fn sncndn(u: f64, k: f64, kp: f64, iterations: Option<usize>) -> (f64, f64, f64) {
    if k == 0.0 {
        return (u.sin(), u.cos(), 1.0);
    }
    let mut a = vec![1.0];
    let mut c = vec![k];
    let mut b = kp;
    let max = iterations.unwrap_or(64);
    while a.len() <= max {
        let last = *a.last().unwrap();
        if iterations.is_none() && c.last().unwrap().abs() <= 1e-15 * last {
            break;
        }
        let an = 0.5 * (last + b);
        let cn = 0.5 * (last - b);
        b = (last * b).sqrt();
        a.push(an);
        c.push(cn);
    }
    let nlev = a.len() - 1;
    let mut phi = (1u64 << nlev) as f64 * a[nlev] * u;
    for lev in (1..=nlev).rev() {
        phi = 0.5 * (phi + (c[lev] / a[lev] * phi.sin()).asin());
    }
    let (s, cc) = phi.sin_cos();
    let d = (kp * kp + k * k * cc * cc).sqrt();
    (s, cc, d)
}

/// Conformal map from `[0, W] × [0, H]` onto H, sending the corners to
/// −1, 1, 1/k, −1/k (counterclockwise from the lower-left corner).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RectangleMap {
    pub width: f64,
    pub height: f64,
    pub k: f64,
    pub kp: f64,
    pub big_k: f64,
    pub big_kp: f64,
    pub iterations: Option<usize>,
}

impl RectangleMap {
    pub fn new(width: f64, height: f64) -> Result<Self, IsingError> {
        let aspect = width / height;
        if !(0.1..=10.0).contains(&aspect) {
            return Err(IsingError::Aspect(aspect));
        }
        // K'/K = 2H/W; theta nulls at nome q give k, k' without cancellation.
        let q = (-PI * 2.0 * height / width).exp();
        let (mut t2, mut t3, mut t4) = (0.0, 1.0, 1.0);
        for m in 0..64 {
            let mf = m as f64;
            let a = q.powf((mf + 0.5) * (mf + 0.5));
            t2 += 2.0 * a;
            if m > 0 {
                let e = q.powf(mf * mf);
                t3 += 2.0 * e;
                t4 += if m % 2 == 0 { 2.0 * e } else { -2.0 * e };
            }
            if a < 1e-18 {
                break;
            }
        }
        let k = (t2 / t3).powi(2);
        let kp = (t4 / t3).powi(2);
        let big_k = PI / (2.0 * agm(1.0, kp));
        let big_kp = PI / (2.0 * agm(1.0, k));
        Ok(Self { width, height, k, kp, big_k, big_kp, iterations: None })
    }

    pub fn with_iterations(mut self, iterations: Option<usize>) -> Self {
        self.iterations = iterations;
        self
    }

    fn sn(&self, u: f64) -> (f64, f64, f64) {
        sncndn(u, self.k, self.kp, self.iterations)
    }

    fn sn_comp(&self, u: f64) -> (f64, f64, f64) {
        sncndn(u, self.kp, self.k, self.iterations)
    }

    fn scale(&self) -> f64 {
        2.0 * self.big_k / self.width
    }

    /// Real image of a boundary point; the top midpoint maps to +∞.
    pub fn boundary_image(&self, z: Complex64) -> f64 {
        let tol = 1e-12 * self.width.max(self.height);
        let c = self.scale();
        if z.im.abs() <= tol {
            self.sn(c * (z.re - 0.5 * self.width)).0
        } else if (z.re - self.width).abs() <= tol {
            1.0 / self.sn_comp(c * z.im).2
        } else if (z.im - self.height).abs() <= tol {
            let s = self.sn(c * (z.re - 0.5 * self.width)).0;
            if s.abs() < 1e-15 {
                f64::INFINITY
            } else {
                1.0 / (self.k * s)
            }
        } else {
            -1.0 / self.sn_comp(c * z.im).2
        }
    }

    /// Image of an interior point by the addition formula for sn(x + iy).
    pub fn image(&self, z: Complex64) -> Complex64 {
        let c = self.scale();
        let (s, cc, d) = self.sn(c * (z.re - 0.5 * self.width));
        let (s1, c1, d1) = self.sn_comp(c * z.im);
        let den = c1 * c1 + self.k * self.k * s * s * s1 * s1;
        Complex64::new(s * d1 / den, cc * d * s1 * c1 / den)
    }
}

/// Marked-point images with x_{N+2} sent to ∞.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkedImages {
    /// Lower-left, lower-right, upper-right, upper-left corners.
    pub corners: [f64; 4],
    /// x_1..x_N.
    pub ys: Vec<f64>,
    /// x_{N+1}.
    pub y_next: f64,
    /// Images before the Möbius normalization (x_1..x_{N+2}).
    pub raw: Vec<f64>,
    pub map: RectangleMap,
}

/// Orientation-preserving Möbius map of H sending `p` to ∞.
fn to_infinity(p: f64, u: f64) -> f64 {
    if p.is_infinite() {
        u
    } else if u.is_infinite() {
        0.0
    } else {
        -1.0 / (u - p)
    }
}

/// Images of boundary points x_1..x_{N+2} (counterclockwise) of the rectangle
/// `[0, width] × [0, height]`, normalized so that x_{N+2} goes to ∞.
pub fn rectangle_to_halfplane(width: f64, height: f64, points: &[Complex64]) -> Result<MarkedImages, IsingError> {
    rectangle_to_halfplane_with(RectangleMap::new(width, height)?, points)
}

pub fn rectangle_to_halfplane_with(map: RectangleMap, points: &[Complex64]) -> Result<MarkedImages, IsingError> {
    if points.len() < 3 {
        return Err(IsingError::Marks("need at least three boundary points".into()));
    }
    let raw: Vec<f64> = points.iter().map(|&z| map.boundary_image(z)).collect();
    let p = *raw.last().unwrap();
    let norm: Vec<f64> = raw[..raw.len() - 1].iter().map(|&u| to_infinity(p, u)).collect();
    if norm.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(IsingError::Marks(format!("images {norm:?} not increasing; points out of order")));
    }
    let (w, h) = (map.width, map.height);
    let corners = [
        Complex64::new(0.0, 0.0),
        Complex64::new(w, 0.0),
        Complex64::new(w, h),
        Complex64::new(0.0, h),
    ]
    .map(|z| to_infinity(p, map.boundary_image(z)));
    let n = norm.len() - 1;
    Ok(MarkedImages { corners, ys: norm[..n].to_vec(), y_next: norm[n], raw, map })
}

/// Image of an interface in H under the normalized rectangle map.
pub fn interface_in_halfplane(lat: &LatticePolygon, path: &InterfacePath) -> Result<Vec<Complex64>, IsingError> {
    let images = lat.marked_images()?;
    let map = images.map;
    let p = *images.raw.last().unwrap();
    let moebius = |w: Complex64| {
        if p.is_infinite() {
            w
        } else {
            -1.0 / (w - p)
        }
    };
    Ok(path
        .vertices
        .iter()
        .map(|&(x, y)| {
            let z = Complex64::new(x as f64 * lat.delta, y as f64 * lat.delta);
            if lat.boundary_index(x, y).is_some() {
                Complex64::new(to_infinity(p, map.boundary_image(z)), 0.0)
            } else {
                moebius(map.image(z))
            }
        })
        .collect())
}

/// Quadratic variation of an unzipped interface driver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrivingQv {
    pub horizon: f64,
    pub qv: f64,
    /// `qv / horizon`; κ in the scaling limit.
    pub ratio: f64,
}

/// Unzip the image of `path` and sum squared driver increments over `bins`
/// equal time cells up to `fraction` of its total capacity.
pub fn interface_driving_qv(
    lat: &LatticePolygon,
    path: &InterfacePath,
    fraction: f64,
    bins: usize,
) -> Result<DrivingQv, IsingError> {
    let mut pts = interface_in_halfplane(lat, path)?;
    if let Some(k) = pts.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
        pts.truncate(k);
    }
    let (times, drivers) = loewner::unzip_drivers(&pts)?;
    let horizon = fraction * times.last().copied().unwrap_or(0.0);
    if !(horizon > 0.0) || bins == 0 {
        return Err(IsingError::Domain("interface too short to unzip".into()));
    }
    let at = |t: f64| {
        let k = times.partition_point(|&s| s <= t);
        drivers[k.saturating_sub(1)]
    };
    let mut qv = 0.0;
    let mut prev = drivers[0];
    for b in 1..=bins {
        let w = at(horizon * b as f64 / bins as f64);
        qv += (w - prev).powi(2);
        prev = w;
    }
    Ok(DrivingQv { horizon, qv, ratio: qv / horizon })
}

// ---------------------------------------------------------------------------
// P[A] estimation

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PaOptions {
    pub algorithm: Algorithm,
    /// Sweeps discarded at the start of each chain.
    pub burn_in: usize,
    /// Sweeps between recorded samples.
    pub spacing: usize,
    pub chains: usize,
    pub bootstrap: usize,
    /// Fail with advice when the CI half-width exceeds this.
    pub max_half_width: Option<f64>,
}

impl Default for PaOptions {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::SwendsenWang,
            burn_in: 200,
            spacing: 2,
            chains: 4,
            bootstrap: 1000,
            max_half_width: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PaEstimate {
    pub p_hat: f64,
    pub ci: (f64, f64),
    pub sigma: f64,
    pub replicates: usize,
    /// Largest per-chain integrated autocorrelation of the indicator.
    pub tau_int: f64,
    pub block: usize,
    pub delta: f64,
    /// Limit value F_N at the conformal images.
    pub f_n: f64,
    pub images: MarkedImages,
}

/// Monte Carlo estimate of P[A_δ] with a block-bootstrap CI, next to F_N.
pub fn estimate_pa(lat: &LatticePolygon, replicates: usize, seed: u64, opts: &PaOptions) -> Result<PaEstimate, IsingError> {
    if replicates == 0 || opts.chains == 0 {
        return Err(IsingError::Domain("need at least one replicate and one chain".into()));
    }
    let images = lat.marked_images()?;
    let f_n = partition::limit_probability(&images.ys, images.y_next, 3.0)?.value;
    let chains = opts.chains.min(replicates);
    let runs: Vec<Result<Vec<f64>, IsingError>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let count = replicates / chains + usize::from(c < replicates % chains);
            let mut rng = replica_rng(seed, c as u64);
            let start = SpinConfig::random(lat, &mut rng);
            let mut s = Sampler::new(lat, start, rng);
            s.run(opts.burn_in, opts.algorithm);
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                s.run(opts.spacing.max(1), opts.algorithm);
                out.push(if detect_event_a(lat, s.config())? { 1.0 } else { 0.0 });
            }
            Ok(out)
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let tau_int = runs.iter().map(|x| integrated_autocorrelation(x)).fold(1.0, f64::max);
    let block = (2.0 * tau_int).ceil().max(1.0) as usize;
    let mut blocks = Vec::new();
    for run in &runs {
        for ch in run.chunks(block) {
            if ch.len() == block {
                blocks.push(mean(ch));
            }
        }
    }
    let all: Vec<f64> = runs.concat();
    let p_hat = mean(&all);
    if blocks.len() < 2 {
        blocks = all.clone();
    }
    let mut rng = replica_rng(derive_seed(seed, 0x15), 0);
    let bs = bootstrap(&blocks, opts.bootstrap.max(2), &mut rng, mean);
    let est = PaEstimate {
        p_hat,
        ci: (bs.lo, bs.hi),
        sigma: bs.sigma,
        replicates,
        tau_int,
        block,
        delta: lat.delta,
        f_n,
        images,
    };
    if let Some(target) = opts.max_half_width {
        let half = 0.5 * (bs.hi - bs.lo);
        if half > target {
            let advise = (replicates as f64 * (half / target).powi(2)).ceil() as usize;
            return Err(IsingError::WideCi { p: p_hat, half, target, advise });
        }
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::total_variation;

    fn square(n: usize, marks: &[f64], delta: f64) -> LatticePolygon {
        build_polygon(Domain::Rectangle { width: 1.0, height: 1.0 }, n, marks, delta).unwrap()
    }

    #[test]
    fn n1_arcs_and_frozen_layer() {
        let lat = square(1, &[0.5, 1.5, 3.5], 0.125);
        assert_eq!(lat.perimeter(), 32);
        assert!(lat.frozen_count(1) >= 1 && lat.frozen_count(2) >= 1);
        assert_eq!(lat.frozen_count(3), 0);
        for b in 0..lat.perimeter() {
            let ((i, j), _) = lat.edge_faces(b);
            match lat.edge_arc[b] {
                1 => assert_eq!(lat.site(i, j), Site::Frozen(-1)),
                2 => assert_eq!(lat.site(i, j), Site::Frozen(1)),
                3 => assert_eq!(lat.site(i, j), Site::Absent),
                k => panic!("arc {k}"),
            }
        }
        // bottom-right corner edge belongs to arc 2, top-left to the free arc
        assert_eq!(lat.edge_arc[7], 2);
        assert_eq!(lat.edge_arc[20], 3);
        assert_eq!(lat.edge_arc[30], 1);
    }

    #[test]
    fn n2_alternating_signs() {
        let lat = square(2, &[0.5, 1.5, 2.5, 3.5], 0.125);
        let signs: Vec<i8> = (1..=3)
            .map(|k| {
                let b = (0..lat.perimeter()).find(|&b| lat.edge_arc[b] == k).unwrap();
                let ((i, j), _) = lat.edge_faces(b);
                match lat.site(i, j) {
                    Site::Frozen(s) => s,
                    _ => 0,
                }
            })
            .collect();
        assert_eq!(signs, vec![-1, 1, -1]);
    }

    #[test]
    fn degenerate_marks_rejected() {
        let d = Domain::Rectangle { width: 1.0, height: 1.0 };
        assert!(matches!(build_polygon(d, 1, &[0.5, 0.55, 2.5], 0.125), Err(IsingError::Marks(_))));
        assert!(matches!(build_polygon(d, 1, &[0.5, 1.0, 2.5], 0.125), Err(IsingError::Marks(_))));
        assert!(matches!(build_polygon(d, 1, &[1.5, 0.5, 2.5], 0.125), Err(IsingError::Marks(_))));
        assert!(build_polygon(d, 1, &[0.5, 1.5, 2.5], 0.1).is_ok());
    }

    #[test]
    fn half_plane_box_marks_on_bottom() {
        let d = Domain::HalfPlaneBox { half_width: 2.0, height: 2.0 };
        let lat = build_polygon(d, 1, &[-0.5, 0.5], 0.25).unwrap();
        assert_eq!(lat.vertex(lat.marks[0]), (6, 0));
        assert_eq!(lat.vertex(lat.marks[1]), (10, 0));
        assert_eq!(lat.vertex(lat.marks[2]), (8, 8));
    }

    fn enumeration_tv(lat: &LatticePolygon, alg: Algorithm, sweeps: usize, seed: u64) -> f64 {
        let exact = enumerate_boltzmann(lat).unwrap();
        let mut rng = replica_rng(seed, 0);
        let start = SpinConfig::random(lat, &mut rng);
        let mut s = Sampler::new(lat, start, rng);
        s.run(100, alg);
        let mut counts = vec![0.0; exact.len()];
        for _ in 0..sweeps {
            s.sweep(alg);
            counts[state_index(lat, s.config())] += 1.0;
        }
        counts.iter_mut().for_each(|c| *c /= sweeps as f64);
        total_variation(&counts, &exact)
    }

    #[test]
    fn metropolis_matches_enumeration_3x3() {
        let lat = LatticePolygon::free_rectangle(3, 3);
        let tv = enumeration_tv(&lat, Algorithm::Metropolis, 1_000_000, 3);
        assert!(tv <= 0.02, "tv {tv}");
    }

    #[test]
    fn cluster_moves_match_enumeration_with_frozen_arcs() {
        let lat = build_polygon(Domain::Rectangle { width: 1.0, height: 1.0 }, 1, &[1.0 / 3.0, 4.0 / 3.0, 7.0 / 3.0], 1.0 / 3.0)
            .unwrap();
        assert_eq!(lat.active_faces().len(), 9);
        for alg in [Algorithm::Metropolis, Algorithm::Wolff, Algorithm::SwendsenWang] {
            let tv = enumeration_tv(&lat, alg, 200_000, 11);
            assert!(tv <= 0.03, "{alg:?} tv {tv}");
        }
    }

    #[test]
    fn all_frozen_lattice_is_unchanged() {
        let lat = square(1, &[0.5, 1.5, 3.5], 0.25);
        let cells: Vec<((i32, i32), i8)> =
            (0..4).flat_map(|i| (0..4).map(move |j| ((i, j), if (i + j) % 2 == 0 { 1 } else { -1 }))).collect();
        let frozen = lat.with_frozen(&cells);
        assert!(frozen.active_faces().is_empty());
        let start = SpinConfig::uniform(&frozen, 1);
        for alg in [Algorithm::Metropolis, Algorithm::Wolff, Algorithm::SwendsenWang] {
            let out = sample_from(&frozen, start.clone(), 10, alg, replica_rng(1, 0));
            assert_eq!(out, start);
        }
    }

    #[test]
    fn samplers_keep_frozen_faces() {
        let lat = square(2, &[0.5, 1.5, 2.5, 3.5], 0.125);
        for alg in [Algorithm::Metropolis, Algorithm::Wolff, Algorithm::SwendsenWang] {
            assert!(sample_spins(&lat, 20, alg, 5).is_valid(&lat));
        }
    }

    /// 4×4 square, x_1 bottom middle, x_2 right middle, x_3 top middle.
    fn four_by_four() -> LatticePolygon {
        square(1, &[0.5, 1.5, 2.5], 0.25)
    }

    #[test]
    fn vertical_split_gives_straight_interface() {
        let lat = four_by_four();
        let cfg = SpinConfig::from_fn(&lat, |i, _| if i < 2 { -1 } else { 1 });
        let path = trace_interface(&lat, &cfg, 1).unwrap();
        assert_eq!(path.vertices, (0..=4).map(|y| (2, y)).collect::<Vec<_>>());
        assert_eq!(path.end, Termination::Marked(3));
        assert!(!detect_event_a(&lat, &cfg).unwrap());
    }

    #[test]
    fn left_turn_on_ambiguous_plaquette() {
        let lat = four_by_four();
        // faces around vertex (2,1): SW −, SE +, NW +, NE −: left and right both legal
        let cfg = SpinConfig::from_fn(&lat, |i, j| match (i, j) {
            (1, 0) => -1,
            (2, 0) => 1,
            (1, 1) => 1,
            (2, 1) => -1,
            (i, _) if i < 2 => -1,
            _ => 1,
        });
        let path = trace_interface(&lat, &cfg, 1).unwrap();
        assert_eq!(&path.vertices[..3], &[(2, 0), (2, 1), (1, 1)]);
    }

    #[test]
    fn plus_crossing_to_free_arc_gives_event() {
        // x_1 bottom middle, x_2 right at 1/4, x_3 left middle: free arc runs over the top
        let lat = square(1, &[0.5, 1.25, 3.5], 0.125);
        let cfg = SpinConfig::from_fn(&lat, |i, _| if i >= 4 { 1 } else { -1 });
        assert!(detect_event_a(&lat, &cfg).unwrap());
        assert_eq!(trace_interface(&lat, &cfg, 1).unwrap().end, Termination::FreeArc);
    }

    #[test]
    fn insulating_ring_blocks_event() {
        let lat = square(1, &[0.5, 1.25, 3.5], 0.125);
        // a − row at height 1, closed off at x_2, cuts every + path from arc
        // (x_1 x_2) to the free arc
        let cfg = SpinConfig::from_fn(&lat, |i, j| if j == 1 || i < 4 || (i, j) == (7, 2) { -1 } else { 1 });
        assert!(!detect_event_a(&lat, &cfg).unwrap());
    }

    #[test]
    fn criteria_agree_on_random_and_sampled_configs() {
        for (n, marks) in [
            (1, vec![0.5, 1.5, 3.5]),
            (2, vec![0.5, 1.5, 2.5, 3.5]),
            (3, vec![0.25, 0.75, 1.5, 2.5, 3.5]),
        ] {
            let lat = square(n, &marks, 1.0 / 16.0);
            let mut rng = replica_rng(17, n as u64);
            let mut hits = 0;
            for t in 0..300 {
                let cfg = if t % 2 == 0 {
                    SpinConfig::random(&lat, &mut rng)
                } else {
                    sample_spins(&lat, 5, Algorithm::SwendsenWang, t)
                };
                if detect_event_a(&lat, &cfg).unwrap() {
                    hits += 1;
                }
            }
            assert!(hits > 0, "N={n}: event never seen");
        }
    }

    #[test]
    fn interfaces_share_no_directed_edge() {
        let lat = square(3, &[0.25, 0.75, 1.5, 2.5, 3.5], 1.0 / 16.0);
        for seed in 0..20 {
            let cfg = sample_spins(&lat, 10, Algorithm::SwendsenWang, seed);
            let mut seen = std::collections::HashSet::new();
            for j in 1..=3 {
                for e in trace_interface(&lat, &cfg, j).unwrap().directed_edges() {
                    assert!(seen.insert(e), "shared edge {e:?}");
                }
            }
        }
    }

    #[test]
    fn square_corners_cross_ratio_is_one_half() {
        let pts = [
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 1.0),
            Complex64::new(0.0, 1.0),
        ];
        let im = rectangle_to_halfplane(1.0, 1.0, &pts).unwrap();
        let lambda = (im.ys[1] - im.ys[0]) / (im.y_next - im.ys[0]);
        assert!((lambda - 0.5).abs() < 1e-8, "{lambda}");
        // the square's modulus is the singular value (√2 − 1)²
        assert!((im.map.k - (2f64.sqrt() - 1.0).powi(2)).abs() < 1e-12);
        assert!((im.map.big_kp / im.map.big_k - 2.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_images_increase_counterclockwise() {
        let map = RectangleMap::new(2.0, 1.0).unwrap();
        let mut prev = f64::NEG_INFINITY;
        // walk counterclockwise from the top midpoint's right neighbour
        let mut pts = vec![];
        for t in 1..20 {
            pts.push(Complex64::new(1.0 - t as f64 * 0.05, 1.0));
        }
        for t in 0..=20 {
            pts.push(Complex64::new(0.0, 1.0 - t as f64 * 0.05));
        }
        for t in 1..=40 {
            pts.push(Complex64::new(t as f64 * 0.05, 0.0));
        }
        for t in 1..=20 {
            pts.push(Complex64::new(2.0, t as f64 * 0.05));
        }
        for t in 1..20 {
            pts.push(Complex64::new(2.0 - t as f64 * 0.05, 1.0));
        }
        let images: Vec<f64> = pts.iter().map(|&z| map.boundary_image(z)).collect();
        // from just left of the top midpoint the images run from −∞ up to +∞
        for v in images {
            assert!(v > prev, "{v} after {prev}");
            prev = v;
        }
    }

    #[test]
    fn agm_depth_doubling_is_stable() {
        let a = RectangleMap::new(1.5, 1.0).unwrap().with_iterations(Some(5));
        let b = a.with_iterations(Some(10));
        for x in [0.1, 0.4, 0.75, 1.2] {
            let z = Complex64::new(x, 0.0);
            assert!((a.boundary_image(z) - b.boundary_image(z)).abs() <= 1e-12);
            let w = Complex64::new(x, 0.3);
            assert!((a.image(w) - b.image(w)).norm() <= 1e-12);
        }
    }

    #[test]
    fn interior_map_is_continuous_to_boundary() {
        let map = RectangleMap::new(1.0, 1.0).unwrap();
        for z in [Complex64::new(0.3, 0.0), Complex64::new(1.0, 0.4), Complex64::new(0.7, 1.0), Complex64::new(0.0, 0.6)] {
            let inward = z + (Complex64::new(0.5, 0.5) - z) * 1e-7;
            let w = map.image(inward);
            assert!(w.im > 0.0);
            assert!((w.re - map.boundary_image(z)).abs() < 1e-5, "{z} {w}");
        }
    }

    #[test]
    fn midpoint_square_matches_frozen_f2() {
        let lat = square(2, &[0.5, 1.5, 2.5, 3.5], 0.125);
        let im = lat.marked_images().unwrap();
        let lambda = (im.ys[1] - im.ys[0]) / (im.y_next - im.ys[0]);
        assert!((lambda - 0.5).abs() < 1e-10);
        let f = partition::limit_probability(&im.ys, im.y_next, 3.0).unwrap().value;
        assert!((f - 0.11346824434573408).abs() < 1e-6, "{f}");
    }

    #[test]
    fn aspect_guard() {
        assert!(matches!(RectangleMap::new(11.0, 1.0), Err(IsingError::Aspect(_))));
        assert!(RectangleMap::new(10.0, 1.0).is_ok());
    }
}
