//! First-passage times on finite boxes.
//!
//! Passage times follow directed edges `(u, u + α)` with cost `τ(u, α)` and
//! are computed by label-setting search. Heap ties are broken by the site's
//! lexicographic order so the settle order is reproducible.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::{Direction, Environment, WeightBounds};
use crate::rng::substream;

/// Default cap on the number of sites in a box's bounding cube.
pub const DEFAULT_MAX_SITES: usize = 1 << 25;

/// Site budget, overridable through `FPP_MAX_SITES`.
pub fn max_sites() -> usize {
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| {
        std::env::var("FPP_MAX_SITES")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(DEFAULT_MAX_SITES)
    })
}

/// The ℓ¹ ball `{y : |y - center|₁ <= radius}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    pub center: Vec<i64>,
    pub radius: u64,
}

impl LatticeBox {
    pub fn new(center: Vec<i64>, radius: u64) -> Result<Self> {
        if radius < 1 {
            return Err(Error::invalid("box radius must be at least 1"));
        }
        Ok(LatticeBox { center, radius })
    }

    pub fn around_origin(dim: usize, radius: u64) -> Result<Self> {
        LatticeBox::new(vec![0; dim], radius)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, y: &[i64]) -> bool {
        l1_dist(y, &self.center) <= self.radius
    }
}

pub fn l1_norm(x: &[i64]) -> u64 {
    x.iter().map(|v| v.unsigned_abs()).sum()
}

pub fn l1_dist(x: &[i64], y: &[i64]) -> u64 {
    x.iter().zip(y).map(|(a, b)| (a - b).unsigned_abs()).sum()
}

/// Dense storage for an ℓ¹ box inside its bounding cube. Linear index order
/// equals lexicographic order of coordinates.
#[derive(Clone, Debug)]
pub(crate) struct Grid {
    pub bx: LatticeBox,
    lo: Vec<i64>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(bx: &LatticeBox) -> Result<Grid> {
        let d = bx.dim();
        if d == 0 {
            return Err(Error::invalid("box has dimension 0"));
        }
        let side = 2 * bx.radius as u128 + 1;
        let total = side.checked_pow(d as u32).unwrap_or(u128::MAX);
        let budget = max_sites();
        if total > budget as u128 {
            return Err(Error::Capacity { sites: total, budget });
        }
        let side = side as usize;
        let mut strides = vec![1usize; d];
        for axis in (0..d - 1).rev() {
            strides[axis] = strides[axis + 1] * side;
        }
        Ok(Grid {
            lo: bx.center.iter().map(|c| c - bx.radius as i64).collect(),
            bx: bx.clone(),
            strides,
            len: total as usize,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn dim(&self) -> usize {
        self.strides.len()
    }

    pub fn radius(&self) -> u64 {
        self.bx.radius
    }

    pub fn index(&self, y: &[i64]) -> Option<usize> {
        if y.len() != self.dim() || !self.bx.contains(y) {
            return None;
        }
        Some(self.index_unchecked(y))
    }

    #[inline]
    pub fn index_unchecked(&self, y: &[i64]) -> usize {
        y.iter()
            .zip(&self.lo)
            .zip(&self.strides)
            .map(|((v, l), s)| (v - l) as usize * s)
            .sum()
    }

    #[inline]
    pub fn coords(&self, mut idx: usize, out: &mut [i64]) {
        for axis in 0..self.dim() {
            let s = self.strides[axis];
            out[axis] = self.lo[axis] + (idx / s) as i64;
            idx %= s;
        }
    }

    /// ℓ¹ distance of the site `idx` from the box center.
    #[inline]
    pub fn depth(&self, coords: &[i64]) -> u64 {
        l1_dist(coords, &self.bx.center)
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

pub(crate) enum Stop<'a> {
    Exhaust,
    /// Do not settle sites with key above the threshold.
    AfterTime(f64),
    /// Stop once every listed index is settled.
    Targets(&'a [usize]),
}

/// Settled times; unsettled sites hold `+inf`.
pub(crate) struct Search {
    pub grid: Grid,
    pub dist: Vec<f64>,
}

pub(crate) fn dijkstra(
    env: &Environment,
    source: &[i64],
    grid: Grid,
    stop: Stop<'_>,
    expand: Option<&dyn Fn(&[i64]) -> bool>,
) -> Result<Search> {
    let d = grid.dim();
    if env.dim() != d || source.len() != d {
        return Err(Error::invalid("dimension mismatch between medium, source and box"));
    }
    let Some(src) = grid.index(source) else {
        return Err(Error::invalid("source lies outside the box"));
    };
    let radius = grid.radius();
    let dirs = Direction::all(d);
    let mut dist = vec![f64::INFINITY; grid.len()];
    let mut settled = vec![false; grid.len()];
    let mut heap = BinaryHeap::new();
    let mut remaining = match stop {
        Stop::Targets(t) => {
            let mut t = t.to_vec();
            t.sort_unstable();
            t.dedup();
            t.len()
        }
        _ => 0,
    };
    let is_target = |i: usize| matches!(stop, Stop::Targets(t) if t.contains(&i));
    dist[src] = 0.0;
    heap.push(Reverse(Key(0.0, src)));
    let mut x = vec![0i64; d];
    while let Some(Reverse(Key(t, i))) = heap.pop() {
        if settled[i] {
            continue;
        }
        if let Stop::AfterTime(limit) = stop {
            if t > limit {
                break;
            }
        }
        settled[i] = true;
        if let Stop::Targets(_) = stop {
            if is_target(i) {
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
            }
        }
        grid.coords(i, &mut x);
        if let Some(f) = expand {
            if !f(&x) {
                continue;
            }
        }
        let depth = grid.depth(&x);
        for &alpha in &dirs {
            let a = alpha.axis;
            let off = x[a] - grid.bx.center[a];
            let outward = (off > 0 && alpha.sign > 0) || (off < 0 && alpha.sign < 0) || off == 0;
            if outward && depth == radius {
                continue;
            }
            let j = if alpha.sign > 0 { i + grid.stride(a) } else { i - grid.stride(a) };
            if settled[j] {
                continue;
            }
            let cand = t + env.weight(&x, alpha);
            if cand < dist[j] {
                dist[j] = cand;
                heap.push(Reverse(Key(cand, j)));
            }
        }
    }
    for (v, s) in dist.iter_mut().zip(&settled) {
        if !s {
            *v = f64::INFINITY;
        }
    }
    Ok(Search { grid, dist })
}

/// First-passage times T(source, ·) restricted to a box.
#[derive(Clone, Debug)]
pub struct PassageTimeField {
    pub source: Vec<i64>,
    grid: Grid,
    dist: Vec<f64>,
}

impl PassageTimeField {
    pub fn bx(&self) -> &LatticeBox {
        &self.grid.bx
    }

    /// `T(source, y)`, or `None` when `y` is outside the box or was not
    /// settled.
    pub fn get(&self, y: &[i64]) -> Option<f64> {
        let v = self.dist[self.grid.index(y)?];
        v.is_finite().then_some(v)
    }

    /// All settled sites in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        let d = self.grid.dim();
        self.dist.iter().enumerate().filter(|(_, v)| v.is_finite()).map(move |(i, &v)| {
            let mut y = vec![0; d];
            self.grid.coords(i, &mut y);
            (y, v)
        })
    }

    pub fn len(&self) -> usize {
        self.dist.iter().filter(|v| v.is_finite()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Exact passage times from `source` over every site of `bx`.
pub fn passage_times(env: &Environment, source: &[i64], bx: &LatticeBox) -> Result<PassageTimeField> {
    let grid = Grid::new(bx)?;
    let s = dijkstra(env, source, grid, Stop::Exhaust, None)?;
    Ok(PassageTimeField {
        source: source.to_vec(),
        grid: s.grid,
        dist: s.dist,
    })
}

/// `⌈(b/a)·|target|₁⌉ + 1`: a box of this radius around the origin contains
/// every path that can beat the straight staircase to `target`.
pub fn safe_radius(target: &[i64], bounds: WeightBounds) -> u64 {
    ((bounds.b / bounds.a) * l1_norm(target) as f64).ceil() as u64 + 1
}

/// Radius needed around `source` to contain R(source, t).
pub fn reach_radius(t: f64, bounds: WeightBounds) -> u64 {
    (t / bounds.a).ceil() as u64 + 1
}

/// R(x, t) = {y : T(x, y) <= t}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachableSet {
    pub source: Vec<i64>,
    pub t: f64,
    pub members: BTreeSet<Vec<i64>>,
}

impl ReachableSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, y: &[i64]) -> bool {
        self.members.contains(y)
    }
}

pub(crate) fn check_reach_box(source: &[i64], t: f64, bx: &LatticeBox, bounds: WeightBounds) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid(format!("time horizon must be finite and nonnegative, got {t}")));
    }
    let required = l1_dist(source, &bx.center) + reach_radius(t, bounds);
    if bx.radius < required {
        return Err(Error::BoxTooSmall {
            radius: bx.radius,
            required,
        });
    }
    Ok(())
}

pub fn reachable_set(env: &Environment, source: &[i64], t: f64, bx: &LatticeBox) -> Result<ReachableSet> {
    check_reach_box(source, t, bx, env.bounds())?;
    let s = dijkstra(env, source, Grid::new(bx)?, Stop::AfterTime(t), None)?;
    let d = s.grid.dim();
    let members = s
        .dist
        .iter()
        .enumerate()
        .filter(|(_, v)| **v <= t)
        .map(|(i, _)| {
            let mut y = vec![0; d];
            s.grid.coords(i, &mut y);
            y
        })
        .collect();
    Ok(ReachableSet {
        source: source.to_vec(),
        t,
        members,
    })
}

/// Nearest lattice point to `n·x`, halves rounded toward the smaller
/// coordinate.
pub fn lattice_point(x: &[f64], n: u64) -> Vec<i64> {
    x.iter().map(|v| (v * n as f64 - 0.5).ceil() as i64).collect()
}

/// Monte Carlo estimate of the time constant m(x).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeConstantEstimate {
    pub direction: Vec<f64>,
    pub n: u64,
    pub target: Vec<i64>,
    /// Mean of `T(0, [nx]) / n` over replicas.
    pub estimate: f64,
    pub stderr: f64,
    /// Per-replica passage times `T(0, [nx])`.
    pub samples: Vec<f64>,
    pub box_radius: u64,
    /// Set when the caller overrode the default box and it is smaller than
    /// the safe radius for this target.
    pub warning: Option<String>,
}

/// Sample mean and standard error (n - 1 denominator) of `xs`.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Environment of replica `r`; replicas are independent realizations of the
/// same law.
pub fn replica(env: &Environment, r: usize) -> Environment {
    env.reseeded(substream(env.seed(), "replica", r as u64))
}

pub fn time_constant(env: &Environment, x: &[f64], n: u64, replicas: usize) -> Result<TimeConstantEstimate> {
    let mut v = time_constants(env, &[x.to_vec()], n, replicas, None)?;
    Ok(v.remove(0))
}

/// Time constants for several directions, sharing one search per replica.
///
/// `radius` overrides the default box (the largest safe radius among the
/// targets).
pub fn time_constants(
    env: &Environment,
    directions: &[Vec<f64>],
    n: u64,
    replicas: usize,
    radius: Option<u64>,
) -> Result<Vec<TimeConstantEstimate>> {
    if n < 1 || replicas < 1 {
        return Err(Error::invalid("time constant needs n >= 1 and replicas >= 1"));
    }
    let d = env.dim();
    if directions.iter().any(|x| x.len() != d || x.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid(format!("directions must be finite {d}-vectors")));
    }
    let targets: Vec<Vec<i64>> = directions.iter().map(|x| lattice_point(x, n)).collect();
    let safe: Vec<u64> = targets.iter().map(|t| safe_radius(t, env.bounds())).collect();
    let default = safe.iter().copied().max().unwrap_or(1);
    let radius = radius.unwrap_or(default);
    let bx = LatticeBox::around_origin(d, radius)?;
    for t in &targets {
        if !bx.contains(t) {
            return Err(Error::BoxTooSmall {
                radius,
                required: l1_norm(t),
            });
        }
    }
    let grid = Grid::new(&bx)?;
    let idx: Vec<usize> = targets.iter().map(|t| grid.index_unchecked(t)).collect();
    let origin = vec![0i64; d];
    let per_replica: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let env_r = replica(env, r);
            let s = dijkstra(&env_r, &origin, grid.clone(), Stop::Targets(&idx), None)?;
            Ok(idx.iter().map(|&i| s.dist[i]).collect())
        })
        .collect::<Result<_>>()?;
    Ok(directions
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let samples: Vec<f64> = per_replica.iter().map(|row| row[k]).collect();
            let scaled: Vec<f64> = samples.iter().map(|t| t / n as f64).collect();
            let (estimate, stderr) = mean_stderr(&scaled);
            TimeConstantEstimate {
                direction: x.clone(),
                n,
                target: targets[k].clone(),
                estimate,
                stderr,
                samples,
                box_radius: radius,
                warning: (radius < safe[k])
                    .then(|| format!("box radius {radius} is below the safe radius {}", safe[k])),
            }
        })
        .collect())
}
