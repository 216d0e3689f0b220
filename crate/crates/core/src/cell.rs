//! Finite-horizon and discounted stationary cell problems.
//!
//! Index convention for the finite-horizon problem: a control path
//! `x = γ(0), γ(1), ..., γ(k)` pays running costs `λ(γ(i), α_i) = p·α_i` for
//! `i = 0..k-1` and the terminal cost `φ(γ(k))`, subject to the elapsed time
//! `Σ_{i<k} τ(γ(i), α_i) <= t`. This is the convention under which the
//! finite-horizon DPP holds; with the sum running to `i = k` the last step
//! would have no endpoint.
//!
//! Because `λ = p·α` telescopes, `μ(x, t) = min_{y ∈ R(x,t)} [p·(y - x) + φ(y)]`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpp::{check_reach_box, dijkstra, reach_radius, Grid, LatticeBox, Stop};
use crate::medium::{Direction, Environment};
use crate::varform::hamiltonian_at;

pub fn sup_norm(p: &[f64]) -> f64 {
    p.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn check_momentum(env: &Environment, p: &[f64]) -> Result<()> {
    if p.len() != env.dim() {
        return Err(Error::invalid(format!(
            "momentum has {} entries, medium dimension is {}",
            p.len(),
            env.dim()
        )));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("momentum entries must be finite"));
    }
    Ok(())
}

fn dot_offset(p: &[f64], y: &[i64], x: &[i64]) -> f64 {
    p.iter().zip(y.iter().zip(x)).map(|(pi, (yi, xi))| pi * (yi - xi) as f64).sum()
}

/// Terminal cost φ with a declared ℓ¹ Lipschitz constant.
#[derive(Clone)]
pub struct TerminalCost {
    eval: Arc<dyn Fn(&[i64]) -> f64 + Send + Sync>,
    pub lip: f64,
}

impl TerminalCost {
    pub fn new(lip: f64, f: impl Fn(&[i64]) -> f64 + Send + Sync + 'static) -> Self {
        TerminalCost { eval: Arc::new(f), lip }
    }

    pub fn zero() -> Self {
        TerminalCost::new(0.0, |_| 0.0)
    }

    #[inline]
    pub fn eval(&self, x: &[i64]) -> f64 {
        (self.eval)(x)
    }
}

impl fmt::Debug for TerminalCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TerminalCost").field("lip", &self.lip).finish_non_exhaustive()
    }
}

fn check_terminal(phi: &TerminalCost) -> Result<()> {
    if !(phi.lip.is_finite() && phi.lip >= 0.0) {
        return Err(Error::invalid("terminal cost needs a finite Lipschitz constant"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteHorizonValue {
    pub x: Vec<i64>,
    pub t: f64,
    pub p: Vec<f64>,
    pub value: f64,
    /// |R(x, t)|
    pub reachable: usize,
    pub box_radius: u64,
}

pub fn finite_horizon(
    env: &Environment,
    p: &[f64],
    x: &[i64],
    t: f64,
    phi: &TerminalCost,
) -> Result<FiniteHorizonValue> {
    check_momentum(env, p)?;
    check_terminal(phi)?;
    if x.len() != env.dim() {
        return Err(Error::invalid("start point has the wrong dimension"));
    }
    let bx = LatticeBox::new(x.to_vec(), reach_radius(t.max(0.0), env.bounds()))?;
    check_reach_box(x, t, &bx, env.bounds())?;
    let s = dijkstra(env, x, Grid::new(&bx)?, Stop::AfterTime(t), None)?;
    let mut y = vec![0i64; x.len()];
    let mut value = f64::INFINITY;
    let mut reachable = 0;
    for (i, &tt) in s.dist.iter().enumerate() {
        if tt <= t {
            s.grid.coords(i, &mut y);
            value = value.min(dot_offset(p, &y, x) + phi.eval(&y));
            reachable += 1;
        }
    }
    Ok(FiniteHorizonValue {
        x: x.to_vec(),
        t,
        p: p.to_vec(),
        value,
        reachable,
        box_radius: bx.radius,
    })
}

/// μ(x, t) for running cost `p·α` and terminal cost φ.
pub fn mu(env: &Environment, p: &[f64], x: &[i64], t: f64, phi: &TerminalCost) -> Result<f64> {
    Ok(finite_horizon(env, p, x, t, phi)?.value)
}

/// μ_K(x, t): paths may only move from sites of `Z_K = {y : |y|₂ <= K}`;
/// a path that leaves `Z_K` is frozen at its first site outside.
pub fn mu_truncated(env: &Environment, p: &[f64], x: &[i64], t: f64, phi: &TerminalCost, k: f64) -> Result<f64> {
    check_momentum(env, p)?;
    check_terminal(phi)?;
    if !(k >= 0.0) {
        return Err(Error::invalid("truncation radius must be nonnegative"));
    }
    let k2 = k * k;
    let inside = move |y: &[i64]| y.iter().map(|v| (v * v) as f64).sum::<f64>() <= k2;
    if !inside(x) {
        return Ok(phi.eval(x));
    }
    let bx = LatticeBox::new(x.to_vec(), reach_radius(t.max(0.0), env.bounds()))?;
    check_reach_box(x, t, &bx, env.bounds())?;
    let s = dijkstra(env, x, Grid::new(&bx)?, Stop::AfterTime(t), Some(&inside))?;
    let mut y = vec![0i64; x.len()];
    let mut value = f64::INFINITY;
    for (i, &tt) in s.dist.iter().enumerate() {
        if tt <= t {
            s.grid.coords(i, &mut y);
            value = value.min(dot_offset(p, &y, x) + phi.eval(&y));
        }
    }
    Ok(value)
}

/// Sites within this ℓ¹ distance of the origin count as interior for the
/// stationary problem; the box is enlarged so their values are accurate.
pub const DEFAULT_INTERIOR: u64 = 4;

const MAX_SWEEPS: usize = 1_000_000;

/// Discounted stationary value ν_ε on an ℓ¹ box around the origin.
#[derive(Clone, Debug)]
pub struct StationaryValue {
    pub eps: f64,
    pub p: Vec<f64>,
    pub tol: f64,
    pub interior: u64,
    /// Value imposed on the outer shell of the box.
    pub boundary_value: f64,
    pub sweeps: usize,
    /// Sup-norm change of the last sweep.
    pub last_change: f64,
    grid: Grid,
    values: Vec<f64>,
}

/// Analytic range of ν_ε: the DPP map sends
/// `[-|p|/(1-e^{-εa}), -|p|/(1-e^{-εb})]` into itself.
pub fn invariant_interval(p: &[f64], eps: f64, a: f64, b: f64) -> (f64, f64) {
    let q = sup_norm(p);
    (-q / -(-eps * a).exp_m1(), -q / -(-eps * b).exp_m1())
}

impl StationaryValue {
    pub fn bx(&self) -> &LatticeBox {
        &self.grid.bx
    }

    pub fn radius(&self) -> u64 {
        self.grid.radius()
    }

    pub fn get(&self, x: &[i64]) -> Option<f64> {
        self.grid.index(x).map(|i| self.values[i])
    }

    /// All sites with `|y|₁ <= depth`, in lexicographic order.
    pub fn sites_within(&self, depth: u64) -> Vec<Vec<i64>> {
        let d = self.grid.dim();
        let mut y = vec![0i64; d];
        (0..self.grid.len())
            .filter_map(|i| {
                self.grid.coords(i, &mut y);
                (crate::fpp::l1_norm(&y) <= depth).then(|| y.clone())
            })
            .collect()
    }

    /// (lower, upper) = (-|p|/(εa), -|p|/(εb)).
    pub fn stated_bounds(&self, env: &Environment) -> (f64, f64) {
        let q = sup_norm(&self.p);
        let w = env.bounds();
        (-q / (self.eps * w.a), -q / (self.eps * w.b))
    }

    /// Interior sites whose value leaves the stated bounds by more than
    /// `slack`.
    pub fn bound_violations(&self, env: &Environment, slack: f64) -> Vec<Vec<i64>> {
        let (lo, hi) = self.stated_bounds(env);
        self.sites_within(self.interior)
            .into_iter()
            .filter(|y| {
                let v = self.get(y).unwrap();
                v < lo - slack || v > hi + slack
            })
            .collect()
    }

    /// Largest `|ν(x+α) - ν(x)|` over edges with both ends off the boundary
    /// shell, and the number of edges exceeding `((a+b)/a)|p|_∞ + slack`.
    pub fn lipschitz_check(&self, env: &Environment, slack: f64) -> (f64, usize) {
        let w = env.bounds();
        let limit = (w.a + w.b) / w.a * sup_norm(&self.p);
        let inner = self.radius() - 1;
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for y in self.sites_within(inner) {
            for alpha in Direction::all(self.grid.dim()) {
                if alpha.sign < 0 {
                    continue;
                }
                let z = alpha.step(&y);
                if crate::fpp::l1_norm(&z) > inner {
                    continue;
                }
                let diff = (self.get(&z).unwrap() - self.get(&y).unwrap()).abs();
                worst = worst.max(diff);
                if diff > limit + slack {
                    count += 1;
                }
            }
        }
        (worst, count)
    }

    /// Residual of the DPP at every off-boundary site.
    pub fn dpp_defect(&self, env: &Environment) -> f64 {
        let mut worst: f64 = 0.0;
        for y in self.sites_within(self.radius() - 1) {
            let best = Direction::all(env.dim())
                .into_iter()
                .map(|alpha| {
                    alpha.dot(&self.p) + (-self.eps * env.weight(&y, alpha)).exp() * self.get(&alpha.step(&y)).unwrap()
                })
                .fold(f64::INFINITY, f64::min);
            worst = worst.max((best - self.get(&y).unwrap()).abs());
        }
        worst
    }
}

/// Box radius for ν_ε: boundary errors of size `range` decay by `e^{-εa}` per
/// step, so `⌈ln(range/tol)/(εa)⌉` steps bring them below `tol`.
pub fn nu_radius(p: &[f64], eps: f64, tol: f64, a: f64, b: f64) -> u64 {
    let (lo, hi) = invariant_interval(p, eps, a, b);
    let range = hi - lo;
    if range <= tol {
        return 2;
    }
    ((range / tol).ln() / (eps * a)).ceil().max(2.0) as u64
}

pub fn nu(env: &Environment, p: &[f64], eps: f64, tol: f64) -> Result<StationaryValue> {
    nu_with_interior(env, p, eps, tol, DEFAULT_INTERIOR)
}

/// Gauss-Seidel value iteration for `ν(x) = min_α [p·α + e^{-ετ(x,α)} ν(x+α)]`.
pub fn nu_with_interior(env: &Environment, p: &[f64], eps: f64, tol: f64, interior: u64) -> Result<StationaryValue> {
    check_momentum(env, p)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("discount must be positive, got {eps}")));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let w = env.bounds();
    let d = env.dim();
    let (lo, hi) = invariant_interval(p, eps, w.a, w.b);
    let boundary_value = 0.5 * (lo + hi);
    let radius = nu_radius(p, eps, tol, w.a, w.b) + interior;
    let grid = Grid::new(&LatticeBox::around_origin(d, radius)?)?;
    let dirs = Direction::all(d);
    let costs: Vec<f64> = dirs.iter().map(|a| a.dot(p)).collect();

    let mut values = vec![f64::NAN; grid.len()];
    let mut active: Vec<u32> = Vec::new();
    let mut coords: Vec<i64> = Vec::new();
    let mut y = vec![0i64; d];
    for i in 0..grid.len() {
        grid.coords(i, &mut y);
        let depth = crate::fpp::l1_norm(&y);
        if depth == radius {
            values[i] = boundary_value;
        } else if depth < radius {
            values[i] = hi;
            active.push(i as u32);
            coords.extend_from_slice(&y);
        }
    }
    let nd = 2 * d;
    let mut nb = Vec::with_capacity(active.len() * nd);
    let mut disc = Vec::with_capacity(active.len() * nd);
    for (k, &i) in active.iter().enumerate() {
        let x = &coords[k * d..(k + 1) * d];
        for alpha in &dirs {
            let s = grid.stride(alpha.axis);
            nb.push(if alpha.sign > 0 { i as usize + s } else { i as usize - s } as u32);
            disc.push((-eps * env.weight(x, *alpha)).exp());
        }
    }
    // one sweep order per corner of the cube
    let orders: Vec<Vec<u32>> = (0..1usize << d)
        .map(|mask| {
            let mut ord: Vec<u32> = (0..active.len() as u32).collect();
            ord.sort_by_key(|&k| {
                let x = &coords[k as usize * d..(k as usize + 1) * d];
                let mut key = [0i64; crate::medium::MAX_DIM];
                for axis in 0..d {
                    key[axis] = if mask >> axis & 1 == 1 { -x[axis] } else { x[axis] };
                }
                key
            });
            ord
        })
        .collect();
    drop(coords);

    let threshold = tol * -(-eps * w.a).exp_m1();
    let mut sweeps = 0;
    let mut change = f64::INFINITY;
    while change >= threshold {
        if sweeps >= MAX_SWEEPS {
            return Err(Error::NonConvergence {
                iterations: sweeps,
                detail: format!("value iteration change {change} above {threshold}"),
            });
        }
        change = 0.0;
        for &k in &orders[sweeps % orders.len()] {
            let k = k as usize;
            let mut best = f64::INFINITY;
            for j in 0..nd {
                let v = costs[j] + disc[k * nd + j] * values[nb[k * nd + j] as usize];
                best = best.min(v);
            }
            let i = active[k] as usize;
            change = change.max((best - values[i]).abs());
            values[i] = best;
        }
        sweeps += 1;
    }
    Ok(StationaryValue {
        eps,
        p: p.to_vec(),
        tol,
        interior,
        boundary_value,
        sweeps,
        last_change: change,
        grid,
        values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HjbResidual {
    /// max over interior x of |ε ν(x) + ℋ(ν, p, x)|
    pub max: f64,
    /// `max / ε`, the empirical constant
    pub per_eps: f64,
    pub sites: usize,
}

pub fn hjb_residual(nu: &StationaryValue, env: &Environment, p: &[f64]) -> HjbResidual {
    let sites = nu.sites_within(nu.interior.min(nu.radius() - 1));
    let f = |y: &[i64]| nu.get(y).unwrap_or(f64::NAN);
    let max = sites
        .iter()
        .map(|y| (nu.eps * f(y) + hamiltonian_at(env, p, y, &f)).abs())
        .fold(0.0, f64::max);
    HjbResidual {
        max,
        per_eps: max / nu.eps,
        sites: sites.len(),
    }
}

/// How `check_comparison` draws its probes: `x` uniform in `[-x_radius, x_radius]^d`,
/// `t` uniform in `[0, t_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonProbes {
    pub samples: usize,
    pub x_radius: i64,
    pub t_max: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub samples: usize,
    /// sup and inf of ℋ(φ, p, ·) over the box holding every probed R(x, t)
    pub sup_h: f64,
    pub inf_h: f64,
    pub h_box_radius: u64,
    /// μ(x,t) >= φ(x) - t sup ℋ
    pub lower_violations: usize,
    /// μ(x,t) <= φ(x) - t inf ℋ
    pub upper_violations: usize,
    /// μ(x,t) <= φ(x) - t inf ℋ + b max(inf ℋ, 0)
    pub discrete_upper_violations: usize,
    pub worst_lower: f64,
    pub worst_upper: f64,
    pub worst_discrete_upper: f64,
    pub first_violation: Option<String>,
}

pub const COMPARISON_SLACK: f64 = 1e-9;

/// Probes both sides of the comparison principle at random (x, t).
///
/// The upper side is checked twice: as stated, with `-t inf ℋ`, and in the
/// form that holds for discrete time, where the last step of a path can
/// overshoot the horizon by at most `b`.
pub fn check_comparison(
    env: &Environment,
    p: &[f64],
    phi: &TerminalCost,
    probes: &ComparisonProbes,
) -> Result<ComparisonReport> {
    check_momentum(env, p)?;
    check_terminal(phi)?;
    if probes.x_radius < 0 || !(probes.t_max >= 0.0) {
        return Err(Error::invalid("probe ranges must be nonnegative"));
    }
    let d = env.dim();
    let w = env.bounds();
    let h_radius = probes.x_radius as u64 * d as u64 + reach_radius(probes.t_max, w);
    let grid = Grid::new(&LatticeBox::around_origin(d, h_radius)?)?;
    let f = |y: &[i64]| phi.eval(y);
    let mut y = vec![0i64; d];
    let (mut sup_h, mut inf_h) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..grid.len() {
        grid.coords(i, &mut y);
        if crate::fpp::l1_norm(&y) <= h_radius {
            let h = hamiltonian_at(env, p, &y, &f);
            sup_h = sup_h.max(h);
            inf_h = inf_h.min(h);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(probes.seed);
    let mut report = ComparisonReport {
        samples: probes.samples,
        sup_h,
        inf_h,
        h_box_radius: h_radius,
        lower_violations: 0,
        upper_violations: 0,
        discrete_upper_violations: 0,
        worst_lower: f64::NEG_INFINITY,
        worst_upper: f64::NEG_INFINITY,
        worst_discrete_upper: f64::NEG_INFINITY,
        first_violation: None,
    };
    for _ in 0..probes.samples {
        let x: Vec<i64> = (0..d).map(|_| rng.random_range(-probes.x_radius..=probes.x_radius)).collect();
        let t = rng.random::<f64>() * probes.t_max;
        let m = mu(env, p, &x, t, phi)?;
        let fx = phi.eval(&x);
        let lower = fx - t * sup_h - m;
        let upper = m - (fx - t * inf_h);
        let discrete = m - (fx - t * inf_h + w.b * inf_h.max(0.0));
        report.worst_lower = report.worst_lower.max(lower);
        report.worst_upper = report.worst_upper.max(upper);
        report.worst_discrete_upper = report.worst_discrete_upper.max(discrete);
        let mut note = |name: &str, gap: f64, count: &mut usize| {
            if gap > COMPARISON_SLACK {
                *count += 1;
                if report.first_violation.is_none() {
                    report.first_violation = Some(format!("{name} at x={x:?} t={t}: mu={m}, excess {gap:e}"));
                }
            }
        };
        let (mut lv, mut uv, mut dv) = (0, 0, 0);
        note("lower bound", lower, &mut lv);
        note("upper bound", upper, &mut uv);
        note("discrete upper bound", discrete, &mut dv);
        report.lower_violations += lv;
        report.upper_violations += uv;
        report.discrete_upper_violations += dv;
    }
    Ok(report)
}
