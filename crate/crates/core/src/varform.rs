//! Discrete Hamiltonian, variational bounds and estimators of H̄(p).

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{check_momentum, hjb_residual, mu, nu, sup_norm, TerminalCost};
use crate::error::{Error, Result};
use crate::fpp::{mean_stderr, replica, time_constants, Grid, LatticeBox};
use crate::medium::{Direction, Environment, WeightBounds};

/// ℋ(φ, p, x) = max_α (-(φ(x+α) - φ(x)) - p·α) / τ(x, α)
pub fn hamiltonian_at<F>(env: &Environment, p: &[f64], x: &[i64], phi: &F) -> f64
where
    F: Fn(&[i64]) -> f64 + ?Sized,
{
    let here = phi(x);
    let mut y = x.to_vec();
    let mut best = f64::NEG_INFINITY;
    for alpha in Direction::all(env.dim()) {
        y[alpha.axis] += i64::from(alpha.sign);
        let h = (-(phi(&y) - here) - alpha.dot(p)) / env.weight(x, alpha);
        y[alpha.axis] -= i64::from(alpha.sign);
        best = best.max(h);
    }
    best
}

/// Candidate φ for the variational formula. The mean-zero-gradient flag is
/// carried as metadata only.
#[derive(Clone)]
pub struct GradientCandidate {
    eval: Arc<dyn Fn(&[i64]) -> f64 + Send + Sync>,
    pub mean_zero_gradient: bool,
}

impl GradientCandidate {
    pub fn new(mean_zero_gradient: bool, f: impl Fn(&[i64]) -> f64 + Send + Sync + 'static) -> Self {
        GradientCandidate {
            eval: Arc::new(f),
            mean_zero_gradient,
        }
    }

    pub fn zero() -> Self {
        GradientCandidate::new(true, |_| 0.0)
    }

    #[inline]
    pub fn eval(&self, x: &[i64]) -> f64 {
        (self.eval)(x)
    }
}

impl fmt::Debug for GradientCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GradientCandidate")
            .field("mean_zero_gradient", &self.mean_zero_gradient)
            .finish_non_exhaustive()
    }
}

pub fn discrete_hamiltonian(phi: &GradientCandidate, p: &[f64], x: &[i64], env: &Environment) -> f64 {
    hamiltonian_at(env, p, x, &|y: &[i64]| phi.eval(y))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalBounds {
    pub lower: f64,
    pub upper: f64,
    pub argmin: Vec<i64>,
    pub argmax: Vec<i64>,
    pub sites: usize,
    pub box_radius: u64,
}

impl VariationalBounds {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

/// (min, max) of ℋ(φ, p, ·) over the box.
pub fn variational_bounds(
    phi: &GradientCandidate,
    p: &[f64],
    env: &Environment,
    bx: &LatticeBox,
) -> Result<VariationalBounds> {
    check_momentum(env, p)?;
    if bx.dim() != env.dim() {
        return Err(Error::invalid("box dimension differs from the medium's"));
    }
    let grid = Grid::new(bx)?;
    let mut y = vec![0i64; bx.dim()];
    let mut out = VariationalBounds {
        lower: f64::INFINITY,
        upper: f64::NEG_INFINITY,
        argmin: vec![],
        argmax: vec![],
        sites: 0,
        box_radius: bx.radius,
    };
    for i in 0..grid.len() {
        grid.coords(i, &mut y);
        if !bx.contains(&y) {
            continue;
        }
        let h = discrete_hamiltonian(phi, p, &y, env);
        out.sites += 1;
        if h < out.lower {
            out.lower = h;
            out.argmin = y.clone();
        }
        if h > out.upper {
            out.upper = h;
            out.argmax = y.clone();
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HbarMethod {
    MuSlope,
    NuDiscount,
    DualNorm,
}

/// Solver details attached to an estimate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    /// Heuristic finite-horizon bias bracket `2|p|_∞/(a t)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_allowance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_radius: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hjb_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub argmax_direction: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub samples: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveHamiltonianEstimate {
    pub p: Vec<f64>,
    pub method: HbarMethod,
    pub value: f64,
    pub uncertainty: f64,
    pub meta: EstimateMeta,
}

impl EffectiveHamiltonianEstimate {
    /// Whether `|p|/b - u <= value <= |p|/a + u`.
    pub fn within_bounds(&self, bounds: WeightBounds) -> bool {
        let q = sup_norm(&self.p);
        q / bounds.b - self.uncertainty <= self.value && self.value <= q / bounds.a + self.uncertainty
    }
}

/// Mean over replicas of `-μ(0, t; φ ≡ 0)/t`.
pub fn hbar_mu_slope(env: &Environment, p: &[f64], t: f64, replicas: usize) -> Result<EffectiveHamiltonianEstimate> {
    check_momentum(env, p)?;
    let w = env.bounds();
    if !(t >= 10.0 * w.b && t.is_finite()) {
        return Err(Error::invalid(format!("horizon t={t} must be at least 10b = {}", 10.0 * w.b)));
    }
    if replicas < 1 {
        return Err(Error::invalid("need at least one replica"));
    }
    let origin = vec![0i64; env.dim()];
    let zero = TerminalCost::zero();
    let samples: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| Ok(-mu(&replica(env, r), p, &origin, t, &zero)? / t))
        .collect::<Result<_>>()?;
    let (value, stderr) = mean_stderr(&samples);
    let bias = 2.0 * sup_norm(p) / w.a / t;
    Ok(EffectiveHamiltonianEstimate {
        p: p.to_vec(),
        method: HbarMethod::MuSlope,
        value,
        uncertainty: stderr + bias,
        meta: EstimateMeta {
            t: Some(t),
            replicas: Some(replicas),
            stderr: Some(stderr),
            bias_allowance: Some(bias),
            box_radius: Some(crate::fpp::reach_radius(t, w)),
            samples,
            ..Default::default()
        },
    })
}

/// `-ε ν_ε(0)`, with uncertainty `hjb_residual + ε·tol`.
pub fn hbar_nu_discount(env: &Environment, p: &[f64], eps: f64, tol: f64) -> Result<EffectiveHamiltonianEstimate> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("discount must lie in (0, 1], got {eps}")));
    }
    let v = nu(env, p, eps, tol)?;
    let origin = vec![0i64; env.dim()];
    let res = hjb_residual(&v, env, p);
    Ok(EffectiveHamiltonianEstimate {
        p: p.to_vec(),
        method: HbarMethod::NuDiscount,
        value: -eps * v.get(&origin).unwrap(),
        uncertainty: res.max + eps * tol,
        meta: EstimateMeta {
            eps: Some(eps),
            tol: Some(tol),
            box_radius: Some(v.radius()),
            sweeps: Some(v.sweeps),
            hjb_residual: Some(res.max),
            ..Default::default()
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualNorm {
    pub value: f64,
    /// Index of the maximizing sample.
    pub argmax: usize,
}

/// `max_k (p·x_k)/m̂(x_k)` over the samples.
pub fn dual_norm(m_samples: &[(Vec<f64>, f64)], p: &[f64]) -> Result<DualNorm> {
    if m_samples.is_empty() {
        return Err(Error::Degenerate("no direction samples".into()));
    }
    let mut best = DualNorm {
        value: f64::NEG_INFINITY,
        argmax: 0,
    };
    for (k, (x, m)) in m_samples.iter().enumerate() {
        if !(*m > 0.0) {
            return Err(Error::Degenerate(format!("time constant {m} at direction {x:?} is not positive")));
        }
        if x.len() != p.len() {
            return Err(Error::invalid("direction and momentum dimensions differ"));
        }
        let v = x.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() / m;
        if v > best.value {
            best = DualNorm { value: v, argmax: k };
        }
    }
    Ok(best)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Integer vectors with `|x|_∞ <= 2`, reduced to primitive form and
/// normalized to unit Euclidean length. 16 directions in d = 2.
pub fn default_direction_grid(dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<i64>> = Vec::new();
    let total = 5usize.pow(dim as u32);
    for code in 0..total {
        let mut rem = code;
        let v: Vec<i64> = (0..dim)
            .map(|_| {
                let c = (rem % 5) as i64 - 2;
                rem /= 5;
                c
            })
            .collect();
        let g = v.iter().fold(0, |g, &c| gcd(g, c));
        if g != 1 {
            continue;
        }
        out.push(v);
    }
    out.sort();
    out.into_iter()
        .map(|v| {
            let norm = v.iter().map(|c| (c * c) as f64).sum::<f64>().sqrt();
            v.iter().map(|&c| c as f64 / norm).collect()
        })
        .collect()
}

/// Dual norm of time-constant estimates over a direction grid.
pub fn hbar_dual(
    env: &Environment,
    p: &[f64],
    directions: &[Vec<f64>],
    n: u64,
    replicas: usize,
) -> Result<EffectiveHamiltonianEstimate> {
    check_momentum(env, p)?;
    let est = time_constants(env, directions, n, replicas, None)?;
    dual_from_time_constants(&est, p)
}

pub fn dual_from_time_constants(
    est: &[crate::fpp::TimeConstantEstimate],
    p: &[f64],
) -> Result<EffectiveHamiltonianEstimate> {
    let samples: Vec<(Vec<f64>, f64)> = est.iter().map(|e| (e.direction.clone(), e.estimate)).collect();
    let dn = dual_norm(&samples, p)?;
    let e = &est[dn.argmax];
    let px: f64 = e.direction.iter().zip(p).map(|(a, b)| a * b).sum();
    let uncertainty = px.abs() * e.stderr / (e.estimate * e.estimate);
    Ok(EffectiveHamiltonianEstimate {
        p: p.to_vec(),
        method: HbarMethod::DualNorm,
        value: dn.value,
        uncertainty,
        meta: EstimateMeta {
            n: Some(e.n),
            replicas: Some(e.samples.len()),
            stderr: Some(e.stderr),
            directions: Some(est.len()),
            argmax_direction: Some(e.direction.clone()),
            box_radius: Some(e.box_radius),
            ..Default::default()
        },
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub checks: usize,
    pub violations: Vec<String>,
    /// Largest excess over the allowed band, over all checks.
    pub worst_excess: f64,
}

impl NormReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn check(&mut self, name: String, excess: f64) {
        self.checks += 1;
        self.worst_excess = self.worst_excess.max(excess);
        if excess > 1e-12 {
            self.violations.push(format!("{name}: exceeds band by {excess:e}"));
        }
    }
}

/// Homogeneity (λ = 2, 1/2), subadditivity and the `[|p|/b, |p|/a]`
/// bracket, each within the estimator's reported uncertainty.
pub fn norm_axiom_check<E>(estimator: E, pairs: &[(Vec<f64>, Vec<f64>)], bounds: WeightBounds) -> Result<NormReport>
where
    E: Fn(&[f64]) -> Result<EffectiveHamiltonianEstimate>,
{
    let mut report = NormReport::default();
    let bracket = |report: &mut NormReport, e: &EffectiveHamiltonianEstimate| {
        let q = sup_norm(&e.p);
        report.check(format!("lower bracket at p={:?}", e.p), q / bounds.b - e.uncertainty - e.value);
        report.check(format!("upper bracket at p={:?}", e.p), e.value - q / bounds.a - e.uncertainty);
    };
    for (p, q) in pairs {
        let hp = estimator(p)?;
        let hq = estimator(q)?;
        let sum: Vec<f64> = p.iter().zip(q).map(|(a, b)| a + b).collect();
        let hs = estimator(&sum)?;
        for e in [&hp, &hq, &hs] {
            bracket(&mut report, e);
        }
        report.check(
            format!("subadditivity at p={p:?}, q={q:?}"),
            hs.value - hp.value - hq.value - (hs.uncertainty + hp.uncertainty + hq.uncertainty),
        );
        for lambda in [2.0, 0.5] {
            let lp: Vec<f64> = p.iter().map(|v| lambda * v).collect();
            let hl = estimator(&lp)?;
            bracket(&mut report, &hl);
            report.check(
                format!("homogeneity x{lambda} at p={p:?}"),
                (hl.value - lambda * hp.value).abs() - (hl.uncertainty + lambda * hp.uncertainty),
            );
        }
    }
    Ok(report)
}
