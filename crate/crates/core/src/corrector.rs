//! Explicit minimizer iteration for diagonal-symmetric media with finitely
//! many atoms.
//!
//! Under the symmetry `τ(x, ±e_i)` depends on `x` only through the level
//! `Σ x_i`, candidate gradients reduce to one scalar `f` per atom and the
//! Hamiltonian to `H_sym(t, p, q) = max_i |t + p_i| / q_i`. Expectations and
//! essential suprema over Ω become `Σ π_i` and `max_i` over atoms.
//!
//! Step sizes. On `S₊` (right derivative negative, so the atom's minimizer
//! lies to the right) the move is `min(a(h - μ₀), Δf*)`; on `S₋` it is
//! `max(-a(h - μ₀), Δf*)`. Both move toward `x*` without passing it and by at
//! most `a(h - μ₀)`, which is what keeps `|ξ| <= 1`.
//!
//! Two closed forms used in the tests: for `p = (-1, 1)` the minimizer of
//! `max(|t - 1|/q₁, |t + 1|/q₂)` is `x* = (q₂ - q₁)/(q₁ + q₂)`, and for
//! `p = (1, 1)` the per-atom Hamiltonian near `t = 0` is `(t + 1)/min_i q_i`,
//! so the constant-`h` candidate is `min_i q_i / E[min_i q_i] - 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::{Environment, WeightBounds};
use crate::varform::GradientCandidate;

/// Default tolerance for set membership, termination and oracle bands.
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 100_000;

const PROB_TOL: f64 = 1e-12;

/// Finite probability space of weight vectors `q_i` at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicSpace {
    pub atoms: Vec<Vec<f64>>,
    #[serde(default)]
    pub probs: Vec<f64>,
    #[serde(default)]
    pub periodic: bool,
}

impl AtomicSpace {
    pub fn new(atoms: Vec<Vec<f64>>, probs: Vec<f64>, periodic: bool) -> Result<Self> {
        AtomicSpace { atoms, probs, periodic }.validated()
    }

    /// Uniform probabilities, as periodicity forces.
    pub fn periodic(atoms: Vec<Vec<f64>>) -> Result<Self> {
        AtomicSpace::new(atoms, vec![], true)
    }

    /// Checks the invariants and renormalizes the probabilities.
    pub fn validated(mut self) -> Result<Self> {
        let n = self.atoms.len();
        if n == 0 {
            return Err(Error::invalid("atomic space needs at least one atom"));
        }
        let d = self.atoms[0].len();
        if d == 0 {
            return Err(Error::invalid("atoms must have at least one coordinate"));
        }
        for q in &self.atoms {
            if q.len() != d {
                return Err(Error::invalid("atoms have differing dimensions"));
            }
            if q.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
                return Err(Error::invalid(format!("atom {q:?} has a non-positive weight")));
            }
        }
        if self.periodic {
            let uniform = 1.0 / n as f64;
            if self.probs.is_empty() {
                self.probs = vec![uniform; n];
            } else if self.probs.len() != n || self.probs.iter().any(|p| (p - uniform).abs() > PROB_TOL) {
                return Err(Error::invalid("periodic spaces need uniform probabilities 1/n"));
            }
        }
        if self.probs.len() != n {
            return Err(Error::invalid(format!("{} probabilities for {n} atoms", self.probs.len())));
        }
        if self.probs.iter().any(|&p| !(p.is_finite() && p > 0.0)) {
            return Err(Error::invalid("atom probabilities must be positive"));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}, expected 1")));
        }
        for p in &mut self.probs {
            *p /= total;
        }
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.atoms.len()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    /// Smallest and largest atom entries.
    pub fn bounds(&self) -> WeightBounds {
        let all = self.atoms.iter().flatten();
        WeightBounds {
            a: all.clone().copied().fold(f64::INFINITY, f64::min),
            b: all.copied().fold(0.0, f64::max),
        }
    }

    /// Σ π_i v_i
    pub fn expect(&self, v: &[f64]) -> f64 {
        self.probs.iter().zip(v).map(|(p, x)| p * x).sum()
    }
}

/// H_sym(t, p, q) = max_i |t + p_i| / q_i
pub fn h_sym(t: f64, p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(pi, qi)| (t + pi).abs() / qi).fold(f64::NEG_INFINITY, f64::max)
}

fn active_pieces<'a>(t: f64, p: &'a [f64], q: &'a [f64]) -> impl Iterator<Item = usize> + 'a {
    let h = h_sym(t, p, q);
    let band = 1e-12 * h.abs().max(1.0);
    (0..p.len()).filter(move |&i| (t + p[i]).abs() / q[i] >= h - band)
}

/// Right derivative of H_sym at `t`.
pub fn right_derivative(t: f64, p: &[f64], q: &[f64]) -> f64 {
    active_pieces(t, p, q)
        .map(|i| if t + p[i] < 0.0 { -1.0 / q[i] } else { 1.0 / q[i] })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Left derivative of H_sym at `t`.
pub fn left_derivative(t: f64, p: &[f64], q: &[f64]) -> f64 {
    active_pieces(t, p, q)
        .map(|i| if t + p[i] > 0.0 { 1.0 / q[i] } else { -1.0 / q[i] })
        .fold(f64::INFINITY, f64::min)
}

/// Minimizer and minimum of `t ↦ H_sym(t, p, q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsymProfile {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub argmin: f64,
    pub min_value: f64,
}

impl HsymProfile {
    pub fn value(&self, t: f64) -> f64 {
        h_sym(t, &self.p, &self.q)
    }

    pub fn left_derivative(&self, t: f64) -> f64 {
        left_derivative(t, &self.p, &self.q)
    }

    pub fn right_derivative(&self, t: f64) -> f64 {
        right_derivative(t, &self.p, &self.q)
    }
}

/// Exact minimizer: the minimum of a max of V-shaped pieces sits at a kink
/// `-p_i` or where two pieces cross.
pub fn argmin_h_sym(p: &[f64], q: &[f64]) -> HsymProfile {
    let d = p.len();
    let mut candidates: Vec<f64> = p.iter().map(|v| -v).collect();
    for i in 0..d {
        for j in i + 1..d {
            for s in [1.0, -1.0] {
                // (t + p_i)/q_i = s (t + p_j)/q_j
                let den = q[j] - s * q[i];
                if den != 0.0 {
                    candidates.push((s * p[j] * q[i] - p[i] * q[j]) / den);
                }
            }
        }
    }
    let (argmin, min_value) = candidates
        .into_iter()
        .map(|t| (t, h_sym(t, p, q)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .unwrap();
    HsymProfile {
        p: p.to_vec(),
        q: q.to_vec(),
        argmin,
        min_value,
    }
}

/// A candidate `f` with `Σ π_i f_i = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateF(Vec<f64>);

impl CandidateF {
    /// Accepts `f` whose mean is within 1e-9 of zero and removes the residue.
    pub fn new(space: &AtomicSpace, f: Vec<f64>) -> Result<Self> {
        if f.len() != space.n() {
            return Err(Error::invalid(format!("candidate has {} entries for {} atoms", f.len(), space.n())));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("candidate entries must be finite"));
        }
        let m = space.expect(&f);
        if m.abs() > 1e-9 {
            return Err(Error::invalid(format!("candidate has mean {m}, expected 0")));
        }
        Ok(CandidateF(f.iter().map(|v| v - m).collect()))
    }

    pub fn zero(space: &AtomicSpace) -> Self {
        CandidateF(vec![0.0; space.n()])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// One state of the iteration with its classification sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationState {
    pub iteration: usize,
    pub f: Vec<f64>,
    pub h: Vec<f64>,
    pub mu0: f64,
    pub esssup: f64,
    pub d: f64,
    /// Atoms sitting at their own minimum.
    pub min_set: Vec<usize>,
    /// `h > μ₀`
    pub s_set: Vec<usize>,
    /// `h < μ₀`
    pub i_set: Vec<usize>,
    pub s_plus: Vec<usize>,
    pub s_minus: Vec<usize>,
    /// ξ of the step that produced this state.
    pub xi: Option<f64>,
    /// `E[a(μ₀ − h); I]` of the step that produced this state: the mass the
    /// move on `S±` was balanced against.
    pub room: Option<f64>,
}

fn profiles(space: &AtomicSpace, p: &[f64]) -> Vec<HsymProfile> {
    space.atoms.iter().map(|q| argmin_h_sym(p, q)).collect()
}

fn check_inputs(space: &AtomicSpace, p: &[f64], tol: f64) -> Result<()> {
    if p.len() != space.dim() {
        return Err(Error::invalid(format!(
            "momentum has {} entries, atoms have {}",
            p.len(),
            space.dim()
        )));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("momentum entries must be finite"));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    Ok(())
}

impl IterationState {
    pub fn new(space: &AtomicSpace, p: &[f64], f: &CandidateF, tol: f64) -> Result<Self> {
        check_inputs(space, p, tol)?;
        Ok(IterationState::classify(space, p, &profiles(space, p), f.values().to_vec(), tol, 0, None, None))
    }

    fn classify(
        space: &AtomicSpace,
        p: &[f64],
        prof: &[HsymProfile],
        f: Vec<f64>,
        tol: f64,
        iteration: usize,
        xi: Option<f64>,
        room: Option<f64>,
    ) -> Self {
        let h: Vec<f64> = f.iter().zip(&space.atoms).map(|(t, q)| h_sym(*t, p, q)).collect();
        let mu0 = space.expect(&h);
        let esssup = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = space.n();
        let min_set: Vec<usize> = (0..n).filter(|&i| h[i] <= prof[i].min_value + tol).collect();
        let s_set: Vec<usize> = (0..n).filter(|&i| h[i] > mu0 + tol).collect();
        let i_set: Vec<usize> = (0..n).filter(|&i| h[i] < mu0).collect();
        let movable = s_set.iter().copied().filter(|i| !min_set.contains(i));
        let (s_plus, s_minus): (Vec<usize>, Vec<usize>) =
            movable.partition(|&i| right_derivative(f[i], p, &space.atoms[i]) < 0.0);
        let s_minus = s_minus
            .into_iter()
            .filter(|&i| left_derivative(f[i], p, &space.atoms[i]) > 0.0)
            .collect();
        IterationState {
            iteration,
            d: (esssup - mu0).max(0.0),
            f,
            h,
            mu0,
            esssup,
            min_set,
            s_set,
            i_set,
            s_plus,
            s_minus,
            xi,
            room,
        }
    }
}

/// Absolute rounding allowance used by [`TraceEntry::xi_bounded`].
pub const XI_SLACK: f64 = 1e-12;

impl TraceEntry {
    /// `|ξ| ≤ 1` in the unnormalised form `|ξ|·room ≤ room + XI_SLACK`.
    ///
    /// In exact arithmetic the move on `S±` never exceeds the room below the
    /// mean, and when every step is capped the two balance exactly, so the
    /// quotient sits at `±1` up to rounding amplified by `1/room`.
    pub fn xi_bounded(&self) -> bool {
        match (self.xi, self.room) {
            (Some(xi), Some(room)) => xi.abs() * room <= room + XI_SLACK,
            _ => true,
        }
    }
}

/// One pass of the update `f ← f + Δf`.
pub fn iterate_step(state: &IterationState, space: &AtomicSpace, p: &[f64], tol: f64) -> Result<IterationState> {
    check_inputs(space, p, tol)?;
    let prof = profiles(space, p);
    step_with(state, space, p, &prof, tol)
}

fn step_with(
    state: &IterationState,
    space: &AtomicSpace,
    p: &[f64],
    prof: &[HsymProfile],
    tol: f64,
) -> Result<IterationState> {
    let a = space.bounds().a;
    let mu0 = state.mu0;
    let mut delta = vec![0.0; space.n()];
    for &i in &state.s_plus {
        let target = prof[i].argmin - state.f[i];
        delta[i] = (a * (state.h[i] - mu0)).min(target);
    }
    for &i in &state.s_minus {
        let target = prof[i].argmin - state.f[i];
        delta[i] = (-a * (state.h[i] - mu0)).max(target);
    }
    let moved = space.expect(&delta);
    let room: f64 = state.i_set.iter().map(|&i| space.probs[i] * a * (mu0 - state.h[i])).sum();
    let xi = if moved == 0.0 {
        0.0
    } else if room > 0.0 {
        -moved / room
    } else {
        return Err(Error::Degenerate(format!(
            "no mass below the mean to balance a move of {moved:e}"
        )));
    };
    for &i in &state.i_set {
        delta[i] = a * xi * (mu0 - state.h[i]);
    }
    let mut f: Vec<f64> = state.f.iter().zip(&delta).map(|(x, dx)| x + dx).collect();
    let m = space.expect(&f);
    for v in &mut f {
        *v -= m;
    }
    Ok(IterationState::classify(space, p, prof, f, tol, state.iteration + 1, Some(xi), Some(room)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeKind {
    CorrectorFound,
    MinimizerNotCorrector,
    LimitCorrector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub esssup: f64,
    pub mu0: f64,
    pub d: f64,
    pub xi: Option<f64>,
    pub room: Option<f64>,
    pub f: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub kind: OutcomeKind,
    pub f: Vec<f64>,
    pub h: Vec<f64>,
    pub hbar: f64,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
}

/// Runs the iteration from `f0` until one of the termination tests fires.
pub fn run(space: &AtomicSpace, p: &[f64], f0: &CandidateF, tol: f64, max_iter: usize) -> Result<Outcome> {
    check_inputs(space, p, tol)?;
    let prof = profiles(space, p);
    let WeightBounds { a, b } = space.bounds();
    let mut state = IterationState::classify(space, p, &prof, f0.values().to_vec(), tol, 0, None, None);
    let mut trace = Vec::new();
    let mut must_stop = false;
    let finish = |kind, state: IterationState, trace| Outcome {
        kind,
        hbar: state.esssup,
        iterations: state.iteration,
        f: state.f,
        h: state.h,
        trace,
    };
    loop {
        trace.push(TraceEntry {
            iteration: state.iteration,
            esssup: state.esssup,
            mu0: state.mu0,
            d: state.d,
            xi: state.xi,
            room: state.room,
            f: state.f.clone(),
        });
        if state.d <= tol {
            return Ok(finish(OutcomeKind::CorrectorFound, state, trace));
        }
        let top_of_min = state.min_set.iter().map(|&i| state.h[i]).fold(f64::NEG_INFINITY, f64::max);
        if top_of_min >= state.esssup - tol {
            return Ok(finish(OutcomeKind::MinimizerNotCorrector, state, trace));
        }
        if must_stop {
            return Err(Error::NonConvergence {
                iterations: state.iteration,
                detail: "esssup decreased by less than d*a/b without a termination test firing".into(),
            });
        }
        if state.iteration >= max_iter {
            if state.d < 10.0 * tol {
                return Ok(finish(OutcomeKind::LimitCorrector, state, trace));
            }
            return Err(Error::NonConvergence {
                iterations: state.iteration,
                detail: format!("gap d = {:e} after the iteration cap", state.d),
            });
        }
        let next = step_with(&state, space, p, &prof, tol)?;
        if next.esssup > state.esssup + tol {
            return Err(Error::NonConvergence {
                iterations: next.iteration,
                detail: format!("esssup increased from {} to {}", state.esssup, next.esssup),
            });
        }
        must_stop = state.esssup - next.esssup < state.d * a / b - tol;
        state = next;
    }
}

/// Minimax value `min_{f ∈ F} max_i H_sym(f_i, p, q_i)` by bisection on the
/// level, with a feasible witness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Minimax {
    pub value: f64,
    pub witness: Vec<f64>,
    /// Largest level found infeasible (or the lower bracket if the first
    /// bracket is feasible).
    pub infeasible_below: f64,
}

fn sublevel(c: f64, p: &[f64], q: &[f64]) -> (f64, f64) {
    let l = p.iter().zip(q).map(|(pk, qk)| -pk - c * qk).fold(f64::NEG_INFINITY, f64::max);
    let r = p.iter().zip(q).map(|(pk, qk)| -pk + c * qk).fold(f64::INFINITY, f64::min);
    (l, r)
}

fn feasible_witness(space: &AtomicSpace, p: &[f64], c: f64) -> Option<Vec<f64>> {
    let iv: Vec<(f64, f64)> = space.atoms.iter().map(|q| sublevel(c, p, q)).collect();
    if iv.iter().any(|(l, r)| l > r) {
        return None;
    }
    let lo: Vec<f64> = iv.iter().map(|x| x.0).collect();
    let hi: Vec<f64> = iv.iter().map(|x| x.1).collect();
    let el = space.expect(&lo);
    let er = space.expect(&hi);
    if el > 0.0 || er < 0.0 {
        return None;
    }
    let width = er - el;
    let theta = if width > 0.0 { -el / width } else { 0.0 };
    Some(iv.iter().map(|(l, r)| l + theta * (r - l)).collect())
}

pub fn brute_force_minimax(space: &AtomicSpace, p: &[f64], tol: f64) -> Result<Minimax> {
    check_inputs(space, p, tol)?;
    let mut lo = space
        .atoms
        .iter()
        .map(|q| argmin_h_sym(p, q).min_value)
        .fold(f64::NEG_INFINITY, f64::max);
    if let Some(w) = feasible_witness(space, p, lo) {
        return Ok(Minimax {
            value: lo,
            witness: w,
            infeasible_below: lo,
        });
    }
    let mut hi = space.atoms.iter().map(|q| h_sym(0.0, p, q)).fold(f64::NEG_INFINITY, f64::max);
    let mut witness = feasible_witness(space, p, hi).unwrap_or_else(|| vec![0.0; space.n()]);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match feasible_witness(space, p, mid) {
            Some(w) => {
                hi = mid;
                witness = w;
            }
            None => lo = mid,
        }
    }
    Ok(Minimax {
        value: hi,
        witness,
        infeasible_below: lo,
    })
}

/// φ(x) = Σ_{k=0}^{ℓ-1} f(atom(k)) for level `ℓ = Σ x_i > 0`, and
/// `-Σ_{k=ℓ}^{-1} f(atom(k))` for `ℓ < 0`, so `φ(x + e_i) - φ(x) = f(atom(ℓ))`
/// in every direction.
pub fn lift_to_lattice(space: &AtomicSpace, f: &CandidateF, env: &Environment) -> Result<GradientCandidate> {
    let Some(atoms) = env.atoms() else {
        return Err(Error::WrongKind {
            expected: "diagonal_symmetric",
            found: env.spec().kind.name(),
        });
    };
    if atoms != space.atoms.as_slice() {
        return Err(Error::Mismatch("medium atoms differ from the atomic space".into()));
    }
    if f.values().len() != space.n() {
        return Err(Error::Mismatch("candidate length differs from the atom count".into()));
    }
    let env = env.clone();
    let f = f.values().to_vec();
    Ok(GradientCandidate::new(true, move |x: &[i64]| {
        let level: i64 = x.iter().sum();
        let g = |k: i64| f[env.atom_at_level(k).expect("diagonal medium")];
        if level >= 0 {
            (0..level).map(g).sum()
        } else {
            -(level..0).map(g).sum::<f64>()
        }
    }))
}
