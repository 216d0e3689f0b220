//! Brute-force references used by the `verify` suites. None of these share
//! code with the label-setting search.

use std::collections::BTreeMap;

use crate::cell::TerminalCost;
use crate::fpp::LatticeBox;
use crate::medium::{Direction, Environment};

/// Passage times by repeated relaxation of every edge inside the box.
pub fn bellman_ford(env: &Environment, source: &[i64], bx: &LatticeBox) -> BTreeMap<Vec<i64>, f64> {
    let d = env.dim();
    let r = bx.radius as i64;
    let mut sites = Vec::new();
    let mut y = vec![0i64; d];
    enumerate_cube(&bx.center, r, 0, &mut y, &mut |y| {
        if bx.contains(y) {
            sites.push(y.to_vec());
        }
    });
    let mut dist: BTreeMap<Vec<i64>, f64> = sites.iter().map(|s| (s.clone(), f64::INFINITY)).collect();
    dist.insert(source.to_vec(), 0.0);
    loop {
        let mut changed = false;
        for u in &sites {
            let du = dist[u];
            if !du.is_finite() {
                continue;
            }
            for alpha in Direction::all(d) {
                let v = alpha.step(u);
                if let Some(dv) = dist.get(&v).copied() {
                    let cand = du + env.weight(u, alpha);
                    if cand < dv {
                        dist.insert(v, cand);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return dist;
        }
    }
}

fn enumerate_cube(center: &[i64], r: i64, axis: usize, y: &mut Vec<i64>, f: &mut dyn FnMut(&[i64])) {
    if axis == center.len() {
        f(y);
        return;
    }
    for v in center[axis] - r..=center[axis] + r {
        y[axis] = v;
        enumerate_cube(center, r, axis + 1, y, f);
    }
}

fn walks(
    env: &Environment,
    p: &[f64],
    x: &mut Vec<i64>,
    elapsed: f64,
    running: f64,
    t: f64,
    visit: &mut dyn FnMut(&[i64], f64),
) {
    visit(x, running);
    for alpha in Direction::all(env.dim()) {
        let next = elapsed + env.weight(x, alpha);
        if next <= t {
            x[alpha.axis] += i64::from(alpha.sign);
            walks(env, p, x, next, running + alpha.dot(p), t, visit);
            x[alpha.axis] -= i64::from(alpha.sign);
        }
    }
}

/// Endpoints of all walks from `x` with total time at most `t`.
pub fn walk_reachable(env: &Environment, x: &[i64], t: f64) -> std::collections::BTreeSet<Vec<i64>> {
    let mut out = std::collections::BTreeSet::new();
    let mut cur = x.to_vec();
    let p = vec![0.0; env.dim()];
    walks(env, &p, &mut cur, 0.0, 0.0, t, &mut |y, _| {
        out.insert(y.to_vec());
    });
    out
}

/// μ(x, t) by enumerating every control sequence, accumulating `p·α` step by
/// step.
pub fn walk_mu(env: &Environment, p: &[f64], x: &[i64], t: f64, phi: &TerminalCost) -> f64 {
    let mut best = f64::INFINITY;
    let mut cur = x.to_vec();
    walks(env, p, &mut cur, 0.0, 0.0, t, &mut |y, running| {
        best = best.min(running + phi.eval(y));
    });
    best
}
