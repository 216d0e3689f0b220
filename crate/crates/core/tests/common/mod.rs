//! Independent reference computations for the integration tests. Nothing
//! here calls the library's search, value iteration or corrector code; it
//! only reads edge weights through `Environment::weight`.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use fpp_homog::medium::{Direction, Environment, MediumKind, MediumSpec};
use rand::Rng;

/// 2-D periodic medium whose weights are multiples of 1/8 in `[1, 2]`, so
/// every path sum is exact in floating point.
pub fn dyadic_periodic(rng: &mut impl Rng, side: usize, undirected: bool) -> Environment {
    let s = side as i64;
    let cells = side * side;
    let mut weights = vec![vec![0.0; 4]; cells];
    for row in weights.iter_mut() {
        for w in row.iter_mut() {
            *w = 1.0 + f64::from(rng.random_range(0..=8u8)) / 8.0;
        }
    }
    if undirected {
        for c in 0..cells as i64 {
            let (x0, x1) = (c / s, c % s);
            let left = ((x0 - 1).rem_euclid(s) * s + x1) as usize;
            let down = (x0 * s + (x1 - 1).rem_euclid(s)) as usize;
            weights[c as usize][1] = weights[left][0];
            weights[c as usize][3] = weights[down][2];
        }
    }
    Environment::new(MediumSpec::new(
        2,
        MediumKind::Periodic {
            period: vec![side, side],
            weights,
        },
        undirected,
    ))
    .unwrap()
}

/// Terminal cost with values in `(1/8)Z`, read from a table on a window and
/// clamped outside it; Lipschitz constant at most `2 * spread / 8`.
pub fn dyadic_table_cost(rng: &mut impl Rng, half: i64, spread: i32) -> (f64, impl Fn(&[i64]) -> f64 + Clone) {
    let side = (2 * half + 1) as usize;
    let table: Vec<f64> = (0..side * side)
        .map(|_| f64::from(rng.random_range(-spread..=spread)) / 8.0)
        .collect();
    let lip = 2.0 * f64::from(spread) / 8.0;
    let f = move |y: &[i64]| {
        let i = (y[0].clamp(-half, half) + half) as usize;
        let j = (y[1].clamp(-half, half) + half) as usize;
        table[i * side + j]
    };
    (lip, f)
}

fn l1(x: &[i64], c: &[i64]) -> u64 {
    x.iter().zip(c).map(|(a, b)| a.abs_diff(*b)).sum()
}

/// Minimum over self-avoiding paths inside the ℓ¹ ball of `radius` around
/// `center` by depth-first enumeration. A partial path is abandoned once its
/// cost reaches the best cost already recorded at its endpoint; every
/// surviving path is extended in every direction.
pub fn enumerate_passage(
    env: &Environment,
    source: &[i64],
    center: &[i64],
    radius: u64,
) -> BTreeMap<Vec<i64>, f64> {
    fn go(
        env: &Environment,
        x: &mut Vec<i64>,
        cost: f64,
        center: &[i64],
        radius: u64,
        on_path: &mut BTreeSet<Vec<i64>>,
        best: &mut BTreeMap<Vec<i64>, f64>,
    ) {
        for alpha in Direction::all(env.dim()) {
            let w = env.weight(x, alpha);
            x[alpha.axis] += i64::from(alpha.sign);
            if l1(x, center) <= radius && !on_path.contains(x) {
                let c = cost + w;
                let known = best.get(x).copied().unwrap_or(f64::INFINITY);
                if c < known {
                    best.insert(x.clone(), c);
                    on_path.insert(x.clone());
                    go(env, x, c, center, radius, on_path, best);
                    on_path.remove(x);
                }
            }
            x[alpha.axis] -= i64::from(alpha.sign);
        }
    }
    let mut best = BTreeMap::new();
    best.insert(source.to_vec(), 0.0);
    let mut on_path = BTreeSet::from([source.to_vec()]);
    go(env, &mut source.to_vec(), 0.0, center, radius, &mut on_path, &mut best);
    best
}

/// Every walk from `x` whose total time stays within `t`: the set of
/// endpoints and the minimum of the summed running cost plus terminal cost.
pub fn enumerate_walks(
    env: &Environment,
    p: &[f64],
    x: &[i64],
    t: f64,
    phi: &dyn Fn(&[i64]) -> f64,
) -> (f64, BTreeSet<Vec<i64>>) {
    fn go(
        env: &Environment,
        p: &[f64],
        x: &mut Vec<i64>,
        time: f64,
        run: f64,
        t: f64,
        phi: &dyn Fn(&[i64]) -> f64,
        out: &mut (f64, BTreeSet<Vec<i64>>),
    ) {
        out.0 = out.0.min(run + phi(x));
        out.1.insert(x.clone());
        for alpha in Direction::all(env.dim()) {
            let next = time + env.weight(x, alpha);
            if next <= t {
                let lam = if alpha.sign > 0 { p[alpha.axis] } else { -p[alpha.axis] };
                x[alpha.axis] += i64::from(alpha.sign);
                go(env, p, x, next, run + lam, t, phi, out);
                x[alpha.axis] -= i64::from(alpha.sign);
            }
        }
    }
    let mut out = (f64::INFINITY, BTreeSet::new());
    go(env, p, &mut x.to_vec(), 0.0, 0.0, t, phi, &mut out);
    out
}

/// Gaussian elimination with partial pivoting.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let m = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= m * a[col][k];
            }
            b[row] -= m * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Discounted value on the quotient torus of a periodic 2-D medium, by
/// exhaustive policy enumeration: each stationary policy fixes a linear
/// system, and the optimal value is the componentwise minimum over policies.
pub fn torus_discounted_value(env: &Environment, side: usize, p: &[f64], eps: f64) -> Vec<f64> {
    let cells = side * side;
    let s = side as i64;
    let dirs = Direction::all(2);
    let coords = |c: usize| vec![(c / side) as i64, (c % side) as i64];
    let cell_of = |y: &[i64]| (y[0].rem_euclid(s) * s + y[1].rem_euclid(s)) as usize;
    let mut best = vec![f64::INFINITY; cells];
    let policies = dirs.len().pow(cells as u32);
    for code in 0..policies {
        let mut a = vec![vec![0.0; cells]; cells];
        let mut b = vec![0.0; cells];
        let mut k = code;
        for c in 0..cells {
            let alpha = dirs[k % dirs.len()];
            k /= dirs.len();
            let x = coords(c);
            let next = cell_of(&alpha.step(&x));
            a[c][c] += 1.0;
            a[c][next] -= (-eps * env.weight(&x, alpha)).exp();
            b[c] = alpha.dot(p);
        }
        let v = solve_linear(a, b);
        for c in 0..cells {
            best[c] = best[c].min(v[c]);
        }
    }
    best
}

/// Largest `-p·(displacement)/time` over closed walks of the quotient of a
/// 1-D medium with period `len(w)` of length at most `max_len`, where `w[c]`
/// is the weight of the edge from cell `c` to cell `c + 1`.
pub fn ring_cycle_ratio(w: &[f64], p: f64, max_len: usize) -> f64 {
    let n = w.len() as i64;
    let mut best = f64::NEG_INFINITY;
    // walks start in every cell; a walk is closed when it returns to its
    // starting cell modulo the period
    for start in 0..n {
        let mut stack = vec![(start, 0i64, 0.0f64, 0usize)];
        while let Some((pos, disp, time, len)) = stack.pop() {
            if len > 0 && (pos - start).rem_euclid(n) == 0 && disp != 0 {
                best = best.max(-p * disp as f64 / time);
            }
            if len == max_len {
                continue;
            }
            let right = w[pos.rem_euclid(n) as usize];
            let left = w[(pos - 1).rem_euclid(n) as usize];
            stack.push((pos + 1, disp + 1, time + right, len + 1));
            stack.push((pos - 1, disp - 1, time + left, len + 1));
        }
    }
    best.max(0.0)
}

/// `max_k |t + p_k| / q_k` written as a loop over both signs of every
/// coordinate move.
pub fn naive_h_sym(t: f64, p: &[f64], q: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for k in 0..p.len() {
        for s in [1.0, -1.0] {
            best = best.max(s * (t + p[k]) / q[k]);
        }
    }
    best
}

/// Feasibility of level `c` for `min_f max_i H_sym(f_i)` with `Σ π f = 0`,
/// decided by a fine scan of each atom's sublevel interval.
pub fn scan_minimax(atoms: &[Vec<f64>], probs: &[f64], p: &[f64], steps: usize) -> f64 {
    let span: f64 = p.iter().map(|v| v.abs()).fold(0.0, f64::max) + 1.0;
    let lo_all: Vec<f64> = atoms.iter().map(|q| scan_min(p, q, span, steps)).collect();
    let mut lo = lo_all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut hi = atoms.iter().map(|q| naive_h_sym(0.0, p, q)).fold(f64::NEG_INFINITY, f64::max);
    let feasible = |c: f64| {
        let mut lsum = 0.0;
        let mut rsum = 0.0;
        for (q, &pi) in atoms.iter().zip(probs) {
            let (mut l, mut r) = (f64::INFINITY, f64::NEG_INFINITY);
            for k in 0..=steps {
                let t = -span + 2.0 * span * k as f64 / steps as f64;
                if naive_h_sym(t, p, q) <= c {
                    l = l.min(t);
                    r = r.max(t);
                }
            }
            if l > r {
                return false;
            }
            lsum += pi * l;
            rsum += pi * r;
        }
        lsum <= 0.0 && 0.0 <= rsum
    };
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Minimum of `t ↦ H_sym(t, p, q)` over a uniform grid on `[-span, span]`.
pub fn scan_min(p: &[f64], q: &[f64], span: f64, steps: usize) -> f64 {
    (0..=steps)
        .map(|k| naive_h_sym(-span + 2.0 * span * k as f64 / steps as f64, p, q))
        .fold(f64::INFINITY, f64::min)
}
