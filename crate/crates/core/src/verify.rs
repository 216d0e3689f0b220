//! Invariant batteries behind `fpp verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cell::{check_comparison, mu, ComparisonProbes, TerminalCost};
use crate::corrector::{brute_force_minimax, run, AtomicSpace, CandidateF, OutcomeKind, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::fpp::{passage_times, reachable_set, LatticeBox};
use crate::medium::{Direction, Environment, MediumKind, MediumSpec};
use crate::oracle;
use crate::varform::{hbar_mu_slope, hbar_nu_discount, norm_axiom_check};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Dpp,
    Comparison,
    Norm,
    Oracle,
    Tauberian,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dpp" => Suite::Dpp,
            "comparison" => Suite::Comparison,
            "norm" => Suite::Norm,
            "oracle" => Suite::Oracle,
            "tauberian" => Suite::Tauberian,
            _ => return Err(Error::invalid(format!("unknown suite {s:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.passed)
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(CheckResult {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

/// A periodic 2-D medium with an independent uniform `[1, 2]` weight per
/// edge of a `side × side` cell.
pub fn random_periodic(rng: &mut impl Rng, side: usize, undirected: bool) -> Result<Environment> {
    let cells = side * side;
    let mut weights = vec![vec![0.0; 4]; cells];
    for row in weights.iter_mut() {
        for w in row.iter_mut() {
            *w = rng.random_range(1.0..=2.0);
        }
    }
    if undirected {
        // the -e_i weight at x is the +e_i weight at x - e_i
        let s = side as i64;
        for c in 0..cells as i64 {
            let (x0, x1) = (c / s, c % s);
            let left = (((x0 - 1).rem_euclid(s)) * s + x1) as usize;
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
}

/// Random i.i.d. uniform medium with `a ∈ [1, 1.5]`, `b - a ∈ [0.5, 1.5]`.
pub fn random_iid(rng: &mut impl Rng, dim: usize) -> Result<Environment> {
    let lo = rng.random_range(1.0..=1.5);
    let hi = lo + rng.random_range(0.5..=1.5);
    Environment::new(MediumSpec::iid_uniform(dim, lo, hi).with_seed(rng.random()))
}

fn dyadic_momentum(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| f64::from(rng.random_range(-16i32..=16)) / 8.0).collect()
}

pub fn run_suite(suite: Suite, env: Option<&Environment>, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport {
        suite,
        seed,
        checks: vec![],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match suite {
        Suite::Dpp => dpp(&mut report, env, &mut rng)?,
        Suite::Comparison => comparison(&mut report, env, &mut rng)?,
        Suite::Norm => norm(&mut report, env)?,
        Suite::Oracle => corrector_oracle(&mut report, &mut rng)?,
        Suite::Tauberian => tauberian(&mut report, env, &mut rng)?,
    }
    Ok(report)
}

fn dpp(report: &mut SuiteReport, env: Option<&Environment>, rng: &mut ChaCha8Rng) -> Result<()> {
    let media: Vec<Environment> = match env {
        Some(e) => vec![e.clone()],
        None => (0..10).map(|k| random_periodic(rng, 7, k % 2 == 0)).collect::<Result<_>>()?,
    };
    for (k, env) in media.iter().enumerate() {
        let d = env.dim();
        let source = vec![0i64; d];
        let radius = if d > 2 { 3 } else { 6 };
        let bx = LatticeBox::around_origin(d, radius)?;
        let field = passage_times(env, &source, &bx)?;
        let bf = oracle::bellman_ford(env, &source, &bx);
        let mismatches = bf.iter().filter(|(y, t)| field.get(y) != Some(**t)).count();
        report.push(
            format!("medium {k}: passage times equal Bellman-Ford"),
            mismatches == 0,
            format!("{mismatches} of {} sites differ", bf.len()),
        );
        let mut dpp_bad = 0;
        for (y, t) in field.iter() {
            if y == source || crate::fpp::l1_norm(&y) >= radius {
                continue;
            }
            let best = Direction::all(d)
                .into_iter()
                .map(|alpha| {
                    let from = alpha.reverse().step(&y);
                    field.get(&from).unwrap() + env.weight(&from, alpha)
                })
                .fold(f64::INFINITY, f64::min);
            if best != t {
                dpp_bad += 1;
            }
        }
        report.push(
            format!("medium {k}: interior DPP identity"),
            dpp_bad == 0,
            format!("{dpp_bad} sites violate T(y) = min_a T(y-a) + tau(y-a,a)"),
        );
        let w = env.bounds();
        let t = rng.random_range(0.0..=3.0 * w.b);
        let reach = reachable_set(env, &source, t, &LatticeBox::around_origin(d, crate::fpp::reach_radius(t, w))?)?;
        let walk = oracle::walk_reachable(env, &source, t);
        report.push(
            format!("medium {k}: R(0, {t:.3}) equals walk enumeration"),
            reach.members == walk,
            format!("{} vs {} sites", reach.len(), walk.len()),
        );
        let p = dyadic_momentum(rng, d);
        let table: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let phi = TerminalCost::new(2.0, move |y| {
            table[y.iter().fold(0, |acc, v| (acc * 8 + v.rem_euclid(8)) % 64) as usize]
        });
        let fast = mu(env, &p, &source, t, &phi)?;
        let slow = oracle::walk_mu(env, &p, &source, t, &phi);
        report.push(
            format!("medium {k}: mu equals control enumeration"),
            fast == slow,
            format!("mu = {fast}, enumeration = {slow}"),
        );
    }
    Ok(())
}

/// Bounded terminal cost with ℓ¹ Lipschitz constant at most `lip`: a random
/// sum of sines of a weighted coordinate average.
pub fn random_terminal_cost(rng: &mut impl Rng, lip: f64) -> TerminalCost {
    let freq: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let shift: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..=6.3)).collect();
    let scale = lip / freq.iter().map(|f| f.abs()).sum::<f64>().max(1e-12);
    TerminalCost::new(lip, move |x| {
        let s: i64 = x.iter().enumerate().map(|(i, v)| v * (i as i64 + 1)).sum();
        let base = s as f64 / (x.len() * (x.len() + 1) / 2) as f64;
        freq.iter()
            .zip(&shift)
            .map(|(f, sh)| scale * (f * base + sh).sin())
            .sum::<f64>()
    })
}

fn comparison(report: &mut SuiteReport, env: Option<&Environment>, rng: &mut ChaCha8Rng) -> Result<()> {
    let media: Vec<Environment> = match env {
        Some(e) => vec![e.clone()],
        None => (0..10).map(|_| random_iid(rng, 2)).collect::<Result<_>>()?,
    };
    for (k, env) in media.iter().enumerate() {
        let p: Vec<f64> = (0..env.dim()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let phi = random_terminal_cost(rng, 2.0);
        let probes = ComparisonProbes {
            samples: 100,
            x_radius: 3,
            t_max: 6.0 * env.bounds().b,
            seed: rng.random(),
        };
        let rep = check_comparison(env, &p, &phi, &probes)?;
        report.push(
            format!("medium {k}: mu >= phi - t sup H"),
            rep.lower_violations == 0,
            format!("{} violations, worst excess {:e}", rep.lower_violations, rep.worst_lower),
        );
        report.push(
            format!("medium {k}: mu <= phi - t inf H"),
            rep.upper_violations == 0,
            format!("{} violations, worst excess {:e}", rep.upper_violations, rep.worst_upper),
        );
        report.push(
            format!("medium {k}: mu <= phi - t inf H + b max(inf H, 0)"),
            rep.discrete_upper_violations == 0,
            format!(
                "{} violations, worst excess {:e}",
                rep.discrete_upper_violations, rep.worst_discrete_upper
            ),
        );
    }
    Ok(())
}

/// Fixed momentum pairs for the norm suite.
pub fn norm_pairs(dim: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let base: [(&[f64], &[f64]); 8] = [
        (&[1.0, 0.0], &[0.0, 1.0]),
        (&[1.0, 1.0], &[-1.0, 1.0]),
        (&[0.5, -0.25], &[0.25, 0.75]),
        (&[2.0, 1.0], &[-1.0, -1.5]),
        (&[1.0, 0.0], &[1.0, 0.0]),
        (&[-0.75, 0.5], &[0.5, 0.5]),
        (&[0.0, -1.0], &[1.25, 0.0]),
        (&[1.5, -1.5], &[-0.5, 1.0]),
    ];
    base.iter()
        .map(|(p, q)| {
            let fit = |v: &[f64]| (0..dim).map(|i| v[i % 2]).collect::<Vec<f64>>();
            (fit(p), fit(q))
        })
        .collect()
}

fn norm(report: &mut SuiteReport, env: Option<&Environment>) -> Result<()> {
    let owned;
    let env = match env {
        Some(e) => e,
        None => {
            owned = Environment::new(MediumSpec::constant(2, 2.0))?;
            &owned
        }
    };
    let t = (20.0 * env.bounds().b).max(200.0);
    let rep = norm_axiom_check(|p| hbar_mu_slope(env, p, t, 4), &norm_pairs(env.dim()), env.bounds())?;
    report.push(
        "norm axioms of the slope estimator",
        rep.passed(),
        format!(
            "{} checks, {} violations{}",
            rep.checks,
            rep.violations.len(),
            rep.violations.first().map(|v| format!(", first: {v}")).unwrap_or_default()
        ),
    );
    Ok(())
}

/// Random atomic space with `n <= 5` atoms in `d <= 3` with entries in `[1, 3]`.
pub fn random_space(rng: &mut impl Rng) -> Result<AtomicSpace> {
    let n = rng.random_range(1..=5);
    let d = rng.random_range(1..=3);
    let atoms = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(1.0..=3.0)).collect())
        .collect();
    let mut probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..=1.0)).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let fix = 1.0 - probs[..n - 1].iter().sum::<f64>();
    probs[n - 1] = fix;
    AtomicSpace::new(atoms, probs, false)
}

fn corrector_oracle(report: &mut SuiteReport, rng: &mut ChaCha8Rng) -> Result<()> {
    let tol = DEFAULT_TOL;
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    let mut xi_bad = 0;
    for k in 0..100 {
        let space = random_space(rng)?;
        let p: Vec<f64> = (0..space.dim()).map(|_| rng.random_range(-2.0..=2.0)).collect();
        let out = run(&space, &p, &CandidateF::zero(&space), tol, DEFAULT_MAX_ITER);
        let brute = brute_force_minimax(&space, &p, tol)?;
        match out {
            Ok(out) => {
                let gap = (out.hbar - brute.value).abs();
                worst = worst.max(gap);
                if gap > 10.0 * tol {
                    bad.push(format!("space {k}: run {} vs oracle {}", out.hbar, brute.value));
                }
                xi_bad += out.trace.iter().filter(|e| !e.xi_bounded()).count();
            }
            Err(e) => bad.push(format!("space {k}: {e}")),
        }
    }
    report.push(
        "100 random spaces: run matches bisection within 10 tol",
        bad.is_empty(),
        format!(
            "worst gap {worst:e}; {} failures{}",
            bad.len(),
            bad.first().map(|v| format!(", first: {v}")).unwrap_or_default()
        ),
    );
    report.push("|xi| <= 1 at every step", xi_bad == 0, format!("{xi_bad} steps with |xi| > 1"));
    let fixtures = [
        (vec![vec![1.0, 2.0], vec![2.0, 1.0]], vec![1.0, 1.0], 1.0, OutcomeKind::CorrectorFound),
        (vec![vec![4.0, 4.0], vec![1.0, 3.0]], vec![-1.0, 1.0], 0.5, OutcomeKind::MinimizerNotCorrector),
    ];
    for (atoms, p, hbar, kind) in fixtures {
        let space = AtomicSpace::periodic(atoms)?;
        let out = run(&space, &p, &CandidateF::zero(&space), tol, DEFAULT_MAX_ITER)?;
        report.push(
            format!("fixture {:?}, p={p:?}", space.atoms),
            out.kind == kind && (out.hbar - hbar).abs() <= tol,
            format!("{:?} hbar={}", out.kind, out.hbar),
        );
    }
    Ok(())
}

fn tauberian(report: &mut SuiteReport, env: Option<&Environment>, rng: &mut ChaCha8Rng) -> Result<()> {
    let media: Vec<Environment> = match env {
        Some(e) => vec![e.clone()],
        None => (0..3).map(|_| random_iid(rng, 2)).collect::<Result<_>>()?,
    };
    for (k, env) in media.iter().enumerate() {
        let p: Vec<f64> = (0..env.dim()).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        let t = (200.0f64).max(10.0 * env.bounds().b);
        let slope = hbar_mu_slope(env, &p, t, 8)?;
        let disc = hbar_nu_discount(env, &p, 0.025, 1e-6)?;
        let diff = (slope.value - disc.value).abs();
        let band = slope.uncertainty + disc.uncertainty;
        report.push(
            format!("medium {k}: slope and discount estimates agree"),
            diff <= band,
            format!("slope {} discount {} |diff| {diff:e} band {band:e}", slope.value, disc.value),
        );
    }
    Ok(())
}
