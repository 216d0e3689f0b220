mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use fpp_homog::cell::{self, TerminalCost};
use fpp_homog::corrector::{self, AtomicSpace, CandidateF};
use fpp_homog::fpp;
use fpp_homog::medium::Direction;
use fpp_homog::varform::{self, default_direction_grid};
use fpp_homog::verify::{self, Suite};
use fpp_homog::Error;
use serde_json::json;

use config::{build_env, load_config, parse_vec, resolve_medium, Format, RunConfig};
use output::Record;

#[derive(Clone, Debug)]
struct Floats(Vec<f64>);

#[derive(Clone, Debug)]
struct Ints(Vec<i64>);

fn floats(s: &str) -> Result<Floats, String> {
    parse_vec(s).map(Floats)
}

fn ints(s: &str) -> Result<Ints, String> {
    parse_vec(s).map(Ints)
}

const CSV_HELP: &str = "\
CSV columns (JSON is canonical; CSV is a projection):
  medium        direction_axis,direction_sign,weight
  timeconstant  direction,n,replica,T,m_hat,stderr   (m_hat, stderr are the per-direction summary)
  mu            x,t,p,value,reachable,box_radius
  nu            site,value                           (interior sites)
  hbar          method,p,value,uncertainty
  corrector     atom,prob,f,h
  verify        check,passed,detail
Vectors are written with ';' between entries.

Exit codes: 0 success, 1 configuration or validation error, 2 non-convergence or failed verification.
Set FPP_THREADS to cap the worker count and FPP_MAX_SITES to change the box budget.";

#[derive(Parser)]
#[command(name = "fpp", version, about = "First-passage percolation cell problems and effective Hamiltonians", after_help = CSV_HELP)]
struct Cli {
    /// Add wall-clock seconds to the output (outputs then differ between runs).
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct MediumArgs {
    /// RunConfig JSON: {"medium": {...}, "seed": .., "p": [..], ...}
    #[arg(long)]
    config: Option<PathBuf>,
    /// MediumSpec JSON; takes precedence over the config's medium.
    #[arg(long)]
    medium: Option<PathBuf>,
    /// Overrides the seed of the medium spec.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct OutArgs {
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Mu,
    Nu,
    Dual,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Dpp,
    Comparison,
    Norm,
    Oracle,
    Tauberian,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Suite {
        match s {
            SuiteArg::Dpp => Suite::Dpp,
            SuiteArg::Comparison => Suite::Comparison,
            SuiteArg::Norm => Suite::Norm,
            SuiteArg::Oracle => Suite::Oracle,
            SuiteArg::Tauberian => Suite::Tauberian,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a medium and print its weights at a site.
    Medium {
        #[command(flatten)]
        m: MediumArgs,
        #[arg(long, value_parser = ints, allow_hyphen_values = true)]
        x: Option<Ints>,
        #[command(flatten)]
        o: OutArgs,
    },
    /// Estimate time constants m(x) = lim T(0, [nx]) / n.
    Timeconstant {
        #[command(flatten)]
        m: MediumArgs,
        /// Direction x, repeatable; defaults to the |x|_inf <= 2 grid.
        #[arg(long, value_parser = floats, allow_hyphen_values = true)]
        direction: Vec<Floats>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        replicas: Option<usize>,
        /// Override the box radius (a warning is recorded if below the safe radius).
        #[arg(long)]
        radius: Option<u64>,
        #[command(flatten)]
        o: OutArgs,
    },
    /// Finite-horizon value mu(x, t) with zero terminal cost.
    Mu {
        #[command(flatten)]
        m: MediumArgs,
        #[arg(long, value_parser = floats, allow_hyphen_values = true)]
        p: Option<Floats>,
        #[arg(long, value_parser = ints, allow_hyphen_values = true)]
        x: Option<Ints>,
        #[arg(long)]
        t: Option<f64>,
        /// Restrict moves to the Euclidean ball of this radius.
        #[arg(long)]
        truncate: Option<f64>,
        #[command(flatten)]
        o: OutArgs,
    },
    /// Discounted stationary value nu_eps.
    Nu {
        #[command(flatten)]
        m: MediumArgs,
        #[arg(long, value_parser = floats, allow_hyphen_values = true)]
        p: Option<Floats>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        o: OutArgs,
    },
    /// Estimate the effective Hamiltonian.
    Hbar {
        #[command(flatten)]
        m: MediumArgs,
        #[arg(long, value_enum, default_value = "mu")]
        method: Method,
        #[arg(long, value_parser = floats, allow_hyphen_values = true)]
        p: Option<Floats>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long, value_parser = floats, allow_hyphen_values = true)]
        direction: Vec<Floats>,
        #[command(flatten)]
        o: OutArgs,
    },
    /// Run the minimizer iteration on a finite atomic space.
    Corrector {
        /// JSON: {"atoms": [[..], ..], "probs": [..], "periodic": bool}
        #[arg(long)]
        space: PathBuf,
        #[arg(long, value_parser = floats, allow_hyphen_values = true)]
        p: Floats,
        /// Starting candidate (mean zero); defaults to 0.
        #[arg(long, value_parser = floats, allow_hyphen_values = true)]
        f0: Option<Floats>,
        #[arg(long, default_value_t = corrector::DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = corrector::DEFAULT_MAX_ITER)]
        max_iter: usize,
        /// Include the per-iteration trace.
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        o: OutArgs,
    },
    /// Run an invariant battery with fixed seeds.
    Verify {
        #[arg(value_enum)]
        suite: SuiteArg,
        #[command(flatten)]
        m: MediumArgs,
        #[command(flatten)]
        o: OutArgs,
    },
}

fn pick<T: Clone>(flag: Option<T>, cfg: &Option<T>, default: T) -> T {
    flag.or_else(|| cfg.clone()).unwrap_or(default)
}

fn momentum(flag: Option<Floats>, cfg: &RunConfig) -> anyhow::Result<Vec<f64>> {
    flag.map(|f| f.0)
        .or_else(|| cfg.p.clone())
        .ok_or_else(|| Error::Validation("momentum --p is required".into()).into())
}

/// Failure of a verification battery.
#[derive(Debug)]
struct VerifyFailed(String);

impl std::fmt::Display for VerifyFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for VerifyFailed {}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let start = Instant::now();
    let timing = cli.timing;
    let (record, o, cfg) = match cli.command {
        Command::Medium { m, x, o } => {
            let cfg = load_config(m.config.as_deref())?;
            let spec = resolve_medium(&cfg, m.medium.as_deref(), m.seed)?;
            let env = build_env(&spec)?;
            let x = x.map(|v| v.0).or_else(|| cfg.x.clone()).unwrap_or(vec![0; env.dim()]);
            if x.len() != env.dim() {
                return Err(Error::Validation("site has the wrong dimension".into()).into());
            }
            let weights: Vec<_> = Direction::all(env.dim())
                .into_iter()
                .map(|a| json!({"axis": a.axis, "sign": a.sign, "weight": env.weight(&x, a)}))
                .collect();
            let rows = Direction::all(env.dim())
                .into_iter()
                .map(|a| vec![a.axis.to_string(), a.sign.to_string(), env.weight(&x, a).to_string()])
                .collect();
            let w = env.bounds();
            let mut rec = Record::new("medium", &spec);
            rec.inputs = json!({"medium": spec, "x": x});
            rec.outputs = json!({
                "bounds": {"a": w.a, "b": w.b},
                "weights": weights,
                "atom": env.atom_of(&x).ok(),
            });
            rec.csv = (vec!["direction_axis", "direction_sign", "weight"], rows);
            (rec, o, cfg)
        }
        Command::Timeconstant {
            m,
            direction,
            n,
            replicas,
            radius,
            o,
        } => {
            let cfg = load_config(m.config.as_deref())?;
            let spec = resolve_medium(&cfg, m.medium.as_deref(), m.seed)?;
            let env = build_env(&spec)?;
            let dirs = if direction.is_empty() {
                cfg.directions.clone().unwrap_or_else(|| default_direction_grid(env.dim()))
            } else {
                direction.into_iter().map(|d| d.0).collect()
            };
            let n = pick(n, &cfg.n, 100);
            let replicas = pick(replicas, &cfg.replicas, 10);
            let est = fpp::time_constants(&env, &dirs, n, replicas, radius)?;
            let mut rows = Vec::new();
            for e in &est {
                for (r, t) in e.samples.iter().enumerate() {
                    rows.push(vec![
                        output::join(&e.direction),
                        n.to_string(),
                        r.to_string(),
                        t.to_string(),
                        e.estimate.to_string(),
                        e.stderr.to_string(),
                    ]);
                }
            }
            let mut rec = Record::new("timeconstant", &spec);
            rec.inputs = json!({"medium": spec, "directions": dirs, "n": n, "replicas": replicas, "radius": radius});
            rec.outputs = json!({"estimates": est});
            rec.metadata = json!({"box_radius": est.first().map(|e| e.box_radius)});
            rec.csv = (vec!["direction", "n", "replica", "T", "m_hat", "stderr"], rows);
            (rec, o, cfg)
        }
        Command::Mu { m, p, x, t, truncate, o } => {
            let cfg = load_config(m.config.as_deref())?;
            let spec = resolve_medium(&cfg, m.medium.as_deref(), m.seed)?;
            let env = build_env(&spec)?;
            let p = momentum(p, &cfg)?;
            let x = x.map(|v| v.0).or_else(|| cfg.x.clone()).unwrap_or(vec![0; env.dim()]);
            let t = pick(t, &cfg.t, 10.0);
            let zero = TerminalCost::zero();
            let v = cell::finite_horizon(&env, &p, &x, t, &zero)?;
            let truncated = match truncate {
                Some(k) => Some(cell::mu_truncated(&env, &p, &x, t, &zero, k)?),
                None => None,
            };
            let mut rec = Record::new("mu", &spec);
            rec.inputs = json!({"medium": spec, "p": p, "x": x, "t": t, "truncate": truncate, "terminal_cost": "zero"});
            rec.outputs = json!({"value": v.value, "truncated_value": truncated});
            rec.metadata = json!({"reachable": v.reachable, "box_radius": v.box_radius});
            rec.csv = (
                vec!["x", "t", "p", "value", "reachable", "box_radius"],
                vec![vec![
                    output::join(&x),
                    t.to_string(),
                    output::join(&p),
                    v.value.to_string(),
                    v.reachable.to_string(),
                    v.box_radius.to_string(),
                ]],
            );
            (rec, o, cfg)
        }
        Command::Nu { m, p, eps, tol, o } => {
            let cfg = load_config(m.config.as_deref())?;
            let spec = resolve_medium(&cfg, m.medium.as_deref(), m.seed)?;
            let env = build_env(&spec)?;
            let p = momentum(p, &cfg)?;
            let eps = pick(eps, &cfg.eps, 0.1);
            let tol = pick(tol, &cfg.tol, 1e-6);
            let v = cell::nu(&env, &p, eps, tol)?;
            let res = cell::hjb_residual(&v, &env, &p);
            let sites = v.sites_within(v.interior);
            let values: Vec<_> = sites.iter().map(|y| json!({"site": y, "value": v.get(y)})).collect();
            let (lo, hi) = v.stated_bounds(&env);
            let (lip, lip_bad) = v.lipschitz_check(&env, tol);
            let mut rec = Record::new("nu", &spec);
            rec.inputs = json!({"medium": spec, "p": p, "eps": eps, "tol": tol});
            rec.outputs = json!({
                "value_at_origin": v.get(&vec![0; env.dim()]),
                "interior": values,
                "hjb_residual": res,
            });
            rec.metadata = json!({
                "box_radius": v.radius(),
                "interior_radius": v.interior,
                "boundary_value": v.boundary_value,
                "sweeps": v.sweeps,
                "last_change": v.last_change,
                "bounds": [lo, hi],
                "bound_violations": v.bound_violations(&env, tol).len(),
                "max_edge_difference": lip,
                "lipschitz_violations": lip_bad,
            });
            rec.csv = (
                vec!["site", "value"],
                sites
                    .iter()
                    .map(|y| vec![output::join(y), v.get(y).unwrap().to_string()])
                    .collect(),
            );
            (rec, o, cfg)
        }
        Command::Hbar {
            m,
            method,
            p,
            t,
            replicas,
            eps,
            tol,
            n,
            direction,
            o,
        } => {
            let cfg = load_config(m.config.as_deref())?;
            let spec = resolve_medium(&cfg, m.medium.as_deref(), m.seed)?;
            let env = build_env(&spec)?;
            let p = momentum(p, &cfg)?;
            let replicas = pick(replicas, &cfg.replicas, 8);
            let (est, inputs) = match method {
                Method::Mu => {
                    let t = pick(t, &cfg.t, 200.0);
                    (
                        varform::hbar_mu_slope(&env, &p, t, replicas)?,
                        json!({"method": "mu", "t": t, "replicas": replicas}),
                    )
                }
                Method::Nu => {
                    let eps = pick(eps, &cfg.eps, 0.025);
                    let tol = pick(tol, &cfg.tol, 1e-6);
                    (
                        varform::hbar_nu_discount(&env, &p, eps, tol)?,
                        json!({"method": "nu", "eps": eps, "tol": tol}),
                    )
                }
                Method::Dual => {
                    let n = pick(n, &cfg.n, 100);
                    let dirs = if direction.is_empty() {
                        cfg.directions.clone().unwrap_or_else(|| default_direction_grid(env.dim()))
                    } else {
                        direction.into_iter().map(|d| d.0).collect()
                    };
                    (
                        varform::hbar_dual(&env, &p, &dirs, n, replicas)?,
                        json!({"method": "dual", "n": n, "replicas": replicas, "directions": dirs}),
                    )
                }
            };
            let mut rec = Record::new("hbar", &spec);
            rec.inputs = json!({"medium": spec, "p": p, "solver": inputs});
            rec.outputs = json!({"method": est.method, "value": est.value});
            rec.uncertainty = Some(est.uncertainty);
            rec.metadata = serde_json::to_value(&est.meta)?;
            rec.csv = (
                vec!["method", "p", "value", "uncertainty"],
                vec![vec![
                    serde_json::to_value(est.method)?.as_str().unwrap_or_default().to_string(),
                    output::join(&p),
                    est.value.to_string(),
                    est.uncertainty.to_string(),
                ]],
            );
            (rec, o, cfg)
        }
        Command::Corrector {
            space,
            p,
            f0,
            tol,
            max_iter,
            trace,
            o,
        } => {
            let text = std::fs::read_to_string(&space).with_context(|| format!("reading {}", space.display()))?;
            let space: AtomicSpace =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", space.display()))?;
            let space = space.validated()?;
            let f0 = match f0 {
                Some(f) => CandidateF::new(&space, f.0)?,
                None => CandidateF::zero(&space),
            };
            let out = corrector::run(&space, &p.0, &f0, tol, max_iter)?;
            let brute = corrector::brute_force_minimax(&space, &p.0, tol)?;
            let mut rec = Record::for_space("corrector", &space);
            rec.inputs = json!({"space": space, "p": p.0, "f0": f0.values(), "tol": tol, "max_iter": max_iter});
            rec.outputs = json!({
                "kind": out.kind,
                "f": out.f,
                "h": out.h,
                "hbar": out.hbar,
                "iterations": out.iterations,
                "bisection_value": brute.value,
            });
            if trace {
                rec.outputs["trace"] = serde_json::to_value(&out.trace)?;
            }
            rec.csv = (
                vec!["atom", "prob", "f", "h"],
                (0..space.n())
                    .map(|i| {
                        vec![
                            i.to_string(),
                            space.probs[i].to_string(),
                            out.f[i].to_string(),
                            out.h[i].to_string(),
                        ]
                    })
                    .collect(),
            );
            (rec, o, RunConfig::default())
        }
        Command::Verify { suite, m, o } => {
            let cfg = load_config(m.config.as_deref())?;
            let spec = if m.medium.is_some() || cfg.medium.is_some() {
                Some(resolve_medium(&cfg, m.medium.as_deref(), m.seed)?)
            } else {
                None
            };
            let env = spec.as_ref().map(build_env).transpose()?;
            let seed = m.seed.or(cfg.seed).unwrap_or(0);
            let report = verify::run_suite(suite.into(), env.as_ref(), seed)?;
            let mut rec = match &spec {
                Some(s) => Record::new("verify", s),
                None => Record::bare("verify"),
            };
            rec.seed = Some(seed);
            rec.inputs = json!({"suite": report.suite, "medium": spec, "seed": seed});
            rec.outputs = json!({"passed": report.passed(), "checks": report.checks});
            rec.csv = (
                vec!["check", "passed", "detail"],
                report
                    .checks
                    .iter()
                    .map(|c| vec![c.name.clone(), c.passed.to_string(), c.detail.clone()])
                    .collect(),
            );
            let failure = report.first_failure().map(|c| format!("{}: {}", c.name, c.detail));
            output::emit(rec, &o.out.or(cfg.out.clone()), o.format.or(cfg.format).unwrap_or_default(), timing.then(|| start.elapsed()))?;
            return match failure {
                Some(f) => Err(VerifyFailed(f).into()),
                None => Ok(()),
            };
        }
    };
    output::emit(
        record,
        &o.out.or(cfg.out.clone()),
        o.format.or(cfg.format).unwrap_or_default(),
        timing.then(|| start.elapsed()),
    )
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<VerifyFailed>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::NonConvergence { .. } | Error::Degenerate(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("FPP_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
