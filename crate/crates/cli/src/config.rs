use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fpp_homog::{Environment, MediumSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Experiment configuration file. Only `medium` is required; command-line
/// flags override every other field.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub medium: Option<MediumSpec>,
    pub seed: Option<u64>,
    pub p: Option<Vec<f64>>,
    pub x: Option<Vec<i64>>,
    pub t: Option<f64>,
    pub eps: Option<f64>,
    pub n: Option<u64>,
    pub replicas: Option<usize>,
    pub tol: Option<f64>,
    pub directions: Option<Vec<Vec<f64>>>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    match path {
        Some(p) => read_json(p),
        None => Ok(RunConfig::default()),
    }
}

/// The medium named by `--medium`, else the config's; `--seed` overrides.
pub fn resolve_medium(cfg: &RunConfig, medium: Option<&Path>, seed: Option<u64>) -> anyhow::Result<MediumSpec> {
    let mut spec = match medium {
        Some(p) => read_json::<MediumSpec>(p)?,
        None => match &cfg.medium {
            Some(m) => m.clone(),
            None => bail!(fpp_homog::Error::Validation("no medium given; use --config or --medium".into())),
        },
    };
    if let Some(s) = seed.or(cfg.seed) {
        spec.seed = s;
    }
    Ok(spec)
}

pub fn build_env(spec: &MediumSpec) -> anyhow::Result<Environment> {
    Ok(Environment::new(spec.clone())?)
}

/// SHA-256 of the spec's canonical JSON.
pub fn spec_hash(spec: &MediumSpec) -> String {
    let text = serde_json::to_string(spec).expect("spec serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn parse_vec<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<T>().map_err(|_| format!("cannot parse {v:?} in {s:?}")))
        .collect()
}
