use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use fpp_homog::corrector::AtomicSpace;
use fpp_homog::MediumSpec;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{spec_hash, Format};

/// One result document. Apart from the opt-in wall-clock field it is a pure
/// function of the inputs and the crate version.
#[derive(Serialize)]
pub struct Record {
    pub command: &'static str,
    pub version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub medium_hash: Option<String>,
    pub inputs: Value,
    pub outputs: Value,
    pub uncertainty: Option<f64>,
    pub metadata: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
    #[serde(skip)]
    pub csv: (Vec<&'static str>, Vec<Vec<String>>),
}

impl Record {
    pub fn bare(command: &'static str) -> Self {
        Record {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: None,
            medium_hash: None,
            inputs: Value::Null,
            outputs: Value::Null,
            uncertainty: None,
            metadata: Value::Object(Default::default()),
            wall_clock_seconds: None,
            csv: (vec![], vec![]),
        }
    }

    pub fn new(command: &'static str, spec: &MediumSpec) -> Self {
        Record {
            seed: Some(spec.seed),
            medium_hash: Some(spec_hash(spec)),
            ..Record::bare(command)
        }
    }

    /// Records keyed by an atomic space hash the space's canonical JSON.
    pub fn for_space(command: &'static str, space: &AtomicSpace) -> Self {
        let text = serde_json::to_string(space).expect("space serializes");
        Record {
            medium_hash: Some(hex::encode(Sha256::digest(text.as_bytes()))),
            ..Record::bare(command)
        }
    }
}

pub fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

pub fn emit(mut rec: Record, out: &Option<PathBuf>, format: Format, elapsed: Option<Duration>) -> anyhow::Result<()> {
    rec.wall_clock_seconds = elapsed.map(|d| d.as_secs_f64());
    let bytes = match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&rec)?;
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&rec.csv.0)?;
            for row in &rec.csv.1 {
                w.write_record(row)?;
            }
            w.into_inner()?
        }
    };
    match out {
        Some(path) => std::fs::write(path, bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}
