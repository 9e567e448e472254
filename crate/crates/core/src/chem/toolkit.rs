//! Bridge to an external cheminformatics toolkit.
//!
//! Structure validation, canonical SMILES, SA scores and circular fingerprints
//! come from RDKit, driven through a small Python worker process that speaks
//! JSON lines over stdin/stdout. The interpreter defaults to `python3` and can
//! be overridden with `MATVAE_PYTHON`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex, OnceLock};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use crate::error::{Error, Result};

const WORKER: &str = include_str!("rdkit_worker.py");

/// Operations the rest of the crate needs from a cheminformatics toolkit.
/// All methods are batched and per-item: a bad SMILES yields `false` / `None`
/// for that entry only.
pub trait ChemToolkit: Send + Sync {
    fn name(&self) -> String;
    fn validate(&self, smiles: &[String]) -> Result<Vec<bool>>;
    fn canonical(&self, smiles: &[String]) -> Result<Vec<Option<String>>>;
    /// SA score in [1, 10]; `None` for unparsable or empty structures.
    fn sa_score(&self, smiles: &[String]) -> Result<Vec<Option<f64>>>;
    /// On-bit indices of a hashed Morgan fingerprint.
    fn morgan(&self, smiles: &[String], radius: u32, nbits: u32) -> Result<Vec<Option<Vec<u32>>>>;
}

struct Worker {
    _child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct RdkitToolkit {
    worker: Mutex<Worker>,
    version: String,
}

#[derive(Deserialize)]
struct Ready {
    ready: bool,
    #[serde(default)]
    version: String,
    #[serde(default)]
    error: String,
}

#[derive(Deserialize)]
struct Response<T> {
    ok: bool,
    #[serde(default = "none")]
    result: Option<T>,
    #[serde(default)]
    error: String,
}

fn none<T>() -> Option<T> {
    None
}

impl RdkitToolkit {
    pub fn spawn() -> Result<Self> {
        let python = std::env::var("MATVAE_PYTHON").unwrap_or_else(|_| "python3".into());
        let mut child = Command::new(&python)
            .arg("-c")
            .arg(WORKER)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Toolkit(format!("cannot start {python}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut line = String::new();
        stdout.read_line(&mut line)?;
        let ready: Ready =
            serde_json::from_str(&line).map_err(|_| Error::Toolkit(format!("unexpected worker handshake {line:?}")))?;
        if !ready.ready {
            return Err(Error::Toolkit(format!("RDKit unavailable: {}", ready.error)));
        }
        Ok(Self {
            worker: Mutex::new(Worker {
                _child: child,
                stdin,
                stdout,
            }),
            version: ready.version,
        })
    }

    /// Process-wide shared worker, started on first use.
    pub fn shared() -> Result<Arc<RdkitToolkit>> {
        static SHARED: OnceLock<std::result::Result<Arc<RdkitToolkit>, String>> = OnceLock::new();
        SHARED
            .get_or_init(|| RdkitToolkit::spawn().map(Arc::new).map_err(|e| e.to_string()))
            .clone()
            .map_err(Error::Toolkit)
    }

    fn call<T: DeserializeOwned>(&self, request: serde_json::Value) -> Result<T> {
        let mut w = self
            .worker
            .lock()
            .map_err(|_| Error::Toolkit("worker lock poisoned".into()))?;
        let mut line = serde_json::to_string(&request)?;
        line.push('\n');
        w.stdin.write_all(line.as_bytes())?;
        w.stdin.flush()?;
        let mut buf = String::new();
        if w.stdout.read_line(&mut buf)? == 0 {
            return Err(Error::Toolkit("worker exited".into()));
        }
        let resp: Response<T> = serde_json::from_str(&buf)?;
        match (resp.ok, resp.result) {
            (true, Some(r)) => Ok(r),
            _ => Err(Error::Toolkit(resp.error)),
        }
    }
}

impl ChemToolkit for RdkitToolkit {
    fn name(&self) -> String {
        format!("rdkit-{}", self.version)
    }

    fn validate(&self, smiles: &[String]) -> Result<Vec<bool>> {
        self.call(json!({"op": "validate", "smiles": smiles}))
    }

    fn canonical(&self, smiles: &[String]) -> Result<Vec<Option<String>>> {
        self.call(json!({"op": "canonical", "smiles": smiles}))
    }

    fn sa_score(&self, smiles: &[String]) -> Result<Vec<Option<f64>>> {
        self.call(json!({"op": "sa", "smiles": smiles}))
    }

    fn morgan(&self, smiles: &[String], radius: u32, nbits: u32) -> Result<Vec<Option<Vec<u32>>>> {
        self.call(json!({"op": "morgan", "smiles": smiles, "radius": radius, "nbits": nbits}))
    }
}

/// True iff `smiles` parses as a valid molecule under `toolkit`.
///
/// The empty string is the empty molecule and counts as valid.
pub fn validate_structure(toolkit: &dyn ChemToolkit, smiles: &str) -> bool {
    toolkit.validate(&[smiles.to_string()]).map(|v| v[0]).unwrap_or(false)
}
