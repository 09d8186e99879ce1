use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Backend, BackendError, FixtureBackend, Request, Role};

/// One line of the JSON-lines record log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub hash: String,
    pub role: Role,
    pub latency_ms: f64,
    pub key: Value,
    pub response: Value,
}

/// Append-only sink for recorded requests. Writes are serialized; entries
/// can additionally be mirrored into a fixture directory as they arrive.
pub struct RecordLog {
    file: Option<Mutex<File>>,
    fixture_dir: Option<PathBuf>,
}

impl RecordLog {
    pub fn to_file(path: &Path) -> Result<Self, BackendError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| BackendError::Io { path: path.to_path_buf(), source })?;
        Ok(Self { file: Some(Mutex::new(file)), fixture_dir: None })
    }

    /// Write every response straight into `dir` as a fixture.
    pub fn to_fixtures(dir: &Path) -> Self {
        Self { file: None, fixture_dir: Some(dir.to_path_buf()) }
    }

    pub fn with_fixture_dir(mut self, dir: &Path) -> Self {
        self.fixture_dir = Some(dir.to_path_buf());
        self
    }

    fn append(&self, entry: &RecordEntry) -> Result<(), BackendError> {
        if let Some(file) = &self.file {
            let mut line = serde_json::to_string(entry).expect("record entries serialize");
            line.push('\n');
            let mut f = file.lock().unwrap_or_else(|p| p.into_inner());
            f.write_all(line.as_bytes())
                .map_err(|source| BackendError::Io { path: PathBuf::from("<record log>"), source })?;
        }
        if let Some(dir) = &self.fixture_dir {
            FixtureBackend::write(dir, entry.role, &entry.key, &entry.hash, &entry.response)?;
        }
        Ok(())
    }
}

/// Wraps a backend and logs every successful call.
pub struct Recorder {
    inner: Arc<dyn Backend>,
    log: Arc<RecordLog>,
}

impl Recorder {
    pub fn new(inner: Arc<dyn Backend>, log: Arc<RecordLog>) -> Self {
        Self { inner, log }
    }
}

impl Backend for Recorder {
    fn call(&self, request: &Request) -> Result<Value, BackendError> {
        let started = Instant::now();
        let response = self.inner.call(request)?;
        let entry = RecordEntry {
            hash: request.hash(),
            role: request.role,
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
            key: request.key.clone(),
            response: response.clone(),
        };
        self.log.append(&entry)?;
        Ok(response)
    }
}

pub fn read_record_log(path: &Path) -> Result<Vec<RecordEntry>, BackendError> {
    let io = |source| BackendError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let e: RecordEntry = serde_json::from_str(&line)
            .map_err(|e| BackendError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(e);
    }
    Ok(out)
}

/// Turn a record log into a fixture directory; returns the number of
/// distinct fixtures written.
pub fn materialize_fixtures(log: &Path, dir: &Path) -> Result<usize, BackendError> {
    let mut seen = std::collections::BTreeSet::new();
    for e in read_record_log(log)? {
        FixtureBackend::write(dir, e.role, &e.key, &e.hash, &e.response)?;
        seen.insert((e.role, e.hash));
    }
    Ok(seen.len())
}
