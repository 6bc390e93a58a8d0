//! Append-only verdict log. Replaying it keeps the last verdict per
//! (expert, sample).

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::ReviewError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Acceptable,
    NotAcceptable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub expert_id: String,
    pub sample_id: String,
    pub decision: Decision,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

/// Current verdicts keyed by `(expert_id, sample_id)`.
pub type VerdictMap = BTreeMap<(String, String), Verdict>;

/// Single-writer log with a shared snapshot for readers.
#[derive(Debug)]
pub struct VerdictStore {
    path: PathBuf,
    writer: Mutex<File>,
    snapshot: RwLock<Arc<VerdictMap>>,
}

fn replay(path: &Path) -> Result<VerdictMap, ReviewError> {
    let mut map = VerdictMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(map),
        Err(e) => return Err(ReviewError::Log(format!("{}: {e}", path.display()))),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| ReviewError::Log(format!("{}: {e}", path.display())))?;
    let last = lines.len();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Verdict>(line) {
            Ok(v) => {
                map.insert((v.expert_id.clone(), v.sample_id.clone()), v);
            }
            // a torn final line from an interrupted append is dropped
            Err(_) if i + 1 == last && !line.ends_with('}') => {}
            Err(e) => {
                return Err(ReviewError::Log(format!("{} line {}: {e}", path.display(), i + 1)));
            }
        }
    }
    Ok(map)
}

impl VerdictStore {
    /// Opens (creating if needed) the log at `path` and replays it.
    pub fn open(path: &Path) -> Result<Self, ReviewError> {
        let map = replay(path)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| ReviewError::Log(format!("{}: {e}", dir.display())))?;
        }
        // a torn final line is cut so the next append starts on a fresh line
        let mut needs_newline = false;
        if let Ok(bytes) = std::fs::read(path) {
            if bytes.last().is_some_and(|&b| b != b'\n') {
                let start = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
                if serde_json::from_slice::<Verdict>(&bytes[start..]).is_ok() {
                    needs_newline = true;
                } else {
                    let f = OpenOptions::new().write(true).open(path).map_err(|e| ReviewError::Log(e.to_string()))?;
                    f.set_len(start as u64).map_err(|e| ReviewError::Log(e.to_string()))?;
                }
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ReviewError::Log(format!("{}: {e}", path.display())))?;
        if needs_newline {
            file.write_all(b"\n").map_err(|e| ReviewError::Log(e.to_string()))?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            writer: Mutex::new(file),
            snapshot: RwLock::new(Arc::new(map)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends and applies `v`, replacing any earlier verdict by the same
    /// expert on the same sample.
    pub fn record(&self, v: Verdict) -> Result<(), ReviewError> {
        let mut line = serde_json::to_string(&v).expect("verdict serializes");
        line.push('\n');
        let mut file = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        file.write_all(line.as_bytes())
            .and_then(|()| file.sync_data())
            .map_err(|e| ReviewError::Log(format!("{}: {e}", self.path.display())))?;
        let mut next = VerdictMap::clone(&self.snapshot());
        next.insert((v.expert_id.clone(), v.sample_id.clone()), v);
        *self.snapshot.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(next);
        Ok(())
    }

    /// The verdicts as of the last completed write.
    pub fn snapshot(&self) -> Arc<VerdictMap> {
        Arc::clone(&self.snapshot.read().unwrap_or_else(|p| p.into_inner()))
    }
}
