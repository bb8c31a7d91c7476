use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PolishError;
use crate::error::{Error, Result};

pub const CACHE_FILE: &str = "polish_cache.jsonl";

/// One line of the append-only cache log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolishCacheEntry {
    pub key: String,
    pub value: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

/// SHA-256 over the template name and the rendered prompt, hex encoded.
pub fn cache_key(template_name: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(template_name.as_bytes());
    h.update([0u8]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Default)]
struct State {
    entries: HashMap<String, String>,
    pending: HashSet<String>,
}

/// Content-addressed store of polished responses.
///
/// Concurrent lookups of the same key are coalesced: one caller fetches,
/// the others wait for its result.
pub struct PolishCache {
    state: Mutex<State>,
    settled: Condvar,
    log: Option<Mutex<BufWriter<File>>>,
    path: Option<PathBuf>,
}

impl PolishCache {
    pub fn in_memory() -> Self {
        PolishCache {
            state: Mutex::new(State::default()),
            settled: Condvar::new(),
            log: None,
            path: None,
        }
    }

    /// Opens (creating if needed) `dir/polish_cache.jsonl` and replays it.
    /// A torn final line from an interrupted run is ignored.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(CACHE_FILE);
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                match serde_json::from_str::<PolishCacheEntry>(&line) {
                    Ok(entry) => {
                        entries.insert(entry.key, entry.value);
                    }
                    Err(e) => log::warn!("ignoring unreadable cache line in {}: {e}", path.display()),
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(PolishCache {
            state: Mutex::new(State {
                entries,
                pending: HashSet::new(),
            }),
            settled: Condvar::new(),
            log: Some(Mutex::new(BufWriter::new(file))),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.state.lock().unwrap().entries.get(key).cloned()
    }

    /// Returns the cached value for `key`, or runs `fetch`, persists its
    /// result and returns it. The boolean is true on a cache hit.
    pub fn get_or_fetch<F>(&self, key: &str, fetch: F) -> Result<(String, bool), PolishError>
    where
        F: FnOnce() -> Result<String, PolishError>,
    {
        {
            let mut state = self.state.lock().unwrap();
            loop {
                if let Some(v) = state.entries.get(key) {
                    return Ok((v.clone(), true));
                }
                if !state.pending.contains(key) {
                    state.pending.insert(key.to_string());
                    break;
                }
                state = self.settled.wait(state).unwrap();
            }
        }

        let fetched = fetch();
        let persisted = match &fetched {
            Ok(value) => self.append(key, value),
            Err(_) => Ok(()),
        };

        let mut state = self.state.lock().unwrap();
        state.pending.remove(key);
        if let Ok(value) = &fetched {
            state.entries.insert(key.to_string(), value.clone());
        }
        drop(state);
        self.settled.notify_all();

        persisted?;
        fetched.map(|v| (v, false))
    }

    fn append(&self, key: &str, value: &str) -> Result<(), PolishError> {
        let Some(log) = &self.log else {
            return Ok(());
        };
        let entry = PolishCacheEntry {
            key: key.to_string(),
            value: value.to_string(),
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let line = serde_json::to_string(&entry).expect("cache entry serializes");
        let mut w = log.lock().unwrap();
        writeln!(w, "{line}")
            .and_then(|_| w.flush())
            .map_err(|e| PolishError::Fatal(format!("cannot write polish cache: {e}")))
    }
}
