use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One recorded exchange. Session logs are JSON lines of these; cache entries
/// use the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub key: String,
    pub job_id: String,
    pub model: String,
    pub temperature: f64,
    pub response: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub provider: String,
    pub timestamp: u64,
}

/// Content-addressed response store: `<dir>/<key[..2]>/<key>.json`.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn path(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("__");
        self.dir.join(shard).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<SessionRecord>> {
        let path = self.path(key);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Write through a temporary file and rename so readers never see a
    /// partial entry.
    pub fn put(&self, record: &SessionRecord) -> Result<()> {
        let path = self.path(&record.key);
        let parent = path.parent().expect("cache path has a parent");
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
        let body = serde_json::to_vec(record)?;
        fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

/// Append-only JSON-lines session recorder, safe for concurrent appends.
#[derive(Debug)]
pub struct SessionLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl SessionLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &SessionRecord) -> Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        let mut file = self.file.lock().expect("session log lock");
        file.write_all(&line).map_err(|e| Error::io(&self.path, e))
    }
}

pub(crate) fn read_session(path: &Path) -> Result<Vec<SessionRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(key: &str) -> SessionRecord {
        SessionRecord {
            key: key.into(),
            job_id: "j".into(),
            model: "m".into(),
            temperature: 0.0,
            response: "{\"a\": 0.1}".into(),
            input_tokens: 10,
            output_tokens: 3,
            provider: "mock".into(),
            timestamp: 0,
        }
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        assert!(cache.get("abcdef").unwrap().is_none());
        cache.put(&record("abcdef")).unwrap();
        assert_eq!(cache.get("abcdef").unwrap(), Some(record("abcdef")));
    }

    #[test]
    fn session_append_and_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s/session.jsonl");
        let log = SessionLog::open(&path).unwrap();
        log.append(&record("a")).unwrap();
        log.append(&record("b")).unwrap();
        drop(log);
        let back = read_session(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].key, "b");
    }
}
