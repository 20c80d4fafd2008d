use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{CacheError, Key};

#[derive(Debug, Clone, PartialEq)]
pub struct Version {
    pub version: u64,
    pub value: Vec<u8>,
    pub written_at: f64,
}

#[derive(Debug, Clone, Default)]
struct History {
    latest: u64,
    /// Oldest first; at most `retention` entries.
    versions: VecDeque<Version>,
}

/// Authoritative versioned map with bounded per-key history and optional
/// append-only log.
///
/// Log records are `u32 LE key length, key, u32 LE value length, value,
/// u64 LE version, u64 LE write time in milliseconds`.
#[derive(Debug)]
pub struct PersistentStore {
    retention: usize,
    map: HashMap<Key, History>,
    log: Option<BufWriter<File>>,
}

impl PersistentStore {
    pub fn new(retention: usize) -> Self {
        Self { retention: retention.max(1), map: HashMap::new(), log: None }
    }

    /// Replays an existing log (if any) and appends subsequent writes to it.
    pub fn with_log(retention: usize, path: &Path) -> Result<Self, CacheError> {
        let mut s = Self::new(retention);
        if path.exists() {
            for rec in read_log(path)? {
                s.install(rec.0, rec.1, rec.2, rec.3);
            }
        }
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        s.log = Some(BufWriter::new(f));
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn install(&mut self, key: Key, value: Vec<u8>, version: u64, written_at: f64) {
        let h = self.map.entry(key).or_default();
        h.latest = h.latest.max(version);
        h.versions.push_back(Version { version, value, written_at });
        while h.versions.len() > self.retention {
            h.versions.pop_front();
        }
    }

    /// Stores a new version and returns its number (previous + 1).
    pub fn put(&mut self, key: &[u8], value: &[u8], now: f64) -> Result<u64, CacheError> {
        let version = self.map.get(key).map_or(0, |h| h.latest) + 1;
        if let Some(w) = &mut self.log {
            w.write_all(&(key.len() as u32).to_le_bytes())?;
            w.write_all(key)?;
            w.write_all(&(value.len() as u32).to_le_bytes())?;
            w.write_all(value)?;
            w.write_all(&version.to_le_bytes())?;
            w.write_all(&((now * 1000.0).round() as u64).to_le_bytes())?;
        }
        self.install(key.to_vec(), value.to_vec(), version, now);
        Ok(version)
    }

    pub fn flush(&mut self) -> Result<(), CacheError> {
        if let Some(w) = &mut self.log {
            w.flush()?;
        }
        Ok(())
    }

    pub fn latest(&self, key: &[u8]) -> Option<&Version> {
        self.map.get(key).and_then(|h| h.versions.back())
    }

    pub fn latest_version(&self, key: &[u8]) -> u64 {
        self.map.get(key).map_or(0, |h| h.latest)
    }

    /// Newest retained version not newer than `snapshot`.
    pub fn at_snapshot(&self, key: &[u8], snapshot: u64) -> Option<&Version> {
        self.map.get(key)?.versions.iter().rev().find(|v| v.version <= snapshot)
    }

    pub fn versions(&self, key: &[u8]) -> impl Iterator<Item = &Version> {
        self.map.get(key).into_iter().flat_map(|h| h.versions.iter())
    }
}

impl Drop for PersistentStore {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

/// `(key, value, version, write time in seconds)` records of a log file.
pub fn read_log(path: &Path) -> Result<Vec<(Key, Vec<u8>, u64, f64)>, CacheError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    let mut len = [0u8; 4];
    loop {
        match r.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let mut key = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut key).map_err(|_| CacheError::CorruptLog)?;
        r.read_exact(&mut len).map_err(|_| CacheError::CorruptLog)?;
        let mut value = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut value).map_err(|_| CacheError::CorruptLog)?;
        let mut word = [0u8; 8];
        r.read_exact(&mut word).map_err(|_| CacheError::CorruptLog)?;
        let version = u64::from_le_bytes(word);
        r.read_exact(&mut word).map_err(|_| CacheError::CorruptLog)?;
        out.push((key, value, version, u64::from_le_bytes(word) as f64 / 1000.0));
    }
    Ok(out)
}
