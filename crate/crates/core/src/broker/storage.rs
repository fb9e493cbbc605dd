//! Simulated storage providers with fault injection and request counters.
//!
//! Directory-backed providers keep one directory per location with files
//! named `<file_id>.<share_id>.share`.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StorageError {
    #[error("provider {0} is unavailable")]
    Unavailable(String),
    #[error("{name} not found at {location}")]
    NotFound { location: String, name: String },
    #[error("I/O error at {location}: {message}")]
    Io { location: String, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Faults {
    pub unavailable: bool,
    /// Simulated latency added to every request, in milliseconds.
    pub slow_ms: u64,
    /// Flip one bit of every blob served.
    pub corrupting: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct RequestCounts {
    pub puts: usize,
    pub gets: usize,
    pub lists: usize,
    /// Total simulated latency accumulated by `slow_ms`.
    pub latency_ms: u64,
}

#[derive(Debug)]
enum Backend {
    Memory(BTreeMap<String, Vec<u8>>),
    Directory(PathBuf),
}

#[derive(Debug)]
pub struct StorageProvider {
    location_id: String,
    backend: Backend,
    pub faults: Faults,
    counts: RequestCounts,
}

pub fn share_file_name(file_id: &str, share_id: u8) -> String {
    format!("{file_id}.{share_id}.share")
}

impl StorageProvider {
    pub fn in_memory(location_id: impl Into<String>) -> Self {
        Self {
            location_id: location_id.into(),
            backend: Backend::Memory(BTreeMap::new()),
            faults: Faults::default(),
            counts: RequestCounts::default(),
        }
    }

    /// Stores blobs under `root/<location_id>/`.
    pub fn in_directory(root: impl Into<PathBuf>, location_id: impl Into<String>) -> Result<Self, StorageError> {
        let location_id = location_id.into();
        let dir = root.into().join(&location_id);
        fs::create_dir_all(&dir).map_err(|e| StorageError::Io {
            location: location_id.clone(),
            message: e.to_string(),
        })?;
        Ok(Self {
            location_id,
            backend: Backend::Directory(dir),
            faults: Faults::default(),
            counts: RequestCounts::default(),
        })
    }

    pub fn location_id(&self) -> &str {
        &self.location_id
    }

    pub fn counts(&self) -> RequestCounts {
        self.counts
    }

    pub fn reset_counts(&mut self) {
        self.counts = RequestCounts::default();
    }

    fn io(&self, e: std::io::Error) -> StorageError {
        StorageError::Io {
            location: self.location_id.clone(),
            message: e.to_string(),
        }
    }

    fn admit(&mut self) -> Result<(), StorageError> {
        self.counts.latency_ms += self.faults.slow_ms;
        if self.faults.unavailable {
            return Err(StorageError::Unavailable(self.location_id.clone()));
        }
        Ok(())
    }

    pub fn put(&mut self, name: &str, blob: &[u8]) -> Result<(), StorageError> {
        self.counts.puts += 1;
        self.admit()?;
        match &mut self.backend {
            Backend::Memory(m) => {
                m.insert(name.to_string(), blob.to_vec());
                Ok(())
            }
            Backend::Directory(dir) => {
                let path = dir.join(name);
                fs::write(path, blob).map_err(|e| self.io(e))
            }
        }
    }

    pub fn get(&mut self, name: &str) -> Result<Vec<u8>, StorageError> {
        self.counts.gets += 1;
        self.admit()?;
        let mut blob = match &self.backend {
            Backend::Memory(m) => m.get(name).cloned(),
            Backend::Directory(dir) => match fs::read(dir.join(name)) {
                Ok(b) => Some(b),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
                Err(e) => return Err(self.io(e)),
            },
        }
        .ok_or_else(|| StorageError::NotFound {
            location: self.location_id.clone(),
            name: name.to_string(),
        })?;
        if self.faults.corrupting && !blob.is_empty() {
            let last = blob.len() - 1;
            blob[last] ^= 0x01;
        }
        Ok(blob)
    }

    pub fn list(&mut self) -> Result<Vec<String>, StorageError> {
        self.counts.lists += 1;
        self.admit()?;
        match &self.backend {
            Backend::Memory(m) => Ok(m.keys().cloned().collect()),
            Backend::Directory(dir) => {
                let mut names = Vec::new();
                for entry in fs::read_dir(dir).map_err(|e| self.io(e))? {
                    let entry = entry.map_err(|e| self.io(e))?;
                    names.push(entry.file_name().to_string_lossy().into_owned());
                }
                names.sort();
                Ok(names)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exercise(mut p: StorageProvider) {
        p.put("f.1.share", b"blob").unwrap();
        assert_eq!(p.get("f.1.share").unwrap(), b"blob");
        assert_eq!(p.list().unwrap(), ["f.1.share"]);
        assert!(matches!(p.get("missing"), Err(StorageError::NotFound { .. })));

        p.faults.corrupting = true;
        assert_eq!(p.get("f.1.share").unwrap(), b"bloc");
        p.faults = Faults {
            unavailable: true,
            slow_ms: 250,
            corrupting: false,
        };
        assert!(matches!(p.get("f.1.share"), Err(StorageError::Unavailable(_))));
        assert!(p.put("x", b"y").is_err());
        let c = p.counts();
        assert_eq!((c.puts, c.gets, c.lists, c.latency_ms), (2, 4, 1, 500));
    }

    #[test]
    fn memory_provider() {
        exercise(StorageProvider::in_memory("mem"));
    }

    #[test]
    fn directory_provider_layout() {
        let root = tempfile::tempdir().unwrap();
        exercise(StorageProvider::in_directory(root.path(), "loc-a").unwrap());
        assert!(root.path().join("loc-a").join("f.1.share").is_file());
        assert_eq!(share_file_name("will-1-social", 3), "will-1-social.3.share");
    }
}
