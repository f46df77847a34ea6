//! Completion cache keyed on prompt hash, prompt version, mode and model.
//!
//! Entries live in memory and, when a directory is configured, as one JSON
//! file per key. Disk trouble is logged and otherwise ignored.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::warn;

use super::Mode;
use crate::prompt::PromptText;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn new(prompt: &PromptText, mode: Mode, model_name: &str) -> Self {
        let prompt_hash = hex::encode(Sha256::digest(prompt.text.as_bytes()));
        let mut hasher = Sha256::new();
        for part in [
            prompt_hash.as_str(),
            prompt.prompt_version.as_str(),
            mode.as_str(),
            model_name,
        ] {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        }
        Self(hex::encode(hasher.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DiskEntry {
    prompt_version: String,
    mode: Mode,
    model_name: String,
    response: String,
}

#[derive(Debug, Default)]
pub struct ResponseCache {
    memory: Mutex<HashMap<CacheKey, String>>,
    dir: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Cache backed by `dir`; the directory is created if missing.
    pub fn persistent(dir: impl Into<PathBuf>) -> Self {
        let dir = dir.into();
        if let Err(e) = fs::create_dir_all(&dir) {
            warn!(dir = %dir.display(), error = %e, "cache directory unavailable, caching in memory only");
        }
        Self {
            memory: Mutex::default(),
            dir: Some(dir),
        }
    }

    fn path(dir: &Path, key: &CacheKey) -> PathBuf {
        dir.join(format!("{}.json", key.as_str()))
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        if let Some(hit) = self.memory.lock().expect("cache lock").get(key) {
            return Some(hit.clone());
        }
        let dir = self.dir.as_ref()?;
        let path = Self::path(dir, key);
        let raw = match fs::read_to_string(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                warn!(path = %path.display(), error = %e, "cache read failed");
                return None;
            }
        };
        match serde_json::from_str::<DiskEntry>(&raw) {
            Ok(entry) => {
                self.memory
                    .lock()
                    .expect("cache lock")
                    .insert(key.clone(), entry.response.clone());
                Some(entry.response)
            }
            Err(e) => {
                warn!(path = %path.display(), error = %e, "ignoring corrupt cache entry");
                None
            }
        }
    }

    pub fn put(
        &self,
        key: &CacheKey,
        prompt: &PromptText,
        mode: Mode,
        model_name: &str,
        response: &str,
    ) {
        self.memory
            .lock()
            .expect("cache lock")
            .insert(key.clone(), response.to_string());
        let Some(dir) = &self.dir else { return };
        let entry = DiskEntry {
            prompt_version: prompt.prompt_version.clone(),
            mode,
            model_name: model_name.to_string(),
            response: response.to_string(),
        };
        let path = Self::path(dir, key);
        let tmp = dir.join(format!(".{}.{}.tmp", key.as_str(), std::process::id()));
        let written = serde_json::to_vec_pretty(&entry)
            .map_err(std::io::Error::other)
            .and_then(|bytes| fs::write(&tmp, bytes))
            .and_then(|()| fs::rename(&tmp, &path));
        if let Err(e) = written {
            let _ = fs::remove_file(&tmp);
            warn!(path = %path.display(), error = %e, "cache write failed");
        }
    }

    pub fn len(&self) -> usize {
        self.memory.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt(text: &str, version: &str) -> PromptText {
        PromptText {
            text: text.into(),
            prompt_version: version.into(),
        }
    }

    #[test]
    fn key_components() {
        let base = CacheKey::new(&prompt("a", "v1"), Mode::Mock, "m");
        assert_eq!(base, CacheKey::new(&prompt("a", "v1"), Mode::Mock, "m"));
        assert_ne!(base, CacheKey::new(&prompt("b", "v1"), Mode::Mock, "m"));
        assert_ne!(base, CacheKey::new(&prompt("a", "v2"), Mode::Mock, "m"));
        assert_ne!(base, CacheKey::new(&prompt("a", "v1"), Mode::Live, "m"));
        assert_ne!(base, CacheKey::new(&prompt("a", "v1"), Mode::Mock, "n"));
    }

    #[test]
    fn persists_across_instances() {
        let dir = tempfile::tempdir().unwrap();
        let p = prompt("hello", "v1");
        let key = CacheKey::new(&p, Mode::Mock, "mock");
        {
            let cache = ResponseCache::persistent(dir.path());
            assert!(cache.get(&key).is_none());
            cache.put(&key, &p, Mode::Mock, "mock", "world");
        }
        let reopened = ResponseCache::persistent(dir.path());
        assert_eq!(reopened.get(&key).as_deref(), Some("world"));
    }

    #[test]
    fn corrupt_entries_are_misses() {
        let dir = tempfile::tempdir().unwrap();
        let p = prompt("hello", "v1");
        let key = CacheKey::new(&p, Mode::Mock, "mock");
        fs::write(
            dir.path().join(format!("{}.json", key.as_str())),
            "not json",
        )
        .unwrap();
        let cache = ResponseCache::persistent(dir.path());
        assert!(cache.get(&key).is_none());
    }

    #[test]
    fn unwritable_dir_degrades_to_memory() {
        let file = tempfile::NamedTempFile::new().unwrap();
        // a regular file cannot serve as a cache directory
        let cache = ResponseCache::persistent(file.path().join("sub"));
        let p = prompt("x", "v");
        let key = CacheKey::new(&p, Mode::Mock, "mock");
        cache.put(&key, &p, Mode::Mock, "mock", "y");
        assert_eq!(cache.get(&key).as_deref(), Some("y"));
    }
}
