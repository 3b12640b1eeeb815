//! Content-addressed response cache: one JSON file per request key, written
//! via temp-file-then-rename so concurrent writers can never leave a partial
//! entry visible.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::Result;

#[derive(Debug, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request: Value,
    pub response_text: String,
    pub timestamp: u64,
    pub backend_name: String,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Unreadable or malformed entries are treated as misses.
    pub fn get(&self, key: &str) -> Option<String> {
        let bytes = fs::read(self.entry_path(key)).ok()?;
        let entry: CacheEntry = serde_json::from_slice(&bytes).ok()?;
        Some(entry.response_text)
    }

    pub fn put(
        &self,
        key: &str,
        request: &Value,
        response_text: &str,
        backend_name: &str,
    ) -> Result<()> {
        let entry = CacheEntry {
            request: request.clone(),
            response_text: response_text.to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            backend_name: backend_name.to_string(),
        };
        let tmp = self.dir.join(format!(
            "{key}.tmp.{}.{:x}",
            std::process::id(),
            rand::random::<u32>()
        ));
        fs::write(&tmp, serde_json::to_vec_pretty(&entry)?)?;
        fs::rename(&tmp, self.entry_path(key))?;
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entry_path(key).is_file()
    }

    pub fn len(&self) -> Result<usize> {
        let mut n = 0;
        for item in fs::read_dir(&self.dir)? {
            let item = item?;
            if item.path().extension().is_some_and(|e| e == "json") {
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(self.len()? == 0)
    }
}
