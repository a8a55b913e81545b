//! Content-addressed storage for clip audio.
//!
//! Each WAV file is stored once as `<dir>/<sha256 of the bytes, hex>.wav`.
//! Without a directory the store keeps blobs in memory only.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use sha2::{Digest, Sha256};

#[derive(Default)]
pub struct BlobStore {
    dir: Option<PathBuf>,
    cache: RwLock<HashMap<String, Arc<Vec<u8>>>>,
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn valid_hash(hash: &str) -> bool {
    hash.len() == 64 && hash.bytes().all(|b| b.is_ascii_hexdigit())
}

impl BlobStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir: Some(dir),
            cache: RwLock::default(),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn path_for(&self, hash: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{hash}.wav")))
    }

    /// Stores `bytes` and returns their content hash.
    pub fn put(&self, bytes: Vec<u8>) -> io::Result<String> {
        let hash = content_hash(&bytes);
        if let Some(path) = self.path_for(&hash) {
            if !path.exists() {
                // Write then rename so readers never observe a partial file.
                let tmp = path.with_extension(format!("wav.tmp-{}", uuid::Uuid::new_v4()));
                fs::write(&tmp, &bytes)?;
                fs::rename(&tmp, &path)?;
            }
        }
        self.cache.write().insert(hash.clone(), Arc::new(bytes));
        Ok(hash)
    }

    pub fn get(&self, hash: &str) -> io::Result<Option<Arc<Vec<u8>>>> {
        if let Some(bytes) = self.cache.read().get(hash) {
            return Ok(Some(Arc::clone(bytes)));
        }
        if !valid_hash(hash) {
            return Ok(None);
        }
        let Some(path) = self.path_for(hash) else {
            return Ok(None);
        };
        match fs::read(&path) {
            Ok(bytes) => {
                let bytes = Arc::new(bytes);
                self.cache.write().insert(hash.to_string(), Arc::clone(&bytes));
                Ok(Some(bytes))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }
}
