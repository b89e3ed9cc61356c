//! Content-addressed on-disk store with atomic writes.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::model::ContentHash;

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::CacheIo {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a uniquely named temporary file and a rename, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    let tmp = parent.join(format!(
        ".{}.{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("file"),
        std::process::id(),
        TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &ContentHash) -> PathBuf {
        let hex = key.to_hex();
        self.dir.join("objects").join(&hex[..2]).join(&hex[2..])
    }

    pub fn get(&self, key: &ContentHash) -> Result<Option<Vec<u8>>> {
        let path = self.path(key);
        match std::fs::read(&path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(Error::CacheIo { path, source }),
        }
    }

    pub fn put(&self, key: &ContentHash, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.path(key), bytes)
    }

    /// Stores `bytes` under their own hash.
    pub fn put_blob(&self, bytes: &[u8]) -> Result<ContentHash> {
        let key = ContentHash::of(bytes);
        if !self.path(&key).exists() {
            self.put(&key, bytes)?;
        }
        Ok(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_get_and_miss() {
        let dir = tempfile::tempdir().unwrap();
        let c = Cache::new(dir.path());
        let k = ContentHash::of(b"key");
        assert_eq!(c.get(&k).unwrap(), None);
        c.put(&k, b"value").unwrap();
        assert_eq!(c.get(&k).unwrap().unwrap(), b"value");
        let h = c.put_blob(b"blob").unwrap();
        assert_eq!(c.get(&h).unwrap().unwrap(), b"blob");
    }

    #[test]
    fn concurrent_writers_leave_whole_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = Cache::new(dir.path());
        let k = ContentHash::of(b"k");
        std::thread::scope(|s| {
            for i in 0..8u8 {
                let c = &c;
                s.spawn(move || c.put(&k, &vec![i; 4096]).unwrap());
            }
        });
        let got = c.get(&k).unwrap().unwrap();
        assert_eq!(got.len(), 4096);
        assert!(got.iter().all(|&b| b == got[0]));
    }

    #[test]
    fn unwritable_dir_is_cache_io() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        std::fs::write(&file, b"x").unwrap();
        let c = Cache::new(&file);
        assert!(matches!(c.put(&ContentHash::of(b"a"), b"b"), Err(Error::CacheIo { .. })));
    }
}
