use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::io::IoError;

/// Overrides the cache directory when the configuration names none.
pub const CACHE_DIR_ENV: &str = "DECO_CACHE_DIR";

/// How a stage obtained its artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    /// The stage did not run.
    Skipped,
    /// Loaded from an explicit checkpoint.
    Checkpoint,
    /// Reused a content-addressed artifact.
    Hit,
    /// Computed and stored.
    Miss,
}

/// Content hash of a stage's inputs.
#[derive(Debug, Clone, Default)]
pub struct CacheKey(Sha256);

impl CacheKey {
    pub fn new(stage: &str) -> Self {
        let mut k = Self(Sha256::new());
        k.str(stage);
        k
    }

    /// Length-prefixed so adjacent fields cannot alias.
    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.update((b.len() as u64).to_le_bytes());
        self.0.update(b);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn json<T: serde::Serialize>(&mut self, value: &T) -> &mut Self {
        self.bytes(&serde_json::to_vec(value).expect("configuration serializes"))
    }

    pub fn file(&mut self, path: &Path) -> Result<&mut Self, IoError> {
        let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
        Ok(self.bytes(&bytes))
    }

    pub fn files(&mut self, paths: &[PathBuf]) -> Result<&mut Self, IoError> {
        self.0.update((paths.len() as u64).to_le_bytes());
        for p in paths {
            self.file(p)?;
        }
        Ok(self)
    }

    pub fn hex(&self) -> String {
        hex::encode(self.0.clone().finalize())
    }
}

/// Directory of content-addressed stage artifacts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactCache {
    dir: PathBuf,
}

impl ArtifactCache {
    /// `configured`, else `$DECO_CACHE_DIR`, else `<output>/cache`.
    pub fn locate(configured: Option<&Path>, output: &Path) -> Self {
        let dir = configured
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| output.join("cache"));
        Self { dir }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, stage: &str, key: &CacheKey, ext: &str) -> PathBuf {
        self.dir.join(format!("{stage}-{}.{ext}", key.hex()))
    }
}
