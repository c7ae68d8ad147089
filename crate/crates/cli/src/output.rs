//! Atomic file output: write to a temporary sibling, then rename over the target.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating `{}`", dir.display()))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing `{}`", path.display()))
}

/// Output files of one step, keyed by file name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Files(pub Vec<(String, String)>);

impl Files {
    pub fn add(&mut self, name: impl Into<String>, contents: impl Into<String>) {
        self.0.push((name.into(), contents.into()));
    }

    pub fn write_all(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        self.0
            .iter()
            .map(|(name, text)| {
                let p = dir.join(name);
                write_atomic(&p, text.as_bytes())?;
                Ok(p)
            })
            .collect()
    }
}
