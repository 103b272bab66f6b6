use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::lab::config::config_hash;

pub const MANIFEST: &str = "manifest.csv";
pub const CONFIG_SNAPSHOT: &str = "config.json";

/// Output directory that records every file it receives in a manifest.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    command: String,
    config_hash: String,
    files: Vec<String>,
}

impl RunDir {
    /// Creates the directory and snapshots `config` into it.
    pub fn create<T: Serialize>(root: impl AsRef<Path>, command: impl Into<String>, config: &T) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root)?;
        let mut dir = RunDir {
            root,
            command: command.into(),
            config_hash: config_hash(config),
            files: Vec::new(),
        };
        let mut snapshot = serde_json::to_string_pretty(config).expect("config serializes");
        snapshot.push('\n');
        dir.write(CONFIG_SNAPSHOT, snapshot)?;
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `name` under the run directory and records it.
    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents)?;
        self.record(name);
        Ok(path)
    }

    /// Records a file some other routine already wrote under the directory.
    pub fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    /// Writes `manifest.csv` (`file,command,config_hash`), listing itself last.
    pub fn finish(mut self) -> Result<PathBuf> {
        self.record(MANIFEST);
        let mut out = String::from("file,command,config_hash\n");
        for f in &self.files {
            let _ = writeln!(out, "{f},{},{}", self.command, self.config_hash);
        }
        let path = self.root.join(MANIFEST);
        std::fs::write(&path, out)?;
        Ok(self.root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_every_file() {
        let tmp = tempfile::tempdir().unwrap();
        let mut dir = RunDir::create(tmp.path().join("run"), "train", &serde_json::json!({"a": 1})).unwrap();
        dir.write("x.csv", "a,b\n").unwrap();
        dir.write("sub/y.csv", "c\n").unwrap();
        let root = dir.finish().unwrap();
        let manifest = std::fs::read_to_string(root.join(MANIFEST)).unwrap();
        let listed: Vec<&str> = manifest.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(listed, vec!["config.json", "x.csv", "sub/y.csv", "manifest.csv"]);
        assert!(manifest.lines().nth(1).unwrap().contains(",train,"));
    }
}
