use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "manifest.txt";

/// Artifacts written under one output directory, listed in `manifest.txt`
/// as paths relative to it.
pub struct Manifest {
    root: PathBuf,
    entries: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            entries: Vec::new(),
        })
    }


    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn add(&mut self, path: &Path) {
        let rel = path.strip_prefix(&self.root).unwrap_or(path).to_path_buf();
        if !self.entries.contains(&rel) {
            self.entries.push(rel);
        }
    }

    /// Writes `contents` to `name` and records it.
    pub fn write(&mut self, name: &str, contents: &str) -> io::Result<PathBuf> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, contents)?;
        self.add(&path);
        Ok(path)
    }

    pub fn finish(mut self) -> io::Result<PathBuf> {
        self.entries.sort();
        let mut text: String = self
            .entries
            .iter()
            .map(|p| format!("{}\n", p.display()))
            .collect();
        text.push_str(&format!("{MANIFEST}\n"));
        let path = self.path(MANIFEST);
        fs::write(&path, text)?;
        Ok(path)
    }
}
