//! Reading graph files and writing outputs atomically.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use motionavg::io::{parse_g2o, parse_json, Format};
use motionavg::{GlobalMotionSet, MotionGraph};
use tempfile::NamedTempFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    G2o,
    Json,
}

impl From<FileFormat> for Format {
    fn from(f: FileFormat) -> Self {
        match f {
            FileFormat::G2o => Format::G2o,
            FileFormat::Json => Format::Json,
        }
    }
}

impl FileFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FileFormat::G2o => "g2o",
            FileFormat::Json => "json",
        }
    }
}

/// Explicit choice wins; otherwise the extension decides. An unknown
/// extension is an error, never a guess.
pub fn resolve_format(path: &Path, explicit: Option<FileFormat>) -> Result<Format> {
    if let Some(f) = explicit {
        return Ok(f.into());
    }
    Format::from_path(path).ok_or_else(|| {
        anyhow!(
            "cannot tell the format of {} from its extension; use .g2o or .json, or pass --format",
            path.display()
        )
    })
}

pub struct Loaded {
    pub graph: MotionGraph,
    pub globals: Option<GlobalMotionSet>,
}

pub fn load(path: &Path, format: Format) -> Result<Loaded> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    match format {
        Format::G2o => {
            let doc = parse_g2o(&text).with_context(|| format!("{}", path.display()))?;
            Ok(Loaded {
                graph: doc.graph,
                globals: doc.globals,
            })
        }
        Format::Json => {
            let doc = parse_json(&text).with_context(|| format!("{}", path.display()))?;
            Ok(Loaded {
                graph: doc.graph,
                globals: doc.globals,
            })
        }
    }
}

/// Global motions from a file that must define them.
pub fn load_globals(path: &Path, explicit: Option<FileFormat>) -> Result<GlobalMotionSet> {
    let loaded = load(path, resolve_format(path, explicit)?)?;
    loaded
        .globals
        .ok_or_else(|| anyhow!("{} defines no global motions", path.display()))
}

/// Stages file contents in the destination directory and renames them into
/// place only once every file is ready.
#[derive(Default)]
pub struct Staged {
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl Staged {
    pub fn add(&mut self, path: &Path, contents: &str) -> Result<()> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp =
            NamedTempFile::new_in(dir).with_context(|| format!("cannot create a file in {}", dir.display()))?;
        tmp.write_all(contents.as_bytes())
            .and_then(|_| tmp.flush())
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push((tmp, path.to_path_buf()));
        Ok(())
    }

    pub fn commit(self) -> Result<()> {
        for (tmp, path) in self.files {
            tmp.persist(&path)
                .map_err(|e| e.error)
                .with_context(|| format!("cannot write {}", path.display()))?;
        }
        Ok(())
    }
}

/// Writes to `path` atomically, or to standard output when `path` is `None`.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => {
            let mut staged = Staged::default();
            staged.add(p, contents)?;
            staged.commit()
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    if dir.exists() && !dir.is_dir() {
        bail!("{} exists and is not a directory", dir.display());
    }
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}
