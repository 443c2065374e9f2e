//! File layout of a run directory. Every phase reads its inputs from here and
//! nothing else, so any phase can be rerun on its own.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }

    pub fn create(&self) -> CliResult<()> {
        fs::create_dir_all(&self.root).map_err(|e| CliError::Output {
            context: format!("creating {}", self.root.display()),
            source: Box::new(e),
        })
    }

    pub fn map_yaml(&self) -> PathBuf {
        self.root.join("map.yaml")
    }

    pub fn map_pgm(&self) -> PathBuf {
        self.root.join("map.pgm")
    }

    pub fn trajectory(&self) -> PathBuf {
        self.root.join("trajectory.txt")
    }

    pub fn explore_summary(&self) -> PathBuf {
        self.root.join("explore.json")
    }

    pub fn tour(&self) -> PathBuf {
        self.root.join("tour.txt")
    }

    /// Base path of the semantic map for `stage` (`construct` or an update phase).
    pub fn semantic_base(&self, stage: &str) -> PathBuf {
        if stage == "construct" {
            self.root.join("semantic")
        } else {
            self.root.join(format!("semantic-{stage}"))
        }
    }

    pub fn change_log(&self, stage: &str) -> PathBuf {
        self.root.join(format!("changes-{stage}.jsonl"))
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn report_text(&self) -> PathBuf {
        self.root.join("report.txt")
    }

    pub fn render(&self, stage: &str) -> PathBuf {
        self.semantic_base(stage).with_extension("png")
    }
}

/// Fails with `MissingArtifact` unless `path` exists.
pub fn require(path: &Path, producer: &'static str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact {
            path: path.to_path_buf(),
            producer,
        })
    }
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Output {
        context: format!("writing {}", path.display()),
        source: Box::new(e),
    })
}
