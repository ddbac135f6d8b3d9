use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::Failure;

pub fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Parses `path` with `parse`, prefixing errors with the file name.
pub fn load<T>(path: &Path, parse: impl FnOnce(&str) -> rankone::Result<T>) -> Result<T, Failure> {
    parse(&read(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
    let io = |e: std::io::Error| Failure::Usage(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

#[derive(Debug, Default, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub parameters: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// Collects inputs, parameters and outputs of one command run.
pub struct Run {
    pub out_dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    pub fn new(command: &str, out_dir: PathBuf) -> Self {
        Self {
            out_dir,
            manifest: RunManifest {
                command: command.into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
                ..RunManifest::default()
            },
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.manifest.inputs.insert(name.into(), path.display().to_string());
    }

    pub fn param(&mut self, name: &str, value: impl ToString) {
        self.manifest.parameters.insert(name.into(), value.to_string());
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    /// `name` relative to the output directory unless it is absolute.
    pub fn path(&self, name: &Path) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn emit(&mut self, role: &str, name: &Path, contents: &str) -> Result<PathBuf, Failure> {
        let path = self.path(name);
        write_atomic(&path, contents)?;
        self.manifest.outputs.insert(role.into(), path.display().to_string());
        Ok(path)
    }

    pub fn finish(self) -> Result<(), Failure> {
        let path = self.out_dir.join(format!("{}.manifest.toml", self.manifest.command));
        let text = toml::to_string(&self.manifest).expect("manifest serializes");
        write_atomic(&path, &text)
    }
}
