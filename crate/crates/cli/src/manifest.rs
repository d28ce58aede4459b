//! Run manifest and atomic artifact output.
//!
//! Every file is first written as `<name>.partial` and renamed once complete,
//! so an interrupted or failed run leaves only `.partial` files behind.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ResolvedConfig;
use crate::error::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub config_hash: String,
    pub config: ResolvedConfig,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: String,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Write `path` through a `.partial` file that is renamed when `body`
/// succeeds.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let tmp = partial_path(path);
    let file = File::create(&tmp).map_err(|e| CliError::Io(format!("cannot create {}: {e}", tmp.display())))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", tmp.display())))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| CliError::Io(format!("cannot finalize {}: {e}", path.display())))
}

/// Output directory of one run together with its manifest.
pub struct RunOutput {
    dir: PathBuf,
    manifest: RunManifest,
}

impl RunOutput {
    /// Create `dir` and record the manifest (as `manifest.json.partial`)
    /// before any sampling starts.
    pub fn start(dir: &Path, command: &str, config: &ResolvedConfig, threads: usize) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        let out = RunOutput {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: config.simulation.seed,
                threads,
                config_hash: config.hash(),
                config: config.clone(),
                started_at: now(),
                finished_at: None,
                status: "running".into(),
                outputs: Vec::new(),
                warnings: Vec::new(),
            },
        };
        out.write_manifest_partial()?;
        Ok(out)
    }

    pub fn hash(&self) -> &str {
        &self.manifest.config_hash
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn manifest_path(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }

    fn write_manifest_partial(&self) -> Result<(), CliError> {
        let tmp = partial_path(&self.manifest_path());
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(&tmp, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", tmp.display())))
    }

    /// Write one artifact and list it in the manifest.
    pub fn artifact<F>(&mut self, name: &str, body: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let path = self.dir.join(name);
        write_atomic(&path, body)?;
        self.manifest.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn warn(&mut self, message: &str) {
        eprintln!("warning: {message}");
        if !self.manifest.warnings.iter().any(|w| w == message) {
            self.manifest.warnings.push(message.to_string());
        }
    }

    /// Finalize the manifest. A failed run keeps `manifest.json.partial`
    /// with the error as its status.
    pub fn finish(mut self, result: &Result<(), CliError>) -> Result<(), CliError> {
        self.manifest.finished_at = Some(now());
        match result {
            Ok(()) => {
                self.manifest.status = "ok".into();
                let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| CliError::Io(e.to_string()))?;
                write_atomic(&self.manifest_path(), |w| w.write_all(text.as_bytes()))?;
            }
            Err(e) => {
                self.manifest.status = format!("failed (exit {}): {e}", e.exit_code());
                self.write_manifest_partial()?;
            }
        }
        Ok(())
    }
}
