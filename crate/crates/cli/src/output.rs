//! Output directory handling. Every file written goes through [`Output`],
//! which keeps it inside the directory and writes a manifest next to it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use mindtrace::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::settings::Settings;

#[derive(Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    output: &'a str,
    seed: u64,
    inputs: Vec<InputRecord>,
    config: &'a std::collections::BTreeMap<String, String>,
    config_sha256: String,
    created: String,
}

pub struct Output {
    dir: PathBuf,
    command: String,
    seed: u64,
    written: Vec<PathBuf>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

impl Output {
    pub fn new(dir: &Path, command: &str, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            seed,
            written: Vec::new(),
        })
    }

    /// Path for a plain file name inside the output directory.
    fn path(&self, name: &str) -> Result<PathBuf> {
        let ok = !name.is_empty()
            && name != "."
            && name != ".."
            && !name.contains(['/', '\\'])
            && Path::new(name).file_name().is_some_and(|f| f == name);
        if !ok {
            return Err(Error::invalid(format!("output name `{name}` must be a plain file name")));
        }
        Ok(self.dir.join(name))
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name)?;
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Renders with `f` into memory, then writes.
    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    /// Writes `<file>.manifest.json` for every file written so far.
    pub fn finish(self, settings: &Settings) -> Result<Vec<PathBuf>> {
        let inputs = settings
            .inputs()
            .iter()
            .map(|p| {
                Ok(InputRecord {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let created = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        let config_sha256 = settings.hash();
        for path in &self.written {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let manifest = Manifest {
                tool: "mindtrace",
                version: env!("CARGO_PKG_VERSION"),
                command: &self.command,
                output: name,
                seed: self.seed,
                inputs: inputs
                    .iter()
                    .map(|i| InputRecord {
                        path: i.path.clone(),
                        sha256: i.sha256.clone(),
                    })
                    .collect(),
                config: settings.resolved(),
                config_sha256: config_sha256.clone(),
                created: created.clone(),
            };
            let mpath = self.dir.join(format!("{name}.manifest.json"));
            let mut text = serde_json::to_string_pretty(&manifest)?;
            text.push('\n');
            fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
        }
        Ok(self.written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_must_stay_inside() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Output::new(dir.path(), "t", 0).unwrap();
        for bad in ["../x", "a/b", "..", "", "/etc/passwd"] {
            assert!(out.write_bytes(bad, b"x").is_err(), "{bad}");
        }
        out.write_bytes("ok.txt", b"x").unwrap();
        let s = Settings::new(None).unwrap();
        out.finish(&s).unwrap();
        assert!(dir.path().join("ok.txt.manifest.json").is_file());
    }
}
