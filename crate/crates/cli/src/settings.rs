//! Run settings: a plain `key = value` file overridden by flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mindtrace::{Error, Result};
use sha2::{Digest, Sha256};

/// Parses `key = value` lines. `#` starts a comment; keys may use `-` or
/// `_` interchangeably.
pub fn parse_config(text: &str, context: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            context: context.into(),
            line: i + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = normalize(k);
        if key.is_empty() {
            return Err(Error::Parse {
                context: context.into(),
                line: i + 1,
                message: "empty key".into(),
            });
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_").to_ascii_lowercase()
}

/// Resolves every parameter a command uses and remembers the outcome, so
/// the manifest can record exactly what ran.
pub struct Settings {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
    inputs: Vec<PathBuf>,
}

impl Settings {
    pub fn new(config: Option<&Path>) -> Result<Self> {
        let file = match config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                parse_config(&text, &p.display().to_string())?
            }
            None => BTreeMap::new(),
        };
        Ok(Self {
            file,
            resolved: BTreeMap::new(),
            inputs: Vec::new(),
        })
    }

    fn lookup<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(&normalize(key)) {
            Some(text) => text
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::invalid(format!("config key `{key}` = `{text}`: {e}"))),
            None => Ok(None),
        }
    }

    /// Flag, else config file, else `default`.
    pub fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.lookup(key, flag)?.unwrap_or(default);
        self.resolved.insert(normalize(key), v.to_string());
        Ok(v)
    }

    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.lookup(key, flag)?;
        if let Some(v) = &v {
            self.resolved.insert(normalize(key), v.to_string());
        }
        Ok(v)
    }

    pub fn flag(&mut self, key: &str, flag: bool) -> Result<bool> {
        let v = flag || self.lookup::<bool>(key, None)?.unwrap_or(false);
        self.resolved.insert(normalize(key), v.to_string());
        Ok(v)
    }

    /// A required input file.
    pub fn input(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        self.optional_input(key, flag)?
            .ok_or_else(|| Error::invalid(format!("missing input `--{}`", key.replace('_', "-"))))
    }

    pub fn optional_input(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
        let p = match flag {
            Some(p) => Some(p),
            None => self.file.get(&normalize(key)).map(PathBuf::from),
        };
        if let Some(p) = &p {
            if !p.is_file() {
                return Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")));
            }
            self.resolved.insert(normalize(key), p.display().to_string());
            self.inputs.push(p.clone());
        }
        Ok(p)
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    pub fn inputs(&self) -> &[PathBuf] {
        &self.inputs
    }

    /// SHA-256 over the resolved settings, one `key=value` line each.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.resolved {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        format!("{:x}", h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_dashes() {
        let m = parse_config("# run\nseed = 7\nmax-words=40  # inline\n\n", "c").unwrap();
        assert_eq!(m["seed"], "7");
        assert_eq!(m["max_words"], "40");
        assert!(parse_config("nonsense", "c").is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, "folds = 5\naxis = brexit\n").unwrap();
        let mut s = Settings::new(Some(&p)).unwrap();
        assert_eq!(s.value("folds", Some(3usize), 10).unwrap(), 3);
        assert_eq!(s.value::<String>("axis", None, "terrorism".into()).unwrap(), "brexit");
        assert_eq!(s.value("jitter", None, 0.05).unwrap(), 0.05);
        assert_eq!(s.resolved()["folds"], "3");
        let before = s.hash();
        s.value("extra", Some(1u8), 0).unwrap();
        assert_ne!(before, s.hash());
    }

    #[test]
    fn bad_value_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, "folds = many\n").unwrap();
        let mut s = Settings::new(Some(&p)).unwrap();
        let err = s.value("folds", None, 10usize).unwrap_err().to_string();
        assert!(err.contains("folds"), "{err}");
    }
}
