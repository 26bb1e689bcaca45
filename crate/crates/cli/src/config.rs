//! Flat `key = value` config files merged under command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

/// Bad flags, bad config files or inconsistent settings. Exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Every key a config file may set; each is also a long flag.
pub const KNOWN_KEYS: &[&str] = &[
    "structure",
    "chain",
    "threshold",
    "matrix-dir",
    "strict-residues",
    "experimental",
    "simulated",
    "seed",
    "jobs",
    "samples",
    "burn-in",
    "noise-variance",
    "no-pairs",
    "mode",
    "modes",
    "level",
    "protein",
    "sizes",
    "repeats",
    "trim",
    "out-dir",
    "output",
    "model",
    "variants",
    "matrix",
    "format",
    "predictions",
    "folds",
];

/// Resolved settings: flag if given, else config file, else default. Every
/// value that was used is recorded for the output digest.
#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    used: BTreeMap<String, String>,
}

impl Settings {
    pub fn from_file(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut file = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(usage(format!("line {}: expected key = value", i + 1)));
            };
            let key = key.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(usage(format!("line {}: unknown key {key:?}", i + 1)));
            }
            if file.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(usage(format!("line {}: {key} set twice", i + 1)));
            }
        }
        Ok(Self {
            file,
            used: BTreeMap::new(),
        })
    }

    /// The flag value, else the config value parsed as `T`.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>) -> anyhow::Result<Option<T>>
    where
        T: FromStr + ToString,
        T::Err: fmt::Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(text) => Some(text.parse::<T>().map_err(|e| usage(format!("config key {key}: {e}")))?),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.used.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    pub fn get_or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> anyhow::Result<T>
    where
        T: FromStr + ToString,
        T::Err: fmt::Display,
    {
        let v = self.get(key, flag)?.unwrap_or(default);
        self.used.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> anyhow::Result<T>
    where
        T: FromStr + ToString,
        T::Err: fmt::Display,
    {
        self.get(key, flag)?
            .ok_or_else(|| usage(format!("--{key} is required (flag or config key)")))
    }

    /// Drops a key from the digest; for settings that cannot change results.
    pub fn forget(&mut self, key: &str) {
        self.used.remove(key);
    }

    /// A switch is on if the flag is present or the config says `true`.
    pub fn switch(&mut self, key: &str, flag: bool) -> anyhow::Result<bool> {
        let on = if flag {
            true
        } else {
            self.get::<bool>(key, None)?.unwrap_or(false)
        };
        self.used.insert(key.to_string(), on.to_string());
        Ok(on)
    }

    /// First 16 hex digits of SHA-256 over the sorted `key=value` lines used.
    pub fn digest(&self, command: &str) -> String {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        for (k, v) in &self.used {
            h.update(format!("\n{k}={v}").as_bytes());
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let mut s = Settings::parse("# run\nseed = 7\nburn_in=50\n").unwrap();
        assert_eq!(s.get::<u64>("seed", None).unwrap(), Some(7));
        assert_eq!(s.get::<u64>("seed", Some(9)).unwrap(), Some(9));
        assert_eq!(s.get_or::<usize>("burn-in", None, 500).unwrap(), 50);
        assert_eq!(s.get_or::<usize>("samples", None, 1000).unwrap(), 1000);
    }

    #[test]
    fn rejects_unknown_and_malformed_lines() {
        assert!(Settings::parse("colour = red").is_err());
        assert!(Settings::parse("seed").is_err());
        assert!(Settings::parse("seed=1\nseed=2").is_err());
        assert!(Settings::parse("seed = x").unwrap().get::<u64>("seed", None).is_err());
    }

    #[test]
    fn digest_tracks_resolved_values() {
        let mut a = Settings::default();
        let mut b = Settings::default();
        a.get_or::<u64>("seed", None, 1).unwrap();
        b.get_or::<u64>("seed", Some(2), 1).unwrap();
        assert_ne!(a.digest("cv"), b.digest("cv"));
        assert_ne!(a.digest("cv"), a.digest("train"));
        assert_eq!(a.digest("cv").len(), 16);
    }
}
