//! Flat `key = value` run configuration.
//!
//! Resolution order: command defaults, then the config file, then flags.
//! Keys a command does not declare are rejected wherever they come from.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::CliError;

pub const ECHO_FILE: &str = "config.txt";

pub struct Key {
    pub name: &'static str,
    pub default: Option<String>,
}

pub fn key(name: &'static str) -> Key {
    Key { name, default: None }
}

pub fn key_or(name: &'static str, default: impl Display) -> Key {
    Key {
        name,
        default: Some(default.to_string()),
    }
}

pub struct RunConfig {
    command: &'static str,
    values: BTreeMap<String, String>,
}

/// Splits `text` into `(line, key, value)` triples; `#` starts a comment line.
pub fn parse_pairs(text: &str, source: &str) -> Result<Vec<(usize, String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::input(format!("{source}:{}: expected `key = value`, found `{line}`", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(CliError::input(format!("{source}:{}: empty key or value in `{line}`", i + 1)));
        }
        out.push((i + 1, k.to_string(), v.to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn resolve(
        command: &'static str,
        keys: &[Key],
        file: Option<&Path>,
        flags: &[(String, String)],
    ) -> Result<Self, CliError> {
        let known = |k: &str| keys.iter().any(|s| s.name == k);
        let mut values: BTreeMap<String, String> = keys
            .iter()
            .filter_map(|k| k.default.clone().map(|d| (k.name.to_string(), d)))
            .collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
            let src = path.display().to_string();
            let mut seen = BTreeMap::new();
            for (line, k, v) in parse_pairs(&text, &src)? {
                if !known(&k) {
                    return Err(CliError::input(format!("{src}:{line}: unknown key `{k}` for `{command}`")));
                }
                if let Some(prev) = seen.insert(k.clone(), line) {
                    return Err(CliError::input(format!("{src}:{line}: key `{k}` already set on line {prev}")));
                }
                values.insert(k, v);
            }
        }
        for (k, v) in flags {
            if !known(k) {
                return Err(CliError::input(format!("unknown key `{k}` for `{command}`")));
            }
            values.insert(k.clone(), v.clone());
        }
        Ok(RunConfig { command, values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key)
            .ok_or_else(|| CliError::input(format!("`{}` needs `{key}` (flag or config key)", self.command)))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| CliError::input(format!("config key `{key}`: cannot parse `{v}`: {e}")))
            })
            .transpose()
    }

    /// Typed value of a key that has a default.
    pub fn value<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.parse(key)?
            .ok_or_else(|| CliError::input(format!("`{}` needs `{key}` (flag or config key)", self.command)))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        let item = item.trim();
                        item.parse()
                            .map_err(|e| CliError::input(format!("config key `{key}`: cannot parse `{item}`: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.require(key).map(PathBuf::from)
    }

    /// Records a derived effective value so the echo reproduces the run.
    pub fn set(&mut self, key: &str, value: impl Display) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# effective configuration for `unitstyle {}`\n", self.command);
        for (k, v) in &self.values {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn echo(&self, dir: &Path) -> Result<(), CliError> {
        let p = dir.join(ECHO_FILE);
        std::fs::write(&p, self.to_text()).map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys() -> Vec<Key> {
        vec![key_or("epochs", 30), key("manifest"), key_or("lr", 0.001)]
    }

    #[test]
    fn precedence_and_echo() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("run.cfg");
        std::fs::write(&f, "# comment\nepochs = 5\nmanifest = a.jsonl\n").unwrap();
        let flags = vec![("epochs".to_string(), "7".to_string())];
        let c = RunConfig::resolve("train-dur", &keys(), Some(&f), &flags).unwrap();
        assert_eq!(c.value::<usize>("epochs").unwrap(), 7);
        assert_eq!(c.get("manifest"), Some("a.jsonl"));
        assert_eq!(c.value::<f64>("lr").unwrap(), 0.001);
        let text = c.to_text();
        assert!(text.contains("epochs = 7\n") && text.contains("lr = 0.001\n"));

        // The echo is itself a valid config reproducing the same values.
        std::fs::write(&f, &text).unwrap();
        let again = RunConfig::resolve("train-dur", &keys(), Some(&f), &[]).unwrap();
        assert_eq!(again.to_text(), text);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("run.cfg");
        for (body, needle) in [
            ("epochz = 3\n", "unknown key `epochz`"),
            ("epochs = 3\nepochs = 4\n", "already set on line 1"),
            ("epochs 3\n", "expected `key = value`"),
            ("epochs =\n", "empty key or value"),
        ] {
            std::fs::write(&f, body).unwrap();
            let e = RunConfig::resolve("x", &keys(), Some(&f), &[]).err().unwrap();
            assert!(e.to_string().contains(needle), "{e}");
        }
        let flags = vec![("bogus".to_string(), "1".to_string())];
        assert!(RunConfig::resolve("x", &keys(), None, &flags).is_err());
    }

    #[test]
    fn typed_access() {
        let flags = vec![("manifest".to_string(), "1, 2,3".to_string())];
        let c = RunConfig::resolve("x", &keys(), None, &flags).unwrap();
        assert_eq!(c.list::<u32>("manifest").unwrap(), Some(vec![1, 2, 3]));
        assert!(c.value::<usize>("lr").is_err());
        assert_eq!(c.parse::<usize>("missing").unwrap(), None);
    }
}
