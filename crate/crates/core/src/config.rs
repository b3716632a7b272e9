//! Flat `key = value` run files with `[section]` headers.
//!
//! Every value read through [`RunConfig`] is recorded together with the
//! defaults that were applied, so a run can echo its full effective
//! configuration next to its results.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{Display, Write as _};
use std::path::Path;
use std::str::FromStr;

use ini::Ini;

use crate::error::{Error, Result};

/// Keys that appear before any section header live here.
pub const ROOT_SECTION: &str = "run";

#[derive(Debug, Default)]
pub struct RunConfig {
    values: BTreeMap<(String, String), String>,
    effective: RefCell<BTreeMap<(String, String), String>>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text)
            .map_err(|e| Error::Config(format!("line {}: {}", e.line, e.msg)))?;
        let mut values = BTreeMap::new();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or(ROOT_SECTION).trim().to_string();
            for (key, value) in props.iter() {
                let slot = (section.clone(), key.trim().to_string());
                if values.insert(slot, value.trim().to_string()).is_some() {
                    return Err(Error::Config(format!("duplicate key `{}` in [{section}]", key.trim())));
                }
            }
        }
        Ok(Self { values, effective: RefCell::default() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Replaces or adds one value, as a command-line override does.
    pub fn set(&mut self, section: &str, key: &str, value: impl Display) {
        self.values.insert((section.into(), key.into()), value.to_string());
    }

    pub fn contains(&self, section: &str, key: &str) -> bool {
        self.values.contains_key(&(section.to_string(), key.to_string()))
    }

    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.values.get(&(section.to_string(), key.to_string())).map(String::as_str)
    }

    fn record(&self, section: &str, key: &str, value: String) {
        self.effective.borrow_mut().insert((section.into(), key.into()), value);
    }

    /// A scalar value, or `default` when the key is absent.
    pub fn get<T>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match self.raw(section, key) {
            Some(text) => text
                .parse::<T>()
                .map_err(|e| Error::Config(format!("[{section}] {key} = `{text}`: {e}")))?,
            None => default,
        };
        self.record(section, key, value.to_string());
        Ok(value)
    }

    /// A comma-separated list; an empty list is rejected.
    pub fn get_list<T>(&self, section: &str, key: &str, default: &[T]) -> Result<Vec<T>>
    where
        T: FromStr + Display + Clone,
        T::Err: Display,
    {
        let values = match self.raw(section, key) {
            Some(text) => text
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<T>().map_err(|e| Error::Config(format!("[{section}] {key}: `{s}`: {e}"))))
                .collect::<Result<Vec<T>>>()?,
            None => default.to_vec(),
        };
        if values.is_empty() {
            return Err(Error::Config(format!("[{section}] {key} must not be empty")));
        }
        let joined = values.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ");
        self.record(section, key, joined);
        Ok(values)
    }

    /// A value with no default; absence and an empty value both give `None`
    /// and are recorded as an empty string.
    pub fn get_opt(&self, section: &str, key: &str) -> Option<String> {
        let value = self.raw(section, key).filter(|v| !v.is_empty()).map(str::to_string);
        self.record(section, key, value.clone().unwrap_or_default());
        value
    }

    /// Fails on any key that no getter asked for, which catches typos.
    pub fn reject_unknown(&self) -> Result<()> {
        let used: BTreeSet<_> = self.effective.borrow().keys().cloned().collect();
        let unknown: Vec<String> = self
            .values
            .keys()
            .filter(|k| !used.contains(*k))
            .map(|(s, k)| format!("[{s}] {k}"))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))))
        }
    }

    /// All values read so far, defaults included, in the input format.
    pub fn effective(&self) -> String {
        let mut out = String::new();
        let mut current: Option<String> = None;
        for ((section, key), value) in self.effective.borrow().iter() {
            if current.as_deref() != Some(section) {
                if current.is_some() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{section}]");
                current = Some(section.clone());
            }
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn typed_values_and_defaults() {
        let cfg = RunConfig::parse("seed = 7\n[sweep]\nthetas = 0.1, 0.2,0.4\nruns=3\n").unwrap();
        assert_eq!(cfg.get::<u64>(ROOT_SECTION, "seed", 0).unwrap(), 7);
        assert_eq!(cfg.get_list::<f64>("sweep", "thetas", &[]).unwrap(), vec![0.1, 0.2, 0.4]);
        assert_eq!(cfg.get::<usize>("sweep", "runs", 10).unwrap(), 3);
        assert_eq!(cfg.get::<usize>("sweep", "horizon", 300).unwrap(), 300);
        cfg.reject_unknown().unwrap();
        let echoed = cfg.effective();
        assert!(echoed.contains("horizon = 300"));
        assert!(echoed.contains("thetas = 0.1, 0.2, 0.4"));
    }

    #[test]
    fn effective_output_parses_back_to_the_same_values() {
        let cfg = RunConfig::parse("[a]\nx = 1.5\n").unwrap();
        cfg.get::<f64>("a", "x", 0.0).unwrap();
        cfg.get::<f64>("a", "y", 2.0).unwrap();
        let again = RunConfig::parse(&cfg.effective()).unwrap();
        assert_eq!(again.get::<f64>("a", "x", 0.0).unwrap(), 1.5);
        assert_eq!(again.get::<f64>("a", "y", 0.0).unwrap(), 2.0);
    }

    #[test]
    fn bad_values_and_unknown_keys_are_config_errors() {
        let cfg = RunConfig::parse("[a]\nx = abc\ntypo = 1\n").unwrap();
        assert!(matches!(cfg.get::<f64>("a", "x", 0.0), Err(Error::Config(_))));
        assert!(matches!(cfg.reject_unknown(), Err(Error::Config(m)) if m.contains("typo")));
        let cfg = RunConfig::parse("[a]\nxs = ,\n").unwrap();
        assert!(cfg.get_list::<f64>("a", "xs", &[1.0]).is_err());
    }

    #[test]
    fn malformed_header_reports_line() {
        let err = RunConfig::parse("x = 1\n[broken\n").unwrap_err();
        assert!(matches!(err, Error::Config(m) if m.starts_with("line ")));
    }
}
