//! `key = value` config files. Command-line flags win over file values, which
//! win over built-in defaults. Keys use the long flag names (`radius-rule`).

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, Result};

#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => Self::parse(&std::fs::read_to_string(p)?, p),
        }
    }

    /// Blank lines and `#` comments are ignored; `_` in keys is read as `-`.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: &str| CliError::ConfigSyntax {
                path: path.to_path_buf(),
                line: i + 1,
                message: message.to_string(),
            };
            let (key, value) = line.split_once('=').ok_or_else(|| syntax("expected key = value"))?;
            let key = key.trim().replace('_', "-");
            if key.is_empty() {
                return Err(syntax("empty key"));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(syntax(&format!("duplicate key {key:?}")));
            }
        }
        Ok(Self { values, used: RefCell::default() })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.values.get(key).map(String::as_str)
    }

    /// `flag`, else the file value, else `default`.
    pub fn value<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.optional(key, flag)?.unwrap_or(default))
    }

    pub fn optional<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let file = self.raw(key);
        if flag.is_some() {
            return Ok(flag);
        }
        file.map(|v| parse_value(key, v)).transpose()
    }

    /// Comma-separated lists.
    pub fn list<T>(&self, key: &str, flag: Option<Vec<T>>, default: Vec<T>) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let file = self.raw(key);
        if let Some(flag) = flag {
            return Ok(flag);
        }
        match file {
            None => Ok(default),
            Some(v) => v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_value(key, s)).collect(),
        }
    }

    pub fn flag(&self, key: &str, flag: bool) -> Result<bool> {
        Ok(flag || self.optional::<bool>(key, None)?.unwrap_or(false))
    }

    /// Fails on keys no resolver asked for, which are almost always typos.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self.values.keys().filter(|k| !used.contains(*k)).map(String::as_str).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::UnknownKeys(unknown.join(", ")))
        }
    }
}

fn parse_value<T>(key: &str, value: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| CliError::ConfigValue {
        key: key.to_string(),
        value: value.to_string(),
        message: e.to_string(),
    })
}
