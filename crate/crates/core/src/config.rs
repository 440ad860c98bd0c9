//! Minimal `key=value` configuration files with optional `[section]` headers.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may repeat across
//! sections; within one section the last assignment wins.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

/// One block of key/value pairs. The implicit block before the first header
/// has `name == None`.
#[derive(Debug, Clone, Default)]
pub struct Section {
    pub name: Option<String>,
    pub line: usize,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn label(&self) -> Option<String> {
        self.name
            .as_ref()
            .map(|n| format!("[{n}] block starting at line {}", self.line))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        match self.entries.get(key) {
            Some(e) => parse_value(key, e),
            None => Err(Error::MissingKey {
                key: key.to_string(),
                section: self.label(),
            }),
        }
    }

    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.entries.get(key).map(|e| parse_value(key, e)).transpose()
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(e) = self.entries.get(key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>().map_err(|_| Error::Config {
                    line: e.line,
                    message: format!("cannot parse `{s}` in list `{key}`"),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

fn parse_value<T: FromStr>(key: &str, e: &Entry) -> Result<T> {
    e.value.parse::<T>().map_err(|_| Error::Config {
        line: e.line,
        message: format!("cannot parse value `{}` for key `{key}`", e.value),
    })
}

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    pub sections: Vec<Section>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections = vec![Section::default()];
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Config {
                    line: line_no,
                    message: format!("unterminated section header `{line}`"),
                })?;
                sections.push(Section {
                    name: Some(name.trim().to_string()),
                    line: line_no,
                    entries: BTreeMap::new(),
                });
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected `key=value`, found `{line}`"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config {
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            let value = value.split('#').next().unwrap_or("").trim().to_string();
            sections
                .last_mut()
                .expect("root section always present")
                .entries
                .insert(key.to_string(), Entry { value, line: line_no });
        }
        Ok(ConfigFile { sections })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Self::parse(&text)
    }

    pub fn root(&self) -> &Section {
        &self.sections[0]
    }

    pub fn sections_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections
            .iter()
            .filter(move |s| s.name.as_deref() == Some(name))
    }
}
