//! Plain `key = value` configuration sections.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::{FdmError, Result};

/// A flat group of named settings.
pub trait Section {
    fn name(&self) -> &'static str;
    fn set(&mut self, key: &str, value: &str) -> Result<()>;
    fn entries(&self) -> Vec<(&'static str, String)>;
    fn check(&self) -> Result<()> {
        Ok(())
    }
}

pub fn parse_value<T: FromStr>(section: &str, key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| FdmError::Config(format!("{section}.{key}: cannot parse '{value}': {e}")))
}

pub fn parse_bool(section: &str, key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        v => Err(FdmError::Config(format!("{section}.{key}: expected a boolean, got '{v}'"))),
    }
}

/// Comma separated list, e.g. `0.3,0.3,0.4`.
pub fn parse_list<T: FromStr>(section: &str, key: &str, value: &str, len: usize) -> Result<Vec<T>>
where
    T::Err: Display,
{
    let items: Vec<T> = value
        .split(',')
        .map(|v| parse_value(section, key, v))
        .collect::<Result<_>>()?;
    if items.len() != len {
        return Err(FdmError::Config(format!("{section}.{key}: expected {len} values, got {}", items.len())));
    }
    Ok(items)
}

pub fn fmt_list<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn unknown_key(section: &str, key: &str) -> FdmError {
    FdmError::Config(format!("unknown key {section}.{key}"))
}

/// Renders a section as `[name]` followed by one `key = value` line per entry.
pub fn render_section(s: &dyn Section) -> String {
    let mut out = format!("[{}]\n", s.name());
    for (k, v) in s.entries() {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

/// Applies `key = value` lines (no section headers) to `s`.
pub fn apply_lines(s: &mut dyn Section, text: &str) -> Result<()> {
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('[') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| FdmError::Config(format!("expected key = value, got '{line}'")))?;
        s.set(k.trim(), v.trim())?;
    }
    s.check()
}
