//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::CliError;

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
    used: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentConfig {
    entries: BTreeMap<String, Entry>,
    source: String,
}

impl ExperimentConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(CliError::Config(format!(
                    "{source}:{line}: expected `key = value`, got `{body}`"
                )));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(CliError::Config(format!("{source}:{line}: bad key `{k}`")));
            }
            if v.is_empty() {
                return Err(CliError::Config(format!(
                    "{source}:{line}: key `{k}` has no value"
                )));
            }
            let e = Entry {
                value: v.to_string(),
                line,
                used: false,
            };
            if let Some(prev) = entries.insert(k.to_string(), e) {
                return Err(CliError::Config(format!(
                    "{source}:{line}: key `{k}` repeated (first set on line {})",
                    prev.line
                )));
            }
        }
        Ok(Self {
            entries,
            source: source.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Replace or add a key, as if it came from the file.
    pub fn set(&mut self, key: &str, value: String) {
        self.entries.insert(
            key.to_string(),
            Entry {
                value,
                line: 0,
                used: false,
            },
        );
    }

    fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn bad(&self, key: &str, line: usize, what: &str, v: &str) -> CliError {
        let at = if line == 0 {
            "command line".to_string()
        } else {
            format!("{}:{line}", self.source)
        };
        CliError::Config(format!("{at}: key `{key}` expects {what}, got `{v}`"))
    }

    fn missing(&self, key: &str) -> CliError {
        CliError::Config(format!("{}: missing key `{key}`", self.source))
    }

    fn parse_f64(&self, key: &str, v: &str, line: usize) -> Result<f64, CliError> {
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(self.bad(key, line, "a finite number", v)),
        }
    }

    pub fn f64(&mut self, key: &str) -> Result<f64, CliError> {
        let (v, line) = self.raw(key).ok_or_else(|| self.missing(key))?;
        self.parse_f64(key, &v, line)
    }

    pub fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.raw(key) {
            Some((v, line)) => self.parse_f64(key, &v, line),
            None => Ok(default),
        }
    }

    pub fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.raw(key) {
            Some((v, line)) => v
                .parse()
                .map_err(|_| self.bad(key, line, "a non-negative integer", &v)),
            None => Ok(default),
        }
    }

    pub fn bool_or(&mut self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.raw(key) {
            Some((v, line)) => match v.as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(self.bad(key, line, "true or false", &v)),
            },
            None => Ok(default),
        }
    }

    pub fn str(&mut self, key: &str) -> Result<String, CliError> {
        self.raw(key)
            .map(|(v, _)| v)
            .ok_or_else(|| self.missing(key))
    }

    pub fn str_or(&mut self, key: &str, default: &str) -> String {
        self.raw(key)
            .map_or_else(|| default.to_string(), |(v, _)| v)
    }

    /// Comma-separated numbers.
    pub fn list_or(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        let Some((v, line)) = self.raw(key) else {
            return Ok(default.to_vec());
        };
        v.split(',')
            .map(|s| self.parse_f64(key, s.trim(), line))
            .collect::<Result<Vec<_>, _>>()
            .and_then(|xs| {
                if xs.is_empty() {
                    Err(self.bad(key, line, "a list", &v))
                } else {
                    Ok(xs)
                }
            })
    }

    /// Every key in the file, in sorted order, for the summary echo.
    pub fn echo(&self) -> Vec<(String, String)> {
        self.entries
            .iter()
            .map(|(k, e)| (k.clone(), e.value.clone()))
            .collect()
    }

    /// Fails on the first key no experiment asked for.
    pub fn finish(&self) -> Result<(), CliError> {
        let mut unknown: Vec<(&String, &Entry)> =
            self.entries.iter().filter(|(_, e)| !e.used).collect();
        unknown.sort_by_key(|(_, e)| e.line);
        match unknown.first() {
            None => Ok(()),
            Some((k, e)) => Err(CliError::Config(format!(
                "{}:{}: unknown key `{k}`",
                self.source, e.line
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let mut c = ExperimentConfig::parse("# head\n\nbeta = 2 # inline\nphi=0.5\n", "t").unwrap();
        assert_eq!(c.f64("beta").unwrap(), 2.0);
        assert_eq!(c.f64("phi").unwrap(), 0.5);
        c.finish().unwrap();
    }

    #[test]
    fn unknown_key_reports_line() {
        let mut c = ExperimentConfig::parse("beta = 1\nbogus = 3\n", "t").unwrap();
        c.f64("beta").unwrap();
        let e = c.finish().unwrap_err().to_string();
        assert!(e.contains("t:2") && e.contains("bogus"), "{e}");
    }

    #[test]
    fn missing_and_malformed() {
        let mut c = ExperimentConfig::parse("x = abc\n", "t").unwrap();
        assert!(c
            .f64("beta")
            .unwrap_err()
            .to_string()
            .contains("missing key `beta`"));
        assert!(c.f64("x").unwrap_err().to_string().contains("t:1"));
        assert!(ExperimentConfig::parse("x 1\n", "t").is_err());
        assert!(ExperimentConfig::parse("x = 1\nx = 2\n", "t").is_err());
        let mut c = ExperimentConfig::parse("x = nan\n", "t").unwrap();
        assert!(c.f64("x").is_err());
    }

    #[test]
    fn lists() {
        let mut c = ExperimentConfig::parse("b = 0.5, 1,1.5\n", "t").unwrap();
        assert_eq!(c.list_or("b", &[]).unwrap(), vec![0.5, 1.0, 1.5]);
        assert_eq!(c.list_or("none", &[2.0]).unwrap(), vec![2.0]);
    }
}
