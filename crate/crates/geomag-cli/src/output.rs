//! CSV tables and the flat JSON run summary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::error::CliError;

pub struct Table {
    name: String,
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.header.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// 17 significant digits, scientific notation. Non-finite values are an error.
    pub fn write(&self, dir: &Path, module: &'static str) -> Result<PathBuf, CliError> {
        let mut s = self.header.join(",");
        s.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(CliError::Output {
                        module,
                        msg: format!(
                            "non-finite `{}` in row {} of {}",
                            self.header[j],
                            i + 1,
                            self.name
                        ),
                    });
                }
                if j > 0 {
                    s.push(',');
                }
                s.push_str(&format!("{v:.16e}"));
            }
            s.push('\n');
        }
        let path = dir.join(&self.name);
        fs::write(&path, s)?;
        Ok(path)
    }
}

/// Flat key -> scalar map, written as `summary.json`.
pub struct RunSummary {
    map: Map<String, Value>,
}

impl RunSummary {
    pub fn new(experiment: &str, echo: &[(String, String)]) -> Self {
        let mut map = Map::new();
        map.insert("experiment".into(), experiment.into());
        for (k, v) in echo {
            map.insert(format!("input.{k}"), v.clone().into());
        }
        Self { map }
    }

    pub fn num(&mut self, key: &str, v: f64) {
        // JSON has no NaN; a missing number is written as null
        let v = if v.is_finite() {
            Value::from(v)
        } else {
            Value::Null
        };
        self.map.insert(key.to_string(), v);
    }

    pub fn int(&mut self, key: &str, v: usize) {
        self.map.insert(key.to_string(), Value::from(v));
    }

    pub fn text(&mut self, key: &str, v: &str) {
        self.map.insert(key.to_string(), v.into());
    }

    pub fn pass(&mut self, name: &str, ok: bool) {
        self.map.insert(format!("pass.{name}"), ok.into());
    }

    pub fn failures(&self) -> Vec<String> {
        self.map
            .iter()
            .filter(|(k, v)| k.starts_with("pass.") && **v == Value::Bool(false))
            .map(|(k, _)| k["pass.".len()..].to_string())
            .collect()
    }

    pub fn finish(mut self, dir: &Path, seconds: f64) -> Result<String, CliError> {
        self.num("wall_time_s", seconds);
        let text =
            serde_json::to_string_pretty(&Value::Object(self.map)).expect("flat map serializes");
        let mut f = fs::File::create(dir.join("summary.json"))?;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_and_nan_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("a.csv", &["x", "y"]);
        t.push(vec![0.1, -2.0]);
        let p = t.write(dir.path(), "test").unwrap();
        let s = fs::read_to_string(p).unwrap();
        assert_eq!(s, "x,y\n1.0000000000000001e-1,-2.0000000000000000e0\n");
        let back: f64 = s
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .next()
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(back, 0.1);
        t.push(vec![f64::NAN, 1.0]);
        assert_eq!(t.write(dir.path(), "test").unwrap_err().exit_code(), 2);
    }
}
