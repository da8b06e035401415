//! CSV output with a commented header that records the resolved config.
//!
//! Layout:
//!
//! ```text
//! # squeezeclock <command> <version>
//! # [ensemble]
//! # n_atoms = [1000]
//! # ...
//! col_a,col_b
//! 1.0000000000000000e0,exact
//! ```
//!
//! Stripping the `# ` prefix from the lines after the first gives TOML that
//! parses back to the same [`Config`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(u64),
    S(String),
    B(bool),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::I(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// 17 significant digits.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => format_f64(*v),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::B(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

pub fn render(command: &str, config: &Config, table: &Table) -> String {
    let mut out = format!("# squeezeclock {command} {}\n", env!("CARGO_PKG_VERSION"));
    for line in config.to_toml().lines() {
        if line.is_empty() {
            out.push_str("#\n");
        } else {
            let _ = writeln!(out, "# {line}");
        }
    }
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(Cell::render).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_table(
    dir: &Path,
    name: &str,
    command: &str,
    config: &Config,
    table: &Table,
) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, render(command, config, table))?;
    Ok(path)
}

/// Recovers the command name and configuration from a file's header.
pub fn parse_header(text: &str) -> Result<(String, Config), CliError> {
    let mut lines = text.lines();
    let first = lines
        .next()
        .and_then(|l| l.strip_prefix("# squeezeclock "))
        .ok_or_else(|| CliError::Config("missing squeezeclock header line".into()))?;
    let command = first
        .split_whitespace()
        .next()
        .unwrap_or_default()
        .to_string();
    let mut toml_text = String::new();
    for line in lines {
        let Some(rest) = line.strip_prefix('#') else {
            break;
        };
        toml_text.push_str(rest.strip_prefix(' ').unwrap_or(rest));
        toml_text.push('\n');
    }
    Ok((command, Config::parse(&toml_text)?))
}

/// Data rows of a rendered table, split on commas.
pub fn parse_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(format_f64(1.0 / 3.0), "3.3333333333333331e-1");
        assert_eq!("1.0000000000000001e-1".parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn header_round_trip() {
        let mut c = Config::default();
        c.servo.seed = 42;
        c.servo.gamma_t = Some(0.01);
        c.ensemble.kappa = vec![1.7782794100389228, 3.0];
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![1.5.into(), "x".into()]);
        let text = render("moments", &c, &t);
        let (cmd, back) = parse_header(&text).unwrap();
        assert_eq!(cmd, "moments");
        assert_eq!(back, c);
        assert_eq!(
            parse_rows(&text),
            vec![vec!["1.5000000000000000e0".to_string(), "x".to_string()]]
        );
    }
}
