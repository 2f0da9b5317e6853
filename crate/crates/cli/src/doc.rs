//! Output documents: resolved config, named numeric tables and checks, with
//! CSV and JSON encodings that re-read and re-emit byte for byte.
//!
//! CSV layout:
//!
//! ```text
//! # commeig {"d":1,...}            resolved config as one JSON object
//! # checks [{"name":...},...]      checks as one JSON array
//! # table eigenvalues              one block per table, in name order
//! x1_1,x2_1
//! 0.25,-1.5
//! ```
//!
//! Numbers use the shortest representation that parses back to the same
//! `f64`. JSON stores non-finite numbers as the strings `inf`, `-inf`, `NaN`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            _ => None,
        }
    }

    /// Guess from leading content: JSON documents open with `{`.
    pub fn sniff(text: &str) -> Self {
        if text.trim_start().starts_with('{') {
            Self::Json
        } else {
            Self::Csv
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: Option<f64>,
    pub passed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    pub config: Map<String, Value>,
    pub tables: BTreeMap<String, Table>,
    pub checks: Vec<Check>,
}

#[derive(Debug)]
pub struct ParseError(pub String);

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ParseError {}

fn bad(msg: impl Into<String>) -> ParseError {
    ParseError(msg.into())
}

fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn num_to_json(x: f64) -> Value {
    match serde_json::Number::from_f64(x) {
        Some(n) => Value::Number(n),
        None => Value::String(fmt_num(x)),
    }
}

fn json_to_num(v: &Value) -> Result<f64, ParseError> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| bad("number out of range")),
        Value::String(s) => s.parse().map_err(|_| bad(format!("not a number: {s}"))),
        _ => Err(bad(format!("expected a number, found {v}"))),
    }
}

fn check_to_json(c: &Check) -> Value {
    json!({
        "name": c.name,
        "value": num_to_json(c.value),
        "tolerance": c.tolerance.map(num_to_json),
        "passed": c.passed,
    })
}

fn check_from_json(v: &Value) -> Result<Check, ParseError> {
    let name = v["name"].as_str().ok_or_else(|| bad("check without a name"))?.to_string();
    let tolerance = match &v["tolerance"] {
        Value::Null => None,
        t => Some(json_to_num(t)?),
    };
    Ok(Check { name, value: json_to_num(&v["value"])?, tolerance, passed: v["passed"].as_bool() })
}

impl Document {
    pub fn new(config: Map<String, Value>) -> Self {
        Self { config, ..Self::default() }
    }

    pub fn check(&mut self, name: &str, value: f64, tolerance: Option<f64>) {
        let passed = tolerance.map(|t| value <= t);
        self.checks.push(Check { name: name.into(), value, tolerance, passed });
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        match Format::sniff(text) {
            Format::Csv => Self::from_csv(text),
            Format::Json => Self::from_json(text),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let config = Value::Object(self.config.clone());
        let checks = Value::Array(self.checks.iter().map(check_to_json).collect());
        writeln!(out, "# commeig {config}").unwrap();
        writeln!(out, "# checks {checks}").unwrap();
        for (name, table) in &self.tables {
            writeln!(out, "# table {name}").unwrap();
            writeln!(out, "{}", table.columns.join(",")).unwrap();
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(|&x| fmt_num(x)).collect();
                writeln!(out, "{}", cells.join(",")).unwrap();
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, ParseError> {
        let mut lines = text.lines();
        let config = lines.next().and_then(|l| l.strip_prefix("# commeig ")).ok_or_else(|| bad("missing `# commeig` line"))?;
        let config = match serde_json::from_str(config).map_err(|e| bad(e.to_string()))? {
            Value::Object(m) => m,
            _ => return Err(bad("config is not an object")),
        };
        let checks = lines.next().and_then(|l| l.strip_prefix("# checks ")).ok_or_else(|| bad("missing `# checks` line"))?;
        let checks = match serde_json::from_str(checks).map_err(|e| bad(e.to_string()))? {
            Value::Array(a) => a.iter().map(check_from_json).collect::<Result<_, _>>()?,
            _ => return Err(bad("checks is not an array")),
        };
        let mut doc = Self { config, checks, tables: BTreeMap::new() };
        let mut current: Option<(String, Table)> = None;
        let mut lines = lines.peekable();
        while let Some(line) = lines.next() {
            if let Some(name) = line.strip_prefix("# table ") {
                if let Some((n, t)) = current.take() {
                    doc.tables.insert(n, t);
                }
                let header = lines.next().ok_or_else(|| bad(format!("table {name} has no header")))?;
                let columns = if header.is_empty() { Vec::new() } else { header.split(',').map(String::from).collect() };
                current = Some((name.to_string(), Table::new(columns)));
            } else {
                let (name, table) = current.as_mut().ok_or_else(|| bad("data row outside a table"))?;
                let row = line.split(',').map(|c| c.parse::<f64>().map_err(|_| bad(format!("bad number `{c}` in table {name}")))).collect::<Result<Vec<_>, _>>()?;
                if row.len() != table.columns.len() {
                    return Err(bad(format!("row width {} in table {name} with {} columns", row.len(), table.columns.len())));
                }
                table.rows.push(row);
            }
        }
        if let Some((n, t)) = current {
            doc.tables.insert(n, t);
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        let data: Map<String, Value> = self
            .tables
            .iter()
            .map(|(name, t)| {
                let rows: Vec<Value> = t.rows.iter().map(|r| Value::Array(r.iter().map(|&x| num_to_json(x)).collect())).collect();
                (name.clone(), json!({ "columns": t.columns, "rows": rows }))
            })
            .collect();
        let doc = json!({
            "config": Value::Object(self.config.clone()),
            "data": Value::Object(data),
            "checks": self.checks.iter().map(check_to_json).collect::<Vec<_>>(),
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ParseError> {
        let v: Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let config = v["config"].as_object().cloned().ok_or_else(|| bad("missing config object"))?;
        let checks = v["checks"].as_array().ok_or_else(|| bad("missing checks array"))?.iter().map(check_from_json).collect::<Result<_, _>>()?;
        let mut tables = BTreeMap::new();
        for (name, t) in v["data"].as_object().ok_or_else(|| bad("missing data object"))? {
            let columns = t["columns"].as_array().ok_or_else(|| bad("table without columns"))?.iter().map(|c| c.as_str().map(String::from).ok_or_else(|| bad("column name"))).collect::<Result<Vec<_>, _>>()?;
            let rows = t["rows"]
                .as_array()
                .ok_or_else(|| bad("table without rows"))?
                .iter()
                .map(|r| r.as_array().ok_or_else(|| bad("row is not an array"))?.iter().map(json_to_num).collect::<Result<Vec<_>, _>>())
                .collect::<Result<Vec<_>, _>>()?;
            tables.insert(name.clone(), Table { columns, rows });
        }
        Ok(Self { config, tables, checks })
    }
}

/// Writes `contents` to `path` through `path.partial` and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = std::path::PathBuf::from(partial);
    {
        let mut f = std::fs::File::create(&partial)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&partial, path)
}
