//! CSV files. Floats are written in the shortest form that parses back to
//! the same bits, so every file round-trips exactly.
//!
//! Every file starts with `#` metadata lines: the tool version, a line per
//! run key, then `config:` followed by the full resolved config.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::config::{Config, CONFIG_MARK};
use crate::error::{io_err, CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const SNAPSHOT_HEADER: [&str; 4] = ["t", "x_index", "x", "rho"];
pub const MICRO_HEADER: [&str; 6] = ["t", "x_index", "x", "v_index", "v", "g"];

pub fn fmt(x: f64) -> String {
    format!("{x:?}")
}

pub fn metadata(cfg: &Config, command: &str, keys: &[(&str, String)]) -> Vec<String> {
    let mut m = vec![format!("apkinetic {VERSION}"), format!("command: {command}")];
    m.extend(keys.iter().map(|(k, v)| format!("{k}: {v}")));
    m.push(CONFIG_MARK.into());
    m.extend(cfg.to_toml().lines().map(str::to_string));
    m
}

fn write_csv(path: &Path, meta: &[String], header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    for line in meta {
        writeln!(out, "# {line}").map_err(|e| io_err(path, e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Density profiles at one or more times.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Snapshots {
    pub meta: Vec<String>,
    pub t: Vec<f64>,
    pub x_index: Vec<usize>,
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
}

impl Snapshots {
    pub fn push(&mut self, t: f64, x: &[f64], rho: &[f64]) {
        for (i, (&xi, &r)) in x.iter().zip(rho).enumerate() {
            self.t.push(t);
            self.x_index.push(i);
            self.x.push(xi);
            self.rho.push(r);
        }
    }

    pub fn times(&self) -> Vec<f64> {
        let mut t = self.t.clone();
        t.dedup();
        t
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let rows: Vec<Vec<String>> = (0..self.t.len())
            .map(|i| vec![fmt(self.t[i]), self.x_index[i].to_string(), fmt(self.x[i]), fmt(self.rho[i])])
            .collect();
        write_csv(path, &self.meta, &SNAPSHOT_HEADER, &rows)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let (meta, rows) = read_csv(path, &SNAPSHOT_HEADER)?;
        let mut s = Snapshots { meta, ..Default::default() };
        for r in rows {
            s.t.push(num(path, &r[0])?);
            s.x_index.push(r[1].parse().map_err(|e| io_err(path, e))?);
            s.x.push(num(path, &r[2])?);
            s.rho.push(num(path, &r[3])?);
        }
        Ok(s)
    }
}

/// Per-velocity micro part; written only on request.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MicroDump {
    pub meta: Vec<String>,
    pub rows: Vec<(f64, usize, f64, usize, f64, f64)>,
}

impl MicroDump {
    pub fn write(&self, path: &Path) -> CliResult<()> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|&(t, i, x, k, v, g)| vec![fmt(t), i.to_string(), fmt(x), k.to_string(), fmt(v), fmt(g)])
            .collect();
        write_csv(path, &self.meta, &MICRO_HEADER, &rows)
    }
}

/// One convergence study per `(scheme, eps)`, one row per step size or grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub meta: Vec<String>,
    /// `dt` or `nx`.
    pub parameter: String,
    pub scheme: Vec<String>,
    pub eps: Vec<f64>,
    pub value: Vec<f64>,
    pub l2: Vec<f64>,
    pub linf: Vec<f64>,
    pub slope: Vec<f64>,
}

impl ConvergenceTable {
    pub fn new(parameter: &str, meta: Vec<String>) -> Self {
        Self {
            meta,
            parameter: parameter.into(),
            scheme: Vec::new(),
            eps: Vec::new(),
            value: Vec::new(),
            l2: Vec::new(),
            linf: Vec::new(),
            slope: Vec::new(),
        }
    }

    pub fn header(parameter: &str) -> [String; 6] {
        ["scheme", "eps", parameter, "L2_error", "Linf_error", "fitted_slope"].map(String::from)
    }

    pub fn add(&mut self, study: &apkinetic::experiments::ConvergenceStudy) {
        for i in 0..study.values.len() {
            self.scheme.push(study.scheme.clone());
            self.eps.push(study.eps);
            self.value.push(study.values[i]);
            self.l2.push(study.l2[i]);
            self.linf.push(study.linf[i]);
            self.slope.push(study.slope());
        }
    }

    fn value_text(&self, v: f64) -> String {
        if self.parameter == "nx" {
            format!("{}", v as usize)
        } else {
            fmt(v)
        }
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let rows: Vec<Vec<String>> = (0..self.scheme.len())
            .map(|i| {
                vec![
                    self.scheme[i].clone(),
                    fmt(self.eps[i]),
                    self.value_text(self.value[i]),
                    fmt(self.l2[i]),
                    fmt(self.linf[i]),
                    fmt(self.slope[i]),
                ]
            })
            .collect();
        let header = Self::header(&self.parameter);
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv(path, &self.meta, &header, &rows)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let parameter = {
            let (_, hdr) = raw_lines(path)?;
            hdr.split(',').nth(2).unwrap_or("").to_string()
        };
        let header = Self::header(&parameter);
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let (meta, rows) = read_csv(path, &header)?;
        let mut t = Self::new(&parameter, meta);
        for r in rows {
            t.scheme.push(r[0].clone());
            t.eps.push(num(path, &r[1])?);
            t.value.push(num(path, &r[2])?);
            t.l2.push(num(path, &r[3])?);
            t.linf.push(num(path, &r[4])?);
            t.slope.push(num(path, &r[5])?);
        }
        Ok(t)
    }
}

fn num(path: &Path, s: &str) -> CliResult<f64> {
    s.parse().map_err(|e| io_err(path, format!("`{s}`: {e}")))
}

/// Metadata lines (without `# `) and the column header line.
fn raw_lines(path: &Path) -> CliResult<(Vec<String>, String)> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut meta = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| io_err(path, e))?;
        match line.strip_prefix('#') {
            Some(m) => meta.push(m.strip_prefix(' ').unwrap_or(m).to_string()),
            None => return Ok((meta, line)),
        }
    }
    Err(io_err(path, "no column header"))
}

fn read_csv(path: &Path, header: &[&str]) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let (meta, _) = raw_lines(path)?;
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(f);
    let got: Vec<String> = r.headers().map_err(|e| io_err(path, e))?.iter().map(String::from).collect();
    if got != header {
        return Err(CliError::Config(format!("{}: expected columns {header:?}, found {got:?}", path.display())));
    }
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .map_err(|e| io_err(path, e))?;
    Ok((meta, rows))
}
