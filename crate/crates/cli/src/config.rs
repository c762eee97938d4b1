//! Experiment configuration.
//!
//! A config file is TOML with the sections `[run]`, `[space]`, `[velocity]`,
//! `[initial]`, `[drift]`, `[boundary]` and `[study]`. Every key is optional;
//! missing keys take model-dependent defaults. `--set section.key=value`
//! overrides are applied on top of the file before defaults are filled in.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use apkinetic::acceptance::{ADVDIFF_DTS, REF_DT, SPACE_NXS, SPACE_REF_NX, TIME_DTS};
use apkinetic::experiments::{CollisionChoice, InflowScenario, PeriodicScenario, Profile};
use apkinetic::inflow::{GhostRule, InflowData};
use apkinetic::periodic::InitKind;
use apkinetic::stencil::GridKind;
use apkinetic::tableau::{self, DoubleButcherTableau};
use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize};
use toml::{Table, Value};

use crate::error::{io_err, CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Micromacro,
    Advdiff,
    Inflow,
    Bgk,
    Diffusion,
    AdvdiffLimit,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Micromacro => "micromacro",
            Model::Advdiff => "advdiff",
            Model::Inflow => "inflow",
            Model::Bgk => "bgk",
            Model::Diffusion => "diffusion",
            Model::AdvdiffLimit => "advdiff-limit",
        }
    }

    fn advective(self) -> bool {
        matches!(self, Model::Advdiff | Model::AdvdiffLimit)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridChoice {
    Colocated,
    Staggered,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitChoice {
    #[serde(rename = "WP")]
    Wp,
    #[serde(rename = "N-WP")]
    Nwp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    Equilibrium,
    ScaledVelocity,
    Table,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GhostChoice {
    Auto,
    Direct,
    Reflected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceChoice {
    #[serde(rename = "self")]
    SelfRef,
    Diffusion,
}

/// Accepts `x` or `[x, y, ...]`.
fn one_or_many<'de, D, T>(d: D) -> Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub model: Model,
    /// Built-in names or paths to tableau files.
    #[serde(deserialize_with = "one_or_many")]
    pub tableau: Vec<String>,
    /// Overrides the free parameter of DP_A121 / DP2_A242.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(deserialize_with = "one_or_many")]
    pub eps: Vec<f64>,
    #[serde(deserialize_with = "one_or_many")]
    pub dt: Vec<f64>,
    pub t_final: f64,
    pub output_dir: String,
    /// Steps between snapshots; 0 writes the initial and final state only.
    pub snapshot_every: usize,
    /// Also write the micro part per velocity (micro-macro models only).
    pub dump_g: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    #[serde(deserialize_with = "one_or_many")]
    pub nx: Vec<usize>,
    pub length: f64,
    pub grid: GridChoice,
    pub upwind_order: usize,
    pub central_order: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySection {
    pub v_max: f64,
    pub nv: usize,
    /// `"bgk"` or a path to a dense `N_v x N_v` matrix file.
    pub collision: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitChoice,
    pub profile: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    pub a: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    pub kind: BoundaryKind,
    /// Scale for `equilibrium` (`value * M`) and `scaled-velocity` (`value * v M`).
    pub value: f64,
    /// One entry per velocity point for `kind = "table"`.
    pub table: Vec<f64>,
    pub ghost: GhostChoice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub reference: ReferenceChoice,
    pub ref_dt: f64,
    pub dt_list: Vec<f64>,
    pub ref_nx: usize,
    pub nx_list: Vec<usize>,
    pub space_dt: f64,
    pub space_t_final: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub space: SpaceSection,
    pub velocity: VelocitySection,
    pub initial: InitialSection,
    pub drift: DriftSection,
    pub boundary: BoundarySection,
    pub study: StudySection,
}

impl Config {
    pub fn defaults(model: Model) -> Self {
        let inflow = model == Model::Inflow;
        let adv = model.advective();
        Config {
            run: RunSection {
                model,
                tableau: vec!["DP1_A242".into()],
                gamma: None,
                eps: vec![1.0, 1e-4],
                dt: vec![if inflow { 0.001 } else { 0.005 }],
                t_final: if inflow { 0.1 } else { 0.5 },
                output_dir: "out".into(),
                snapshot_every: 0,
                dump_g: false,
            },
            space: SpaceSection {
                nx: vec![if inflow {
                    40
                } else if adv {
                    20
                } else {
                    50
                }],
                length: if inflow { 2.0 } else { 2.0 * PI },
                grid: if adv { GridChoice::Staggered } else { GridChoice::Colocated },
                upwind_order: if adv { 1 } else { 3 },
                central_order: if adv { 2 } else { 4 },
            },
            velocity: VelocitySection { v_max: 5.0, nv: 10, collision: "bgk".into() },
            initial: InitialSection { kind: InitChoice::Wp, profile: if adv { "sin" } else { "one_plus_cos" }.into() },
            drift: DriftSection { a: if adv { 0.5 } else { 0.0 } },
            boundary: BoundarySection {
                kind: BoundaryKind::Equilibrium,
                value: 1.0,
                table: Vec::new(),
                ghost: GhostChoice::Auto,
            },
            study: StudySection {
                reference: ReferenceChoice::SelfRef,
                ref_dt: REF_DT,
                dt_list: if inflow {
                    vec![0.01, 0.005, 0.0025, 0.00125]
                } else if adv {
                    ADVDIFF_DTS.to_vec()
                } else {
                    TIME_DTS.to_vec()
                },
                ref_nx: SPACE_REF_NX,
                nx_list: SPACE_NXS.to_vec(),
                space_dt: 0.001,
                space_t_final: 0.01,
            },
        }
    }

    /// Parses `text` (may be empty), applies `overrides` and fills defaults.
    pub fn from_text(text: &str, overrides: &[String]) -> CliResult<Self> {
        let mut user: Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut user, o)?;
        }
        let model = match user.get("run").and_then(|r| r.get("model")) {
            Some(v) => v.clone().try_into::<Model>().map_err(|e| CliError::Config(format!("run.model: {e}")))?,
            None => Model::Micromacro,
        };
        let mut merged = match Value::try_from(Config::defaults(model)) {
            Ok(Value::Table(t)) => t,
            _ => unreachable!("config serializes to a table"),
        };
        for (section, body) in user {
            let Value::Table(body) = body else {
                return Err(CliError::Config(format!("`{section}` must be a section")));
            };
            let Some(Value::Table(target)) = merged.get_mut(&section) else {
                return Err(CliError::Config(format!("unknown section [{section}]")));
            };
            for (k, v) in body {
                target.insert(k, v);
            }
        }
        let cfg: Config = Value::Table(merged).try_into().map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| io_err(p, e))?,
            None => String::new(),
        };
        Self::from_text(&text, overrides)
    }

    /// Recovers the config echoed in a CSV metadata header.
    pub fn from_echo(header: &[String]) -> CliResult<Self> {
        let start = header
            .iter()
            .position(|l| l == CONFIG_MARK)
            .ok_or_else(|| CliError::Config("no config echo in header".into()))?;
        let text: Vec<&str> = header[start + 1..].iter().map(String::as_str).collect();
        Self::from_text(&text.join("\n"), &[])
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let r = &self.run;
        if r.tableau.is_empty() || r.eps.is_empty() || r.dt.is_empty() || self.space.nx.is_empty() {
            return bad("run.tableau, run.eps, run.dt and space.nx must be nonempty".into());
        }
        if let Some(e) = r.eps.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
            return bad(format!("eps must be positive, got {e}"));
        }
        if let Some(d) = r.dt.iter().chain(&self.study.dt_list).find(|d| !(**d > 0.0) || !d.is_finite()) {
            return bad(format!("time steps must be positive, got {d}"));
        }
        if !(r.t_final >= 0.0) || !(self.study.space_t_final >= 0.0) {
            return bad(format!("final times must be >= 0, got {}", r.t_final));
        }
        if !(self.study.ref_dt > 0.0) || !(self.study.space_dt > 0.0) {
            return bad("study.ref_dt and study.space_dt must be positive".into());
        }
        if !(self.space.length > 0.0) {
            return bad(format!("space.length must be positive, got {}", self.space.length));
        }
        if self.run.model == Model::Inflow {
            if let Some(n) = self.space.nx.iter().find(|n| **n < 4) {
                return bad(format!("inflow needs space.nx >= 4, got {n}"));
            }
        }
        for name in &r.tableau {
            self.tableau(name)?;
        }
        Profile::parse(&self.initial.profile)?;
        self.collision()?;
        Ok(())
    }

    /// A built-in name, or else a tableau file.
    pub fn tableau(&self, name: &str) -> CliResult<DoubleButcherTableau> {
        let t = match tableau::builtin(name) {
            Ok(t) => t,
            Err(e) => {
                let p = Path::new(name);
                if p.is_file() {
                    DoubleButcherTableau::load(p)?
                } else {
                    return Err(e.into());
                }
            }
        };
        Ok(match (self.run.gamma, t.name.as_str()) {
            (Some(g), "DP_A121") => tableau::dp_a121(g),
            (Some(g), "DP2_A242") => tableau::dp2_a242(g),
            _ => t,
        })
    }

    pub fn collision(&self) -> CliResult<CollisionChoice> {
        let c = self.velocity.collision.trim();
        if c.eq_ignore_ascii_case("bgk") {
            return Ok(CollisionChoice::Bgk);
        }
        let m = load_matrix(Path::new(c))?;
        if m.nrows() != self.velocity.nv || m.ncols() != self.velocity.nv {
            return Err(CliError::Config(format!(
                "{c}: collision matrix is {}x{}, velocity grid has {} points",
                m.nrows(),
                m.ncols(),
                self.velocity.nv
            )));
        }
        Ok(CollisionChoice::Custom(m))
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(&self.run.output_dir)
    }

    pub fn periodic(&self, tab: &DoubleButcherTableau, eps: f64, nx: usize) -> CliResult<PeriodicScenario> {
        Ok(PeriodicScenario {
            nx,
            length: self.space.length,
            kind: match self.space.grid {
                GridChoice::Colocated => GridKind::Colocated,
                GridChoice::Staggered => GridKind::Staggered,
            },
            upwind_order: self.space.upwind_order,
            central_order: self.space.central_order,
            v_max: self.velocity.v_max,
            nv: self.velocity.nv,
            eps,
            drift: self.drift.a,
            tableau: tab.clone(),
            init: match self.initial.kind {
                InitChoice::Wp => InitKind::WellPrepared,
                InitChoice::Nwp => InitKind::NonWellPrepared,
            },
            profile: Profile::parse(&self.initial.profile)?,
            collision: self.collision()?,
        })
    }

    pub fn inflow(&self, tab: &DoubleButcherTableau, eps: f64, nx: usize) -> CliResult<InflowScenario> {
        let b = &self.boundary;
        Ok(InflowScenario {
            nx,
            length: self.space.length,
            v_max: self.velocity.v_max,
            nv: self.velocity.nv,
            eps,
            tableau: tab.clone(),
            data: match b.kind {
                BoundaryKind::Equilibrium => InflowData::Equilibrium(b.value),
                BoundaryKind::ScaledVelocity => InflowData::ScaledVelocity(b.value),
                BoundaryKind::Table => InflowData::Table(b.table.clone()),
            },
            ghost: match b.ghost {
                GhostChoice::Auto => None,
                GhostChoice::Direct => Some(GhostRule::Direct),
                GhostChoice::Reflected => Some(GhostRule::Reflected),
            },
            collision: self.collision()?,
        })
    }
}

/// Header line that precedes the config echo in CSV metadata.
pub const CONFIG_MARK: &str = "config:";

/// `section.key=value`; the value is read as a TOML value, falling back to
/// a bare string.
pub fn apply_override(table: &mut Table, spec: &str) -> CliResult<()> {
    let (key, raw) =
        spec.split_once('=').ok_or_else(|| CliError::Config(format!("override `{spec}` is not section.key=value")))?;
    let (section, key) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| CliError::Config(format!("override key `{key}` is not section.key")))?;
    let value = parse_value(raw.trim());
    let entry = table.entry(section.to_string()).or_insert_with(|| Value::Table(Table::new()));
    match entry {
        Value::Table(t) => {
            t.insert(key.to_string(), value);
            Ok(())
        }
        _ => Err(CliError::Config(format!("`{section}` is not a section"))),
    }
}

/// TOML value, else a bracketed list of such values, else a bare string,
/// so `[ARS443, DP1_A242]` works without quoting.
fn parse_value(raw: &str) -> Value {
    if let Some(v) = toml::from_str::<Table>(&format!("v = {raw}")).ok().and_then(|mut t| t.remove("v")) {
        return v;
    }
    match raw.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
        Some(inner) => {
            Value::Array(inner.split(',').map(str::trim).filter(|s| !s.is_empty()).map(parse_value).collect())
        }
        None => Value::String(raw.to_string()),
    }
}

/// Dense matrix: one row per line, entries split on whitespace or commas,
/// `#` starts a comment.
pub fn load_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| io_err(path, format!("line {}: {e}", n + 1)))?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || rows.iter().any(|r| r.len() != ncols) {
        return Err(io_err(path, "matrix rows are empty or ragged"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
