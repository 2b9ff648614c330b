//! Run configuration.
//!
//! A run is described by one TOML document layered over a scale preset:
//!
//! 1. the preset (`desk` or `paper`) supplies every value;
//! 2. the config file, if any, overrides keys it names;
//! 3. each `--set key.path=value` override is applied in order.
//!
//! The merged tree is then decoded into [`RunConfig`]. Unknown keys anywhere in the
//! tree are rejected, and [`RunConfig::validate`] checks every section before any
//! computation starts. Values in `--set` are parsed as TOML (`3`, `1e-4`, `[8, 8, 2]`,
//! `"paper"`); anything that does not parse is taken as a bare string.
//!
//! Top-level keys:
//!
//! | key       | meaning |
//! |-----------|---------|
//! | `case`    | `case1`, `case2` or `case3` |
//! | `seed`    | master seed; every stream is derived from it |
//! | `out`     | output directory |
//! | `preset`  | `desk` or `paper` |
//! | `workers` | worker threads, `0` for one per core |
//! | `case1`   | uplink power control, see [`UplinkExperiment`] |
//! | `case2`   | Poisson vs square-grid density study, see [`Case2Config`] |
//! | `case3`   | uniform vs Gaussian consumption study, see [`Case3Config`] |
//!
//! Units follow the field names: `*_dbm` in dBm, `*_hz` in hertz, densities in
//! points per m², all other powers in watts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::GridMcConfig;
use crate::pipeline::{ConsumptionSpec, DensitySpec, TransferExperiment, UplinkExperiment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Case1,
    Case2,
    Case3,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::Case1 => "case1",
            Case::Case2 => "case2",
            Case::Case3 => "case3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config(format!("unknown preset {other:?}, expected desk or paper"))),
        }
    }
}

/// Candidate architectures compared at one empirical budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub x: usize,
    pub candidates: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case2Config {
    pub density: DensitySpec,
    pub grid: GridMcConfig,
    /// Monte-Carlo realizations behind the square-grid oracle.
    pub n_mc: usize,
    /// Held-out empirical samples.
    pub n_test: usize,
    pub transfer: TransferExperiment,
    pub sweep: SweepSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case3Config {
    pub consumption: ConsumptionSpec,
    pub n_test: usize,
    pub transfer: TransferExperiment,
    pub sweep: SweepSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: Case,
    pub seed: u64,
    pub out: PathBuf,
    pub preset: Preset,
    pub workers: usize,
    pub case1: UplinkExperiment,
    pub case2: Case2Config,
    pub case3: Case3Config,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::preset(Preset::Desk)
    }
}

impl RunConfig {
    /// Every value of a scale preset.
    pub fn preset(preset: Preset) -> Self {
        let desk = preset == Preset::Desk;
        let mut case1 = UplinkExperiment::default();
        if !desk {
            case1.uplink.n_users = 10;
            case1.n_train = 10_000;
            case1.n_test = 10_000;
        }
        let (n_total, x_values, sweep_x) = if desk {
            (6000, vec![60, 120, 300, 420, 600], 420)
        } else {
            (30_000, vec![300, 600, 1500, 2100, 3000], 2100)
        };
        let transfer = TransferExperiment { n_total, x_values, ..TransferExperiment::default() };
        RunConfig {
            case: Case::Case2,
            seed: 1,
            out: PathBuf::from("out"),
            preset,
            workers: 0,
            case1,
            case2: Case2Config {
                density: DensitySpec::default(),
                grid: GridMcConfig::default(),
                n_mc: 4000,
                n_test: 1000,
                transfer: transfer.clone(),
                sweep: SweepSpec {
                    x: sweep_x,
                    candidates: vec![vec![8, 8, 2], vec![4, 4, 2], vec![16, 16, 2], vec![8, 8, 8], vec![64, 32, 16, 8, 4, 2]],
                },
            },
            case3: Case3Config {
                consumption: ConsumptionSpec::default(),
                n_test: 1000,
                transfer: TransferExperiment { hidden: vec![8; 5], ..transfer },
                sweep: SweepSpec {
                    x: sweep_x,
                    candidates: vec![vec![8; 5], vec![4; 5], vec![16; 5], vec![128, 64, 32, 16, 8]],
                },
            },
        }
    }

    /// Preset, then `file`, then `overrides`; the result is validated.
    ///
    /// `preset` wins over a `preset` key in the file. Without either, `desk` is used.
    pub fn load(file: Option<&Path>, preset: Option<Preset>, overrides: &[String]) -> Result<Self> {
        let user = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                text.parse::<toml::Table>().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        let preset = match (preset, user.get("preset")) {
            (Some(p), _) => p,
            (None, Some(toml::Value::String(s))) => s.parse()?,
            (None, Some(other)) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
            (None, None) => Preset::Desk,
        };
        let mut tree = toml::Table::try_from(RunConfig::preset(preset)).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut tree, user);
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        tree.insert("preset".into(), toml::Value::try_from(preset).map_err(|e| Error::Config(e.to_string()))?);
        let cfg: RunConfig = toml::Value::Table(tree).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every section; failures are reported as [`Error::Config`].
    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|e| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        })
    }

    fn check(&self) -> Result<()> {
        let c1 = &self.case1;
        let u = &c1.uplink;
        if u.n_users == 0 || !(u.radius_m > 0.0) || !(u.pmax_dbm[0] <= u.pmax_dbm[1]) {
            return Err(Error::Config("case1.uplink: need users, a positive radius and an ordered pmax range".into()));
        }
        if c1.n_train < 2 || c1.n_test == 0 || c1.pmax_sweep_dbm.is_empty() {
            return Err(Error::Config("case1: need n_train >= 2, n_test >= 1 and a non-empty pmax sweep".into()));
        }
        check_hidden("case1.hidden", &c1.hidden)?;
        c1.train.validate()?;

        let c2 = &self.case2;
        check_density("case2.density", &c2.density)?;
        if c2.n_mc == 0 || c2.grid.n_lambda < 3 || !(c2.grid.radius > 1.0) {
            return Err(Error::Config("case2: need n_mc >= 1, grid.n_lambda >= 3 and grid.radius > 1".into()));
        }
        check_transfer("case2", &c2.transfer, &c2.sweep, c2.n_test)?;

        let c3 = &self.case3;
        check_density("case3.consumption.density", &c3.consumption.density)?;
        c3.consumption.consumption.validate()?;
        check_transfer("case3", &c3.transfer, &c3.sweep, c3.n_test)
    }

    /// Transfer settings of the selected density case.
    pub fn transfer(&self) -> Option<(&TransferExperiment, &SweepSpec, usize)> {
        match self.case {
            Case::Case1 => None,
            Case::Case2 => Some((&self.case2.transfer, &self.case2.sweep, self.case2.n_test)),
            Case::Case3 => Some((&self.case3.transfer, &self.case3.sweep, self.case3.n_test)),
        }
    }

    /// Resolved configuration as TOML text.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn check_hidden(what: &str, hidden: &[usize]) -> Result<()> {
    if hidden.is_empty() || hidden.contains(&0) {
        return Err(Error::Config(format!("{what}: hidden layers must be non-empty and positive, got {hidden:?}")));
    }
    Ok(())
}

fn check_density(what: &str, d: &DensitySpec) -> Result<()> {
    d.params.validate().map_err(|e| Error::Config(format!("{what}.params: {e}")))?;
    d.bracket.validate().map_err(|e| Error::Config(format!("{what}.bracket: {e}")))?;
    if !(d.tol > 0.0) || !(d.tx_power_dbm[0] <= d.tx_power_dbm[1]) {
        return Err(Error::Config(format!("{what}: need tol > 0 and an ordered tx_power_dbm range")));
    }
    Ok(())
}

fn check_transfer(what: &str, t: &TransferExperiment, sweep: &SweepSpec, n_test: usize) -> Result<()> {
    t.validate().map_err(|e| Error::Config(format!("{what}.transfer: {e}")))?;
    check_hidden(&format!("{what}.transfer.hidden"), &t.hidden)?;
    if n_test == 0 {
        return Err(Error::Config(format!("{what}.n_test must be positive")));
    }
    if sweep.candidates.is_empty() {
        return Err(Error::Config(format!("{what}.sweep.candidates is empty")));
    }
    for c in &sweep.candidates {
        check_hidden(&format!("{what}.sweep.candidates"), c)?;
    }
    if sweep.x > t.n_total || sweep.x == 1 {
        return Err(Error::Config(format!("{what}.sweep.x = {} must be 0 or in 2..={}", sweep.x, t.n_total)));
    }
    Ok(())
}

/// Recursively overlays `src` onto `dst`; non-table values replace.
fn merge(dst: &mut toml::Table, src: toml::Table) {
    for (k, v) in src {
        match (dst.get_mut(&k), v) {
            (Some(toml::Value::Table(d)), toml::Value::Table(s)) => merge(d, s),
            (_, v) => {
                dst.insert(k, v);
            }
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one `a.b.c=value` override.
fn apply_override(tree: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut node = tree;
    for part in &path[..path.len() - 1] {
        node = match node.get_mut(*part) {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(Error::Config(format!("override {key:?}: {part} is not a table"))),
            None => return Err(Error::Config(format!("override {key:?}: unknown key {part}"))),
        };
    }
    let leaf = path[path.len() - 1];
    if !node.contains_key(leaf) {
        return Err(Error::Config(format!("override {key:?}: unknown key {leaf}")));
    }
    node.insert(leaf.to_string(), parse_value(raw.trim()));
    Ok(())
}
