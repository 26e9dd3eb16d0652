//! Experiment configuration: TOML sections, built-in presets and `key=value` overrides.

use crate::bounds::TempleRegime;
use crate::discretize::{BcTag, PeriodicPotential};
use crate::error::{Error, Result};
use crate::impurity::PotentialSpec;
use crate::model::{ModelSpec, TruncationSpec};
use crate::rmeasure::MeasureSpec;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "LIFSHITS_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    #[serde(default)]
    pub u_per: PeriodicPotential,
    pub n_per_cell: usize,
    #[serde(default = "default_bc")]
    pub bc: BcTag,
}

fn default_bc() -> BcTag {
    BcTag::Mezincescu
}

/// Energies `10^(start + i·step)` for `i < count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogSchedule {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl LogSchedule {
    pub fn energies(&self) -> Vec<f64> {
        (0..self.count).map(|i| 10f64.powf(self.start + i as f64 * self.step)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Explicit energy schedule; exclusive with `log_energies`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_energies: Option<LogSchedule>,
    /// Side of the sandwich box `[0, L)^d`; direct estimates use `[0, 2L)^d`.
    pub side: i64,
    pub n_realizations: usize,
    #[serde(default = "one")]
    pub r0: f64,
    #[serde(default = "one")]
    pub prefactor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_factorizations: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    #[serde(default = "default_n_eigs")]
    pub n_eigs: usize,
    #[serde(default = "default_bench_sides")]
    pub bench_sides: Vec<i64>,
}

fn one() -> f64 {
    1.0
}
fn default_n_eigs() -> usize {
    4
}
fn default_bench_sides() -> Vec<i64> {
    vec![4, 8, 16, 32]
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            energies: Some(vec![0.05, 0.1, 0.2]),
            log_energies: None,
            side: 8,
            n_realizations: 20,
            r0: 1.0,
            prefactor: 1.0,
            max_factorizations: None,
            fit_window: None,
            n_eigs: default_n_eigs(),
            bench_sides: default_bench_sides(),
        }
    }
}

impl ExperimentSection {
    pub fn energies(&self) -> Result<Vec<f64>> {
        match (&self.energies, &self.log_energies) {
            (Some(e), None) => Ok(e.clone()),
            (None, Some(s)) => Ok(s.energies()),
            (Some(_), Some(_)) => Err(Error::Config("give either experiment.energies or experiment.log_energies, not both".into())),
            (None, None) => Err(Error::Config("experiment needs an energy schedule".into())),
        }
    }

    pub fn fit_window(&self) -> Option<(f64, f64)> {
        self.fit_window.map(|[a, b]| (a, b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsKind {
    /// Dirichlet/Mezincescu bracket of the IDS, driven by the experiment section.
    Sandwich,
    /// Temple / Rayleigh–Ritz chain on single realizations.
    Temple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub kind: BoundsKind,
    #[serde(default = "default_regime")]
    pub regime: TempleRegime,
    /// Scale `L` of the Temple setup.
    #[serde(default = "default_length")]
    pub length: i64,
    #[serde(default = "two")]
    pub r0: f64,
    #[serde(default = "default_chain_n")]
    pub n_realizations: usize,
}

fn default_regime() -> TempleRegime {
    TempleRegime::Qm
}
fn default_length() -> i64 {
    4
}
fn two() -> f64 {
    2.0
}
fn default_chain_n() -> usize {
    50
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self { kind: BoundsKind::Sandwich, regime: default_regime(), length: default_length(), r0: 2.0, n_realizations: default_chain_n() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSection {
    pub eps_grid: Vec<f64>,
    pub n_small_mass: u64,
    pub mixing_lag: Vec<i64>,
    pub n_mixing: u64,
    pub intensity_side: i64,
    pub n_intensity: u64,
    pub bs_p: f64,
    pub bs_radii: Vec<usize>,
    /// Measure used for the small-mass test; defaults to the model measure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub small_mass_measure: Option<MeasureSpec>,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self {
            eps_grid: vec![0.05, 0.1, 0.2, 0.4],
            n_small_mass: 20_000,
            mixing_lag: vec![2, 0],
            n_mixing: 20_000,
            intensity_side: 2,
            n_intensity: 5_000,
            bs_p: 2.0,
            bs_radii: vec![4, 8, 16, 32],
            small_mass_measure: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub out_dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("out") }
    }
}

/// Full experiment description; every field of every section is checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub measure: MeasureSpec,
    pub potential: PotentialSpec,
    #[serde(default)]
    pub truncation: TruncationSpec,
    pub operator: OperatorSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub stats: StatsSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            measure: self.measure.clone(),
            potential: self.potential.clone(),
            u_per: self.operator.u_per.clone(),
            n_per_cell: self.operator.n_per_cell,
            truncation: self.truncation.clone(),
        }
    }

    /// Checks module preconditions that do not need any sampling.
    pub fn validate(&self) -> Result<()> {
        self.measure.validate()?;
        let pot = self.potential.build()?;
        if self.operator.n_per_cell < 2 {
            return Err(Error::Config("operator.n_per_cell must be at least 2".into()));
        }
        if let Some(r) = self.truncation.radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config("truncation.radius must be positive".into()));
            }
        }
        if !(self.truncation.tolerance > 0.0) {
            return Err(Error::Config("truncation.tolerance must be positive".into()));
        }
        let ex = &self.experiment;
        let e = ex.energies()?;
        crate::ids::check_energies(&e)?;
        if ex.side < 1 {
            return Err(Error::Config("experiment.side must be positive".into()));
        }
        if ex.n_realizations < 2 {
            return Err(Error::Config("experiment.n_realizations must be at least 2".into()));
        }
        if !(ex.r0 > 0.0 && ex.prefactor > 0.0) {
            return Err(Error::Config("experiment.r0 and experiment.prefactor must be positive".into()));
        }
        if let Some([a, b]) = ex.fit_window {
            if !(a > 0.0 && b > a) {
                return Err(Error::Config("experiment.fit_window must satisfy 0 < lo < hi".into()));
            }
        }
        if ex.bench_sides.iter().any(|&s| s < 1) {
            return Err(Error::Config("experiment.bench_sides must be positive".into()));
        }
        let b = &self.bounds;
        if b.length < 1 || !(b.r0 > 0.0) || b.n_realizations == 0 {
            return Err(Error::Config("bounds.length, bounds.r0 and bounds.n_realizations must be positive".into()));
        }
        if b.kind == BoundsKind::Temple && b.regime != TempleRegime::Qm && pot.profile().blocks() != 2 {
            return Err(Error::Config("qc and cl Temple setups need a two-block profile".into()));
        }
        let s = &self.stats;
        if s.eps_grid.iter().any(|&e| !(e > 0.0)) || s.mixing_lag.len() != pot.dim() || s.intensity_side < 1 {
            return Err(Error::Config("stats: eps_grid must be positive, mixing_lag must have one entry per dimension".into()));
        }
        if let Some(m) = &s.small_mass_measure {
            m.validate()?;
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hash of everything except the output section.
    pub fn hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(m) = v.as_object_mut() {
            m.remove("output");
        }
        crate::records::config_hash(&v)
    }
}

/// Names of the built-in presets.
pub const PRESETS: &[&str] = &["qm-poisson", "cl-poisson", "sandwich-small", "temple-qm", "temple-qc", "temple-cl"];

/// Energy schedule shared by the regime presets.
pub const REGIME_SCHEDULE: LogSchedule = LogSchedule { start: -1.3, step: 0.1, count: 17 };

fn algebraic(f0: f64, alpha: [f64; 2]) -> PotentialSpec {
    PotentialSpec::Algebraic { f0, dims: vec![1, 1], alpha: alpha.to_vec() }
}

fn regime_experiment_section() -> ExperimentSection {
    ExperimentSection {
        energies: None,
        log_energies: Some(REGIME_SCHEDULE),
        side: 16,
        n_realizations: 200,
        ..ExperimentSection::default()
    }
}

fn temple_preset(regime: TempleRegime, alpha: [f64; 2], radius: Option<f64>, length: i64, r0: f64) -> ExperimentConfig {
    ExperimentConfig {
        seed: 5,
        measure: MeasureSpec::Poisson { intensity: 1.0 },
        potential: algebraic(1.0, alpha),
        truncation: TruncationSpec { radius, ..TruncationSpec::default() },
        operator: OperatorSection { u_per: PeriodicPotential::Zero, n_per_cell: 4, bc: BcTag::Mezincescu },
        experiment: ExperimentSection::default(),
        bounds: BoundsSection { kind: BoundsKind::Temple, regime, length, r0, n_realizations: 50 },
        stats: StatsSection::default(),
        output: OutputSection::default(),
    }
}

/// Built-in preset by name.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let base = |measure: MeasureSpec, potential: PotentialSpec, truncation: TruncationSpec| ExperimentConfig {
        seed: 7,
        measure,
        potential,
        truncation,
        operator: OperatorSection { u_per: PeriodicPotential::Zero, n_per_cell: 2, bc: BcTag::Mezincescu },
        experiment: regime_experiment_section(),
        bounds: BoundsSection::default(),
        stats: StatsSection::default(),
        output: OutputSection::default(),
    };
    match name {
        "qm-poisson" => Ok(base(MeasureSpec::Poisson { intensity: 0.3 }, algebraic(1.0, [10.0, 10.0]), TruncationSpec::default())),
        "cl-poisson" => Ok(base(
            MeasureSpec::Poisson { intensity: 0.3 },
            algebraic(0.2, [2.5, 2.5]),
            TruncationSpec { radius: Some(8.0), ..TruncationSpec::default() },
        )),
        "sandwich-small" => {
            let mut c = base(MeasureSpec::Poisson { intensity: 1.0 }, algebraic(0.005, [10.0, 10.0]), TruncationSpec::default());
            c.seed = 11;
            c.experiment = ExperimentSection {
                energies: Some(vec![0.02, 0.05, 0.1]),
                log_energies: None,
                side: 16,
                n_realizations: 200,
                ..ExperimentSection::default()
            };
            Ok(c)
        }
        "temple-qm" => Ok(temple_preset(TempleRegime::Qm, [10.0, 10.0], None, 4, 2.0)),
        "temple-qc" => Ok(temple_preset(TempleRegime::Qc, [f64::INFINITY, 2.5], Some(48.0), 4, 2.5)),
        "temple-cl" => Ok(temple_preset(TempleRegime::Cl, [2.5, 2.5], Some(64.0), 1, 2.0)),
        other => Err(Error::Config(format!("unknown preset {other:?}; known: {}", PRESETS.join(", ")))),
    }
}

/// Applies `a.b.c=value` to a TOML tree. The value is parsed as a TOML literal
/// and falls back to a plain string.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let value = parse_literal(raw.trim());
    let mut table = root;
    for p in &path[..path.len() - 1] {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a section")))?;
    }
    table.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Where the base configuration comes from.
#[derive(Debug, Clone, Default)]
pub struct ConfigSource {
    pub preset: Option<String>,
    pub path: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

/// Preset (if any), then the config file merged over it, then overrides and flags.
pub fn resolve(src: &ConfigSource) -> Result<ExperimentConfig> {
    let mut table = match &src.preset {
        Some(name) => toml::Table::try_from(preset(name)?).map_err(|e| Error::Config(e.to_string()))?,
        None => toml::Table::new(),
    };
    if let Some(p) = &src.path {
        let file = read_table(p)?;
        merge(&mut table, file);
    }
    if src.preset.is_none() && src.path.is_none() {
        return Err(Error::Config("give --config or --preset".into()));
    }
    for o in &src.overrides {
        apply_override(&mut table, o)?;
    }
    let mut cfg: ExperimentConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    if let Some(s) = src.seed {
        cfg.seed = s;
    }
    if let Some(d) = &src.out_dir {
        cfg.output.out_dir = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_table(p: &Path) -> Result<toml::Table> {
    let s = std::fs::read_to_string(p)?;
    s.parse::<toml::Table>().map_err(|e| Error::Config(format!("{}: {e}", p.display())))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !is_tagged(b) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Tagged sections (`family`, `kind`, `law`) are replaced wholesale so that
/// switching variants does not leave stale fields behind.
fn is_tagged(t: &toml::Table) -> bool {
    ["family", "kind", "law"].iter().any(|k| t.contains_key(*k))
}

/// Lockfile contents: the resolved configuration and its hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLock {
    pub config_hash: String,
    pub config: ExperimentConfig,
}
