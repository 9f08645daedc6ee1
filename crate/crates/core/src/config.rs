//! Declarative experiment configuration.
//!
//! A run is described by a single human-editable TOML file with a
//! `schema_version` field; every field is validated before any compute
//! starts. The same structure drives all experiment kinds; fields that a
//! kind does not use are ignored after validation.

use crate::error::{Error, Result};
use crate::kernel::{ForceMethod, KernelSpec, DEFAULT_TREE_THETA};
use crate::sde::{default_dt, DiagnosticsOptions, InitialDensity, SimParams};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    PdeSolve,
    WeakformScan,
    ChaosScan,
    NoncollisionScan,
    CalibrateEstimators,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::PdeSolve => "pde_solve",
            ExperimentKind::WeakformScan => "weakform_scan",
            ExperimentKind::ChaosScan => "chaos_scan",
            ExperimentKind::NoncollisionScan => "noncollision_scan",
            ExperimentKind::CalibrateEstimators => "calibrate_estimators",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticlesSection {
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub n_ladder: Option<Vec<usize>>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub epsilon_ladder: Option<Vec<f64>>,
    /// 0 or absent requests the default rule dt = πε³.
    #[serde(default)]
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_outputs")]
    pub outputs: usize,
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_theta")]
    pub tree_theta: f64,
    #[serde(default)]
    pub track_min_every_step: bool,
}

fn default_outputs() -> usize {
    32
}

fn default_method() -> String {
    "direct".to_string()
}

fn default_theta() -> f64 {
    DEFAULT_TREE_THETA
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: String,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Path to a radial table CSV (r-centers header row + one density row).
    #[serde(default)]
    pub table_path: Option<String>,
}

fn default_sigma() -> f64 {
    1.0
}

fn default_radius() -> f64 {
    1.0
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            kind: "gaussian".to_string(),
            sigma: 1.0,
            radius: 1.0,
            table_path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsSection {
    #[serde(default = "default_seed_base")]
    pub base: u64,
    #[serde(default = "default_seed_count")]
    pub count: usize,
    /// Explicit list; overrides base/count when present.
    #[serde(default)]
    pub list: Option<Vec<u64>>,
}

fn default_seed_base() -> u64 {
    1
}

fn default_seed_count() -> usize {
    1
}

impl Default for SeedsSection {
    fn default() -> Self {
        SeedsSection {
            base: 1,
            count: 1,
            list: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "default_true")]
    pub entropy: bool,
    #[serde(default)]
    pub fisher: bool,
    #[serde(default = "default_knn_k")]
    pub knn_k: usize,
}

fn default_true() -> bool {
    true
}

fn default_knn_k() -> usize {
    4
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            entropy: true,
            fisher: false,
            knn_k: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSection {
    #[serde(default = "default_cells")]
    pub cells: usize,
    /// 0 requests the automatic rule r_cloud + 8√(2T).
    #[serde(default)]
    pub r_max: f64,
    #[serde(default = "default_pde_outputs")]
    pub outputs: usize,
}

fn default_cells() -> usize {
    1024
}

fn default_pde_outputs() -> usize {
    32
}

impl Default for PdeSection {
    fn default() -> Self {
        PdeSection {
            cells: default_cells(),
            r_max: 0.0,
            outputs: default_pde_outputs(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakformSection {
    #[serde(default = "default_battery_scale")]
    pub battery_scale: f64,
    #[serde(default = "default_directions")]
    pub directions: usize,
}

fn default_battery_scale() -> f64 {
    1.0
}

fn default_directions() -> usize {
    32
}

impl Default for WeakformSection {
    fn default() -> Self {
        WeakformSection {
            battery_scale: 1.0,
            directions: default_directions(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    /// csv | binary | none
    #[serde(default = "default_snapshot_format")]
    pub snapshot_format: String,
}

fn default_snapshot_format() -> String {
    "none".to_string()
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".to_string(),
            snapshot_format: default_snapshot_format(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub particles: ParticlesSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub seeds: SeedsSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub pde: PdeSection,
    #[serde(default)]
    pub weakform: WeakformSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let p = &self.particles;
        if !(p.t_final >= 0.0 && p.t_final.is_finite()) {
            return Err(Error::Config(format!("t_final = {}", p.t_final)));
        }
        if p.outputs == 0 {
            return Err(Error::Config("outputs must be ≥ 1".into()));
        }
        match p.method.as_str() {
            "direct" => {}
            "tree" => {
                if !(p.tree_theta > 0.0 && p.tree_theta < 1.0) {
                    return Err(Error::Config(format!(
                        "tree_theta = {} must lie in (0, 1)",
                        p.tree_theta
                    )));
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown force method '{other}' (direct|tree)"
                )))
            }
        }
        // every ε on the ladder must satisfy the step rule with the requested dt
        for eps in self.epsilon_values()? {
            let spec = KernelSpec::new(eps).map_err(|e| Error::Config(e.to_string()))?;
            if p.dt > 0.0 {
                let cap = default_dt(spec.epsilon);
                if p.dt > cap * (1.0 + 1e-12) {
                    return Err(Error::Config(format!(
                        "dt = {:.6e} violates the step rule dt ≤ πε³ = {:.6e} at ε = {}",
                        p.dt, cap, eps
                    )));
                }
            }
        }
        for n in self.n_values()? {
            if n == 0 {
                return Err(Error::Config("particle counts must be positive".into()));
            }
        }
        let seeds = self.seed_list(0);
        if seeds.is_empty() {
            return Err(Error::Config("need at least one seed".into()));
        }
        let mut unique = seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        if unique.len() != seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        self.initial_density()?;
        match self.output.snapshot_format.as_str() {
            "csv" | "binary" | "none" => {}
            other => {
                return Err(Error::Config(format!(
                    "unknown snapshot_format '{other}' (csv|binary|none)"
                )))
            }
        }
        if self.pde.cells == 0 || self.pde.outputs == 0 {
            return Err(Error::Config("pde.cells and pde.outputs must be ≥ 1".into()));
        }
        if self.weakform.directions == 0 || !(self.weakform.battery_scale > 0.0) {
            return Err(Error::Config("weakform section invalid".into()));
        }
        Ok(())
    }

    pub fn n_values(&self) -> Result<Vec<usize>> {
        match (&self.particles.n, &self.particles.n_ladder) {
            (Some(n), None) => Ok(vec![*n]),
            (None, Some(ladder)) if !ladder.is_empty() => Ok(ladder.clone()),
            (Some(_), Some(_)) => Err(Error::Config(
                "specify exactly one of particles.n and particles.n_ladder".into(),
            )),
            _ => Err(Error::Config(
                "specify particles.n or a non-empty particles.n_ladder".into(),
            )),
        }
    }

    pub fn epsilon_values(&self) -> Result<Vec<f64>> {
        match (&self.particles.epsilon, &self.particles.epsilon_ladder) {
            (Some(e), None) => Ok(vec![*e]),
            (None, Some(ladder)) if !ladder.is_empty() => Ok(ladder.clone()),
            (Some(_), Some(_)) => Err(Error::Config(
                "specify exactly one of particles.epsilon and particles.epsilon_ladder".into(),
            )),
            _ => Err(Error::Config(
                "specify particles.epsilon or a non-empty particles.epsilon_ladder".into(),
            )),
        }
    }

    pub fn seed_list(&self, seed_offset: u64) -> Vec<u64> {
        match &self.seeds.list {
            Some(list) => list.iter().map(|s| s + seed_offset).collect(),
            None => (0..self.seeds.count as u64)
                .map(|k| self.seeds.base + k + seed_offset)
                .collect(),
        }
    }

    pub fn initial_density(&self) -> Result<InitialDensity> {
        let density = match self.initial.kind.as_str() {
            "gaussian" => InitialDensity::Gaussian {
                sigma: self.initial.sigma,
            },
            "uniform_ball" => InitialDensity::UniformBall {
                radius: self.initial.radius,
            },
            "radial_table" => {
                let path = self.initial.table_path.as_ref().ok_or_else(|| {
                    Error::Config("radial_table initial data needs table_path".into())
                })?;
                InitialDensity::RadialTable(read_radial_table(Path::new(path))?)
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown initial density '{other}' (gaussian|uniform_ball|radial_table)"
                )))
            }
        };
        density.validate()?;
        Ok(density)
    }

    pub fn force_method(&self) -> ForceMethod {
        match self.particles.method.as_str() {
            "tree" => ForceMethod::Tree {
                theta: self.particles.tree_theta,
            },
            _ => ForceMethod::Direct,
        }
    }

    /// Lower the config to simulator parameters for one (n, ε, seed).
    pub fn sim_params(&self, n: usize, epsilon: f64, seed: u64) -> Result<SimParams> {
        let params = SimParams {
            n,
            spec: KernelSpec::new(epsilon)?,
            dt: self.particles.dt,
            t_final: self.particles.t_final,
            outputs: self.particles.outputs,
            rho0: self.initial_density()?,
            seed,
            method: self.force_method(),
            fine_substeps: 1,
            diagnostics: DiagnosticsOptions {
                entropy: self.diagnostics.entropy,
                fisher: self.diagnostics.fisher,
                knn_k: self.diagnostics.knn_k,
            },
            track_min_every_step: self.particles.track_min_every_step,
            drift_cap_check: true,
        };
        params.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(params)
    }
}

/// Radial table CSV: r-centers header row and a single density row (the
/// same layout the PDE series writer uses, one time row).
fn read_radial_table(path: &Path) -> Result<crate::pde::RadialField> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty radial table".into()))?;
    let centers: Vec<f64> = header
        .split(',')
        .skip(1)
        .map(crate::output::parse_f64)
        .collect();
    let row = lines
        .next()
        .ok_or_else(|| Error::Config("radial table has no density row".into()))?;
    let values: Vec<f64> = row
        .split(',')
        .skip(1)
        .map(crate::output::parse_f64)
        .collect();
    if centers.len() != values.len() || centers.is_empty() {
        return Err(Error::Config("radial table shape mismatch".into()));
    }
    let dr = 2.0 * centers[0];
    let r_max = dr * centers.len() as f64;
    crate::pde::RadialField::new(r_max, values, 0.0)
        .map_err(|e| Error::Config(format!("radial table: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml() -> String {
        r#"
schema_version = 1
kind = "simulate"

[particles]
n = 8
epsilon = 0.1
t_final = 0.01

[output]
dir = "out"
"#
        .to_string()
    }

    #[test]
    fn minimal_config_parses_and_validates() {
        let config = ExperimentConfig::from_toml(&minimal_toml()).unwrap();
        assert_eq!(config.kind, ExperimentKind::Simulate);
        assert_eq!(config.n_values().unwrap(), vec![8]);
        assert_eq!(config.seed_list(0), vec![1]);
        let params = config.sim_params(8, 0.1, 1).unwrap();
        assert_eq!(params.n, 8);
    }

    #[test]
    fn dt_rule_violation_names_the_rule() {
        let toml = minimal_toml().replace("t_final = 0.01", "t_final = 0.01\ndt = 0.5");
        let err = ExperimentConfig::from_toml(&toml).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("πε³"), "message should name the rule: {msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let toml = minimal_toml() + "\n[seeds]\nlist = [3, 3]\n";
        assert!(matches!(
            ExperimentConfig::from_toml(&toml),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let toml = minimal_toml().replace("schema_version = 1", "schema_version = 99");
        assert!(matches!(
            ExperimentConfig::from_toml(&toml),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn both_n_and_ladder_rejected() {
        let toml = minimal_toml().replace("n = 8", "n = 8\nn_ladder = [8, 16]");
        assert!(ExperimentConfig::from_toml(&toml).is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        let toml = minimal_toml() + "\n[particles.bogus]\nx = 1\n";
        assert!(ExperimentConfig::from_toml(&toml).is_err());
    }

    #[test]
    fn seed_offset_shifts_all() {
        let toml = minimal_toml() + "\n[seeds]\nbase = 10\ncount = 3\n";
        let config = ExperimentConfig::from_toml(&toml).unwrap();
        assert_eq!(config.seed_list(5), vec![15, 16, 17]);
    }

    #[test]
    fn radial_table_round_trips_through_csv() {
        let dir = std::env::temp_dir().join("mf_config_table");
        std::fs::create_dir_all(&dir).unwrap();
        let table_path = dir.join("rho.csv");
        let field = crate::pde::RadialField::discretize(
            crate::pde::uniform_ball_radial(1.0),
            1.0,
            32,
            true,
        )
        .unwrap();
        crate::output::write_radial_series_csv(&table_path, std::slice::from_ref(&field))
            .unwrap();
        let toml = minimal_toml()
            + &format!(
                "\n[initial]\nkind = \"radial_table\"\ntable_path = \"{}\"\n",
                table_path.display()
            );
        let config = ExperimentConfig::from_toml(&toml).unwrap();
        match config.initial_density().unwrap() {
            InitialDensity::RadialTable(table) => {
                assert!((table.mass() - 1.0).abs() < 1e-9);
                assert_eq!(table.cells(), 32);
            }
            other => panic!("expected radial table, got {other:?}"),
        }
    }
}
