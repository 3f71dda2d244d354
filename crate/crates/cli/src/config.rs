use std::path::{Path, PathBuf};

use recast_core::sim::{default_nominal_grid, Method, Scenario, SimConfig, STUDY_N_TARGET, STUDY_SIGMA_TL2};
use recast_core::{MlpConfig, RecastConfig, ResponseKind};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Start from the shortened preset instead of the full schedule.
    pub desk_scale: bool,
    pub data: DataSection,
    pub source: SourceSection,
    pub recast: RecastConfig,
    pub mlp: MlpConfig,
    pub grid: GridSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub label_col: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    /// Prepend a column of ones to the CSV features.
    pub intercept: bool,
    /// Ridge penalty retried when a logistic fit is separated. 0 disables the
    /// retry in `fit-source`; the simulation grid always retries (with 1 if 0).
    pub ridge_fallback: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub responses: Vec<ResponseKind>,
    pub n_target: Vec<usize>,
    pub sigma_tl2: Vec<f64>,
    pub p: usize,
    pub n_source: usize,
    pub n_test: usize,
    pub noise_sd: f64,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub nominal_levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Results CSV of `replicate` when `--out` is not given.
    pub results: PathBuf,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { label_col: "y".into() }
    }
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            intercept: true,
            ridge_fallback: 1.0,
        }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        let s = Scenario::default();
        Self {
            responses: vec![ResponseKind::Continuous, ResponseKind::Binary],
            n_target: STUDY_N_TARGET.to_vec(),
            sigma_tl2: STUDY_SIGMA_TL2.to_vec(),
            p: s.p,
            n_source: s.n_source,
            n_test: s.n_test,
            noise_sd: s.noise_sd,
            replicates: 300,
            methods: Method::ALL.to_vec(),
            nominal_levels: default_nominal_grid(),
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            results: PathBuf::from("results.csv"),
            threads: 0,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: SimConfig::default().master_seed,
            desk_scale: false,
            data: DataSection::default(),
            source: SourceSection::default(),
            recast: RecastConfig::default(),
            mlp: MlpConfig::default(),
            grid: GridSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl RunConfig {
    pub fn desk() -> Self {
        let mut c = Self {
            desk_scale: true,
            recast: RecastConfig::desk(),
            ..Self::default()
        };
        c.grid.replicates = SimConfig::desk().replicates;
        c
    }

    /// Reads `path` (if any) over the full or desk defaults. The desk preset
    /// applies when `desk` is set or the file says `desk_scale = true`;
    /// explicit keys in the file still win over the preset.
    pub fn load(path: Option<&Path>, desk: bool) -> Result<Self, CliError> {
        let user: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        let desk = desk || matches!(user.get("desk_scale"), Some(toml::Value::Boolean(true)));
        let base = if desk { Self::desk() } else { Self::default() };
        let mut merged = toml::Table::try_from(&base).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut merged, user);
        let mut cfg: RunConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        cfg.desk_scale = desk;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.recast.validate()?;
        self.mlp.validate()?;
        if self.data.label_col.is_empty() {
            return Err(CliError::Config("data.label_col must not be empty".into()));
        }
        if !(self.source.ridge_fallback >= 0.0) {
            return Err(CliError::Config("source.ridge_fallback must be non-negative".into()));
        }
        Ok(())
    }

    pub fn scenarios(&self, only: Option<ResponseKind>) -> Vec<Scenario> {
        let g = &self.grid;
        let mut out = Vec::new();
        for &response in &g.responses {
            if only.is_some_and(|r| r != response) {
                continue;
            }
            for &n_target in &g.n_target {
                for &sigma_tl2 in &g.sigma_tl2 {
                    out.push(Scenario {
                        response,
                        n_target,
                        sigma_tl2,
                        p: g.p,
                        n_source: g.n_source,
                        n_test: g.n_test,
                        noise_sd: g.noise_sd,
                    });
                }
            }
        }
        out
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            master_seed: self.seed,
            replicates: self.grid.replicates,
            recast: self.recast.clone(),
            mlp: self.mlp.clone(),
            methods: self.grid.methods.clone(),
            nominal_levels: self.grid.nominal_levels.clone(),
            ridge_fallback: if self.source.ridge_fallback > 0.0 { self.source.ridge_fallback } else { 1.0 },
        }
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Writes the fully resolved configuration to `<output>.config.toml`.
    pub fn write_sidecar(&self, output: &Path) -> Result<PathBuf, CliError> {
        let path = sidecar(output, "config.toml");
        std::fs::write(&path, self.to_toml()?)?;
        Ok(path)
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// `<output>.<suffix>` next to `output`.
pub fn sidecar(output: &Path, suffix: &str) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    output.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        for c in [RunConfig::default(), RunConfig::desk()] {
            let text = c.to_toml().unwrap();
            let back: RunConfig = toml::from_str(&text).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn file_overrides_preset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "desk_scale = true\n[recast.mh]\nn_post = 50\n").unwrap();
        let c = RunConfig::load(Some(&p), false).unwrap();
        assert!(c.desk_scale);
        assert_eq!(c.recast.mh.n_post, 50);
        assert_eq!(c.recast.mh.total_iters, RunConfig::desk().recast.mh.total_iters);
        assert_eq!(c.grid.replicates, 30);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[recast.mh]\nburnin = 5\n").unwrap();
        assert!(matches!(RunConfig::load(Some(&p), false), Err(CliError::Config(_))));
        std::fs::write(&p, "colour = 1\n").unwrap();
        assert!(matches!(RunConfig::load(Some(&p), false), Err(CliError::Config(_))));
    }

    #[test]
    fn grid_arithmetic() {
        let c = RunConfig::desk();
        assert_eq!(c.scenarios(None).len(), 40);
        assert_eq!(c.scenarios(Some(ResponseKind::Binary)).len(), 20);
    }
}
