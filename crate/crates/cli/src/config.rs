//! Run configuration: a JSON document with per-flag overrides.

use serde::{Deserialize, Serialize};

use bdarch::covariates::CovariateSpec;
use bdarch::inference::SamplerConfig;
use bdarch::model::{ModelSpec, ModelVariant, Priors};

use crate::errors::{CliError, CliResult};

/// Prior selection: a named preset or a fully explicit set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorChoice {
    Preset(String),
    Explicit(Box<Priors>),
}

impl Default for PriorChoice {
    fn default() -> Self {
        PriorChoice::Preset("data-fit".into())
    }
}

impl PriorChoice {
    pub fn resolve(&self) -> CliResult<Priors> {
        match self {
            PriorChoice::Explicit(p) => Ok(*p.clone()),
            PriorChoice::Preset(name) => match name.as_str() {
                "simulation" => Ok(Priors::simulation()),
                "data-fit" | "airbnb" => Ok(Priors::data_fit()),
                other => Err(CliError::usage(format!(
                    "unknown prior preset '{other}' (expected 'simulation' or 'data-fit')"
                ))),
            },
        }
    }
}

/// Full declarative description of one fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variant: ModelVariant,
    pub ar_order: usize,
    pub ma_order: usize,
    pub prec_ar_order: usize,
    pub prec_ma_order: usize,
    /// Reference component by column name; the last data column when absent.
    pub ref_component: Option<String>,
    pub mean_covariates: CovariateSpec,
    pub prec_covariates: CovariateSpec,
    pub priors: PriorChoice,
    pub sampler: SamplerConfig,
    pub seed: Option<u64>,
    /// Rows used for training; all rows when absent.
    pub train_len: Option<usize>,
    /// Rows after training reserved for validation (sweep).
    pub validation_len: Option<usize>,
    /// Display multiplier for rendered metric tables.
    pub display_scale: f64,
    /// Accept long-format (time, component, value) data files.
    pub long_format: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: ModelVariant::BDarmaDarch,
            ar_order: 1,
            ma_order: 0,
            prec_ar_order: 1,
            prec_ma_order: 1,
            ref_component: None,
            mean_covariates: CovariateSpec::intercept_only(),
            prec_covariates: CovariateSpec::intercept_only(),
            priors: PriorChoice::default(),
            sampler: SamplerConfig::data_fit(0),
            seed: None,
            train_len: None,
            validation_len: None,
            display_scale: 100.0,
            long_format: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    /// Builds the model spec once the component order is known.
    pub fn model_spec(&self, component_names: &[String]) -> CliResult<ModelSpec> {
        let ref_index = match &self.ref_component {
            Some(name) => component_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| {
                    CliError::usage(format!(
                        "reference component '{name}' not found among {component_names:?}"
                    ))
                })?,
            None => component_names.len() - 1,
        };
        let (l, k) = if self.variant == ModelVariant::BDarmaDarch {
            (self.prec_ar_order, self.prec_ma_order)
        } else {
            (0, 0)
        };
        let spec = ModelSpec {
            variant: self.variant,
            n_components: component_names.len(),
            ar_order: self.ar_order,
            ma_order: self.ma_order,
            prec_ar_order: l,
            prec_ma_order: k,
            ref_index,
            mean_covariates: self.mean_covariates.clone(),
            prec_covariates: self.prec_covariates.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Resolves the output directory: the flag wins, then the environment
/// variable, then the current directory.
pub fn resolve_out_dir(flag: Option<&std::path::Path>) -> std::path::PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Ok(env) = std::env::var("BDARCH_OUT_DIR") {
        if !env.is_empty() {
            return env.into();
        }
    }
    ".".into()
}
