//! Experiment configuration files.
//!
//! Each subcommand reads a flat TOML document. Unknown keys are rejected so a
//! misspelled parameter fails loudly instead of silently falling back to a
//! default.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use cesgeo::estimation::EstimationConfig;
use cesgeo::{CesModel, Generator};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

/// Distribution family of the simulated data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gaussian,
    StudentT,
}

/// How the true scatter matrix is built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScatterKind {
    Toeplitz,
    Identity,
    File,
}

/// Estimators compared by `crb-sim`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Scm,
    /// MLE matched to the data model.
    Mle,
    /// Student-t MLE with `mismatched_dof` whatever the data model.
    MleMismatched,
}

fn model_from(kind: ModelKind, dof: Option<f64>, p: usize) -> Result<CesModel> {
    Ok(match kind {
        ModelKind::Gaussian => CesModel::gaussian(p),
        ModelKind::StudentT => {
            let dof = dof.context("model = \"student_t\" requires `dof`")?;
            CesModel::student_t(p, dof)?
        }
    })
}

fn estimation_config(tolerance: f64, max_iterations: usize) -> Result<EstimationConfig> {
    let config = EstimationConfig {
        tolerance,
        max_iterations,
        ..Default::default()
    };
    config.validate()?;
    Ok(config)
}

/// Scatter description shared by the simulation configs.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatterSpec {
    pub kind: ScatterKind,
    pub rho_re: f64,
    pub rho_im: f64,
    pub scale: f64,
    pub file: Option<PathBuf>,
}

impl ScatterSpec {
    fn default_toeplitz() -> Self {
        let r = 0.9 * std::f64::consts::FRAC_1_SQRT_2;
        Self {
            kind: ScatterKind::Toeplitz,
            rho_re: r,
            rho_im: r,
            scale: 1.0,
            file: None,
        }
    }

    fn validate(&self) -> Result<()> {
        ensure!(
            self.scale > 0.0 && self.scale.is_finite(),
            "scatter scale must be positive"
        );
        if self.kind == ScatterKind::File {
            ensure!(self.file.is_some(), "scatter kind \"file\" requires `file`");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrbSimConfig {
    pub experiment: String,
    pub p: usize,
    pub model: ModelKind,
    pub dof: Option<f64>,
    pub scatter: ScatterKind,
    pub rho_re: f64,
    pub rho_im: f64,
    pub scatter_file: Option<PathBuf>,
    /// Sample sizes; defaults to `{2p, 5p, 10p, 100p}`.
    pub n_grid: Option<Vec<usize>>,
    pub trials: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub mismatched_dof: f64,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for CrbSimConfig {
    fn default() -> Self {
        let toeplitz = ScatterSpec::default_toeplitz();
        Self {
            experiment: "crb_sim".into(),
            p: 10,
            model: ModelKind::StudentT,
            dof: Some(3.0),
            scatter: ScatterKind::Toeplitz,
            rho_re: toeplitz.rho_re,
            rho_im: toeplitz.rho_im,
            scatter_file: None,
            n_grid: None,
            trials: 500,
            seed: 0,
            estimators: vec![EstimatorKind::Scm, EstimatorKind::Mle, EstimatorKind::MleMismatched],
            mismatched_dof: 10.0,
            workers: 0,
            out: None,
            tolerance: 1e-9,
            max_iterations: 1000,
        }
    }
}

impl CrbSimConfig {
    pub fn n_values(&self) -> Vec<usize> {
        self.n_grid
            .clone()
            .unwrap_or_else(|| [2, 5, 10, 100].iter().map(|k| k * self.p).collect())
    }

    pub fn scatter_spec(&self) -> ScatterSpec {
        ScatterSpec {
            kind: self.scatter,
            rho_re: self.rho_re,
            rho_im: self.rho_im,
            scale: 1.0,
            file: self.scatter_file.clone(),
        }
    }

    pub fn data_model(&self) -> Result<CesModel> {
        model_from(self.model, self.dof, self.p)
    }

    pub fn estimation(&self) -> Result<EstimationConfig> {
        estimation_config(self.tolerance, self.max_iterations)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.p >= 2, "p must be at least 2 (got {})", self.p);
        ensure!(self.trials >= 1, "trials must be at least 1");
        ensure!(!self.estimators.is_empty(), "estimators must not be empty");
        let grid = self.n_values();
        ensure!(!grid.is_empty(), "n_grid must not be empty");
        if let Some(n) = grid.iter().find(|&&n| n <= self.p) {
            bail!("every n in n_grid must exceed p={} (got {n})", self.p);
        }
        ensure!(self.mismatched_dof > 0.0, "mismatched_dof must be positive");
        self.scatter_spec().validate()?;
        self.data_model()?;
        self.estimation()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifySimConfig {
    pub experiment: String,
    pub p: usize,
    /// Samples per batch; defaults to `10p`.
    pub n: Option<usize>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// One scatter per class.
    pub class_scatters: Vec<ScatterKind>,
    /// Scale applied to each class scatter.
    pub class_scales: Vec<f64>,
    pub rho_re: f64,
    pub rho_im: f64,
    pub scatter_file: Option<PathBuf>,
    pub model: ModelKind,
    pub dof: Option<f64>,
    /// Degrees of freedom assumed by the Student-t pipeline.
    pub pipeline_dof: f64,
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub karcher_tolerance: f64,
    pub karcher_max_iterations: usize,
}

impl Default for ClassifySimConfig {
    fn default() -> Self {
        Self {
            experiment: "classify_sim".into(),
            p: 8,
            n: None,
            train_per_class: 50,
            test_per_class: 100,
            class_scatters: vec![ScatterKind::Identity, ScatterKind::Toeplitz],
            class_scales: vec![1.0, 4.0],
            rho_re: 0.7,
            rho_im: 0.0,
            scatter_file: None,
            model: ModelKind::StudentT,
            dof: Some(2.1),
            pipeline_dof: 2.1,
            seed: 0,
            workers: 0,
            out: None,
            tolerance: 1e-9,
            max_iterations: 1000,
            karcher_tolerance: 1e-10,
            karcher_max_iterations: 1000,
        }
    }
}

impl ClassifySimConfig {
    pub fn batch_size(&self) -> usize {
        self.n.unwrap_or(10 * self.p)
    }

    pub fn class_specs(&self) -> Vec<ScatterSpec> {
        self.class_scatters
            .iter()
            .zip(&self.class_scales)
            .map(|(&kind, &scale)| ScatterSpec {
                kind,
                rho_re: self.rho_re,
                rho_im: self.rho_im,
                scale,
                file: self.scatter_file.clone(),
            })
            .collect()
    }

    pub fn data_model(&self) -> Result<CesModel> {
        model_from(self.model, self.dof, self.p)
    }

    pub fn pipeline_generator(&self) -> Generator {
        Generator::StudentT { dof: self.pipeline_dof }
    }

    pub fn estimation(&self) -> Result<EstimationConfig> {
        estimation_config(self.tolerance, self.max_iterations)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.p >= 2, "p must be at least 2 (got {})", self.p);
        ensure!(
            self.batch_size() > self.p,
            "batch size n={} must exceed p={}",
            self.batch_size(),
            self.p
        );
        ensure!(
            self.train_per_class >= 1 && self.test_per_class >= 1,
            "batch counts must be at least 1"
        );
        ensure!(!self.class_scatters.is_empty(), "class_scatters must not be empty");
        ensure!(
            self.class_scatters.len() == self.class_scales.len(),
            "class_scatters and class_scales must have the same length"
        );
        for spec in self.class_specs() {
            spec.validate()?;
        }
        ensure!(self.pipeline_dof > 0.0, "pipeline_dof must be positive");
        ensure!(self.karcher_tolerance > 0.0, "karcher_tolerance must be positive");
        ensure!(
            self.karcher_max_iterations >= 1,
            "karcher_max_iterations must be at least 1"
        );
        self.data_model()?;
        self.estimation()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    /// Batch file to read.
    pub input: Option<PathBuf>,
    pub model: ModelKind,
    pub dof: Option<f64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            input: None,
            model: ModelKind::Gaussian,
            dof: None,
            seed: 0,
            out: None,
            tolerance: 1e-9,
            max_iterations: 1000,
        }
    }
}

impl EstimateConfig {
    pub fn model_for(&self, p: usize) -> Result<CesModel> {
        model_from(self.model, self.dof, p)
    }

    pub fn estimation(&self) -> Result<EstimationConfig> {
        estimation_config(self.tolerance, self.max_iterations)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.input.is_some(), "`input` batch file is required");
        if self.model == ModelKind::StudentT {
            ensure!(
                self.dof.is_some_and(|d| d > 0.0),
                "model = \"student_t\" requires a positive `dof`"
            );
        }
        self.estimation()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeanConfig {
    /// File of concatenated `hpd` matrices.
    pub input: Option<PathBuf>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MeanConfig {
    fn default() -> Self {
        Self {
            input: None,
            seed: 0,
            out: None,
            tolerance: 1e-10,
            max_iterations: 1000,
        }
    }
}

impl MeanConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.input.is_some(), "`input` matrix file is required");
        ensure!(self.tolerance > 0.0, "tolerance must be positive");
        ensure!(self.max_iterations >= 1, "max_iterations must be at least 1");
        Ok(())
    }
}

pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(toml::from_str(text)?)
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse(&text).with_context(|| format!("parsing {}", path.display()))
        }
    }
}

pub fn to_toml<T: Serialize>(config: &T) -> Result<String> {
    Ok(toml::to_string(config)?)
}

/// Resolves a path from a config file relative to that file's directory.
pub fn resolve_relative(config_path: Option<&Path>, path: &Path) -> PathBuf {
    match config_path.and_then(Path::parent) {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}
