//! Experiment configuration: a JSON file whose fields individual flags may
//! override. Matrix- and object-valued fields accept either inline JSON or a
//! path to a JSON file holding the same content.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use bue_core::dist::DiscreteDistribution;
use bue_core::estimator::LPQEstimator;
use bue_core::jsonio;
use bue_core::linalg::SymMatrix;
use bue_core::model::DesignMatrix;
use bue_core::{Error, Result};

/// A nested-list matrix given inline or as a path to a JSON file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Inline(Vec<Vec<f64>>),
    Path(String),
}

impl MatrixSource {
    pub fn resolve(&self) -> Result<DMatrix<f64>> {
        match self {
            MatrixSource::Inline(rows) => jsonio::matrix_from_rows(rows),
            MatrixSource::Path(path) => {
                let text = read_text(path)?;
                let rows: Vec<Vec<f64>> = serde_json::from_str(&text)
                    .map_err(|e| Error::Parse(format!("{path}: {e}")))?;
                jsonio::matrix_from_rows(&rows)
            }
        }
    }

    /// Parses a CLI flag value: inline JSON when it starts with '[',
    /// otherwise a file path.
    pub fn from_flag(value: &str) -> Result<Self> {
        if value.trim_start().starts_with('[') {
            let rows = serde_json::from_str(value)
                .map_err(|e| Error::Parse(format!("inline matrix: {e}")))?;
            Ok(MatrixSource::Inline(rows))
        } else {
            Ok(MatrixSource::Path(value.to_string()))
        }
    }
}

/// A JSON object given inline or as a path to a JSON file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum JsonSource {
    Path(String),
    Inline(serde_json::Value),
}

impl JsonSource {
    pub fn resolve_text(&self) -> Result<String> {
        match self {
            JsonSource::Inline(v) => Ok(v.to_string()),
            JsonSource::Path(path) => read_text(path),
        }
    }

    pub fn from_flag(value: &str) -> Result<Self> {
        let trimmed = value.trim_start();
        if trimmed.starts_with('{') || trimmed.starts_with('[') {
            let v = serde_json::from_str(value)
                .map_err(|e| Error::Parse(format!("inline JSON: {e}")))?;
            Ok(JsonSource::Inline(v))
        } else {
            Ok(JsonSource::Path(value.to_string()))
        }
    }

    pub fn distribution(&self) -> Result<DiscreteDistribution> {
        DiscreteDistribution::from_json(&self.resolve_text()?)
    }

    pub fn estimator(&self) -> Result<LPQEstimator> {
        LPQEstimator::from_json(&self.resolve_text()?)
    }
}

fn read_text(path: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Parse(format!("{path}: {e}")))
}

/// One named artifact in a comparison table.
#[derive(Debug, Clone, Deserialize)]
pub struct NamedEntry {
    pub name: String,
    pub value: JsonSource,
}

/// The configuration file schema. Every field is optional; commands demand
/// the fields they need and flags override whatever the file provides.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub design: Option<MatrixSource>,
    pub sigma: Option<MatrixSource>,
    pub betas: Option<Vec<Vec<f64>>>,
    pub covariances: Option<Vec<Vec<Vec<f64>>>>,
    pub seed: Option<u64>,
    pub output_path: Option<String>,
    pub format: Option<String>,
    pub distribution: Option<JsonSource>,
    pub estimator: Option<JsonSource>,
    pub direction: Option<Vec<f64>>,
    pub atoms: Option<Vec<Vec<f64>>>,
    pub witness: Option<JsonSource>,
    pub y: Option<Vec<f64>>,
    pub estimators: Option<Vec<NamedEntry>>,
    pub distributions: Option<Vec<NamedEntry>>,
    pub kind: Option<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn design_matrix(&self) -> Result<DesignMatrix> {
        let source = self.design.as_ref().ok_or_else(|| {
            Error::Precondition("a design matrix is required (--design or config)".into())
        })?;
        DesignMatrix::new(source.resolve()?)
    }

    /// The error covariance; identity of the design's row count when absent.
    pub fn sigma_matrix(&self, n: usize) -> Result<SymMatrix> {
        match &self.sigma {
            None => Ok(SymMatrix::identity(n)),
            Some(source) => {
                let m = source.resolve()?;
                if m.nrows() != m.ncols() {
                    return Err(Error::DimensionMismatch(format!(
                        "covariance must be square, got {}x{}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                SymMatrix::new(m)
            }
        }
    }

    pub fn beta_vectors(&self) -> Result<Vec<DVector<f64>>> {
        self.betas
            .as_ref()
            .ok_or_else(|| {
                Error::Precondition("at least one beta is required (config betas)".into())
            })?
            .iter()
            .map(|b| jsonio::vector_from_list(b))
            .collect()
    }

    pub fn covariance_matrices(&self) -> Result<Vec<SymMatrix>> {
        match &self.covariances {
            None => Ok(vec![]),
            Some(list) => list
                .iter()
                .map(|rows| SymMatrix::new(jsonio::matrix_from_rows(rows)?))
                .collect(),
        }
    }
}
