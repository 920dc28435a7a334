//! Classical classifiers on feature matrices: a kernel SVM and a
//! gradient-boosted tree ensemble.

mod gbt;
mod svm;

pub use gbt::{gbt_importances, gbt_train, GbtModel, GbtParams, GbtPrediction, TreeNode};
pub use svm::{svm_train, GammaSpec, Kernel, KernelSpec, PairModel, SvmModel, SvmParams, SvmPrediction};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureError, FeatureMatrix};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum ShallowError {
    #[error("training data holds a single class")]
    SingleClassData,
    #[error("non-finite feature at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("dimension mismatch: model expects {expected} features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("model has not been trained")]
    UntrainedModel,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("model artifact {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("model artifact: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, ShallowError>;

/// Rows as f64 plus the sorted table of distinct labels.
pub(crate) fn training_view<T: Real>(x: &FeatureMatrix<T>) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let rows = rows_f64(x)?;
    let mut classes = x.labels().to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ShallowError::SingleClassData);
    }
    Ok((rows, classes))
}

pub(crate) fn rows_f64<T: Real>(x: &FeatureMatrix<T>) -> Result<Vec<Vec<f64>>> {
    x.rows()
        .enumerate()
        .map(|(r, row)| {
            row.iter()
                .enumerate()
                .map(|(c, v)| {
                    let v = v.as_f64();
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(ShallowError::NonFiniteFeature { row: r, col: c })
                    }
                })
                .collect()
        })
        .collect()
}

pub const ARTIFACT_FORMAT: &str = "innerspeech-shallow-model";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ShallowModel {
    Svm(SvmModel),
    Gbt(GbtModel),
}

impl ShallowModel {
    pub fn predict<T: Real>(&self, x: &FeatureMatrix<T>) -> Result<Vec<usize>> {
        match self {
            ShallowModel::Svm(m) => Ok(m.predict(x)?.labels),
            ShallowModel::Gbt(m) => Ok(m.predict(x)?.labels),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Artifact {
    format: String,
    version: u32,
    model: ShallowModel,
}

pub fn save_model(model: &ShallowModel, path: &Path) -> Result<()> {
    let artifact = Artifact { format: ARTIFACT_FORMAT.into(), version: ARTIFACT_VERSION, model: model.clone() };
    let text = serde_json::to_string_pretty(&artifact).map_err(|e| ShallowError::Format(e.to_string()))?;
    std::fs::write(path, text).map_err(|source| ShallowError::Io { path: path.display().to_string(), source })
}

pub fn load_model(path: &Path) -> Result<ShallowModel> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ShallowError::Io { path: path.display().to_string(), source })?;
    let artifact: Artifact = serde_json::from_str(&text).map_err(|e| ShallowError::Format(e.to_string()))?;
    if artifact.format != ARTIFACT_FORMAT || artifact.version != ARTIFACT_VERSION {
        return Err(ShallowError::Format(format!(
            "unsupported artifact {} v{}",
            artifact.format, artifact.version
        )));
    }
    Ok(artifact.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Provenance;

    pub(crate) fn matrix(rows: &[Vec<f64>], labels: &[usize]) -> FeatureMatrix<f64> {
        let cols = rows[0].len();
        let prov = (0..cols).map(|index| Provenance::Component { index }).collect();
        FeatureMatrix::new(rows.concat(), rows.len(), prov, labels.to_vec()).unwrap()
    }

    #[test]
    fn artifact_round_trip() {
        let x = matrix(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![0.1, 0.9], vec![0.9, 0.2]], &[0, 1, 0, 1]);
        let dir = tempfile::tempdir().unwrap();
        for model in [
            ShallowModel::Svm(svm_train(&x, &SvmParams::default()).unwrap()),
            ShallowModel::Gbt(gbt_train(&x, &GbtParams { min_child_weight: 0.0, ..GbtParams::default() }).unwrap()),
        ] {
            let path = dir.path().join("m.json");
            save_model(&model, &path).unwrap();
            assert_eq!(load_model(&path).unwrap(), model);
            assert_eq!(model.predict(&x).unwrap(), [0, 1, 0, 1]);
        }
    }

    #[test]
    fn rejects_foreign_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, r#"{"format":"other","version":1,"model":{"family":"gbt"}}"#).unwrap();
        assert!(matches!(load_model(&path), Err(ShallowError::Format(_))));
    }
}
