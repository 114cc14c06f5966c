use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use texdcn::dcn::{CentroidUpdateMode, TrainConfig};
use texdcn::linker::{LinkConfig, DEFAULT_ALPHAS, DEFAULT_MAX_ITER, DEFAULT_TOL};
use texdcn::signature::{WindowParams, DEFAULT_STRIDE_PX};

use crate::CliError;

/// Every pipeline setting under one flat key space. Relative paths are
/// resolved against the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,

    pub n_cases: usize,

    pub n_patches: usize,
    pub window_mm: f64,
    pub out_px: usize,

    pub arch: String,
    pub lambda: f64,
    pub k: usize,
    pub pretrain_epochs: usize,
    pub joint_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub centroid_update_mode: CentroidUpdateMode,

    pub stride_px: usize,

    pub n_trees: usize,
    pub mtry: Option<usize>,
    pub alphas: Vec<f64>,
    pub lasso_max_iter: usize,
    pub lasso_tol: f64,

    pub manifest: PathBuf,
    pub patches: PathBuf,
    pub checkpoint: PathBuf,
    pub signatures: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            seed: 0,
            n_cases: 40,
            n_patches: 50_000,
            window_mm: 14.0,
            out_px: 32,
            arch: "dcn-v1".into(),
            lambda: train.lambda,
            k: train.k,
            pretrain_epochs: train.pretrain_epochs,
            joint_epochs: train.joint_epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            centroid_update_mode: train.centroid_update_mode,
            stride_px: DEFAULT_STRIDE_PX,
            n_trees: 100,
            mtry: None,
            alphas: DEFAULT_ALPHAS.to_vec(),
            lasso_max_iter: DEFAULT_MAX_ITER,
            lasso_tol: DEFAULT_TOL,
            manifest: "manifest.csv".into(),
            patches: "patches.bin".into(),
            checkpoint: "model.ckpt".into(),
            signatures: "signatures.csv".into(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            lambda: self.lambda,
            k: self.k,
            pretrain_epochs: self.pretrain_epochs,
            joint_epochs: self.joint_epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
            centroid_update_mode: self.centroid_update_mode,
        }
    }

    pub fn window(&self) -> WindowParams {
        WindowParams {
            window_mm: self.window_mm,
            stride_px: self.stride_px,
        }
    }

    pub fn link(&self) -> LinkConfig {
        LinkConfig {
            n_trees: self.n_trees,
            mtry: self.mtry,
            alphas: self.alphas.clone(),
            lasso_max_iter: self.lasso_max_iter,
            lasso_tol: self.lasso_tol,
            seed: self.seed,
        }
    }

    /// Writes the effective configuration as `config.json` in `dir`.
    pub fn echo(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        let path = dir.join("config.json");
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = PipelineConfig::default();
        let back: PipelineConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.n_patches, 50_000);
        assert_eq!(c.k, 10);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"lamda": 0.1}"#).is_err());
        let c: PipelineConfig = serde_json::from_str(r#"{"lambda": 0.1}"#).unwrap();
        assert_eq!(c.lambda, 0.1);
        assert_eq!(c.k, 10);
    }
}
