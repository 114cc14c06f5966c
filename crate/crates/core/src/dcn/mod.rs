//! Joint training of the autoencoder and the latent-space k-means.
//!
//! The objective per patch is `mse(g(f(x)), x) + λ·‖f(x) − m_s‖²`. After a
//! reconstruction-only pretraining phase and a k-means initialization of the
//! centroids, every mini-batch runs three steps in order:
//!
//! 1. one Adam step on the encoder/decoder with centroids and assignments
//!    fixed;
//! 2. reassignment of the batch members to their nearest centroid under the
//!    updated encoder;
//! 3. a centroid update: online (`m += (f(x) − m) / c` per member, with a
//!    per-cluster count `c`) or, in batch mode, a Lloyd mean step over the
//!    whole set at the end of each epoch.
//!
//! At the end of every epoch all assignments are refreshed.

mod adam;
mod checkpoint;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint};

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::{self, Centroids};
use crate::net::{self, Architecture, AutoencoderParams};
use crate::seed;
use crate::tensor::{self, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CentroidUpdateMode {
    Online,
    Batch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub k: usize,
    pub pretrain_epochs: usize,
    pub joint_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub centroid_update_mode: CentroidUpdateMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            k: 10,
            pretrain_epochs: 20,
            joint_epochs: 50,
            batch_size: 256,
            learning_rate: 1e-3,
            seed: 0,
            centroid_update_mode: CentroidUpdateMode::Online,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be ≥ 0, got {}", self.lambda)));
        }
        if self.k < 2 {
            return Err(Error::Config(format!("k must be ≥ 2, got {}", self.k)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be ≥ 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Encoder/decoder parameters, centroids, and online-update counts.
#[derive(Clone, Debug, PartialEq)]
pub struct DcnModel {
    pub params: AutoencoderParams<f32>,
    /// Always holds `f32`-representable values so checkpoints are exact.
    pub centroids: Centroids,
    pub cluster_counts: Vec<u64>,
}

impl DcnModel {
    pub fn k(&self) -> usize {
        self.centroids.k()
    }

    pub fn arch(&self) -> Architecture {
        self.params.arch()
    }

    /// Nearest-centroid cluster of one patch.
    pub fn assign_patch(&self, patch: &Tensor<f32>) -> Result<usize> {
        let z = latent_f64(&net::encode(&self.params, patch)?);
        Ok(kmeans::nearest(&z, &self.centroids).0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub recon: f64,
    pub cluster: f64,
    pub total: f64,
    pub reassigned_fraction: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        for e in &self.epochs {
            w.serialize(e).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn latent_f64<T: Scalar>(z: &[T]) -> Vec<f64> {
    z.iter().map(|v| v.as_f64()).collect()
}

/// Latent codes of every patch, in input order.
pub fn encode_all(params: &AutoencoderParams<f32>, patches: &[&Tensor<f32>]) -> Result<Vec<Vec<f64>>> {
    patches
        .par_iter()
        .map(|x| net::encode(params, x).map(|z| latent_f64(&z)))
        .collect()
}

fn shuffled(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed::derive(seed::derive(seed, seed::stream::PRETRAIN), epoch as u64));
    order.shuffle(&mut rng);
    order
}

fn check_patches(params: &AutoencoderParams<f32>, patches: &[&Tensor<f32>]) -> Result<()> {
    if patches.is_empty() {
        return Err(Error::Input("empty patch set".into()));
    }
    let px = params.arch().input_px;
    if let Some(p) = patches.iter().find(|p| p.shape() != [1, px, px]) {
        return Err(Error::InvalidShape(format!(
            "patch {:?} does not match the {px}×{px} network input",
            p.shape()
        )));
    }
    Ok(())
}

/// Reconstruction-only training (λ = 0) with Adam over shuffled
/// mini-batches.
pub fn pretrain(
    params: &AutoencoderParams<f32>,
    patches: &[&Tensor<f32>],
    config: &TrainConfig,
) -> Result<(AutoencoderParams<f32>, TrainLog)> {
    config.validate()?;
    check_patches(params, patches)?;
    let mut params = params.clone();
    let mut adam = Adam::new(&params, config.learning_rate as f32);
    let mut log = TrainLog::default();
    for epoch in 0..config.pretrain_epochs {
        let order = shuffled(patches.len(), config.seed, epoch);
        let mut recon_sum = 0.0;
        for batch_idx in order.chunks(config.batch_size) {
            let batch: Vec<&Tensor<f32>> = batch_idx.iter().map(|&i| patches[i]).collect();
            let lg = net::batch_loss_grad(&params, &batch, None, 0.0)?;
            if !lg.loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    learning_rate: config.learning_rate,
                });
            }
            recon_sum += lg.recon * batch.len() as f64;
            adam.step(&mut params, &lg.grads);
        }
        let recon = recon_sum / patches.len() as f64;
        log.epochs.push(EpochLog {
            epoch,
            recon,
            cluster: 0.0,
            total: recon,
            reassigned_fraction: 0.0,
        });
    }
    Ok((params, log))
}

/// Independent k-means++ restarts in latent space; the lowest-cost Lloyd
/// solution is kept.
const KMEANS_RESTARTS: u64 = 10;

/// Encodes every patch and clusters the codes with k-means++ seeding and
/// Lloyd iterations. Centroids are rounded to `f32`.
pub fn init_centroids(
    params: &AutoencoderParams<f32>,
    patches: &[&Tensor<f32>],
    k: usize,
    seed: u64,
) -> Result<(Centroids, Vec<usize>)> {
    check_patches(params, patches)?;
    let points = encode_all(params, patches)?;
    let base = seed::derive(seed, seed::stream::KMEANS);
    let mut best: Option<kmeans::KMeansFit> = None;
    for restart in 0..KMEANS_RESTARTS {
        let init = kmeans::kmeans_pp_seed(&points, k, seed::derive(base, restart))?;
        let fit = kmeans::lloyd(&points, &init, kmeans::DEFAULT_MAX_ITER, kmeans::DEFAULT_TOL)?;
        if best.as_ref().is_none_or(|b| fit.cost < b.cost) {
            best = Some(fit);
        }
    }
    let mut centroids = best.expect("at least one restart").centroids;
    centroids.round_to_f32();
    let assignment = kmeans::assign(&points, &centroids);
    Ok((centroids, assignment))
}

fn cluster_sizes(assignment: &[usize], k: usize) -> Vec<u64> {
    let mut sizes = vec![0u64; k];
    for &s in assignment {
        sizes[s] += 1;
    }
    sizes
}

/// Builds a model from pretrained parameters and initial centroids, with
/// counts set to the initial cluster sizes (at least 1).
pub fn new_model(params: AutoencoderParams<f32>, centroids: Centroids, assignment: &[usize]) -> DcnModel {
    let cluster_counts = cluster_sizes(assignment, centroids.k())
        .into_iter()
        .map(|c| c.max(1))
        .collect();
    DcnModel {
        params,
        centroids,
        cluster_counts,
    }
}

fn mean_cluster_term(points: &[Vec<f64>], centroids: &Centroids, assignment: &[usize]) -> f64 {
    kmeans::cost(points, centroids, assignment) / points.len() as f64
}

/// Moves the point farthest from its centroid into every empty cluster and
/// places that cluster's centroid on it.
fn repair_empty(points: &[Vec<f64>], centroids: &mut Centroids, assignment: &mut [usize]) {
    let k = centroids.k();
    loop {
        let sizes = cluster_sizes(assignment, k);
        let Some(empty) = sizes.iter().position(|&n| n == 0) else {
            return;
        };
        let far = points
            .iter()
            .enumerate()
            .filter(|(i, _)| sizes[assignment[*i]] >= 2)
            .map(|(i, p)| (i, kmeans::sq_dist(p, centroids.row(assignment[i]))))
            .fold(None, |acc: Option<(usize, f64)>, (i, d)| match acc {
                Some((_, bd)) if bd >= d => acc,
                _ => Some((i, d)),
            });
        let Some((i, _)) = far else {
            return;
        };
        assignment[i] = empty;
        for (m, &v) in centroids.row_mut(empty).iter_mut().zip(&points[i]) {
            *m = v as f32 as f64;
        }
    }
}

/// Alternating optimization of network, assignments and centroids.
pub fn joint_train(
    model: &DcnModel,
    patches: &[&Tensor<f32>],
    config: &TrainConfig,
) -> Result<(DcnModel, TrainLog)> {
    config.validate()?;
    check_patches(&model.params, patches)?;
    if model.centroids.dim() != model.arch().latent {
        return Err(Error::InvalidShape(format!(
            "centroid dimension {} for latent size {}",
            model.centroids.dim(),
            model.arch().latent
        )));
    }
    let mut model = model.clone();
    let mut adam = Adam::new(&model.params, config.learning_rate as f32);
    let mut log = TrainLog::default();
    let n = patches.len();
    let mut assignment = kmeans::assign(&encode_all(&model.params, patches)?, &model.centroids);

    for epoch in 0..config.joint_epochs {
        let start_assignment = assignment.clone();
        let order = shuffled(n, config.seed, epoch);
        let mut recon_sum = 0.0;
        for batch_idx in order.chunks(config.batch_size) {
            let batch: Vec<&Tensor<f32>> = batch_idx.iter().map(|&i| patches[i]).collect();
            let batch_assign: Vec<usize> = batch_idx.iter().map(|&i| assignment[i]).collect();

            // (1) network step with (M, s) fixed
            let lg = net::forward_loss_grad(
                &model.params,
                &batch,
                &model.centroids,
                &batch_assign,
                config.lambda,
            )?;
            if !lg.loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    learning_rate: config.learning_rate,
                });
            }
            recon_sum += lg.recon * batch.len() as f64;
            adam.step(&mut model.params, &lg.grads);

            // (2) reassign batch members under the updated encoder
            let latents = encode_all(&model.params, &batch)?;
            for (&i, z) in batch_idx.iter().zip(&latents) {
                assignment[i] = kmeans::nearest(z, &model.centroids).0;
            }

            // (3) online centroid steps with count-based rates
            if config.centroid_update_mode == CentroidUpdateMode::Online {
                for (&i, z) in batch_idx.iter().zip(&latents) {
                    let s = assignment[i];
                    model.cluster_counts[s] += 1;
                    let rate = 1.0 / model.cluster_counts[s] as f64;
                    for (m, &zv) in model.centroids.row_mut(s).iter_mut().zip(z) {
                        *m = (*m + rate * (zv - *m)) as f32 as f64;
                    }
                }
            }
        }

        let points = encode_all(&model.params, patches)?;
        assignment = kmeans::assign(&points, &model.centroids);
        match config.centroid_update_mode {
            CentroidUpdateMode::Online => {
                repair_empty(&points, &mut model.centroids, &mut assignment);
            }
            CentroidUpdateMode::Batch => {
                let current = kmeans::cost(&points, &model.centroids, &assignment);
                let mut next_assignment = assignment.clone();
                let mut next = kmeans::update_means(&points, &model.centroids, &mut next_assignment);
                next.round_to_f32();
                // The mean minimizes the within-cluster sum of squares; only
                // rounding can make the candidate worse, and then it is dropped.
                if kmeans::cost(&points, &next, &next_assignment) <= current {
                    model.centroids = next;
                    assignment = next_assignment;
                }
            }
        }

        let recon = recon_sum / n as f64;
        let cluster = mean_cluster_term(&points, &model.centroids, &assignment);
        let changed = assignment
            .iter()
            .zip(&start_assignment)
            .filter(|(a, b)| a != b)
            .count();
        log.epochs.push(EpochLog {
            epoch,
            recon,
            cluster,
            total: recon + config.lambda * cluster,
            reassigned_fraction: changed as f64 / n as f64,
        });
    }
    Ok((model, log))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub recon: f64,
    pub cluster: f64,
    pub total: f64,
}

/// Mean reconstruction and cluster terms over all patches, with every
/// patch assigned to its nearest centroid.
pub fn evaluate_loss(model: &DcnModel, patches: &[&Tensor<f32>], lambda: f64) -> Result<LossTerms> {
    check_patches(&model.params, patches)?;
    let per: Vec<(f64, f64)> = patches
        .par_iter()
        .map(|x| {
            let trace = net::forward_trace(&model.params, x)?;
            let recon = tensor::mse(trace.output(), x)?.as_f64();
            let z = latent_f64(trace.latent());
            Ok((recon, kmeans::nearest(&z, &model.centroids).1))
        })
        .collect::<Result<_>>()?;
    let n = patches.len() as f64;
    let recon = per.iter().map(|p| p.0).sum::<f64>() / n;
    let cluster = per.iter().map(|p| p.1).sum::<f64>() / n;
    Ok(LossTerms {
        recon,
        cluster,
        total: recon + lambda * cluster,
    })
}

/// Pretraining, centroid initialization and joint training from freshly
/// initialized parameters.
pub fn train(
    arch: Architecture,
    patches: &[&Tensor<f32>],
    config: &TrainConfig,
) -> Result<(DcnModel, TrainLog, TrainLog)> {
    config.validate()?;
    let params = net::init_params(arch, seed::derive(config.seed, seed::stream::INIT))?;
    let (params, pre_log) = pretrain(&params, patches, config)?;
    let (centroids, assignment) = init_centroids(&params, patches, config.k, config.seed)?;
    let model = new_model(params, centroids, &assignment);
    let (model, joint_log) = joint_train(&model, patches, config)?;
    Ok((model, pre_log, joint_log))
}
