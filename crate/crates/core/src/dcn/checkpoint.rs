//! `{"arch":..,"k":K,"latent":D,"param_count":P}\n` followed by the
//! parameters as f32le in layer order (encoder convs, encoder dense, decoder
//! dense, decoder convs; weights before biases) and the K×D centroids.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DcnModel;
use crate::error::{Error, Result};
use crate::kmeans::Centroids;
use crate::net::{Architecture, AutoencoderParams};
use crate::volume_io::rawio;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    arch: String,
    k: usize,
    latent: usize,
    param_count: usize,
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &DcnModel) -> Result<()> {
    let arch = model.arch();
    let header = CheckpointHeader {
        arch: arch.name().to_string(),
        k: model.k(),
        latent: arch.latent,
        param_count: model.params.param_count(),
    };
    let mut payload = model.params.to_flat();
    payload.extend(model.centroids.data().iter().map(|&v| v as f32));
    rawio::write_framed(path.as_ref(), &header, &payload)
}

/// Online-update counts are not persisted; a loaded model starts with a
/// count of one per cluster.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DcnModel> {
    let path = path.as_ref();
    let (h, payload): (CheckpointHeader, Vec<f32>) = rawio::read_framed(path)?;
    let arch = Architecture::from_name(&h.arch)
        .ok_or_else(|| Error::format(path, "arch", format!("unknown architecture `{}`", h.arch)))?;
    if h.latent != arch.latent {
        return Err(Error::format(
            path,
            "latent",
            format!("{} does not match {} ({})", h.latent, h.arch, arch.latent),
        ));
    }
    if h.param_count != arch.param_count() {
        return Err(Error::format(
            path,
            "param_count",
            format!("{} does not match {} ({})", h.param_count, h.arch, arch.param_count()),
        ));
    }
    if h.k < 2 {
        return Err(Error::format(path, "k", "must be at least 2"));
    }
    let expected = h.param_count + h.k * h.latent;
    if payload.len() != expected {
        return Err(Error::format(
            path,
            "payload",
            format!("expected {expected} values, found {}", payload.len()),
        ));
    }
    let (p, c) = payload.split_at(h.param_count);
    let params = AutoencoderParams::from_flat(arch, p)?;
    let centroids = Centroids::new(h.k, h.latent, c.iter().map(|&v| v as f64).collect())?;
    Ok(DcnModel {
        params,
        centroids,
        cluster_counts: vec![1; h.k],
    })
}
