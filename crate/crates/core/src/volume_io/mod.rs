//! Volumes, ROI masks, case manifests, and physically sized patch
//! extraction.
//!
//! On disk a volume is a one-line JSON header
//! (`{"dims":[nx,ny,nz],"spacing_mm":[sx,sy,sz],"dtype":"f32le"}`) next to a
//! raw sidecar holding the voxels x-fastest. The sidecar shares the header's
//! stem and takes its extension from the dtype: `.f32` or `.u8`.

mod manifest;
mod patch;
pub(crate) mod rawio;

pub use manifest::{read_manifest, write_manifest, CaseRecord};
pub use patch::{
    extract_patches, read_patchset, write_patchset, Patch, PatchSet, Provenance, WindowGeometry,
    MIN_MASK_FRACTION,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    voxels: Vec<f32>,
}

/// Binary region of interest on the voxel grid of its volume.
#[derive(Clone, Debug, PartialEq)]
pub struct RoiMask {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    values: Vec<u8>,
}

fn check_grid(dims: [usize; 3], spacing_mm: [f64; 3], len: usize) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidShape(format!("dims must be ≥ 1, got {dims:?}")));
    }
    if spacing_mm.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidShape(format!(
            "spacing must be positive, got {spacing_mm:?}"
        )));
    }
    let n = dims.iter().product::<usize>();
    if n != len {
        return Err(Error::InvalidShape(format!(
            "dims {dims:?} need {n} voxels, got {len}"
        )));
    }
    Ok(())
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing_mm: [f64; 3], voxels: Vec<f32>) -> Result<Self> {
        check_grid(dims, spacing_mm, voxels.len())?;
        Ok(Self {
            dims,
            spacing_mm,
            voxels,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[x + self.dims[0] * (y + self.dims[1] * z)]
    }

    /// One axial slice, x-fastest.
    pub fn slice(&self, z: usize) -> &[f32] {
        let n = self.dims[0] * self.dims[1];
        &self.voxels[z * n..(z + 1) * n]
    }
}

impl RoiMask {
    pub fn new(dims: [usize; 3], spacing_mm: [f64; 3], values: Vec<u8>) -> Result<Self> {
        check_grid(dims, spacing_mm, values.len())?;
        if let Some(v) = values.iter().find(|&&v| v > 1) {
            return Err(Error::Input(format!("mask values must be 0 or 1, found {v}")));
        }
        Ok(Self {
            dims,
            spacing_mm,
            values,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn slice(&self, z: usize) -> &[u8] {
        let n = self.dims[0] * self.dims[1];
        &self.values[z * n..(z + 1) * n]
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridHeader {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    dtype: String,
}

const DTYPE_F32: &str = "f32le";
const DTYPE_U8: &str = "u8";

/// Sidecar path for a header path and dtype.
pub fn sidecar_path(header: &Path, dtype: &str) -> PathBuf {
    let ext = if dtype == DTYPE_U8 { "u8" } else { "f32" };
    header.with_extension(ext)
}

fn write_grid(path: &Path, dims: [usize; 3], spacing_mm: [f64; 3], dtype: &str, payload: &[u8]) -> Result<()> {
    let header = GridHeader {
        dims,
        spacing_mm,
        dtype: dtype.to_string(),
    };
    let mut text = serde_json::to_string(&header).expect("header serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path, dtype);
    std::fs::write(&side, payload).map_err(|e| Error::io(&side, e))
}

fn read_grid(path: &Path, dtype: &str, elem_size: usize) -> Result<(GridHeader, Vec<u8>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: GridHeader =
        serde_json::from_str(text.trim_end()).map_err(|e| Error::format(path, "header", e.to_string()))?;
    if header.dtype != dtype {
        return Err(Error::format(
            path,
            "dtype",
            format!("expected \"{dtype}\", found \"{}\"", header.dtype),
        ));
    }
    if header.dims.contains(&0) {
        return Err(Error::format(path, "dims", "extents must be ≥ 1"));
    }
    if header.spacing_mm.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::format(path, "spacing_mm", "spacings must be positive"));
    }
    let side = sidecar_path(path, dtype);
    let payload = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
    let expected = header.dims.iter().product::<usize>() * elem_size;
    if payload.len() != expected {
        return Err(Error::format(
            &side,
            "payload",
            format!("expected {expected} bytes for dims {:?}, found {}", header.dims, payload.len()),
        ));
    }
    Ok((header, payload))
}

pub fn write_volume(path: impl AsRef<Path>, volume: &Volume) -> Result<()> {
    write_grid(
        path.as_ref(),
        volume.dims,
        volume.spacing_mm,
        DTYPE_F32,
        &rawio::f32_to_le_bytes(&volume.voxels),
    )
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let (h, payload) = read_grid(path, DTYPE_F32, 4)?;
    Volume::new(h.dims, h.spacing_mm, rawio::le_bytes_to_f32(&payload))
        .map_err(|e| Error::format(path, "voxels", e.to_string()))
}

/// Writes a u8 grid in mask layout; also used for label maps.
pub fn write_labels(path: impl AsRef<Path>, dims: [usize; 3], spacing_mm: [f64; 3], values: &[u8]) -> Result<()> {
    write_grid(path.as_ref(), dims, spacing_mm, DTYPE_U8, values)
}

/// Reads a u8 grid without restricting its values.
pub fn read_labels(path: impl AsRef<Path>) -> Result<([usize; 3], [f64; 3], Vec<u8>)> {
    let (h, payload) = read_grid(path.as_ref(), DTYPE_U8, 1)?;
    Ok((h.dims, h.spacing_mm, payload))
}

pub fn write_mask(path: impl AsRef<Path>, mask: &RoiMask) -> Result<()> {
    write_labels(path, mask.dims, mask.spacing_mm, &mask.values)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<RoiMask> {
    let path = path.as_ref();
    let (dims, spacing, values) = read_labels(path)?;
    if let Some(pos) = values.iter().position(|&v| v > 1) {
        return Err(Error::format(
            sidecar_path(path, DTYPE_U8),
            "values",
            format!("non-binary value {} at voxel {pos}", values[pos]),
        ));
    }
    RoiMask::new(dims, spacing, values)
}

/// Intensity statistics over the ROI, recorded per normalized case.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

/// z-scores every voxel with the ROI mean and (population) standard
/// deviation, clamps to ±3 and maps [−3, 3] affinely onto [0, 1].
pub fn normalize(volume: &Volume, mask: &RoiMask) -> Result<(Volume, NormStats)> {
    if volume.dims != mask.dims {
        return Err(Error::InvalidShape(format!(
            "mask dims {:?} differ from volume dims {:?}",
            mask.dims, volume.dims
        )));
    }
    let inside = volume
        .voxels
        .iter()
        .zip(&mask.values)
        .filter(|(_, &m)| m == 1)
        .map(|(&v, _)| v as f64);
    let (mut n, mut sum) = (0usize, 0.0);
    for v in inside.clone() {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return Err(Error::DegenerateVolume("mask is empty".into()));
    }
    let mean = sum / n as f64;
    let var = inside.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if !(std > 0.0) {
        return Err(Error::DegenerateVolume(format!(
            "zero intensity spread over {n} masked voxels"
        )));
    }
    let voxels = volume
        .voxels
        .iter()
        .map(|&v| {
            let z = ((v as f64 - mean) / std).clamp(-3.0, 3.0);
            ((z + 3.0) / 6.0) as f32
        })
        .collect();
    Ok((
        Volume {
            dims: volume.dims,
            spacing_mm: volume.spacing_mm,
            voxels,
        },
        NormStats { mean, std },
    ))
}

/// Patches per case: an equal share of `total`, the remainder going to the
/// earliest cases.
pub fn patch_shares(total: usize, cases: usize) -> Vec<usize> {
    if cases == 0 {
        return Vec::new();
    }
    let (q, r) = (total / cases, total % cases);
    (0..cases).map(|i| q + usize::from(i < r)).collect()
}

/// Normalizes every manifest case and draws its share of `total` patches.
/// Case `i` draws from its own stream derived from `seed`.
pub fn extract_cohort(
    records: &[CaseRecord],
    total: usize,
    window_mm: f64,
    out_px: usize,
    seed: u64,
) -> Result<PatchSet> {
    if records.is_empty() {
        return Err(Error::Input("manifest lists no cases".into()));
    }
    let base = crate::seed::derive(seed, crate::seed::stream::EXTRACT);
    let mut set = PatchSet::default();
    for (i, (record, n)) in records.iter().zip(patch_shares(total, records.len())).enumerate() {
        let volume = read_volume(&record.volume_path)?;
        let mask = read_mask(&record.mask_path)?;
        let (normalized, stats) = normalize(&volume, &mask)?;
        let patches = extract_patches(
            &normalized,
            &mask,
            &record.case_id,
            n,
            window_mm,
            out_px,
            crate::seed::derive(base, i as u64),
        )?;
        log::info!("{}: {} patches", record.case_id, patches.len());
        set.patches.extend(patches);
        set.norm.push((record.case_id.clone(), stats));
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_mask(dims: [usize; 3]) -> RoiMask {
        RoiMask::new(dims, [1.0; 3], vec![1; dims.iter().product()]).unwrap()
    }

    #[test]
    fn equal_share_remainder_to_earliest() {
        assert_eq!(patch_shares(4000, 40), vec![100; 40]);
        assert_eq!(patch_shares(10, 4), vec![3, 3, 2, 2]);
        assert_eq!(patch_shares(2, 3), vec![1, 1, 0]);
    }

    #[test]
    fn volume_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.json");
        let v = Volume::new([2, 2, 1], [0.5, 0.5, 3.0], vec![1.0, -2.5, 3.25, 1e-7]).unwrap();
        write_volume(&p, &v).unwrap();
        let back = read_volume(&p).unwrap();
        assert_eq!(back, v);
        let (h1, s1) = (std::fs::read(&p).unwrap(), std::fs::read(p.with_extension("f32")).unwrap());
        write_volume(&p, &back).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), h1);
        assert_eq!(std::fs::read(p.with_extension("f32")).unwrap(), s1);
    }

    #[test]
    fn mask_rejects_non_binary() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        write_labels(&p, [2, 1, 1], [1.0; 3], &[1, 2]).unwrap();
        match read_mask(&p) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "values"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.json");
        std::fs::write(&p, r#"{"dims":[4,4,4],"spacing_mm":[1.0,1.0,1.0],"dtype":"f32le"}"#).unwrap();
        std::fs::write(p.with_extension("f32"), vec![0u8; 63 * 4]).unwrap();
        match read_volume(&p) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "payload"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_header_names_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.json");
        std::fs::write(&p, r#"{"dims":[1,1,1],"spacing_mm":[1.0,0.0,1.0],"dtype":"f32le"}"#).unwrap();
        std::fs::write(p.with_extension("f32"), vec![0u8; 4]).unwrap();
        assert!(matches!(read_volume(&p), Err(Error::Format { field, .. }) if field == "spacing_mm"));
        std::fs::write(&p, r#"{"dims":[1,1,1],"spacing_mm":[1.0,1.0,1.0],"dtype":"u8"}"#).unwrap();
        assert!(matches!(read_volume(&p), Err(Error::Format { field, .. }) if field == "dtype"));
    }

    #[test]
    fn normalize_arithmetic() {
        let v = Volume::new([2, 1, 1], [1.0; 3], vec![0.0, 2.0]).unwrap();
        let (n, stats) = normalize(&v, &unit_mask([2, 1, 1])).unwrap();
        assert_eq!(stats, NormStats { mean: 1.0, std: 1.0 });
        assert!((n.voxels()[0] as f64 - 1.0 / 3.0).abs() < 1e-7);
        assert!((n.voxels()[1] as f64 - 2.0 / 3.0).abs() < 1e-7);

        let v = Volume::new([3, 1, 1], [1.0; 3], vec![0.0, 1.0, 2.0]).unwrap();
        let (n, _) = normalize(&v, &unit_mask([3, 1, 1])).unwrap();
        assert_eq!(n.voxels()[1], 0.5);
    }

    #[test]
    fn normalize_degenerate() {
        let v = Volume::new([2, 2, 1], [1.0; 3], vec![5.0, 5.0, 9.0, 5.0]).unwrap();
        let m = RoiMask::new([2, 2, 1], [1.0; 3], vec![1, 1, 0, 1]).unwrap();
        assert!(matches!(normalize(&v, &m), Err(Error::DegenerateVolume(_))));
    }

    #[test]
    fn normalize_clamps() {
        let mut vox = vec![0.0f32; 100];
        vox[0] = 1000.0;
        let v = Volume::new([100, 1, 1], [1.0; 3], vox).unwrap();
        let (n, _) = normalize(&v, &unit_mask([100, 1, 1])).unwrap();
        assert_eq!(n.voxels()[0], 1.0);
        assert!(n.voxels().iter().all(|&x| (0.0..=1.0).contains(&x)));
    }
}
