use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rawio, NormStats, RoiMask, Volume};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

/// A window is usable when at least this share of its samples is in the ROI.
pub const MIN_MASK_FRACTION: f64 = 0.9;

/// A square axial window of fixed physical size, resampled to `out_px`².
///
/// Window positions are given by the integer voxel edge of their top-left
/// corner. Output pixel `i` samples the continuous voxel-index coordinate
/// `a + (i + ½)·w/out − ½`, so a window spanning exactly `out_px` voxels is
/// sampled at voxel centres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowGeometry {
    /// Native extent in voxels along x and y.
    pub native_px: [f64; 2],
    pub out_px: usize,
}

impl WindowGeometry {
    pub fn new(window_mm: f64, spacing_mm: [f64; 3], out_px: usize) -> Result<Self> {
        if !(window_mm > 0.0) || out_px == 0 {
            return Err(Error::Config(format!(
                "window of {window_mm} mm resampled to {out_px} px"
            )));
        }
        Ok(Self {
            native_px: [window_mm / spacing_mm[0], window_mm / spacing_mm[1]],
            out_px,
        })
    }

    pub fn fits_in(&self, nx: usize, ny: usize) -> bool {
        self.native_px[0] <= nx as f64 + 1e-9 && self.native_px[1] <= ny as f64 + 1e-9
    }

    /// Top-left corner of a window centred as closely as possible on voxel
    /// `(cx, cy)`, or `None` when the window would leave the slice.
    pub fn anchor_at(&self, cx: usize, cy: usize, nx: usize, ny: usize) -> Option<(usize, usize)> {
        let ax = (cx as f64 + 1.0 - self.native_px[0] / 2.0).floor();
        let ay = (cy as f64 + 1.0 - self.native_px[1] / 2.0).floor();
        (ax >= 0.0 && ay >= 0.0 && self.inside(ax as usize, ay as usize, nx, ny))
            .then_some((ax as usize, ay as usize))
    }

    pub fn inside(&self, ax: usize, ay: usize, nx: usize, ny: usize) -> bool {
        ax as f64 + self.native_px[0] <= nx as f64 + 1e-9
            && ay as f64 + self.native_px[1] <= ny as f64 + 1e-9
    }

    /// Continuous voxel-index coordinate of output sample `i` along `axis`.
    pub fn sample_pos(&self, anchor: usize, i: usize, axis: usize) -> f64 {
        anchor as f64 + (i as f64 + 0.5) * self.native_px[axis] / self.out_px as f64 - 0.5
    }

    /// Nearest voxel to each output sample, x-fastest, as flat slice indices.
    pub fn nearest_voxels(&self, ax: usize, ay: usize, nx: usize, ny: usize) -> Vec<usize> {
        let xs: Vec<usize> = (0..self.out_px)
            .map(|i| nearest_index(self.sample_pos(ax, i, 0), nx))
            .collect();
        let mut out = Vec::with_capacity(self.out_px * self.out_px);
        for j in 0..self.out_px {
            let y = nearest_index(self.sample_pos(ay, j, 1), ny);
            out.extend(xs.iter().map(|&x| y * nx + x));
        }
        out
    }

    /// Share of output samples whose nearest voxel is inside the mask.
    pub fn mask_fraction(&self, mask_slice: &[u8], ax: usize, ay: usize, nx: usize, ny: usize) -> f64 {
        let idx = self.nearest_voxels(ax, ay, nx, ny);
        let inside = idx.iter().filter(|&&i| mask_slice[i] == 1).count();
        inside as f64 / idx.len() as f64
    }

    /// Bilinear resampling of one window, rows of `out_px` values.
    pub fn sample(&self, slice: &[f32], ax: usize, ay: usize, nx: usize, ny: usize) -> Vec<f32> {
        let taps = |anchor: usize, axis: usize, n: usize| -> Vec<(usize, usize, f64)> {
            (0..self.out_px)
                .map(|i| {
                    let p = self.sample_pos(anchor, i, axis).clamp(0.0, (n - 1) as f64);
                    let lo = p.floor() as usize;
                    let hi = (lo + 1).min(n - 1);
                    (lo, hi, p - lo as f64)
                })
                .collect()
        };
        let xt = taps(ax, 0, nx);
        let yt = taps(ay, 1, ny);
        let mut out = Vec::with_capacity(self.out_px * self.out_px);
        for &(y0, y1, ty) in &yt {
            let r0 = &slice[y0 * nx..(y0 + 1) * nx];
            let r1 = &slice[y1 * nx..(y1 + 1) * nx];
            for &(x0, x1, tx) in &xt {
                let lerp = |a: f32, b: f32, t: f64| a as f64 + t * (b as f64 - a as f64);
                let top = lerp(r0[x0], r0[x1], tx);
                let bottom = lerp(r1[x0], r1[x1], tx);
                out.push((top + ty * (bottom - top)) as f32);
            }
        }
        out
    }
}

fn nearest_index(pos: f64, n: usize) -> usize {
    (pos.round().max(0.0) as usize).min(n - 1)
}

/// Where a patch was taken from.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub case_id: String,
    pub slice: usize,
    /// Window centre in-plane, millimetres from the slice origin corner.
    pub center_mm: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    /// 1×px×px, values in [0, 1].
    pub pixels: Tensor<f32>,
    pub provenance: Option<Provenance>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PatchSet {
    pub patches: Vec<Patch>,
    /// Normalization statistics per source case.
    pub norm: Vec<(String, NormStats)>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn px(&self) -> Option<usize> {
        self.patches.first().map(|p| p.pixels.shape()[1])
    }

    pub fn tensors(&self) -> Vec<&Tensor<f32>> {
        self.patches.iter().map(|p| &p.pixels).collect()
    }
}

/// Draws `n` windows of side `window_mm` at uniformly random in-mask centres
/// on axial slices, keeping those with at least 90% in-mask samples.
#[allow(clippy::too_many_arguments)]
pub fn extract_patches(
    volume: &Volume,
    mask: &RoiMask,
    case_id: &str,
    n: usize,
    window_mm: f64,
    out_px: usize,
    seed: u64,
) -> Result<Vec<Patch>> {
    if volume.dims() != mask.dims() {
        return Err(Error::InvalidShape(format!(
            "mask dims {:?} differ from volume dims {:?}",
            mask.dims(),
            volume.dims()
        )));
    }
    let [nx, ny, nz] = volume.dims();
    let geom = WindowGeometry::new(window_mm, volume.spacing_mm(), out_px)?;
    if !geom.fits_in(nx, ny) {
        return Err(Error::Input(format!(
            "a {window_mm} mm window ({:.1}×{:.1} voxels) does not fit a {nx}×{ny} slice",
            geom.native_px[0], geom.native_px[1]
        )));
    }
    let in_mask: Vec<(usize, Vec<usize>)> = (0..nz)
        .map(|z| {
            let idx: Vec<usize> = mask
                .slice(z)
                .iter()
                .enumerate()
                .filter(|(_, &m)| m == 1)
                .map(|(i, _)| i)
                .collect();
            (z, idx)
        })
        .filter(|(_, idx)| !idx.is_empty())
        .collect();
    if in_mask.is_empty() {
        return Err(Error::EmptyRoi {
            case_id: case_id.to_string(),
        });
    }

    let [sx, sy, _] = volume.spacing_mm();
    let mut rng = seed::rng(seed);
    let mut patches = Vec::with_capacity(n);
    let max_attempts = 100 * n;
    let mut attempts = 0;
    while patches.len() < n && attempts < max_attempts {
        attempts += 1;
        let (z, idx) = &in_mask[rng.random_range(0..in_mask.len())];
        let flat = idx[rng.random_range(0..idx.len())];
        let Some((ax, ay)) = geom.anchor_at(flat % nx, flat / nx, nx, ny) else {
            continue;
        };
        if geom.mask_fraction(mask.slice(*z), ax, ay, nx, ny) < MIN_MASK_FRACTION {
            continue;
        }
        let pixels = geom.sample(volume.slice(*z), ax, ay, nx, ny);
        patches.push(Patch {
            pixels: Tensor::new(vec![1, out_px, out_px], pixels)?,
            provenance: Some(Provenance {
                case_id: case_id.to_string(),
                slice: *z,
                center_mm: [
                    (ax as f64 + geom.native_px[0] / 2.0) * sx,
                    (ay as f64 + geom.native_px[1] / 2.0) * sy,
                ],
            }),
        });
    }
    if patches.len() < n {
        return Err(Error::ExtractionExhausted {
            case_id: case_id.to_string(),
            requested: n,
            achieved: patches.len(),
            attempts,
        });
    }
    Ok(patches)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatchSetHeader {
    count: usize,
    px: usize,
}

pub fn write_patchset(path: impl AsRef<Path>, set: &PatchSet) -> Result<()> {
    let px = set.px().unwrap_or(0);
    if let Some(bad) = set.patches.iter().find(|p| p.pixels.shape() != [1, px, px]) {
        return Err(Error::InvalidShape(format!(
            "patch shape {:?} in a {px}-px patch set",
            bad.pixels.shape()
        )));
    }
    let payload: Vec<f32> = set
        .patches
        .iter()
        .flat_map(|p| p.pixels.data().iter().copied())
        .collect();
    rawio::write_framed(
        path.as_ref(),
        &PatchSetHeader {
            count: set.len(),
            px,
        },
        &payload,
    )
}

/// Reads pixels back; provenance and normalization metadata are not stored.
pub fn read_patchset(path: impl AsRef<Path>) -> Result<PatchSet> {
    let path = path.as_ref();
    let (h, payload): (PatchSetHeader, _) = rawio::read_framed(path)?;
    let per = h.px * h.px;
    if payload.len() != h.count * per {
        return Err(Error::format(
            path,
            "payload",
            format!("{} values for {} patches of {}×{}", payload.len(), h.count, h.px, h.px),
        ));
    }
    if h.count > 0 && h.px == 0 {
        return Err(Error::format(path, "px", "must be positive"));
    }
    let patches = payload
        .chunks_exact(per.max(1))
        .take(h.count)
        .map(|c| {
            Ok(Patch {
                pixels: Tensor::new(vec![1, h.px, h.px], c.to_vec())?,
                provenance: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PatchSet {
        patches,
        norm: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_volume(n: usize, spacing: f64) -> Volume {
        let vox = (0..n * n).map(|i| ((i % n) as f32 + (i / n) as f32) / (2 * n) as f32).collect();
        Volume::new([n, n, 1], [spacing, spacing, 1.0], vox).unwrap()
    }

    #[test]
    fn native_window_sizes() {
        let g = WindowGeometry::new(14.0, [0.4375, 0.4375, 1.0], 32).unwrap();
        assert_eq!(g.native_px, [32.0, 32.0]);
        let g = WindowGeometry::new(14.0, [0.5, 0.5, 1.0], 32).unwrap();
        assert_eq!(g.native_px, [28.0, 28.0]);
    }

    #[test]
    fn exact_size_window_is_identity() {
        let v = ramp_volume(40, 0.4375);
        let g = WindowGeometry::new(14.0, v.spacing_mm(), 32).unwrap();
        let s = g.sample(v.slice(0), 3, 5, 40, 40);
        for j in 0..32 {
            for i in 0..32 {
                assert_eq!(s[j * 32 + i], v.get(3 + i, 5 + j, 0));
            }
        }
    }

    #[test]
    fn upsampled_window_stays_in_range_and_keeps_constants() {
        let v = ramp_volume(40, 0.5);
        let g = WindowGeometry::new(14.0, v.spacing_mm(), 32).unwrap();
        let s = g.sample(v.slice(0), 4, 4, 40, 40);
        // samples near the window edge interpolate with the adjacent voxel centre
        let win: Vec<f32> = (3..33).flat_map(|y| (3..33).map(move |x| (x, y))).map(|(x, y)| v.get(x, y, 0)).collect();
        let (lo, hi) = win.iter().fold((f32::MAX, f32::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        assert!(s.iter().all(|&x| x >= lo && x <= hi));

        let c = Volume::new([40, 40, 1], [0.5, 0.5, 1.0], vec![0.37; 1600]).unwrap();
        assert!(g.sample(c.slice(0), 0, 7, 40, 40).iter().all(|&x| x == 0.37));
    }

    #[test]
    fn extraction_is_deterministic_and_in_mask() {
        let v = ramp_volume(64, 0.4375);
        let m = RoiMask::new([64, 64, 1], v.spacing_mm(), vec![1; 64 * 64]).unwrap();
        let a = extract_patches(&v, &m, "c", 10, 14.0, 32, 42).unwrap();
        let b = extract_patches(&v, &m, "c", 10, 14.0, 32, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert!(a.iter().all(|p| p.pixels.data().iter().all(|&x| (0.0..=1.0).contains(&x))));
    }

    #[test]
    fn extraction_exhausts_on_tiny_roi() {
        let v = ramp_volume(64, 0.4375);
        let mut vals = vec![0u8; 64 * 64];
        vals[32 * 64 + 32] = 1;
        let m = RoiMask::new([64, 64, 1], v.spacing_mm(), vals).unwrap();
        match extract_patches(&v, &m, "tiny", 3, 14.0, 32, 1) {
            Err(Error::ExtractionExhausted { achieved, requested, attempts, .. }) => {
                assert_eq!((achieved, requested, attempts), (0, 3, 300));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn patchset_round_trip() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("p.bin");
        let set = PatchSet {
            patches: (0..3)
                .map(|i| Patch {
                    pixels: Tensor::filled(&[1, 4, 4], i as f32 / 4.0),
                    provenance: None,
                })
                .collect(),
            norm: vec![],
        };
        write_patchset(&p, &set).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(br#"{"count":3,"px":4}"#));
        let back = read_patchset(&p).unwrap();
        assert_eq!(back, set);
        write_patchset(&p, &back).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), bytes);
    }
}
