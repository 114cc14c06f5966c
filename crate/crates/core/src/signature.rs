//! Sliding-window cluster-proportion signatures over a region of interest.

use std::path::Path;

use rayon::prelude::*;

use crate::dcn::DcnModel;
use crate::error::{Error, Result};
use crate::kmeans;
use crate::net;
use crate::tensor::Tensor;
use crate::volume_io::{self, CaseRecord, RoiMask, Volume, WindowGeometry, MIN_MASK_FRACTION};

pub const DEFAULT_STRIDE_PX: usize = 8;

/// Per-case cluster proportions.
#[derive(Clone, Debug, PartialEq)]
pub struct Signature {
    pub case_id: String,
    /// Length k, nonnegative, sums to 1.
    pub proportions: Vec<f64>,
    pub window_count: usize,
}

impl Signature {
    /// Proportions from per-cluster window counts.
    pub fn from_counts(case_id: &str, counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyRoi {
                case_id: case_id.to_string(),
            });
        }
        Ok(Self {
            case_id: case_id.to_string(),
            proportions: counts.iter().map(|&c| c as f64 / total as f64).collect(),
            window_count: total,
        })
    }
}

/// One accepted window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowLabel {
    pub slice: usize,
    /// Top-left voxel of the window.
    pub anchor: [usize; 2],
    /// Window centre in voxel units from the slice corner.
    pub center_px: [f64; 2],
    pub cluster: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelMap {
    pub case_id: String,
    pub windows: Vec<WindowLabel>,
}

/// Window options shared with patch extraction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowParams {
    pub window_mm: f64,
    pub stride_px: usize,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self {
            window_mm: 14.0,
            stride_px: DEFAULT_STRIDE_PX,
        }
    }
}

/// Accepted window anchors as `(slice, ax, ay)`, slices ascending then rows
/// then columns.
pub fn window_grid(mask: &RoiMask, geom: &WindowGeometry, stride_px: usize) -> Vec<(usize, usize, usize)> {
    let [nx, ny, nz] = mask.dims();
    let stride = stride_px.max(1);
    let mut out = Vec::new();
    for z in 0..nz {
        let slice = mask.slice(z);
        if !slice.contains(&1) {
            continue;
        }
        let mut ay = 0;
        while geom.inside(0, ay, nx, ny) {
            let mut ax = 0;
            while geom.inside(ax, ay, nx, ny) {
                if geom.mask_fraction(slice, ax, ay, nx, ny) >= MIN_MASK_FRACTION {
                    out.push((z, ax, ay));
                }
                ax += stride;
            }
            ay += stride;
        }
    }
    out
}

/// Encodes every accepted window of a normalized volume and counts nearest
/// centroids.
pub fn compute_signature(
    model: &DcnModel,
    volume: &Volume,
    mask: &RoiMask,
    case_id: &str,
    params: WindowParams,
) -> Result<(Signature, LabelMap)> {
    if volume.dims() != mask.dims() {
        return Err(Error::InvalidShape(format!(
            "mask dims {:?} differ from volume dims {:?}",
            mask.dims(),
            volume.dims()
        )));
    }
    let [nx, ny, _] = volume.dims();
    let px = model.arch().input_px;
    let geom = WindowGeometry::new(params.window_mm, volume.spacing_mm(), px)?;
    if !geom.fits_in(nx, ny) {
        return Err(Error::Input(format!(
            "a {} mm window does not fit a {nx}×{ny} slice",
            params.window_mm
        )));
    }
    let grid = window_grid(mask, &geom, params.stride_px);
    let clusters: Vec<usize> = grid
        .par_iter()
        .map(|&(z, ax, ay)| {
            let pixels = geom.sample(volume.slice(z), ax, ay, nx, ny);
            let code = net::encode(&model.params, &Tensor::new(vec![1, px, px], pixels)?)?;
            let code: Vec<f64> = code.iter().map(|&v| v as f64).collect();
            Ok(kmeans::nearest(&code, &model.centroids).0)
        })
        .collect::<Result<_>>()?;

    let mut counts = vec![0usize; model.k()];
    for &c in &clusters {
        counts[c] += 1;
    }
    let signature = Signature::from_counts(case_id, &counts)?;
    let windows = grid
        .iter()
        .zip(&clusters)
        .map(|(&(z, ax, ay), &cluster)| WindowLabel {
            slice: z,
            anchor: [ax, ay],
            center_px: [ax as f64 + geom.native_px[0] / 2.0, ay as f64 + geom.native_px[1] / 2.0],
            cluster,
        })
        .collect();
    Ok((
        signature,
        LabelMap {
            case_id: case_id.to_string(),
            windows,
        },
    ))
}

/// Signature and label map of one manifest case.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseSignature {
    pub grade: u8,
    pub signature: Signature,
    pub labels: LabelMap,
}

fn case_signature(model: &DcnModel, record: &CaseRecord, params: WindowParams) -> Result<CaseSignature> {
    let volume = volume_io::read_volume(&record.volume_path)?;
    let mask = volume_io::read_mask(&record.mask_path)?;
    if mask.is_empty() {
        return Err(Error::EmptyRoi {
            case_id: record.case_id.clone(),
        });
    }
    let (normalized, _) = volume_io::normalize(&volume, &mask)?;
    let (signature, labels) = compute_signature(model, &normalized, &mask, &record.case_id, params)?;
    Ok(CaseSignature {
        grade: record.grade,
        signature,
        labels,
    })
}

/// Signatures for every case in manifest order. Cases are processed in turn
/// and all failures are reported together.
pub fn signatures_for_manifest(
    model: &DcnModel,
    records: &[CaseRecord],
    params: WindowParams,
) -> Result<Vec<CaseSignature>> {
    let mut out = Vec::with_capacity(records.len());
    let mut failures = Vec::new();
    for record in records {
        match case_signature(model, record, params) {
            Ok(s) => out.push(s),
            Err(e) => failures.push((record.case_id.clone(), e.to_string())),
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(Error::CaseFailures(failures))
    }
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e))
}

/// `case_id,grade,window_count,c1,...,ck`
pub fn write_signature_table(path: impl AsRef<Path>, rows: &[CaseSignature]) -> Result<()> {
    let path = path.as_ref();
    let io = csv_io(path);
    let k = rows.first().map_or(0, |r| r.signature.proportions.len());
    let mut w = csv::Writer::from_path(path).map_err(&io)?;
    let mut header = vec!["case_id".to_string(), "grade".into(), "window_count".into()];
    header.extend((1..=k).map(|c| format!("c{c}")));
    w.write_record(&header).map_err(&io)?;
    for r in rows {
        let mut rec = vec![
            r.signature.case_id.clone(),
            r.grade.to_string(),
            r.signature.window_count.to_string(),
        ];
        rec.extend(r.signature.proportions.iter().map(|p| p.to_string()));
        w.write_record(&rec).map_err(&io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a signature table back as `(grade, signature)` rows.
pub fn read_signature_table(path: impl AsRef<Path>) -> Result<Vec<(u8, Signature)>> {
    let path = path.as_ref();
    let bad = |row: usize, message: String| Error::Manifest { row, message };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(0, format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| bad(0, e.to_string()))?.clone();
    if headers.len() < 5 || headers.iter().take(3).ne(["case_id", "grade", "window_count"]) {
        return Err(bad(0, "expected header case_id,grade,window_count,c1,...,ck with k ≥ 2".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| bad(row, e.to_string()))?;
        let grade = rec[1]
            .parse::<u8>()
            .ok()
            .filter(|g| *g <= 3)
            .ok_or_else(|| bad(row, format!("grade `{}` outside 0..3", &rec[1])))?;
        let window_count = rec[2]
            .parse()
            .map_err(|_| bad(row, format!("window_count `{}`", &rec[2])))?;
        let proportions = rec
            .iter()
            .skip(3)
            .map(|v| v.parse::<f64>().ok().filter(|p| p.is_finite() && *p >= 0.0))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad(row, "proportions must be finite and nonnegative".into()))?;
        rows.push((
            grade,
            Signature {
                case_id: rec[0].to_string(),
                proportions,
                window_count,
            },
        ));
    }
    Ok(rows)
}

/// `case_id,slice,cx_px,cy_px,cluster`
pub fn write_label_maps(path: impl AsRef<Path>, maps: &[&LabelMap]) -> Result<()> {
    let path = path.as_ref();
    let io = csv_io(path);
    let mut w = csv::Writer::from_path(path).map_err(&io)?;
    w.write_record(["case_id", "slice", "cx_px", "cy_px", "cluster"]).map_err(&io)?;
    for m in maps {
        for win in &m.windows {
            w.write_record([
                m.case_id.clone(),
                win.slice.to_string(),
                win.center_px[0].to_string(),
                win.center_px[1].to_string(),
                win.cluster.to_string(),
            ])
            .map_err(&io)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_to_proportions() {
        let mut counts = vec![0; 10];
        counts[0] = 5;
        counts[1] = 5;
        let s = Signature::from_counts("a", &counts).unwrap();
        assert_eq!(s.proportions[..3], [0.5, 0.5, 0.0]);
        assert_eq!(s.window_count, 10);
        let mut one_hot = vec![0; 10];
        one_hot[3] = 7;
        let s = Signature::from_counts("a", &one_hot).unwrap();
        assert_eq!(s.proportions[3], 1.0);
        assert_eq!(s.proportions.iter().sum::<f64>(), 1.0);
        assert!(matches!(Signature::from_counts("z", &[0, 0]), Err(Error::EmptyRoi { .. })));
    }

    #[test]
    fn grid_respects_mask_fraction() {
        let dims = [40, 40, 2];
        let mut values = vec![0u8; 3200];
        for y in 0..40 {
            for x in 0..36 {
                values[y * 40 + x] = 1;
            }
        }
        let mask = RoiMask::new(dims, [1.0; 3], values).unwrap();
        let geom = WindowGeometry::new(32.0, [1.0; 3], 32).unwrap();
        let grid = window_grid(&mask, &geom, 4);
        // x = 8 keeps only 28 of 32 columns in the mask
        assert_eq!(grid, vec![(0, 0, 0), (0, 4, 0), (0, 0, 4), (0, 4, 4), (0, 0, 8), (0, 4, 8)]);
    }
}
