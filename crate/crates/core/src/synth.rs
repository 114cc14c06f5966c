//! Synthetic two-texture phantoms with a known lesion fraction per grade.
//!
//! Each case is an ellipsoidal ROI filled with a smooth noise texture
//! (background) and a striped texture (lesion) painted in spherical blobs.
//! Both textures have the same mean and unit variance before scaling, so the
//! ROI normalization does not depend on the mixture.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::signature::LabelMap;
use crate::volume_io::{self, CaseRecord, RoiMask, Volume, WindowGeometry};

pub const OUTSIDE: u8 = 0;
pub const BACKGROUND: u8 = 1;
pub const LESION: u8 = 2;

/// Allowed gap between requested and achieved lesion fraction.
pub const FRACTION_TOLERANCE: f64 = 0.02;
/// Minimum difference in stripe-band power share between the two textures.
pub const SPECTRAL_MARGIN: f64 = 0.3;
const MAX_BLOBS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Palette {
    pub mean: f64,
    /// Intensity scale of both unit-variance textures.
    pub contrast: f64,
    /// Gaussian smoothing of the background noise, in voxels.
    pub noise_sigma_px: f64,
    pub stripe_period_px: f64,
    pub stripe_angle_deg: f64,
    /// Share of the lesion variance carried by white noise.
    pub stripe_noise: f64,
    /// Blob radius range in millimetres.
    pub blob_radius_mm: [f64; 2],
    /// Level of the tissue outside the ROI, in contrast units.
    pub outside_level: f64,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            mean: 100.0,
            contrast: 12.0,
            noise_sigma_px: 3.0,
            stripe_period_px: 8.0,
            stripe_angle_deg: 30.0,
            stripe_noise: 0.2,
            blob_radius_mm: [50.0, 100.0],
            outside_level: -2.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub n_cases: usize,
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub palette: Palette,
    /// Lesion fraction of the ROI for grades 0..3.
    pub grade_fractions: [f64; 4],
    /// Cases per grade; an equal share (remainder to low grades) when unset.
    pub grade_counts: Option<[usize; 4]>,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            n_cases: 40,
            dims: [512, 512, 4],
            spacing_mm: [0.4375, 0.4375, 2.0],
            palette: Palette::default(),
            grade_fractions: [0.2, 0.4, 0.6, 0.8],
            grade_counts: None,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let p = &self.grade_fractions;
        if p.iter().any(|f| !(0.0..=1.0).contains(f)) || p.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "grade fractions {p:?} must lie in [0, 1] and increase strictly"
            )));
        }
        if self.dims.contains(&0) || self.spacing_mm.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("dims and spacings must be positive".into()));
        }
        if let Some(c) = self.grade_counts {
            if c.iter().sum::<usize>() != self.n_cases {
                return Err(Error::Config(format!(
                    "grade counts {c:?} do not add up to {} cases",
                    self.n_cases
                )));
            }
        }
        let pal = &self.palette;
        if !(pal.stripe_period_px > 0.0)
            || !(0.0..=1.0).contains(&pal.stripe_noise)
            || !(pal.noise_sigma_px > 0.0)
            || !(pal.blob_radius_mm[0] > 0.0 && pal.blob_radius_mm[0] <= pal.blob_radius_mm[1])
        {
            return Err(Error::Config(format!("invalid palette {pal:?}")));
        }
        Ok(())
    }

    pub fn grade_counts(&self) -> [usize; 4] {
        self.grade_counts.unwrap_or_else(|| {
            let (q, r) = (self.n_cases / 4, self.n_cases % 4);
            std::array::from_fn(|g| q + usize::from(g < r))
        })
    }

    /// Grade of every case, a seeded shuffle of the configured histogram.
    pub fn grades(&self) -> Vec<u8> {
        let mut grades: Vec<u8> = self
            .grade_counts()
            .iter()
            .enumerate()
            .flat_map(|(g, &c)| std::iter::repeat_n(g as u8, c))
            .collect();
        grades.shuffle(&mut seed::rng(seed::derive(self.seed, seed::stream::PHANTOM)));
        grades
    }
}

pub fn case_id(index: usize) -> String {
    format!("case_{index:03}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomTruth {
    /// Texture id per voxel: outside, background or lesion.
    pub labels: Vec<u8>,
    pub grade: u8,
    /// Lesion share of the ROI.
    pub lesion_fraction: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable blur with edge clamping.
fn blur(field: &[f64], nx: usize, ny: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let pass = |src: &[f64], along_x: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for y in 0..ny {
            for x in 0..nx {
                let mut acc = 0.0;
                for (j, w) in kernel.iter().enumerate() {
                    let o = j as isize - r;
                    let (sx, sy) = if along_x {
                        ((x as isize + o).clamp(0, nx as isize - 1) as usize, y)
                    } else {
                        (x, (y as isize + o).clamp(0, ny as isize - 1) as usize)
                    };
                    acc += w * src[sy * nx + sx];
                }
                out[y * nx + x] = acc;
            }
        }
        out
    };
    pass(&pass(field, true), false)
}

/// Unit-variance smooth noise for one slice.
fn smooth_noise(rng: &mut ChaCha8Rng, nx: usize, ny: usize, kernel: &[f64]) -> Vec<f64> {
    let white: Vec<f64> = (0..nx * ny).map(|_| normal(rng)).collect();
    let gain = kernel.iter().map(|w| w * w).sum::<f64>();
    blur(&white, nx, ny, kernel).into_iter().map(|v| v / gain).collect()
}

/// Unit-variance stripes plus white noise for one slice.
fn stripes(rng: &mut ChaCha8Rng, nx: usize, ny: usize, pal: &Palette, phase: f64) -> Vec<f64> {
    let (s, c) = pal.stripe_angle_deg.to_radians().sin_cos();
    let a = (2.0 * (1.0 - pal.stripe_noise)).sqrt();
    let b = pal.stripe_noise.sqrt();
    let mut out = Vec::with_capacity(nx * ny);
    for y in 0..ny {
        for x in 0..nx {
            let t = 2.0 * PI * (x as f64 * c + y as f64 * s) / pal.stripe_period_px + phase;
            out.push(a * t.sin() + b * normal(rng));
        }
    }
    out
}

/// Share of non-DC power of a Hann-windowed n×n crop within ±25% of the
/// stripe frequency.
pub fn stripe_band_share(field: &[f64], nx: usize, x0: usize, y0: usize, n: usize, period_px: f64) -> f64 {
    let crop: Vec<f64> = (0..n * n).map(|i| field[(y0 + i / n) * nx + x0 + i % n]).collect();
    let mean = crop.iter().sum::<f64>() / crop.len() as f64;
    let hann: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    let crop: Vec<f64> = crop
        .iter()
        .enumerate()
        .map(|(i, v)| (v - mean) * hann[i / n] * hann[i % n])
        .collect();
    let f0 = 1.0 / period_px;
    let (mut band, mut total) = (0.0, 0.0);
    let half = n as isize / 2;
    for v in -half..half {
        for u in -half..half {
            if u == 0 && v == 0 {
                continue;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..n {
                for x in 0..n {
                    let ang = -2.0 * PI * (u as f64 * x as f64 + v as f64 * y as f64) / n as f64;
                    let val = crop[y * n + x];
                    re += val * ang.cos();
                    im += val * ang.sin();
                }
            }
            let power = re * re + im * im;
            total += power;
            let f = ((u * u + v * v) as f64).sqrt() / n as f64;
            if (f - f0).abs() <= 0.25 * f0 {
                band += power;
            }
        }
    }
    if total > 0.0 {
        band / total
    } else {
        0.0
    }
}

/// Paints the `minority` texture over `base` voxels of the ROI in spherical
/// blobs until exactly `target` voxels carry it; the last blob is cut to the
/// nearest voxels of its sphere.
fn paint_blobs(
    labels: &mut [u8],
    roi: &[usize],
    dims: [usize; 3],
    spacing: [f64; 3],
    radius_mm: [f64; 2],
    minority: u8,
    target: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let [nx, ny, nz] = dims;
    let mut painted = 0usize;
    let mut blobs = 0;
    while painted < target {
        if blobs == MAX_BLOBS {
            return Err(Error::Generation(format!(
                "{painted} of {target} voxels painted after {MAX_BLOBS} blobs"
            )));
        }
        blobs += 1;
        let centre = roi[rng.random_range(0..roi.len())];
        let (cx, cy, cz) = (centre % nx, (centre / nx) % ny, centre / (nx * ny));
        let r = rng.random_range(radius_mm[0]..=radius_mm[1]);
        let reach = |c: usize, s: f64, n: usize| {
            let d = (r / s).ceil() as usize;
            (c.saturating_sub(d), (c + d).min(n - 1))
        };
        let (x0, x1) = reach(cx, spacing[0], nx);
        let (y0, y1) = reach(cy, spacing[1], ny);
        let (z0, z1) = reach(cz, spacing[2], nz);
        let mut inside = Vec::new();
        for z in z0..=z1 {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = (z * ny + y) * nx + x;
                    if labels[i] == OUTSIDE || labels[i] == minority {
                        continue;
                    }
                    let d2 = ((x as f64 - cx as f64) * spacing[0]).powi(2)
                        + ((y as f64 - cy as f64) * spacing[1]).powi(2)
                        + ((z as f64 - cz as f64) * spacing[2]).powi(2);
                    if d2 <= r * r {
                        inside.push((d2, i));
                    }
                }
            }
        }
        inside.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, i) in inside.iter().take(target - painted) {
            labels[i] = minority;
            painted += 1;
        }
    }
    Ok(())
}

/// Volume, ROI mask and ground truth of one case.
pub fn generate_phantom(spec: &PhantomSpec, case_index: usize) -> Result<(Volume, RoiMask, PhantomTruth)> {
    spec.validate()?;
    if case_index >= spec.n_cases {
        return Err(Error::Input(format!(
            "case {case_index} of a {}-case cohort",
            spec.n_cases
        )));
    }
    let grade = spec.grades()[case_index];
    let p = spec.grade_fractions[grade as usize];
    let [nx, ny, nz] = spec.dims;
    let spacing = spec.spacing_mm;
    let pal = &spec.palette;
    let mut rng = seed::rng(seed::derive(
        seed::derive(spec.seed, seed::stream::PHANTOM),
        case_index as u64,
    ));

    let semi = [
        0.42 * nx as f64 * rng.random_range(0.9..=1.0),
        0.42 * ny as f64 * rng.random_range(0.9..=1.0),
        0.75 * nz as f64,
    ];
    let centre = [nx as f64 / 2.0, ny as f64 / 2.0, nz as f64 / 2.0];
    let (base, minority, q) = if p <= 0.5 {
        (BACKGROUND, LESION, p)
    } else {
        (LESION, BACKGROUND, 1.0 - p)
    };
    let mut labels = vec![OUTSIDE; nx * ny * nz];
    let mut roi = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let r2: f64 = [x, y, z]
                    .iter()
                    .zip(centre.iter().zip(&semi))
                    .map(|(&v, (&c, &s))| ((v as f64 + 0.5 - c) / s).powi(2))
                    .sum();
                if r2 <= 1.0 {
                    let i = (z * ny + y) * nx + x;
                    labels[i] = base;
                    roi.push(i);
                }
            }
        }
    }
    if roi.is_empty() {
        return Err(Error::Generation(format!("empty ROI for dims {:?}", spec.dims)));
    }
    let target = (q * roi.len() as f64).round() as usize;
    paint_blobs(&mut labels, &roi, spec.dims, spacing, pal.blob_radius_mm, minority, target, &mut rng)?;
    let lesion = roi.iter().filter(|&&i| labels[i] == LESION).count();
    let lesion_fraction = lesion as f64 / roi.len() as f64;
    if (lesion_fraction - p).abs() > FRACTION_TOLERANCE {
        return Err(Error::Generation(format!(
            "lesion fraction {lesion_fraction:.4} misses {p} for {}",
            case_id(case_index)
        )));
    }

    let kernel = gaussian_kernel(pal.noise_sigma_px);
    let phase = rng.random_range(0.0..2.0 * PI);
    let mut voxels = Vec::with_capacity(labels.len());
    for z in 0..nz {
        let a = smooth_noise(&mut rng, nx, ny, &kernel);
        let b = stripes(&mut rng, nx, ny, pal, phase);
        if z == 0 {
            check_separation(&a, &b, nx, ny, pal.stripe_period_px)?;
        }
        for (j, &label) in labels[z * nx * ny..(z + 1) * nx * ny].iter().enumerate() {
            let t = match label {
                BACKGROUND => a[j],
                LESION => b[j],
                _ => pal.outside_level + 0.3 * normal(&mut rng),
            };
            voxels.push((pal.mean + pal.contrast * t) as f32);
        }
    }

    let mask_values = labels.iter().map(|&l| u8::from(l != OUTSIDE)).collect();
    Ok((
        Volume::new(spec.dims, spacing, voxels)?,
        RoiMask::new(spec.dims, spacing, mask_values)?,
        PhantomTruth {
            labels,
            grade,
            lesion_fraction,
        },
    ))
}

fn check_separation(a: &[f64], b: &[f64], nx: usize, ny: usize, period_px: f64) -> Result<()> {
    let n = 32.min(nx).min(ny);
    let (x0, y0) = ((nx - n) / 2, (ny - n) / 2);
    let sa = stripe_band_share(a, nx, x0, y0, n, period_px);
    let sb = stripe_band_share(b, nx, x0, y0, n, period_px);
    if sb - sa < SPECTRAL_MARGIN {
        return Err(Error::Generation(format!(
            "textures not separable: stripe-band share {sb:.3} (lesion) vs {sa:.3} (background)"
        )));
    }
    Ok(())
}

pub fn truth_path(dir: &Path, case_id: &str) -> PathBuf {
    dir.join(format!("truth_{case_id}.json"))
}

/// Writes every case, its truth labels and `manifest.csv` into `out_dir`;
/// returns the manifest path.
pub fn generate_cohort(spec: &PhantomSpec, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    spec.validate()?;
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let records = (0..spec.n_cases)
        .into_par_iter()
        .map(|i| {
            let (volume, mask, truth) = generate_phantom(spec, i)?;
            let id = case_id(i);
            let volume_name = format!("{id}.json");
            let mask_name = format!("{id}_mask.json");
            volume_io::write_volume(dir.join(&volume_name), &volume)?;
            volume_io::write_mask(dir.join(&mask_name), &mask)?;
            volume_io::write_labels(truth_path(dir, &id), spec.dims, spec.spacing_mm, &truth.labels)?;
            Ok((
                CaseRecord {
                    case_id: id,
                    volume_path: volume_name.into(),
                    mask_path: mask_name.into(),
                    grade: truth.grade,
                },
                truth.lesion_fraction,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = dir.join("manifest.csv");
    let cases: Vec<CaseRecord> = records.iter().map(|(r, _)| r.clone()).collect();
    volume_io::write_manifest(&manifest, &cases)?;
    let truth_csv = dir.join("phantom_truth.csv");
    let mut text = String::from("case_id,grade,lesion_fraction\n");
    for (r, f) in &records {
        text.push_str(&format!("{},{},{f}\n", r.case_id, r.grade));
    }
    std::fs::write(&truth_csv, text).map_err(|e| Error::io(&truth_csv, e))?;
    Ok(manifest)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterScore {
    pub nmi: f64,
    pub purity: f64,
    pub windows: usize,
}

/// Majority truth label within each window footprint (ties to the lowest
/// label).
pub fn window_truth(labels: &[u8], dims: [usize; 3], geom: &WindowGeometry, map: &LabelMap) -> Vec<u8> {
    let [nx, ny, _] = dims;
    map.windows
        .iter()
        .map(|w| {
            let slice = &labels[w.slice * nx * ny..(w.slice + 1) * nx * ny];
            let mut hist = [0usize; 256];
            for i in geom.nearest_voxels(w.anchor[0], w.anchor[1], nx, ny) {
                hist[slice[i] as usize] += 1;
            }
            let best = hist.iter().copied().max().unwrap_or(0);
            hist.iter().position(|&c| c == best).unwrap_or(0) as u8
        })
        .collect()
}

/// Normalized mutual information (geometric normalization, natural log) and
/// purity of `predicted` against `truth`.
pub fn score_labels(truth: &[u8], predicted: &[usize]) -> Result<ClusterScore> {
    if truth.len() != predicted.len() {
        return Err(Error::Input(format!(
            "{} truth labels for {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let n = truth.len();
    if n == 0 {
        return Err(Error::Input("no windows to score".into()));
    }
    let k = predicted.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![[0usize; 256]; k];
    let mut t_count = [0usize; 256];
    let mut p_count = vec![0usize; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        joint[p][t as usize] += 1;
        t_count[t as usize] += 1;
        p_count[p] += 1;
    }
    let nf = n as f64;
    let entropy = |counts: &mut dyn Iterator<Item = usize>| -> f64 {
        counts
            .filter(|&c| c > 0)
            .map(|c| {
                let q = c as f64 / nf;
                -q * q.ln()
            })
            .sum()
    };
    let h_t = entropy(&mut t_count.iter().copied());
    let h_p = entropy(&mut p_count.iter().copied());
    let mut mi = 0.0;
    for (p, row) in joint.iter().enumerate() {
        for (t, &c) in row.iter().enumerate() {
            if c > 0 {
                let pj = c as f64 / nf;
                mi += pj * (pj * nf * nf / (p_count[p] as f64 * t_count[t] as f64)).ln();
            }
        }
    }
    let nmi = if h_t == 0.0 && h_p == 0.0 {
        1.0
    } else if h_t == 0.0 || h_p == 0.0 {
        0.0
    } else {
        (mi / (h_t * h_p).sqrt()).clamp(0.0, 1.0)
    };
    let purity = joint.iter().map(|row| row.iter().max().copied().unwrap_or(0)).sum::<usize>() as f64 / nf;
    Ok(ClusterScore {
        nmi,
        purity,
        windows: n,
    })
}

/// Scores one case's label map against its phantom truth.
pub fn score_clustering(
    labels: &[u8],
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    map: &LabelMap,
    window_mm: f64,
    out_px: usize,
) -> Result<ClusterScore> {
    let geom = WindowGeometry::new(window_mm, spacing_mm, out_px)?;
    let truth = window_truth(labels, dims, &geom, map);
    let predicted: Vec<usize> = map.windows.iter().map(|w| w.cluster).collect();
    score_labels(&truth, &predicted)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> PhantomSpec {
        let mut spec = PhantomSpec {
            n_cases: 8,
            dims: [64, 64, 3],
            ..PhantomSpec::default()
        };
        spec.palette.blob_radius_mm = [4.0, 8.0];
        spec
    }

    #[test]
    fn lesion_fraction_follows_grade() {
        let spec = small_spec();
        for i in 0..spec.n_cases {
            let (_, mask, truth) = generate_phantom(&spec, i).unwrap();
            let roi = mask.count();
            let lesion = truth.labels.iter().filter(|&&l| l == LESION).count();
            let p = spec.grade_fractions[truth.grade as usize];
            assert!((lesion as f64 / roi as f64 - p).abs() <= FRACTION_TOLERANCE);
            assert_eq!(truth.lesion_fraction, lesion as f64 / roi as f64);
        }
    }

    #[test]
    fn extreme_fractions() {
        let mut spec = small_spec();
        spec.grade_fractions = [0.0, 0.3, 0.6, 1.0];
        let grades = spec.grades();
        let zero = grades.iter().position(|&g| g == 0).unwrap();
        let one = grades.iter().position(|&g| g == 3).unwrap();
        let (_, _, t) = generate_phantom(&spec, zero).unwrap();
        assert!(t.labels.iter().all(|&l| l != LESION));
        let (_, _, t) = generate_phantom(&spec, one).unwrap();
        assert!(t.labels.iter().all(|&l| l != BACKGROUND));
    }

    #[test]
    fn grade_histogram_is_exact() {
        let spec = PhantomSpec::default();
        let mut hist = [0; 4];
        for g in spec.grades() {
            hist[g as usize] += 1;
        }
        assert_eq!(hist, [10; 4]);
        let spec = PhantomSpec {
            n_cases: 6,
            ..PhantomSpec::default()
        };
        assert_eq!(spec.grade_counts(), [2, 2, 1, 1]);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = small_spec();
        assert_eq!(generate_phantom(&spec, 3).unwrap(), generate_phantom(&spec, 3).unwrap());
        let other = PhantomSpec { seed: 1, ..small_spec() };
        assert_ne!(generate_phantom(&spec, 3).unwrap().0, generate_phantom(&other, 3).unwrap().0);
    }

    #[test]
    fn rejects_non_increasing_fractions() {
        let spec = PhantomSpec {
            grade_fractions: [0.2, 0.2, 0.6, 0.8],
            ..PhantomSpec::default()
        };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn stripes_dominate_their_band() {
        let pal = Palette::default();
        let mut rng = seed::rng(3);
        let a = smooth_noise(&mut rng, 32, 32, &gaussian_kernel(pal.noise_sigma_px));
        let b = stripes(&mut rng, 32, 32, &pal, 0.4);
        let sa = stripe_band_share(&a, 32, 0, 0, 32, pal.stripe_period_px);
        let sb = stripe_band_share(&b, 32, 0, 0, 32, pal.stripe_period_px);
        assert!(sb > 0.7 && sb - sa > SPECTRAL_MARGIN, "{sa} {sb}");
    }

    #[test]
    fn perfect_and_single_cluster_scores() {
        let truth = [1u8, 1, 2, 2, 2];
        let s = score_labels(&truth, &[0, 0, 1, 1, 1]).unwrap();
        assert!((s.nmi - 1.0).abs() < 1e-12);
        assert_eq!(s.purity, 1.0);
        let s = score_labels(&truth, &[0; 5]).unwrap();
        assert_eq!(s.purity, 0.6);
        assert_eq!(s.nmi, 0.0);
    }

    #[test]
    fn random_prediction_has_low_nmi() {
        let mut rng = seed::rng(9);
        let truth: Vec<u8> = (0..20_000).map(|_| rng.random_range(1..3)).collect();
        let pred: Vec<usize> = (0..20_000).map(|_| rng.random_range(0..10)).collect();
        let s = score_labels(&truth, &pred).unwrap();
        assert!(s.nmi < 0.01, "{}", s.nmi);
    }
}
