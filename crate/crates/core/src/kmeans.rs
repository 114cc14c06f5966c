//! Lloyd's k-means with k-means++ seeding.

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;

/// `k` centroids of dimension `dim`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Centroids {
    k: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Centroids {
    pub fn new(k: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 || dim == 0 || data.len() != k * dim {
            return Err(Error::InvalidShape(format!(
                "{} centroid values for k={k}, dim={dim}",
                data.len()
            )));
        }
        Ok(Self { k, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidShape("ragged centroid rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Rounds every coordinate to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid and its squared distance; ties go to the lowest index.
pub fn nearest(point: &[f64], centroids: &Centroids) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.rows().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn assign(points: &[Vec<f64>], centroids: &Centroids) -> Vec<usize> {
    points.iter().map(|p| nearest(p, centroids).0).collect()
}

/// `Σ ‖x_i − m_{s_i}‖²`, summed in point order.
pub fn cost(points: &[Vec<f64>], centroids: &Centroids, assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &s)| sq_dist(p, centroids.row(s)))
        .sum()
}

fn check_points(points: &[Vec<f64>], dim: Option<usize>) -> Result<usize> {
    let d = dim.or_else(|| points.first().map(Vec::len)).unwrap_or(0);
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::InvalidShape(
            "points must be non-empty with a common positive dimension".into(),
        ));
    }
    Ok(d)
}

/// k-means++ (D²) seeding.
pub fn kmeans_pp_seed(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Centroids> {
    let dim = check_points(points, None)?;
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    let mut rng = seed::rng(seed);
    let mut chosen: Vec<usize> = vec![rng.random_range(0..points.len())];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p, &points[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateData(format!(
                "only {} distinct points for k={k}",
                chosen.len()
            )));
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 {
                pick = Some(i);
                if target < w {
                    break;
                }
                target -= w;
            }
        }
        let next = pick.expect("positive total weight");
        chosen.push(next);
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, &points[next]));
        }
    }
    let data = chosen.iter().flat_map(|&i| points[i].iter().copied()).collect();
    Centroids::new(k, dim, data)
}

/// Mean of each cluster. An empty cluster takes the point farthest from its
/// current centroid (from a cluster with at least two members), which keeps
/// `k` constant. `assignment` is updated for stolen points.
pub fn update_means(
    points: &[Vec<f64>],
    centroids: &Centroids,
    assignment: &mut [usize],
) -> Centroids {
    let (k, dim) = (centroids.k(), centroids.dim());
    loop {
        let mut sizes = vec![0usize; k];
        for &s in assignment.iter() {
            sizes[s] += 1;
        }
        let Some(empty) = sizes.iter().position(|&n| n == 0) else {
            break;
        };
        let mut far: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let s = assignment[i];
            if sizes[s] < 2 {
                continue;
            }
            let d = sq_dist(p, centroids.row(s));
            if far.is_none_or(|(_, fd)| d > fd) {
                far = Some((i, d));
            }
        }
        match far {
            Some((i, _)) => assignment[i] = empty,
            // fewer points than clusters; nothing left to steal
            None => break,
        }
    }

    let mut sums = vec![0.0; k * dim];
    let mut sizes = vec![0usize; k];
    for (p, &s) in points.iter().zip(assignment.iter()) {
        sizes[s] += 1;
        for (acc, &v) in sums[s * dim..(s + 1) * dim].iter_mut().zip(p) {
            *acc += v;
        }
    }
    let mut out = centroids.clone();
    for j in 0..k {
        if sizes[j] > 0 {
            let n = sizes[j] as f64;
            for (m, &s) in out.row_mut(j).iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                *m = s / n;
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub centroids: Centroids,
    pub assignment: Vec<usize>,
    pub cost: f64,
    /// Cost after the initial assignment and after every accepted iteration.
    pub cost_history: Vec<f64>,
    pub iterations: usize,
}

/// Lloyd iterations from `init` until the assignment is a fixpoint, the
/// relative cost change drops below `tol`, or `max_iter` is reached.
pub fn lloyd(points: &[Vec<f64>], init: &Centroids, max_iter: usize, tol: f64) -> Result<KMeansFit> {
    check_points(points, Some(init.dim()))?;
    let mut centroids = init.clone();
    let mut assignment = assign(points, &centroids);
    let mut current = cost(points, &centroids, &assignment);
    let mut history = vec![current];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut next_assignment = assignment.clone();
        let next_centroids = update_means(points, &centroids, &mut next_assignment);
        let next_assignment = assign(points, &next_centroids);
        let next = cost(points, &next_centroids, &next_assignment);
        // Mean and argmin steps cannot increase the cost in exact arithmetic;
        // an increase here is rounding noise at a fixpoint.
        if next > current {
            break;
        }
        let changed = next_assignment != assignment;
        let rel_change = (current - next) / current.max(f64::MIN_POSITIVE);
        centroids = next_centroids;
        assignment = next_assignment;
        current = next;
        history.push(current);
        if !changed || rel_change < tol {
            break;
        }
    }
    Ok(KMeansFit {
        centroids,
        assignment,
        cost: current,
        cost_history: history,
        iterations,
    })
}
