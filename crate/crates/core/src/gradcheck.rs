//! Central finite-difference checks of analytic gradients, and the suite
//! that runs them over every layer kernel and the downsized autoencoder.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::kmeans::Centroids;
use crate::net::{self, Architecture, AutoencoderParams};
use crate::seed;
use crate::tensor::{self, Tensor};

pub const EPSILON: f64 = 1e-3;
pub const ABS_TOL: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;

/// Per-coordinate deviations between analytic and numeric derivatives.
#[derive(Clone, Debug, Default)]
pub struct Deviation {
    pub max_abs: f64,
    pub max_rel: f64,
    pub checked: usize,
    /// Coordinates left out because the probe crossed a non-smooth point.
    pub skipped: usize,
    per_coord: Vec<(f64, f64)>,
}

impl Deviation {
    /// True when every coordinate is within `abs_tol` absolute or `rel_tol`
    /// relative deviation, whichever is looser.
    pub fn passes(&self, abs_tol: f64, rel_tol: f64) -> bool {
        self.per_coord
            .iter()
            .all(|&(a, r)| a <= abs_tol || r <= rel_tol)
    }

    fn record(&mut self, analytic: f64, numeric: f64) {
        let abs = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs());
        let rel = if scale > 0.0 { abs / scale } else { 0.0 };
        self.max_abs = self.max_abs.max(abs);
        self.max_rel = self.max_rel.max(rel);
        self.checked += 1;
        self.per_coord.push((abs, rel));
    }
}

/// Compares `analytic` against central differences of `f` at `point`.
pub fn finite_diff_check<F>(f: F, point: &[f64], analytic: &[f64], epsilon: f64) -> Deviation
where
    F: FnMut(&[f64]) -> f64,
{
    finite_diff_check_where(f, point, analytic, epsilon, |_, _, _| true)
}

/// As [`finite_diff_check`], probing only coordinates for which
/// `smooth(i, x_plus, x_minus)` holds.
pub fn finite_diff_check_where<F, S>(
    mut f: F,
    point: &[f64],
    analytic: &[f64],
    epsilon: f64,
    mut smooth: S,
) -> Deviation
where
    F: FnMut(&[f64]) -> f64,
    S: FnMut(usize, &[f64], &[f64]) -> bool,
{
    assert_eq!(point.len(), analytic.len(), "gradient length mismatch");
    let mut dev = Deviation::default();
    let mut plus = point.to_vec();
    let mut minus = point.to_vec();
    for i in 0..point.len() {
        plus[i] = point[i] + epsilon;
        minus[i] = point[i] - epsilon;
        if smooth(i, &plus, &minus) {
            let numeric = (f(&plus) - f(&minus)) / (2.0 * epsilon);
            dev.record(analytic[i], numeric);
        } else {
            dev.skipped += 1;
        }
        plus[i] = point[i];
        minus[i] = point[i];
    }
    dev
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub seed: u64,
    pub deviation: Deviation,
    pub passed: bool,
}

fn uniform(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data).expect("consistent shape")
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Values at least `gap` from zero, for probing ReLU away from its kink.
fn away_from_zero(n: usize, gap: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = rng.random_range(gap..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect()
}

/// 2×2 blocks whose entries differ pairwise by more than `gap`, so probes of
/// size epsilon never change the pooling winner.
fn untied_pool_input(c: usize, h: usize, w: usize, gap: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut data = uniform(c * h * w, -1.0, 1.0, rng);
    for ci in 0..c {
        for by in 0..h / 2 {
            for bx in 0..w / 2 {
                let idx = |dy: usize, dx: usize| ci * h * w + (2 * by + dy) * w + 2 * bx + dx;
                loop {
                    let vals: Vec<f64> = [(0, 0), (0, 1), (1, 0), (1, 1)]
                        .iter()
                        .map(|&(dy, dx)| data[idx(dy, dx)])
                        .collect();
                    let tied = (0..4).any(|a| (a + 1..4).any(|b| (vals[a] - vals[b]).abs() <= gap));
                    if !tied {
                        break;
                    }
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        data[idx(dy, dx)] = rng.random_range(-1.0..1.0);
                    }
                }
            }
        }
    }
    data
}

fn check(name: &str, seed: u64, deviation: Deviation) -> CheckResult {
    let passed = deviation.checked > 0 && deviation.passes(ABS_TOL, REL_TOL);
    CheckResult {
        name: name.to_string(),
        seed,
        deviation,
        passed,
    }
}

fn conv_checks(seed: u64, rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let (ci, co, h, w) = (2, 3, 5, 4);
    let x = tensor(&[ci, h, w], uniform(ci * h * w, -1.0, 1.0, rng));
    let k = tensor(&[co, ci, 3, 3], uniform(co * ci * 9, -1.0, 1.0, rng));
    let b = tensor(&[co], uniform(co, -1.0, 1.0, rng));
    let r = tensor(&[co, h, w], uniform(co * h * w, -1.0, 1.0, rng));
    let g = tensor::conv2d_backward(&x, &k, &r).expect("valid shapes");
    let loss = |x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>| {
        dot(&tensor::conv2d(x, k, b).expect("valid shapes"), &r)
    };
    vec![
        check(
            "conv2d/input",
            seed,
            finite_diff_check(|p| loss(&tensor(&[ci, h, w], p.to_vec()), &k, &b), x.data(), g.d_input.data(), EPSILON),
        ),
        check(
            "conv2d/kernels",
            seed,
            finite_diff_check(
                |p| loss(&x, &tensor(&[co, ci, 3, 3], p.to_vec()), &b),
                k.data(),
                g.d_params[0].data(),
                EPSILON,
            ),
        ),
        check(
            "conv2d/bias",
            seed,
            finite_diff_check(|p| loss(&x, &k, &tensor(&[co], p.to_vec())), b.data(), g.d_params[1].data(), EPSILON),
        ),
    ]
}

fn pool_check(seed: u64, rng: &mut ChaCha8Rng) -> CheckResult {
    let x = tensor(&[2, 4, 4], untied_pool_input(2, 4, 4, 4.0 * EPSILON, rng));
    let r = tensor(&[2, 2, 2], uniform(8, -1.0, 1.0, rng));
    let (_, argmax) = tensor::maxpool2(&x).expect("even extents");
    let d = tensor::maxpool2_backward(x.shape(), &argmax, &r).expect("valid");
    let dev = finite_diff_check(
        |p| dot(&tensor::maxpool2(&tensor(&[2, 4, 4], p.to_vec())).expect("even").0, &r),
        x.data(),
        d.data(),
        EPSILON,
    );
    check("maxpool2", seed, dev)
}

fn upsample_check(seed: u64, rng: &mut ChaCha8Rng) -> CheckResult {
    let x = tensor(&[1, 3, 3], uniform(9, -1.0, 1.0, rng));
    let r = tensor(&[1, 6, 6], uniform(36, -1.0, 1.0, rng));
    let d = tensor::upsample2_backward(&r).expect("even");
    let dev = finite_diff_check(
        |p| dot(&tensor::upsample2(&tensor(&[1, 3, 3], p.to_vec())).expect("valid"), &r),
        x.data(),
        d.data(),
        EPSILON,
    );
    check("upsample2", seed, dev)
}

fn dense_checks(seed: u64, rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let (n, m) = (4, 3);
    let x = tensor(&[n], uniform(n, -1.0, 1.0, rng));
    let w = tensor(&[m, n], uniform(m * n, -1.0, 1.0, rng));
    let b = tensor(&[m], uniform(m, -1.0, 1.0, rng));
    let r = tensor(&[m], uniform(m, -1.0, 1.0, rng));
    let g = tensor::dense_backward(&x, &w, &r).expect("valid");
    let loss = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| dot(&tensor::dense(x, w, b).expect("valid"), &r);
    vec![
        check(
            "dense/input",
            seed,
            finite_diff_check(|p| loss(&tensor(&[n], p.to_vec()), &w, &b), x.data(), g.d_input.data(), EPSILON),
        ),
        check(
            "dense/weights",
            seed,
            finite_diff_check(|p| loss(&x, &tensor(&[m, n], p.to_vec()), &b), w.data(), g.d_params[0].data(), EPSILON),
        ),
        check(
            "dense/bias",
            seed,
            finite_diff_check(|p| loss(&x, &w, &tensor(&[m], p.to_vec())), b.data(), g.d_params[1].data(), EPSILON),
        ),
    ]
}

fn activation_checks(seed: u64, rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let n = 12;
    let r = tensor(&[n], uniform(n, -1.0, 1.0, rng));
    let x = tensor(&[n], away_from_zero(n, 0.1, rng));
    let d = tensor::relu_backward(&tensor::relu(&x), &r).expect("same shape");
    let relu = finite_diff_check(|p| dot(&tensor::relu(&tensor(&[n], p.to_vec())), &r), x.data(), d.data(), EPSILON);

    let x = tensor(&[n], uniform(n, -3.0, 3.0, rng));
    let d = tensor::sigmoid_backward(&tensor::sigmoid(&x), &r).expect("same shape");
    let sig = finite_diff_check(|p| dot(&tensor::sigmoid(&tensor(&[n], p.to_vec())), &r), x.data(), d.data(), EPSILON);
    vec![check("relu", seed, relu), check("sigmoid", seed, sig)]
}

fn mse_check(seed: u64, rng: &mut ChaCha8Rng) -> CheckResult {
    let n = 10;
    let p = tensor(&[n], uniform(n, -1.0, 1.0, rng));
    let t = tensor(&[n], uniform(n, -1.0, 1.0, rng));
    let g = tensor::mse_grad(&p, &t).expect("same shape");
    let dev = finite_diff_check(|v| tensor::mse(&tensor(&[n], v.to_vec()), &t).expect("same shape"), p.data(), g.data(), EPSILON);
    check("mse", seed, dev)
}

/// Whole-network check on the downsized twin: loss is the Eq.-style
/// objective `mse(g(f(x)), x) + lambda·‖f(x) − m‖²` over two inputs,
/// differentiated with respect to every parameter.
fn twin_check(seed: u64, rng: &mut ChaCha8Rng) -> CheckResult {
    let arch = Architecture::TWIN;
    let params: AutoencoderParams<f64> = net::init_params(arch, seed::derive(seed, 1)).expect("valid arch");
    let mut params = params;
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    let px = arch.input_px;
    let batch: Vec<Tensor<f64>> = (0..2)
        .map(|_| tensor(&[1, px, px], uniform(px * px, 0.0, 1.0, rng)))
        .collect();
    let refs: Vec<&Tensor<f64>> = batch.iter().collect();
    let centroids = Centroids::new(2, arch.latent, uniform(2 * arch.latent, -1.0, 1.0, rng)).expect("shape");
    let assignments = [0usize, 1];
    let lambda = 0.3;

    let lg = net::forward_loss_grad(&params, &refs, &centroids, &assignments, lambda).expect("valid");
    let analytic: Vec<f64> = lg.grads.iter().flat_map(|g| g.data().iter().copied()).collect();
    let point = params.to_flat();
    let loss = |flat: &[f64]| {
        let p = AutoencoderParams::from_flat(arch, flat).expect("length");
        net::forward_loss_grad(&p, &refs, &centroids, &assignments, lambda)
            .expect("valid")
            .loss
    };
    let pattern = |flat: &[f64]| -> Vec<Vec<usize>> {
        let p = AutoencoderParams::from_flat(arch, flat).expect("length");
        batch
            .iter()
            .map(|x| net::forward_trace(&p, x).expect("valid").pattern())
            .collect()
    };
    let base = pattern(&point);
    let dev = finite_diff_check_where(loss, &point, &analytic, EPSILON, |_, plus, minus| {
        pattern(plus) == base && pattern(minus) == base
    });
    check("autoencoder/twin", seed, dev)
}

/// Runs every layer check and the twin autoencoder check for each seed.
pub fn run_suite(seeds: &[u64]) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for &s in seeds {
        let mut rng = seed::rng(seed::derive(s, 0x6772_6164));
        out.extend(conv_checks(s, &mut rng));
        out.push(pool_check(s, &mut rng));
        out.push(upsample_check(s, &mut rng));
        out.extend(dense_checks(s, &mut rng));
        out.extend(activation_checks(s, &mut rng));
        out.push(mse_check(s, &mut rng));
        out.push(twin_check(s, &mut rng));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_is_exact() {
        let a = [0.5, -2.0, 3.0];
        let dev = finite_diff_check(
            |x| x.iter().zip(&a).map(|(x, a)| x * a).sum(),
            &[1.0, 2.0, -1.0],
            &a,
            EPSILON,
        );
        assert!(dev.max_abs < 1e-10, "{dev:?}");
    }

    #[test]
    fn mse_at_random_point() {
        let mut rng = seed::rng(17);
        let r = mse_check(17, &mut rng);
        assert!(r.deviation.max_abs <= 1e-8, "{:?}", r.deviation);
    }

    #[test]
    fn relu_away_from_kink() {
        let mut rng = seed::rng(5);
        let r = activation_checks(5, &mut rng);
        assert!(r[0].deviation.max_abs <= 1e-6);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let dev = finite_diff_check(|x| x[0] * x[0], &[1.0], &[3.0], EPSILON);
        assert!(!dev.passes(ABS_TOL, REL_TOL));
    }
}
