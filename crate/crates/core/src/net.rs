//! Convolutional autoencoder: encoder `f` (three conv/ReLU/pool stages and a
//! dense bridge into the latent space) and decoder `g` (dense bridge back,
//! then three upsample/conv stages ending in a sigmoid).

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kmeans::Centroids;
use crate::seed;
use crate::tensor::{self, Scalar, Tensor};

/// Layer widths of the autoencoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    /// Side of the square single-channel input.
    pub input_px: usize,
    /// Encoder feature maps per conv stage; the decoder mirrors them.
    pub channels: [usize; 3],
    pub latent: usize,
}

impl Architecture {
    /// 32×32 input, 50/20/10 feature maps, 20-dimensional latent space.
    pub const FULL: Architecture = Architecture {
        input_px: 32,
        channels: [50, 20, 10],
        latent: 20,
    };

    /// Downsized twin used for exhaustive gradient checks.
    pub const TWIN: Architecture = Architecture {
        input_px: 8,
        channels: [4, 3, 2],
        latent: 3,
    };

    pub fn name(&self) -> &'static str {
        if *self == Self::FULL {
            "dcn-v1"
        } else if *self == Self::TWIN {
            "dcn-twin-v1"
        } else {
            "dcn-custom"
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "dcn-v1" => Some(Self::FULL),
            "dcn-twin-v1" => Some(Self::TWIN),
            _ => None,
        }
    }

    /// Spatial side at the bottleneck after three 2×2 pools.
    pub fn bottleneck_px(&self) -> usize {
        self.input_px / 8
    }

    pub fn flat_len(&self) -> usize {
        self.channels[2] * self.bottleneck_px() * self.bottleneck_px()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_px < 8 || self.input_px % 8 != 0 {
            return Err(Error::Config(format!(
                "input side {} must be a positive multiple of 8",
                self.input_px
            )));
        }
        if self.channels.contains(&0) || self.latent == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Parameter shapes in storage order: encoder convs, encoder dense,
    /// decoder dense, decoder convs; weights before biases.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let [c0, c1, c2] = self.channels;
        let (flat, z) = (self.flat_len(), self.latent);
        vec![
            vec![c0, 1, 3, 3],
            vec![c0],
            vec![c1, c0, 3, 3],
            vec![c1],
            vec![c2, c1, 3, 3],
            vec![c2],
            vec![z, flat],
            vec![z],
            vec![flat, z],
            vec![flat],
            vec![c1, c2, 3, 3],
            vec![c1],
            vec![c0, c1, 3, 3],
            vec![c0],
            vec![1, c0, 3, 3],
            vec![1],
        ]
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }
}

const ENC_CONV: [usize; 3] = [0, 2, 4];
const ENC_DENSE: usize = 6;
const DEC_DENSE: usize = 8;
const DEC_CONV: [usize; 3] = [10, 12, 14];

/// Encoder and decoder parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderParams<T = f32> {
    arch: Architecture,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> AutoencoderParams<T> {
    pub fn zeros(arch: Architecture) -> Self {
        let tensors = arch.param_shapes().iter().map(|s| Tensor::zeros(s)).collect();
        Self { arch, tensors }
    }

    pub fn from_tensors(arch: Architecture, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let shapes = arch.param_shapes();
        if shapes.len() != tensors.len()
            || shapes.iter().zip(&tensors).any(|(s, t)| s[..] != *t.shape())
        {
            return Err(Error::InvalidShape(format!(
                "parameter tensors do not match architecture {}",
                arch.name()
            )));
        }
        Ok(Self { arch, tensors })
    }

    pub fn from_flat(arch: Architecture, flat: &[T]) -> Result<Self> {
        if flat.len() != arch.param_count() {
            return Err(Error::InvalidShape(format!(
                "{} parameters given, architecture needs {}",
                flat.len(),
                arch.param_count()
            )));
        }
        let mut rest = flat;
        let mut tensors = Vec::new();
        for shape in arch.param_shapes() {
            let n = shape.iter().product();
            let (head, tail) = rest.split_at(n);
            tensors.push(Tensor::new(shape, head.to_vec())?);
            rest = tail;
        }
        Ok(Self { arch, tensors })
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> AutoencoderParams<U> {
        AutoencoderParams {
            arch: self.arch,
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    fn w(&self, layer: usize) -> &Tensor<T> {
        &self.tensors[layer]
    }

    fn b(&self, layer: usize) -> &Tensor<T> {
        &self.tensors[layer + 1]
    }
}

/// He-normal weights (std `sqrt(2 / fan_in)`) and zero biases.
pub fn init_params<T: Scalar>(arch: Architecture, seed: u64) -> Result<AutoencoderParams<T>> {
    arch.validate()?;
    let mut rng = seed::rng(seed);
    let mut params = AutoencoderParams::zeros(arch);
    for (i, t) in params.tensors.iter_mut().enumerate() {
        if i % 2 == 1 {
            continue;
        }
        let fan_in: usize = t.shape()[1..].iter().product();
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
        for v in t.data_mut() {
            *v = T::from_f64(normal.sample(&mut rng));
        }
    }
    Ok(params)
}

struct EncStage<T> {
    input: Tensor<T>,
    act: Tensor<T>,
    argmax: Vec<usize>,
}

struct DecStage<T> {
    input: Tensor<T>,
    out: Tensor<T>,
}

/// Activations of one forward pass, kept for the backward pass.
pub struct Trace<T> {
    enc: Vec<EncStage<T>>,
    flat: Tensor<T>,
    latent: Tensor<T>,
    hidden: Tensor<T>,
    dec: Vec<DecStage<T>>,
    output: Tensor<T>,
}

impl<T: Scalar> Trace<T> {
    pub fn latent(&self) -> &[T] {
        self.latent.data()
    }

    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }

    /// Shapes of the pooled encoder activations, shallowest first.
    pub fn encoder_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes: Vec<_> = self.enc[1..]
            .iter()
            .map(|s| s.input.shape().to_vec())
            .collect();
        let [c2, b] = [self.arch_channels_last(), self.bottleneck()];
        shapes.push(vec![c2, b, b]);
        shapes
    }

    fn arch_channels_last(&self) -> usize {
        self.enc[2].act.shape()[0]
    }

    fn bottleneck(&self) -> usize {
        self.enc[2].act.shape()[1] / 2
    }

    /// ReLU on/off states and pooling winners; two inputs with equal patterns
    /// lie in the same smooth piece of the network.
    pub fn pattern(&self) -> Vec<usize> {
        let mut p = Vec::new();
        for s in &self.enc {
            p.extend(s.act.data().iter().map(|&v| usize::from(v > T::zero())));
            p.extend_from_slice(&s.argmax);
        }
        p.extend(self.hidden.data().iter().map(|&v| usize::from(v > T::zero())));
        for s in &self.dec[..2] {
            p.extend(s.out.data().iter().map(|&v| usize::from(v > T::zero())));
        }
        p
    }
}

fn check_input<T: Scalar>(arch: &Architecture, x: &Tensor<T>) -> Result<()> {
    let px = arch.input_px;
    if x.shape() != [1, px, px] {
        return Err(Error::InvalidShape(format!(
            "autoencoder input must be 1×{px}×{px}, got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

fn encode_stages<T: Scalar>(
    params: &AutoencoderParams<T>,
    x: &Tensor<T>,
) -> Result<(Vec<EncStage<T>>, Tensor<T>, Tensor<T>)> {
    check_input(&params.arch, x)?;
    let mut stages = Vec::with_capacity(3);
    let mut cur = x.clone();
    for &layer in &ENC_CONV {
        let act = tensor::relu(&tensor::conv2d(&cur, params.w(layer), params.b(layer))?);
        let (pooled, argmax) = tensor::maxpool2(&act)?;
        stages.push(EncStage {
            input: cur,
            act,
            argmax,
        });
        cur = pooled;
    }
    let flat = cur.reshape(&[params.arch.flat_len()])?;
    let latent = tensor::dense(&flat, params.w(ENC_DENSE), params.b(ENC_DENSE))?;
    Ok((stages, flat, latent))
}

fn decode_stages<T: Scalar>(
    params: &AutoencoderParams<T>,
    latent: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<DecStage<T>>, Tensor<T>)> {
    let arch = params.arch;
    if latent.shape() != [arch.latent] {
        return Err(Error::InvalidShape(format!(
            "latent code must have length {}, got {:?}",
            arch.latent,
            latent.shape()
        )));
    }
    let hidden = tensor::relu(&tensor::dense(
        latent,
        params.w(DEC_DENSE),
        params.b(DEC_DENSE),
    )?);
    let b = arch.bottleneck_px();
    let mut cur = hidden.clone().reshape(&[arch.channels[2], b, b])?;
    let mut stages = Vec::with_capacity(3);
    for (i, &layer) in DEC_CONV.iter().enumerate() {
        let input = tensor::upsample2(&cur)?;
        let pre = tensor::conv2d(&input, params.w(layer), params.b(layer))?;
        let out = if i == 2 {
            tensor::sigmoid(&pre)
        } else {
            tensor::relu(&pre)
        };
        cur = out.clone();
        stages.push(DecStage { input, out });
    }
    Ok((hidden, stages, cur))
}

/// Full forward pass, keeping activations.
pub fn forward_trace<T: Scalar>(params: &AutoencoderParams<T>, x: &Tensor<T>) -> Result<Trace<T>> {
    let (enc, flat, latent) = encode_stages(params, x)?;
    let (hidden, dec, output) = decode_stages(params, &latent)?;
    Ok(Trace {
        enc,
        flat,
        latent,
        hidden,
        dec,
        output,
    })
}

/// Encoder `f`: patch → latent code.
pub fn encode<T: Scalar>(params: &AutoencoderParams<T>, patch: &Tensor<T>) -> Result<Vec<T>> {
    let (_, _, latent) = encode_stages(params, patch)?;
    Ok(latent.into_data())
}

/// Decoder `g`: latent code → 1×px×px reconstruction in (0, 1).
pub fn decode<T: Scalar>(params: &AutoencoderParams<T>, code: &[T]) -> Result<Tensor<T>> {
    let latent = Tensor::new(vec![code.len()], code.to_vec())?;
    let (_, _, out) = decode_stages(params, &latent)?;
    Ok(out)
}

pub fn reconstruct<T: Scalar>(params: &AutoencoderParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(forward_trace(params, x)?.output)
}

/// Backpropagates an output gradient (and an optional extra latent
/// gradient) through a recorded pass.
pub fn backward<T: Scalar>(
    params: &AutoencoderParams<T>,
    trace: &Trace<T>,
    d_output: &Tensor<T>,
    d_latent: Option<&[T]>,
) -> Result<Vec<Tensor<T>>> {
    let arch = params.arch;
    let mut grads: Vec<Option<Tensor<T>>> = vec![None; params.tensors.len()];

    let mut g = d_output.clone();
    for (i, &layer) in DEC_CONV.iter().enumerate().rev() {
        let stage = &trace.dec[i];
        let g_pre = if i == 2 {
            tensor::sigmoid_backward(&stage.out, &g)?
        } else {
            tensor::relu_backward(&stage.out, &g)?
        };
        let lg = tensor::conv2d_backward(&stage.input, params.w(layer), &g_pre)?;
        let mut dp = lg.d_params.into_iter();
        grads[layer] = dp.next();
        grads[layer + 1] = dp.next();
        g = tensor::upsample2_backward(&lg.d_input)?;
    }

    let g_hidden = tensor::relu_backward(&trace.hidden, &g.reshape(&[arch.flat_len()])?)?;
    let lg = tensor::dense_backward(&trace.latent, params.w(DEC_DENSE), &g_hidden)?;
    let mut dp = lg.d_params.into_iter();
    grads[DEC_DENSE] = dp.next();
    grads[DEC_DENSE + 1] = dp.next();

    let mut g_z = lg.d_input;
    if let Some(extra) = d_latent {
        if extra.len() != g_z.len() {
            return Err(Error::InvalidShape(format!(
                "latent gradient length {} for latent size {}",
                extra.len(),
                g_z.len()
            )));
        }
        for (g, &e) in g_z.data_mut().iter_mut().zip(extra) {
            *g = *g + e;
        }
    }
    let lg = tensor::dense_backward(&trace.flat, params.w(ENC_DENSE), &g_z)?;
    let mut dp = lg.d_params.into_iter();
    grads[ENC_DENSE] = dp.next();
    grads[ENC_DENSE + 1] = dp.next();

    let b = arch.bottleneck_px();
    let mut g = lg.d_input.reshape(&[arch.channels[2], b, b])?;
    for (i, &layer) in ENC_CONV.iter().enumerate().rev() {
        let stage = &trace.enc[i];
        let g_act = tensor::maxpool2_backward(stage.act.shape(), &stage.argmax, &g)?;
        let g_pre = tensor::relu_backward(&stage.act, &g_act)?;
        if i == 0 {
            let (dk, db) = tensor::conv2d_backward_params(&stage.input, params.w(layer), &g_pre)?;
            grads[layer] = Some(dk);
            grads[layer + 1] = Some(db);
        } else {
            let lg = tensor::conv2d_backward(&stage.input, params.w(layer), &g_pre)?;
            let mut dp = lg.d_params.into_iter();
            grads[layer] = dp.next();
            grads[layer + 1] = dp.next();
            g = lg.d_input;
        }
    }
    Ok(grads
        .into_iter()
        .map(|g| g.expect("every layer visited"))
        .collect())
}

/// Loss terms and parameter gradients of one mini-batch.
#[derive(Clone, Debug)]
pub struct LossGrad<T> {
    /// Batch mean of `recon + lambda · cluster`.
    pub loss: f64,
    /// Batch mean of the reconstruction mse.
    pub recon: f64,
    /// Batch mean of the squared latent distance to the assigned centroid.
    pub cluster: f64,
    pub grads: Vec<Tensor<T>>,
}

struct Partial<T> {
    recon: f64,
    cluster: f64,
    grads: Vec<Tensor<T>>,
}

/// Samples per work unit; partial sums are combined in unit order, so the
/// result does not depend on the thread count.
const CHUNK: usize = 8;

fn sample_loss_grad<T: Scalar>(
    params: &AutoencoderParams<T>,
    x: &Tensor<T>,
    target: Option<&[f64]>,
    lambda: f64,
) -> Result<Partial<T>> {
    let trace = forward_trace(params, x)?;
    let recon = tensor::mse(&trace.output, x)?.as_f64();
    let d_out = tensor::mse_grad(&trace.output, x)?;
    let (cluster, d_latent) = match target {
        Some(m) => {
            let z = trace.latent.data();
            let cluster: f64 = z
                .iter()
                .zip(m)
                .map(|(&zv, &mv)| (zv.as_f64() - mv).powi(2))
                .sum();
            let d: Vec<T> = z
                .iter()
                .zip(m)
                .map(|(&zv, &mv)| T::from_f64(2.0 * lambda * (zv.as_f64() - mv)))
                .collect();
            (cluster, Some(d))
        }
        None => (0.0, None),
    };
    let grads = backward(params, &trace, &d_out, d_latent.as_deref())?;
    Ok(Partial {
        recon,
        cluster,
        grads,
    })
}

fn accumulate<T: Scalar>(into: &mut Partial<T>, other: Partial<T>) {
    into.recon += other.recon;
    into.cluster += other.cluster;
    for (a, b) in into.grads.iter_mut().zip(other.grads) {
        for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
            *x = *x + *y;
        }
    }
}

pub(crate) fn batch_loss_grad<T: Scalar>(
    params: &AutoencoderParams<T>,
    batch: &[&Tensor<T>],
    targets: Option<&[&[f64]]>,
    lambda: f64,
) -> Result<LossGrad<T>> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be ≥ 0, got {lambda}")));
    }
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let chunks: Vec<Partial<T>> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut acc: Option<Partial<T>> = None;
            for (j, x) in chunk.iter().enumerate() {
                let target = targets.map(|t| t[ci * CHUNK + j]);
                let p = sample_loss_grad(params, x, target, lambda)?;
                match acc.as_mut() {
                    Some(a) => accumulate(a, p),
                    None => acc = Some(p),
                }
            }
            Ok(acc.expect("chunks are non-empty"))
        })
        .collect::<Result<_>>()?;

    let mut iter = chunks.into_iter();
    let mut total = iter.next().expect("non-empty batch");
    for p in iter {
        accumulate(&mut total, p);
    }
    let n = batch.len() as f64;
    let scale = T::from_f64(1.0 / n);
    for g in &mut total.grads {
        for v in g.data_mut() {
            *v = *v * scale;
        }
    }
    let recon = total.recon / n;
    let cluster = total.cluster / n;
    Ok(LossGrad {
        loss: recon + lambda * cluster,
        recon,
        cluster,
        grads: total.grads,
    })
}

/// Mini-batch objective: mean over the batch of
/// `mse(g(f(x)), x) + lambda · ‖f(x) − m_s‖²`, with gradients for every
/// encoder and decoder parameter. Centroids are held constant.
pub fn forward_loss_grad<T: Scalar>(
    params: &AutoencoderParams<T>,
    batch: &[&Tensor<T>],
    centroids: &Centroids,
    assignments: &[usize],
    lambda: f64,
) -> Result<LossGrad<T>> {
    if assignments.len() != batch.len() {
        return Err(Error::Input(format!(
            "{} assignments for {} patches",
            assignments.len(),
            batch.len()
        )));
    }
    if centroids.dim() != params.arch.latent {
        return Err(Error::InvalidShape(format!(
            "centroid dimension {} for latent size {}",
            centroids.dim(),
            params.arch.latent
        )));
    }
    let targets = assignments
        .iter()
        .map(|&s| {
            (s < centroids.k()).then(|| centroids.row(s)).ok_or_else(|| {
                Error::Input(format!("assignment {s} out of range for {} clusters", centroids.k()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    batch_loss_grad(params, batch, Some(&targets), lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_param_count() {
        assert_eq!(Architecture::FULL.param_count(), 29_231);
        let per_layer: Vec<usize> = Architecture::FULL
            .param_shapes()
            .chunks(2)
            .map(|wb| wb.iter().map(|s| s.iter().product::<usize>()).sum())
            .collect();
        assert_eq!(per_layer, vec![500, 9020, 1810, 3220, 3360, 1820, 9050, 451]);
    }

    #[test]
    fn init_is_seeded_with_zero_bias() {
        let a: AutoencoderParams<f32> = init_params(Architecture::FULL, 5).unwrap();
        let b: AutoencoderParams<f32> = init_params(Architecture::FULL, 5).unwrap();
        let c: AutoencoderParams<f32> = init_params(Architecture::FULL, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (i, t) in a.tensors().iter().enumerate() {
            if i % 2 == 1 {
                assert!(t.data().iter().all(|&v| v == 0.0));
            }
        }
        assert_eq!(a.param_count(), 29_231);
    }

    #[test]
    fn encoder_shape_ladder() {
        let p: AutoencoderParams<f32> = init_params(Architecture::FULL, 1).unwrap();
        let x = Tensor::filled(&[1, 32, 32], 0.3f32);
        let trace = forward_trace(&p, &x).unwrap();
        assert_eq!(
            trace.encoder_shapes(),
            vec![vec![50, 16, 16], vec![20, 8, 8], vec![10, 4, 4]]
        );
        assert_eq!(trace.latent().len(), 20);
        assert_eq!(trace.output().shape(), &[1, 32, 32]);
    }

    #[test]
    fn zero_patch_zero_bias_encodes_to_zero() {
        let p: AutoencoderParams<f32> = init_params(Architecture::FULL, 2).unwrap();
        let z = encode(&p, &Tensor::zeros(&[1, 32, 32])).unwrap();
        assert_eq!(z, vec![0.0; 20]);
    }

    #[test]
    fn zero_code_decodes_to_half() {
        let p: AutoencoderParams<f32> = init_params(Architecture::FULL, 3).unwrap();
        let y = decode(&p, &[0.0; 20]).unwrap();
        assert_eq!(y.shape(), &[1, 32, 32]);
        assert!(y.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn shape_errors() {
        let p: AutoencoderParams<f32> = init_params(Architecture::FULL, 3).unwrap();
        assert!(matches!(
            encode(&p, &Tensor::zeros(&[1, 16, 16])),
            Err(Error::InvalidShape(_))
        ));
        assert!(matches!(decode(&p, &[0.0; 19]), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn flat_round_trip() {
        let p: AutoencoderParams<f64> = init_params(Architecture::TWIN, 9).unwrap();
        let q = AutoencoderParams::from_flat(Architecture::TWIN, &p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(AutoencoderParams::<f64>::from_flat(Architecture::TWIN, &[0.0; 3]).is_err());
    }

    #[test]
    fn decoder_output_in_unit_interval() {
        let p: AutoencoderParams<f32> = init_params(Architecture::FULL, 4).unwrap();
        let y = decode(&p, &[3.0; 20]).unwrap();
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
