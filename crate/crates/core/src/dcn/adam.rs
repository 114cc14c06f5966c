use crate::net::AutoencoderParams;
use crate::tensor::Tensor;

/// Adam with bias correction over every parameter tensor.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    step: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(params: &AutoencoderParams<f32>, learning_rate: f32) -> Self {
        let zeros: Vec<Vec<f32>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut AutoencoderParams<f32>, grads: &[Tensor<f32>]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let lr = self.learning_rate;
        for (((p, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params, Architecture};

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut p: AutoencoderParams<f32> = init_params(Architecture::TWIN, 1).unwrap();
        let before = p.clone();
        let grads: Vec<Tensor<f32>> = p.tensors().iter().map(|t| t.map(|_| 0.3)).collect();
        let mut adam = Adam::new(&p, 0.0);
        adam.step(&mut p, &grads);
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p: AutoencoderParams<f32> = init_params(Architecture::TWIN, 1).unwrap();
        let before = p.to_flat();
        let grads: Vec<Tensor<f32>> = p.tensors().iter().map(|t| t.map(|_| 2.0)).collect();
        Adam::new(&p, 0.01).step(&mut p, &grads);
        for (a, b) in p.to_flat().iter().zip(before) {
            assert!((b - a - 0.01).abs() < 1e-6);
        }
    }
}
