use crate::diffcore::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascend,
    Descend,
}

/// Adam with the default setting (beta1 0.9, beta2 0.999, eps 1e-8) and
/// bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update in place; `Ascend` adds the step, `Descend` subtracts.
    pub fn step(&mut self, params: &mut Tensor, grad: &Tensor, lr: f64, direction: Direction) {
        assert_eq!(params.numel(), self.m.len(), "adam state shape");
        assert_eq!(grad.numel(), self.m.len(), "gradient shape");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let sign = match direction {
            Direction::Ascend => 1.0,
            Direction::Descend => -1.0,
        };
        for ((p, g), (m, v)) in params
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p += sign * lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_has_sign_structure() {
        // After bias correction the first update is lr * g / (|g| + eps).
        let mut adam = AdamState::new(3);
        let mut params = Tensor::zeros([3]);
        let grad = Tensor::vector(&[0.5, -2.0, 1e-12]);
        adam.step(&mut params, &grad, 0.1, Direction::Ascend);
        for (p, g) in params.data().iter().zip(grad.data()) {
            let expected = 0.1 * g / (g.abs() + 1e-8);
            assert!((p - expected).abs() < 1e-12, "{p} vs {expected}");
        }
        assert!(params.data()[1] < 0.0);
    }

    #[test]
    fn zero_gradient_from_init_means_zero_update() {
        let mut adam = AdamState::new(2);
        let mut params = Tensor::vector(&[1.0, -1.0]);
        adam.step(&mut params, &Tensor::zeros([2]), 0.1, Direction::Ascend);
        assert_eq!(params.data(), &[1.0, -1.0]);
    }

    #[test]
    fn two_instances_agree() {
        let mut a = AdamState::new(2);
        let mut b = AdamState::new(2);
        let mut pa = Tensor::vector(&[0.3, 0.7]);
        let mut pb = pa.clone();
        for i in 0..10 {
            let g = Tensor::vector(&[(i as f64).sin(), (i as f64).cos()]);
            a.step(&mut pa, &g, 0.05, Direction::Descend);
            b.step(&mut pb, &g, 0.05, Direction::Descend);
        }
        assert_eq!(pa, pb);
    }
}
