use crate::diffcore::{Node, Rng, Tensor};

use super::{check_params, ModelError};

/// Fully-connected network with tanh hidden activations and a linear
/// output layer.
///
/// Flat parameter layout, per layer in order: row-major `W` (`in x out`)
/// followed by the bias (`out`). Smooth activations keep second
/// derivatives defined everywhere, which the unrolled machinery needs.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    dims: Vec<usize>,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input);
        dims.extend_from_slice(hidden);
        dims.push(output);
        Self { dims }
    }

    pub fn input_dim(&self) -> usize {
        *self.dims.first().expect("at least two dims")
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("at least two dims")
    }

    pub fn param_count(&self) -> usize {
        self.dims
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Xavier-uniform weights (`U(-a, a)`, `a = sqrt(6 / (fan_in +
    /// fan_out))`), zero biases.
    pub fn init(&self, rng: &mut Rng) -> Tensor {
        let mut data = Vec::with_capacity(self.param_count());
        for w in self.dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                data.push(rng.uniform(-a, a));
            }
            data.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Tensor::from_vec(vec![data.len()], data).expect("init length")
    }

    /// Forward pass of an `[n, input]` batch through parameters sliced from
    /// the flat node.
    pub fn forward(&self, flat: &Node, x: &Node) -> Result<Node, ModelError> {
        check_params("mlp", flat, self.param_count())?;
        let n = x.shape()[0];
        let mut h = x.clone();
        let mut offset = 0;
        let last = self.dims.len() - 2;
        for (layer, w) in self.dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weight = flat
                .slice(0, offset, offset + fan_in * fan_out)
                .reshape([fan_in, fan_out]);
            offset += fan_in * fan_out;
            let bias = flat.slice(0, offset, offset + fan_out);
            offset += fan_out;
            h = h.try_matmul(&weight)?;
            h = &h + &bias.broadcast([n, fan_out]);
            if layer < last {
                h = h.tanh();
            }
        }
        Ok(h)
    }
}
