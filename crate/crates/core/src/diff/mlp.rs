use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{sigmoid, Tape, Var};
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => libm::tanh(x),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    fn record(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

/// One affine map followed by an activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `in x out`.
    pub weight: Tensor,
    /// `1 x out`.
    pub bias: Tensor,
    pub activation: Activation,
}

impl Layer {
    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = libm::sqrt(6.0 / (inputs + outputs) as f64);
        let data = (0..inputs * outputs).map(|_| rng.gen_range(-limit..limit)).collect();
        Self {
            weight: Tensor::from_vec(inputs, outputs, data),
            bias: Tensor::zeros(1, outputs),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }
}

/// A chain of [`Layer`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// `widths = [in, h1, ..., out]`; every layer but the last uses `hidden`,
    /// the last uses `output`.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "an MLP needs an input and an output width");
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Layer::init(w[0], w[1], if i == last { output } else { hidden }, rng))
            .collect();
        Self { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, Layer::inputs)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, Layer::outputs)
    }

    /// Layers chain and every parameter is finite.
    pub fn is_valid(&self) -> bool {
        self.layers.windows(2).all(|w| w[0].outputs() == w[1].inputs())
            && self.layers.iter().all(|l| {
                l.bias.shape() == [1, l.outputs()] && l.weight.is_finite() && l.bias.is_finite()
            })
    }

    /// Plain evaluation without recording.
    pub fn forward(&self, input: &Tensor) -> Tensor {
        let mut x = input.clone();
        for layer in &self.layers {
            let mut out = Tensor::zeros(x.rows(), layer.outputs());
            for r in 0..out.rows() {
                out.row_slice_mut(r).copy_from_slice(layer.bias.data());
            }
            out.gemm_into(&x, false, &layer.weight, false, 1.0, 1.0);
            let act = layer.activation;
            x = out.map(|v| act.apply(v));
        }
        x
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    /// Records the forward pass using already-registered parameter vars
    /// (`weight, bias` per layer, in order).
    pub fn record(&self, tape: &mut Tape, input: Var, params: &[Var]) -> Var {
        assert_eq!(params.len(), 2 * self.layers.len(), "parameter var count");
        let mut x = input;
        for (layer, p) in self.layers.iter().zip(params.chunks(2)) {
            let a = tape.affine(x, p[0], p[1]);
            x = layer.activation.record(tape, a);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_weights_give_bias() {
        let mut rng = crate::rng::seeded(0);
        let mut p = MlpParams::init(&[3, 2], Activation::Tanh, Activation::Identity, &mut rng);
        p.layers[0].weight = Tensor::zeros(3, 2);
        p.layers[0].bias = Tensor::row(vec![0.25, -1.0]);
        let out = p.forward(&Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        assert_eq!(out.data(), &[0.25, -1.0, 0.25, -1.0]);
    }

    #[test]
    fn identity_layer() {
        let mut rng = crate::rng::seeded(0);
        let mut p = MlpParams::init(&[3, 3], Activation::Tanh, Activation::Identity, &mut rng);
        p.layers[0].weight = Tensor::identity(3);
        let x = Tensor::from_vec(1, 3, vec![0.1, -0.2, 0.3]);
        assert_eq!(p.forward(&x), x);
    }

    #[test]
    fn three_layer_matches_straight_line_evaluation() {
        let mut rng = crate::rng::seeded(9);
        let p = MlpParams::init(&[2, 3, 3, 1], Activation::Tanh, Activation::Sigmoid, &mut rng);
        for l in &p.layers {
            assert!(l.weight.is_finite());
        }
        let x = [0.3, -0.7];
        // hand-rolled evaluation, one scalar at a time
        let mut h: Vec<f64> = x.to_vec();
        for (li, layer) in p.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.outputs()];
            for (j, out) in next.iter_mut().enumerate() {
                let mut s = layer.bias.get(0, j);
                for (i, hi) in h.iter().enumerate() {
                    s += hi * layer.weight.get(i, j);
                }
                *out = if li == 2 { 1.0 / (1.0 + libm::exp(-s)) } else { libm::tanh(s) };
            }
            h = next;
        }
        let got = p.forward(&Tensor::row(x.to_vec()));
        assert!((got.item() - h[0]).abs() < 1e-14);

        let mut tape = Tape::new();
        let vars: Vec<Var> = p.tensors().map(|t| tape.constant(t.clone())).collect();
        let input = tape.constant(Tensor::row(x.to_vec()));
        let out = p.record(&mut tape, input, &vars);
        assert!((tape.value(out).item() - h[0]).abs() < 1e-14);
    }
}
