use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{exp, sigmoid, sqrt};

/// Fully connected layer, `weights` row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn check(&self) -> Result<()> {
        if self.weights.len() != self.inputs * self.outputs {
            return Err(Error::DimensionMismatch {
                what: "layer weights",
                expected: self.inputs * self.outputs,
                got: self.weights.len(),
            });
        }
        if self.bias.len() != self.outputs {
            return Err(Error::DimensionMismatch {
                what: "layer bias",
                expected: self.outputs,
                got: self.bias.len(),
            });
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("decoder weights"));
        }
        Ok(())
    }

    fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.bias))
        {
            *o = b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
        }
    }
}

/// Small MLP: ReLU between layers, raw outputs after the last one. Outputs
/// 0..3 are color logits, output 3 (if present) is the log-density.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderWeights {
    layers: Vec<DenseLayer>,
}

/// Per-layer activations of one forward pass; `activations[0]` is the
/// input and the last entry holds the raw outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderTrace {
    pub activations: Vec<Vec<f64>>,
}

impl DecoderTrace {
    pub fn outputs(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl DecoderWeights {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("decoder needs at least one layer"));
        }
        for l in &layers {
            l.check()?;
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::DimensionMismatch {
                    what: "decoder layer chain",
                    expected: pair[0].outputs,
                    got: pair[1].inputs,
                });
            }
        }
        let out = layers.last().map(|l| l.outputs).unwrap_or(0);
        if out < 3 {
            return Err(Error::config("decoder must produce at least 3 outputs"));
        }
        Ok(DecoderWeights { layers })
    }

    fn shape(input: usize, hidden: &[usize], output: usize) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input);
        dims.extend_from_slice(hidden);
        dims.push(output);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn zeros(input: usize, hidden: &[usize], output: usize) -> Result<Self> {
        Self::new(
            Self::shape(input, hidden, output)
                .into_iter()
                .map(|(i, o)| DenseLayer::zeros(i, o))
                .collect(),
        )
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, zero biases.
    pub fn init_uniform<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let layers = Self::shape(input, hidden, output)
            .into_iter()
            .map(|(i, o)| {
                let bound = 1.0 / sqrt(i.max(1) as f64);
                let mut layer = DenseLayer::zeros(i, o);
                for w in &mut layer.weights {
                    *w = rng.random_range(-bound..=bound);
                }
                layer
            })
            .collect();
        Self::new(layers)
    }

    /// Same shape, every value zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        DecoderWeights {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.outputs)
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn fill(&mut self, value: f64) {
        for l in &mut self.layers {
            l.weights.fill(value);
            l.bias.fill(value);
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "decoder input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    /// Raw outputs (pre-activation).
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_traced(input)?.activations.pop().unwrap_or_default())
    }

    /// Raw outputs computed in caller-provided buffers.
    pub fn forward_with<'a>(&self, input: &[f64], scratch: &'a mut [Vec<f64>; 2]) -> Result<&'a [f64]> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let [a, b] = scratch;
        a.clear();
        a.extend_from_slice(input);
        for (i, layer) in self.layers.iter().enumerate() {
            b.clear();
            b.resize(layer.outputs, 0.0);
            layer.apply(a, b);
            if i != last {
                for v in b.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            core::mem::swap(a, b);
        }
        Ok(&scratch[0][..])
    }

    pub fn forward_traced(&self, input: &[f64]) -> Result<DecoderTrace> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.outputs];
            layer.apply(&activations[i], &mut out);
            if i != last {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            activations.push(out);
        }
        Ok(DecoderTrace { activations })
    }

    /// Back-propagates `d_outputs` (gradient w.r.t. raw outputs), adding
    /// parameter gradients into `grads` and returning the input gradient.
    pub fn backward(&self, trace: &DecoderTrace, d_outputs: &[f64], grads: &mut DecoderWeights) -> Vec<f64> {
        let mut delta = d_outputs.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.activations[i];
            let g = &mut grads.layers[i];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            let mut d_in = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (di, w) in d_in.iter_mut().zip(row) {
                    *di += d * w;
                }
            }
            if i > 0 {
                // ReLU mask of the previous layer's output.
                for (di, a) in d_in.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *di = 0.0;
                    }
                }
            }
            delta = d_in;
        }
        delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoded {
    pub rgb: [f64; 3],
    pub sigma: Option<f64>,
}

/// Sigmoid color and, when requested, exponential density.
pub fn decode(weights: &DecoderWeights, embedding: &[f64], want_density: bool) -> Result<Decoded> {
    if want_density && weights.output_dim() < 4 {
        return Err(Error::DimensionMismatch {
            what: "decoder outputs (density requested)",
            expected: 4,
            got: weights.output_dim(),
        });
    }
    let out = weights.forward(embedding)?;
    Ok(Decoded {
        rgb: [sigmoid(out[0]), sigmoid(out[1]), sigmoid(out[2])],
        sigma: want_density.then(|| exp(out[3])),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_mid_gray_and_unit_density() {
        let d = DecoderWeights::zeros(16, &[16, 16], 4).unwrap();
        let out = decode(&d, &[0.3; 16], true).unwrap();
        assert_eq!(out.rgb, [0.5; 3]);
        assert_eq!(out.sigma, Some(1.0));
    }

    #[test]
    fn dimension_errors() {
        let d = DecoderWeights::zeros(16, &[16], 4).unwrap();
        assert!(matches!(
            decode(&d, &[0.0; 15], false),
            Err(Error::DimensionMismatch { .. })
        ));
        let rgb_only = DecoderWeights::zeros(16, &[16], 3).unwrap();
        assert!(decode(&rgb_only, &[0.0; 16], true).is_err());
        let broken = DecoderWeights::new(alloc::vec![DenseLayer::zeros(4, 8), DenseLayer::zeros(7, 4)]);
        assert!(broken.is_err());
    }

    /// Plain nested-loop MLP, written independently of `DenseLayer::apply`.
    fn oracle(d: &DecoderWeights, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let n = d.layers().len();
        for (li, l) in d.layers().iter().enumerate() {
            let mut next = vec![0.0; l.outputs];
            for o in 0..l.outputs {
                let mut s = l.bias[o];
                for i in 0..l.inputs {
                    s += l.weights[o * l.inputs + i] * a[i];
                }
                next[o] = if li + 1 < n && s < 0.0 { 0.0 } else { s };
            }
            a = next;
        }
        a
    }

    #[test]
    fn matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut d = DecoderWeights::init_uniform(16, &[16, 16], 4, &mut rng).unwrap();
        for l in d.layers_mut() {
            for b in &mut l.bias {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        for _ in 0..50 {
            let x: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
            let want = oracle(&d, &x);
            let got = d.forward(&x).unwrap();
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-6);
            }
            let dec = decode(&d, &x, true).unwrap();
            assert!((dec.sigma.unwrap() - exp(want[3])).abs() < 1e-9 * exp(want[3]).max(1.0));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = DecoderWeights::init_uniform(6, &[5, 4], 4, &mut rng).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let upstream = [0.3, -0.7, 0.2, 0.9];
        let f = |dd: &DecoderWeights, xx: &[f64]| -> f64 {
            dd.forward(xx).unwrap().iter().zip(&upstream).map(|(a, b)| a * b).sum()
        };
        let trace = d.forward_traced(&x).unwrap();
        let mut grads = d.zeros_like();
        let dx = d.backward(&trace, &upstream, &mut grads);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (f(&d, &a) - f(&d, &b)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-7);
        }
        for li in 0..d.layers().len() {
            for wi in 0..d.layers()[li].weights.len() {
                let mut a = d.clone();
                let mut b = d.clone();
                a.layers_mut()[li].weights[wi] += h;
                b.layers_mut()[li].weights[wi] -= h;
                let fd = (f(&a, &x) - f(&b, &x)) / (2.0 * h);
                assert!((fd - grads.layers()[li].weights[wi]).abs() < 1e-7);
            }
        }
    }

    proptest! {
        #[test]
        fn color_stays_in_unit_range(x in prop::collection::vec(-1e6f64..1e6, 16), seed in 0u64..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = DecoderWeights::init_uniform(16, &[16, 16], 4, &mut rng).unwrap();
            let out = decode(&d, &x, false).unwrap();
            for c in out.rgb {
                prop_assert!((0.0..=1.0).contains(&c));
            }
        }
    }
}
