//! Dense MLP parameters, batched forward passes and reverse-mode gradients.
//!
//! Inputs are laid out one sample per row, so a layer computes
//! `z = x · Wᵀ + b` with `W` stored as `out × in`.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FlacError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Elu,
    Gelu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Gelu => 0.5 * z * (1.0 + libm::erf(z * std::f64::consts::FRAC_1_SQRT_2)),
            Activation::Identity => z,
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(z * std::f64::consts::FRAC_1_SQRT_2));
                let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                cdf + z * pdf
            }
            Activation::Identity => 1.0,
        }
    }

    /// Same as [`Activation::derivative`], reusing the already computed
    /// output `a = apply(z)` where that saves a transcendental call.
    #[inline]
    pub fn derivative_given_output(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    a + 1.0
                }
            }
            Activation::Gelu => {
                let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                // a = z·Φ(z); recover Φ directly only where the division is well conditioned
                let cdf = if z.abs() > 1e-3 {
                    a / z
                } else {
                    0.5 * (1.0 + libm::erf(z * std::f64::consts::FRAC_1_SQRT_2))
                };
                cdf + z * pdf
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Elu => "elu",
            Activation::Gelu => "gelu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "elu" => Some(Activation::Elu),
            "gelu" => Some(Activation::Gelu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }
}

/// Parameters of a dense network. Hidden layers share one activation and the
/// output layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    layers: Vec<Layer>,
    seed: u64,
}

/// Cached intermediates of one (batched) forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.inputs[0].nrows()
    }

    /// The input the pass was evaluated at.
    pub fn input(&self) -> &Array2<f64> {
        &self.inputs[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradient store with the same shape as a [`Params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(params: &Params) -> Self {
        Gradients {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.iter().chain(l.bias.iter()).map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm.is_finite() {
            self.scale(max_norm / norm);
        }
        norm
    }

    /// Row-major weights then bias, layer by layer (same order as [`Params::flat`]).
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|&g| g == 0.0))
    }
}

/// Result of a backward pass: parameter gradients and the input cotangent.
#[derive(Clone, Debug)]
pub struct Backward {
    pub params: Gradients,
    pub input: Array2<f64>,
}

impl Params {
    /// Fan-in scaled uniform initialization, `U(-1/√fan_in, 1/√fan_in)`, zero biases.
    pub fn init(layer_sizes: &[usize], hidden_activation: Activation, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(FlacError::config(
                "layer_sizes",
                format!("need at least 2 sizes, got {}", layer_sizes.len()),
            ));
        }
        if let Some(pos) = layer_sizes.iter().position(|&n| n == 0) {
            return Err(FlacError::config(
                "layer_sizes",
                format!("size at position {pos} must be positive"),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_layers = layer_sizes.len() - 1;
        let layers = layer_sizes
            .windows(2)
            .enumerate()
            .map(|(i, dims)| {
                let (fan_in, fan_out) = (dims[0], dims[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weight =
                    Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-bound..bound));
                let activation = if i + 1 == n_layers {
                    Activation::Identity
                } else {
                    hidden_activation
                };
                Layer {
                    weight,
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        Ok(Params { layers, seed })
    }

    /// Builds parameters from explicit layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<Layer>, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(FlacError::config("layers", "at least one layer required"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(FlacError::Shape {
                    context: "layer bias",
                    expected: l.fan_out(),
                    actual: l.bias.len(),
                });
            }
            if i > 0 && layers[i - 1].fan_out() != l.fan_in() {
                return Err(FlacError::Shape {
                    context: "layer chaining",
                    expected: layers[i - 1].fan_out(),
                    actual: l.fan_in(),
                });
            }
        }
        Ok(Params { layers, seed })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(Layer::fan_out));
        sizes
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(FlacError::Shape {
                context: "flat parameter vector",
                expected: self.num_params(),
                actual: values.len(),
            });
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for w in l.weight.iter_mut() {
                *w = it.next().unwrap();
            }
            for b in l.bias.iter_mut() {
                *b = it.next().unwrap();
            }
        }
        Ok(())
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(FlacError::Shape {
                context: "mlp input",
                expected: self.input_dim(),
                actual: cols,
            });
        }
        Ok(())
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec())
            .expect("row vector shape");
        Ok(self.forward_batch(&x)?.into_raw_vec_and_offset().0)
    }

    /// Batched forward pass without recording.
    pub fn forward_batch(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(input.ncols())?;
        let mut a = input.to_owned();
        for l in &self.layers {
            let mut z = a.dot(&l.weight.t());
            z += &l.bias;
            if l.activation != Activation::Identity {
                let act = l.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            a = z;
        }
        Ok(a)
    }

    /// Batched forward pass that records a [`Tape`] for [`Params::backward`].
    pub fn forward_tape(&self, input: Array2<f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_input(input.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = input;
        for l in &self.layers {
            let mut z = a.dot(&l.weight.t());
            z += &l.bias;
            let act = l.activation;
            let out = if act == Activation::Identity {
                z.clone()
            } else {
                z.mapv(|v| act.apply(v))
            };
            inputs.push(a);
            pre.push(z);
            a = out;
        }
        Ok((
            a,
            Tape {
                inputs,
                pre_activations: pre,
            },
        ))
    }

    /// Gradients of `Σ cotangent ⊙ output` with respect to parameters and input.
    pub fn backward(&self, tape: &Tape, cotangent: &Array2<f64>) -> Result<Backward> {
        let mut grads = Gradients::zeros_like(self);
        let input = self.backward_into(tape, cotangent, &mut grads)?;
        Ok(Backward {
            params: grads,
            input,
        })
    }

    /// Like [`Params::backward`], but accumulates parameter gradients into `grads`.
    pub fn backward_into(
        &self,
        tape: &Tape,
        cotangent: &Array2<f64>,
        grads: &mut Gradients,
    ) -> Result<Array2<f64>> {
        if tape.inputs.len() != self.layers.len() {
            return Err(FlacError::Shape {
                context: "tape depth",
                expected: self.layers.len(),
                actual: tape.inputs.len(),
            });
        }
        if cotangent.ncols() != self.output_dim() || cotangent.nrows() != tape.batch() {
            return Err(FlacError::Shape {
                context: "output cotangent",
                expected: self.output_dim() * tape.batch(),
                actual: cotangent.len(),
            });
        }
        let mut delta = cotangent.to_owned();
        for (i, l) in self.layers.iter().enumerate().rev() {
            if l.activation != Activation::Identity {
                let act = l.activation;
                match tape.inputs.get(i + 1) {
                    Some(out) => Zip::from(&mut delta)
                        .and(&tape.pre_activations[i])
                        .and(out)
                        .for_each(|d, &z, &a| *d *= act.derivative_given_output(z, a)),
                    None => Zip::from(&mut delta)
                        .and(&tape.pre_activations[i])
                        .for_each(|d, &z| *d *= act.derivative(z)),
                }
            }
            let g = &mut grads.layers[i];
            ndarray::linalg::general_mat_mul(1.0, &delta.t(), &tape.inputs[i], 1.0, &mut g.weight);
            g.bias += &delta.sum_axis(Axis(0));
            delta = delta.dot(&l.weight);
        }
        Ok(delta)
    }

    /// `self ← rho·online + (1−rho)·self`, elementwise.
    pub fn polyak_update(&mut self, online: &Params, rho: f64) -> Result<()> {
        if self.layer_sizes() != online.layer_sizes() {
            return Err(FlacError::Shape {
                context: "polyak update",
                expected: self.num_params(),
                actual: online.num_params(),
            });
        }
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            Zip::from(&mut t.weight)
                .and(&o.weight)
                .for_each(|t, &o| *t = rho * o + (1.0 - rho) * *t);
            Zip::from(&mut t.bias)
                .and(&o.bias)
                .for_each(|t, &o| *t = rho * o + (1.0 - rho) * *t);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_input(dim: usize, batch: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((batch, dim), || rng.random_range(-1.5..1.5))
    }

    #[test]
    fn derivative_from_output_agrees() {
        for act in [Activation::Elu, Activation::Gelu, Activation::Identity] {
            for i in -400..=400 {
                let z = i as f64 * 0.02 + 1e-4;
                let d0 = act.derivative(z);
                let d1 = act.derivative_given_output(z, act.apply(z));
                assert!((d0 - d1).abs() <= 1e-12 * (1.0 + d0.abs()), "{act:?} at {z}: {d0} vs {d1}");
            }
        }
    }

    #[test]
    fn init_shapes_and_zero_bias() {
        let p = Params::init(&[3, 512, 512, 2], Activation::Elu, 7).unwrap();
        assert_eq!(p.layer_sizes(), vec![3, 512, 512, 2]);
        assert_eq!(p.layers().len(), 3);
        assert_eq!(p.layers()[2].activation, Activation::Identity);
        assert_eq!(p.num_params(), 3 * 512 + 512 + 512 * 512 + 512 + 512 * 2 + 2);

        let small = Params::init(&[2, 2], Activation::Gelu, 99).unwrap();
        assert!(small.layers()[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Params::init(&[5, 16, 3], Activation::Gelu, 11).unwrap();
        let b = Params::init(&[5, 16, 3], Activation::Gelu, 11).unwrap();
        let c = Params::init(&[5, 16, 3], Activation::Gelu, 12).unwrap();
        assert_eq!(a.flat(), b.flat());
        assert_ne!(a.flat(), c.flat());
        let bound = 1.0 / 5f64.sqrt();
        assert!(a.layers()[0].weight.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn init_rejects_bad_sizes() {
        assert!(matches!(
            Params::init(&[], Activation::Elu, 0),
            Err(FlacError::Config { .. })
        ));
        assert!(matches!(
            Params::init(&[4], Activation::Elu, 0),
            Err(FlacError::Config { .. })
        ));
        assert!(matches!(
            Params::init(&[4, 0, 2], Activation::Elu, 0),
            Err(FlacError::Config { .. })
        ));
    }

    #[test]
    fn zero_params_give_zero_output() {
        let mut p = Params::init(&[3, 4, 2], Activation::Elu, 1).unwrap();
        let n = p.num_params();
        p.set_flat(&vec![0.0; n]).unwrap();
        assert_eq!(p.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn affine_single_layer() {
        let p = Params::from_layers(
            vec![Layer {
                weight: array![[2.0]],
                bias: array![1.0],
                activation: Activation::Identity,
            }],
            0,
        )
        .unwrap();
        assert_eq!(p.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let p = Params::init(&[3, 4, 2], Activation::Elu, 1).unwrap();
        assert!(matches!(p.forward(&[1.0, 2.0]), Err(FlacError::Shape { .. })));
    }

    #[test]
    fn from_layers_checks_chaining() {
        let l1 = Layer {
            weight: Array2::zeros((4, 3)),
            bias: Array1::zeros(4),
            activation: Activation::Elu,
        };
        let l2 = Layer {
            weight: Array2::zeros((2, 5)),
            bias: Array1::zeros(2),
            activation: Activation::Identity,
        };
        assert!(matches!(
            Params::from_layers(vec![l1, l2], 0),
            Err(FlacError::Shape { .. })
        ));
    }

    #[test]
    fn half_square_input_gradient() {
        // Identity network y = x, loss ½y² has cotangent y, so dL/dx = x.
        let p = Params::from_layers(
            vec![Layer {
                weight: array![[1.0]],
                bias: array![0.0],
                activation: Activation::Identity,
            }],
            0,
        )
        .unwrap();
        let (y, tape) = p.forward_tape(array![[3.0]]).unwrap();
        let back = p.backward(&tape, &y).unwrap();
        assert_eq!(back.input[[0, 0]], 3.0);
    }

    #[test]
    fn unused_block_has_exact_zero_gradient() {
        // Output 1 only depends on its own row of the final layer; a cotangent
        // on output 0 leaves row 1 untouched.
        let p = Params::init(&[3, 8, 2], Activation::Gelu, 5).unwrap();
        let (_, tape) = p.forward_tape(random_input(3, 4, 2)).unwrap();
        let mut cot = Array2::zeros((4, 2));
        cot.column_mut(0).fill(1.0);
        let g = p.backward(&tape, &cot).unwrap().params;
        assert!(g.layers[1].weight.row(1).iter().all(|&v| v == 0.0));
        assert_eq!(g.layers[1].bias[1], 0.0);
        assert!(g.layers[1].weight.row(0).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn cotangent_shape_is_checked() {
        let p = Params::init(&[3, 4, 2], Activation::Elu, 1).unwrap();
        let (_, tape) = p.forward_tape(random_input(3, 2, 0)).unwrap();
        assert!(matches!(
            p.backward(&tape, &Array2::zeros((2, 3))),
            Err(FlacError::Shape { .. })
        ));
    }

    fn loss(p: &Params, x: &Array2<f64>, w: &Array2<f64>) -> f64 {
        (&p.forward_batch(x).unwrap() * w).sum()
    }

    #[test]
    fn input_gradient_matches_central_difference() {
        for act in [Activation::Elu, Activation::Gelu] {
            let p = Params::init(&[4, 16, 16, 3], act, 21).unwrap();
            let x = random_input(4, 1, 3);
            let w = random_input(3, 1, 4);
            let (_, tape) = p.forward_tape(x.clone()).unwrap();
            let g = p.backward(&tape, &w).unwrap().input;
            let dir = random_input(4, 1, 5);
            let h = 1e-5;
            let fd = (loss(&p, &(&x + &(&dir * h)), &w) - loss(&p, &(&x - &(&dir * h)), &w)) / (2.0 * h);
            let analytic = (&g * &dir).sum();
            assert!(
                (fd - analytic).abs() <= 1e-4 * analytic.abs().max(1e-8),
                "{act:?}: fd {fd} vs tape {analytic}"
            );
        }
    }

    #[test]
    fn parameter_gradient_matches_central_difference() {
        let p = Params::init(&[3, 12, 12, 12, 2], Activation::Gelu, 8).unwrap();
        let x = random_input(3, 5, 1);
        let w = random_input(2, 5, 2);
        let (_, tape) = p.forward_tape(x.clone()).unwrap();
        let g = p.backward(&tape, &w).unwrap().params.flat();
        let base = p.flat();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let i = rng.random_range(0..base.len());
            let mut plus = p.clone();
            let mut v = base.clone();
            v[i] += h;
            plus.set_flat(&v).unwrap();
            let mut minus = p.clone();
            v[i] -= 2.0 * h;
            minus.set_flat(&v).unwrap();
            let fd = (loss(&plus, &x, &w) - loss(&minus, &x, &w)) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn polyak_edge_cases() {
        let online = Params::init(&[2, 3, 1], Activation::Elu, 1).unwrap();
        let original = Params::init(&[2, 3, 1], Activation::Elu, 2).unwrap();

        let mut t = original.clone();
        t.polyak_update(&online, 1.0).unwrap();
        assert_eq!(t.flat(), online.flat());

        let mut t = original.clone();
        t.polyak_update(&online, 0.0).unwrap();
        assert_eq!(t.flat(), original.flat());

        let mut zeros = original.clone();
        zeros.set_flat(&vec![0.0; zeros.num_params()]).unwrap();
        let mut ones = original.clone();
        ones.set_flat(&vec![1.0; ones.num_params()]).unwrap();
        zeros.polyak_update(&ones, 0.005).unwrap();
        assert!(zeros.flat().iter().all(|&v| v == 0.005));

        let other = Params::init(&[2, 4, 1], Activation::Elu, 1).unwrap();
        assert!(matches!(t.polyak_update(&other, 0.5), Err(FlacError::Shape { .. })));
    }

    #[test]
    fn clip_global_norm_rescales() {
        let p = Params::init(&[2, 2], Activation::Elu, 0).unwrap();
        let mut g = Gradients::zeros_like(&p);
        g.layers[0].weight.fill(10.0);
        let before = g.clip_global_norm(1.0);
        assert!((before - 20.0).abs() < 1e-12);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
    }
}
