use ndarray::Zip;

use super::mlp::{Gradients, Params};
use crate::error::{FlacError, Result};

pub const DEFAULT_LR: f64 = 3e-4;

/// First/second moment estimates for Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        AdamState {
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Applies one Adam update to `params` in place.
    ///
    /// Non-finite gradient entries are rejected before anything is modified;
    /// the error carries the flat coordinate of the first offender.
    pub fn step(&mut self, params: &mut Params, grads: &Gradients, lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(FlacError::config("lr", format!("must be positive, got {lr}")));
        }
        if grads.layers.len() != params.layers().len() {
            return Err(FlacError::Shape {
                context: "adam gradients",
                expected: params.layers().len(),
                actual: grads.layers.len(),
            });
        }
        let moments_match = self.m.layers.len() == params.layers().len()
            && self
                .m
                .layers
                .iter()
                .zip(params.layers())
                .all(|(m, l)| m.weight.raw_dim() == l.weight.raw_dim() && m.bias.len() == l.bias.len());
        if !moments_match {
            return Err(FlacError::Shape {
                context: "adam moments",
                expected: params.num_params(),
                actual: self.m.flat().len(),
            });
        }
        let mut offset = 0;
        for (g, l) in grads.layers.iter().zip(params.layers()) {
            if g.weight.raw_dim() != l.weight.raw_dim() || g.bias.len() != l.bias.len() {
                return Err(FlacError::Shape {
                    context: "adam gradients",
                    expected: l.weight.len() + l.bias.len(),
                    actual: g.weight.len() + g.bias.len(),
                });
            }
            if let Some(i) = g.weight.iter().chain(g.bias.iter()).position(|v| !v.is_finite()) {
                return Err(FlacError::fault("adam gradient", offset + i));
            }
            offset += g.weight.len() + g.bias.len();
        }

        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (i, layer) in params.layers_mut().iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m.layers[i], &mut self.v.layers[i], &grads.layers[i]);
            Zip::from(&mut layer.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .and(&g.weight)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}
