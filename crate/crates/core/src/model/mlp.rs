//! The scoring network shared by both attention modules:
//! `logit = w · f(W x + b)`.

use crate::linalg::{axpy, Matrix};
use crate::model::config::Activation;

pub(crate) struct AttentionMlp<'a> {
    pub hidden: &'a Matrix,
    pub out: &'a Matrix,
    pub bias: Option<&'a Matrix>,
    pub activation: Activation,
}

/// Saved activations of one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct MlpTrace {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    pub logit: f64,
}

pub(crate) struct MlpGrads<'a> {
    pub hidden: &'a mut Matrix,
    pub out: &'a mut Matrix,
    pub bias: Option<&'a mut Matrix>,
}

impl<'a> AttentionMlp<'a> {
    pub fn forward(&self, input: Vec<f64>) -> MlpTrace {
        let mut pre = self.hidden.matvec(&input);
        if let Some(b) = self.bias {
            axpy(1.0, b.as_slice(), &mut pre);
        }
        let w = self.out.as_slice();
        let logit = pre
            .iter()
            .zip(w)
            .map(|(&z, &wk)| wk * self.activation.apply(z))
            .sum();
        MlpTrace { input, pre, logit }
    }

    /// Accumulates parameter gradients for upstream `dlogit` and adds the
    /// input gradient into `g_input`.
    pub fn backward(
        &self,
        trace: &MlpTrace,
        dlogit: f64,
        grads: &mut MlpGrads<'_>,
        g_input: &mut [f64],
    ) {
        if dlogit == 0.0 {
            return;
        }
        let w = self.out.as_slice();
        let hidden_act: Vec<f64> = trace
            .pre
            .iter()
            .map(|&z| self.activation.apply(z))
            .collect();
        axpy(dlogit, &hidden_act, grads.out.as_mut_slice());
        let g_pre: Vec<f64> = trace
            .pre
            .iter()
            .zip(w)
            .map(|(&z, &wk)| dlogit * wk * self.activation.derivative(z))
            .collect();
        if let Some(b) = grads.bias.as_deref_mut() {
            axpy(1.0, &g_pre, b.as_mut_slice());
        }
        grads.hidden.add_outer(1.0, &g_pre, &trace.input);
        self.hidden.add_matvec_t(&g_pre, g_input);
    }
}

pub(crate) fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}
