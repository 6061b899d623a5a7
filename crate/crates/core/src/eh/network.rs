use serde::{Deserialize, Serialize};

use super::Harvester;
use crate::{Error, Result};

/// Number of trainable parameters: 3 + 3 + 6 + 2 + 2 + 1.
pub const EH_PARAM_COUNT: usize = 17;

/// Learned harvester: a 1-3-2-1 tanh network on normalized input power.
///
/// `f_raw(u) = tanh(W3·tanh(W2·tanh(W1·u + b1) + b2) + b3)` with
/// `u = p_in / input_scale`. The evaluated power is
/// `power_scale · max(0, f_raw(u) − f_raw(0))`, which pins zero input to
/// zero output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EhModel {
    pub w1: [f64; 3],
    pub b1: [f64; 3],
    /// 2×3, row-major.
    pub w2: [f64; 6],
    pub b2: [f64; 2],
    /// 1×2.
    pub w3: [f64; 2],
    pub b3: [f64; 1],
    pub input_scale: f64,
    pub power_scale: f64,
    /// Root-mean-square fit residual in µW, when the model came from a fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
}

/// Forward-pass intermediates for one normalized input.
pub(crate) struct Trace {
    pub h1: [f64; 3],
    pub h2: [f64; 2],
    pub out: f64,
}

impl EhModel {
    pub fn from_params(params: &[f64; EH_PARAM_COUNT], input_scale: f64, power_scale: f64) -> Result<Self> {
        if !(input_scale > 0.0 && power_scale > 0.0) {
            return Err(Error::domain("harvester scales must be positive"));
        }
        let mut it = params.iter().copied();
        let mut take = |k: usize| -> Vec<f64> { (&mut it).take(k).collect() };
        let w1 = take(3);
        let b1 = take(3);
        let w2 = take(6);
        let b2 = take(2);
        let w3 = take(2);
        let b3 = take(1);
        Ok(Self {
            w1: w1.try_into().unwrap(),
            b1: b1.try_into().unwrap(),
            w2: w2.try_into().unwrap(),
            b2: b2.try_into().unwrap(),
            w3: w3.try_into().unwrap(),
            b3: b3.try_into().unwrap(),
            input_scale,
            power_scale,
            rmse: None,
        })
    }

    pub fn params(&self) -> [f64; EH_PARAM_COUNT] {
        let mut p = [0.0; EH_PARAM_COUNT];
        let parts: [&[f64]; 6] = [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3];
        let mut i = 0;
        for part in parts {
            p[i..i + part.len()].copy_from_slice(part);
            i += part.len();
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.input_scale > 0.0 && self.power_scale > 0.0) {
            return Err(Error::domain("harvester scales must be positive"));
        }
        if self.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("harvester parameters must be finite"));
        }
        Ok(())
    }

    pub(crate) fn forward(&self, u: f64) -> Trace {
        let mut h1 = [0.0; 3];
        for k in 0..3 {
            h1[k] = (self.w1[k] * u + self.b1[k]).tanh();
        }
        let mut h2 = [0.0; 2];
        for j in 0..2 {
            let z: f64 = (0..3).map(|k| self.w2[3 * j + k] * h1[k]).sum::<f64>() + self.b2[j];
            h2[j] = z.tanh();
        }
        let z3 = self.w3[0] * h2[0] + self.w3[1] * h2[1] + self.b3[0];
        Trace { h1, h2, out: z3.tanh() }
    }

    /// Raw network output at normalized input `u`.
    pub fn raw(&self, u: f64) -> f64 {
        self.forward(u).out
    }

    /// Accumulates `scale · ∂f_raw(u)/∂θ` into `grad`, and returns
    /// `∂f_raw/∂u`.
    pub(crate) fn backward(&self, u: f64, t: &Trace, scale: f64, grad: &mut [f64; EH_PARAM_COUNT]) -> f64 {
        let d3 = scale * (1.0 - t.out * t.out);
        // Offsets: w1 0..3, b1 3..6, w2 6..12, b2 12..14, w3 14..16, b3 16.
        grad[16] += d3;
        let mut d2 = [0.0; 2];
        for j in 0..2 {
            grad[14 + j] += d3 * t.h2[j];
            d2[j] = d3 * self.w3[j] * (1.0 - t.h2[j] * t.h2[j]);
            grad[12 + j] += d2[j];
        }
        let mut du = 0.0;
        for k in 0..3 {
            let mut back = 0.0;
            for j in 0..2 {
                grad[6 + 3 * j + k] += d2[j] * t.h1[k];
                back += d2[j] * self.w2[3 * j + k];
            }
            let d1 = back * (1.0 - t.h1[k] * t.h1[k]);
            grad[k] += d1 * u;
            grad[3 + k] += d1;
            du += d1 * self.w1[k];
        }
        du
    }

    /// Zero-offset corrected output in normalized units, before clipping.
    fn shifted(&self, p_in: f64) -> f64 {
        self.raw(p_in / self.input_scale) - self.raw(0.0)
    }
}

impl Harvester for EhModel {
    fn power(&self, p_in: f64) -> f64 {
        self.power_scale * self.shifted(p_in).max(0.0)
    }

    fn slope(&self, p_in: f64) -> f64 {
        if self.shifted(p_in) <= 0.0 {
            return 0.0;
        }
        let u = p_in / self.input_scale;
        let t = self.forward(u);
        let mut scratch = [0.0; EH_PARAM_COUNT];
        let du = self.backward(u, &t, 1.0, &mut scratch);
        self.power_scale * du / self.input_scale
    }
}

/// Evaluates a learned harvester at `p_in` µW.
pub fn eval_eh(model: &EhModel, p_in: f64) -> Result<f64> {
    if !p_in.is_finite() {
        return Err(Error::domain(format!("non-finite input power {p_in}")));
    }
    Ok(model.power(p_in))
}
