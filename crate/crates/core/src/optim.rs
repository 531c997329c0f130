//! Adaptive-moment optimizer with decoupled weight decay over one flat
//! parameter vector.

use crate::error::{Error, Result};
use crate::util::{bytes_to_f64s, f64s_to_bytes};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(n_params: usize) -> AdamW {
        AdamW {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPSILON,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update. Weight decay is decoupled from the gradient and
    /// skipped where `decay_mask` is false (the temperature parameter).
    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        lr: f64,
        weight_decay: f64,
        decay_mask: &[bool],
    ) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        assert_eq!(decay_mask.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            if decay_mask[i] {
                params[i] -= lr * weight_decay * params[i];
            }
        }
    }

    /// Serialized state: step count then first and second moments.
    pub fn to_blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.m.len() * 16);
        out.extend_from_slice(&self.t.to_le_bytes());
        out.extend_from_slice(&f64s_to_bytes(&self.m));
        out.extend_from_slice(&f64s_to_bytes(&self.v));
        out
    }

    pub fn from_blob(bytes: &[u8], n_params: usize) -> Result<AdamW> {
        if bytes.len() != 8 + n_params * 16 {
            return Err(Error::Checkpoint(format!(
                "optimizer blob has {} bytes, expected {}",
                bytes.len(),
                8 + n_params * 16
            )));
        }
        let t = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
        let m = bytes_to_f64s(&bytes[8..8 + n_params * 8])
            .ok_or_else(|| Error::Checkpoint("bad moment encoding".into()))?;
        let v = bytes_to_f64s(&bytes[8 + n_params * 8..])
            .ok_or_else(|| Error::Checkpoint("bad moment encoding".into()))?;
        Ok(AdamW {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPSILON,
            m,
            v,
            t,
        })
    }
}
