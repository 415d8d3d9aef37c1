use crate::error::{Error, Result};
use crate::metric::{GradientBuffer, MetricFactor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u32,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim * dim],
            v: vec![0.0; dim * dim],
            step: 0,
        }
    }

    pub fn step(&self) -> u32 {
        self.step
    }
}

/// One bias-corrected Adam update of `factor` in place.
///
/// A non-finite gradient leaves `factor` and `state` untouched and returns a
/// divergence error tagged with the step that would have been taken.
pub fn adam_step(
    factor: &mut MetricFactor,
    grad: &GradientBuffer,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grad.dim() != factor.dim() || state.m.len() != grad.as_slice().len() {
        return Err(Error::DimensionMismatch {
            expected: factor.dim(),
            found: grad.dim(),
        });
    }
    let t = state.step + 1;
    if !grad.is_finite() {
        return Err(Error::Divergence {
            epoch: t as usize,
            reason: "non-finite gradient".into(),
        });
    }
    state.step = t;
    let bias1 = 1.0 - cfg.beta1.powi(t as i32);
    let bias2 = 1.0 - cfg.beta2.powi(t as i32);
    let params = factor.entries_mut();
    for (i, g) in grad.as_slice().iter().enumerate() {
        let m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        let m_hat = m / bias1;
        let v_hat = v / bias2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}
