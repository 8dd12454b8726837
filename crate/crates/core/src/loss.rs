//! Supervision losses and their exact gradients.
//!
//! Gradients with respect to a complex value `z` are returned as
//! `dL/dRe(z) + i*dL/dIm(z)`.

use serde::{Deserialize, Serialize};

use crate::forward::SpectralResponse;
use crate::{Result, SpinrError, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the complex (real/imaginary) term relative to the magnitude term.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Added under the square root of the magnitude.
    #[serde(default = "default_eps")]
    pub magnitude_epsilon: f64,
}

fn default_lambda() -> f64 {
    0.5
}

fn default_eps() -> f64 {
    1e-12
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: default_lambda(),
            magnitude_epsilon: default_eps(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.magnitude_epsilon > 0.0) {
            return Err(SpinrError::InvalidConfig(format!(
                "loss requires lambda >= 0 and magnitude_epsilon > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// `sum_k (|Z_k| - |Z~_k|)^2 + lambda * sum_k |Z_k - Z~_k|^2` over shared bins,
/// with `|z| = sqrt(re^2 + im^2 + eps)` on both sides.
pub fn spectral_loss(pred: &SpectralResponse, meas: &SpectralResponse, cfg: &LossConfig) -> Result<(f64, Vec<C64>)> {
    if pred.bins != meas.bins || pred.n != meas.n {
        return Err(SpinrError::ShapeMismatch(format!(
            "prediction bins {:?} (N={}) vs measurement bins {:?} (N={})",
            pred.bins, pred.n, meas.bins, meas.n
        )));
    }
    Ok(spectral_loss_values(&pred.values, &meas.values, cfg))
}

/// [`spectral_loss`] on raw aligned value slices.
pub fn spectral_loss_values(pred: &[C64], meas: &[C64], cfg: &LossConfig) -> (f64, Vec<C64>) {
    debug_assert_eq!(pred.len(), meas.len());
    let eps = cfg.magnitude_epsilon;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (z, m) in pred.iter().zip(meas) {
        let mag = (z.norm_sqr() + eps).sqrt();
        let mag_m = (m.norm_sqr() + eps).sqrt();
        let dm = mag - mag_m;
        let d = z - m;
        loss += dm * dm + cfg.lambda * d.norm_sqr();
        grad.push(z * (2.0 * dm / mag) + d * (2.0 * cfg.lambda));
    }
    (loss, grad)
}

/// Mean over samples of `|pred_n - meas_n|^2`.
pub fn temporal_loss(pred: &[C64], meas: &[C64]) -> Result<(f64, Vec<C64>)> {
    if pred.len() != meas.len() {
        return Err(SpinrError::ShapeMismatch(format!(
            "{} predicted samples vs {} measured",
            pred.len(),
            meas.len()
        )));
    }
    if pred.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let inv = 1.0 / pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(meas)
        .map(|(p, m)| {
            let d = p - m;
            loss += d.norm_sqr();
            d * (2.0 * inv)
        })
        .collect();
    Ok((loss * inv, grad))
}
