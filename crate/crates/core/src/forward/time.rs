use std::f64::consts::TAU;

use super::{check_sigmas, check_upstream, counters, dft, truncate, ForwardModel, PathGeometry, SpectralResponse};
use crate::aperture::{BinWindow, SensorPose};
use crate::field::QuadraturePoint;
use crate::signal::ChirpConfig;
use crate::{Result, C64};

/// Samples between re-anchoring the phasor recurrence with an exact
/// `from_polar`, bounding accumulated rounding.
const ANCHOR: usize = 32;

/// Adds `a * exp(i*alpha*n)` for `n in 0..N` into `out`.
#[inline]
fn add_tone(out: &mut [C64], a: C64, alpha: f64) {
    let rot = C64::from_polar(1.0, alpha);
    for (b, block) in out.chunks_mut(ANCHOR).enumerate() {
        let mut cur = a * C64::from_polar(1.0, alpha * (b * ANCHOR) as f64);
        for o in block {
            *o += cur;
            cur *= rot;
        }
    }
}

/// `sum_n Re(conj(a * exp(i*alpha*n)) * g_n)`.
#[inline]
fn correlate_tone(g: &[C64], a: C64, alpha: f64) -> f64 {
    let rot = C64::from_polar(1.0, alpha);
    let mut acc = 0.0;
    for (b, block) in g.chunks(ANCHOR).enumerate() {
        let mut cur = a * C64::from_polar(1.0, alpha * (b * ANCHOR) as f64);
        for v in block {
            acc += cur.re * v.re + cur.im * v.im;
            cur *= rot;
        }
    }
    acc
}

/// Superposed beat signals of every point: `N` complex samples.
pub fn time_forward(
    cfg: &ChirpConfig,
    pose: &SensorPose,
    points: &[QuadraturePoint],
    sigmas: &[f64],
) -> Result<Vec<C64>> {
    check_sigmas(points, sigmas)?;
    let mut out = vec![C64::new(0.0, 0.0); cfg.num_samples];
    for (p, &s) in points.iter().zip(sigmas) {
        let g = PathGeometry::new(pose, &p.position, cfg.c)?;
        if s == 0.0 {
            continue;
        }
        add_tone(&mut out, g.amplitude(cfg, p.weight * s), cfg.angular_freq(g.tau));
    }
    counters::add_samples((cfg.num_samples * points.len()) as u64);
    Ok(out)
}

/// Adjoint of [`time_forward`] for `upstream = dL/dx_n`.
pub fn time_backward(
    cfg: &ChirpConfig,
    pose: &SensorPose,
    points: &[QuadraturePoint],
    upstream: &[C64],
) -> Result<Vec<f64>> {
    if upstream.len() != cfg.num_samples {
        return Err(crate::SpinrError::ShapeMismatch(format!(
            "{} upstream samples for N = {}",
            upstream.len(),
            cfg.num_samples
        )));
    }
    let mut grad = Vec::with_capacity(points.len());
    for p in points {
        let g = PathGeometry::new(pose, &p.position, cfg.c)?;
        grad.push(correlate_tone(upstream, g.amplitude(cfg, p.weight), cfg.angular_freq(g.tau)));
    }
    counters::add_samples((cfg.num_samples * points.len()) as u64);
    Ok(grad)
}

/// Adjoint of `truncate(dft(.), window)`: maps window-bin gradients to
/// time-sample gradients, `g_n = (1/N) sum_k g_k exp(i*beta_k*n)`.
pub fn window_adjoint(window: &BinWindow, n: usize, upstream: &[C64]) -> Result<Vec<C64>> {
    check_upstream(window, upstream)?;
    let inv = 1.0 / n as f64;
    Ok((0..n)
        .map(|t| {
            upstream
                .iter()
                .zip(window.k_min..=window.k_max)
                .map(|(g, k)| g * C64::from_polar(inv, TAU * ((k * t) % n) as f64 / n as f64))
                .sum()
        })
        .collect())
}

/// Time-domain model followed by DFT and truncation.
#[derive(Debug, Clone, Copy, Default)]
pub struct TimeModel;

impl ForwardModel for TimeModel {
    fn name(&self) -> &'static str {
        "time"
    }

    fn forward(
        &self,
        cfg: &ChirpConfig,
        pose: &SensorPose,
        points: &[QuadraturePoint],
        sigmas: &[f64],
        window: &BinWindow,
    ) -> Result<SpectralResponse> {
        truncate(&dft(&time_forward(cfg, pose, points, sigmas)?), window)
    }

    fn backward(
        &self,
        cfg: &ChirpConfig,
        pose: &SensorPose,
        points: &[QuadraturePoint],
        window: &BinWindow,
        upstream: &[C64],
    ) -> Result<Vec<f64>> {
        let g = window_adjoint(window, cfg.num_samples, upstream)?;
        time_backward(cfg, pose, points, &g)
    }
}
