use super::{check_sigmas, check_upstream, counters, ForwardModel, PathGeometry, SpectralResponse};
use crate::aperture::{BinWindow, SensorPose};
use crate::field::QuadraturePoint;
use crate::signal::ChirpConfig;
use crate::{Result, C64};

/// Rounded bin of a delay; exact halves go to the farther bin.
#[inline]
fn quantized_bin(cfg: &ChirpConfig, tau: f64) -> i64 {
    (cfg.slope * tau * cfg.num_samples as f64 / cfg.sample_rate + 0.5).floor() as i64
}

/// Range-quantized model: each point's complex amplitude lands in one bin.
///
/// Returns the response and the number of points whose bin fell outside the
/// window (dropped).
pub fn rq_forward(
    cfg: &ChirpConfig,
    pose: &SensorPose,
    points: &[QuadraturePoint],
    sigmas: &[f64],
    window: &BinWindow,
) -> Result<(SpectralResponse, usize)> {
    check_sigmas(points, sigmas)?;
    let mut out = SpectralResponse::zeros(window, cfg.num_samples);
    let mut dropped = 0;
    for (p, &s) in points.iter().zip(sigmas) {
        let g = PathGeometry::new(pose, &p.position, cfg.c)?;
        let k = quantized_bin(cfg, g.tau);
        if k < window.k_min as i64 || k > window.k_max as i64 {
            dropped += 1;
            continue;
        }
        out.values[k as usize - window.k_min] += g.amplitude(cfg, p.weight * s);
    }
    counters::add_assigns(points.len() as u64);
    Ok((out, dropped))
}

pub fn rq_backward(
    cfg: &ChirpConfig,
    pose: &SensorPose,
    points: &[QuadraturePoint],
    window: &BinWindow,
    upstream: &[C64],
) -> Result<Vec<f64>> {
    check_upstream(window, upstream)?;
    let mut grad = Vec::with_capacity(points.len());
    for p in points {
        let g = PathGeometry::new(pose, &p.position, cfg.c)?;
        let k = quantized_bin(cfg, g.tau);
        let v = if k < window.k_min as i64 || k > window.k_max as i64 {
            0.0
        } else {
            let a = g.amplitude(cfg, p.weight);
            let u = upstream[k as usize - window.k_min];
            a.re * u.re + a.im * u.im
        };
        grad.push(v);
    }
    counters::add_assigns(points.len() as u64);
    Ok(grad)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RqModel;

impl ForwardModel for RqModel {
    fn name(&self) -> &'static str {
        "rq"
    }

    fn forward(
        &self,
        cfg: &ChirpConfig,
        pose: &SensorPose,
        points: &[QuadraturePoint],
        sigmas: &[f64],
        window: &BinWindow,
    ) -> Result<SpectralResponse> {
        rq_forward(cfg, pose, points, sigmas, window).map(|(r, _)| r)
    }

    fn backward(
        &self,
        cfg: &ChirpConfig,
        pose: &SensorPose,
        points: &[QuadraturePoint],
        window: &BinWindow,
        upstream: &[C64],
    ) -> Result<Vec<f64>> {
        rq_backward(cfg, pose, points, window, upstream)
    }
}
