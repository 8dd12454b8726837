use super::{check_sigmas, check_upstream, counters, ForwardModel, PathGeometry, SpectralResponse};
use crate::aperture::{BinWindow, SensorPose};
use crate::field::QuadraturePoint;
use crate::signal::{ChirpConfig, SpectralKernel};
use crate::{Result, C64};

/// The closed-form spectral model for one pose and one point set, with the
/// per-point kernel rows materialized so forward and adjoint share them.
///
/// Row `i`, bin `k` holds `w_i / (R_T R_R) * exp(i*phi_i) * D_k(alpha_i)`
/// where `D_k` is the 1/N tone DFT kernel.
#[derive(Debug, Clone)]
pub struct SpectralOperator {
    window: BinWindow,
    n: usize,
    width: usize,
    rows: Vec<C64>,
}

impl SpectralOperator {
    pub fn new(cfg: &ChirpConfig, pose: &SensorPose, points: &[QuadraturePoint], window: &BinWindow) -> Result<Self> {
        let kernel = SpectralKernel::new(cfg.num_samples, &window.bins());
        let width = window.width();
        let mut rows = vec![C64::new(0.0, 0.0); width * points.len()];
        for (p, row) in points.iter().zip(rows.chunks_exact_mut(width)) {
            let g = PathGeometry::new(pose, &p.position, cfg.c)?;
            kernel.eval_into(cfg.angular_freq(g.tau), g.amplitude(cfg, p.weight), row);
        }
        counters::add_kernel((width * points.len()) as u64);
        Ok(SpectralOperator {
            window: *window,
            n: cfg.num_samples,
            width,
            rows,
        })
    }

    pub fn num_points(&self) -> usize {
        self.rows.len().checked_div(self.width).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.rows[i * self.width..(i + 1) * self.width]
    }

    pub fn apply(&self, sigmas: &[f64]) -> SpectralResponse {
        let mut out = SpectralResponse::zeros(&self.window, self.n);
        for (row, &s) in self.rows.chunks_exact(self.width).zip(sigmas) {
            if s == 0.0 {
                continue;
            }
            for (o, r) in out.values.iter_mut().zip(row) {
                *o += r * s;
            }
        }
        out
    }

    /// `dL/dsigma_i = sum_k Re(conj(row_ik) * upstream_k)`.
    pub fn adjoint(&self, upstream: &[C64]) -> Vec<f64> {
        self.rows
            .chunks_exact(self.width)
            .map(|row| row.iter().zip(upstream).map(|(r, g)| r.re * g.re + r.im * g.im).sum())
            .collect()
    }
}

pub fn spectral_forward(
    cfg: &ChirpConfig,
    pose: &SensorPose,
    points: &[QuadraturePoint],
    sigmas: &[f64],
    window: &BinWindow,
) -> Result<SpectralResponse> {
    check_sigmas(points, sigmas)?;
    // Streaming evaluation: no row storage.
    let kernel = SpectralKernel::new(cfg.num_samples, &window.bins());
    let mut out = SpectralResponse::zeros(window, cfg.num_samples);
    let mut row = vec![C64::new(0.0, 0.0); window.width()];
    for (p, &s) in points.iter().zip(sigmas) {
        let g = PathGeometry::new(pose, &p.position, cfg.c)?;
        if s == 0.0 {
            continue;
        }
        kernel.eval_into(cfg.angular_freq(g.tau), g.amplitude(cfg, p.weight * s), &mut row);
        for (o, r) in out.values.iter_mut().zip(&row) {
            *o += r;
        }
    }
    counters::add_kernel((window.width() * points.len()) as u64);
    Ok(out)
}

pub fn spectral_backward(
    cfg: &ChirpConfig,
    pose: &SensorPose,
    points: &[QuadraturePoint],
    window: &BinWindow,
    upstream: &[C64],
) -> Result<Vec<f64>> {
    check_upstream(window, upstream)?;
    let kernel = SpectralKernel::new(cfg.num_samples, &window.bins());
    let mut row = vec![C64::new(0.0, 0.0); window.width()];
    let mut grad = Vec::with_capacity(points.len());
    for p in points {
        let g = PathGeometry::new(pose, &p.position, cfg.c)?;
        kernel.eval_into(cfg.angular_freq(g.tau), g.amplitude(cfg, p.weight), &mut row);
        grad.push(row.iter().zip(upstream).map(|(r, u)| r.re * u.re + r.im * u.im).sum());
    }
    counters::add_kernel((window.width() * points.len()) as u64);
    Ok(grad)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SpectralModel;

impl ForwardModel for SpectralModel {
    fn name(&self) -> &'static str {
        "spectral"
    }

    fn forward(
        &self,
        cfg: &ChirpConfig,
        pose: &SensorPose,
        points: &[QuadraturePoint],
        sigmas: &[f64],
        window: &BinWindow,
    ) -> Result<SpectralResponse> {
        spectral_forward(cfg, pose, points, sigmas, window)
    }

    fn backward(
        &self,
        cfg: &ChirpConfig,
        pose: &SensorPose,
        points: &[QuadraturePoint],
        window: &BinWindow,
        upstream: &[C64],
    ) -> Result<Vec<f64>> {
        spectral_backward(cfg, pose, points, window, upstream)
    }
}
