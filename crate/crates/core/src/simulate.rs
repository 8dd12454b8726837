//! Measurement simulation from a phantom and an aperture.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::aperture::{bin_window, generate_poses, mono_convert, BinWindow, CylindricalApertureSpec};
use crate::dataset::{DatasetFlags, MeasurementSet};
use crate::forward::spectral_forward;
use crate::phantom::PhantomSpec;
use crate::signal::ChirpConfig;
use crate::{Result, SpinrError, C64};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimulationOptions {
    /// Complex noise level per bin: `E|n|^2 = noise_sigma^2`.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Convert bistatic poses to virtual monostatic elements.
    #[serde(default)]
    pub mono: bool,
    /// Also store all `N` bins per pose (needed by time-domain supervision).
    #[serde(default)]
    pub full_spectrum: bool,
    #[serde(default)]
    pub f64_payload: bool,
}

pub fn simulate(
    phantom: &PhantomSpec,
    aperture: &CylindricalApertureSpec,
    cfg: &ChirpConfig,
    opts: &SimulationOptions,
) -> Result<MeasurementSet> {
    cfg.validate()?;
    if !(opts.noise_sigma >= 0.0) {
        return Err(SpinrError::InvalidConfig("noise sigma must be >= 0".into()));
    }
    let (points, sigmas) = phantom.points_and_sigmas()?;
    let poses = generate_poses(aperture)?;
    let window = bin_window(cfg, &phantom.bounds, &poses, aperture.guard)?;
    let n = cfg.num_samples;
    // with a full spectrum the window values are a slice of it, so both
    // carry the same noise draw
    let sim_window = if opts.full_spectrum { BinWindow::full(n) } else { window };
    let normal = Normal::new(0.0, opts.noise_sigma * std::f64::consts::FRAC_1_SQRT_2)
        .map_err(|e| SpinrError::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let reference = phantom.bounds.center();

    let mut out_poses = Vec::with_capacity(poses.len());
    let mut values = Vec::with_capacity(poses.len());
    let mut full = opts.full_spectrum.then(|| Vec::with_capacity(poses.len()));
    for pose in &poses {
        let mut resp = spectral_forward(cfg, pose, &points, &sigmas, &sim_window)?;
        if opts.noise_sigma > 0.0 {
            for v in &mut resp.values {
                *v += C64::new(normal.sample(&mut rng), normal.sample(&mut rng));
            }
        }
        let (p, resp) = if opts.mono {
            mono_convert(pose, &resp, cfg, &reference)?
        } else {
            (*pose, resp)
        };
        out_poses.push(p);
        values.push(resp.values[window.k_min - sim_window.k_min..=window.k_max - sim_window.k_min].to_vec());
        if let Some(f) = full.as_mut() {
            f.push(resp.values);
        }
    }
    let set = MeasurementSet {
        chirp: *cfg,
        window,
        bounds: phantom.bounds,
        flags: DatasetFlags {
            f64_payload: opts.f64_payload,
            full_spectrum: opts.full_spectrum,
            mono: opts.mono,
        },
        noise_sigma: opts.noise_sigma,
        seed: opts.seed,
        poses: out_poses,
        values,
        full_spectra: full,
    };
    set.validate()?;
    Ok(set)
}
