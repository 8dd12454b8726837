//! Differentiable forward models mapping sampled reflectivity and a sensor
//! pose to radar responses.
//!
//! All three models share the per-point amplitude `w * sigma / (R_T * R_R)`
//! and carrier phase `2*pi*f0*tau`; they differ in how the delay is turned
//! into bins:
//!
//! - `spectral`: closed-form tone DFT at the window bins only
//! - `time`: full beat-signal superposition, then a 1/N DFT and truncation
//! - `rq`: the whole contribution lands in the rounded bin, no leakage
//!
//! The delay enters the tone kernel as a per-sample angular frequency
//! `alpha = 2*pi*S*tau / fs`.

mod dft;
mod rq;
mod spectral;
mod time;

pub use dft::{dft, dft_naive, idft, truncate};
pub use rq::{rq_backward, rq_forward, RqModel};
pub use spectral::{spectral_backward, spectral_forward, SpectralModel, SpectralOperator};
pub use time::{time_backward, time_forward, window_adjoint, TimeModel};

use serde::{Deserialize, Serialize};

use crate::aperture::{BinWindow, SensorPose};
use crate::field::QuadraturePoint;
use crate::registry::Registry;
use crate::signal::ChirpConfig;
use crate::{Result, SpinrError, Vec3, C64};

/// Complex values at selected DFT bins for one pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResponse {
    pub bins: Vec<usize>,
    pub values: Vec<C64>,
    /// DFT length the bins refer to.
    pub n: usize,
}

impl SpectralResponse {
    pub fn zeros(window: &BinWindow, n: usize) -> Self {
        SpectralResponse {
            bins: window.bins(),
            values: vec![C64::new(0.0, 0.0); window.width()],
            n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins.len() != self.values.len() {
            return Err(SpinrError::ShapeMismatch(format!(
                "{} bins but {} values",
                self.bins.len(),
                self.values.len()
            )));
        }
        if self.bins.windows(2).any(|w| w[0] >= w[1]) || self.bins.iter().any(|&k| k >= self.n) {
            return Err(SpinrError::ShapeMismatch(format!(
                "bins must be strictly increasing within [0, {})",
                self.n
            )));
        }
        if self.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(SpinrError::ShapeMismatch("response values must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Tx/Rx legs of the path through one scene point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGeometry {
    pub r_t: f64,
    pub r_r: f64,
    pub tau: f64,
}

/// Distances below this count as coinciding with an antenna.
const MIN_RANGE: f64 = 1e-12;

impl PathGeometry {
    #[inline]
    pub fn new(pose: &SensorPose, x: &Vec3, c: f64) -> Result<Self> {
        let r_t = (pose.tx - x).norm();
        let r_r = if pose.tx == pose.rx { r_t } else { (pose.rx - x).norm() };
        if r_t <= MIN_RANGE || r_r <= MIN_RANGE {
            return Err(SpinrError::CoincidentSensor);
        }
        Ok(PathGeometry {
            r_t,
            r_r,
            tau: (r_t + r_r) / c,
        })
    }

    /// `w / (R_T R_R) * exp(i*2*pi*f0*tau)`: the per-unit-sigma phasor in
    /// front of the tone kernel.
    #[inline]
    pub fn amplitude(&self, cfg: &ChirpConfig, weight: f64) -> C64 {
        let a = weight / (self.r_t * self.r_r);
        if cfg.f0 == 0.0 {
            C64::new(a, 0.0)
        } else {
            C64::from_polar(a, cfg.carrier_phase(self.tau))
        }
    }
}

pub(crate) fn check_sigmas(points: &[QuadraturePoint], sigmas: &[f64]) -> Result<()> {
    if points.len() != sigmas.len() {
        return Err(SpinrError::ShapeMismatch(format!(
            "{} points but {} sigmas",
            points.len(),
            sigmas.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_upstream(window: &BinWindow, upstream: &[C64]) -> Result<()> {
    if upstream.len() != window.width() {
        return Err(SpinrError::ShapeMismatch(format!(
            "{} upstream values for a {}-bin window",
            upstream.len(),
            window.width()
        )));
    }
    Ok(())
}

/// A forward model producing windowed spectral responses, with its adjoint.
///
/// `backward` returns `dL/dsigma_i = sum_k Re(conj(dZ_k/dsigma_i) * g_k)`
/// for `g_k = dL/dRe(Z_k) + i*dL/dIm(Z_k)`.
pub trait ForwardModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn forward(
        &self,
        cfg: &ChirpConfig,
        pose: &SensorPose,
        points: &[QuadraturePoint],
        sigmas: &[f64],
        window: &BinWindow,
    ) -> Result<SpectralResponse>;

    fn backward(
        &self,
        cfg: &ChirpConfig,
        pose: &SensorPose,
        points: &[QuadraturePoint],
        window: &BinWindow,
        upstream: &[C64],
    ) -> Result<Vec<f64>>;
}

/// `spectral`, `time` and `rq`.
pub fn registry() -> Registry<dyn ForwardModel> {
    let mut reg: Registry<dyn ForwardModel> = Registry::new("forward model");
    reg.register("spectral", Box::new(SpectralModel));
    reg.register("time", Box::new(TimeModel));
    reg.register("rq", Box::new(RqModel));
    reg
}

/// Per-thread operation counters used by the benchmark harness.
pub mod counters {
    use std::cell::Cell;

    thread_local! {
        static KERNEL_EVALS: Cell<u64> = const { Cell::new(0) };
        static SAMPLE_EVALS: Cell<u64> = const { Cell::new(0) };
        static BIN_ASSIGNS: Cell<u64> = const { Cell::new(0) };
    }

    #[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
    pub struct OpCounts {
        /// (point, bin) closed-form kernel evaluations.
        pub kernel_evals: u64,
        /// (point, sample) time-domain contributions.
        pub sample_evals: u64,
        /// Points assigned to a quantized bin.
        pub bin_assigns: u64,
    }

    impl OpCounts {
        pub fn total(&self) -> u64 {
            self.kernel_evals + self.sample_evals + self.bin_assigns
        }
    }

    pub fn reset() {
        KERNEL_EVALS.with(|c| c.set(0));
        SAMPLE_EVALS.with(|c| c.set(0));
        BIN_ASSIGNS.with(|c| c.set(0));
    }

    pub fn snapshot() -> OpCounts {
        OpCounts {
            kernel_evals: KERNEL_EVALS.with(Cell::get),
            sample_evals: SAMPLE_EVALS.with(Cell::get),
            bin_assigns: BIN_ASSIGNS.with(Cell::get),
        }
    }

    pub(crate) fn add_kernel(n: u64) {
        KERNEL_EVALS.with(|c| c.set(c.get() + n));
    }

    pub(crate) fn add_samples(n: u64) {
        SAMPLE_EVALS.with(|c| c.set(c.get() + n));
    }

    pub(crate) fn add_assigns(n: u64) {
        BIN_ASSIGNS.with(|c| c.set(c.get() + n));
    }
}
