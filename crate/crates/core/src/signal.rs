//! FMCW waveform math: beat-signal synthesis, range/bin conversions and the
//! closed-form DFT of a sampled complex tone.
//!
//! Every DFT in this crate uses the 1/N-scaled convention
//!
//! ```text
//! Z_k = (1/N) * sum_n x_n * exp(-i * beta_k * n),   beta_k = 2*pi*k/N
//! ```
//!
//! so that a unit tone sitting exactly on bin `k` produces `Z_k = 1`.
//!
//! The dechirped beat signal is modeled as `exp(i*2*pi*f0*tau) * exp(i*2*pi*S*tau*t)`.
//! The residual video phase term (`-0.5*S*tau^2`) is dropped; at desk-scale
//! ranges it is far below one milliradian.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::{Result, SpinrError, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Below this offset (rad/sample) from a bin center the kernel uses its
/// analytic on-bin limit.
pub const ON_BIN_TOLERANCE: f64 = 1e-9;

/// Offsets from a bin center below this use the product form of the
/// Dirichlet kernel, which stays accurate where `1 - exp(i*theta)` cancels.
const NEAR_BIN: f64 = 0.05;

fn default_c() -> f64 {
    SPEED_OF_LIGHT
}

/// FMCW chirp parameters shared by every model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpConfig {
    /// Start frequency, Hz.
    #[serde(default)]
    pub f0: f64,
    /// Chirp slope, Hz/s.
    pub slope: f64,
    /// ADC sample rate, Hz.
    pub sample_rate: f64,
    /// Samples per chirp (DFT length).
    pub num_samples: usize,
    /// Propagation speed, m/s.
    #[serde(default = "default_c")]
    pub c: f64,
}

impl ChirpConfig {
    pub fn new(f0: f64, slope: f64, sample_rate: f64, num_samples: usize) -> Result<Self> {
        let cfg = ChirpConfig {
            f0,
            slope,
            sample_rate,
            num_samples,
            c: SPEED_OF_LIGHT,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// AWR1843-like chirp: 70.295 MHz/us slope, 5 MHz ADC, 256 samples, f0 = 0.
    pub fn awr1843() -> Self {
        ChirpConfig {
            f0: 0.0,
            slope: 70.295e12,
            sample_rate: 5e6,
            num_samples: 256,
            c: SPEED_OF_LIGHT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.slope > 0.0
            && self.sample_rate > 0.0
            && self.num_samples >= 2
            && self.c > 0.0
            && self.f0.is_finite()
            && self.slope.is_finite()
            && self.sample_rate.is_finite()
            && self.c.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SpinrError::InvalidConfig(format!(
                "chirp requires slope > 0, sample_rate > 0, num_samples >= 2, c > 0; got {self:?}"
            )))
        }
    }

    /// Swept bandwidth over the sampled chirp, `S * N / fs`.
    pub fn bandwidth(&self) -> f64 {
        self.slope * self.num_samples as f64 / self.sample_rate
    }

    /// Sampled chirp duration `N / fs`.
    pub fn chirp_duration(&self) -> f64 {
        self.num_samples as f64 / self.sample_rate
    }

    /// Per-sample angular frequency of the beat tone produced by delay `tau`.
    #[inline]
    pub fn angular_freq(&self, tau: f64) -> f64 {
        TAU * self.slope * tau / self.sample_rate
    }

    /// Carrier phase `2*pi*f0*tau`.
    #[inline]
    pub fn carrier_phase(&self, tau: f64) -> f64 {
        TAU * self.f0 * tau
    }
}

/// Parameters of the sampled tone `M * exp(i*(alpha*n + phi))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneParams {
    magnitude: f64,
    phase: f64,
    angular_freq: f64,
}

impl ToneParams {
    pub fn new(magnitude: f64, phase: f64, angular_freq: f64) -> Result<Self> {
        if !(magnitude >= 0.0) || !phase.is_finite() || !angular_freq.is_finite() {
            return Err(SpinrError::InvalidConfig(format!(
                "tone requires magnitude >= 0 and finite phase/frequency (M={magnitude}, phi={phase}, alpha={angular_freq})"
            )));
        }
        Ok(ToneParams {
            magnitude,
            phase: wrap_phase(phase),
            angular_freq,
        })
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    /// Phase wrapped to (-pi, pi].
    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn angular_freq(&self) -> f64 {
        self.angular_freq
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_phase(phase: f64) -> f64 {
    let mut p = phase % TAU;
    if p <= -PI {
        p += TAU;
    } else if p > PI {
        p -= TAU;
    }
    p
}

/// `c / (2B)`.
pub fn range_resolution(cfg: &ChirpConfig) -> f64 {
    cfg.c / (2.0 * cfg.bandwidth())
}

/// Beat frequency `2*S*d/c` of a monostatic scatterer at `distance`.
pub fn beat_frequency(cfg: &ChirpConfig, distance: f64) -> f64 {
    2.0 * cfg.slope * distance / cfg.c
}

/// Fractional DFT bin `S*tau*N/fs` at which a delay concentrates its energy.
pub fn fractional_bin(cfg: &ChirpConfig, round_trip_delay: f64) -> Result<f64> {
    let bin = cfg.slope * round_trip_delay * cfg.num_samples as f64 / cfg.sample_rate;
    if bin >= cfg.num_samples as f64 || !bin.is_finite() {
        return Err(SpinrError::BeyondUnambiguousRange {
            bin,
            n: cfg.num_samples,
        });
    }
    Ok(bin)
}

/// Sampled dechirped beat signal of one scatterer with round-trip `delay`.
pub fn beat_signal(cfg: &ChirpConfig, delay: f64, amplitude: f64) -> Vec<C64> {
    let carrier = C64::from_polar(amplitude, cfg.carrier_phase(delay));
    let alpha = cfg.angular_freq(delay);
    (0..cfg.num_samples)
        .map(|n| carrier * C64::from_polar(1.0, alpha * n as f64))
        .collect()
}

/// `(1/N) * sum_{n<N} exp(i*theta*n)` evaluated without cancellation.
///
/// `theta` is the offset from a bin center; it is reduced modulo 2*pi first.
#[inline]
fn dirichlet_sum(theta: f64, n: usize) -> C64 {
    let nf = n as f64;
    let t = theta - TAU * (theta / TAU).round();
    if t.abs() < ON_BIN_TOLERANCE {
        // Removable singularity: the sum tends to N * exp(i*t*(N-1)/2).
        return C64::from_polar(1.0, 0.5 * t * (nf - 1.0));
    }
    let ratio = (0.5 * nf * t).sin() / (0.5 * t).sin();
    C64::from_polar(ratio / nf, 0.5 * t * (nf - 1.0))
}

/// Closed-form 1/N DFT of `M*exp(i*(alpha*n + phi))` at bin `k`.
pub fn tone_dft(tone: &ToneParams, n: usize, k: usize) -> C64 {
    debug_assert!(k < n);
    let beta = TAU * k as f64 / n as f64;
    C64::from_polar(tone.magnitude, tone.phase) * dirichlet_sum(tone.angular_freq - beta, n)
}

/// `|Z_k|` of a unit tone at every bin.
pub fn dirichlet_envelope(alpha: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(SpinrError::InvalidConfig(format!("N must be >= 2, got {n}")));
    }
    let tone = ToneParams::new(1.0, 0.0, alpha)?;
    Ok((0..n).map(|k| tone_dft(&tone, n, k).norm()).collect())
}

/// Precomputed per-bin factors for evaluating the tone kernel over a fixed
/// set of bins, many times.
///
/// For the bulk of bins the kernel is evaluated as
/// `(1 - e^{i*alpha*N}) / N * (1/2 + i/2 * cot((alpha - beta_k)/2))`,
/// which costs one complex multiply and one division per bin. Bins within
/// `NEAR_BIN` of the tone fall back to [`dirichlet_sum`].
#[derive(Debug, Clone)]
pub struct SpectralKernel {
    n: usize,
    bins: Vec<usize>,
    betas: Vec<f64>,
    /// `exp(-i*beta_k/2)`
    half_rot: Vec<C64>,
}

impl SpectralKernel {
    pub fn new(n: usize, bins: &[usize]) -> Self {
        let betas: Vec<f64> = bins.iter().map(|&k| TAU * k as f64 / n as f64).collect();
        let half_rot = betas.iter().map(|b| C64::from_polar(1.0, -0.5 * b)).collect();
        SpectralKernel {
            n,
            bins: bins.to_vec(),
            betas,
            half_rot,
        }
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Writes `scale * (1/N) * sum_n exp(i*(alpha - beta_k)*n)` for every bin
    /// into `out`.
    #[inline]
    pub fn eval_into(&self, alpha: f64, scale: C64, out: &mut [C64]) {
        debug_assert_eq!(out.len(), self.bins.len());
        let nf = self.n as f64;
        let a = alpha.rem_euclid(TAU);
        let half = C64::from_polar(1.0, 0.5 * a);
        let (s_na, c_na) = (a * nf).sin_cos();
        // (1 - e^{i a N}) / N * scale
        let num = C64::new(1.0 - c_na, -s_na) * (scale / nf);
        for (j, o) in out.iter_mut().enumerate() {
            let mut theta = a - self.betas[j];
            if theta > PI {
                theta -= TAU;
            } else if theta <= -PI {
                theta += TAU;
            }
            if theta.abs() < NEAR_BIN {
                *o = scale * dirichlet_sum(theta, self.n);
            } else {
                let h = half * self.half_rot[j];
                let cot = h.re / h.im;
                *o = num * C64::new(0.5, 0.5 * cot);
            }
        }
    }

    pub fn eval(&self, alpha: f64, scale: C64) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.bins.len()];
        self.eval_into(alpha, scale, &mut out);
        out
    }
}
