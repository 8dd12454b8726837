use std::cell::RefCell;
use std::f64::consts::TAU;

use rustfft::FftPlanner;

use super::SpectralResponse;
use crate::aperture::BinWindow;
use crate::{Result, SpinrError, C64};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// 1/N-scaled DFT via FFT.
pub fn dft(samples: &[C64]) -> Vec<C64> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf = samples.to_vec();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    fft.process(&mut buf);
    let inv = 1.0 / n as f64;
    for v in &mut buf {
        *v *= inv;
    }
    buf
}

/// Inverse of [`dft`]: `x_n = sum_k Z_k exp(i*beta_k*n)`.
pub fn idft(bins: &[C64]) -> Vec<C64> {
    let n = bins.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf = bins.to_vec();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    fft.process(&mut buf);
    buf
}

/// Direct O(N^2) evaluation of the 1/N DFT.
pub fn dft_naive(samples: &[C64]) -> Vec<C64> {
    let n = samples.len();
    (0..n)
        .map(|k| {
            let mut acc = C64::new(0.0, 0.0);
            for (t, x) in samples.iter().enumerate() {
                // reduce k*t mod n before scaling to keep the angle small
                let m = (k * t) % n;
                acc += x * C64::from_polar(1.0, -TAU * m as f64 / n as f64);
            }
            acc / n as f64
        })
        .collect()
}

/// Keeps the window bins of a full spectrum.
pub fn truncate(bins: &[C64], window: &BinWindow) -> Result<SpectralResponse> {
    if window.k_max >= bins.len() {
        return Err(SpinrError::ShapeMismatch(format!(
            "window up to bin {} on a {}-bin spectrum",
            window.k_max,
            bins.len()
        )));
    }
    Ok(SpectralResponse {
        bins: window.bins(),
        values: bins[window.k_min..=window.k_max].to_vec(),
        n: bins.len(),
    })
}
