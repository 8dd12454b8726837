//! Cylindrical inverse-synthetic-aperture geometry: pose generation,
//! multistatic-to-monostatic conversion and the bin window implied by the
//! scene bounds.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::forward::SpectralResponse;
use crate::signal::{fractional_bin, ChirpConfig};
use crate::{Result, SpinrError, Vec3, C64};

/// One transmit/receive element pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorPose {
    pub tx: Vec3,
    pub rx: Vec3,
}

impl SensorPose {
    pub fn monostatic(p: Vec3) -> Self {
        SensorPose { tx: p, rx: p }
    }

    pub fn is_monostatic(&self) -> bool {
        self.tx == self.rx
    }

    pub fn midpoint(&self) -> Vec3 {
        (self.tx + self.rx) * 0.5
    }

    /// Round-trip delay to `x`, seconds.
    pub fn delay(&self, x: &Vec3, c: f64) -> f64 {
        ((self.tx - x).norm() + (self.rx - x).norm()) / c
    }
}

/// Axis-aligned scene domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneBounds {
    pub min_corner: Vec3,
    pub max_corner: Vec3,
}

impl SceneBounds {
    pub fn new(min_corner: Vec3, max_corner: Vec3) -> Result<Self> {
        let b = SceneBounds {
            min_corner,
            max_corner,
        };
        b.validate()?;
        Ok(b)
    }

    /// Cube of side `side` centered at `center`.
    pub fn cube(center: Vec3, side: f64) -> Result<Self> {
        let h = Vec3::repeat(0.5 * side);
        Self::new(center - h, center + h)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0..3).all(|i| {
            self.min_corner[i].is_finite()
                && self.max_corner[i].is_finite()
                && self.min_corner[i] < self.max_corner[i]
        });
        if ok {
            Ok(())
        } else {
            Err(SpinrError::InvalidConfig(format!(
                "scene bounds require min < max componentwise: {:?} .. {:?}",
                self.min_corner.as_slice(),
                self.max_corner.as_slice()
            )))
        }
    }

    pub fn extent(&self) -> Vec3 {
        self.max_corner - self.min_corner
    }

    pub fn center(&self) -> Vec3 {
        (self.min_corner + self.max_corner) * 0.5
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min_corner[i] && p[i] <= self.max_corner[i])
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (lo, hi) = (self.min_corner, self.max_corner);
        let mut out = [lo; 8];
        for (i, c) in out.iter_mut().enumerate() {
            *c = Vec3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            );
        }
        out
    }

    /// Closest point of the box to `p`.
    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min_corner.x, self.max_corner.x),
            p.y.clamp(self.min_corner.y, self.max_corner.y),
            p.z.clamp(self.min_corner.z, self.max_corner.z),
        )
    }
}

/// Contiguous range of DFT bins covering every realizable round-trip delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinWindow {
    pub k_min: usize,
    pub k_max: usize,
    pub guard: usize,
}

impl BinWindow {
    pub fn new(k_min: usize, k_max: usize, guard: usize, n: usize) -> Result<Self> {
        if k_min > k_max || k_max >= n {
            return Err(SpinrError::InvalidConfig(format!(
                "bin window requires 0 <= k_min <= k_max < N (k_min={k_min}, k_max={k_max}, N={n})"
            )));
        }
        Ok(BinWindow { k_min, k_max, guard })
    }

    /// Full spectrum `[0, N)`.
    pub fn full(n: usize) -> Self {
        BinWindow {
            k_min: 0,
            k_max: n - 1,
            guard: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.k_max - self.k_min + 1
    }

    pub fn bins(&self) -> Vec<usize> {
        (self.k_min..=self.k_max).collect()
    }

    pub fn contains(&self, k: usize) -> bool {
        k >= self.k_min && k <= self.k_max
    }
}

fn default_guard() -> usize {
    2
}

/// Vertical actuator stations times turntable angles, with a MIMO virtual
/// array applied at every station.
///
/// Offsets are expressed in the station's local frame
/// `(lateral, vertical, toward-axis)`, where lateral is the tangent of the
/// cylinder in the direction of increasing angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylindricalApertureSpec {
    pub radius: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub n_z: usize,
    pub n_theta: usize,
    #[serde(default = "Vec3::zeros")]
    pub center: Vec3,
    #[serde(default = "zero_offsets")]
    pub tx_offsets: Vec<Vec3>,
    #[serde(default = "zero_offsets")]
    pub rx_offsets: Vec<Vec3>,
    /// Guard bins added on each side of the geometric window.
    #[serde(default = "default_guard")]
    pub guard: usize,
}

fn zero_offsets() -> Vec<Vec3> {
    vec![Vec3::zeros()]
}

/// Element spacing of the default virtual array: half a wavelength at 77 GHz.
pub const HALF_WAVELENGTH_77GHZ: f64 = 0.5 * crate::signal::SPEED_OF_LIGHT / 77e9;

impl CylindricalApertureSpec {
    /// Single virtual element per station.
    pub fn monostatic(radius: f64, z_min: f64, z_max: f64, n_z: usize, n_theta: usize) -> Self {
        CylindricalApertureSpec {
            radius,
            z_min,
            z_max,
            n_z,
            n_theta,
            center: Vec3::zeros(),
            tx_offsets: zero_offsets(),
            rx_offsets: zero_offsets(),
            guard: default_guard(),
        }
    }

    /// Desk-scale default: 4 heights x 90 angles, one virtual element.
    pub fn desk_default() -> Self {
        Self::monostatic(0.23, -0.06, 0.06, 4, 90)
    }

    /// 3-Tx / 4-Rx linear layout. Rx elements are spaced by half a wavelength,
    /// Tx elements by four times that, giving a 12-element virtual array.
    pub fn mimo_3x4_offsets() -> (Vec<Vec3>, Vec<Vec3>) {
        let d = HALF_WAVELENGTH_77GHZ;
        let tx = (0..3)
            .map(|i| Vec3::new(4.0 * d * (i as f64 - 1.0), 0.0, 0.0))
            .collect();
        let rx = (0..4)
            .map(|i| Vec3::new(d * (i as f64 - 1.5), 0.0, 0.0))
            .collect();
        (tx, rx)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.radius > 0.0
            && self.z_max >= self.z_min
            && self.n_z >= 1
            && self.n_theta >= 1
            && !self.tx_offsets.is_empty()
            && !self.rx_offsets.is_empty();
        if ok {
            Ok(())
        } else {
            Err(SpinrError::InvalidConfig(
                "aperture requires radius > 0, z_max >= z_min, n_z >= 1, n_theta >= 1 and non-empty offset lists"
                    .into(),
            ))
        }
    }

    pub fn pose_count(&self) -> usize {
        self.n_z * self.n_theta * self.tx_offsets.len() * self.rx_offsets.len()
    }
}

/// Emits poses ordered by height, then angle, then Tx, then Rx.
pub fn generate_poses(spec: &CylindricalApertureSpec) -> Result<Vec<SensorPose>> {
    spec.validate()?;
    let mut poses = Vec::with_capacity(spec.pose_count());
    for iz in 0..spec.n_z {
        let z = if spec.n_z == 1 {
            spec.z_min
        } else {
            spec.z_min + (spec.z_max - spec.z_min) * iz as f64 / (spec.n_z - 1) as f64
        };
        for it in 0..spec.n_theta {
            let theta = TAU * it as f64 / spec.n_theta as f64;
            let (s, c) = theta.sin_cos();
            let station = spec.center + Vec3::new(spec.radius * c, spec.radius * s, z);
            let lateral = Vec3::new(-s, c, 0.0);
            let up = Vec3::z();
            let inward = Vec3::new(-c, -s, 0.0);
            let place = |o: &Vec3| station + lateral * o.x + up * o.y + inward * o.z;
            for t in &spec.tx_offsets {
                let tx = place(t);
                for r in &spec.rx_offsets {
                    poses.push(SensorPose { tx, rx: place(r) });
                }
            }
        }
    }
    Ok(poses)
}

/// Delay of a pose to the nearest and farthest point of `bounds`.
///
/// The maximum of a convex function over a box sits at a corner. The minimum
/// uses the closest box point to each element separately, which is a lower
/// bound for the bistatic path.
fn delay_range(pose: &SensorPose, bounds: &SceneBounds, c: f64) -> (f64, f64) {
    let near = ((pose.tx - bounds.clamp(&pose.tx)).norm() + (pose.rx - bounds.clamp(&pose.rx)).norm()) / c;
    let far = bounds
        .corners()
        .iter()
        .map(|x| pose.delay(x, c))
        .fold(0.0, f64::max);
    (near, far)
}

pub fn bin_window(
    cfg: &ChirpConfig,
    bounds: &SceneBounds,
    poses: &[SensorPose],
    guard: usize,
) -> Result<BinWindow> {
    if poses.is_empty() {
        return Err(SpinrError::Empty("bin_window needs at least one pose".into()));
    }
    let (mut tau_min, mut tau_max) = (f64::INFINITY, 0.0f64);
    for p in poses {
        let (lo, hi) = delay_range(p, bounds, cfg.c);
        tau_min = tau_min.min(lo);
        tau_max = tau_max.max(hi);
    }
    let n = cfg.num_samples;
    let lo_frac = fractional_bin(cfg, tau_min)?;
    let hi_frac = fractional_bin(cfg, tau_max)?;
    let (lo, hi) = if lo_frac == hi_frac {
        // a single delay: the window is its rounded bin
        let k = lo_frac.round() as usize;
        (k, k)
    } else {
        (lo_frac.floor() as usize, hi_frac.ceil() as usize)
    };
    if hi >= n {
        return Err(SpinrError::BeyondUnambiguousRange {
            bin: hi as f64,
            n,
        });
    }
    Ok(BinWindow {
        k_min: lo.saturating_sub(guard),
        k_max: (hi + guard).min(n - 1),
        guard,
    })
}

/// Bin window of a single point for a set of poses, using rounded bins.
pub fn point_window(cfg: &ChirpConfig, x: &Vec3, poses: &[SensorPose], guard: usize) -> Result<BinWindow> {
    let mut lo = usize::MAX;
    let mut hi = 0;
    for p in poses {
        let k = fractional_bin(cfg, p.delay(x, cfg.c))?.round() as usize;
        lo = lo.min(k);
        hi = hi.max(k);
    }
    if poses.is_empty() {
        return Err(SpinrError::Empty("point_window needs at least one pose".into()));
    }
    let n = cfg.num_samples;
    Ok(BinWindow {
        k_min: lo.saturating_sub(guard),
        k_max: (hi + guard).min(n - 1),
        guard,
    })
}

/// Per-bin phase (radians) the forward model accrues when the delay to the
/// reference point changes from `tau_mono` to `tau_multi`.
///
/// The tone kernel for delay `tau` carries the phasor
/// `exp(i*(2*pi*f0*tau + alpha(tau)*(N-1)/2))` in front of a real Dirichlet
/// ratio, so the difference is the same for every bin.
pub fn mono_phase(cfg: &ChirpConfig, tau_multi: f64, tau_mono: f64) -> f64 {
    let dtau = tau_multi - tau_mono;
    cfg.carrier_phase(dtau) + cfg.angular_freq(dtau) * 0.5 * (cfg.num_samples as f64 - 1.0)
}

/// Maps a bistatic pose and its response onto a virtual monostatic element
/// at the Tx-Rx midpoint, phase-compensated at `reference` (scene center).
///
/// A monostatic pose is returned unchanged.
pub fn mono_convert(
    pose: &SensorPose,
    response: &SpectralResponse,
    cfg: &ChirpConfig,
    reference: &Vec3,
) -> Result<(SensorPose, SpectralResponse)> {
    if response.n != cfg.num_samples || response.bins.iter().any(|&k| k >= cfg.num_samples) {
        return Err(SpinrError::ShapeMismatch(format!(
            "response bins must lie in [0, {})",
            cfg.num_samples
        )));
    }
    if pose.is_monostatic() {
        return Ok((*pose, response.clone()));
    }
    let mid = pose.midpoint();
    let virt = SensorPose::monostatic(mid);
    let phase = mono_phase(cfg, pose.delay(reference, cfg.c), virt.delay(reference, cfg.c));
    let rot = C64::from_polar(1.0, -phase);
    let values = response.values.iter().map(|v| v * rot).collect();
    Ok((
        virt,
        SpectralResponse {
            bins: response.bins.clone(),
            values,
            n: response.n,
        },
    ))
}
