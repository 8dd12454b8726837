//! Measurement sets and their binary format.
//!
//! Layout (little-endian):
//!
//! ```text
//! "SPNR" | u32 version | u64 header_len | JSON header
//! poses:   pose_count x 6 f64           (tx.xyz, rx.xyz)
//! values:  pose_count x width x 2 f32   (re, im; f64 when flags.f64_payload)
//! full:    pose_count x N x 2 f32/f64   (only when flags.full_spectrum)
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aperture::{BinWindow, SceneBounds, SensorPose};
use crate::forward::SpectralResponse;
use crate::signal::ChirpConfig;
use crate::{Result, SpinrError, Vec3, C64};

pub const DATASET_MAGIC: [u8; 4] = *b"SPNR";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetFlags {
    #[serde(default)]
    pub f64_payload: bool,
    #[serde(default)]
    pub full_spectrum: bool,
    #[serde(default)]
    pub mono: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    chirp: ChirpConfig,
    window: BinWindow,
    pose_count: usize,
    bounds: SceneBounds,
    flags: DatasetFlags,
    #[serde(default)]
    noise_sigma: f64,
    #[serde(default)]
    seed: u64,
}

/// Poses with their windowed responses.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub chirp: ChirpConfig,
    pub window: BinWindow,
    /// Scene domain the window was derived from.
    pub bounds: SceneBounds,
    pub flags: DatasetFlags,
    pub noise_sigma: f64,
    pub seed: u64,
    pub poses: Vec<SensorPose>,
    /// `window.width()` values per pose.
    pub values: Vec<Vec<C64>>,
    /// `N` values per pose; present iff `flags.full_spectrum`.
    pub full_spectra: Option<Vec<Vec<C64>>>,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn response(&self, i: usize) -> SpectralResponse {
        SpectralResponse {
            bins: self.window.bins(),
            values: self.values[i].clone(),
            n: self.chirp.num_samples,
        }
    }

    /// Largest response magnitude over all poses and bins.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        self.chirp.validate()?;
        self.bounds.validate()?;
        let n = self.chirp.num_samples;
        BinWindow::new(self.window.k_min, self.window.k_max, self.window.guard, n)?;
        if self.values.len() != self.poses.len() {
            return Err(SpinrError::ShapeMismatch(format!(
                "{} responses for {} poses",
                self.values.len(),
                self.poses.len()
            )));
        }
        if let Some(bad) = self.values.iter().position(|v| v.len() != self.window.width()) {
            return Err(SpinrError::ShapeMismatch(format!(
                "pose {bad} has {} values, window width is {}",
                self.values[bad].len(),
                self.window.width()
            )));
        }
        match (&self.full_spectra, self.flags.full_spectrum) {
            (Some(f), true) => {
                if f.len() != self.poses.len() || f.iter().any(|s| s.len() != n) {
                    return Err(SpinrError::ShapeMismatch(format!(
                        "full-spectrum block must hold {} x {n} values",
                        self.poses.len()
                    )));
                }
            }
            (None, false) => {}
            _ => {
                return Err(SpinrError::ShapeMismatch(
                    "full_spectrum flag disagrees with the presence of the full-spectrum block".into(),
                ))
            }
        }
        Ok(())
    }

    /// Rounds every stored value to the payload precision, so that an
    /// in-memory set equals its read-back form.
    pub fn quantize_to_payload(&mut self) {
        if self.flags.f64_payload {
            return;
        }
        let q = |v: &mut C64| *v = C64::new(v.re as f32 as f64, v.im as f32 as f64);
        self.values.iter_mut().flatten().for_each(q);
        if let Some(f) = self.full_spectra.as_mut() {
            f.iter_mut().flatten().for_each(q);
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let header = serde_json::to_vec(&Header {
            chirp: self.chirp,
            window: self.window,
            pose_count: self.poses.len(),
            bounds: self.bounds,
            flags: self.flags,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
        })?;
        let scalar = if self.flags.f64_payload { 8 } else { 4 };
        let full = if self.flags.full_spectrum { self.chirp.num_samples } else { 0 };
        let mut out = Vec::with_capacity(
            16 + header.len() + self.poses.len() * (48 + 2 * scalar * (self.window.width() + full)),
        );
        out.extend_from_slice(&DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for p in &self.poses {
            for v in p.tx.iter().chain(p.rx.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let f64p = self.flags.f64_payload;
        let mut put = |vals: &[C64]| {
            for v in vals {
                if f64p {
                    out.extend_from_slice(&v.re.to_le_bytes());
                    out.extend_from_slice(&v.im.to_le_bytes());
                } else {
                    out.extend_from_slice(&(v.re as f32).to_le_bytes());
                    out.extend_from_slice(&(v.im as f32).to_le_bytes());
                }
            }
        };
        self.values.iter().for_each(|v| put(v));
        if let Some(f) = &self.full_spectra {
            f.iter().for_each(|v| put(v));
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = ByteReader::new(bytes);
        cur.expect_preamble(DATASET_MAGIC, DATASET_VERSION)?;
        let h: Header =
            serde_json::from_slice(cur.json_header()?).map_err(|e| SpinrError::MalformedHeader(e.to_string()))?;
        h.chirp
            .validate()
            .map_err(|e| SpinrError::MalformedHeader(e.to_string()))?;
        let width = h.window.width();
        let n = h.chirp.num_samples;
        let scalar = if h.flags.f64_payload { 8 } else { 4 };
        let full = if h.flags.full_spectrum { n } else { 0 };
        // check the declared payload size up front so a truncated file never
        // allocates or yields partial data
        let expected = h
            .pose_count
            .checked_mul(48 + 2 * scalar * (width + full))
            .ok_or_else(|| SpinrError::MalformedHeader("pose_count overflows".into()))?;
        if cur.remaining() < expected {
            return Err(SpinrError::Truncated(format!(
                "payload needs {expected} bytes, {} present",
                cur.remaining()
            )));
        }
        let mut poses = Vec::with_capacity(h.pose_count);
        for _ in 0..h.pose_count {
            let mut v = [0.0; 6];
            for x in &mut v {
                *x = cur.f64("poses")?;
            }
            poses.push(SensorPose {
                tx: Vec3::new(v[0], v[1], v[2]),
                rx: Vec3::new(v[3], v[4], v[5]),
            });
        }
        let mut block = |len: usize| -> Result<Vec<Vec<C64>>> {
            (0..h.pose_count)
                .map(|_| {
                    (0..len)
                        .map(|_| {
                            Ok(if h.flags.f64_payload {
                                C64::new(cur.f64("values")?, cur.f64("values")?)
                            } else {
                                C64::new(cur.f32("values")? as f64, cur.f32("values")? as f64)
                            })
                        })
                        .collect()
                })
                .collect()
        };
        let values = block(width)?;
        let full_spectra = if h.flags.full_spectrum { Some(block(n)?) } else { None };
        cur.expect_end()?;
        let set = MeasurementSet {
            chirp: h.chirp,
            window: h.window,
            bounds: h.bounds,
            flags: h.flags,
            noise_sigma: h.noise_sigma,
            seed: h.seed,
            poses,
            values,
            full_spectra,
        };
        set.validate().map_err(|e| SpinrError::MalformedHeader(e.to_string()))?;
        Ok(set)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        f.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Bounds-checked little-endian cursor shared by the binary formats.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(SpinrError::Truncated(format!(
                "{what}: wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn expect_preamble(&mut self, magic: [u8; 4], version: u32) -> Result<()> {
        let found: [u8; 4] = self.take(4, "magic")?.try_into().unwrap();
        if found != magic {
            return Err(SpinrError::BadMagic {
                expected: magic,
                found,
            });
        }
        let v = self.u32("version")?;
        if v != version {
            return Err(SpinrError::VersionMismatch {
                found: v,
                supported: version,
            });
        }
        Ok(())
    }

    pub(crate) fn json_header(&mut self) -> Result<&'a [u8]> {
        let len = self.u64("header length")?;
        let len = usize::try_from(len).map_err(|_| SpinrError::MalformedHeader("header length overflows".into()))?;
        self.take(len, "header")
    }

    pub(crate) fn expect_end(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(SpinrError::MalformedHeader(format!(
                "{} trailing bytes after declared payload",
                self.remaining()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_set(seed: u64, poses: usize, flags: DatasetFlags) -> MeasurementSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chirp = ChirpConfig::awr1843();
        let window = BinWindow::new(3, 3 + rng.gen_range(0..12), 2, 256).unwrap();
        let mut c = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let values = (0..poses).map(|_| (0..window.width()).map(|_| c()).collect()).collect();
        let full_spectra = flags
            .full_spectrum
            .then(|| (0..poses).map(|_| (0..256).map(|_| c()).collect()).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let mut set = MeasurementSet {
            chirp,
            window,
            bounds: SceneBounds::cube(Vec3::zeros(), 0.24).unwrap(),
            flags,
            noise_sigma: 0.0,
            seed,
            poses: (0..poses)
                .map(|_| SensorPose {
                    tx: Vec3::new(rng.gen(), rng.gen(), rng.gen()),
                    rx: Vec3::new(rng.gen(), rng.gen(), rng.gen()),
                })
                .collect(),
            values,
            full_spectra,
        };
        set.quantize_to_payload();
        set
    }

    #[test]
    fn truncation_is_distinct_error() {
        let set = random_set(1, 5, DatasetFlags::default());
        let bytes = set.to_bytes().unwrap();
        for cut in [2, 7, 15, 40, bytes.len() - 1] {
            assert!(matches!(
                MeasurementSet::from_bytes(&bytes[..cut]),
                Err(SpinrError::Truncated(_))
            ));
        }
    }

    #[test]
    fn header_byte_flips() {
        let set = random_set(2, 3, DatasetFlags::default());
        let bytes = set.to_bytes().unwrap();
        for i in 0..4 {
            let mut b = bytes.clone();
            b[i] ^= 0x20;
            assert!(matches!(MeasurementSet::from_bytes(&b), Err(SpinrError::BadMagic { .. })));
        }
        for i in 4..8 {
            let mut b = bytes.clone();
            b[i] ^= 0x01;
            assert!(matches!(
                MeasurementSet::from_bytes(&b),
                Err(SpinrError::VersionMismatch { .. })
            ));
        }
    }

    #[test]
    fn flag_block_mismatch_rejected() {
        let mut set = random_set(3, 2, DatasetFlags::default());
        set.flags.full_spectrum = true;
        assert!(set.to_bytes().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn round_trip(seed in 0u64..1000, poses in 0usize..6, f64p: bool, full: bool, mono: bool) {
            let set = random_set(seed, poses, DatasetFlags { f64_payload: f64p, full_spectrum: full, mono });
            let bytes = set.to_bytes().unwrap();
            let back = MeasurementSet::from_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &set);
            prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }
}
