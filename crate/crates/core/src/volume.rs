//! Dense scalar volumes and their on-disk format.
//!
//! Layout: magic `SPVL`, u32 version, u64 JSON header length, UTF-8 JSON
//! header `{origin, voxel_size, dims}`, then `dims` product f64 intensities,
//! x-fastest. All integers and floats little-endian.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aperture::SceneBounds;
use crate::{Result, SpinrError, Vec3};

pub const VOLUME_MAGIC: [u8; 4] = *b"SPVL";
pub const VOLUME_VERSION: u32 = 1;

/// Geometry of a voxel grid: cubic voxels, x-fastest layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Vec3,
    pub voxel_size: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: Vec3, voxel_size: f64, dims: [usize; 3]) -> Result<Self> {
        if !(voxel_size > 0.0) || dims.contains(&0) || !origin.iter().all(|v| v.is_finite()) {
            return Err(SpinrError::InvalidConfig(format!(
                "grid requires voxel_size > 0 and dims >= 1 (voxel_size={voxel_size}, dims={dims:?})"
            )));
        }
        Ok(GridSpec {
            origin,
            voxel_size,
            dims,
        })
    }

    /// Cubic voxels over `bounds`, `resolution` along the longest axis.
    pub fn covering(bounds: &SceneBounds, resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(SpinrError::InvalidConfig("grid resolution must be >= 1".into()));
        }
        let ext = bounds.extent();
        let h = ext.max() / resolution as f64;
        let dims = [0, 1, 2].map(|i| ((ext[i] / h) - 1e-9).ceil().max(1.0) as usize);
        Self::new(bounds.min_corner, h, dims)
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn center(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.unravel(idx);
        self.origin + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.voxel_size
    }

    pub fn centers(&self) -> Vec<Vec3> {
        (0..self.len()).map(|i| self.center(i)).collect()
    }

    /// Voxel containing `p`, if inside the grid box.
    pub fn locate(&self, p: &Vec3) -> Option<usize> {
        let rel = (p - self.origin) / self.voxel_size;
        let mut ijk = [0usize; 3];
        for a in 0..3 {
            if !(rel[a] >= 0.0) {
                return None;
            }
            let i = rel[a].floor() as usize;
            // points on the far face belong to the last voxel
            ijk[a] = if i == self.dims[a] && rel[a] == self.dims[a] as f64 { i - 1 } else { i };
            if ijk[a] >= self.dims[a] {
                return None;
            }
        }
        Some(self.index(ijk[0], ijk[1], ijk[2]))
    }

    pub fn bounds(&self) -> SceneBounds {
        let ext = Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.voxel_size;
        SceneBounds {
            min_corner: self.origin,
            max_corner: self.origin + ext,
        }
    }

    pub fn same_geometry(&self, other: &GridSpec) -> bool {
        self.dims == other.dims
            && (self.voxel_size - other.voxel_size).abs() <= 1e-12 * self.voxel_size
            && (self.origin - other.origin).norm() <= 1e-12 * self.voxel_size.max(1.0)
    }
}

/// Dense nonnegative scalar grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub grid: GridSpec,
    pub intensities: Vec<f64>,
}

impl Volume {
    pub fn new(origin: Vec3, voxel_size: f64, dims: [usize; 3], intensities: Vec<f64>) -> Result<Self> {
        Self::from_grid(GridSpec::new(origin, voxel_size, dims)?, intensities)
    }

    pub fn from_grid(grid: GridSpec, intensities: Vec<f64>) -> Result<Self> {
        if intensities.len() != grid.len() {
            return Err(SpinrError::ShapeMismatch(format!(
                "{} intensities for {} voxels",
                intensities.len(),
                grid.len()
            )));
        }
        if intensities.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SpinrError::InvalidConfig("volume intensities must be finite and >= 0".into()));
        }
        Ok(Volume { grid, intensities })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Volume {
            intensities: vec![0.0; grid.len()],
            grid,
        }
    }

    pub fn max(&self) -> f64 {
        self.intensities.iter().copied().fold(0.0, f64::max)
    }

    pub fn argmax(&self) -> usize {
        self.intensities
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }

    pub fn argmax_position(&self) -> Vec3 {
        self.grid.center(self.argmax())
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.intensities[self.grid.index(i, j, k)]
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let header = serde_json::to_vec(&self.grid)?;
        w.write_all(&VOLUME_MAGIC)?;
        w.write_all(&VOLUME_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.intensities.len() * 8);
        for v in &self.intensities {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = crate::dataset::ByteReader::new(&bytes);
        cur.expect_preamble(VOLUME_MAGIC, VOLUME_VERSION)?;
        let header = cur.json_header()?;
        let grid: GridSpec =
            serde_json::from_slice(header).map_err(|e| SpinrError::MalformedHeader(e.to_string()))?;
        let mut intensities = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            intensities.push(cur.f64("volume intensities")?);
        }
        cur.expect_end()?;
        Volume::from_grid(grid, intensities)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut std::fs::File::open(path)?)
    }
}
