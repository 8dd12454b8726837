use serde::{Deserialize, Serialize};

use super::{check_upstream, sigmoid, softplus, softplus_inv, LayerSpan, SceneField};
use crate::aperture::SceneBounds;
use crate::volume::Volume;
use crate::{Result, SpinrError, Vec3};

/// Map from stored voxel parameters to reflectivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GridActivation {
    #[default]
    Softplus,
    /// `max(p, 0)`
    IdentityClamp,
}

impl GridActivation {
    #[inline]
    fn apply(self, p: f64) -> f64 {
        match self {
            GridActivation::Softplus => softplus(p),
            GridActivation::IdentityClamp => p.max(0.0),
        }
    }

    #[inline]
    fn derivative(self, p: f64) -> f64 {
        match self {
            GridActivation::Softplus => sigmoid(p),
            GridActivation::IdentityClamp => {
                if p >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn inverse(self, sigma: f64) -> f64 {
        match self {
            GridActivation::Softplus => softplus_inv(sigma),
            GridActivation::IdentityClamp => sigma,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct GridConfig {
    /// Voxels along the longest scene axis.
    #[serde(default = "default_resolution")]
    resolution: usize,
    #[serde(default)]
    activation: GridActivation,
    #[serde(default = "default_init_sigma")]
    init_sigma: f64,
    /// Explicit geometry, as written by `config()`; overrides `resolution`.
    #[serde(default)]
    origin: Option<Vec3>,
    #[serde(default)]
    voxel_size: Option<f64>,
    #[serde(default)]
    dims: Option<[usize; 3]>,
}

fn default_resolution() -> usize {
    64
}

fn default_init_sigma() -> f64 {
    1e-3
}

/// Dense voxel grid with trilinear interpolation between voxel centers.
///
/// Parameters are stored before activation, x-fastest. Positions outside the
/// grid box read as zero and receive no gradient; between the box face and
/// the outermost centers the value is held constant.
#[derive(Debug, Clone)]
pub struct VoxelGridField {
    origin: Vec3,
    voxel_size: f64,
    dims: [usize; 3],
    activation: GridActivation,
    init_sigma: f64,
    values: Vec<f64>,
}

/// Up to eight voxels and their interpolation weights.
struct Stencil {
    idx: [usize; 8],
    w: [f64; 8],
}

impl VoxelGridField {
    pub fn new(
        origin: Vec3,
        voxel_size: f64,
        dims: [usize; 3],
        activation: GridActivation,
        init_sigma: f64,
    ) -> Result<Self> {
        if !(voxel_size > 0.0) || dims.contains(&0) {
            return Err(SpinrError::InvalidConfig(format!(
                "grid requires voxel_size > 0 and dims >= 1 (voxel_size={voxel_size}, dims={dims:?})"
            )));
        }
        let p0 = activation.inverse(init_sigma);
        Ok(VoxelGridField {
            origin,
            voxel_size,
            dims,
            activation,
            init_sigma,
            values: vec![p0; dims.iter().product()],
        })
    }

    /// Cubic voxels covering `bounds`, `resolution` voxels along the longest axis.
    pub fn covering(bounds: &SceneBounds, resolution: usize, activation: GridActivation, init_sigma: f64) -> Result<Self> {
        if resolution == 0 {
            return Err(SpinrError::InvalidConfig("grid resolution must be >= 1".into()));
        }
        let ext = bounds.extent();
        let h = ext.max() / resolution as f64;
        let dims = [0, 1, 2].map(|i| ((ext[i] / h) - 1e-9).ceil().max(1.0) as usize);
        Self::new(bounds.min_corner, h, dims, activation, init_sigma)
    }

    pub(crate) fn from_config(bounds: &SceneBounds, params: &serde_json::Value) -> Result<Self> {
        let cfg: GridConfig = serde_json::from_value(params.clone())
            .map_err(|e| SpinrError::InvalidConfig(format!("grid field config: {e}")))?;
        match (cfg.origin, cfg.voxel_size, cfg.dims) {
            (Some(o), Some(h), Some(d)) => Self::new(o, h, d, cfg.activation, cfg.init_sigma),
            (None, None, None) => Self::covering(bounds, cfg.resolution, cfg.activation, cfg.init_sigma),
            _ => Err(SpinrError::InvalidConfig(
                "grid field config needs all of origin, voxel_size, dims or none".into(),
            )),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.voxel_size
    }

    /// Sets every voxel's reflectivity (post-activation).
    pub fn set_sigmas(&mut self, sigmas: &[f64]) -> Result<()> {
        if sigmas.len() != self.values.len() {
            return Err(SpinrError::ShapeMismatch(format!(
                "{} sigmas for {} voxels",
                sigmas.len(),
                self.values.len()
            )));
        }
        for (v, s) in self.values.iter_mut().zip(sigmas) {
            *v = self.activation.inverse(*s);
        }
        Ok(())
    }

    /// Activated voxel values.
    pub fn sigmas(&self) -> Vec<f64> {
        self.values.iter().map(|&p| self.activation.apply(p)).collect()
    }

    pub fn to_volume(&self) -> Volume {
        Volume::new(self.origin, self.voxel_size, self.dims, self.sigmas())
            .expect("activated grid values are finite and nonnegative")
    }

    #[inline]
    fn stencil(&self, p: &Vec3) -> Option<Stencil> {
        let rel = (p - self.origin) / self.voxel_size;
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let d = self.dims[a];
            if !(rel[a] >= 0.0 && rel[a] <= d as f64) {
                return None;
            }
            let u = (rel[a] - 0.5).clamp(0.0, (d - 1) as f64);
            let i0 = (u.floor() as usize).min(d.saturating_sub(2));
            base[a] = i0;
            frac[a] = if d == 1 { 0.0 } else { u - i0 as f64 };
        }
        let mut s = Stencil {
            idx: [0; 8],
            w: [0.0; 8],
        };
        for c in 0..8 {
            let off = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
            let mut w = 1.0;
            let mut ijk = [0usize; 3];
            for a in 0..3 {
                let fa = frac[a];
                w *= if off[a] == 1 { fa } else { 1.0 - fa };
                ijk[a] = (base[a] + off[a]).min(self.dims[a] - 1);
            }
            s.idx[c] = self.index(ijk[0], ijk[1], ijk[2]);
            s.w[c] = w;
        }
        Some(s)
    }
}

impl SceneField for VoxelGridField {
    fn kind(&self) -> &'static str {
        "grid"
    }

    fn bounds(&self) -> SceneBounds {
        let ext = Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.voxel_size;
        SceneBounds {
            min_corner: self.origin,
            max_corner: self.origin + ext,
        }
    }

    fn query(&self, positions: &[Vec3]) -> Vec<f64> {
        positions
            .iter()
            .map(|p| match self.stencil(p) {
                Some(s) => (0..8)
                    .filter(|&c| s.w[c] != 0.0)
                    .map(|c| s.w[c] * self.activation.apply(self.values[s.idx[c]]))
                    .sum(),
                None => 0.0,
            })
            .collect()
    }

    fn backward(&self, positions: &[Vec3], upstream: &[f64]) -> Result<Vec<f64>> {
        check_upstream(positions, upstream)?;
        let mut grad = vec![0.0; self.values.len()];
        for (p, &u) in positions.iter().zip(upstream) {
            if u == 0.0 {
                continue;
            }
            if let Some(s) = self.stencil(p) {
                for c in 0..8 {
                    if s.w[c] != 0.0 {
                        grad[s.idx[c]] += u * s.w[c];
                    }
                }
            }
        }
        for (g, &p) in grad.iter_mut().zip(&self.values) {
            if *g != 0.0 {
                *g *= self.activation.derivative(p);
            }
        }
        Ok(grad)
    }

    fn params(&self) -> &[f64] {
        &self.values
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn layers(&self) -> Vec<LayerSpan> {
        vec![LayerSpan {
            name: "grid".into(),
            start: 0,
            len: self.values.len(),
        }]
    }

    fn config(&self) -> serde_json::Value {
        serde_json::json!({
            "origin": [self.origin.x, self.origin.y, self.origin.z],
            "voxel_size": self.voxel_size,
            "dims": self.dims,
            "activation": self.activation,
            "init_sigma": self.init_sigma,
        })
    }
}
