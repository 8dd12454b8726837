//! Differentiable reflectivity fields over the scene and the point sampling
//! that discretizes the forward-model integral.

mod grid;
mod siren;

pub use grid::{GridActivation, VoxelGridField};
pub use siren::CoordinateNetworkField;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aperture::SceneBounds;
use crate::registry::Registry;
use crate::{Result, SpinrError, Vec3};

/// One sample of the scene integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraturePoint {
    pub position: Vec3,
    /// Volume element, m^3.
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum QuadratureRule {
    VoxelCenters,
    StratifiedRandom { seed: u64 },
}

/// Midpoint or stratified sampling of `bounds` on a `resolution` lattice.
/// Every cell contributes one point weighted by the cell volume.
pub fn sample_quadrature(
    bounds: &SceneBounds,
    rule: QuadratureRule,
    resolution: [usize; 3],
) -> Result<Vec<QuadraturePoint>> {
    if resolution.contains(&0) {
        return Err(SpinrError::InvalidConfig(format!(
            "quadrature resolution must be >= 1 per axis, got {resolution:?}"
        )));
    }
    let ext = bounds.extent();
    let cell = Vec3::new(
        ext.x / resolution[0] as f64,
        ext.y / resolution[1] as f64,
        ext.z / resolution[2] as f64,
    );
    let weight = cell.x * cell.y * cell.z;
    let mut rng = match rule {
        QuadratureRule::StratifiedRandom { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        QuadratureRule::VoxelCenters => None,
    };
    let mut out = Vec::with_capacity(resolution.iter().product());
    for iz in 0..resolution[2] {
        for iy in 0..resolution[1] {
            for ix in 0..resolution[0] {
                let jitter = match rng.as_mut() {
                    Some(r) => Vec3::new(r.gen::<f64>(), r.gen::<f64>(), r.gen::<f64>()),
                    None => Vec3::repeat(0.5),
                };
                let idx = Vec3::new(ix as f64, iy as f64, iz as f64) + jitter;
                out.push(QuadraturePoint {
                    position: bounds.min_corner + idx.component_mul(&cell),
                    weight,
                });
            }
        }
    }
    Ok(out)
}

/// Contiguous parameter range belonging to one layer (or tensor).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpan {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl LayerSpan {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// A reflectivity field `sigma(x) >= 0` with a flat parameter vector.
pub trait SceneField: Send + Sync {
    /// Registry name of the field type.
    fn kind(&self) -> &'static str;

    fn bounds(&self) -> SceneBounds;

    fn query(&self, positions: &[Vec3]) -> Vec<f64>;

    /// Gradient of `sum_i upstream_i * query(positions)_i` with respect to
    /// every parameter.
    fn backward(&self, positions: &[Vec3], upstream: &[f64]) -> Result<Vec<f64>>;

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// Parameter partition used for gradient statistics.
    fn layers(&self) -> Vec<LayerSpan>;

    /// Construction parameters, enough to rebuild the field shape from a
    /// checkpoint.
    fn config(&self) -> serde_json::Value;
}

pub(crate) fn check_upstream(positions: &[Vec3], upstream: &[f64]) -> Result<()> {
    if positions.len() != upstream.len() {
        return Err(SpinrError::ShapeMismatch(format!(
            "{} positions but {} upstream gradients",
            positions.len(),
            upstream.len()
        )));
    }
    Ok(())
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Builds a field of one type from JSON parameters.
pub trait FieldBuilder: Send + Sync {
    fn build(&self, bounds: &SceneBounds, params: &serde_json::Value, seed: u64) -> Result<Box<dyn SceneField>>;
}

struct GridBuilder;

impl FieldBuilder for GridBuilder {
    fn build(&self, bounds: &SceneBounds, params: &serde_json::Value, _seed: u64) -> Result<Box<dyn SceneField>> {
        Ok(Box::new(VoxelGridField::from_config(bounds, params)?))
    }
}

struct NetBuilder;

impl FieldBuilder for NetBuilder {
    fn build(&self, bounds: &SceneBounds, params: &serde_json::Value, seed: u64) -> Result<Box<dyn SceneField>> {
        Ok(Box::new(CoordinateNetworkField::from_config(bounds, params, seed)?))
    }
}

/// `grid` and `net`.
pub fn registry() -> Registry<dyn FieldBuilder> {
    let mut reg: Registry<dyn FieldBuilder> = Registry::new("field");
    reg.register("grid", Box::new(GridBuilder));
    reg.register("net", Box::new(NetBuilder));
    reg
}

/// Central finite-difference check helper shared by the field tests.
#[cfg(test)]
pub(crate) fn fd_check(field: &mut dyn SceneField, positions: &[Vec3], upstream: &[f64], indices: &[usize], h: f64) -> f64 {
    let grad = field.backward(positions, upstream).unwrap();
    let objective = |f: &dyn SceneField| -> f64 {
        f.query(positions)
            .iter()
            .zip(upstream)
            .map(|(s, u)| s * u)
            .sum()
    };
    let mut worst = 0.0f64;
    for &i in indices {
        let orig = field.params()[i];
        field.params_mut()[i] = orig + h;
        let plus = objective(field);
        field.params_mut()[i] = orig - h;
        let minus = objective(field);
        field.params_mut()[i] = orig;
        let fd = (plus - minus) / (2.0 * h);
        let denom = fd.abs().max(grad[i].abs()).max(1e-8);
        worst = worst.max((fd - grad[i]).abs() / denom);
    }
    worst
}
