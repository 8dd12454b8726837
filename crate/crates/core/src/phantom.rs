//! Synthetic scenes as discrete scatterer sets.
//!
//! A scatterer carries a reflectivity `sigma` and a volume element `weight`
//! (m^3), so the forward models see it exactly like a quadrature point of a
//! continuous field. Shell primitives spread `area * thickness` over their
//! samples, making a shell equivalent to a layer of constant `sigma`.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aperture::SceneBounds;
use crate::field::QuadraturePoint;
use crate::volume::{GridSpec, Volume};
use crate::{Result, SpinrError, Vec3};

/// Default volume element of a lone point, m^3 (a 1 cm cube).
pub const POINT_WEIGHT: f64 = 1e-6;
/// Default shell thickness, m.
pub const SHELL_THICKNESS: f64 = 0.005;

fn point_weight() -> f64 {
    POINT_WEIGHT
}

fn shell_thickness() -> f64 {
    SHELL_THICKNESS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum Primitive {
    Point {
        position: Vec3,
        sigma: f64,
        #[serde(default = "point_weight")]
        weight: f64,
    },
    SphereShell {
        center: Vec3,
        radius: f64,
        sigma: f64,
        count: usize,
        #[serde(default = "shell_thickness")]
        thickness: f64,
    },
    BoxShell {
        min: Vec3,
        max: Vec3,
        sigma: f64,
        count: usize,
        #[serde(default = "shell_thickness")]
        thickness: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Vertices (`v x y z` lines) of a Wavefront OBJ file.
    ObjVertices {
        path: PathBuf,
        sigma: f64,
        max_points: usize,
        #[serde(default = "point_weight")]
        weight: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: Vec3,
    pub sigma: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub primitives: Vec<Primitive>,
    pub bounds: SceneBounds,
}

impl PhantomSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SpinrError::InvalidConfig(format!("phantom spec: {e}")))
    }

    pub fn point(position: Vec3, sigma: f64, bounds: SceneBounds) -> Self {
        PhantomSpec {
            primitives: vec![Primitive::Point {
                position,
                sigma,
                weight: POINT_WEIGHT,
            }],
            bounds,
        }
    }

    /// Three sphere shells of different radii inside a 0.24 m cube at the origin.
    pub fn three_spheres(count_per_sphere: usize) -> Self {
        let shell = |c: [f64; 3], r: f64| Primitive::SphereShell {
            center: Vec3::new(c[0], c[1], c[2]),
            radius: r,
            sigma: 1.0,
            count: count_per_sphere,
            thickness: SHELL_THICKNESS,
        };
        PhantomSpec {
            primitives: vec![
                shell([-0.05, -0.04, 0.0], 0.03),
                shell([0.05, -0.03, 0.01], 0.025),
                shell([0.0, 0.055, -0.01], 0.035),
            ],
            bounds: SceneBounds::cube(Vec3::zeros(), 0.24).expect("valid cube"),
        }
    }

    /// All scatterers, in primitive order.
    pub fn scatterers(&self) -> Result<Vec<Scatterer>> {
        self.bounds.validate()?;
        let mut out = Vec::new();
        for prim in &self.primitives {
            emit(prim, &mut out)?;
        }
        if out.is_empty() {
            return Err(SpinrError::Empty("phantom emits no scatterers".into()));
        }
        if let Some(s) = out.iter().find(|s| !self.bounds.contains(&s.position)) {
            return Err(SpinrError::InvalidConfig(format!(
                "scatterer at {:?} lies outside the phantom bounds",
                s.position.as_slice()
            )));
        }
        Ok(out)
    }

    /// Scatterers in forward-model form, with their reflectivities.
    pub fn points_and_sigmas(&self) -> Result<(Vec<QuadraturePoint>, Vec<f64>)> {
        let s = self.scatterers()?;
        Ok((
            s.iter()
                .map(|s| QuadraturePoint {
                    position: s.position,
                    weight: s.weight,
                })
                .collect(),
            s.iter().map(|s| s.sigma).collect(),
        ))
    }

    /// Ground-truth density: each scatterer deposits `sigma * weight / voxel volume`
    /// into the voxel containing it.
    pub fn voxelize(&self, grid: &GridSpec) -> Result<Volume> {
        let mut vol = Volume::zeros(*grid);
        let inv = 1.0 / grid.voxel_size.powi(3);
        for s in self.scatterers()? {
            if let Some(i) = grid.locate(&s.position) {
                vol.intensities[i] += s.sigma * s.weight * inv;
            }
        }
        Ok(vol)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(SpinrError::InvalidConfig(format!("scatterer sigma must be finite and >= 0, got {sigma}")))
    }
}

fn emit(prim: &Primitive, out: &mut Vec<Scatterer>) -> Result<()> {
    match prim {
        Primitive::Point {
            position,
            sigma,
            weight,
        } => {
            check_sigma(*sigma)?;
            out.push(Scatterer {
                position: *position,
                sigma: *sigma,
                weight: *weight,
            });
        }
        Primitive::SphereShell {
            center,
            radius,
            sigma,
            count,
            thickness,
        } => {
            check_sigma(*sigma)?;
            if !(*radius > 0.0) || *count == 0 {
                return Err(SpinrError::InvalidConfig("sphere shell needs radius > 0 and count >= 1".into()));
            }
            let weight = 4.0 * PI * radius * radius * thickness / *count as f64;
            // Fibonacci lattice
            let golden = PI * (3.0 - 5f64.sqrt());
            for i in 0..*count {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / *count as f64;
                let r = (1.0 - z * z).sqrt();
                let (s, c) = (golden * i as f64).sin_cos();
                out.push(Scatterer {
                    position: center + Vec3::new(r * c, r * s, z) * *radius,
                    sigma: *sigma,
                    weight,
                });
            }
        }
        Primitive::BoxShell {
            min,
            max,
            sigma,
            count,
            thickness,
            seed,
        } => {
            check_sigma(*sigma)?;
            let ext = max - min;
            if ext.iter().any(|&e| !(e > 0.0)) || *count == 0 {
                return Err(SpinrError::InvalidConfig("box shell needs max > min and count >= 1".into()));
            }
            let faces = [ext.y * ext.z, ext.x * ext.z, ext.x * ext.y];
            let area = 2.0 * faces.iter().sum::<f64>();
            let weight = area * thickness / *count as f64;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for _ in 0..*count {
                // pick a face with probability proportional to its area
                let mut u = rng.gen::<f64>() * area;
                let mut face = 0;
                while face < 5 && u >= faces[face / 2] {
                    u -= faces[face / 2];
                    face += 1;
                }
                let axis = face / 2;
                let mut p = Vec3::new(rng.gen(), rng.gen(), rng.gen());
                p[axis] = (face % 2) as f64;
                out.push(Scatterer {
                    position: min + p.component_mul(&ext),
                    sigma: *sigma,
                    weight,
                });
            }
        }
        Primitive::ObjVertices {
            path,
            sigma,
            max_points,
            weight,
        } => {
            check_sigma(*sigma)?;
            let verts = read_obj_vertices(&std::fs::read_to_string(path)?)?;
            let stride = verts.len().div_ceil((*max_points).max(1)).max(1);
            for v in verts.iter().step_by(stride).take(*max_points) {
                out.push(Scatterer {
                    position: *v,
                    sigma: *sigma,
                    weight: *weight,
                });
            }
        }
    }
    Ok(())
}

/// Vertex positions of an OBJ document; other records are ignored.
pub fn read_obj_vertices(text: &str) -> Result<Vec<Vec3>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        if it.next() != Some("v") {
            continue;
        }
        let mut xyz = [0.0; 3];
        for c in &mut xyz {
            *c = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| SpinrError::InvalidConfig(format!("obj line {}: malformed vertex", lineno + 1)))?;
        }
        out.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
    }
    Ok(out)
}
