//! Coherent frequency-domain backprojection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::MeasurementSet;
use crate::forward::PathGeometry;
use crate::signal::SpectralKernel;
use crate::volume::{GridSpec, Volume};
use crate::{Result, SpinrError, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Intensity {
    /// `|sum|`
    #[default]
    Magnitude,
    /// `max(Re(sum), 0)`
    RealPart,
}

/// Matched filter of every measurement against the unit-amplitude kernel of
/// each voxel's round-trip delay, summed over poses and window bins.
pub fn backproject(data: &MeasurementSet, grid: &GridSpec, intensity: Intensity) -> Result<Volume> {
    if data.is_empty() {
        return Err(SpinrError::Empty("backprojection needs at least one measurement".into()));
    }
    data.validate()?;
    let cfg = &data.chirp;
    let kernel = SpectralKernel::new(cfg.num_samples, &data.window.bins());
    let centers = grid.centers();
    let values: Vec<f64> = centers
        .par_chunks(256)
        .flat_map_iter(|chunk| {
            let mut row = vec![C64::new(0.0, 0.0); kernel.len()];
            chunk
                .iter()
                .map(|x| {
                    let mut acc = C64::new(0.0, 0.0);
                    for (pose, z) in data.poses.iter().zip(&data.values) {
                        let Ok(g) = PathGeometry::new(pose, x, cfg.c) else {
                            continue;
                        };
                        let phase = C64::from_polar(1.0, cfg.carrier_phase(g.tau));
                        kernel.eval_into(cfg.angular_freq(g.tau), phase, &mut row);
                        for (zk, kk) in z.iter().zip(&row) {
                            acc += zk * kk.conj();
                        }
                    }
                    match intensity {
                        Intensity::Magnitude => acc.norm(),
                        Intensity::RealPart => acc.re.max(0.0),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Volume::from_grid(*grid, values)
}
