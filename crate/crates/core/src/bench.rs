//! Forward-model latency benchmark.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aperture::{BinWindow, SceneBounds, SensorPose};
use crate::field::QuadraturePoint;
use crate::forward::{self, counters};
use crate::signal::ChirpConfig;
use crate::{Result, SpinrError, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub model: String,
    pub count: usize,
    pub reps: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    /// Kernel evaluations, time samples or bin assignments per call.
    pub ops_per_call: u64,
}

/// Uniform random scatterers in `bounds` with reflectivities in `[0, 1)`.
pub fn random_scene(bounds: &SceneBounds, count: usize, seed: u64) -> (Vec<QuadraturePoint>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ext = bounds.extent();
    let points = (0..count)
        .map(|_| QuadraturePoint {
            position: bounds.min_corner + Vec3::new(rng.gen(), rng.gen(), rng.gen()).component_mul(&ext),
            weight: 1e-6,
        })
        .collect();
    let sigmas = (0..count).map(|_| rng.gen()).collect();
    (points, sigmas)
}

/// Times every registered forward model on the same scenes.
pub fn bench_forward(
    cfg: &ChirpConfig,
    pose: &SensorPose,
    bounds: &SceneBounds,
    window: &BinWindow,
    counts: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    if counts.contains(&0) || reps == 0 {
        return Err(SpinrError::InvalidConfig("bench needs counts >= 1 and reps >= 1".into()));
    }
    let reg = forward::registry();
    let mut rows = Vec::new();
    for &count in counts {
        let (points, sigmas) = random_scene(bounds, count, seed ^ count as u64);
        for name in reg.names() {
            let model = reg.get(name)?;
            // warm-up also fixes the op count
            counters::reset();
            model.forward(cfg, pose, &points, &sigmas, window)?;
            let ops = counters::snapshot().total();
            let mut times = Vec::with_capacity(reps);
            for _ in 0..reps {
                let t = Instant::now();
                let out = model.forward(cfg, pose, &points, &sigmas, window)?;
                times.push(t.elapsed().as_secs_f64() * 1e3);
                std::hint::black_box(out);
            }
            let mean = times.iter().sum::<f64>() / reps as f64;
            let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / reps as f64;
            rows.push(BenchRow {
                model: name.to_string(),
                count,
                reps,
                mean_ms: mean,
                std_ms: var.sqrt(),
                ops_per_call: ops,
            });
        }
    }
    Ok(rows)
}

pub fn write_csv(rows: &[BenchRow], w: &mut impl Write) -> Result<()> {
    writeln!(w, "model,count,reps,mean_ms,std_ms,ops_per_call")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{}",
            r.model, r.count, r.reps, r.mean_ms, r.std_ms, r.ops_per_call
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_row_per_model() {
        let cfg = ChirpConfig::awr1843();
        let bounds = SceneBounds::cube(Vec3::zeros(), 0.24).unwrap();
        let pose = SensorPose::monostatic(Vec3::new(0.23, 0.0, 0.0));
        let window = BinWindow::new(0, 15, 2, 256).unwrap();
        let rows = bench_forward(&cfg, &pose, &bounds, &window, &[1], 1, 0).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.mean_ms > 0.0));
        let mut csv = Vec::new();
        write_csv(&rows, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
        assert!(bench_forward(&cfg, &pose, &bounds, &window, &[0], 1, 0).is_err());
    }
}
