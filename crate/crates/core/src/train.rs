//! Field fitting: supervision objectives, the optimizer loop and gradient
//! statistics.
//!
//! Responses are compared after scaling by `1 / max|Z~|` over the dataset
//! (see [`response_scale`]), so loss magnitudes do not depend on the
//! absolute reflectivity scale.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aperture::{BinWindow, SensorPose};
use crate::dataset::MeasurementSet;
use crate::field::{sample_quadrature, LayerSpan, QuadraturePoint, QuadratureRule, SceneField};
use crate::forward::{
    dft, idft, rq_backward, rq_forward, spectral_forward, time_backward, time_forward, truncate, window_adjoint,
    SpectralOperator,
};
use crate::loss::{spectral_loss_values, temporal_loss, LossConfig};
use crate::optim::{Adam, OptimizerConfig};
use crate::registry::Registry;
use crate::signal::ChirpConfig;
use crate::{Result, SpinrError, Vec3, C64};

/// Supervision target of one measurement, already scaled.
pub struct PoseTarget<'a> {
    pub cfg: &'a ChirpConfig,
    pub pose: SensorPose,
    pub window: BinWindow,
    /// Applied to predictions before comparison.
    pub scale: f64,
    pub spectrum: Vec<C64>,
    /// Time-domain samples, when the objective asks for them.
    pub time: Option<Vec<C64>>,
}

/// How predictions are produced and compared for one measurement.
pub trait Objective: Send + Sync {
    fn name(&self) -> &'static str;

    fn needs_time_signal(&self) -> bool {
        false
    }

    /// Loss of one measurement and its gradient with respect to each
    /// point's reflectivity.
    fn pose_loss(
        &self,
        target: &PoseTarget,
        points: &[QuadraturePoint],
        sigmas: &[f64],
        loss: &LossConfig,
    ) -> Result<(f64, Vec<f64>)>;
}

fn scaled(values: &[C64], s: f64) -> Vec<C64> {
    values.iter().map(|v| v * s).collect()
}

/// Closed-form spectral model with the spectral loss.
pub struct SpectralObjective;

impl Objective for SpectralObjective {
    fn name(&self) -> &'static str {
        "spectral"
    }

    fn pose_loss(&self, t: &PoseTarget, points: &[QuadraturePoint], sigmas: &[f64], loss: &LossConfig) -> Result<(f64, Vec<f64>)> {
        let op = SpectralOperator::new(t.cfg, &t.pose, points, &t.window)?;
        let pred = scaled(&op.apply(sigmas).values, t.scale);
        let (l, g) = spectral_loss_values(&pred, &t.spectrum, loss);
        Ok((l, op.adjoint(&scaled(&g, t.scale))))
    }
}

/// Time-domain model, DFT and truncation, with the spectral loss.
pub struct TimeSpectralObjective;

impl Objective for TimeSpectralObjective {
    fn name(&self) -> &'static str {
        "tf-ss"
    }

    fn pose_loss(&self, t: &PoseTarget, points: &[QuadraturePoint], sigmas: &[f64], loss: &LossConfig) -> Result<(f64, Vec<f64>)> {
        let x = time_forward(t.cfg, &t.pose, points, sigmas)?;
        let pred = scaled(&truncate(&dft(&x), &t.window)?.values, t.scale);
        let (l, g) = spectral_loss_values(&pred, &t.spectrum, loss);
        let gt = window_adjoint(&t.window, t.cfg.num_samples, &scaled(&g, t.scale))?;
        Ok((l, time_backward(t.cfg, &t.pose, points, &gt)?))
    }
}

/// Time-domain model with the temporal loss.
pub struct TimeTemporalObjective;

impl Objective for TimeTemporalObjective {
    fn name(&self) -> &'static str {
        "tf-ts"
    }

    fn needs_time_signal(&self) -> bool {
        true
    }

    fn pose_loss(&self, t: &PoseTarget, points: &[QuadraturePoint], sigmas: &[f64], _loss: &LossConfig) -> Result<(f64, Vec<f64>)> {
        let meas = t
            .time
            .as_ref()
            .ok_or_else(|| SpinrError::InvalidConfig("tf-ts target lacks time samples".into()))?;
        let pred = scaled(&time_forward(t.cfg, &t.pose, points, sigmas)?, t.scale);
        let (l, g) = temporal_loss(&pred, meas)?;
        Ok((l, time_backward(t.cfg, &t.pose, points, &scaled(&g, t.scale))?))
    }
}

/// Range-quantized model with the spectral loss.
pub struct RqObjective;

impl Objective for RqObjective {
    fn name(&self) -> &'static str {
        "rq"
    }

    fn pose_loss(&self, t: &PoseTarget, points: &[QuadraturePoint], sigmas: &[f64], loss: &LossConfig) -> Result<(f64, Vec<f64>)> {
        let (resp, _) = rq_forward(t.cfg, &t.pose, points, sigmas, &t.window)?;
        let pred = scaled(&resp.values, t.scale);
        let (l, g) = spectral_loss_values(&pred, &t.spectrum, loss);
        rq_backward(t.cfg, &t.pose, points, &t.window, &scaled(&g, t.scale)).map(|d| (l, d))
    }
}

/// `spectral`, `tf-ss`, `tf-ts` and `rq`.
pub fn registry() -> Registry<dyn Objective> {
    let mut reg: Registry<dyn Objective> = Registry::new("mode");
    reg.register("spectral", Box::new(SpectralObjective));
    reg.register("tf-ss", Box::new(TimeSpectralObjective));
    reg.register("tf-ts", Box::new(TimeTemporalObjective));
    reg.register("rq", Box::new(RqObjective));
    reg
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Cells per axis.
    pub resolution: [usize; 3],
    /// Jitter one sample per cell, redrawn every step; otherwise cell centers.
    #[serde(default)]
    pub stratified: bool,
}

impl QuadratureConfig {
    pub fn centers(resolution: usize) -> Self {
        QuadratureConfig {
            resolution: [resolution; 3],
            stratified: false,
        }
    }

    pub fn stratified(resolution: usize) -> Self {
        QuadratureConfig {
            resolution: [resolution; 3],
            stratified: true,
        }
    }

    fn points(&self, data: &MeasurementSet, seed: u64, step: usize) -> Result<Vec<QuadraturePoint>> {
        let rule = if self.stratified {
            QuadratureRule::StratifiedRandom {
                seed: seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            }
        } else {
            QuadratureRule::VoxelCenters
        };
        sample_quadrature(&data.bounds, rule, self.resolution)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub mode: String,
    pub quadrature: QuadratureConfig,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub loss: LossConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LayerStat {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    /// Set when the loss or any gradient statistic is not finite.
    pub nan: bool,
    pub layers: Vec<LayerStat>,
    pub millis: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepLog>,
}

impl TrainLog {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }

    /// Gradient standard deviation of layer `name` at every step.
    pub fn layer_std(&self, name: &str) -> Vec<f64> {
        self.steps
            .iter()
            .filter_map(|s| s.layers.iter().find(|l| l.name == name).map(|l| l.std))
            .collect()
    }
}

/// Arithmetic mean and population standard deviation per layer.
pub fn grad_stats(grads: &[f64], layers: &[LayerSpan]) -> Result<Vec<LayerStat>> {
    if grads.is_empty() {
        return Err(SpinrError::Empty("grad_stats needs a nonempty gradient".into()));
    }
    layers
        .iter()
        .map(|span| {
            let g = grads.get(span.range()).ok_or_else(|| {
                SpinrError::ShapeMismatch(format!("layer {} exceeds {} gradients", span.name, grads.len()))
            })?;
            let (mean, std) = mean_std(g);
            Ok(LayerStat {
                name: span.name.clone(),
                mean,
                std,
            })
        })
        .collect()
}

fn mean_std(g: &[f64]) -> (f64, f64) {
    if g.is_empty() {
        return (0.0, 0.0);
    }
    let n = g.len() as f64;
    let mean = g.iter().sum::<f64>() / n;
    let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Response scale `1 / max|Z~|`. An all-zero dataset falls back to the
/// largest response the field predicts for `points`, so that gradients stay
/// well above the optimizer's epsilon.
pub fn response_scale(data: &MeasurementSet, field: &dyn SceneField, points: &[QuadraturePoint]) -> Result<f64> {
    let max = data.max_abs();
    if max > 0.0 {
        return Ok(1.0 / max);
    }
    let positions: Vec<Vec3> = points.iter().map(|p| p.position).collect();
    let sigmas = field.query(&positions);
    let pred = data
        .poses
        .par_iter()
        .map(|pose| spectral_forward(&data.chirp, pose, points, &sigmas, &data.window).map(|r| r.max_abs()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(if pred > 0.0 { 1.0 / pred } else { 1.0 })
}

/// Supervision targets for every pose of `data`, multiplied by `scale`.
pub fn pose_targets<'a>(data: &'a MeasurementSet, objective: &dyn Objective, scale: f64) -> Result<Vec<PoseTarget<'a>>> {
    if objective.needs_time_signal() && data.full_spectra.is_none() {
        return Err(SpinrError::InvalidConfig(format!(
            "mode {} needs time-domain measurements; simulate with the full-spectrum block",
            objective.name()
        )));
    }
    Ok((0..data.len())
        .map(|i| PoseTarget {
            cfg: &data.chirp,
            pose: data.poses[i],
            window: data.window,
            scale,
            spectrum: scaled(&data.values[i], scale),
            time: objective
                .needs_time_signal()
                .then(|| scaled(&idft(&data.full_spectra.as_ref().unwrap()[i]), scale)),
        })
        .collect())
}

/// Mean loss over `indices` and its gradient with respect to the field
/// parameters. Per-pose terms are reduced in index order, so the result
/// does not depend on the thread count.
pub fn batch_gradient(
    field: &dyn SceneField,
    objective: &dyn Objective,
    targets: &[PoseTarget],
    indices: &[usize],
    points: &[QuadraturePoint],
    loss: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    let positions: Vec<Vec3> = points.iter().map(|p| p.position).collect();
    let sigmas = field.query(&positions);
    let terms: Vec<(f64, Vec<f64>)> = indices
        .par_iter()
        .map(|&i| objective.pose_loss(&targets[i], points, &sigmas, loss))
        .collect::<Result<_>>()?;
    let inv = 1.0 / indices.len().max(1) as f64;
    let mut total = 0.0;
    let mut dsigma = vec![0.0; points.len()];
    for (l, g) in &terms {
        total += l;
        for (a, b) in dsigma.iter_mut().zip(g) {
            *a += b;
        }
    }
    dsigma.iter_mut().for_each(|v| *v *= inv);
    Ok((total * inv, field.backward(&positions, &dsigma)?))
}

/// Trains `field` on `data`. Each epoch visits every pose once in a
/// seeded shuffle; each step takes `batch_size` poses.
pub fn fit(
    data: &MeasurementSet,
    field: &mut dyn SceneField,
    cfg: &FitConfig,
    mut log_sink: Option<&mut dyn Write>,
) -> Result<TrainLog> {
    if data.is_empty() {
        return Err(SpinrError::Empty("fit needs at least one measurement".into()));
    }
    data.validate()?;
    cfg.optimizer.validate()?;
    cfg.loss.validate()?;
    let objective = registry();
    let objective = objective.get(&cfg.mode)?;
    let scale = response_scale(data, field, &cfg.quadrature.points(data, cfg.optimizer.seed, 0)?)?;
    let targets = pose_targets(data, objective, scale)?;
    let layers = field.layers();
    let mut adam = Adam::new(&cfg.optimizer, field.params().len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.optimizer.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainLog::default();
    let mut step = 0;
    for epoch in 0..cfg.optimizer.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.optimizer.batch_size) {
            let start = Instant::now();
            let points = cfg.quadrature.points(data, cfg.optimizer.seed, step)?;
            let (loss, grads) = batch_gradient(field, objective, &targets, batch, &points, &cfg.loss)?;
            let stats = grad_stats(&grads, &layers)?;
            let nan = !loss.is_finite() || stats.iter().any(|s| !s.mean.is_finite() || !s.std.is_finite());
            if nan {
                let detail = stats
                    .iter()
                    .map(|s| format!("{}: mean {:e} std {:e}", s.name, s.mean, s.std))
                    .collect::<Vec<_>>()
                    .join("; ");
                return Err(SpinrError::NonFiniteLoss {
                    step,
                    detail: format!("loss {loss}; {detail}"),
                });
            }
            adam.step(field.params_mut(), &grads);
            let entry = StepLog {
                step,
                epoch,
                loss,
                nan,
                layers: stats,
                millis: start.elapsed().as_secs_f64() * 1e3,
            };
            if let Some(w) = log_sink.as_mut() {
                serde_json::to_writer(&mut *w, &entry)?;
                w.write_all(b"\n")?;
            }
            log.steps.push(entry);
            step += 1;
        }
    }
    Ok(log)
}

/// Mean loss over all poses at the current parameters, without updating.
pub fn evaluate_loss(data: &MeasurementSet, field: &dyn SceneField, cfg: &FitConfig) -> Result<f64> {
    let reg = registry();
    let objective = reg.get(&cfg.mode)?;
    let points = cfg.quadrature.points(data, cfg.optimizer.seed, 0)?;
    let targets = pose_targets(data, objective, response_scale(data, field, &points)?)?;
    let all: Vec<usize> = (0..data.len()).collect();
    Ok(batch_gradient(field, objective, &targets, &all, &points, &cfg.loss)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aperture::{CylindricalApertureSpec, SceneBounds};
    use crate::field::VoxelGridField;
    use crate::phantom::PhantomSpec;
    use crate::simulate::{simulate, SimulationOptions};

    fn small_set(full: bool) -> MeasurementSet {
        let phantom = PhantomSpec::three_spheres(60);
        let ap = CylindricalApertureSpec::monostatic(0.23, -0.05, 0.05, 2, 8);
        let opts = SimulationOptions {
            full_spectrum: full,
            f64_payload: true,
            ..Default::default()
        };
        simulate(&phantom, &ap, &ChirpConfig::awr1843(), &opts).unwrap()
    }

    fn grid_field(bounds: &SceneBounds, res: usize) -> VoxelGridField {
        VoxelGridField::covering(bounds, res, Default::default(), 1e-3).unwrap()
    }

    fn fit_cfg(mode: &str, epochs: usize, batch: usize) -> FitConfig {
        FitConfig {
            mode: mode.into(),
            quadrature: QuadratureConfig::centers(8),
            optimizer: OptimizerConfig::for_field("grid", epochs, batch, 7),
            loss: LossConfig::default(),
        }
    }

    #[test]
    fn grad_stats_cases() {
        let span = |s, l| LayerSpan {
            name: format!("l{s}"),
            start: s,
            len: l,
        };
        let z = grad_stats(&[0.0; 4], &[span(0, 4)]).unwrap();
        assert_eq!((z[0].mean, z[0].std), (0.0, 0.0));
        let pm = grad_stats(&[1.0, -1.0], &[span(0, 2)]).unwrap();
        assert_eq!((pm[0].mean, pm[0].std), (0.0, 1.0));
        assert!(grad_stats(&[], &[]).is_err());
        // pooled statistics from per-layer ones
        let g: Vec<f64> = (0..17).map(|i| ((i * 7) % 5) as f64 - 1.3 * i as f64).collect();
        let parts = grad_stats(&g, &[span(0, 6), span(6, 11)]).unwrap();
        let whole = grad_stats(&g, &[span(0, 17)]).unwrap();
        let (n1, n2) = (6.0, 11.0);
        let mean = (n1 * parts[0].mean + n2 * parts[1].mean) / (n1 + n2);
        let var = (n1 * (parts[0].std.powi(2) + (parts[0].mean - mean).powi(2))
            + n2 * (parts[1].std.powi(2) + (parts[1].mean - mean).powi(2)))
            / (n1 + n2);
        assert!((mean - whole[0].mean).abs() < 1e-12);
        assert!((var.sqrt() - whole[0].std).abs() < 1e-12);
    }

    #[test]
    fn every_mode_matches_finite_differences() {
        let data = small_set(true);
        for mode in ["spectral", "tf-ss", "tf-ts", "rq"] {
            let cfg = fit_cfg(mode, 1, 4);
            let reg = registry();
            let obj = reg.get(mode).unwrap();
            let targets = pose_targets(&data, obj, 1.0 / data.max_abs()).unwrap();
            let mut field = grid_field(&data.bounds, 4);
            for (i, p) in field.params_mut().iter_mut().enumerate() {
                *p = 0.5 + 0.05 * ((i * 13) % 7) as f64;
            }
            let points = cfg.quadrature.points(&data, 0, 0).unwrap();
            let idx = [0, 3, 9];
            let (_, g) = batch_gradient(&field, obj, &targets, &idx, &points, &cfg.loss).unwrap();
            let h = 1e-6;
            for j in [0, 5, 21, 42, 63] {
                let o = field.params()[j];
                field.params_mut()[j] = o + h;
                let lp = batch_gradient(&field, obj, &targets, &idx, &points, &cfg.loss).unwrap().0;
                field.params_mut()[j] = o - h;
                let lm = batch_gradient(&field, obj, &targets, &idx, &points, &cfg.loss).unwrap().0;
                field.params_mut()[j] = o;
                let fd = (lp - lm) / (2.0 * h);
                let scale = fd.abs().max(g[j].abs()).max(1e-10);
                assert!((fd - g[j]).abs() / scale < 1e-5, "{mode} param {j}: fd {fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn tf_ts_needs_full_spectrum() {
        let data = small_set(false);
        let mut field = grid_field(&data.bounds, 4);
        assert!(matches!(
            fit(&data, &mut field, &fit_cfg("tf-ts", 1, 4), None),
            Err(SpinrError::InvalidConfig(_))
        ));
        assert!(matches!(
            fit(&data, &mut field, &fit_cfg("bogus", 1, 4), None),
            Err(SpinrError::UnknownStrategy { .. })
        ));
    }

    #[test]
    fn deterministic_and_step_count() {
        let data = small_set(false);
        let cfg = FitConfig {
            quadrature: QuadratureConfig::stratified(6),
            ..fit_cfg("spectral", 2, 5)
        };
        let run = || {
            let mut f = grid_field(&data.bounds, 6);
            let log = fit(&data, &mut f, &cfg, None).unwrap();
            (log, f.params().to_vec())
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a.steps.len(), 2 * 16usize.div_ceil(5));
        assert_eq!(a.losses(), b.losses());
        assert_eq!(pa, pb);
    }

    #[test]
    fn zero_data_collapses_field() {
        let mut data = small_set(false);
        data.values.iter_mut().flatten().for_each(|v| *v = C64::new(0.0, 0.0));
        let mut field = grid_field(&data.bounds, 6);
        let cfg = FitConfig {
            quadrature: QuadratureConfig::centers(6),
            ..fit_cfg("spectral", 40, 16)
        };
        let mean = |f: &VoxelGridField| f.sigmas().iter().sum::<f64>() / f.sigmas().len() as f64;
        let before = mean(&field);
        let log = fit(&data, &mut field, &cfg, None).unwrap();
        // Adam moves each pre-activation by at most about lr per step
        assert!(mean(&field) < 0.8 * before, "{} vs {before}", mean(&field));
        let l = log.losses();
        assert!(l.windows(2).all(|w| w[1] <= w[0]), "{l:?}");
    }

    #[test]
    fn jsonl_log_lines() {
        let data = small_set(false);
        let mut field = grid_field(&data.bounds, 4);
        let mut buf = Vec::new();
        let log = fit(&data, &mut field, &fit_cfg("rq", 1, 8), Some(&mut buf)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), log.steps.len());
        let first: StepLog = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first.step, 0);
        assert_eq!(first.layers[0].name, "grid");
    }
}
