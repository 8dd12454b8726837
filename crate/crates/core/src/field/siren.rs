use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{check_upstream, sigmoid, softplus, softplus_inv, LayerSpan, SceneField};
use crate::aperture::SceneBounds;
use crate::{Result, SpinrError, Vec3};

const CHUNK: usize = 2048;

#[derive(Debug, Clone, Deserialize)]
struct NetConfig {
    #[serde(default = "default_hidden")]
    hidden: Vec<usize>,
    #[serde(default = "default_omega0")]
    omega0: f64,
    #[serde(default = "default_init_sigma")]
    init_sigma: f64,
}

fn default_hidden() -> Vec<usize> {
    vec![128, 128, 128]
}

fn default_omega0() -> f64 {
    30.0
}

fn default_init_sigma() -> f64 {
    1e-3
}

/// Sinusoidal coordinate network `R^3 -> [0, inf)`.
///
/// Hidden layers compute `sin(omega0 * (W h + b))`; the output layer is
/// linear followed by softplus. Positions are mapped to `[-1, 1]^3` over the
/// scene bounds before the first layer.
///
/// Parameters are laid out layer by layer, weight (row-major `out x in`)
/// then bias.
#[derive(Debug, Clone)]
pub struct CoordinateNetworkField {
    bounds: SceneBounds,
    widths: Vec<usize>,
    omega0: f64,
    init_sigma: f64,
    params: Vec<f64>,
    /// `(weight_start, bias_start)` per layer.
    offsets: Vec<(usize, usize)>,
}

impl CoordinateNetworkField {
    pub fn new(bounds: &SceneBounds, hidden: &[usize], omega0: f64, init_sigma: f64, seed: u64) -> Result<Self> {
        if hidden.is_empty() || hidden.contains(&0) || !(omega0 > 0.0) || !(init_sigma > 0.0) {
            return Err(SpinrError::InvalidConfig(format!(
                "network requires non-empty positive hidden widths, omega0 > 0, init_sigma > 0 (hidden={hidden:?}, omega0={omega0})"
            )));
        }
        bounds.validate()?;
        let mut widths = vec![3];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut offsets = Vec::new();
        let mut total = 0;
        for l in 0..widths.len() - 1 {
            let w = total;
            total += widths[l] * widths[l + 1];
            offsets.push((w, total));
            total += widths[l + 1];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; total];
        let last = widths.len() - 2;
        for l in 0..=last {
            let fan_in = widths[l] as f64;
            let limit = if l == 0 {
                1.0 / fan_in
            } else {
                (6.0 / fan_in).sqrt() / omega0
            };
            let (w0, b0) = offsets[l];
            for p in &mut params[w0..b0] {
                *p = rng.gen_range(-limit..limit);
            }
            let blim = 1.0 / fan_in.sqrt();
            for p in &mut params[b0..b0 + widths[l + 1]] {
                *p = if l == last { softplus_inv(init_sigma) } else { rng.gen_range(-blim..blim) };
            }
        }
        Ok(CoordinateNetworkField {
            bounds: *bounds,
            widths,
            omega0,
            init_sigma,
            params,
            offsets,
        })
    }

    pub(crate) fn from_config(bounds: &SceneBounds, params: &serde_json::Value, seed: u64) -> Result<Self> {
        let cfg: NetConfig = serde_json::from_value(params.clone())
            .map_err(|e| SpinrError::InvalidConfig(format!("net field config: {e}")))?;
        Self::new(bounds, &cfg.hidden, cfg.omega0, cfg.init_sigma, seed)
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let (w0, b0) = self.offsets[l];
        ArrayView2::from_shape((self.widths[l + 1], self.widths[l]), &self.params[w0..b0]).unwrap()
    }

    fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let b0 = self.offsets[l].1;
        ArrayView1::from(&self.params[b0..b0 + self.widths[l + 1]])
    }

    fn normalized_inputs(&self, positions: &[Vec3]) -> Array2<f64> {
        let lo = self.bounds.min_corner;
        let ext = self.bounds.extent();
        let mut x = Array2::zeros((positions.len(), 3));
        for (i, p) in positions.iter().enumerate() {
            for a in 0..3 {
                x[[i, a]] = 2.0 * (p[a] - lo[a]) / ext[a] - 1.0;
            }
        }
        x
    }

    /// Forward pass keeping every layer input and the pre-sine arguments.
    fn forward_chunk(&self, x: Array2<f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>, Array1<f64>) {
        let last = self.num_layers() - 1;
        let mut inputs = vec![x];
        let mut args = Vec::with_capacity(last);
        for l in 0..last {
            let mut z = inputs[l].dot(&self.weight(l).t());
            z += &self.bias(l);
            z *= self.omega0;
            let h = z.mapv(f64::sin);
            args.push(z);
            inputs.push(h);
        }
        let mut y = inputs[last].dot(&self.weight(last).t());
        y += &self.bias(last);
        (inputs, args, y.column(0).to_owned())
    }
}

impl SceneField for CoordinateNetworkField {
    fn kind(&self) -> &'static str {
        "net"
    }

    fn bounds(&self) -> SceneBounds {
        self.bounds
    }

    fn query(&self, positions: &[Vec3]) -> Vec<f64> {
        let mut out = Vec::with_capacity(positions.len());
        for chunk in positions.chunks(CHUNK) {
            let (_, _, y) = self.forward_chunk(self.normalized_inputs(chunk));
            out.extend(y.iter().map(|&v| softplus(v)));
        }
        out
    }

    fn backward(&self, positions: &[Vec3], upstream: &[f64]) -> Result<Vec<f64>> {
        check_upstream(positions, upstream)?;
        let mut grad = vec![0.0; self.params.len()];
        let last = self.num_layers() - 1;
        for (chunk, up) in positions.chunks(CHUNK).zip(upstream.chunks(CHUNK)) {
            if up.iter().all(|u| *u == 0.0) {
                continue;
            }
            let (inputs, args, y) = self.forward_chunk(self.normalized_inputs(chunk));
            // d loss / d output pre-activation, shape (batch, 1)
            let dy: Array1<f64> = y.iter().zip(up).map(|(&v, &u)| u * sigmoid(v)).collect();
            let mut delta = dy.insert_axis(Axis(1));
            for l in (0..=last).rev() {
                let (w0, b0) = self.offsets[l];
                let dw = delta.t().dot(&inputs[l]);
                for (g, v) in grad[w0..b0].iter_mut().zip(dw.iter()) {
                    *g += v;
                }
                let db = delta.sum_axis(Axis(0));
                for (g, v) in grad[b0..b0 + self.widths[l + 1]].iter_mut().zip(db.iter()) {
                    *g += v;
                }
                if l == 0 {
                    break;
                }
                // back through the weight, then through sin(omega0 * .) of layer l-1
                let mut dh = delta.dot(&self.weight(l));
                let w = self.omega0;
                ndarray::Zip::from(&mut dh)
                    .and(&args[l - 1])
                    .for_each(|d, &z| *d *= w * z.cos());
                delta = dh;
            }
        }
        Ok(grad)
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layers(&self) -> Vec<LayerSpan> {
        let mut spans = Vec::new();
        for (l, &(w0, b0)) in self.offsets.iter().enumerate() {
            spans.push(LayerSpan {
                name: format!("layer{l}.weight"),
                start: w0,
                len: b0 - w0,
            });
            spans.push(LayerSpan {
                name: format!("layer{l}.bias"),
                start: b0,
                len: self.widths[l + 1],
            });
        }
        spans
    }

    fn config(&self) -> serde_json::Value {
        serde_json::json!({
            "hidden": &self.widths[1..self.widths.len() - 1],
            "omega0": self.omega0,
            "init_sigma": self.init_sigma,
        })
    }
}
