//! Geometry and image metrics for reconstructed volumes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::volume::Volume;
use crate::{Result, SpinrError, Vec3};

/// Peak signal-to-noise ratio reported for identical images, dB.
pub const PSNR_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        Some(self.points.iter().sum::<Vec3>() / self.points.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy", content = "value")]
pub enum Threshold {
    /// Keep voxels with intensity >= t * max.
    Relative(f64),
    /// Keep the top fraction of voxels by intensity; ties by index.
    TopFraction(f64),
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Relative(0.5)
    }
}

/// Indices of the voxels selected by `policy`, ascending.
pub fn select_voxels(vol: &Volume, policy: Threshold) -> Result<Vec<usize>> {
    let v = &vol.intensities;
    match policy {
        Threshold::Relative(t) => {
            if !(0.0..=1.0).contains(&t) {
                return Err(SpinrError::InvalidConfig(format!("relative threshold must be in [0, 1], got {t}")));
            }
            let m = vol.max();
            if m == 0.0 {
                return Ok(Vec::new());
            }
            Ok((0..v.len()).filter(|&i| v[i] >= t * m).collect())
        }
        Threshold::TopFraction(p) => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(SpinrError::InvalidConfig(format!("top fraction must be in (0, 1], got {p}")));
            }
            let count = ((p * v.len() as f64).round() as usize).max(1);
            let mut order: Vec<usize> = (0..v.len()).collect();
            // stable sort keeps index order among equal intensities
            order.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
            let mut keep = order[..count].to_vec();
            keep.sort_unstable();
            Ok(keep)
        }
    }
}

/// Voxel centers selected by `policy`.
pub fn extract_points(vol: &Volume, policy: Threshold) -> Result<PointCloud> {
    let idx = select_voxels(vol, policy)?;
    if idx.is_empty() {
        return Err(SpinrError::Empty(
            "no voxel passes the threshold; lower it or check that the volume is nonzero".into(),
        ));
    }
    Ok(PointCloud::new(idx.into_iter().map(|i| vol.grid.center(i)).collect()))
}

/// Uniform hash grid for nearest-neighbor queries.
struct NeighborIndex<'a> {
    points: &'a [Vec3],
    origin: Vec3,
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> NeighborIndex<'a> {
    fn new(points: &'a [Vec3]) -> Self {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let ext = (hi - lo).max();
        // about two points per cell for a surface-like cloud
        let cell = if ext > 0.0 {
            ext / (points.len() as f64 / 2.0).sqrt().max(1.0)
        } else {
            1.0
        };
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(&lo, cell, p)).or_default().push(i);
        }
        NeighborIndex {
            points,
            origin: lo,
            cell,
            cells,
        }
    }

    fn key(origin: &Vec3, cell: f64, p: &Vec3) -> [i64; 3] {
        let r = (p - origin) / cell;
        [r.x.floor() as i64, r.y.floor() as i64, r.z.floor() as i64]
    }

    fn nearest_distance(&self, q: &Vec3) -> f64 {
        let c = Self::key(&self.origin, self.cell, q);
        let mut best = f64::INFINITY;
        let mut ring = 0i64;
        // a point in ring r is at least (r - 1) * cell away
        while !(best.is_finite() && (ring - 1) as f64 * self.cell >= best) {
            let side = (2 * ring + 1) as usize;
            if side.saturating_pow(3) > 8 * self.points.len() {
                // rings now cost more than a linear scan
                return self.points.iter().map(|p| (p - q).norm()).fold(best, f64::min);
            }
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(ids) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            for &i in ids {
                                best = best.min((self.points[i] - q).norm());
                            }
                        }
                    }
                }
            }
            ring += 1;
        }
        best
    }
}

fn check_nonempty(a: &PointCloud, b: &PointCloud) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(SpinrError::Empty("point-cloud distances need nonempty clouds".into()));
    }
    Ok(())
}

/// Nearest-neighbor distance from every point of `from` to `to`.
fn directed(from: &PointCloud, to: &PointCloud) -> Vec<f64> {
    let index = NeighborIndex::new(&to.points);
    from.points.iter().map(|p| index.nearest_distance(p)).collect()
}

/// `(mean_a min_b + mean_b min_a) / 2`, meters.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check_nonempty(a, b)?;
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    Ok(0.5 * (mean(directed(a, b)) + mean(directed(b, a))))
}

/// Symmetric Hausdorff distance, meters.
pub fn hausdorff(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check_nonempty(a, b)?;
    let max = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
    Ok(max(directed(a, b)).max(max(directed(b, a))))
}

/// Intersection over union of the binarized volumes, each thresholded
/// against its own maximum. Two empty occupancies give 1.
pub fn iou(a: &Volume, b: &Volume, policy: Threshold) -> Result<f64> {
    if !a.grid.same_geometry(&b.grid) {
        return Err(SpinrError::ShapeMismatch("iou needs volumes on the same grid".into()));
    }
    let mut ma = vec![false; a.intensities.len()];
    let mut mb = vec![false; b.intensities.len()];
    for i in select_voxels(a, policy)? {
        ma[i] = true;
    }
    for i in select_voxels(b, policy)? {
        mb[i] = true;
    }
    let inter = ma.iter().zip(&mb).filter(|(x, y)| **x && **y).count();
    let union = ma.iter().zip(&mb).filter(|(x, y)| **x || **y).count();
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Row-major image with pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl ProjectionImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(SpinrError::ShapeMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(ProjectionImage { width, height, pixels })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    fn check_same(&self, other: &ProjectionImage) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(SpinrError::ShapeMismatch(format!(
                "{}x{} vs {}x{} images",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// Maximum-intensity projection along `axis`, normalized to max 1.
///
/// Axis 0 (x) gives rows = z, cols = y; axis 1 (y) gives rows = z,
/// cols = x; axis 2 (z) gives rows = y, cols = x.
pub fn mip(vol: &Volume, axis: usize) -> Result<ProjectionImage> {
    let raw = mip_raw(vol, axis)?;
    let m = raw.pixels.iter().copied().fold(0.0, f64::max);
    let pixels = if m > 0.0 { raw.pixels.iter().map(|v| v / m).collect() } else { raw.pixels };
    Ok(ProjectionImage { pixels, ..raw })
}

fn mip_raw(vol: &Volume, axis: usize) -> Result<ProjectionImage> {
    let [nx, ny, nz] = vol.grid.dims;
    let (rows, cols) = match axis {
        0 => (nz, ny),
        1 => (nz, nx),
        2 => (ny, nx),
        _ => return Err(SpinrError::InvalidConfig(format!("mip axis must be 0, 1 or 2, got {axis}"))),
    };
    let mut px = vec![0.0f64; rows * cols];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let (r, c) = match axis {
                    0 => (k, j),
                    1 => (k, i),
                    _ => (j, i),
                };
                let v = vol.get(i, j, k);
                let p = &mut px[r * cols + c];
                *p = p.max(v);
            }
        }
    }
    ProjectionImage::new(cols, rows, px)
}

/// `10 log10(1 / MSE)` with peak 1, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &ProjectionImage, b: &ProjectionImage) -> Result<f64> {
    a.check_same(b)?;
    let mse = a.pixels.iter().zip(&b.pixels).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.pixels.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

const SSIM_WIN: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WIN / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WIN)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over all valid 11x11 Gaussian-weighted windows.
pub fn ssim(a: &ProjectionImage, b: &ProjectionImage) -> Result<f64> {
    a.check_same(b)?;
    if a.width < SSIM_WIN || a.height < SSIM_WIN {
        return Err(SpinrError::ShapeMismatch(format!(
            "ssim needs images of at least {SSIM_WIN}x{SSIM_WIN}, got {}x{}",
            a.width, a.height
        )));
    }
    let g = gaussian_window();
    let (w, h) = (a.width, a.height);
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=h - SSIM_WIN {
        for c0 in 0..=w - SSIM_WIN {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (dr, gr) in g.iter().enumerate() {
                for (dc, gc) in g.iter().enumerate() {
                    let wgt = gr * gc;
                    let x = a.get(r0 + dr, c0 + dc);
                    let y = b.get(r0 + dr, c0 + dc);
                    mx += wgt * x;
                    my += wgt * y;
                    sxx += wgt * x * x;
                    syy += wgt * y * y;
                    sxy += wgt * x * y;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cxy = sxy - mx * my;
            total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou: f64,
    pub chamfer_m: f64,
    pub hausdorff_m: f64,
    pub psnr_db: f64,
    /// `null` when the projections are smaller than the SSIM window.
    pub ssim: Option<f64>,
}

/// All metrics for a predicted volume against ground truth. Point clouds
/// and IoU use `policy`; PSNR and SSIM average the three axis MIPs.
pub fn evaluate(pred: &Volume, gt: &Volume, policy: Threshold) -> Result<EvalReport> {
    let iou = iou(pred, gt, policy)?;
    let pa = extract_points(pred, policy)?;
    let pb = extract_points(gt, policy)?;
    let mut p_sum = 0.0;
    let mut s_sum = 0.0;
    let mut s_ok = true;
    for axis in 0..3 {
        let a = mip(pred, axis)?;
        let b = mip(gt, axis)?;
        p_sum += psnr(&a, &b)?;
        match ssim(&a, &b) {
            Ok(v) => s_sum += v,
            Err(SpinrError::ShapeMismatch(_)) => s_ok = false,
            Err(e) => return Err(e),
        }
    }
    Ok(EvalReport {
        iou,
        chamfer_m: chamfer(&pa, &pb)?,
        hausdorff_m: hausdorff(&pa, &pb)?,
        psnr_db: p_sum / 3.0,
        ssim: s_ok.then_some(s_sum / 3.0),
    })
}
