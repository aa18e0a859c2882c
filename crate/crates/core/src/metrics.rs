//! SSIM, PSNR and NRMSE against a reference volume, plus the
//! mean/std/min/median/max summary used in reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::Volume3D;

/// Dynamic range `L` used by SSIM and PSNR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DataRange {
    /// `max - min` of the reference volume.
    Auto,
    Fixed(f64),
}

impl DataRange {
    fn resolve(self, reference: &Volume3D) -> Result<f64> {
        let l = match self {
            DataRange::Auto => {
                let (lo, hi) = reference.min_max();
                hi as f64 - lo as f64
            }
            DataRange::Fixed(l) => l,
        };
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::ZeroDataRange);
        }
        Ok(l)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window_radius: usize,
    pub gaussian_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: DataRange,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window_radius: 5,
            gaussian_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: DataRange::Auto,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_radius < 1 {
            return Err(Error::InvalidArgument("window_radius must be >= 1".into()));
        }
        if !(self.gaussian_sigma > 0.0) || !(self.k1 > 0.0) || !(self.k2 > 0.0) {
            return Err(Error::InvalidArgument("sigma, k1 and k2 must be > 0".into()));
        }
        Ok(())
    }

    /// Normalised 1D Gaussian taps; the 3D window is their outer product.
    pub fn gaussian_taps(&self) -> Vec<f64> {
        let r = self.window_radius as isize;
        let s2 = 2.0 * self.gaussian_sigma * self.gaussian_sigma;
        let taps: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / s2).exp()).collect();
        let sum: f64 = taps.iter().sum();
        taps.into_iter().map(|t| t / sum).collect()
    }
}

fn same_dims(x: &Volume3D, y: &Volume3D) -> Result<()> {
    if x.dims() != y.dims() {
        return Err(Error::DimMismatch(format!("{:?} vs {:?}", x.dims(), y.dims())));
    }
    Ok(())
}

/// Valid (no padding) separable filtering along one axis.
fn filter_axis(src: &[f64], dims: [usize; 3], axis: usize, taps: &[f64]) -> (Vec<f64>, [usize; 3]) {
    let w = taps.len();
    let mut od = dims;
    od[axis] = dims[axis] + 1 - w;
    let stride = [1, dims[0], dims[0] * dims[1]][axis];
    let mut out = Vec::with_capacity(od[0] * od[1] * od[2]);
    for z in 0..od[2] {
        for y in 0..od[1] {
            for x in 0..od[0] {
                let base = x + dims[0] * (y + dims[1] * z);
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    acc += t * src[base + k * stride];
                }
                out.push(acc);
            }
        }
    }
    (out, od)
}

fn gaussian_filter_valid(src: Vec<f64>, dims: [usize; 3], taps: &[f64]) -> Vec<f64> {
    let (a, d) = filter_axis(&src, dims, 0, taps);
    let (b, d) = filter_axis(&a, d, 1, taps);
    filter_axis(&b, d, 2, taps).0
}

/// Mean SSIM over all fully interior Gaussian-weighted windows.
pub fn ssim3d(x: &Volume3D, y: &Volume3D, params: &SsimParams) -> Result<f64> {
    same_dims(x, y)?;
    params.validate()?;
    let taps = params.gaussian_taps();
    let dims = x.dims();
    if dims.iter().any(|&d| d < taps.len()) {
        return Err(Error::InvalidArgument(format!(
            "volume {dims:?} smaller than the {}-voxel SSIM window",
            taps.len()
        )));
    }
    let l = params.data_range.resolve(x)?;
    let c1 = (params.k1 * l).powi(2);
    let c2 = (params.k2 * l).powi(2);

    let xs: Vec<f64> = x.values().iter().map(|&v| v as f64).collect();
    let ys: Vec<f64> = y.values().iter().map(|&v| v as f64).collect();
    let xx = xs.iter().map(|v| v * v).collect();
    let yy = ys.iter().map(|v| v * v).collect();
    let xy = xs.iter().zip(&ys).map(|(a, b)| a * b).collect();

    let mu_x = gaussian_filter_valid(xs, dims, &taps);
    let mu_y = gaussian_filter_valid(ys, dims, &taps);
    let e_xx = gaussian_filter_valid(xx, dims, &taps);
    let e_yy = gaussian_filter_valid(yy, dims, &taps);
    let e_xy = gaussian_filter_valid(xy, dims, &taps);

    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = e_xx[i] - mx * mx;
        let vy = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
            / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / mu_x.len() as f64)
}

/// Returned by [`psnr`] when the two volumes are identical.
pub const PSNR_INFINITE: f64 = f64::INFINITY;

pub fn mse(x: &Volume3D, y: &Volume3D) -> Result<f64> {
    same_dims(x, y)?;
    let sum: f64 = x
        .values()
        .iter()
        .zip(y.values())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    Ok(sum / x.len() as f64)
}

/// `10 log10(L² / MSE)` in dB, [`PSNR_INFINITE`] on zero error.
pub fn psnr(x: &Volume3D, y: &Volume3D, data_range: DataRange) -> Result<f64> {
    same_dims(x, y)?;
    let l = data_range.resolve(x)?;
    let m = mse(x, y)?;
    if m == 0.0 {
        return Ok(PSNR_INFINITE);
    }
    Ok(10.0 * (l * l / m).log10())
}

/// `‖y − x_ref‖₂ / ‖x_ref‖₂`.
pub fn nrmse(x_ref: &Volume3D, y: &Volume3D) -> Result<f64> {
    same_dims(x_ref, y)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&a, &b) in x_ref.values().iter().zip(y.values()) {
        num += (b as f64 - a as f64).powi(2);
        den += (a as f64).powi(2);
    }
    if den == 0.0 {
        return Err(Error::ZeroNormReference);
    }
    Ok((num / den).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub id: String,
    pub ssim: f64,
    pub psnr: f64,
    pub nrmse: f64,
}

impl MetricRow {
    /// All three metrics of `sr` against the reference `hr`.
    pub fn compute(id: impl Into<String>, hr: &Volume3D, sr: &Volume3D) -> Result<Self> {
        Ok(MetricRow {
            id: id.into(),
            ssim: ssim3d(hr, sr, &SsimParams::default())?,
            psnr: psnr(hr, sr, DataRange::Auto)?,
            nrmse: nrmse(hr, sr)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    /// Population std; median is the lower middle for even counts.
    pub fn of(values: &[f64]) -> Result<Summary> {
        if values.is_empty() {
            return Err(Error::Empty("no values to summarize".into()));
        }
        let n = values.len() as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let min = sorted[0];
        let max = sorted[sorted.len() - 1];
        let median = sorted[(sorted.len() - 1) / 2];
        let mean = values.iter().sum::<f64>() / n;
        let std = if min == max {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
        };
        Ok(Summary {
            mean,
            std,
            min,
            median,
            max,
        })
    }

    fn get(&self, stat: &str) -> f64 {
        match stat {
            "mean" => self.mean,
            "std" => self.std,
            "min" => self.min,
            "median" => self.median,
            _ => self.max,
        }
    }
}

pub const SUMMARY_ROWS: [&str; 5] = ["mean", "std", "min", "median", "max"];

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub per_volume: Vec<MetricRow>,
    pub ssim: Summary,
    pub psnr: Summary,
    pub nrmse: Summary,
}

pub fn summarize(rows: Vec<MetricRow>) -> Result<MetricsReport> {
    if rows.is_empty() {
        return Err(Error::Empty("no metric rows".into()));
    }
    let col = |f: fn(&MetricRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let ssim = Summary::of(&col(|r| r.ssim))?;
    let psnr = Summary::of(&col(|r| r.psnr))?;
    let nrmse = Summary::of(&col(|r| r.nrmse))?;
    Ok(MetricsReport {
        per_volume: rows,
        ssim,
        psnr,
        nrmse,
    })
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

impl MetricsReport {
    /// `id,ssim,psnr,nrmse` rows, a blank line, then the summary block with
    /// `stat,ssim,psnr,nrmse` rows mean/std/min/median/max.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,ssim,psnr,nrmse\n");
        for r in &self.per_volume {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.id,
                fmt_value(r.ssim),
                fmt_value(r.psnr),
                fmt_value(r.nrmse)
            );
        }
        s.push_str("\nstat,ssim,psnr,nrmse\n");
        for stat in SUMMARY_ROWS {
            let _ = writeln!(
                s,
                "{stat},{},{},{}",
                fmt_value(self.ssim.get(stat)),
                fmt_value(self.psnr.get(stat)),
                fmt_value(self.nrmse.get(stat))
            );
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Side-by-side summary of several methods, laid out like a results table:
/// one row per statistic, three columns per method.
pub fn comparison_csv(reports: &[(String, MetricsReport)]) -> String {
    let mut s = String::from("stat");
    for (name, _) in reports {
        let _ = write!(s, ",{name}_ssim,{name}_psnr,{name}_nrmse");
    }
    s.push('\n');
    for stat in SUMMARY_ROWS {
        s.push_str(stat);
        for (_, r) in reports {
            let _ = write!(
                s,
                ",{},{},{}",
                fmt_value(r.ssim.get(stat)),
                fmt_value(r.psnr.get(stat)),
                fmt_value(r.nrmse.get(stat))
            );
        }
        s.push('\n');
    }
    s
}
