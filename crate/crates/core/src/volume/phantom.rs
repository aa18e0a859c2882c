//! Synthetic phantoms: soft-edged ellipsoids of varied size and contrast over
//! a smooth background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Volume3D;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub n_ellipsoids: usize,
    pub intensity_range: [f32; 2],
    /// Inverse edge width in voxels; larger is sharper.
    pub edge_sharpness: f64,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn new(dims: [usize; 3], seed: u64) -> Self {
        PhantomSpec {
            dims,
            n_ellipsoids: 32,
            intensity_range: [0.0, 1.0],
            edge_sharpness: 4.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 8) {
            return Err(Error::InvalidArgument(format!(
                "phantom dims must each be >= 8, got {:?}",
                self.dims
            )));
        }
        if self.n_ellipsoids == 0 {
            return Err(Error::InvalidArgument("n_ellipsoids must be >= 1".into()));
        }
        let [lo, hi] = self.intensity_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "intensity_range needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        if !(self.edge_sharpness > 0.0) || !self.edge_sharpness.is_finite() {
            return Err(Error::InvalidArgument("edge_sharpness must be > 0".into()));
        }
        Ok(())
    }
}

struct Ellipsoid {
    center: [f64; 3],
    semi_axes: [f64; 3],
    // rows are the ellipsoid's principal directions
    rotation: [[f64; 3]; 3],
    contrast: f64,
}

fn rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let (a, b, c) = (
        rng.random_range(0.0..std::f64::consts::TAU),
        rng.random_range(0.0..std::f64::consts::PI),
        rng.random_range(0.0..std::f64::consts::TAU),
    );
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sc, cc) = c.sin_cos();
    // z-x-z Euler angles
    [
        [ca * cc - sa * cb * sc, -ca * sc - sa * cb * cc, sa * sb],
        [sa * cc + ca * cb * sc, -sa * sc + ca * cb * cc, -ca * sb],
        [sb * sc, sb * cc, cb],
    ]
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn make_phantom(spec: &PhantomSpec) -> Result<Volume3D> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dims = spec.dims;
    let dmin = *dims.iter().min().unwrap() as f64;

    // smooth background: a few low-frequency cosines
    let waves: Vec<([f64; 3], f64, f64)> = (0..3)
        .map(|_| {
            let freq = [
                rng.random_range(0.5..2.0) / dims[0] as f64,
                rng.random_range(0.5..2.0) / dims[1] as f64,
                rng.random_range(0.5..2.0) / dims[2] as f64,
            ];
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let amp = rng.random_range(0.03..0.08);
            (freq, phase, amp)
        })
        .collect();

    let ellipsoids: Vec<Ellipsoid> = (0..spec.n_ellipsoids)
        .map(|i| {
            // a third of the shapes are thin and elongated, like small vessels
            let thin = i % 3 == 2;
            let semi_axes = if thin {
                [
                    rng.random_range(0.15..0.35) * dmin,
                    rng.random_range(0.6..1.6),
                    rng.random_range(0.6..1.6),
                ]
            } else {
                [
                    rng.random_range(0.05..0.25) * dmin,
                    rng.random_range(0.05..0.25) * dmin,
                    rng.random_range(0.05..0.25) * dmin,
                ]
            };
            let center = [
                rng.random_range(0.15..0.85) * dims[0] as f64,
                rng.random_range(0.15..0.85) * dims[1] as f64,
                rng.random_range(0.15..0.85) * dims[2] as f64,
            ];
            let sign = if rng.random_bool(0.3) { -1.0 } else { 1.0 };
            Ellipsoid {
                center,
                semi_axes,
                rotation: rotation(&mut rng),
                contrast: sign * rng.random_range(0.2..0.6),
            }
        })
        .collect();

    let mut raw = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let p = [x as f64, y as f64, z as f64];
                let mut v = 0.3;
                for (freq, phase, amp) in &waves {
                    let arg = std::f64::consts::TAU
                        * (freq[0] * p[0] + freq[1] * p[1] + freq[2] * p[2])
                        + phase;
                    v += amp * arg.cos();
                }
                for e in &ellipsoids {
                    let d = [p[0] - e.center[0], p[1] - e.center[1], p[2] - e.center[2]];
                    let mut r2 = 0.0;
                    for (row, semi) in e.rotation.iter().zip(e.semi_axes) {
                        let u = row[0] * d[0] + row[1] * d[1] + row[2] * d[2];
                        r2 += (u / semi) * (u / semi);
                    }
                    let r = r2.sqrt();
                    let min_semi = e.semi_axes.iter().cloned().fold(f64::INFINITY, f64::min);
                    // signed distance to the surface, approximately in voxels
                    let dist = (1.0 - r) * min_semi;
                    v += e.contrast * sigmoid(spec.edge_sharpness * dist);
                }
                raw.push(v);
            }
        }
    }

    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::ConstantVolume);
    }
    let [out_lo, out_hi] = [spec.intensity_range[0] as f64, spec.intensity_range[1] as f64];
    let values = raw
        .iter()
        .map(|&v| {
            let t = (v - lo) / (hi - lo);
            ((out_lo + t * (out_hi - out_lo)) as f32)
                .clamp(spec.intensity_range[0], spec.intensity_range[1])
        })
        .collect();
    Volume3D::from_values(dims, values)
}
