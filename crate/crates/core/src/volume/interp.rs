//! Nearest-neighbour and separable cubic-convolution upsampling.

use super::Volume3D;
use crate::error::{Error, Result};

const CUBIC_A: f64 = -0.5;

fn check_factors(factors: [usize; 3]) -> Result<()> {
    if factors.iter().any(|&f| f == 0) {
        return Err(Error::InvalidArgument(format!(
            "upsampling factors must be >= 1, got {factors:?}"
        )));
    }
    Ok(())
}

fn out_spacing(vol: &Volume3D, factors: [usize; 3]) -> [f64; 3] {
    let s = vol.spacing();
    [
        s[0] / factors[0] as f64,
        s[1] / factors[1] as f64,
        s[2] / factors[2] as f64,
    ]
}

/// Each output voxel `u` copies input voxel `u / factor` on every axis.
pub fn upsample_nearest(vol: &Volume3D, factors: [usize; 3]) -> Result<Volume3D> {
    check_factors(factors)?;
    let [nx, ny, nz] = vol.dims();
    let out = [nx * factors[0], ny * factors[1], nz * factors[2]];
    let mut values = Vec::with_capacity(out[0] * out[1] * out[2]);
    for z in 0..out[2] {
        for y in 0..out[1] {
            for x in 0..out[0] {
                values.push(vol.get(x / factors[0], y / factors[1], z / factors[2]));
            }
        }
    }
    Volume3D::new(out, out_spacing(vol, factors), values)
}

/// Keys cubic-convolution kernel.
pub(crate) fn cubic_weight(x: f64) -> f64 {
    let a = CUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// Resamples one axis of an x-fastest buffer by an integer factor.
fn resample_axis(src: &[f64], dims: [usize; 3], axis: usize, factor: usize) -> (Vec<f64>, [usize; 3]) {
    let n = dims[axis];
    let mut out_dims = dims;
    out_dims[axis] = n * factor;

    // taps and weights are the same for every line along this axis
    let taps: Vec<([usize; 4], [f64; 4])> = (0..n * factor)
        .map(|u| {
            let s = u as f64 / factor as f64;
            let i0 = s.floor() as isize;
            let t = s - i0 as f64;
            let clamp = |i: isize| i.clamp(0, n as isize - 1) as usize;
            (
                [clamp(i0 - 1), clamp(i0), clamp(i0 + 1), clamp(i0 + 2)],
                [
                    cubic_weight(t + 1.0),
                    cubic_weight(t),
                    cubic_weight(1.0 - t),
                    cubic_weight(2.0 - t),
                ],
            )
        })
        .collect();

    let stride_in = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let stride_out = match axis {
        0 => 1,
        1 => out_dims[0],
        _ => out_dims[0] * out_dims[1],
    };
    let mut out = vec![0.0; out_dims[0] * out_dims[1] * out_dims[2]];
    for z in 0..out_dims[2] {
        for y in 0..out_dims[1] {
            for x in 0..out_dims[0] {
                let o = [x, y, z];
                if o[axis] != 0 {
                    continue;
                }
                let base_in = o[0] + dims[0] * (o[1] + dims[1] * o[2]);
                let base_out = o[0] + out_dims[0] * (o[1] + out_dims[1] * o[2]);
                for (u, (idx, w)) in taps.iter().enumerate() {
                    let mut acc = 0.0;
                    for k in 0..4 {
                        acc += w[k] * src[base_in + idx[k] * stride_in];
                    }
                    out[base_out + u * stride_out] = acc;
                }
            }
        }
    }
    (out, out_dims)
}

/// Separable cubic convolution (a = -0.5) with edge clamping. Output voxel
/// `u` samples input coordinate `u / factor`, so on-grid samples are kept.
pub fn upsample_tricubic(vol: &Volume3D, factors: [usize; 3]) -> Result<Volume3D> {
    check_factors(factors)?;
    if vol.dims().iter().any(|&d| d < 4) {
        return Err(Error::InvalidArgument(format!(
            "cubic interpolation needs every axis >= 4, got {:?}",
            vol.dims()
        )));
    }
    let mut buf: Vec<f64> = vol.values().iter().map(|&v| v as f64).collect();
    let mut dims = vol.dims();
    for axis in 0..3 {
        if factors[axis] > 1 {
            let (b, d) = resample_axis(&buf, dims, axis, factors[axis]);
            buf = b;
            dims = d;
        }
    }
    Volume3D::new(
        dims,
        out_spacing(vol, factors),
        buf.into_iter().map(|v| v as f32).collect(),
    )
}
