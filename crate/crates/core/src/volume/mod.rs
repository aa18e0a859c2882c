//! Volume representation, persistence, synthetic phantoms, intensity
//! normalisation and the non-learning interpolation baselines.

mod interp;
mod io;
pub(crate) mod io_support {
    pub(crate) use super::io::{f32s_to_le_bytes, le_bytes_to_f32s, parse_header};
}
mod phantom;

pub use interp::{upsample_nearest, upsample_tricubic};
pub use io::{header_path, load_volume, payload_path, save_volume};
pub use phantom::{make_phantom, PhantomSpec};

use crate::error::{Error, Result};

/// Isotropic voxel spacing in mm used when none is given.
pub const DEFAULT_SPACING: f64 = 0.7;

/// A real-valued 3D scalar field stored x-fastest.
///
/// `values[x + nx * (y + ny * z)]` is the voxel at `(x, y, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3D {
    dims: [usize; 3],
    spacing: [f64; 3],
    values: Vec<f32>,
}

impl Volume3D {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], values: Vec<f32>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "dims must be positive, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "spacing must be strictly positive, got {spacing:?}"
            )));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if values.len() != expected {
            return Err(Error::PayloadLength {
                expected,
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Volume3D {
            dims,
            spacing,
            values,
        })
    }

    /// Volume with the default isotropic spacing.
    pub fn from_values(dims: [usize; 3], values: Vec<f32>) -> Result<Self> {
        Self::new(dims, [DEFAULT_SPACING; 3], values)
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: [usize; 3], value: f32) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "dims must be positive");
        assert!(value.is_finite());
        Volume3D {
            dims,
            spacing: [DEFAULT_SPACING; 3],
            values: vec![value; dims[0] * dims[1] * dims[2]],
        }
    }

    /// Builds a volume by evaluating `f(x, y, z)` at every voxel.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    values.push(f(x, y, z));
                }
            }
        }
        Self::from_values(dims, values)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn with_spacing(mut self, spacing: [f64; 3]) -> Result<Self> {
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "spacing must be strictly positive, got {spacing:?}"
            )));
        }
        self.spacing = spacing;
        Ok(self)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.values[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f32) {
        debug_assert!(value.is_finite());
        let i = self.index(x, y, z);
        self.values[i] = value;
    }

    /// Copies a `size`-sided cube whose lowest corner is `corner`.
    pub fn crop(&self, corner: [usize; 3], size: [usize; 3]) -> Volume3D {
        for a in 0..3 {
            assert!(corner[a] + size[a] <= self.dims[a], "crop out of bounds");
        }
        let mut values = Vec::with_capacity(size[0] * size[1] * size[2]);
        for z in 0..size[2] {
            for y in 0..size[1] {
                let start = self.index(corner[0], corner[1] + y, corner[2] + z);
                values.extend_from_slice(&self.values[start..start + size[0]]);
            }
        }
        Volume3D {
            dims: size,
            spacing: self.spacing,
            values,
        }
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }

    /// Applies `f` to every voxel, keeping dims and spacing.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Volume3D> {
        Volume3D::new(
            self.dims,
            self.spacing,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }
}

/// Min-max rescales a volume to `[0, 1]`.
pub fn normalize_intensity(vol: &Volume3D) -> Result<Volume3D> {
    let (lo, hi) = vol.min_max();
    if !(hi > lo) {
        return Err(Error::ConstantVolume);
    }
    let lo = lo as f64;
    let scale = 1.0 / (hi as f64 - lo);
    let values = vol
        .values
        .iter()
        .map(|&v| ((v as f64 - lo) * scale).clamp(0.0, 1.0) as f32)
        .collect();
    Volume3D::new(vol.dims, vol.spacing, values)
}
