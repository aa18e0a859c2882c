use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Scalar;
use crate::error::{Error, Result};
use crate::volume::Volume3D;

/// Dense 5-d array `(batch, channels, depth, height, width)`, width fastest.
///
/// Parameters reuse the same type with unused trailing extents set to 1,
/// e.g. conv weights are `(out_c, in_c, kd, kh, kw)` and biases `(c, 1, 1, 1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: [usize; 5],
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: [usize; 5], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: [usize; 5]) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn filled(shape: [usize; 5], value: T) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: [1; 5],
            data: vec![value],
        }
    }

    pub fn vector(values: Vec<T>) -> Self {
        Tensor {
            shape: [values.len(), 1, 1, 1, 1],
            data: values,
        }
    }

    /// Gaussian entries with the given standard deviation.
    pub fn randn(shape: [usize; 5], std: f64, rng: &mut impl Rng) -> Self {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::from_f64(z * std)
            })
            .collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> [usize; 5] {
        self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn spatial(&self) -> [usize; 3] {
        [self.shape[2], self.shape[3], self.shape[4]]
    }

    pub fn spatial_len(&self) -> usize {
        self.shape[2] * self.shape[3] * self.shape[4]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(self, shape: [usize; 5]) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// A single-channel batch of one: `(1, 1, nz, ny, nx)`.
    pub fn from_volume(vol: &Volume3D) -> Self {
        let [nx, ny, nz] = vol.dims();
        Tensor {
            shape: [1, 1, nz, ny, nx],
            data: vol.values().iter().map(|&v| T::from_f64(v as f64)).collect(),
        }
    }

    /// Stacks equally sized volumes into `(n, 1, nz, ny, nx)`.
    pub fn from_volumes(vols: &[Volume3D]) -> Result<Self> {
        let first = vols
            .first()
            .ok_or_else(|| Error::Empty("no volumes to stack".into()))?;
        let [nx, ny, nz] = first.dims();
        let mut data = Vec::with_capacity(vols.len() * first.len());
        for v in vols {
            if v.dims() != first.dims() {
                return Err(Error::DimMismatch("stacked volumes differ in size".into()));
            }
            data.extend(v.values().iter().map(|&x| T::from_f64(x as f64)));
        }
        Tensor::new([vols.len(), 1, nz, ny, nx], data)
    }

    /// Channel 0 of batch item `b` as a volume.
    pub fn to_volume(&self, b: usize, spacing: [f64; 3]) -> Result<Volume3D> {
        let [_, c, d, h, w] = self.shape;
        let len = d * h * w;
        let start = b * c * len;
        let values = self.data[start..start + len]
            .iter()
            .map(|v| v.as_f64() as f32)
            .collect();
        Volume3D::new([w, h, d], spacing, values)
    }
}
