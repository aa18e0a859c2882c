//! Frequency-domain resolution reduction.
//!
//! `degrade` zeroes the outer k-space lines along the truncated axes and
//! transforms back at the original matrix size. `decimate` keeps the same
//! lines but transforms back on the reduced matrix, which is what the
//! interpolation baselines consume.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::volume::Volume3D;

/// Frequency-domain counterpart of a [`Volume3D`], same x-fastest layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVolume {
    dims: [usize; 3],
    values: Vec<Complex64>,
    centered: bool,
}

impl ComplexVolume {
    pub fn new(dims: [usize; 3], values: Vec<Complex64>, centered: bool) -> Result<Self> {
        let expected = dims[0] * dims[1] * dims[2];
        if values.len() != expected {
            return Err(Error::PayloadLength {
                expected,
                found: values.len(),
            });
        }
        if let Some(index) = values
            .iter()
            .position(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(Error::NonFinite { index });
        }
        Ok(ComplexVolume {
            dims,
            values,
            centered,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn centered(&self) -> bool {
        self.centered
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> Complex64 {
        self.values[x + self.dims[0] * (y + self.dims[1] * z)]
    }

    fn from_real(vol: &Volume3D) -> Self {
        ComplexVolume {
            dims: vol.dims(),
            values: vol
                .values()
                .iter()
                .map(|&v| Complex64::new(v as f64, 0.0))
                .collect(),
            centered: false,
        }
    }
}

/// Per-axis integer reduction factors and the axes they apply to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegradeSpec {
    factors: [usize; 3],
    axes: Vec<usize>,
}

impl DegradeSpec {
    /// `factors` on `axes` must be >= 2; every other factor must be 1.
    pub fn new(factors: [usize; 3], axes: &[usize]) -> Result<Self> {
        let mut sorted = axes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != axes.len() || sorted.iter().any(|&a| a > 2) {
            return Err(Error::InvalidArgument(format!("invalid truncation axes {axes:?}")));
        }
        for (a, &f) in factors.iter().enumerate() {
            let truncated = sorted.contains(&a);
            if truncated && f < 2 {
                return Err(Error::InvalidArgument(format!(
                    "truncated axis {a} needs factor >= 2, got {f}"
                )));
            }
            if !truncated && f != 1 {
                return Err(Error::InvalidArgument(format!(
                    "axis {a} is not truncated but has factor {f}"
                )));
            }
        }
        Ok(DegradeSpec {
            factors,
            axes: sorted,
        })
    }

    /// Truncates every axis whose factor is >= 2.
    pub fn from_factors(factors: [usize; 3]) -> Result<Self> {
        if factors.iter().any(|&f| f == 0) {
            return Err(Error::InvalidArgument("factors must be >= 1".into()));
        }
        let axes: Vec<usize> = (0..3).filter(|&a| factors[a] >= 2).collect();
        Self::new(factors, &axes)
    }

    /// Factor 2 on axes 0 and 1: a total reduction of 4.
    pub fn default_2x2() -> Self {
        Self::new([2, 2, 1], &[0, 1]).expect("valid default")
    }

    pub fn factors(&self) -> [usize; 3] {
        self.factors
    }

    pub fn axes(&self) -> &[usize] {
        &self.axes
    }

    fn check_dims(&self, dims: [usize; 3]) -> Result<()> {
        for a in 0..3 {
            if dims[a] % self.factors[a] != 0 {
                return Err(Error::InvalidArgument(format!(
                    "axis {a} length {} not divisible by factor {}",
                    dims[a], self.factors[a]
                )));
            }
        }
        Ok(())
    }
}

impl Default for DegradeSpec {
    fn default() -> Self {
        Self::default_2x2()
    }
}

fn fft_axis(values: &mut [Complex64], dims: [usize; 3], axis: usize, fft: &Arc<dyn Fft<f64>>) {
    let n = dims[axis];
    if n == 1 {
        return;
    }
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    match axis {
        0 => {
            for line in values.chunks_exact_mut(n) {
                fft.process_with_scratch(line, &mut scratch);
            }
        }
        _ => {
            let stride = if axis == 1 { dims[0] } else { dims[0] * dims[1] };
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            let (outer, inner) = if axis == 1 {
                (dims[2], dims[0])
            } else {
                (1, dims[0] * dims[1])
            };
            for o in 0..outer {
                for i in 0..inner {
                    let base = if axis == 1 { i + o * dims[0] * dims[1] } else { i };
                    for k in 0..n {
                        line[k] = values[base + k * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for k in 0..n {
                        values[base + k * stride] = line[k];
                    }
                }
            }
        }
    }
}

fn fft3_in_place(values: &mut [Complex64], dims: [usize; 3], direction: FftDirection) {
    let mut planner = FftPlanner::new();
    for axis in 0..3 {
        let fft = planner.plan_fft(dims[axis], direction);
        fft_axis(values, dims, axis, &fft);
    }
}

/// Unnormalised forward DFT along all three axes.
pub fn forward_fft3(vol: &Volume3D) -> ComplexVolume {
    let mut kv = ComplexVolume::from_real(vol);
    fft3_in_place(&mut kv.values, kv.dims, FftDirection::Forward);
    kv
}

/// Inverse DFT scaled by `1 / (nx·ny·nz)`.
pub fn inverse_fft3(kv: &ComplexVolume) -> Result<ComplexVolume> {
    if kv.centered {
        return Err(Error::InvalidArgument(
            "inverse_fft3 expects an uncentered spectrum".into(),
        ));
    }
    let mut out = kv.clone();
    fft3_in_place(&mut out.values, out.dims, FftDirection::Inverse);
    let scale = 1.0 / out.values.len() as f64;
    for v in &mut out.values {
        *v *= scale;
    }
    Ok(out)
}

/// Highest kept frequency magnitude on an axis of length `n` with factor `f`.
fn kept_half_width(n: usize, f: usize) -> usize {
    n.div_ceil(2 * f) - 1
}

/// Kept unshifted DFT indices along one axis.
fn kept_indices(n: usize, f: usize) -> Vec<usize> {
    if f == 1 {
        return (0..n).collect();
    }
    let h = kept_half_width(n, f);
    let mut idx: Vec<usize> = (0..=h).collect();
    idx.extend((n - h..n).filter(|&i| i > h));
    idx
}

fn axis_keep(n: usize, f: usize) -> Vec<bool> {
    let mut keep = vec![false; n];
    for i in kept_indices(n, f) {
        keep[i] = true;
    }
    keep
}

/// Binary k-space mask in unshifted DFT order, x-fastest.
///
/// Along a truncated axis of length `n` with factor `f`, frequencies with
/// `|ω| <= ceil(n / 2f) - 1` are kept and the Nyquist line is dropped, which
/// keeps the mask conjugate-symmetric.
pub fn truncation_mask(dims: [usize; 3], spec: &DegradeSpec) -> Result<Vec<bool>> {
    spec.check_dims(dims)?;
    let keep: Vec<Vec<bool>> = (0..3).map(|a| axis_keep(dims[a], spec.factors[a])).collect();
    let mut mask = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                mask.push(keep[0][x] && keep[1][y] && keep[2][z]);
            }
        }
    }
    Ok(mask)
}

/// Same-size low-resolution volume: `Re(IFFT(mask ⊙ FFT(vol)))`.
pub fn degrade(vol: &Volume3D, spec: &DegradeSpec) -> Result<Volume3D> {
    let mask = truncation_mask(vol.dims(), spec)?;
    let mut kv = forward_fft3(vol);
    for (v, &m) in kv.values.iter_mut().zip(&mask) {
        if !m {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    let img = inverse_fft3(&kv)?;
    let values = real_part_checked(&img, vol)?;
    Volume3D::new(vol.dims(), vol.spacing(), values)
}

fn real_part_checked(img: &ComplexVolume, reference: &Volume3D) -> Result<Vec<f32>> {
    let peak = reference
        .values()
        .iter()
        .fold(0.0f64, |m, &v| m.max((v as f64).abs()));
    let residual = img.values.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));
    let bound = 1e-4 * peak;
    if residual > bound && residual > 1e-12 {
        return Err(Error::ImaginaryResidual { residual, bound });
    }
    Ok(img.values.iter().map(|c| c.re as f32).collect())
}

/// Reduced-matrix low-resolution volume holding exactly the Fourier
/// coefficients that [`degrade`] keeps. Dims shrink by the factors; a
/// constant volume maps to the same constant.
pub fn decimate(vol: &Volume3D, spec: &DegradeSpec) -> Result<Volume3D> {
    let dims = vol.dims();
    spec.check_dims(dims)?;
    let f = spec.factors;
    let small = [dims[0] / f[0], dims[1] / f[1], dims[2] / f[2]];
    let kv = forward_fft3(vol);

    // map each kept full-size index to the reduced grid by signed frequency
    let maps: Vec<Vec<(usize, usize)>> = (0..3)
        .map(|a| {
            kept_indices(dims[a], f[a])
                .into_iter()
                .map(|i| {
                    let freq = if i <= dims[a] / 2 { i as isize } else { i as isize - dims[a] as isize };
                    (i, freq.rem_euclid(small[a] as isize) as usize)
                })
                .collect()
        })
        .collect();

    let mut reduced = vec![Complex64::new(0.0, 0.0); small[0] * small[1] * small[2]];
    for &(iz, oz) in &maps[2] {
        for &(iy, oy) in &maps[1] {
            for &(ix, ox) in &maps[0] {
                reduced[ox + small[0] * (oy + small[1] * oz)] =
                    kv.values[ix + dims[0] * (iy + dims[1] * iz)];
            }
        }
    }
    let n_full = (dims[0] * dims[1] * dims[2]) as f64;
    let n_small = (small[0] * small[1] * small[2]) as f64;
    let scale = n_small / n_full;
    for v in &mut reduced {
        *v *= scale;
    }
    let img = inverse_fft3(&ComplexVolume::new(small, reduced, false)?)?;
    let values = real_part_checked(&img, vol)?;
    let sp = vol.spacing();
    Volume3D::new(
        small,
        [sp[0] * f[0] as f64, sp[1] * f[1] as f64, sp[2] * f[2] as f64],
        values,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(vol: &Volume3D) -> Vec<Complex64> {
        let [nx, ny, nz] = vol.dims();
        let mut out = Vec::with_capacity(vol.len());
        for kz in 0..nz {
            for ky in 0..ny {
                for kx in 0..nx {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for z in 0..nz {
                        for y in 0..ny {
                            for x in 0..nx {
                                let phase = -std::f64::consts::TAU
                                    * ((kx * x) as f64 / nx as f64
                                        + (ky * y) as f64 / ny as f64
                                        + (kz * z) as f64 / nz as f64);
                                acc += Complex64::from_polar(vol.get(x, y, z) as f64, phase);
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        out
    }

    fn pseudo_random(dims: [usize; 3], seed: u64) -> Volume3D {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Volume3D::from_values(dims, (0..dims[0] * dims[1] * dims[2]).map(|_| rng.random::<f32>()).collect())
            .unwrap()
    }

    #[test]
    fn fft_of_constant_and_impulse() {
        let c = Volume3D::filled([4, 4, 4], 2.5);
        let k = forward_fft3(&c);
        assert!((k.values()[0].re - 2.5 * 64.0).abs() < 1e-9);
        assert!(k.values()[1..].iter().all(|v| v.norm() < 1e-9));

        let mut d = Volume3D::zeros([4, 3, 5]);
        d.set(0, 0, 0, 1.0);
        assert!(forward_fft3(&d).values().iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn fft_matches_naive_dft() {
        let v = pseudo_random([4, 4, 4], 11);
        let fast = forward_fft3(&v);
        for (a, b) in fast.values().iter().zip(naive_dft(&v)) {
            assert!((a - b).norm() <= 1e-4 * b.norm().max(1.0));
        }
    }

    #[test]
    fn inverse_round_trip_and_trivia() {
        let v = pseudo_random([8, 8, 8], 5);
        let back = inverse_fft3(&forward_fft3(&v)).unwrap();
        for (a, b) in back.values().iter().zip(v.values()) {
            assert!((a.re - *b as f64).abs() < 1e-5 && a.im.abs() < 1e-5);
        }
        let zero = ComplexVolume::new([4, 4, 4], vec![Complex64::new(0.0, 0.0); 64], false).unwrap();
        assert!(inverse_fft3(&zero).unwrap().values().iter().all(|c| c.norm() == 0.0));
        let mut dc = zero.clone();
        dc.values_mut()[0] = Complex64::new(64.0 * 3.0, 0.0);
        assert!(inverse_fft3(&dc).unwrap().values().iter().all(|c| (c.re - 3.0).abs() < 1e-12));
        let centered = ComplexVolume::new([4, 4, 4], vec![Complex64::new(0.0, 0.0); 64], true).unwrap();
        assert!(inverse_fft3(&centered).is_err());
    }

    #[test]
    fn mask_counts_and_symmetry() {
        let spec = DegradeSpec::new([2, 2, 1], &[0, 1]).unwrap();
        assert_eq!(kept_indices(8, 2), vec![0, 1, 7]);
        let mask = truncation_mask([8, 8, 8], &spec).unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 72);
        let idx = |x: usize, y: usize, z: usize| x + 8 * (y + 8 * z);
        for z in 0..8 {
            for y in 0..8 {
                for x in 0..8 {
                    assert_eq!(mask[idx(x, y, z)], mask[idx((8 - x) % 8, (8 - y) % 8, (8 - z) % 8)]);
                }
            }
        }
        let none = DegradeSpec::from_factors([1, 1, 1]).unwrap();
        assert!(truncation_mask([8, 8, 8], &none).unwrap().iter().all(|&m| m));
        assert!(truncation_mask([9, 8, 8], &spec).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(DegradeSpec::new([2, 1, 1], &[0, 1]).is_err());
        assert!(DegradeSpec::new([2, 2, 2], &[0, 1]).is_err());
        assert!(DegradeSpec::new([2, 2, 1], &[0, 3]).is_err());
        assert_eq!(DegradeSpec::from_factors([1, 4, 2]).unwrap().axes(), &[1, 2]);
    }

    #[test]
    fn degrade_keeps_constant() {
        let c = Volume3D::filled([8, 8, 4], 0.6);
        let d = degrade(&c, &DegradeSpec::default()).unwrap();
        assert!(d.values().iter().all(|&v| (v - 0.6).abs() < 1e-6));
    }

    #[test]
    fn decimate_constant_and_identity() {
        let c = Volume3D::filled([16, 16, 8], 0.25);
        let d = decimate(&c, &DegradeSpec::default()).unwrap();
        assert_eq!(d.dims(), [8, 8, 8]);
        assert!(d.values().iter().all(|&v| (v - 0.25).abs() < 1e-6));
        let v = pseudo_random([6, 4, 4], 2);
        let same = decimate(&v, &DegradeSpec::from_factors([1, 1, 1]).unwrap()).unwrap();
        for (a, b) in same.values().iter().zip(v.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]
            #[test]
            fn degrade_is_projection(seed in any::<u64>(), n in 2usize..5) {
                let dims = [4 * n, 4 * n, 2 * n];
                let v = pseudo_random(dims, seed);
                let spec = DegradeSpec::default();
                let once = degrade(&v, &spec).unwrap();
                let twice = degrade(&once, &spec).unwrap();
                for (a, b) in once.values().iter().zip(twice.values()) {
                    prop_assert!((a - b).abs() <= 1e-5);
                }
                prop_assert!((once.mean() - v.mean()).abs() <= 1e-6);
                let e0: f64 = v.values().iter().map(|&x| (x as f64).powi(2)).sum();
                let e1: f64 = once.values().iter().map(|&x| (x as f64).powi(2)).sum();
                prop_assert!(e1 <= e0);
            }
        }
    }
}
