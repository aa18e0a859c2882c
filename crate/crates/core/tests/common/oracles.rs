//! Slow, literal reference implementations used to check the fast paths.

use dcsrn_core::Volume3D;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn uniform_volume(dims: [usize; 3], seed: u64) -> Volume3D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims[0] * dims[1] * dims[2];
    Volume3D::from_values(dims, (0..n).map(|_| rng.random::<f32>()).collect()).unwrap()
}

/// Triple-sum DFT straight from the definition, x-fastest output.
pub fn naive_dft(vol: &Volume3D) -> Vec<Complex64> {
    let [nx, ny, nz] = vol.dims();
    let mut out = Vec::with_capacity(vol.len());
    for kz in 0..nz {
        for ky in 0..ny {
            for kx in 0..nx {
                let mut acc = Complex64::new(0.0, 0.0);
                for z in 0..nz {
                    for y in 0..ny {
                        for x in 0..nx {
                            let turns = (kx * x) as f64 / nx as f64
                                + (ky * y) as f64 / ny as f64
                                + (kz * z) as f64 / nz as f64;
                            acc += Complex64::from_polar(vol.get(x, y, z) as f64, -std::f64::consts::TAU * turns);
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Signed frequency of DFT bin `i` on an axis of length `n`.
pub fn signed_freq(i: usize, n: usize) -> isize {
    if i <= n / 2 {
        i as isize
    } else {
        i as isize - n as isize
    }
}

/// Bin holding signed frequency `w` on an axis of length `n`.
pub fn bin_of(w: isize, n: usize) -> usize {
    w.rem_euclid(n as isize) as usize
}

/// Largest frequency magnitude that survives a factor-`f` cut on `n`
/// samples: strictly inside the reduced matrix's Nyquist limit.
pub fn cutoff(n: usize, f: usize) -> usize {
    if f == 1 {
        n / 2
    } else {
        n.div_ceil(2 * f) - 1
    }
}

/// Mean SSIM evaluated window by window with an explicit 3D Gaussian
/// weight array and two-pass moments.
pub fn ssim_literal(x: &Volume3D, y: &Volume3D, radius: usize, sigma: f64, l: f64) -> f64 {
    let w = 2 * radius + 1;
    let mut weights = vec![0.0; w * w * w];
    for k in 0..w {
        for j in 0..w {
            for i in 0..w {
                let d2: f64 = [i, j, k].iter().map(|&a| (a as f64 - radius as f64).powi(2)).sum();
                weights[i + w * (j + w * k)] = (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    let wsum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|g| *g /= wsum);
    let c1 = (0.01 * l).powi(2);
    let c2 = (0.03 * l).powi(2);
    let [nx, ny, nz] = x.dims();
    let (mut total, mut count) = (0.0, 0usize);
    for cz in 0..=nz - w {
        for cy in 0..=ny - w {
            for cx in 0..=nx - w {
                let at = |v: &Volume3D, i: usize, j: usize, k: usize| v.get(cx + i, cy + j, cz + k) as f64;
                let (mut mx, mut my) = (0.0, 0.0);
                for k in 0..w {
                    for j in 0..w {
                        for i in 0..w {
                            let g = weights[i + w * (j + w * k)];
                            mx += g * at(x, i, j, k);
                            my += g * at(y, i, j, k);
                        }
                    }
                }
                let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
                for k in 0..w {
                    for j in 0..w {
                        for i in 0..w {
                            let g = weights[i + w * (j + w * k)];
                            let a = at(x, i, j, k) - mx;
                            let b = at(y, i, j, k) - my;
                            vx += g * a * a;
                            vy += g * b * b;
                            cov += g * a * b;
                        }
                    }
                }
                total += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}

/// Hand count for DCSRN with growth rate `k`: a 3³ stem to 2k channels,
/// four BN + 3³ conv units adding k channels each, and a 1³ output conv.
pub fn dcsrn_params(k: usize) -> usize {
    let stem = 27 * 2 * k + 2 * k;
    let units: usize = (0..4)
        .map(|i| {
            let c = 2 * k + i * k;
            2 * c + 27 * c * k + k
        })
        .sum();
    let out = 6 * k + 1;
    stem + units + out
}

/// Hand count for 3D FSRCNN(d, s, m): 5³ feature, 1³ shrink, m 3³ maps,
/// 1³ expand and a 9³ output layer, all with biases.
pub fn fsrcnn3d_params(d: usize, s: usize, m: usize) -> usize {
    (125 * d + d) + (d * s + s) + m * (27 * s * s + s) + (s * d + d) + (729 * d + 1)
}
