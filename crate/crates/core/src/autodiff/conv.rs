//! Direct 3D convolution kernels on a zero-padded copy of the input.
//!
//! Output rows are computed `LANES` voxels at a time for blocks of
//! `CO_BLOCK` output channels, so the inner loops are fixed-size and the
//! accumulators stay in registers. The gradient with respect to the input is
//! the same correlation run on the padded output gradient with flipped,
//! transposed weights.

use super::{Scalar, Tensor};

const LANES: usize = 16;
const CO_BLOCK: usize = 4;

#[derive(Clone, Copy)]
struct Geom {
    k: [usize; 3],
    sp: [usize; 3],
    /// padded extents
    pp: [usize; 3],
}

impl Geom {
    fn new(k: [usize; 3], sp: [usize; 3]) -> Self {
        let pp = [sp[0] + k[0] - 1, sp[1] + k[1] - 1, sp[2] + k[2] - 1];
        Geom { k, sp, pp }
    }

    fn kvol(&self) -> usize {
        self.k[0] * self.k[1] * self.k[2]
    }

    fn vol(&self) -> usize {
        self.sp[0] * self.sp[1] * self.sp[2]
    }

    fn pvol(&self) -> usize {
        self.pp[0] * self.pp[1] * self.pp[2]
    }
}

/// Zero-padded channels of one batch item, plus one padded plane and
/// `LANES` of slack so shifted reads past the last channel stay in bounds.
fn pad<T: Scalar>(x: &[T], channels: usize, g: &Geom) -> Vec<T> {
    let [d, h, w] = g.sp;
    let [_, hp, wp] = g.pp;
    let (od, oh, ow) = (g.k[0] / 2, g.k[1] / 2, g.k[2] / 2);
    let mut out = vec![T::zero(); channels * g.pvol() + g.pp[1] * g.pp[2] + LANES];
    for c in 0..channels {
        for z in 0..d {
            for y in 0..h {
                let src = ((c * d + z) * h + y) * w;
                let dst = c * g.pvol() + ((z + od) * hp + y + oh) * wp + ow;
                out[dst..dst + w].copy_from_slice(&x[src..src + w]);
            }
        }
    }
    out
}

/// Weights regrouped as `[co_block][ci][offset][CO_BLOCK]`, zero for
/// channels past `cout`. `flip` transposes channels and mirrors the kernel,
/// which turns the forward correlation into its adjoint.
fn pack_weights<T: Scalar>(w: &[T], cout: usize, cin: usize, kvol: usize, flip: bool) -> Vec<T> {
    let (pc_out, pc_in) = if flip { (cin, cout) } else { (cout, cin) };
    let blocks = pc_out.div_ceil(CO_BLOCK);
    let mut out = vec![T::zero(); blocks * pc_in * kvol * CO_BLOCK];
    for o in 0..pc_out {
        for i in 0..pc_in {
            for off in 0..kvol {
                let v = if flip {
                    w[(i * cin + o) * kvol + (kvol - 1 - off)]
                } else {
                    w[(o * cin + i) * kvol + off]
                };
                let (b, j) = (o / CO_BLOCK, o % CO_BLOCK);
                out[((b * pc_in + i) * kvol + off) * CO_BLOCK + j] = v;
            }
        }
    }
    out
}

#[inline(always)]
fn mul_add_lanes<T: Scalar>(acc: &mut [T; LANES], a: &[T; LANES], b: &[T; LANES]) {
    for l in 0..LANES {
        acc[l] = acc[l] + a[l] * b[l];
    }
}

#[inline(always)]
fn correlate_impl<T: Scalar>(xp: &[T], cin: usize, wpack: &[T], cout: usize, bias: &[T], g: Geom, out: &mut [T]) {
    let [kd, kh, kw] = g.k;
    let [d, h, w] = g.sp;
    let [_, hp, wp] = g.pp;
    let (kvol, pvol, vol) = (g.kvol(), g.pvol(), g.vol());
    for blk in 0..cout.div_ceil(CO_BLOCK) {
        let nco = CO_BLOCK.min(cout - blk * CO_BLOCK);
        for z in 0..d {
            for y in 0..h {
                let mut x0 = 0;
                while x0 < w {
                    let mut acc = [[T::zero(); LANES]; CO_BLOCK];
                    for ci in 0..cin {
                        let xc = &xp[ci * pvol..];
                        let wc = &wpack[(blk * cin + ci) * kvol * CO_BLOCK..][..kvol * CO_BLOCK];
                        let mut off = 0;
                        for a in 0..kd {
                            for b in 0..kh {
                                let row = ((z + a) * hp + y + b) * wp + x0;
                                for e in 0..kw {
                                    let src: &[T; LANES] = xc[row + e..row + e + LANES].try_into().unwrap();
                                    let wv: &[T; CO_BLOCK] =
                                        wc[off * CO_BLOCK..(off + 1) * CO_BLOCK].try_into().unwrap();
                                    for j in 0..CO_BLOCK {
                                        for l in 0..LANES {
                                            acc[j][l] = acc[j][l] + wv[j] * src[l];
                                        }
                                    }
                                    off += 1;
                                }
                            }
                        }
                    }
                    let n = LANES.min(w - x0);
                    for (j, acc_j) in acc.iter().enumerate().take(nco) {
                        let co = blk * CO_BLOCK + j;
                        let dst = co * vol + (z * h + y) * w + x0;
                        for l in 0..n {
                            out[dst + l] = acc_j[l] + bias[co];
                        }
                    }
                    x0 += LANES;
                }
            }
        }
    }
}

/// `gop` holds the output gradient laid out on the padded grid (zero
/// outside the valid region), `glen` entries per channel, so each weight
/// gradient is one long contiguous dot product.
#[inline(always)]
fn weight_grad_impl<T: Scalar>(xp: &[T], cin: usize, gop: &[T], glen: usize, cout: usize, g: Geom, gw: &mut [T]) {
    let [kd, kh, kw] = g.k;
    let [_, hp, wp] = g.pp;
    let (kvol, pvol) = (g.kvol(), g.pvol());
    for blk in 0..cout.div_ceil(CO_BLOCK) {
        let nco = CO_BLOCK.min(cout - blk * CO_BLOCK);
        let gb: [&[T]; CO_BLOCK] = std::array::from_fn(|j| &gop[(blk * CO_BLOCK + j) * glen..][..glen]);
        for ci in 0..cin {
            let mut off = 0;
            for a in 0..kd {
                for b in 0..kh {
                    for e in 0..kw {
                        let base = ci * pvol + (a * hp + b) * wp + e;
                        let xs = &xp[base..base + glen];
                        let mut acc = [[T::zero(); LANES]; CO_BLOCK];
                        let mut p0 = 0;
                        while p0 < glen {
                            let src: &[T; LANES] = xs[p0..p0 + LANES].try_into().unwrap();
                            for j in 0..CO_BLOCK {
                                let gv: &[T; LANES] = gb[j][p0..p0 + LANES].try_into().unwrap();
                                mul_add_lanes(&mut acc[j], gv, src);
                            }
                            p0 += LANES;
                        }
                        for (j, acc_j) in acc.iter().enumerate().take(nco) {
                            let co = blk * CO_BLOCK + j;
                            let s = acc_j.iter().fold(T::zero(), |s, &v| s + v);
                            let i = (co * cin + ci) * kvol + off;
                            gw[i] = gw[i] + s;
                        }
                        off += 1;
                    }
                }
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn correlate_avx2<T: Scalar>(
    xp: &[T],
    cin: usize,
    wpack: &[T],
    cout: usize,
    bias: &[T],
    g: Geom,
    out: &mut [T],
) {
    correlate_impl(xp, cin, wpack, cout, bias, g, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn weight_grad_avx2<T: Scalar>(xp: &[T], cin: usize, gop: &[T], glen: usize, cout: usize, g: Geom, gw: &mut [T]) {
    weight_grad_impl(xp, cin, gop, glen, cout, g, gw)
}

fn has_avx2() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::is_x86_feature_detected!("avx2")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

fn correlate<T: Scalar>(xp: &[T], cin: usize, wpack: &[T], cout: usize, bias: &[T], g: Geom, out: &mut [T]) {
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports the enabled feature.
        return unsafe { correlate_avx2(xp, cin, wpack, cout, bias, g, out) };
    }
    correlate_impl(xp, cin, wpack, cout, bias, g, out)
}

fn weight_grad<T: Scalar>(xp: &[T], cin: usize, gop: &[T], glen: usize, cout: usize, g: Geom, gw: &mut [T]) {
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports the enabled feature.
        return unsafe { weight_grad_avx2(xp, cin, gop, glen, cout, g, gw) };
    }
    weight_grad_impl(xp, cin, gop, glen, cout, g, gw)
}

fn kernel_of<T: Scalar>(weight: &Tensor<T>) -> [usize; 3] {
    let s = weight.shape();
    [s[2], s[3], s[4]]
}

/// Stride-1 cross-correlation with zero "same" padding. Shapes are
/// assumed checked.
pub(crate) fn forward<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Tensor<T> {
    let [b, cin, d, h, w] = input.shape();
    let cout = weight.shape()[0];
    let g = Geom::new(kernel_of(weight), [d, h, w]);
    let wpack = pack_weights(weight.data(), cout, cin, g.kvol(), false);
    let mut out = Tensor::zeros([b, cout, d, h, w]);
    let v = g.vol();
    for bi in 0..b {
        let xp = pad(&input.data()[bi * cin * v..(bi + 1) * cin * v], cin, &g);
        let o = &mut out.data_mut()[bi * cout * v..(bi + 1) * cout * v];
        correlate(&xp, cin, &wpack, cout, bias.data(), g, o);
    }
    out
}

pub(crate) fn input_grad<T: Scalar>(weight: &Tensor<T>, grad_out: &Tensor<T>, cin: usize) -> Tensor<T> {
    let [b, cout, d, h, w] = grad_out.shape();
    let g = Geom::new(kernel_of(weight), [d, h, w]);
    let wpack = pack_weights(weight.data(), cout, cin, g.kvol(), true);
    let zeros = vec![T::zero(); cin];
    let mut out = Tensor::zeros([b, cin, d, h, w]);
    let v = g.vol();
    for bi in 0..b {
        let gp = pad(&grad_out.data()[bi * cout * v..(bi + 1) * cout * v], cout, &g);
        let o = &mut out.data_mut()[bi * cin * v..(bi + 1) * cin * v];
        correlate(&gp, cout, &wpack, cin, &zeros, g, o);
    }
    out
}

pub(crate) fn weight_grad_of<T: Scalar>(input: &Tensor<T>, weight_shape: [usize; 5], grad_out: &Tensor<T>) -> Tensor<T> {
    let [b, cin, d, h, w] = input.shape();
    let cout = weight_shape[0];
    let g = Geom::new([weight_shape[2], weight_shape[3], weight_shape[4]], [d, h, w]);
    let [_, hp, wp] = g.pp;
    let glen = (d * hp * wp).div_ceil(LANES) * LANES;
    let blocks = cout.div_ceil(CO_BLOCK);
    let mut gw = Tensor::zeros(weight_shape);
    let v = g.vol();
    let mut gop = vec![T::zero(); blocks * CO_BLOCK * glen];
    for bi in 0..b {
        let xp = pad(&input.data()[bi * cin * v..(bi + 1) * cin * v], cin, &g);
        let go = &grad_out.data()[bi * cout * v..(bi + 1) * cout * v];
        for c in 0..cout {
            for z in 0..d {
                for y in 0..h {
                    let dst = c * glen + (z * hp + y) * wp;
                    gop[dst..dst + w].copy_from_slice(&go[c * v + (z * h + y) * w..][..w]);
                }
            }
        }
        weight_grad(&xp, cin, &gop, glen, cout, g, gw.data_mut());
    }
    gw
}
