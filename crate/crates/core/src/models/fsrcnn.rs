//! FSRCNN with a same-size stride-1 reconstruction layer in place of the
//! learned deconvolution upsampler, in a 3D or slice-wise 2D flavour.

use super::{Architecture, ConvSpec, Exec, GraphBuilder, LayerDesc, ModelGraph};
use crate::autodiff::Scalar;
use crate::error::{Error, Result};

pub const FEATURE_KERNEL: usize = 5;
pub const MAPPING_KERNEL: usize = 3;
/// Matches the 9-wide output layer of the reference design.
pub const RECONSTRUCTION_KERNEL: usize = 9;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FsrcnnConfig {
    /// Feature dimension.
    pub d: usize,
    /// Shrunk dimension.
    pub s: usize,
    /// Number of mapping layers.
    pub m: usize,
    /// 2 (unit-depth kernels) or 3.
    pub dims: u8,
}

impl Default for FsrcnnConfig {
    fn default() -> Self {
        FsrcnnConfig {
            d: 56,
            s: 12,
            m: 4,
            dims: 3,
        }
    }
}

impl FsrcnnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d > self.s && self.s >= 1) {
            return Err(Error::Config(format!("need d > s >= 1, got d={} s={}", self.d, self.s)));
        }
        if self.m < 1 {
            return Err(Error::Config("need at least one mapping layer".into()));
        }
        if self.dims != 2 && self.dims != 3 {
            return Err(Error::Config(format!("dims must be 2 or 3, got {}", self.dims)));
        }
        Ok(())
    }

    fn kernel(&self, k: usize) -> [usize; 3] {
        if self.dims == 2 {
            [1, k, k]
        } else {
            [k; 3]
        }
    }
}

pub fn build_fsrcnn<T: Scalar>(cfg: &FsrcnnConfig, seed: u64) -> Result<ModelGraph<T>> {
    cfg.validate()?;
    let mut b = GraphBuilder::new(Architecture::Fsrcnn(cfg.clone()), seed);
    b.conv("feature", 1, cfg.d, cfg.kernel(FEATURE_KERNEL));
    b.conv("shrink", cfg.d, cfg.s, cfg.kernel(1));
    for i in 1..=cfg.m {
        b.conv(&format!("map{i}"), cfg.s, cfg.s, cfg.kernel(MAPPING_KERNEL));
    }
    b.conv("expand", cfg.s, cfg.d, cfg.kernel(1));
    b.conv("reconstruction", cfg.d, 1, cfg.kernel(RECONSTRUCTION_KERNEL));
    Ok(b.finish())
}

pub(super) fn wire<T: Scalar, E: Exec<T>>(convs: &[ConvSpec], e: &mut E, x: E::H) -> Result<E::H> {
    let (last, hidden) = convs.split_last().expect("fsrcnn has layers");
    let mut h = x;
    for c in hidden {
        h = e.conv(&h, c)?;
        h = e.elu(&h);
    }
    e.conv(&h, last)
}

pub(super) fn describe<T: Scalar>(g: &ModelGraph<T>) -> Vec<LayerDesc> {
    let mut out = Vec::new();
    let n = g.convs.len();
    for (i, c) in g.convs.iter().enumerate() {
        out.push(LayerDesc::Conv(c.clone()));
        if i + 1 < n {
            out.push(LayerDesc::Elu);
        }
    }
    out
}
