//! Densely connected super-resolution network.
//!
//! ```text
//! input ─ conv3³(1→2k) ─┬──────────────────────────────────────────┐
//!                       └ unit1 ─ unit2 ─ unit3 ─ unit4            │
//! unit i: concat(stem, unit1..unit i-1) → BN → ELU → conv3³(→k)    │
//! output: conv1³(concat(stem, unit1..unit4) → 1)  ◄────────────────┘
//! ```

use super::{Architecture, ConvSpec, Exec, GraphBuilder, LayerDesc, ModelGraph, NormSpec};
use crate::autodiff::Scalar;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DcsrnConfig {
    /// Growth rate `k`: channels added by each dense unit.
    pub growth_rate: usize,
    pub dense_units: usize,
    pub input_kernel: usize,
    pub unit_kernel: usize,
    pub reconstruction_kernel: usize,
}

impl Default for DcsrnConfig {
    fn default() -> Self {
        DcsrnConfig {
            growth_rate: 24,
            dense_units: 4,
            input_kernel: 3,
            unit_kernel: 3,
            reconstruction_kernel: 1,
        }
    }
}

impl DcsrnConfig {
    pub fn with_growth_rate(k: usize) -> Self {
        DcsrnConfig {
            growth_rate: k,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.growth_rate == 0 {
            return Err(Error::Config("growth rate must be positive".into()));
        }
        if self.dense_units != 4 {
            return Err(Error::Config(format!(
                "the dense block has 4 units, got {}",
                self.dense_units
            )));
        }
        for k in [self.input_kernel, self.unit_kernel, self.reconstruction_kernel] {
            if k == 0 || k % 2 == 0 {
                return Err(Error::Config(format!("kernel sizes must be odd, got {k}")));
            }
        }
        Ok(())
    }

    pub fn stem_channels(&self) -> usize {
        2 * self.growth_rate
    }

    /// Input channels of dense unit `i` (1-based).
    pub fn unit_input_channels(&self, i: usize) -> usize {
        2 * self.growth_rate + (i - 1) * self.growth_rate
    }

    pub fn reconstruction_input_channels(&self) -> usize {
        2 * self.growth_rate + self.dense_units * self.growth_rate
    }
}

pub fn build_dcsrn<T: Scalar>(cfg: &DcsrnConfig, seed: u64) -> Result<ModelGraph<T>> {
    cfg.validate()?;
    let k = cfg.growth_rate;
    let mut b = GraphBuilder::new(Architecture::Dcsrn(cfg.clone()), seed);
    b.conv("stem", 1, cfg.stem_channels(), [cfg.input_kernel; 3]);
    let mut channels = cfg.stem_channels();
    for i in 1..=cfg.dense_units {
        assert_eq!(channels, cfg.unit_input_channels(i));
        b.norm(&format!("unit{i}.bn"), channels);
        b.conv(&format!("unit{i}.conv"), channels, k, [cfg.unit_kernel; 3]);
        channels += k;
    }
    assert_eq!(channels, cfg.reconstruction_input_channels());
    b.conv("reconstruction", channels, 1, [cfg.reconstruction_kernel; 3]);
    Ok(b.finish())
}

pub(super) fn wire<T: Scalar, E: Exec<T>>(convs: &[ConvSpec], norms: &[NormSpec], e: &mut E, x: E::H) -> Result<E::H> {
    let mut feats = vec![e.conv(&x, &convs[0])?];
    for (i, norm) in norms.iter().enumerate() {
        let input = if feats.len() == 1 {
            feats[0].clone()
        } else {
            e.concat(&feats)?
        };
        let h = e.bn(&input, norm)?;
        let h = e.elu(&h);
        feats.push(e.conv(&h, &convs[i + 1])?);
    }
    let all = e.concat(&feats)?;
    e.conv(&all, &convs[convs.len() - 1])
}

pub(super) fn describe<T: Scalar>(g: &ModelGraph<T>) -> Vec<LayerDesc> {
    let mut out = vec![LayerDesc::Conv(g.convs[0].clone())];
    for (i, n) in g.norms.iter().enumerate() {
        if i > 0 {
            out.push(LayerDesc::Concat(n.channels));
        }
        out.push(LayerDesc::BatchNorm(n.clone()));
        out.push(LayerDesc::Elu);
        out.push(LayerDesc::Conv(g.convs[i + 1].clone()));
    }
    let last = g.convs.last().unwrap();
    out.push(LayerDesc::Concat(last.in_channels));
    out.push(LayerDesc::Conv(last.clone()));
    out
}
