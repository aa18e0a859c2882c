//! DCSRN and FSRCNN builders over the autodiff engine.
//!
//! A [`ModelGraph`] owns its parameters and batch-norm running statistics.
//! The wiring of each architecture is written once against [`Exec`] and
//! driven either by the tape (training, gradient checks) or directly on
//! tensors (inference, no tape).

mod dcsrn;
mod fsrcnn;

pub use dcsrn::{build_dcsrn, DcsrnConfig};
pub use fsrcnn::{build_fsrcnn, FsrcnnConfig};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::autodiff::{ops, AdamState, Checkpoint, Mode, RunningStats, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Architecture {
    Dcsrn(DcsrnConfig),
    Fsrcnn(FsrcnnConfig),
}

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Dcsrn(_) => "dcsrn",
            Architecture::Fsrcnn(c) if c.dims == 2 => "fsrcnn2d",
            Architecture::Fsrcnn(_) => "fsrcnn3d",
        }
    }

    /// First 8 hex digits of the SHA-256 of the config string.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_string().as_bytes());
        digest.iter().take(4).map(|b| format!("{b:02x}")).collect()
    }

    /// `<arch>-<config-hash>.ckpt`
    pub fn checkpoint_file_name(&self) -> String {
        format!("{}-{}.ckpt", self.name(), self.config_hash())
    }

    pub fn is_2d(&self) -> bool {
        matches!(self, Architecture::Fsrcnn(c) if c.dims == 2)
    }

    pub fn build<T: Scalar>(&self, seed: u64) -> Result<ModelGraph<T>> {
        match self {
            Architecture::Dcsrn(c) => build_dcsrn(c, seed),
            Architecture::Fsrcnn(c) => build_fsrcnn(c, seed),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Architecture::Dcsrn(c) => write!(
                f,
                "dcsrn:k={},units={},input_kernel={},unit_kernel={},reconstruction_kernel={}",
                c.growth_rate, c.dense_units, c.input_kernel, c.unit_kernel, c.reconstruction_kernel
            ),
            Architecture::Fsrcnn(c) => write!(f, "fsrcnn:d={},s={},m={},dims={}", c.d, c.s, c.m, c.dims),
        }
    }
}

impl FromStr for Architecture {
    type Err = Error;

    /// Accepts the `Display` form; omitted keys take their defaults, so
    /// `dcsrn:k=8` and `fsrcnn:d=56,s=12,m=4,dims=3` both parse.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut kv = Vec::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value in {part:?}")))?;
            let v: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad integer in {part:?}")))?;
            kv.push((k.trim().to_string(), v));
        }
        let get = |key: &str| kv.iter().find(|(k, _)| k == key).map(|(_, v)| *v);
        let check_keys = |allowed: &[&str]| -> Result<()> {
            match kv.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
                Some((k, _)) => Err(Error::Config(format!("unknown architecture key {k:?}"))),
                None => Ok(()),
            }
        };
        match kind.trim() {
            "dcsrn" => {
                check_keys(&["k", "units", "input_kernel", "unit_kernel", "reconstruction_kernel"])?;
                let d = DcsrnConfig::default();
                let cfg = DcsrnConfig {
                    growth_rate: get("k").unwrap_or(d.growth_rate),
                    dense_units: get("units").unwrap_or(d.dense_units),
                    input_kernel: get("input_kernel").unwrap_or(d.input_kernel),
                    unit_kernel: get("unit_kernel").unwrap_or(d.unit_kernel),
                    reconstruction_kernel: get("reconstruction_kernel").unwrap_or(d.reconstruction_kernel),
                };
                cfg.validate()?;
                Ok(Architecture::Dcsrn(cfg))
            }
            "fsrcnn" | "fsrcnn3d" | "fsrcnn2d" => {
                check_keys(&["d", "s", "m", "dims"])?;
                let def_dims = if kind.trim() == "fsrcnn2d" { 2 } else { 3 };
                let d = FsrcnnConfig::default();
                let cfg = FsrcnnConfig {
                    d: get("d").unwrap_or(d.d),
                    s: get("s").unwrap_or(d.s),
                    m: get("m").unwrap_or(d.m),
                    dims: get("dims").unwrap_or(def_dims) as u8,
                };
                cfg.validate()?;
                Ok(Architecture::Fsrcnn(cfg))
            }
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    weight: usize,
    bias: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NormSpec {
    pub name: String,
    pub channels: usize,
    gamma: usize,
    beta: usize,
    stats: usize,
}

/// Ordered, human-readable layer listing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerDesc {
    Conv(ConvSpec),
    BatchNorm(NormSpec),
    Elu,
    /// Channel concatenation producing this many channels.
    Concat(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph<T> {
    arch: Architecture,
    convs: Vec<ConvSpec>,
    norms: Vec<NormSpec>,
    params: Vec<Param<T>>,
    stats: Vec<RunningStats<T>>,
}

pub(crate) struct GraphBuilder<T> {
    graph: ModelGraph<T>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> GraphBuilder<T> {
    pub(crate) fn new(arch: Architecture, seed: u64) -> Self {
        GraphBuilder {
            graph: ModelGraph {
                arch,
                convs: Vec::new(),
                norms: Vec::new(),
                params: Vec::new(),
                stats: Vec::new(),
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn push_param(&mut self, name: String, value: Tensor<T>) -> usize {
        self.graph.params.push(Param { name, value });
        self.graph.params.len() - 1
    }

    /// He-normal weights (std √(2 / fan_in)), zero bias.
    pub(crate) fn conv(&mut self, name: &str, in_c: usize, out_c: usize, kernel: [usize; 3]) -> usize {
        let fan_in = in_c * kernel[0] * kernel[1] * kernel[2];
        let std = (2.0 / fan_in as f64).sqrt();
        let w = Tensor::randn([out_c, in_c, kernel[0], kernel[1], kernel[2]], std, &mut self.rng);
        let weight = self.push_param(format!("{name}.weight"), w);
        let bias = self.push_param(format!("{name}.bias"), Tensor::zeros([out_c, 1, 1, 1, 1]));
        self.graph.convs.push(ConvSpec {
            name: name.to_string(),
            in_channels: in_c,
            out_channels: out_c,
            kernel,
            weight,
            bias,
        });
        self.graph.convs.len() - 1
    }

    pub(crate) fn norm(&mut self, name: &str, channels: usize) -> usize {
        let gamma = self.push_param(format!("{name}.gamma"), Tensor::filled([channels, 1, 1, 1, 1], T::one()));
        let beta = self.push_param(format!("{name}.beta"), Tensor::zeros([channels, 1, 1, 1, 1]));
        self.graph.stats.push(RunningStats::new(channels));
        self.graph.norms.push(NormSpec {
            name: name.to_string(),
            channels,
            gamma,
            beta,
            stats: self.graph.stats.len() - 1,
        });
        self.graph.norms.len() - 1
    }

    pub(crate) fn finish(self) -> ModelGraph<T> {
        self.graph
    }
}

/// Executes layer primitives for the architecture wiring.
pub(crate) trait Exec<T: Scalar> {
    type H: Clone;
    fn conv(&mut self, x: &Self::H, c: &ConvSpec) -> Result<Self::H>;
    fn bn(&mut self, x: &Self::H, n: &NormSpec) -> Result<Self::H>;
    fn elu(&mut self, x: &Self::H) -> Self::H;
    fn concat(&mut self, xs: &[Self::H]) -> Result<Self::H>;
}

struct TapeExec<'a, T: Scalar> {
    tape: &'a mut Tape<T>,
    params: &'a [Var],
    stats: &'a mut [RunningStats<T>],
    mode: Mode,
}

impl<T: Scalar> Exec<T> for TapeExec<'_, T> {
    type H = Var;

    fn conv(&mut self, x: &Var, c: &ConvSpec) -> Result<Var> {
        self.tape.conv3d(*x, self.params[c.weight], self.params[c.bias])
    }

    fn bn(&mut self, x: &Var, n: &NormSpec) -> Result<Var> {
        self.tape.batch_norm(
            *x,
            self.params[n.gamma],
            self.params[n.beta],
            &mut self.stats[n.stats],
            self.mode,
        )
    }

    fn elu(&mut self, x: &Var) -> Var {
        self.tape.elu(*x)
    }

    fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        self.tape.concat_channels(xs)
    }
}

struct DirectExec<'a, T> {
    params: &'a [Param<T>],
    stats: &'a [RunningStats<T>],
}

impl<T: Scalar> Exec<T> for DirectExec<'_, T> {
    type H = Tensor<T>;

    fn conv(&mut self, x: &Tensor<T>, c: &ConvSpec) -> Result<Tensor<T>> {
        ops::conv3d_forward(x, &self.params[c.weight].value, &self.params[c.bias].value)
    }

    fn bn(&mut self, x: &Tensor<T>, n: &NormSpec) -> Result<Tensor<T>> {
        Ok(ops::batch_norm_infer(
            x,
            &self.params[n.gamma].value,
            &self.params[n.beta].value,
            &self.stats[n.stats],
        )?
        .0)
    }

    fn elu(&mut self, x: &Tensor<T>) -> Tensor<T> {
        ops::elu_forward(x)
    }

    fn concat(&mut self, xs: &[Tensor<T>]) -> Result<Tensor<T>> {
        let refs: Vec<&Tensor<T>> = xs.iter().collect();
        ops::concat_forward(&refs)
    }
}

impl<T: Scalar> ModelGraph<T> {
    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn convs(&self) -> &[ConvSpec] {
        &self.convs
    }

    pub fn norms(&self) -> &[NormSpec] {
        &self.norms
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[RunningStats<T>] {
        &self.stats
    }

    pub fn running_stats_mut(&mut self) -> &mut [RunningStats<T>] {
        &mut self.stats
    }

    pub fn param_shapes(&self) -> Vec<[usize; 5]> {
        self.params.iter().map(|p| p.value.shape()).collect()
    }

    /// Total number of trainable scalars.
    pub fn count_params(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn max_kernel(&self) -> [usize; 3] {
        let mut k = [1; 3];
        for c in &self.convs {
            for a in 0..3 {
                k[a] = k[a].max(c.kernel[a]);
            }
        }
        k
    }

    /// The ordered layer sequence.
    pub fn layers(&self) -> Vec<LayerDesc> {
        match &self.arch {
            Architecture::Dcsrn(_) => dcsrn::describe(self),
            Architecture::Fsrcnn(_) => fsrcnn::describe(self),
        }
    }

    fn check_input(&self, shape: [usize; 5]) -> Result<()> {
        if shape[1] != 1 {
            return Err(Error::ShapeMismatch(format!(
                "model input needs one channel, got {}",
                shape[1]
            )));
        }
        let k = self.max_kernel();
        if (0..3).any(|a| shape[2 + a] < k[a]) {
            return Err(Error::InvalidArgument(format!(
                "input spatial size {:?} smaller than kernel {:?}",
                &shape[2..],
                k
            )));
        }
        Ok(())
    }

    /// Records a forward pass on `tape`. Returns the output and the tape
    /// handles of every parameter, in [`ModelGraph::params`] order.
    pub fn forward(&mut self, tape: &mut Tape<T>, input: Var, mode: Mode) -> Result<(Var, Vec<Var>)> {
        self.check_input(tape.value(input).shape())?;
        let params: Vec<Var> = self.params.iter().map(|p| tape.param(p.value.clone())).collect();
        let mut exec = TapeExec {
            tape,
            params: &params,
            stats: &mut self.stats,
            mode,
        };
        let out = wire(&self.arch, &self.convs, &self.norms, &mut exec, input)?;
        Ok((out, params))
    }

    /// Inference-mode forward without a tape.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input.shape())?;
        let mut exec = DirectExec {
            params: &self.params,
            stats: &self.stats,
        };
        wire(&self.arch, &self.convs, &self.norms, &mut exec, input.clone())
    }

    /// Adam step over every parameter using gradients read from `tape`.
    /// Parameters without a gradient are treated as having gradient zero.
    pub fn apply_adam(&mut self, adam: &mut AdamState<T>, tape: &Tape<T>, vars: &[Var]) -> Result<()> {
        let zeros: Vec<Tensor<T>> = self.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        let grads: Vec<&Tensor<T>> = vars
            .iter()
            .zip(&zeros)
            .map(|(&v, z)| tape.grad(v).unwrap_or(z))
            .collect();
        let mut ps: Vec<&mut Tensor<T>> = self.params.iter_mut().map(|p| &mut p.value).collect();
        adam.step(&mut ps, &grads)
    }
}

fn wire<T: Scalar, E: Exec<T>>(
    arch: &Architecture,
    convs: &[ConvSpec],
    norms: &[NormSpec],
    e: &mut E,
    x: E::H,
) -> Result<E::H> {
    match arch {
        Architecture::Dcsrn(_) => dcsrn::wire(convs, norms, e, x),
        Architecture::Fsrcnn(_) => fsrcnn::wire(convs, e, x),
    }
}

/// Forward in either mode, returning the output tensor. Train mode records
/// on a scratch tape and updates batch-norm running statistics.
pub fn forward_model<T: Scalar>(model: &mut ModelGraph<T>, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
    match mode {
        Mode::Infer => model.infer(input),
        Mode::Train => {
            let mut tape = Tape::new();
            let x = tape.input(input.clone());
            let (y, _) = model.forward(&mut tape, x, Mode::Train)?;
            Ok(tape.value(y).clone())
        }
    }
}

pub fn count_params<T: Scalar>(model: &ModelGraph<T>) -> usize {
    model.count_params()
}

impl ModelGraph<f32> {
    /// Parameters, running statistics and (optionally) optimizer state.
    pub fn to_checkpoint(&self, adam: Option<&AdamState<f32>>) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.set_meta("arch", self.arch.to_string());
        ck.set_meta("config_hash", self.arch.config_hash());
        for p in &self.params {
            ck.push_tensor(p.name.clone(), &p.value.shape(), p.value.data().to_vec());
        }
        for (n, s) in self.norms.iter().zip(&self.stats) {
            ck.push_tensor(format!("{}.running_mean", n.name), &[n.channels], s.mean.clone());
            ck.push_tensor(format!("{}.running_var", n.name), &[n.channels], s.var.clone());
        }
        if let Some(a) = adam {
            ck.set_meta("adam.step", a.step.to_string());
            ck.set_meta("adam.lr", a.lr.to_string());
            ck.set_meta("adam.beta1", a.beta1.to_string());
            ck.set_meta("adam.beta2", a.beta2.to_string());
            ck.set_meta("adam.epsilon", a.epsilon.to_string());
            for ((p, m), v) in self.params.iter().zip(&a.m).zip(&a.v) {
                ck.push_tensor(format!("adam.m.{}", p.name), &m.shape(), m.data().to_vec());
                ck.push_tensor(format!("adam.v.{}", p.name), &v.shape(), v.data().to_vec());
            }
        }
        ck
    }

    /// Rebuilds a model from a checkpoint, validating names and shapes
    /// against the recorded architecture.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(ModelGraph<f32>, Option<AdamState<f32>>)> {
        let arch: Architecture = ck
            .meta("arch")
            .ok_or_else(|| Error::CheckpointMismatch("missing arch metadata".into()))?
            .parse()?;
        if let Some(h) = ck.meta("config_hash") {
            if h != arch.config_hash() {
                return Err(Error::CheckpointMismatch(format!(
                    "config hash {h} does not match {}",
                    arch.config_hash()
                )));
            }
        }
        let mut model: ModelGraph<f32> = arch.build(0)?;
        let load = |name: &str, shape: [usize; 5]| -> Result<Tensor<f32>> {
            let (s, v) = ck
                .tensor(name)
                .ok_or_else(|| Error::CheckpointMismatch(format!("missing tensor {name}")))?;
            if s.iter().product::<usize>() != shape.iter().product::<usize>() {
                return Err(Error::CheckpointMismatch(format!(
                    "tensor {name} has shape {s:?}, expected {shape:?}"
                )));
            }
            Tensor::new(shape, v.to_vec())
        };
        for p in model.params.iter_mut() {
            p.value = load(&p.name, p.value.shape())?;
        }
        for (n, s) in model.norms.iter().zip(model.stats.iter_mut()) {
            let shape = [n.channels, 1, 1, 1, 1];
            s.mean = load(&format!("{}.running_mean", n.name), shape)?.into_data();
            s.var = load(&format!("{}.running_var", n.name), shape)?.into_data();
        }
        let adam = match ck.meta("adam.step") {
            None => None,
            Some(step) => {
                let parse = |k: &str| -> Result<f64> {
                    ck.meta(k)
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| Error::CheckpointMismatch(format!("bad {k}")))
                };
                let mut a = AdamState::new(parse("adam.lr")?, &model.param_shapes());
                a.beta1 = parse("adam.beta1")?;
                a.beta2 = parse("adam.beta2")?;
                a.epsilon = parse("adam.epsilon")?;
                a.step = step
                    .parse()
                    .map_err(|_| Error::CheckpointMismatch("bad adam.step".into()))?;
                for (i, p) in model.params.iter().enumerate() {
                    a.m[i] = load(&format!("adam.m.{}", p.name), p.value.shape())?;
                    a.v[i] = load(&format!("adam.v.{}", p.name), p.value.shape())?;
                }
                Some(a)
            }
        };
        Ok((model, adam))
    }
}
