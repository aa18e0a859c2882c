//! The computation tape: nodes are appended in execution order, so walking
//! it backwards is a reverse topological traversal.

use super::ops::{self, BnSaved, RunningStats};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

enum Op<T> {
    Leaf,
    Conv3d { input: Var, weight: Var, bias: Var },
    BatchNorm { input: Var, gamma: Var, beta: Var, saved: BnSaved<T>, batch_stats: bool },
    Elu { input: Var },
    Concat { inputs: Vec<Var> },
    Reshape { input: Var },
    Add { a: Var, b: Var },
    Sum { input: Var },
    Mse { pred: Var, target: Var },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    backward_done: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops all nodes so the tape can record a new pass.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.backward_done = false;
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// A constant leaf (data, targets).
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn conv3d(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let out = ops::conv3d_forward(self.value(input), self.value(weight), self.value(bias))?;
        let rg = self.rg(input) || self.rg(weight) || self.rg(bias);
        Ok(self.push(out, rg, Op::Conv3d { input, weight, bias }))
    }

    /// Batch norm; in `Train` mode uses batch statistics and updates `running`.
    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running: &mut RunningStats<T>,
        mode: Mode,
    ) -> Result<Var> {
        let (out, saved) = match mode {
            Mode::Train => ops::batch_norm_train(self.value(input), self.value(gamma), self.value(beta), running)?,
            Mode::Infer => ops::batch_norm_infer(self.value(input), self.value(gamma), self.value(beta), running)?,
        };
        let rg = self.rg(input) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            out,
            rg,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                saved,
                batch_stats: mode == Mode::Train,
            },
        ))
    }

    pub fn elu(&mut self, input: Var) -> Var {
        let out = ops::elu_forward(self.value(input));
        let rg = self.rg(input);
        self.push(out, rg, Op::Elu { input })
    }

    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = inputs.iter().map(|&v| self.value(v)).collect();
        let out = ops::concat_forward(&values)?;
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(out, rg, Op::Concat { inputs: inputs.to_vec() }))
    }

    pub fn reshape(&mut self, input: Var, shape: [usize; 5]) -> Result<Var> {
        let out = self.value(input).clone().reshape(shape)?;
        let rg = self.rg(input);
        Ok(self.push(out, rg, Op::Reshape { input }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch(format!("add: {:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let mut out = ta.clone();
        out.add_assign(tb);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, rg, Op::Add { a, b }))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s: T = self.value(input).data().iter().copied().sum();
        let rg = self.rg(input);
        self.push(Tensor::scalar(s), rg, Op::Sum { input })
    }

    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let l = ops::mse_forward(self.value(pred), self.value(target))?;
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(Tensor::scalar(l), rg, Op::Mse { pred, target }))
    }

    fn accumulate(&mut self, v: Var, g: Tensor<T>) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        match node.grad.as_mut() {
            Some(existing) => existing.add_assign(&g),
            None => node.grad = Some(g),
        }
    }

    /// Reverse pass from a scalar `loss`. Fills the gradient of every
    /// `requires_grad` node reachable from it. Callable once per recording.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let n = self.value(loss).numel();
        if n != 1 {
            return Err(Error::NonScalarLoss(n));
        }
        self.backward_done = true;
        if !self.rg(loss) {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(Tensor::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            debug_assert!(g.all_finite(), "non-finite gradient at node {i}");
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            match &op {
                Op::Leaf => {}
                Op::Conv3d { input, weight, bias } => {
                    let need = [self.rg(*input), self.rg(*weight), self.rg(*bias)];
                    let grads = ops::conv3d_backward(self.value(*input), self.value(*weight), &g, need);
                    if let Some(gi) = grads.input {
                        self.accumulate(*input, gi);
                    }
                    if let Some(gw) = grads.weight {
                        self.accumulate(*weight, gw);
                    }
                    if let Some(gb) = grads.bias {
                        self.accumulate(*bias, gb);
                    }
                }
                Op::BatchNorm { input, gamma, beta, saved, batch_stats } => {
                    let (gi, gg, gb) = ops::batch_norm_backward(saved, self.value(*gamma), &g, *batch_stats);
                    self.accumulate(*input, gi);
                    self.accumulate(*gamma, gg);
                    self.accumulate(*beta, gb);
                }
                Op::Elu { input } => {
                    let gi = ops::elu_backward(self.value(*input), &g);
                    self.accumulate(*input, gi);
                }
                Op::Concat { inputs } => {
                    let mut c0 = 0;
                    for &v in inputs {
                        let c = self.value(v).channels();
                        if self.rg(v) {
                            self.accumulate(v, ops::channel_slice(&g, c0, c));
                        }
                        c0 += c;
                    }
                }
                Op::Reshape { input } => {
                    let shape = self.value(*input).shape();
                    self.accumulate(*input, g.clone().reshape(shape)?);
                }
                Op::Add { a, b } => {
                    self.accumulate(*a, g.clone());
                    self.accumulate(*b, g.clone());
                }
                Op::Sum { input } => {
                    let shape = self.value(*input).shape();
                    self.accumulate(*input, Tensor::filled(shape, g.data()[0]));
                }
                Op::Mse { pred, target } => {
                    let (p, t) = (self.value(*pred), self.value(*target));
                    let scale = T::from_f64(2.0) * g.data()[0] / T::from_f64(p.numel() as f64);
                    let diff: Vec<T> = p
                        .data()
                        .iter()
                        .zip(t.data())
                        .map(|(&a, &b)| scale * (a - b))
                        .collect();
                    let gp = Tensor::new(p.shape(), diff)?;
                    if self.rg(*target) {
                        self.accumulate(*target, gp.map(|x| -x));
                    }
                    self.accumulate(*pred, gp);
                }
            }
            self.nodes[i].op = op;
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }
}
