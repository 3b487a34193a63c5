//! Tape for reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards
//! visits every node after all of its consumers.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use super::ops::{self, ElementwiseOp};
use super::{ConvSpec, Result, Tensor, TensorError};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }

    /// Handle of the `i`-th node pushed onto a graph.
    pub fn from_index(i: usize) -> Self {
        Var(i)
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv { input: Var, weights: Var, bias: Var, spec: ConvSpec },
    Relu(Var),
    Elementwise(ElementwiseOp, Vec<Var>),
    Concat(Vec<Var>),
    GlobalAvgPool(Var),
    AvgPool2x2(Var),
    Reshape(Var),
    FullyConnected { input: Var, weights: Var, bias: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Adds a leaf. Only leaves created with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn conv2d(&mut self, input: Var, weights: Var, bias: Var, spec: ConvSpec) -> Result<Var> {
        let out = ops::conv2d(self.value(input), self.value(weights), self.value(bias), &spec)?;
        Ok(self.push(
            out,
            Op::Conv {
                input,
                weights,
                bias,
                spec,
            },
            &[input, weights, bias],
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = ops::relu(self.value(x));
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn elementwise(&mut self, op: ElementwiseOp, inputs: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
        let out = ops::elementwise(op, &refs)?;
        Ok(self.push(out, Op::Elementwise(op, inputs.to_vec()), inputs))
    }

    pub fn add(&mut self, inputs: &[Var]) -> Result<Var> {
        self.elementwise(ElementwiseOp::Add, inputs)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Sub, &[a, b])
    }

    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
        let out = ops::concat_channels(&refs)?;
        Ok(self.push(out, Op::Concat(inputs.to_vec()), inputs))
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let out = ops::global_avg_pool(self.value(x))?;
        Ok(self.push(out, Op::GlobalAvgPool(x), &[x]))
    }

    pub fn avg_pool_2x2(&mut self, x: Var) -> Result<Var> {
        let out = ops::avg_pool_2x2(self.value(x))?;
        Ok(self.push(out, Op::AvgPool2x2(x), &[x]))
    }

    /// Flattens to a vector in row-major order.
    pub fn flatten(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let out = self.value(x).reshaped(&[n]).expect("same element count");
        self.push(out, Op::Reshape(x), &[x])
    }

    pub fn fully_connected(&mut self, input: Var, weights: Var, bias: Var) -> Result<Var> {
        let out = ops::fully_connected(self.value(input), self.value(weights), self.value(bias))?;
        Ok(self.push(out, Op::FullyConnected { input, weights, bias }, &[input, weights, bias]))
    }

    /// Hash of every non-differentiable decision taken during the forward
    /// pass (ReLU activity and max operand selection). Two evaluations with
    /// equal fingerprints lie on the same linear piece of the graph.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    let mut word = 0u64;
                    for (i, &v) in self.value(*x).data().iter().enumerate() {
                        word = (word << 1) | (v > 0.0) as u64;
                        if i % 64 == 63 {
                            h.write_u64(word);
                            word = 0;
                        }
                    }
                    h.write_u64(word);
                }
                Op::Elementwise(ElementwiseOp::Max, inputs) => {
                    let refs: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                    for i in 0..refs[0].len() {
                        h.write_usize(ops::max_operand(&refs, i));
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// Propagates `seed` (the gradient of some scalar with respect to `out`)
    /// back through the tape. Afterwards [`Graph::grad`] returns the
    /// accumulated gradient of every node that requires one.
    pub fn backward(&mut self, out: Var, seed: Tensor) -> Result<()> {
        if seed.shape() != self.value(out).shape() {
            return Err(TensorError::ShapeMismatch(format!(
                "seed {:?} for output {:?}",
                seed.shape(),
                self.value(out).shape()
            )));
        }
        for node in &mut self.nodes {
            node.value.clear_grad();
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        for id in (0..=out.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            let wants = |v: &Var| self.nodes[v.0].requires_grad;
            let mut contributions: Vec<(Var, Tensor)> = Vec::new();
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::Conv {
                    input,
                    weights,
                    bias,
                    spec,
                } => {
                    let cg = ops::conv2d_backward(self.value(*input), self.value(*weights), spec, &g, wants(input))?;
                    if let Some(gi) = cg.input {
                        contributions.push((*input, gi));
                    }
                    contributions.push((*weights, cg.weights));
                    contributions.push((*bias, cg.bias));
                }
                Op::Relu(x) => contributions.push((*x, ops::relu_backward(self.value(*x), &g)?)),
                Op::Elementwise(op, inputs) => {
                    let refs: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                    let parts = ops::elementwise_backward(*op, &refs, &g)?;
                    contributions.extend(inputs.iter().copied().zip(parts));
                }
                Op::Concat(inputs) => {
                    let first = self.value(inputs[0]);
                    let lead = first.shape()[..first.rank() - 1].to_vec();
                    let widths: Vec<usize> = inputs.iter().map(|&v| *self.value(v).shape().last().unwrap()).collect();
                    let parts = ops::concat_backward(&widths, &lead, &g)?;
                    contributions.extend(inputs.iter().copied().zip(parts));
                }
                Op::GlobalAvgPool(x) => {
                    contributions.push((*x, ops::global_avg_pool_backward(self.value(*x).shape(), &g)?))
                }
                Op::AvgPool2x2(x) => contributions.push((*x, ops::avg_pool_2x2_backward(self.value(*x).shape(), &g)?)),
                Op::Reshape(x) => contributions.push((*x, g.reshaped(self.value(*x).shape())?)),
                Op::FullyConnected { input, weights, bias } => {
                    let fg = ops::fully_connected_backward(self.value(*input), self.value(*weights), &g)?;
                    contributions.push((*input, fg.input));
                    contributions.push((*weights, fg.weights));
                    contributions.push((*bias, fg.bias));
                }
            }
            for (v, c) in contributions {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.data_mut().iter_mut().zip(c.data()).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(c),
                }
            }
            self.nodes[id].value.set_grad(g.into_data())?;
        }
        Ok(())
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    /// Moves the gradient of `v` out of the graph (zeros if none reached it).
    pub fn take_grad(&mut self, v: Var) -> Vec<f64> {
        let node = &mut self.nodes[v.0];
        node.value
            .take_grad()
            .unwrap_or_else(|| vec![0.0; node.value.len()])
    }
}
