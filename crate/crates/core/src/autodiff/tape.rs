//! Scalar reverse-mode tape.
//!
//! Every elementary operation is appended as a node holding its operands and
//! forward value. Node ids are allocated in evaluation order, so a single
//! reverse sweep over the node list visits each node once and sees every
//! adjoint fully accumulated.

use crate::autodiff::Activation;
use crate::{Error, Real, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<F> {
    Param(usize),
    Const,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, F),
    Square(usize),
    /// `order`-th derivative of an activation applied to the operand.
    Act {
        arg: usize,
        kind: Activation,
        order: u8,
    },
}

#[derive(Clone, Debug)]
pub struct Tape<F = f64> {
    ops: Vec<Op<F>>,
    values: Vec<F>,
    num_params: usize,
    output: Option<Var>,
}

impl<F: Real> Tape<F> {
    pub fn new(num_params: usize) -> Self {
        Self {
            ops: Vec::new(),
            values: Vec::new(),
            num_params,
            output: None,
        }
    }

    /// A tape with one leaf per entry of `params`, returned in order.
    pub fn with_params(params: &[F]) -> (Self, Vec<Var>) {
        let mut tape = Self::new(params.len());
        let leaves = params.iter().enumerate().map(|(k, &p)| tape.param(k, p)).collect();
        (tape, leaves)
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    fn push(&mut self, op: Op<F>, value: F) -> Var {
        debug_assert!(self.output.is_none(), "recording on a finished tape");
        self.ops.push(op);
        self.values.push(value);
        Var(self.ops.len() - 1)
    }

    pub fn param(&mut self, index: usize, value: F) -> Var {
        assert!(index < self.num_params, "parameter index out of range");
        self.push(Op::Param(index), value)
    }

    pub fn constant(&mut self, value: F) -> Var {
        self.push(Op::Const, value)
    }

    #[inline]
    pub fn value(&self, v: Var) -> F {
        self.values[v.0]
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0] + self.values[b.0];
        self.push(Op::Add(a.0, b.0), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0] - self.values[b.0];
        self.push(Op::Sub(a.0, b.0), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0] * self.values[b.0];
        self.push(Op::Mul(a.0, b.0), v)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.values[a.0];
        self.push(Op::Neg(a.0), v)
    }

    /// Multiplication by a constant that is not itself a node.
    pub fn scale(&mut self, a: Var, k: F) -> Var {
        let v = self.values[a.0] * k;
        self.push(Op::Scale(a.0, k), v)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let x = self.values[a.0];
        self.push(Op::Square(a.0), x * x)
    }

    /// Derivative of order `order` (0..=2) of `kind` applied to `a`.
    pub fn activation(&mut self, kind: Activation, order: u8, a: Var) -> Var {
        assert!(order <= 2, "activation derivatives are recorded up to order 2");
        let v = kind.derivatives(self.values[a.0])[order as usize];
        self.push(Op::Act { arg: a.0, kind, order }, v)
    }

    /// Left-to-right sum; a constant zero for an empty slice.
    pub fn sum(&mut self, terms: &[Var]) -> Var {
        match terms.split_first() {
            None => self.constant(F::zero()),
            Some((&first, rest)) => rest.iter().fold(first, |acc, &t| self.add(acc, t)),
        }
    }

    /// Marks `output` as the scalar the recording ends in.
    pub fn finish(&mut self, output: Var) {
        self.output = Some(output);
    }

    pub fn output(&self) -> Option<Var> {
        self.output
    }

    /// Re-evaluates every node from new parameter values and returns the output.
    pub fn replay(&mut self, params: &[F]) -> Result<F> {
        let out = self
            .output
            .ok_or_else(|| Error::Usage("replay of an unfinished tape".into()))?;
        if params.len() != self.num_params {
            return Err(Error::config(
                "params",
                format!("expected {} values, got {}", self.num_params, params.len()),
            ));
        }
        for k in 0..self.ops.len() {
            let v = &self.values;
            let value = match self.ops[k] {
                Op::Param(i) => params[i],
                Op::Const => v[k],
                Op::Add(a, b) => v[a] + v[b],
                Op::Sub(a, b) => v[a] - v[b],
                Op::Mul(a, b) => v[a] * v[b],
                Op::Neg(a) => -v[a],
                Op::Scale(a, c) => v[a] * c,
                Op::Square(a) => v[a] * v[a],
                Op::Act { arg, kind, order } => kind.derivatives(v[arg])[order as usize],
            };
            self.values[k] = value;
        }
        Ok(self.values[out.0])
    }

    /// Gradient of `loss` with respect to every parameter leaf.
    pub fn param_gradient(&self, loss: Var) -> Result<Vec<F>> {
        match self.output {
            None => {
                return Err(Error::Usage(
                    "gradient requested before the forward pass finished".into(),
                ))
            }
            Some(out) if out != loss => {
                return Err(Error::Usage(format!(
                    "gradient requested for node {} but the tape ends in node {}",
                    loss.0, out.0
                )))
            }
            Some(_) => {}
        }
        let mut adj = vec![F::zero(); loss.0 + 1];
        let mut grad = vec![F::zero(); self.num_params];
        adj[loss.0] = F::one();
        for k in (0..=loss.0).rev() {
            let g = adj[k];
            if g == F::zero() {
                continue;
            }
            let v = &self.values;
            match self.ops[k] {
                Op::Param(i) => grad[i] += g,
                Op::Const => {}
                Op::Add(a, b) => {
                    adj[a] += g;
                    adj[b] += g;
                }
                Op::Sub(a, b) => {
                    adj[a] += g;
                    adj[b] -= g;
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (v[a], v[b]);
                    adj[a] += g * vb;
                    adj[b] += g * va;
                }
                Op::Neg(a) => adj[a] -= g,
                Op::Scale(a, c) => adj[a] += g * c,
                Op::Square(a) => adj[a] += g * F::lit(2.0) * v[a],
                Op::Act { arg, kind, order } => {
                    let d = kind.derivatives(v[arg])[order as usize + 1];
                    adj[arg] += g * d;
                }
            }
        }
        Ok(grad)
    }
}
