//! Tape-based reverse-mode differentiation over vector-valued nodes.
//!
//! A [`Tape`] records a forward computation built from a small set of
//! primitives (matrix–vector product with a parameter matrix, elementwise
//! arithmetic, `abs`, `tanh`, `softplus`, `log`, `exp`, square and sum).
//! Every node holds a vector; scalars are vectors of length one and
//! broadcast against longer operands in the binary ops.
//!
//! Parameters live outside the tape in a [`ParamSet`]. Forward ops read
//! parameter values from it and [`Tape::backward`] writes the gradients
//! back into it, so the set must not be modified between the two.
//!
//! ```
//! use factvae::autodiff::{ParamSet, Tape};
//! use factvae::math::Tensor;
//!
//! let mut params = ParamSet::new();
//! let x = params.add("x", Tensor::vector(vec![3.0]));
//! let mut tape = Tape::new();
//! let v = tape.param(&params, x);
//! let y = tape.square(v);
//! let y = tape.sum(y);
//! tape.backward(y, &mut params).unwrap();
//! assert_eq!(params.grad(x).data(), &[6.0]);
//! ```

use crate::error::{Error, Result};
use crate::math::Tensor;

/// Handle to a parameter inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor and its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter { name: name.into(), value, grad });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }
}

/// Node handle on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
enum Op {
    Constant,
    Param(ParamId),
    MatVec(ParamId, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Abs(Var),
    Tanh(Var),
    Softplus(Var),
    Log(Var),
    Exp(Var),
    Square(Var),
    Sum(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::MatVec(..) => "matvec",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Abs(_) => "abs",
            Op::Tanh(_) => "tanh",
            Op::Softplus(_) => "softplus",
            Op::Log(_) => "log",
            Op::Exp(_) => "exp",
            Op::Square(_) => "square",
            Op::Sum(_) => "sum",
        }
    }
}

struct Node {
    op: Op,
    value: Vec<f64>,
}

/// Records a forward computation for one backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    first_nonfinite: Option<(usize, &'static str)>,
}

/// Derivative convention for `|x|`: `sign(x)`, and 0 at the kink.
pub fn subgradient_abs(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn broadcast_len(a: usize, b: usize) -> usize {
    match (a, b) {
        _ if a == b => a,
        (1, n) | (n, 1) => n,
        _ => panic!("operand lengths {a} and {b} do not broadcast"),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Value of a length-one node.
    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.len(), 1, "node is not a scalar");
        val[0]
    }

    /// `Err` naming the first operation that produced a NaN or infinity.
    pub fn status(&self) -> Result<()> {
        match self.first_nonfinite {
            None => Ok(()),
            Some((idx, op)) => Err(Error::Numerical { op, detail: format!("node {idx} of {}", self.nodes.len()) }),
        }
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> Var {
        if self.first_nonfinite.is_none() && value.iter().any(|x| !x.is_finite()) {
            self.first_nonfinite = Some((self.nodes.len(), op.name()));
        }
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).iter().map(|&x| f(x)).collect();
        self.push(op, value)
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let n = broadcast_len(va.len(), vb.len());
        let value =
            (0..n).map(|i| f(va[if va.len() == 1 { 0 } else { i }], vb[if vb.len() == 1 { 0 } else { i }])).collect();
        self.push(op, value)
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(Op::Constant, value)
    }

    /// Flattened copy of a parameter tensor.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        self.push(Op::Param(id), params.value(id).data().to_vec())
    }

    /// `M x` with `M` a rank-2 parameter.
    pub fn matvec(&mut self, params: &ParamSet, m: ParamId, x: Var) -> Var {
        let mat = params.value(m);
        assert_eq!(mat.cols(), self.value(x).len(), "matvec shape mismatch for {}", params.get(m).name);
        let value = mat.matvec(self.value(x));
        self.push(Op::MatVec(m, x), value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| c * x)
    }

    /// `a + c` elementwise.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Offset(a), |x| x + c)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.map(a, Op::Abs(a), f64::abs)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.map(a, Op::Softplus(a), softplus)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, Op::Log(a), f64::ln)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, Op::Exp(a), f64::exp)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, Op::Square(a), |x| x * x)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(Op::Sum(a), vec![s])
    }

    /// Sum of a list of same-length nodes.
    pub fn add_all(&mut self, terms: &[Var]) -> Var {
        let mut iter = terms.iter().copied();
        let first = iter.next().expect("add_all needs at least one term");
        iter.fold(first, |acc, t| self.add(acc, t))
    }

    /// Propagates `∂loss/∂·` back through the tape.
    ///
    /// All parameter gradients are reset to zero first, then filled with
    /// the derivative of `loss` (which must be a scalar node).
    pub fn backward(&self, loss: Var, params: &mut ParamSet) -> Result<()> {
        self.status()?;
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        params.zero_grad();

        let mut adj: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        adj[loss.0] = vec![1.0];

        for idx in (0..=loss.0).rev() {
            let g = std::mem::take(&mut adj[idx]);
            if g.is_empty() {
                continue;
            }
            let node = &self.nodes[idx];
            match node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    for (d, gi) in params.get_mut(id).grad.data_mut().iter_mut().zip(&g) {
                        *d += gi;
                    }
                }
                Op::MatVec(m, x) => {
                    let p = params.get_mut(m);
                    p.grad.add_outer(&g, self.value(x));
                    let dx = p.value.matvec_t(&g);
                    accumulate(&mut adj[x.0], &dx);
                }
                Op::Add(a, b) => {
                    accumulate_broadcast(&mut adj, a, self.value(a).len(), g.iter().copied());
                    accumulate_broadcast(&mut adj, b, self.value(b).len(), g.iter().copied());
                }
                Op::Sub(a, b) => {
                    accumulate_broadcast(&mut adj, a, self.value(a).len(), g.iter().copied());
                    accumulate_broadcast(&mut adj, b, self.value(b).len(), g.iter().map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(a), self.value(b));
                    let at = |v: &[f64], i: usize| v[if v.len() == 1 { 0 } else { i }];
                    let ga: Vec<f64> = g.iter().enumerate().map(|(i, gi)| gi * at(vb, i)).collect();
                    let gb: Vec<f64> = g.iter().enumerate().map(|(i, gi)| gi * at(va, i)).collect();
                    accumulate_broadcast(&mut adj, a, va.len(), ga.into_iter());
                    accumulate_broadcast(&mut adj, b, vb.len(), gb.into_iter());
                }
                Op::Div(a, b) => {
                    let (va, vb) = (self.value(a), self.value(b));
                    let at = |v: &[f64], i: usize| v[if v.len() == 1 { 0 } else { i }];
                    let ga: Vec<f64> = g.iter().enumerate().map(|(i, gi)| gi / at(vb, i)).collect();
                    let gb: Vec<f64> =
                        g.iter().enumerate().map(|(i, gi)| -gi * at(va, i) / (at(vb, i) * at(vb, i))).collect();
                    accumulate_broadcast(&mut adj, a, va.len(), ga.into_iter());
                    accumulate_broadcast(&mut adj, b, vb.len(), gb.into_iter());
                }
                Op::Scale(a, c) => {
                    let d: Vec<f64> = g.iter().map(|gi| c * gi).collect();
                    accumulate(&mut adj[a.0], &d);
                }
                Op::Offset(a) => accumulate(&mut adj[a.0], &g),
                Op::Abs(a) => self.unary_back(&mut adj, a, &node.value, &g, |x, _| subgradient_abs(x)),
                Op::Tanh(a) => self.unary_back(&mut adj, a, &node.value, &g, |_, y| 1.0 - y * y),
                Op::Softplus(a) => self.unary_back(&mut adj, a, &node.value, &g, |x, _| sigmoid(x)),
                Op::Log(a) => self.unary_back(&mut adj, a, &node.value, &g, |x, _| 1.0 / x),
                Op::Exp(a) => self.unary_back(&mut adj, a, &node.value, &g, |_, y| y),
                Op::Square(a) => self.unary_back(&mut adj, a, &node.value, &g, |x, _| 2.0 * x),
                Op::Sum(a) => {
                    let n = self.value(a).len();
                    accumulate(&mut adj[a.0], &vec![g[0]; n]);
                }
            }
        }
        Ok(())
    }

    /// Chain rule for an elementwise node; `dfdx(x, y)` sees the input
    /// and output values.
    fn unary_back(&self, adj: &mut [Vec<f64>], a: Var, out: &[f64], g: &[f64], dfdx: impl Fn(f64, f64) -> f64) {
        let d: Vec<f64> = self.value(a).iter().zip(out).zip(g).map(|((&x, &y), gi)| gi * dfdx(x, y)).collect();
        accumulate(&mut adj[a.0], &d);
    }
}

fn accumulate(slot: &mut Vec<f64>, d: &[f64]) {
    if slot.is_empty() {
        slot.extend_from_slice(d);
    } else {
        for (s, x) in slot.iter_mut().zip(d) {
            *s += x;
        }
    }
}

fn accumulate_broadcast(adj: &mut [Vec<f64>], target: Var, len: usize, g: impl Iterator<Item = f64>) {
    if len == 1 {
        let total: f64 = g.sum();
        accumulate(&mut adj[target.0], &[total]);
    } else {
        let d: Vec<f64> = g.collect();
        accumulate(&mut adj[target.0], &d);
    }
}

/// Evaluates `objective` on a fresh tape and fills the gradient of every
/// parameter in `params`. Returns the objective value.
pub fn gradient<F>(params: &mut ParamSet, objective: F) -> Result<f64>
where
    F: FnOnce(&mut Tape, &ParamSet) -> Var,
{
    let mut tape = Tape::new();
    let out = objective(&mut tape, params);
    tape.backward(out, params)?;
    Ok(tape.scalar(out))
}
