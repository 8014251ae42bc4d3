//! A small reverse-mode differentiation tape over dense `f64` matrices.
//!
//! The score networks record every operation on a [`Tape`] while running
//! forward; [`Tape::backward`] then walks the tape in reverse and returns the
//! gradient of a scalar output with respect to every node. Only the handful
//! of operations the networks need are supported.

use ndarray::{Array2, Axis};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// `x + b` with `b` a `1 × m` row broadcast over the rows of `x`.
    AddRow(Var, Var),
    Mul(Var, Var),
    /// Elementwise product with a constant (masks).
    MulConst(Var, Array2<f64>),
    Scale(Var, f64),
    Elu(Var),
    Transpose(Var),
    /// Row-major reshape.
    Reshape(Var),
    ConcatCols(Vec<Var>),
    Column(Var, usize),
    SumSquares(Var),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Grads(Vec<Option<Array2<f64>>>);

impl Grads {
    /// `None` when `v` does not influence the differentiated output.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.0[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.0[v.0].take()
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn elu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        v.exp_m1()
    }
}

fn elu_grad(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        v.exp()
    }
}

fn reshape(a: &Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    let data: Vec<f64> = a.iter().copied().collect();
    Array2::from_shape_vec(shape, data).expect("reshape preserves element count")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// A differentiable input (a parameter).
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let ng = self.needs(&[a, b]);
        self.push(value, Op::MatMul(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let ng = self.needs(&[a, b]);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        let ng = self.needs(&[a, b]);
        self.push(value, Op::Sub(a, b), ng)
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        debug_assert_eq!(self.value(bias).nrows(), 1);
        let value = self.value(x) + self.value(bias);
        let ng = self.needs(&[x, bias]);
        self.push(value, Op::AddRow(x, bias), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        let ng = self.needs(&[a, b]);
        self.push(value, Op::Mul(a, b), ng)
    }

    pub fn mul_const(&mut self, a: Var, c: &Array2<f64>) -> Var {
        let value = self.value(a) * c;
        let ng = self.needs(&[a]);
        self.push(value, Op::MulConst(a, c.clone()), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a) * s;
        let ng = self.needs(&[a]);
        self.push(value, Op::Scale(a, s), ng)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(elu);
        let ng = self.needs(&[a]);
        self.push(value, Op::Elu(a), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        let ng = self.needs(&[a]);
        self.push(value, Op::Transpose(a), ng)
    }

    pub fn reshape(&mut self, a: Var, shape: (usize, usize)) -> Var {
        let value = reshape(self.value(a), shape);
        let ng = self.needs(&[a]);
        self.push(value, Op::Reshape(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|v| self.value(*v).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        let ng = self.needs(parts);
        self.push(value, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn column(&mut self, a: Var, j: usize) -> Var {
        let value = self.value(a).column(j).to_owned().insert_axis(Axis(1));
        let ng = self.needs(&[a]);
        self.push(value, Op::Column(a, j), ng)
    }

    /// `Σ x²` as a `1 × 1` node.
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().map(|v| v * v).sum::<f64>();
        let ng = self.needs(&[a]);
        self.push(Array2::from_elem((1, 1), s), Op::SumSquares(a), ng)
    }

    /// `(S + Sᵀ) / 2`.
    pub fn symmetrize(&mut self, a: Var) -> Var {
        let t = self.transpose(a);
        let s = self.add(a, t);
        self.scale(s, 0.5)
    }

    /// Gradients of the scalar `output` with respect to every leaf.
    pub fn backward(&self, output: Var) -> Grads {
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Array2::ones(self.value(output).dim()));

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let live = |v: &Var| self.nodes[v.0].needs_grad;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if live(a) {
                        acc(&mut grads, *a, g.dot(&self.value(*b).t()));
                    }
                    if live(b) {
                        acc(&mut grads, *b, self.value(*a).t().dot(&g));
                    }
                }
                Op::Add(a, b) => {
                    if live(a) {
                        acc(&mut grads, *a, g.clone());
                    }
                    if live(b) {
                        acc(&mut grads, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if live(a) {
                        acc(&mut grads, *a, g.clone());
                    }
                    if live(b) {
                        acc(&mut grads, *b, -g);
                    }
                }
                Op::AddRow(x, b) => {
                    if live(b) {
                        acc(&mut grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if live(x) {
                        acc(&mut grads, *x, g);
                    }
                }
                Op::Mul(a, b) => {
                    if live(a) {
                        acc(&mut grads, *a, &g * self.value(*b));
                    }
                    if live(b) {
                        acc(&mut grads, *b, &g * self.value(*a));
                    }
                }
                Op::MulConst(a, c) => acc(&mut grads, *a, g * c),
                Op::Scale(a, s) => acc(&mut grads, *a, g * *s),
                Op::Elu(a) => {
                    let d = self.value(*a).mapv(elu_grad);
                    acc(&mut grads, *a, g * &d);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.t().to_owned()),
                Op::Reshape(a) => {
                    let shape = self.value(*a).dim();
                    acc(&mut grads, *a, reshape(&g, shape));
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        if live(p) {
                            acc(&mut grads, *p, g.slice(ndarray::s![.., start..start + w]).to_owned());
                        }
                        start += w;
                    }
                }
                Op::Column(a, j) => {
                    let mut full = Array2::zeros(self.value(*a).dim());
                    full.column_mut(*j).assign(&g.column(0));
                    acc(&mut grads, *a, full);
                }
                Op::SumSquares(a) => {
                    let s = g[[0, 0]] * 2.0;
                    acc(&mut grads, *a, self.value(*a) * s);
                }
            }
        }
        Grads(grads)
    }
}
