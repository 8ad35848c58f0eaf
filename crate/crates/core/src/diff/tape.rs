use std::rc::Rc;

use super::params::{Gradients, ParamId, ParameterStore};
use super::tensor::{gemm, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    ConcatRows(Vec<Var>),
    Gather(Var, Rc<[usize]>),
    Reshape(Var),
    SegmentSum(Var, Rc<[usize]>),
    Sum(Var),
    Mean(Var),
    BceWithLogits(Var, Vec<f64>),
    SquaredError(Var, Vec<f64>),
}

struct Node {
    /// `None` for parameters, which are read from the store.
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation for reverse-mode differentiation.
///
/// Shape mismatches are programming errors and panic when the offending
/// operation is recorded.
pub struct Tape<'p> {
    store: &'p ParameterStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

fn shape2(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParameterStore) -> Self {
        Self { store, nodes: Vec::new(), param_vars: vec![None; store.len()] }
    }

    pub fn store(&self) -> &'p ParameterStore {
        self.store
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(i)) => self.store.value(ParamId(*i)),
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value: Some(value), op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A constant input (no gradient).
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node { value: None, op: Op::Param(id.0), needs_grad: true });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let ((m, k), (k2, n)) = (shape2(ta), shape2(tb));
        assert_eq!(k, k2, "matmul {:?} @ {:?}", ta.shape(), tb.shape());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, 0.0, &mut out);
        let g = self.needs(a) || self.needs(b);
        self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b), g)
    }

    fn zip_same(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "elementwise op on mismatched shapes");
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let g = self.needs(a) || self.needs(b);
        self.push(t, op, g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_same(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_same(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_same(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Broadcast-add a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (ta, tr) = (self.value(a), self.value(row));
        let (m, c) = shape2(ta);
        assert_eq!(shape2(tr), (1, c), "add_row {:?} + {:?}", ta.shape(), tr.shape());
        let mut out = ta.data().to_vec();
        for chunk in out.chunks_exact_mut(c.max(1)) {
            for (x, b) in chunk.iter_mut().zip(tr.data()) {
                *x += b;
            }
        }
        let g = self.needs(a) || self.needs(row);
        self.push(Tensor::matrix(m, c, out), Op::AddRow(a, row), g)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let ta = self.value(a);
        let t = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|&x| f(x)).collect())
            .expect("same shape");
        let g = self.needs(a);
        self.push(t, op, g)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.map(a, |x| 1.0 - x, Op::OneMinus(a))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    /// Concatenate along the last axis; all parts share the row count.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let t = self.value(p);
                assert_eq!(t.rows(), rows, "concat row mismatch");
                t.cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let t = self.value(p);
            for r in 0..rows {
                out[r * total + off..r * total + off + w].copy_from_slice(t.row(r));
            }
            off += w;
        }
        let g = parts.iter().any(|&p| self.needs(p));
        self.push(Tensor::matrix(rows, total, out), Op::Concat(parts.to_vec()), g)
    }

    /// Stack along the first axis; all parts share the column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).cols();
        let mut out = Vec::new();
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows column mismatch");
            out.extend_from_slice(t.data());
        }
        let rows = out.len() / cols.max(1);
        let g = parts.iter().any(|&p| self.needs(p));
        self.push(Tensor::matrix(rows, cols, out), Op::ConcatRows(parts.to_vec()), g)
    }

    /// `out[i] = a[index[i]]`.
    pub fn gather(&mut self, a: Var, index: Rc<[usize]>) -> Var {
        let ta = self.value(a);
        let c = ta.cols();
        let mut out = Vec::with_capacity(index.len() * c);
        for &i in index.iter() {
            out.extend_from_slice(ta.row(i));
        }
        let g = self.needs(a);
        self.push(Tensor::matrix(index.len(), c, out), Op::Gather(a, index), g)
    }

    /// Same data under a new shape.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let t = Tensor::new(shape.to_vec(), self.value(a).data().to_vec())
            .unwrap_or_else(|e| panic!("reshape: {e}"));
        let g = self.needs(a);
        self.push(t, Op::Reshape(a), g)
    }

    /// `out[s] = sum of a[i] with segment[i] == s`, for `s < n_segments`.
    pub fn segment_sum(&mut self, a: Var, segment: Rc<[usize]>, n_segments: usize) -> Var {
        let ta = self.value(a);
        assert_eq!(ta.rows(), segment.len(), "segment ids must cover every row");
        let c = ta.cols();
        let mut out = vec![0.0; n_segments * c];
        for (r, &s) in segment.iter().enumerate() {
            for (o, x) in out[s * c..(s + 1) * c].iter_mut().zip(ta.row(r)) {
                *o += x;
            }
        }
        let g = self.needs(a);
        self.push(Tensor::matrix(n_segments, c, out), Op::SegmentSum(a, segment), g)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let g = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), g)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        let g = self.needs(a);
        self.push(Tensor::scalar(s), Op::Mean(a), g)
    }

    /// Mean binary cross-entropy of logits `a` against targets in `[0, 1]`.
    pub fn bce_with_logits(&mut self, a: Var, targets: Vec<f64>) -> Var {
        let t = self.value(a);
        assert_eq!(t.len(), targets.len(), "bce target count");
        let n = t.len().max(1) as f64;
        let loss = t
            .data()
            .iter()
            .zip(&targets)
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        let g = self.needs(a);
        self.push(Tensor::scalar(loss), Op::BceWithLogits(a, targets), g)
    }

    /// Mean of `(a - target)^2`.
    pub fn squared_error(&mut self, a: Var, targets: Vec<f64>) -> Var {
        let t = self.value(a);
        assert_eq!(t.len(), targets.len(), "squared error target count");
        let n = t.len().max(1) as f64;
        let loss = t.data().iter().zip(&targets).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
        let g = self.needs(a);
        self.push(Tensor::scalar(loss), Op::SquaredError(a, targets), g)
    }

    /// Reverse accumulation from a scalar `loss` (seeded with 1).
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar");
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::zeros_like(self.store);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let mut acc = |v: Var, f: &dyn Fn(&mut [f64])| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(self.value(v).shape()));
                f(slot.data_mut());
            };
            let gd = g.data();
            match &node.op {
                Op::Input => {}
                Op::Param(i) => out.accumulate(*i, gd),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let ((m, k), (_, n)) = (shape2(ta), shape2(tb));
                    acc(*a, &|da| gemm(m, n, k, gd, false, tb.data(), true, 1.0, da));
                    acc(*b, &|db| gemm(k, m, n, ta.data(), true, gd, false, 1.0, db));
                }
                Op::Add(a, b) => {
                    acc(*a, &|d| add_into(d, gd));
                    acc(*b, &|d| add_into(d, gd));
                }
                Op::Sub(a, b) => {
                    acc(*a, &|d| add_into(d, gd));
                    acc(*b, &|d| d.iter_mut().zip(gd).for_each(|(x, g)| *x -= g));
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    acc(*a, &|d| {
                        d.iter_mut().zip(gd).zip(tb.data()).for_each(|((x, g), y)| *x += g * y)
                    });
                    acc(*b, &|d| {
                        d.iter_mut().zip(gd).zip(ta.data()).for_each(|((x, g), y)| *x += g * y)
                    });
                }
                Op::AddRow(a, row) => {
                    acc(*a, &|d| add_into(d, gd));
                    let c = g.cols();
                    acc(*row, &|d| {
                        for chunk in gd.chunks_exact(c.max(1)) {
                            add_into(d, chunk);
                        }
                    });
                }
                Op::OneMinus(a) => acc(*a, &|d| d.iter_mut().zip(gd).for_each(|(x, g)| *x -= g)),
                Op::Scale(a, s) => acc(*a, &|d| d.iter_mut().zip(gd).for_each(|(x, g)| *x += s * g)),
                Op::Relu(a) => {
                    let y = self.value(Var(idx)).data();
                    acc(*a, &|d| {
                        d.iter_mut().zip(gd).zip(y).for_each(|((x, g), y)| {
                            if *y > 0.0 {
                                *x += g
                            }
                        })
                    });
                }
                Op::Sigmoid(a) => {
                    let y = self.value(Var(idx)).data();
                    acc(*a, &|d| {
                        d.iter_mut().zip(gd).zip(y).for_each(|((x, g), y)| *x += g * y * (1.0 - y))
                    });
                }
                Op::Tanh(a) => {
                    let y = self.value(Var(idx)).data();
                    acc(*a, &|d| {
                        d.iter_mut().zip(gd).zip(y).for_each(|((x, g), y)| *x += g * (1.0 - y * y))
                    });
                }
                Op::Concat(parts) => {
                    let (rows, total) = shape2(&g);
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        acc(p, &|d| {
                            for r in 0..rows {
                                add_into(&mut d[r * w..(r + 1) * w], &gd[r * total + off..r * total + off + w]);
                            }
                        });
                        off += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        acc(p, &|d| add_into(d, &gd[off..off + len]));
                        off += len;
                    }
                }
                Op::Gather(a, index) => {
                    let c = g.cols();
                    acc(*a, &|d| {
                        for (r, &i) in index.iter().enumerate() {
                            add_into(&mut d[i * c..(i + 1) * c], &gd[r * c..(r + 1) * c]);
                        }
                    });
                }
                Op::Reshape(a) => acc(*a, &|d| add_into(d, gd)),
                Op::SegmentSum(a, segment) => {
                    let c = g.cols();
                    acc(*a, &|d| {
                        for (r, &s) in segment.iter().enumerate() {
                            add_into(&mut d[r * c..(r + 1) * c], &gd[s * c..(s + 1) * c]);
                        }
                    });
                }
                Op::Sum(a) => acc(*a, &|d| d.iter_mut().for_each(|x| *x += gd[0])),
                Op::Mean(a) => {
                    let n = self.value(*a).len().max(1) as f64;
                    acc(*a, &|d| d.iter_mut().for_each(|x| *x += gd[0] / n));
                }
                Op::BceWithLogits(a, targets) => {
                    let xs = self.value(*a).data();
                    let n = xs.len().max(1) as f64;
                    acc(*a, &|d| {
                        for ((x, &l), &y) in d.iter_mut().zip(xs).zip(targets) {
                            *x += gd[0] * (sigmoid(l) - y) / n;
                        }
                    });
                }
                Op::SquaredError(a, targets) => {
                    let xs = self.value(*a).data();
                    let n = xs.len().max(1) as f64;
                    acc(*a, &|d| {
                        for ((x, &p), &y) in d.iter_mut().zip(xs).zip(targets) {
                            *x += gd[0] * 2.0 * (p - y) / n;
                        }
                    });
                }
            }
        }
        out
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
