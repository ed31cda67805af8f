//! Two executors for the same network code: an eager evaluator that frees
//! intermediates as soon as their last handle drops, and a tape that
//! records every node for reverse-mode differentiation.

use std::rc::Rc;

use crate::array::Array3;
use crate::error::Result;
use crate::models::{ops, ModelParams};

pub trait Graph {
    type T: Clone;

    fn params(&self) -> &ModelParams;
    fn input(&mut self, x: Array3) -> Self::T;
    fn value<'a>(&'a self, t: &'a Self::T) -> &'a Array3;
    fn depthwise(&mut self, x: Self::T, w: usize) -> Result<Self::T>;
    /// 1x1 convolution over the channel concatenation of `xs`.
    fn pointwise(&mut self, xs: Vec<Self::T>, w: usize, b: usize) -> Result<Self::T>;
    fn relu(&mut self, x: Self::T) -> Self::T;
    fn avg_pool2(&mut self, x: Self::T) -> Result<Self::T>;
    fn upsample2(&mut self, x: Self::T) -> Self::T;
    fn add(&mut self, a: Self::T, b: Self::T) -> Result<Self::T>;
}

fn kernel_size(p: &ModelParams, w: usize) -> usize {
    p.tensor(w).shape[1]
}

pub struct Eval<'p> {
    params: &'p ModelParams,
}

impl<'p> Eval<'p> {
    pub fn new(params: &'p ModelParams) -> Self {
        Eval { params }
    }
}

impl Graph for Eval<'_> {
    type T = Rc<Array3>;

    fn params(&self) -> &ModelParams {
        self.params
    }

    fn input(&mut self, x: Array3) -> Self::T {
        Rc::new(x)
    }

    fn value<'a>(&'a self, t: &'a Self::T) -> &'a Array3 {
        t
    }

    fn depthwise(&mut self, x: Self::T, w: usize) -> Result<Self::T> {
        let k = kernel_size(self.params, w);
        Ok(Rc::new(ops::depthwise(&x, &self.params.tensor(w).data, k)?))
    }

    fn pointwise(&mut self, xs: Vec<Self::T>, w: usize, b: usize) -> Result<Self::T> {
        let refs: Vec<&Array3> = xs.iter().map(|x| x.as_ref()).collect();
        let wt = self.params.tensor(w);
        let y = ops::pointwise(&refs, &wt.data, Some(&self.params.tensor(b).data), wt.shape[0])?;
        Ok(Rc::new(y))
    }

    fn relu(&mut self, x: Self::T) -> Self::T {
        let mut owned = Rc::try_unwrap(x).unwrap_or_else(|rc| (*rc).clone());
        ops::relu(&mut owned);
        Rc::new(owned)
    }

    fn avg_pool2(&mut self, x: Self::T) -> Result<Self::T> {
        Ok(Rc::new(ops::avg_pool2(&x)?))
    }

    fn upsample2(&mut self, x: Self::T) -> Self::T {
        Rc::new(ops::upsample2(&x))
    }

    fn add(&mut self, a: Self::T, b: Self::T) -> Result<Self::T> {
        a.ensure_same_shape(&b, "add")?;
        let mut owned = Rc::try_unwrap(a).unwrap_or_else(|rc| (*rc).clone());
        owned.add_assign(&b);
        Ok(Rc::new(owned))
    }
}

enum Op {
    Input,
    Depthwise { x: usize, w: usize },
    Pointwise { xs: Vec<usize>, w: usize, b: usize },
    Relu { x: usize },
    Pool { x: usize },
    Up { x: usize },
    Add { a: usize, b: usize },
}

struct Node {
    value: Array3,
    op: Op,
}

/// Recording executor; handles are node indices.
pub struct Tape<'p> {
    params: &'p ModelParams,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ModelParams) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Array3, op: Op) -> usize {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    /// Sign pattern of every rectifier input, in recording order.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu { x } => Some(&self.nodes[x].value),
                _ => None,
            })
            .flat_map(|v| v.as_slice().iter().map(|a| *a > 0.0))
            .collect()
    }

    /// Accumulates `d<seed, out>/dθ` into `grads` (one buffer per tensor).
    pub fn backward(&self, out: usize, seed: &Array3, grads: &mut [Vec<f64>]) -> Result<()> {
        self.nodes[out].value.ensure_same_shape(seed, "backward seed")?;
        let mut g: Vec<Option<Array3>> = (0..=out).map(|_| None).collect();
        g[out] = Some(seed.clone());
        for i in (0..=out).rev() {
            let Some(gi) = g[i].take() else { continue };
            let needs = |j: usize| !matches!(self.nodes[j].op, Op::Input);
            let acc = |g: &mut Vec<Option<Array3>>, j: usize, d: Array3| match &mut g[j] {
                Some(e) => e.add_assign(&d),
                slot => *slot = Some(d),
            };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Depthwise { x, w } => {
                    let k = kernel_size(self.params, *w);
                    let (dx, dw) =
                        ops::depthwise_backward(&self.nodes[*x].value, &self.params.tensor(*w).data, k, &gi);
                    grads[*w].iter_mut().zip(&dw).for_each(|(a, b)| *a += b);
                    if needs(*x) {
                        acc(&mut g, *x, dx);
                    }
                }
                Op::Pointwise { xs, w, b } => {
                    let refs: Vec<&Array3> = xs.iter().map(|x| &self.nodes[*x].value).collect();
                    let need_dx = xs.iter().any(|x| needs(*x));
                    let (dxs, dw, db) =
                        ops::pointwise_backward(&refs, &self.params.tensor(*w).data, &gi, need_dx);
                    grads[*w].iter_mut().zip(&dw).for_each(|(a, v)| *a += v);
                    grads[*b].iter_mut().zip(&db).for_each(|(a, v)| *a += v);
                    for (x, dx) in xs.iter().zip(dxs) {
                        if needs(*x) {
                            acc(&mut g, *x, dx);
                        }
                    }
                }
                Op::Relu { x } => {
                    let d = ops::relu_backward(&self.nodes[i].value, &gi);
                    acc(&mut g, *x, d);
                }
                Op::Pool { x } => acc(&mut g, *x, ops::avg_pool2_backward(&gi)),
                Op::Up { x } => acc(&mut g, *x, ops::upsample2_backward(&gi)),
                Op::Add { a, b } => {
                    if needs(*b) {
                        acc(&mut g, *b, gi.clone());
                    }
                    if needs(*a) {
                        acc(&mut g, *a, gi);
                    }
                }
            }
        }
        Ok(())
    }
}

impl Graph for Tape<'_> {
    type T = usize;

    fn params(&self) -> &ModelParams {
        self.params
    }

    fn input(&mut self, x: Array3) -> usize {
        self.push(x, Op::Input)
    }

    fn value<'a>(&'a self, t: &'a usize) -> &'a Array3 {
        &self.nodes[*t].value
    }

    fn depthwise(&mut self, x: usize, w: usize) -> Result<usize> {
        let k = kernel_size(self.params, w);
        let y = ops::depthwise(&self.nodes[x].value, &self.params.tensor(w).data, k)?;
        Ok(self.push(y, Op::Depthwise { x, w }))
    }

    fn pointwise(&mut self, xs: Vec<usize>, w: usize, b: usize) -> Result<usize> {
        let refs: Vec<&Array3> = xs.iter().map(|x| &self.nodes[*x].value).collect();
        let wt = self.params.tensor(w);
        let y = ops::pointwise(&refs, &wt.data, Some(&self.params.tensor(b).data), wt.shape[0])?;
        Ok(self.push(y, Op::Pointwise { xs, w, b }))
    }

    fn relu(&mut self, x: usize) -> usize {
        let mut y = self.nodes[x].value.clone();
        ops::relu(&mut y);
        self.push(y, Op::Relu { x })
    }

    fn avg_pool2(&mut self, x: usize) -> Result<usize> {
        let y = ops::avg_pool2(&self.nodes[x].value)?;
        Ok(self.push(y, Op::Pool { x }))
    }

    fn upsample2(&mut self, x: usize) -> usize {
        let y = ops::upsample2(&self.nodes[x].value);
        self.push(y, Op::Up { x })
    }

    fn add(&mut self, a: usize, b: usize) -> Result<usize> {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        va.ensure_same_shape(vb, "add")?;
        let mut y = va.clone();
        y.add_assign(vb);
        Ok(self.push(y, Op::Add { a, b }))
    }
}
