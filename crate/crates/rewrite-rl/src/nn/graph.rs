//! Reverse-mode autodiff on an eagerly evaluated tape.
//!
//! Every operation appends a node holding its forward value; parents always
//! precede children, so one reverse sweep over the tape propagates gradients
//! without an explicit topological sort. Gradients land in a [`Gradients`]
//! map keyed by parameter name, never in the store itself.

use indexmap::IndexMap;

use crate::nn::params::{Gradients, ParamStore, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op<T> {
    /// Constant leaf; receives no gradient.
    Input,
    /// Whole parameter tensor.
    Param {
        name: String,
    },
    /// Single row of a parameter matrix (embedding lookup).
    ParamRow {
        name: String,
        row: usize,
    },
    /// `W x` for `W: [m,n]`, `x: [n]`.
    MatVec {
        w: NodeId,
        x: NodeId,
    },
    Dot {
        a: NodeId,
        b: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Sub {
        a: NodeId,
        b: NodeId,
    },
    Mul {
        a: NodeId,
        b: NodeId,
    },
    /// Elementwise `a*x + b` with constants; only the slope matters on the
    /// way back.
    ScaleAdd {
        x: NodeId,
        a: T,
    },
    Tanh {
        x: NodeId,
    },
    Sigmoid {
        x: NodeId,
    },
    Exp {
        x: NodeId,
    },
    LogSoftmax {
        x: NodeId,
    },
    Softmax {
        x: NodeId,
    },
    /// Scalar `x[index]`.
    Pick {
        x: NodeId,
        index: usize,
    },
    Concat {
        a: NodeId,
        b: NodeId,
    },
    StackScalars {
        xs: Vec<NodeId>,
    },
    /// Elementwise sum of same-shaped nodes.
    SumNodes {
        xs: Vec<NodeId>,
    },
    /// `sum_i weights[i] * xs[i]` for vector nodes `xs`.
    WeightedSum {
        weights: NodeId,
        xs: Vec<NodeId>,
    },
    /// Elementwise minimum; on ties the gradient goes to `a`.
    Min {
        a: NodeId,
        b: NodeId,
    },
    Clamp {
        x: NodeId,
        lo: T,
        hi: T,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Vec<T>,
    op: Op<T>,
}

pub struct Graph<'s, T: Real> {
    store: &'s ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_nodes: IndexMap<String, NodeId>,
}

impl<'s, T: Real> Graph<'s, T> {
    pub fn new(store: &'s ParamStore<T>) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_nodes: IndexMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[T] {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> T {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1, "scalar node expected");
        self.nodes[id.0].value[0]
    }

    fn push(&mut self, value: Vec<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, data: Vec<T>) -> NodeId {
        self.push(data, Op::Input)
    }

    pub fn scalar_input(&mut self, v: T) -> NodeId {
        self.input(vec![v])
    }

    pub fn zeros(&mut self, n: usize) -> NodeId {
        self.input(vec![T::zero(); n])
    }

    /// Parameter leaf; repeated calls for one name share a node.
    pub fn param(&mut self, name: &str) -> NodeId {
        if let Some(id) = self.param_nodes.get(name) {
            return *id;
        }
        let value = self.store.get(name).data.clone();
        let id = self.push(
            value,
            Op::Param {
                name: name.to_string(),
            },
        );
        self.param_nodes.insert(name.to_string(), id);
        id
    }

    /// Row `row` of the parameter matrix `name` (embedding lookup).
    pub fn param_row(&mut self, name: &str, row: usize) -> NodeId {
        let tensor = self.store.get(name);
        assert!(row < tensor.rows, "row {row} out of range for {name}");
        let value = tensor.data[row * tensor.cols..(row + 1) * tensor.cols].to_vec();
        let id = self.push(
            value,
            Op::ParamRow {
                name: name.to_string(),
                row,
            },
        );
        id
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> NodeId {
        let (rows, cols) = self.matrix_shape_of(w);
        let xv = &self.nodes[x.0].value;
        assert_eq!(cols, xv.len(), "matvec shape mismatch");
        let wv = &self.nodes[w.0].value;
        let mut out = vec![T::zero(); rows];
        for (r, slot) in out.iter_mut().enumerate() {
            *slot = dot_unrolled(&wv[r * cols..(r + 1) * cols], xv);
        }
        self.push(out, Op::MatVec { w, x })
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "dot shape mismatch");
        let v = dot_unrolled(av, bv);
        self.push(vec![v], Op::Dot { a, b })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip(a, b, |x, y| x + y);
        self.push(v, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip(a, b, |x, y| x - y);
        self.push(v, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip(a, b, |x, y| x * y);
        self.push(v, Op::Mul { a, b })
    }

    pub fn scale_add(&mut self, x: NodeId, a: T, b: T) -> NodeId {
        let v = self.nodes[x.0].value.iter().map(|u| a * *u + b).collect();
        self.push(v, Op::ScaleAdd { x, a })
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.scale_add(x, -T::one(), T::zero())
    }

    /// `1 - x`, the gate complement.
    pub fn one_minus(&mut self, x: NodeId) -> NodeId {
        self.scale_add(x, -T::one(), T::one())
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x.0].value.iter().map(|u| u.tanh()).collect();
        self.push(v, Op::Tanh { x })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x.0]
            .value
            .iter()
            .map(|u| T::one() / (T::one() + (-*u).exp()))
            .collect();
        self.push(v, Op::Sigmoid { x })
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x.0].value.iter().map(|u| u.exp()).collect();
        self.push(v, Op::Exp { x })
    }

    pub fn log_softmax(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let max = xv.iter().cloned().fold(T::neg_infinity(), T::max);
        let lse = xv.iter().map(|u| (*u - max).exp()).sum::<T>().ln() + max;
        let v = xv.iter().map(|u| *u - lse).collect();
        self.push(v, Op::LogSoftmax { x })
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let max = xv.iter().cloned().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = xv.iter().map(|u| (*u - max).exp()).collect();
        let total: T = exps.iter().cloned().sum();
        let v = exps.into_iter().map(|e| e / total).collect();
        self.push(v, Op::Softmax { x })
    }

    pub fn pick(&mut self, x: NodeId, index: usize) -> NodeId {
        let v = self.nodes[x.0].value[index];
        self.push(vec![v], Op::Pick { x, index })
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.nodes[a.0].value.clone();
        v.extend_from_slice(&self.nodes[b.0].value);
        self.push(v, Op::Concat { a, b })
    }

    pub fn stack_scalars(&mut self, xs: Vec<NodeId>) -> NodeId {
        let v = xs.iter().map(|id| self.scalar(*id)).collect();
        self.push(v, Op::StackScalars { xs })
    }

    pub fn sum_nodes(&mut self, xs: Vec<NodeId>) -> NodeId {
        assert!(!xs.is_empty(), "sum of zero nodes");
        let len = self.nodes[xs[0].0].value.len();
        let mut v = vec![T::zero(); len];
        for id in &xs {
            let src = &self.nodes[id.0].value;
            assert_eq!(src.len(), len, "sum shape mismatch");
            for (slot, u) in v.iter_mut().zip(src) {
                *slot += *u;
            }
        }
        self.push(v, Op::SumNodes { xs })
    }

    pub fn weighted_sum(&mut self, weights: NodeId, xs: Vec<NodeId>) -> NodeId {
        let wv = &self.nodes[weights.0].value;
        assert_eq!(wv.len(), xs.len(), "one weight per vector");
        assert!(!xs.is_empty(), "weighted sum of zero nodes");
        let len = self.nodes[xs[0].0].value.len();
        let mut v = vec![T::zero(); len];
        for (w, id) in wv.clone().into_iter().zip(&xs) {
            let src = &self.nodes[id.0].value;
            assert_eq!(src.len(), len, "weighted sum shape mismatch");
            for (slot, u) in v.iter_mut().zip(src) {
                *slot += w * *u;
            }
        }
        self.push(v, Op::WeightedSum { weights, xs })
    }

    pub fn min(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip(a, b, |x, y| if x <= y { x } else { y });
        self.push(v, Op::Min { a, b })
    }

    pub fn clamp(&mut self, x: NodeId, lo: T, hi: T) -> NodeId {
        let v = self.nodes[x.0]
            .value
            .iter()
            .map(|u| (*u).max(lo).min(hi))
            .collect();
        self.push(v, Op::Clamp { x, lo, hi })
    }

    fn zip(&self, a: NodeId, b: NodeId, f: impl Fn(T, T) -> T) -> Vec<T> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "elementwise shape mismatch");
        av.iter().zip(bv).map(|(x, y)| f(*x, *y)).collect()
    }

    fn matrix_shape_of(&self, id: NodeId) -> (usize, usize) {
        match &self.nodes[id.0].op {
            Op::Param { name } => {
                let t = self.store.get(name);
                (t.rows, t.cols)
            }
            _ => panic!("matvec weight must be a parameter node"),
        }
    }

    /// Backpropagates from the scalar node `out` and returns parameter
    /// gradients. The tape itself is left untouched, so several backward
    /// passes from different outputs may reuse one forward evaluation.
    pub fn backward(&self, out: NodeId) -> Gradients<T> {
        assert_eq!(self.nodes[out.0].value.len(), 1, "backward needs a scalar");
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(vec![T::one()]);
        let mut out_grads = Gradients::new();

        for idx in (0..=out.0).rev() {
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param { name } => {
                    let buf = out_grads.buffer_mut(name, grad.len());
                    for (d, g) in buf.iter_mut().zip(&grad) {
                        *d += *g;
                    }
                }
                Op::ParamRow { name, row } => {
                    let tensor = self.store.get(name);
                    let buf = out_grads.buffer_mut(name, tensor.len());
                    let offset = row * tensor.cols;
                    for (i, g) in grad.iter().enumerate() {
                        buf[offset + i] += *g;
                    }
                }
                Op::MatVec { w, x } => {
                    let cols = self.nodes[x.0].value.len();
                    let xv = self.nodes[x.0].value.clone();
                    let wv = &self.nodes[w.0].value;
                    {
                        let gw = self.grad_buf(&mut grads, *w);
                        for (r, g) in grad.iter().enumerate() {
                            let row = &mut gw[r * cols..(r + 1) * cols];
                            for (slot, xj) in row.iter_mut().zip(&xv) {
                                *slot += *g * *xj;
                            }
                        }
                    }
                    let mut gx = vec![T::zero(); cols];
                    for (r, g) in grad.iter().enumerate() {
                        let row = &wv[r * cols..(r + 1) * cols];
                        for (slot, wj) in gx.iter_mut().zip(row) {
                            *slot += *g * *wj;
                        }
                    }
                    self.accumulate(&mut grads, *x, &gx);
                }
                Op::Dot { a, b } => {
                    let g = grad[0];
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    let scaled_b: Vec<T> = bv.iter().map(|v| *v * g).collect();
                    let scaled_a: Vec<T> = av.iter().map(|v| *v * g).collect();
                    self.accumulate(&mut grads, *a, &scaled_b);
                    self.accumulate(&mut grads, *b, &scaled_a);
                }
                Op::Add { a, b } => {
                    self.accumulate(&mut grads, *a, &grad);
                    self.accumulate(&mut grads, *b, &grad);
                }
                Op::Sub { a, b } => {
                    self.accumulate(&mut grads, *a, &grad);
                    let neg: Vec<T> = grad.iter().map(|g| -*g).collect();
                    self.accumulate(&mut grads, *b, &neg);
                }
                Op::Mul { a, b } => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    let ga: Vec<T> = grad.iter().zip(&bv).map(|(g, v)| *g * *v).collect();
                    let gb: Vec<T> = grad.iter().zip(&av).map(|(g, v)| *g * *v).collect();
                    self.accumulate(&mut grads, *a, &ga);
                    self.accumulate(&mut grads, *b, &gb);
                }
                Op::ScaleAdd { x, a } => {
                    let gx: Vec<T> = grad.iter().map(|g| *g * *a).collect();
                    self.accumulate(&mut grads, *x, &gx);
                }
                Op::Tanh { x } => {
                    let gx: Vec<T> = grad
                        .iter()
                        .zip(&node.value)
                        .map(|(g, y)| *g * (T::one() - *y * *y))
                        .collect();
                    self.accumulate(&mut grads, *x, &gx);
                }
                Op::Sigmoid { x } => {
                    let gx: Vec<T> = grad
                        .iter()
                        .zip(&node.value)
                        .map(|(g, y)| *g * *y * (T::one() - *y))
                        .collect();
                    self.accumulate(&mut grads, *x, &gx);
                }
                Op::Exp { x } => {
                    let gx: Vec<T> = grad.iter().zip(&node.value).map(|(g, y)| *g * *y).collect();
                    self.accumulate(&mut grads, *x, &gx);
                }
                Op::LogSoftmax { x } => {
                    let gsum: T = grad.iter().cloned().sum();
                    let gx: Vec<T> = grad
                        .iter()
                        .zip(&node.value)
                        .map(|(g, y)| *g - y.exp() * gsum)
                        .collect();
                    self.accumulate(&mut grads, *x, &gx);
                }
                Op::Softmax { x } => {
                    let weighted: T = grad.iter().zip(&node.value).map(|(g, y)| *g * *y).sum();
                    let gx: Vec<T> = grad
                        .iter()
                        .zip(&node.value)
                        .map(|(g, y)| *y * (*g - weighted))
                        .collect();
                    self.accumulate(&mut grads, *x, &gx);
                }
                Op::Pick { x, index } => {
                    let mut gx = vec![T::zero(); self.nodes[x.0].value.len()];
                    gx[*index] = grad[0];
                    self.accumulate(&mut grads, *x, &gx);
                }
                Op::Concat { a, b } => {
                    let na = self.nodes[a.0].value.len();
                    self.accumulate(&mut grads, *a, &grad[..na]);
                    self.accumulate(&mut grads, *b, &grad[na..]);
                }
                Op::StackScalars { xs } => {
                    for (id, g) in xs.iter().zip(&grad) {
                        self.accumulate(&mut grads, *id, &[*g]);
                    }
                }
                Op::SumNodes { xs } => {
                    for id in xs {
                        self.accumulate(&mut grads, *id, &grad);
                    }
                }
                Op::WeightedSum { weights, xs } => {
                    let wv = self.nodes[weights.0].value.clone();
                    let mut gw = vec![T::zero(); wv.len()];
                    for ((id, w), gw_slot) in xs.iter().zip(&wv).zip(gw.iter_mut()) {
                        let xv = &self.nodes[id.0].value;
                        *gw_slot = grad.iter().zip(xv).map(|(g, v)| *g * *v).sum();
                        let gx: Vec<T> = grad.iter().map(|g| *g * *w).collect();
                        self.accumulate(&mut grads, *id, &gx);
                    }
                    self.accumulate(&mut grads, *weights, &gw);
                }
                Op::Min { a, b } => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    let mut ga = vec![T::zero(); grad.len()];
                    let mut gb = vec![T::zero(); grad.len()];
                    for i in 0..grad.len() {
                        if av[i] <= bv[i] {
                            ga[i] = grad[i];
                        } else {
                            gb[i] = grad[i];
                        }
                    }
                    self.accumulate(&mut grads, *a, &ga);
                    self.accumulate(&mut grads, *b, &gb);
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = self.nodes[x.0].value.clone();
                    let gx: Vec<T> = grad
                        .iter()
                        .zip(&xv)
                        .map(|(g, v)| {
                            if *v >= *lo && *v <= *hi {
                                *g
                            } else {
                                T::zero()
                            }
                        })
                        .collect();
                    self.accumulate(&mut grads, *x, &gx);
                }
            }
        }
        out_grads
    }

    fn grad_buf<'g>(&self, grads: &'g mut [Option<Vec<T>>], id: NodeId) -> &'g mut Vec<T> {
        grads[id.0].get_or_insert_with(|| vec![T::zero(); self.nodes[id.0].value.len()])
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], id: NodeId, delta: &[T]) {
        let buf = self.grad_buf(grads, id);
        debug_assert_eq!(buf.len(), delta.len());
        for (slot, d) in buf.iter_mut().zip(delta) {
            *slot += *d;
        }
    }
}

fn dot_unrolled<T: Real>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        lanes[0] += a[i] * b[i];
        lanes[1] += a[i + 1] * b[i + 1];
        lanes[2] += a[i + 2] * b[i + 2];
        lanes[3] += a[i + 3] * b[i + 3];
    }
    let mut acc = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for i in chunks * 4..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{Init, ParamStore};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central finite differences against the analytic gradient of every
    /// parameter, in f64 where h = 1e-5 leaves ~1e-10 truncation error.
    fn check_gradients(
        store: &ParamStore<f64>,
        f: impl Fn(&ParamStore<f64>, &mut Graph<f64>) -> NodeId,
    ) {
        let mut graph = Graph::new(store);
        let out = f(store, &mut graph);
        let analytic = graph.backward(out);
        let h = 1e-5;
        for name in store.names() {
            let len = store.get(name).len();
            for i in 0..len {
                let mut plus = store.clone();
                plus.get_mut(name).data[i] += h;
                let mut g = Graph::new(&plus);
                let fp = {
                    let id = f(&plus, &mut g);
                    g.scalar(id)
                };
                let mut minus = store.clone();
                minus.get_mut(name).data[i] -= h;
                let mut g = Graph::new(&minus);
                let fm = {
                    let id = f(&minus, &mut g);
                    g.scalar(id)
                };
                let numeric = (fp - fm) / (2.0 * h);
                let a = analytic.get(name).map_or(0.0, |buf| buf[i]);
                let denom = a.abs().max(numeric.abs()).max(1.0);
                assert!(
                    (a - numeric).abs() / denom < 1e-4,
                    "{name}[{i}]: analytic {a} vs numeric {numeric}"
                );
            }
        }
    }

    fn seeded_store(shapes: &[(&str, usize, usize)]) -> ParamStore<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut store = ParamStore::new();
        for (name, rows, cols) in shapes {
            store.insert(name, *rows, *cols, Init::Uniform(0.9), &mut rng);
        }
        store
    }

    #[test]
    fn forward_values_match_hand_math() {
        let mut store = ParamStore::<f64>::new();
        store.insert_data("w", 2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut g = Graph::new(&store);
        let w = g.param("w");
        let x = g.input(vec![1.0, 0.0, -1.0]);
        let y = g.matvec(w, x);
        assert_eq!(g.value(y), &[-2.0, -2.0]);
        let s = g.log_softmax(y);
        // equal logits: log probability is -ln 2 each
        assert!((g.value(s)[0] + 2.0f64.ln()).abs() < 1e-12);
        let sm = g.softmax(y);
        assert!((g.value(sm).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let p = g.pick(s, 1);
        assert_eq!(g.scalar(p), g.value(s)[1]);
    }

    #[test]
    fn param_nodes_are_shared() {
        let store = seeded_store(&[("w", 2, 2)]);
        let mut g = Graph::new(&store);
        let a = g.param("w");
        let b = g.param("w");
        assert_eq!(a, b);
    }

    #[test]
    fn grad_check_matvec_chain() {
        let store = seeded_store(&[("w", 3, 4), ("u", 3, 3), ("b", 3, 1)]);
        check_gradients(&store, |_, g| {
            let w = g.param("w");
            let u = g.param("u");
            let b = g.param("b");
            let x = g.input(vec![0.3, -0.2, 0.8, 0.1]);
            let wx = g.matvec(w, x);
            let t = g.tanh(wx);
            let ut = g.matvec(u, t);
            let s = g.add(ut, b);
            let sig = g.sigmoid(s);
            let ones = g.input(vec![1.0, 1.0, 1.0]);
            g.dot(sig, ones)
        });
    }

    #[test]
    fn grad_check_gru_style_cell() {
        let store = seeded_store(&[
            ("wz", 3, 2),
            ("uz", 3, 3),
            ("bz", 3, 1),
            ("wn", 3, 2),
            ("un", 3, 3),
            ("bn", 3, 1),
        ]);
        check_gradients(&store, |_, g| {
            let x = g.input(vec![0.4, -0.6]);
            let h = g.input(vec![0.1, 0.2, -0.3]);
            let wz = g.param("wz");
            let uz = g.param("uz");
            let bz = g.param("bz");
            let wzx = g.matvec(wz, x);
            let uzh = g.matvec(uz, h);
            let zsum = g.add(wzx, uzh);
            let zpre = g.add(zsum, bz);
            let z = g.sigmoid(zpre);
            let wn = g.param("wn");
            let un = g.param("un");
            let bn = g.param("bn");
            let wnx = g.matvec(wn, x);
            let unh = g.matvec(un, h);
            let nsum = g.add(wnx, unh);
            let npre = g.add(nsum, bn);
            let n = g.tanh(npre);
            let zc = g.one_minus(z);
            let keep = g.mul(zc, h);
            let update = g.mul(z, n);
            let hn = g.add(keep, update);
            let probe = g.input(vec![0.7, -0.3, 0.5]);
            g.dot(hn, probe)
        });
    }

    #[test]
    fn grad_check_log_softmax_pick() {
        let store = seeded_store(&[("w", 5, 3)]);
        check_gradients(&store, |_, g| {
            let w = g.param("w");
            let x = g.input(vec![0.2, -0.5, 0.9]);
            let logits = g.matvec(w, x);
            let logp = g.log_softmax(logits);
            let p = g.pick(logp, 2);
            g.neg(p)
        });
    }

    #[test]
    fn grad_check_attention_block() {
        let store = seeded_store(&[("wq", 2, 3), ("wk", 2, 3), ("v", 2, 1)]);
        check_gradients(&store, |_, g| {
            let states: Vec<NodeId> = [
                vec![0.1, 0.4, -0.2],
                vec![-0.3, 0.2, 0.6],
                vec![0.5, -0.1, 0.3],
            ]
            .into_iter()
            .map(|s| g.input(s))
            .collect();
            let query = g.input(vec![0.2, -0.4, 0.7]);
            let wq = g.param("wq");
            let wk = g.param("wk");
            let v = g.param("v");
            let q = g.matvec(wq, query);
            let mut scores = Vec::new();
            for s in &states {
                let k = g.matvec(wk, *s);
                let sum = g.add(q, k);
                let t = g.tanh(sum);
                scores.push(g.dot(v, t));
            }
            let stacked = g.stack_scalars(scores);
            let alpha = g.softmax(stacked);
            let ctx = g.weighted_sum(alpha, states);
            let probe = g.input(vec![1.0, -2.0, 0.5]);
            g.dot(ctx, probe)
        });
    }

    #[test]
    fn grad_check_ppo_style_surrogate() {
        let store = seeded_store(&[("w", 4, 2)]);
        check_gradients(&store, |_, g| {
            let w = g.param("w");
            let x = g.input(vec![0.6, -0.2]);
            let logits = g.matvec(w, x);
            let logp = g.log_softmax(logits);
            let picked = g.pick(logp, 1);
            let old = g.scalar_input(-1.1);
            let diff = g.sub(picked, old);
            let ratio = g.exp(diff);
            let adv = 0.8;
            let unclipped = g.scale_add(ratio, adv, 0.0);
            let clipped_ratio = g.clamp(ratio, 0.8, 1.2);
            let clipped = g.scale_add(clipped_ratio, adv, 0.0);
            let m = g.min(unclipped, clipped);
            g.neg(m)
        });
    }

    #[test]
    fn grad_check_concat_sum_exp() {
        let store = seeded_store(&[("a", 2, 2), ("b", 3, 2)]);
        check_gradients(&store, |_, g| {
            let a = g.param("a");
            let b = g.param("b");
            let x = g.input(vec![0.3, -0.7]);
            let ax = g.matvec(a, x);
            let bx = g.matvec(b, x);
            let cat = g.concat(ax, bx);
            let e = g.exp(cat);
            let sq = g.mul(e, e);
            let halves = g.scale_add(sq, 0.5, 0.01);
            let probe = g.input(vec![0.2, 0.1, -0.3, 0.4, 0.25]);
            let d = g.dot(halves, probe);
            let d2 = g.sum_nodes(vec![d, d]);
            g.scale_add(d2, 0.5, 0.0)
        });
    }

    #[test]
    fn grad_check_param_rows() {
        let store = seeded_store(&[("embed", 4, 3), ("w", 1, 3)]);
        check_gradients(&store, |_, g| {
            let r0 = g.param_row("embed", 0);
            let r2 = g.param_row("embed", 2);
            let r2b = g.param_row("embed", 2); // repeated lookup accumulates
            let s = g.sum_nodes(vec![r0, r2, r2b]);
            let w = g.param("w");
            g.matvec(w, s)
        });
    }

    #[test]
    fn min_tie_routes_gradient_to_first_argument() {
        let mut store = ParamStore::<f64>::new();
        store.insert_data("a", 1, 1, vec![0.5]);
        store.insert_data("b", 1, 1, vec![0.5]);
        let mut g = Graph::new(&store);
        let a = g.param("a");
        let b = g.param("b");
        let m = g.min(a, b);
        let grads = g.backward(m);
        assert_eq!(grads.get("a"), Some([1.0].as_slice()));
        assert!(grads.get("b").is_none_or(|buf| buf[0] == 0.0));
    }

    #[test]
    fn clamp_blocks_gradient_outside_range() {
        let mut store = ParamStore::<f64>::new();
        store.insert_data("x", 1, 3, vec![0.5, 2.0, -1.0]);
        let mut g = Graph::new(&store);
        let x = g.param("x");
        let c = g.clamp(x, 0.0, 1.0);
        assert_eq!(g.value(c), &[0.5, 1.0, 0.0]);
        let ones = g.input(vec![1.0, 1.0, 1.0]);
        let s = g.dot(c, ones);
        let grads = g.backward(s);
        assert_eq!(grads.get("x"), Some([1.0, 0.0, 0.0].as_slice()));
    }

    #[test]
    fn backward_ignores_nodes_outside_the_out_cone() {
        let store = seeded_store(&[("w", 2, 2)]);
        let mut g = Graph::new(&store);
        let w = g.param("w");
        let x = g.input(vec![1.0, 2.0]);
        let y = g.matvec(w, x);
        let probe = g.input(vec![1.0, 1.0]);
        let used = g.dot(y, probe);
        let _unused = g.exp(y);
        let grads = g.backward(used);
        assert!(grads.get("w").is_some());
    }

    #[test]
    fn dot_unrolled_matches_naive() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.37 - 1.5).collect();
        let b: Vec<f64> = (0..11).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot_unrolled(&a, &b) - naive).abs() < 1e-12);
    }
}
