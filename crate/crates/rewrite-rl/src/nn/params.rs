//! Named parameter tensors, gradients keyed by parameter name, and Adam.

use std::fmt;
use std::iter::Sum;

use indexmap::IndexMap;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;

/// Scalar type for all network math. Training runs in `f32`; gradient checks
/// instantiate the same code with `f64` so finite differences stay tight.
pub trait Real:
    Float + NumAssign + FromPrimitive + ToPrimitive + Sum + fmt::Debug + Default + 'static
{
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite literal")
    }

    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("finite value")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A dense matrix (`rows x cols`); column vectors use `cols == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PTensor<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> PTensor<T> {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    /// Uniform in `[-a, a]`; draws f64 from the rng so the stream is
    /// identical whichever `Real` instantiation consumes it.
    Uniform(f64),
}

/// All parameters of one model, in a fixed insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: IndexMap<String, PTensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, rows: usize, cols: usize, init: Init, rng: &mut impl Rng) {
        let data = match init {
            Init::Zeros => vec![T::zero(); rows * cols],
            Init::Uniform(a) => (0..rows * cols)
                .map(|_| T::of(rng.gen::<f64>() * 2.0 * a - a))
                .collect(),
        };
        self.insert_data(name, rows, cols, data);
    }

    pub fn insert_data(&mut self, name: &str, rows: usize, cols: usize, data: Vec<T>) {
        assert_eq!(data.len(), rows * cols, "shape mismatch for {name}");
        let previous = self
            .params
            .insert(name.to_string(), PTensor { rows, cols, data });
        assert!(previous.is_none(), "duplicate parameter {name}");
    }

    pub fn get(&self, name: &str) -> &PTensor<T> {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut PTensor<T> {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &PTensor<T>)> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn value_count(&self) -> usize {
        self.params.values().map(PTensor::len).sum()
    }

    /// Copies every parameter whose name satisfies `keep` into a new store.
    pub fn subset(&self, keep: impl Fn(&str) -> bool) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for (name, tensor) in &self.params {
            if keep(name) {
                out.insert_data(name, tensor.rows, tensor.cols, tensor.data.clone());
            }
        }
        out
    }
}

/// Gradient buffers keyed by parameter name, created lazily during backward.
#[derive(Debug, Clone, Default)]
pub struct Gradients<T> {
    map: IndexMap<String, Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn new() -> Self {
        Self {
            map: IndexMap::new(),
        }
    }

    pub fn buffer_mut(&mut self, name: &str, len: usize) -> &mut Vec<T> {
        self.map
            .entry(name.to_string())
            .or_insert_with(|| vec![T::zero(); len])
    }

    pub fn get(&self, name: &str) -> Option<&[T]> {
        self.map.get(name).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<T>)> {
        self.map.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// `self += other * scale`, used to merge per-example gradients.
    pub fn add_scaled(&mut self, other: &Gradients<T>, scale: T) {
        for (name, src) in &other.map {
            let dst = self.buffer_mut(name, src.len());
            assert_eq!(dst.len(), src.len(), "gradient shape mismatch for {name}");
            for (d, s) in dst.iter_mut().zip(src) {
                *d += *s * scale;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for buf in self.map.values_mut() {
            for v in buf.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn global_norm(&self) -> T {
        self.map
            .values()
            .flat_map(|buf| buf.iter().map(|v| *v * *v))
            .sum::<T>()
            .sqrt()
    }
}

/// Scales gradients so their global L2 norm is at most `max_norm`; returns
/// the pre-clip norm.
pub fn clip_grad_norm<T: Real>(grads: &mut Gradients<T>, max_norm: T) -> T {
    let norm = grads.global_norm();
    if norm > max_norm && norm > T::zero() {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Adam with bias correction; state lives alongside the optimizer so two
/// models never share moments.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    t: u64,
    m: IndexMap<String, Vec<T>>,
    v: IndexMap<String, Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: T) -> Self {
        Self {
            lr,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            t: 0,
            m: IndexMap::new(),
            v: IndexMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) {
        self.t += 1;
        let t = T::of(self.t as f64);
        let bc1 = T::one() - self.beta1.powf(t);
        let bc2 = T::one() - self.beta2.powf(t);
        for (name, grad) in grads.iter() {
            let tensor = store.get_mut(name);
            assert_eq!(
                tensor.len(),
                grad.len(),
                "gradient shape mismatch for {name}"
            );
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![T::zero(); grad.len()]);
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![T::zero(); grad.len()]);
            for i in 0..grad.len() {
                m[i] = self.beta1 * m[i] + (T::one() - self.beta1) * grad[i];
                v[i] = self.beta2 * v[i] + (T::one() - self.beta2) * grad[i] * grad[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                tensor.data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
