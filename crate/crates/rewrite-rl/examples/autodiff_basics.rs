//! The reverse-mode autodiff core on its own: build a scalar expression over
//! named parameters, backpropagate, and check one gradient against a central
//! finite difference.
//!
//! ```sh
//! cargo run --example autodiff_basics
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rewrite_rl::nn::{Graph, Init, ParamStore};

/// f(w, b) = sigmoid(w . x + b[0]), a one-neuron model in graph form.
fn forward(store: &ParamStore<f64>, x: &[f64]) -> (f64, rewrite_rl::nn::Gradients<f64>) {
    let mut g = Graph::new(store);
    let w = g.param("w");
    let b = g.param("b");
    let x = g.input(x.to_vec());
    let z = g.dot(w, x);
    let z = g.add(z, b);
    let y = g.sigmoid(z);
    (g.scalar(y), g.backward(y))
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::<f64>::new();
    store.insert("w", 1, 4, Init::Uniform(0.5), &mut rng);
    store.insert("b", 1, 1, Init::Zeros, &mut rng);
    let x = [0.3, -1.2, 0.8, 0.5];

    let (y, grads) = forward(&store, &x);
    println!("f(w, b) = {y:.6}");
    for (name, grad) in grads.iter() {
        println!("  d f / d {name} = {grad:?}");
    }

    // Central finite difference on w[2], step 1e-5.
    let step = 1e-5;
    let mut plus = store.get("w").data.clone();
    plus[2] += step;
    let mut minus = store.get("w").data.clone();
    minus[2] -= step;
    let mut probe = |w: Vec<f64>| {
        let mut s = ParamStore::<f64>::new();
        s.insert_data("w", 1, 4, w);
        s.insert_data("b", 1, 1, store.get("b").data.clone());
        forward(&s, &x).0
    };
    let numeric = (probe(plus) - probe(minus)) / (2.0 * step);
    let analytic = grads.get("w").expect("w gets a gradient")[2];
    println!("\nd f / d w[2]: analytic {analytic:.10}, finite difference {numeric:.10}");
    assert!((analytic - numeric).abs() / numeric.abs().max(1e-12) < 1e-6);
    println!("gradients agree");
}
