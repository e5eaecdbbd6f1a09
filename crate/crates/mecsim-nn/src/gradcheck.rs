//! Central finite-difference verification of every backward pass. Used by
//! the `gradcheck` CLI command and the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::Attention;
use crate::brnn::Brnn;
use crate::dense::{Activation, Dense};
use crate::encoder::StateEncoder;
use crate::lstm::LstmCell;
use crate::optim::Params;
use crate::tensor::Tensor2;

pub const DEFAULT_H: f64 = 1e-5;

/// Central differences of a scalar function at `x`.
pub fn numeric_grad<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let fp = f(&probe);
            probe[i] = orig - h;
            let fm = f(&probe);
            probe[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Max relative error with an absolute floor of 1e-6 on the denominator.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

pub fn flatten_grads(grads: &[Tensor2]) -> Vec<f64> {
    grads.iter().flat_map(|g| g.data.iter().copied()).collect()
}

fn random_vec(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Dense layer: parameter and input gradients of a projected output.
pub fn check_dense(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = Dense::new(3, 4, Activation::Tanh, &mut rng);
    let x = random_vec(3, &mut rng);
    let proj = random_vec(4, &mut rng);
    let (_, cache) = layer.forward(&x);
    let (dx, grads) = layer.backward(&cache, &proj);

    let loss_params = |flat: &[f64]| {
        let mut l = layer.clone();
        l.load_flat(flat).unwrap();
        let (y, _) = l.forward(&x);
        y.iter().zip(&proj).map(|(a, b)| a * b).sum()
    };
    let num_p = numeric_grad(loss_params, &layer.flatten(), DEFAULT_H);
    let err_p = max_rel_err(&flatten_grads(&grads), &num_p);

    let loss_input = |xi: &[f64]| {
        let (y, _) = layer.forward(xi);
        y.iter().zip(&proj).map(|(a, b)| a * b).sum()
    };
    let num_x = numeric_grad(loss_input, &x, DEFAULT_H);
    err_p.max(max_rel_err(&dx, &num_x))
}

/// LSTM over a 10-step window (BPTT).
pub fn check_lstm(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = LstmCell::new(3, 4, &mut rng);
    let window: Vec<Vec<f64>> = (0..10).map(|_| random_vec(3, &mut rng)).collect();
    let proj = random_vec(4, &mut rng);
    let (_, caches) = cell.forward_window(&window);
    let (_, grads) = cell.backward_window(&caches, &proj);
    let loss = |flat: &[f64]| {
        let mut c = cell.clone();
        c.load_flat(flat).unwrap();
        let (h, _) = c.forward_window(&window);
        h.iter().zip(&proj).map(|(a, b)| a * b).sum()
    };
    let num = numeric_grad(loss, &cell.flatten(), DEFAULT_H);
    max_rel_err(&flatten_grads(&grads), &num)
}

/// Additive attention over three vectors.
pub fn check_attention(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attn = Attention::new(3, 4, &mut rng);
    let inputs: Vec<Vec<f64>> = (0..3).map(|_| random_vec(3, &mut rng)).collect();
    let proj = random_vec(3, &mut rng);
    let (_, cache) = attn.forward(&inputs);
    let (_, grads) = attn.backward(&cache, &proj);
    let loss = |flat: &[f64]| {
        let mut a = attn.clone();
        a.load_flat(flat).unwrap();
        let (m, _) = a.forward(&inputs);
        m.iter().zip(&proj).map(|(x, y)| x * y).sum()
    };
    let num = numeric_grad(loss, &attn.flatten(), DEFAULT_H);
    max_rel_err(&flatten_grads(&grads), &num)
}

/// Conv, attention and LSTM end to end over a short window.
pub fn check_encoder(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = StateEncoder::new(3, 3, 4, &mut rng);
    let window: Vec<Vec<f64>> = (0..4).map(|_| random_vec(6, &mut rng)).collect();
    let proj = random_vec(4, &mut rng);
    let (_, cache) = enc.forward(&window);
    let (dobs, grads) = enc.backward(&cache, &proj);

    let loss_params = |flat: &[f64]| {
        let mut e = enc.clone();
        e.load_flat(flat).unwrap();
        let (h, _) = e.forward(&window);
        h.iter().zip(&proj).map(|(a, b)| a * b).sum()
    };
    let num_p = numeric_grad(loss_params, &enc.flatten(), DEFAULT_H);
    let err_p = max_rel_err(&flatten_grads(&grads), &num_p);

    // Gradient through the inputs of the first window slot.
    let loss_input = |x0: &[f64]| {
        let mut w = window.clone();
        w[0] = x0.to_vec();
        let (h, _) = enc.forward(&w);
        h.iter().zip(&proj).map(|(a, b)| a * b).sum()
    };
    let num_x = numeric_grad(loss_input, &window[0], DEFAULT_H);
    err_p.max(max_rel_err(&dobs[0], &num_x))
}

/// Bidirectional recurrent scan over three agents.
pub fn check_brnn(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Brnn::new(3, 3, &mut rng);
    let xs: Vec<Vec<f64>> = (0..3).map(|_| random_vec(3, &mut rng)).collect();
    let projs: Vec<Vec<f64>> = (0..3).map(|_| random_vec(net.out_dim(), &mut rng)).collect();
    let (_, cache) = net.forward(&xs);
    let (dxs, grads) = net.backward(&cache, &projs);

    let loss_params = |flat: &[f64]| {
        let mut b = net.clone();
        b.load_flat(flat).unwrap();
        let (ys, _) = b.forward(&xs);
        ys.iter()
            .zip(&projs)
            .flat_map(|(y, p)| y.iter().zip(p).map(|(a, b)| a * b))
            .sum()
    };
    let num_p = numeric_grad(loss_params, &net.flatten(), DEFAULT_H);
    let err_p = max_rel_err(&flatten_grads(&grads), &num_p);

    let loss_input = |x1: &[f64]| {
        let mut inputs = xs.clone();
        inputs[1] = x1.to_vec();
        let (ys, _) = net.forward(&inputs);
        ys.iter()
            .zip(&projs)
            .flat_map(|(y, p)| y.iter().zip(p).map(|(a, b)| a * b))
            .sum()
    };
    let num_x = numeric_grad(loss_input, &xs[1], DEFAULT_H);
    err_p.max(max_rel_err(&dxs[1], &num_x))
}

#[derive(Debug, Clone)]
pub struct LayerCheck {
    pub name: &'static str,
    pub max_rel_err: f64,
}

/// Run all layer checks. Deterministic for a fixed seed.
pub fn run_all(seed: u64) -> Vec<LayerCheck> {
    vec![
        LayerCheck {
            name: "dense",
            max_rel_err: check_dense(seed),
        },
        LayerCheck {
            name: "lstm_w10",
            max_rel_err: check_lstm(seed + 1),
        },
        LayerCheck {
            name: "attention",
            max_rel_err: check_attention(seed + 2),
        },
        LayerCheck {
            name: "state_encoder",
            max_rel_err: check_encoder(seed + 3),
        },
        LayerCheck {
            name: "brnn_n3",
            max_rel_err: check_brnn(seed + 4),
        },
    ]
}
