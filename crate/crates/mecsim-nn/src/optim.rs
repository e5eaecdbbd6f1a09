use crate::tensor::Tensor2;
use crate::NnError;

/// Anything trainable. The flattening order is the `params()` list order,
/// each tensor row-major; gradient lists follow the same order.
pub trait Params {
    fn params(&self) -> Vec<&Tensor2>;
    fn params_mut(&mut self) -> Vec<&mut Tensor2>;

    fn n_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for t in self.params() {
            out.extend_from_slice(&t.data);
        }
        out
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<(), NnError> {
        let expected = self.n_params();
        if flat.len() != expected {
            return Err(NnError::Shape {
                expected: format!("{expected} parameters"),
                got: format!("{}", flat.len()),
            });
        }
        let mut off = 0;
        for t in self.params_mut() {
            let len = t.data.len();
            t.data.copy_from_slice(&flat[off..off + len]);
            off += len;
        }
        Ok(())
    }
}

/// Gradient buffers shaped like a network's parameters.
pub fn zeros_like(net: &impl Params) -> Vec<Tensor2> {
    net.params()
        .iter()
        .map(|t| Tensor2::zeros(t.rows, t.cols))
        .collect()
}

/// acc += scale * delta, element-wise across the gradient list.
pub fn add_scaled(acc: &mut [Tensor2], delta: &[Tensor2], scale: f64) {
    debug_assert_eq!(acc.len(), delta.len());
    for (a, d) in acc.iter_mut().zip(delta) {
        a.add_scaled(d, scale);
    }
}

/// Plain SGD: p <- p - lr * g.
pub fn sgd_step(net: &mut impl Params, grads: &[Tensor2], lr: f64) {
    let mut params = net.params_mut();
    debug_assert_eq!(params.len(), grads.len());
    for (p, g) in params.iter_mut().zip(grads) {
        debug_assert_eq!(p.data.len(), g.data.len());
        for (pv, gv) in p.data.iter_mut().zip(&g.data) {
            *pv -= lr * gv;
        }
    }
}

/// Soft target update: target <- tau * online + (1 - tau) * target.
pub fn soft_update<T: Params>(target: &mut T, online: &T, tau: f64) {
    let online_flat = online.flatten();
    let mut off = 0;
    for t in target.params_mut() {
        for v in t.data.iter_mut() {
            *v = tau * online_flat[off] + (1.0 - tau) * *v;
            off += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{Activation, Dense};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sgd_applies_learning_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Dense::new(1, 1, Activation::Identity, &mut rng);
        d.w.data[0] = 1.0;
        let grads = vec![
            Tensor2 {
                rows: 1,
                cols: 1,
                data: vec![1.0],
            },
            Tensor2::zeros(1, 1),
        ];
        sgd_step(&mut d, &grads, 0.005);
        assert!((d.w.data[0] - 0.995).abs() < 1e-15);
    }

    #[test]
    fn soft_update_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let online = Dense::new(3, 2, Activation::Tanh, &mut rng);
        let mut target = Dense::new(3, 2, Activation::Tanh, &mut rng);
        let before = target.flatten();
        soft_update(&mut target, &online, 0.0);
        assert_eq!(target.flatten(), before);
        soft_update(&mut target, &online, 1.0);
        assert_eq!(target.flatten(), online.flatten());
    }

    #[test]
    fn flatten_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = Dense::new(4, 3, Activation::Relu, &mut rng);
        let mut b = Dense::new(4, 3, Activation::Relu, &mut rng);
        b.load_flat(&a.flatten()).unwrap();
        assert_eq!(a.flatten(), b.flatten());
        assert!(b.load_flat(&[0.0]).is_err());
    }
}
