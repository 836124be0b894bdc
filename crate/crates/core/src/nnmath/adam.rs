use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over every tensor in the store. `t` is the
/// 1-based step index.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig, t: u64) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidArgument(
            "adam step index is 1-based".to_string(),
        ));
    }
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for (_, p) in store.iter_mut() {
        let values = p.value.as_mut_slice();
        let grads = p.grad.as_slice();
        let m = p.adam_m.as_mut_slice();
        let v = p.adam_v.as_mut_slice();
        for k in 0..values.len() {
            let g = grads[k];
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            values[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnmath::dense::DenseMatrix;

    fn scalar_store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("x", DenseMatrix::from_rows(&[&[x]])).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = scalar_store(1.0);
        s.grad_mut("x").set(0, 0, 3.0);
        adam_step(&mut s, &AdamConfig::default(), 1).unwrap();
        let x = s.value("x").get(0, 0);
        assert!((x - (1.0 - 0.001)).abs() < 1e-9, "{x}");
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut s = scalar_store(0.25);
        for t in 1..=10 {
            adam_step(&mut s, &AdamConfig::default(), t).unwrap();
        }
        assert_eq!(s.value("x").get(0, 0), 0.25);
    }

    #[test]
    fn step_zero_rejected() {
        let mut s = scalar_store(0.0);
        assert!(adam_step(&mut s, &AdamConfig::default(), 0).is_err());
    }

    #[test]
    fn minimizes_a_parabola() {
        // f(x) = x², f'(x) = 2x. A plain scalar simulation of the same
        // recurrence is the oracle.
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut s = scalar_store(1.0);
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=100u64 {
            s.zero_grads();
            let cur = s.value("x").get(0, 0);
            s.grad_mut("x").set(0, 0, 2.0 * cur);
            adam_step(&mut s, &cfg, t).unwrap();

            let g = 2.0 * x;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32));
            let vh = v / (1.0 - 0.999f64.powi(t as i32));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        let got = s.value("x").get(0, 0);
        assert!((got - x).abs() < 1e-12, "{got} vs {x}");
        assert!(got.abs() < 0.05, "{got}");
    }
}
