//! Adaptive-moment first-order optimizer with bias-corrected moments.

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.len()]).collect::<Vec<_>>();
        Self {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }
}

/// Applies one update from the gradients currently held in `params`, then
/// zeroes them. Fails without touching anything if a gradient is non-finite.
pub fn optimizer_step(params: &mut ParamStore, state: &mut OptimizerState) -> Result<()> {
    if state.first.len() != params.len() {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }
    for p in params.iter() {
        if let Some(i) = p.grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite gradient in `{}` at index {i}",
                p.name
            )));
        }
    }
    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for ((p, m), v) in params
        .iter_mut()
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        for i in 0..p.value.len() {
            let g = p.grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p.value[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            p.grad[i] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut rng = rng_from(1, &[]);
        let mut p = ParamStore::new();
        p.add_normal("w", &[3, 3], 1.0, &mut rng).unwrap();
        let before = p.clone();
        let mut st = OptimizerState::new(&p, AdamConfig::default());
        optimizer_step(&mut p, &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut p = ParamStore::new();
        let x = p.add("x", &[1]).unwrap();
        let mut st = OptimizerState::new(
            &p,
            AdamConfig {
                learning_rate: 0.1,
                ..AdamConfig::default()
            },
        );
        for _ in 0..500 {
            let xv = p.value(x)[0];
            p.grad_mut(x)[0] = 2.0 * (xv - 3.0);
            optimizer_step(&mut p, &mut st).unwrap();
        }
        assert!((p.value(x)[0] - 3.0).abs() < 1e-3, "{}", p.value(x)[0]);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = ParamStore::new();
        p.add("good", &[1]).unwrap();
        let bad = p.add("bad", &[2]).unwrap();
        p.grad_mut(bad)[1] = f64::NAN;
        let mut st = OptimizerState::new(&p, AdamConfig::default());
        let err = optimizer_step(&mut p, &mut st).unwrap_err();
        assert!(err.to_string().contains("`bad`"), "{err}");
        assert_eq!(st.step, 0);
    }

    #[test]
    fn replaying_gradients_is_exact() {
        let mut rng = rng_from(9, &[]);
        let mut p = ParamStore::new();
        let w = p.add_normal("w", &[4], 1.0, &mut rng).unwrap();
        let grads: Vec<Vec<f64>> = (0..25)
            .map(|i| (0..4).map(|j| ((i * 7 + j * 3) as f64).sin()).collect())
            .collect();
        let run = |mut p: ParamStore| {
            let mut st = OptimizerState::new(&p, AdamConfig::default());
            for g in &grads {
                p.grad_mut(w).copy_from_slice(g);
                optimizer_step(&mut p, &mut st).unwrap();
            }
            (p, st)
        };
        let (a, sa) = run(p.clone());
        let (b, sb) = run(p);
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }
}
