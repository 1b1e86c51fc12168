use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::param::Param;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments. Moments are kept per parameter in
/// the order the parameters are handed to [`Adam::step`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    /// One update of every parameter from its accumulated gradient.
    ///
    /// Gradients are checked before anything is modified; a non-finite
    /// gradient leaves parameters and state untouched.
    pub fn step(&mut self, params: &mut [(String, &mut Param<T>)], lr: f64) -> Result<()> {
        for (name, p) in params.iter() {
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(EngineError::NonFiniteGradient { param: name.clone() });
            }
        }
        if self.first_moment.is_empty() && self.step == 0 {
            self.first_moment = params.iter().map(|(_, p)| vec![T::zero(); p.len()]).collect();
            self.second_moment = self.first_moment.clone();
        }
        if self.first_moment.len() != params.len() {
            return Err(EngineError::OptimizerState(format!(
                "{} moment sets for {} parameters",
                self.first_moment.len(),
                params.len()
            )));
        }
        for (i, (name, p)) in params.iter().enumerate() {
            if self.first_moment[i].len() != p.len() || self.second_moment[i].len() != p.len() {
                return Err(EngineError::OptimizerState(format!("moment shape mismatch for `{name}`")));
            }
        }

        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (b1, b2) = (T::from_f64_lossy(beta1), T::from_f64_lossy(beta2));
        let (one_b1, one_b2) = (T::from_f64_lossy(1.0 - beta1), T::from_f64_lossy(1.0 - beta2));
        let (inv_c1, inv_c2) = (T::from_f64_lossy(1.0 / c1), T::from_f64_lossy(1.0 / c2));
        let (lr, eps) = (T::from_f64_lossy(lr), T::from_f64_lossy(eps));

        for (i, (_, p)) in params.iter_mut().enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for (((w, &g), m), v) in p.value.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let m_hat = *m * inv_c1;
                let v_hat = *v * inv_c2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
