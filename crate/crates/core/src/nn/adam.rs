use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{Parameterized, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers follow the model's parameter order.
#[derive(Debug, Clone)]
pub struct Adam<T: Real> {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new<M: Parameterized<T>>(model: &M, config: AdamConfig) -> Self {
        let shapes: Vec<_> = model.params().iter().map(|(_, p)| p.value.raw_dim()).collect();
        Self {
            config,
            step: 0,
            m: shapes.iter().map(|s| Array2::zeros(*s)).collect(),
            v: shapes.iter().map(|s| Array2::zeros(*s)).collect(),
        }
    }

    pub fn update<M: Parameterized<T>>(&mut self, model: &mut M) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let step_size = T::of(c.lr * bc2.sqrt() / bc1);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (ob1, ob2) = (T::one() - b1, T::one() - b2);
        let eps = T::of(c.eps * bc2.sqrt());
        for ((_, p), (m, v)) in model
            .params_mut()
            .into_iter()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            Zip::from(&mut p.value)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + ob1 * g;
                    *v = b2 * *v + ob2 * g * g;
                    *w -= step_size * *m / (v.sqrt() + eps);
                });
        }
    }
}
