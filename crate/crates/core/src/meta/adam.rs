use serde::{Deserialize, Serialize};

/// Adam with bias correction. Steps with a non-finite gradient are skipped.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    skipped: u64,
}

impl Adam {
    pub fn new(dim: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step: 0,
            skipped: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    /// Applies one step in place. Returns `false` if the step was skipped.
    pub fn update(&mut self, weights: &mut [f64], grads: &[f64]) -> bool {
        assert_eq!(weights.len(), self.m.len(), "Adam state has the wrong size");
        assert_eq!(grads.len(), self.m.len(), "gradient has the wrong size");
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            self.skipped += 1;
            log::warn!("skipping Adam step: non-finite gradient at coordinate {i}");
            return false;
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((w, g), (m, v)) in weights.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        true
    }
}
