use serde::{Deserialize, Serialize};

use super::model::{CompanderModel, Gradients};

/// First and second moment estimates, one buffer per parameter group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn for_model(model: &CompanderModel) -> Self {
        let grads = Gradients::zeros_like(model);
        let shapes: Vec<usize> = grads
            .groups(model.output_gain.is_some())
            .iter()
            .map(|g| g.len())
            .collect();
        Self {
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn matches(&self, model: &CompanderModel) -> bool {
        let fresh = Self::for_model(model);
        self.m.len() == fresh.m.len()
            && self.v.len() == fresh.v.len()
            && self.m.iter().zip(&fresh.m).all(|(a, b)| a.len() == b.len())
            && self.v.iter().zip(&fresh.v).all(|(a, b)| a.len() == b.len())
    }

    /// One bias-corrected Adam update of `model` along `grads`.
    pub fn update(&mut self, model: &mut CompanderModel, grads: &Gradients, h: &AdamHyper) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - h.beta1.powi(t);
        let c2 = 1.0 - h.beta2.powi(t);
        let groups = grads.groups(model.output_gain.is_some());
        let (ms, vs) = (&mut self.m, &mut self.v);
        model.visit_params_mut(|k, params| {
            let g = groups[k];
            for (((p, &gi), m), v) in params.iter_mut().zip(g).zip(ms[k].iter_mut()).zip(vs[k].iter_mut()) {
                *m = h.beta1 * *m + (1.0 - h.beta1) * gi;
                *v = h.beta2 * *v + (1.0 - h.beta2) * gi * gi;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= h.learning_rate * m_hat / (v_hat.sqrt() + h.eps);
            }
        });
    }
}
