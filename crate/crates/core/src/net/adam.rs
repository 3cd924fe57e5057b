use super::{GradientBundle, MlpParams};

/// Adam moments and hyperparameters for an ordered list of flat parameter
/// tensors. `weight_decay` is applied decoupled from the adaptive step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// State for an MLP, tensors ordered `W0, b0, W1, b1, ...`.
    pub fn new(params: &MlpParams, lr: f64, weight_decay: f64) -> Self {
        let sizes: Vec<usize> = params
            .weights
            .iter()
            .zip(&params.biases)
            .flat_map(|(w, b)| [w.as_slice().len(), b.len()])
            .collect();
        Self::with_sizes(&sizes, lr, weight_decay)
    }

    pub fn with_sizes(sizes: &[usize], lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    /// One bias-corrected step over `params`, matched by position with
    /// `grads` and the sizes the state was built with.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), self.first_moment.len(), "parameter count changed");
        assert_eq!(grads.len(), params.len(), "gradient count mismatch");
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            assert_eq!(p.len(), m.len(), "tensor {k} changed size");
            for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps) + self.lr * self.weight_decay * *p;
            }
        }
    }
}

/// One Adam step on an MLP.
pub fn adam_step(params: &mut MlpParams, grads: &GradientBundle, state: &mut AdamState) {
    let MlpParams { weights, biases, .. } = params;
    let mut ps: Vec<&mut [f64]> = Vec::with_capacity(weights.len() * 2);
    for (w, b) in weights.iter_mut().zip(biases.iter_mut()) {
        ps.push(w.as_mut_slice());
        ps.push(b.as_mut_slice());
    }
    let gs: Vec<&[f64]> = grads
        .weights
        .iter()
        .zip(&grads.biases)
        .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
        .collect();
    state.update(&mut ps, &gs);
}
