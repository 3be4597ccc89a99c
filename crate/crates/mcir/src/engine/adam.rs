//! Bias-corrected Adam over flat parameter slices.

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// First/second moment buffers for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }
}

/// One Adam update at step `t` (1-based, used for bias correction).
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, hp: &AdamHyper, t: u64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    let c1 = 1.0 - hp.beta1.powi(t as i32);
    let c2 = 1.0 - hp.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.epsilon);
    }
}
