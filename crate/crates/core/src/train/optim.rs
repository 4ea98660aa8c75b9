use crate::error::{Error, Result};
use crate::tensor::{Array, Gradients, ParamSet, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    m: Vec<Array<T>>,
    v: Vec<Array<T>>,
    t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        let zeros = || params.iter().map(|(_, _, a)| Array::zeros(a.shape())).collect();
        AdamState {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// Clamps every gradient component to `[-clip_value, clip_value]`.
pub fn clip_gradients<T: Real>(grads: &mut Gradients<T>, clip_value: f64) {
    let c = T::of(clip_value);
    for (_, g) in grads.iter_params_mut() {
        for x in g.data_mut() {
            *x = x.max(-c).min(c);
        }
    }
}

/// One bias-corrected Adam update. Parameters without a gradient are treated
/// as having a zero gradient. Nothing is modified if any gradient is
/// non-finite.
pub fn adam_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    config: &AdamConfig,
) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::invalid("optimizer state does not match parameters"));
    }
    for (id, g) in grads.iter_params() {
        if let Some(k) = g.data().iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {}[{k}] is {}",
                params.name(id),
                g.data()[k]
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::of(config.beta1), T::of(config.beta2));
    let step = T::of(config.learning_rate);
    let c1 = T::of(1.0 - config.beta1.powi(t));
    let c2 = T::of(1.0 - config.beta2.powi(t));
    let eps = T::of(config.epsilon);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let g = grads.param(id);
        let (m, v) = (&mut state.m[id.0], &mut state.v[id.0]);
        let p = params.get_mut(id);
        for k in 0..p.len() {
            let gk = g.map_or(T::zero(), |g| g.data()[k]);
            let mk = b1 * m.data()[k] + (T::one() - b1) * gk;
            let vk = b2 * v.data()[k] + (T::one() - b2) * gk * gk;
            m.data_mut()[k] = mk;
            v.data_mut()[k] = vk;
            p.data_mut()[k] -= step * (mk / c1) / ((vk / c2).sqrt() + eps);
        }
    }
    Ok(())
}
