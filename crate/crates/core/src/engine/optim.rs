use super::{EngineError, GradientMap, ParamStore, Scalar, Tensor};

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
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for every parameter of a store.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Result<Self, EngineError> {
        if !(config.lr >= 0.0) || !(config.eps > 0.0) {
            return Err(EngineError::Precondition(format!(
                "adam needs lr >= 0 and eps > 0, got lr={} eps={}",
                config.lr, config.eps
            )));
        }
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(EngineError::Precondition(format!(
                "adam betas must lie in [0, 1), got {} and {}",
                config.beta1, config.beta2
            )));
        }
        let zeros = || {
            params
                .iter()
                .map(|(_, _, t)| Tensor::zeros(t.shape()).expect("existing shape"))
                .collect::<Vec<_>>()
        };
        Ok(Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of every parameter in `params`.
pub fn adam_step<T: Scalar>(
    params: &mut ParamStore<T>,
    grads: &GradientMap<T>,
    state: &mut AdamState<T>,
) -> Result<(), EngineError> {
    if state.first.len() != params.len() {
        return Err(EngineError::Contract(format!(
            "optimizer tracks {} parameters, store has {}",
            state.first.len(),
            params.len()
        )));
    }
    for id in params.ids() {
        let g = grads.get(id).ok_or_else(|| {
            EngineError::Contract(format!("missing gradient for parameter '{}'", params.name(id)))
        })?;
        if g.shape() != params.get(id).shape() || state.first[id.0].shape() != g.shape() {
            return Err(EngineError::Shape {
                op: "adam_step",
                detail: format!("{}: gradient {:?}", params.name(id), g.shape()),
            });
        }
    }

    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let b1 = T::from_f64(c.beta1);
    let b2 = T::from_f64(c.beta2);
    let one = T::one();
    let corr1 = T::from_f64(1.0 - c.beta1.powi(t));
    let corr2 = T::from_f64(1.0 - c.beta2.powi(t));
    let lr = T::from_f64(c.lr);
    let eps = T::from_f64(c.eps);

    for id in params.ids() {
        let g = grads.get(id).expect("checked above").data();
        let m = state.first[id.0].data_mut();
        let v = state.second[id.0].data_mut();
        let p = params.get_mut(id).data_mut();
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (one - b1) * g[i];
            v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
            let m_hat = m[i] / corr1;
            let v_hat = v[i] / corr2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Clamps every gradient entry into `[lo, hi]`.
pub fn clip_gradients<T: Scalar>(
    grads: &GradientMap<T>,
    lo: f64,
    hi: f64,
) -> Result<GradientMap<T>, EngineError> {
    if !(lo < hi) {
        return Err(EngineError::Precondition(format!(
            "clip bounds need lo < hi, got [{lo}, {hi}]"
        )));
    }
    let (lo, hi) = (T::from_f64(lo), T::from_f64(hi));
    let mut out = grads.clone();
    for (_, g) in out.iter_mut() {
        for v in g.data_mut() {
            *v = v.max(lo).min(hi);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ParamId;

    fn single(value: f64) -> (ParamStore<f64>, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("theta", Tensor::scalar(value));
        (s, id)
    }

    fn grad(id: ParamId, g: f64) -> GradientMap<f64> {
        let mut m = GradientMap::new();
        m.insert(id, Tensor::scalar(g));
        m
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut p, id) = single(1.0);
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(&p, cfg).unwrap();
        adam_step(&mut p, &grad(id, 2.0), &mut st).unwrap();
        let delta = p.get(id).item() - 1.0;
        assert!((delta + 0.1 * 2.0 / (2.0 + 1e-8)).abs() < 1e-12);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let (mut p, id) = single(0.25);
        let mut st = AdamState::new(&p, AdamConfig::default()).unwrap();
        adam_step(&mut p, &grad(id, 0.0), &mut st).unwrap();
        assert_eq!(p.get(id).item(), 0.25);
    }

    #[test]
    fn two_steps_match_hand_unroll() {
        let (mut p, id) = single(0.5);
        let cfg = AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        let mut st = AdamState::new(&p, cfg).unwrap();
        let g = 0.3;
        adam_step(&mut p, &grad(id, g), &mut st).unwrap();
        adam_step(&mut p, &grad(id, g), &mut st).unwrap();

        let mut theta = 0.5f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=2 {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            theta -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p.get(id).item() - theta).abs() < 1e-12);
    }

    #[test]
    fn missing_gradient_is_contract_error() {
        let (mut p, _) = single(0.5);
        let mut st = AdamState::new(&p, AdamConfig::default()).unwrap();
        let r = adam_step(&mut p, &GradientMap::new(), &mut st);
        assert!(matches!(r, Err(EngineError::Contract(_))));
    }

    #[test]
    fn clipping_bounds() {
        let mut g = GradientMap::new();
        g.insert(ParamId(0), Tensor::vector(vec![7.0, -9.0, 1.5]));
        let c = clip_gradients(&g, -5.0, 5.0).unwrap();
        assert_eq!(c.get(ParamId(0)).unwrap().data(), &[5.0, -5.0, 1.5]);
    }

    #[test]
    fn clipping_inside_bounds_is_identity() {
        let mut g = GradientMap::new();
        g.insert(ParamId(0), Tensor::vector(vec![0.1, -4.9]));
        assert_eq!(clip_gradients(&g, -5.0, 5.0).unwrap(), g);
    }

    #[test]
    fn clipping_rejects_inverted_bounds() {
        let g = GradientMap::<f64>::new();
        assert!(clip_gradients(&g, 5.0, 5.0).is_err());
        assert!(clip_gradients(&g, 5.0, -5.0).is_err());
    }
}
