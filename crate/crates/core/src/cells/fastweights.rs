//! Fast weights with layer normalisation: a scalar decay/write rule
//! `A_t = λ A_{t-1} + η h_{t-1} ⊗ h_{t-1}` followed by `S` refinements
//! `h ← LN(tanh(W s_t + b + A_t h))`.

use super::{add_classifier, gaussian, readout, require_steps, ModelConfig, Recurrent, INIT_STD};
use crate::engine::{rng, EngineError, Graph, ParamId, ParamStore, Scalar, Tensor, Var};
use crate::ConfigError;

#[derive(Clone, Debug)]
pub struct FastWeights<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    ids: Ids,
}

#[derive(Clone, Copy, Debug)]
struct Ids {
    w_in: ParamId,
    b: ParamId,
    ln_gain: ParamId,
    ln_bias: ParamId,
    w_out: ParamId,
    b_out: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct FastWeightsVars {
    pub w_in: Var,
    pub b: Var,
    pub ln_gain: Var,
    pub ln_bias: Var,
    pub w_out: Var,
    pub b_out: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct FastWeightsState {
    pub h: Var,
    pub memory: Var,
}

impl<T: Scalar> FastWeights<T> {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ConfigError> {
        config.validate()?;
        let (h, i) = (config.hidden, config.input);
        let mut rng = rng::stream(seed, 0);
        let mut p = ParamStore::new();
        let w_in = p.add("input.w", gaussian(&mut rng, &[h, i], 0.0, INIT_STD));
        let b = p.add("input.b", gaussian(&mut rng, &[h], 0.0, INIT_STD));
        let ln_gain = p.add("ln.gain", Tensor::filled(&[h], T::one()).expect("rank 1"));
        let ln_bias = p.add("ln.bias", Tensor::zeros(&[h]).expect("rank 1"));
        let (w_out, b_out) = add_classifier(&mut p, &mut rng, config);
        Ok(Self {
            config: config.clone(),
            params: p,
            ids: Ids {
                w_in,
                b,
                ln_gain,
                ln_bias,
                w_out,
                b_out,
            },
        })
    }

    pub fn vars(&self, params: &[Var]) -> FastWeightsVars {
        let v = |id: ParamId| params[id.0];
        FastWeightsVars {
            w_in: v(self.ids.w_in),
            b: v(self.ids.b),
            ln_gain: v(self.ids.ln_gain),
            ln_bias: v(self.ids.ln_bias),
            w_out: v(self.ids.w_out),
            b_out: v(self.ids.b_out),
        }
    }

    pub fn initial_state(&self, g: &mut Graph<T>) -> FastWeightsState {
        let h = self.config.hidden;
        FastWeightsState {
            h: g.constant(Tensor::zeros(&[h]).expect("rank 1")),
            memory: g.constant(Tensor::zeros(&[h, h]).expect("rank 2")),
        }
    }
}

/// `λ A + η h ⊗ h`.
pub fn fastweights_memory_update<T: Scalar>(
    g: &mut Graph<T>,
    lambda: T,
    eta: T,
    a_prev: Var,
    h: Var,
) -> Result<Var, EngineError> {
    let kept = g.scale(a_prev, lambda);
    let hh = g.outer(h, h)?;
    let written = g.scale(hh, eta);
    g.add(kept, written)
}

fn advance<T: Scalar>(
    g: &mut Graph<T>,
    config: &ModelConfig,
    vars: &FastWeightsVars,
    state: &FastWeightsState,
    s: Var,
) -> Result<FastWeightsState, EngineError> {
    let memory = fastweights_memory_update(
        g,
        T::from_f64(config.fw_lambda),
        T::from_f64(config.fw_eta),
        state.memory,
        state.h,
    )?;
    let ws = g.matmul(vars.w_in, s)?;
    let base = g.add(ws, vars.b)?;
    let mut h = state.h;
    for _ in 0..config.fw_inner_steps {
        let ah = g.matmul(memory, h)?;
        let z = g.add(base, ah)?;
        let act = g.tanh(z);
        h = g.layer_norm(act, vars.ln_gain, vars.ln_bias)?;
    }
    Ok(FastWeightsState { h, memory })
}

/// One step; returns the new state and the classifier logits on `h_t`.
pub fn fastweights_step<T: Scalar>(
    g: &mut Graph<T>,
    config: &ModelConfig,
    vars: &FastWeightsVars,
    state: &FastWeightsState,
    s: Var,
) -> Result<(FastWeightsState, Var), EngineError> {
    let next = advance(g, config, vars, state, s)?;
    let logits = readout(g, vars.w_out, vars.b_out, next.h)?;
    Ok((next, logits))
}

impl<T: Scalar> Recurrent<T> for FastWeights<T> {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    fn final_logits(
        &self,
        g: &mut Graph<T>,
        params: &[Var],
        inputs: &[Var],
    ) -> Result<Var, EngineError> {
        require_steps(inputs)?;
        let vars = self.vars(params);
        let mut state = self.initial_state(g);
        for &s in inputs {
            state = advance(g, &self.config, &vars, &state, s)?;
        }
        readout(g, vars.w_out, vars.b_out, state.h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::Family;

    fn cfg(lambda: f64, eta: f64) -> ModelConfig {
        ModelConfig {
            family: Family::FastWeights,
            hidden: 4,
            input: 3,
            output: 3,
            fw_lambda: lambda,
            fw_eta: eta,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn no_memory_reduces_to_normalised_tanh() {
        let c = cfg(0.0, 0.0);
        let net = FastWeights::<f64>::init(&c, 3).unwrap();
        let mut g = Graph::new();
        let params = g.bind(net.params());
        let vars = net.vars(&params);
        let mut st = net.initial_state(&mut g);
        for t in 0..3 {
            let s = g.constant(Tensor::one_hot(3, t).unwrap());
            let (next, _) = fastweights_step(&mut g, &c, &vars, &st, s).unwrap();
            assert!(g.value(next.memory).data().iter().all(|&v| v == 0.0));
            let ws = g.matmul(vars.w_in, s).unwrap();
            let z = g.add(ws, vars.b).unwrap();
            let act = g.tanh(z);
            let expect = g.layer_norm(act, vars.ln_gain, vars.ln_bias).unwrap();
            assert_eq!(g.value(next.h), g.value(expect));
            st = next;
        }
    }

    #[test]
    fn two_step_trajectory_matches_hand_unroll() {
        let c = cfg(0.9, 0.5);
        let net = FastWeights::<f64>::init(&c, 8).unwrap();
        let p = net.params();
        let w = p.get(p.id_of("input.w").unwrap()).clone();
        let b = p.get(p.id_of("input.b").unwrap()).clone();

        let mut g = Graph::new();
        let params = g.bind(p);
        let vars = net.vars(&params);
        let mut st = net.initial_state(&mut g);
        let inputs = [1usize, 2];
        let mut got = Vec::new();
        for &i in &inputs {
            let s = g.constant(Tensor::one_hot(3, i).unwrap());
            let (next, _) = fastweights_step(&mut g, &c, &vars, &st, s).unwrap();
            got.push((g.value(next.h).clone(), g.value(next.memory).clone()));
            st = next;
        }

        let n = 4;
        let mut h = vec![0.0f64; n];
        let mut a = vec![0.0f64; n * n];
        for (step, &i) in inputs.iter().enumerate() {
            for r in 0..n {
                for col in 0..n {
                    a[r * n + col] = 0.9 * a[r * n + col] + 0.5 * h[r] * h[col];
                }
            }
            let mut z = vec![0.0; n];
            for r in 0..n {
                z[r] = w.at(r, i) + b.data()[r];
                for col in 0..n {
                    z[r] += a[r * n + col] * h[col];
                }
                z[r] = z[r].tanh();
            }
            let mean = z.iter().sum::<f64>() / n as f64;
            let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            h = z.iter().map(|v| (v - mean) / (var + 1e-5).sqrt()).collect();
            assert!(got[step].1.data().iter().zip(&a).all(|(x, y)| (x - y).abs() < 1e-12));
            assert!(got[step].0.data().iter().zip(&h).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }
}
