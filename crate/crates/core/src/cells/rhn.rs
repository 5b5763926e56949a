//! Single-layer recurrent highway cell with coupled carry/transform gates:
//! `h = g ⊙ h_{t-1} + (1 - g) ⊙ tanh(W_c [s; h_{t-1}] + b_c)`,
//! `g = sigmoid(W_g [s; h_{t-1}] + b_g)`.

use super::{add_classifier, gaussian, readout, require_steps, ModelConfig, Recurrent, INIT_STD};
use crate::engine::{rng, EngineError, Graph, ParamId, ParamStore, Scalar, Tensor, Var};
use crate::ConfigError;

#[derive(Clone, Debug)]
pub struct Rhn<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    candidate: (ParamId, ParamId),
    gate: (ParamId, ParamId),
    out: (ParamId, ParamId),
}

#[derive(Clone, Copy, Debug)]
pub struct RhnVars {
    pub w_c: Var,
    pub b_c: Var,
    pub w_g: Var,
    pub b_g: Var,
    pub w_out: Var,
    pub b_out: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct RhnState {
    pub h: Var,
}

impl<T: Scalar> Rhn<T> {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ConfigError> {
        config.validate()?;
        let (h, i) = (config.hidden, config.input);
        let mut rng = rng::stream(seed, 0);
        let mut p = ParamStore::new();
        let w_c = p.add("rhn.w_c", gaussian(&mut rng, &[h, i + h], 0.0, INIT_STD));
        let b_c = p.add("rhn.b_c", gaussian(&mut rng, &[h], 0.0, INIT_STD));
        let w_g = p.add("rhn.w_g", gaussian(&mut rng, &[h, i + h], 0.0, INIT_STD));
        let b_g = p.add("rhn.b_g", gaussian(&mut rng, &[h], 0.0, INIT_STD));
        let out = add_classifier(&mut p, &mut rng, config);
        Ok(Self {
            config: config.clone(),
            params: p,
            candidate: (w_c, b_c),
            gate: (w_g, b_g),
            out,
        })
    }

    pub fn vars(&self, params: &[Var]) -> RhnVars {
        RhnVars {
            w_c: params[self.candidate.0 .0],
            b_c: params[self.candidate.1 .0],
            w_g: params[self.gate.0 .0],
            b_g: params[self.gate.1 .0],
            w_out: params[self.out.0 .0],
            b_out: params[self.out.1 .0],
        }
    }

    pub fn initial_state(&self, g: &mut Graph<T>) -> RhnState {
        RhnState {
            h: g.constant(Tensor::zeros(&[self.config.hidden]).expect("rank 1")),
        }
    }
}

fn advance<T: Scalar>(
    g: &mut Graph<T>,
    vars: &RhnVars,
    state: &RhnState,
    s: Var,
) -> Result<RhnState, EngineError> {
    let x = g.concat(&[s, state.h])?;
    let zc = g.matmul(vars.w_c, x)?;
    let zc = g.add(zc, vars.b_c)?;
    let cand = g.tanh(zc);
    let zg = g.matmul(vars.w_g, x)?;
    let zg = g.add(zg, vars.b_g)?;
    let gate = g.sigmoid(zg);
    let carry = g.hadamard(gate, state.h)?;
    let open = g.one_minus(gate);
    let transform = g.hadamard(open, cand)?;
    Ok(RhnState {
        h: g.add(carry, transform)?,
    })
}

pub fn rhn_step<T: Scalar>(
    g: &mut Graph<T>,
    vars: &RhnVars,
    state: &RhnState,
    s: Var,
) -> Result<(RhnState, Var), EngineError> {
    let next = advance(g, vars, state, s)?;
    let logits = readout(g, vars.w_out, vars.b_out, next.h)?;
    Ok((next, logits))
}

impl<T: Scalar> Recurrent<T> for Rhn<T> {
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
            state = advance(g, &vars, &state, s)?;
        }
        readout(g, vars.w_out, vars.b_out, state.h)
    }
}
