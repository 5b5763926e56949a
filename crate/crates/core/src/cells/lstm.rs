//! LSTM without peepholes: gates from `[s_t; h_{t-1}]`,
//! `c = f ⊙ c + i ⊙ g`, `h = o ⊙ tanh(c)`.

use super::{add_classifier, gaussian, readout, require_steps, ModelConfig, Recurrent, INIT_STD};
use crate::engine::{rng, EngineError, Graph, ParamId, ParamStore, Scalar, Tensor, Var};
use crate::ConfigError;

const GATES: [&str; 4] = ["i", "f", "o", "g"];

#[derive(Clone, Debug)]
pub struct Lstm<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    /// `(weight, bias)` for the input, forget, output and candidate gates.
    gates: [(ParamId, ParamId); 4],
    out: (ParamId, ParamId),
}

#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub gates: [(Var, Var); 4],
    pub w_out: Var,
    pub b_out: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl<T: Scalar> Lstm<T> {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ConfigError> {
        config.validate()?;
        let (h, i) = (config.hidden, config.input);
        let mut rng = rng::stream(seed, 0);
        let mut p = ParamStore::new();
        let gates = GATES.map(|name| {
            let w = p.add(format!("lstm.w_{name}"), gaussian(&mut rng, &[h, i + h], 0.0, INIT_STD));
            let b = p.add(format!("lstm.b_{name}"), gaussian(&mut rng, &[h], 0.0, INIT_STD));
            (w, b)
        });
        let out = add_classifier(&mut p, &mut rng, config);
        Ok(Self {
            config: config.clone(),
            params: p,
            gates,
            out,
        })
    }

    pub fn vars(&self, params: &[Var]) -> LstmVars {
        LstmVars {
            gates: self.gates.map(|(w, b)| (params[w.0], params[b.0])),
            w_out: params[self.out.0 .0],
            b_out: params[self.out.1 .0],
        }
    }

    pub fn initial_state(&self, g: &mut Graph<T>) -> LstmState {
        let h = self.config.hidden;
        LstmState {
            h: g.constant(Tensor::zeros(&[h]).expect("rank 1")),
            c: g.constant(Tensor::zeros(&[h]).expect("rank 1")),
        }
    }
}

fn advance<T: Scalar>(
    g: &mut Graph<T>,
    vars: &LstmVars,
    state: &LstmState,
    s: Var,
) -> Result<LstmState, EngineError> {
    let x = g.concat(&[s, state.h])?;
    let mut pre = [x; 4];
    for (k, (w, b)) in vars.gates.iter().enumerate() {
        let z = g.matmul(*w, x)?;
        pre[k] = g.add(z, *b)?;
    }
    let i = g.sigmoid(pre[0]);
    let f = g.sigmoid(pre[1]);
    let o = g.sigmoid(pre[2]);
    let cand = g.tanh(pre[3]);
    let kept = g.hadamard(f, state.c)?;
    let written = g.hadamard(i, cand)?;
    let c = g.add(kept, written)?;
    let tc = g.tanh(c);
    let h = g.hadamard(o, tc)?;
    Ok(LstmState { h, c })
}

pub fn lstm_step<T: Scalar>(
    g: &mut Graph<T>,
    vars: &LstmVars,
    state: &LstmState,
    s: Var,
) -> Result<(LstmState, Var), EngineError> {
    let next = advance(g, vars, state, s)?;
    let logits = readout(g, vars.w_out, vars.b_out, next.h)?;
    Ok((next, logits))
}

impl<T: Scalar> Recurrent<T> for Lstm<T> {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::Family;

    fn konst(g: &mut Graph<f64>, shape: &[usize], v: f64) -> Var {
        g.constant(Tensor::filled(shape, v).unwrap())
    }

    fn vars_with(g: &mut Graph<f64>, h: usize, i: usize, forget_bias: f64) -> LstmVars {
        let mut gates = [(Var::clone(&konst(g, &[1], 0.0)), konst(g, &[1], 0.0)); 4];
        for (k, slot) in gates.iter_mut().enumerate() {
            let w = konst(g, &[h, i + h], 0.0);
            let b = konst(g, &[h], if k == 1 { forget_bias } else { 0.0 });
            *slot = (w, b);
        }
        LstmVars {
            gates,
            w_out: konst(g, &[2, h], 0.0),
            b_out: konst(g, &[2], 0.0),
        }
    }

    #[test]
    fn zero_weights_halve_the_cell() {
        let mut g = Graph::new();
        let vars = vars_with(&mut g, 3, 2, 0.0);
        let c_prev = [0.8, -0.4, 2.0];
        let state = LstmState {
            h: g.constant(Tensor::vector(vec![0.1, 0.2, 0.3])),
            c: g.constant(Tensor::vector(c_prev.to_vec())),
        };
        let s = g.constant(Tensor::vector(vec![1.0, 0.0]));
        let (next, _) = lstm_step(&mut g, &vars, &state, s).unwrap();
        for (k, cp) in c_prev.iter().enumerate() {
            let c = g.value(next.c).data()[k];
            assert!((c - 0.5 * cp).abs() < 1e-15);
            let h = g.value(next.h).data()[k];
            assert!((h - 0.5 * (0.5 * cp).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let mut g = Graph::new();
        let vars = vars_with(&mut g, 2, 2, 50.0);
        let state = LstmState {
            h: g.constant(Tensor::vector(vec![0.0, 0.0])),
            c: g.constant(Tensor::vector(vec![0.7, -1.3])),
        };
        let s = g.constant(Tensor::vector(vec![0.0, 1.0]));
        let (next, _) = lstm_step(&mut g, &vars, &state, s).unwrap();
        // candidate g = tanh(0) = 0, so c_t ≈ c_prev + i ⊙ 0
        assert!((g.value(next.c).data()[0] - 0.7).abs() < 1e-12);
        assert!((g.value(next.c).data()[1] + 1.3).abs() < 1e-12);
    }

    #[test]
    fn shapes_from_config() {
        let c = ModelConfig {
            family: Family::Lstm,
            hidden: 6,
            input: 5,
            output: 5,
            ..ModelConfig::default()
        };
        let net = Lstm::<f64>::init(&c, 1).unwrap();
        assert_eq!(net.params().len(), 10);
        assert_eq!(net.params().get(net.params().id_of("lstm.w_f").unwrap()).shape(), &[6, 11]);
    }
}
