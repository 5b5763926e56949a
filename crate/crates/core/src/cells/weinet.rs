//! WeiNet: a tanh controller, `K` auto-associative memories with a learned
//! element-wise update rule, an optional router over the memories and a
//! layer-normalised reader.
//!
//! One step, in order:
//!
//! 1. `h_t = tanh(W_ctrl [s_t; e_{t-1}; h_{t-1}])`
//! 2. every memory: `A_t = W_A ⊙ A_{t-1} + W_h ⊙ (h_t ⊗ h_t) + W_AH ⊙ A_{t-1} ⊙ (h_t ⊗ h_t)`
//! 3. router (if enabled): `a_t = softmax([h_tᵀ A_t^k h_t]_k + w ⊙ a_{t-1})`
//! 4. read: `m_t = h_tᵀ Σ_k a_t^k A_t^k`
//! 5. reader: `e_t = LN(tanh(W_read [e_{t-1}; colmean; rowmean; m_t; h_t]))`
//!
//! With the router disabled `a_t` is the constant `[1]`.

use rand::Rng;

use super::{
    add_classifier, gaussian, readout, require_steps, ModelConfig, Recurrent, StatsWeighting,
    UpdateVariant, DECAY_MEAN, FACTOR_STD, INIT_STD, WRITE_MEAN,
};
use crate::engine::{rng, EngineError, Graph, ParamId, ParamStore, Scalar, Tensor, Var};
use crate::ConfigError;

#[derive(Clone, Copy, Debug, PartialEq)]
enum UpdateIds {
    Full { a: ParamId, h: ParamId, ah: ParamId },
    RowCol { a: [ParamId; 2], h: [ParamId; 2], ah: [ParamId; 2] },
    Gated { a: ParamId, h: ParamId },
    CrossBitDot { a: ParamId, h: ParamId, ah: ParamId },
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Ids {
    w_ctrl: ParamId,
    update: UpdateIds,
    w_read: ParamId,
    ln_gain: ParamId,
    ln_bias: ParamId,
    w_out: ParamId,
    b_out: ParamId,
    w_route: Option<ParamId>,
}

#[derive(Clone, Debug)]
pub struct WeiNet<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    ids: Ids,
}

/// Update weights as graph values. Row/column factors are already
/// materialised into full matrices, so they use the `Hadamard` form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdateWeights {
    Hadamard { decay: Var, write: Var, cross: Var },
    Gated { decay: Var, write: Var },
    CrossBitDot { decay: Var, write: Var, cross: Var },
}

impl UpdateWeights {
    pub fn decay(&self) -> Var {
        match *self {
            UpdateWeights::Hadamard { decay, .. }
            | UpdateWeights::Gated { decay, .. }
            | UpdateWeights::CrossBitDot { decay, .. } => decay,
        }
    }
}

/// WeiNet parameters bound onto a graph.
#[derive(Clone, Copy, Debug)]
pub struct WeiNetVars {
    pub w_ctrl: Var,
    pub update: UpdateWeights,
    pub w_route: Option<Var>,
    pub w_read: Var,
    pub ln_gain: Var,
    pub ln_bias: Var,
    pub w_out: Var,
    pub b_out: Var,
    pub stats: StatsWeighting,
}

#[derive(Clone, Debug)]
pub struct WeiNetState {
    pub h: Var,
    pub e: Var,
    pub memories: Vec<Var>,
    /// Router attention `a`, or the constant `[1]` without a router.
    pub attention: Var,
}

fn factor_pair<T: Scalar, R: Rng>(
    store: &mut ParamStore<T>,
    rng: &mut R,
    name: &str,
    h: usize,
    col: (f64, f64),
    row: (f64, f64),
) -> [ParamId; 2] {
    let c = store.add(format!("update.{name}_col"), gaussian(rng, &[h], col.0, col.1));
    let r = store.add(format!("update.{name}_row"), gaussian(rng, &[h], row.0, row.1));
    [c, r]
}

impl<T: Scalar> WeiNet<T> {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ConfigError> {
        config.validate()?;
        let (h, i) = (config.hidden, config.input);
        let mut rng = rng::stream(seed, 0);
        let mut p = ParamStore::new();
        let w_ctrl = p.add("controller.w", gaussian(&mut rng, &[h, i + 2 * h], 0.0, INIT_STD));
        let update = match config.variant {
            UpdateVariant::FullMatrix => UpdateIds::Full {
                a: p.add("update.w_a", gaussian(&mut rng, &[h, h], DECAY_MEAN, INIT_STD)),
                h: p.add("update.w_h", gaussian(&mut rng, &[h, h], WRITE_MEAN, INIT_STD)),
                ah: p.add("update.w_ah", gaussian(&mut rng, &[h, h], 0.0, INIT_STD)),
            },
            UpdateVariant::RowCol => {
                let sa = DECAY_MEAN.sqrt();
                let sh = WRITE_MEAN.sqrt();
                UpdateIds::RowCol {
                    a: factor_pair(&mut p, &mut rng, "w_a", h, (sa, FACTOR_STD), (sa, FACTOR_STD)),
                    h: factor_pair(&mut p, &mut rng, "w_h", h, (sh, FACTOR_STD), (sh, FACTOR_STD)),
                    ah: factor_pair(&mut p, &mut rng, "w_ah", h, (0.0, INIT_STD), (1.0, FACTOR_STD)),
                }
            }
            UpdateVariant::Gated => UpdateIds::Gated {
                a: p.add("update.w_a", gaussian(&mut rng, &[h, h], DECAY_MEAN, INIT_STD)),
                h: p.add("update.w_h", gaussian(&mut rng, &[h, h], WRITE_MEAN, INIT_STD)),
            },
            UpdateVariant::CrossBitDot => {
                // Row sums of a matrix product scale with H; keep them near
                // the element-wise means.
                let s = 1.0 / h as f64;
                UpdateIds::CrossBitDot {
                    a: p.add("update.w_a", gaussian(&mut rng, &[h, h], DECAY_MEAN * s, INIT_STD * s)),
                    h: p.add("update.w_h", gaussian(&mut rng, &[h, h], WRITE_MEAN * s, INIT_STD * s)),
                    ah: p.add("update.w_ah", gaussian(&mut rng, &[h, h], 0.0, INIT_STD)),
                }
            }
        };
        let w_read = p.add("reader.w", gaussian(&mut rng, &[h, 5 * h], 0.0, INIT_STD));
        let ln_gain = p.add("reader.ln_gain", Tensor::filled(&[h], T::one()).expect("rank 1"));
        let ln_bias = p.add("reader.ln_bias", Tensor::zeros(&[h]).expect("rank 1"));
        let (w_out, b_out) = add_classifier(&mut p, &mut rng, config);
        // Separate stream so enabling the router leaves every other draw unchanged.
        let w_route = config.router.then(|| {
            let mut rr = rng::stream(seed, 1);
            p.add("router.w", gaussian(&mut rr, &[config.memories], 0.0, INIT_STD))
        });
        Ok(Self {
            config: config.clone(),
            params: p,
            ids: Ids {
                w_ctrl,
                update,
                w_read,
                ln_gain,
                ln_bias,
                w_out,
                b_out,
                w_route,
            },
        })
    }

    /// Resolves bound parameters, materialising row/column factors.
    pub fn vars(&self, g: &mut Graph<T>, params: &[Var]) -> Result<WeiNetVars, EngineError> {
        let v = |id: ParamId| params[id.0];
        let update = match self.ids.update {
            UpdateIds::Full { a, h, ah } => UpdateWeights::Hadamard {
                decay: v(a),
                write: v(h),
                cross: v(ah),
            },
            UpdateIds::RowCol { a, h, ah } => UpdateWeights::Hadamard {
                decay: g.outer(v(a[0]), v(a[1]))?,
                write: g.outer(v(h[0]), v(h[1]))?,
                cross: g.outer(v(ah[0]), v(ah[1]))?,
            },
            UpdateIds::Gated { a, h } => UpdateWeights::Gated {
                decay: v(a),
                write: v(h),
            },
            UpdateIds::CrossBitDot { a, h, ah } => UpdateWeights::CrossBitDot {
                decay: v(a),
                write: v(h),
                cross: v(ah),
            },
        };
        Ok(WeiNetVars {
            w_ctrl: v(self.ids.w_ctrl),
            update,
            w_route: self.ids.w_route.map(v),
            w_read: v(self.ids.w_read),
            ln_gain: v(self.ids.ln_gain),
            ln_bias: v(self.ids.ln_bias),
            w_out: v(self.ids.w_out),
            b_out: v(self.ids.b_out),
            stats: self.config.stats,
        })
    }

    /// `h_0 = e_0 = 0`, `A_0^k = 0`, `a_0 = 1/K`.
    pub fn initial_state(&self, g: &mut Graph<T>) -> WeiNetState {
        let h = self.config.hidden;
        let k = self.config.memories;
        let zeros = |g: &mut Graph<T>, shape: &[usize]| g.constant(Tensor::zeros(shape).expect("rank <= 2"));
        WeiNetState {
            h: zeros(g, &[h]),
            e: zeros(g, &[h]),
            memories: (0..k).map(|_| zeros(g, &[h, h])).collect(),
            attention: g.constant(Tensor::filled(&[k], T::from_f64(1.0 / k as f64)).expect("rank 1")),
        }
    }
}

impl<T: Scalar> Recurrent<T> for WeiNet<T> {
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
        let vars = self.vars(g, params)?;
        let mut state = self.initial_state(g);
        for &s in inputs {
            state = advance(g, &vars, &state, s)?;
        }
        readout(g, vars.w_out, vars.b_out, state.e)
    }
}

/// Controller: `h_t = tanh(W_ctrl · [s_t; e_{t-1}; h_{t-1}])`.
pub fn controller_step<T: Scalar>(
    g: &mut Graph<T>,
    w_ctrl: Var,
    s: Var,
    e_prev: Var,
    h_prev: Var,
) -> Result<Var, EngineError> {
    let x = g.concat(&[s, e_prev, h_prev])?;
    let z = g.matmul(w_ctrl, x)?;
    Ok(g.tanh(z))
}

/// Router: `softmax([hᵀ A^k h]_k + w ⊙ a_prev)` over the updated memories.
pub fn route<T: Scalar>(
    g: &mut Graph<T>,
    w_route: Var,
    memories: &[Var],
    h: Var,
    a_prev: Var,
) -> Result<Var, EngineError> {
    if memories.is_empty() {
        return Err(EngineError::Contract("router needs at least one memory".into()));
    }
    let scores = memories
        .iter()
        .map(|&a| g.bilinear(h, a))
        .collect::<Result<Vec<_>, _>>()?;
    let scores = g.concat(&scores)?;
    let carry = g.hadamard(w_route, a_prev)?;
    let z = g.add(scores, carry)?;
    g.softmax(z)
}

fn update_with_outer<T: Scalar>(
    g: &mut Graph<T>,
    w: &UpdateWeights,
    a_prev: Var,
    hh: Var,
) -> Result<Var, EngineError> {
    match *w {
        UpdateWeights::Hadamard { decay, write, cross } => {
            let kept = g.hadamard(decay, a_prev)?;
            let written = g.hadamard(write, hh)?;
            let talk = g.hadamard(a_prev, hh)?;
            let talk = g.hadamard(cross, talk)?;
            let sum = g.add(kept, written)?;
            g.add(sum, talk)
        }
        UpdateWeights::Gated { decay, write } => {
            let kept = g.hadamard(decay, a_prev)?;
            let written = g.hadamard(write, hh)?;
            let z = g.add(kept, written)?;
            let gate = g.sigmoid(z);
            let old = g.hadamard(gate, a_prev)?;
            let open = g.one_minus(gate);
            let new = g.hadamard(open, hh)?;
            g.add(old, new)
        }
        UpdateWeights::CrossBitDot { decay, write, cross } => {
            let kept = g.matmul(decay, a_prev)?;
            let written = g.matmul(write, hh)?;
            let talk = g.hadamard(a_prev, hh)?;
            let talk = g.hadamard(cross, talk)?;
            let sum = g.add(kept, written)?;
            g.add(sum, talk)
        }
    }
}

/// One memory update `A_{t-1} → A_t` driven by `h_t`.
pub fn memory_update<T: Scalar>(
    g: &mut Graph<T>,
    w: &UpdateWeights,
    a_prev: Var,
    h: Var,
) -> Result<Var, EngineError> {
    let hh = g.outer(h, h)?;
    update_with_outer(g, w, a_prev, hh)
}

/// `Σ_k a_k A_k`. Always recorded as `index` + `scale_by` nodes, so a
/// single memory yields the same tape with or without the router.
pub fn mix_memories<T: Scalar>(
    g: &mut Graph<T>,
    memories: &[Var],
    attention: Var,
) -> Result<Var, EngineError> {
    if g.value(attention).shape() != [memories.len()] {
        return Err(EngineError::Shape {
            op: "mix_memories",
            detail: format!(
                "{} memories, attention {:?}",
                memories.len(),
                g.value(attention).shape()
            ),
        });
    }
    let mut acc: Option<Var> = None;
    for (k, &a) in memories.iter().enumerate() {
        let w = g.index(attention, k)?;
        let term = g.scale_by(a, w)?;
        acc = Some(match acc {
            None => term,
            Some(prev) => g.add(prev, term)?,
        });
    }
    Ok(acc.expect("at least one memory"))
}

/// Retrieval `m_t = h_tᵀ Σ_k a_k A_k`.
pub fn memory_read<T: Scalar>(
    g: &mut Graph<T>,
    memories: &[Var],
    attention: Var,
    h: Var,
) -> Result<Var, EngineError> {
    let mix = mix_memories(g, memories, attention)?;
    g.matmul(h, mix)
}

fn read_stats<T: Scalar>(
    g: &mut Graph<T>,
    vars: &WeiNetVars,
    e_prev: Var,
    mix: Var,
    m: Var,
    h: Var,
) -> Result<Var, EngineError> {
    let src = match vars.stats {
        StatsWeighting::Attention => mix,
        StatsWeighting::DecayWeighted => g.hadamard(vars.update.decay(), mix)?,
    };
    let col = g.col_mean(src)?;
    let row = g.row_mean(src)?;
    let x = g.concat(&[e_prev, col, row, m, h])?;
    let z = g.matmul(vars.w_read, x)?;
    let raw = g.tanh(z);
    g.layer_norm(raw, vars.ln_gain, vars.ln_bias)
}

/// Reader: `e_t = LN(tanh(W_read [e_{t-1}; Ac_t; Ar_t; m_t; h_t]))` where
/// `Ac`/`Ar` are the column/row means of the attention-weighted memory.
pub fn reader_step<T: Scalar>(
    g: &mut Graph<T>,
    vars: &WeiNetVars,
    e_prev: Var,
    memories: &[Var],
    attention: Var,
    m: Var,
    h: Var,
) -> Result<Var, EngineError> {
    let mix = mix_memories(g, memories, attention)?;
    read_stats(g, vars, e_prev, mix, m, h)
}

fn advance<T: Scalar>(
    g: &mut Graph<T>,
    vars: &WeiNetVars,
    state: &WeiNetState,
    s: Var,
) -> Result<WeiNetState, EngineError> {
    let h = controller_step(g, vars.w_ctrl, s, state.e, state.h)?;
    let hh = g.outer(h, h)?;
    let memories = state
        .memories
        .iter()
        .map(|&a| update_with_outer(g, &vars.update, a, hh))
        .collect::<Result<Vec<_>, _>>()?;
    let attention = match vars.w_route {
        Some(w) => route(g, w, &memories, h, state.attention)?,
        None => state.attention,
    };
    let mix = mix_memories(g, &memories, attention)?;
    let m = g.matmul(h, mix)?;
    let e = read_stats(g, vars, state.e, mix, m, h)?;
    Ok(WeiNetState {
        h,
        e,
        memories,
        attention,
    })
}

/// One full step: controller, memory update, routing, read, reader, then
/// the classifier on `e_t`.
pub fn weinet_step<T: Scalar>(
    g: &mut Graph<T>,
    vars: &WeiNetVars,
    state: &WeiNetState,
    s: Var,
) -> Result<(WeiNetState, Var), EngineError> {
    let next = advance(g, vars, state, s)?;
    let logits = readout(g, vars.w_out, vars.b_out, next.e)?;
    Ok((next, logits))
}
