//! Verification suites: finite-difference gradient checks for every cell
//! family and the closed-form and fast-weights oracles for the memory
//! recurrence.

use crate::cells::{
    fastweights_memory_update, memory_update, unrolled_memory_closed_form, weinet_step, Family,
    Model, ModelConfig, Recurrent, UpdateVariant, UpdateWeights, WeiNet,
};
use crate::engine::{
    compare_gradients, finite_difference_gradient, rng, EngineError, Graph, OpKind, ParamErrorReport,
    ParamStore, Tensor,
};
use rand::Rng;

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_EPSILON: f64 = 1e-5;
/// Denominator floor of the relative error.
pub const GRADCHECK_FLOOR: f64 = 1e-6;
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-10;
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;

const CHECK_HIDDEN: usize = 6;
const CHECK_INPUT: usize = 5;
const CHECK_STEPS: usize = 4;
const CHECK_BATCH: usize = 2;

/// One line of a suite report.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub label: String,
    pub worst: f64,
    pub tolerance: f64,
    /// Per-parameter breakdown (gradient checks only).
    pub params: Vec<ParamErrorReport>,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.worst < self.tolerance
    }
}

/// A family/variant combination covered by the gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckCase {
    pub label: &'static str,
    pub config: ModelConfig,
}

fn case(label: &'static str, family: Family, variant: UpdateVariant, memories: usize) -> GradcheckCase {
    GradcheckCase {
        label,
        config: ModelConfig {
            family,
            hidden: CHECK_HIDDEN,
            input: CHECK_INPUT,
            output: CHECK_INPUT,
            variant,
            memories,
            router: memories > 1,
            ..ModelConfig::default()
        },
    }
}

pub fn gradcheck_cases() -> Vec<GradcheckCase> {
    use Family::*;
    use UpdateVariant::*;
    vec![
        case("weinet-fullmatrix", WeiNet, FullMatrix, 1),
        case("weinet-rowcol", WeiNet, RowCol, 1),
        case("weinet-gated", WeiNet, Gated, 1),
        case("weinet-crossbitdot", WeiNet, CrossBitDot, 1),
        case("weinet-rowcol-router-k2", WeiNet, RowCol, 2),
        case("fw-ln", FastWeights, RowCol, 1),
        case("lstm", Lstm, RowCol, 1),
        case("rhn", Rhn, RowCol, 1),
    ]
}

/// Random `(inputs, target)` pairs for the check batch.
fn check_batch(seed: u64) -> Vec<(Vec<usize>, usize)> {
    let mut r = rng::stream(seed, 7);
    (0..CHECK_BATCH)
        .map(|_| {
            let xs = (0..CHECK_STEPS).map(|_| r.random_range(0..CHECK_INPUT)).collect();
            (xs, r.random_range(0..CHECK_INPUT))
        })
        .collect()
}

fn batch_loss(
    model: &Model<f64>,
    store: &ParamStore<f64>,
    batch: &[(Vec<usize>, usize)],
    fault: Option<OpKind>,
) -> Result<(f64, Graph<f64>, crate::engine::Var), EngineError> {
    let mut g = Graph::new();
    if let Some(kind) = fault {
        g.inject_backward_fault(kind);
    }
    let params = g.bind(store);
    let mut total = None;
    for (xs, t) in batch {
        let steps = xs
            .iter()
            .map(|&i| Ok(g.constant(Tensor::one_hot(model.config().input, i)?)))
            .collect::<Result<Vec<_>, EngineError>>()?;
        let logits = model.final_logits(&mut g, &params, &steps)?;
        let l = g.cross_entropy(logits, *t)?;
        total = Some(match total {
            None => l,
            Some(acc) => g.add(acc, l)?,
        });
    }
    let loss = g.scale(total.expect("non-empty batch"), 1.0 / batch.len() as f64);
    Ok((g.value(loss).item(), g, loss))
}

/// Compares reverse-mode gradients of the mean batch loss with central
/// differences. `fault` corrupts one backward rule of the analytic pass.
pub fn run_gradcheck(
    case: &GradcheckCase,
    seed: u64,
    fault: Option<OpKind>,
) -> Result<CheckRow, EngineError> {
    let model = Model::<f64>::init(&case.config, seed)
        .map_err(|e| EngineError::Precondition(e.to_string()))?;
    let batch = check_batch(seed);
    let store = model.params().clone();
    let (_, g, loss) = batch_loss(&model, &store, &batch, fault)?;
    let analytic = g.backward(loss)?;
    let numeric = finite_difference_gradient(
        |p| batch_loss(&model, p, &batch, None).map(|r| r.0),
        &store,
        GRADCHECK_EPSILON,
    )?;
    let params = compare_gradients(&store, &analytic, &numeric, GRADCHECK_FLOOR)?;
    let worst = params.iter().map(|p| p.worst_relative).fold(0.0, f64::max);
    Ok(CheckRow {
        label: case.label.to_string(),
        worst,
        tolerance: GRADCHECK_TOLERANCE,
        params,
    })
}

pub fn gradcheck_suite(seed: u64, fault: Option<OpKind>) -> Result<Vec<CheckRow>, EngineError> {
    gradcheck_cases().iter().map(|c| run_gradcheck(c, seed, fault)).collect()
}

fn gaussian(r: &mut rng::Stream, shape: &[usize], mean: f64, std: f64) -> Tensor<f64> {
    Tensor::gaussian(shape, mean, std, r).expect("valid shape")
}

/// `A_T` from `T` recorded memory updates with `W_AH = 0`.
fn recurrent_memory(w_a: &Tensor<f64>, w_h: &Tensor<f64>, hs: &[Tensor<f64>]) -> Result<Tensor<f64>, EngineError> {
    let n = w_a.shape()[0];
    let mut g = Graph::new();
    let w = UpdateWeights::Hadamard {
        decay: g.constant(w_a.clone()),
        write: g.constant(w_h.clone()),
        cross: g.constant(Tensor::zeros(&[n, n])?),
    };
    let mut a = g.constant(Tensor::zeros(&[n, n])?);
    for h in hs {
        let hv = g.constant(h.clone());
        a = memory_update(&mut g, &w, a, hv)?;
    }
    Ok(g.value(a).clone())
}

/// Worst `|A_T(recurrence) - A_T(closed form)|` over one instance.
pub fn closed_form_gap(hidden: usize, steps: usize, r: &mut rng::Stream) -> Result<f64, EngineError> {
    let w_a = gaussian(r, &[hidden, hidden], 0.9, 0.1);
    let w_h = gaussian(r, &[hidden, hidden], 0.5, 0.1);
    let hs: Vec<_> = (0..steps).map(|_| gaussian(r, &[hidden], 0.0, 0.5).map(f64::tanh)).collect();
    let recurrent = recurrent_memory(&w_a, &w_h, &hs)?;
    let closed = unrolled_memory_closed_form(&w_a, &w_h, None, &hs)?;
    Ok(recurrent.max_abs_diff(&closed))
}

/// `instances` random cases with `T ≤ 20`, `H ≤ 8`; the last is always the
/// `T = 20`, `H = 8` stress case.
pub fn closed_form_suite(instances: usize, seed: u64) -> Result<CheckRow, EngineError> {
    let mut r = rng::stream(seed, 11);
    let mut worst = 0.0f64;
    for i in 0..instances {
        let (h, t) = if i + 1 == instances {
            (8, 20)
        } else {
            (r.random_range(1..=8), r.random_range(1..=20))
        };
        worst = worst.max(closed_form_gap(h, t, &mut r)?);
    }
    Ok(CheckRow {
        label: format!("closed-form unroll ({instances} instances, T<=20, H<=8)"),
        worst,
        tolerance: CLOSED_FORM_TOLERANCE,
        params: vec![],
    })
}

/// Runs a WeiNet with constant update weights `W_A ≡ λ`, `W_h ≡ η`,
/// `W_AH ≡ 0` for `steps` steps and replays its controller states through
/// the scalar fast-weights rule. Returns the worst memory difference.
pub fn degeneracy_gap(steps: usize, seed: u64, lambda: f64, eta: f64) -> Result<f64, EngineError> {
    let config = ModelConfig {
        family: Family::WeiNet,
        hidden: 8,
        input: 6,
        output: 6,
        variant: UpdateVariant::FullMatrix,
        ..ModelConfig::default()
    };
    let mut net = WeiNet::<f64>::init(&config, seed).map_err(|e| EngineError::Precondition(e.to_string()))?;
    let n = config.hidden;
    for (name, v) in [("update.w_a", lambda), ("update.w_h", eta), ("update.w_ah", 0.0)] {
        let id = net.params().id_of(name).expect("full-matrix layout");
        net.params_mut().set(id, Tensor::filled(&[n, n], v)?)?;
    }
    let mut r = rng::stream(seed, 13);
    let mut g = Graph::new();
    let params = g.bind(net.params());
    let vars = net.vars(&mut g, &params)?;
    let mut state = net.initial_state(&mut g);
    let mut fw = g.constant(Tensor::zeros(&[n, n])?);
    let (lam, et) = (lambda, eta);
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let s = g.constant(Tensor::one_hot(config.input, r.random_range(0..config.input))?);
        let (next, _) = weinet_step(&mut g, &vars, &state, s)?;
        fw = fastweights_memory_update(&mut g, lam, et, fw, next.h)?;
        worst = worst.max(g.value(next.memories[0]).max_abs_diff(g.value(fw)));
        state = next;
    }
    Ok(worst)
}

pub fn degeneracy_suite(steps: usize, seed: u64) -> Result<CheckRow, EngineError> {
    Ok(CheckRow {
        label: format!("weinet -> fast-weights degeneracy (T={steps}, lambda=0.9, eta=0.5)"),
        worst: degeneracy_gap(steps, seed, 0.9, 0.5)?,
        tolerance: DEGENERACY_TOLERANCE,
        params: vec![],
    })
}

/// Closed-form suite (50 instances), a dedicated `T = 20` stress row and
/// the degeneracy check over 50 steps.
pub fn oracle_suite(seed: u64) -> Result<Vec<CheckRow>, EngineError> {
    let mut stress_rng = rng::stream(seed, 12);
    let stress = closed_form_gap(8, 20, &mut stress_rng)?;
    Ok(vec![
        closed_form_suite(50, seed)?,
        CheckRow {
            label: "closed-form unroll stress (T=20, H=8)".into(),
            worst: stress,
            tolerance: CLOSED_FORM_TOLERANCE,
            params: vec![],
        },
        degeneracy_suite(50, seed)?,
    ])
}
