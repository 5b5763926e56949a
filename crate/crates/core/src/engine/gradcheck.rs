use super::{EngineError, GradientMap, ParamStore, Scalar, Tensor};

/// Central-difference gradient `(f(θ+ε) - f(θ-ε)) / 2ε` of `loss_fn` with
/// respect to every scalar of every parameter.
pub fn finite_difference_gradient<T, F>(
    mut loss_fn: F,
    params: &ParamStore<T>,
    epsilon: f64,
) -> Result<GradientMap<T>, EngineError>
where
    T: Scalar,
    F: FnMut(&ParamStore<T>) -> Result<T, EngineError>,
{
    if !(epsilon > 0.0) {
        return Err(EngineError::Precondition(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let mut probe = params.clone();
    let mut out = GradientMap::new();
    let eps = T::from_f64(epsilon);
    for id in params.ids() {
        let base = params.get(id).clone();
        let mut grad = vec![T::zero(); base.len()];
        for (idx, g) in grad.iter_mut().enumerate() {
            let orig = base.data()[idx];
            probe.get_mut(id).data_mut()[idx] = orig + eps;
            let plus = loss_fn(&probe)?;
            probe.get_mut(id).data_mut()[idx] = orig - eps;
            let minus = loss_fn(&probe)?;
            probe.get_mut(id).data_mut()[idx] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(EngineError::OracleFailure {
                    param: params.name(id).to_string(),
                    index: idx,
                });
            }
            *g = (plus - minus) / (eps + eps);
        }
        out.insert(id, Tensor::new(base.shape(), grad)?);
    }
    Ok(out)
}

/// Relative error `|a - b| / max(|a|, |b|, floor)`.
///
/// The floor keeps entries whose true gradient is (numerically) zero from
/// dominating the report.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Worst-entry comparison of one parameter's analytic and numeric gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamErrorReport {
    pub name: String,
    pub worst_relative: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

pub fn compare_gradients<T: Scalar>(
    params: &ParamStore<T>,
    analytic: &GradientMap<T>,
    numeric: &GradientMap<T>,
    floor: f64,
) -> Result<Vec<ParamErrorReport>, EngineError> {
    let mut reports = Vec::with_capacity(params.len());
    for (id, name, _) in params.iter() {
        let (Some(a), Some(n)) = (analytic.get(id), numeric.get(id)) else {
            return Err(EngineError::Contract(format!("no gradient recorded for '{name}'")));
        };
        let mut report = ParamErrorReport {
            name: name.to_string(),
            worst_relative: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for (i, (x, y)) in a.data().iter().zip(n.data()).enumerate() {
            let (x, y) = (x.as_f64(), y.as_f64());
            let r = relative_error(x, y, floor);
            let r = if r.is_nan() { f64::INFINITY } else { r };
            if r > report.worst_relative || i == 0 {
                report = ParamErrorReport {
                    name: name.to_string(),
                    worst_relative: r,
                    worst_index: i,
                    analytic: x,
                    numeric: y,
                };
            }
        }
        reports.push(report);
    }
    Ok(reports)
}
