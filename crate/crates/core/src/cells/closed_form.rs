//! Closed-form unroll of the memory recurrence without the cross-talk term:
//! `A_T = W_h ⊙ Σ_t W_A^{⊙(T-t)} ⊙ (h_t ⊗ h_t)` with `A_0 = 0`.

use crate::engine::{EngineError, Scalar, Tensor};

/// Evaluates the unrolled sum directly from `h_1..h_T`. Passing a `w_ah`
/// with any nonzero entry is a contract error: the closed form only holds
/// without cross-talk.
pub fn unrolled_memory_closed_form<T: Scalar>(
    w_a: &Tensor<T>,
    w_h: &Tensor<T>,
    w_ah: Option<&Tensor<T>>,
    hs: &[Tensor<T>],
) -> Result<Tensor<T>, EngineError> {
    if let Some(cross) = w_ah {
        if cross.data().iter().any(|v| *v != T::zero()) {
            return Err(EngineError::Contract(
                "closed-form unroll requires W_AH = 0".into(),
            ));
        }
    }
    if w_a.rank() != 2 || w_a.shape() != w_h.shape() || w_a.shape()[0] != w_a.shape()[1] {
        return Err(EngineError::Shape {
            op: "closed_form",
            detail: format!("W_A {:?} and W_h {:?} must be equal square matrices", w_a.shape(), w_h.shape()),
        });
    }
    let n = w_a.shape()[0];
    let steps = hs.len();
    let mut out = vec![T::zero(); n * n];
    for (t, h) in hs.iter().enumerate() {
        if h.shape() != [n] {
            return Err(EngineError::Shape {
                op: "closed_form",
                detail: format!("h_{} has shape {:?}, expected [{n}]", t + 1, h.shape()),
            });
        }
        let power = (steps - 1 - t) as i32;
        let hv = h.data();
        for r in 0..n {
            for c in 0..n {
                let k = r * n + c;
                out[k] += w_a.data()[k].powi(power) * hv[r] * hv[c];
            }
        }
    }
    for (o, w) in out.iter_mut().zip(w_h.data()) {
        *o *= *w;
    }
    Tensor::new(&[n, n], out)
}
