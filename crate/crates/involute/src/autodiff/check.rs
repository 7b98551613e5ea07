//! Numerical gradient verification via central differences.

use crate::error::{Error, Result};

use super::tape::{backward, Tape};
use super::tensor::Tensor;

/// Compares the reverse-mode gradient of a scalar-valued function against
/// central finite differences, coordinate by coordinate.
///
/// Returns the maximum over coordinates of
/// `|analytic - numeric| / max(1, |numeric|)`, or `None` when `x` does not
/// require a gradient (the check is undefined for constants).
///
/// `f` must evaluate the tensor it is handed; it is called once with `x`
/// itself for the analytic pass and `2 * numel` times with perturbed
/// detached copies.
pub fn finite_diff_check<F>(f: F, x: &Tensor, eps: f64) -> Result<Option<f64>>
where
    F: Fn(&mut Tape, &Tensor) -> Result<Tensor>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArg {
            op: "finite_diff_check",
            msg: format!("eps must lie in [1e-7, 1e-3], got {eps}"),
        });
    }
    if !x.requires_grad() {
        return Ok(None);
    }

    let mut tape = Tape::new();
    let y = f(&mut tape, x)?;
    if y.numel() != 1 {
        return Err(Error::InvalidArg {
            op: "finite_diff_check",
            msg: format!("f must be scalar-valued, got shape {:?}", y.shape()),
        });
    }
    let grads = backward(&tape, &y)?;
    let analytic: Vec<f64> = match grads.wrt(x) {
        Some(g) => g.data().to_vec(),
        None => vec![0.0; x.numel()],
    };

    let mut scratch = Tape::new();
    let mut max_rel = 0.0f64;
    for i in 0..x.numel() {
        let mut eval = |delta: f64| -> Result<f64> {
            let mut probe = x.detach();
            probe.data_mut()[i] += delta;
            scratch.clear();
            Ok(f(&mut scratch, &probe)?.item())
        };
        let numeric = (eval(eps)? - eval(-eps)?) / (2.0 * eps);
        let rel = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
        max_rel = max_rel.max(rel);
    }
    Ok(Some(max_rel))
}
