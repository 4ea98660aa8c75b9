use super::array::Array;
use super::params::{ParamId, ParamSet};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index where the worst error occurred.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares tape gradients against central finite differences for every
/// scalar of every parameter. Uses the five-point stencil, whose O(epsilon^4)
/// truncation error allows a step large enough to keep rounding noise small.
///
/// `loss` must build a deterministic scalar on the tape it is handed.
/// Relative error is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(params: &ParamSet<f64>, epsilon: f64, loss: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var>,
{
    let eval = |p: &ParamSet<f64>| -> Result<f64> {
        let mut tape = Tape::new(p);
        let out = loss(&mut tape)?;
        let v = tape.value(out).data()[0];
        if !v.is_finite() {
            return Err(Error::NonFinite("grad_check loss".into()));
        }
        Ok(v)
    };

    let analytic: Vec<Option<Array<f64>>> = {
        let mut tape = Tape::new(params);
        let out = loss(&mut tape)?;
        if !tape.value(out).data()[0].is_finite() {
            return Err(Error::NonFinite("grad_check loss".into()));
        }
        let grads = tape.backward(out)?;
        params.ids().map(|id| grads.param(id).cloned()).collect()
    };

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
    };
    for id in params.ids() {
        for k in 0..params.get(id).len() {
            let orig = params.get(id).data()[k];
            let mut at = |offset: f64| -> Result<f64> {
                work.get_mut(id).data_mut()[k] = orig + offset;
                eval(&work)
            };
            let (p1, m1) = (at(epsilon)?, at(-epsilon)?);
            let (p2, m2) = (at(2.0 * epsilon)?, at(-2.0 * epsilon)?);
            work.get_mut(id).data_mut()[k] = orig;

            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * epsilon);
            let exact = analytic[id.0].as_ref().map_or(0.0, |g| g.data()[k]);
            let err = relative_error(exact, numeric);
            report.checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((params.name(ParamId(id.0)).to_string(), k));
            }
        }
    }
    Ok(report)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}
