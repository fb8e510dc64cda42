//! Central finite-difference verification of tape gradients.

use super::{Graph, Tensor, Var};
use crate::error::Result;

/// Largest relative disagreement between analytic and numeric gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter index, element index)` where the maximum occurred.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Compares backward gradients with central differences of step `h`.
///
/// `f` builds the scalar objective on a fresh double-precision tape from
/// the given parameter leaves. The error per element is
/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn grad_check<F>(params: &[Tensor<f64>], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.param(p.clone())).collect();
        let loss = f(&mut g, &vars)?;
        Ok(g.value(loss).data()[0])
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| grads.get(v)).collect();

    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for pi in 0..params.len() {
        for ei in 0..params[pi].len() {
            let orig = work[pi].data()[ei];
            work[pi].data_mut()[ei] = orig + h;
            let up = eval(&work)?;
            work[pi].data_mut()[ei] = orig - h;
            let down = eval(&work)?;
            work[pi].data_mut()[ei] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[pi].data()[ei];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (pi, ei);
            }
        }
    }
    Ok(report)
}
