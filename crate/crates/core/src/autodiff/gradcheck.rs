use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter index, entry index)` of the worst entry.
    pub worst: (usize, usize),
    /// Analytic and central-difference values at `worst`.
    pub worst_values: (f64, f64),
    pub entries_checked: usize,
}

/// `|a - n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Checks the gradient of the scalar built by `build` with respect to every
/// entry of every tensor in `params` against central differences with step
/// `eps`.
///
/// `build` receives a fresh graph and one leaf per parameter, in order.
pub fn grad_check<F>(build: F, params: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param(format!(
            "grad_check eps must be positive, got {eps}"
        )));
    }

    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.leaf(p.clone())).collect();
        let loss = build(&mut g, &vars)?;
        Ok(g.value(loss).data()[0])
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let grads = g.backward(loss)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        worst_values: (0.0, 0.0),
        entries_checked: 0,
    };
    let mut probe = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var);
        for ei in 0..params[pi].len() {
            let original = params[pi].data()[ei];
            probe[pi].data_mut()[ei] = original + eps;
            let plus = eval(&probe)?;
            probe[pi].data_mut()[ei] = original - eps;
            let minus = eval(&probe)?;
            probe[pi].data_mut()[ei] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(analytic.data()[ei], numeric);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (pi, ei);
                report.worst_values = (analytic.data()[ei], numeric);
            }
            report.entries_checked += 1;
        }
    }
    Ok(report)
}
