use super::{Graph, NodeId, Tensor};
use crate::{Error, Result};

/// `|a − n| / max(1e−8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    libm::fabs(analytic - numeric) / f64::max(1e-8, libm::fabs(analytic) + libm::fabs(numeric))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat coordinate where the worst error occurred.
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares the reverse-mode gradient of a scalar function against central
/// differences at every coordinate of `point`.
///
/// `f` receives a fresh graph and the variable node holding the point and
/// must return a one-element node.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&mut Graph<'g>, NodeId) -> Result<NodeId>,
{
    let eval = |x: &Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let v = g.variable_ref(x);
        let out = f(&mut g, v)?;
        g.value(out).item().ok_or_else(|| Error::NotScalar(g.value(out).shape().into()))
    };

    let mut g = Graph::new();
    let v = g.variable_ref(point);
    let out = f(&mut g, v)?;
    let grads = g.backward(out)?;
    let analytic = grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(point.shape()));

    let mut report = GradCheckReport { max_relative_error: 0.0, worst_index: 0, checked: 0 };
    let mut probe = point.clone();
    for i in 0..point.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(analytic.data()[i], numeric);
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_index = i;
        }
        report.checked += 1;
    }
    Ok(report)
}
