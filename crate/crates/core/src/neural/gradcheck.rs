use super::params::ParameterStore;
use crate::Real;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: Real,
    /// Denominator floor for relative errors; pairs where both gradients are
    /// below it are compared in absolute terms.
    pub floor: Real,
    /// Check at most this many coordinates per parameter (evenly strided).
    pub max_coords: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            floor: 1e-6,
            max_coords: None,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    /// Worst relative error per parameter, in registration order.
    pub per_param: Vec<(String, Real)>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> Real {
        self.per_param.iter().map(|(_, e)| *e).fold(0.0, Real::max)
    }
}

pub fn relative_error(analytic: Real, numeric: Real, floor: Real) -> Real {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Compares analytic gradients against central finite differences.
///
/// `loss_fn` must compute the loss at the store's current values and
/// accumulate its analytic gradient into the store. It must be deterministic.
pub fn grad_check<F>(store: &mut ParameterStore, mut loss_fn: F, cfg: &GradCheckConfig) -> GradCheckReport
where
    F: FnMut(&mut ParameterStore) -> Real,
{
    store.zero_grads();
    loss_fn(store);
    let analytic: Vec<Vec<Real>> = store.iter().map(|(_, p)| p.grad.data().to_vec()).collect();

    let mut report = GradCheckReport::default();
    let ids: Vec<_> = store.iter().map(|(id, p)| (id, p.name.clone())).collect();
    for (id, name) in ids {
        let n = store.value(id).len();
        let stride = match cfg.max_coords {
            Some(k) if k > 0 && n > k => n.div_ceil(k),
            _ => 1,
        };
        let mut worst: Real = 0.0;
        for k in (0..n).step_by(stride) {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + cfg.eps;
            let plus = loss_fn(store);
            store.value_mut(id).data_mut()[k] = orig - cfg.eps;
            let minus = loss_fn(store);
            store.value_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            worst = worst.max(relative_error(analytic[id.index()][k], numeric, cfg.floor));
        }
        report.per_param.push((name, worst));
    }
    store.zero_grads();
    report
}
