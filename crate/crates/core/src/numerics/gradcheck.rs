//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;

use super::params::ParamStore;
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Denominator floor for the relative error; below it the comparison is
    /// effectively absolute.
    pub floor: f64,
    /// Check at most this many coordinates, sampled without replacement.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            floor: 1e-6,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<(String, usize, f64, f64)>,
    pub checked: usize,
}

/// `loss_fn` must return the loss and accumulate its gradient into the
/// store's gradient buffers. Gradients are zeroed before every call.
pub fn grad_check<F>(params: &mut ParamStore, options: GradCheckOptions, mut loss_fn: F) -> GradCheckReport
where
    F: FnMut(&mut ParamStore) -> f64,
{
    params.zero_grad();
    loss_fn(params);
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad.clone()).collect();
    params.zero_grad();

    let n = params.n_coords();
    let coords: Vec<usize> = match options.max_coords {
        Some(k) if k < n => {
            let mut rng = rng_from(options.seed, &[0x6763]);
            let mut c = sample(&mut rng, n, k).into_vec();
            c.sort_unstable();
            c
        }
        _ => (0..n).collect(),
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for flat in coords {
        let (id, off) = params.locate(flat).expect("coordinate in range");
        let original = params.value(id)[off];
        params.value_mut(id)[off] = original + options.epsilon;
        let plus = loss_fn(params);
        params.zero_grad();
        params.value_mut(id)[off] = original - options.epsilon;
        let minus = loss_fn(params);
        params.zero_grad();
        params.value_mut(id)[off] = original;

        let numeric = (plus - minus) / (2.0 * options.epsilon);
        let a = analytic[id.index()][off];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(options.floor);
        report.checked += 1;
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((params.get(id).name.clone(), off, a, numeric));
        }
    }
    for (p, g) in params.iter_mut().zip(analytic) {
        p.grad = g;
    }
    report
}
