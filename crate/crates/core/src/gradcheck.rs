//! Central finite-difference gradient checking.
//!
//! The numerical side never touches [`Graph::backward`]: it only re-evaluates
//! the forward closure with perturbed parameter copies.

use crate::tape::{Graph, ParamId, ParamStore, Var};

#[derive(Clone, Debug)]
pub struct FdOptions {
    /// Perturbation half-width.
    pub step: f64,
    /// Denominator floor for the relative error, so gradients that are
    /// numerically zero are compared in absolute terms.
    pub floor: f64,
    /// Only check these parameters (all when empty).
    pub only: Vec<ParamId>,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-6,
            only: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct FdReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Worst offender: (parameter name, flat index, analytic, numeric).
    pub worst: Option<(String, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Derivative of a scalar function by central differences.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

/// Compares backprop gradients of `build`'s scalar output against central
/// differences for every scalar of every selected parameter.
pub fn check_params<F>(store: &ParamStore, build: F, options: &FdOptions) -> FdReport
where
    F: Fn(&ParamStore, &mut Graph) -> Var,
{
    let mut g = Graph::new();
    let loss = build(store, &mut g);
    let grads = g.backward(loss).for_store(store);

    let eval = |s: &ParamStore| {
        let mut g = Graph::new();
        let out = build(s, &mut g);
        g.scalar(out)
    };

    let mut report = FdReport::default();
    let mut probe = store.clone();
    for id in store.ids() {
        if !options.only.is_empty() && !options.only.contains(&id) {
            continue;
        }
        let n = store.get(id).len();
        for flat in 0..n {
            let original = store.get(id).as_slice().expect("standard layout")[flat];
            probe.get_mut(id).as_slice_mut().unwrap()[flat] = original + options.step;
            let plus = eval(&probe);
            probe.get_mut(id).as_slice_mut().unwrap()[flat] = original - options.step;
            let minus = eval(&probe);
            probe.get_mut(id).as_slice_mut().unwrap()[flat] = original;

            let numeric = (plus - minus) / (2.0 * options.step);
            let analytic = grads[id.0].as_slice().unwrap()[flat];
            let err = relative_error(analytic, numeric, options.floor);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= report.max_rel_error {
                    report.worst = Some((store.name(id).to_string(), flat, analytic, numeric));
                }
            }
        }
    }
    report
}
