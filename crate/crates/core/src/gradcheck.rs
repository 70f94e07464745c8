//! Central finite-difference checks of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::tensor::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub probes: usize,
    /// Probes where both gradients were ~0, so no relative error is defined.
    pub skipped: usize,
}

/// Below this magnitude a probe carries no information about relative error.
pub const ZERO_GRADIENT: f64 = 1e-9;

pub fn relative_error(analytic: f64, numeric: f64) -> Option<f64> {
    let scale = analytic.abs().max(numeric.abs());
    if scale < ZERO_GRADIENT {
        None
    } else {
        Some((analytic - numeric).abs() / scale)
    }
}

/// Compares `grads` against `(loss(θ+ε) − loss(θ−ε)) / 2ε` on random coordinates
/// until `probes` informative probes have been taken (or the budget runs out).
pub fn check_gradients<T: Scalar>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    mut loss: impl FnMut(&ParamSet<T>) -> T,
    eps: f64,
    probes: usize,
    seed: u64,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = params.tensors.iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        probes: 0,
        skipped: 0,
    };
    let budget = probes * 50;
    let mut attempts = 0;
    while report.probes < probes && attempts < budget && total > 0 {
        attempts += 1;
        let mut flat = rng.random_range(0..total);
        let mut ti = 0;
        while flat >= sizes[ti] {
            flat -= sizes[ti];
            ti += 1;
        }
        let orig = params.tensors[ti].data[flat];
        params.tensors[ti].data[flat] = orig + T::lit(eps);
        let up = loss(params).as_f64();
        params.tensors[ti].data[flat] = orig - T::lit(eps);
        let down = loss(params).as_f64();
        params.tensors[ti].data[flat] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let analytic = grads.tensors[ti].data[flat].as_f64();
        match relative_error(analytic, numeric) {
            Some(r) => {
                report.probes += 1;
                report.max_relative_error = report.max_relative_error.max(r);
            }
            None => report.skipped += 1,
        }
    }
    report
}
