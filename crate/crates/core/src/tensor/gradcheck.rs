//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::Tensor;

/// Scalar value of an objective at some parameter point, plus the
/// fingerprint of its piecewise-linear region (see [`super::Graph::fingerprint`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub loss: f64,
    pub fingerprint: u64,
}

/// A scalar function of a list of parameter tensors with an analytic gradient.
pub trait Objective {
    fn probe(&self, params: &[Tensor]) -> Probe;
    fn gradient(&self, params: &[Tensor]) -> Vec<Vec<f64>>;
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Denominator floor of the relative error, so that coordinates whose
    /// true derivative is ~0 are compared absolutely.
    pub abs_floor: f64,
    /// Check at most this many coordinates per tensor (sampled); `None` checks all.
    pub max_per_group: Option<usize>,
    pub seed: u64,
    /// How many times `eps` is divided by ten when a perturbation crosses a
    /// ReLU kink or flips a max selection, before the coordinate is skipped.
    pub retries: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            abs_floor: 1e-6,
            max_per_group: None,
            seed: 0,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupError {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation could not avoid a kink.
    pub skipped: usize,
    pub groups: Vec<GroupError>,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `objective.gradient` against `(f(θ+ε) − f(θ−ε)) / 2ε` coordinate by coordinate.
pub fn grad_check<O: Objective + ?Sized>(
    objective: &O,
    params: &[Tensor],
    names: &[String],
    cfg: &GradCheckConfig,
) -> GradCheckReport {
    assert_eq!(params.len(), names.len(), "one name per parameter tensor");
    let analytic = objective.gradient(params);
    let base = objective.probe(params).fingerprint;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut work: Vec<Tensor> = params.to_vec();
    let mut groups = Vec::with_capacity(params.len());

    for (t, name) in names.iter().enumerate() {
        let n = params[t].len();
        let coords: Vec<usize> = match cfg.max_per_group {
            Some(k) if k < n => {
                let mut v = sample(&mut rng, n, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        let mut group = GroupError {
            name: name.clone(),
            checked: 0,
            skipped: 0,
            max_rel_error: 0.0,
        };
        for &i in &coords {
            let original = params[t].data()[i];
            let mut eps = cfg.eps;
            let mut numeric = None;
            for _ in 0..=cfg.retries {
                work[t].data_mut()[i] = original + eps;
                let plus = objective.probe(&work);
                work[t].data_mut()[i] = original - eps;
                let minus = objective.probe(&work);
                if plus.fingerprint == base && minus.fingerprint == base {
                    numeric = Some((plus.loss - minus.loss) / (2.0 * eps));
                    break;
                }
                eps /= 10.0;
            }
            work[t].data_mut()[i] = original;
            match numeric {
                Some(num) => {
                    let err = relative_error(analytic[t][i], num, cfg.abs_floor);
                    group.max_rel_error = group.max_rel_error.max(err);
                    group.checked += 1;
                }
                None => group.skipped += 1,
            }
        }
        groups.push(group);
    }
    GradCheckReport {
        max_rel_error: groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max),
        checked: groups.iter().map(|g| g.checked).sum(),
        skipped: groups.iter().map(|g| g.skipped).sum(),
        groups,
    }
}
