//! Gaussian mixture fitting on 1-D samples by expectation-maximization.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use super::StatError;

const MAX_ITERATIONS: usize = 500;
const LL_TOLERANCE: f64 = 1e-8;
const RESTARTS: usize = 8;
const VARIANCE_FLOOR: f64 = 1e-12;
// Above this size the sample is histogrammed before EM; with this bin width
// the induced error on fitted means is below 1e-3, far inside the fit noise,
// while iteration cost stops scaling with sample size.
const BIN_THRESHOLD: usize = 5000;
const BIN_WIDTH: f64 = 2e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GmmComponent {
    pub mean: f64,
    pub variance: f64,
    pub weight: f64,
}

/// Mixture fit result; components are ordered by ascending mean and weights
/// sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmmFit {
    pub components: Vec<GmmComponent>,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Log-likelihood after each iteration of the winning restart;
    /// non-decreasing up to rounding.
    #[serde(skip)]
    pub log_likelihood_trace: Vec<f64>,
}

/// Fits a k-component Gaussian mixture to a 1-D sample by EM.
///
/// Runs `RESTARTS` seeded restarts initialized from random sample points and
/// keeps the best final log-likelihood. A restart stops when the
/// log-likelihood gain drops below 1e-8 or after 500 iterations; a component
/// whose variance collapses below 1e-12 aborts the restart. Deterministic
/// given the seed.
pub fn fit_gmm(values: &[f64], k: usize, seed: u64) -> Result<GmmFit, StatError> {
    let n = values.len();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatError::NonFiniteSample);
    }
    if n < 10 {
        return Err(StatError::TooFewSamples { need: 10, have: n });
    }
    if k < 1 || n < 2 * k {
        return Err(StatError::BadMixtureOrder { k, n });
    }

    let points = weighted_points(values);
    let total_weight: f64 = points.iter().map(|p| p.1).sum();
    let global_mean = points.iter().map(|p| p.0 * p.1).sum::<f64>() / total_weight;
    let global_var = (points.iter().map(|p| (p.0 - global_mean).powi(2) * p.1).sum::<f64>()
        / total_weight)
        .max(VARIANCE_FLOOR * 10.0);

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let picker = WeightedIndex::new(points.iter().map(|p| p.1)).expect("positive weights");

    let mut best: Option<GmmFit> = None;
    for _ in 0..RESTARTS {
        let mut means: Vec<f64> = (0..k).map(|_| points[picker.sample(&mut rng)].0).collect();
        spread_collisions(&mut means, global_var.sqrt());
        if let Some(fit) = run_restart(&points, total_weight, means, global_var, k) {
            if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
                best = Some(fit);
            }
        }
    }

    let mut fit = best.ok_or(StatError::MixtureCollapsed)?;
    fit.components.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    Ok(fit)
}

/// Collapses large samples onto a fixed grid so EM cost is bounded by the
/// number of occupied bins instead of the sample size.
fn weighted_points(values: &[f64]) -> Vec<(f64, f64)> {
    if values.len() <= BIN_THRESHOLD {
        return values.iter().map(|&v| (v, 1.0)).collect();
    }
    let mut bins = std::collections::BTreeMap::new();
    for &v in values {
        let key = (v / BIN_WIDTH).floor() as i64;
        *bins.entry(key).or_insert(0.0_f64) += 1.0;
    }
    bins.into_iter().map(|(key, count)| ((key as f64 + 0.5) * BIN_WIDTH, count)).collect()
}

fn spread_collisions(means: &mut [f64], sigma: f64) {
    means.sort_by(f64::total_cmp);
    for i in 1..means.len() {
        if means[i] - means[i - 1] < 1e-9 {
            means[i] = means[i - 1] + 0.25 * sigma.max(1e-6);
        }
    }
}

fn run_restart(
    points: &[(f64, f64)],
    total_weight: f64,
    means: Vec<f64>,
    init_variance: f64,
    k: usize,
) -> Option<GmmFit> {
    let mut comps: Vec<GmmComponent> = means
        .into_iter()
        .map(|mean| GmmComponent { mean, variance: init_variance, weight: 1.0 / k as f64 })
        .collect();

    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    let mut resp = vec![0.0; k];
    for iteration in 1..=MAX_ITERATIONS {
        // Fused E and M step: responsibilities feed running sums around the
        // current means, which keeps the variance update cancellation-free.
        let mut sw = vec![0.0; k];
        let mut swd = vec![0.0; k];
        let mut swd2 = vec![0.0; k];
        let mut ll = 0.0;
        let log_norm: Vec<f64> = comps
            .iter()
            .map(|c| c.weight.ln() - 0.5 * (2.0 * std::f64::consts::PI * c.variance).ln())
            .collect();

        for &(x, w) in points {
            let mut max_log = f64::NEG_INFINITY;
            for (c, comp) in comps.iter().enumerate() {
                let d = x - comp.mean;
                let log_p = log_norm[c] - d * d / (2.0 * comp.variance);
                resp[c] = log_p;
                if log_p > max_log {
                    max_log = log_p;
                }
            }
            let mut sum = 0.0;
            for r in resp.iter_mut() {
                *r = (*r - max_log).exp();
                sum += *r;
            }
            ll += w * (max_log + sum.ln());
            for (c, comp) in comps.iter().enumerate() {
                let r = w * resp[c] / sum;
                let d = x - comp.mean;
                sw[c] += r;
                swd[c] += r * d;
                swd2[c] += r * d * d;
            }
        }

        for c in 0..k {
            if sw[c] < total_weight * 1e-12 {
                return None;
            }
            let shift = swd[c] / sw[c];
            let variance = swd2[c] / sw[c] - shift * shift;
            if variance < VARIANCE_FLOOR {
                return None;
            }
            comps[c] = GmmComponent {
                mean: comps[c].mean + shift,
                variance,
                weight: sw[c] / total_weight,
            };
        }

        trace.push(ll);
        if ll - prev_ll < LL_TOLERANCE && iteration > 1 {
            return Some(GmmFit {
                components: comps,
                log_likelihood: ll,
                iterations: iteration,
                log_likelihood_trace: trace,
            });
        }
        prev_ll = ll;
    }

    Some(GmmFit {
        components: comps,
        log_likelihood: prev_ll,
        iterations: MAX_ITERATIONS,
        log_likelihood_trace: trace,
    })
}
