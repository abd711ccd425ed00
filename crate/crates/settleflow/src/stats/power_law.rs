//! Power-law fitting for discrete count distributions.

use serde::Serialize;

use super::StatError;

/// Fitted exponent for a density of the form y ∝ x^exponent.
///
/// `stderr` is the ordinary least-squares slope error in log-log space; it is
/// zero when the input lies exactly on a power law. `range` is the span of x
/// covered by the nonzero bins used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub stderr: f64,
    pub range: (f64, f64),
}

/// Least-squares power-law fit over histogram bins `(x, y)`.
///
/// Bins with nonpositive x or y are skipped; at least 3 usable bins are
/// required. The fit is ordinary least squares of log10 y on log10 x, so an
/// exactly power-law input recovers its exponent to machine precision.
pub fn fit_power_law(bins: &[(f64, f64)]) -> Result<PowerLawFit, StatError> {
    let usable: Vec<(f64, f64)> = bins
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|&(x, y)| (x.log10(), y.log10()))
        .collect();
    let m = usable.len();
    if m < 3 {
        return Err(StatError::TooFewBins { need: 3, have: m });
    }

    let mean_x = usable.iter().map(|p| p.0).sum::<f64>() / m as f64;
    let mean_y = usable.iter().map(|p| p.1).sum::<f64>() / m as f64;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if sxx == 0.0 {
        return Err(StatError::Degenerate { reason: "all bins share one x" });
    }

    let slope = sxy / sxx;
    // residuals summed directly: the moment-based shortcut cancels badly on
    // exact power-law input
    let sse: f64 = usable
        .iter()
        .map(|p| {
            let r = (p.1 - mean_y) - slope * (p.0 - mean_x);
            r * r
        })
        .sum();
    let stderr = (sse / (m as f64 - 2.0) / sxx).sqrt();

    let lo = bins.iter().map(|p| p.0).filter(|x| *x > 0.0).fold(f64::INFINITY, f64::min);
    let hi = bins.iter().map(|p| p.0).fold(0.0, f64::max);
    Ok(PowerLawFit { exponent: slope, stderr, range: (lo, hi) })
}

/// Histograms positive integer-valued samples into geometric bins.
///
/// Bins are `[lo, lo·ratio)` starting at 1. Each bin reports the geometric
/// mean of the first and last integer it covers and the count divided by the
/// number of covered integers, i.e. a density per unit, which is what a
/// power-law fit over heavy-tailed counts needs. The top bin is clipped at
/// the sample maximum. Empty bins are dropped.
pub fn log_binned_histogram(samples: &[f64], ratio: f64) -> Vec<(f64, f64)> {
    assert!(ratio > 1.0, "bin ratio must exceed 1");
    let max = samples.iter().copied().fold(0.0, f64::max);
    if max < 1.0 {
        return Vec::new();
    }

    let mut edges = vec![1u64];
    while *edges.last().expect("nonempty") <= max as u64 {
        let last = *edges.last().expect("nonempty");
        let next = ((last as f64) * ratio).ceil() as u64;
        edges.push(next.max(last + 1));
    }

    let mut counts = vec![0u64; edges.len() - 1];
    for &s in samples {
        if s < 1.0 {
            continue;
        }
        let v = s as u64;
        let bin = edges.partition_point(|&e| e <= v) - 1;
        if bin < counts.len() {
            counts[bin] += 1;
        }
    }

    let top = max as u64;
    let mut out = Vec::new();
    for (bin, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let lo = edges[bin];
        let hi = edges[bin + 1].min(top + 1);
        let width = (hi - lo) as f64;
        let center = ((lo as f64) * ((hi - 1) as f64)).sqrt();
        out.push((center, count as f64 / width));
    }
    out
}

/// Maximum-likelihood exponent for a discrete power law on a bounded support.
///
/// Maximizes the truncated discrete power-law likelihood over
/// `[n_min, max(sample)]` by golden-section search; the standard error comes
/// from the numerical observed information at the optimum.
pub fn fit_power_law_mle(samples: &[u64], n_min: u64) -> Result<PowerLawFit, StatError> {
    assert!(n_min >= 1, "support must start at 1 or above");
    let used: Vec<u64> = samples.iter().copied().filter(|&s| s >= n_min).collect();
    if used.len() < 8 {
        return Err(StatError::TooFewSamples { need: 8, have: used.len() });
    }
    let n_max = *used.iter().max().expect("nonempty");
    if n_max == n_min {
        return Err(StatError::Degenerate { reason: "all samples at one support point" });
    }

    let n = used.len() as f64;
    let sum_log: f64 = used.iter().map(|&s| (s as f64).ln()).sum();
    let log_z = |alpha: f64| -> f64 {
        (n_min..=n_max).map(|v| (v as f64).powf(alpha)).sum::<f64>().ln()
    };
    let ll = |alpha: f64| alpha * sum_log - n * log_z(alpha);

    // Golden-section maximization over a bracket wide enough for any
    // realistic count distribution.
    let (mut a, mut b) = (-6.0, -0.01);
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - phi * (b - a), a + phi * (b - a));
    let (mut fc, mut fd) = (ll(c), ll(d));
    while b - a > 1e-9 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = ll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = ll(d);
        }
    }
    let alpha = 0.5 * (a + b);

    let h = 1e-4;
    let curvature = (ll(alpha + h) - 2.0 * ll(alpha) + ll(alpha - h)) / (h * h);
    let stderr = if curvature < 0.0 { (-1.0 / curvature).sqrt() } else { f64::INFINITY };
    Ok(PowerLawFit { exponent: alpha, stderr, range: (n_min as f64, n_max as f64) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::distr::weighted::WeightedIndex;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn power_law_draws(alpha: f64, n_max: u64, draws: usize, seed: u64) -> Vec<f64> {
        let weights: Vec<f64> = (1..=n_max).map(|v| (v as f64).powf(alpha)).collect();
        let pick = WeightedIndex::new(&weights).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..draws).map(|_| (pick.sample(&mut rng) + 1) as f64).collect()
    }

    #[test]
    fn exact_input_recovers_exponent_to_machine_precision() {
        let bins: Vec<(f64, f64)> = (1..=12).map(|n| (n as f64, 1000.0 * (n as f64).powf(-1.0))).collect();
        let fit = fit_power_law(&bins).unwrap();
        assert!((fit.exponent + 1.0).abs() < 1e-12, "{}", fit.exponent);
        assert!(fit.stderr < 1e-9);

        let steeper: Vec<(f64, f64)> = (1..=12).map(|n| (n as f64, 500.0 * (n as f64).powf(-1.4))).collect();
        let fit = fit_power_law(&steeper).unwrap();
        assert!((fit.exponent + 1.4).abs() < 1e-12);
        assert_eq!(fit.range, (1.0, 12.0));
    }

    #[test]
    fn too_few_bins_is_an_error() {
        assert!(matches!(
            fit_power_law(&[(1.0, 10.0), (2.0, 5.0)]),
            Err(StatError::TooFewBins { .. })
        ));
        // zero-count bins are skipped before the check
        assert!(matches!(
            fit_power_law(&[(1.0, 10.0), (2.0, 5.0), (3.0, 0.0)]),
            Err(StatError::TooFewBins { .. })
        ));
    }

    #[test]
    fn histogram_bins_have_density_per_integer() {
        let bins = log_binned_histogram(&[1.0, 1.0, 2.0, 3.0, 4.0, 7.0], 2.0);
        assert_eq!(bins.len(), 3);
        let (c0, d0) = bins[0];
        assert_eq!((c0, d0), (1.0, 2.0));
        let (c1, d1) = bins[1];
        assert!((c1 - 6.0_f64.sqrt()).abs() < 1e-12);
        assert_eq!(d1, 1.0);
        let (c2, d2) = bins[2];
        assert!((c2 - 28.0_f64.sqrt()).abs() < 1e-12);
        assert_eq!(d2, 0.5);
    }

    #[test]
    fn sampled_exponent_is_recovered() {
        let sample = power_law_draws(-1.0, 1000, 10_000, 9);
        let bins = log_binned_histogram(&sample, 2.0);
        let fit = fit_power_law(&bins).unwrap();
        assert!((fit.exponent + 1.0).abs() < 0.15, "{}", fit.exponent);
        assert!(fit.stderr > 0.0);
    }

    #[test]
    fn mle_recovers_exponent() {
        let sample: Vec<u64> = power_law_draws(-1.4, 100, 5000, 21)
            .into_iter()
            .map(|v| v as u64)
            .collect();
        let fit = fit_power_law_mle(&sample, 1).unwrap();
        assert!((fit.exponent + 1.4).abs() < 0.15, "{}", fit.exponent);
        assert!(fit.stderr > 0.0 && fit.stderr < 0.2);
    }

    #[test]
    fn mle_rejects_degenerate_samples() {
        assert!(matches!(
            fit_power_law_mle(&[3; 20], 3),
            Err(StatError::Degenerate { .. })
        ));
        assert!(matches!(
            fit_power_law_mle(&[1, 2, 3], 1),
            Err(StatError::TooFewSamples { .. })
        ));
    }
}
