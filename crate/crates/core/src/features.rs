//! Higher-order statistical features of a raw signal recording.
//!
//! Every recording is reduced to the same seven scalars, in this order:
//! mean, variance, Shannon entropy, second central moment, skewness,
//! kurtosis, and maximum normalized cross-correlation against a template.
//!
//! Conventions:
//! - moments use the population (1/n) normalization, so variance and the
//!   second central moment coincide numerically;
//! - skewness and kurtosis are the standardized third and fourth central
//!   moments (kurtosis is not excess kurtosis); both are 0 for a
//!   zero-variance signal;
//! - entropy is in bits over equal-width bins spanning `[min, max]`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ENTROPY_BINS: usize = 256;

pub const FEATURE_NAMES: [&str; 7] = [
    "mean",
    "variance",
    "shannon_entropy",
    "second_central_moment",
    "skewness",
    "kurtosis",
    "max_cross_correlation",
];

/// A raw amplitude recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecording {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl SignalRecording {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("empty signal"));
        }
        if samples.len() < 2 {
            return Err(Error::invalid("signal must contain at least 2 samples"));
        }
        if let Some(pos) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {pos}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Recording with an unspecified sample rate (stored as 0).
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, 0.0)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One observation of an object: `m` named scalar features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
    names: Vec<String>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("feature vector must have at least one feature"));
        }
        if values.len() != names.len() {
            return Err(Error::invalid(format!(
                "{} values but {} feature names",
                values.len(),
                names.len()
            )));
        }
        if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite feature at index {pos}")));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate feature name `{name}`")));
            }
        }
        Ok(Self { values, names })
    }

    /// Vector with generated names `f0, f1, ...`.
    pub fn unnamed(values: Vec<f64>) -> Result<Self> {
        let names = default_feature_names(values.len());
        Self::new(values, names)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn default_feature_names(m: usize) -> Vec<String> {
    (0..m).map(|j| format!("f{j}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Moments {
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

fn central_moments(x: &[f64]) -> Moments {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    Moments {
        mean,
        m2: m2 / n,
        m3: m3 / n,
        m4: m4 / n,
    }
}

// Below this the second moment is rounding residue of a constant signal.
fn is_degenerate_variance(x: &[f64], m2: f64) -> bool {
    let scale = x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    m2 <= (f64::EPSILON * scale).powi(2) * x.len() as f64
}

/// Shannon entropy in bits of the sample histogram with `num_bins`
/// equal-width bins over `[min, max]`.
pub fn shannon_entropy(signal: &SignalRecording, num_bins: usize) -> Result<f64> {
    if num_bins == 0 {
        return Err(Error::invalid("num_bins must be at least 1"));
    }
    let x = signal.samples();
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let width = hi - lo;
    if width <= 0.0 {
        return Ok(0.0);
    }
    let mut counts = vec![0usize; num_bins];
    for &v in x {
        let idx = (((v - lo) / width) * num_bins as f64).floor() as usize;
        counts[idx.min(num_bins - 1)] += 1;
    }
    Ok(entropy_of_counts(&counts))
}

fn entropy_of_counts(counts: &[usize]) -> f64 {
    let n = counts.iter().sum::<usize>() as f64;
    let h = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>();
    h.max(0.0)
}

/// Maximum over all lags of the normalized circular cross-correlation.
///
/// Both inputs are mean-removed; the shorter one is zero-padded to the
/// longer length. The result lies in `[-1, 1]`; if either input has zero
/// variance the result is 0.
pub fn max_cross_correlation(signal: &SignalRecording, template: &SignalRecording) -> f64 {
    let a = signal.samples();
    let b = template.samples();
    let ma = central_moments(a);
    let mb = central_moments(b);
    if is_degenerate_variance(a, ma.m2) || is_degenerate_variance(b, mb.m2) {
        return 0.0;
    }
    let len = a.len().max(b.len());
    let centered = |x: &[f64], mean: f64| -> Vec<Complex<f64>> {
        let mut out: Vec<Complex<f64>> =
            x.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
        out.resize(len, Complex::new(0.0, 0.0));
        out
    };
    let mut fa = centered(a, ma.mean);
    let mut fb = centered(b, mb.mean);
    let energy_a: f64 = fa.iter().map(|c| c.re * c.re).sum();
    let energy_b: f64 = fb.iter().map(|c| c.re * c.re).sum();

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);
    forward.process(&mut fa);
    forward.process(&mut fb);
    // r[k] = sum_t a[t] * b[(t + k) mod len]
    let mut spectrum: Vec<Complex<f64>> =
        fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect();
    inverse.process(&mut spectrum);

    let norm = (energy_a * energy_b).sqrt() * len as f64;
    spectrum
        .iter()
        .map(|c| c.re / norm)
        .fold(f64::NEG_INFINITY, f64::max)
        .clamp(-1.0, 1.0)
}

/// Computes the seven-feature fingerprint vector of `signal`, using
/// `template` (the claimed object's training recording) for the
/// cross-correlation feature.
pub fn extract_features(signal: &SignalRecording, template: &SignalRecording) -> Result<FeatureVector> {
    extract_features_with_bins(signal, template, DEFAULT_ENTROPY_BINS)
}

pub fn extract_features_with_bins(
    signal: &SignalRecording,
    template: &SignalRecording,
    entropy_bins: usize,
) -> Result<FeatureVector> {
    let x = signal.samples();
    let mom = central_moments(x);
    let (skewness, kurtosis) = if is_degenerate_variance(x, mom.m2) {
        (0.0, 0.0)
    } else {
        (mom.m3 / mom.m2.powf(1.5), mom.m4 / (mom.m2 * mom.m2))
    };
    let m2 = if is_degenerate_variance(x, mom.m2) { 0.0 } else { mom.m2 };
    let values = vec![
        mom.mean,
        m2,
        shannon_entropy(signal, entropy_bins)?,
        m2,
        skewness,
        kurtosis,
        max_cross_correlation(signal, template),
    ];
    FeatureVector::new(values, FEATURE_NAMES.iter().map(|s| s.to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn sig(v: &[f64]) -> SignalRecording {
        SignalRecording::from_samples(v.to_vec()).unwrap()
    }

    // Direct O(n^2) lag scan, independent of the FFT path.
    fn brute_force_xcorr(a: &[f64], b: &[f64]) -> f64 {
        let len = a.len().max(b.len());
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        let (ma, mb) = (mean(a), mean(b));
        let pad = |x: &[f64], m: f64| {
            let mut v: Vec<f64> = x.iter().map(|s| s - m).collect();
            v.resize(len, 0.0);
            v
        };
        let (pa, pb) = (pad(a, ma), pad(b, mb));
        let ea: f64 = pa.iter().map(|v| v * v).sum();
        let eb: f64 = pb.iter().map(|v| v * v).sum();
        (0..len)
            .map(|k| (0..len).map(|t| pa[t] * pb[(t + k) % len]).sum::<f64>() / (ea * eb).sqrt())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn constant_signal_is_degenerate_not_nan() {
        let s = sig(&[5.0, 5.0, 5.0, 5.0]);
        let f = extract_features(&s, &s).unwrap();
        let v = f.values();
        assert_eq!(v[0], 5.0);
        assert_eq!(v[1], 0.0);
        assert_eq!(v[2], 0.0);
        assert_eq!(v[3], 0.0);
        assert_eq!(v[4], 0.0);
        assert_eq!(v[5], 0.0);
        assert_eq!(v[6], 0.0);
    }

    #[test]
    fn mean_and_population_variance() {
        let s = sig(&[1.0, 2.0, 3.0, 4.0]);
        let f = extract_features(&s, &s).unwrap();
        assert_eq!(f.values()[0], 2.5);
        assert_eq!(f.values()[1], 1.25);
        assert_eq!(f.values()[3], 1.25);
        assert_eq!(f.dim(), 7);
        assert_eq!(f.names()[6], "max_cross_correlation");
    }

    #[test]
    fn self_correlation_is_one() {
        let s = sig(&[0.3, -1.2, 2.2, 0.7, -0.1, 1.9]);
        assert_abs_diff_eq!(max_cross_correlation(&s, &s), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sinusoid_against_negation_peaks_at_half_period() {
        let n = 64;
        let x: Vec<f64> = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / n as f64).sin())
            .collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let got = max_cross_correlation(&sig(&x), &sig(&neg));
        let oracle = brute_force_xcorr(&x, &neg);
        assert_abs_diff_eq!(oracle, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(got, oracle, epsilon = 1e-12);
    }

    #[test]
    fn fft_matches_lag_scan_for_unequal_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..37).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..50).map(|_| rng.sample(StandardNormal)).collect();
        assert_abs_diff_eq!(
            max_cross_correlation(&sig(&a), &sig(&b)),
            brute_force_xcorr(&a, &b),
            epsilon = 1e-12
        );
    }

    #[test]
    fn independent_white_noise_correlates_weakly() {
        let mut hits = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let a: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
            let b: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
            if max_cross_correlation(&sig(&a), &sig(&b)).abs() < 0.1 {
                hits += 1;
            }
        }
        assert_eq!(hits, 20);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(shannon_entropy(&sig(&[2.0, 2.0, 2.0]), 8).unwrap(), 0.0);
        let uniform = sig(&[0.0, 1.0, 2.0, 3.0, 0.0, 1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(shannon_entropy(&uniform, 4).unwrap(), 2.0, epsilon = 1e-15);
        let expected = -(0.75_f64 * 0.75_f64.log2()) - 0.25 * 0.25_f64.log2();
        assert_abs_diff_eq!(
            shannon_entropy(&sig(&[0.0, 0.0, 0.0, 1.0]), 2).unwrap(),
            expected,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(expected, 0.8113, epsilon = 1e-4);
        assert!(shannon_entropy(&uniform, 0).is_err());
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        let err = SignalRecording::from_samples(vec![]).unwrap_err();
        assert!(err.to_string().contains("empty signal"));
        assert!(SignalRecording::from_samples(vec![1.0]).is_err());
        assert!(SignalRecording::from_samples(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn feature_vector_names_unique() {
        assert!(FeatureVector::new(vec![1.0, 2.0], vec!["a".into(), "a".into()]).is_err());
        assert!(FeatureVector::new(vec![], vec![]).is_err());
    }

    proptest! {
        #[test]
        fn shift_moves_only_the_mean(
            xs in prop::collection::vec(-10.0f64..10.0, 8..64),
            c in -50.0f64..50.0,
        ) {
            let s = sig(&xs);
            let shifted = sig(&xs.iter().map(|v| v + c).collect::<Vec<_>>());
            let a = extract_features(&s, &s).unwrap();
            let b = extract_features(&shifted, &shifted).unwrap();
            prop_assert!((b.values()[0] - a.values()[0] - c).abs() < 1e-9);
            for j in [1usize, 3] {
                prop_assert!((b.values()[j] - a.values()[j]).abs() < 1e-7 * (1.0 + a.values()[j]));
            }
            if a.values()[1] > 1e-3 {
                prop_assert!((b.values()[4] - a.values()[4]).abs() < 1e-5);
                prop_assert!((b.values()[5] - a.values()[5]).abs() < 1e-5);
            }
        }

        #[test]
        fn entropy_bounded_by_log_bins(
            xs in prop::collection::vec(-5.0f64..5.0, 2..200),
            bins in 1usize..64,
        ) {
            let h = shannon_entropy(&sig(&xs), bins).unwrap();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (bins as f64).log2() + 1e-12);
        }

        #[test]
        fn entropy_invariant_under_bin_permutation(
            counts in prop::collection::vec(0usize..50, 1..32),
            rot in 0usize..32,
        ) {
            prop_assume!(counts.iter().sum::<usize>() > 0);
            let mut permuted = counts.clone();
            let k = rot % permuted.len();
            permuted.rotate_left(k);
            permuted.reverse();
            let h1 = entropy_of_counts(&counts);
            let h2 = entropy_of_counts(&permuted);
            prop_assert!((h1 - h2).abs() < 1e-12);
        }

        #[test]
        fn cross_correlation_in_unit_interval(
            a in prop::collection::vec(-5.0f64..5.0, 2..80),
            b in prop::collection::vec(-5.0f64..5.0, 2..80),
        ) {
            let r = max_cross_correlation(&sig(&a), &sig(&b));
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }
}
