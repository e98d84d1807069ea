//! Goodness-of-fit tests and replica summaries.
//!
//! All p-values are asymptotic. The Kolmogorov-Smirnov tests use the
//! Stephens small-sample correction of the effective sample size before
//! evaluating the Kolmogorov survival function.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

pub const MIN_EXPECTED_PER_BIN: f64 = 5.0;
const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub p_value: f64,
    pub sample_sizes: (usize, usize),
    pub level: f64,
    pub verdict: Verdict,
}

impl TestReport {
    fn new(statistic: f64, p_value: f64, sample_sizes: (usize, usize), level: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        let verdict = if p_value < level {
            Verdict::Fail
        } else {
            Verdict::Pass
        };
        Self {
            statistic,
            p_value,
            sample_sizes,
            level,
            verdict,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
    pub ci95: (f64, f64),
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form converges fast for small lambda
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let s: f64 = (1..=20)
            .map(|k| {
                let odd = f64::from(2 * k - 1);
                (-odd * odd * pi2 / (8.0 * lambda * lambda)).exp()
            })
            .sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let k = f64::from(k);
                let sign = if k as u32 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * lambda * lambda).exp()
            })
            .sum();
        2.0 * s
    }
    .clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, effective_n: f64) -> f64 {
    let sq = effective_n.sqrt();
    kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d)
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(xs: &[f64], ys: &[f64], level: f64) -> Result<TestReport> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptySample);
    }
    let a = sorted(xs);
    let b = sorted(ys);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        // step both ECDFs past the smallest remaining value, ties included
        let t = a[i].min(b[j]);
        while i < n && a[i] <= t {
            i += 1;
        }
        while j < m && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    Ok(TestReport::new(d, ks_p_value(d, ne), (n, m), level))
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F, level: f64) -> Result<TestReport> {
    if xs.is_empty() {
        return Err(Error::EmptySample);
    }
    let a = sorted(xs);
    let n = a.len() as f64;
    let d = a.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    });
    Ok(TestReport::new(d, ks_p_value(d, n), (a.len(), 0), level))
}

/// Merges trailing bins into their predecessor until the last bin has an
/// expected count of at least [`MIN_EXPECTED_PER_BIN`].
pub fn pool_tail_bins(observed: &[u64], expected_probs: &[f64], total: f64) -> (Vec<u64>, Vec<f64>) {
    let mut obs = observed.to_vec();
    let mut probs = expected_probs.to_vec();
    while probs.len() > 1 && probs[probs.len() - 1] * total < MIN_EXPECTED_PER_BIN {
        let o = obs.pop().unwrap();
        let p = probs.pop().unwrap();
        *obs.last_mut().unwrap() += o;
        *probs.last_mut().unwrap() += p;
    }
    (obs, probs)
}

/// Pearson chi-square goodness-of-fit test with `bins - 1` degrees of freedom.
///
/// Sparse trailing bins are pooled first; any remaining bin with an expected
/// count below 5 is an error.
pub fn chi_square_gof(observed: &[u64], expected_probs: &[f64], level: f64) -> Result<TestReport> {
    if observed.len() != expected_probs.len() {
        return Err(Error::LengthMismatch {
            observed: observed.len(),
            expected: expected_probs.len(),
        });
    }
    let psum: f64 = expected_probs.iter().sum();
    if (psum - 1.0).abs() > 1e-9 {
        return Err(Error::ProbabilitiesNotNormalized(psum));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::EmptySample);
    }
    let total = total as f64;
    let (obs, probs) = pool_tail_bins(observed, expected_probs, total);
    if obs.len() < 2 {
        return Err(Error::TooFewBins);
    }
    if let Some((bin, &p)) = probs
        .iter()
        .enumerate()
        .find(|(_, &p)| p * total < MIN_EXPECTED_PER_BIN)
    {
        return Err(Error::SparseBin {
            bin,
            expected: p * total,
        });
    }
    let statistic: f64 = obs
        .iter()
        .zip(&probs)
        .map(|(&o, &p)| {
            let e = p * total;
            let diff = o as f64 - e;
            diff * diff / e
        })
        .sum();
    let dof = (obs.len() - 1) as f64;
    let p_value = if statistic <= 0.0 {
        1.0
    } else {
        gamma_ur(0.5 * dof, 0.5 * statistic)
    };
    Ok(TestReport::new(statistic, p_value, (total as usize, obs.len()), level))
}

pub fn summarize(values: &[f64]) -> Result<ReplicaSummary> {
    let count = values.len();
    if count < 2 {
        return Err(Error::TooFewValues(count));
    }
    let n = count as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let std_error = (var / n).sqrt();
    Ok(ReplicaSummary {
        mean,
        std_error,
        count,
        ci95: (mean - Z_95 * std_error, mean + Z_95 * std_error),
    })
}
