//! Closed-form limits and finite-N moments used as oracles.

use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::LN_2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    HighTemperature,
    Critical,
    LowTemperature,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::HighTemperature => "high_temperature",
            Regime::Critical => "critical",
            Regime::LowTemperature => "low_temperature",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagnosis {
    pub beta: f64,
    pub beta_critical: f64,
    pub regime: Regime,
}

/// A value on `[0, +inf]` with an explicit infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtendedReal {
    Finite(f64),
    Infinite,
}

impl ExtendedReal {
    pub fn is_infinite(&self) -> bool {
        matches!(self, ExtendedReal::Infinite)
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::Infinite => None,
        }
    }

    /// Maps to `f64`, with `Infinite` as `f64::INFINITY`.
    pub fn to_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha >= 1.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidBeta(beta))
    }
}

/// `(alpha log 2)^((alpha - 1) / alpha)`; equals 1 at `alpha = 1`.
pub fn critical_beta(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha == 1.0 {
        return Ok(1.0);
    }
    Ok((alpha * LN_2).powf((alpha - 1.0) / alpha))
}

/// Almost-sure limit of `(1/N) log Z_N(beta)`.
pub fn free_energy_limit(alpha: f64, beta: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_beta(beta)?;
    if alpha == 1.0 {
        return Ok(if beta <= 1.0 { LN_2 } else { beta * LN_2 });
    }
    let bc = critical_beta(alpha)?;
    Ok(if beta <= bc {
        LN_2 + (alpha - 1.0) / alpha * beta.powf(alpha / (alpha - 1.0))
    } else {
        beta * (alpha * LN_2).powf(1.0 / alpha)
    })
}

pub fn diagnose(alpha: f64, beta: f64) -> Result<PhaseDiagnosis> {
    check_beta(beta)?;
    let beta_critical = critical_beta(alpha)?;
    let regime = if beta < beta_critical {
        Regime::HighTemperature
    } else if beta == beta_critical {
        Regime::Critical
    } else {
        Regime::LowTemperature
    };
    Ok(PhaseDiagnosis {
        beta,
        beta_critical,
        regime,
    })
}

/// Edge of the rate function's effective domain, `(alpha log 2)^(1/alpha)`.
pub fn rate_domain_edge(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((alpha * LN_2).powf(1.0 / alpha))
}

/// `|x|^alpha / alpha` on `[-edge, edge]`, infinite outside.
pub fn rate_function(alpha: f64, x: f64) -> Result<ExtendedReal> {
    let edge = rate_domain_edge(alpha)?;
    Ok(if x.abs() <= edge {
        ExtendedReal::Finite(x.abs().powf(alpha) / alpha)
    } else {
        ExtendedReal::Infinite
    })
}

/// Limiting probability that exactly `k` configurations have `-H'_N >= b`.
pub fn poisson_count_pmf(b: f64, k: u32) -> f64 {
    let kf = f64::from(k);
    (-(-b).exp() - kf * b - ln_gamma(kf + 1.0)).exp()
}

/// The exceedance shift `a_N = (N - 1) log 2`.
pub fn shift_constant(n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidSize);
    }
    Ok(f64::from(n - 1) * LN_2)
}

/// `P(-H'_N >= b)` for the double exponential law; requires `b + a_N >= 0`.
pub fn exceedance_probability(n: u32, b: f64) -> Result<f64> {
    let a = shift_constant(n)?;
    if b + a < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "b + a_N = {} must be nonnegative",
            b + a
        )));
    }
    Ok(0.5 * (-(b + a)).exp())
}

/// `expm1(t) / t`, continuous through `t = 0`.
fn exprel(t: f64) -> f64 {
    if t.abs() < 1e-300 {
        1.0
    } else {
        t.exp_m1() / t
    }
}

/// Exact `E[exp(order * beta * H) 1{H <= delta N}]` under the environment law.
///
/// For `alpha = 1`, with `g = order * beta` and `L = delta N`:
/// `1 / (2 (1 + g)) + L expm1((g - 1) L) / (2 (g - 1) L)`, which at `g = 1`
/// is `1/4 + L/2`. For `alpha = 2`: `exp(g^2 N / 2) Phi((delta - g) sqrt(N))`.
pub fn truncated_exp_moment(alpha: f64, beta: f64, delta: f64, n: u32, order: u32) -> Result<f64> {
    check_beta(beta)?;
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if n == 0 {
        return Err(Error::InvalidSize);
    }
    if order != 1 && order != 2 {
        return Err(Error::InvalidParameter(format!("order must be 1 or 2, got {order}")));
    }
    let g = f64::from(order) * beta;
    let nf = f64::from(n);
    if alpha == 1.0 {
        let l = delta * nf;
        Ok(0.5 / (1.0 + g) + 0.5 * l * exprel((g - 1.0) * l))
    } else if alpha == 2.0 {
        let z = (delta - g) * nf.sqrt();
        Ok((0.5 * g * g * nf).exp() * 0.5 * erfc(-z / std::f64::consts::SQRT_2))
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn free_energy_examples() {
        assert!(close(free_energy_limit(1.0, 0.5).unwrap(), 0.693_147_2, 1e-7));
        assert!(close(free_energy_limit(1.0, 2.0).unwrap(), 1.386_294_4, 1e-7));
        assert!(close(free_energy_limit(2.0, 0.5).unwrap(), 0.818_147_2, 1e-7));
        assert!(close(free_energy_limit(2.0, 2.0).unwrap(), 2.354_820_0, 1e-7));
        assert_eq!(free_energy_limit(0.9, 1.0), Err(Error::InvalidAlpha(0.9)));
        assert_eq!(free_energy_limit(1.0, 0.0), Err(Error::InvalidBeta(0.0)));
    }

    #[test]
    fn critical_beta_examples() {
        assert_eq!(critical_beta(1.0).unwrap(), 1.0);
        let b2 = critical_beta(2.0).unwrap();
        assert!(close(b2, (2.0 * LN_2).sqrt(), 1e-15));
        assert!(close(b2, 1.177_410_0, 1e-7));
        assert!(close(critical_beta(3.0).unwrap(), 1.629_162_8, 1e-7));
        assert!(critical_beta(0.5).is_err());
    }

    #[test]
    fn diagnosis_follows_critical_point() {
        assert_eq!(diagnose(1.0, 0.5).unwrap().regime, Regime::HighTemperature);
        assert_eq!(diagnose(1.0, 1.0).unwrap().regime, Regime::Critical);
        assert_eq!(diagnose(2.0, 1.2).unwrap().regime, Regime::LowTemperature);
        assert_eq!(diagnose(2.0, 1.1).unwrap().regime, Regime::HighTemperature);
    }

    #[test]
    fn free_energy_continuous_at_transition() {
        for alpha in [1.0, 1.5, 2.0, 3.0] {
            let bc = critical_beta(alpha).unwrap();
            let left = if alpha == 1.0 {
                LN_2
            } else {
                LN_2 + (alpha - 1.0) / alpha * bc.powf(alpha / (alpha - 1.0))
            };
            let right = bc * rate_domain_edge(alpha).unwrap();
            assert!(close(left, right, 1e-12), "alpha {alpha}: {left} vs {right}");
            assert!(close(free_energy_limit(alpha, bc).unwrap(), right, 1e-12));
        }
    }

    #[test]
    fn free_energy_convex_nondecreasing() {
        for alpha in [1.0, 1.5, 2.0, 3.0] {
            let grid: Vec<f64> = (1..=80).map(|i| f64::from(i) * 0.05).collect();
            let f: Vec<f64> = grid.iter().map(|&b| free_energy_limit(alpha, b).unwrap()).collect();
            for w in f.windows(2) {
                assert!(w[1] >= w[0] - 1e-15);
            }
            for w in f.windows(3) {
                assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-12, "alpha {alpha}");
            }
        }
    }

    #[test]
    fn rate_function_examples() {
        for alpha in [1.0, 2.0, 3.5] {
            assert_eq!(rate_function(alpha, 0.0).unwrap(), ExtendedReal::Finite(0.0));
        }
        assert_eq!(rate_function(1.0, 0.5).unwrap(), ExtendedReal::Finite(0.5));
        assert_eq!(rate_function(1.0, 1.0).unwrap(), ExtendedReal::Infinite);
        assert_eq!(rate_function(2.0, 1.0).unwrap(), ExtendedReal::Finite(0.5));
    }

    #[test]
    fn rate_function_shape() {
        for alpha in [1.0, 1.5, 2.0, 3.0] {
            let edge = rate_domain_edge(alpha).unwrap();
            let at_edge = rate_function(alpha, edge).unwrap().to_f64();
            assert!(close(at_edge, LN_2, 1e-12));
            assert!(rate_function(alpha, -edge * (1.0 + 1e-9)).unwrap().is_infinite());
            let xs: Vec<f64> = (-100..=100).map(|i| edge * f64::from(i) / 100.0).collect();
            let vals: Vec<f64> = xs.iter().map(|&x| rate_function(alpha, x).unwrap().to_f64()).collect();
            for (x, v) in xs.iter().zip(&vals) {
                assert_eq!(*v, rate_function(alpha, -x).unwrap().to_f64());
                assert_eq!(*v == 0.0, *x == 0.0);
            }
            for w in vals.windows(3) {
                assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-12);
            }
        }
    }

    // log 2 - inf_x {beta x + I(x)} over the effective domain reproduces the limit
    #[test]
    fn varadhan_balance_matches_free_energy() {
        for alpha in [1.0, 1.5, 2.0, 3.0] {
            let edge = rate_domain_edge(alpha).unwrap();
            for beta in [0.2, 0.5, 0.9, 1.0, 1.3, 2.0, 3.0] {
                let steps = 200_000;
                let inf = (0..=steps)
                    .map(|i| -edge + 2.0 * edge * f64::from(i) / f64::from(steps))
                    .map(|x| beta * x + rate_function(alpha, x).unwrap().to_f64())
                    .fold(f64::INFINITY, f64::min);
                let balance = LN_2 - inf;
                let limit = free_energy_limit(alpha, beta).unwrap();
                assert!(close(balance, limit, 1e-6), "alpha {alpha} beta {beta}: {balance} vs {limit}");
            }
        }
    }

    #[test]
    fn poisson_pmf_examples() {
        assert!(close(poisson_count_pmf(0.0, 0), (-1f64).exp(), 1e-15));
        assert!(close(poisson_count_pmf(LN_2, 0), 0.606_530_659_712_633_4, 1e-15));
        assert!(close(poisson_count_pmf(LN_2, 1), 0.303_265_329_856_316_7, 1e-15));
        for b in [-2.0, 0.0, 2.0] {
            let total: f64 = (0..=200).map(|k| poisson_count_pmf(b, k)).sum();
            assert!(close(total, 1.0, 1e-10), "b {b}: {total}");
        }
    }

    #[test]
    fn shift_constant_examples() {
        assert_eq!(shift_constant(1).unwrap(), 0.0);
        assert!(close(shift_constant(11).unwrap(), 6.931_471_8, 1e-7));
        assert_eq!(shift_constant(0), Err(Error::InvalidSize));
        let d = exceedance_probability(11, 0.7).unwrap();
        assert!(close(2f64.powi(11) * d, (-0.7f64).exp(), 1e-14));
        for n in [2, 10, 30] {
            for b in [-0.5, 0.0, 1.0, 3.0] {
                let d = exceedance_probability(n, b).unwrap();
                assert!(close(2f64.powi(n as i32) * d / (-b).exp(), 1.0, 1e-12));
            }
        }
    }

    fn quadrature_moment(alpha: f64, beta: f64, delta: f64, n: u32, order: u32) -> f64 {
        let g = f64::from(order) * beta;
        let nf = f64::from(n);
        let top = delta * nf;
        if alpha == 1.0 {
            let neg = integrate(|x: f64| 0.5 * ((1.0 + g) * x).exp(), -60.0 / (1.0 + g), 0.0, 1e-14);
            let pos = integrate(|x: f64| 0.5 * ((g - 1.0) * x).exp(), 0.0, top, 1e-14);
            neg + pos
        } else {
            let c = 1.0 / (2.0 * std::f64::consts::PI * nf).sqrt();
            let lo = -40.0 * nf.sqrt();
            integrate(|x: f64| c * (g * x - x * x / (2.0 * nf)).exp(), lo, top, 1e-12)
        }
    }

    #[test]
    fn truncated_moment_matches_quadrature() {
        for &(alpha, beta, delta, n, order) in &[
            (1.0, 0.3, 0.8, 5, 1),
            (1.0, 0.3, 0.8, 5, 2),
            (1.0, 0.5, 0.8, 7, 2),
            (1.0, 0.7, 1.0, 4, 2),
            (1.0, 0.9, 0.75, 6, 1),
            (2.0, 0.5, 1.6, 3, 1),
            (2.0, 0.8, 1.3, 5, 2),
        ] {
            let exact = truncated_exp_moment(alpha, beta, delta, n, order).unwrap();
            let quad = quadrature_moment(alpha, beta, delta, n, order);
            assert!(
                ((exact - quad) / exact).abs() < 1e-9,
                "{alpha} {beta} {delta} {n} {order}: {exact} vs {quad}"
            );
        }
    }

    #[test]
    fn truncated_moment_examples() {
        // large delta N approaches the double exponential MGF 1 / (1 - beta^2)
        let big = truncated_exp_moment(1.0, 0.5, 100.0, 10, 1).unwrap();
        assert!(close(big, 4.0 / 3.0, 1e-12));
        assert!(big > 1.0 / 1.5);
        let v = truncated_exp_moment(1.0, 0.4, 1.0, 10, 2).unwrap();
        assert!(v <= 1.0 / (1.0 - 4.0 * 0.16));
        let g = truncated_exp_moment(2.0, 0.5, 2.0 * LN_2.sqrt(), 10, 1).unwrap();
        assert!(g > 0.5 * 1.25f64.exp());
        assert!(close(0.5 * 1.25f64.exp(), 1.745_171_5, 1e-7));
        // the removable point g = 1 is continuous
        let at = truncated_exp_moment(1.0, 0.5, 1.0, 10, 2).unwrap();
        assert!(close(at, 0.25 + 5.0, 1e-12));
        let near = truncated_exp_moment(1.0, 0.5 + 1e-9, 1.0, 10, 2).unwrap();
        assert!(close(at, near, 1e-6));
        assert!(truncated_exp_moment(3.0, 0.5, 1.0, 10, 1).is_err());
        assert!(truncated_exp_moment(1.0, 0.5, 1.0, 10, 3).is_err());
    }

    #[test]
    fn truncated_moment_converges_and_is_monotone() {
        for &(alpha, beta, order) in &[(1.0, 0.3, 1), (1.0, 0.4, 2), (1.0, 0.8, 1), (2.0, 0.6, 1), (2.0, 0.9, 2)] {
            let mut prev = 0.0;
            for i in 1..=200 {
                let delta = f64::from(i) * 0.05;
                let v = truncated_exp_moment(alpha, beta, delta, 10, order).unwrap();
                // one ulp of rounding once the tail has saturated
                assert!(v >= prev * (1.0 - 4.0 * f64::EPSILON), "{alpha} {beta} {order} {delta}: {v} < {prev}");
                prev = v;
            }
            let g = f64::from(order) * beta;
            let full = if alpha == 1.0 {
                1.0 / (1.0 - g * g)
            } else {
                (0.5 * g * g * 10.0).exp()
            };
            let far = truncated_exp_moment(alpha, beta, 1e3, 10, order).unwrap();
            assert!(((far - full) / full).abs() < 1e-12, "{alpha} {beta} {order}");
        }
    }

    const LOG2: f64 = LN_2;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(4000))]
        // The first-moment bound needs delta N beyond a beta-dependent
        // threshold; below it the exact value falls short of 1/(1+beta).
        #[test]
        fn first_moment_lower_bound(
            beta in 0.001f64..0.999,
            delta in LOG2 + 1e-9..6.0,
            n in 1u32..=60,
        ) {
            let v = truncated_exp_moment(1.0, beta, delta, n, 1).unwrap();
            let l = delta * f64::from(n);
            let threshold = ((1.0 + beta) / (2.0 * beta)).ln() / (1.0 - beta);
            prop_assume!((l - threshold).abs() > 1e-6);
            prop_assert_eq!(v > 1.0 / (1.0 + beta), l > threshold);
        }

        #[test]
        fn second_moment_upper_bounds(
            beta in 0.001f64..0.999,
            delta in LOG2 + 1e-9..6.0,
            n in 1u32..=60,
        ) {
            prop_assume!((2.0 * beta - 1.0).abs() > 1e-9);
            let v = truncated_exp_moment(1.0, beta, delta, n, 2).unwrap();
            let l = delta * f64::from(n);
            if beta < 0.5 {
                // the value approaches this bound from below as delta N grows
                let bound = 1.0 / (1.0 - 4.0 * beta * beta);
                prop_assert!(v <= bound * (1.0 + 4.0 * f64::EPSILON));
            } else {
                let s = 2.0 * beta - 1.0;
                // the gap to the bound is O(1) while both sides grow like e^{sL}
                prop_assert!(v <= (s * l).exp() / (2.0 * s) * (1.0 + 4.0 * f64::EPSILON));
            }
        }

        #[test]
        fn second_moment_at_half_is_below_the_stated_value(
            delta in LOG2 + 1e-9..6.0,
            n in 1u32..=60,
        ) {
            let v = truncated_exp_moment(1.0, 0.5, delta, n, 2).unwrap();
            let l = delta * f64::from(n);
            prop_assert!(v <= (1.0 + l) / 2.0);
            prop_assert!((v - (0.25 + l / 2.0)).abs() <= 1e-12 * l.max(1.0));
        }

        #[test]
        fn gaussian_first_moment_lower_bound(
            beta in 0.001f64..1.1774,
            gap in 1e-6f64..3.0,
            n in 1u32..=60,
        ) {
            let delta = beta + gap;
            let v = truncated_exp_moment(2.0, beta, delta, n, 1).unwrap();
            prop_assert!(v > 0.5 * (0.5 * beta * beta * f64::from(n)).exp());
        }

        #[test]
        fn gaussian_second_moment_upper_bounds(
            beta in 0.001f64..1.1774,
            delta in 0.01f64..4.0,
            n in 1u32..=60,
        ) {
            let nf = f64::from(n);
            let v = truncated_exp_moment(2.0, beta, delta, n, 2).unwrap();
            if beta <= delta / 2.0 {
                prop_assert!(v <= (2.0 * beta * beta * nf).exp());
            } else {
                let bound = ((2.0 * delta * beta - 0.5 * delta * delta) * nf).exp()
                    / ((2.0 * beta - delta) * (2.0 * std::f64::consts::PI * nf).sqrt());
                prop_assert!(v <= bound);
            }
        }
    }

}
