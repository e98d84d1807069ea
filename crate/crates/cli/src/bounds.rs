//! Exact evaluations of the interval-mass and truncated-moment inequalities
//! over a fixed parameter grid.
//!
//! Upper bounds (`<=`) that become equalities in a limit are compared with
//! a relative slack of four ulps of the bound; strict bounds get no slack.

use remlab_core::theory::truncated_exp_moment;
use remlab_core::{Environment, OpenInterval};

use crate::error::CliError;

const ULPS: f64 = 4.0 * f64::EPSILON;

/// One evaluated inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub bound: &'static str,
    pub alpha: f64,
    pub n: u32,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
    pub interval: Option<OpenInterval>,
    pub value: f64,
    pub limit: f64,
    pub holds: bool,
}

fn at_most(value: f64, limit: f64) -> bool {
    value <= limit + ULPS * limit.abs()
}

fn at_least(value: f64, limit: f64) -> bool {
    value >= limit - ULPS * limit.abs()
}

pub const INTERVAL_SIZES: [u32; 3] = [5, 10, 20];
pub const MOMENT_SIZES: [u32; 3] = [10, 20, 50];
pub const GAUSSIAN_SIZES: [u32; 4] = [5, 10, 20, 50];
pub const MOMENT_DELTAS: [f64; 4] = [0.7, 1.0, 2.0, 5.0];

fn grid(lo: f64, step: f64, count: usize) -> impl Iterator<Item = f64> {
    (0..count).map(move |i| lo + step * i as f64)
}

/// Interval masses at `alpha = 1` for endpoints on a 0.25 grid in `[0, 2]`,
/// on both sides of zero and straddling it.
fn interval_rows(out: &mut Vec<BoundRow>) -> Result<(), CliError> {
    let edges: Vec<f64> = grid(0.0, 0.25, 9).collect();
    for &n in &INTERVAL_SIZES {
        let env = Environment::double_exponential(n)?;
        let nf = f64::from(n);
        for (i, &x) in edges.iter().enumerate() {
            for &y in &edges[i + 1..] {
                let mut shapes = vec![OpenInterval::new(x, y)?, OpenInterval::new(-y, -x)?];
                if x > 0.0 {
                    shapes.push(OpenInterval::new(-x, y)?);
                    shapes.push(OpenInterval::new(-y, x)?);
                }
                for interval in shapes {
                    let q = env.interval_probability(interval);
                    let (m, big) = (interval.inf_abs(), interval.sup_abs());
                    let span = (-nf * m).exp() * -(-nf * (big - m)).exp_m1();
                    let mut push = |bound, delta, limit: f64, holds| {
                        out.push(BoundRow {
                            bound,
                            alpha: 1.0,
                            n,
                            beta: None,
                            delta,
                            interval: Some(interval),
                            value: q,
                            limit,
                            holds,
                        })
                    };
                    let tail = (-nf * m).exp();
                    push("interval_upper", None, tail, at_most(q, span) && at_most(span, tail));
                    push("interval_lower_half_span", None, 0.5 * span, at_least(q, 0.5 * span));
                    for frac in [0.1, 0.5, 0.9] {
                        let delta = frac * (big - m);
                        let limit = 0.5 * delta * (-(nf * m + delta)).exp();
                        push("interval_lower_delta", Some(delta), limit, q > limit);
                    }
                }
            }
        }
    }
    Ok(())
}

fn moment_rows(out: &mut Vec<BoundRow>) -> Result<(), CliError> {
    let betas: Vec<f64> = grid(0.05, 0.05, 19).collect();
    for &n in &MOMENT_SIZES {
        for &delta in &MOMENT_DELTAS {
            let l = delta * f64::from(n);
            for &beta in &betas {
                let mut row = |bound, order, limit: f64, holds: fn(f64, f64) -> bool| -> Result<(), CliError> {
                    let value = truncated_exp_moment(1.0, beta, delta, n, order)?;
                    out.push(BoundRow {
                        bound,
                        alpha: 1.0,
                        n,
                        beta: Some(beta),
                        delta: Some(delta),
                        interval: None,
                        value,
                        limit,
                        holds: holds(value, limit),
                    });
                    Ok(())
                };
                row("first_moment_lower", 1, 1.0 / (1.0 + beta), |v, b| v > b)?;
                let second = if (beta - 0.5).abs() < 1e-12 {
                    (1.0 + l) / 2.0
                } else if beta < 0.5 {
                    1.0 / (1.0 - 4.0 * beta * beta)
                } else {
                    let s = 2.0 * beta - 1.0;
                    (s * l).exp() / (2.0 * s)
                };
                row("second_moment_upper", 2, second, at_most)?;
            }
        }
    }
    Ok(())
}

/// The truncation level used for the Gaussian case: `2 sqrt(log 2)` below
/// `sqrt(log 2)`, otherwise the midpoint of the admissible window.
pub fn gaussian_delta(beta: f64) -> f64 {
    let ln2 = std::f64::consts::LN_2;
    if beta < ln2.sqrt() {
        2.0 * ln2.sqrt()
    } else {
        let lo = (2.0 * ln2).sqrt();
        let hi = 2.0 * beta - (2.0 * (beta * beta - ln2)).sqrt();
        0.5 * (lo + hi)
    }
}

fn gaussian_rows(out: &mut Vec<BoundRow>) -> Result<(), CliError> {
    let betas: Vec<f64> = grid(0.05, 0.1, 12).collect();
    for &n in &GAUSSIAN_SIZES {
        let nf = f64::from(n);
        for &beta in &betas {
            for delta in [gaussian_delta(beta), beta + 0.05, 3.0] {
                let first = truncated_exp_moment(2.0, beta, delta, n, 1)?;
                let lower = 0.5 * (0.5 * beta * beta * nf).exp();
                out.push(BoundRow {
                    bound: "gaussian_first_moment_lower",
                    alpha: 2.0,
                    n,
                    beta: Some(beta),
                    delta: Some(delta),
                    interval: None,
                    value: first,
                    limit: lower,
                    holds: first > lower,
                });
                let second = truncated_exp_moment(2.0, beta, delta, n, 2)?;
                let upper = if beta <= delta / 2.0 {
                    (2.0 * beta * beta * nf).exp()
                } else {
                    ((2.0 * delta * beta - 0.5 * delta * delta) * nf).exp()
                        / ((2.0 * beta - delta) * (2.0 * std::f64::consts::PI * nf).sqrt())
                };
                out.push(BoundRow {
                    bound: "gaussian_second_moment_upper",
                    alpha: 2.0,
                    n,
                    beta: Some(beta),
                    delta: Some(delta),
                    interval: None,
                    value: second,
                    limit: upper,
                    holds: at_most(second, upper),
                });
            }
        }
    }
    Ok(())
}

/// Every inequality over the full grid.
pub fn bound_rows() -> Result<Vec<BoundRow>, CliError> {
    let mut out = Vec::new();
    interval_rows(&mut out)?;
    moment_rows(&mut out)?;
    gaussian_rows(&mut out)?;
    Ok(out)
}
