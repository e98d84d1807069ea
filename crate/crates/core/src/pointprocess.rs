//! Poisson-Dirichlet `PD(m, 0)` samplers and the sequence space metric.
//!
//! The Poisson construction draws the points of a process with intensity
//! `e^{-x} dx` in decreasing order as `c_i = -ln(G_i)`, where `G_i` are the
//! arrival times of a unit-rate process. Restricting to `[b, inf)` is then
//! `G_i <= e^{-b}`, and lowering `b` just continues the arrival sequence, so
//! refinements reuse every earlier point.
//!
//! The stick-breaking sampler is an independent oracle for the same law.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_EPSILON_MASS: f64 = 1e-6;
pub const DEFAULT_MAX_POINTS: usize = 1 << 16;
const SPACE_TOLERANCE: f64 = 1e-9;

/// A decreasing nonnegative sequence with sum at most one.
///
/// `deficit` is the mass the finite representation leaves out, so
/// `sum(entries) + deficit = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightSequence {
    entries: Vec<f64>,
    deficit: f64,
}

impl WeightSequence {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if let Some(x) = entries.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::NotInSequenceSpace(format!("entry {x} is not a nonnegative number")));
        }
        if let Some(i) = entries.windows(2).position(|w| w[0] < w[1]) {
            return Err(Error::NotInSequenceSpace(format!("increase at position {}", i + 1)));
        }
        let sum: f64 = entries.iter().sum();
        if sum > 1.0 + SPACE_TOLERANCE {
            return Err(Error::NotInSequenceSpace(format!("sum {sum} exceeds 1")));
        }
        Ok(Self {
            entries,
            deficit: (1.0 - sum).max(0.0),
        })
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn deficit(&self) -> f64 {
        self.deficit
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().sum()
    }

    pub fn largest(&self) -> f64 {
        self.entries.first().copied().unwrap_or(0.0)
    }

    /// `w_1 + w_2`.
    pub fn top_two(&self) -> f64 {
        self.entries.iter().take(2).sum()
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.entries.iter().map(|w| w * w).sum()
    }
}

/// Metric of the sequence space; the shorter sequence is padded with zeros.
pub fn l1_distance(x: &WeightSequence, y: &WeightSequence) -> f64 {
    let (long, short) = if x.entries.len() >= y.entries.len() {
        (&x.entries, &y.entries)
    } else {
        (&y.entries, &x.entries)
    };
    long.iter()
        .enumerate()
        .map(|(i, a)| (a - short.get(i).copied().unwrap_or(0.0)).abs())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdParams {
    pub m: f64,
    /// Initial lower cutoff `b` for the point process.
    pub truncation_b: f64,
    /// Refinement stops once a step adds less relative mass than this.
    pub epsilon_mass: f64,
    /// Hard cap on the number of points kept per draw.
    pub max_points: usize,
}

impl PdParams {
    pub fn new(m: f64) -> Result<Self> {
        let p = Self {
            m,
            truncation_b: 0.0,
            epsilon_mass: DEFAULT_EPSILON_MASS,
            max_points: DEFAULT_MAX_POINTS,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters for the law `PD(1/beta, 0)`.
    pub fn for_beta(beta: f64) -> Result<Self> {
        if !(beta > 1.0 && beta.is_finite()) {
            return Err(Error::InvalidBeta(beta));
        }
        Self::new(1.0 / beta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m < 1.0) {
            return Err(Error::InvalidParameter(format!("m must lie in (0, 1), got {}", self.m)));
        }
        if !self.truncation_b.is_finite() {
            return Err(Error::InvalidParameter("truncation_b must be finite".into()));
        }
        if !(self.epsilon_mass > 0.0 && self.epsilon_mass < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon_mass must lie in (0, 1), got {}",
                self.epsilon_mass
            )));
        }
        if self.max_points == 0 {
            return Err(Error::InvalidParameter("max_points must be at least 1".into()));
        }
        Ok(())
    }
}

/// Arrival times of a unit-rate Poisson process on `(0, inf)`.
struct Arrivals<'a, R: Rng + ?Sized> {
    rng: &'a mut R,
    time: f64,
}

impl<R: Rng + ?Sized> Arrivals<'_, R> {
    fn next(&mut self) -> f64 {
        let gap: f64 = Exp1.sample(self.rng);
        self.time += gap;
        self.time
    }
}

/// Points of the intensity `e^{-x}` process on `[b, inf)`, in decreasing order.
pub fn sample_poisson_points<R: Rng + ?Sized>(params: &PdParams, rng: &mut R) -> Vec<f64> {
    let limit = (-params.truncation_b).exp();
    let mut arrivals = Arrivals { rng, time: 0.0 };
    let mut points = Vec::new();
    loop {
        let g = arrivals.next();
        if g > limit {
            return points;
        }
        points.push(-g.ln());
    }
}

/// `u = beta^beta * e^{beta c}`; maps intensity `e^{-x}` to `x^{-1/beta - 1}`.
pub fn pd_transform(beta: f64, c: f64) -> f64 {
    (beta * beta.ln() + beta * c).exp()
}

/// Expected number of transformed points above `u`: `beta * u^{-1/beta}`.
pub fn transformed_tail_count(beta: f64, u: f64) -> f64 {
    beta * u.powf(-1.0 / beta)
}

/// Normalized, decreasing weights `e^{beta c_i} / sum_j e^{beta c_j}`.
///
/// The cutoff is lowered in unit steps from `params.truncation_b` until one
/// step adds less than `epsilon_mass` of the running total and the expected
/// mass still below the cutoff is under the same fraction, or until
/// `max_points` points are held. The expected remaining mass is part of the
/// normalizer and shows up as the sequence's deficit.
pub fn sample_pd_poisson<R: Rng + ?Sized>(beta: f64, params: &PdParams, rng: &mut R) -> Result<WeightSequence> {
    if !(beta > 1.0 && beta.is_finite()) {
        return Err(Error::InvalidBeta(beta));
    }
    params.validate()?;
    if (params.m - 1.0 / beta).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "m = {} does not match 1/beta = {}",
            params.m,
            1.0 / beta
        )));
    }
    // In arrival-time coordinates the weight of a point is g^{-beta}; the
    // common factor beta^beta cancels in the normalization.
    let mut arrivals = Arrivals { rng, time: 0.0 };
    let mut limit = (-params.truncation_b).exp();
    let mut raw: Vec<f64> = Vec::new();
    let mut total = 0.0;
    let mut pending = arrivals.next();
    let remainder = |limit: f64| limit.powf(1.0 - beta) / (beta - 1.0);
    loop {
        let mut added = 0.0;
        while pending <= limit && raw.len() < params.max_points {
            let w = pending.powf(-beta);
            raw.push(w);
            added += w;
            pending = arrivals.next();
        }
        total += added;
        let capped = raw.len() >= params.max_points;
        if capped {
            limit = pending;
        }
        let rest = remainder(limit);
        if capped || (total > 0.0 && added < params.epsilon_mass * total && rest < params.epsilon_mass * total) {
            let norm = total + rest;
            let entries = raw.into_iter().map(|w| w / norm).collect();
            return Ok(WeightSequence {
                entries,
                deficit: rest / norm,
            });
        }
        limit *= std::f64::consts::E;
    }
}

/// The first `length` sticks of the residual allocation with
/// `V_i ~ Beta(1 - m, i m)`, sorted decreasingly.
pub fn sample_pd_stick<R: Rng + ?Sized>(m: f64, length: usize, rng: &mut R) -> Result<WeightSequence> {
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::InvalidParameter(format!("m must lie in (0, 1), got {m}")));
    }
    if length == 0 {
        return Err(Error::InvalidParameter("length must be at least 1".into()));
    }
    let head = Gamma::new(1.0 - m, 1.0).expect("shape in (0, 1)");
    let mut rest = 1.0;
    let mut entries = Vec::with_capacity(length);
    for i in 1..=length {
        let x = head.sample(rng);
        let y = Gamma::new(i as f64 * m, 1.0).expect("positive shape").sample(rng);
        let v = x / (x + y);
        entries.push(rest * v);
        rest *= 1.0 - v;
    }
    entries.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(WeightSequence {
        entries,
        deficit: rest,
    })
}
