//! The JSON experiment manifest.
//!
//! One manifest describes one experiment. Unknown keys are rejected, and
//! every validation error names the line and column of the offending key.

use std::path::PathBuf;

use remlab_core::engine::{DEFAULT_TOP_M, MAX_MARGINAL_BITS, MAX_SPINS};
use remlab_core::pointprocess::{DEFAULT_EPSILON_MASS, DEFAULT_MAX_POINTS};
use remlab_core::{Environment, OpenInterval};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    FreeEnergy,
    RateFunction,
    Marginals,
    Exceedance,
    PdCompare,
    Diagnostics,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::FreeEnergy => "free_energy",
            ExperimentKind::RateFunction => "rate_function",
            ExperimentKind::Marginals => "marginals",
            ExperimentKind::Exceedance => "exceedance",
            ExperimentKind::PdCompare => "pd_compare",
            ExperimentKind::Diagnostics => "diagnostics",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub alpha: f64,
    pub n: u32,
}

/// Size of the worker pool: a fixed count or one thread per core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Workers {
    #[default]
    Auto,
    Fixed(usize),
}

impl Workers {
    pub fn resolve(self) -> usize {
        match self {
            Workers::Auto => std::thread::available_parallelism().map_or(1, |n| n.get()),
            Workers::Fixed(n) => n,
        }
    }
}

impl std::str::FromStr for Workers {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Workers::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Workers::Fixed(n)),
            _ => Err(format!("workers must be a positive integer or \"auto\", got {s:?}")),
        }
    }
}

impl Serialize for Workers {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Workers::Auto => s.serialize_str("auto"),
            Workers::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Workers {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) if n >= 1 => Ok(Workers::Fixed(n as usize)),
            Raw::Count(n) => Err(serde::de::Error::custom(format!(
                "workers must be at least 1, got {n}"
            ))),
            Raw::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Settings of the Poisson-Dirichlet samplers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdBlock {
    /// Defaults to `1 / beta`; if given it must equal that value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default = "default_epsilon_mass")]
    pub epsilon_mass: f64,
    /// Draws per construction; defaults to the number of replicas.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<u32>,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
    #[serde(default = "default_stick_length")]
    pub stick_length: usize,
}

impl Default for PdBlock {
    fn default() -> Self {
        Self {
            m: None,
            epsilon_mass: DEFAULT_EPSILON_MASS,
            draws: None,
            max_points: DEFAULT_MAX_POINTS,
            stick_length: default_stick_length(),
        }
    }
}

fn default_epsilon_mass() -> f64 {
    DEFAULT_EPSILON_MASS
}

fn default_max_points() -> usize {
    DEFAULT_MAX_POINTS
}

fn default_stick_length() -> usize {
    1000
}

fn default_top_m() -> usize {
    DEFAULT_TOP_M
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("remlab-out")
}

/// A functional of a weight sequence compared between samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightStatistic {
    Largest,
    TopTwo,
    SumOfSquares,
}

impl WeightStatistic {
    pub fn name(self) -> &'static str {
        match self {
            WeightStatistic::Largest => "largest",
            WeightStatistic::TopTwo => "top_two",
            WeightStatistic::SumOfSquares => "sum_of_squares",
        }
    }
}

/// Pass/fail checks attached to a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// Replica mean of the free energy within `tolerance` of the limit.
    MeanFreeEnergy { beta: f64, tolerance: f64 },
    /// The replica-mean curve over all betas is convex and nondecreasing,
    /// and its largest deviation from the limit sits within `window` of
    /// the critical beta.
    CurveShape { window: f64 },
    /// Pooled rate estimate inside `[lo, hi]`.
    RateInRange { interval: OpenInterval, lo: f64, hi: f64 },
    /// No replica has a configuration in the interval.
    NoHits { interval: OpenInterval },
    /// The fraction of configurations with `|H/N| > radius` is below
    /// `max_fraction` in every replica and below `typical_fraction` in at
    /// least `min_typical` replicas.
    MassOutside {
        radius: f64,
        max_fraction: f64,
        typical_fraction: f64,
        min_typical: u32,
    },
    /// `max |rho(sigma) - 2^-K| < tolerance` in every replica.
    MarginalUniform { beta: f64, tolerance: f64 },
    /// Share of replicas with no exceedance within `tolerance` of the limit.
    ZeroCountFraction { b: f64, tolerance: f64 },
    /// Chi-square test of exceedance counts `0..=k_max` (tail pooled).
    CountChiSquare { b: f64, k_max: u32, level: f64 },
    /// KS test of pooled exceedance positions against `Exp(1)` above `b`.
    PositionsKs { b: f64, level: f64 },
    /// Two-sample KS between Gibbs spectra and Poisson-construction draws.
    GibbsVsPd { statistic: WeightStatistic, max_statistic: f64 },
    /// Two-sample KS between the Poisson and stick-breaking constructions.
    PoissonVsStick { statistic: WeightStatistic, max_statistic: f64 },
    /// Every bound inequality over the built-in parameter grid.
    ExactBounds,
}

impl Check {
    pub fn name(&self) -> &'static str {
        match self {
            Check::MeanFreeEnergy { .. } => "mean_free_energy",
            Check::CurveShape { .. } => "curve_shape",
            Check::RateInRange { .. } => "rate_in_range",
            Check::NoHits { .. } => "no_hits",
            Check::MassOutside { .. } => "mass_outside",
            Check::MarginalUniform { .. } => "marginal_uniform",
            Check::ZeroCountFraction { .. } => "zero_count_fraction",
            Check::CountChiSquare { .. } => "count_chi_square",
            Check::PositionsKs { .. } => "positions_ks",
            Check::GibbsVsPd { .. } => "gibbs_vs_pd",
            Check::PoissonVsStick { .. } => "poisson_vs_stick",
            Check::ExactBounds => "exact_bounds",
        }
    }

    fn experiment(&self) -> ExperimentKind {
        match self {
            Check::MeanFreeEnergy { .. } | Check::CurveShape { .. } => ExperimentKind::FreeEnergy,
            Check::RateInRange { .. } | Check::NoHits { .. } | Check::MassOutside { .. } => {
                ExperimentKind::RateFunction
            }
            Check::MarginalUniform { .. } => ExperimentKind::Marginals,
            Check::ZeroCountFraction { .. } | Check::CountChiSquare { .. } | Check::PositionsKs { .. } => {
                ExperimentKind::Exceedance
            }
            Check::GibbsVsPd { .. } | Check::PoissonVsStick { .. } => ExperimentKind::PdCompare,
            Check::ExactBounds => ExperimentKind::Diagnostics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub experiment: ExperimentKind,
    pub env: EnvSpec,
    #[serde(default)]
    pub betas: Vec<f64>,
    pub replicas: u32,
    pub master_seed: u64,
    #[serde(default)]
    pub intervals: Vec<OpenInterval>,
    #[serde(default)]
    pub k_marginal: u32,
    #[serde(default)]
    pub b_levels: Vec<f64>,
    #[serde(default = "default_top_m")]
    pub top_m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pd: Option<PdBlock>,
    #[serde(default)]
    pub checks: Vec<Check>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: Workers,
}

/// 1-based line and column of the first occurrence of `"key"` in `text`.
fn locate(text: &str, key: &str) -> Option<(usize, usize)> {
    let needle = format!("\"{key}\"");
    let offset = text.find(&needle)?;
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    Some((line, column))
}

struct Problem {
    key: &'static str,
    message: String,
}

fn problem(key: &'static str, message: impl Into<String>) -> Problem {
    Problem {
        key,
        message: message.into(),
    }
}

impl ExperimentManifest {
    /// Parses and validates a manifest.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let manifest: Self = serde_json::from_str(text).map_err(|e| {
            CliError::Invalid(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        manifest.validate_in(text)?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Validates against the serialized form of the manifest itself.
    pub fn validate(&self) -> Result<(), CliError> {
        self.validate_in(&self.to_json())
    }

    fn validate_in(&self, text: &str) -> Result<(), CliError> {
        self.problem().map_or(Ok(()), |p| {
            let at = locate(text, p.key).map_or_else(String::new, |(l, c)| format!("line {l}, column {c}: "));
            Err(CliError::Invalid(format!("{at}{}: {}", p.key, p.message)))
        })
    }

    pub fn environment(&self) -> Result<Environment, CliError> {
        Environment::new(self.env.alpha, self.env.n).map_err(|e| CliError::Invalid(e.to_string()))
    }

    /// Draws per PD construction.
    pub fn pd_draws(&self) -> u32 {
        self.pd.and_then(|p| p.draws).unwrap_or(self.replicas)
    }

    fn problem(&self) -> Option<Problem> {
        let kind = self.experiment;
        if let Err(e) = Environment::new(self.env.alpha, self.env.n) {
            return Some(problem("env", e.to_string()));
        }
        if kind != ExperimentKind::Diagnostics && self.env.n > MAX_SPINS {
            return Some(problem("n", format!("N = {} exceeds the limit of {MAX_SPINS}", self.env.n)));
        }
        if self.replicas == 0 {
            return Some(problem("replicas", "must be at least 1"));
        }
        let needs_betas = matches!(
            kind,
            ExperimentKind::FreeEnergy | ExperimentKind::Marginals | ExperimentKind::PdCompare
        );
        if needs_betas && self.betas.is_empty() {
            return Some(problem("betas", format!("a {} experiment needs at least one beta", kind.name())));
        }
        if let Some(b) = self.betas.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Some(problem("betas", format!("{b} is not a nonnegative number")));
        }
        if self.k_marginal > self.env.n || self.k_marginal > MAX_MARGINAL_BITS {
            return Some(problem(
                "k_marginal",
                format!("K = {} must not exceed N = {} or {MAX_MARGINAL_BITS}", self.k_marginal, self.env.n),
            ));
        }
        if self.top_m == 0 {
            return Some(problem("top_m", "must be at least 1"));
        }
        if let Some(b) = self.b_levels.iter().find(|b| !b.is_finite()) {
            return Some(problem("b_levels", format!("{b} is not finite")));
        }
        if kind == ExperimentKind::Exceedance && self.b_levels.is_empty() {
            return Some(problem("b_levels", "an exceedance experiment needs at least one level"));
        }
        if kind == ExperimentKind::RateFunction && self.intervals.is_empty() {
            return Some(problem("intervals", "a rate_function experiment needs at least one interval"));
        }
        if kind == ExperimentKind::Marginals && self.k_marginal == 0 {
            return Some(problem("k_marginal", "a marginals experiment needs K >= 1"));
        }
        if kind == ExperimentKind::PdCompare {
            if let Some(p) = self.pd_problem() {
                return Some(p);
            }
        } else if self.pd.is_some() {
            return Some(problem("pd", "only a pd_compare experiment takes a pd block"));
        }
        for check in &self.checks {
            if check.experiment() != kind {
                return Some(problem(
                    "checks",
                    format!("check {} does not apply to a {} experiment", check.name(), kind.name()),
                ));
            }
            if let Some(p) = self.check_problem(check) {
                return Some(p);
            }
        }
        None
    }

    fn pd_problem(&self) -> Option<Problem> {
        let [beta] = self.betas[..] else {
            return Some(problem("betas", "a pd_compare experiment takes exactly one beta"));
        };
        if beta <= 1.0 {
            return Some(problem("betas", format!("pd_compare needs beta > 1, got {beta}")));
        }
        let pd = self.pd.unwrap_or_default();
        if let Some(m) = pd.m {
            if (m - 1.0 / beta).abs() > 1e-12 {
                return Some(problem("m", format!("m = {m} must equal 1/beta = {}", 1.0 / beta)));
            }
        }
        if !(pd.epsilon_mass > 0.0 && pd.epsilon_mass < 1.0) {
            return Some(problem("epsilon_mass", "must lie in (0, 1)"));
        }
        if pd.draws == Some(0) {
            return Some(problem("draws", "must be at least 1"));
        }
        if pd.max_points == 0 {
            return Some(problem("max_points", "must be at least 1"));
        }
        if pd.stick_length == 0 {
            return Some(problem("stick_length", "must be at least 1"));
        }
        None
    }

    fn check_problem(&self, check: &Check) -> Option<Problem> {
        let has_beta = |b: f64| self.betas.iter().any(|x| x.to_bits() == b.to_bits());
        let has_level = |b: f64| self.b_levels.iter().any(|x| x.to_bits() == b.to_bits());
        let has_interval = |i: &OpenInterval| self.intervals.contains(i);
        match check {
            Check::MeanFreeEnergy { beta, .. } | Check::MarginalUniform { beta, .. } if !has_beta(*beta) => {
                Some(problem("checks", format!("beta {beta} is not in betas")))
            }
            Check::MeanFreeEnergy { beta, .. } if *beta <= 0.0 => {
                Some(problem("checks", "mean_free_energy needs beta > 0"))
            }
            Check::CurveShape { .. } if self.betas.len() < 3 => {
                Some(problem("checks", "curve_shape needs at least three betas"))
            }
            Check::RateInRange { interval, .. } | Check::NoHits { interval } if !has_interval(interval) => Some(
                problem("checks", format!("interval ({}, {}) is not in intervals", interval.lo(), interval.hi())),
            ),
            Check::MassOutside { radius, .. } => {
                let (lo, hi) = outside_intervals(*radius)?;
                if has_interval(&lo) && has_interval(&hi) {
                    None
                } else {
                    Some(problem(
                        "checks",
                        format!("mass_outside needs intervals (null, {}) and ({radius}, null)", -radius),
                    ))
                }
            }
            Check::ZeroCountFraction { b, .. } | Check::CountChiSquare { b, .. } | Check::PositionsKs { b, .. }
                if !has_level(*b) =>
            {
                Some(problem("checks", format!("level {b} is not in b_levels")))
            }
            Check::CountChiSquare { k_max, .. } if *k_max == 0 => {
                Some(problem("checks", "count_chi_square needs k_max >= 1"))
            }
            _ => None,
        }
    }
}

/// The intervals `(-inf, -r)` and `(r, inf)`.
pub fn outside_intervals(radius: f64) -> Option<(OpenInterval, OpenInterval)> {
    Some((
        OpenInterval::new(f64::NEG_INFINITY, -radius).ok()?,
        OpenInterval::new(radius, f64::INFINITY).ok()?,
    ))
}
