//! Executes a manifest and writes its artifacts.
//!
//! Replicas and PD draws are independent tasks on a pool of `workers`
//! threads. Results are collected in task order, so every CSV is identical
//! for any pool size.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use remlab_core::engine::{
    exceedance_positions, pooled_rate_estimate, rate_estimate, run_replica, ReplicaResult, ReplicaSpec,
};
use remlab_core::pointprocess::{sample_pd_poisson, sample_pd_stick, PdParams, WeightSequence};
use remlab_core::rng::{label, seed_derivation, CounterRng, StreamKey};
use remlab_core::stats::{chi_square_gof, ks_one_sample, ks_two_sample, summarize, TestReport};
use remlab_core::theory::{self, critical_beta, diagnose, free_energy_limit, poisson_count_pmf};
use remlab_core::Environment;
use serde::Serialize;

use crate::bounds::bound_rows;
use crate::error::CliError;
use crate::manifest::{outside_intervals, Check, ExperimentKind, ExperimentManifest, WeightStatistic};
use crate::table::{num, Table};

/// Level of the two-sample KS reports attached to threshold checks.
const REPORT_LEVEL: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<TestReport>,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, value: f64, detail: String) -> Self {
        Self {
            name,
            passed,
            value,
            detail,
            report: None,
        }
    }
}

/// In-memory result of a run: named CSV bodies and check outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub files: Vec<(&'static str, String)>,
    pub checks: Vec<CheckOutcome>,
}

impl Artifacts {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| *n == name).map(|(_, body)| body.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub artifacts: Artifacts,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.artifacts.passed()
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start {workers} workers: {e}")))
}

fn replica_spec(m: &ExperimentManifest, env: Environment, betas: Vec<f64>, replica: u32) -> ReplicaSpec {
    ReplicaSpec {
        env,
        betas,
        k_marginal: m.k_marginal,
        intervals: m.intervals.clone(),
        b_levels: m.b_levels.clone(),
        top_m: m.top_m,
        master_seed: m.master_seed,
        replica_id: replica,
    }
}

fn run_replicas(m: &ExperimentManifest, betas: &[f64]) -> Result<Vec<ReplicaResult>, CliError> {
    let env = m.environment()?;
    (0..m.replicas)
        .into_par_iter()
        .map(|r| run_replica(&replica_spec(m, env, betas.to_vec(), r)).map_err(CliError::from))
        .collect()
}

/// Runs the manifest on `workers` threads without touching the file system.
pub fn execute(m: &ExperimentManifest, workers: usize) -> Result<Artifacts, CliError> {
    m.validate()?;
    pool(workers)?.install(|| match m.experiment {
        ExperimentKind::FreeEnergy => free_energy(m),
        ExperimentKind::RateFunction => rate_function(m),
        ExperimentKind::Marginals => marginals(m),
        ExperimentKind::Exceedance => exceedance(m),
        ExperimentKind::PdCompare => pd_compare(m),
        ExperimentKind::Diagnostics => diagnostics(m),
    })
}

fn limit_at(alpha: f64, beta: f64) -> Result<f64, CliError> {
    if beta == 0.0 {
        return Ok(std::f64::consts::LN_2);
    }
    Ok(free_energy_limit(alpha, beta)?)
}

fn free_energy(m: &ExperimentManifest) -> Result<Artifacts, CliError> {
    let results = run_replicas(m, &m.betas)?;
    let n = f64::from(m.env.n);
    let mut table = Table::new(&["beta", "replica", "log_z", "free_energy"]);
    let mut overlay = Table::new(&["beta", "limit"]);
    let mut means = Vec::with_capacity(m.betas.len());
    for (slot, &beta) in m.betas.iter().enumerate() {
        let values: Vec<f64> = results.iter().map(|r| r.log_z[slot] / n).collect();
        for (replica, r) in results.iter().enumerate() {
            table.row([num(beta), replica.to_string(), num(r.log_z[slot]), num(values[replica])]);
        }
        overlay.row([num(beta), num(limit_at(m.env.alpha, beta)?)]);
        means.push(values.iter().sum::<f64>() / values.len() as f64);
    }
    let mut checks = Vec::new();
    for check in &m.checks {
        checks.push(match *check {
            Check::MeanFreeEnergy { beta, tolerance } => {
                let slot = m.betas.iter().position(|b| *b == beta).expect("validated");
                let values: Vec<f64> = results.iter().map(|r| r.log_z[slot] / n).collect();
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let limit = limit_at(m.env.alpha, beta)?;
                let spread = summarize(&values).map_or(String::new(), |s| format!(", std error {:.1e}", s.std_error));
                CheckOutcome::new(
                    check.name(),
                    (mean - limit).abs() < tolerance,
                    mean,
                    format!("beta {beta}: mean {mean:.6} vs limit {limit:.6} (tolerance {tolerance}{spread})"),
                )
            }
            Check::CurveShape { window } => curve_shape(m, &means, window)?,
            _ => unreachable!("validated"),
        });
    }
    Ok(Artifacts {
        files: vec![("results.csv", table.finish()), ("overlay.csv", overlay.finish())],
        checks,
    })
}

fn curve_shape(m: &ExperimentManifest, means: &[f64], window: f64) -> Result<CheckOutcome, CliError> {
    let mut points: Vec<(f64, f64)> = m.betas.iter().copied().zip(means.iter().copied()).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let slopes: Vec<f64> = points.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    let nondecreasing = slopes.iter().all(|&s| s >= 0.0);
    let convex = slopes.windows(2).all(|s| s[1] >= s[0]);
    let mut worst = (0.0, f64::NEG_INFINITY);
    for &(beta, mean) in &points {
        let dev = (mean - limit_at(m.env.alpha, beta)?).abs();
        if dev > worst.1 {
            worst = (beta, dev);
        }
    }
    let critical = critical_beta(m.env.alpha)?;
    let near = (worst.0 - critical).abs() <= window;
    Ok(CheckOutcome::new(
        "curve_shape",
        nondecreasing && convex && near,
        worst.0,
        format!(
            "nondecreasing {nondecreasing}, convex {convex}, largest deviation {:.4} at beta {} (critical {critical:.4}, window {window})",
            worst.1, worst.0
        ),
    ))
}

fn spins(sigma: usize, k: u32) -> String {
    (0..k).map(|j| if sigma >> j & 1 == 1 { '+' } else { '-' }).collect()
}

fn marginals(m: &ExperimentManifest) -> Result<Artifacts, CliError> {
    let results = run_replicas(m, &m.betas)?;
    let k = m.k_marginal;
    let uniform = 0.5f64.powi(k as i32);
    let mut table = Table::new(&["beta", "replica", "sigma", "spins", "rho"]);
    let mut overlay = Table::new(&["beta", "sigma", "spins", "uniform"]);
    for (slot, &beta) in m.betas.iter().enumerate() {
        for (replica, r) in results.iter().enumerate() {
            for (sigma, &rho) in r.marginal[slot].iter().enumerate() {
                table.row([num(beta), replica.to_string(), sigma.to_string(), spins(sigma, k), num(rho)]);
            }
        }
        for sigma in 0..1usize << k {
            overlay.row([num(beta), sigma.to_string(), spins(sigma, k), num(uniform)]);
        }
    }
    let checks = m
        .checks
        .iter()
        .map(|check| match *check {
            Check::MarginalUniform { beta, tolerance } => {
                let slot = m.betas.iter().position(|b| *b == beta).expect("validated");
                let worst = results
                    .iter()
                    .flat_map(|r| r.marginal[slot].iter().map(|p| (p - uniform).abs()))
                    .fold(0.0, f64::max);
                CheckOutcome::new(
                    check.name(),
                    worst < tolerance,
                    worst,
                    format!("beta {beta}: max |rho - 2^-{k}| = {worst:.6} (tolerance {tolerance})"),
                )
            }
            _ => unreachable!("validated"),
        })
        .collect();
    Ok(Artifacts {
        files: vec![("results.csv", table.finish()), ("overlay.csv", overlay.finish())],
        checks,
    })
}

fn rate_betas(m: &ExperimentManifest) -> Vec<f64> {
    if m.betas.is_empty() {
        vec![0.0]
    } else {
        m.betas.clone()
    }
}

fn rate_function(m: &ExperimentManifest) -> Result<Artifacts, CliError> {
    let results = run_replicas(m, &rate_betas(m))?;
    let env = m.environment()?;
    let n = m.env.n;
    let configurations = 2f64.powi(n as i32);
    let mut table = Table::new(&["interval_lo", "interval_hi", "replica", "hits", "fraction", "rate"]);
    let mut overlay = Table::new(&["interval_lo", "interval_hi", "m", "limit_rate", "finite_n_rate"]);
    for &interval in &m.intervals {
        for (replica, r) in results.iter().enumerate() {
            let hits = r.interval_hits(interval)?;
            let rate = rate_estimate(r, interval)?.value();
            table.row([
                num(interval.lo()),
                num(interval.hi()),
                replica.to_string(),
                hits.to_string(),
                num(hits as f64 / configurations),
                num(rate),
            ]);
        }
        let inf = interval.inf_abs();
        let limit = theory::rate_function(m.env.alpha, inf)?.to_f64();
        let q = env.interval_probability(interval);
        overlay.row([
            num(interval.lo()),
            num(interval.hi()),
            num(inf),
            num(limit),
            num(-q.ln() / f64::from(n)),
        ]);
    }
    let mut checks = Vec::new();
    for check in &m.checks {
        checks.push(match *check {
            Check::RateInRange { interval, lo, hi } => {
                let rate = pooled_rate_estimate(&results, interval)?.value();
                CheckOutcome::new(
                    check.name(),
                    (lo..=hi).contains(&rate),
                    rate,
                    format!(
                        "pooled rate on ({}, {}) over {} replicas: {rate:.5}, required [{lo}, {hi}]",
                        interval.lo(),
                        interval.hi(),
                        results.len()
                    ),
                )
            }
            Check::NoHits { interval } => {
                let hits: Vec<u64> = results.iter().map(|r| r.interval_hits(interval)).collect::<Result<_, _>>()?;
                let with_hits = hits.iter().filter(|&&h| h > 0).count();
                CheckOutcome::new(
                    check.name(),
                    with_hits == 0,
                    with_hits as f64,
                    format!(
                        "({}, {}): {with_hits} of {} replicas have hits (total {})",
                        interval.lo(),
                        interval.hi(),
                        results.len(),
                        hits.iter().sum::<u64>()
                    ),
                )
            }
            Check::MassOutside {
                radius,
                max_fraction,
                typical_fraction,
                min_typical,
            } => {
                let (below, above) = outside_intervals(radius).expect("validated");
                let fractions: Vec<f64> = results
                    .iter()
                    .map(|r| Ok((r.interval_hits(below)? + r.interval_hits(above)?) as f64 / configurations))
                    .collect::<Result<_, CliError>>()?;
                let largest = fractions.iter().copied().fold(0.0, f64::max);
                let typical = fractions.iter().filter(|&&f| f < typical_fraction).count();
                CheckOutcome::new(
                    check.name(),
                    largest < max_fraction && typical >= min_typical as usize,
                    largest,
                    format!(
                        "|H/N| > {radius}: largest fraction {largest:.5} (bound {max_fraction}), \
                         {typical} of {} replicas below {typical_fraction} (need {min_typical})",
                        fractions.len()
                    ),
                )
            }
            _ => unreachable!("validated"),
        });
    }
    Ok(Artifacts {
        files: vec![("results.csv", table.finish()), ("overlay.csv", overlay.finish())],
        checks,
    })
}

fn exceedance(m: &ExperimentManifest) -> Result<Artifacts, CliError> {
    let env = m.environment()?;
    let lowest = m.b_levels.iter().copied().fold(f64::INFINITY, f64::min);
    // one pass per replica at the lowest level yields the counts of all levels
    let positions: Vec<Vec<f64>> = (0..m.replicas)
        .into_par_iter()
        .map(|r| {
            let mut found = exceedance_positions(&replica_spec(m, env, vec![0.0], r), lowest)?;
            found.sort_unstable_by(|a, b| b.total_cmp(a));
            Ok(found)
        })
        .collect::<Result<_, remlab_core::Error>>()?;
    let counts = |b: f64| -> Vec<u64> {
        positions
            .iter()
            .map(|p| p.iter().take_while(|&&t| t >= b).count() as u64)
            .collect()
    };
    let mut table = Table::new(&["b", "replica", "count"]);
    let mut overlay = Table::new(&["b", "k", "pmf"]);
    for &b in &m.b_levels {
        for (replica, c) in counts(b).iter().enumerate() {
            table.row([num(b), replica.to_string(), c.to_string()]);
        }
        for k in 0..=10 {
            overlay.row([num(b), k.to_string(), num(poisson_count_pmf(b, k))]);
        }
    }
    let mut pos_table = Table::new(&["replica", "position"]);
    for (replica, p) in positions.iter().enumerate() {
        for &t in p {
            pos_table.row([replica.to_string(), num(t)]);
        }
    }
    let mut checks = Vec::new();
    for check in &m.checks {
        checks.push(match *check {
            Check::ZeroCountFraction { b, tolerance } => {
                let c = counts(b);
                let zero = c.iter().filter(|&&x| x == 0).count() as f64 / c.len() as f64;
                let target = poisson_count_pmf(b, 0);
                CheckOutcome::new(
                    check.name(),
                    (zero - target).abs() < tolerance,
                    zero,
                    format!("b {b}: P(count = 0) = {zero:.4} vs {target:.6} (tolerance {tolerance})"),
                )
            }
            Check::CountChiSquare { b, k_max, level } => {
                let c = counts(b);
                let mut observed = vec![0u64; k_max as usize + 1];
                for &x in &c {
                    observed[(x as usize).min(k_max as usize)] += 1;
                }
                let mut probs: Vec<f64> = (0..k_max).map(|k| poisson_count_pmf(b, k)).collect();
                probs.push(1.0 - probs.iter().sum::<f64>());
                let report = chi_square_gof(&observed, &probs, level)?;
                CheckOutcome {
                    report: Some(report.clone()),
                    ..CheckOutcome::new(
                        check.name(),
                        report.passed(),
                        report.p_value,
                        format!(
                            "b {b}: chi-square {:.4} over {} bins, p = {:.4} (level {level})",
                            report.statistic, report.sample_sizes.1, report.p_value
                        ),
                    )
                }
            }
            Check::PositionsKs { b, level } => {
                let pooled: Vec<f64> = positions.iter().flatten().copied().filter(|&t| t >= b).collect();
                let report = ks_one_sample(&pooled, |t| if t <= b { 0.0 } else { -(-(t - b)).exp_m1() }, level)?;
                CheckOutcome {
                    report: Some(report.clone()),
                    ..CheckOutcome::new(
                        check.name(),
                        report.passed(),
                        report.p_value,
                        format!(
                            "b {b}: {} pooled positions, D = {:.4}, p = {:.4} (level {level})",
                            pooled.len(),
                            report.statistic,
                            report.p_value
                        ),
                    )
                }
            }
            _ => unreachable!("validated"),
        });
    }
    Ok(Artifacts {
        files: vec![
            ("results.csv", table.finish()),
            ("overlay.csv", overlay.finish()),
            ("positions.csv", pos_table.finish()),
        ],
        checks,
    })
}

struct WeightStats {
    largest: f64,
    top_two: f64,
    sum_of_squares: f64,
    deficit: f64,
}

impl WeightStats {
    fn of_sequence(w: &WeightSequence) -> Self {
        Self {
            largest: w.largest(),
            top_two: w.top_two(),
            sum_of_squares: w.sum_of_squares(),
            deficit: w.deficit(),
        }
    }

    fn of_spectrum(weights: &[f64], tail_mass: f64) -> Self {
        Self {
            largest: weights.first().copied().unwrap_or(0.0),
            top_two: weights.iter().take(2).sum(),
            sum_of_squares: weights.iter().map(|w| w * w).sum(),
            deficit: tail_mass,
        }
    }

    fn get(&self, s: WeightStatistic) -> f64 {
        match s {
            WeightStatistic::Largest => self.largest,
            WeightStatistic::TopTwo => self.top_two,
            WeightStatistic::SumOfSquares => self.sum_of_squares,
        }
    }
}

fn pd_compare(m: &ExperimentManifest) -> Result<Artifacts, CliError> {
    let beta = m.betas[0];
    let block = m.pd.unwrap_or_default();
    let params = PdParams {
        epsilon_mass: block.epsilon_mass,
        max_points: block.max_points,
        ..PdParams::for_beta(beta)?
    };
    let draws = m.pd_draws();
    let gibbs: Vec<WeightStats> = run_replicas(m, &m.betas)?
        .iter()
        .map(|r| WeightStats::of_spectrum(&r.spectrum[0].weights, r.spectrum[0].tail_mass))
        .collect();
    let poisson: Vec<WeightStats> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = CounterRng::new(seed_derivation(m.master_seed, i, label::PD_POISSON), 0);
            sample_pd_poisson(beta, &params, &mut rng).map(|w| WeightStats::of_sequence(&w))
        })
        .collect::<Result<_, _>>()?;
    let stick: Vec<WeightStats> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = CounterRng::new(seed_derivation(m.master_seed, i, label::PD_STICK), 0);
            sample_pd_stick(params.m, block.stick_length, &mut rng).map(|w| WeightStats::of_sequence(&w))
        })
        .collect::<Result<_, _>>()?;

    let mut table = Table::new(&["source", "draw", "largest", "top_two", "sum_of_squares", "deficit"]);
    for (source, rows) in [("gibbs", &gibbs), ("pd_poisson", &poisson), ("pd_stick", &stick)] {
        for (i, s) in rows.iter().enumerate() {
            table.row([
                source.to_string(),
                i.to_string(),
                num(s.largest),
                num(s.top_two),
                num(s.sum_of_squares),
                num(s.deficit),
            ]);
        }
    }
    // E[sum w_i^2] = 1 - m under PD(m, 0)
    let mut overlay = Table::new(&["beta", "m", "mean_sum_of_squares"]);
    overlay.row([num(beta), num(params.m), num(1.0 - params.m)]);

    let column = |rows: &[WeightStats], s: WeightStatistic| rows.iter().map(|r| r.get(s)).collect::<Vec<f64>>();
    let mut checks = Vec::new();
    for check in &m.checks {
        let (statistic, max_statistic, xs, ys, what) = match *check {
            Check::GibbsVsPd { statistic, max_statistic } => (
                statistic,
                max_statistic,
                column(&gibbs, statistic),
                column(&poisson, statistic),
                "Gibbs spectra vs Poisson construction",
            ),
            Check::PoissonVsStick { statistic, max_statistic } => (
                statistic,
                max_statistic,
                column(&poisson, statistic),
                column(&stick, statistic),
                "Poisson construction vs stick breaking",
            ),
            _ => unreachable!("validated"),
        };
        let report = ks_two_sample(&xs, &ys, REPORT_LEVEL)?;
        checks.push(CheckOutcome {
            report: Some(report.clone()),
            ..CheckOutcome::new(
                check.name(),
                report.statistic < max_statistic,
                report.statistic,
                format!(
                    "{what}, {}: D = {:.4} ({} vs {}), required < {max_statistic}, p = {:.4}",
                    statistic.name(),
                    report.statistic,
                    xs.len(),
                    ys.len(),
                    report.p_value
                ),
            )
        });
    }
    Ok(Artifacts {
        files: vec![("results.csv", table.finish()), ("overlay.csv", overlay.finish())],
        checks,
    })
}

fn diagnostics(m: &ExperimentManifest) -> Result<Artifacts, CliError> {
    let rows = bound_rows()?;
    let opt = |x: Option<f64>| x.map_or_else(String::new, num);
    let mut table = Table::new(&[
        "bound",
        "alpha",
        "n",
        "beta",
        "delta",
        "interval_lo",
        "interval_hi",
        "value",
        "limit",
        "holds",
    ]);
    for r in &rows {
        table.row([
            r.bound.to_string(),
            num(r.alpha),
            r.n.to_string(),
            opt(r.beta),
            opt(r.delta),
            opt(r.interval.map(|i| i.lo())),
            opt(r.interval.map(|i| i.hi())),
            num(r.value),
            num(r.limit),
            r.holds.to_string(),
        ]);
    }
    let betas: Vec<f64> = if m.betas.is_empty() {
        (1..=8).map(|i| 0.25 * f64::from(i)).collect()
    } else {
        m.betas.clone()
    };
    let mut overlay = Table::new(&["alpha", "beta", "critical_beta", "regime", "free_energy_limit"]);
    for &beta in &betas {
        if beta == 0.0 {
            continue;
        }
        let d = diagnose(m.env.alpha, beta)?;
        overlay.row([
            num(m.env.alpha),
            num(beta),
            num(d.beta_critical),
            d.regime.to_string(),
            num(free_energy_limit(m.env.alpha, beta)?),
        ]);
    }
    let failing: Vec<&crate::bounds::BoundRow> = rows.iter().filter(|r| !r.holds).collect();
    let checks = m
        .checks
        .iter()
        .map(|check| {
            let first = failing.first().map_or(String::new(), |r| {
                format!("; first failure {} at n {} beta {:?} delta {:?}", r.bound, r.n, r.beta, r.delta)
            });
            CheckOutcome::new(
                check.name(),
                failing.is_empty(),
                failing.len() as f64,
                format!("{} of {} inequalities fail{first}", failing.len(), rows.len()),
            )
        })
        .collect();
    Ok(Artifacts {
        files: vec![("results.csv", table.finish()), ("overlay.csv", overlay.finish())],
        checks,
    })
}

#[derive(Serialize)]
struct StreamLayout {
    layout: &'static str,
    energy_keys: Vec<StreamKey>,
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: &'static str,
    version: &'static str,
    master_seed: u64,
    replicas: u32,
    workers: usize,
    started_unix_ms: u128,
    elapsed_ms: u128,
    streams: StreamLayout,
    files: Vec<&'static str>,
    passed: bool,
    checks: &'a [CheckOutcome],
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Runs the manifest with its own `workers` and `output_dir` and writes
/// every artifact.
pub fn run_experiment(m: &ExperimentManifest) -> Result<RunOutcome, CliError> {
    m.validate()?;
    let workers = m.workers.resolve();
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
    let clock = Instant::now();
    let artifacts = execute(m, workers)?;
    let dir = m.output_dir.clone();
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    for (name, body) in &artifacts.files {
        write_file(&dir, name, body)?;
    }
    let mut resolved = m.clone();
    resolved.workers = crate::manifest::Workers::Fixed(workers);
    write_file(&dir, "manifest.resolved.json", &(resolved.to_json() + "\n"))?;
    let replicas = if m.experiment == ExperimentKind::Diagnostics { 0 } else { m.replicas };
    let summary = Summary {
        experiment: m.experiment.name(),
        version: env!("CARGO_PKG_VERSION"),
        master_seed: m.master_seed,
        replicas: m.replicas,
        workers,
        started_unix_ms: started,
        elapsed_ms: clock.elapsed().as_millis(),
        streams: StreamLayout {
            layout: "key = [mix64(master_seed), replica_id << 32 | label], counter = [block, index, 0, 0]; \
                     labels: energy 0, pd_poisson 1, pd_stick 2",
            energy_keys: (0..replicas).map(|r| seed_derivation(m.master_seed, r, label::ENERGY)).collect(),
        },
        files: artifacts.files.iter().map(|(n, _)| *n).collect(),
        passed: artifacts.passed(),
        checks: &artifacts.checks,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&dir, "summary.json", &(json + "\n"))?;
    Ok(RunOutcome {
        output_dir: dir,
        artifacts,
    })
}
