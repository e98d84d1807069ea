//! Streaming enumeration of every configuration of one replica.
//!
//! Configuration `sigma` is identified with an index in `0..2^N`: bit `j` of
//! the index is spin `j`, with `1` meaning `+1`. The low `K` bits therefore
//! hold the first `K` spins, and the marginal of a `K`-block is a bitmask
//! reduction.
//!
//! Energies are never stored. A [`RandomField`] regenerates the energy of an
//! index from its own Philox substream, so the index range can be cut into
//! fixed chunks that are evaluated in parallel and merged in chunk order.
//! The merge order never depends on the thread count, which makes every
//! result bitwise reproducible.

use rayon::prelude::*;
use serde::Serialize;

use crate::environment::{Environment, OpenInterval};
use crate::error::{Error, Result};
use crate::rng::{label, seed_derivation, CounterRng, StreamKey};
use crate::theory::shift_constant;

pub const MAX_SPINS: u32 = 30;
pub const MAX_MARGINAL_BITS: u32 = 20;
pub const DEFAULT_TOP_M: usize = 1024;

const CHUNK_BITS: u32 = 14;
const CHUNKS_PER_WORKER: usize = 8;

/// Random access to the energies of one replica.
pub trait EnergyField: Sync {
    fn n(&self) -> u32;
    /// Energy of configuration `index`; callers guarantee `index < 2^n`.
    fn energy(&self, index: u64) -> f64;
}

/// Energies drawn from an [`Environment`], one Philox substream per index.
#[derive(Debug, Clone, Copy)]
pub struct RandomField {
    env: Environment,
    key: StreamKey,
}

impl RandomField {
    pub fn new(env: Environment, master_seed: u64, replica_id: u32) -> Self {
        Self {
            env,
            key: seed_derivation(master_seed, replica_id, label::ENERGY),
        }
    }
}

impl EnergyField for RandomField {
    fn n(&self) -> u32 {
        self.env.n()
    }

    #[inline]
    fn energy(&self, index: u64) -> f64 {
        self.env.sample_energy(&mut CounterRng::new(self.key, index))
    }
}

/// A field with explicitly given energies, indexed by configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedField {
    n: u32,
    energies: Vec<f64>,
}

impl TabulatedField {
    /// `energies.len()` must be a power of two `2^N` with `N >= 1`.
    pub fn new(energies: Vec<f64>) -> Result<Self> {
        let len = energies.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "tabulated field needs 2^N energies with N >= 1, got {len}"
            )));
        }
        if len.trailing_zeros() > MAX_SPINS {
            return Err(Error::SizeOutOfBudget(len.trailing_zeros()));
        }
        Ok(Self {
            n: len.trailing_zeros(),
            energies,
        })
    }

    /// Materializes every energy of `field`.
    pub fn collect<F: EnergyField + ?Sized>(field: &F) -> Result<Self> {
        Self::new((0..1u64 << field.n()).map(|i| field.energy(i)).collect())
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }
}

impl EnergyField for TabulatedField {
    fn n(&self) -> u32 {
        self.n
    }

    fn energy(&self, index: u64) -> f64 {
        self.energies[index as usize]
    }
}

/// Parameters of one replica.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaSpec {
    pub env: Environment,
    /// Inverse temperatures. `0` is accepted and gives the uniform measure.
    pub betas: Vec<f64>,
    pub k_marginal: u32,
    pub intervals: Vec<OpenInterval>,
    pub b_levels: Vec<f64>,
    pub top_m: usize,
    pub master_seed: u64,
    pub replica_id: u32,
}

impl ReplicaSpec {
    /// A spec with only the given betas and no marginal, interval or
    /// exceedance statistics.
    pub fn new(env: Environment, betas: Vec<f64>, master_seed: u64, replica_id: u32) -> Self {
        Self {
            env,
            betas,
            k_marginal: 0,
            intervals: Vec::new(),
            b_levels: Vec::new(),
            top_m: DEFAULT_TOP_M,
            master_seed,
            replica_id,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.env.n();
        if n > MAX_SPINS {
            return Err(Error::SizeOutOfBudget(n));
        }
        if self.betas.is_empty() {
            return Err(Error::EmptyBetas);
        }
        if let Some(&b) = self.betas.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(Error::InvalidBeta(b));
        }
        if self.k_marginal > n || self.k_marginal > MAX_MARGINAL_BITS {
            return Err(Error::InvalidMarginalBlock {
                k: self.k_marginal,
                n,
            });
        }
        if self.top_m == 0 {
            return Err(Error::InvalidParameter("top_m must be at least 1".into()));
        }
        if let Some(&b) = self.b_levels.iter().find(|b| b.is_nan()) {
            return Err(Error::InvalidParameter(format!("exceedance level {b} is not a number")));
        }
        Ok(())
    }

    pub fn field(&self) -> RandomField {
        RandomField::new(self.env, self.master_seed, self.replica_id)
    }
}

/// Descending Gibbs weights of the `top_m` lowest energies plus the mass of
/// everything else.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsSpectrum {
    pub weights: Vec<f64>,
    pub tail_mass: f64,
}

/// Everything one enumeration pass records about a replica.
///
/// Per-beta vectors are parallel to `betas`, per-interval counts to
/// `intervals` and exceedance counts to `b_levels`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaResult {
    pub n: u32,
    pub betas: Vec<f64>,
    pub log_z: Vec<f64>,
    pub spectrum: Vec<GibbsSpectrum>,
    pub marginal: Vec<Vec<f64>>,
    pub intervals: Vec<OpenInterval>,
    pub interval_hits: Vec<u64>,
    pub b_levels: Vec<f64>,
    pub exceedance: Vec<u64>,
    pub min_energy: f64,
}

fn position(values: &[f64], x: f64) -> Option<usize> {
    values.iter().position(|v| v.to_bits() == x.to_bits())
}

impl ReplicaResult {
    fn beta_slot(&self, beta: f64) -> Result<usize> {
        position(&self.betas, beta).ok_or(Error::UnknownBeta(beta))
    }

    pub fn log_z(&self, beta: f64) -> Result<f64> {
        Ok(self.log_z[self.beta_slot(beta)?])
    }

    pub fn spectrum(&self, beta: f64) -> Result<&GibbsSpectrum> {
        Ok(&self.spectrum[self.beta_slot(beta)?])
    }

    pub fn marginal(&self, beta: f64) -> Result<&[f64]> {
        Ok(&self.marginal[self.beta_slot(beta)?])
    }

    pub fn interval_hits(&self, interval: OpenInterval) -> Result<u64> {
        self.intervals
            .iter()
            .position(|i| *i == interval)
            .map(|slot| self.interval_hits[slot])
            .ok_or(Error::UnknownInterval {
                lo: interval.lo(),
                hi: interval.hi(),
            })
    }
}

/// Online `log(sum(exp(v)))` with a running maximum.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
    count: u64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
            count: 0,
        }
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.sum += (v - self.max).exp();
        }
    }

    pub fn value(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::EmptyStream);
        }
        if self.sum == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.max + self.sum.ln())
    }
}

pub fn log_sum_exp_stream<I: IntoIterator<Item = f64>>(values: I) -> Result<f64> {
    let mut acc = LogSumExp::new();
    for v in values {
        acc.push(v);
    }
    acc.value()
}

/// Energy of configuration `index` in the replica described by `spec`.
pub fn energy_at(spec: &ReplicaSpec, index: u64) -> Result<f64> {
    let n = spec.env.n();
    if n > MAX_SPINS {
        return Err(Error::SizeOutOfBudget(n));
    }
    if index >> n != 0 {
        return Err(Error::IndexOutOfRange { index, n });
    }
    Ok(spec.field().energy(index))
}

// Per-chunk partial sums. Gibbs factors are taken relative to the chunk's
// minimum energy so nothing overflows for any beta.
struct ChunkAcc {
    min: f64,
    sums: Vec<f64>,
    marg: Vec<Vec<f64>>,
    marg_offset: usize,
    top: Vec<(f64, u64)>,
    hits: Vec<u64>,
    exceed: Vec<u64>,
}

struct Plan<'a> {
    n: u32,
    betas: &'a [f64],
    mask: u64,
    intervals: &'a [OpenInterval],
    b_levels: &'a [f64],
    shift: f64,
    top_m: usize,
}

fn by_energy(a: &(f64, u64), b: &(f64, u64)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn keep_lowest(top: &mut Vec<(f64, u64)>, m: usize) {
    if top.len() > m {
        top.select_nth_unstable_by(m - 1, by_energy);
        top.truncate(m);
    }
}

fn chunk_layout(n: u32) -> (u64, usize) {
    let bits = n.min(CHUNK_BITS);
    (1u64 << (n - bits), 1usize << bits)
}

fn process_chunk<F: EnergyField + ?Sized>(field: &F, plan: &Plan, start: u64, len: usize) -> ChunkAcc {
    let energies: Vec<f64> = (start..start + len as u64).map(|i| field.energy(i)).collect();
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);

    // a chunk covers either whole periods of the K-bit pattern or one
    // contiguous slice of it
    let width = (plan.mask + 1) as usize;
    let marg_len = width.min(len);
    let marg_offset = if marg_len < width { (start & plan.mask) as usize } else { 0 };
    let local_mask = (marg_len - 1) as u64;

    let mut sums = Vec::with_capacity(plan.betas.len());
    let mut marg = Vec::with_capacity(plan.betas.len());
    for &beta in plan.betas {
        let mut s = 0.0;
        let mut y = vec![0.0; marg_len];
        for (i, &e) in energies.iter().enumerate() {
            let w = (-beta * (e - min)).exp();
            s += w;
            y[(i as u64 & local_mask) as usize] += w;
        }
        sums.push(s);
        marg.push(y);
    }

    let n = f64::from(plan.n);
    let hits = plan
        .intervals
        .iter()
        .map(|iv| energies.iter().filter(|&&e| iv.contains(e / n)).count() as u64)
        .collect();
    let exceed = plan
        .b_levels
        .iter()
        .map(|&b| energies.iter().filter(|&&e| -(e + plan.shift) >= b).count() as u64)
        .collect();

    let mut top: Vec<(f64, u64)> = energies
        .iter()
        .enumerate()
        .map(|(i, &e)| (e, start + i as u64))
        .collect();
    keep_lowest(&mut top, plan.top_m);

    ChunkAcc {
        min,
        sums,
        marg,
        marg_offset,
        top,
        hits,
        exceed,
    }
}

struct Totals {
    // log reference per beta; the partial sums are relative to it
    refs: Vec<f64>,
    zsum: Vec<f64>,
    marg: Vec<Vec<f64>>,
    top: Vec<(f64, u64)>,
    hits: Vec<u64>,
    exceed: Vec<u64>,
    min: f64,
}

impl Totals {
    fn new(plan: &Plan) -> Self {
        let width = (plan.mask + 1) as usize;
        Self {
            refs: vec![f64::NEG_INFINITY; plan.betas.len()],
            zsum: vec![0.0; plan.betas.len()],
            marg: vec![vec![0.0; width]; plan.betas.len()],
            top: Vec::new(),
            hits: vec![0; plan.intervals.len()],
            exceed: vec![0; plan.b_levels.len()],
            min: f64::INFINITY,
        }
    }

    fn absorb(&mut self, plan: &Plan, chunk: ChunkAcc) {
        self.min = self.min.min(chunk.min);
        for (slot, &beta) in plan.betas.iter().enumerate() {
            let r = -beta * chunk.min;
            if r > self.refs[slot] {
                let scale = (self.refs[slot] - r).exp();
                self.zsum[slot] *= scale;
                self.marg[slot].iter_mut().for_each(|y| *y *= scale);
                self.refs[slot] = r;
            }
            let f = (r - self.refs[slot]).exp();
            self.zsum[slot] += f * chunk.sums[slot];
            let dst = &mut self.marg[slot][chunk.marg_offset..chunk.marg_offset + chunk.marg[slot].len()];
            for (d, s) in dst.iter_mut().zip(&chunk.marg[slot]) {
                *d += f * s;
            }
        }
        self.top.extend(chunk.top);
        if self.top.len() >= 2 * plan.top_m {
            keep_lowest(&mut self.top, plan.top_m);
        }
        self.hits.iter_mut().zip(chunk.hits).for_each(|(a, b)| *a += b);
        self.exceed.iter_mut().zip(chunk.exceed).for_each(|(a, b)| *a += b);
    }

    fn finish(mut self, plan: &Plan) -> ReplicaResult {
        keep_lowest(&mut self.top, plan.top_m);
        self.top.sort_unstable_by(by_energy);
        let mut log_z = Vec::with_capacity(plan.betas.len());
        let mut spectrum = Vec::with_capacity(plan.betas.len());
        let mut marginal = Vec::with_capacity(plan.betas.len());
        for (slot, &beta) in plan.betas.iter().enumerate() {
            let zsum = self.zsum[slot];
            log_z.push(if beta == 0.0 {
                f64::from(plan.n) * std::f64::consts::LN_2
            } else {
                self.refs[slot] + zsum.ln()
            });
            // after the merge the reference is -beta * min over all energies
            let weights: Vec<f64> = self
                .top
                .iter()
                .map(|&(e, _)| (-beta * (e - self.min)).exp() / zsum)
                .filter(|&w| w > 0.0)
                .collect();
            let tail_mass = (1.0 - weights.iter().sum::<f64>()).max(0.0);
            spectrum.push(GibbsSpectrum { weights, tail_mass });
            marginal.push(self.marg[slot].iter().map(|y| y / zsum).collect());
        }
        ReplicaResult {
            n: plan.n,
            betas: plan.betas.to_vec(),
            log_z,
            spectrum,
            marginal,
            intervals: plan.intervals.to_vec(),
            interval_hits: self.hits,
            b_levels: plan.b_levels.to_vec(),
            exceedance: self.exceed,
            min_energy: self.min,
        }
    }
}

fn check_field<F: EnergyField + ?Sized>(field: &F, spec: &ReplicaSpec) -> Result<()> {
    spec.validate()?;
    if field.n() != spec.env.n() {
        return Err(Error::FieldSizeMismatch {
            field: field.n(),
            spec: spec.env.n(),
        });
    }
    Ok(())
}

/// Runs `f` over every chunk in parallel batches and hands the results to
/// `sink` in chunk order.
fn for_each_chunk<F, T, G>(field: &F, n: u32, work: G, mut sink: impl FnMut(T))
where
    F: EnergyField + ?Sized,
    T: Send,
    G: Fn(&F, u64, usize) -> T + Sync,
{
    let (chunks, len) = chunk_layout(n);
    let batch = (rayon::current_num_threads() * CHUNKS_PER_WORKER) as u64;
    let mut first = 0;
    while first < chunks {
        let last = (first + batch).min(chunks);
        let out: Vec<T> = (first..last)
            .into_par_iter()
            .map(|c| work(field, c * len as u64, len))
            .collect();
        out.into_iter().for_each(&mut sink);
        first = last;
    }
}

/// Enumerates the replica's own random field.
pub fn run_replica(spec: &ReplicaSpec) -> Result<ReplicaResult> {
    spec.validate()?;
    run_replica_on(&spec.field(), spec)
}

/// Enumerates an arbitrary field with the statistics requested by `spec`.
/// The seeds in `spec` are ignored.
pub fn run_replica_on<F: EnergyField + ?Sized>(field: &F, spec: &ReplicaSpec) -> Result<ReplicaResult> {
    check_field(field, spec)?;
    let n = spec.env.n();
    let plan = Plan {
        n,
        betas: &spec.betas,
        mask: (1u64 << spec.k_marginal) - 1,
        intervals: &spec.intervals,
        b_levels: &spec.b_levels,
        shift: shift_constant(n)?,
        top_m: spec.top_m,
    };
    let mut totals = Totals::new(&plan);
    for_each_chunk(
        field,
        n,
        |f, start, len| process_chunk(f, &plan, start, len),
        |chunk| totals.absorb(&plan, chunk),
    );
    Ok(totals.finish(&plan))
}

/// `log Z_N(beta) / N`.
pub fn free_energy(result: &ReplicaResult, beta: f64) -> Result<f64> {
    Ok(result.log_z(beta)? / f64::from(result.n))
}

/// Empirical decay rate `-(1/N) log mu_N(interval)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateEstimate {
    Finite(f64),
    /// No configuration fell in the interval; the estimate is `+inf`.
    Empty,
}

impl RateEstimate {
    pub fn is_empty(&self) -> bool {
        matches!(self, RateEstimate::Empty)
    }

    pub fn value(&self) -> f64 {
        match self {
            RateEstimate::Finite(v) => *v,
            RateEstimate::Empty => f64::INFINITY,
        }
    }
}

fn rate_from_hits(hits: u64, configurations: f64, n: u32) -> RateEstimate {
    if hits == 0 {
        RateEstimate::Empty
    } else {
        RateEstimate::Finite(-(hits as f64 / configurations).ln() / f64::from(n))
    }
}

pub fn rate_estimate(result: &ReplicaResult, interval: OpenInterval) -> Result<RateEstimate> {
    let hits = result.interval_hits(interval)?;
    Ok(rate_from_hits(hits, 2f64.powi(result.n as i32), result.n))
}

/// Rate estimate from the hits of several replicas of the same size.
pub fn pooled_rate_estimate(results: &[ReplicaResult], interval: OpenInterval) -> Result<RateEstimate> {
    let first = results.first().ok_or(Error::EmptySample)?;
    let mut hits = 0;
    for r in results {
        if r.n != first.n {
            return Err(Error::InvalidParameter(
                "pooled replicas must share the same N".into(),
            ));
        }
        hits += r.interval_hits(interval)?;
    }
    let configurations = results.len() as f64 * 2f64.powi(first.n as i32);
    Ok(rate_from_hits(hits, configurations, first.n))
}

pub fn exceedance_count(result: &ReplicaResult, b: f64) -> Result<u64> {
    position(&result.b_levels, b)
        .map(|slot| result.exceedance[slot])
        .ok_or(Error::UnknownLevel(b))
}

/// The values `-(H + a_N)` that reach `b`, in configuration order.
pub fn exceedance_positions(spec: &ReplicaSpec, b: f64) -> Result<Vec<f64>> {
    spec.validate()?;
    exceedance_positions_on(&spec.field(), spec, b)
}

pub fn exceedance_positions_on<F: EnergyField + ?Sized>(
    field: &F,
    spec: &ReplicaSpec,
    b: f64,
) -> Result<Vec<f64>> {
    check_field(field, spec)?;
    if b.is_nan() {
        return Err(Error::InvalidParameter("exceedance level is not a number".into()));
    }
    let n = spec.env.n();
    let shift = shift_constant(n)?;
    let mut out = Vec::new();
    for_each_chunk(
        field,
        n,
        |f, start, len| {
            (start..start + len as u64)
                .map(|i| -(f.energy(i) + shift))
                .filter(|&t| t >= b)
                .collect::<Vec<f64>>()
        },
        |found| out.extend(found),
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_one_sample;
    use proptest::prelude::*;

    fn pinned(energies: Vec<f64>, betas: Vec<f64>, k: u32) -> (TabulatedField, ReplicaSpec) {
        let field = TabulatedField::new(energies).unwrap();
        let env = Environment::double_exponential(field.n()).unwrap();
        let mut spec = ReplicaSpec::new(env, betas, 0, 0);
        spec.k_marginal = k;
        (field, spec)
    }

    // Materializes everything and computes each statistic directly.
    fn naive(field: &TabulatedField, spec: &ReplicaSpec) -> ReplicaResult {
        let e = field.energies();
        let n = field.n();
        let shift = shift_constant(n).unwrap();
        let min_energy = e.iter().copied().fold(f64::INFINITY, f64::min);
        let mut order: Vec<usize> = (0..e.len()).collect();
        order.sort_by(|&a, &b| e[a].total_cmp(&e[b]).then(a.cmp(&b)));
        let mut log_z = Vec::new();
        let mut spectrum = Vec::new();
        let mut marginal = Vec::new();
        for &beta in &spec.betas {
            let lz = log_sum_exp_stream(e.iter().map(|x| -beta * x)).unwrap();
            log_z.push(if beta == 0.0 {
                f64::from(n) * std::f64::consts::LN_2
            } else {
                lz
            });
            let w: Vec<f64> = e.iter().map(|x| (-beta * x - lz).exp()).collect();
            let head: Vec<f64> = order
                .iter()
                .take(spec.top_m)
                .map(|&i| w[i])
                .filter(|&x| x > 0.0)
                .collect();
            let tail: f64 = order.iter().skip(head.len()).map(|&i| w[i]).sum();
            spectrum.push(GibbsSpectrum {
                weights: head,
                tail_mass: tail,
            });
            let mut rho = vec![0.0; 1 << spec.k_marginal];
            for (i, x) in w.iter().enumerate() {
                rho[i & ((1 << spec.k_marginal) - 1)] += x;
            }
            marginal.push(rho);
        }
        ReplicaResult {
            n,
            betas: spec.betas.clone(),
            log_z,
            spectrum,
            marginal,
            intervals: spec.intervals.clone(),
            interval_hits: spec
                .intervals
                .iter()
                .map(|iv| e.iter().filter(|&&x| iv.contains(x / f64::from(n))).count() as u64)
                .collect(),
            b_levels: spec.b_levels.clone(),
            exceedance: spec
                .b_levels
                .iter()
                .map(|&b| e.iter().filter(|&&x| -(x + shift) >= b).count() as u64)
                .collect(),
            min_energy,
        }
    }

    fn assert_close_slices(a: &[f64], b: &[f64], tol: f64, what: &str) {
        assert_eq!(a.len(), b.len(), "{what}: length");
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{what}: {x} vs {y}");
        }
    }

    fn assert_agree(got: &ReplicaResult, want: &ReplicaResult, tol: f64) {
        assert_eq!(got.n, want.n);
        assert_eq!(got.betas, want.betas);
        assert_close_slices(&got.log_z, &want.log_z, tol, "log_z");
        for (g, w) in got.spectrum.iter().zip(&want.spectrum) {
            assert_close_slices(&g.weights, &w.weights, tol, "weights");
            assert!((g.tail_mass - w.tail_mass).abs() <= tol, "tail");
        }
        for (g, w) in got.marginal.iter().zip(&want.marginal) {
            assert_close_slices(g, w, tol, "marginal");
        }
        assert_eq!(got.interval_hits, want.interval_hits);
        assert_eq!(got.exceedance, want.exceedance);
        assert_eq!(got.min_energy, want.min_energy);
    }

    fn full_spec(env: Environment, seed: u64, replica: u32) -> ReplicaSpec {
        let mut spec = ReplicaSpec::new(env, vec![0.0, 0.3, 0.5, 1.0, 2.0, 4.0], seed, replica);
        spec.k_marginal = env.n().min(3);
        spec.intervals = vec![
            OpenInterval::new(-0.5, 0.5).unwrap(),
            OpenInterval::new(0.2, 0.3).unwrap(),
            OpenInterval::new(f64::NEG_INFINITY, -0.1).unwrap(),
        ];
        spec.b_levels = vec![-2.0, 0.0, 1.5];
        spec.top_m = 37;
        spec
    }

    #[test]
    fn log_sum_exp_examples() {
        assert!((log_sum_exp_stream([0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        let e = std::f64::consts::E;
        assert!((log_sum_exp_stream([1.0, 0.0, 0.0, 0.0]).unwrap() - (e + 3.0).ln()).abs() < 1e-15);
        assert!((log_sum_exp_stream([1.0, 0.0, 0.0, 0.0]).unwrap() - 1.743_668_4).abs() < 1e-7);
        let deep = log_sum_exp_stream([-10000.0, -10000.0]).unwrap();
        assert!((deep - (-10000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp_stream(std::iter::empty()), Err(Error::EmptyStream));
        assert_eq!(log_sum_exp_stream([f64::NEG_INFINITY]), Ok(f64::NEG_INFINITY));
    }

    proptest! {
        #[test]
        fn log_sum_exp_is_shift_invariant(
            v in prop::collection::vec(-50.0f64..50.0, 1..40),
            c in -1000.0f64..1000.0,
        ) {
            let base = log_sum_exp_stream(v.iter().copied()).unwrap();
            let shifted = log_sum_exp_stream(v.iter().map(|x| x + c)).unwrap();
            prop_assert!((shifted - (base + c)).abs() <= 1e-12 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn pinned_two_spin_example() {
        let (field, spec) = pinned(vec![-1.0, 0.0, 0.0, 0.0], vec![1.0], 1);
        let r = run_replica_on(&field, &spec).unwrap();
        let e = std::f64::consts::E;
        assert!((r.log_z(1.0).unwrap() - (e + 3.0).ln()).abs() < 1e-14);
        assert!((r.log_z(1.0).unwrap() - 1.743_668_4).abs() < 1e-7);
        let s = r.spectrum(1.0).unwrap();
        assert!((s.weights[0] - e / (e + 3.0)).abs() < 1e-14);
        assert!((s.weights[0] - 0.475_366_9).abs() < 1e-7);
        assert_eq!(s.weights.len(), 4);
        assert_eq!(r.min_energy, -1.0);
        // spin 0 is +1 for odd indices
        let rho = r.marginal(1.0).unwrap();
        assert!((rho[0] - (e + 1.0) / (e + 3.0)).abs() < 1e-14);
    }

    #[test]
    fn zero_beta_is_uniform() {
        for n in [1, 5, 12, 16] {
            let env = Environment::double_exponential(n).unwrap();
            let mut spec = ReplicaSpec::new(env, vec![0.0], 9, 1);
            spec.k_marginal = n.min(4);
            spec.top_m = 8;
            let r = run_replica(&spec).unwrap();
            assert_eq!(r.log_z(0.0).unwrap(), f64::from(n) * std::f64::consts::LN_2);
            assert_eq!(free_energy(&r, 0.0).unwrap(), std::f64::consts::LN_2);
            let k = spec.k_marginal;
            assert!(r.marginal(0.0).unwrap().iter().all(|&p| p == 0.5f64.powi(k as i32)));
            let s = r.spectrum(0.0).unwrap();
            assert!(s.weights.iter().all(|&w| w == 0.5f64.powi(n as i32)));
        }
    }

    #[test]
    fn free_energy_at_zero_beta_is_exactly_log_two() {
        for n in 1..=MAX_SPINS {
            let x = f64::from(n) * std::f64::consts::LN_2;
            assert_eq!(x / f64::from(n), std::f64::consts::LN_2, "N = {n}");
        }
    }

    #[test]
    fn streaming_matches_naive_oracle() {
        for (seed, n) in [(1u64, 1u32), (2, 3), (3, 8), (4, 12)] {
            for alpha in [1.0, 1.5, 2.0] {
                let env = Environment::new(alpha, n).unwrap();
                let spec = full_spec(env, seed, 3);
                let field = TabulatedField::collect(&spec.field()).unwrap();
                let want = naive(&field, &spec);
                assert_agree(&run_replica(&spec).unwrap(), &want, 1e-10);
            }
        }
    }

    #[test]
    fn chunked_path_matches_oracle_with_wide_marginal() {
        // N above the chunk size and K above the chunk bits exercise both merge layouts
        let env = Environment::double_exponential(16).unwrap();
        let mut spec = full_spec(env, 5, 0);
        spec.k_marginal = 15;
        spec.top_m = 3000;
        let field = TabulatedField::collect(&spec.field()).unwrap();
        let want = naive(&field, &spec);
        assert_agree(&run_replica(&spec).unwrap(), &want, 1e-10);
        spec.k_marginal = 2;
        let want = naive(&field, &spec);
        assert_agree(&run_replica(&spec).unwrap(), &want, 1e-10);
    }

    #[test]
    fn energy_shift_leaves_gibbs_weights_unchanged() {
        let env = Environment::double_exponential(10).unwrap();
        let spec = full_spec(env, 11, 0);
        let base = TabulatedField::collect(&spec.field()).unwrap();
        let shifted =
            TabulatedField::new(base.energies().iter().map(|e| e + 37.5).collect()).unwrap();
        let a = run_replica_on(&base, &spec).unwrap();
        let b = run_replica_on(&shifted, &spec).unwrap();
        for slot in 0..spec.betas.len() {
            assert_close_slices(&a.spectrum[slot].weights, &b.spectrum[slot].weights, 1e-10, "weights");
            assert_close_slices(&a.marginal[slot], &b.marginal[slot], 1e-10, "marginal");
        }
    }

    #[test]
    fn marginal_coarsening() {
        let env = Environment::double_exponential(11).unwrap();
        let mut spec = full_spec(env, 13, 0);
        spec.k_marginal = 4;
        let fine = run_replica(&spec).unwrap();
        spec.k_marginal = 3;
        let coarse = run_replica(&spec).unwrap();
        for slot in 0..spec.betas.len() {
            let f = &fine.marginal[slot];
            let c = &coarse.marginal[slot];
            for (s, &p) in c.iter().enumerate() {
                // the dropped spin is the highest bit of the fine block
                assert!((f[s] + f[s + 8] - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn result_invariants() {
        let env = Environment::double_exponential(13).unwrap();
        let spec = full_spec(env, 17, 2);
        let r = run_replica(&spec).unwrap();
        for slot in 0..spec.betas.len() {
            let s = &r.spectrum[slot];
            assert!(s.weights.windows(2).all(|w| w[0] >= w[1]));
            assert!(s.weights.iter().all(|&w| w > 0.0 && w <= 1.0));
            assert!((s.weights.iter().sum::<f64>() + s.tail_mass - 1.0).abs() < 1e-9);
            assert!((0.0..1.0).contains(&s.tail_mass));
            let m = &r.marginal[slot];
            assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(m.iter().all(|&p| p >= 0.0));
            assert!(r.log_z[slot] >= -spec.betas[slot] * r.min_energy);
        }
        assert!(r.interval_hits.iter().all(|&h| h <= 1 << 13));
        assert!(r.exceedance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let env = Environment::double_exponential(17).unwrap();
        let spec = full_spec(env, 23, 4);
        let run_with = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_replica(&spec).unwrap())
        };
        let one = run_with(1);
        let many = run_with(5);
        assert_eq!(one, many);
        for (a, b) in one.log_z.iter().zip(&many.log_z) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let p1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| exceedance_positions(&spec, 0.0).unwrap());
        assert_eq!(p1, exceedance_positions(&spec, 0.0).unwrap());
    }

    #[test]
    fn lookups_and_errors() {
        let env = Environment::double_exponential(6).unwrap();
        let spec = full_spec(env, 1, 0);
        let r = run_replica(&spec).unwrap();
        assert_eq!(free_energy(&r, 0.7), Err(Error::UnknownBeta(0.7)));
        assert!(matches!(
            rate_estimate(&r, OpenInterval::new(0.0, 9.0).unwrap()),
            Err(Error::UnknownInterval { .. })
        ));
        assert_eq!(exceedance_count(&r, 3.0), Err(Error::UnknownLevel(3.0)));
        assert_eq!(exceedance_count(&r, 0.0), Ok(r.exceedance[1]));
        assert_eq!(
            energy_at(&spec, 64),
            Err(Error::IndexOutOfRange { index: 64, n: 6 })
        );

        let mut bad = spec.clone();
        bad.betas.clear();
        assert_eq!(run_replica(&bad), Err(Error::EmptyBetas));
        let mut bad = spec.clone();
        bad.k_marginal = 7;
        assert!(matches!(run_replica(&bad), Err(Error::InvalidMarginalBlock { .. })));
        let mut bad = spec.clone();
        bad.betas = vec![-1.0];
        assert_eq!(run_replica(&bad), Err(Error::InvalidBeta(-1.0)));
        let big = ReplicaSpec::new(Environment::double_exponential(31).unwrap(), vec![1.0], 0, 0);
        assert_eq!(run_replica(&big), Err(Error::SizeOutOfBudget(31)));
        let small = TabulatedField::new(vec![0.0; 8]).unwrap();
        assert_eq!(
            run_replica_on(&small, &spec),
            Err(Error::FieldSizeMismatch { field: 3, spec: 6 })
        );
    }

    #[test]
    fn energies_are_reproducible_and_follow_the_law() {
        let env = Environment::double_exponential(20).unwrap();
        let spec = ReplicaSpec::new(env, vec![1.0], 42, 0);
        assert_eq!(energy_at(&spec, 12345).unwrap(), energy_at(&spec, 12345).unwrap());
        let xs: Vec<f64> = (0..100_000).map(|i| energy_at(&spec, i).unwrap()).collect();
        assert!(ks_one_sample(&xs, |x| env.cdf(x), 0.001).unwrap().passed());

        let other = ReplicaSpec::new(env, vec![1.0], 42, 1);
        let ys: Vec<f64> = (0..100_000).map(|i| energy_at(&other, i).unwrap()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        assert!((cov / (vx * vy).sqrt()).abs() < 0.01);
    }

    #[test]
    fn exceedance_examples() {
        let env = Environment::double_exponential(14).unwrap();
        let mut spec = ReplicaSpec::new(env, vec![1.0], 3, 0);
        spec.b_levels = vec![-1.0, 0.0, 1.0, 100.0];
        for replica in 0..20 {
            spec.replica_id = replica;
            let r = run_replica(&spec).unwrap();
            let c: Vec<u64> = spec.b_levels.iter().map(|&b| exceedance_count(&r, b).unwrap()).collect();
            assert!(c[0] >= c[1] && c[1] >= c[2]);
            assert_eq!(c[3], 0);
            let pos = exceedance_positions(&spec, 0.0).unwrap();
            assert_eq!(pos.len() as u64, c[1]);
            assert!(pos.iter().all(|&t| t >= 0.0));
        }
    }

    #[test]
    fn rate_estimates() {
        let env = Environment::double_exponential(12).unwrap();
        let mut spec = ReplicaSpec::new(env, vec![1.0], 8, 0);
        let whole = OpenInterval::whole_line();
        let far = OpenInterval::new(5.0, 6.0).unwrap();
        spec.intervals = vec![whole, far];
        let r = run_replica(&spec).unwrap();
        assert_eq!(rate_estimate(&r, whole).unwrap(), RateEstimate::Finite(0.0));
        assert_eq!(rate_estimate(&r, far).unwrap(), RateEstimate::Empty);
        assert_eq!(rate_estimate(&r, far).unwrap().value(), f64::INFINITY);
        let pooled = pooled_rate_estimate(&[r.clone(), r], whole).unwrap();
        assert!(pooled.value().abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn pinned_fields_match_oracle(
            raw in prop::collection::vec(-20.0f64..20.0, 1..=6),
            seed in any::<u64>(),
            betas in prop::collection::vec(0.0f64..5.0, 1..4),
        ) {
            // tile to a power of two and perturb deterministically
            let len = raw.len().next_power_of_two().max(2) * 16;
            let mut r = CounterRng::new(seed_derivation(seed, 0, label::CALIBRATION), 0);
            let energies: Vec<f64> = (0..len).map(|i| raw[i % raw.len()] + r.open_unit()).collect();
            let (field, mut spec) = pinned(energies, betas, 2);
            spec.top_m = 5;
            spec.b_levels = vec![-5.0, 0.0];
            spec.intervals = vec![OpenInterval::new(-1.0, 0.5).unwrap()];
            let env = Environment::double_exponential(field.n()).unwrap();
            spec.env = env;
            let want = naive(&field, &spec);
            let got = run_replica_on(&field, &spec).unwrap();
            assert_agree(&got, &want, 1e-10);
        }
    }
}
