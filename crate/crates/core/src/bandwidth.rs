//! Reconstruction bandwidth of a sequence set from exact integer arithmetic
//! on the pulse-timing grid, degeneracy detection beyond it, and a random
//! search for well-conditioned sets.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::comb_inversion::{
    assemble_classical, assemble_gaussian, assemble_spinboson, enumerate_principal, rank_analysis, Branch,
    SymmetryGroup, Truncation, UnknownKind,
};
use crate::error::{Error, Result};
use crate::sequences::{
    build_sequence, cpmg_train, has_zero_filtering_order, FilterEval, PulseSequence, SequenceSet, TimingConfig,
};

/// Rank tolerance used for the order-one degeneracy cross-check.
const RANK_TOL: f64 = 1e-10;

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn lcm(a: u64, b: u64) -> u64 {
    if a == 0 || b == 0 {
        0
    } else {
        a / gcd(a, b) * b
    }
}

/// Pulse pattern invariant under `t -> T - t`, with a pulse at `T`
/// identified with one at `0` (the start of the next cycle).
pub fn is_time_symmetric(seq: &PulseSequence) -> bool {
    let q = seq.timing().q();
    let set: BTreeSet<u64> = seq.pulses().iter().map(|&z| z % q).collect();
    set.iter().all(|&z| set.contains(&((q - z) % q)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequencePeriodicity {
    pub label: String,
    /// Half period of `|w F(w)|^2` in time, in grid units.
    pub grid: u64,
    pub delta_t: f64,
    pub omega_max: f64,
    pub symmetric: bool,
}

/// Time separations entering the gcf: pulses only for time-symmetric
/// sequences, pulses plus both cycle ends otherwise.
fn relevant_separations(seq: &PulseSequence, symmetric: bool) -> Vec<u64> {
    let q = seq.timing().q();
    let times: Vec<u64> = if symmetric {
        seq.pulses().to_vec()
    } else {
        std::iter::once(0)
            .chain(seq.pulses().iter().copied())
            .chain(std::iter::once(q))
            .collect()
    };
    let mut out = vec![q];
    for (i, &a) in times.iter().enumerate() {
        for &b in &times[i + 1..] {
            if a != b {
                out.push(a.abs_diff(b));
            }
        }
    }
    out
}

pub fn sequence_periodicity(seq: &PulseSequence) -> SequencePeriodicity {
    let symmetric = is_time_symmetric(seq);
    let grid = relevant_separations(seq, symmetric).into_iter().fold(0, gcd);
    let delta_t = grid as f64 * seq.timing().delta();
    SequencePeriodicity {
        label: seq.label().to_string(),
        grid,
        delta_t,
        omega_max: PI / delta_t,
        symmetric,
    }
}

/// Half period (grid units) of `|w F(w)|^2` restricted to the harmonics
/// `2 pi k / T`, from the cosine terms whose coefficients survive after
/// merging times modulo the cycle. Never smaller than
/// [`sequence_periodicity`]'s value.
pub fn harmonic_periodicity(seq: &PulseSequence) -> u64 {
    let q = seq.timing().q();
    // i w F(w) = sum_k beta_k e^{i w t_k}
    let mut beta: BTreeMap<u64, i64> = BTreeMap::new();
    *beta.entry(0).or_default() -= 1;
    for (j, &z) in seq.pulses().iter().enumerate() {
        *beta.entry(z % q).or_default() += if j % 2 == 0 { 2 } else { -2 };
    }
    *beta.entry(0).or_default() += if seq.num_pulses() % 2 == 0 { 1 } else { -1 };
    let terms: Vec<(u64, i64)> = beta.into_iter().filter(|&(_, b)| b != 0).collect();
    let mut coeff: BTreeMap<u64, i64> = BTreeMap::new();
    for (i, &(a, ba)) in terms.iter().enumerate() {
        for &(b, bb) in &terms[i + 1..] {
            let s = b - a;
            *coeff.entry(s.min(q - s)).or_default() += ba * bb;
        }
    }
    coeff
        .into_iter()
        .filter(|&(_, c)| c != 0)
        .fold(q, |g, (s, _)| gcd(g, s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthReport {
    pub delta: f64,
    pub tau: f64,
    pub q: u64,
    pub sequences: Vec<SequencePeriodicity>,
    /// Set-level half period in grid units.
    pub grid: u64,
    pub delta_t: f64,
    pub omega_max: f64,
    /// `T = q_set * delta_t`.
    pub q_set: u64,
    /// `omega_max == pi / delta`.
    pub saturated: bool,
    /// Highest harmonic index the set can resolve given both the bandwidth
    /// and the number of sequences.
    pub practical_harmonic: u64,
    pub practical_omega: f64,
}

impl BandwidthReport {
    pub fn cycle(&self) -> f64 {
        self.q as f64 * self.delta
    }

    pub fn bound(&self) -> f64 {
        PI / self.delta
    }

    /// One row per sequence plus a final `set` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "label",
            "symmetric",
            "delta_t_grid",
            "delta_t",
            "omega_max",
            "saturated",
        ])?;
        for s in &self.sequences {
            w.write_record([
                s.label.clone(),
                s.symmetric.to_string(),
                s.grid.to_string(),
                format!("{:e}", s.delta_t),
                format!("{:e}", s.omega_max),
                (s.grid == 1).to_string(),
            ])?;
        }
        w.write_record([
            "set".to_string(),
            String::new(),
            self.grid.to_string(),
            format!("{:e}", self.delta_t),
            format!("{:e}", self.omega_max),
            self.saturated.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for BandwidthReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sequences: {}", self.sequences.len())?;
        writeln!(f, "cycle T = {:e} s = {} delta", self.cycle(), self.q)?;
        writeln!(
            f,
            "delta_t_P = {:e} s = {} delta = {:.6} tau",
            self.delta_t,
            self.grid,
            self.delta_t / self.tau
        )?;
        writeln!(f, "q_P = {}", self.q_set)?;
        writeln!(
            f,
            "omega_max_P = {:e} rad/s = {:.6} pi/tau (bound pi/delta = {:e}, saturated: {})",
            self.omega_max,
            self.omega_max * self.tau / PI,
            self.bound(),
            self.saturated
        )?;
        write!(
            f,
            "practical limit: harmonic {} = {:e} rad/s = {:.6} pi/tau",
            self.practical_harmonic,
            self.practical_omega,
            self.practical_omega * self.tau / PI
        )
    }
}

pub fn set_bandwidth(seqs: &SequenceSet) -> BandwidthReport {
    let timing = *seqs.timing();
    let sequences: Vec<SequencePeriodicity> = seqs.sequences().iter().map(sequence_periodicity).collect();
    let grid = sequences.iter().map(|s| s.grid).fold(0, gcd);
    let q = timing.q();
    let q_set = q / grid;
    let zero = seqs.sequences().iter().any(has_zero_filtering_order) as u64;
    let by_count = (seqs.len() as u64).saturating_sub(zero);
    let practical_harmonic = (q_set / 2).min(by_count);
    let delta_t = grid as f64 * timing.delta();
    BandwidthReport {
        delta: timing.delta(),
        tau: timing.tau(),
        q,
        sequences,
        grid,
        delta_t,
        omega_max: PI / delta_t,
        q_set,
        saturated: grid == 1,
        practical_harmonic,
        practical_omega: timing.harmonic(practical_harmonic as i64),
    }
}

/// Set-level half period from the pooled separations of all sequences.
pub fn pooled_grid(seqs: &SequenceSet) -> u64 {
    seqs.sequences()
        .iter()
        .flat_map(|s| relevant_separations(s, is_time_symmetric(s)))
        .fold(0, gcd)
}

/// Harmonic index reflected into `[0, q_set / 2]` by the periodicity and
/// mirror symmetry of `|w F|^2` on the harmonic grid.
fn mirror(k: u64, q_set: u64) -> u64 {
    let r = k % q_set;
    r.min(q_set - r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyReport {
    pub q_set: u64,
    pub omega_max: f64,
    pub practical_harmonic: u64,
    /// Harmonics up to the requested radius that cannot be resolved: beyond
    /// `omega_max`, or beyond what the number of sequences can pin down.
    pub flagged: Vec<u64>,
    /// `(k, k')`: harmonic `k` beyond `omega_max` and its mirror image.
    pub pairs: Vec<(u64, u64)>,
    /// Largest violation of `k^2 |F(h_k)|^2 = k'^2 |F(h_k')|^2` over all
    /// sequences and pairs, relative to the larger side (at least 1).
    pub max_relation_error: f64,
    /// Harmonic indices of the order-one columns.
    pub columns: Vec<u64>,
    pub rank: usize,
    pub condition: f64,
    /// Columns touched by the numerical null space.
    pub null_harmonics: Vec<u64>,
}

impl DegeneracyReport {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.columns.len()
    }
}

/// Order-one chi coefficients `m(k) |F(2 pi k / T)|^2` (common factors
/// dropped), one row per sequence.
fn order_one_rows(filters: &[FilterEval], timing: &TimingConfig, columns: &[u64]) -> Vec<Vec<f64>> {
    filters
        .par_iter()
        .map(|f| {
            columns
                .iter()
                .map(|&k| {
                    let m = if k == 0 { 1.0 } else { 2.0 };
                    m * f.power(timing.harmonic(k as i64))
                })
                .collect()
        })
        .collect()
}

fn harmonic_columns(radius: u64, with_zero: bool) -> Vec<u64> {
    let start = if with_zero { 0 } else { 1 };
    (start..=radius).collect()
}

pub fn degeneracy_check(seqs: &SequenceSet, radius: u64) -> DegeneracyReport {
    let report = set_bandwidth(seqs);
    let timing = *seqs.timing();
    let q_set = report.q_set;
    let filters: Vec<FilterEval> = seqs.sequences().iter().map(FilterEval::new).collect();
    let flagged: Vec<u64> = (1..=radius).filter(|&k| k > report.practical_harmonic).collect();
    let pairs: Vec<(u64, u64)> = (1..=radius)
        .filter(|&k| 2 * k > q_set)
        .map(|k| (k, mirror(k, q_set)))
        .collect();
    let oscillatory = |f: &FilterEval, k: u64| {
        let w = timing.harmonic(k as i64);
        w * w * f.power(w)
    };
    let mut max_relation_error: f64 = 0.0;
    for f in &filters {
        for &(k, kk) in &pairs {
            let (a, b) = (oscillatory(f, k), oscillatory(f, kk));
            max_relation_error = max_relation_error.max((a - b).abs() / a.max(b).max(1.0));
        }
    }
    let with_zero = seqs.sequences().iter().any(has_zero_filtering_order);
    let columns = harmonic_columns(radius, with_zero);
    let rows = order_one_rows(&filters, &timing, &columns);
    let matrix = DMatrix::from_fn(rows.len(), columns.len(), |i, j| rows[i][j]);
    let ra = rank_analysis(&matrix, RANK_TOL);
    DegeneracyReport {
        q_set,
        omega_max: report.omega_max,
        practical_harmonic: report.practical_harmonic,
        flagged,
        pairs,
        max_relation_error,
        null_harmonics: ra.null_columns.iter().map(|&j| columns[j]).collect(),
        columns,
        rank: ra.rank,
        condition: ra.condition,
    }
}

/// CPMG sequences with `1..=n` cycles per period `T = 2 n tau`, the densest
/// having pulse spacing `tau`. The grid is the coarsest one holding every
/// pulse.
pub fn cpmg_family(n: u64, tau: f64, repetitions: u32) -> Result<SequenceSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("CPMG family needs n >= 1".into()));
    }
    let q = 4 * (1..=n).fold(1, lcm);
    let cycle = 2.0 * n as f64 * tau;
    let timing = TimingConfig::from_cycle(cycle, tau, q)?;
    let seqs = (1..=n)
        .map(|c| cpmg_train(timing, c, format!("cpmg{c}")))
        .collect::<Result<Vec<_>>>()?;
    SequenceSet::new(seqs, repetitions)
}

/// Compositions of `q` into at most `max_parts` parts, each a positive
/// multiple of `granularity`.
pub fn compositions(q: u64, max_parts: usize, granularity: u64) -> Vec<Vec<u64>> {
    fn rec(left: u64, parts: usize, g: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        if parts == 0 {
            return;
        }
        let mut p = g;
        while p <= left {
            cur.push(p);
            rec(left - p, parts - 1, g, cur, out);
            cur.pop();
            p += g;
        }
    }
    let mut out = Vec::new();
    if granularity > 0 && q % granularity == 0 {
        rec(q, max_parts, granularity, &mut Vec::new(), &mut out);
    }
    out
}

/// Every valid CDD concatenation over the given partitions with orders up to
/// `max_order`, deduplicated by pulse pattern (first construction kept).
pub fn sequence_pool(timing: TimingConfig, partitions: &[Vec<u64>], max_order: u32) -> Vec<PulseSequence> {
    let mut seen = HashSet::new();
    let mut pool = Vec::new();
    for part in partitions {
        let n = part.len() as u32;
        let base = max_order + 1;
        for code in 0..base.pow(n) {
            let orders: Vec<u32> = (0..n).map(|j| (code / base.pow(j)) % base).collect();
            let label = part
                .iter()
                .zip(&orders)
                .map(|(g, m)| format!("{g}:{m}"))
                .collect::<Vec<_>>()
                .join("+");
            if let Ok(s) = build_sequence(part, &orders, timing, label) {
                if seen.insert(s.pulses().to_vec()) {
                    pool.push(s);
                }
            }
        }
    }
    pool
}

/// Design matrix whose conditioning the search minimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Gaussian chi rows, PSD at harmonics `0..=radius`.
    OrderOne,
    /// Classical chi and phi rows: PSD on `0..=radius` and the bispectrum on
    /// the hexagonal principal domain of the given radius.
    Classical { bispectrum_radius: i64 },
    /// Spin-boson chi rows: `S_eff` on `0..=radius` plus the fourth-order
    /// unknowns of the branch (dihedral box for the entangled branch).
    SpinBoson { branch: Branch, fourth_radius: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub timing: TimingConfig,
    pub partitions: Vec<Vec<u64>>,
    pub max_order: u32,
    /// Sequences per set.
    pub count: usize,
    /// Highest harmonic index of the PSD (or `S_eff`) target.
    pub radius: u64,
    pub iterations: usize,
    pub seed: u64,
    pub repetitions: u32,
    pub objective: Objective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub set: SequenceSet,
    pub condition: f64,
    pub pool_size: usize,
}

/// Per-sequence design rows over the whole pool, with columns that no pool
/// sequence can see removed, and the least number of sequences that can
/// make the kept columns identifiable.
fn pool_rows(pool: &[PulseSequence], cfg: &SearchConfig) -> Result<(Vec<Vec<Vec<f64>>>, usize, usize)> {
    let set = SequenceSet::new(pool.to_vec(), cfg.repetitions)?;
    let radius = cfg.radius as i64;
    let (matrix, per_seq, blocks): (DMatrix<f64>, usize, Vec<UnknownKind>) = match cfg.objective {
        Objective::OrderOne => {
            let d1 = enumerate_principal(1, radius, SymmetryGroup::Polyspectrum, Truncation::Box)?;
            (assemble_gaussian(&set, &d1)?.matrix, 1, vec![])
        }
        Objective::Classical { bispectrum_radius } => {
            let d1 = enumerate_principal(1, radius, SymmetryGroup::Polyspectrum, Truncation::Box)?;
            let d2 = enumerate_principal(2, bispectrum_radius, SymmetryGroup::Polyspectrum, Truncation::Hexagonal)?;
            let d = assemble_classical(&set, 1, &[d1, d2])?;
            let kinds = d.columns.iter().map(|u| u.kind).collect();
            (d.matrix, 2, kinds)
        }
        Objective::SpinBoson { branch, fourth_radius } => {
            let fourth = match branch {
                Branch::SpinBosonEntangled => {
                    enumerate_principal(2, fourth_radius, SymmetryGroup::Dihedral, Truncation::Box)?
                }
                _ => enumerate_principal(1, fourth_radius, SymmetryGroup::Polyspectrum, Truncation::Box)?,
            };
            (assemble_spinboson(&set, radius, &fourth, branch)?.matrix, 1, vec![])
        }
    };
    let norms: Vec<f64> = matrix.column_iter().map(|c| c.norm()).collect();
    let top = norms.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..matrix.ncols()).filter(|&j| norms[j] > 1e-12 * top).collect();
    let rows = (0..pool.len())
        .map(|i| {
            (0..per_seq)
                .map(|r| keep.iter().map(|&j| matrix[(per_seq * i + r, j)]).collect())
                .collect()
        })
        .collect();
    // chi and phi rows constrain disjoint column blocks
    let required = if blocks.is_empty() {
        keep.len()
    } else {
        let odd = keep
            .iter()
            .filter(|&&j| matches!(blocks[j], UnknownKind::Polyspectrum(n) if n % 2 == 1))
            .count();
        odd.max(keep.len() - odd)
    };
    Ok((rows, keep.len(), required))
}

/// Best-of-N random sampling of `count`-sequence subsets of the pool, scored
/// by the condition number of the column-equilibrated objective matrix.
/// Columns no pool sequence can see (zero frequency without static-noise
/// sequences) are left out. Ties go to the earliest candidate.
pub fn random_search(cfg: &SearchConfig) -> Result<SearchResult> {
    let pool = sequence_pool(cfg.timing, &cfg.partitions, cfg.max_order);
    if pool.is_empty() {
        return Err(Error::Infeasible("no valid sequence in the pool".into()));
    }
    let pool_grid = pool.iter().map(|s| sequence_periodicity(s).grid).fold(0, gcd);
    let q_set = cfg.timing.q() / pool_grid;
    if 2 * cfg.radius > q_set {
        return Err(Error::Infeasible(format!(
            "harmonic {} lies beyond the pool bandwidth (q_P = {q_set})",
            cfg.radius
        )));
    }
    let (rows, ncols, required) = pool_rows(&pool, cfg)?;
    if cfg.count < required {
        return Err(Error::Infeasible(format!(
            "{ncols} unknowns need at least {required} sequences, got {}",
            cfg.count
        )));
    }
    if pool.len() < cfg.count {
        return Err(Error::Infeasible(format!(
            "pool holds {} valid sequences, {} requested",
            pool.len(),
            cfg.count
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let candidates: Vec<Vec<usize>> = (0..cfg.iterations.max(1))
        .map(|_| {
            let mut idx = rand::seq::index::sample(&mut rng, pool.len(), cfg.count).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect();
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|idx| {
            let picked: Vec<&Vec<f64>> = idx.iter().flat_map(|&i| rows[i].iter()).collect();
            let m = DMatrix::from_fn(picked.len(), ncols, |i, j| picked[i][j]);
            let ra = rank_analysis(&m, RANK_TOL);
            if ra.rank < ncols {
                f64::INFINITY
            } else {
                ra.condition
            }
        })
        .collect();
    let (best, &condition) = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .expect("at least one candidate");
    if !condition.is_finite() {
        return Err(Error::Infeasible(format!(
            "all {} candidate sets are rank deficient",
            candidates.len()
        )));
    }
    let set = SequenceSet::new(
        candidates[best].iter().map(|&i| pool[i].clone()).collect(),
        cfg.repetitions,
    )?;
    Ok(SearchResult {
        set,
        condition,
        pool_size: pool.len(),
    })
}
