//! Pulse sequences on an integer time grid, concatenated-DD block
//! construction, fundamental filter functions and the repetition comb kernel.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pulse-timing resolution `delta`, minimum pulse separation `tau` and cycle
/// length `q` (in units of `delta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    delta: f64,
    tau: f64,
    q: u64,
}

impl TimingConfig {
    pub fn new(delta: f64, tau: f64, q: u64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidTiming(format!("delta must be positive, got {delta}")));
        }
        if !(tau >= delta * (1.0 - 1e-12)) || !tau.is_finite() {
            return Err(Error::InvalidTiming(format!(
                "tau ({tau}) must be at least delta ({delta})"
            )));
        }
        if q == 0 {
            return Err(Error::InvalidTiming("q must be positive".into()));
        }
        Ok(TimingConfig { delta, tau, q })
    }

    /// Builds the timing from a cycle time `T` split into `q` grid steps.
    pub fn from_cycle(cycle: f64, tau: f64, q: u64) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidTiming("q must be positive".into()));
        }
        Self::new(cycle / q as f64, tau, q)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    /// Cycle time `T = q delta`.
    pub fn cycle(&self) -> f64 {
        self.q as f64 * self.delta
    }

    /// Smallest admissible pulse gap in grid units.
    pub fn tau_grid(&self) -> u64 {
        ((self.tau / self.delta) - 1e-9).ceil().max(1.0) as u64
    }

    /// Angular frequency of harmonic `n`, `2 pi n / T`.
    pub fn harmonic(&self, n: i64) -> f64 {
        2.0 * std::f64::consts::PI * n as f64 / self.cycle()
    }
}

/// One CDD block of a base sequence: `span` grid units holding CDD of `order`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub span: u64,
    pub order: u32,
}

/// A base sequence of instantaneous pi pulses at grid times `z_i delta`,
/// `1 <= z_i <= q`. The pulse count is even so the switching function returns
/// to `+1` after every cycle and the repeated sequence is periodic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    timing: TimingConfig,
    pulses: Vec<u64>,
    label: String,
    blocks: Vec<Block>,
}

impl PulseSequence {
    pub fn new(timing: TimingConfig, pulses: Vec<u64>, label: impl Into<String>) -> Result<Self> {
        let seq = PulseSequence {
            timing,
            pulses,
            label: label.into(),
            blocks: Vec::new(),
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn free_evolution(timing: TimingConfig) -> Self {
        PulseSequence {
            timing,
            pulses: Vec::new(),
            label: "free".into(),
            blocks: vec![Block {
                span: timing.q,
                order: 0,
            }],
        }
    }

    fn validate(&self) -> Result<()> {
        let q = self.timing.q;
        for w in self.pulses.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidSequence(format!(
                    "pulse times must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if let (Some(&first), Some(&last)) = (self.pulses.first(), self.pulses.last()) {
            if first == 0 || last > q {
                return Err(Error::InvalidSequence(format!("pulse grid times must lie in [1, {q}]")));
            }
        }
        if self.pulses.len() % 2 == 1 {
            return Err(Error::InvalidSequence(format!(
                "odd pulse count {} does not return the switching function to +1",
                self.pulses.len()
            )));
        }
        check_tau(&self.pulses, q, self.timing.tau_grid())
    }

    pub fn timing(&self) -> &TimingConfig {
        &self.timing
    }

    pub fn pulses(&self) -> &[u64] {
        &self.pulses
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn num_pulses(&self) -> usize {
        self.pulses.len()
    }

    pub fn cycle(&self) -> f64 {
        self.timing.cycle()
    }

    /// Pulse times in seconds.
    pub fn pulse_times(&self) -> Vec<f64> {
        self.pulses.iter().map(|&z| z as f64 * self.timing.delta).collect()
    }

    /// Signed constant pieces `(start, end, y)` of the switching function on
    /// one cycle, in grid units.
    pub fn segments(&self) -> Vec<(u64, u64, i32)> {
        let mut out = Vec::with_capacity(self.pulses.len() + 1);
        let mut start = 0;
        let mut sign = 1;
        for &z in &self.pulses {
            if z > start {
                out.push((start, z, sign));
            }
            start = z;
            sign = -sign;
        }
        if self.timing.q > start {
            out.push((start, self.timing.q, sign));
        }
        out
    }

    /// `F_p(0) / delta`, exact in grid units.
    pub fn dc_weight(&self) -> i64 {
        self.segments().iter().map(|&(a, b, s)| s as i64 * (b - a) as i64).sum()
    }

    /// The sequence in the text description format, when built from blocks.
    pub fn description(&self) -> Option<SequenceDescription> {
        if self.blocks.is_empty() {
            return None;
        }
        Some(SequenceDescription {
            label: self.label.clone(),
            q: self.timing.q,
            blocks: self.blocks.clone(),
        })
    }

    /// Writes `(t, y(t))` on the delta grid of one cycle as CSV.
    pub fn write_switching_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "y"])?;
        let mut idx = 0;
        let mut sign = 1;
        for z in 0..=self.timing.q {
            while idx < self.pulses.len() && self.pulses[idx] <= z && z < self.timing.q {
                sign = -sign;
                idx += 1;
            }
            let y = if z == self.timing.q { 1 } else { sign };
            w.write_record(&[format!("{:.12e}", z as f64 * self.timing.delta), y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Checks every gap of the periodically extended pulse train against `tau`.
fn check_tau(pulses: &[u64], q: u64, min_gap: u64) -> Result<()> {
    for w in pulses.windows(2) {
        let gap = w[1] - w[0];
        if gap < min_gap {
            return Err(Error::TauViolation {
                first: w[0] as i64,
                second: w[1] as i64,
                gap,
                min_gap,
            });
        }
    }
    if pulses.len() >= 2 {
        let first = pulses[0];
        let last = *pulses.last().unwrap();
        let gap = q - last + first;
        if gap < min_gap {
            return Err(Error::TauViolation {
                first: last as i64,
                second: (q + first) as i64,
                gap,
                min_gap,
            });
        }
    }
    Ok(())
}

/// Removes pairs of coincident pulses (two pi pulses at one instant compose to
/// the identity) and returns the sorted survivors.
fn cancel_coincident<I: IntoIterator<Item = u64>>(pulses: I) -> Vec<u64> {
    let mut counts: BTreeMap<u64, u32> = BTreeMap::new();
    for z in pulses {
        *counts.entry(z).or_default() += 1;
    }
    counts
        .into_iter()
        .filter(|&(_, c)| c % 2 == 1)
        .map(|(z, _)| z)
        .collect()
}

/// Pulse offsets of CDD of the given order over a block of `span` grid units,
/// relative to the block start.
///
/// `CDD_0` is free evolution and
/// `CDD_m(g) = CDD_{m-1}(g/2) + pulse(g/2) + [g/2 + CDD_{m-1}(g/2)] + pulse(g)`,
/// with coincident pulses cancelled pairwise.
pub fn cdd_pulse_offsets(order: u32, span: u64) -> Result<Vec<u64>> {
    if span == 0 || order >= 63 || span % (1u64 << order) != 0 {
        return Err(Error::OrderSpanMismatch { order, span });
    }
    Ok(cdd_raw(order, span))
}

fn cdd_raw(order: u32, span: u64) -> Vec<u64> {
    if order == 0 {
        return Vec::new();
    }
    let half = span / 2;
    let inner = cdd_raw(order - 1, half);
    let all = inner
        .iter()
        .copied()
        .chain(std::iter::once(half))
        .chain(inner.iter().map(|z| z + half))
        .chain(std::iter::once(span));
    cancel_coincident(all)
}

/// Concatenates CDD blocks over an integer partition of the cycle.
pub fn build_sequence(
    partition: &[u64],
    orders: &[u32],
    timing: TimingConfig,
    label: impl Into<String>,
) -> Result<PulseSequence> {
    if partition.len() != orders.len() {
        return Err(Error::PartitionMismatch(format!(
            "{} block lengths but {} orders",
            partition.len(),
            orders.len()
        )));
    }
    if partition.is_empty() {
        return Err(Error::PartitionMismatch("empty partition".into()));
    }
    let total: u64 = partition.iter().sum();
    if total != timing.q {
        return Err(Error::PartitionMismatch(format!(
            "blocks sum to {total}, cycle has q = {}",
            timing.q
        )));
    }
    let mut raw = Vec::new();
    let mut offset = 0;
    for (&g, &m) in partition.iter().zip(orders) {
        raw.extend(cdd_pulse_offsets(m, g)?.into_iter().map(|z| z + offset));
        offset += g;
    }
    let pulses = cancel_coincident(raw);
    check_tau(&pulses, timing.q, timing.tau_grid())?;
    let blocks = partition
        .iter()
        .zip(orders)
        .map(|(&span, &order)| Block { span, order })
        .collect();
    let seq = PulseSequence {
        timing,
        pulses,
        label: label.into(),
        blocks,
    };
    seq.validate()?;
    Ok(seq)
}

/// `cycles` back-to-back CPMG cycles filling one period: pulses at
/// `(4i + 1) q / (4 cycles)` and `(4i + 3) q / (4 cycles)`.
pub fn cpmg_train(timing: TimingConfig, cycles: u64, label: impl Into<String>) -> Result<PulseSequence> {
    if cycles == 0 || timing.q % (4 * cycles) != 0 {
        return Err(Error::InvalidTiming(format!(
            "q = {} is not divisible by 4 x {cycles} CPMG cycles",
            timing.q
        )));
    }
    let quarter = timing.q / (4 * cycles);
    let pulses = (0..cycles)
        .flat_map(|i| [(4 * i + 1) * quarter, (4 * i + 3) * quarter])
        .collect();
    PulseSequence::new(timing, pulses, label)
}

/// Value of the switching function of `M` repetitions at time `t`.
///
/// `y(0+) = +1`; `y` is right-continuous and flips at every pulse.
pub fn switching_value(seq: &PulseSequence, repetitions: u32, t: f64) -> Result<i32> {
    let period = seq.cycle();
    let end = period * repetitions as f64;
    if !(t >= 0.0 && t < end) {
        return Err(Error::TimeOutOfRange { t, end });
    }
    let local = t - (t / period).floor() * period;
    let grid = local / seq.timing.delta;
    let flips = seq
        .pulses
        .iter()
        .filter(|&&z| (z as f64) <= grid && z < seq.timing.q)
        .count();
    Ok(if flips % 2 == 0 { 1 } else { -1 })
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Cached piecewise-constant representation used for fast filter-function
/// evaluation: `F(w) = sum_j y_j L_j e^{i w c_j} sinc(w L_j / 2)`.
#[derive(Debug, Clone)]
pub struct FilterEval {
    centers: Vec<f64>,
    half_lengths: Vec<f64>,
    weights: Vec<f64>,
}

impl FilterEval {
    pub fn new(seq: &PulseSequence) -> Self {
        let d = seq.timing.delta;
        let segs = seq.segments();
        FilterEval {
            centers: segs.iter().map(|&(a, b, _)| 0.5 * (a + b) as f64 * d).collect(),
            half_lengths: segs.iter().map(|&(a, b, _)| 0.5 * (b - a) as f64 * d).collect(),
            weights: segs.iter().map(|&(a, b, s)| s as f64 * (b - a) as f64 * d).collect(),
        }
    }

    pub fn eval(&self, omega: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for ((&c, &h), &w) in self.centers.iter().zip(&self.half_lengths).zip(&self.weights) {
            let (s, co) = (omega * c).sin_cos();
            acc += Complex64::new(co, s) * (w * sinc(omega * h));
        }
        acc
    }

    pub fn power(&self, omega: f64) -> f64 {
        self.eval(omega).norm_sqr()
    }
}

/// Fundamental filter function `F_p(w) = ∫_0^T y_p(t) e^{i w t} dt`.
pub fn filter_function(seq: &PulseSequence, omega: f64) -> Complex64 {
    if omega == 0.0 {
        return Complex64::new(seq.dc_weight() as f64 * seq.timing.delta, 0.0);
    }
    FilterEval::new(seq).eval(omega)
}

/// Repetition kernel `sin(M w T / 2) / sin(w T / 2)`, with the exact limit
/// `(-1)^{n(M-1)} M` at the harmonics `w = 2 pi n / T`.
pub fn comb_kernel(repetitions: u32, cycle: f64, omega: f64) -> f64 {
    let m = repetitions as f64;
    let x = 0.5 * omega * cycle;
    let n = (x / std::f64::consts::PI).round();
    let eps = x - n * std::f64::consts::PI;
    let parity = if (n.abs() as i64 * (repetitions as i64 - 1)) % 2 == 0 {
        1.0
    } else {
        -1.0
    };
    if eps == 0.0 {
        return parity * m;
    }
    parity * (m * eps).sin() / eps.sin()
}

/// True iff the sequence passes static noise, `F_p(0) != 0`.
pub fn has_zero_filtering_order(seq: &PulseSequence) -> bool {
    seq.dc_weight() != 0
}

/// Text form of a block-built sequence: `label, q, (g1,m1) (g2,m2) ...`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceDescription {
    pub label: String,
    pub q: u64,
    pub blocks: Vec<Block>,
}

impl SequenceDescription {
    pub fn parse(line: &str) -> Result<Self> {
        let mut parts = line.splitn(3, ',');
        let label = parts
            .next()
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Parse(format!("missing label in `{line}`")))?
            .to_string();
        let q: u64 = parts
            .next()
            .map(str::trim)
            .ok_or_else(|| Error::Parse(format!("missing q in `{line}`")))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad q in `{line}`: {e}")))?;
        let rest = parts
            .next()
            .ok_or_else(|| Error::Parse(format!("missing blocks in `{line}`")))?;
        let mut blocks = Vec::new();
        for chunk in rest.split('(').skip(1) {
            let inner = chunk
                .split(')')
                .next()
                .ok_or_else(|| Error::Parse(format!("unclosed block in `{line}`")))?;
            let mut nums = inner.split(',').map(str::trim);
            let span = nums
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad block `({inner})`")))?;
            let order = nums
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad block `({inner})`")))?;
            if nums.next().is_some() {
                return Err(Error::Parse(format!("bad block `({inner})`")));
            }
            blocks.push(Block { span, order });
        }
        if blocks.is_empty() {
            return Err(Error::Parse(format!("no blocks in `{line}`")));
        }
        Ok(SequenceDescription { label, q, blocks })
    }

    pub fn build(&self, delta: f64, tau: f64) -> Result<PulseSequence> {
        let timing = TimingConfig::new(delta, tau, self.q)?;
        let spans: Vec<u64> = self.blocks.iter().map(|b| b.span).collect();
        let orders: Vec<u32> = self.blocks.iter().map(|b| b.order).collect();
        build_sequence(&spans, &orders, timing, self.label.clone())
    }
}

impl fmt::Display for SequenceDescription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {},", self.label, self.q)?;
        for b in &self.blocks {
            write!(f, " ({},{})", b.span, b.order)?;
        }
        Ok(())
    }
}

/// Base sequences sharing one timing, each repeated `repetitions` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSet {
    sequences: Vec<PulseSequence>,
    repetitions: u32,
}

impl SequenceSet {
    pub fn new(sequences: Vec<PulseSequence>, repetitions: u32) -> Result<Self> {
        let first = sequences.first().ok_or_else(|| Error::Empty("sequence set".into()))?;
        if repetitions == 0 {
            return Err(Error::InvalidParameter("repetition count M must be >= 1".into()));
        }
        let timing = first.timing;
        if let Some(bad) = sequences.iter().find(|s| s.timing != timing) {
            return Err(Error::InvalidSequence(format!(
                "sequence `{}` does not share the set timing",
                bad.label
            )));
        }
        Ok(SequenceSet { sequences, repetitions })
    }

    pub fn sequences(&self) -> &[PulseSequence] {
        &self.sequences
    }

    pub fn repetitions(&self) -> u32 {
        self.repetitions
    }

    pub fn timing(&self) -> &TimingConfig {
        &self.sequences[0].timing
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn with_repetitions(&self, repetitions: u32) -> Result<Self> {
        SequenceSet::new(self.sequences.clone(), repetitions)
    }

    /// The set in the text description format, one sequence per line.
    pub fn describe(&self) -> String {
        self.sequences
            .iter()
            .filter_map(|s| s.description())
            .map(|d| d.to_string() + "\n")
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn timing(q: u64) -> TimingConfig {
        TimingConfig::new(1e-5, 1e-5, q).unwrap()
    }

    /// Brute-force concatenation oracle: list every raw pulse of every block,
    /// then drop instants hit an even number of times.
    fn oracle_concat(blocks: &[(u64, u32)]) -> Vec<u64> {
        fn raw(order: u32, span: u64, offset: u64, out: &mut Vec<u64>) {
            if order == 0 {
                return;
            }
            let half = span / 2;
            let mut inner = Vec::new();
            raw(order - 1, half, 0, &mut inner);
            let mut counts = std::collections::HashMap::new();
            for z in inner
                .iter()
                .copied()
                .chain([half])
                .chain(inner.iter().map(|z| z + half))
                .chain([span])
            {
                *counts.entry(z).or_insert(0) += 1;
            }
            let mut v: Vec<u64> = counts.into_iter().filter(|(_, c)| c % 2 == 1).map(|(z, _)| z).collect();
            v.sort();
            out.extend(v.into_iter().map(|z| z + offset));
        }
        let mut all = Vec::new();
        let mut off = 0;
        for &(g, m) in blocks {
            raw(m, g, off, &mut all);
            off += g;
        }
        let mut counts = std::collections::HashMap::new();
        for z in all {
            *counts.entry(z).or_insert(0) += 1;
        }
        let mut v: Vec<u64> = counts.into_iter().filter(|(_, c)| c % 2 == 1).map(|(z, _)| z).collect();
        v.sort();
        v
    }

    #[test]
    fn cdd_offsets_examples() {
        assert_eq!(cdd_pulse_offsets(0, 8).unwrap(), Vec::<u64>::new());
        assert_eq!(cdd_pulse_offsets(1, 8).unwrap(), vec![4, 8]);
        assert_eq!(cdd_pulse_offsets(2, 8).unwrap(), vec![2, 6]);
        assert_eq!(cdd_pulse_offsets(3, 16).unwrap(), vec![2, 6, 8, 10, 14, 16]);
        assert_eq!(
            cdd_pulse_offsets(3, 12),
            Err(Error::OrderSpanMismatch { order: 3, span: 12 })
        );
    }

    #[test]
    fn build_sequence_examples() {
        let t = timing(16);
        assert!(build_sequence(&[16], &[0], t, "free").unwrap().pulses().is_empty());
        assert_eq!(build_sequence(&[16], &[2], t, "cpmg").unwrap().pulses(), &[4, 12]);
        let two = build_sequence(&[8, 8], &[1, 1], t, "cdd1x2").unwrap();
        assert_eq!(two.pulses(), oracle_concat(&[(8, 1), (8, 1)]).as_slice());
        assert_eq!(two.pulses(), &[4, 8, 12, 16]);
        let mixed = build_sequence(&[8, 8], &[1, 2], t, "mix").unwrap();
        assert_eq!(mixed.pulses(), oracle_concat(&[(8, 1), (8, 2)]).as_slice());
    }

    #[test]
    fn build_sequence_errors() {
        let t = TimingConfig::new(1e-5, 3e-5, 16).unwrap();
        let err = build_sequence(&[16], &[3], t, "x").unwrap_err();
        assert!(matches!(err, Error::TauViolation { gap: 2, min_gap: 3, .. }), "{err:?}");
        assert!(matches!(
            build_sequence(&[8, 4], &[0, 0], t, "x"),
            Err(Error::PartitionMismatch(_))
        ));
        assert!(matches!(
            build_sequence(&[16], &[0, 1], t, "x"),
            Err(Error::PartitionMismatch(_))
        ));
        // wrap-around gap: last pulse at 16 and first at 2 of next cycle
        let t2 = TimingConfig::new(1e-5, 3e-5, 16).unwrap();
        let err = PulseSequence::new(t2, vec![2, 8, 12, 16], "w").unwrap_err();
        assert!(matches!(err, Error::TauViolation { gap: 2, .. }));
    }

    #[test]
    fn switching_examples() {
        let t = timing(16);
        let free = PulseSequence::free_evolution(t);
        for x in [0.0, 3e-5, 1.5e-4] {
            assert_eq!(switching_value(&free, 1, x).unwrap(), 1);
        }
        let cpmg = build_sequence(&[16], &[2], t, "cpmg").unwrap();
        let period = cpmg.cycle();
        assert_eq!(switching_value(&cpmg, 1, period / 4.0 + 1e-9).unwrap(), -1);
        assert_eq!(switching_value(&cpmg, 1, 3.0 * period / 4.0 + 1e-9).unwrap(), 1);
        assert_eq!(switching_value(&cpmg, 3, 2.0 * period + period / 2.0).unwrap(), -1);
        assert!(switching_value(&cpmg, 1, period).is_err());
        assert!(switching_value(&cpmg, 1, -1e-9).is_err());
    }

    #[test]
    fn block_end_parity() {
        // Just before the block end the switching function is +1 for even
        // orders and -1 for odd ones; the closing pulse restores +1.
        for order in 0..=5u32 {
            let q = 64;
            let t = timing(q);
            let seq = build_sequence(&[q], &[order], t, "b").unwrap();
            let before_end = (q as f64 - 0.5) * t.delta();
            let expect = if order % 2 == 0 { 1 } else { -1 };
            assert_eq!(switching_value(&seq, 2, before_end).unwrap(), expect, "order {order}");
            assert_eq!(switching_value(&seq, 2, seq.cycle() + 0.1 * t.delta()).unwrap(), 1);
        }
    }

    #[test]
    fn filter_function_values() {
        let t = timing(16);
        let free = PulseSequence::free_evolution(t);
        assert_eq!(filter_function(&free, 0.0).re, t.cycle());
        let cpmg = build_sequence(&[16], &[2], t, "cpmg").unwrap();
        assert_eq!(filter_function(&cpmg, 0.0).norm(), 0.0);
        let cdd1 = build_sequence(&[16], &[1], t, "cdd1").unwrap();
        assert!(!has_zero_filtering_order(&cdd1));
        assert!(!has_zero_filtering_order(&cpmg));
        assert!(has_zero_filtering_order(&free));
        // continuity at zero
        let near = filter_function(&free, 1e-9);
        assert!((near.re - t.cycle()).abs() < 1e-15);
    }

    /// Piecewise-analytic quadrature oracle: each constant piece integrated
    /// with high-order Gauss–Legendre on the real and imaginary parts.
    fn quadrature_oracle(seq: &PulseSequence, omega: f64) -> Complex64 {
        let (x, w) = crate::quad::gauss_legendre(40);
        let d = seq.timing().delta();
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, b, s) in seq.segments() {
            let (a, b) = (a as f64 * d, b as f64 * d);
            let pieces = 1 + ((b - a) * omega.abs() / 2.0) as usize;
            let h = (b - a) / pieces as f64;
            for p in 0..pieces {
                let lo = a + p as f64 * h;
                for (xi, wi) in x.iter().zip(&w) {
                    let t = lo + 0.5 * h * (xi + 1.0);
                    acc += Complex64::new(0.0, omega * t).exp() * (0.5 * h * wi * s as f64);
                }
            }
        }
        acc
    }

    #[test]
    fn filter_function_matches_quadrature_at_first_harmonic() {
        let t = timing(32);
        for (p, o) in [
            (vec![32], vec![3]),
            (vec![8, 24], vec![1, 3]),
            (vec![12, 4, 16], vec![2, 0, 1]),
        ] {
            let seq = build_sequence(&p, &o, t, "s").unwrap();
            let w = 2.0 * PI / seq.cycle();
            let a = filter_function(&seq, w);
            let b = quadrature_oracle(&seq, w);
            assert!((a - b).norm() <= 1e-10 * b.norm().max(seq.cycle() * 1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn comb_kernel_examples() {
        let period = 1e-3;
        assert_eq!(comb_kernel(7, period, 0.0), 7.0);
        for w in [0.3, 1234.5, -98765.0] {
            assert!((comb_kernel(1, period, w) - 1.0).abs() < 1e-12);
        }
        assert!(comb_kernel(50, period, PI / period).abs() < 1e-12);
        // harmonic limits with sign (-1)^{n(M-1)}
        let h = 2.0 * PI / period;
        assert_eq!(comb_kernel(4, period, 3.0 * h), -4.0);
        assert_eq!(comb_kernel(5, period, 3.0 * h), 5.0);
        let near = comb_kernel(4, period, 3.0 * h * (1.0 + 1e-12));
        assert!((near + 4.0).abs() < 1e-6);
    }

    #[test]
    fn comb_kernel_square_weight_approaches_comb() {
        // ∫ K_M(w)^2 g(w) dw over one harmonic spacing -> 2 pi M / T g(h)
        let period = 1e-3;
        let h = 2.0 * PI / period;
        for m in [50u32] {
            let g = |w: f64| 1.0 / (1.0 + ((w - 3.0 * h) / (2.0 * h)).powi(2));
            let est = crate::quad::integrate(
                |w: f64| comb_kernel(m, period, w).powi(2) * g(w),
                2.5 * h,
                3.5 * h,
                crate::quad::Tolerance {
                    max_intervals: 20000,
                    ..crate::quad::Tolerance::new(0.0, 1e-10)
                },
            )
            .unwrap();
            let comb = 2.0 * PI * m as f64 / period * g(3.0 * h);
            assert!((est.value / comb - 1.0).abs() < 0.02, "{}", est.value / comb);
        }
    }

    #[test]
    fn description_roundtrip_and_csv() {
        let d = SequenceDescription::parse("mix-1, 16, (8,1) (8,2)").unwrap();
        assert_eq!(d.blocks.len(), 2);
        let seq = d.build(1e-5, 1e-5).unwrap();
        assert_eq!(
            SequenceDescription::parse(&seq.description().unwrap().to_string()).unwrap(),
            d
        );
        assert!(SequenceDescription::parse("x, 16").is_err());
        assert!(SequenceDescription::parse("x, 16, (8,1,2)").is_err());
        let mut buf = Vec::new();
        seq.write_switching_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 18);
        assert!(text.lines().nth(6).unwrap().ends_with(",-1"));
    }

    fn arb_sequence() -> impl Strategy<Value = PulseSequence> {
        prop::collection::vec((0u32..=3, 1u64..=4), 1..5).prop_map(|blocks| {
            let spans: Vec<u64> = blocks.iter().map(|&(m, k)| k << m.max(1)).collect();
            let orders: Vec<u32> = blocks.iter().map(|&(m, _)| m).collect();
            let q = spans.iter().sum();
            let t = TimingConfig::new(1e-5, 1e-5, q).unwrap();
            build_sequence(&spans, &orders, t, "p").unwrap()
        })
    }

    proptest! {
        #[test]
        fn filter_function_matches_piecewise_quadrature(seq in arb_sequence(), x in -60.0f64..60.0) {
            let omega = x * 2.0 * PI / seq.cycle();
            let a = filter_function(&seq, omega);
            let b = quadrature_oracle(&seq, omega);
            prop_assert!((a - b).norm() <= 1e-9 * b.norm().max(1e-3 * seq.cycle()));
        }

        #[test]
        fn filter_function_conjugate_symmetry(seq in arb_sequence(), omega in -1e6f64..1e6) {
            let a = filter_function(&seq, omega);
            let b = filter_function(&seq, -omega);
            prop_assert!((a - b.conj()).norm() <= 1e-12 * seq.cycle());
        }

        #[test]
        fn built_sequences_respect_tau(parts in prop::collection::vec((0u32..=4, 1u64..=3), 1..6), tau in 1u64..6) {
            let spans: Vec<u64> = parts.iter().map(|&(m, k)| k << m).collect();
            let orders: Vec<u32> = parts.iter().map(|&(m, _)| m).collect();
            let q = spans.iter().sum();
            let t = TimingConfig::new(1.0, tau as f64, q).unwrap();
            match build_sequence(&spans, &orders, t, "p") {
                Ok(seq) => {
                    let p = seq.pulses();
                    for w in p.windows(2) { prop_assert!(w[1] - w[0] >= tau); }
                    if p.len() >= 2 { prop_assert!(q - p[p.len() - 1] + p[0] >= tau); }
                }
                Err(e) => {
                    let ok = matches!(e, Error::TauViolation { .. });
                    prop_assert!(ok, "unexpected error {:?}", e);
                }
            }
        }
    }
}
