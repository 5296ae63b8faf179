//! Exact (comb-free) evaluation of the second- and third-order kernel
//! integrals `Upsilon^k` of a repeated sequence.
//!
//! * Any PSD: frequency-domain cell quadrature (see [`crate::filtered`]).
//! * Square noise: time domain, through antiderivatives of the noise
//!   covariance tabulated on Chebyshev panels.
//! * Bispectra: tensor Gauss–Legendre grid on harmonic cells plus an exact
//!   expansion of the repetition kernels over cycle lags.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::classical_noise::SquareNoiseModel;
use crate::error::{Error, Result};
use crate::filtered::{filtered_integral, FilteredOptions};
use crate::quad::gauss_legendre;
use crate::sequences::{FilterEval, PulseSequence};
use crate::spectrum::{Bispectrum, Psd};

/// `Upsilon^2 = (1/2 pi) ∫ |F_p K_M|^2 S` for an arbitrary even PSD.
pub fn upsilon2_psd<P: Psd + ?Sized>(psd: &P, seq: &PulseSequence, repetitions: u32) -> Result<f64> {
    let opts = FilteredOptions::for_features(&psd.features(), psd.width());
    Ok(filtered_integral(seq, repetitions, 2, |w| psd.psd(w), opts)? / (2.0 * PI))
}

/// Comb approximation of `Upsilon^2`: `(M / T) sum_n |F_p(2 pi n / T)|^2 S`.
pub fn comb_upsilon2<P: Psd + ?Sized>(psd: &P, seq: &PulseSequence, repetitions: u32) -> f64 {
    let filter = FilterEval::new(seq);
    let period = seq.cycle();
    let h = 2.0 * PI / period;
    let top = psd.features().iter().copied().fold(0.0, f64::max) + 40.0 * psd.width();
    let mut sum = filter.power(0.0) * psd.psd(0.0);
    let mut quiet = 0;
    let mut n = 1u64;
    loop {
        let w = n as f64 * h;
        let term = 2.0 * filter.power(w) * psd.psd(w);
        sum += term;
        if w > top && term.abs() <= 1e-14 * sum.abs() {
            quiet += 1;
            if quiet > 64 {
                break;
            }
        } else {
            quiet = 0;
        }
        if n > 10_000_000 {
            break;
        }
        n += 1;
    }
    repetitions as f64 / period * sum
}

/// Piecewise Chebyshev interpolant on uniform panels `[k w, (k+1) w]`.
#[derive(Debug, Clone)]
pub(crate) struct PanelTable {
    width: f64,
    order: usize,
    unit: Vec<f64>,
    bary: Vec<f64>,
    values: Vec<f64>,
}

impl PanelTable {
    pub(crate) fn unit_nodes(order: usize) -> Vec<f64> {
        // second-kind points, ascending on [-1, 1]
        (0..order)
            .map(|k| -(PI * k as f64 / (order - 1) as f64).cos())
            .collect()
    }

    pub(crate) fn build<F: FnMut(f64) -> Result<f64>>(
        panels: usize,
        width: f64,
        order: usize,
        mut f: F,
    ) -> Result<Self> {
        let unit = Self::unit_nodes(order);
        let mut values = Vec::with_capacity(panels * order);
        for p in 0..panels {
            for &u in &unit {
                values.push(f(p as f64 * width + 0.5 * width * (u + 1.0))?);
            }
        }
        Ok(Self::from_values(width, order, values))
    }

    pub(crate) fn from_values(width: f64, order: usize, values: Vec<f64>) -> Self {
        let unit = Self::unit_nodes(order);
        let bary = (0..order)
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                if k == 0 || k == order - 1 {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        PanelTable {
            width,
            order,
            unit,
            bary,
            values,
        }
    }

    pub(crate) fn panels(&self) -> usize {
        self.values.len() / self.order
    }

    pub(crate) fn end(&self) -> f64 {
        self.panels() as f64 * self.width
    }

    pub(crate) fn node(&self, panel: usize, k: usize) -> f64 {
        panel as f64 * self.width + 0.5 * self.width * (self.unit[k] + 1.0)
    }

    pub(crate) fn value(&self, panel: usize, k: usize) -> f64 {
        self.values[panel * self.order + k]
    }

    /// Interpolated value at `x` in `[0, end]`.
    pub(crate) fn eval(&self, x: f64) -> f64 {
        let p = ((x / self.width) as usize).min(self.panels() - 1);
        let u = 2.0 * (x - p as f64 * self.width) / self.width - 1.0;
        let vals = &self.values[p * self.order..(p + 1) * self.order];
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..self.order {
            let d = u - self.unit[k];
            if d == 0.0 {
                return vals[k];
            }
            let c = self.bary[k] / d;
            num += c * vals[k];
            den += c;
        }
        num / den
    }
}

/// First and second antiderivatives `A1(x) = ∫_0^x g`, `A2(x) = ∫_0^x (x - v) g(v) dv`
/// of the interpolated function `g`, tabulated on the same panels.
fn antiderivatives(g: &dyn Fn(f64) -> f64, panels: usize, width: f64, order: usize) -> (PanelTable, PanelTable) {
    let (gx, gw) = gauss_legendre(24);
    let unit = PanelTable::unit_nodes(order);
    let mut a1_vals = Vec::with_capacity(panels * order);
    let mut a2_vals = Vec::with_capacity(panels * order);
    let (mut a1, mut a2) = (0.0, 0.0);
    for p in 0..panels {
        let start = p as f64 * width;
        let mut end_vals = (a1, a2);
        for &u in &unit {
            let x = start + 0.5 * width * (u + 1.0);
            let half = 0.5 * (x - start);
            let (mut i1, mut i2) = (0.0, 0.0);
            if half > 0.0 {
                for (xi, wi) in gx.iter().zip(&gw) {
                    let v = start + half * (xi + 1.0);
                    let gv = g(v) * wi * half;
                    i1 += gv;
                    i2 += (x - v) * gv;
                }
            }
            let v1 = a1 + i1;
            let v2 = a2 + a1 * (x - start) + i2;
            a1_vals.push(v1);
            a2_vals.push(v2);
            end_vals = (v1, v2);
        }
        a1 = end_vals.0;
        a2 = end_vals.1;
    }
    (
        PanelTable::from_values(width, order, a1_vals),
        PanelTable::from_values(width, order, a2_vals),
    )
}

/// Jumps `(time, alpha)` of the switching function over `M` cycles, with
/// `y = sum_k alpha_k 1[t > t_k]` on `[0, M T]`.
fn switching_jumps(seq: &PulseSequence, repetitions: u32) -> Vec<(f64, f64)> {
    let d = seq.timing().delta();
    let q = seq.timing().q();
    let segs = seq.segments();
    let mut jumps: Vec<(u64, f64)> = Vec::new();
    let mut prev = 0.0;
    for r in 0..repetitions as u64 {
        for &(a, _, s) in &segs {
            let t = r * q + a;
            let delta = s as f64 - prev;
            if delta != 0.0 {
                jumps.push((t, delta));
            }
            prev = s as f64;
        }
    }
    jumps.push((repetitions as u64 * q, -prev));
    jumps.into_iter().map(|(z, a)| (z as f64 * d, a)).collect()
}

/// Time-domain engine for square noise `xi_a`: exact second order for any
/// `a`, third order for `a = 1` (free evolution).
#[derive(Debug, Clone)]
pub struct SquareNoiseTimeDomain {
    a: f64,
    horizon: f64,
    cov: PanelTable,
    second: PanelTable,
    third: Option<(PanelTable, PanelTable, f64)>,
}

impl SquareNoiseTimeDomain {
    pub fn new(model: &SquareNoiseModel, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::InvalidParameter("time horizon must be positive".into()));
        }
        let base = model.base();
        let fastest = base.terms().iter().map(|t| t.width.max(t.center)).fold(0.0, f64::max);
        let width = (0.5 / fastest).min(horizon);
        let order = 16;
        let panels = (horizon / width).ceil() as usize;
        let cov = PanelTable::build(panels, width, order, |t| base.autocovariance(t))?;
        let a = model.mixing();
        let c_xi = |v: f64| {
            let c = cov.eval(v);
            2.0 * a * a * c * c + (1.0 - a) * (1.0 - a) * c
        };
        let (_, second) = antiderivatives(&c_xi, panels, width, order);

        let third = if a == 1.0 {
            // products C(v) I(v) are negligible once C has decayed
            let c0 = cov.value(0, 0);
            let mut cut = panels;
            for p in (0..panels).rev() {
                if (0..order).any(|k| cov.value(p, k).abs() > 1e-6 * c0) {
                    cut = (p + 2).min(panels);
                    break;
                }
            }
            let conv = Self::autoconvolution(&cov, cut, width, order);
            let g = |v: f64| {
                if v >= cut as f64 * width {
                    0.0
                } else {
                    cov.eval(v) * conv.eval(v)
                }
            };
            let (e1, e2) = antiderivatives(&g, cut, width, order);
            Some((e1, e2, cut as f64 * width))
        } else {
            None
        };
        Ok(SquareNoiseTimeDomain {
            a,
            horizon,
            cov,
            second,
            third,
        })
    }

    /// `I(v) = ∫_0^v C(u) C(v - u) du` on the first `panels` panels.
    fn autoconvolution(cov: &PanelTable, panels: usize, width: f64, order: usize) -> PanelTable {
        let (gx, gw) = gauss_legendre(order);
        let mut vals = Vec::with_capacity(panels * order);
        for p in 0..panels {
            for k in 0..order {
                let v = cov.node(p, k);
                let mut pts: Vec<f64> = vec![0.0, v];
                let mut j = 1;
                while (j as f64) * width < v {
                    pts.push(j as f64 * width);
                    pts.push(v - j as f64 * width);
                    j += 1;
                }
                pts.sort_by(f64::total_cmp);
                let mut sum = 0.0;
                for w in pts.windows(2) {
                    let half = 0.5 * (w[1] - w[0]);
                    if half <= 0.0 {
                        continue;
                    }
                    for (xi, wi) in gx.iter().zip(&gw) {
                        let u = w[0] + half * (xi + 1.0);
                        sum += wi * half * cov.eval(u) * cov.eval((v - u).max(0.0));
                    }
                }
                vals.push(sum);
            }
        }
        PanelTable::from_values(width, order, vals)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn covariance(&self, tau: f64) -> f64 {
        self.cov.eval(tau.abs())
    }

    fn d2(&self, tau: f64) -> Result<f64> {
        let x = tau.abs();
        if x > self.second.end() * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "lag {x} exceeds the tabulated horizon {}",
                self.second.end()
            )));
        }
        Ok(self.second.eval(x.min(self.second.end())))
    }

    /// `Upsilon^2` of `M` repetitions of `seq`.
    pub fn upsilon2(&self, seq: &PulseSequence, repetitions: u32) -> Result<f64> {
        let jumps = switching_jumps(seq, repetitions);
        let mut sum = 0.0;
        for (i, &(ti, ai)) in jumps.iter().enumerate() {
            for &(tj, aj) in &jumps[i + 1..] {
                sum += 2.0 * ai * aj * self.d2(tj - ti)?;
            }
        }
        Ok(-sum)
    }

    /// `Upsilon^2` of free evolution over `t`.
    pub fn upsilon2_free(&self, t: f64) -> Result<f64> {
        Ok(2.0 * self.d2(t)?)
    }

    /// `Upsilon^3` of free evolution over `t` (zero for Gaussian noise).
    pub fn upsilon3_free(&self, t: f64) -> Result<f64> {
        if self.a == 0.0 {
            return Ok(0.0);
        }
        let (e1, e2, cut) = self
            .third
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("third order is available for a = 0 and a = 1 only".into()))?;
        if t > self.horizon * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "time {t} exceeds the tabulated horizon {}",
                self.horizon
            )));
        }
        let e = if t <= *cut {
            e2.eval(t)
        } else {
            e2.eval(*cut) + e1.eval(*cut) * (t - cut)
        };
        Ok(48.0 * e)
    }
}

/// Bispectrum sampled on a symmetric tensor Gauss–Legendre grid. Cells have
/// a fixed width (by default the harmonic spacing of the cycle period) so
/// that kinks of interpolated spectra can sit on cell edges.
#[derive(Debug, Clone)]
pub struct BispectrumGrid {
    period: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<f64>,
    max_lag: usize,
}

impl BispectrumGrid {
    /// Samples `bis` on `cells` harmonic cells per half axis with
    /// `nodes_per_cell` points each.
    pub fn new<B: Bispectrum + ?Sized>(bis: &B, period: f64, cells: usize, nodes_per_cell: usize) -> Result<Self> {
        Self::from_fn(|a, b| Ok(bis.bispectrum(a, b)), period, cells, nodes_per_cell)
    }

    pub fn from_fn<F: FnMut(f64, f64) -> Result<f64>>(
        f: F,
        period: f64,
        cells: usize,
        nodes_per_cell: usize,
    ) -> Result<Self> {
        Self::with_cell_width(f, period, 2.0 * PI / period, cells, nodes_per_cell)
    }

    /// Grid with cells of width `cell_width` used for cycles of length
    /// `period`.
    pub fn with_cell_width<F: FnMut(f64, f64) -> Result<f64>>(
        mut f: F,
        period: f64,
        cell_width: f64,
        cells: usize,
        nodes_per_cell: usize,
    ) -> Result<Self> {
        if cells == 0 || nodes_per_cell < 4 {
            return Err(Error::InvalidParameter(
                "bispectrum grid needs cells >= 1 and >= 4 nodes".into(),
            ));
        }
        if !(period > 0.0 && cell_width > 0.0) {
            return Err(Error::InvalidParameter(
                "grid period and cell width must be positive".into(),
            ));
        }
        let (x, w) = gauss_legendre(nodes_per_cell);
        let mut pos = Vec::new();
        let mut pos_w = Vec::new();
        for k in 0..cells {
            for (xi, wi) in x.iter().zip(&w) {
                pos.push((k as f64 + 0.5 * (xi + 1.0)) * cell_width);
                pos_w.push(0.5 * cell_width * wi);
            }
        }
        let nodes: Vec<f64> = pos.iter().rev().map(|v| -v).chain(pos.iter().copied()).collect();
        let weights: Vec<f64> = pos_w.iter().rev().copied().chain(pos_w.iter().copied()).collect();
        let n = nodes.len();
        let mut values = vec![f64::NAN; n * n];
        for i in 0..n {
            for j in i..n {
                if i + j > n - 1 {
                    continue;
                }
                let v = f(nodes[i], nodes[j])?;
                if !v.is_finite() {
                    return Err(Error::QuadratureNonConvergence(format!(
                        "bispectrum evaluation failed at ({}, {})",
                        nodes[i], nodes[j]
                    )));
                }
                let (mi, mj) = (n - 1 - i, n - 1 - j);
                values[i * n + j] = v;
                values[j * n + i] = v;
                values[mi * n + mj] = v;
                values[mj * n + mi] = v;
            }
        }
        // a lag-d phase makes d * period * cell_width / 2 pi turns per cell;
        // the rule resolves about one turn per 1.5 nodes beyond a margin
        let turns = period * cell_width / (2.0 * PI);
        let max_lag = (((nodes_per_cell as f64 - 10.0).max(nodes_per_cell as f64 / 3.0)) / (1.5 * turns)) as usize;
        Ok(BispectrumGrid {
            period,
            nodes,
            weights,
            values,
            max_lag,
        })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Largest cycle lag the node density resolves.
    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    /// Lag sums `A_s = sum_{d : span(d) = s} ∫∫ F F F S_2 e^{i T (d1 w1 + d2 w2)}`
    /// for `s = 0..=max_span`, so that `M` repetitions give
    /// `Upsilon^3 = (1/4 pi^2) sum_{s < M} (M - s) A_s`.
    pub fn span_sums(&self, seq: &PulseSequence, max_span: usize) -> Result<Vec<Complex64>> {
        if ((seq.cycle() - self.period) / self.period).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "sequence cycle {} differs from grid period {}",
                seq.cycle(),
                self.period
            )));
        }
        if max_span > self.max_lag {
            return Err(Error::InvalidParameter(format!(
                "lag {max_span} exceeds the {} resolved by this grid",
                self.max_lag
            )));
        }
        let n = self.nodes.len();
        let zero = Complex64::new(0.0, 0.0);
        let filter = FilterEval::new(seq);
        let f: Vec<Complex64> = self.nodes.iter().map(|&w| filter.eval(w)).collect();

        // F(-(w_i + w_j)) from boundary exponentials of the jumps of y
        let jumps = switching_jumps(seq, 1);
        let e: Vec<Vec<Complex64>> = self
            .nodes
            .iter()
            .map(|&w| jumps.iter().map(|&(t, _)| Complex64::new(0.0, -w * t).exp()).collect())
            .collect();
        let small = 1e-2 / self.period;

        let mut amp = vec![zero; n * n];
        let mut support = vec![(n, 0); n];
        for i in 0..n {
            for j in 0..n {
                let s = self.values[i * n + j];
                if s == 0.0 {
                    continue;
                }
                let sum_w = self.nodes[i] + self.nodes[j];
                let f3 = if sum_w.abs() < small {
                    filter.eval(-sum_w)
                } else {
                    let mut acc = zero;
                    for (k, &(_, alpha)) in jumps.iter().enumerate() {
                        acc += e[i][k] * e[j][k] * alpha;
                    }
                    // ∫ y e^{-i s t} dt = sum_k alpha_k e^{-i s t_k} / (i s)
                    acc / Complex64::new(0.0, sum_w)
                };
                amp[i * n + j] = f[i] * f[j] * f3 * (s * self.weights[i] * self.weights[j]);
                support[i] = (support[i].0.min(j), j + 1);
            }
        }

        let lags = max_span as i64;
        let width = 2 * max_span + 1;
        let mut phase = vec![zero; width * n];
        for d in -lags..=lags {
            for (i, &w) in self.nodes.iter().enumerate() {
                phase[(d + lags) as usize * n + i] = Complex64::new(0.0, self.period * d as f64 * w).exp();
            }
        }
        let mut by_span = vec![zero; max_span + 1];
        let mut b = vec![zero; n];
        for d1 in -lags..=lags {
            let p1 = &phase[(d1 + lags) as usize * n..(d1 + lags + 1) as usize * n];
            b.iter_mut().for_each(|v| *v = zero);
            for i in 0..n {
                let (lo, hi) = support[i];
                if lo >= hi {
                    continue;
                }
                let pi_ = p1[i];
                for (bj, a) in b[lo..hi].iter_mut().zip(&amp[i * n + lo..i * n + hi]) {
                    *bj += a * pi_;
                }
            }
            for d2 in -lags..=lags {
                let span = d1.max(d2).max(0) - d1.min(d2).min(0);
                if span > lags {
                    continue;
                }
                let p2 = &phase[(d2 + lags) as usize * n..(d2 + lags + 1) as usize * n];
                let acc: Complex64 = b.iter().zip(p2).map(|(x, y)| x * y).sum();
                by_span[span as usize] += acc;
            }
        }
        Ok(by_span)
    }

    /// `Upsilon^3 = (1/4 pi^2) ∫∫ F(w1) F(w2) F(-w1-w2) S_2(w1, w2)` for `M`
    /// repetitions of `seq`; the sequence must share the grid period.
    pub fn upsilon3(&self, seq: &PulseSequence, repetitions: u32) -> Result<f64> {
        let m = repetitions as usize;
        let lags = (m - 1).min(self.max_lag);
        let by_span = self.span_sums(seq, lags)?;
        let total: Complex64 = by_span.iter().enumerate().map(|(s, a)| a * (m - s) as f64).sum();
        if lags < m - 1 {
            // spectra with a kink at zero frequency give algebraic lag tails;
            // measured against the lag magnitudes since the total may cancel
            let scale: f64 = by_span.iter().enumerate().map(|(s, a)| a.norm() * (m - s) as f64).sum();
            let last = by_span[lags].norm() * (m - lags) as f64;
            if last > 1e-4 * scale {
                return Err(Error::QuadratureNonConvergence(format!(
                    "third-order lag expansion still at {:.1e} of the lag sum at lag {lags}",
                    last / scale
                )));
            }
        }
        Ok(total.re / (4.0 * PI * PI))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical_noise::{LorentzianSumPSD, LorentzianTerm};
    use crate::filtered::free_window;
    use crate::sequences::{build_sequence, TimingConfig};

    fn model(a: f64) -> SquareNoiseModel {
        let wc = 1e4;
        let base = LorentzianSumPSD::new(vec![
            LorentzianTerm {
                weight: 0.1,
                center: 0.0,
                width: wc / 8f64.sqrt(),
            },
            LorentzianTerm {
                weight: 0.04,
                center: 1.5 * wc,
                width: wc / 4.0,
            },
        ])
        .unwrap();
        SquareNoiseModel::new(base, a).unwrap()
    }

    #[test]
    fn flat_band_free_evolution() {
        // S = s0 on |w| < W: (1/2 pi) ∫ 4 sin^2(w t/2)/w^2 S -> s0 t for W t >> 1
        struct Flat;
        impl Psd for Flat {
            fn psd(&self, w: f64) -> f64 {
                if w.abs() < 1e6 {
                    2.0
                } else {
                    0.0
                }
            }
            fn features(&self) -> Vec<f64> {
                vec![0.0, 1e6]
            }
            fn width(&self) -> f64 {
                1e4
            }
        }
        let t = 1e-2;
        let v = upsilon2_psd(&Flat, &free_window(t).unwrap(), 1).unwrap();
        // exact: (2/pi) ∫_0^W 4 sin^2(w t / 2) / w^2 dw = (4 t / pi) [Si(W t) - (1 - cos W t) / (W t)]
        let x: f64 = 1e6 * t;
        let si = crate::quad::integrate(
            |u: f64| if u == 0.0 { 1.0 } else { u.sin() / u },
            0.0,
            x,
            crate::quad::Tolerance {
                max_intervals: 100000,
                ..crate::quad::Tolerance::new(1e-14, 1e-13)
            },
        )
        .unwrap()
        .value;
        let exact = 4.0 * t / PI * (si - (1.0 - x.cos()) / x);
        assert!((v / exact - 1.0).abs() < 1e-6, "{v} vs {exact}");
    }

    #[test]
    fn time_domain_second_order_matches_frequency_domain() {
        let t = TimingConfig::new(3.95e-5 / 4.0, 3.95e-5, 128).unwrap();
        let seq = build_sequence(&[32, 32, 64], &[2, 0, 3], t, "s").unwrap();
        let m = model(0.0);
        let engine = SquareNoiseTimeDomain::new(&m, 3.0 * seq.cycle()).unwrap();
        let a = engine.upsilon2(&seq, 3).unwrap();
        let b = upsilon2_psd(m.base(), &seq, 3).unwrap();
        assert!((a / b - 1.0).abs() < 1e-7, "{a} vs {b}");
        let free = engine.upsilon2_free(2e-3).unwrap();
        let fb = upsilon2_psd(m.base(), &free_window(2e-3).unwrap(), 1).unwrap();
        assert!((free / fb - 1.0).abs() < 1e-7, "{free} vs {fb}");
    }

    #[test]
    fn square_noise_second_order_matches_squared_psd() {
        let m = model(1.0);
        let engine = SquareNoiseTimeDomain::new(&m, 1e-3).unwrap();
        let t = 8e-4;
        let a = engine.upsilon2_free(t).unwrap();
        // (1/2 pi) ∫ 4 sin^2(w t/2)/w^2 S_{g^2}(w) dw by plain adaptive quadrature
        let f = |w: f64| {
            let k = if w == 0.0 {
                t * t
            } else {
                4.0 * (0.5 * w * t).sin().powi(2) / (w * w)
            };
            k * m.squared_psd(w).unwrap()
        };
        let b = crate::quad::integrate_line(
            f,
            &[0.0, 1.5e4, -1.5e4, 3e4, -3e4],
            1e4,
            crate::quad::Tolerance {
                max_intervals: 20000,
                ..crate::quad::Tolerance::new(0.0, 1e-9)
            },
        )
        .unwrap()
        .value
            / (2.0 * PI);
        assert!((a / b - 1.0).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn third_order_grid_matches_time_domain_for_free_evolution() {
        let m = model(1.0);
        let t = 1.2e-3;
        let engine = SquareNoiseTimeDomain::new(&m, t).unwrap();
        let exact = engine.upsilon3_free(t).unwrap();
        let cells = (1.2e5 * t / (2.0 * PI)).ceil() as usize;
        let grid = BispectrumGrid::new(&m, t, cells, 16).unwrap();
        let v = grid.upsilon3(&free_window(t).unwrap(), 1).unwrap();
        assert!((v / exact - 1.0).abs() < 1e-3, "{v} vs {exact}");
    }

    #[test]
    fn lag_expansion_equals_unrolled_cycle() {
        // M repetitions of p equal one repetition of p concatenated M times
        let m = model(1.0);
        let t = TimingConfig::new(1.2e-3 / 32.0, 1.2e-3 / 32.0, 32).unwrap();
        let seq = build_sequence(&[16, 16], &[1, 2], t, "s").unwrap();
        let t2 = TimingConfig::new(1.2e-3 / 32.0, 1.2e-3 / 32.0, 64).unwrap();
        let twice = build_sequence(&[16, 16, 16, 16], &[1, 2, 1, 2], t2, "s2").unwrap();
        let g1 = BispectrumGrid::new(&m, seq.cycle(), 18, 16).unwrap();
        let g2 = BispectrumGrid::new(&m, twice.cycle(), 36, 16).unwrap();
        let a = g1.upsilon3(&seq, 2).unwrap();
        let b = g2.upsilon3(&twice, 1).unwrap();
        assert!((a / b - 1.0).abs() < 1e-4, "{a} vs {b}");
    }

    #[test]
    fn zero_bispectrum_gives_zero() {
        let g = BispectrumGrid::from_fn(|_, _| Ok(0.0), 1e-3, 4, 8).unwrap();
        let w = free_window(1e-3).unwrap();
        assert_eq!(g.upsilon3(&w, 1).unwrap(), 0.0);
        let m = model(0.0);
        let e = SquareNoiseTimeDomain::new(&m, 1e-3).unwrap();
        assert_eq!(e.upsilon3_free(5e-4).unwrap(), 0.0);
    }

    #[test]
    fn comb_sum_approaches_exact_with_repetitions() {
        let m = model(0.0);
        let t = TimingConfig::new(3.95e-5 / 4.0, 3.95e-5, 128).unwrap();
        let seq = build_sequence(&[64, 64], &[1, 3], t, "s").unwrap();
        let mut errs = Vec::new();
        for reps in [10, 20, 50] {
            let exact = upsilon2_psd(m.base(), &seq, reps).unwrap();
            let comb = comb_upsilon2(m.base(), &seq, reps);
            errs.push(((exact - comb) / comb).abs());
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert!(errs[2] < 0.02);
    }
}
