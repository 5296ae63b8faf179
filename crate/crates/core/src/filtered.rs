//! Exact integrals of even weight functions against powers of the total
//! filter function of a repeated sequence, `∫_R |F_p(w) K_M(w)|^p f(w) dw`.
//!
//! The half line is cut into harmonic cells of width `2 pi / T`; the
//! repetition kernel is a trigonometric polynomial of degree `M - 1` in
//! `w T` on every cell, so a Gauss–Legendre rule with a node count growing
//! linearly in `M` resolves it. Cells are accumulated in doubling chunks
//! until the remaining tail is negligible.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad::gauss_legendre;
use crate::sequences::{comb_kernel, FilterEval, PulseSequence};

/// Integration controls.
#[derive(Debug, Clone, Copy)]
pub struct FilteredOptions {
    /// Stop once a chunk of cells adds less than this fraction of the total.
    pub tail_rel: f64,
    /// Integrate at least up to this frequency.
    pub min_extent: f64,
    /// Narrowest spectral feature; cells wider than this are subdivided.
    pub width: f64,
    pub max_cells: usize,
}

impl FilteredOptions {
    pub fn new(min_extent: f64, width: f64) -> Self {
        FilteredOptions {
            tail_rel: 1e-11,
            min_extent,
            width,
            max_cells: 4_000_000,
        }
    }

    /// Extent and width suited to a spectrum with the given features.
    pub fn for_features(features: &[f64], width: f64) -> Self {
        let top = features.iter().copied().fold(0.0, f64::max);
        Self::new(top + 40.0 * width, width)
    }
}

/// Integrals `∫_R |F_p K_M|^power f_j(w) dw` for several weights at once;
/// `eval(w, out)` writes `f_j(w)` for `w >= 0` (the weights are even).
pub fn filtered_integrals<E>(
    seq: &PulseSequence,
    repetitions: u32,
    power: u32,
    count: usize,
    eval: E,
    opts: FilteredOptions,
) -> Result<Vec<f64>>
where
    E: Fn(f64, &mut [f64]),
{
    if power == 0 || power % 2 == 1 {
        return Err(Error::InvalidParameter(format!(
            "filter power must be even, got {power}"
        )));
    }
    if !(opts.width > 0.0) {
        return Err(Error::InvalidParameter("feature width must be positive".into()));
    }
    let period = seq.cycle();
    let cell = 2.0 * PI / period;
    let sub = (cell / opts.width).ceil().max(1.0) as usize;
    let sub_width = cell / sub as f64;
    // kernel degree per sub-cell, doubled for |K|^4
    let kernel_periods = (repetitions as f64) * (power as f64 / 2.0) / sub as f64;
    let nodes = (2.2 * kernel_periods).ceil() as usize + 24;
    let (x, w) = gauss_legendre(nodes);
    let filter = FilterEval::new(seq);
    let m = repetitions;
    let half = power as i32 / 2;

    let mut vals = vec![0.0; count];
    let mut cell_sum = |lo: f64, acc: &mut [f64]| {
        for (xi, wi) in x.iter().zip(&w) {
            let omega = lo + 0.5 * sub_width * (xi + 1.0);
            let weight =
                (filter.power(omega) * comb_kernel(m, period, omega).powi(2)).powi(half) * 0.5 * sub_width * wi;
            eval(omega, &mut vals);
            for (a, v) in acc.iter_mut().zip(&vals) {
                *a += weight * v;
            }
        }
    };

    let mut total = vec![0.0; count];
    let mut done = 0usize;
    let mut chunk = 1usize;
    let mut quiet = 0;
    let mut chunk_acc = vec![0.0; count];
    loop {
        chunk_acc.iter_mut().for_each(|v| *v = 0.0);
        for k in done..done + chunk {
            cell_sum(k as f64 * sub_width, &mut chunk_acc);
        }
        done += chunk;
        let mut small = true;
        for (t, c) in total.iter_mut().zip(&chunk_acc) {
            *t += c;
        }
        let scale = total.iter().fold(0.0f64, |a, t| a.max(t.abs()));
        for c in &chunk_acc {
            if c.abs() > opts.tail_rel * scale {
                small = false;
            }
        }
        if done as f64 * sub_width >= opts.min_extent && small {
            quiet += 1;
            if quiet >= 2 {
                break;
            }
        } else {
            quiet = 0;
        }
        if done >= opts.max_cells {
            return Err(Error::QuadratureNonConvergence(format!(
                "filtered integral tail still significant after {done} cells"
            )));
        }
        chunk = (2 * chunk).min(opts.max_cells - done).max(1);
    }
    Ok(total.into_iter().map(|v| 2.0 * v).collect())
}

/// Single-weight form of [`filtered_integrals`].
pub fn filtered_integral<F: Fn(f64) -> f64>(
    seq: &PulseSequence,
    repetitions: u32,
    power: u32,
    f: F,
    opts: FilteredOptions,
) -> Result<f64> {
    let v = filtered_integrals(seq, repetitions, power, 1, |w, out| out[0] = f(w), opts)?;
    Ok(v[0])
}

/// Free evolution over `duration`, represented as one pulse-free cycle.
pub fn free_window(duration: f64) -> Result<PulseSequence> {
    let timing = crate::sequences::TimingConfig::new(duration, duration, 1)?;
    Ok(PulseSequence::free_evolution(timing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, Tolerance};
    use crate::sequences::{build_sequence, filter_function, TimingConfig};

    fn lorentz(w: f64) -> f64 {
        1.0 / (1.0 + ((w.abs() - 3e4) / 2e3).powi(2)) + 0.5 / (1.0 + (w / 1e3).powi(2))
    }

    /// Lag-expansion oracle: `sum_{|d|<M} (M - |d|) ∫ |F_p|^2 f e^{i w d T}`,
    /// each lag integral done by adaptive quadrature.
    fn lag_oracle(seq: &PulseSequence, m: u32, f: impl Fn(f64) -> f64) -> f64 {
        let period = seq.cycle();
        let mut total = 0.0;
        for d in 0..m as i64 {
            let g = |w: f64| filter_function(seq, w).norm_sqr() * f(w) * (w * d as f64 * period).cos();
            let mut acc = 0.0;
            let cell = 2.0 * PI / period;
            for k in 0..4000 {
                acc += integrate(g, k as f64 * cell, (k + 1) as f64 * cell, Tolerance::new(1e-17, 1e-11))
                    .unwrap()
                    .value;
            }
            let mult = if d == 0 { m as f64 } else { 2.0 * (m as f64 - d as f64) };
            total += 2.0 * mult * acc;
        }
        total
    }

    #[test]
    fn matches_lag_expansion() {
        let t = TimingConfig::new(1e-5, 1e-5, 32).unwrap();
        let seq = build_sequence(&[16, 16], &[1, 3], t, "s").unwrap();
        let m = 6;
        let opts = FilteredOptions::for_features(&[0.0, 3e4], 1e3);
        let a = filtered_integral(&seq, m, 2, lorentz, opts).unwrap();
        let b = lag_oracle(&seq, m, lorentz);
        assert!((a / b - 1.0).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn free_evolution_closed_form() {
        // ∫ 4 sin^2(w t/2)/w^2 e^{-w^2/s^2} dw with s -> infinity tends to 2 pi t
        let t = 2e-3;
        let win = free_window(t).unwrap();
        let s = 1e6;
        let v = filtered_integral(
            &win,
            1,
            2,
            |w| (-(w / s).powi(2)).exp(),
            FilteredOptions::new(6.0 * s, s),
        )
        .unwrap();
        assert!((v / (2.0 * PI * t) - 1.0).abs() < 1e-3, "{}", v / (2.0 * PI * t));
    }

    #[test]
    fn fourth_power_of_single_cycle_is_kernel_free() {
        let t = TimingConfig::new(1e-5, 1e-5, 16).unwrap();
        let seq = build_sequence(&[16], &[2], t, "c").unwrap();
        let opts = FilteredOptions::new(1e6, 2e3);
        let a = filtered_integral(&seq, 1, 4, lorentz, opts).unwrap();
        let mut b = 0.0;
        let cell = 2.0 * PI / seq.cycle();
        for k in 0..3000 {
            b += integrate(
                |w| filter_function(&seq, w).norm_sqr().powi(2) * lorentz(w),
                k as f64 * cell,
                (k + 1) as f64 * cell,
                Tolerance::new(1e-17, 1e-11),
            )
            .unwrap()
            .value;
        }
        assert!((a / (2.0 * b) - 1.0).abs() < 1e-7);
    }
}
