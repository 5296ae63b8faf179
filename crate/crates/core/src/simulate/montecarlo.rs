//! Monte Carlo ground truth: average `exp(i ∫ y xi dt)` over synthesized
//! noise trajectories. Exact to all cumulant orders up to sampling error.

use num_complex::Complex64;
use rayon::prelude::*;

use super::observables::{ObservableRecord, StdErr};
use crate::classical_noise::{stream_rng, SquareNoiseModel, TimeGrid, TrajectorySampler};
use crate::error::{Error, Result};
use crate::sequences::PulseSequence;

/// Monte Carlo controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloOptions {
    pub trajectories: usize,
    pub seed: u64,
    /// Largest fraction of the noise variance allowed above the grid Nyquist
    /// frequency. The phase integrals are far less sensitive to the dropped
    /// tail than the variance itself, so this is looser than the sampler
    /// default.
    pub aliasing_limit: f64,
    /// Upper bound on `omega_top * dt` for the fastest spectral feature.
    pub resolution: f64,
    /// Jackknife blocks.
    pub blocks: usize,
}

impl MonteCarloOptions {
    pub fn new(trajectories: usize, seed: u64) -> Self {
        MonteCarloOptions {
            trajectories,
            seed,
            aliasing_limit: 1e-2,
            resolution: 0.5,
            blocks: 64,
        }
    }
}

/// Fastest relevant frequency of `xi_a` (twice the top peak for the square).
fn top_frequency(model: &SquareNoiseModel) -> f64 {
    let terms = model.base().terms();
    let c = terms.iter().map(|t| t.center).fold(0.0, f64::max);
    let g = terms.iter().map(|t| t.width).fold(0.0, f64::max);
    let factor = if model.mixing() > 0.0 { 2.0 } else { 1.0 };
    factor * (c + 5.0 * g)
}

/// Even number of sub-steps per `step` meeting the resolution and aliasing
/// requirements.
fn substeps(model: &SquareNoiseModel, step: f64, opts: &MonteCarloOptions) -> usize {
    let top = top_frequency(model);
    let mut sub = ((step * top / opts.resolution).ceil() as usize).max(2);
    sub += sub % 2;
    while model
        .base()
        .mass_fraction_above(std::f64::consts::PI * sub as f64 / step)
        > opts.aliasing_limit
        && sub < 1 << 20
    {
        sub += 2;
    }
    sub
}

/// Composite Simpson weights on `len = cells * sub + 1` points, cell `i`
/// carrying the constant factor `signs[i]`.
fn simpson_weights(signs: &[f64], sub: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![0.0; signs.len() * sub + 1];
    for (i, &s) in signs.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        let base = i * sub;
        for k in 0..=sub {
            let c = if k == 0 || k == sub {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w[base + k] += s * c * dt / 3.0;
        }
    }
    w
}

/// Sums of `exp(i Phi_j)` per block for each of the phase functionals
/// produced by `phases` (one trajectory in, one phase per output slot).
fn block_sums<F>(
    sampler: &TrajectorySampler,
    outputs: usize,
    opts: &MonteCarloOptions,
    phases: F,
) -> Result<(Vec<Vec<Complex64>>, Vec<usize>)>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    if opts.trajectories < 2 {
        return Err(Error::InvalidParameter(
            "Monte Carlo needs at least two trajectories".into(),
        ));
    }
    let pairs = opts.trajectories.div_ceil(2);
    let blocks = opts.blocks.clamp(2, pairs.max(2)).min(pairs);
    if blocks < 2 {
        return Err(Error::InvalidParameter("Monte Carlo needs at least two blocks".into()));
    }
    let ranges: Vec<(usize, usize)> = (0..blocks)
        .map(|b| (b * pairs / blocks, (b + 1) * pairs / blocks))
        .collect();
    let results: Vec<(Vec<Complex64>, usize)> = ranges
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = vec![Complex64::new(0.0, 0.0); outputs];
            let mut count = 0;
            let mut buf = vec![0.0; outputs];
            for p in lo..hi {
                let mut rng = stream_rng(opts.seed, p as u64);
                let (first, second) = sampler.sample_pair(&mut rng);
                let use_second = 2 * p + 1 < opts.trajectories;
                for (traj, used) in [(&first, true), (&second, use_second)] {
                    if !used {
                        continue;
                    }
                    phases(traj, &mut buf);
                    for (a, &phi) in acc.iter_mut().zip(&buf) {
                        *a += Complex64::new(0.0, phi).exp();
                    }
                    count += 1;
                }
            }
            (acc, count)
        })
        .collect();
    Ok(results.into_iter().unzip())
}

/// Estimates `(chi, phi)` and jackknife standard errors from block sums.
fn jackknife(sums: &[Vec<Complex64>], counts: &[usize], slot: usize) -> Result<(f64, f64, StdErr)> {
    let n: usize = counts.iter().sum();
    let total: Complex64 = sums.iter().map(|s| s[slot]).sum();
    let mean = total / n as f64;
    let floor = 4.0 / (n as f64).sqrt();
    if mean.norm() < floor {
        return Err(Error::NoiseFloor {
            magnitude: mean.norm(),
            floor,
        });
    }
    let chi = -mean.norm().ln();
    let phi = mean.arg();
    let b = sums.len() as f64;
    let leave: Vec<(f64, f64)> = sums
        .iter()
        .zip(counts)
        .map(|(s, &c)| {
            let z = (total - s[slot]) / (n - c) as f64;
            // unwrap phases relative to the full estimate
            let d = (z / mean).arg();
            (-z.norm().ln(), phi + d)
        })
        .collect();
    let mc = leave.iter().map(|v| v.0).sum::<f64>() / b;
    let mp = leave.iter().map(|v| v.1).sum::<f64>() / b;
    let vc = leave.iter().map(|v| (v.0 - mc).powi(2)).sum::<f64>() * (b - 1.0) / b;
    let vp = leave.iter().map(|v| (v.1 - mp).powi(2)).sum::<f64>() * (b - 1.0) / b;
    Ok((
        chi,
        phi,
        StdErr {
            chi: vc.sqrt(),
            phi: vp.sqrt(),
        },
    ))
}

/// Monte Carlo `chi`, `phi` of `M` repetitions of `seq` under `model`.
/// Bit-for-bit reproducible for fixed seed and trajectory count.
pub fn monte_carlo_observables(
    model: &SquareNoiseModel,
    seq: &PulseSequence,
    repetitions: u32,
    opts: MonteCarloOptions,
) -> Result<ObservableRecord> {
    if repetitions == 0 {
        return Err(Error::InvalidParameter("repetitions must be at least 1".into()));
    }
    let delta = seq.timing().delta();
    let sub = substeps(model, delta, &opts);
    let dt = delta / sub as f64;
    let mut signs = Vec::with_capacity(seq.timing().q() as usize * repetitions as usize);
    for _ in 0..repetitions {
        for &(a, b, s) in &seq.segments() {
            signs.extend(std::iter::repeat_n(s as f64, (b - a) as usize));
        }
    }
    let weights = simpson_weights(&signs, sub, dt);
    let grid = TimeGrid { dt, len: weights.len() };
    let sampler = TrajectorySampler::new(model, grid, opts.aliasing_limit)?;
    let (sums, counts) = block_sums(&sampler, 1, &opts, |traj, out| {
        out[0] = traj.iter().zip(&weights).map(|(x, w)| x * w).sum();
    })?;
    let (chi, phi, err) = jackknife(&sums, &counts, 0)?;
    ObservableRecord::with_stderr(seq.label(), repetitions, chi, phi, err)
}

/// Free-evolution decay and phase at `t_j = j * step`, `j = 1..=count`, all
/// from the same trajectories.
pub fn monte_carlo_free_evolution(
    model: &SquareNoiseModel,
    step: f64,
    count: usize,
    opts: MonteCarloOptions,
) -> Result<Vec<(f64, ObservableRecord)>> {
    if !(step > 0.0) || count == 0 {
        return Err(Error::InvalidParameter(
            "free evolution needs step > 0 and count >= 1".into(),
        ));
    }
    let sub = substeps(model, step, &opts);
    let dt = step / sub as f64;
    let grid = TimeGrid {
        dt,
        len: count * sub + 1,
    };
    let sampler = TrajectorySampler::new(model, grid, opts.aliasing_limit)?;
    let coeff: Vec<f64> = (0..=sub)
        .map(|k| {
            let c = if k == 0 || k == sub {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * dt / 3.0
        })
        .collect();
    let (sums, counts) = block_sums(&sampler, count, &opts, |traj, out| {
        let mut acc = 0.0;
        for (j, o) in out.iter_mut().enumerate() {
            let cell = &traj[j * sub..=(j + 1) * sub];
            acc += cell.iter().zip(&coeff).map(|(x, c)| x * c).sum::<f64>();
            *o = acc;
        }
    })?;
    (0..count)
        .map(|j| {
            let t = (j + 1) as f64 * step;
            let (chi, phi, err) = jackknife(&sums, &counts, j)?;
            Ok((
                t,
                ObservableRecord::with_stderr(format!("free t={t:e}"), 1, chi, phi, err)?,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical_noise::{LorentzianSumPSD, LorentzianTerm};
    use crate::sequences::{build_sequence, TimingConfig};
    use crate::simulate::upsilon::{upsilon2_psd, SquareNoiseTimeDomain};

    fn model(a: f64, scale: f64) -> SquareNoiseModel {
        let base = LorentzianSumPSD::new(vec![
            LorentzianTerm {
                weight: 0.1 * scale,
                center: 0.0,
                width: 1e4 / 8f64.sqrt(),
            },
            LorentzianTerm {
                weight: 0.04 * scale,
                center: 1.5e4,
                width: 2.5e3,
            },
        ])
        .unwrap();
        SquareNoiseModel::new(base, a).unwrap()
    }

    #[test]
    fn simpson_weights_integrate_constants_and_respect_signs() {
        let w = simpson_weights(&[1.0, -1.0, 1.0], 4, 0.25);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((w[4] - 0.0).abs() < 1e-15);
        let ramp: f64 = w.iter().enumerate().map(|(j, x)| x * (j as f64 * 0.25).powi(2)).sum();
        // ∫_0^1 t^2 - ∫_1^2 t^2 + ∫_2^3 t^2 = 1/3 - 7/3 + 19/3
        assert!((ramp - 13.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_gives_exact_zero() {
        let m = model(1.0, 0.0);
        let t = TimingConfig::new(1e-5, 1e-5, 16).unwrap();
        let seq = build_sequence(&[16], &[2], t, "c").unwrap();
        let r = monte_carlo_observables(&m, &seq, 3, MonteCarloOptions::new(64, 1)).unwrap();
        assert_eq!((r.chi, r.phi), (0.0, 0.0));
    }

    #[test]
    fn gaussian_case_matches_quadrature() {
        let m = model(0.0, 1.0);
        let t = TimingConfig::new(3.95e-5 / 4.0, 3.95e-5, 128).unwrap();
        let seq = build_sequence(&[64, 64], &[1, 2], t, "s").unwrap();
        let r = monte_carlo_observables(&m, &seq, 4, MonteCarloOptions::new(20_000, 7)).unwrap();
        let chi = 0.5 * upsilon2_psd(m.base(), &seq, 4).unwrap();
        let e = r.stderr.unwrap();
        assert!((r.chi - chi).abs() < 3.0 * e.chi, "{} vs {chi} ± {}", r.chi, e.chi);
        assert!(r.phi.abs() < 3.0 * e.phi);
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let m = model(1.0, 1.0);
        let t = TimingConfig::new(1e-5, 1e-5, 16).unwrap();
        let seq = build_sequence(&[16], &[1], t, "c").unwrap();
        let a = monte_carlo_observables(&m, &seq, 2, MonteCarloOptions::new(301, 3)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool
            .install(|| monte_carlo_observables(&m, &seq, 2, MonteCarloOptions::new(301, 3)))
            .unwrap();
        assert_eq!(a, b);
        let c = monte_carlo_observables(&m, &seq, 2, MonteCarloOptions::new(301, 4)).unwrap();
        assert_ne!(a.chi, c.chi);
    }

    #[test]
    fn free_evolution_matches_time_domain_cumulants() {
        let m = model(1.0, 3.0);
        let step = 2.5e-4;
        let count = 8;
        let rows = monte_carlo_free_evolution(&m, step, count, MonteCarloOptions::new(20_000, 11)).unwrap();
        let engine = SquareNoiseTimeDomain::new(&m, step * count as f64).unwrap();
        for (t, r) in rows.iter().step_by(3) {
            let chi = 0.5 * engine.upsilon2_free(*t).unwrap();
            let phi = -engine.upsilon3_free(*t).unwrap() / 6.0;
            let e = r.stderr.unwrap();
            // the positive fourth cumulant of g^2 noise lowers chi below second order
            assert!(
                r.chi < chi + 3.0 * e.chi && r.chi > 0.92 * chi,
                "t={t}: chi {} vs {chi}",
                r.chi
            );
            assert!(
                (r.phi - phi).abs() < 3.0 * e.phi,
                "t={t}: phi {} vs {phi} ± {}",
                r.phi,
                e.phi
            );
        }
        let (_, last) = &rows[count - 1];
        assert!(last.phi.abs() > 5.0 * last.stderr.unwrap().phi);
    }

    #[test]
    fn noise_floor_is_reported() {
        let m = model(0.0, 1e6);
        let t = TimingConfig::new(1e-5, 1e-5, 16).unwrap();
        let seq = build_sequence(&[16], &[0], t, "f").unwrap();
        let r = monte_carlo_observables(&m, &seq, 50, MonteCarloOptions::new(400, 1));
        assert!(matches!(r, Err(Error::NoiseFloor { .. })), "{r:?}");
    }
}
