//! Free-evolution decay and phase predicted from reconstructed spectra.
//!
//! Reconstructed samples at harmonics `2 pi n / T` are interpolated
//! piecewise-linearly (bilinearly in two dimensions) and set to zero outside
//! the reconstructed band.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::upsilon::BispectrumGrid;
use crate::comb_inversion::{symmetry_orbit, Branch, ReconstructionResult, SymmetryGroup, UnknownKind};
use crate::error::{Error, Result};
use crate::filtered::{filtered_integrals, free_window, FilteredOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEvolutionPrediction {
    pub times: Vec<f64>,
    pub chi: Vec<f64>,
    pub phi: Vec<f64>,
    /// Second-order part of `chi` alone.
    pub chi_gaussian: Vec<f64>,
    pub source: String,
    pub interpolation: String,
}

impl FreeEvolutionPrediction {
    /// `t,chi,phi,chi_gaussian`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "chi", "phi", "chi_gaussian"])?;
        for i in 0..self.times.len() {
            w.write_record([
                format!("{:e}", self.times[i]),
                format!("{:e}", self.chi[i]),
                format!("{:e}", self.phi[i]),
                format!("{:e}", self.chi_gaussian[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Piecewise-linear hat centred on harmonic `a` with spacing `h`, as a
/// function of `|w|`.
fn hat(a: i64, h: f64, w: f64) -> f64 {
    (1.0 - ((w.abs() / h) - a as f64).abs()).max(0.0)
}

/// `∫_R |F_free(w, t)|^power hat_a(w) dw` for `a = 0..=top`.
fn hat_integrals(t: f64, h: f64, top: i64, power: u32) -> Result<Vec<f64>> {
    let n = (top + 1) as usize;
    let opts = FilteredOptions::new((top + 1) as f64 * h, h / 4.0);
    filtered_integrals(
        &free_window(t)?,
        1,
        power,
        n,
        |w, out| {
            let k = w / h;
            out.iter_mut().for_each(|o| *o = 0.0);
            let lo = k.floor() as i64;
            for a in [lo, lo + 1] {
                if (0..=top).contains(&a) {
                    out[a as usize] = hat(a, h, w);
                }
            }
        },
        opts,
    )
}

/// Interpolated bispectrum from canonical samples on the harmonic lattice.
struct LatticeBispectrum {
    h: f64,
    values: HashMap<(i64, i64), f64>,
}

impl LatticeBispectrum {
    fn new(samples: &[(Vec<i64>, f64)], h: f64) -> Self {
        let mut values = HashMap::new();
        for (p, v) in samples {
            for img in symmetry_orbit(p, SymmetryGroup::Polyspectrum) {
                values.insert((img[0], img[1]), *v);
            }
        }
        LatticeBispectrum { h, values }
    }

    fn at(&self, a: i64, b: i64) -> f64 {
        self.values.get(&(a, b)).copied().unwrap_or(0.0)
    }

    fn eval(&self, w1: f64, w2: f64) -> f64 {
        let (x, y) = (w1 / self.h, w2 / self.h);
        let (i, j) = (x.floor() as i64, y.floor() as i64);
        let (fx, fy) = (x - i as f64, y - j as f64);
        (1.0 - fx) * (1.0 - fy) * self.at(i, j)
            + fx * (1.0 - fy) * self.at(i + 1, j)
            + (1.0 - fx) * fy * self.at(i, j + 1)
            + fx * fy * self.at(i + 1, j + 1)
    }
}

fn samples(recon: &ReconstructionResult, kind: UnknownKind) -> Vec<(Vec<i64>, f64)> {
    recon.samples(kind).into_iter().map(|(p, v)| (p.indices, v)).collect()
}

fn max_index(s: &[(Vec<i64>, f64)]) -> i64 {
    s.iter().flat_map(|(p, _)| p.iter().map(|v| v.abs())).max().unwrap_or(0)
}

/// Prediction at `t_j = j * step`, `j = 0..=count`.
pub fn predict_free_evolution(
    recon: &ReconstructionResult,
    step: f64,
    count: usize,
) -> Result<FreeEvolutionPrediction> {
    if recon.estimates.is_empty() {
        return Err(Error::Empty("reconstruction".into()));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("time step must be positive".into()));
    }
    let h = 2.0 * PI / recon.period;
    let times: Vec<f64> = (0..=count).map(|j| j as f64 * step).collect();
    let first_kind = match recon.branch {
        Branch::Classical => UnknownKind::Polyspectrum(1),
        _ => UnknownKind::EffectiveSpectrum,
    };
    let psd = samples(recon, first_kind);
    if psd.is_empty() {
        return Err(Error::Empty("order-1 reconstruction".into()));
    }
    let top = max_index(&psd);
    let mut s_lat = vec![0.0; top as usize + 1];
    for (p, v) in &psd {
        s_lat[p[0] as usize] = *v;
    }

    let mut chi_g = vec![0.0; times.len()];
    let mut chi = vec![0.0; times.len()];
    let mut phi = vec![0.0; times.len()];

    let fourth = match recon.branch {
        Branch::SpinBosonEntangled => samples(recon, UnknownKind::EffectiveTrispectrum),
        Branch::SpinBosonSeparable => samples(recon, UnknownKind::SeparableTrispectrum),
        Branch::Classical => Vec::new(),
    };
    let top4 = max_index(&fourth);
    let mut lat4 = vec![vec![0.0; top4 as usize + 1]; top4 as usize + 1];
    for (p, v) in &fourth {
        match recon.branch {
            Branch::SpinBosonEntangled => {
                lat4[p[0] as usize][p[1] as usize] = *v;
                lat4[p[1] as usize][p[0] as usize] = *v;
            }
            _ => lat4[0][p[0] as usize] = *v,
        }
    }

    for (k, &t) in times.iter().enumerate().skip(1) {
        let i2 = hat_integrals(t, h, top.max(top4), 2)?;
        let c2: f64 = s_lat.iter().zip(&i2).map(|(s, i)| s * i).sum::<f64>() / (4.0 * PI);
        chi_g[k] = c2;
        let q4 = match recon.branch {
            Branch::Classical => 0.0,
            Branch::SpinBosonEntangled => {
                let mut q = 0.0;
                for a in 0..=top4 as usize {
                    for b in 0..=top4 as usize {
                        q += lat4[a][b] * i2[a] * i2[b];
                    }
                }
                q / 8.0
            }
            Branch::SpinBosonSeparable => {
                let i4 = hat_integrals(t, h, top4, 4)?;
                lat4[0].iter().zip(&i4).map(|(j, i)| j * i).sum::<f64>() / 8.0
            }
        };
        chi[k] = c2 - q4;
    }

    if recon.branch == Branch::Classical {
        let bis = samples(recon, UnknownKind::Polyspectrum(2));
        if !bis.is_empty() && count > 0 {
            let lattice = LatticeBispectrum::new(&bis, h);
            let reach = lattice
                .values
                .keys()
                .map(|k| k.0.abs().max(k.1.abs()))
                .max()
                .unwrap_or(0)
                + 1;
            // free evolution over j * step as repeated sub-cycles no longer
            // than the reconstruction period
            let per_step = (step / recon.period - 1e-9).ceil().max(1.0) as usize;
            let sub = step / per_step as f64;
            let spans = count * per_step;
            let turns = sub * h / (2.0 * PI);
            let nodes = (1.5 * spans as f64 * turns).ceil() as usize + 12;
            let grid = BispectrumGrid::with_cell_width(|a, b| Ok(lattice.eval(a, b)), sub, h, reach as usize, nodes)?;
            let sums = grid.span_sums(&free_window(sub)?, spans - 1)?;
            for (k, p) in phi.iter_mut().enumerate().skip(1) {
                let m = k * per_step;
                let u3: f64 = sums[..m].iter().enumerate().map(|(s, a)| a.re * (m - s) as f64).sum();
                *p = -u3 / (24.0 * PI * PI);
            }
        }
    }

    Ok(FreeEvolutionPrediction {
        times,
        chi,
        phi,
        chi_gaussian: chi_g,
        source: format!(
            "{} reconstruction, T = {:e} s, M = {}",
            recon.branch, recon.period, recon.repetitions
        ),
        interpolation: "piecewise-linear in |w| (bilinear in 2-D), zero outside the reconstructed band".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical_noise::{LorentzianSumPSD, LorentzianTerm, SquareNoiseModel};
    use crate::comb_inversion::{enumerate_principal, Estimate, HarmonicPoint, Truncation, Unknown};
    use crate::simulate::upsilon::SquareNoiseTimeDomain;
    use crate::spectrum::{Bispectrum, Psd};
    use crate::spinboson::{BathStateModel, SpectralDensity, SpinBosonModel, ThermalComponent};

    fn exact_samples(branch: Branch, period: f64, cols: Vec<(UnknownKind, Vec<i64>, f64)>) -> ReconstructionResult {
        ReconstructionResult {
            branch,
            period,
            repetitions: 1,
            estimates: cols
                .into_iter()
                .map(|(kind, p, v)| Estimate {
                    unknown: Unknown {
                        kind,
                        point: HarmonicPoint::new(p),
                        multiplicity: 1,
                    },
                    value: v,
                })
                .collect(),
            residual: 0.0,
            condition: 1.0,
            rank: 0,
        }
    }

    fn square_model() -> SquareNoiseModel {
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
        SquareNoiseModel::new(base, 1.0).unwrap()
    }

    #[test]
    fn interpolation_only_prediction_matches_model() {
        let m = square_model();
        // fine harmonic spacing so interpolation error stays small
        let period = 32.0 * 3.95e-5 * 4.0;
        let h = 2.0 * PI / period;
        let k1 = (8e4 / h) as i64;
        let d2 = enumerate_principal(2, (6e4 / h) as i64, SymmetryGroup::Polyspectrum, Truncation::Hexagonal).unwrap();
        let mut cols: Vec<_> = (0..=k1)
            .map(|n| (UnknownKind::Polyspectrum(1), vec![n], m.psd(n as f64 * h)))
            .collect();
        for p in &d2.points {
            let v = m.bispectrum(p.indices[0] as f64 * h, p.indices[1] as f64 * h);
            cols.push((UnknownKind::Polyspectrum(2), p.indices.clone(), v));
        }
        let recon = exact_samples(Branch::Classical, period, cols);
        let step = 2.0e-3;
        let pred = predict_free_evolution(&recon, step, 4).unwrap();
        assert_eq!((pred.chi[0], pred.phi[0]), (0.0, 0.0));
        let engine = SquareNoiseTimeDomain::new(&m, 4.0 * step).unwrap();
        for k in 1..=4 {
            let t = pred.times[k];
            let chi = 0.5 * engine.upsilon2_free(t).unwrap();
            let phi = -engine.upsilon3_free(t).unwrap() / 6.0;
            assert!(
                (pred.chi[k] / chi - 1.0).abs() < 0.02,
                "t={t}: {} vs {chi}",
                pred.chi[k]
            );
            assert!(
                (pred.phi[k] / phi - 1.0).abs() < 0.02,
                "t={t}: {} vs {phi}",
                pred.phi[k]
            );
        }
    }

    #[test]
    fn spinboson_prediction_from_exact_samples() {
        let state = BathStateModel::new(
            vec![
                ThermalComponent {
                    weight: 0.5,
                    temperature: 7.64,
                },
                ThermalComponent {
                    weight: 0.5,
                    temperature: 7640.0,
                },
            ],
            false,
        )
        .unwrap();
        let model = SpinBosonModel::new(SpectralDensity::new(1e-10, 1e4).unwrap(), state);
        let period = 32.0 * 3.44e-5 * 4.0;
        let h = 2.0 * PI / period;
        let k = (4e4 / h) as i64;
        let mut cols: Vec<_> = (0..=k)
            .map(|n| {
                (
                    UnknownKind::EffectiveSpectrum,
                    vec![n],
                    model.effective_spectrum(n as f64 * h),
                )
            })
            .collect();
        for a in 0..=k {
            for b in 0..=a {
                let v = model.effective_trispectrum(a as f64 * h, b as f64 * h);
                cols.push((UnknownKind::EffectiveTrispectrum, vec![a, b], v));
            }
        }
        let recon = exact_samples(Branch::SpinBosonEntangled, period, cols);
        let pred = predict_free_evolution(&recon, 4e-3, 3).unwrap();
        for i in 1..=3 {
            let w = free_window(pred.times[i]).unwrap();
            let (c2, q4) = model.cumulant_decay(&w, 1).unwrap();
            assert!(
                (pred.chi_gaussian[i] / c2 - 1.0).abs() < 0.02,
                "{} vs {c2}",
                pred.chi_gaussian[i]
            );
            assert!((pred.chi[i] / (c2 - q4) - 1.0).abs() < 0.02);
            assert_eq!(pred.phi[i], 0.0);
        }
    }

    #[test]
    fn hat_partition_of_unity() {
        let h = 3.0;
        for w in [0.0, 0.4, 2.9, 3.0, 7.7, -5.5] {
            let s: f64 = (0..5).map(|a| hat(a, h, w)).sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_reconstruction_is_an_error() {
        let r = exact_samples(Branch::Classical, 1e-3, vec![]);
        assert!(matches!(predict_free_evolution(&r, 1e-3, 2), Err(Error::Empty(_))));
    }
}
