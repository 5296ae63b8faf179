//! Observable records (`chi`, `phi` of `<sigma_+>`) and their quadrature
//! evaluation for the classical and spin-boson noise models.

use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::upsilon::{upsilon2_psd, BispectrumGrid, SquareNoiseTimeDomain};
use crate::classical_noise::SquareNoiseModel;
use crate::error::{Error, Result};
use crate::sequences::PulseSequence;
use crate::spectrum::Psd;
use crate::spinboson::SpinBosonModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Quadrature,
    MonteCarlo,
    ExactMixture,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Quadrature => "quadrature",
            Method::MonteCarlo => "monte-carlo",
            Method::ExactMixture => "exact-mixture",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadrature" => Ok(Method::Quadrature),
            "monte-carlo" => Ok(Method::MonteCarlo),
            "exact-mixture" => Ok(Method::ExactMixture),
            _ => Err(Error::Parse(format!("unknown method tag {s:?}"))),
        }
    }
}

/// Standard errors of a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdErr {
    pub chi: f64,
    pub phi: f64,
}

/// Decay exponent and phase after `repetitions` cycles of one sequence:
/// `<sigma_+(t)> = <sigma_+(0)> exp(-chi + i phi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub label: String,
    pub repetitions: u32,
    pub chi: f64,
    pub phi: f64,
    pub method: Method,
    pub stderr: Option<StdErr>,
}

impl ObservableRecord {
    pub fn new(label: impl Into<String>, repetitions: u32, chi: f64, phi: f64, method: Method) -> Result<Self> {
        Self::build(label.into(), repetitions, chi, phi, method, None)
    }

    pub fn with_stderr(label: impl Into<String>, repetitions: u32, chi: f64, phi: f64, stderr: StdErr) -> Result<Self> {
        Self::build(label.into(), repetitions, chi, phi, Method::MonteCarlo, Some(stderr))
    }

    fn build(
        label: String,
        repetitions: u32,
        chi: f64,
        phi: f64,
        method: Method,
        stderr: Option<StdErr>,
    ) -> Result<Self> {
        if !chi.is_finite() || !phi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite observable for {label}: chi={chi}, phi={phi}"
            )));
        }
        if stderr.is_some() != (method == Method::MonteCarlo) {
            return Err(Error::InvalidParameter(
                "standard errors accompany Monte Carlo records only".into(),
            ));
        }
        Ok(ObservableRecord {
            label,
            repetitions,
            chi,
            phi,
            method,
            stderr,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    label: String,
    #[serde(rename = "M")]
    repetitions: u32,
    chi: f64,
    phi: f64,
    chi_stderr: Option<f64>,
    phi_stderr: Option<f64>,
    method: Method,
}

/// Writes `label,M,chi,phi,chi_stderr,phi_stderr,method`.
pub fn write_observables_csv<W: Write>(records: &[ObservableRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow {
            label: r.label.clone(),
            repetitions: r.repetitions,
            chi: r.chi,
            phi: r.phi,
            chi_stderr: r.stderr.map(|s| s.chi),
            phi_stderr: r.stderr.map(|s| s.phi),
            method: r.method,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_observables_csv<R: std::io::Read>(input: R) -> Result<Vec<ObservableRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        let row: CsvRow = row?;
        let stderr = match (row.chi_stderr, row.phi_stderr) {
            (Some(chi), Some(phi)) => Some(StdErr { chi, phi }),
            (None, None) => None,
            _ => return Err(Error::Parse(format!("incomplete standard errors for {}", row.label))),
        };
        out.push(ObservableRecord::build(
            row.label,
            row.repetitions,
            row.chi,
            row.phi,
            row.method,
            stderr,
        )?);
    }
    Ok(out)
}

/// Adds independent Gaussian measurement noise of relative size `rel_sigma`
/// to `chi` and `phi` (the phase is scaled by `|phi|`, falling back to `chi`).
pub fn perturb_observables(records: &mut [ObservableRecord], rel_sigma: f64, seed: u64) {
    if rel_sigma == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in records {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        let phi_scale = if r.phi != 0.0 { r.phi.abs() } else { r.chi.abs() };
        r.chi += rel_sigma * r.chi.abs() * a;
        r.phi += rel_sigma * phi_scale * b;
    }
}

/// Bispectrum grid covering the support of a square-noise bispectrum for
/// sequences with cycle `period`.
pub fn square_noise_grid(model: &SquareNoiseModel, period: f64, nodes_per_cell: usize) -> Result<BispectrumGrid> {
    let terms = model.base().terms();
    let top = terms.iter().map(|t| t.center).fold(0.0, f64::max);
    let width = terms.iter().map(|t| t.width).fold(0.0, f64::max);
    let reach = 2.0 * top + 30.0 * width;
    let cells = (reach * period / (2.0 * std::f64::consts::PI)).ceil().max(1.0) as usize;
    BispectrumGrid::new(model, period, cells, nodes_per_cell)
}

/// `Upsilon^k` (k = 2, 3) of `M` repetitions of `seq` under square noise.
/// The third order samples the bispectrum on a fresh grid; reuse a grid via
/// [`BispectrumGrid::upsilon3`] when evaluating many sequences.
pub fn upsilon_quadrature(
    model: &SquareNoiseModel,
    seq: &PulseSequence,
    repetitions: u32,
    order: usize,
) -> Result<f64> {
    match order {
        2 => upsilon2_psd(model, seq, repetitions),
        3 => {
            if model.mixing() == 0.0 {
                return Ok(0.0);
            }
            square_noise_grid(model, seq.cycle(), 16)?.upsilon3(seq, repetitions)
        }
        k => Err(Error::UnsupportedOrder(k)),
    }
}

/// Quadrature observables to third order: `chi = Upsilon^2 / 2`,
/// `phi = -Upsilon^3 / 6`. The phase needs a grid unless the noise is
/// Gaussian.
pub fn classical_observables(
    model: &SquareNoiseModel,
    seq: &PulseSequence,
    repetitions: u32,
    grid: Option<&BispectrumGrid>,
) -> Result<ObservableRecord> {
    let engine = SquareNoiseTimeDomain::new(model, repetitions as f64 * seq.cycle())?;
    let chi = 0.5 * engine.upsilon2(seq, repetitions)?;
    let phi = if model.mixing() == 0.0 {
        0.0
    } else if model.mixing() != 1.0 {
        return Err(Error::InvalidParameter(
            "quadrature phase needs a = 0 or a = 1; use Monte Carlo for mixed noise".into(),
        ));
    } else {
        match grid {
            Some(g) => -g.upsilon3(seq, repetitions)? / 6.0,
            None => {
                return Err(Error::InvalidParameter(
                    "third-order phase needs a bispectrum grid".into(),
                ))
            }
        }
    };
    ObservableRecord::new(seq.label(), repetitions, chi, phi, Method::Quadrature)
}

/// Gaussian-only observables of any PSD (`phi = 0`).
pub fn gaussian_observables<P: Psd + ?Sized>(
    psd: &P,
    seq: &PulseSequence,
    repetitions: u32,
) -> Result<ObservableRecord> {
    let chi = 0.5 * upsilon2_psd(psd, seq, repetitions)?;
    ObservableRecord::new(seq.label(), repetitions, chi, 0.0, Method::Quadrature)
}

/// Spin-boson decay to fourth order in the cumulant expansion; no phase.
pub fn spinboson_chi(model: &SpinBosonModel, seq: &PulseSequence, repetitions: u32) -> Result<ObservableRecord> {
    let (chi2, q4) = model.cumulant_decay(seq, repetitions)?;
    ObservableRecord::new(seq.label(), repetitions, chi2 - q4, 0.0, Method::Quadrature)
}

/// Exact decay for a global mixture of thermal states.
pub fn spinboson_exact(model: &SpinBosonModel, seq: &PulseSequence, repetitions: u32) -> Result<ObservableRecord> {
    let chi = model.exact_mixture_decay(seq, repetitions)?;
    ObservableRecord::new(seq.label(), repetitions, chi, 0.0, Method::ExactMixture)
}

/// `|chi^(4)| / |chi^(2)|` for free evolution over `t`.
pub fn cumulant_ratio(model: &SpinBosonModel, t: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let (chi2, q4) = model.cumulant_decay(&crate::filtered::free_window(t)?, 1)?;
    Ok(if chi2 == 0.0 { 0.0 } else { (q4 / chi2).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical_noise::{LorentzianSumPSD, LorentzianTerm};
    use crate::sequences::{build_sequence, TimingConfig};
    use crate::spinboson::{BathStateModel, SpectralDensity, ThermalComponent};

    fn fig4() -> SpinBosonModel {
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
        SpinBosonModel::new(SpectralDensity::new(1e-10, 1e4).unwrap(), state)
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![
            ObservableRecord::new("a", 40, 0.25, -0.01, Method::Quadrature).unwrap(),
            ObservableRecord::with_stderr("b", 40, 0.5, 0.02, StdErr { chi: 1e-3, phi: 2e-3 }).unwrap(),
        ];
        let mut buf = Vec::new();
        write_observables_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("label,M,chi,phi,chi_stderr,phi_stderr,method"));
        assert_eq!(read_observables_csv(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn record_invariants() {
        assert!(ObservableRecord::new("x", 1, f64::NAN, 0.0, Method::Quadrature).is_err());
        assert!(ObservableRecord::build("x".into(), 1, 0.1, 0.0, Method::MonteCarlo, None).is_err());
    }

    #[test]
    fn perturbation_is_seeded() {
        let base = vec![ObservableRecord::new("a", 1, 1.0, 0.5, Method::Quadrature).unwrap()];
        let mut a = base.clone();
        let mut b = base.clone();
        perturb_observables(&mut a, 0.05, 9);
        perturb_observables(&mut b, 0.05, 9);
        assert_eq!(a, b);
        assert_ne!(a, base);
    }

    #[test]
    fn gaussian_phase_vanishes() {
        let base = LorentzianSumPSD::new(vec![LorentzianTerm {
            weight: 1.0,
            center: 0.0,
            width: 1e4,
        }])
        .unwrap();
        let m = SquareNoiseModel::new(base, 0.0).unwrap();
        let t = TimingConfig::new(1e-5, 1e-5, 16).unwrap();
        let seq = build_sequence(&[16], &[2], t, "c2").unwrap();
        let r = classical_observables(&m, &seq, 4, None).unwrap();
        assert_eq!(r.phi, 0.0);
        assert!(r.chi > 0.0);
        assert_eq!(upsilon_quadrature(&m, &seq, 4, 3).unwrap(), 0.0);
        assert!(matches!(
            upsilon_quadrature(&m, &seq, 4, 4),
            Err(Error::UnsupportedOrder(4))
        ));
    }

    #[test]
    fn single_thermal_component_matches_exact() {
        let m = SpinBosonModel::new(
            SpectralDensity::new(1e-10, 1e4).unwrap(),
            BathStateModel::thermal(50.0).unwrap(),
        );
        let w = crate::filtered::free_window(0.01).unwrap();
        let a = spinboson_chi(&m, &w, 1).unwrap().chi;
        let b = spinboson_exact(&m, &w, 1).unwrap().chi;
        assert!((a / b - 1.0).abs() < 1e-4);
        assert!(cumulant_ratio(&m, 0.01).unwrap() < 1e-12);
    }

    #[test]
    fn mixture_fourth_order_converges_to_exact() {
        let m = fig4();
        assert_eq!(cumulant_ratio(&m, 0.0).unwrap(), 0.0);
        let mut last = f64::INFINITY;
        for t in [4e-3, 2e-3, 1e-3] {
            let w = crate::filtered::free_window(t).unwrap();
            let ratio = cumulant_ratio(&m, t).unwrap();
            assert!(ratio < last);
            last = ratio;
            let a = spinboson_chi(&m, &w, 1).unwrap().chi;
            let b = spinboson_exact(&m, &w, 1).unwrap().chi;
            if ratio < 0.05 {
                assert!((a / b - 1.0).abs() < 0.01, "t={t}: {a} vs {b}");
            }
        }
        // crosses one half at a finite time
        assert!(cumulant_ratio(&m, 0.2).unwrap() > 0.5);
    }
}
