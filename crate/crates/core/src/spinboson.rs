//! Linear spin-boson bath in the continuum limit: ohmic spectral density,
//! mixtures of thermal states, effective spectrum and trispectra, and the
//! exact decay of a thermal mixture.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtered::{filtered_integral, filtered_integrals, FilteredOptions};
use crate::sequences::PulseSequence;
use crate::spectrum::Psd;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J / K.
pub const K_B: f64 = 1.380_649e-23;

/// Ohmic density `J(w) = w0 |w / wc| exp(-(w / wc)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub w0: f64,
    pub omega_c: f64,
}

impl SpectralDensity {
    pub fn new(w0: f64, omega_c: f64) -> Result<Self> {
        if !(w0 >= 0.0 && omega_c > 0.0) || !w0.is_finite() || !omega_c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "spectral density needs w0 >= 0 and omega_c > 0 (got {w0}, {omega_c})"
            )));
        }
        Ok(SpectralDensity { w0, omega_c })
    }

    pub fn eval(&self, omega: f64) -> f64 {
        let x = omega.abs() / self.omega_c;
        self.w0 * x * (-x * x).exp()
    }

    /// `J(w) / |w|`, finite at zero.
    fn slope(&self, omega: f64) -> f64 {
        let x = omega / self.omega_c;
        self.w0 / self.omega_c * (-x * x).exp()
    }
}

/// Bose–Einstein occupation `1 / (e^{hbar w / k_B T} - 1)`.
pub fn thermal_occupation(omega: f64, temperature: f64) -> Result<f64> {
    if !(omega > 0.0 && temperature > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "occupation needs omega > 0 and T > 0 (got {omega}, {temperature})"
        )));
    }
    Ok(1.0 / (HBAR * omega / (K_B * temperature)).exp_m1())
}

/// `|w| n(w)`, continuous at zero where it tends to `k_B T / hbar`.
fn scaled_occupation(omega: f64, temperature: f64) -> f64 {
    let thermal = K_B * temperature / HBAR;
    let x = omega.abs() / thermal;
    let ratio = if x < 1e-6 { 1.0 - 0.5 * x } else { x / x.exp_m1() };
    thermal * ratio
}

/// One thermal component of a mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalComponent {
    pub weight: f64,
    pub temperature: f64,
}

/// Diagonal mixture of thermal states. `separable` selects mode-by-mode
/// mixing instead of a global mixture of thermal states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathStateModel {
    components: Vec<ThermalComponent>,
    separable: bool,
}

impl BathStateModel {
    pub fn new(components: Vec<ThermalComponent>, separable: bool) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("thermal component list".into()));
        }
        for c in &components {
            if !(c.weight > 0.0 && c.weight <= 1.0) || !(c.temperature > 0.0) || !c.temperature.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "component needs weight in (0, 1] and T > 0: {c:?}"
                )));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, not 1")));
        }
        Ok(BathStateModel { components, separable })
    }

    pub fn thermal(temperature: f64) -> Result<Self> {
        Self::new(
            vec![ThermalComponent {
                weight: 1.0,
                temperature,
            }],
            false,
        )
    }

    pub fn components(&self) -> &[ThermalComponent] {
        &self.components
    }

    pub fn is_separable(&self) -> bool {
        self.separable
    }
}

/// Occupation statistics of a mixture at two mode frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureStatistics {
    /// `<n>` at the first frequency.
    pub mean: f64,
    /// `<n^2> - 2 <n>^2 - <n>` at the first frequency.
    pub selfterm: f64,
    /// `<n_k n_l> - <n_k><n_l>` between the two frequencies.
    pub crossterm: f64,
}

pub fn mixture_statistics(state: &BathStateModel, nu1: f64, nu2: f64) -> Result<MixtureStatistics> {
    let mut mean1 = 0.0;
    let mut mean2 = 0.0;
    let mut second = 0.0;
    let mut joint = 0.0;
    for c in &state.components {
        let n1 = thermal_occupation(nu1, c.temperature)?;
        let n2 = thermal_occupation(nu2, c.temperature)?;
        mean1 += c.weight * n1;
        mean2 += c.weight * n2;
        second += c.weight * (2.0 * n1 * n1 + n1);
        joint += c.weight * n1 * n2;
    }
    Ok(MixtureStatistics {
        mean: mean1,
        selfterm: second - 2.0 * mean1 * mean1 - mean1,
        crossterm: joint - mean1 * mean2,
    })
}

/// Ohmic bath with a given initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinBosonModel {
    pub density: SpectralDensity,
    pub state: BathStateModel,
}

impl SpinBosonModel {
    pub fn new(density: SpectralDensity, state: BathStateModel) -> Self {
        SpinBosonModel { density, state }
    }

    /// `S_eff` of one thermal component, `pi J(|w|) (2 n(|w|) + 1)`, taking
    /// its finite limit at `w = 0`.
    pub fn component_spectrum(&self, index: usize, omega: f64) -> f64 {
        let c = &self.state.components[index];
        let j = &self.density;
        let w = omega.abs();
        std::f64::consts::PI * (j.slope(w) * (2.0 * scaled_occupation(w, c.temperature)) + j.eval(w))
    }

    /// `J(|w|) n_i(|w|)` for component `i`, finite at zero.
    fn weighted_occupation(&self, index: usize, omega: f64) -> f64 {
        let c = &self.state.components[index];
        self.density.slope(omega.abs()) * scaled_occupation(omega, c.temperature)
    }

    /// Mixture-averaged effective spectrum.
    pub fn effective_spectrum(&self, omega: f64) -> f64 {
        self.state
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| c.weight * self.component_spectrum(i, omega))
            .sum()
    }

    /// Entangled-branch effective trispectrum `J(|v1|) J(|v2|) N(|v1|, |v2|)`
    /// built from the inter-mode covariance of occupations.
    pub fn effective_trispectrum(&self, nu1: f64, nu2: f64) -> f64 {
        let mut joint = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (i, c) in self.state.components.iter().enumerate() {
            let a1 = self.weighted_occupation(i, nu1);
            let a2 = self.weighted_occupation(i, nu2);
            joint += c.weight * a1 * a2;
            m1 += c.weight * a1;
            m2 += c.weight * a2;
        }
        joint - m1 * m2
    }

    /// Separable-branch effective trispectrum `J(|w|)^2 n(|w|)`.
    pub fn separable_trispectrum(&self, omega: f64) -> f64 {
        let j = self.density.eval(omega);
        let mut second = 0.0;
        let mut mean = 0.0;
        for (i, c) in self.state.components.iter().enumerate() {
            let a = self.weighted_occupation(i, omega);
            second += c.weight * (2.0 * a * a + j * a);
            mean += c.weight * a;
        }
        second - 2.0 * mean * mean - j * mean
    }

    fn options(&self) -> FilteredOptions {
        FilteredOptions::new(6.0 * self.density.omega_c, 0.25 * self.density.omega_c)
    }

    /// Gaussian decay `chi_i = (1/4 pi) ∫ |F|^2 S_eff,i` of every component.
    pub fn component_decays(&self, seq: &PulseSequence, repetitions: u32) -> Result<Vec<f64>> {
        let n = self.state.components.len();
        let v = filtered_integrals(
            seq,
            repetitions,
            2,
            n,
            |w, out| {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = self.component_spectrum(i, w);
                }
            },
            self.options(),
        )?;
        Ok(v.into_iter().map(|x| x / (4.0 * std::f64::consts::PI)).collect())
    }

    /// `-ln sum_i w_i e^{-chi_i}` for a global mixture of thermal states.
    pub fn exact_mixture_decay(&self, seq: &PulseSequence, repetitions: u32) -> Result<f64> {
        if self.state.separable {
            return Err(Error::InvalidParameter(
                "the exact mixture decay applies to global mixtures of thermal states".into(),
            ));
        }
        let chis = self.component_decays(seq, repetitions)?;
        Ok(mixture_log_average(&self.state.components, &chis))
    }

    /// Second-order decay and the magnitude of the fourth-order correction;
    /// the decay to fourth order is `chi2 - q4`.
    pub fn cumulant_decay(&self, seq: &PulseSequence, repetitions: u32) -> Result<(f64, f64)> {
        let chis = self.component_decays(seq, repetitions)?;
        let w: Vec<f64> = self.state.components.iter().map(|c| c.weight).collect();
        let mean: f64 = w.iter().zip(&chis).map(|(w, c)| w * c).sum();
        if self.state.separable {
            let q4 = filtered_integral(seq, repetitions, 4, |x| self.separable_trispectrum(x), self.options())?;
            return Ok((mean, q4 / 8.0));
        }
        // (1/8) ∫∫ |F|^2 |F|^2 J3 = half the variance of chi_i over components
        let var: f64 = w.iter().zip(&chis).map(|(w, c)| w * (c - mean) * (c - mean)).sum();
        Ok((mean, 0.5 * var))
    }
}

impl Psd for SpinBosonModel {
    fn psd(&self, omega: f64) -> f64 {
        self.effective_spectrum(omega)
    }

    fn features(&self) -> Vec<f64> {
        vec![0.0, self.density.omega_c]
    }

    fn width(&self) -> f64 {
        0.25 * self.density.omega_c
    }
}

/// `-ln sum_i w_i e^{-chi_i}`, evaluated stably.
pub fn mixture_log_average(components: &[ThermalComponent], chis: &[f64]) -> f64 {
    let lo = chis.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = components
        .iter()
        .zip(chis)
        .map(|(c, chi)| c.weight * (-(chi - lo)).exp())
        .sum();
    lo - s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtered::free_window;
    use crate::quad::gauss_legendre;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn fig4_model() -> SpinBosonModel {
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
    fn occupation_limits_and_series() {
        let t = 7.64;
        let n = thermal_occupation(1e4, t).unwrap();
        // Laurent series of 1/(e^x - 1) for tiny x
        let x = HBAR * 1e4 / (K_B * t);
        let laurent = 1.0 / x - 0.5 + x / 12.0;
        assert!((n / laurent - 1.0).abs() < 1e-10);
        assert!(thermal_occupation(1e16, 1e-3).unwrap() < 1e-300);
        // direct geometric-series summation at moderate x
        let omega = 0.02 * K_B * t / HBAR;
        let q = (-HBAR * omega / (K_B * t)).exp();
        let (mut mean, mut second, mut p) = (0.0, 0.0, 1.0 - q);
        for k in 0..5000 {
            let kf = k as f64;
            mean += kf * p;
            second += kf * kf * p;
            p *= q;
        }
        let nbar = thermal_occupation(omega, t).unwrap();
        assert!((mean / nbar - 1.0).abs() < 1e-10);
        assert!((second / (2.0 * nbar * nbar + nbar) - 1.0).abs() < 1e-10);
        assert!(thermal_occupation(0.0, t).is_err());
        assert!(thermal_occupation(1.0, -1.0).is_err());
    }

    #[test]
    fn mixture_statistics_examples() {
        let single = BathStateModel::thermal(50.0).unwrap();
        let s = mixture_statistics(&single, 3e3, 7e3).unwrap();
        assert_eq!(s.crossterm, 0.0);
        assert!(s.selfterm.abs() < 1e-9 * s.mean * s.mean);
        let fig4 = fig4_model();
        let nu = 5e3;
        let s = mixture_statistics(&fig4.state, nu, nu).unwrap();
        let n1 = thermal_occupation(nu, 7.64).unwrap();
        let n2 = thermal_occupation(nu, 7640.0).unwrap();
        let expect = 0.25 * (n1 - n2).powi(2);
        assert!((s.crossterm / expect - 1.0).abs() < 1e-12);
        assert!(mixture_statistics(&fig4.state, 0.0, 1.0).is_err());
    }

    #[test]
    fn effective_spectrum_properties() {
        let m = fig4_model();
        for w in [1.0, 3e3, 1e4, 4e4] {
            assert_eq!(m.effective_spectrum(w), m.effective_spectrum(-w));
            let n = mixture_statistics(&m.state, w, w).unwrap().mean;
            let direct = PI * m.density.eval(w) * (2.0 * n + 1.0);
            assert!((m.effective_spectrum(w) / direct - 1.0).abs() < 1e-9);
            let lin = 0.5 * m.component_spectrum(0, w) + 0.5 * m.component_spectrum(1, w);
            assert_eq!(m.effective_spectrum(w), lin);
        }
        // continuous at zero
        let s0 = m.effective_spectrum(0.0);
        assert!((m.effective_spectrum(1e-3) / s0 - 1.0).abs() < 1e-9);
        // vacuum limit
        let cold = SpinBosonModel::new(m.density, BathStateModel::thermal(1e-12).unwrap());
        assert!(cold.effective_spectrum(0.0) < 1e-3 * cold.effective_spectrum(5e3));
        assert!((cold.effective_spectrum(5e3) / (PI * m.density.eval(5e3)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trispectrum_properties() {
        let m = fig4_model();
        let single = SpinBosonModel::new(m.density, BathStateModel::thermal(300.0).unwrap());
        for (a, b) in [(1e3, 2e3), (5e3, 5e3), (-7e3, 1.5e4)] {
            assert_eq!(single.effective_trispectrum(a, b), 0.0);
            let scale = (single.density.eval(a) * thermal_occupation(f64::abs(a), 300.0).unwrap()).powi(2);
            assert!(single.separable_trispectrum(a).abs() <= 1e-9 * scale);
            let v = m.effective_trispectrum(a, b);
            assert_eq!(v, m.effective_trispectrum(b, a));
            assert_eq!(v, m.effective_trispectrum(-a, b));
            assert_eq!(v, m.effective_trispectrum(a, -b));
        }
        let h = 0.5 * m.density.omega_c;
        let n1 = thermal_occupation(h, 7.64).unwrap();
        let n2 = thermal_occupation(h, 7640.0).unwrap();
        let expect = m.density.eval(h).powi(2) * 0.25 * (n1 - n2).powi(2);
        assert!((m.effective_trispectrum(h, h) / expect - 1.0).abs() < 1e-10);
    }

    #[test]
    fn exact_decay_basics() {
        let m = fig4_model();
        let single = SpinBosonModel::new(m.density, BathStateModel::thermal(7640.0).unwrap());
        let win = free_window(2e-3).unwrap();
        let exact = single.exact_mixture_decay(&win, 1).unwrap();
        let (chi2, q4) = single.cumulant_decay(&win, 1).unwrap();
        assert!((exact / chi2 - 1.0).abs() < 1e-12);
        assert_eq!(q4, 0.0);
        let tiny = m.exact_mixture_decay(&free_window(1e-9).unwrap(), 1).unwrap();
        assert!(tiny.abs() < 1e-6);
        let mut prev = 0.0;
        for k in 1..12 {
            let t = 1e-4 * 1.8f64.powi(k);
            let v = m.exact_mixture_decay(&free_window(t).unwrap(), 1).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    /// Fourth-order term from pointwise evaluation of the trispectrum on a
    /// tensor Gauss–Legendre grid, independent of the variance shortcut.
    fn q4_from_trispectrum(m: &SpinBosonModel, t: f64) -> f64 {
        let (x, w) = gauss_legendre(40);
        let cell = 2.0 * PI / t;
        let top = 8.0 * m.density.omega_c;
        let cells = (top / cell).ceil() as usize;
        let mut nodes = Vec::new();
        for k in 0..cells {
            for (xi, wi) in x.iter().zip(&w) {
                let om = (k as f64 + 0.5 * (xi + 1.0)) * cell;
                let f = 4.0 * (0.5 * om * t).sin().powi(2) / (om * om);
                nodes.push((om, 0.5 * cell * wi * f));
            }
        }
        let mut sum = 0.0;
        for &(a, wa) in &nodes {
            for &(b, wb) in &nodes {
                sum += wa * wb * m.effective_trispectrum(a, b);
            }
        }
        // four quadrants
        4.0 * sum / 8.0
    }

    #[test]
    fn trispectrum_reproduces_fourth_order_decay() {
        let m = fig4_model();
        let t = 3e-3;
        let (_, q4) = m.cumulant_decay(&free_window(t).unwrap(), 1).unwrap();
        let direct = q4_from_trispectrum(&m, t);
        assert!((q4 / direct - 1.0).abs() < 1e-6, "{q4} vs {direct}");
    }

    #[test]
    fn small_time_cumulant_consistency_on_random_mixtures() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let density = SpectralDensity::new(1e-10, 1e4).unwrap();
        for _ in 0..10 {
            let k = rng.random_range(2..=3);
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let comps = raw
                .iter()
                .map(|w| ThermalComponent {
                    weight: w / total,
                    temperature: 10f64.powf(rng.random_range(0.0..4.0)),
                })
                .collect();
            let m = SpinBosonModel::new(density, BathStateModel::new(comps, false).unwrap());
            let mut checked = 0;
            for j in 0..30 {
                let t = 1e-5 * 1.4f64.powi(j);
                let win = free_window(t).unwrap();
                let (chi2, q4) = m.cumulant_decay(&win, 1).unwrap();
                if q4 >= 0.1 * chi2 {
                    break;
                }
                let exact = m.exact_mixture_decay(&win, 1).unwrap();
                assert!(
                    ((chi2 - q4) / exact - 1.0).abs() < 0.01,
                    "t {t}: {} vs {exact}",
                    chi2 - q4
                );
                checked += 1;
            }
            assert!(checked > 0);
        }
    }

    #[test]
    fn separable_branch_uses_fourth_power() {
        let m = fig4_model();
        let sep = SpinBosonModel::new(
            m.density,
            BathStateModel::new(m.state.components().to_vec(), true).unwrap(),
        );
        let win = free_window(1e-3).unwrap();
        let (chi2, q4) = sep.cumulant_decay(&win, 1).unwrap();
        assert!(q4 > 0.0 && q4 < chi2);
        assert!(sep.exact_mixture_decay(&win, 1).is_err());
        // mode-by-mode mixing: j3 is twice the component variance of J n_i
        let w = 3e3;
        let a1 = m.density.eval(w) * thermal_occupation(w, 7.64).unwrap();
        let a2 = m.density.eval(w) * thermal_occupation(w, 7640.0).unwrap();
        let expect = 2.0 * 0.25 * (a1 - a2).powi(2);
        assert!((sep.separable_trispectrum(w) / expect - 1.0).abs() < 1e-9);
    }
}
