//! Classical Gaussian noise with a sum-of-Lorentzians spectrum, square noise
//! built from it, their polyspectra and a Fourier-synthesis trajectory sampler.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_line, Tolerance};
use crate::spectrum::{Bispectrum, Psd};

/// One peak `w / (1 + ((|w| - center) / width)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianTerm {
    pub weight: f64,
    pub center: f64,
    pub width: f64,
}

impl LorentzianTerm {
    pub fn eval(&self, omega: f64) -> f64 {
        let x = (omega.abs() - self.center) / self.width;
        self.weight / (1.0 + x * x)
    }

    fn deriv_pos(&self, omega: f64) -> f64 {
        let x = (omega - self.center) / self.width;
        let d = 1.0 + x * x;
        -2.0 * self.weight * x / (self.width * d * d)
    }

    /// `(1/pi) ∫_0^inf L(u + c) cos(u tau) du` for the unfolded peak `L`, by
    /// the integration-by-parts series in `1/tau`. Returns `None` when `tau`
    /// is too short for the series to converge.
    fn negative_part_asymptotic(&self, tau: f64) -> Option<f64> {
        let pole = Complex64::new(self.center, -self.width);
        let reach = pole.norm() * tau.abs();
        if reach < 40.0 {
            return None;
        }
        // f^(m)(0) = w gamma (-1)^m m! Im[(c - i gamma)^-(m+1)]
        let inv = 1.0 / pole;
        let inv2 = inv * inv;
        let mut power = inv2; // (c - i gamma)^-(2k+2)
        let mut fact = 1.0; // (2k+1)!
        let tau2 = tau * tau;
        let mut scale = 1.0 / tau2;
        let mut sum = 0.0;
        for k in 0..60 {
            let deriv = -self.weight * self.width * fact * power.im;
            let term = if k % 2 == 0 { -deriv } else { deriv } * scale;
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() {
                break;
            }
            let m = 2.0 * k as f64 + 2.0;
            fact *= m * (m + 1.0);
            power *= inv2;
            scale /= tau2;
        }
        Some(sum / PI)
    }

    /// `(1/pi) ∫_lo^inf` of the term for `lo >= 0`.
    fn mass_above(&self, lo: f64) -> f64 {
        self.weight * self.width / PI * (0.5 * PI - ((lo - self.center) / self.width).atan())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianSumPSD {
    terms: Vec<LorentzianTerm>,
}

impl LorentzianSumPSD {
    pub fn new(terms: Vec<LorentzianTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Empty("Lorentzian term list".into()));
        }
        for t in &terms {
            if !(t.weight >= 0.0 && t.width > 0.0 && t.center >= 0.0)
                || !(t.weight.is_finite() && t.width.is_finite() && t.center.is_finite())
            {
                return Err(Error::InvalidParameter(format!(
                    "Lorentzian term needs weight >= 0, width > 0, center >= 0: {t:?}"
                )));
            }
        }
        Ok(LorentzianSumPSD { terms })
    }

    pub fn terms(&self) -> &[LorentzianTerm] {
        &self.terms
    }

    /// Total variance `C(0) = (1/2 pi) ∫ S`.
    pub fn variance(&self) -> f64 {
        self.terms.iter().map(|t| t.mass_above(0.0)).sum()
    }

    /// Fraction of the variance carried by `|w| > omega_max`.
    pub fn mass_fraction_above(&self, omega_max: f64) -> f64 {
        let above: f64 = self.terms.iter().map(|t| t.mass_above(omega_max.abs())).sum();
        above / self.variance()
    }

    /// `C(tau) = (1/2 pi) ∫ S(w) e^{i w tau} dw`.
    ///
    /// Centered peaks are exact exponentials. An offset peak folded onto
    /// `|w|` equals a shifted Lorentzian (exponential times cosine) minus the
    /// part of that Lorentzian lying at negative frequency; that remainder is
    /// integrated numerically.
    pub fn autocovariance(&self, tau: f64) -> Result<f64> {
        let mut total = 0.0;
        for t in &self.terms {
            let decay = t.weight * t.width * (-t.width * tau.abs()).exp();
            if t.center == 0.0 {
                total += 0.5 * decay;
                continue;
            }
            total += decay * (t.center * tau).cos();
            if let Some(v) = t.negative_part_asymptotic(tau) {
                total -= v;
                continue;
            }
            let mirrored = LorentzianTerm {
                center: -t.center,
                ..*t
            };
            total -= cosine_transform(|u| mirrored.eval(u), |u| mirrored.deriv_pos(u), &[], t.width, tau)?;
        }
        Ok(total)
    }
}

impl Psd for LorentzianSumPSD {
    fn psd(&self, omega: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(omega)).sum()
    }

    fn features(&self) -> Vec<f64> {
        let mut f = vec![0.0];
        f.extend(self.terms.iter().map(|t| t.center).filter(|&c| c > 0.0));
        f
    }

    fn width(&self) -> f64 {
        self.terms.iter().map(|t| t.width).fold(f64::INFINITY, f64::min)
    }
}

/// `(1/pi) ∫_0^inf f(w) cos(w tau) dw` for smooth `f` decaying like `w^-2`.
fn cosine_transform<F, D>(f: F, df: D, features: &[f64], width: f64, tau: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let scale = features.iter().map(|&c| f(c)).fold(f(0.0), f64::max) * width;
    let tol = Tolerance::new(1e-14 * scale, 1e-11);
    if tau == 0.0 {
        let mut bp: Vec<f64> = features.iter().flat_map(|&c| [c, -c]).collect();
        bp.push(0.0);
        let est = integrate_line(|w| f(w.abs()), &bp, width, tol)?;
        return Ok(est.value / (2.0 * PI));
    }
    let tau = tau.abs();
    let reach = features.iter().copied().fold(0.0, f64::max) + 200.0 * width;
    let upper = reach.max(200.0 / tau);
    let period = 2.0 * PI / tau;
    let mut pts: Vec<f64> = Vec::new();
    let panels = (upper / period).ceil() as usize;
    pts.extend((0..=panels).map(|k| k as f64 * period));
    for &c in features {
        for x in [c - 20.0 * width, c, c + 20.0 * width] {
            if x > 0.0 && x < panels as f64 * period {
                pts.push(x);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut sum = 0.0;
    for w in pts.windows(2) {
        sum += integrate(|x| f(x) * (x * tau).cos(), w[0], w[1], tol)?.value;
    }
    // integration by parts for the remaining tail
    let u = *pts.last().unwrap();
    sum += -f(u) * (u * tau).sin() / tau - df(u) * (u * tau).cos() / (tau * tau);
    Ok(sum / PI)
}

/// `xi_a = a (g^2 - <g^2>) + (1 - a) g` with Gaussian `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareNoiseModel {
    base: LorentzianSumPSD,
    a: f64,
}

impl SquareNoiseModel {
    pub fn new(base: LorentzianSumPSD, a: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidParameter(format!("mixing a must lie in [0, 1], got {a}")));
        }
        Ok(SquareNoiseModel { base, a })
    }

    pub fn base(&self) -> &LorentzianSumPSD {
        &self.base
    }

    pub fn mixing(&self) -> f64 {
        self.a
    }

    fn breakpoints(&self, shifts: &[f64]) -> Vec<f64> {
        let mut bp = Vec::new();
        for &s in shifts {
            bp.push(s);
            for c in self.base.features() {
                bp.push(s + c);
                bp.push(s - c);
            }
        }
        bp
    }

    /// PSD of `g^2 - <g^2>`: `(2 / 2 pi) (S_g * S_g)(w)`.
    pub fn squared_psd(&self, omega: f64) -> Result<f64> {
        let b = &self.base;
        let est = integrate_line(
            |v| b.psd(v) * b.psd(omega - v),
            &self.breakpoints(&[0.0, omega]),
            b.width(),
            Tolerance::new(0.0, 1e-10),
        )?;
        Ok(est.value / PI)
    }

    /// Cumulant `C^(k)(t_1..t_k)` of `g^2 - <g^2>`: `2^{k-1}` times the sum
    /// over directed Hamiltonian cycles of products of `C_g` along the edges.
    pub fn square_noise_cumulant(&self, times: &[f64]) -> Result<f64> {
        if self.a != 1.0 {
            return Err(Error::InvalidParameter("cyclic cumulants need a = 1".into()));
        }
        let k = times.len();
        match k {
            1 => return Ok(0.0),
            2..=5 => {}
            _ => return Err(Error::UnsupportedOrder(k)),
        }
        let mut cov = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in i..k {
                let c = self.base.autocovariance(times[i] - times[j])?;
                cov[i][j] = c;
                cov[j][i] = c;
            }
        }
        let mut rest: Vec<usize> = (1..k).collect();
        let mut total = 0.0;
        permutations(&mut rest, 0, &mut |perm| {
            let mut prod = cov[0][perm[0]];
            for w in perm.windows(2) {
                prod *= cov[w[0]][w[1]];
            }
            prod *= cov[perm[perm.len() - 1]][0];
            total += prod;
        });
        Ok(2f64.powi(k as i32 - 1) * total)
    }

    /// `S_2(w1, w2) = (8 / 2 pi) ∫ S_g(v) S_g(v + w1) S_g(w2 - v) dv` (a = 1).
    pub fn square_noise_bispectrum(&self, omega1: f64, omega2: f64) -> Result<f64> {
        if self.a == 0.0 {
            return Ok(0.0);
        }
        if self.a != 1.0 {
            return Err(Error::InvalidParameter(
                "analytic bispectrum is provided for a = 0 and a = 1 only".into(),
            ));
        }
        // evaluate at one fixed member of the symmetry orbit so that the
        // symmetries hold to round-off
        let mut t = [omega1, omega2, -omega1 - omega2];
        let mut n = t.map(|x| -x);
        t.sort_by(f64::total_cmp);
        n.sort_by(f64::total_cmp);
        let [omega1, omega2, _] = if n > t { n } else { t };
        let b = &self.base;
        let est = integrate_line(
            |v| b.psd(v) * b.psd(v + omega1) * b.psd(omega2 - v),
            &self.breakpoints(&[0.0, -omega1, omega2]),
            b.width(),
            Tolerance::new(0.0, 1e-10),
        )?;
        Ok(4.0 * est.value / PI)
    }
}

fn permutations(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permutations(items, start + 1, visit);
        items.swap(start, i);
    }
}

impl Psd for SquareNoiseModel {
    /// `a^2 S_{g^2} + (1 - a)^2 S_g`; the cross term vanishes by parity.
    fn psd(&self, omega: f64) -> f64 {
        let a = self.a;
        let mut s = (1.0 - a) * (1.0 - a) * self.base.psd(omega);
        if a != 0.0 {
            s += a * a * self.squared_psd(omega).unwrap_or(f64::NAN);
        }
        s
    }

    fn features(&self) -> Vec<f64> {
        let mut f = self.base.features();
        if self.a != 0.0 {
            let c = self.base.features();
            for &x in &c {
                for &y in &c {
                    f.push(x + y);
                    f.push((x - y).abs());
                }
            }
            f.sort_by(f64::total_cmp);
            f.dedup();
        }
        f
    }

    fn width(&self) -> f64 {
        self.base.width()
    }
}

impl Bispectrum for SquareNoiseModel {
    fn bispectrum(&self, omega1: f64, omega2: f64) -> f64 {
        self.square_noise_bispectrum(omega1, omega2).unwrap_or(f64::NAN)
    }
}

/// Default limit on the variance fraction lying above the grid Nyquist
/// frequency.
pub const DEFAULT_ALIASING_LIMIT: f64 = 1e-4;

/// Uniform time grid `t_j = j dt`, `j = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub len: usize,
}

/// Fourier-synthesis sampler producing pairs of independent trajectories from
/// one complex FFT.
pub struct TrajectorySampler {
    grid: TimeGrid,
    a: f64,
    amplitudes: Vec<f64>,
    mean_square: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for TrajectorySampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrajectorySampler")
            .field("grid", &self.grid)
            .field("fft_len", &self.amplitudes.len())
            .finish()
    }
}

impl TrajectorySampler {
    /// The synthesis period exceeds the window by many correlation times so
    /// the circular covariance wrap-around is negligible.
    pub fn new(model: &SquareNoiseModel, grid: TimeGrid, aliasing_limit: f64) -> Result<Self> {
        if !(grid.dt > 0.0) || grid.len == 0 {
            return Err(Error::InvalidParameter("time grid needs dt > 0 and len > 0".into()));
        }
        let base = model.base();
        let nyquist = PI / grid.dt;
        let fraction = base.mass_fraction_above(nyquist);
        if fraction > aliasing_limit {
            return Err(Error::Aliasing {
                fraction,
                limit: aliasing_limit,
            });
        }
        let decorrelation = 40.0 / base.width();
        let min_len = grid.len + (decorrelation / grid.dt).ceil() as usize;
        let n = min_len.next_power_of_two();
        let dw = 2.0 * PI / (n as f64 * grid.dt);
        let mut amplitudes = vec![0.0; n];
        let mut mean_square = 0.0;
        for (k, amp) in amplitudes.iter_mut().enumerate() {
            let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            let var = base.psd(kk * dw) * dw / (2.0 * PI);
            mean_square += var;
            // complex amplitude variance 2 var -> real/imag std sqrt(var) each
            *amp = var.sqrt();
        }
        let fft = FftPlanner::new().plan_fft_inverse(n);
        Ok(TrajectorySampler {
            grid,
            a: model.mixing(),
            amplitudes,
            mean_square,
            fft,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Variance of the synthesized (band-limited, discretized) `g`.
    pub fn synthesized_variance(&self) -> f64 {
        self.mean_square
    }

    /// Draws two independent trajectories of `xi_a`.
    pub fn sample_pair<R: rand::Rng>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut buf: Vec<Complex64> = self
            .amplitudes
            .iter()
            .map(|&s| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re * s, im * s)
            })
            .collect();
        self.fft.process(&mut buf);
        let a = self.a;
        let ms = self.mean_square;
        let map = |g: f64| a * (g * g - ms) + (1.0 - a) * g;
        let first = buf[..self.grid.len].iter().map(|z| map(z.re)).collect();
        let second = buf[..self.grid.len].iter().map(|z| map(z.im)).collect();
        (first, second)
    }
}

/// Deterministic RNG stream for trajectory pair `index` under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One trajectory of `xi_a` on `grid`, reproducible per seed.
pub fn sample_trajectory(model: &SquareNoiseModel, grid: TimeGrid, seed: u64) -> Result<Vec<f64>> {
    let sampler = TrajectorySampler::new(model, grid, DEFAULT_ALIASING_LIMIT)?;
    Ok(sampler.sample_pair(&mut stream_rng(seed, 0)).0)
}
