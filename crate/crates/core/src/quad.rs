//! Numerical quadrature: adaptive Gauss–Kronrod on finite intervals, panel
//! sums for oscillatory integrands on half lines, and Gauss–Legendre rules
//! for tensor grids.

use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Values that can be integrated: reals and complex numbers.
pub trait QuadValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance {
            abs,
            rel,
            max_intervals: 2000,
        }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::new(0.0, 1e-10)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
}

fn gk15<T: QuadValue, F: FnMut(f64) -> T>(f: &mut F, a: f64, b: f64) -> (T, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        kronrod = kronrod + s * WGK[i];
        if i % 2 == 1 {
            gauss = gauss + s * WG[i / 2];
        }
    }
    let k = kronrod * h;
    let g = gauss * h;
    (k, (k - g).magnitude())
}

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Segment<T> {}
impl<T> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) integration over `[a, b]`.
pub fn integrate<T: QuadValue, F: FnMut(f64) -> T>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate<T>> {
    if a == b {
        return Ok(Estimate {
            value: T::zero(),
            error: 0.0,
        });
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        a,
        b,
        value: v,
        error: e,
    });
    let mut total = v;
    let mut total_err = e;
    let mut count = 1;
    loop {
        let target = tol.abs.max(tol.rel * total.magnitude());
        if total_err <= target {
            break;
        }
        if count >= tol.max_intervals {
            // Round-off floor: accept when the remaining error is at the level
            // of double precision relative to the magnitude of the integrand.
            if total_err <= 1e-13 * total.magnitude().max(tol.abs) {
                break;
            }
            return Err(Error::QuadratureNonConvergence(format!(
                "[{a:.6e}, {b:.6e}]: error {total_err:.3e} exceeds target {target:.3e}"
            )));
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point.
            heap.push(Segment { error: 0.0, ..worst });
            total_err -= worst.error;
            continue;
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        total = total - worst.value + v1 + v2;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        count += 1;
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    let mut value = T::zero();
    let mut error = 0.0;
    for s in heap.iter() {
        value = value + s.value;
        error += s.error;
    }
    Ok(Estimate { value, error })
}

/// Integrates `f` over consecutive panels `[start + k w, start + (k+1) w]`
/// until the half-line tail is negligible.
///
/// Panels are grouped into chunks of doubling size; integration stops once two
/// consecutive chunks each contribute less than `tail_rel` of the running
/// total and the covered extent is at least `min_extent`.
pub fn integrate_panels<T: QuadValue, F: FnMut(f64) -> T>(
    mut f: F,
    start: f64,
    width: f64,
    min_extent: f64,
    tol: Tolerance,
    tail_rel: f64,
    max_panels: usize,
) -> Result<Estimate<T>> {
    let panel_tol = Tolerance { abs: tol.abs, ..tol };
    let mut total = T::zero();
    let mut error = 0.0;
    let mut panel = 0usize;
    let mut chunk = 1usize;
    let mut quiet = 0;
    loop {
        let mut chunk_sum = T::zero();
        for _ in 0..chunk {
            let a = start + panel as f64 * width;
            let est = integrate(&mut f, a, a + width, panel_tol)?;
            chunk_sum = chunk_sum + est.value;
            error += est.error;
            panel += 1;
        }
        total = total + chunk_sum;
        let extent = panel as f64 * width;
        if extent >= min_extent && chunk_sum.magnitude() <= tail_rel * total.magnitude() {
            quiet += 1;
            if quiet >= 2 {
                break;
            }
        } else {
            quiet = 0;
        }
        if panel >= max_panels {
            return Err(Error::QuadratureNonConvergence(format!(
                "half-line tail not negligible after {panel} panels"
            )));
        }
        chunk = (chunk * 2).min(max_panels - panel).max(1);
    }
    Ok(Estimate { value: total, error })
}

/// Integrates a non-oscillatory `f` over the whole real line, splitting at the
/// supplied breakpoints and mapping the two tails onto finite intervals.
pub fn integrate_line<F: FnMut(f64) -> f64>(
    mut f: F,
    breakpoints: &[f64],
    scale: f64,
    tol: Tolerance,
) -> Result<Estimate<f64>> {
    let mut pts: Vec<f64> = breakpoints.iter().copied().filter(|x| x.is_finite()).collect();
    if pts.is_empty() {
        pts.push(0.0);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let lo = pts[0];
    let hi = *pts.last().unwrap();
    let mut value = 0.0;
    let mut error = 0.0;
    for w in pts.windows(2) {
        let est = integrate(&mut f, w[0], w[1], tol)?;
        value += est.value;
        error += est.error;
    }
    // x = hi + s t / (1 - t) on [0, 1)
    let right = integrate(
        |t: f64| {
            let u = 1.0 - t;
            scale / (u * u) * f(hi + scale * t / u)
        },
        0.0,
        1.0,
        tol,
    )?;
    let left = integrate(
        |t: f64| {
            let u = 1.0 - t;
            scale / (u * u) * f(lo - scale * t / u)
        },
        0.0,
        1.0,
        tol,
    )?;
    value += right.value + left.value;
    error += right.error + left.error;
    Ok(Estimate { value, error })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule: `cells` equal cells on `[a, b]`, `n` nodes each.
pub fn composite_rule(a: f64, b: f64, cells: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = (b - a) / cells as f64;
    let mut nodes = Vec::with_capacity(cells * n);
    let mut weights = Vec::with_capacity(cells * n);
    for c in 0..cells {
        let mid = a + (c as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(mid + 0.5 * h * xi);
            weights.push(0.5 * h * wi);
        }
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gk_polynomial_and_gaussian() {
        let est = integrate(|x: f64| x.powi(6), 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((est.value - 128.0 / 7.0).abs() < 1e-12);
        let est = integrate_line(|x| (-x * x).exp(), &[0.0], 1.0, Tolerance::default()).unwrap();
        assert!((est.value - PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn lorentzian_line_integral() {
        let est = integrate_line(|x| 1.0 / (1.0 + (x - 3.0).powi(2)), &[3.0], 1.0, Tolerance::default()).unwrap();
        assert!((est.value - PI).abs() < 1e-9, "{}", est.value);
    }

    #[test]
    fn panels_for_oscillatory_tail() {
        // ∫_0^∞ cos(x)/(1+x^2) dx = π/(2e)
        let est = integrate_panels(
            |x: f64| x.cos() / (1.0 + x * x),
            0.0,
            PI,
            10.0,
            Tolerance::new(0.0, 1e-12),
            1e-9,
            1 << 22,
        )
        .unwrap();
        assert!((est.value - PI / (2.0 * 1f64.exp())).abs() < 1e-6, "{}", est.value);
    }

    #[test]
    fn legendre_rule_exactness() {
        for n in [1, 2, 5, 16, 33] {
            let (x, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-13);
            let deg = 2 * n - 1;
            let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((approx - exact).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn complex_integrand() {
        let est = integrate(|x: f64| Complex64::new(0.0, x).exp(), 0.0, PI, Tolerance::default()).unwrap();
        assert!((est.value - Complex64::new(0.0, 2.0)).norm() < 1e-12);
    }
}
