//! Minimal interfaces shared by every noise model.

/// An even power spectral density on the real line.
pub trait Psd: Send + Sync {
    fn psd(&self, omega: f64) -> f64;

    /// Non-negative frequencies where the spectrum peaks or has a kink.
    fn features(&self) -> Vec<f64>;

    /// Smallest frequency scale over which the spectrum varies.
    fn width(&self) -> f64;
}

/// A bispectrum `S_2(w1, w2)`, invariant under permutations of
/// `(w1, w2, -w1-w2)` and global negation.
pub trait Bispectrum: Send + Sync {
    fn bispectrum(&self, omega1: f64, omega2: f64) -> f64;
}
