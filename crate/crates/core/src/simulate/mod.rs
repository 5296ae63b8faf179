//! Forward model: decay and phase of repeated sequences under a chosen noise
//! model, exact or by Monte Carlo.

pub mod montecarlo;
pub mod observables;
pub mod predict;
pub mod upsilon;

pub use montecarlo::{monte_carlo_free_evolution, monte_carlo_observables, MonteCarloOptions};
pub use observables::{
    classical_observables, cumulant_ratio, gaussian_observables, perturb_observables, read_observables_csv,
    spinboson_chi, spinboson_exact, square_noise_grid, upsilon_quadrature, write_observables_csv, Method,
    ObservableRecord, StdErr,
};
pub use predict::{predict_free_evolution, FreeEvolutionPrediction};
pub use upsilon::{comb_upsilon2, upsilon2_psd, BispectrumGrid, SquareNoiseTimeDomain};
