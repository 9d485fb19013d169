//! Numerical toolkit for nonlinear fiber-optic WDM transmission.
//!
//! The library covers the full chain from waveform simulation to achievable
//! information rates:
//!
//! * [`signal`] — sampling grids, complex baseband signals, FFT helpers, and
//!   the all-pass dispersion operator.
//! * [`ssfm`] — split-step Fourier integration of the nonlinear Schrödinger
//!   equation with distributed amplification noise, plus digital
//!   back-propagation.
//! * [`modem`] — sinc-pulse WDM modulation, subcarrier multiplexing, and
//!   matched-filter demodulation of the center channel.
//! * [`nli`] — first-order perturbative coefficients of inter-channel
//!   nonlinear interference for dispersion-uncompensated links.
//! * [`stats`] — closed-form second-order statistics (phase-noise and
//!   additive-noise covariances, ISI taps) derived from those coefficients.
//! * [`models`] — reduced generative models: Gauss–Markov and Wiener phase
//!   noise, correlated additive noise, and a synthetic end-to-end channel.
//! * [`rate`] — mismatched-decoding rate estimation: Toeplitz-Gaussian output
//!   entropy and particle-filter conditional entropy.
//! * [`fit`] — parameter estimation from training data (noise variance, mean
//!   phase rotation, phase-covariance scaling, whitening tap).
//!
//! All internal quantities are in base SI units (seconds, meters, watts,
//! joules); [`units`] provides the conversions used at configuration
//! boundaries.

pub mod error;
pub mod fit;
pub mod hash;
pub mod models;
pub mod modem;
pub mod nli;
pub mod params;
pub mod rate;
pub mod rng;
pub mod signal;
pub mod ssfm;
pub mod stats;
pub mod units;

pub use error::{Error, Result};
pub use params::{Amplification, PhysicalParams};
pub use rng::SeededRng;
pub use signal::{ComplexSignal, SamplingGrid};
