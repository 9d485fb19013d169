//! Reduced generative noise models: Gauss–Markov (autoregressive) phase
//! noise, Wiener phase noise, correlated circularly symmetric additive
//! noise, and the synthetic phase-plus-additive channel built from them.
//!
//! The synthetic channel is `y_m = x_m·e^{jθ_m} + z_m`, where the phase
//! `θ_m = ⟨Θ⟩ + θ̃_m` carries a deterministic mean plus a zero-mean
//! fluctuation generated by one of the reduced models, and `z` is Gaussian
//! noise with a prescribed autocorrelation.  All phase arithmetic is
//! Euclidean — phases are never wrapped modulo 2π.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::signal::{fft_in_place, ifft_in_place};
use crate::stats::CovarianceSeq;

/// Autoregressive (Gauss–Markov) phase-noise parameters of memory μ.
///
/// The fluctuation evolves as
/// `θ̃_m = Σ_{i=1}^{μ} g_i·θ̃_{m−μ+i−1} + σ_μ·δ_m` with `δ` i.i.d. standard
/// real Gaussian — `g` is ordered oldest-first, so `g[μ−1]` multiplies the
/// most recent phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpnParams {
    /// Memory μ ≥ 1.
    pub memory: usize,
    /// Prediction coefficients g, length μ, oldest-first.
    pub coefficients: Vec<f64>,
    /// Innovation standard deviation σ_μ, radians.
    pub innovation_std: f64,
    /// Deterministic mean rotation ⟨Θ⟩, radians (not generated; callers add
    /// it where a total phase is needed).
    pub mean: f64,
    /// Source covariance r[0..=μ] the fit was computed from.
    pub covariance: Vec<f64>,
}

/// Wiener (random-walk) phase-noise parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WpnParams {
    /// Per-step increment standard deviation σ_Δ, radians.
    pub step_std: f64,
}

/// Which reduced phase model the decoder assumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Independent phase per symbol (no memory).
    Memoryless,
    /// Wiener random walk.
    Wpn,
    /// Autoregressive Gauss–Markov phase.
    Mpn,
}

/// Fitted receiver-model parameters: everything the mismatched decoder
/// needs, persisted as a JSON sidecar next to experiment results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpanModelParams {
    pub kind: ModelKind,
    /// Mean phase rotation ⟨Θ⟩, radians.
    pub mean_phase: f64,
    /// Phase-fluctuation covariance r_Θ[0..=μ], rad².
    pub theta_covariance: Vec<f64>,
    /// Phase memory μ.
    pub memory: usize,
    /// Residual additive-noise variance σ_Z², W·s.
    pub sigma_z_sq: f64,
    /// Outer coefficient h₂ of the symmetric 3-tap whitening filter.
    pub whitening_tap: f64,
    /// Wiener step σ_Δ (used only when `kind` is [`ModelKind::Wpn`]).
    pub wpn_step_std: f64,
}

impl CpanModelParams {
    /// The unit-norm symmetric whitening filter (h₂, √(1−2h₂²), h₂),
    /// applied causally.
    pub fn whitening_filter(&self) -> [f64; 3] {
        let h2 = self.whitening_tap;
        [h2, (1.0 - 2.0 * h2 * h2).max(0.0).sqrt(), h2]
    }

    pub fn validate(&self) -> Result<()> {
        if self.whitening_tap.abs() > std::f64::consts::FRAC_1_SQRT_2 {
            return Err(Error::InvalidConfig(format!(
                "whitening tap |h2| = {} exceeds 1/sqrt(2)",
                self.whitening_tap.abs()
            )));
        }
        if !(self.sigma_z_sq > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "additive variance must be positive, got {}",
                self.sigma_z_sq
            )));
        }
        if self.memory == 0 || self.theta_covariance.len() != self.memory + 1 {
            return Err(Error::InvalidConfig(format!(
                "phase covariance must hold lags 0..=memory ({} values for memory {})",
                self.theta_covariance.len(),
                self.memory
            )));
        }
        Ok(())
    }

    /// Phase covariance as a sequence (real, even).
    pub fn theta_covariance_seq(&self) -> CovarianceSeq {
        CovarianceSeq::from_nonnegative_lags(
            crate::stats::LagSymmetry::Even,
            self.theta_covariance
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect(),
        )
    }

    /// Autoregressive parameters implied by the stored phase covariance.
    pub fn mpn(&self) -> Result<MpnParams> {
        let mut p = fit_mpn(&self.theta_covariance_seq(), self.memory)?;
        p.mean = self.mean_phase;
        Ok(p)
    }

    pub fn save_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let model: CpanModelParams = serde_json::from_str(&text)?;
        model.validate()?;
        Ok(model)
    }
}

// ---------------------------------------------------------------------------
// Small dense linear algebra (μ is tiny; no external solver warranted)
// ---------------------------------------------------------------------------

/// Invert a small symmetric matrix by Gauss–Jordan elimination with partial
/// pivoting; returns the inverse and the 1-norm condition estimate.
fn invert_small(a: &[f64], n: usize) -> Option<(Vec<f64>, f64)> {
    let norm1 = |m: &[f64]| -> f64 {
        (0..n)
            .map(|j| (0..n).map(|i| m[i * n + j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let norm_a = norm1(a);
    let mut aug = vec![0.0; n * 2 * n];
    for i in 0..n {
        for j in 0..n {
            aug[i * 2 * n + j] = a[i * n + j];
        }
        aug[i * 2 * n + n + i] = 1.0;
    }
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| {
                aug[r * 2 * n + col]
                    .abs()
                    .total_cmp(&aug[s * 2 * n + col].abs())
            })
            .unwrap();
        let pivot = aug[pivot_row * 2 * n + col];
        if pivot.abs() <= 1e-300 {
            return None;
        }
        if pivot_row != col {
            for j in 0..2 * n {
                aug.swap(col * 2 * n + j, pivot_row * 2 * n + j);
            }
        }
        let inv_p = 1.0 / aug[col * 2 * n + col];
        for j in 0..2 * n {
            aug[col * 2 * n + j] *= inv_p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r * 2 * n + col];
                if f != 0.0 {
                    for j in 0..2 * n {
                        aug[r * 2 * n + j] -= f * aug[col * 2 * n + j];
                    }
                }
            }
        }
    }
    let inv: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| aug[i * 2 * n + n + j])
        .collect();
    let cond = norm_a * norm1(&inv);
    Some((inv, cond))
}

/// Cholesky factor of a small symmetric positive *semi*definite matrix;
/// zero pivots (within tolerance) produce zero columns, which is exact for
/// rank-deficient covariance matrices.
pub(crate) fn semidefinite_cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let scale = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut s = a[j * n + j];
        for k in 0..j {
            s -= l[j * n + k] * l[j * n + k];
        }
        if s <= tol {
            if s < -1e-9 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::NotPsd { min: s });
            }
            continue; // dependent direction: leave the column zero
        }
        l[j * n + j] = s.sqrt();
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = v / l[j * n + j];
        }
    }
    Ok(l)
}

// ---------------------------------------------------------------------------
// Fitting and generation
// ---------------------------------------------------------------------------

/// Fit the order-μ autoregressive phase model to a phase covariance by the
/// normal equations: `g = (r[μ],…,r[1])·C⁻¹` with `C` the μ×μ Toeplitz
/// matrix of r[0..μ−1], and `σ_μ² = r[0] − g·(r[μ],…,r[1])ᵀ`.
///
/// The fitted `mean` is zero; callers carrying a mean rotation set it
/// afterwards.
pub fn fit_mpn(r: &CovarianceSeq, memory: usize) -> Result<MpnParams> {
    if memory == 0 {
        return Err(Error::InvalidConfig("autoregressive memory must be ≥ 1".into()));
    }
    if (r.lag_max() as usize) < memory {
        return Err(Error::InvalidConfig(format!(
            "covariance holds lags 0..={}, need 0..={}",
            r.lag_max(),
            memory
        )));
    }
    let mu = memory;
    let mut c = vec![0.0; mu * mu];
    for i in 0..mu {
        for j in 0..mu {
            c[i * mu + j] = r.real((i as i32 - j as i32).abs());
        }
    }
    // Right-hand side (r[μ], …, r[1]): entry j pairs with history slot j,
    // oldest first.
    let rhs: Vec<f64> = (0..mu).map(|j| r.real((mu - j) as i32)).collect();

    let (inv, cond) = invert_small(&c, mu).ok_or(Error::SingularCovariance { cond: f64::INFINITY })?;
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::SingularCovariance { cond });
    }
    let g: Vec<f64> = (0..mu)
        .map(|i| (0..mu).map(|j| rhs[j] * inv[j * mu + i]).sum())
        .collect();
    let predicted: f64 = g.iter().zip(&rhs).map(|(gi, ci)| gi * ci).sum();
    let var = r.real(0) - predicted;
    if var < -1e-9 * r.real(0).abs() {
        return Err(Error::SingularCovariance { cond });
    }
    Ok(MpnParams {
        memory: mu,
        coefficients: g,
        innovation_std: var.max(0.0).sqrt(),
        mean: 0.0,
        covariance: (0..=mu as i32).map(|l| r.real(l)).collect(),
    })
}

/// Generate a zero-mean autoregressive phase sequence of the given length.
/// The first μ values are drawn from the exact stationary joint Gaussian
/// (Cholesky of the Toeplitz covariance), so there is no burn-in bias.
pub fn generate_mpn(p: &MpnParams, count: usize, rng: &mut SeededRng) -> Result<Vec<f64>> {
    let mu = p.memory;
    if p.coefficients.len() != mu || p.covariance.len() != mu + 1 {
        return Err(Error::InvalidConfig(
            "coefficient/covariance lengths must match the memory".into(),
        ));
    }
    let mut cov = vec![0.0; mu * mu];
    for i in 0..mu {
        for j in 0..mu {
            cov[i * mu + j] = p.covariance[(i as i32 - j as i32).unsigned_abs() as usize];
        }
    }
    let l = semidefinite_cholesky(&cov, mu)?;
    // Stationary start: history[i] = Σ_k L[i][k]·n_k, oldest first (the
    // Toeplitz covariance is symmetric under time reversal, so ordering is
    // a convention).
    let normals: Vec<f64> = (0..mu).map(|_| rng.standard_normal()).collect();
    let mut history: Vec<f64> = (0..mu)
        .map(|i| (0..=i).map(|k| l[i * mu + k] * normals[k]).sum())
        .collect();

    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut next: f64 = p
            .coefficients
            .iter()
            .zip(&history)
            .map(|(g, th)| g * th)
            .sum();
        next += p.innovation_std * rng.standard_normal();
        out.push(next);
        history.rotate_left(1);
        history[mu - 1] = next;
    }
    Ok(out)
}

/// Generate a Wiener phase walk: θ̃_0 = 0, θ̃_m = θ̃_{m−1} + σ_Δ·δ_m.
pub fn generate_wpn(p: &WpnParams, count: usize, rng: &mut SeededRng) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut phase = 0.0;
    for m in 0..count {
        if m > 0 {
            phase += p.step_std * rng.standard_normal();
        }
        out.push(phase);
    }
    out
}

/// Generate circularly symmetric Gaussian noise with the prescribed
/// autocorrelation by spectral factorization: the covariance is laid out
/// circularly on a grid long enough that wrap-around images vanish, its FFT
/// gives the (real) spectrum, and white noise shaped by √spectrum has
/// exactly the requested covariance at all retained lags.
///
/// Spectral values in [−1e−9, 1e−12]·max (truncation wiggle) are floored at
/// 1e−12·max; anything more negative is a genuine PSD violation.
pub fn generate_correlated_noise(
    r_z: &CovarianceSeq,
    count: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Complex64>> {
    let lag_max = r_z.lag_max() as usize;
    let n = (2 * lag_max + 2).max(count).max(64).next_power_of_two();

    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for lag in -(lag_max as i32)..=lag_max as i32 {
        let idx = (lag.rem_euclid(n as i32)) as usize;
        spectrum[idx] = r_z.get(lag);
    }
    fft_in_place(&mut spectrum);

    let peak = spectrum.iter().map(|s| s.re).fold(0.0f64, f64::max);
    if peak <= 0.0 {
        // Identically zero covariance → zero noise.
        return Ok(vec![Complex64::new(0.0, 0.0); count]);
    }
    let min = spectrum.iter().map(|s| s.re).fold(f64::INFINITY, f64::min);
    if min < -1e-9 * peak {
        return Err(Error::NotPsd { min });
    }
    let floor = 1e-12 * peak;

    let mut noise = vec![Complex64::new(0.0, 0.0); n];
    rng.fill_complex_gaussian(1.0, &mut noise);
    fft_in_place(&mut noise);
    for (w, s) in noise.iter_mut().zip(&spectrum) {
        *w *= s.re.max(floor).sqrt();
    }
    ifft_in_place(&mut noise);
    noise.truncate(count);
    Ok(noise)
}

/// Synthesize the reduced channel `y_m = x_m·e^{j(⟨Θ⟩+θ̃_m)} + z_m`: phase
/// fluctuations from the model's kind (autoregressive, Wiener, or
/// independent per symbol) and additive noise with autocorrelation `r_z`.
pub fn synthesize_cpan_channel(
    x: &[Complex64],
    model: &CpanModelParams,
    r_z: &CovarianceSeq,
    rng: &mut SeededRng,
) -> Result<Vec<Complex64>> {
    model.validate()?;
    let theta = generate_phase_fluctuation(model, x.len(), rng)?;
    let z = generate_correlated_noise(r_z, x.len(), rng)?;
    Ok(x.iter()
        .zip(&theta)
        .zip(&z)
        .map(|((&xm, &th), &zm)| xm * Complex64::from_polar(1.0, model.mean_phase + th) + zm)
        .collect())
}

/// Zero-mean phase fluctuation sequence for the model's kind.
pub fn generate_phase_fluctuation(
    model: &CpanModelParams,
    count: usize,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    match model.kind {
        ModelKind::Memoryless => {
            let std = model.theta_covariance[0].max(0.0).sqrt();
            Ok((0..count).map(|_| std * rng.standard_normal()).collect())
        }
        ModelKind::Wpn => Ok(generate_wpn(
            &WpnParams {
                step_std: model.wpn_step_std,
            },
            count,
            rng,
        )),
        ModelKind::Mpn => {
            let p = model.mpn()?;
            generate_mpn(&p, count, rng)
        }
    }
}
