//! Mismatched-decoding rate estimation: the achievable-rate lower bound
//! `I_q(X;U) = h_q(U) − h_q(U|X)` for the reduced phase-and-additive-noise
//! receiver model.
//!
//! Received symbols are first passed through the model's symmetric 3-tap
//! whitening filter and derotated by the mean phase.  The output entropy
//! `h_q(U)` treats `U` as a zero-mean Gaussian with banded Toeplitz
//! covariance (the model's own output law under Gaussian inputs); the
//! conditional entropy `h_q(U|X)` marginalizes the hidden phase trajectory
//! with a sequential Monte-Carlo (particle) filter.  Both entropies exclude
//! the same warm-up symbols at the start of every burst.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{self, CpanModelParams, ModelKind};
use crate::params::PhysicalParams;
use crate::rng::SeededRng;

/// Number of taps of the whitening filter.
pub const FILTER_LEN: usize = 3;

/// Symbols excluded from the entropy averages at the start of each burst:
/// the filter's causal edge plus the phase model's memory.
pub fn warm_up(model: &CpanModelParams) -> usize {
    model.memory.max(FILTER_LEN - 1)
}

/// Per-burst entropy estimate in bits per symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    /// Average over all bursts, bits/symbol.
    pub bits_per_symbol: f64,
    /// Per-burst averages (equal weights; bursts must share a length).
    pub per_burst: Vec<f64>,
}

/// Particle-filter health counters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfDiagnostics {
    /// Effective particle count 1/ΣW², averaged over all steps.
    pub mean_k_eff: f64,
    /// Number of resampling events across all bursts.
    pub resample_count: usize,
}

/// One point of a rate curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub power_dbm: f64,
    /// Output entropy h_q(U), bits/symbol.
    pub h_u: f64,
    /// Conditional entropy h_q(U|X), bits/symbol.
    pub h_ux: f64,
    /// Rate lower bound I_q = h_u − h_ux, bits/symbol.
    pub i_q: f64,
    /// Spectral efficiency, bits/s/Hz.
    pub se_bits_hz: f64,
    /// Monte-Carlo standard error of i_q (bits), from per-burst pairing.
    pub stderr_bits: f64,
    pub mean_k_eff: f64,
    pub resample_count: usize,
}

/// Causal whitening and mean-phase removal:
/// `u_m = e^{−j⟨Θ⟩}·Σ_{ℓ=0}^{2} h_ℓ·y_{m−ℓ}` with `y_{<0} = 0`.  The first
/// [`warm_up`] outputs are filter/model transients; entropy estimators skip
/// them.
pub fn whiten_and_derotate(y: &[Complex64], model: &CpanModelParams) -> Vec<Complex64> {
    let h = model.whitening_filter();
    let rot = Complex64::from_polar(1.0, -model.mean_phase);
    (0..y.len())
        .map(|m| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (l, &hl) in h.iter().enumerate() {
                if m >= l {
                    acc += hl * y[m - l];
                }
            }
            rot * acc
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Output entropy: banded Toeplitz Gaussian
// ---------------------------------------------------------------------------

/// Lower Cholesky factor of the symmetric banded Toeplitz matrix with first
/// row (r0, r1, r2, 0, …), stored by diagonals.
#[derive(Debug)]
struct BandedCholesky {
    diag: Vec<f64>,
    sub1: Vec<f64>,
    sub2: Vec<f64>,
}

fn banded_cholesky(r: [f64; 3], m: usize) -> Result<BandedCholesky> {
    let mut diag = vec![0.0; m];
    let mut sub1 = vec![0.0; m];
    let mut sub2 = vec![0.0; m];
    for i in 0..m {
        let l2 = if i >= 2 { r[2] / diag[i - 2] } else { 0.0 };
        let l1 = if i >= 1 {
            (r[1] - if i >= 2 { l2 * sub1[i - 1] } else { 0.0 }) / diag[i - 1]
        } else {
            0.0
        };
        let pivot = r[0] - l1 * l1 - l2 * l2;
        if !(pivot > 0.0) {
            return Err(Error::NotPd { row: i });
        }
        sub2[i] = l2;
        sub1[i] = l1;
        diag[i] = pivot.sqrt();
    }
    Ok(BandedCholesky { diag, sub1, sub2 })
}

impl BandedCholesky {
    /// log det of the full matrix (2·Σ ln diag).
    fn log_det(&self) -> f64 {
        2.0 * self.diag.iter().map(|d| d.ln()).sum::<f64>()
    }

    /// ‖L⁻¹u‖² = uᴴR⁻¹u by forward substitution.
    fn quadratic_form(&self, u: &[Complex64]) -> f64 {
        let mut v = vec![Complex64::new(0.0, 0.0); u.len()];
        let mut quad = 0.0;
        for i in 0..u.len() {
            let mut s = u[i];
            if i >= 1 {
                s -= self.sub1[i] * v[i - 1];
            }
            if i >= 2 {
                s -= self.sub2[i] * v[i - 2];
            }
            let vi = s / self.diag[i];
            quad += vi.norm_sqr();
            v[i] = vi;
        }
        quad
    }
}

/// Model autocorrelation of the whitened output under Gaussian inputs of
/// symbol energy `E`: `r_U[ℓ] = E·Σ_k h_k h_{k+ℓ} + σ_Z²·δ[ℓ]`, support
/// |ℓ| ≤ 2.
fn output_autocorrelation(model: &CpanModelParams, energy: f64) -> [f64; 3] {
    let h = model.whitening_filter();
    [
        energy * (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]) + model.sigma_z_sq,
        energy * (h[0] * h[1] + h[1] * h[2]),
        energy * (h[0] * h[2]),
    ]
}

/// Output entropy h_q(U) in bits/symbol: the negative average log of the
/// banded-Toeplitz Gaussian density over the post-warm-up symbols of every
/// burst,
/// `−log₂ q(u) = M·log₂π + log₂ det R + uᴴR⁻¹u·log₂e`.
pub fn output_entropy(
    u_bursts: &[Vec<Complex64>],
    model: &CpanModelParams,
    energy: f64,
) -> Result<EntropyEstimate> {
    model.validate()?;
    if u_bursts.is_empty() {
        return Err(Error::InvalidConfig("need at least one burst".into()));
    }
    let w = warm_up(model);
    let r = output_autocorrelation(model, energy);
    let mut factor: Option<(usize, BandedCholesky, f64)> = None;
    let mut per_burst = Vec::with_capacity(u_bursts.len());
    for u in u_bursts {
        if u.len() <= w {
            return Err(Error::InvalidConfig(format!(
                "burst of {} symbols is all warm-up (warm-up {})",
                u.len(),
                w
            )));
        }
        let tail = &u[w..];
        let m = tail.len();
        if factor.as_ref().map(|f| f.0) != Some(m) {
            let chol = banded_cholesky(r, m)?;
            let log_det = chol.log_det();
            factor = Some((m, chol, log_det));
        }
        let (_, chol, log_det) = factor.as_ref().unwrap();
        let nats = m as f64 * std::f64::consts::PI.ln() + log_det + chol.quadratic_form(tail);
        per_burst.push(nats / std::f64::consts::LN_2 / m as f64);
    }
    Ok(EntropyEstimate {
        bits_per_symbol: per_burst.iter().sum::<f64>() / per_burst.len() as f64,
        per_burst,
    })
}

// ---------------------------------------------------------------------------
// Conditional entropy: particle filter
// ---------------------------------------------------------------------------

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Phase-trajectory particle state: H history columns, newest first, with
/// cached phasors e^{jθ}.
struct Ensemble {
    theta: Vec<Vec<f64>>,      // theta[j][k] = θ̂ of particle k at m−1−j
    phasor: Vec<Vec<Complex64>>,
    log_w: Vec<f64>,
}

impl Ensemble {
    fn new(model: &CpanModelParams, k: usize, rng: &mut SeededRng) -> Result<Self> {
        let h = warm_up(model);
        let mut theta = vec![vec![0.0; k]; h];
        match model.kind {
            ModelKind::Wpn => {} // the walk starts at zero
            ModelKind::Memoryless => {
                let std = model.theta_covariance[0].max(0.0).sqrt();
                for col in theta.iter_mut() {
                    for t in col.iter_mut() {
                        *t = std * rng.standard_normal();
                    }
                }
            }
            ModelKind::Mpn => {
                // Stationary joint Gaussian over the history window.
                let mut cov = vec![0.0; h * h];
                for i in 0..h {
                    for j in 0..h {
                        cov[i * h + j] =
                            model.theta_covariance[(i as i32 - j as i32).unsigned_abs() as usize];
                    }
                }
                let l = models::semidefinite_cholesky(&cov, h)?;
                let mut normals = vec![0.0; h];
                for particle in 0..k {
                    for n in normals.iter_mut() {
                        *n = rng.standard_normal();
                    }
                    // Row i is the phase at m−1−i (ordering within the
                    // stationary block is a convention; the Toeplitz law is
                    // reversal-invariant).
                    for i in 0..h {
                        let v: f64 = (0..=i).map(|j| l[i * h + j] * normals[j]).sum();
                        theta[i][particle] = v;
                    }
                }
            }
        }
        let phasor = theta
            .iter()
            .map(|col| col.iter().map(|&t| Complex64::from_polar(1.0, t)).collect())
            .collect();
        Ok(Ensemble {
            theta,
            phasor,
            log_w: vec![-(k as f64).ln(); k],
        })
    }

    /// Shift history back one step and install the new phases on top.
    fn push(&mut self, new_theta: &[f64], new_phasor: &[Complex64]) {
        self.theta.rotate_right(1);
        self.phasor.rotate_right(1);
        self.theta[0].copy_from_slice(new_theta);
        self.phasor[0].copy_from_slice(new_phasor);
    }

    fn resample(&mut self, rng: &mut SeededRng, weights: &[f64]) {
        let k = weights.len();
        let mut cumulative = Vec::with_capacity(k);
        let mut acc = 0.0;
        for &w in weights {
            acc += w;
            cumulative.push(acc);
        }
        let total = acc;
        let pick = |r: &mut SeededRng| -> usize {
            let target = r.uniform() * total;
            cumulative.partition_point(|&c| c < target).min(k - 1)
        };
        let indices: Vec<usize> = (0..k).map(|_| pick(rng)).collect();
        for col in 0..self.theta.len() {
            let old_t = self.theta[col].clone();
            let old_p = self.phasor[col].clone();
            for (dst, &src) in indices.iter().enumerate() {
                self.theta[col][dst] = old_t[src];
                self.phasor[col][dst] = old_p[src];
            }
        }
        let uniform = -(k as f64).ln();
        self.log_w.iter_mut().for_each(|w| *w = uniform);
    }
}

/// Conditional entropy h_q(U|X) in bits/symbol by sequential Monte Carlo.
///
/// Per symbol the filter proposes each particle's next phase from the
/// model's transition law, forms the predicted mean
/// `Σ_ℓ h_ℓ·x_{m−ℓ}·e^{jθ̂_{m−ℓ}}`, scores the observation under the white
/// complex Gaussian residual of variance σ_Z², and accumulates
/// `−log₂ D_m`, where `D_m` is the weight-averaged predictive density.
/// Weights update multiplicatively and the ensemble is resampled
/// (multinomially) whenever the effective particle count drops below
/// `resample_fraction·K`.
pub fn conditional_entropy_pf(
    u_bursts: &[Vec<Complex64>],
    x_bursts: &[Vec<Complex64>],
    model: &CpanModelParams,
    num_particles: usize,
    resample_fraction: f64,
    rng: &mut SeededRng,
) -> Result<(EntropyEstimate, PfDiagnostics)> {
    model.validate()?;
    if num_particles < 2 {
        return Err(Error::InvalidConfig("need at least 2 particles".into()));
    }
    if model.memory < FILTER_LEN - 1 {
        return Err(Error::InvalidConfig(format!(
            "phase memory {} must be at least the filter memory {}",
            model.memory,
            FILTER_LEN - 1
        )));
    }
    if u_bursts.len() != x_bursts.len() || u_bursts.is_empty() {
        return Err(Error::InvalidConfig(
            "need matching, non-empty u and x burst sets".into(),
        ));
    }
    let w = warm_up(model);
    let k = num_particles;
    let h = model.whitening_filter();
    let sigma_sq = model.sigma_z_sq;
    let log_norm = (std::f64::consts::PI * sigma_sq).ln();
    let mpn = match model.kind {
        ModelKind::Mpn => Some(model.mpn()?),
        _ => None,
    };

    let mut per_burst = Vec::with_capacity(u_bursts.len());
    let mut k_eff_sum = 0.0;
    let mut k_eff_steps = 0usize;
    let mut resample_count = 0usize;

    let mut new_theta = vec![0.0; k];
    let mut new_phasor = vec![Complex64::new(0.0, 0.0); k];
    let mut log_p = vec![0.0; k];
    let mut weights = vec![0.0; k];

    for (u, x) in u_bursts.iter().zip(x_bursts) {
        if u.len() != x.len() || u.len() <= w {
            return Err(Error::InvalidConfig(
                "u/x bursts must share a length longer than the warm-up".into(),
            ));
        }
        let mut ensemble = Ensemble::new(model, k, rng)?;
        let mut sum_log2_d = 0.0;

        for m in 0..u.len() {
            // Propose the next phase of every particle.
            match model.kind {
                ModelKind::Memoryless => {
                    let std = model.theta_covariance[0].max(0.0).sqrt();
                    for t in new_theta.iter_mut() {
                        *t = std * rng.standard_normal();
                    }
                }
                ModelKind::Wpn => {
                    for (t, prev) in new_theta.iter_mut().zip(&ensemble.theta[0]) {
                        *t = prev + model.wpn_step_std * rng.standard_normal();
                    }
                }
                ModelKind::Mpn => {
                    let p = mpn.as_ref().unwrap();
                    let mu = p.memory;
                    for (kk, t) in new_theta.iter_mut().enumerate() {
                        // coefficients are oldest-first: g[μ−1−j] pairs
                        // with the phase j steps back.
                        let mut pred = 0.0;
                        for j in 0..mu {
                            pred += p.coefficients[mu - 1 - j] * ensemble.theta[j][kk];
                        }
                        *t = pred + p.innovation_std * rng.standard_normal();
                    }
                }
            }
            for (ph, &t) in new_phasor.iter_mut().zip(new_theta.iter()) {
                *ph = Complex64::from_polar(1.0, t);
            }

            // Predicted mean and log-density per particle.
            let hx0 = h[0] * x[m];
            let hx1 = if m >= 1 { h[1] * x[m - 1] } else { Complex64::new(0.0, 0.0) };
            let hx2 = if m >= 2 { h[2] * x[m - 2] } else { Complex64::new(0.0, 0.0) };
            let um = u[m];
            for kk in 0..k {
                let mean = hx0 * new_phasor[kk]
                    + hx1 * ensemble.phasor[0][kk]
                    + hx2 * ensemble.phasor[1][kk];
                log_p[kk] = ensemble.log_w[kk] - (um - mean).norm_sqr() / sigma_sq;
            }

            let log_d = log_sum_exp(&log_p);
            if !log_d.is_finite() {
                return Err(Error::WeightUnderflow(format!(
                    "all predictive densities vanished at symbol {m}"
                )));
            }
            if m >= w {
                sum_log2_d += (log_d - log_norm) / std::f64::consts::LN_2;
            }

            // Normalized weight update; ΣW = 1 holds by construction.
            let mut w_sq_sum = 0.0;
            for kk in 0..k {
                let lw = log_p[kk] - log_d;
                ensemble.log_w[kk] = lw;
                let wv = lw.exp();
                weights[kk] = wv;
                w_sq_sum += wv * wv;
            }
            debug_assert!(
                (weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9,
                "weights must stay normalized"
            );

            ensemble.push(&new_theta, &new_phasor);

            let k_eff = 1.0 / w_sq_sum;
            k_eff_sum += k_eff;
            k_eff_steps += 1;
            if k_eff < resample_fraction * k as f64 {
                ensemble.resample(rng, &weights);
                resample_count += 1;
            }
        }
        per_burst.push(-sum_log2_d / (u.len() - w) as f64);
    }

    Ok((
        EntropyEstimate {
            bits_per_symbol: per_burst.iter().sum::<f64>() / per_burst.len() as f64,
            per_burst,
        },
        PfDiagnostics {
            mean_k_eff: k_eff_sum / k_eff_steps.max(1) as f64,
            resample_count,
        },
    ))
}

/// Assemble a rate point: `I_q = h_q(U) − h_q(U|X)`, with the Monte-Carlo
/// standard error taken from the per-burst paired differences and the
/// spectral efficiency scaled by `se_scale` (symbol rate over occupied
/// bandwidth, aggregated over subcarriers by the caller).
pub fn mutual_information(
    power_dbm: f64,
    h_u: &EntropyEstimate,
    h_ux: &EntropyEstimate,
    diagnostics: &PfDiagnostics,
    se_scale: f64,
) -> RatePoint {
    let i_q = h_u.bits_per_symbol - h_ux.bits_per_symbol;
    let n = h_u.per_burst.len().min(h_ux.per_burst.len());
    let stderr = if n >= 2 {
        let diffs: Vec<f64> = h_u.per_burst[..n]
            .iter()
            .zip(&h_ux.per_burst[..n])
            .map(|(a, b)| a - b)
            .collect();
        let mean = diffs.iter().sum::<f64>() / n as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    RatePoint {
        power_dbm,
        h_u: h_u.bits_per_symbol,
        h_ux: h_ux.bits_per_symbol,
        i_q,
        se_bits_hz: i_q * se_scale,
        stderr_bits: stderr,
        mean_k_eff: diagnostics.mean_k_eff,
        resample_count: diagnostics.resample_count,
    }
}

/// The additive-noise-only reference `log₂(1 + P/(N_ASE·ℬ))` in bits/s/Hz
/// for launch power `P` (watts) in a band of `ℬ` hertz.
pub fn awgn_reference(power_watt: f64, params: &PhysicalParams, bandwidth_hz: f64) -> f64 {
    (1.0 + power_watt / (params.ase_spectral_density() * bandwidth_hz)).log2()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn memoryless_model(sigma_z_sq: f64, theta_var: f64, h2: f64) -> CpanModelParams {
        CpanModelParams {
            kind: ModelKind::Memoryless,
            mean_phase: 0.0,
            theta_covariance: vec![theta_var, 0.0, 0.0],
            memory: 2,
            sigma_z_sq,
            whitening_tap: h2,
            wpn_step_std: 0.0,
        }
    }

    #[test]
    fn whitening_shifts_scales_and_preserves_energy() {
        let y: Vec<Complex64> = (0..64)
            .map(|i| Complex64::new(i as f64, -(i as f64) * 0.5))
            .collect();

        // h = (0, 1, 0): pure one-symbol delay.
        let model = memoryless_model(1e-4, 0.0, 0.0);
        let u = whiten_and_derotate(&y, &model);
        assert_eq!(u[0], Complex64::new(0.0, 0.0));
        for m in 1..y.len() {
            assert!((u[m] - y[m - 1]).norm() <= 1e-15 * y[m - 1].norm());
        }

        // ⟨Θ⟩ = π flips the sign.
        let mut pi_model = memoryless_model(1e-4, 0.0, 0.0);
        pi_model.mean_phase = std::f64::consts::PI;
        let v = whiten_and_derotate(&y, &pi_model);
        for m in 1..y.len() {
            assert!((v[m] + y[m - 1]).norm() <= 1e-12 * y[m - 1].norm().max(1.0));
        }

        // Unit-norm filter preserves white-input energy in expectation.
        let model = memoryless_model(1e-4, 0.0, 0.3);
        let mut rng = SeededRng::new(0xaa, 1);
        let mut w = vec![Complex64::new(0.0, 0.0); 100_000];
        rng.fill_complex_gaussian(1.0, &mut w);
        let u = whiten_and_derotate(&w, &model);
        let pu: f64 = u.iter().map(|s| s.norm_sqr()).sum();
        let pw: f64 = w.iter().map(|s| s.norm_sqr()).sum();
        assert!((pu / pw - 1.0).abs() < 0.02, "power ratio {}", pu / pw);
    }

    /// With a diagonal output covariance and symbols of exactly the model
    /// power, the entropy formula is exact: log₂(πe(E+σ²)).
    #[test]
    fn output_entropy_iid_closed_form() {
        let e = 2.5e-15;
        let sigma = 1e-16;
        let model = memoryless_model(sigma, 0.0, 0.0);
        let v = e + sigma;
        let u: Vec<Complex64> = (0..4096)
            .map(|i| Complex64::from_polar(v.sqrt(), i as f64))
            .collect();
        let est = output_entropy(&[u], &model, e).unwrap();
        let expect = (std::f64::consts::PI * std::f64::consts::E * v).log2();
        assert!(
            (est.bits_per_symbol - expect).abs() < 1e-10,
            "h_q(U) {} vs {}",
            est.bits_per_symbol,
            expect
        );

        // E = 0: pure noise entropy.
        let u: Vec<Complex64> = (0..4096)
            .map(|i| Complex64::from_polar(sigma.sqrt(), -(i as f64)))
            .collect();
        let est = output_entropy(&[u], &model, 0.0).unwrap();
        let expect = (std::f64::consts::PI * std::f64::consts::E * sigma).log2();
        assert!((est.bits_per_symbol - expect).abs() < 1e-10);
    }

    /// The banded Cholesky path agrees with a dense solve to 1e−9 bits.
    #[test]
    fn banded_matches_dense_toeplitz() {
        let e = 1.0;
        let model = memoryless_model(0.05, 0.0, 0.2);
        let r = output_autocorrelation(&model, e);
        let m = 64usize;

        let mut rng = SeededRng::new(0xd15c, 9);
        let mut u = vec![Complex64::new(0.0, 0.0); m + warm_up(&model)];
        rng.fill_complex_gaussian(e, &mut u);
        let est = output_entropy(&[u.clone()], &model, e).unwrap();

        // Dense reference: full Cholesky of the M×M Toeplitz matrix.
        let tail = &u[warm_up(&model)..];
        let mut a = vec![0.0f64; m * m];
        for i in 0..m {
            for j in 0..m {
                let d = (i as i32 - j as i32).unsigned_abs() as usize;
                a[i * m + j] = if d < 3 { r[d] } else { 0.0 };
            }
        }
        let mut l = vec![0.0f64; m * m];
        for i in 0..m {
            for j in 0..=i {
                let mut s = a[i * m + j];
                for t in 0..j {
                    s -= l[i * m + t] * l[j * m + t];
                }
                if i == j {
                    l[i * m + i] = s.sqrt();
                } else {
                    l[i * m + j] = s / l[j * m + j];
                }
            }
        }
        let log_det: f64 = 2.0 * (0..m).map(|i| l[i * m + i].ln()).sum::<f64>();
        let mut v = vec![Complex64::new(0.0, 0.0); m];
        for i in 0..m {
            let mut s = tail[i];
            for t in 0..i {
                s -= l[i * m + t] * v[t];
            }
            v[i] = s / l[i * m + i];
        }
        let quad: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let dense =
            (m as f64 * std::f64::consts::PI.ln() + log_det + quad) / std::f64::consts::LN_2
                / m as f64;
        assert!(
            (est.bits_per_symbol - dense).abs() < 1e-9,
            "banded {} vs dense {}",
            est.bits_per_symbol,
            dense
        );
    }

    /// An autocorrelation with a negative spectrum is rejected by the
    /// banded factorization.
    #[test]
    fn non_positive_definite_is_reported() {
        let err = banded_cholesky([1.0, 0.8, 0.8], 64).unwrap_err();
        assert!(matches!(err, Error::NotPd { .. }));
        assert!(banded_cholesky([1.0, 0.3, 0.1], 256).is_ok());
    }

    /// AWGN end-to-end: with zero phase variance every particle coincides,
    /// h_q(U|X) hits log₂(πeσ²), and I_q matches log₂(1+SNR) at 10 and
    /// 25 dB within 0.02 bits.
    #[test]
    fn awgn_rate_matches_shannon() {
        let mut rng = SeededRng::new(0x5417, 2);
        for snr_db in [10.0, 25.0] {
            let e = 1.0;
            let sigma = e / 10f64.powf(snr_db / 10.0);
            let model = memoryless_model(sigma, 0.0, 0.0);
            let m = 100_000;
            let mut x = vec![Complex64::new(0.0, 0.0); m];
            rng.fill_complex_gaussian(e, &mut x);
            let mut z = vec![Complex64::new(0.0, 0.0); m];
            rng.fill_complex_gaussian(sigma, &mut z);
            let y: Vec<Complex64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();

            let u = whiten_and_derotate(&y, &model);
            let hu = output_entropy(&[u.clone()], &model, e).unwrap();
            let (hux, _) =
                conditional_entropy_pf(&[u], &[x], &model, 16, 0.3, &mut rng).unwrap();

            let h_noise = (std::f64::consts::PI * std::f64::consts::E * sigma).log2();
            assert!(
                (hux.bits_per_symbol - h_noise).abs() < 0.01,
                "h_q(U|X) {} vs {} at {snr_db} dB",
                hux.bits_per_symbol,
                h_noise
            );
            let i_q = hu.bits_per_symbol - hux.bits_per_symbol;
            let shannon = (1.0 + e / sigma).log2();
            assert!(
                (i_q - shannon).abs() < 0.02,
                "I_q {i_q} vs log2(1+SNR) {shannon} at {snr_db} dB"
            );
        }
    }

    /// Memoryless phase marginalization: the particle filter reproduces a
    /// dense numerical integration over the phase prior within 0.01 bits.
    #[test]
    fn memoryless_pf_matches_phase_grid() {
        let e = 1.0;
        let sigma = 0.1;
        let theta_var = 0.04f64;
        let model = memoryless_model(sigma, theta_var, 0.0);
        let m = 20_000;
        let mut rng = SeededRng::new(0x9e37, 4);
        let mut x = vec![Complex64::new(0.0, 0.0); m];
        rng.fill_complex_gaussian(e, &mut x);
        let mut z = vec![Complex64::new(0.0, 0.0); m];
        rng.fill_complex_gaussian(sigma, &mut z);
        let y: Vec<Complex64> = x
            .iter()
            .zip(&z)
            .map(|(a, b)| {
                a * Complex64::from_polar(1.0, theta_var.sqrt() * rng.standard_normal()) + b
            })
            .collect();
        let u = whiten_and_derotate(&y, &model);

        let (pf, _) = conditional_entropy_pf(
            &[u.clone()],
            &[x.clone()],
            &model,
            512,
            0.3,
            &mut rng,
        )
        .unwrap();

        // Direct quadrature of ∫ N(θ;0,v)·p_Z(u − x·e^{jθ}) dθ on a dense
        // grid, same warm-up exclusion.
        let w = warm_up(&model);
        let std = theta_var.sqrt();
        let grid: Vec<f64> = (0..1000)
            .map(|i| -6.0 * std + 12.0 * std * (i as f64 + 0.5) / 1000.0)
            .collect();
        let dtheta = 12.0 * std / 1000.0;
        let mut sum = 0.0;
        for mm in w..m {
            // u_m = x_{m−1}·e^{jθ} + z (the h=(0,1,0) filter delays by one).
            let xm = x[mm - 1];
            let mut d = 0.0;
            for &th in &grid {
                let prior = (-th * th / (2.0 * theta_var)).exp()
                    / (2.0 * std::f64::consts::PI * theta_var).sqrt();
                let mean = xm * Complex64::from_polar(1.0, th);
                let pz = (-(u[mm] - mean).norm_sqr() / sigma).exp()
                    / (std::f64::consts::PI * sigma);
                d += prior * pz * dtheta;
            }
            sum += -d.log2();
        }
        let grid_h = sum / (m - w) as f64;
        assert!(
            (pf.bits_per_symbol - grid_h).abs() < 0.01,
            "PF {} vs grid {}",
            pf.bits_per_symbol,
            grid_h
        );
    }

    /// Correlated phase data: resampling triggers, diagnostics are sane,
    /// runs are reproducible, and tracking the phase beats ignoring it.
    #[test]
    fn particle_filter_tracks_correlated_phase() {
        let e = 1.0;
        let sigma = 1e-3;
        let step = 0.05;
        let m = 4096;

        let mut data_rng = SeededRng::new(0xcafe_0001, 0);
        let mut x = vec![Complex64::new(0.0, 0.0); m];
        data_rng.fill_complex_gaussian(e, &mut x);
        let mut z = vec![Complex64::new(0.0, 0.0); m];
        data_rng.fill_complex_gaussian(sigma, &mut z);
        let mut phase = 0.0;
        let y: Vec<Complex64> = x
            .iter()
            .zip(&z)
            .enumerate()
            .map(|(i, (a, b))| {
                if i > 0 {
                    phase += step * data_rng.standard_normal();
                }
                a * Complex64::from_polar(1.0, phase) + b
            })
            .collect();

        let mut wpn_model = memoryless_model(sigma, 0.0, 0.0);
        wpn_model.kind = ModelKind::Wpn;
        wpn_model.wpn_step_std = step;
        let u = whiten_and_derotate(&y, &wpn_model);

        let run = |rng_seed: u64| {
            conditional_entropy_pf(
                &[u.clone()],
                &[x.clone()],
                &wpn_model,
                64,
                0.5,
                &mut SeededRng::new(rng_seed, 1),
            )
            .unwrap()
        };
        let (h_wpn, diag) = run(0xcafe_0002);
        assert!(diag.resample_count > 0, "resampling should trigger");
        assert!(
            diag.mean_k_eff > 1.0 && diag.mean_k_eff <= 64.0,
            "mean K_eff {}",
            diag.mean_k_eff
        );

        // Bit-for-bit reproducibility given the seed.
        let (h_again, diag_again) = run(0xcafe_0002);
        assert_eq!(h_wpn.bits_per_symbol.to_bits(), h_again.bits_per_symbol.to_bits());
        assert_eq!(diag.resample_count, diag_again.resample_count);

        // Ignoring the phase walk (diffuse independent prior) must do
        // worse than tracking it.
        let diffuse = memoryless_model(sigma, 1.0, 0.0);
        let (h_mless, _) = conditional_entropy_pf(
            &[u.clone()],
            &[x.clone()],
            &diffuse,
            64,
            0.5,
            &mut SeededRng::new(0xcafe_0003, 1),
        )
        .unwrap();
        assert!(
            h_wpn.bits_per_symbol + 0.5 < h_mless.bits_per_symbol,
            "tracking {} vs memoryless {}",
            h_wpn.bits_per_symbol,
            h_mless.bits_per_symbol
        );

        // Contract guards.
        let mut short_memory = wpn_model.clone();
        short_memory.memory = 1;
        short_memory.theta_covariance = vec![0.0, 0.0];
        assert!(matches!(
            conditional_entropy_pf(&[u.clone()], &[x.clone()], &short_memory, 64, 0.5,
                &mut SeededRng::new(1, 1)),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            conditional_entropy_pf(&[u.clone()], &[x.clone()], &wpn_model, 1, 0.5,
                &mut SeededRng::new(1, 1)),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            conditional_entropy_pf(&[u.clone()], &[x[..m - 1].to_vec()], &wpn_model, 8, 0.5,
                &mut SeededRng::new(1, 1)),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn awgn_reference_oracles() {
        let params = PhysicalParams::reference_link();
        let p6 = crate::units::dbm_to_watt(-6.0);
        let r6 = awgn_reference(p6, &params, 50e9);
        assert!(
            (r6 - 9.73507366456607).abs() < 1e-9,
            "awgn_reference(-6 dBm) = {r6}"
        );
        let p4 = crate::units::dbm_to_watt(-4.0);
        let r4 = awgn_reference(p4, &params, 50e9);
        assert!((r4 - 10.3988344044816).abs() < 1e-9);

        // High-SNR slope: log₂10 bits per 10 dB.
        let hi = awgn_reference(crate::units::dbm_to_watt(10.0), &params, 50e9);
        let hi10 = awgn_reference(crate::units::dbm_to_watt(20.0), &params, 50e9);
        assert!(((hi10 - hi) / 10f64.log2() - 1.0).abs() < 0.01);
    }

    #[test]
    fn mutual_information_assembles_and_pairs_bursts() {
        let hu = EntropyEstimate {
            bits_per_symbol: 10.0,
            per_burst: vec![10.1, 9.9, 10.0, 10.0],
        };
        let hux = EntropyEstimate {
            bits_per_symbol: 4.0,
            per_burst: vec![4.1, 3.9, 4.0, 4.0],
        };
        let diag = PfDiagnostics {
            mean_k_eff: 300.0,
            resample_count: 7,
        };
        let pt = mutual_information(-6.0, &hu, &hux, &diag, 1.0);
        assert!((pt.i_q - 6.0).abs() < 1e-12);
        assert!((pt.se_bits_hz - pt.i_q).abs() < 1e-12);
        // Perfectly paired bursts: differences are constant → zero SE.
        assert!(pt.stderr_bits.abs() < 1e-12);
        assert_eq!(pt.resample_count, 7);
    }
}
