//! First- and second-order statistics of the correlated
//! phase-and-additive-noise decomposition, in closed form from the
//! interference coefficient tensor.
//!
//! The perturbative receive model for the observed subcarrier splits the
//! nonlinear interference of interferer `c` at symbol `m` into a real
//! multiplicative phase and a residual additive term,
//!
//! ```text
//! θ_{c,m} = Σ_{k,k'} C_{0,k,k'}^{(c)} b_{c,k+m} b*_{c,k'+m}
//! v_{c,m} = j Σ_{n≠0} Σ_{k,k'} C_{n,k,k'}^{(c)} x_{n+m} b_{c,k+m} b*_{c,k'+m}
//! ```
//!
//! with `x` the observed channel's symbols and `b_c` the interferer's.  For
//! independent circularly symmetric inputs every first/second moment of
//! (θ, v) reduces to sums of coefficient products weighted by the symbol
//! energies `E_c = ⟨|b|²⟩` and fourth moments `Q_c = ⟨|b|⁴⟩`; this module
//! evaluates those sums.  [`sample_sequences`] generates (θ, v) directly
//! from the defining triple sums over random symbols, serving as the
//! Monte-Carlo reference for every closed form here.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::modem::WdmPlan;
use crate::nli::{ChannelTensor, InterfererId, NliTensor};
use crate::params::PhysicalParams;
use crate::rng::SeededRng;

/// Behavior of a covariance sequence under lag negation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LagSymmetry {
    /// Real and even: r[−ℓ] = r[ℓ] (phase noise).
    Even,
    /// Hermitian: r[−ℓ] = r[ℓ]* (additive noise).
    Hermitian,
}

/// Lag-indexed second-order statistic r[ℓ], stored for ℓ ≥ 0 and extended
/// to negative lags by its symmetry; zero beyond `lag_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSeq {
    symmetry: LagSymmetry,
    values: Vec<Complex64>,
}

impl CovarianceSeq {
    /// Build from values at lags 0..=lag_max.
    pub fn from_nonnegative_lags(symmetry: LagSymmetry, values: Vec<Complex64>) -> Self {
        assert!(!values.is_empty(), "need at least the zero lag");
        CovarianceSeq { symmetry, values }
    }

    pub fn symmetry(&self) -> LagSymmetry {
        self.symmetry
    }

    pub fn lag_max(&self) -> i32 {
        (self.values.len() - 1) as i32
    }

    /// r[ℓ] for any lag; symmetry-extended, zero outside the stored range.
    pub fn get(&self, lag: i32) -> Complex64 {
        let idx = lag.unsigned_abs() as usize;
        match self.values.get(idx) {
            None => Complex64::new(0.0, 0.0),
            Some(&v) if lag >= 0 => v,
            Some(&v) => match self.symmetry {
                LagSymmetry::Even => v,
                LagSymmetry::Hermitian => v.conj(),
            },
        }
    }

    /// Real part of r[ℓ] (exact for phase sequences).
    pub fn real(&self, lag: i32) -> f64 {
        self.get(lag).re
    }

    /// r[0].
    pub fn variance(&self) -> f64 {
        self.values[0].re
    }

    /// Stored non-negative-lag values.
    pub fn nonnegative(&self) -> &[Complex64] {
        &self.values
    }

    /// Write rows `lag,re,im` for ℓ ∈ [−lag_max, lag_max].
    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "lag,re,im")?;
        for lag in -self.lag_max()..=self.lag_max() {
            let v = self.get(lag);
            writeln!(w, "{lag},{},{}", v.re, v.im)?;
        }
        Ok(())
    }

    /// Read a file written by [`save_csv`], classifying the symmetry from
    /// the data (even if real-even within 1e−9 of the peak, else Hermitian).
    pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut lines = reader.lines();
        match lines.next().transpose()? {
            Some(h) if h.trim() == "lag,re,im" => {}
            _ => return Err(Error::MalformedData("missing covariance header".into())),
        }
        let mut rows: Vec<(i32, Complex64)> = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.trim().split(',').collect();
            let bad =
                |what: &str| Error::MalformedData(format!("covariance row {}: bad {what}", i + 2));
            if f.len() != 3 {
                return Err(bad("field count"));
            }
            let lag: i32 = f[0].parse().map_err(|_| bad("lag"))?;
            let re: f64 = f[1].parse().map_err(|_| bad("re"))?;
            let im: f64 = f[2].parse().map_err(|_| bad("im"))?;
            rows.push((lag, Complex64::new(re, im)));
        }
        rows.sort_by_key(|&(lag, _)| lag);
        let lag_max = rows.last().map(|&(l, _)| l).unwrap_or(0);
        if rows.len() != (2 * lag_max + 1) as usize
            || rows.first().map(|&(l, _)| l) != Some(-lag_max)
        {
            return Err(Error::MalformedData(
                "covariance lags must cover a symmetric contiguous range".into(),
            ));
        }
        let peak = rows.iter().map(|(_, v)| v.norm()).fold(0.0f64, f64::max);
        let tol = 1e-9 * peak.max(f64::MIN_POSITIVE);
        let at = |lag: i32| rows[(lag + lag_max) as usize].1;
        let even = (0..=lag_max)
            .all(|l| (at(l) - at(-l)).norm() <= tol && at(l).im.abs() <= tol);
        let hermitian = (0..=lag_max).all(|l| (at(l) - at(-l).conj()).norm() <= tol);
        let symmetry = if even {
            LagSymmetry::Even
        } else if hermitian {
            LagSymmetry::Hermitian
        } else {
            return Err(Error::MalformedData(
                "covariance data is neither even nor Hermitian".into(),
            ));
        };
        Ok(CovarianceSeq {
            symmetry,
            values: (0..=lag_max).map(at).collect(),
        })
    }
}

/// Second and fourth moments of one interferer's constellation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolMoments {
    /// E = ⟨|b|²⟩, J.
    pub energy: f64,
    /// Q = ⟨|b|⁴⟩, J².
    pub fourth_moment: f64,
}

impl SymbolMoments {
    /// Circularly symmetric Gaussian: Q = 2E².
    pub fn gaussian(energy: f64) -> Self {
        SymbolMoments {
            energy,
            fourth_moment: 2.0 * energy * energy,
        }
    }

    /// Intensity variance Q − E².
    pub fn excess(&self) -> f64 {
        self.fourth_moment - self.energy * self.energy
    }
}

/// Gaussian moments of every interferer in tensor order — the hook point
/// for non-Gaussian constellations.
pub fn gaussian_moments(tensor: &NliTensor, plan: &WdmPlan) -> Vec<SymbolMoments> {
    tensor
        .channels
        .iter()
        .map(|t| SymbolMoments::gaussian(plan.subcarrier_energy(t.id.subcarrier)))
        .collect()
}

fn observed_energy(tensor: &NliTensor, plan: &WdmPlan) -> f64 {
    plan.subcarrier_energy(tensor.observed_subcarrier)
}

// ---------------------------------------------------------------------------
// Coefficient-product kernels
// ---------------------------------------------------------------------------

/// Σ_k C(n₁,k,k)·conj(C(n₂,k−ℓ,k−ℓ)).
fn diag_product(t: &ChannelTensor, n1: i32, n2: i32, lag: i32) -> Complex64 {
    let w = &t.window;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in w.k_min..=w.k_max {
        acc += t.get(n1, k, k) * t.get(n2, k - lag, k - lag).conj();
    }
    acc
}

/// Σ_{d≠0} Σ_k C(n₁,k,k−d)·conj(C(n₂,k−ℓ,k−d−ℓ)).
fn offdiag_product(t: &ChannelTensor, n1: i32, n2: i32, lag: i32) -> Complex64 {
    let w = &t.window;
    let mut acc = Complex64::new(0.0, 0.0);
    for d in -w.d_max..=w.d_max {
        if d == 0 {
            continue;
        }
        for k in w.k_min..=w.k_max {
            acc += t.get(n1, k, k - d) * t.get(n2, k - lag, k - d - lag).conj();
        }
    }
    acc
}

/// Σ_k C(n₁,k,k)·C(n₂,k−ℓ,k−ℓ) (no conjugation; pseudo-covariances).
fn diag_product_plain(t: &ChannelTensor, n1: i32, n2: i32, lag: i32) -> Complex64 {
    let w = &t.window;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in w.k_min..=w.k_max {
        acc += t.get(n1, k, k) * t.get(n2, k - lag, k - lag);
    }
    acc
}

/// Σ_{d≠0} Σ_k C(n₁,k,k−d)·C(n₂,k−d−ℓ,k−ℓ) (swapped order; pseudo).
fn offdiag_product_swapped(t: &ChannelTensor, n1: i32, n2: i32, lag: i32) -> Complex64 {
    let w = &t.window;
    let mut acc = Complex64::new(0.0, 0.0);
    for d in -w.d_max..=w.d_max {
        if d == 0 {
            continue;
        }
        for k in w.k_min..=w.k_max {
            acc += t.get(n1, k, k - d) * t.get(n2, k - d - lag, k - lag);
        }
    }
    acc
}

fn max_n(tensor: &NliTensor) -> i32 {
    tensor
        .channels
        .iter()
        .map(|t| t.window.n_max)
        .max()
        .unwrap_or(0)
}

// ---------------------------------------------------------------------------
// Means
// ---------------------------------------------------------------------------

/// Mean phase rotation per interferer and in total.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaMean {
    pub per_interferer: Vec<(InterfererId, f64)>,
    pub total: f64,
}

/// ⟨θ_c⟩ = E_c·Σ_k C_{0,k,k}^{(c)}; the total sums all interferers.
pub fn theta_mean(tensor: &NliTensor, plan: &WdmPlan) -> ThetaMean {
    theta_mean_with(tensor, &gaussian_moments(tensor, plan))
}

pub fn theta_mean_with(tensor: &NliTensor, moments: &[SymbolMoments]) -> ThetaMean {
    let per: Vec<(InterfererId, f64)> = tensor
        .channels
        .iter()
        .zip(moments)
        .map(|(t, m)| (t.id, m.energy * t.diag_sum(0).re))
        .collect();
    let total = per.iter().map(|(_, v)| v).sum();
    ThetaMean {
        per_interferer: per,
        total,
    }
}

/// Conditional-mean intersymbol taps: tap_n = j·Σ_c E_c·Σ_k C_{n,k,k}^{(c)}
/// for n ≠ 0, |n| ≤ the tensor's n window.
pub fn isi_mean_taps(tensor: &NliTensor, plan: &WdmPlan) -> Vec<(i32, Complex64)> {
    isi_mean_taps_with(tensor, &gaussian_moments(tensor, plan))
}

pub fn isi_mean_taps_with(
    tensor: &NliTensor,
    moments: &[SymbolMoments],
) -> Vec<(i32, Complex64)> {
    let nm = max_n(tensor);
    (-nm..=nm)
        .filter(|&n| n != 0)
        .map(|n| {
            let g: Complex64 = tensor
                .channels
                .iter()
                .zip(moments)
                .map(|(t, m)| m.energy * t.diag_sum(n))
                .sum();
            (n, Complex64::new(0.0, 1.0) * g)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Phase-noise covariance
// ---------------------------------------------------------------------------

/// Phase-noise covariance r_Θ[ℓ]: interferers contribute independently,
///
/// ```text
/// r_Θ^{(c)}[ℓ] = (Q_c−E_c²)·Σ_k C_{0,k,k}C_{0,k−ℓ,k−ℓ}
///             + E_c²·Σ_{k,k'≠k} C_{0,k,k'}·(C_{0,k−ℓ,k'−ℓ})*
/// ```
///
/// The result is real (the imaginary residue of the second sum cancels in
/// conjugate pairs) and even in ℓ.
pub fn theta_covariance(tensor: &NliTensor, plan: &WdmPlan, lag_max: usize) -> CovarianceSeq {
    theta_covariance_with(tensor, &gaussian_moments(tensor, plan), lag_max)
}

pub fn theta_covariance_with(
    tensor: &NliTensor,
    moments: &[SymbolMoments],
    lag_max: usize,
) -> CovarianceSeq {
    let values = (0..=lag_max as i32)
        .map(|lag| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, m) in tensor.channels.iter().zip(moments) {
                acc += m.excess() * diag_product(t, 0, 0, lag)
                    + m.energy * m.energy * offdiag_product(t, 0, 0, lag);
            }
            Complex64::new(acc.re, 0.0)
        })
        .collect();
    CovarianceSeq::from_nonnegative_lags(LagSymmetry::Even, values)
}

/// Large-dispersion closed form of r_Θ[ℓ] seen by one subcarrier: a sum of
/// tents, one per interfering channel, with the channel offset measured
/// from the subcarrier center,
///
/// ```text
/// r_Θ[ℓ] ≈ (4γ²L/T)·Σ_{c≠0} (Q_c−E_c²)/|β₂(Ω_c−Ω_s)| · [1 − |ℓ|T/(|β₂(Ω_c−Ω_s)|L)]⁺
/// ```
///
/// with T the subcarrier symbol period and E_c the interfering channel's
/// energy per subcarrier symbol.  Band-edge subcarriers sit closer to one
/// neighbor, which raises their predicted variance.
pub fn subcarrier_theta_covariance(
    plan: &WdmPlan,
    params: &PhysicalParams,
    subcarrier: usize,
    lag_max: usize,
) -> Result<CovarianceSeq> {
    if params.beta2 == 0.0 {
        return Err(Error::InvalidConfig(
            "the large-dispersion closed form requires nonzero dispersion".into(),
        ));
    }
    if subcarrier >= plan.subcarriers {
        return Err(Error::InvalidConfig(format!(
            "subcarrier {} out of range (S = {})",
            subcarrier, plan.subcarriers
        )));
    }
    let t_sc = plan.subcarrier_period();
    let length = params.link_length;
    let omega_s = plan.subcarrier_omega(subcarrier);
    let e_ch = plan.channel_power() * t_sc;
    let excess = e_ch * e_ch; // Gaussian: Q − E² = E²
    let prefactor = 4.0 * params.gamma * params.gamma * length / t_sc;

    let values = (0..=lag_max as i32)
        .map(|lag| {
            let mut r = 0.0;
            for c in plan.channel_indices() {
                if c == 0 {
                    continue;
                }
                let walk = (params.beta2 * (plan.channel_omega(c) - omega_s)).abs();
                let tent = 1.0 - (lag as f64) * t_sc / (walk * length);
                if tent > 0.0 {
                    r += prefactor * excess / walk * tent;
                }
            }
            Complex64::new(r, 0.0)
        })
        .collect();
    Ok(CovarianceSeq::from_nonnegative_lags(
        LagSymmetry::Even,
        values,
    ))
}

// ---------------------------------------------------------------------------
// Additive-noise covariance
// ---------------------------------------------------------------------------

/// Energy-weighted diagonal sums G_n = Σ_c E_c·Σ_k C_{n,k,k}^{(c)} — the
/// quantity behind both the ISI taps (tap_n = j·G_n) and the
/// symbol-averaged part of the additive covariance.
fn weighted_diag_sums(tensor: &NliTensor, moments: &[SymbolMoments]) -> Vec<Complex64> {
    let nm = max_n(tensor);
    (-nm..=nm)
        .map(|n| {
            tensor
                .channels
                .iter()
                .zip(moments)
                .map(|(t, m)| m.energy * t.diag_sum(n))
                .sum()
        })
        .collect()
}

/// Residual-additive-noise covariance r_N[ℓ] = ⟨v_m v*_{m+ℓ}⟩ of the total
/// v = Σ_c v_c, including the inter-channel cross terms
/// ⟨v_c v*_{c'}⟩ = E·E_c E_{c'}·Σ_{n∉{0,ℓ}} S_n^{(c)}(S_{n−ℓ}^{(c')})*
/// (S_n = Σ_k C_{n,k,k}).  The pseudo-covariance ⟨v v⟩ is identically zero
/// because ⟨x_a x_b⟩ = 0.
pub fn additive_covariance(tensor: &NliTensor, plan: &WdmPlan, lag_max: usize) -> CovarianceSeq {
    additive_covariance_with(
        tensor,
        observed_energy(tensor, plan),
        &gaussian_moments(tensor, plan),
        lag_max,
    )
}

pub fn additive_covariance_with(
    tensor: &NliTensor,
    observed_energy: f64,
    moments: &[SymbolMoments],
    lag_max: usize,
) -> CovarianceSeq {
    let nm = max_n(tensor);
    let g = weighted_diag_sums(tensor, moments);
    let g_at = |n: i32| -> Complex64 {
        if n.abs() <= nm {
            g[(n + nm) as usize]
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    let values = (0..=lag_max as i32)
        .map(|lag| {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in -nm..=nm {
                if n == 0 || n == lag {
                    continue;
                }
                acc += g_at(n) * g_at(n - lag).conj();
                for (t, m) in tensor.channels.iter().zip(moments) {
                    acc += m.excess() * diag_product(t, n, n - lag, lag)
                        + m.energy * m.energy * offdiag_product(t, n, n - lag, lag);
                }
            }
            observed_energy * acc
        })
        .collect();
    CovarianceSeq::from_nonnegative_lags(LagSymmetry::Hermitian, values)
}

/// Symbol-averaged conditional covariance of v — the part of r_N[ℓ] that
/// survives averaging ⟨v_m v*_{m+ℓ} | x⟩ over the symbols (the pairing
/// ñ = n−ℓ).  The remainder of r_N is carried by the conditional mean:
/// r_N[ℓ] = expected_conditional_covariance[ℓ] + E·Σ_{n∉{0,ℓ}} G_n G*_{n−ℓ}.
pub fn expected_conditional_covariance(
    tensor: &NliTensor,
    plan: &WdmPlan,
    lag: i32,
) -> Complex64 {
    let moments = gaussian_moments(tensor, plan);
    let e = observed_energy(tensor, plan);
    let nm = max_n(tensor);
    let mut acc = Complex64::new(0.0, 0.0);
    for n in -nm..=nm {
        if n == 0 || n == lag {
            continue;
        }
        for (t, m) in tensor.channels.iter().zip(&moments) {
            acc += m.excess() * diag_product(t, n, n - lag, lag)
                + m.energy * m.energy * offdiag_product(t, n, n - lag, lag);
        }
    }
    e * acc
}

/// Conditional (covariance, pseudo-covariance) of v at time m and lag ℓ
/// given a fixed symbol realization.  Conditioned on the symbols the
/// additive noise is not proper: the pseudo-covariance is generally
/// nonzero.  Diagnostics only — the mismatched receiver model uses the
/// unconditional covariance.
pub fn conditional_noise_covariance(
    tensor: &NliTensor,
    plan: &WdmPlan,
    symbols: &[Complex64],
    m: usize,
    lag: i32,
) -> (Complex64, Complex64) {
    let moments = gaussian_moments(tensor, plan);
    let x = |i: i64| -> Complex64 {
        if i >= 0 && (i as usize) < symbols.len() {
            symbols[i as usize]
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    let nm = max_n(tensor);
    let mut cov = Complex64::new(0.0, 0.0);
    let mut pseudo = Complex64::new(0.0, 0.0);
    for n in -nm..=nm {
        if n == 0 {
            continue;
        }
        let xn = x(n as i64 + m as i64);
        if xn == Complex64::new(0.0, 0.0) {
            continue;
        }
        for nt in -nm..=nm {
            if nt == 0 {
                continue;
            }
            let x_cov = xn * x(nt as i64 + m as i64 + lag as i64).conj();
            let x_pseudo = xn * x(nt as i64 + m as i64 + lag as i64);
            for (t, mo) in tensor.channels.iter().zip(&moments) {
                let e2 = mo.energy * mo.energy;
                if x_cov != Complex64::new(0.0, 0.0) {
                    cov += (mo.excess() * diag_product(t, n, nt, lag)
                        + e2 * offdiag_product(t, n, nt, lag))
                        * x_cov;
                }
                if x_pseudo != Complex64::new(0.0, 0.0) {
                    pseudo -= (mo.excess() * diag_product_plain(t, n, nt, lag)
                        + e2 * offdiag_product_swapped(t, n, nt, lag))
                        * x_pseudo;
                }
            }
        }
    }
    (cov, pseudo)
}

/// Crosscorrelation ⟨x_m v*_{m−δ}⟩ = −j·E·Σ_c E_c·(Σ_k C_{δ,k,k}^{(c)})*
/// for δ ≠ 0, and exactly 0 for δ = 0 (v excludes the n = 0 term).  The
/// companion moments ⟨x Θ⟩, ⟨v Θ⟩, ⟨x_m v_ℓ⟩ vanish identically for
/// circularly symmetric inputs.
pub fn intra_crosscorr(tensor: &NliTensor, plan: &WdmPlan, delta: i32) -> Complex64 {
    if delta == 0 {
        return Complex64::new(0.0, 0.0);
    }
    let moments = gaussian_moments(tensor, plan);
    let e = observed_energy(tensor, plan);
    let g: Complex64 = tensor
        .channels
        .iter()
        .zip(&moments)
        .map(|(t, m)| m.energy * t.diag_sum(delta).conj())
        .sum();
    Complex64::new(0.0, -1.0) * e * g
}

// ---------------------------------------------------------------------------
// Monte-Carlo reference sampler
// ---------------------------------------------------------------------------

/// One Monte-Carlo realization of the perturbation model: the observed
/// symbols and the (θ_m, v_m) sequences computed by the defining triple
/// sums over a random symbol draw.
///
/// θ is kept complex: the quadratic form is Hermitian only up to the
/// coefficient window truncation, so a small imaginary residue remains.
/// Correlating the complex values against the closed forms is exact in
/// expectation; physical consumers take the real part.
#[derive(Debug, Clone)]
pub struct SequenceSample {
    /// θ_m for m ∈ 0..len (imaginary part is truncation residue).
    pub theta: Vec<Complex64>,
    /// v_m for m ∈ 0..len.
    pub v: Vec<Complex64>,
    x: Vec<Complex64>,
    x_offset: i64,
}

impl SequenceSample {
    /// Observed-channel symbol x_i (defined for i within the padded draw
    /// range, zero outside).
    pub fn x(&self, i: i64) -> Complex64 {
        let j = i + self.x_offset;
        if j >= 0 && (j as usize) < self.x.len() {
            self.x[j as usize]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }
}

/// Draw fresh Gaussian symbols for the observed channel and every
/// interferer, then evaluate θ_m and v_m for m ∈ 0..m_count directly from
/// the stored coefficients.
pub fn sample_sequences(
    tensor: &NliTensor,
    plan: &WdmPlan,
    m_count: usize,
    rng: &mut SeededRng,
) -> SequenceSample {
    let e = observed_energy(tensor, plan);
    let nm = max_n(tensor) as i64;

    let mut x = vec![Complex64::new(0.0, 0.0); m_count + 2 * nm as usize];
    rng.fill_complex_gaussian(e, &mut x);
    let x_offset = nm;
    let x_at = |i: i64| x[(i + x_offset) as usize];

    // Interferer symbol streams, padded so every k' = k − d reference
    // inside the stored coefficient window resolves.
    let b: Vec<(Vec<Complex64>, i64)> = tensor
        .channels
        .iter()
        .map(|t| {
            let w = &t.window;
            let lo = (w.k_min - w.d_max) as i64;
            let hi = (w.k_max + w.d_max) as i64 + m_count as i64;
            let mut stream = vec![Complex64::new(0.0, 0.0); (hi - lo + 1) as usize];
            rng.fill_complex_gaussian(plan.subcarrier_energy(t.id.subcarrier), &mut stream);
            (stream, -lo)
        })
        .collect();

    let mut theta = vec![Complex64::new(0.0, 0.0); m_count];
    let mut v = vec![Complex64::new(0.0, 0.0); m_count];
    for m in 0..m_count {
        let mut th = Complex64::new(0.0, 0.0);
        let mut vm = Complex64::new(0.0, 0.0);
        for (t, (stream, off)) in tensor.channels.iter().zip(&b) {
            let w = t.window;
            let bb = |i: i64| stream[(i + off) as usize];
            for n in -w.n_max..=w.n_max {
                let mut inner = Complex64::new(0.0, 0.0);
                for k in w.k_min..=w.k_max {
                    let bk = bb(k as i64 + m as i64);
                    for d in -w.d_max..=w.d_max {
                        let c = t.get(n, k, k - d);
                        if c != Complex64::new(0.0, 0.0) {
                            inner += c * bk * bb((k - d) as i64 + m as i64).conj();
                        }
                    }
                }
                if n == 0 {
                    th += inner;
                } else {
                    vm += Complex64::new(0.0, 1.0) * x_at(n as i64 + m as i64) * inner;
                }
            }
        }
        theta[m] = th;
        v[m] = vm;
    }
    SequenceSample {
        theta,
        v,
        x,
        x_offset,
    }
}
