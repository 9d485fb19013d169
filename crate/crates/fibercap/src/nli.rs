//! First-order perturbation coefficients of cross-channel nonlinear
//! interference.
//!
//! For an interferer at angular offset ΔΩ from the observed (sub)channel,
//! the coefficient of symbol triple (n, k, k') is
//!
//! ```text
//! C[n,k,k'] = 2γ ∫₀ᴸ f(z) ∫ s*(z,t) s(z,t−nT) s(z,t−kT+β₂ΔΩz) s*(z,t−k'T+β₂ΔΩz) dt dz
//! ```
//!
//! with `s(z,·)` the dispersed matched pulse and `f(z)` the link power
//! profile.  The inner integral is evaluated spectrally: the pulse is a
//! brick-wall spectrum (half-weight edge bins keep it exactly even and its
//! symbol-shifted copies exactly orthonormal), sampled at 4 points per
//! symbol, which is at or above Nyquist for the quartic product — the
//! discrete sum then equals the continuous integral.  The outer integral is
//! a composite trapezoid refined by interval halving until the result is
//! stable.
//!
//! Bulk construction exploits two exact conjugation identities:
//! negative `n` follows from `C[n,k,k'] = (C[−n,k'−n,k−n])*`, and the
//! channel mirrored in frequency (ΔΩ → −ΔΩ) from
//! `C⁻[n,k,k'] = (C⁺[n,n−k',n−k])*`, so only ΔΩ > 0 interferers and n ≥ 0
//! are integrated.  Within one (z, interferer) evaluation, the sum over all
//! lags k of the four-pulse overlap is obtained at once as a cyclic
//! correlation computed by FFT.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::hash::hash_json;
use crate::modem::WdmPlan;
use crate::params::{Amplification, PhysicalParams};
use crate::signal::{fft_in_place, ifft_in_place};

/// Controls for the time grid and the refining z-quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Samples per symbol period on the time grid. 4 is exact for the
    /// quartic pulse products (Nyquist); values below 4 are rejected.
    pub samples_per_symbol: usize,
    /// Time-grid length in symbols (power of two). `None` sizes the grid
    /// automatically from walk-off, dispersive spreading and index extent.
    pub num_symbols: Option<usize>,
    /// z intervals per amplification span at the coarsest level.
    pub initial_intervals: usize,
    /// Relative change between interval halvings at which the quadrature
    /// is accepted.
    pub tol: f64,
    /// Hard cap on intervals per span; exceeding it raises
    /// `QuadratureNotConverged`.
    pub max_intervals: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            samples_per_symbol: 4,
            num_symbols: None,
            initial_intervals: 64,
            tol: 1e-4,
            max_intervals: 16384,
        }
    }
}

impl QuadratureSpec {
    fn validate(&self) -> Result<()> {
        if self.samples_per_symbol < 4 {
            return Err(Error::InvalidConfig(
                "need at least 4 samples per symbol for exact quartic products".into(),
            ));
        }
        if let Some(n) = self.num_symbols {
            if !n.is_power_of_two() {
                return Err(Error::InvalidConfig(
                    "num_symbols must be a power of two".into(),
                ));
            }
        }
        if self.initial_intervals == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(
                "initial_intervals and tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Index truncation pads for the stored tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorWindows {
    /// Largest |n| (conditional-mean / ISI tap index).
    pub n_max: i32,
    /// Largest |k − k'| (off-diagonal bandwidth).
    pub d_max: i32,
    /// Padding in k beyond the walk-off window on both sides.
    pub k_pad: i32,
}

impl Default for TensorWindows {
    fn default() -> Self {
        TensorWindows {
            n_max: 16,
            d_max: 16,
            k_pad: 32,
        }
    }
}

/// Index support of one interferer's coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportWindow {
    pub k_min: i32,
    pub k_max: i32,
    pub n_max: i32,
    pub d_max: i32,
}

impl SupportWindow {
    pub fn contains(&self, n: i32, k: i32, k_prime: i32) -> bool {
        n.abs() <= self.n_max
            && k >= self.k_min
            && k <= self.k_max
            && (k - k_prime).abs() <= self.d_max
    }

    pub fn num_k(&self) -> usize {
        (self.k_max - self.k_min + 1) as usize
    }
}

/// Identity of an interfering (sub)channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InterfererId {
    pub channel: i32,
    pub subcarrier: usize,
}

/// Interferer with its angular offset from the observed subcarrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interferer {
    pub id: InterfererId,
    pub delta_omega: f64,
}

/// All (channel, subcarrier) pairs other than the observed one, with their
/// angular offsets, in deterministic (channel, subcarrier) order.
pub fn interferers(plan: &WdmPlan, observed_subcarrier: usize) -> Vec<Interferer> {
    let obs = plan.subcarrier_omega(observed_subcarrier);
    let mut out = Vec::new();
    for c in plan.channel_indices() {
        for s in 0..plan.subcarriers {
            if c == 0 && s == observed_subcarrier {
                continue;
            }
            out.push(Interferer {
                id: InterfererId {
                    channel: c,
                    subcarrier: s,
                },
                delta_omega: plan.channel_omega(c) + plan.subcarrier_omega(s) - obs,
            });
        }
    }
    out
}

/// Walk-off extent in symbols (float): signed β₂·ΔΩ·L/T.
fn signed_walkoff_symbols(params: &PhysicalParams, period: f64, delta_omega: f64) -> f64 {
    params.beta2 * delta_omega * params.link_length / period
}

fn support_window_for(
    params: &PhysicalParams,
    period: f64,
    delta_omega: f64,
    windows: &TensorWindows,
) -> SupportWindow {
    let w = signed_walkoff_symbols(params, period, delta_omega);
    let mu = w.abs().ceil() as i32;
    // Interferer pulse k sits at t = kT − β₂ΔΩz, so it crosses the observed
    // pulse for k between 0 and β₂ΔΩL/T: past symbols when β₂ΔΩ < 0.
    let (k_min, k_max) = if w < 0.0 {
        (-mu - windows.k_pad, windows.k_pad)
    } else if w > 0.0 {
        (-windows.k_pad, mu + windows.k_pad)
    } else {
        (-windows.k_pad, windows.k_pad)
    };
    SupportWindow {
        k_min,
        k_max,
        n_max: windows.n_max,
        d_max: windows.d_max,
    }
}

/// Truncation ranges for channel `c` of a single-carrier plan: k spans the
/// sign-adjusted walk-off window plus padding, |n| ≤ n_max, |k−k'| ≤ d_max.
pub fn support_window(
    channel: i32,
    plan: &WdmPlan,
    params: &PhysicalParams,
    windows: &TensorWindows,
) -> SupportWindow {
    support_window_for(
        params,
        plan.subcarrier_period(),
        plan.channel_omega(channel),
        windows,
    )
}

/// Large-dispersion closed form for the diagonal coefficient C[0,k,k] of
/// channel `c`: the constant 2γ/|β₂Ω_c| on the walk-off window, 0 outside.
pub fn approx_coeff_large_dispersion(
    channel: i32,
    k: i32,
    plan: &WdmPlan,
    params: &PhysicalParams,
) -> f64 {
    let delta_omega = plan.channel_omega(channel);
    let w = signed_walkoff_symbols(params, plan.subcarrier_period(), delta_omega);
    if w == 0.0 {
        return 0.0;
    }
    let kappa = k as f64 * w.signum();
    if kappa >= 0.0 && kappa <= w.abs() {
        2.0 * params.gamma / (params.beta2 * delta_omega).abs()
    } else {
        0.0
    }
}

/// Coefficients of one interferer, stored dense over
/// n ∈ [−n_max, n_max] × k ∈ [k_min, k_max] × d = k−k' ∈ [−d_max, d_max].
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    pub id: InterfererId,
    pub delta_omega: f64,
    pub window: SupportWindow,
    data: Vec<Complex64>,
}

impl ChannelTensor {
    fn zeros(id: InterfererId, delta_omega: f64, window: SupportWindow) -> Self {
        let len = (2 * window.n_max as usize + 1)
            * window.num_k()
            * (2 * window.d_max as usize + 1);
        ChannelTensor {
            id,
            delta_omega,
            window,
            data: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    fn index(&self, n: i32, k: i32, d: i32) -> Option<usize> {
        let w = &self.window;
        if n.abs() > w.n_max || k < w.k_min || k > w.k_max || d.abs() > w.d_max {
            return None;
        }
        let nd = 2 * w.d_max as usize + 1;
        let nk = w.num_k();
        Some(
            (((n + w.n_max) as usize * nk) + (k - w.k_min) as usize) * nd
                + (d + w.d_max) as usize,
        )
    }

    /// C[n,k,k']; zero outside the stored window.
    pub fn get(&self, n: i32, k: i32, k_prime: i32) -> Complex64 {
        match self.index(n, k, k - k_prime) {
            Some(i) => self.data[i],
            None => Complex64::new(0.0, 0.0),
        }
    }

    fn set(&mut self, n: i32, k: i32, d: i32, value: Complex64) {
        if let Some(i) = self.index(n, k, d) {
            self.data[i] = value;
        }
    }

    /// Diagonal sum S[n] = Σ_k C[n,k,k].
    pub fn diag_sum(&self, n: i32) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in self.window.k_min..=self.window.k_max {
            acc += self.get(n, k, k);
        }
        acc
    }

    /// Iterate stored (n, k, k', value) entries.
    pub fn entries(&self) -> impl Iterator<Item = (i32, i32, i32, Complex64)> + '_ {
        let w = self.window;
        (-w.n_max..=w.n_max).flat_map(move |n| {
            (w.k_min..=w.k_max).flat_map(move |k| {
                (-w.d_max..=w.d_max).map(move |d| (n, k, k - d, self.get(n, k, k - d)))
            })
        })
    }

    /// Squared Frobenius mass of all stored entries.
    pub fn total_mass(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Fraction of the squared Frobenius mass sitting on the index boundary
    /// (|n| = n_max, |d| = d_max, or k at the window edge): a cheap proxy
    /// for the mass the truncation discards.
    pub fn boundary_fraction(&self) -> f64 {
        let w = self.window;
        let mut edge = 0.0;
        for (n, k, k_prime, v) in self.entries() {
            let d = k - k_prime;
            if n.abs() == w.n_max || d.abs() == w.d_max || k == w.k_min || k == w.k_max {
                edge += v.norm_sqr();
            }
        }
        let total = self.total_mass();
        if total > 0.0 {
            edge / total
        } else {
            0.0
        }
    }
}

/// Full coefficient set for one observed subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct NliTensor {
    /// Effective symbol period (subcarrier period of the plan).
    pub symbol_period: f64,
    pub observed_subcarrier: usize,
    pub channels: Vec<ChannelTensor>,
}

impl NliTensor {
    /// Tensor of the interferer with the given identity, if stored.
    pub fn channel(&self, id: InterfererId) -> Option<&ChannelTensor> {
        self.channels.iter().find(|t| t.id == id)
    }

    /// Single-carrier convenience: interferer labeled by channel index.
    pub fn by_channel(&self, channel: i32) -> Option<&ChannelTensor> {
        self.channel(InterfererId {
            channel,
            subcarrier: 0,
        })
    }
}

// ---------------------------------------------------------------------------
// Pulse grid and per-z evaluation
// ---------------------------------------------------------------------------

struct BandBin {
    bin: usize,
    omega: f64,
    /// 1 in the interior, 1/√2 on the two ±Nyquist edge bins. The halved
    /// edges make the pulse exactly even in time while preserving unit
    /// energy and the orthonormality of symbol-period translates.
    weight: f64,
}

struct PulseGrid {
    n_fft: usize,
    n_sym: usize,
    q: usize,
    dt: f64,
    amp: f64,
    band: Vec<BandBin>,
}

impl PulseGrid {
    fn new(period: f64, q: usize, n_sym: usize) -> Self {
        let n_fft = q * n_sym;
        let dt = period / q as f64;
        let amp = (n_fft as f64 / (n_sym as f64 * dt)).sqrt();
        let h = (n_sym / 2) as i64;
        let mut band = Vec::with_capacity(n_sym + 1);
        for p in -h..=h {
            band.push(BandBin {
                bin: p.rem_euclid(n_fft as i64) as usize,
                omega: 2.0 * std::f64::consts::PI * p as f64 / (n_fft as f64 * dt),
                weight: if p.abs() == h {
                    std::f64::consts::FRAC_1_SQRT_2
                } else {
                    1.0
                },
            });
        }
        PulseGrid {
            n_fft,
            n_sym,
            q,
            dt,
            amp,
            band,
        }
    }

    /// Fill `p` with the dispersed pulse at distance `z` and `r` with the
    /// same pulse advanced by the walk-off β₂·ΔΩ·z (time domain).
    fn fill_pulses(
        &self,
        beta2: f64,
        delta_omega: f64,
        z: f64,
        p: &mut [Complex64],
        r: &mut [Complex64],
    ) {
        p.fill(Complex64::new(0.0, 0.0));
        r.fill(Complex64::new(0.0, 0.0));
        let tau = beta2 * delta_omega * z;
        for bb in &self.band {
            let disp = Complex64::from_polar(self.amp * bb.weight, 0.5 * beta2 * bb.omega * bb.omega * z);
            p[bb.bin] = disp;
            r[bb.bin] = disp * Complex64::from_polar(1.0, bb.omega * tau);
        }
        ifft_in_place(p);
        ifft_in_place(r);
    }
}

/// Automatic time-grid length: walk-off plus dispersive spreading plus the
/// largest index shifts, rounded up to a power of two.
fn auto_num_symbols(
    params: &PhysicalParams,
    period: f64,
    delta_omega: f64,
    extra_shift: i32,
) -> usize {
    let mu = signed_walkoff_symbols(params, period, delta_omega).abs().ceil();
    let spread = (params.beta2.abs() * 2.0 * std::f64::consts::PI * params.link_length
        / (period * period))
        .ceil();
    let need = mu + 2.0 * spread + 2.0 * extra_shift as f64 + 64.0;
    (need as usize).next_power_of_two().max(64)
}

/// Spans of continuous power profile: the whole link for ideal distributed
/// amplification, one per span for lumped.
fn quadrature_spans(params: &PhysicalParams) -> Vec<(f64, f64)> {
    match params.amplification {
        Amplification::Ideal => vec![(0.0, params.link_length)],
        Amplification::Lumped => {
            let n = (params.link_length / params.span_length).round().max(1.0) as usize;
            (0..n)
                .map(|i| {
                    (
                        i as f64 * params.span_length,
                        ((i + 1) as f64 * params.span_length).min(params.link_length),
                    )
                })
                .collect()
        }
    }
}

/// Span-local power profile (left-continuous at span ends).
fn span_profile(params: &PhysicalParams, span_start: f64, z: f64) -> f64 {
    match params.amplification {
        Amplification::Ideal => 1.0,
        Amplification::Lumped => (-params.alpha * (z - span_start)).exp(),
    }
}

/// Composite trapezoid over the spans with interval halving. `eval_add`
/// accumulates `weight · f(z) · g(z)` into the state vector; convergence is
/// the relative change of the Euclidean norm of the state between levels.
fn refine_integral(
    params: &PhysicalParams,
    spec: &QuadratureSpec,
    dim: usize,
    scale_floor: f64,
    mut eval_add: impl FnMut(&mut [Complex64], f64, f64),
) -> Result<Vec<Complex64>> {
    let spans = quadrature_spans(params);
    let mut intervals = spec.initial_intervals;
    let mut acc = vec![Complex64::new(0.0, 0.0); dim];

    for &(z0, z1) in &spans {
        let dz = (z1 - z0) / intervals as f64;
        for i in 0..=intervals {
            let z = z0 + i as f64 * dz;
            let w = if i == 0 || i == intervals { 0.5 } else { 1.0 };
            eval_add(&mut acc, z, w * dz * span_profile(params, z0, z));
        }
    }

    loop {
        if intervals * 2 > spec.max_intervals {
            return Err(Error::QuadratureNotConverged {
                change: f64::INFINITY,
                tol: spec.tol,
                intervals,
            });
        }
        let mut next: Vec<Complex64> = acc.iter().map(|v| 0.5 * v).collect();
        for &(z0, z1) in &spans {
            let dz = (z1 - z0) / (2 * intervals) as f64;
            for i in 0..intervals {
                let z = z0 + (2 * i + 1) as f64 * dz;
                eval_add(&mut next, z, dz * span_profile(params, z0, z));
            }
        }
        intervals *= 2;

        let norm: f64 = next.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let diff: f64 = next
            .iter()
            .zip(&acc)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        acc = next;
        let change = diff / norm.max(scale_floor);
        if change <= spec.tol {
            return Ok(acc);
        }
        if intervals * 2 > spec.max_intervals {
            return Err(Error::QuadratureNotConverged {
                change,
                tol: spec.tol,
                intervals,
            });
        }
    }
}

/// Magnitude scale of the raw (pre-2γ) z-integral, used as a convergence
/// floor so that entries that are essentially zero converge absolutely.
fn raw_scale(params: &PhysicalParams, period: f64, delta_omega: f64) -> f64 {
    let walk = (params.beta2 * delta_omega).abs();
    if walk > 0.0 {
        1.0 / walk
    } else {
        params.link_length / period
    }
}

// ---------------------------------------------------------------------------
// Direct single-entry evaluation
// ---------------------------------------------------------------------------

fn compute_coeff_between(
    period: f64,
    delta_omega: f64,
    n: i32,
    k: i32,
    k_prime: i32,
    params: &PhysicalParams,
    quad: &QuadratureSpec,
) -> Result<Complex64> {
    quad.validate()?;
    if params.gamma == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let extra = n.abs().max(k.abs()).max(k_prime.abs()) + 16;
    let n_sym = quad
        .num_symbols
        .unwrap_or_else(|| auto_num_symbols(params, period, delta_omega, extra));
    let grid = PulseGrid::new(period, quad.samples_per_symbol, n_sym);
    let nf = grid.n_fft as i64;
    let q = grid.q as i64;

    let mut p = vec![Complex64::new(0.0, 0.0); grid.n_fft];
    let mut r = vec![Complex64::new(0.0, 0.0); grid.n_fft];
    let sn = (n as i64 * q).rem_euclid(nf) as usize;
    let sk = (k as i64 * q).rem_euclid(nf) as usize;
    let skp = (k_prime as i64 * q).rem_euclid(nf) as usize;

    let floor = 1e-3 * raw_scale(params, period, delta_omega);
    let acc = refine_integral(params, quad, 1, floor, |acc, z, w| {
        grid.fill_pulses(params.beta2, delta_omega, z, &mut p, &mut r);
        let nfu = grid.n_fft;
        let mut sum = Complex64::new(0.0, 0.0);
        for i in 0..nfu {
            let pn = p[(i + nfu - sn) % nfu];
            let rk = r[(i + nfu - sk) % nfu];
            let rkp = r[(i + nfu - skp) % nfu];
            sum += p[i].conj() * pn * rk * rkp.conj();
        }
        acc[0] += w * grid.dt * sum;
    })?;
    Ok(2.0 * params.gamma * acc[0])
}

/// Directly evaluate one coefficient C[n,k,k'] of channel `c` against the
/// center channel of a single-carrier plan.
pub fn compute_coeff(
    channel: i32,
    n: i32,
    k: i32,
    k_prime: i32,
    plan: &WdmPlan,
    params: &PhysicalParams,
    quad: &QuadratureSpec,
) -> Result<Complex64> {
    compute_coeff_between(
        plan.subcarrier_period(),
        plan.channel_omega(channel),
        n,
        k,
        k_prime,
        params,
        quad,
    )
}

/// Directly evaluate one coefficient between arbitrary (sub)carriers via
/// their angular offset; used for subcarrier plans.
pub fn compute_coeff_offset(
    delta_omega: f64,
    n: i32,
    k: i32,
    k_prime: i32,
    plan: &WdmPlan,
    params: &PhysicalParams,
    quad: &QuadratureSpec,
) -> Result<Complex64> {
    compute_coeff_between(
        plan.subcarrier_period(),
        delta_omega,
        n,
        k,
        k_prime,
        params,
        quad,
    )
}

// ---------------------------------------------------------------------------
// Bulk tensor construction
// ---------------------------------------------------------------------------

struct BulkScratch {
    p: Vec<Complex64>,
    r: Vec<Complex64>,
    a_hat: Vec<Vec<Complex64>>,
    b_hat: Vec<Vec<Complex64>>,
    fold: Vec<Complex64>,
}

impl BulkScratch {
    fn new(n_fft: usize, n_sym: usize, windows: &TensorWindows) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        BulkScratch {
            p: vec![zero; n_fft],
            r: vec![zero; n_fft],
            a_hat: vec![vec![zero; n_fft]; windows.n_max as usize + 1],
            b_hat: vec![vec![zero; n_fft]; 2 * windows.d_max as usize + 1],
            fold: vec![zero; n_sym],
        }
    }
}

/// One z-evaluation of the correlation scheme, accumulating
/// `w · Σ_t s*(t)s(t−nT)r(t−kT)r*(t−k'T) · dt` for all (n ≥ 0, k, d) at once.
///
/// With A_n(t) = s*(t)s(t−nT) and B_d(u) = r(u)r*(u+dT), the inner integral
/// at lag k is the cyclic correlation (A_n ⋆ B_d)(kT), read off for every k
/// from one inverse FFT.  Only every q-th lag is a symbol lag, so the
/// product spectrum is folded to length n_sym before the inverse transform.
fn accumulate_bulk(
    grid: &PulseGrid,
    window: &SupportWindow,
    params: &PhysicalParams,
    delta_omega: f64,
    z: f64,
    weight: f64,
    scratch: &mut BulkScratch,
    acc: &mut [Complex64],
) {
    let nf = grid.n_fft;
    let ns = grid.n_sym;
    let q = grid.q;
    grid.fill_pulses(params.beta2, delta_omega, z, &mut scratch.p, &mut scratch.r);

    for n in 0..=window.n_max as usize {
        let shift = n * q;
        let (p, a) = (&scratch.p, &mut scratch.a_hat[n]);
        for i in 0..nf {
            a[i] = p[i].conj() * p[(i + nf - shift) % nf];
        }
        fft_in_place(a);
    }
    for (j, d) in (-window.d_max..=window.d_max).enumerate() {
        let shift = (d as i64 * q as i64).rem_euclid(nf as i64) as usize;
        let (r, b) = (&scratch.r, &mut scratch.b_hat[j]);
        for i in 0..nf {
            b[i] = r[i] * r[(i + shift) % nf].conj();
        }
        fft_in_place(b);
    }

    let nk = window.num_k();
    let nd = 2 * window.d_max as usize + 1;
    let lag_scale = weight * grid.dt / q as f64;
    for n in 0..=window.n_max as usize {
        let a = &scratch.a_hat[n];
        for j in 0..nd {
            let b = &scratch.b_hat[j];
            // F[p'] = Σ_j Ĥ[p' + j·n_sym] with Ĥ[p] = Â[p]·B̂[(N−p) mod N].
            for pp in 0..ns {
                let mut s = Complex64::new(0.0, 0.0);
                let mut p = pp;
                for _ in 0..q {
                    s += a[p] * b[(nf - p) % nf];
                    p += ns;
                }
                scratch.fold[pp] = s;
            }
            ifft_in_place(&mut scratch.fold);
            for (krow, k) in (window.k_min..=window.k_max).enumerate() {
                let lag = (k as i64).rem_euclid(ns as i64) as usize;
                acc[(n * nk + krow) * nd + j] += lag_scale * scratch.fold[lag];
            }
        }
    }
}

fn assemble_channel(
    id: InterfererId,
    delta_omega: f64,
    window: SupportWindow,
    gamma: f64,
    acc: &[Complex64],
) -> ChannelTensor {
    let mut out = ChannelTensor::zeros(id, delta_omega, window);
    let nk = window.num_k();
    let nd = 2 * window.d_max as usize + 1;
    for n in 0..=window.n_max {
        for (krow, k) in (window.k_min..=window.k_max).enumerate() {
            for (j, d) in (-window.d_max..=window.d_max).enumerate() {
                let v = 2.0 * gamma * acc[(n as usize * nk + krow) * nd + j];
                out.set(n, k, d, v);
            }
        }
    }
    // Negative n from C[n,k,k'] = (C[−n,k'−n,k−n])*, i.e.
    // C[−n,a,a−d] = (C[n, a−d+n, a+n])*.
    for n in 1..=window.n_max {
        for a in window.k_min..=window.k_max {
            for d in -window.d_max..=window.d_max {
                let src = out.get(n, a - d + n, a + n);
                out.set(-n, a, d, src.conj());
            }
        }
    }
    out
}

/// Mirror a fully assembled channel to the opposite frequency offset via
/// C⁻[n,k,k'] = (C⁺[n, n−k', n−k])*.
fn mirror_channel(source: &ChannelTensor, id: InterfererId) -> ChannelTensor {
    let w = source.window;
    let window = SupportWindow {
        k_min: -w.k_max,
        k_max: -w.k_min,
        n_max: w.n_max,
        d_max: w.d_max,
    };
    let mut out = ChannelTensor::zeros(id, -source.delta_omega, window);
    for n in -window.n_max..=window.n_max {
        for k in window.k_min..=window.k_max {
            for d in -window.d_max..=window.d_max {
                let k_prime = k - d;
                let v = source.get(n, n - k_prime, n - k);
                out.set(n, k, d, v.conj());
            }
        }
    }
    out
}

/// Build the full coefficient tensor for the observed subcarrier: one
/// `ChannelTensor` per interfering (channel, subcarrier).  Only positive
/// frequency offsets are integrated; mirror-image interferers are filled by
/// the exact conjugation identity.  Each interferer's z-quadrature refines
/// independently until the Frobenius norm of its coefficient block is
/// stable to `quad.tol`.
pub fn build_tensor(
    plan: &WdmPlan,
    params: &PhysicalParams,
    observed_subcarrier: usize,
    windows: &TensorWindows,
    quad: &QuadratureSpec,
) -> Result<NliTensor> {
    plan.validate()?;
    quad.validate()?;
    if observed_subcarrier >= plan.subcarriers {
        return Err(Error::InvalidConfig(format!(
            "observed subcarrier {} out of range (S = {})",
            observed_subcarrier, plan.subcarriers
        )));
    }
    let period = plan.subcarrier_period();
    let list = interferers(plan, observed_subcarrier);
    let mut channels: Vec<Option<ChannelTensor>> = vec![None; list.len()];

    if params.gamma == 0.0 {
        let out = list
            .iter()
            .map(|it| {
                ChannelTensor::zeros(
                    it.id,
                    it.delta_omega,
                    support_window_for(params, period, it.delta_omega, windows),
                )
            })
            .collect();
        return Ok(NliTensor {
            symbol_period: period,
            observed_subcarrier,
            channels: out,
        });
    }

    // Pair each negative-offset interferer with its positive mirror when one
    // exists; integrate positives (and unpaired negatives) directly.
    let mirror_of = |i: usize| -> Option<usize> {
        list.iter()
            .position(|o| (o.delta_omega + list[i].delta_omega).abs() <= 1e-6 * list[i].delta_omega.abs())
    };

    for (i, it) in list.iter().enumerate() {
        if channels[i].is_some() {
            continue;
        }
        let (compute_idx, dw) = if it.delta_omega > 0.0 {
            (i, it.delta_omega)
        } else if let Some(j) = mirror_of(i) {
            (j, list[j].delta_omega)
        } else {
            (i, it.delta_omega)
        };
        if channels[compute_idx].is_none() {
            let window = support_window_for(params, period, dw, windows);
            let extra = windows.k_pad + windows.n_max + windows.d_max;
            let n_sym = quad
                .num_symbols
                .unwrap_or_else(|| auto_num_symbols(params, period, dw, extra));
            let grid = PulseGrid::new(period, quad.samples_per_symbol, n_sym);
            let mut scratch = BulkScratch::new(grid.n_fft, grid.n_sym, windows);
            let dim = (window.n_max as usize + 1)
                * window.num_k()
                * (2 * window.d_max as usize + 1);
            let floor = 1e-3 * raw_scale(params, period, dw) * (dim as f64).sqrt();
            let acc = refine_integral(params, quad, dim, floor, |acc, z, w| {
                accumulate_bulk(&grid, &window, params, dw, z, w, &mut scratch, acc)
            })?;
            channels[compute_idx] = Some(assemble_channel(
                list[compute_idx].id,
                dw,
                window,
                params.gamma,
                &acc,
            ));
        }
        if compute_idx != i {
            let src = channels[compute_idx].as_ref().unwrap();
            channels[i] = Some(mirror_channel(src, it.id));
        }
    }

    Ok(NliTensor {
        symbol_period: period,
        observed_subcarrier,
        channels: channels.into_iter().map(Option::unwrap).collect(),
    })
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    format: String,
    key: String,
    symbol_period: f64,
    observed_subcarrier: usize,
    channels: Vec<ChannelMeta>,
}

#[derive(Serialize, Deserialize)]
struct ChannelMeta {
    channel: i32,
    subcarrier: usize,
    delta_omega: f64,
    window: SupportWindow,
}

/// Cache key binding a tensor file to the inputs that produced it.
pub fn tensor_cache_key(
    plan: &WdmPlan,
    params: &PhysicalParams,
    observed_subcarrier: usize,
    windows: &TensorWindows,
    quad: &QuadratureSpec,
) -> u64 {
    hash_json(&(plan, params, observed_subcarrier, windows, quad))
}

/// Write the tensor: one JSON header line, then CSV rows
/// `c,n,k,k',re,im` where `c` is the position of the interferer in the
/// header's channel list.  Entries below 1e−12 of the largest magnitude are
/// omitted (they load back as zero).
pub fn save_tensor<P: AsRef<Path>>(path: P, tensor: &NliTensor, key: u64) -> Result<()> {
    let header = TensorHeader {
        format: "nli-tensor-v1".into(),
        key: format!("{key:016x}"),
        symbol_period: tensor.symbol_period,
        observed_subcarrier: tensor.observed_subcarrier,
        channels: tensor
            .channels
            .iter()
            .map(|t| ChannelMeta {
                channel: t.id.channel,
                subcarrier: t.id.subcarrier,
                delta_omega: t.delta_omega,
                window: t.window,
            })
            .collect(),
    };
    let max_abs = tensor
        .channels
        .iter()
        .flat_map(|t| t.data.iter())
        .map(|v| v.norm())
        .fold(0.0f64, f64::max);
    let cutoff = 1e-12 * max_abs;

    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    writeln!(w, "c,n,k,k',re,im")?;
    for (slot, t) in tensor.channels.iter().enumerate() {
        for (n, k, k_prime, v) in t.entries() {
            if v.norm() > cutoff {
                writeln!(w, "{slot},{n},{k},{k_prime},{},{}", v.re, v.im)?;
            }
        }
    }
    Ok(())
}

/// Read a tensor written by [`save_tensor`], returning it with the stored
/// cache key.
pub fn load_tensor<P: AsRef<Path>>(path: P) -> Result<(NliTensor, u64)> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines();

    let header_line = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::MalformedData("empty tensor file".into()))?;
    let header: TensorHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::MalformedData(format!("bad tensor header: {e}")))?;
    if header.format != "nli-tensor-v1" {
        return Err(Error::MalformedData(format!(
            "unsupported tensor format '{}'",
            header.format
        )));
    }
    let key = u64::from_str_radix(&header.key, 16)
        .map_err(|_| Error::MalformedData("bad cache key".into()))?;

    match lines.next().transpose()? {
        Some(l) if l.trim() == "c,n,k,k',re,im" => {}
        _ => return Err(Error::MalformedData("missing tensor column header".into())),
    }

    let mut channels: Vec<ChannelTensor> = header
        .channels
        .iter()
        .map(|m| {
            ChannelTensor::zeros(
                InterfererId {
                    channel: m.channel,
                    subcarrier: m.subcarrier,
                },
                m.delta_omega,
                m.window,
            )
        })
        .collect();

    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return Err(Error::MalformedData(format!(
                "tensor row {}: expected 6 fields",
                lineno + 3
            )));
        }
        let bad = |what: &str| Error::MalformedData(format!("tensor row {}: bad {what}", lineno + 3));
        let slot: usize = f[0].parse().map_err(|_| bad("slot"))?;
        let n: i32 = f[1].parse().map_err(|_| bad("n"))?;
        let k: i32 = f[2].parse().map_err(|_| bad("k"))?;
        let k_prime: i32 = f[3].parse().map_err(|_| bad("k'"))?;
        let re: f64 = f[4].parse().map_err(|_| bad("re"))?;
        let im: f64 = f[5].parse().map_err(|_| bad("im"))?;
        let t = channels
            .get_mut(slot)
            .ok_or_else(|| bad("slot (out of range)"))?;
        if !t.window.contains(n, k, k_prime) {
            return Err(bad("indices (outside stored window)"));
        }
        t.set(n, k, k - k_prime, Complex64::new(re, im));
    }

    Ok((
        NliTensor {
            symbol_period: header.symbol_period,
            observed_subcarrier: header.observed_subcarrier,
            channels,
        },
        key,
    ))
}
