//! Sampling grids, complex baseband signals, FFT helpers, and the
//! frequency-domain dispersion operator.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid of a cyclic burst.
///
/// The grid covers a duration `num_samples · sample_interval`; spectra are
/// indexed in FFT order with angular frequencies spaced by 2π/duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingGrid {
    sample_interval: f64,
    num_samples: usize,
}

impl SamplingGrid {
    /// A grid needs a positive sample interval and a power-of-two length
    /// (keeps every FFT on the fast path).
    pub fn new(sample_interval: f64, num_samples: usize) -> Result<Self> {
        if !(sample_interval > 0.0 && sample_interval.is_finite()) {
            return Err(Error::GridMismatch(format!(
                "sample interval must be positive, got {sample_interval}"
            )));
        }
        if num_samples == 0 || !num_samples.is_power_of_two() {
            return Err(Error::GridMismatch(format!(
                "number of samples must be a power of two, got {num_samples}"
            )));
        }
        Ok(Self { sample_interval, num_samples })
    }

    /// Smallest power-of-two grid spanning `duration` with at least
    /// `min_bandwidth` of simulated (two-sided) bandwidth.
    pub fn for_duration(duration: f64, min_bandwidth: f64) -> Result<Self> {
        if !(duration > 0.0 && min_bandwidth > 0.0) {
            return Err(Error::GridMismatch(format!(
                "duration and bandwidth must be positive, got {duration}, {min_bandwidth}"
            )));
        }
        let n = (duration * min_bandwidth).ceil() as usize;
        let n = n.max(2).next_power_of_two();
        Self::new(duration / n as f64, n)
    }

    pub fn sample_interval(&self) -> f64 {
        self.sample_interval
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    /// Total duration of the cyclic burst, s.
    pub fn duration(&self) -> f64 {
        self.sample_interval * self.num_samples as f64
    }

    /// Simulated two-sided bandwidth, Hz.
    pub fn bandwidth(&self) -> f64 {
        1.0 / self.sample_interval
    }

    /// Frequency-bin spacing, Hz.
    pub fn freq_resolution(&self) -> f64 {
        1.0 / self.duration()
    }

    /// Angular frequency of FFT bin `i` (signed, FFT order).
    pub fn angular_frequency(&self, i: usize) -> f64 {
        let n = self.num_samples;
        debug_assert!(i < n);
        let k = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
        2.0 * std::f64::consts::PI * k * self.freq_resolution()
    }

    /// All angular frequencies in FFT order.
    pub fn angular_frequencies(&self) -> Vec<f64> {
        (0..self.num_samples).map(|i| self.angular_frequency(i)).collect()
    }
}

/// Complex baseband signal sampled on a [`SamplingGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    grid: SamplingGrid,
    samples: Vec<Complex64>,
}

impl ComplexSignal {
    pub fn new(grid: SamplingGrid, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.num_samples() {
            return Err(Error::GridMismatch(format!(
                "sample buffer length {} does not match grid length {}",
                samples.len(),
                grid.num_samples()
            )));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: SamplingGrid) -> Self {
        Self { grid, samples: vec![Complex64::new(0.0, 0.0); grid.num_samples()] }
    }

    pub fn grid(&self) -> SamplingGrid {
        self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    /// Burst energy ∑|u|²·Δt, J.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() * self.grid.sample_interval()
    }

    /// Mean power over the burst, W.
    pub fn mean_power(&self) -> f64 {
        self.energy() / self.grid.duration()
    }
}

// Planning an FFT is much slower than executing one, so plans are cached per
// (length, direction) and shared between threads.
static FFT_PLANS: Lazy<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut cache = FFT_PLANS.lock().unwrap();
    cache
        .entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// In-place forward DFT, unnormalized: X[p] = Σ x[i]·exp(-j2πpi/n).
pub fn fft_in_place(samples: &mut [Complex64]) {
    plan(samples.len(), false).process(samples);
}

/// In-place inverse DFT with 1/n normalization.
pub fn ifft_in_place(samples: &mut [Complex64]) {
    plan(samples.len(), true).process(samples);
    let scale = 1.0 / samples.len() as f64;
    for s in samples {
        *s *= scale;
    }
}

/// Apply chromatic dispersion over `distance`: each spectral component gains
/// the all-pass phase exp(j·β₂Ω²·distance/2). Negative distances invert.
pub fn dispersion_operator(signal: &ComplexSignal, beta2: f64, distance: f64) -> ComplexSignal {
    let mut out = signal.clone();
    dispersion_in_place(out.samples_mut(), signal.grid(), beta2, distance);
    out
}

/// In-place variant of [`dispersion_operator`] on raw FFT-ordered samples.
pub fn dispersion_in_place(samples: &mut [Complex64], grid: SamplingGrid, beta2: f64, distance: f64) {
    fft_in_place(samples);
    for (i, s) in samples.iter_mut().enumerate() {
        let w = grid.angular_frequency(i);
        *s *= Complex64::from_polar(1.0, 0.5 * beta2 * w * w * distance);
    }
    ifft_in_place(samples);
}

/// Write a field snapshot: one JSON header line with grid metadata followed
/// by little-endian interleaved f64 re/im pairs.
pub fn write_field(path: &Path, signal: &ComplexSignal) -> Result<()> {
    #[derive(Serialize)]
    struct Header {
        format: &'static str,
        num_samples: usize,
        sample_interval: f64,
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let header = Header {
        format: "c128le",
        num_samples: signal.grid().num_samples(),
        sample_interval: signal.grid().sample_interval(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for s in signal.samples() {
        w.write_all(&s.re.to_le_bytes())?;
        w.write_all(&s.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a field snapshot written by [`write_field`].
pub fn read_field(path: &Path) -> Result<ComplexSignal> {
    #[derive(Deserialize)]
    struct Header {
        format: String,
        num_samples: usize,
        sample_interval: f64,
    }
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end())?;
    if header.format != "c128le" {
        return Err(Error::MalformedData(format!("unknown field format {:?}", header.format)));
    }
    let grid = SamplingGrid::new(header.sample_interval, header.num_samples)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 16 * header.num_samples {
        return Err(Error::MalformedData(format!(
            "expected {} payload bytes, found {}",
            16 * header.num_samples,
            bytes.len()
        )));
    }
    let samples = bytes
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            )
        })
        .collect();
    ComplexSignal::new(grid, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn grid_1thz() -> SamplingGrid {
        SamplingGrid::new(1e-12, 4096).unwrap()
    }

    fn random_signal(grid: SamplingGrid, rng: &mut SeededRng) -> ComplexSignal {
        let mut s = ComplexSignal::zeros(grid);
        rng.fill_complex_gaussian(1e-3, s.samples_mut());
        s
    }

    #[test]
    fn grid_rejects_bad_inputs() {
        assert!(SamplingGrid::new(0.0, 16).is_err());
        assert!(SamplingGrid::new(1e-12, 0).is_err());
        assert!(SamplingGrid::new(1e-12, 100).is_err());
        assert!(SamplingGrid::new(1e-12, 128).is_ok());
    }

    #[test]
    fn for_duration_rounds_up_to_power_of_two() {
        // 136.5 ns at ≥1 THz needs 136500 samples → 2^18.
        let g = SamplingGrid::for_duration(136.5e-9, 1e12).unwrap();
        assert_eq!(g.num_samples(), 1 << 18);
        assert!((g.duration() - 136.5e-9).abs() < 1e-20);
        assert!(g.bandwidth() >= 1e12);
    }

    #[test]
    fn frequency_axis_is_symmetric() {
        let g = grid_1thz();
        let n = g.num_samples();
        assert_eq!(g.angular_frequency(0), 0.0);
        for i in 1..n / 2 {
            let pos = g.angular_frequency(i);
            let neg = g.angular_frequency(n - i);
            assert!((pos + neg).abs() < 1e-3, "bin {i}: {pos} vs {neg}");
        }
        let df = g.freq_resolution();
        assert!((g.angular_frequency(1) - 2.0 * std::f64::consts::PI * df).abs() < 1e-9);
    }

    #[test]
    fn fft_round_trip_and_parseval() {
        let g = grid_1thz();
        let mut rng = SeededRng::new(1, 0);
        let sig = random_signal(g, &mut rng);
        let mut v = sig.samples().to_vec();
        fft_in_place(&mut v);
        let spec_energy: f64 =
            v.iter().map(|s| s.norm_sqr()).sum::<f64>() / g.num_samples() as f64 * g.sample_interval();
        ifft_in_place(&mut v);
        let max_err = v
            .iter()
            .zip(sig.samples())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-12);
        assert!((spec_energy - sig.energy()).abs() / sig.energy() < 1e-12);
    }

    #[test]
    fn dispersion_is_unitary_and_composes() {
        let g = grid_1thz();
        let mut rng = SeededRng::new(2, 0);
        let sig = random_signal(g, &mut rng);
        let beta2 = -2.17e-26;

        let once = dispersion_operator(&sig, beta2, 800e3);
        assert!((once.energy() - sig.energy()).abs() / sig.energy() < 1e-12);

        // D_{z1+z2} = D_{z2}∘D_{z1} and D_{-z}∘D_z = identity.
        // Accumulated spectral phases reach ~1e5 rad at the band edge, so
        // split-vs-joint application agrees to f64 phase rounding (~1e-10).
        let a = dispersion_operator(&dispersion_operator(&sig, beta2, 300e3), beta2, 500e3);
        let norm = sig.samples().iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let rel = a
            .samples()
            .iter()
            .zip(once.samples())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / norm;
        assert!(rel < 1e-10, "composition error {rel:.2e}");

        let back = dispersion_operator(&once, beta2, -800e3);
        let rel = back
            .samples()
            .iter()
            .zip(sig.samples())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / norm;
        assert!(rel < 1e-10, "inversion error {rel:.2e}");
    }

    #[test]
    fn dispersion_matches_gaussian_pulse_closed_form() {
        // A Gaussian pulse stays Gaussian under dispersion:
        // u(z,t) = T0/sqrt(T0²-jβ₂z) · exp(-t²/(2(T0²-jβ₂z))).
        // 50 km broadens the 10 ps pulse to ~150 ps, comfortably inside the
        // 2 ns cyclic window (no wraparound leakage above 1e-10).
        let g = SamplingGrid::new(0.25e-12, 8192).unwrap();
        let t0 = 10e-12;
        let beta2 = -2.17e-26;
        let z = 50e3;
        let center = g.duration() / 2.0;
        let mut sig = ComplexSignal::zeros(g);
        for (i, s) in sig.samples_mut().iter_mut().enumerate() {
            let t = i as f64 * g.sample_interval() - center;
            *s = Complex64::new((-t * t / (2.0 * t0 * t0)).exp(), 0.0);
        }
        let out = dispersion_operator(&sig, beta2, z);

        let denom = Complex64::new(t0 * t0, -beta2 * z);
        let amp = Complex64::new(t0 * t0, 0.0).sqrt() / denom.sqrt();
        let mut max_err = 0.0f64;
        for (i, s) in out.samples().iter().enumerate() {
            let t = i as f64 * g.sample_interval() - center;
            let expect = amp * (-(t * t) / (2.0 * denom)).exp();
            max_err = max_err.max((s - expect).norm());
        }
        assert!(max_err < 1e-9, "max pointwise error {max_err:.2e}");
    }

    #[test]
    fn field_dump_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.bin");
        let mut rng = SeededRng::new(3, 0);
        let sig = random_signal(SamplingGrid::new(2e-12, 256).unwrap(), &mut rng);
        write_field(&path, &sig).unwrap();
        let back = read_field(&path).unwrap();
        assert_eq!(back.grid(), sig.grid());
        assert_eq!(back.samples(), sig.samples());
    }
}
