//! WDM burst modem: sinc-pulse modulation onto a cyclic grid and
//! matched-filter demodulation of the center channel.
//!
//! A burst carries `M` symbols per subcarrier at period `T_sc = S·T`, so the
//! burst duration is `D = M·S·T` regardless of `S`.  On the cyclic grid the
//! unit-energy sinc pulse of a subcarrier is a brick-wall spectrum occupying
//! exactly `M` contiguous DFT bins, which makes modulation an `M`-point DFT
//! of the symbol sequence written into those bins, and matched filtering an
//! `M`-point inverse DFT of the same bins.  Round-tripping through a
//! noiseless, linear-free channel is therefore exact to rounding error.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::PhysicalParams;
use crate::rng::SeededRng;
use crate::signal::{fft_in_place, ifft_in_place, ComplexSignal, SamplingGrid};
use crate::ssfm::{self, SsfmConfig};

/// Layout of a WDM burst: channel comb, subcarrier split and power budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WdmPlan {
    /// Number of channels `C` (odd; indices run −(C−1)/2 ..= (C−1)/2).
    pub num_channels: usize,
    /// Channel spacing in Hz (equal to the channel bandwidth `1/T` for
    /// seamless tiling, but any spacing that lands on whole grid bins works).
    pub channel_spacing: f64,
    /// Single-carrier symbol period `T` in seconds; the channel band is `1/T`.
    pub symbol_period: f64,
    /// Subcarriers per channel `S`; each has band `1/(S·T)` and period `S·T`.
    pub subcarriers: usize,
    /// Symbols per burst and per subcarrier, `M`.
    pub symbols_per_burst: usize,
    /// Average launch power of each subcarrier in watts (length `S`); the
    /// per-channel power is the sum.  All channels share this budget.
    pub subcarrier_powers: Vec<f64>,
    /// Simulation bandwidth as a multiple of the total WDM band `C·spacing`.
    pub oversampling: f64,
}

impl WdmPlan {
    /// Plan with the per-channel power split evenly across subcarriers.
    pub fn uniform(
        num_channels: usize,
        channel_spacing: f64,
        symbol_period: f64,
        subcarriers: usize,
        symbols_per_burst: usize,
        channel_power: f64,
    ) -> Self {
        WdmPlan {
            num_channels,
            channel_spacing,
            symbol_period,
            subcarriers,
            symbols_per_burst,
            subcarrier_powers: vec![channel_power / subcarriers as f64; subcarriers],
            oversampling: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_channels == 0 || self.num_channels % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "number of channels must be odd and positive, got {}",
                self.num_channels
            )));
        }
        if self.subcarriers == 0 || self.symbols_per_burst == 0 {
            return Err(Error::InvalidConfig(
                "subcarriers and symbols per burst must be positive".into(),
            ));
        }
        if self.subcarrier_powers.len() != self.subcarriers {
            return Err(Error::InvalidConfig(format!(
                "expected {} subcarrier powers, got {}",
                self.subcarriers,
                self.subcarrier_powers.len()
            )));
        }
        if !(self.symbol_period > 0.0) || !(self.channel_spacing > 0.0) {
            return Err(Error::InvalidConfig(
                "symbol period and channel spacing must be positive".into(),
            ));
        }
        if self.subcarrier_powers.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidConfig("subcarrier powers must be >= 0".into()));
        }
        if self.oversampling < 2.0 {
            return Err(Error::InvalidConfig(
                "oversampling must be at least 2 to keep the WDM band alias-free".into(),
            ));
        }
        Ok(())
    }

    /// Largest channel index, `(C−1)/2`.
    pub fn max_channel_index(&self) -> i32 {
        (self.num_channels as i32 - 1) / 2
    }

    /// All channel indices in ascending order.
    pub fn channel_indices(&self) -> Vec<i32> {
        let h = self.max_channel_index();
        (-h..=h).collect()
    }

    /// Angular center frequency of channel `c` relative to the band center.
    pub fn channel_omega(&self, channel: i32) -> f64 {
        2.0 * std::f64::consts::PI * channel as f64 * self.channel_spacing
    }

    /// Angular offset of subcarrier `s` within a channel (0 for `S = 1`).
    pub fn subcarrier_omega(&self, subcarrier: usize) -> f64 {
        let band = 1.0 / self.subcarrier_period();
        2.0 * std::f64::consts::PI
            * band
            * (subcarrier as f64 + 0.5 - self.subcarriers as f64 / 2.0)
    }

    /// Symbol period per subcarrier, `S·T`.
    pub fn subcarrier_period(&self) -> f64 {
        self.subcarriers as f64 * self.symbol_period
    }

    /// Burst duration `D = M·S·T`.
    pub fn burst_duration(&self) -> f64 {
        self.symbols_per_burst as f64 * self.subcarrier_period()
    }

    /// Mean symbol energy of subcarrier `s`: power × subcarrier period.
    pub fn subcarrier_energy(&self, subcarrier: usize) -> f64 {
        self.subcarrier_powers[subcarrier] * self.subcarrier_period()
    }

    /// Per-channel launch power (sum over subcarriers).
    pub fn channel_power(&self) -> f64 {
        self.subcarrier_powers.iter().sum()
    }

    /// Fourth moment `⟨|x|⁴⟩ = 2E²` of the circular Gaussian constellation
    /// on subcarrier `s`.
    pub fn subcarrier_fourth_moment(&self, subcarrier: usize) -> f64 {
        let e = self.subcarrier_energy(subcarrier);
        2.0 * e * e
    }

    /// Sampling grid for one burst: duration `D`, bandwidth at least
    /// `oversampling × C × spacing`, sample count a power of two.
    pub fn grid(&self) -> Result<SamplingGrid> {
        self.validate()?;
        let band = self.oversampling * self.num_channels as f64 * self.channel_spacing;
        SamplingGrid::for_duration(self.burst_duration(), band)
    }
}

/// One burst of symbols: `frame.symbols[ci][s][m]` addresses channel index
/// `channel_indices()[ci]`, subcarrier `s`, symbol slot `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    /// Channel indices, ascending (mirrors `WdmPlan::channel_indices`).
    pub channels: Vec<i32>,
    /// `symbols[ci][s]` has length `M`.
    pub symbols: Vec<Vec<Vec<Complex64>>>,
}

impl SymbolFrame {
    /// Empty (all-zero) frame covering every channel of the plan.
    pub fn zeros(plan: &WdmPlan) -> Self {
        let channels = plan.channel_indices();
        let symbols = channels
            .iter()
            .map(|_| {
                (0..plan.subcarriers)
                    .map(|_| vec![Complex64::new(0.0, 0.0); plan.symbols_per_burst])
                    .collect()
            })
            .collect();
        SymbolFrame { channels, symbols }
    }

    /// Position of channel index `c` in the frame.
    pub fn channel_pos(&self, channel: i32) -> Option<usize> {
        self.channels.iter().position(|&x| x == channel)
    }

    /// Symbols of (channel, subcarrier); panics if absent.
    pub fn symbols(&self, channel: i32, subcarrier: usize) -> &[Complex64] {
        let ci = self
            .channel_pos(channel)
            .unwrap_or_else(|| panic!("channel {channel} not in frame"));
        &self.symbols[ci][subcarrier]
    }

    pub fn symbols_mut(&mut self, channel: i32, subcarrier: usize) -> &mut [Complex64] {
        let ci = self
            .channel_pos(channel)
            .unwrap_or_else(|| panic!("channel {channel} not in frame"));
        &mut self.symbols[ci][subcarrier]
    }
}

/// Draw one burst of i.i.d. circular complex Gaussian symbols with the
/// per-subcarrier mean energies of the plan.
pub fn generate_symbols(plan: &WdmPlan, rng: &mut SeededRng) -> SymbolFrame {
    let mut frame = SymbolFrame::zeros(plan);
    for ci in 0..frame.channels.len() {
        for s in 0..plan.subcarriers {
            let energy = plan.subcarrier_energy(s);
            rng.fill_complex_gaussian(energy, &mut frame.symbols[ci][s]);
        }
    }
    frame
}

/// Bin bookkeeping for one (channel, subcarrier) block on a given grid.
struct Block {
    /// First DFT bin of the block (may be negative before wrapping).
    start: i64,
    /// Phase-reference bin: symbol `m` rides `exp(−j2π(p−p_ref)m/M)`.
    phase_ref: i64,
}

fn block_layout(plan: &WdmPlan, channel: i32, subcarrier: usize) -> Result<Block> {
    let duration = plan.burst_duration();
    let m = plan.symbols_per_burst as i64;
    let s_total = (plan.symbols_per_burst * plan.subcarriers) as i64;

    // Channel center in bins; must land on a whole bin so that the comb is
    // expressible on the cyclic grid.
    let center_f = channel as f64 * plan.channel_spacing * duration;
    let center = center_f.round();
    if (center_f - center).abs() > 1e-6 {
        return Err(Error::GridMismatch(format!(
            "channel {channel} center falls {:.2e} bins off the grid; \
             channel_spacing × burst_duration must be an integer",
            (center_f - center).abs()
        )));
    }
    // Channel band must also be a whole number of bins (it is M·S by
    // construction since band × duration = M·S exactly).
    let start = center as i64 - s_total / 2 + subcarrier as i64 * m;
    let phase_ref = start + m / 2;
    Ok(Block { start, phase_ref })
}

/// Amplitude of each occupied bin for a unit-energy pulse spread over `M`
/// bins: the time-domain norm is `(dt/n)·M·A² = 1`.
fn bin_amplitude(plan: &WdmPlan, grid: &SamplingGrid) -> f64 {
    let n = grid.num_samples() as f64;
    let m = plan.symbols_per_burst as f64;
    (n / (m * grid.sample_interval())).sqrt()
}

fn wrap_bin(p: i64, n: usize) -> usize {
    (p.rem_euclid(n as i64)) as usize
}

/// Synthesize the burst waveform: every (channel, subcarrier) block gets the
/// `M`-point DFT of its symbols, anchored at the block's phase-reference bin.
pub fn modulate(frame: &SymbolFrame, plan: &WdmPlan, grid: SamplingGrid) -> Result<ComplexSignal> {
    plan.validate()?;
    let duration = plan.burst_duration();
    if (grid.duration() - duration).abs() > 1e-9 * duration {
        return Err(Error::GridMismatch(format!(
            "grid duration {:.6e} s does not match burst duration {:.6e} s",
            grid.duration(),
            duration
        )));
    }
    let occupied = plan.num_channels as f64 * plan.channel_spacing;
    if grid.bandwidth() < occupied {
        return Err(Error::GridTooSmall {
            needed_hz: occupied,
            available_hz: grid.bandwidth(),
        });
    }

    let n = grid.num_samples();
    let m = plan.symbols_per_burst;
    let amp = bin_amplitude(plan, &grid);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];

    let mut dft = vec![Complex64::new(0.0, 0.0); m];
    for (ci, &channel) in frame.channels.iter().enumerate() {
        for s in 0..plan.subcarriers {
            let block = block_layout(plan, channel, s)?;
            dft.copy_from_slice(&frame.symbols[ci][s]);
            fft_in_place(&mut dft);
            for q in 0..m as i64 {
                let p = block.start + q;
                let r = (p - block.phase_ref).rem_euclid(m as i64) as usize;
                spectrum[wrap_bin(p, n)] += amp * dft[r];
            }
        }
    }

    ifft_in_place(&mut spectrum);
    ComplexSignal::new(grid, spectrum)
}

/// Matched-filter outputs of the center channel without any propagation
/// compensation: brick-wall select each subcarrier block and inverse-DFT it.
/// This is exact symbol recovery when the waveform is an unpropagated burst.
pub fn sample_matched(signal: &ComplexSignal, plan: &WdmPlan) -> Result<SymbolFrame> {
    plan.validate()?;
    let grid = signal.grid();
    let n = grid.num_samples();
    let m = plan.symbols_per_burst;
    let amp = bin_amplitude(plan, &grid);
    // y_m = (dt·A/n) Σ_p U[p] e^{+j2π(p−p_ref)m/M} over the block's bins.
    let scale = grid.sample_interval() * amp * m as f64 / n as f64;

    let mut spectrum = signal.samples().to_vec();
    fft_in_place(&mut spectrum);

    let mut out = SymbolFrame {
        channels: vec![0],
        symbols: vec![Vec::with_capacity(plan.subcarriers)],
    };
    for s in 0..plan.subcarriers {
        let block = block_layout(plan, 0, s)?;
        let mut band = vec![Complex64::new(0.0, 0.0); m];
        for q in 0..m as i64 {
            let p = block.start + q;
            let r = (p - block.phase_ref).rem_euclid(m as i64) as usize;
            band[r] = spectrum[wrap_bin(p, n)];
        }
        ifft_in_place(&mut band);
        for y in band.iter_mut() {
            *y *= scale;
        }
        out.symbols[0].push(band);
    }
    Ok(out)
}

/// Receiver for the center channel: brick-wall filter the channel band,
/// jointly back-propagate it through the inverse link, then matched-filter
/// each subcarrier.  Returns a frame holding channel 0 only.
pub fn demodulate_center(
    signal: &ComplexSignal,
    plan: &WdmPlan,
    params: &PhysicalParams,
    config: &SsfmConfig,
) -> Result<SymbolFrame> {
    plan.validate()?;
    let grid = signal.grid();
    let n = grid.num_samples();
    let m = plan.symbols_per_burst as i64;

    let mut spectrum = signal.samples().to_vec();
    fft_in_place(&mut spectrum);
    let mut filtered = vec![Complex64::new(0.0, 0.0); n];
    for s in 0..plan.subcarriers {
        let block = block_layout(plan, 0, s)?;
        for q in 0..m {
            let p = wrap_bin(block.start + q, n);
            filtered[p] = spectrum[p];
        }
    }
    ifft_in_place(&mut filtered);

    let compensated = ssfm::back_propagate(&ComplexSignal::new(grid, filtered)?, params, config)?;
    sample_matched(&compensated, plan)
}

/// Write a frame as CSV with columns `channel,subcarrier,m,re,im`.
pub fn save_frame<P: AsRef<Path>>(path: P, frame: &SymbolFrame) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "channel,subcarrier,m,re,im")?;
    for (ci, &channel) in frame.channels.iter().enumerate() {
        for (s, symbols) in frame.symbols[ci].iter().enumerate() {
            for (m, x) in symbols.iter().enumerate() {
                writeln!(w, "{channel},{s},{m},{},{}", x.re, x.im)?;
            }
        }
    }
    Ok(())
}

/// Read a frame written by [`save_frame`].  Channels appear in file order;
/// subcarrier and slot indices must form dense 0-based ranges per channel.
pub fn load_frame<P: AsRef<Path>>(path: P) -> Result<SymbolFrame> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != "channel,subcarrier,m,re,im" {
        return Err(Error::MalformedData(
            "expected header line 'channel,subcarrier,m,re,im'".into(),
        ));
    }

    let mut channels: Vec<i32> = Vec::new();
    let mut symbols: Vec<Vec<Vec<Complex64>>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 5 {
            return Err(Error::MalformedData(format!(
                "line {}: expected 5 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse_err = |what: &str| {
            Error::MalformedData(format!("line {}: bad {what}", lineno + 2))
        };
        let channel: i32 = fields[0].parse().map_err(|_| parse_err("channel"))?;
        let s: usize = fields[1].parse().map_err(|_| parse_err("subcarrier"))?;
        let m: usize = fields[2].parse().map_err(|_| parse_err("slot"))?;
        let re: f64 = fields[3].parse().map_err(|_| parse_err("re"))?;
        let im: f64 = fields[4].parse().map_err(|_| parse_err("im"))?;

        let ci = match channels.iter().position(|&c| c == channel) {
            Some(ci) => ci,
            None => {
                channels.push(channel);
                symbols.push(Vec::new());
                channels.len() - 1
            }
        };
        if symbols[ci].len() == s {
            symbols[ci].push(Vec::new());
        } else if s > symbols[ci].len() {
            return Err(Error::MalformedData(format!(
                "line {}: subcarrier index {s} out of order",
                lineno + 2
            )));
        }
        if symbols[ci][s].len() != m {
            return Err(Error::MalformedData(format!(
                "line {}: symbol slot {m} out of order",
                lineno + 2
            )));
        }
        symbols[ci][s].push(Complex64::new(re, im));
    }
    Ok(SymbolFrame { channels, symbols })
}
