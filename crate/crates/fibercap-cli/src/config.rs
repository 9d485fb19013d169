//! Experiment configuration: structured-text files (`key = value` with
//! sections), shipped presets, validation, and the provenance hash stamped
//! on every emitted artifact.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fibercap::hash::hash_json;
use fibercap::models::ModelKind;
use fibercap::modem::WdmPlan;
use fibercap::nli::{QuadratureSpec, TensorWindows};
use fibercap::params::{Amplification, PhysicalParams};
use fibercap::units::dbm_to_watt;

use crate::{CliError, Result};

/// Fiber-link parameters in the customary engineering units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub alpha_db_per_km: f64,
    pub beta2_ps2_per_km: f64,
    pub gamma_per_w_km: f64,
    /// Spontaneous-emission factor of the amplification.
    pub eta: f64,
    pub link_length_km: f64,
    pub span_length_km: f64,
    pub amplification: Amplification,
    pub center_wavelength_nm: f64,
}

impl LinkSection {
    pub fn to_params(&self) -> PhysicalParams {
        PhysicalParams::from_engineering(
            self.alpha_db_per_km,
            self.beta2_ps2_per_km,
            self.gamma_per_w_km,
            self.eta,
            self.link_length_km,
            self.span_length_km,
            self.amplification,
            self.center_wavelength_nm,
        )
    }
}

/// WDM comb geometry and burst sizing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub num_channels: usize,
    pub channel_spacing_ghz: f64,
    pub symbol_period_ps: f64,
    pub subcarriers: usize,
    pub symbols_per_burst: usize,
    /// Simulation bandwidth as a multiple of the total WDM band.
    #[serde(default = "default_oversampling")]
    pub oversampling: f64,
}

fn default_oversampling() -> f64 {
    4.0
}

impl PlanSection {
    /// Plan at one per-channel launch power, split evenly over subcarriers.
    pub fn plan_at_power(&self, channel_power_watt: f64) -> WdmPlan {
        let mut plan = WdmPlan::uniform(
            self.num_channels,
            self.channel_spacing_ghz * 1e9,
            self.symbol_period_ps * 1e-12,
            self.subcarriers,
            self.symbols_per_burst,
            channel_power_watt,
        );
        plan.oversampling = self.oversampling;
        plan
    }

    /// Plan with an explicit per-subcarrier power split (watts).
    pub fn plan_with_subcarrier_powers(&self, powers_watt: &[f64]) -> WdmPlan {
        let mut plan = self.plan_at_power(powers_watt.iter().sum());
        plan.subcarrier_powers = powers_watt.to_vec();
        plan
    }
}

/// Training/testing protocol and decoder parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    /// Receiver model: `memoryless`, `wpn`, or `cpan`.
    pub model: String,
    /// Phase memory μ of the fitted model (≥ 2, the whitening-filter span).
    pub memory: usize,
    /// Particle count K.
    pub num_particles: usize,
    /// Resampling threshold ε: resample when K_eff < ε·K.
    pub resample_fraction: f64,
    /// Per-channel launch powers to sweep, dBm, strictly increasing.
    pub powers_dbm: Vec<f64>,
    pub train_bursts: usize,
    pub test_bursts: usize,
    /// Re-allocate subcarrier powers from the uniform sweep's utilities and
    /// re-evaluate (one allocation pass; meaningful only for subcarriers > 1).
    #[serde(default)]
    pub fdpa: bool,
    /// Per-step mean nonlinear phase budget for the split-step integrator.
    #[serde(default = "default_max_phase")]
    pub max_nonlinear_phase_per_step: f64,
}

fn default_max_phase() -> f64 {
    1e-3
}

/// Coefficient-tensor truncation windows and quadrature control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TensorSection {
    pub n_max: i32,
    pub d_max: i32,
    pub k_pad: i32,
    pub quad_tol: f64,
}

impl Default for TensorSection {
    fn default() -> Self {
        let w = TensorWindows::default();
        TensorSection {
            n_max: w.n_max,
            d_max: w.d_max,
            k_pad: w.k_pad,
            quad_tol: QuadratureSpec::default().tol,
        }
    }
}

impl TensorSection {
    pub fn windows(&self) -> TensorWindows {
        TensorWindows {
            n_max: self.n_max,
            d_max: self.d_max,
            k_pad: self.k_pad,
        }
    }

    pub fn quadrature(&self) -> QuadratureSpec {
        QuadratureSpec {
            tol: self.quad_tol,
            ..QuadratureSpec::default()
        }
    }
}

/// One complete experiment description.  The provenance hash of the whole
/// structure is stamped on every artifact the experiment emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment id; used as the artifact filename stem.
    pub label: String,
    /// Base RNG seed; every burst, fit, and evaluation derives a disjoint
    /// stream from it.
    pub seed: u64,
    /// Output directory for curves, models, caches, and reports.
    pub out_dir: PathBuf,
    pub link: LinkSection,
    pub plan: PlanSection,
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub tensor: TensorSection,
}

impl ExperimentConfig {
    /// Full-scale preset: the standard 1000 km ideal-distributed-amplification
    /// benchmark with 5 × 50 GHz channels, 20 ps symbols, 24 training and 120
    /// testing bursts of 6825 symbols, and 512 particles.
    pub fn table1(model: ModelKind) -> Self {
        ExperimentConfig {
            label: "table1".into(),
            seed: 1,
            out_dir: PathBuf::from("runs/table1"),
            link: LinkSection {
                alpha_db_per_km: 0.2,
                beta2_ps2_per_km: -21.7,
                gamma_per_w_km: 1.27,
                eta: 1.0,
                link_length_km: 1000.0,
                span_length_km: 100.0,
                amplification: Amplification::Ideal,
                center_wavelength_nm: 1550.0,
            },
            plan: PlanSection {
                num_channels: 5,
                channel_spacing_ghz: 50.0,
                symbol_period_ps: 20.0,
                subcarriers: 1,
                symbols_per_burst: 6825,
                oversampling: 4.0,
            },
            protocol: ProtocolSection {
                model: model_label(model).into(),
                memory: 2,
                num_particles: 512,
                resample_fraction: 0.3,
                powers_dbm: vec![-10.0, -9.0, -8.0, -7.0, -6.0, -5.0, -4.0],
                train_bursts: 24,
                test_bursts: 120,
                fdpa: false,
                max_nonlinear_phase_per_step: 1e-3,
            },
            tensor: TensorSection::default(),
        }
    }

    /// Reduced preset that runs the full pipeline in minutes: 3 channels,
    /// 2048-symbol bursts, 8 training and 24 testing bursts, 128 particles.
    pub fn desk(model: ModelKind) -> Self {
        let mut cfg = Self::table1(model);
        cfg.label = "desk".into();
        cfg.out_dir = PathBuf::from("runs/desk");
        cfg.plan.num_channels = 3;
        cfg.plan.symbols_per_burst = 2048;
        cfg.protocol.num_particles = 128;
        cfg.protocol.powers_dbm = vec![-10.0, -8.0, -7.0, -6.0, -5.0, -4.0];
        cfg.protocol.train_bursts = 8;
        cfg.protocol.test_bursts = 24;
        cfg
    }

    /// Parse a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Receiver model kind.
    pub fn model_kind(&self) -> Result<ModelKind> {
        parse_model(&self.protocol.model)
    }

    /// Per-channel launch power in watts for one sweep point.
    pub fn channel_power_watt(&self, power_dbm: f64) -> f64 {
        dbm_to_watt(power_dbm)
    }

    /// 64-bit provenance hash of the entire configuration, formatted as
    /// fixed-width hex.
    pub fn config_hash(&self) -> String {
        format!("{:016x}", hash_json(self))
    }

    pub fn validate(&self) -> Result<()> {
        if self.label.is_empty()
            || !self
                .label
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(CliError::Config(format!(
                "label {:?} must be non-empty and use only [A-Za-z0-9_-]",
                self.label
            )));
        }
        parse_model(&self.protocol.model)?;
        let p = &self.protocol;
        if p.memory < 2 {
            return Err(CliError::Config(
                "protocol.memory must be ≥ 2 (whitening-filter span)".into(),
            ));
        }
        if p.num_particles < 2 {
            return Err(CliError::Config("protocol.num_particles must be ≥ 2".into()));
        }
        if !(p.resample_fraction > 0.0 && p.resample_fraction <= 1.0) {
            return Err(CliError::Config(
                "protocol.resample_fraction must lie in (0, 1]".into(),
            ));
        }
        if p.powers_dbm.is_empty() || p.powers_dbm.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config(
                "protocol.powers_dbm must be non-empty and strictly increasing".into(),
            ));
        }
        if p.train_bursts == 0 || p.test_bursts == 0 {
            return Err(CliError::Config(
                "protocol.train_bursts and test_bursts must be ≥ 1".into(),
            ));
        }
        if !(p.max_nonlinear_phase_per_step > 0.0) {
            return Err(CliError::Config(
                "protocol.max_nonlinear_phase_per_step must be positive".into(),
            ));
        }
        // Geometric plan constraints are checked by the plan itself; probe at
        // the first sweep power so errors surface before any simulation.
        let probe = self
            .plan
            .plan_at_power(self.channel_power_watt(p.powers_dbm[0]));
        probe.validate().map_err(CliError::Core)?;
        Ok(())
    }
}

/// Parse a receiver-model name as used in configuration files and on the
/// command line.
pub fn parse_model(name: &str) -> Result<ModelKind> {
    match name.to_ascii_lowercase().as_str() {
        "memoryless" => Ok(ModelKind::Memoryless),
        "wpn" => Ok(ModelKind::Wpn),
        "cpan" | "mpn" => Ok(ModelKind::Mpn),
        other => Err(CliError::Config(format!(
            "unknown model {other:?}; expected memoryless, wpn, or cpan"
        ))),
    }
}

/// Canonical lower-case label of a model kind (file stems, CSV columns).
pub fn model_label(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Memoryless => "memoryless",
        ModelKind::Wpn => "wpn",
        ModelKind::Mpn => "cpan",
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{} ch × {} GHz, S={}, M={}, {} powers, {}+{} bursts, model {}]",
            self.label,
            self.plan.num_channels,
            self.plan.channel_spacing_ghz,
            self.plan.subcarriers,
            self.plan.symbols_per_burst,
            self.protocol.powers_dbm.len(),
            self.protocol.train_bursts,
            self.protocol.test_bursts,
            self.protocol.model,
        )
    }
}
