//! The train → fit → test pipeline over a launch-power sweep.
//!
//! For every launch power the sweep simulates training bursts over the
//! nonlinear link, fits the receiver model on them, simulates fresh test
//! bursts, and evaluates the achievable-rate lower bound on the held-out
//! data.  Every burst, fit, and evaluation draws from its own RNG stream
//! derived from the experiment seed, so results are reproducible bit for bit
//! regardless of worker count, and a sweep over several model kinds reuses
//! the exact simulations a single-kind sweep would see.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fibercap::fit::{fit_cpan_model, FitDiagnostics, TrainTestSplit};
use fibercap::modem::{demodulate_center, generate_symbols, modulate, WdmPlan};
use fibercap::models::{CpanModelParams, ModelKind};
use fibercap::nli::{build_tensor, load_tensor, save_tensor, tensor_cache_key, NliTensor};
use fibercap::rate::{
    conditional_entropy_pf, mutual_information, output_entropy, whiten_and_derotate, RatePoint,
};
use fibercap::ssfm::SsfmConfig;
use fibercap::stats::{theta_covariance, CovarianceSeq};
use fibercap::units::{dbm_to_watt, watt_to_dbm};
use fibercap::{PhysicalParams, SeededRng};

use crate::config::{model_label, ExperimentConfig};
use crate::{fdpa, report, CliError, Result};

/// Identifies the configuration and code that produced an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Hash of the full experiment configuration (with `protocol.model`
    /// set to this curve's model, so single- and multi-model runs agree).
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    /// Experiment label; FDPA re-evaluation curves append `-fdpa`.
    pub label: String,
    /// Receiver model: `memoryless`, `wpn`, or `cpan`.
    pub model: String,
}

/// Rate-lower-bound curve over launch powers, with per-subcarrier detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub provenance: Provenance,
    pub subcarriers: usize,
    /// Channel-aggregate point per launch power, in ascending power order.
    pub points: Vec<RatePoint>,
    /// Per-subcarrier points; outer index matches `points`.
    pub subcarrier_points: Vec<Vec<RatePoint>>,
    /// Per-subcarrier launch powers (watts) used at each sweep point.
    pub subcarrier_powers_watt: Vec<Vec<f64>>,
}

impl RateCurve {
    fn empty(cfg: &ExperimentConfig, kind: ModelKind, label: String) -> Self {
        // Hash the configuration as a single-model run of `kind` so the
        // provenance of a combined sweep matches the standalone sweep.
        let mut hashed = cfg.clone();
        hashed.protocol.model = model_label(kind).into();
        RateCurve {
            provenance: Provenance {
                config_hash: hashed.config_hash(),
                seed: cfg.seed,
                code_version: env!("CARGO_PKG_VERSION").into(),
                label,
                model: model_label(kind).into(),
            },
            subcarriers: cfg.plan.subcarriers,
            points: Vec::new(),
            subcarrier_points: Vec::new(),
            subcarrier_powers_watt: Vec::new(),
        }
    }

    /// Artifact filename stem: `<label>-<model>`.
    pub fn stem(&self) -> String {
        format!("{}-{}", self.provenance.label, self.provenance.model)
    }

    /// Check the curve invariants: strictly increasing powers and
    /// consistent per-subcarrier shapes.
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(CliError::Config("rate curve has no points".into()));
        }
        for w in self.points.windows(2) {
            if !(w[1].power_dbm > w[0].power_dbm) {
                return Err(CliError::Config(format!(
                    "curve powers must be strictly increasing ({} then {} dBm)",
                    w[0].power_dbm, w[1].power_dbm
                )));
            }
        }
        if self.subcarrier_points.len() != self.points.len()
            || self.subcarrier_powers_watt.len() != self.points.len()
        {
            return Err(CliError::Config(
                "per-subcarrier records must cover every sweep point".into(),
            ));
        }
        for (pts, powers) in self.subcarrier_points.iter().zip(&self.subcarrier_powers_watt) {
            if pts.len() != self.subcarriers || powers.len() != self.subcarriers {
                return Err(CliError::Config(format!(
                    "expected {} subcarrier entries per sweep point",
                    self.subcarriers
                )));
            }
        }
        if let Some(p) = self.points.iter().find(|p| !p.i_q.is_finite()) {
            return Err(CliError::Config(format!(
                "non-finite rate at {} dBm",
                p.power_dbm
            )));
        }
        Ok(())
    }

    /// The sweep point with the highest spectral efficiency.
    pub fn peak(&self) -> Option<&RatePoint> {
        self.points
            .iter()
            .max_by(|a, b| a.se_bits_hz.total_cmp(&b.se_bits_hz))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let curve: RateCurve = serde_json::from_str(&fs::read_to_string(path)?)?;
        curve.validate()?;
        Ok(curve)
    }
}

/// A fitted model and its diagnostics, persisted per (power, subcarrier).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelRecord {
    pub power_dbm: f64,
    pub subcarrier: usize,
    pub model: CpanModelParams,
    pub diagnostics: FitDiagnostics,
}

// ---------------------------------------------------------------------------
// RNG stream layout
// ---------------------------------------------------------------------------
//
// Each sweep point owns a block of 500 000 streams per phase (phase 0 is the
// uniform sweep, phase 1 the FDPA re-evaluation).  Within a block, bursts
// occupy the low indices via `TrainTestSplit` and the fit/evaluation streams
// sit at fixed offsets keyed by the *canonical* model index, so running one
// model alone or several together consumes identical streams.

const PHASE_STRIDE: u64 = 500_000;
const FIT_OFFSET: u64 = 400_000;
const EVAL_OFFSET: u64 = 450_000;

fn power_base(power_index: usize, phase: u64) -> u64 {
    (power_index as u64 + 1) * 2 * PHASE_STRIDE + phase * PHASE_STRIDE
}

fn kind_index(kind: ModelKind) -> u64 {
    match kind {
        ModelKind::Memoryless => 0,
        ModelKind::Wpn => 1,
        ModelKind::Mpn => 2,
    }
}

fn fit_stream(base: u64, kind: ModelKind, subcarrier: usize) -> u64 {
    base + FIT_OFFSET + kind_index(kind) * 1000 + subcarrier as u64
}

fn eval_stream(base: u64, kind: ModelKind, subcarrier: usize) -> u64 {
    base + EVAL_OFFSET + kind_index(kind) * 1000 + subcarrier as u64
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Center-channel symbols from a set of simulated bursts, grouped by
/// subcarrier: `y[s][burst][m]` received after back-propagation and matched
/// sampling, `x[s][burst][m]` transmitted.
pub struct SymbolSet {
    pub y: Vec<Vec<Vec<Complex64>>>,
    pub x: Vec<Vec<Vec<Complex64>>>,
}

/// Simulate one burst per stream (symbols + ASE drawn from that stream) and
/// return the center channel's transmitted and received subcarrier symbols.
pub fn simulate_set(
    plan: &WdmPlan,
    params: &PhysicalParams,
    ssfm: &SsfmConfig,
    seed: u64,
    streams: &[u64],
) -> Result<SymbolSet> {
    let bursts = streams
        .par_iter()
        .map(|&stream| -> fibercap::Result<_> {
            let mut rng = SeededRng::new(seed, stream);
            let frame = generate_symbols(plan, &mut rng);
            let tx = modulate(&frame, plan, plan.grid()?)?;
            let rx = fibercap::ssfm::propagate(&tx, params, ssfm, &mut rng)?;
            let rx_frame = demodulate_center(&rx, plan, params, ssfm)?;
            let y: Vec<Vec<Complex64>> = (0..plan.subcarriers)
                .map(|s| rx_frame.symbols(0, s).to_vec())
                .collect();
            let x: Vec<Vec<Complex64>> = (0..plan.subcarriers)
                .map(|s| frame.symbols(0, s).to_vec())
                .collect();
            Ok((y, x))
        })
        .collect::<fibercap::Result<Vec<_>>>()?;

    let s_count = plan.subcarriers;
    let mut set = SymbolSet {
        y: vec![Vec::with_capacity(bursts.len()); s_count],
        x: vec![Vec::with_capacity(bursts.len()); s_count],
    };
    for (y, x) in bursts {
        for (s, burst) in y.into_iter().enumerate() {
            set.y[s].push(burst);
        }
        for (s, burst) in x.into_iter().enumerate() {
            set.x[s].push(burst);
        }
    }
    Ok(set)
}

// ---------------------------------------------------------------------------
// Interference tensor cache
// ---------------------------------------------------------------------------

/// Load the interference tensor for one observed subcarrier from the cache,
/// or build and cache it.  The tensor coefficients are independent of launch
/// power, so one tensor per geometry serves the whole sweep; the cache key
/// therefore hashes a fixed unit-power copy of the plan.  The returned
/// tensor always comes from the cache file so that first and subsequent
/// runs see identical (quantized) coefficients.
pub fn load_or_build_tensor(
    cfg: &ExperimentConfig,
    params: &PhysicalParams,
    observed_subcarrier: usize,
) -> Result<NliTensor> {
    let plan = cfg.plan.plan_at_power(1e-3);
    let windows = cfg.tensor.windows();
    let quad = cfg.tensor.quadrature();
    let key = tensor_cache_key(&plan, params, observed_subcarrier, &windows, &quad);
    let dir = cfg.out_dir.join("cache");
    fs::create_dir_all(&dir)?;
    let path = dir.join(format!("tensor-{key:016x}.csv"));
    if path.exists() {
        if let Ok((tensor, stored)) = load_tensor(&path) {
            if stored == key {
                return Ok(tensor);
            }
        }
    }
    let tensor = build_tensor(&plan, params, observed_subcarrier, &windows, &quad)?;
    save_tensor(&path, &tensor, key)?;
    let (tensor, _) = load_tensor(&path)?;
    Ok(tensor)
}

// ---------------------------------------------------------------------------
// Per-power evaluation
// ---------------------------------------------------------------------------

/// Everything evaluated at one launch power for one model kind.
pub struct KindEval {
    pub channel_point: RatePoint,
    pub subcarrier_points: Vec<RatePoint>,
    pub models: Vec<ModelRecord>,
}

/// Channel-level aggregate of per-subcarrier points: entropies and rates
/// average (each subcarrier carries `1/S` of the band at `1/S` of the symbol
/// rate, so the channel spectral efficiency is the subcarrier mean), errors
/// combine as independent estimates.
fn aggregate_channel(points: &[RatePoint], power_dbm: f64) -> RatePoint {
    let n = points.len() as f64;
    let mean = |f: fn(&RatePoint) -> f64| points.iter().map(f).sum::<f64>() / n;
    RatePoint {
        power_dbm,
        h_u: mean(|p| p.h_u),
        h_ux: mean(|p| p.h_ux),
        i_q: mean(|p| p.i_q),
        se_bits_hz: mean(|p| p.se_bits_hz),
        stderr_bits: points.iter().map(|p| p.stderr_bits.powi(2)).sum::<f64>().sqrt() / n,
        mean_k_eff: mean(|p| p.mean_k_eff),
        resample_count: points.iter().map(|p| p.resample_count).sum(),
    }
}

/// Train, fit, and test every requested model kind at one launch power.
/// All kinds share the same simulated bursts; fits and evaluations use
/// kind-specific streams.  `phase` 0 is the uniform sweep, 1 the FDPA
/// re-evaluation (fresh bursts).
pub fn evaluate_power(
    cfg: &ExperimentConfig,
    kinds: &[ModelKind],
    tensors: &[NliTensor],
    plan: &WdmPlan,
    params: &PhysicalParams,
    power_index: usize,
    phase: u64,
) -> Result<Vec<KindEval>> {
    let protocol = &cfg.protocol;
    let launch_total = plan.channel_power() * plan.num_channels as f64;
    let ssfm = SsfmConfig::for_link(params, launch_total, protocol.max_nonlinear_phase_per_step);

    let base = power_base(power_index, phase);
    let split = TrainTestSplit::new(protocol.train_bursts, protocol.test_bursts, base);
    let streams: Vec<u64> = (0..split.train_bursts)
        .map(|b| split.train_stream(b))
        .chain((0..split.test_bursts).map(|b| split.test_stream(b)))
        .collect();
    let set = simulate_set(plan, params, &ssfm, cfg.seed, &streams)?;
    let train = split.train_bursts;

    // The analytic phase covariance is model-independent; compute it once
    // per subcarrier with the actual launch powers.
    let analytic: Vec<CovarianceSeq> = (0..plan.subcarriers)
        .map(|s| theta_covariance(&tensors[s], plan, protocol.memory))
        .collect();

    // Spectral efficiency per subcarrier: i_q bits per subcarrier symbol
    // period S·T over the subcarrier band Δf/S, i.e. i_q / (T·Δf).  The
    // channel mean has the same scale.
    let se_scale = 1.0 / (plan.symbol_period * plan.channel_spacing);

    let mut evals = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let mut sub_points = Vec::with_capacity(plan.subcarriers);
        let mut models = Vec::with_capacity(plan.subcarriers);
        for s in 0..plan.subcarriers {
            let context = |e: CliError| {
                e.context(format!(
                    "model {} subcarrier {s}",
                    model_label(kind)
                ))
            };
            let fit_rng = SeededRng::new(cfg.seed, fit_stream(base, kind, s));
            let (model, diagnostics) = fit_cpan_model(
                &set.y[s][..train],
                &set.x[s][..train],
                kind,
                protocol.memory,
                &analytic[s],
                protocol.num_particles,
                protocol.resample_fraction,
                &fit_rng,
            )
            .map_err(|e| context(e.into()))?;

            let u_test: Vec<Vec<Complex64>> = set.y[s][train..]
                .iter()
                .map(|y| whiten_and_derotate(y, &model))
                .collect();
            let h_u = output_entropy(&u_test, &model, plan.subcarrier_energy(s))
                .map_err(|e| context(e.into()))?;
            let mut eval_rng = SeededRng::new(cfg.seed, eval_stream(base, kind, s));
            let (h_ux, pf) = conditional_entropy_pf(
                &u_test,
                &set.x[s][train..],
                &model,
                protocol.num_particles,
                protocol.resample_fraction,
                &mut eval_rng,
            )
            .map_err(|e| context(e.into()))?;

            let sub_power_dbm = watt_to_dbm(plan.subcarrier_powers[s]);
            sub_points.push(mutual_information(sub_power_dbm, &h_u, &h_ux, &pf, se_scale));
            models.push(ModelRecord {
                power_dbm: sub_power_dbm,
                subcarrier: s,
                model,
                diagnostics,
            });
        }
        evals.push(KindEval {
            channel_point: aggregate_channel(&sub_points, watt_to_dbm(plan.channel_power())),
            subcarrier_points: sub_points,
            models,
        });
    }
    Ok(evals)
}

// ---------------------------------------------------------------------------
// Sweep drivers
// ---------------------------------------------------------------------------

struct SweepContext {
    params: PhysicalParams,
    tensors: Vec<NliTensor>,
}

fn build_context(cfg: &ExperimentConfig) -> Result<SweepContext> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let params = cfg.link.to_params();
    let tensors = (0..cfg.plan.subcarriers)
        .map(|s| {
            load_or_build_tensor(cfg, &params, s)
                .map_err(|e| e.context(format!("interference tensor, subcarrier {s}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepContext { params, tensors })
}

fn persist_models(cfg: &ExperimentConfig, stem: &str, power_index: usize, eval: &KindEval) -> Result<()> {
    let dir = cfg.out_dir.join("models");
    fs::create_dir_all(&dir)?;
    for record in &eval.models {
        let path = dir.join(format!("{stem}-pw{power_index}-sc{}.model.json", record.subcarrier));
        let mut text = serde_json::to_string_pretty(record)?;
        text.push('\n');
        fs::write(path, text)?;
    }
    Ok(())
}

fn sweep_uniform(
    cfg: &ExperimentConfig,
    kinds: &[ModelKind],
    ctx: &SweepContext,
) -> Result<Vec<RateCurve>> {
    let mut curves: Vec<RateCurve> = kinds
        .iter()
        .map(|&k| RateCurve::empty(cfg, k, cfg.label.clone()))
        .collect();
    for (pi, &p_dbm) in cfg.protocol.powers_dbm.iter().enumerate() {
        let plan = cfg.plan.plan_at_power(dbm_to_watt(p_dbm));
        let evals = evaluate_power(cfg, kinds, &ctx.tensors, &plan, &ctx.params, pi, 0)
            .map_err(|e| e.context(format!("sweep point {pi} ({p_dbm} dBm)")))?;
        for (curve, eval) in curves.iter_mut().zip(evals) {
            persist_models(cfg, &curve.stem(), pi, &eval)?;
            curve.points.push(eval.channel_point);
            curve.subcarrier_points.push(eval.subcarrier_points);
            curve.subcarrier_powers_watt.push(plan.subcarrier_powers.clone());
        }
    }
    for curve in &curves {
        curve.validate()?;
        curve.save(&cfg.out_dir.join(format!("{}.curve.json", curve.stem())))?;
        report::write_curve_csv(&cfg.out_dir, curve)?;
    }
    Ok(curves)
}

/// Run the sweep for several model kinds over shared simulations; returns
/// one curve per kind, in the order given.
pub fn run_sweep_models(cfg: &ExperimentConfig, kinds: &[ModelKind]) -> Result<Vec<RateCurve>> {
    let ctx = build_context(cfg)?;
    sweep_uniform(cfg, kinds, &ctx)
}

/// Run the configured experiment: a uniform-allocation sweep of the
/// configured model and, when FDPA is enabled, one re-allocation pass that
/// reads per-subcarrier utilities off the uniform curve, optimizes the power
/// split at every sweep point, and re-evaluates on fresh bursts.  Returns
/// the uniform curve first, then the FDPA curve if enabled.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<RateCurve>> {
    let kind = cfg.model_kind()?;
    let ctx = build_context(cfg)?;
    let mut curves = sweep_uniform(cfg, &[kind], &ctx)?;

    if cfg.protocol.fdpa && cfg.plan.subcarriers > 1 {
        let uniform = curves[0].clone();
        let utilities: Vec<Vec<fdpa::Utility>> = (0..uniform.subcarriers)
            .map(|s| {
                uniform
                    .subcarrier_points
                    .iter()
                    .map(|pts| fdpa::Utility {
                        power_dbm: pts[s].power_dbm,
                        rate: pts[s].se_bits_hz,
                    })
                    .collect()
            })
            .collect();

        let mut curve = RateCurve::empty(cfg, kind, format!("{}-fdpa", cfg.label));
        let mut allocations = Vec::new();
        for (pi, &p_dbm) in cfg.protocol.powers_dbm.iter().enumerate() {
            let total = dbm_to_watt(p_dbm);
            let powers = fdpa::fdpa_allocate(&utilities, total, fdpa::DEFAULT_STEP_DB)
                .map_err(|e| e.context(format!("power allocation at {p_dbm} dBm")))?;
            let plan = cfg.plan.plan_with_subcarrier_powers(&powers);
            let evals = evaluate_power(cfg, &[kind], &ctx.tensors, &plan, &ctx.params, pi, 1)
                .map_err(|e| e.context(format!("FDPA sweep point {pi} ({p_dbm} dBm)")))?;
            let eval = evals.into_iter().next().expect("one kind evaluated");
            persist_models(cfg, &curve.stem(), pi, &eval)?;
            curve.points.push(eval.channel_point);
            curve.subcarrier_points.push(eval.subcarrier_points);
            curve.subcarrier_powers_watt.push(powers.clone());
            allocations.push((p_dbm, powers));
        }
        curve.validate()?;
        curve.save(&cfg.out_dir.join(format!("{}.curve.json", curve.stem())))?;
        report::write_curve_csv(&cfg.out_dir, &curve)?;
        write_allocation_csv(&cfg.out_dir, &curve, &allocations)?;
        curves.push(curve);
    }
    Ok(curves)
}

/// Persist the optimized per-subcarrier powers, one row per
/// (sweep point, subcarrier).
fn write_allocation_csv(
    dir: &Path,
    curve: &RateCurve,
    allocations: &[(f64, Vec<f64>)],
) -> Result<PathBuf> {
    use std::fmt::Write as _;
    let mut text = String::new();
    writeln!(
        text,
        "# config_hash={} label={} model={} subcarriers={}",
        curve.provenance.config_hash,
        curve.provenance.label,
        curve.provenance.model,
        curve.subcarriers
    )
    .expect("string write");
    writeln!(text, "power_dbm,subcarrier,subcarrier_power_dbm,subcarrier_power_watt")
        .expect("string write");
    for (p_dbm, powers) in allocations {
        for (s, &watt) in powers.iter().enumerate() {
            writeln!(text, "{p_dbm},{s},{},{watt}", watt_to_dbm(watt)).expect("string write");
        }
    }
    let path = dir.join(format!("{}.allocation.csv", curve.stem()));
    fs::write(&path, text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fibercap::rate::awgn_reference;
    use std::collections::HashSet;

    #[test]
    fn stream_scheme_is_collision_free() {
        let mut seen = HashSet::new();
        let kinds = [ModelKind::Memoryless, ModelKind::Wpn, ModelKind::Mpn];
        for pi in 0..8 {
            for phase in 0..2 {
                let base = power_base(pi, phase);
                let split = TrainTestSplit::new(24, 120, base);
                for b in 0..split.train_bursts {
                    assert!(seen.insert(split.train_stream(b)));
                }
                for b in 0..split.test_bursts {
                    assert!(seen.insert(split.test_stream(b)));
                }
                for kind in kinds {
                    for s in 0..8 {
                        assert!(seen.insert(fit_stream(base, kind, s)));
                        assert!(seen.insert(eval_stream(base, kind, s)));
                    }
                }
            }
        }
    }

    #[test]
    fn rate_curve_round_trip_validate_and_peak() {
        let cfg = ExperimentConfig::desk(ModelKind::Mpn);
        let mut curve = RateCurve::empty(&cfg, ModelKind::Mpn, cfg.label.clone());
        for (i, p_dbm) in [-10.0, -7.0, -4.0].iter().enumerate() {
            let i_q = [6.0, 8.5, 7.0][i];
            curve.points.push(RatePoint {
                power_dbm: *p_dbm,
                h_u: i_q + 2.0,
                h_ux: 2.0,
                i_q,
                se_bits_hz: i_q,
                stderr_bits: 0.01,
                mean_k_eff: 100.0,
                resample_count: 3,
            });
            curve.subcarrier_points.push(vec![curve.points[i].clone()]);
            curve.subcarrier_powers_watt.push(vec![dbm_to_watt(*p_dbm)]);
        }
        curve.validate().unwrap();
        assert_eq!(curve.peak().unwrap().power_dbm, -7.0);
        assert_eq!(curve.stem(), "desk-cpan");

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.curve.json");
        curve.save(&path).unwrap();
        assert_eq!(RateCurve::load(&path).unwrap(), curve);

        let mut bad = curve.clone();
        bad.points.swap(0, 1);
        assert!(bad.validate().is_err());

        let mut bad = curve.clone();
        bad.subcarrier_points.pop();
        assert!(bad.validate().is_err());
    }

    /// End-to-end smoke sweep at toy scale: one channel, two subcarriers,
    /// short bursts, tiny interference windows, FDPA enabled.  At low power
    /// the link is essentially additive-noise limited, so the rate bound
    /// must approach the matched-filter reference; artifacts must exist and
    /// a rerun must reproduce them byte for byte.
    #[test]
    fn smoke_sweep_hits_awgn_reference_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::desk(ModelKind::Mpn);
        cfg.label = "smoke".into();
        cfg.out_dir = dir.path().to_path_buf();
        cfg.plan.num_channels = 1;
        cfg.plan.subcarriers = 2;
        cfg.plan.symbols_per_burst = 512;
        cfg.plan.oversampling = 4.0;
        cfg.protocol.powers_dbm = vec![-12.0, -6.0];
        cfg.protocol.train_bursts = 2;
        cfg.protocol.test_bursts = 3;
        cfg.protocol.num_particles = 16;
        cfg.protocol.fdpa = true;
        cfg.tensor.n_max = 2;
        cfg.tensor.d_max = 2;
        cfg.tensor.k_pad = 2;
        cfg.tensor.quad_tol = 1e-3;
        cfg.validate().unwrap();

        let curves = run_sweep(&cfg).unwrap();
        assert_eq!(curves.len(), 2, "uniform curve + FDPA curve");
        let uniform = &curves[0];
        let fdpa_curve = &curves[1];
        assert_eq!(uniform.stem(), "smoke-cpan");
        assert_eq!(fdpa_curve.stem(), "smoke-fdpa-cpan");
        assert_eq!(uniform.points.len(), 2);
        assert_eq!(uniform.subcarrier_points[0].len(), 2);

        // Low-power point sits near the additive-noise reference.
        let params = cfg.link.to_params();
        let awgn = awgn_reference(
            dbm_to_watt(-12.0),
            &params,
            cfg.plan.channel_spacing_ghz * 1e9,
        );
        let low = &uniform.points[0];
        assert!(
            (low.i_q - awgn).abs() < 0.4,
            "low-power rate {} vs additive-noise reference {awgn}",
            low.i_q
        );

        // FDPA conserves the total power at every sweep point.
        for (pi, powers) in fdpa_curve.subcarrier_powers_watt.iter().enumerate() {
            let total: f64 = powers.iter().sum();
            let want = dbm_to_watt(cfg.protocol.powers_dbm[pi]);
            assert!(
                (total - want).abs() < 1e-12 * want.max(1.0),
                "allocation at point {pi} sums to {total}, expected {want}"
            );
        }

        // Artifacts: curves, models, CSVs, allocation.
        for stem in ["smoke-cpan", "smoke-fdpa-cpan"] {
            assert!(dir.path().join(format!("{stem}.curve.json")).exists());
            assert!(dir.path().join(format!("{stem}.curve.csv")).exists());
            assert!(dir
                .path()
                .join("models")
                .join(format!("{stem}-pw0-sc0.model.json"))
                .exists());
        }
        assert!(dir.path().join("smoke-fdpa-cpan.allocation.csv").exists());

        // Rerun: byte-identical CSV (the tensor now comes from the cache).
        let csv_path = dir.path().join("smoke-cpan.curve.csv");
        let first = fs::read(&csv_path).unwrap();
        let again = run_sweep(&cfg).unwrap();
        assert_eq!(again[0], curves[0]);
        assert_eq!(fs::read(&csv_path).unwrap(), first);
    }
}
