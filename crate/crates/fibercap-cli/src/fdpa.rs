//! Frequency-dependent power allocation across subcarriers.
//!
//! Subcarriers at the band edges see different interference than center
//! subcarriers, so their measured rate-vs-power utilities differ and a
//! uniform power split is not optimal.  [`fdpa_allocate`] maximizes the sum
//! of per-subcarrier utilities subject to a total-power constraint by
//! exhaustive search on a dB lattice, interpolating each sampled utility
//! with a monotone cubic so rates between sweep points are well defined.

use fibercap::units::{dbm_to_watt, watt_to_dbm};

use crate::{CliError, Result};

/// Lattice step for the allocation search, in dB.  Chosen below the Monte
/// Carlo resolution of the measured utilities.
pub const DEFAULT_STEP_DB: f64 = 0.25;

/// One sample of a subcarrier's rate-vs-power utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Utility {
    /// Subcarrier launch power, dBm.
    pub power_dbm: f64,
    /// Achieved rate (spectral efficiency) at this power.
    pub rate: f64,
}

/// Monotone (Fritsch–Carlson) cubic Hermite interpolant: passes through
/// every knot, is C¹, and never overshoots between knots of monotone data.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Knot tangents.
    m: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(CliError::Config(
                "interpolation needs at least two samples".into(),
            ));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(CliError::Config(format!(
                    "interpolation abscissae must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        let x: Vec<f64> = points.iter().map(|p| p.0).collect();
        let y: Vec<f64> = points.iter().map(|p| p.1).collect();
        let n = x.len();
        let d: Vec<f64> = (0..n - 1)
            .map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k]))
            .collect();

        let mut m = vec![0.0; n];
        m[0] = d[0];
        m[n - 1] = d[n - 2];
        for k in 1..n - 1 {
            m[k] = if d[k - 1] * d[k] <= 0.0 {
                0.0
            } else {
                0.5 * (d[k - 1] + d[k])
            };
        }
        // Limit tangents so each interval's cubic stays monotone.
        for k in 0..n - 1 {
            if d[k] == 0.0 {
                m[k] = 0.0;
                m[k + 1] = 0.0;
                continue;
            }
            let a = m[k] / d[k];
            let b = m[k + 1] / d[k];
            let s = a * a + b * b;
            if s > 9.0 {
                let tau = 3.0 / s.sqrt();
                m[k] = tau * a * d[k];
                m[k + 1] = tau * b * d[k];
            }
        }
        Ok(MonotoneCubic { x, y, m })
    }

    /// Domain of the sampled data.
    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    /// Evaluate at `x`; `None` outside the sampled domain.
    pub fn eval(&self, x: f64) -> Option<f64> {
        let (lo, hi) = self.domain();
        if !(lo..=hi).contains(&x) {
            return None;
        }
        let k = match self.x.partition_point(|&xi| xi <= x) {
            0 => 0,
            p => (p - 1).min(self.x.len() - 2),
        };
        let h = self.x[k + 1] - self.x[k];
        let t = (x - self.x[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Some(h00 * self.y[k] + h10 * h * self.m[k] + h01 * self.y[k + 1] + h11 * h * self.m[k + 1])
    }
}

/// A group of subcarriers constrained to share one power value: the members
/// and the utility they are scored with.
struct FreeVar {
    members: Vec<usize>,
    curve: MonotoneCubic,
    /// Lattice of candidate powers (dBm) over the sampled domain.
    lattice: Vec<f64>,
}

/// Split the total power `total_power_watt` across subcarriers to maximize
/// the summed utility, by exhaustive search on a `step_db` lattice over the
/// sampled domain of each utility curve.  Mirror-symmetric utility sets
/// (subcarrier `s` equal to `S−1−s`) are detected and solved with half the
/// dimensions, mirroring the result.  The exact uniform split seeds the
/// search, so identical concave utilities return the uniform allocation
/// exactly.  Errors with [`CliError::InsufficientCurveSupport`] when no
/// feasible candidate lies inside the sampled domains.
pub fn fdpa_allocate(
    utilities: &[Vec<Utility>],
    total_power_watt: f64,
    step_db: f64,
) -> Result<Vec<f64>> {
    let s_count = utilities.len();
    if s_count == 0 {
        return Err(CliError::Config("no utility curves given".into()));
    }
    if !(total_power_watt > 0.0) || !(step_db > 0.0) {
        return Err(CliError::Config(
            "total power and lattice step must be positive".into(),
        ));
    }
    let curves: Vec<MonotoneCubic> = utilities
        .iter()
        .map(|u| MonotoneCubic::new(&u.iter().map(|p| (p.power_dbm, p.rate)).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;

    // Mirror symmetry s ↔ S−1−s lets us tie mirrored subcarriers to one
    // shared power and halve the search dimension.
    let symmetric = (0..s_count / 2).all(|s| utilities[s] == utilities[s_count - 1 - s]);
    let mut vars: Vec<FreeVar> = Vec::new();
    let mut grouped = vec![false; s_count];
    for s in 0..s_count {
        if grouped[s] {
            continue;
        }
        let mut members = vec![s];
        grouped[s] = true;
        let mirror = s_count - 1 - s;
        if symmetric && mirror != s {
            members.push(mirror);
            grouped[mirror] = true;
        }
        let curve = curves[s].clone();
        let (lo, hi) = curve.domain();
        let steps = ((hi - lo) / step_db).floor() as usize;
        let lattice = (0..=steps).map(|k| lo + k as f64 * step_db).collect();
        vars.push(FreeVar {
            members,
            curve,
            lattice,
        });
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |powers_dbm: &[f64]| {
        debug_assert_eq!(powers_dbm.len(), vars.len());
        let mut score = 0.0;
        for (var, &p) in vars.iter().zip(powers_dbm) {
            match var.curve.eval(p) {
                Some(rate) => score += rate * var.members.len() as f64,
                None => return,
            }
        }
        if best.as_ref().map_or(true, |(b, _)| score > *b) {
            best = Some((score, powers_dbm.to_vec()));
        }
    };

    // Seed: the exact uniform split.  With identical concave utilities no
    // lattice candidate strictly beats it, so it survives as the answer.
    let uniform_dbm = watt_to_dbm(total_power_watt / s_count as f64);
    consider(&vec![uniform_dbm; vars.len()]);

    // Exhaustive lattice search: the last free variable is solved from the
    // power constraint instead of enumerated.
    let free = vars.len() - 1;
    let mut index = vec![0usize; free];
    loop {
        let mut candidate = Vec::with_capacity(vars.len());
        let mut used = 0.0;
        for (v, &i) in vars[..free].iter().zip(&index) {
            let p = v.lattice[i];
            candidate.push(p);
            used += dbm_to_watt(p) * v.members.len() as f64;
        }
        let last = &vars[free];
        let remaining = (total_power_watt - used) / last.members.len() as f64;
        if remaining > 0.0 {
            candidate.push(watt_to_dbm(remaining));
            consider(&candidate);
        }

        // Odometer increment over the enumerated variables.
        let mut carry = true;
        for (v, i) in vars[..free].iter().zip(index.iter_mut()) {
            *i += 1;
            if *i < v.lattice.len() {
                carry = false;
                break;
            }
            *i = 0;
        }
        if free == 0 || carry {
            break;
        }
    }

    let (_, powers_dbm) = best.ok_or_else(|| {
        CliError::InsufficientCurveSupport(format!(
            "no feasible split of {total_power_watt} W lies inside the sampled utility domains"
        ))
    })?;

    let mut allocation = vec![0.0; s_count];
    for (var, &p) in vars.iter().zip(&powers_dbm) {
        // The uniform seed may carry the exact per-subcarrier watt value;
        // recover it without a dB round trip when possible.
        let watt = if p == uniform_dbm {
            total_power_watt / s_count as f64
        } else {
            dbm_to_watt(p)
        };
        for &s in &var.members {
            allocation[s] = watt;
        }
    }
    Ok(allocation)
}
