//! CSV and Markdown emission for rate curves.
//!
//! Every file starts with a comment line carrying the provenance (config
//! hash, label, model), and all numbers are written with Rust's
//! shortest-round-trip float formatting, so re-running an experiment with
//! the same configuration reproduces each artifact byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::sweep::RateCurve;
use crate::{CliError, Result};

fn provenance_line(curve: &RateCurve) -> String {
    let p = &curve.provenance;
    format!(
        "# config_hash={} label={} model={} subcarriers={} seed={} code_version={}\n",
        p.config_hash, p.label, p.model, curve.subcarriers, p.seed, p.code_version
    )
}

/// Write the channel-level CSV for one curve and, for multi-subcarrier
/// experiments, a companion per-subcarrier CSV.  Returns the paths written.
pub fn write_curve_csv(dir: &Path, curve: &RateCurve) -> Result<Vec<PathBuf>> {
    curve.validate()?;
    let mut paths = Vec::new();

    let mut text = provenance_line(curve);
    text.push_str(
        "power_dbm,se_bits_hz,i_q_bits,h_u_bits,h_ux_bits,stderr_bits,mean_k_eff,resample_count\n",
    );
    for p in &curve.points {
        writeln!(
            text,
            "{},{},{},{},{},{},{},{}",
            p.power_dbm,
            p.se_bits_hz,
            p.i_q,
            p.h_u,
            p.h_ux,
            p.stderr_bits,
            p.mean_k_eff,
            p.resample_count
        )
        .expect("string write");
    }
    let path = dir.join(format!("{}.curve.csv", curve.stem()));
    fs::write(&path, text)?;
    paths.push(path);

    if curve.subcarriers > 1 {
        let mut text = provenance_line(curve);
        text.push_str(
            "power_dbm,subcarrier,subcarrier_power_dbm,subcarrier_power_watt,\
             se_bits_hz,i_q_bits,h_u_bits,h_ux_bits,stderr_bits\n",
        );
        for (pi, pts) in curve.subcarrier_points.iter().enumerate() {
            let channel_dbm = curve.points[pi].power_dbm;
            for (s, p) in pts.iter().enumerate() {
                writeln!(
                    text,
                    "{},{},{},{},{},{},{},{},{}",
                    channel_dbm,
                    s,
                    p.power_dbm,
                    curve.subcarrier_powers_watt[pi][s],
                    p.se_bits_hz,
                    p.i_q,
                    p.h_u,
                    p.h_ux,
                    p.stderr_bits
                )
                .expect("string write");
            }
        }
        let path = dir.join(format!("{}.subcarriers.csv", curve.stem()));
        fs::write(&path, text)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Power (dBm) at which the curve reaches `rate` on its ascending branch,
/// by linear interpolation in dB between sweep points.  `None` when the
/// rate is outside the sampled ascending branch.
pub fn power_at_rate(curve: &RateCurve, rate: f64) -> Option<f64> {
    let peak_idx = curve
        .points
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.se_bits_hz.total_cmp(&b.1.se_bits_hz))?
        .0;
    let branch = &curve.points[..=peak_idx];
    if branch.len() == 1 {
        return (branch[0].se_bits_hz == rate).then_some(branch[0].power_dbm);
    }
    for w in branch.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.se_bits_hz <= rate && rate <= b.se_bits_hz {
            if b.se_bits_hz == a.se_bits_hz {
                return Some(a.power_dbm);
            }
            let t = (rate - a.se_bits_hz) / (b.se_bits_hz - a.se_bits_hz);
            return Some(a.power_dbm + t * (b.power_dbm - a.power_dbm));
        }
    }
    None
}

fn write_combined_csv(dir: &Path, curves: &[RateCurve]) -> Result<PathBuf> {
    let mut text = String::new();
    for curve in curves {
        text.push_str(&provenance_line(curve));
    }
    let mut header = String::from("power_dbm");
    for curve in curves {
        write!(header, ",{}_se_bits_hz", curve.stem()).expect("string write");
    }
    text.push_str(&header);
    text.push('\n');

    let mut powers: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.power_dbm))
        .collect();
    powers.sort_by(f64::total_cmp);
    powers.dedup();

    for &power in &powers {
        write!(text, "{power}").expect("string write");
        for curve in curves {
            match curve.points.iter().find(|p| p.power_dbm == power) {
                Some(p) => write!(text, ",{}", p.se_bits_hz).expect("string write"),
                None => text.push(','),
            }
        }
        text.push('\n');
    }
    let path = dir.join("combined.csv");
    fs::write(&path, text)?;
    Ok(path)
}

fn write_summary_md(dir: &Path, curves: &[RateCurve]) -> Result<PathBuf> {
    let mut text = String::from("# Rate sweep report\n\n");
    text.push_str("| curve | model | peak SE (bits/s/Hz) | peak power (dBm) | stderr (bits) | config |\n");
    text.push_str("|---|---|---|---|---|---|\n");
    for curve in curves {
        let peak = curve.peak().expect("validated curve has points");
        writeln!(
            text,
            "| {} | {} | {:.4} | {} | {:.4} | {} |",
            curve.stem(),
            curve.provenance.model,
            peak.se_bits_hz,
            peak.power_dbm,
            peak.stderr_bits,
            curve.provenance.config_hash
        )
        .expect("string write");
    }

    if curves.len() > 1 {
        text.push_str("\n## Pairwise comparisons\n\n");
        for a in curves {
            for b in curves {
                if std::ptr::eq(a, b) {
                    continue;
                }
                let peak_a = a.peak().expect("validated");
                let peak_b = b.peak().expect("validated");
                let delta_se = peak_a.se_bits_hz - peak_b.se_bits_hz;
                match power_at_rate(a, peak_b.se_bits_hz) {
                    Some(p_a) => writeln!(
                        text,
                        "- **{}** vs **{}**: ΔSE at peaks {:+.4} bits/s/Hz; \
                         at the {} peak rate ({:.4} bits/s/Hz), {} needs {:.2} dBm \
                         vs {:.2} dBm — power gain {:+.2} dB.",
                        a.stem(),
                        b.stem(),
                        delta_se,
                        b.stem(),
                        peak_b.se_bits_hz,
                        a.stem(),
                        p_a,
                        peak_b.power_dbm,
                        peak_b.power_dbm - p_a
                    )
                    .expect("string write"),
                    None => writeln!(
                        text,
                        "- **{}** vs **{}**: ΔSE at peaks {:+.4} bits/s/Hz; \
                         the {} peak rate ({:.4} bits/s/Hz) is outside the \
                         sampled ascending branch of {}.",
                        a.stem(),
                        b.stem(),
                        delta_se,
                        b.stem(),
                        peak_b.se_bits_hz,
                        a.stem()
                    )
                    .expect("string write"),
                }
            }
        }
    }
    let path = dir.join("summary.md");
    fs::write(&path, text)?;
    Ok(path)
}

/// Emit the full report for a set of curves: one CSV per curve (plus
/// per-subcarrier CSVs), a combined comparison CSV, and a Markdown summary
/// with peak rates and pairwise power gains.  Returns the paths written.
pub fn emit_report(curves: &[RateCurve], dir: &Path) -> Result<Vec<PathBuf>> {
    if curves.is_empty() {
        return Err(CliError::Config("report needs at least one curve".into()));
    }
    for curve in curves {
        curve.validate()?;
    }
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for curve in curves {
        paths.extend(write_curve_csv(dir, curve)?);
    }
    paths.push(write_combined_csv(dir, curves)?);
    paths.push(write_summary_md(dir, curves)?);
    Ok(paths)
}
