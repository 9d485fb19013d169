//! Throwaway diagnostic: compare theta_covariance with the tent closed form.

use std::path::PathBuf;

use fibercap::models::ModelKind;
use fibercap::stats::{subcarrier_theta_covariance, theta_covariance};
use fibercap::units::dbm_to_watt;
use fibercap_cli::config::ExperimentConfig;
use fibercap_cli::sweep::load_or_build_tensor;

fn main() {
    let mut cfg = ExperimentConfig::table1(ModelKind::Mpn);
    cfg.out_dir = PathBuf::from("target/tmp/acceptance-table1");
    let params = cfg.link.to_params();
    let tensor = load_or_build_tensor(&cfg, &params, 0).unwrap();
    let plan = cfg.plan.plan_at_power(dbm_to_watt(-6.0));

    let lag_max = 750usize;
    let r = theta_covariance(&tensor, &plan, lag_max);
    let tent = subcarrier_theta_covariance(&plan, &params, 0, lag_max).unwrap();
    let r0 = r.real(0);
    println!("r0 = {:.6e}, tent0 = {:.6e}", r0, tent.real(0));
    let mut worst = (0.0f64, 0i32);
    for lag in 0..=600i32 {
        let rel = (r.real(lag) / tent.real(lag) - 1.0).abs();
        if rel > worst.0 {
            worst = (rel, lag);
        }
        if lag % 50 == 0 || (300..=360).contains(&lag) && lag % 10 == 0 {
            println!(
                "lag {lag:4}: exact {:.4e}  tent {:.4e}  rel {:+.3}  peak-rel {:+.4}",
                r.real(lag),
                tent.real(lag),
                r.real(lag) / tent.real(lag) - 1.0,
                (r.real(lag) - tent.real(lag)) / r0
            );
        }
    }
    println!("worst pointwise rel: {:.3} at lag {}", worst.0, worst.1);
    let mut worst_peak = (0.0f64, 0i32);
    for lag in 0..=600i32 {
        let rel = ((r.real(lag) - tent.real(lag)) / r0).abs();
        if rel > worst_peak.0 {
            worst_peak = (rel, lag);
        }
    }
    println!("worst peak-normalized: {:.4} at lag {}", worst_peak.0, worst_peak.1);
}
