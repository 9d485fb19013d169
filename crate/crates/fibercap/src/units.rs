//! Physical constants and unit conversions.
//!
//! Everything downstream works in base SI units; these helpers convert the
//! engineering units customary in fiber-optics configuration tables
//! (dBm, dB/km, ps²/km, 1/W/km, nm) at the boundary.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Convert dBm to watts.
pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Convert watts to dBm.
pub fn watt_to_dbm(watt: f64) -> f64 {
    10.0 * watt.log10() + 30.0
}

/// Mean symbol energy (J) of a signal of average power `watt` at symbol
/// period `symbol_period` (s).
pub fn watt_to_energy(watt: f64, symbol_period: f64) -> f64 {
    watt * symbol_period
}

/// Convert a fiber loss coefficient from dB/km to nepers per meter.
pub fn db_per_km_to_neper_per_m(db_per_km: f64) -> f64 {
    db_per_km * (10f64.ln() / 10.0) / 1e3
}

/// Convert group-velocity dispersion from ps²/km to s²/m.
pub fn ps2_per_km_to_s2_per_m(ps2_per_km: f64) -> f64 {
    ps2_per_km * 1e-24 / 1e3
}

/// Convert a nonlinear coefficient from 1/(W·km) to 1/(W·m).
pub fn per_w_km_to_per_w_m(per_w_km: f64) -> f64 {
    per_w_km / 1e3
}

/// Convert kilometers to meters.
pub fn km_to_m(km: f64) -> f64 {
    km * 1e3
}

/// Convert nanometers to meters.
pub fn nm_to_m(nm: f64) -> f64 {
    nm * 1e-9
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_round_trip_and_anchors() {
        // -10 dBm is 100 µW; 0 dBm is 1 mW.
        assert!((dbm_to_watt(-10.0) - 1.0e-4).abs() < 1e-19);
        assert!((dbm_to_watt(0.0) - 1.0e-3).abs() < 1e-18);
        for dbm in [-13.0, -6.0, 0.0, 3.0] {
            assert!((watt_to_dbm(dbm_to_watt(dbm)) - dbm).abs() < 1e-12);
        }
    }

    #[test]
    fn symbol_energy_at_minus_six_dbm() {
        // -6 dBm at a 20 ps symbol period carries ~5.02 fJ per symbol.
        let e = watt_to_energy(dbm_to_watt(-6.0), 20e-12);
        assert!((e - 5.0238e-15).abs() / 5.0238e-15 < 1e-4);
    }

    #[test]
    fn loss_conversion() {
        // 0.2 dB/km = 0.2·ln(10)/10 nepers/km.
        let a = db_per_km_to_neper_per_m(0.2);
        assert!((a - 4.605_170_185_99e-5).abs() < 1e-15);
    }

    #[test]
    fn dispersion_and_nonlinearity_conversion() {
        assert!((ps2_per_km_to_s2_per_m(-21.7) + 2.17e-26).abs() < 1e-38);
        assert!((per_w_km_to_per_w_m(1.27) - 1.27e-3).abs() < 1e-18);
    }
}
