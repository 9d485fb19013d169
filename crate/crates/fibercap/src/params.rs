//! Link-level physical parameters.

use serde::{Deserialize, Serialize};

use crate::units;

/// Amplification scheme along the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Amplification {
    /// Ideal distributed amplification: power profile f(z) ≡ 1, noise added
    /// continuously along the fiber.
    Ideal,
    /// Lumped amplifiers at span ends: f(z) decays as exp(-αz) within each
    /// span and is reset to 1 by each amplifier.
    Lumped,
}

/// Fiber and amplifier parameters of one link, in base SI units.
///
/// Use [`PhysicalParams::from_engineering`] to build from the customary
/// engineering units, or [`PhysicalParams::reference_link`] for the standard
/// single-mode-fiber benchmark link used throughout the tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Attenuation, nepers per meter.
    pub alpha: f64,
    /// Group-velocity dispersion β₂, s²/m.
    pub beta2: f64,
    /// Nonlinear (Kerr) coefficient γ, 1/(W·m).
    pub gamma: f64,
    /// Spontaneous-emission factor of the amplification.
    pub eta: f64,
    /// Total link length, m.
    pub link_length: f64,
    /// Amplifier spacing for lumped amplification, m.
    pub span_length: f64,
    /// Amplification scheme.
    pub amplification: Amplification,
    /// Center wavelength of the WDM comb, m.
    pub center_wavelength: f64,
}

impl PhysicalParams {
    /// Build from engineering units: dB/km, ps²/km, 1/(W·km), km, km, nm.
    #[allow(clippy::too_many_arguments)]
    pub fn from_engineering(
        alpha_db_per_km: f64,
        beta2_ps2_per_km: f64,
        gamma_per_w_km: f64,
        eta: f64,
        link_length_km: f64,
        span_length_km: f64,
        amplification: Amplification,
        center_wavelength_nm: f64,
    ) -> Self {
        Self {
            alpha: units::db_per_km_to_neper_per_m(alpha_db_per_km),
            beta2: units::ps2_per_km_to_s2_per_m(beta2_ps2_per_km),
            gamma: units::per_w_km_to_per_w_m(gamma_per_w_km),
            eta,
            link_length: units::km_to_m(link_length_km),
            span_length: units::km_to_m(span_length_km),
            amplification,
            center_wavelength: units::nm_to_m(center_wavelength_nm),
        }
    }

    /// Standard benchmark link: 1000 km of single-mode fiber (0.2 dB/km,
    /// β₂ = -21.7 ps²/km, γ = 1.27 1/(W·km)) with ideal distributed
    /// amplification (η = 1) at 1550 nm.
    pub fn reference_link() -> Self {
        Self::from_engineering(0.2, -21.7, 1.27, 1.0, 1000.0, 100.0, Amplification::Ideal, 1550.0)
    }

    /// Center (carrier) frequency, Hz.
    pub fn center_frequency(&self) -> f64 {
        units::SPEED_OF_LIGHT / self.center_wavelength
    }

    /// One-sided spectral density of the amplified-spontaneous-emission noise
    /// accumulated over the whole link, W/Hz: α·L·h·ν·η.
    pub fn ase_spectral_density(&self) -> f64 {
        self.alpha * self.link_length * units::PLANCK * self.center_frequency() * self.eta
    }

    /// Normalized power profile f(z) of the amplification scheme.
    pub fn power_profile(&self, z: f64) -> f64 {
        match self.amplification {
            Amplification::Ideal => 1.0,
            Amplification::Lumped => {
                let in_span = z - self.span_length * (z / self.span_length).floor();
                (-self.alpha * in_span).exp()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_link_si_values() {
        let p = PhysicalParams::reference_link();
        assert!((p.alpha - 4.60517e-5).abs() < 1e-9);
        assert!((p.beta2 + 2.17e-26).abs() < 1e-38);
        assert!((p.gamma - 1.27e-3).abs() < 1e-15);
        assert!((p.link_length - 1.0e6).abs() < 1e-6);
        assert_eq!(p.amplification, Amplification::Ideal);
    }

    #[test]
    fn ase_density_of_reference_link() {
        // α_lin·L·h·ν·η = 4.60517e-5 · 1e6 · 6.62607e-34 · 193.41 THz ≈ 5.902e-18 W/Hz.
        let p = PhysicalParams::reference_link();
        let n_ase = p.ase_spectral_density();
        assert!(
            (n_ase - 5.902e-18).abs() / 5.902e-18 < 1e-3,
            "N_ASE = {n_ase:.6e}"
        );
    }

    #[test]
    fn power_profile_ideal_and_lumped() {
        let mut p = PhysicalParams::reference_link();
        assert_eq!(p.power_profile(123.4e3), 1.0);

        p.amplification = Amplification::Lumped;
        // Start of a span: unit power. Mid-span: exp(-α·z_in_span).
        assert!((p.power_profile(0.0) - 1.0).abs() < 1e-12);
        assert!((p.power_profile(200e3) - 1.0).abs() < 1e-9);
        let mid = p.power_profile(250e3);
        let expect = (-p.alpha * 50e3).exp();
        assert!((mid - expect).abs() < 1e-12);
        // 0.2 dB/km over 50 km is 10 dB.
        assert!((10.0 * mid.log10() + 10.0).abs() < 1e-9);
    }
}
