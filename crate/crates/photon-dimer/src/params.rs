//! Physical parameters of the emitter-cavity system and unit conventions.
//!
//! Internally everything is expressed in angular frequency (rad/ns) with the
//! group velocity fixed to one, so positions and times share the ns unit.
//! Public I/O uses ordinary frequencies in GHz and delays in ps.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Convert an ordinary frequency in GHz to angular rad/ns.
pub fn ghz_to_angular(nu_ghz: f64) -> f64 {
    2.0 * PI * nu_ghz
}

/// Convert an angular frequency in rad/ns back to GHz.
pub fn angular_to_ghz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// Nanoseconds to picoseconds.
pub fn ns_to_ps(t_ns: f64) -> f64 {
    t_ns * 1e3
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ParamError {
    #[error("parameter out of domain: {0}")]
    Domain(String),
}

/// Emitter-cavity constants in angular units (rad/ns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Atom-cavity coupling g.
    pub g: f64,
    /// Cavity decay rate kappa.
    pub kappa: f64,
    /// Residual atomic decay into non-cavity modes.
    pub gamma: f64,
    /// Cavity-atom detuning omega_C - omega_QD.
    pub delta_c: f64,
}

/// Rates derived from [`SystemParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedRates {
    /// Purcell-enhanced decay rate Gamma = 4 g^2 / kappa (rad/ns).
    pub gamma_purcell: f64,
    /// Purcell factor F_P = Gamma / gamma; infinite when gamma = 0.
    pub purcell_factor: f64,
    /// beta = F_P / (F_P + 1); identically 1 when gamma = 0.
    pub beta: f64,
    /// Critical photon number 1 / (8 beta).
    pub n_crit: f64,
    /// Emitter lifetime 1 / Gamma (ns).
    pub tau_qd: f64,
}

impl SystemParams {
    pub fn new(g: f64, kappa: f64, gamma: f64, delta_c: f64) -> Result<Self, ParamError> {
        if !(g.is_finite() && kappa.is_finite() && gamma.is_finite() && delta_c.is_finite()) {
            return Err(ParamError::Domain("non-finite parameter".into()));
        }
        // g = 0 selects the bare cavity used by the classical-delay
        // baselines; derived rates are only defined for g > 0.
        if g < 0.0 {
            return Err(ParamError::Domain(format!(
                "g must be non-negative, got {g}"
            )));
        }
        if kappa <= 0.0 {
            return Err(ParamError::Domain(format!(
                "kappa must be positive, got {kappa}"
            )));
        }
        if gamma < 0.0 {
            return Err(ParamError::Domain(format!(
                "gamma must be non-negative, got {gamma}"
            )));
        }
        Ok(Self {
            g,
            kappa,
            gamma,
            delta_c,
        })
    }

    /// A bare one-sided cavity (no emitter) with the given decay rate.
    pub fn bare_cavity(kappa: f64, delta_c: f64) -> Result<Self, ParamError> {
        Self::new(0.0, kappa, 0.0, delta_c)
    }

    /// Build from ordinary frequencies in GHz. Rejects non-positive g and
    /// kappa; use [`SystemParams::bare_cavity`] for the emitter-free limit.
    pub fn from_frequencies(
        nu_g: f64,
        nu_kappa: f64,
        nu_gamma: f64,
        nu_delta_c: f64,
    ) -> Result<Self, ParamError> {
        if nu_g <= 0.0 {
            return Err(ParamError::Domain(format!(
                "g frequency must be positive, got {nu_g} GHz"
            )));
        }
        Self::new(
            ghz_to_angular(nu_g),
            ghz_to_angular(nu_kappa),
            ghz_to_angular(nu_gamma),
            ghz_to_angular(nu_delta_c),
        )
    }

    /// Purcell-enhanced decay rate Gamma = 4 g^2 / kappa.
    pub fn gamma_purcell(&self) -> f64 {
        4.0 * self.g * self.g / self.kappa
    }

    pub fn derive_rates(&self) -> Result<DerivedRates, ParamError> {
        if self.g == 0.0 {
            return Err(ParamError::Domain(
                "derived rates undefined for g = 0 (bare cavity)".into(),
            ));
        }
        let gp = self.gamma_purcell();
        let (purcell_factor, beta) = if self.gamma == 0.0 {
            (f64::INFINITY, 1.0)
        } else {
            let fp = gp / self.gamma;
            (fp, fp / (fp + 1.0))
        };
        Ok(DerivedRates {
            gamma_purcell: gp,
            purcell_factor,
            beta,
            n_crit: 1.0 / (8.0 * beta),
            tau_qd: 1.0 / gp,
        })
    }

    /// The lossless resonant cavity-QED parameter set used throughout the
    /// headline figures: g/(2pi) = 4.62 GHz, kappa/(2pi) = 20.1 GHz.
    pub fn paper_lossless() -> Self {
        Self::from_frequencies(4.62, 20.1, 0.0, 0.0).unwrap()
    }
}

/// On-disk JSON schema for a parameter file. Field names are part of the
/// CLI contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamFile {
    pub g_ghz: f64,
    pub kappa_ghz: f64,
    pub gamma_ghz: f64,
    pub delta_c_ghz: f64,
}

impl ParamFile {
    pub fn to_params(&self) -> Result<SystemParams, ParamError> {
        SystemParams::from_frequencies(self.g_ghz, self.kappa_ghz, self.gamma_ghz, self.delta_c_ghz)
    }
}
