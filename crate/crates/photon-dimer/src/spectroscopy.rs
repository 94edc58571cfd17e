//! Input-output spectroscopy of the two-polarization emitter-cavity system.
//!
//! Unlike the scattering-theory modules this one keeps the non-cavity decay
//! gamma and both linearly polarised cavity modes, so it reproduces the CW
//! reflection maps measured in transmission (cross-polarized) and
//! back-reflection (co-polarized) configurations, the classical cavity
//! Wigner delay, the phenomenological saturation law, and the Lorentzian
//! line-fitting used to extract linewidths.

use num_complex::Complex64;

use crate::optim;
use crate::params::{angular_to_ghz, ghz_to_angular, ns_to_ps};

#[derive(Debug, thiserror::Error)]
pub enum SpectroscopyError {
    #[error("invalid parameter: {0}")]
    Domain(String),
    #[error("line fit did not converge (residual {residual:.3e})")]
    Fit { residual: f64 },
    #[error(transparent)]
    Optim(#[from] optim::OptimError),
}

/// Two orthogonally polarised cavity modes, both decaying at kappa, each
/// coupled to the same two-level transition. Rates in angular rad/ns,
/// detunings relative to the emitter.
#[derive(Debug, Clone, Copy)]
pub struct PolarizedCavityParams {
    pub delta_h: f64,
    pub delta_v: f64,
    pub g_h: f64,
    pub g_v: f64,
    pub kappa: f64,
    pub gamma: f64,
}

impl PolarizedCavityParams {
    pub fn new(
        delta_h: f64,
        delta_v: f64,
        g_h: f64,
        g_v: f64,
        kappa: f64,
        gamma: f64,
    ) -> Result<Self, SpectroscopyError> {
        if !(kappa > 0.0) {
            return Err(SpectroscopyError::Domain(format!("kappa = {kappa}")));
        }
        if g_h < 0.0 || g_v < 0.0 || gamma < 0.0 {
            return Err(SpectroscopyError::Domain(
                "couplings and gamma must be non-negative".into(),
            ));
        }
        Ok(Self {
            delta_h,
            delta_v,
            g_h,
            g_v,
            kappa,
            gamma,
        })
    }

    /// Purcell-enhanced decay rate into the H mode, 4 g_H^2 / kappa.
    pub fn gamma_h(&self) -> f64 {
        4.0 * self.g_h * self.g_h / self.kappa
    }

    pub fn gamma_v(&self) -> f64 {
        4.0 * self.g_v * self.g_v / self.kappa
    }

    /// Measured device: g_H/2pi = 4.62 GHz, g_V/2pi = 2.55 GHz,
    /// kappa/2pi = 20.6 GHz, gamma/2pi = 0.30 GHz, modes split by
    /// 58.8 GHz and placed symmetrically about the emitter.
    pub fn device() -> Self {
        let split = ghz_to_angular(58.8);
        Self::new(
            -split / 2.0,
            split / 2.0,
            ghz_to_angular(4.62),
            ghz_to_angular(2.55),
            ghz_to_angular(20.6),
            ghz_to_angular(0.30),
        )
        .unwrap()
    }
}

/// Input Jones coefficients and the polarization the detector projects on.
#[derive(Debug, Clone, Copy)]
pub struct PolarizationState {
    pub alpha_h: Complex64,
    pub alpha_v: Complex64,
    pub epsilon_h: Complex64,
    pub epsilon_v: Complex64,
}

impl PolarizationState {
    /// Both Jones vectors are normalized on construction.
    pub fn new(
        alpha_h: Complex64,
        alpha_v: Complex64,
        epsilon_h: Complex64,
        epsilon_v: Complex64,
    ) -> Result<Self, SpectroscopyError> {
        let na = (alpha_h.norm_sqr() + alpha_v.norm_sqr()).sqrt();
        let ne = (epsilon_h.norm_sqr() + epsilon_v.norm_sqr()).sqrt();
        if na == 0.0 || ne == 0.0 || !na.is_finite() || !ne.is_finite() {
            return Err(SpectroscopyError::Domain(
                "polarization vectors must be nonzero and finite".into(),
            ));
        }
        Ok(Self {
            alpha_h: alpha_h / na,
            alpha_v: alpha_v / na,
            epsilon_h: epsilon_h / ne,
            epsilon_v: epsilon_v / ne,
        })
    }

    /// Transmission configuration: diagonal in, anti-diagonal out.
    pub fn cross_polarized() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            alpha_h: Complex64::new(s, 0.0),
            alpha_v: Complex64::new(s, 0.0),
            epsilon_h: Complex64::new(s, 0.0),
            epsilon_v: Complex64::new(-s, 0.0),
        }
    }

    /// Back-reflection configuration: in and out aligned to the H mode.
    pub fn co_polarized_h() -> Self {
        Self {
            alpha_h: Complex64::new(1.0, 0.0),
            alpha_v: Complex64::new(0.0, 0.0),
            epsilon_h: Complex64::new(1.0, 0.0),
            epsilon_v: Complex64::new(0.0, 0.0),
        }
    }
}

/// Empty-cavity transmission of one polarised mode,
/// 1 / (1 + 2i (Delta_mode - Delta_L) / kappa).
fn t_mode(delta_mode: f64, delta_l: f64, kappa: f64) -> Complex64 {
    1.0 / (Complex64::new(1.0, 2.0 * (delta_mode - delta_l) / kappa))
}

/// CW reflected-field amplitude of the polarized emitter-cavity system at
/// laser detuning `delta_l` (rad/ns from the emitter), projected onto the
/// output polarization.
pub fn reflection_amplitude(
    delta_l: f64,
    pol: &PolarizationState,
    cav: &PolarizedCavityParams,
) -> Complex64 {
    let th = t_mode(cav.delta_h, delta_l, cav.kappa);
    let tv = t_mode(cav.delta_v, delta_l, cav.kappa);
    let (gh, gv) = (cav.gamma_h(), cav.gamma_v());
    let (emit_h, emit_v, cross) = if gh == 0.0 && gv == 0.0 {
        // decoupled emitter: drop its terms rather than divide 0/0
        let zero = Complex64::new(0.0, 0.0);
        (zero, zero, zero)
    } else {
        let den = th * gh + tv * gv + Complex64::new(cav.gamma, -2.0 * delta_l);
        (
            2.0 * th * th * gh / den,
            2.0 * tv * tv * gv / den,
            2.0 * th * gh.sqrt() * tv * gv.sqrt() / den,
        )
    };
    let out_h = pol.alpha_h * (1.0 - 2.0 * th + emit_h) + pol.alpha_v * cross;
    let out_v = pol.alpha_h * cross + pol.alpha_v * (1.0 - 2.0 * tv + emit_v);
    pol.epsilon_h * out_h + pol.epsilon_v * out_v
}

/// Reflected intensity |amplitude|^2 over a scan of laser detunings.
pub fn reflection_scan(
    detunings: &[f64],
    pol: &PolarizationState,
    cav: &PolarizedCavityParams,
) -> Vec<f64> {
    detunings
        .iter()
        .map(|&d| reflection_amplitude(d, pol, cav).norm_sqr())
        .collect()
}

/// Classical Wigner delay of a one-sided cavity in picoseconds,
/// (4/kappa) / (1 + 4 ((omega_L - omega_C)/kappa)^2). Frequencies in
/// rad/ns.
pub fn cavity_wigner_delay(omega_l: f64, omega_c: f64, kappa: f64) -> f64 {
    assert!(kappa > 0.0);
    let x = (omega_l - omega_c) / kappa;
    ns_to_ps(4.0 / kappa / (1.0 + 4.0 * x * x))
}

/// Phenomenological emitter-saturation law for the peak delay,
/// Delta tau(n) / Delta tau(0) = 1 - (1 - r_inf) (n/n_c) / (1 + n/n_c)
/// with r_inf = Delta tau_inf / Delta tau_0. Fit-motivated, not derived.
pub fn saturation_delay(n_bar: f64, n_crit: f64, d_tau_0: f64, d_tau_inf: f64) -> f64 {
    assert!(n_bar >= 0.0 && n_crit > 0.0);
    let x = n_bar / n_crit;
    1.0 - (1.0 - d_tau_inf / d_tau_0) * x / (1.0 + x)
}

/// One fitted spectral line. Center and FWHM share the units of the scan
/// abscissa (GHz in the file interfaces).
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub residual: f64,
}

fn lorentz(amp: f64, center: f64, fwhm: f64, x: f64) -> f64 {
    let u = 2.0 * (x - center) / fwhm;
    amp / (1.0 + u * u)
}

fn check_scan(xs: &[f64], ys: &[f64]) -> Result<(), SpectroscopyError> {
    if xs.len() != ys.len() || xs.len() < 8 {
        return Err(SpectroscopyError::Domain(format!(
            "need at least 8 paired samples, got {}/{}",
            xs.len(),
            ys.len()
        )));
    }
    Ok(())
}

/// Fit a single Lorentzian line to an intensity scan. Seeded from the peak
/// sample and its half-maximum width.
pub fn fit_lorentzian(xs: &[f64], ys: &[f64]) -> Result<LineFit, SpectroscopyError> {
    check_scan(xs, ys)?;
    let peak = (0..ys.len()).max_by(|&a, &b| ys[a].total_cmp(&ys[b])).unwrap();
    let half = ys[peak] / 2.0;
    let right = (peak..ys.len()).find(|&i| ys[i] < half).unwrap_or(ys.len() - 1);
    let left = (0..=peak).rev().find(|&i| ys[i] < half).unwrap_or(0);
    let width = (xs[right] - xs[left]).abs().max(1e-6);
    let model = |p: &[f64], x: f64| lorentz(p[0], p[1], p[2].abs(), x);
    let fit = optim::least_squares(model, xs, ys, &[ys[peak], xs[peak], width], 400)?;
    if fit.residual > 0.2 {
        return Err(SpectroscopyError::Fit {
            residual: fit.residual,
        });
    }
    Ok(LineFit {
        amplitude: fit.params[0],
        center: fit.params[1],
        fwhm: fit.params[2].abs(),
        residual: fit.residual,
    })
}

/// Fit a sum of two Lorentzian lines; the two returned lines are ordered
/// by center. Seeded from the global peak and the strongest sample away
/// from it.
pub fn fit_double_lorentzian(
    xs: &[f64],
    ys: &[f64],
) -> Result<(LineFit, LineFit), SpectroscopyError> {
    check_scan(xs, ys)?;
    let peak = (0..ys.len()).max_by(|&a, &b| ys[a].total_cmp(&ys[b])).unwrap();
    let span = xs[xs.len() - 1] - xs[0];
    let exclusion = span.abs() / 6.0;
    let second = (0..ys.len())
        .filter(|&i| (xs[i] - xs[peak]).abs() > exclusion)
        .max_by(|&a, &b| ys[a].total_cmp(&ys[b]))
        .ok_or_else(|| SpectroscopyError::Domain("scan spans a single line".into()))?;
    let width = span.abs() / 12.0;
    let model = |p: &[f64], x: f64| {
        lorentz(p[0], p[1], p[2].abs(), x) + lorentz(p[3], p[4], p[5].abs(), x)
    };
    let seed = [ys[peak], xs[peak], width, ys[second], xs[second], width];
    let fit = optim::least_squares(model, xs, ys, &seed, 600)?;
    if fit.residual > 0.2 {
        return Err(SpectroscopyError::Fit {
            residual: fit.residual,
        });
    }
    let mut lines = [
        LineFit {
            amplitude: fit.params[0],
            center: fit.params[1],
            fwhm: fit.params[2].abs(),
            residual: fit.residual,
        },
        LineFit {
            amplitude: fit.params[3],
            center: fit.params[4],
            fwhm: fit.params[5].abs(),
            residual: fit.residual,
        },
    ];
    if lines[0].center > lines[1].center {
        lines.swap(0, 1);
    }
    Ok((lines[0], lines[1]))
}

/// Extract the linewidth of the co-polarized bare-cavity dip/peak in GHz
/// from a scan given in rad/ns.
pub fn scan_detunings_ghz(detunings: &[f64]) -> Vec<f64> {
    detunings.iter().map(|&d| angular_to_ghz(d)).collect()
}
