//! Single-photon transmission coefficient, scattering phase derivatives
//! (delay, chirp, distortion), and full single-photon pulse scattering.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::params::SystemParams;
use crate::pulse::{self, PulseError, SampledWaveform};

/// Single-photon transmission coefficient at real detuning `k` (rad/ns).
///
/// The raw form has a removable pole at k = 0; both numerator and
/// denominator are multiplied by k so the coefficient is evaluated
/// algebraically at resonance. The bare cavity (g = 0) keeps the linear
/// form, for which t(0) = -1.
pub fn t1(k: f64, params: &SystemParams) -> Complex64 {
    t1_complex(Complex64::new(k, 0.0), params)
}

/// [`t1`] continued to complex wavenumber, needed for bound-state
/// eigenvalues where the photon momenta acquire imaginary parts.
pub fn t1_complex(k: Complex64, params: &SystemParams) -> Complex64 {
    let half_kappa = Complex64::new(0.0, params.kappa / 2.0);
    if params.g == 0.0 {
        let base = k - params.delta_c;
        return (base - half_kappa) / (base + half_kappa);
    }
    let d = k * k - params.delta_c * k - params.g * params.g;
    (d - half_kappa * k) / (d + half_kappa * k)
}

/// Scattering phase and its first three detuning derivatives.
#[derive(Debug, Clone, Copy)]
pub struct PhaseDerivatives {
    /// Principal-value phase at this detuning.
    pub phi: f64,
    /// Group delay d(phi)/dk (ns).
    pub d1: f64,
    /// Chirp/broadening term (ns^2).
    pub d2: f64,
    /// Distortion term (ns^3), from Richardson-extrapolated differences
    /// of the closed-form d2.
    pub d3: f64,
}

/// Closed-form group delay, valid for any cavity-atom detuning.
pub fn delay_closed_form(k: f64, params: &SystemParams) -> f64 {
    let (g, kappa, dc) = (params.g, params.kappa, params.delta_c);
    let d = k * k - dc * k - g * g;
    let q = d * d + kappa * kappa * k * k / 4.0;
    kappa * (k * k + g * g) / q
}

/// Closed-form second phase derivative (analytic derivative of
/// [`delay_closed_form`]).
pub fn chirp_closed_form(k: f64, params: &SystemParams) -> f64 {
    let (g, kappa, dc) = (params.g, params.kappa, params.delta_c);
    let d = k * k - dc * k - g * g;
    let n = k * k + g * g;
    let q = d * d + kappa * kappa * k * k / 4.0;
    let n_p = 2.0 * k;
    let q_p = 2.0 * d * (2.0 * k - dc) + kappa * kappa * k / 2.0;
    kappa * (n_p * q - n * q_p) / (q * q)
}

/// Distortion by Richardson-extrapolated central differences of the
/// closed-form chirp; step h = Gamma/200.
pub fn distortion_numeric(k: f64, params: &SystemParams) -> f64 {
    let h = params.gamma_purcell() / 200.0;
    let diff = |h: f64| {
        (chirp_closed_form(k + h, params) - chirp_closed_form(k - h, params)) / (2.0 * h)
    };
    let d_h = diff(h);
    let d_h2 = diff(h / 2.0);
    (4.0 * d_h2 - d_h) / 3.0
}

pub fn phase_derivatives(k: f64, params: &SystemParams) -> PhaseDerivatives {
    PhaseDerivatives {
        phi: t1(k, params).arg(),
        d1: delay_closed_form(k, params),
        d2: chirp_closed_form(k, params),
        d3: distortion_numeric(k, params),
    }
}

/// Resonant distortion in the lossless closed form, -32 (1 - 3 Gamma/kappa) / Gamma^3.
pub fn distortion_resonant_closed_form(params: &SystemParams) -> f64 {
    let gp = params.gamma_purcell();
    -32.0 * (1.0 - 3.0 * gp / params.kappa) / (gp * gp * gp)
}

/// Unwrap a sequence of transmission coefficients into a continuous phase
/// by accumulating the argument of successive ratios.
pub fn unwrap_phase(ts: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(ts.len());
    let mut phi = ts[0].arg();
    out.push(phi);
    for pair in ts.windows(2) {
        phi += (pair[1] / pair[0]).arg();
        out.push(phi);
    }
    out
}

/// Scatter a single-photon pulse: multiply its spectrum pointwise by t1 and
/// transform back. Errors if the scattered tail reaches the grid boundary.
pub fn scatter_single(
    pulse_in: &SampledWaveform,
    params: &SystemParams,
) -> Result<SampledWaveform, PulseError> {
    let mut spec = pulse::to_spectrum(pulse_in);
    for (m, a) in spec.amps.iter_mut().enumerate() {
        *a *= t1(spec.grid.x(m), params);
    }
    let out = pulse::to_time(&spec);
    let peak = out.amps.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let boundary = out.amps[0]
        .norm()
        .max(out.amps[out.amps.len() - 1].norm());
    if boundary > 1e-6 * peak {
        return Err(PulseError::Window(format!(
            "scattered tail at boundary: {:.2e} of peak",
            boundary / peak
        )));
    }
    Ok(out)
}

/// One scattered profile per detuning.
#[derive(Debug, Clone)]
pub struct ScanPoint {
    /// Laser detuning (rad/ns).
    pub delta_l: f64,
    pub output: SampledWaveform,
    /// Peak delay against the unscattered reference (ns).
    pub peak_delay: f64,
}

/// Scatter the same pulse shape across a list of laser detunings.
pub fn dispersion_scan(
    spec: &pulse::PulseSpec,
    params: &SystemParams,
    detunings: &[f64],
) -> Result<Vec<ScanPoint>, PulseError> {
    let grid = pulse::default_grid(spec, params.gamma_purcell(), 4096);
    let results: Vec<Result<ScanPoint, PulseError>> = detunings
        .par_iter()
        .map(|&delta_l| {
            let pspec = pulse::PulseSpec::new(spec.sigma, delta_l, spec.mean_photons);
            let input = pulse::make_gaussian(&pspec, &grid)?;
            let output = scatter_single(&input, params)?;
            let peak_delay = pulse::peak_delay(&output, 0.0)?;
            Ok(ScanPoint {
                delta_l,
                output,
                peak_delay,
            })
        })
        .collect();
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ghz_to_angular, ns_to_ps};
    use crate::pulse::{default_grid, make_gaussian, peak_delay, PulseSpec};

    fn paper() -> SystemParams {
        SystemParams::paper_lossless()
    }

    #[test]
    fn bare_cavity_resonance_has_pi_phase() {
        let p = SystemParams::bare_cavity(1.0, 0.0).unwrap();
        let t = t1(0.0, &p);
        assert!((t - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn coupled_resonance_has_unit_transmission() {
        let t = t1(0.0, &paper());
        assert!((t - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn unitary_for_random_detunings() {
        let p = paper();
        let mut state = 0x9e3779b97f4a7c15u64;
        for _ in 0..1000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let k = ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 500.0;
            assert!((t1(k, &p).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn resonant_derivatives() {
        let p = paper();
        let gp = p.gamma_purcell();
        let d = phase_derivatives(0.0, &p);
        assert!((d.d1 - 4.0 / gp).abs() / (4.0 / gp) < 1e-12);
        assert!(d.d2.abs() < 1e-12 / gp);
        let d3_exact = distortion_resonant_closed_form(&p);
        assert!(
            (d.d3 - d3_exact).abs() / d3_exact.abs() < 1e-6,
            "d3 = {}, exact {}",
            d.d3,
            d3_exact
        );
    }

    #[test]
    fn distortion_vanishes_at_kappa_three_gamma() {
        // pick g so that kappa = 3 Gamma = 12 g^2 / kappa
        let kappa: f64 = 100.0;
        let g = (kappa * kappa / 12.0).sqrt();
        let p = SystemParams::new(g, kappa, 0.0, 0.0).unwrap();
        let gp = p.gamma_purcell();
        assert!((p.kappa - 3.0 * gp).abs() < 1e-9);
        let d3 = distortion_numeric(0.0, &p);
        assert!(
            d3.abs() < 1e-6 * 32.0 / (gp * gp * gp),
            "d3 = {d3:.3e} at kappa = 3 Gamma"
        );
    }

    #[test]
    fn distortion_sign_flips_across_kappa_three_gamma() {
        // d3 < 0 for kappa > 3 Gamma
        let p = paper(); // kappa/Gamma ~ 4.7
        assert!(distortion_numeric(0.0, &p) < 0.0);
        // and > 0 below the crossover
        let kappa: f64 = 100.0;
        let g = (kappa * kappa / 8.0).sqrt(); // kappa = 2 Gamma
        let p2 = SystemParams::new(g, kappa, 0.0, 0.0).unwrap();
        assert!(distortion_numeric(0.0, &p2) > 0.0);
    }

    #[test]
    fn closed_forms_match_finite_differences_of_phase() {
        let p = paper();
        let gp = p.gamma_purcell();
        let h = gp / 2000.0;
        let k = gp / 2.0;
        // branch-consistent finite differences of the phase
        let dphi = |a: f64, b: f64| (t1(a, &p) / t1(b, &p)).arg();
        let d1_fd = dphi(k + h, k - h) / (2.0 * h);
        let d1 = delay_closed_form(k, &p);
        assert!((d1 - d1_fd).abs() / d1.abs() < 1e-7, "{d1} vs {d1_fd}");
        let d2_fd = (dphi(k + h, k) - dphi(k, k - h)) / (h * h);
        let d2 = chirp_closed_form(k, &p);
        assert!((d2 - d2_fd).abs() / d2.abs() < 1e-6, "{d2} vs {d2_fd}");
    }

    #[test]
    fn long_pulse_delay_is_four_over_gamma() {
        let p = paper();
        let gp = p.gamma_purcell();
        let spec = PulseSpec::new(26.0 / gp, 0.0, 0.01);
        let grid = default_grid(&spec, gp, 4096);
        let input = make_gaussian(&spec, &grid).unwrap();
        let out = scatter_single(&input, &p).unwrap();
        let delay_ps = ns_to_ps(peak_delay(&out, 0.0).unwrap());
        assert!(
            (delay_ps - 150.0).abs() < 1.0,
            "delay = {delay_ps} ps, expected 150"
        );
        // energy conservation
        assert!((out.l2_norm_sq() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bare_cavity_delay_preserves_shape() {
        let kappa = ghz_to_angular(20.6);
        let mut p = paper();
        p.g = 0.0;
        p.kappa = kappa;
        let spec = PulseSpec::new(0.3, 0.0, 0.01);
        let grid = crate::pulse::Grid1D::centered(4096, 12.0);
        let input = make_gaussian(&spec, &grid).unwrap();
        let out = scatter_single(&input, &p).unwrap();
        let delay_ps = ns_to_ps(peak_delay(&out, 0.0).unwrap());
        assert!((delay_ps - 30.9).abs() < 0.5, "delay = {delay_ps} ps");
        let fit = crate::pulse::gaussian_width(&out).unwrap();
        assert!(fit.fit_residual < 1e-4, "residual = {}", fit.fit_residual);
    }

    #[test]
    fn far_detuned_pulse_is_unchanged() {
        let p = paper();
        let gp = p.gamma_purcell();
        // 10 kappa off resonance but still well inside the grid Nyquist band
        let spec = PulseSpec::new(2.2 / gp, 10.0 * p.kappa, 0.01);
        let grid = default_grid(&spec, gp, 4096);
        let input = make_gaussian(&spec, &grid).unwrap();
        let out = scatter_single(&input, &p).unwrap();
        let delay_ps = ns_to_ps(peak_delay(&out, 0.0).unwrap());
        assert!(delay_ps.abs() < 1.0, "delay = {delay_ps} ps");
    }

    #[test]
    fn short_pulse_output_is_non_gaussian() {
        let p = paper();
        let gp = p.gamma_purcell();
        let spec = PulseSpec::new(1.3 / gp, 0.0, 0.01);
        let grid = default_grid(&spec, gp, 4096);
        let input = make_gaussian(&spec, &grid).unwrap();
        let out = scatter_single(&input, &p).unwrap();
        match crate::pulse::gaussian_width(&out) {
            Ok(fit) => assert!(
                fit.fit_residual > 1e-3,
                "short-pulse residual unexpectedly small: {}",
                fit.fit_residual
            ),
            Err(_) => {} // non-convergence also counts as non-Gaussian
        }
    }

    #[test]
    fn detuned_cavity_scan_is_asymmetric_and_symmetric_at_zero() {
        let mut p = paper();
        let gp = p.gamma_purcell();
        let spec = PulseSpec::new(2.2 / gp, 0.0, 0.01);
        let detunings = [-gp, gp];
        // symmetric when Delta_C = 0
        let scan0 = dispersion_scan(&spec, &p, &detunings).unwrap();
        assert!((scan0[0].peak_delay - scan0[1].peak_delay).abs() < 1e-5);
        // asymmetric when the cavity is detuned by 1 GHz
        p.delta_c = ghz_to_angular(1.0);
        let scan1 = dispersion_scan(&spec, &p, &detunings).unwrap();
        assert!(
            (scan1[0].peak_delay - scan1[1].peak_delay).abs() > 1e-3,
            "detuned scan should be asymmetric: {} vs {}",
            scan1[0].peak_delay,
            scan1[1].peak_delay
        );
    }

    #[test]
    fn cw_limit_matches_closed_form_delay() {
        let p = paper();
        let gp = p.gamma_purcell();
        let spec = PulseSpec::new(26.0 / gp, 0.0, 0.01);
        for delta in [0.0, gp / 2.0, gp] {
            let scan = dispersion_scan(&spec, &p, &[delta]).unwrap();
            let cw = delay_closed_form(delta, &p);
            assert!(
                (scan[0].peak_delay - cw).abs() / cw < 0.02,
                "delta = {delta}: {} vs {}",
                scan[0].peak_delay,
                cw
            );
        }
    }
}
