//! Discretized complex waveforms, Gaussian input pulses, spectral transforms,
//! and pulse-shape diagnostics.
//!
//! Waveforms live on a centered uniform grid whose axis is detector arrival
//! time in ns (v_g = 1). A pulse with central detuning `k0` carries the
//! phase e^{-i k0 t}, so its spectrum peaks at +k0; the spectral transform
//! uses the kernel e^{+i k t} and its inverse e^{-i k t}, which makes a
//! positive scattering-phase slope come out as a positive arrival delay.

use num_complex::Complex64;
use rustfft::{num_complex::Complex, FftPlanner};
use std::f64::consts::PI;

use crate::optim::{self, OptimError};

#[derive(Debug, thiserror::Error)]
pub enum PulseError {
    #[error("grid window too small: {0}")]
    Window(String),
    #[error("intensity maximum sits on the grid boundary")]
    PeakAtBoundary,
    #[error("gaussian fit failed: {0}")]
    Fit(#[from] OptimError),
    #[error("gaussian fit did not converge (residual {0:.3e})")]
    FitResidual(f64),
}

/// Uniform sampling grid, centered on zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub n_points: usize,
    pub spacing: f64,
    pub origin: f64,
}

impl Grid1D {
    /// A centered grid with `n` points (power of two, >= 16) and the given
    /// total window length.
    pub fn centered(n_points: usize, window: f64) -> Self {
        assert!(n_points >= 16 && n_points.is_power_of_two());
        assert!(window > 0.0);
        let spacing = window / n_points as f64;
        Self {
            n_points,
            spacing,
            origin: -(n_points as f64 / 2.0) * spacing,
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.spacing
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.x(i))
    }

    pub fn window(&self) -> f64 {
        self.n_points as f64 * self.spacing
    }

    /// The conjugate (spectral) grid of the same point count.
    pub fn conjugate(&self) -> Grid1D {
        let dk = 2.0 * PI / (self.n_points as f64 * self.spacing);
        Grid1D {
            n_points: self.n_points,
            spacing: dk,
            origin: -(self.n_points as f64 / 2.0) * dk,
        }
    }
}

/// A complex waveform sampled on a [`Grid1D`].
#[derive(Debug, Clone)]
pub struct SampledWaveform {
    pub grid: Grid1D,
    pub amps: Vec<Complex64>,
}

impl SampledWaveform {
    pub fn l2_norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.spacing
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Gaussian input pulse parameters.
#[derive(Debug, Clone, Copy)]
pub struct PulseSpec {
    /// Field-amplitude Gaussian width sigma (ns). The intensity FWHM is
    /// 2 sqrt(ln 2) sigma.
    pub sigma: f64,
    /// Central detuning Delta_L (rad/ns; equals the wavenumber since v_g=1).
    pub k0: f64,
    /// Mean photon number of the coherent pulse.
    pub mean_photons: f64,
}

impl PulseSpec {
    pub fn new(sigma: f64, k0: f64, mean_photons: f64) -> Self {
        assert!(sigma > 0.0 && mean_photons >= 0.0);
        Self {
            sigma,
            k0,
            mean_photons,
        }
    }

    /// Intensity FWHM in ns.
    pub fn fwhm(&self) -> f64 {
        2.0 * (2.0_f64.ln()).sqrt() * self.sigma
    }

    /// Analytic unit-norm spectrum of the pulse, peaked at k0.
    pub fn spectrum_amplitude(&self, k: f64) -> f64 {
        let d = (k - self.k0) * self.sigma;
        self.sigma.sqrt() * PI.powf(-0.25) * (-0.5 * d * d).exp()
    }
}

/// Default grid sized so that the 1/Gamma exponential tails of a scattered
/// pulse stay well below the boundary-amplitude threshold.
pub fn default_grid(spec: &PulseSpec, gamma_purcell: f64, n_points: usize) -> Grid1D {
    let half = 8.0 * spec.sigma + 35.0 / gamma_purcell;
    Grid1D::centered(n_points, 2.0 * half)
}

/// Sample the normalized Gaussian pulse on `grid`.
pub fn make_gaussian(spec: &PulseSpec, grid: &Grid1D) -> Result<SampledWaveform, PulseError> {
    let half = grid.window() / 2.0;
    if half < 6.0 * spec.sigma {
        return Err(PulseError::Window(format!(
            "window half-width {half:.3} ns < 6 sigma = {:.3} ns",
            6.0 * spec.sigma
        )));
    }
    let norm = (spec.sigma * PI.sqrt()).powf(-0.5);
    let amps: Vec<Complex64> = grid
        .points()
        .map(|t| {
            let env = norm * (-t * t / (2.0 * spec.sigma * spec.sigma)).exp();
            Complex64::from_polar(env, -spec.k0 * t)
        })
        .collect();
    let boundary = amps[0].norm().max(amps[grid.n_points - 1].norm());
    let peak = amps.iter().map(|a| a.norm()).fold(0.0, f64::max);
    if boundary > 1e-6 * peak {
        return Err(PulseError::Window(format!(
            "boundary amplitude {:.2e} of peak",
            boundary / peak
        )));
    }
    // discretization correction to unit L2 norm
    let mut w = SampledWaveform {
        grid: *grid,
        amps,
    };
    let n = w.l2_norm_sq().sqrt();
    for a in &mut w.amps {
        *a /= n;
    }
    Ok(w)
}

fn fft_in_place(amps: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(amps.len())
    } else {
        planner.plan_fft_forward(amps.len())
    };
    // rustfft Complex is the same layout as num_complex::Complex64
    let buf: &mut [Complex<f64>] = amps;
    fft.process(buf);
}

/// Unitary transform to the spectral domain:
/// G(k) = (1/sqrt(2 pi)) * integral f(t) e^{+i k t} dt.
pub fn to_spectrum(w: &SampledWaveform) -> SampledWaveform {
    let kgrid = w.grid.conjugate();
    let mut buf: Vec<Complex64> = w
        .amps
        .iter()
        .enumerate()
        .map(|(i, a)| if i % 2 == 0 { *a } else { -*a })
        .collect();
    fft_in_place(&mut buf, true);
    let scale = w.grid.spacing / (2.0 * PI).sqrt();
    let x0 = w.grid.origin;
    let amps: Vec<Complex64> = buf
        .iter()
        .enumerate()
        .map(|(m, v)| v * scale * Complex64::from_polar(1.0, kgrid.x(m) * x0))
        .collect();
    SampledWaveform {
        grid: kgrid,
        amps,
    }
}

/// Inverse of [`to_spectrum`]:
/// f(t) = (1/sqrt(2 pi)) * integral G(k) e^{-i k t} dk.
pub fn to_time(w: &SampledWaveform) -> SampledWaveform {
    let tgrid = w.grid.conjugate();
    let x0 = tgrid.origin;
    let dk = w.grid.spacing;
    let mut buf: Vec<Complex64> = w
        .amps
        .iter()
        .enumerate()
        .map(|(m, a)| a * Complex64::from_polar(1.0, -(m as f64) * dk * x0))
        .collect();
    fft_in_place(&mut buf, false);
    let scale = dk / (2.0 * PI).sqrt();
    let k_origin = w.grid.origin;
    let amps: Vec<Complex64> = buf
        .iter()
        .enumerate()
        .map(|(i, v)| v * scale * Complex64::from_polar(1.0, -k_origin * tgrid.x(i)))
        .collect();
    SampledWaveform {
        grid: tgrid,
        amps,
    }
}

/// Peak location of |amps|^2 by 3-point parabolic interpolation, minus
/// `reference_peak`.
pub fn peak_delay(w: &SampledWaveform, reference_peak: f64) -> Result<f64, PulseError> {
    let intensity = w.intensity();
    let (imax, _) = intensity
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    if imax == 0 || imax == intensity.len() - 1 {
        return Err(PulseError::PeakAtBoundary);
    }
    let (ym, y0, yp) = (intensity[imax - 1], intensity[imax], intensity[imax + 1]);
    let denom = ym - 2.0 * y0 + yp;
    let frac = if denom.abs() < 1e-300 {
        0.0
    } else {
        0.5 * (ym - yp) / denom
    };
    Ok(w.grid.x(imax) + frac * w.grid.spacing - reference_peak)
}

/// Result of a least-squares Gaussian fit to an intensity profile.
#[derive(Debug, Clone, Copy)]
pub struct GaussianWidth {
    /// Fitted field-amplitude sigma (ns); the intensity profile is
    /// a exp(-(t-mu)^2/sigma^2).
    pub sigma_fit: f64,
    pub center: f64,
    /// RMS fit residual normalized by the intensity peak.
    pub fit_residual: f64,
}

/// Least-squares Gaussian fit to |amps|^2.
pub fn gaussian_width(w: &SampledWaveform) -> Result<GaussianWidth, PulseError> {
    let xs: Vec<f64> = w.grid.points().collect();
    let ys = w.intensity();
    let (imax, &peak) = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    // moment-based seed for the width
    let total: f64 = ys.iter().sum();
    let mean: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / total;
    let var: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean) * (x - mean) * y)
        .sum::<f64>()
        / total;
    let seed = [peak, xs[imax], (2.0 * var).max(1e-12).sqrt()];
    let model = |p: &[f64], x: f64| p[0] * (-(x - p[1]) * (x - p[1]) / (p[2] * p[2])).exp();
    let fit = optim::least_squares(model, &xs, &ys, &seed, 300)?;
    if !fit.params[2].is_finite() || fit.residual > 0.5 {
        return Err(PulseError::FitResidual(fit.residual));
    }
    Ok(GaussianWidth {
        sigma_fit: fit.params[2].abs(),
        center: fit.params[1],
        fit_residual: fit.residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_pulse() -> (PulseSpec, Grid1D) {
        let spec = PulseSpec::new(0.1, 0.0, 0.01);
        let grid = Grid1D::centered(1024, 4.0);
        (spec, grid)
    }

    #[test]
    fn gaussian_is_normalized() {
        let (spec, grid) = test_pulse();
        let w = make_gaussian(&spec, &grid).unwrap();
        assert!((w.l2_norm_sq() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fwhm_matches_sigma_gamma_convention() {
        // sigma*Gamma = 2.2 with Gamma/(2pi) = 4.24 GHz pairs with the
        // quoted 135 ps intensity FWHM to within a few percent.
        let gamma = crate::params::ghz_to_angular(4.24);
        let spec = PulseSpec::new(2.2 / gamma, 0.0, 0.01);
        let fwhm_ps = spec.fwhm() * 1e3;
        assert!(
            (fwhm_ps - 135.0).abs() / 135.0 < 0.03,
            "FWHM = {fwhm_ps} ps"
        );
    }

    #[test]
    fn round_trip_identity() {
        let (spec, grid) = test_pulse();
        let spec = PulseSpec::new(spec.sigma, 12.0, 0.01);
        let w = make_gaussian(&spec, &grid).unwrap();
        let back = to_time(&to_spectrum(&w));
        let err: f64 = w
            .amps
            .iter()
            .zip(&back.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            * grid.spacing;
        assert!(err.sqrt() < 1e-12, "round trip error {err:.3e}");
    }

    #[test]
    fn transform_is_unitary() {
        let (spec, grid) = test_pulse();
        let w = make_gaussian(&spec, &grid).unwrap();
        let s = to_spectrum(&w);
        assert!((s.l2_norm_sq() - w.l2_norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn spectrum_matches_analytic_gaussian() {
        let (_, grid) = test_pulse();
        let spec = PulseSpec::new(0.1, 5.0, 0.01);
        let w = make_gaussian(&spec, &grid).unwrap();
        let s = to_spectrum(&w);
        for (m, k) in s.grid.points().enumerate() {
            let expected = spec.spectrum_amplitude(k);
            if expected > 1e-8 {
                assert!(
                    (s.amps[m].norm() - expected).abs() < 1e-6,
                    "k = {k}: {} vs {expected}",
                    s.amps[m].norm()
                );
            }
        }
        // peak centered at k0, symmetric spectrum for k0 = 0 is the
        // real-Gaussian special case of the same identity
    }

    #[test]
    fn spectral_width_is_inverse_sigma() {
        let (_, grid) = test_pulse();
        let spec = PulseSpec::new(0.1, 0.0, 0.01);
        let w = make_gaussian(&spec, &grid).unwrap();
        let s = to_spectrum(&w);
        let fit = gaussian_width(&s).unwrap();
        assert!((fit.sigma_fit - 1.0 / spec.sigma).abs() * spec.sigma < 1e-4);
    }

    #[test]
    fn shifted_pulse_gives_linear_spectral_phase() {
        let grid = Grid1D::centered(1024, 4.0);
        let spec = PulseSpec::new(0.1, 0.0, 0.01);
        let w = make_gaussian(&spec, &grid).unwrap();
        let shift = 0.25;
        let shifted = SampledWaveform {
            grid,
            amps: grid
                .points()
                .map(|t| {
                    let tt = t - shift;
                    Complex64::new(
                        (spec.sigma * PI.sqrt()).powf(-0.5)
                            * (-tt * tt / (2.0 * spec.sigma * spec.sigma)).exp(),
                        0.0,
                    )
                })
                .collect(),
        };
        let s0 = to_spectrum(&w);
        let s1 = to_spectrum(&shifted);
        // phase slope of s1/s0 should be +shift
        let dk = s0.grid.spacing;
        let mid = grid.n_points / 2;
        let ratio = (s1.amps[mid + 1] / s0.amps[mid + 1]) * (s1.amps[mid] / s0.amps[mid]).conj();
        let slope = ratio.arg() / dk;
        assert!((slope - shift).abs() < 1e-6, "slope = {slope}");
    }

    #[test]
    fn peak_delay_of_centered_pulse_is_zero() {
        let (spec, grid) = test_pulse();
        let w = make_gaussian(&spec, &grid).unwrap();
        let d = peak_delay(&w, 0.0).unwrap();
        assert!(d.abs() < grid.spacing / 100.0, "delay = {d}");
    }

    #[test]
    fn peak_delay_of_sample_shift() {
        let (spec, grid) = test_pulse();
        let w = make_gaussian(&spec, &grid).unwrap();
        let mut amps = w.amps.clone();
        amps.rotate_right(3);
        let shifted = SampledWaveform { grid, amps };
        let d = peak_delay(&shifted, 0.0).unwrap();
        assert!(
            (d - 3.0 * grid.spacing).abs() < 1e-9,
            "delay = {d}, expected {}",
            3.0 * grid.spacing
        );
    }

    #[test]
    fn gaussian_width_recovers_exact_sigma() {
        let grid = Grid1D::centered(2048, 4.0);
        let spec = PulseSpec::new(0.1, 3.0, 0.01); // 100 ps
        let w = make_gaussian(&spec, &grid).unwrap();
        let fit = gaussian_width(&w).unwrap();
        assert!((fit.sigma_fit - 0.1).abs() < 1e-4, "sigma = {}", fit.sigma_fit);
        assert!(fit.fit_residual < 1e-8);
    }

    #[test]
    fn window_too_small_is_an_error() {
        let spec = PulseSpec::new(1.0, 0.0, 0.01);
        let grid = Grid1D::centered(64, 4.0);
        assert!(make_gaussian(&spec, &grid).is_err());
    }
}
