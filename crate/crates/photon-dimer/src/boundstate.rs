//! Two-photon bound states (photonic dimers).
//!
//! In the two-excitation sector the relative coordinate obeys a quartic
//! ODE whose exponents Delta_1, Delta_2 live in the complex plane. Bound
//! states have both exponents in the upper half plane; the admissible
//! Delta_1 is the root of a 2x2 boundary-condition determinant, found here
//! by derivative-free minimization from a perturbative seed. From the root
//! we build the normalized eigenstate, its transmission coefficient
//! t_B(E), the center-of-mass delay and distortion, and the projection of
//! product pulses onto the bound subspace.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::onephoton::t1_complex;
use crate::optim;
use crate::params::SystemParams;
use crate::pulse::{Grid1D, PulseSpec};
use crate::twophoton::TwoPhotonWavefunction;

#[derive(Debug, thiserror::Error)]
pub enum BoundError {
    #[error("root search did not converge at E = {e_total}: residual {residual:.3e}")]
    NoConvergence { e_total: f64, residual: f64 },
    #[error("converged root leaves the bound branch at E = {e_total}: {detail}")]
    Branch { e_total: f64, detail: String },
    #[error("branch-point input: {0}")]
    Singular(String),
    #[error("bound branch terminates before E = {e_total}: partner exponent diverges")]
    Terminated { e_total: f64 },
    #[error("E-grid under-resolved: {0}")]
    Resolution(String),
}

/// Coefficients of the relative-coordinate quartic problem at total
/// wavenumber E. All forms are cleared of the removable 1/E pole; at the
/// doubly degenerate point E = 0, Delta_C = 0 the c and d entries hold the
/// finite limits c/E and d/E instead (flagged by `degenerate`).
#[derive(Debug, Clone, Copy)]
pub struct QuarticCoeffs {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
    pub degenerate: bool,
}

pub fn quartic_coeffs(e_total: f64, params: &SystemParams) -> QuarticCoeffs {
    let (g, kappa, dc) = (params.g, params.kappa, params.delta_c);
    let e = e_total;
    let a = Complex64::new(kappa / 2.0, -(e - dc));
    let b = Complex64::new(e * dc / 2.0 - e * e / 4.0 + g * g, -kappa * e / 4.0);
    if e == 0.0 && dc == 0.0 {
        // both c and d vanish linearly; keep the ratios c/E, d/E
        return QuarticCoeffs {
            a,
            b,
            c: Complex64::new(0.0, -kappa),
            d: Complex64::new(0.0, kappa * g * g),
            degenerate: true,
        };
    }
    let c = Complex64::new(0.0, 2.0 * kappa * (dc - e / 2.0));
    let d = Complex64::new(
        0.0,
        (e * e * kappa / 2.0) * (dc - e / 2.0) + e * kappa * g * g,
    );
    QuarticCoeffs {
        a,
        b,
        c,
        d,
        degenerate: false,
    }
}

/// Scattering eigenvalue in product form,
/// lambda(E, Delta) = t(E/2 + Delta) t(E/2 - Delta).
pub fn lambda_eig(e_total: f64, delta: Complex64, params: &SystemParams) -> Complex64 {
    let half = Complex64::new(e_total / 2.0, 0.0);
    t1_complex(half + delta, params) * t1_complex(half - delta, params)
}

/// Same eigenvalue from the rational closed form; used as an independent
/// cross-check of the product form.
pub fn lambda_rational(e_total: f64, delta: Complex64, params: &SystemParams) -> Complex64 {
    let q = quartic_coeffs(e_total, params);
    // in the degenerate limit the correction term vanishes with E
    if q.degenerate {
        return Complex64::new(1.0, 0.0);
    }
    let d2 = delta * delta;
    let den = (d2 - q.b) * (d2 - q.b) + q.a * q.a * d2;
    1.0 + (q.d - q.c * d2) / den
}

/// The partner exponent Delta_2(Delta_1), branch with Im >= 0. The closed
/// form is its own inverse on that branch.
pub fn delta2_of(
    delta1: Complex64,
    e_total: f64,
    params: &SystemParams,
) -> Result<Complex64, BoundError> {
    let q = quartic_coeffs(e_total, params);
    // numerator and denominator scale identically, so the degenerate-limit
    // ratios c/E, d/E drop straight in
    let num = q.b * q.b * q.c + q.a * q.a * q.d - 2.0 * q.b * q.d + q.d * delta1 * delta1;
    let den = q.c * delta1 * delta1 - q.d;
    let scale = q.c.norm().max(q.d.norm()) * (delta1.norm_sqr() + 1.0);
    if den.norm() < 1e-14 * scale {
        return Err(BoundError::Singular(format!(
            "Delta_2 branch point at Delta_1 = {delta1}, E = {e_total}"
        )));
    }
    let mut d2 = (num / den).sqrt();
    if d2.im < 0.0 || (d2.im == 0.0 && d2.re < 0.0) {
        d2 = -d2;
    }
    Ok(d2)
}

fn boundary_ks(e_total: f64, params: &SystemParams) -> (f64, f64, f64) {
    let (g, kappa, dc) = (params.g, params.kappa, params.delta_c);
    let cross = 2.0 * (e_total - dc) * (e_total / 2.0 - dc) / kappa;
    let k1 = -cross + kappa / 2.0 + 2.0 * g * g / kappa;
    let k2 = cross + kappa / 2.0 - 2.0 * g * g / kappa;
    let k3 = 1.5 * e_total - 2.0 * dc;
    (k1, k2, k3)
}

/// Boundary-condition determinant at a trial Delta_1, cleared of the
/// transmission-coefficient denominators and scaled for conditioning.
/// Zero exactly on the bound branch. The polynomial form matters: near
/// E = 0 the root coalesces with a pole of t, and the naive t-ratio
/// expression loses all significant digits there.
pub fn detm_residual(
    delta1: Complex64,
    e_total: f64,
    params: &SystemParams,
) -> Result<Complex64, BoundError> {
    let delta2 = delta2_of(delta1, e_total, params)?;
    let (k1, k2, k3) = boundary_ks(e_total, params);
    let (g, kappa, dc) = (params.g, params.kappa, params.delta_c);
    let numer = |k: Complex64| (k - dc - Complex64::new(0.0, kappa / 2.0)) * k - g * g;
    let denom = |k: Complex64| (k - dc + Complex64::new(0.0, kappa / 2.0)) * k - g * g;
    let half = Complex64::new(e_total / 2.0, 0.0);
    let (a1, a2, a3) = (half + delta1, half + delta2, half - delta1);
    let (n1, n2, n3) = (numer(a1), numer(a2), numer(a3));
    let (d1, d2, d3) = (denom(a1), denom(a2), denom(a3));
    let i = Complex64::new(0.0, 1.0);
    // detM * d1 d2 d3, with lambda d1 d2 d3 = n1 n3 d2
    let det = 2.0 * k2 * (n1 * delta2 * d2 * d3 - n2 * delta1 * d1 * d3)
        + 2.0 * i * delta1 * delta2 * (n2 * d1 * d3 - n1 * d2 * d3)
        + i * k3 * (delta1 - delta2) * (n1 * n3 * d2 - d1 * d2 * d3)
        - k1 * (delta1 - delta2) * (d1 * d2 * d3 + n1 * n3 * d2);
    let gp = params.gamma_purcell();
    let s = g * g + kappa * kappa / 4.0;
    // det grows as Delta_2^3 where the partner exponent passes through
    // infinity (branch point of its closed form); keep the residual O(1)
    let growth = (1.0 + delta2.norm_sqr() / s).powf(1.5);
    Ok(det / (gp * gp * s * s * s * growth))
}

/// Leading-order bound exponent i (Gamma/2)(1 + Gamma/kappa).
pub fn perturbative_delta1(params: &SystemParams) -> Complex64 {
    let gp = params.gamma_purcell();
    Complex64::new(0.0, (gp / 2.0) * (1.0 + gp / params.kappa))
}

/// Seed for the bound exponent: minus the emitter-like pole of the
/// single-photon denominator (k - Delta_C + i kappa/2) k - g^2. At E = 0
/// the exact bound root coincides with this pole, and it stays close over
/// the spectrally relevant window. Reduces to `perturbative_delta1` for
/// kappa >> Gamma but remains accurate at moderate coupling, where the
/// perturbative value drifts into the basin of a spurious root.
pub fn pole_seed(params: &SystemParams) -> Complex64 {
    let half = Complex64::new(params.delta_c, -params.kappa / 2.0) / 2.0;
    let disc = (half * half + params.g * params.g).sqrt();
    let (k1, k2) = (half + disc, half - disc);
    let k_em = if k1.im > k2.im { k1 } else { k2 };
    -k_em
}

/// Leading-order partner exponent i kappa/2 + i (E^2 - 2 Gamma^2)/(4 Gamma).
pub fn perturbative_delta2(e_total: f64, params: &SystemParams) -> Complex64 {
    let gp = params.gamma_purcell();
    Complex64::new(
        0.0,
        params.kappa / 2.0 + (e_total * e_total - 2.0 * gp * gp) / (4.0 * gp),
    )
}

/// Leading-order bound transmission coefficient.
pub fn t_bound_perturbative(e_total: f64, params: &SystemParams) -> Complex64 {
    let gp = params.gamma_purcell();
    let (e, k) = (e_total, params.kappa);
    let num = Complex64::new(
        -2.0 * gp * gp - 2.0 * e * e + 2.0 * gp * k,
        e * k + 2.0 * gp * e,
    );
    let den = Complex64::new(
        2.0 * gp * gp + 2.0 * e * e - 2.0 * gp * k,
        e * k + 2.0 * gp * e,
    );
    num / den
}

/// A solved bound eigenstate at total wavenumber E. The coefficient gauge
/// is A = 1; N makes the family delta-normalized in E.
#[derive(Debug, Clone, Copy)]
pub struct BoundStateSolution {
    pub e_total: f64,
    pub delta1: Complex64,
    pub delta2: Complex64,
    pub a_coeff: Complex64,
    pub c_coeff: Complex64,
    pub norm: f64,
    pub lambda: Complex64,
    /// |det M| / Gamma^2 at the accepted root.
    pub residual: f64,
}

fn normalization(delta1: Complex64, delta2: Complex64, a: Complex64, c: Complex64) -> f64 {
    let cross_den = Complex64::new(delta1.im + delta2.im, -(delta1.re - delta2.re));
    let bracket = a.norm_sqr() / delta1.im
        + c.norm_sqr() / delta2.im
        + 4.0 * (a * c.conj() / cross_den).re;
    1.0 / (2.0 * PI * bracket).sqrt()
}

/// Newton iteration on the holomorphic determinant; returns the polished
/// root if the scaled residual drops below 1e-11.
fn newton_polish(mut d1: Complex64, e_total: f64, params: &SystemParams) -> Option<Complex64> {
    for _ in 0..40 {
        let f = detm_residual(d1, e_total, params).ok()?;
        if f.norm() < 1e-12 {
            return Some(d1);
        }
        let h = 1e-7 * d1.norm().max(1e-6 * params.kappa);
        let fp = (detm_residual(d1 + h, e_total, params).ok()?
            - detm_residual(d1 - h, e_total, params).ok()?)
            / (2.0 * h);
        if fp.norm() == 0.0 || !fp.is_finite() {
            return None;
        }
        let step = f / fp;
        if !step.is_finite() {
            return None;
        }
        d1 -= step;
        // stagnation at float precision counts as converged
        if step.norm() < 1e-13 * d1.norm().max(1e-6 * params.kappa) {
            return detm_residual(d1, e_total, params)
                .ok()
                .filter(|f| f.norm() < 1e-9)
                .map(|_| d1);
        }
    }
    detm_residual(d1, e_total, params)
        .ok()
        .filter(|f| f.norm() < 1e-11)
        .map(|_| d1)
}

/// Solve for the bound state at E from an explicit Delta_1 seed.
pub fn solve_bound_seeded(
    e_total: f64,
    params: &SystemParams,
    seed: Complex64,
) -> Result<BoundStateSolution, BoundError> {
    // Newton from the seed; fall back to a simplex search to globalize,
    // then polish again
    let delta1 = newton_polish(seed, e_total, params)
        .or_else(|| {
            let objective = |x: &[f64]| {
                let d1 = Complex64::new(x[0], x[1]);
                match detm_residual(d1, e_total, params) {
                    Ok(r) => r.norm_sqr(),
                    Err(_) => f64::MAX,
                }
            };
            let mut best = vec![seed.re, seed.im];
            let mut step = (seed.norm() / 20.0).max(1e-8 * params.kappa);
            for _ in 0..4 {
                let r = optim::nelder_mead(objective, &best, step, 1e-22, 400);
                best = r.x;
                if let Some(d1) =
                    newton_polish(Complex64::new(best[0], best[1]), e_total, params)
                {
                    return Some(d1);
                }
                step /= 8.0;
            }
            None
        })
        .ok_or_else(|| {
            let residual = detm_residual(seed, e_total, params)
                .map(|r| r.norm())
                .unwrap_or(f64::NAN);
            BoundError::NoConvergence { e_total, residual }
        })?;
    let residual = detm_residual(delta1, e_total, params)?.norm();
    let delta2 = delta2_of(delta1, e_total, params)?;
    if delta1.im <= 0.0 || delta2.im <= 0.0 {
        return Err(BoundError::Branch {
            e_total,
            detail: format!("Delta_1 = {delta1}, Delta_2 = {delta2}"),
        });
    }
    // the determinant vanishes identically on the Delta_1 = Delta_2
    // manifold; that is not a bound state
    if (delta1 - delta2).norm() < 1e-6 * delta1.norm().max(delta2.norm()) {
        return Err(BoundError::Branch {
            e_total,
            detail: format!("degenerate exponents Delta_1 = Delta_2 = {delta1}"),
        });
    }
    let lambda = lambda_eig(e_total, delta1, params);
    if (lambda.norm() - 1.0).abs() > 1e-6 {
        return Err(BoundError::Branch {
            e_total,
            detail: format!("|lambda| = {} off the unit circle", lambda.norm()),
        });
    }
    let a_coeff = Complex64::new(1.0, 0.0);
    let c_coeff = -delta1 / delta2; // null vector of the BC matrix
    let norm = normalization(delta1, delta2, a_coeff, c_coeff);
    Ok(BoundStateSolution {
        e_total,
        delta1,
        delta2,
        a_coeff,
        c_coeff,
        norm,
        lambda,
        residual,
    })
}

/// Solve for the bound state at E. The emitter-pole seed is exact at
/// E = 0; away from there the root is tracked by continuation in steps of
/// Gamma/2 so the search never strays onto a spurious branch.
pub fn solve_bound(e_total: f64, params: &SystemParams) -> Result<BoundStateSolution, BoundError> {
    let gp = params.gamma_purcell();
    let e0 = e_total.signum() * e_total.abs().min(0.2 * gp);
    let first = solve_bound_seeded(e0, params, pole_seed(params))?;
    if e0 == e_total {
        return Ok(first);
    }
    continue_root(e0, first.delta1, e_total, params, 12)
}

/// Track the root from a solved point at `e_from` to `e_to`, bisecting the
/// step when the jump is too large for the local search. Detects branch
/// termination (diverging partner exponent) along the way.
fn continue_root(
    e_from: f64,
    seed: Complex64,
    e_to: f64,
    params: &SystemParams,
    depth: u32,
) -> Result<BoundStateSolution, BoundError> {
    match solve_bound_seeded(e_to, params, seed) {
        Ok(sol) => Ok(sol),
        Err(err) if depth == 0 => Err(err),
        Err(_) => {
            let mid = 0.5 * (e_from + e_to);
            let half = continue_root(e_from, seed, mid, params, depth - 1)?;
            if half.delta2.norm() > 3.0 * params.kappa {
                return Err(BoundError::Terminated { e_total: e_to });
            }
            continue_root(mid, half.delta1, e_to, params, depth - 1)
        }
    }
}

/// Relative-coordinate profile of the eigenstate,
/// B_E(x) = N [A e^{i Delta_1 |x|} + C e^{i Delta_2 |x|}] (even in x).
pub fn bound_wavefunction(sol: &BoundStateSolution, x: f64) -> Complex64 {
    let ax = x.abs();
    let i = Complex64::new(0.0, 1.0);
    sol.norm * (sol.a_coeff * (i * sol.delta1 * ax).exp() + sol.c_coeff * (i * sol.delta2 * ax).exp())
}

/// Bound-branch transmission coefficient t_B(E) = lambda(E, Delta_1(E)).
///
/// Exact E = 0 on resonance is the degenerate point where the product form
/// collapses to a 0*inf limit; calling code evaluates nearby instead.
pub fn t_bound(e_total: f64, params: &SystemParams) -> Result<Complex64, BoundError> {
    Ok(solve_bound(e_total, params)?.lambda)
}

#[derive(Debug, Clone, Copy)]
pub struct PhiBDerivatives {
    /// Center-of-mass group delay d(phi_B)/dE (ns).
    pub d1: f64,
    /// Third derivative (ns^3).
    pub d3: f64,
}

/// Delay and distortion of the bound-state phase phi_B = -i log t_B by
/// Richardson-extrapolated differences on stencils that never touch the
/// degenerate point E = 0.
pub fn phib_derivatives(e_total: f64, params: &SystemParams) -> Result<PhiBDerivatives, BoundError> {
    let gp = params.gamma_purcell();
    let h0 = gp / 10.0;
    // continuation: each stencil point seeded from its nearest solved neighbour
    let mut cache: Vec<(f64, Complex64, Complex64)> = Vec::new(); // (E, Delta_1, t_B)
    let mut t_at = |e: f64| -> Result<Complex64, BoundError> {
        if let Some(&(_, _, t)) = cache.iter().find(|(ee, _, _)| *ee == e) {
            return Ok(t);
        }
        let seed = cache
            .iter()
            .min_by(|a, b| (a.0 - e).abs().total_cmp(&(b.0 - e).abs()))
            .map(|&(_, d1, _)| d1);
        let sol = match seed {
            Some(d1) => solve_bound_seeded(e, params, d1)
                .or_else(|_| solve_bound(e, params))?,
            None => solve_bound(e, params)?,
        };
        cache.push((e, sol.delta1, sol.lambda));
        Ok(sol.lambda)
    };

    let pair_arg = |ta: Complex64, tb: Complex64| (ta / tb).arg();
    let d1_at = |t_at: &mut dyn FnMut(f64) -> Result<Complex64, BoundError>,
                 h: f64|
     -> Result<f64, BoundError> {
        let tp = t_at(e_total + h)?;
        let tm = t_at(e_total - h)?;
        Ok(pair_arg(tp, tm) / (2.0 * h))
    };
    let d3_at = |t_at: &mut dyn FnMut(f64) -> Result<Complex64, BoundError>,
                 h: f64|
     -> Result<f64, BoundError> {
        let tp2 = t_at(e_total + 2.0 * h)?;
        let tp1 = t_at(e_total + h)?;
        let tm1 = t_at(e_total - h)?;
        let tm2 = t_at(e_total - 2.0 * h)?;
        let u1 = pair_arg(tp2, tp1);
        let u2 = pair_arg(tp1, tm1);
        let u3 = pair_arg(tm1, tm2);
        Ok((u1 - u2 + u3) / (2.0 * h * h * h))
    };

    let d1_h = d1_at(&mut t_at, h0)?;
    let d1_h2 = d1_at(&mut t_at, h0 / 2.0)?;
    let d3_h = d3_at(&mut t_at, h0)?;
    let d3_h2 = d3_at(&mut t_at, h0 / 2.0)?;
    Ok(PhiBDerivatives {
        d1: (4.0 * d1_h2 - d1_h) / 3.0,
        d3: (4.0 * d3_h2 - d3_h) / 3.0,
    })
}

/// Symmetric grid of total wavenumbers 2 k0 +- 10/sigma. Points landing
/// exactly on the degenerate origin are nudged by a fraction of the step.
pub fn energy_grid(spec: &PulseSpec, n: usize) -> Vec<f64> {
    let half = 10.0 / spec.sigma;
    let center = 2.0 * spec.k0;
    let de = 2.0 * half / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let e = center - half + i as f64 * de;
            if e == 0.0 {
                de * 1e-3
            } else {
                e
            }
        })
        .collect()
}

/// Bound-subspace component of the scattered state and its weight.
#[derive(Debug)]
pub struct BoundProjection {
    pub bound_psi: TwoPhotonWavefunction,
    pub bound_fraction: f64,
}

/// Overlap of a product Gaussian with the bound family: the center-of-mass
/// integral in closed form times a numeric relative-coordinate quadrature.
fn overlap(sol: &BoundStateSolution, spec: &PulseSpec) -> Complex64 {
    let sigma = spec.sigma;
    let decay = sol.delta1.im;
    let x_max = (28.0 / decay).min(11.0 * sigma);
    let dx = (1.0 / sol.delta2.im.max(decay)).min(sigma) / 8.0;
    let n = (x_max / dx).ceil() as usize;
    // nu = 2 * Int_0^inf conj(B(x)) e^{-x^2/(4 sigma^2)} dx, trapezoid
    let mut nu = Complex64::new(0.0, 0.0);
    for i in 0..=n {
        let x = i as f64 * dx;
        let w = if i == 0 { 0.5 } else { 1.0 };
        nu += w * bound_wavefunction(sol, x).conj() * (-x * x / (4.0 * sigma * sigma)).exp();
    }
    nu *= 2.0 * dx;
    let com = (-(sol.e_total - 2.0 * spec.k0).powi(2) * sigma * sigma / 4.0).exp();
    nu * com
}

/// Solve the bound family over an E-grid with continuation seeding from
/// the center outward. Entries where the pulse has no spectral weight and
/// no root is found are `None`.
pub fn solve_bound_table(
    e_grid: &[f64],
    spec: &PulseSpec,
    params: &SystemParams,
) -> Result<Vec<Option<BoundStateSolution>>, BoundError> {
    let center = 2.0 * spec.k0;
    let pivot = (0..e_grid.len())
        .min_by(|&a, &b| {
            (e_grid[a] - center)
                .abs()
                .total_cmp(&(e_grid[b] - center).abs())
        })
        .unwrap();
    let mut table: Vec<Option<BoundStateSolution>> = vec![None; e_grid.len()];
    // sweep outward from the spectral center, one side at a time, so each
    // point is seeded from its own side's neighbour
    let upward: Vec<usize> = (pivot..e_grid.len()).collect();
    let downward: Vec<usize> = (0..pivot).rev().collect();
    for side in [upward, downward] {
        let mut last: Option<(f64, Complex64)> = None;
        for idx in side {
            let e = e_grid[idx];
            let weight = (-(e - center).powi(2) * spec.sigma * spec.sigma / 2.0).exp();
            let attempt = match last {
                Some((e_prev, seed)) => continue_root(e_prev, seed, e, params, 10),
                None => solve_bound(e, params),
            };
            match attempt {
                Ok(sol) => {
                    last = Some((e, sol.delta1));
                    table[idx] = Some(sol);
                }
                // the branch terminates where the partner exponent
                // diverges; everything past that point is continuum
                Err(BoundError::Terminated { .. }) => break,
                // leaving the branch means the bound state has dissolved:
                // zero contribution
                Err(BoundError::Branch { .. }) => {}
                Err(_) if weight < 1e-6 => {}
                Err(err) => return Err(err),
            }
        }
    }
    Ok(table)
}

/// Project a product pulse onto the bound subspace, scatter it there, and
/// return the reconstructed lattice wavefunction plus the bound fraction.
pub fn project_and_scatter(
    spec: &PulseSpec,
    grid: &Grid1D,
    params: &SystemParams,
    e_grid: &[f64],
) -> Result<BoundProjection, BoundError> {
    let table = solve_bound_table(e_grid, spec, params)?;
    let de = e_grid[1] - e_grid[0];
    let n = grid.n_points;

    struct Term {
        coeff: Complex64,
        phase_step: Complex64,
        phase0: Complex64,
        profile: Vec<Complex64>,
    }
    let terms: Vec<Term> = table
        .par_iter()
        .zip(e_grid)
        .filter_map(|(entry, &e)| {
            let sol = entry.as_ref()?;
            let ov = overlap(sol, spec);
            if ov.norm() < 1e-16 {
                return None;
            }
            // time-lattice reconstruction: x_c = -(t1 + t2)/2
            let coeff = de * sol.lambda * ov;
            let profile = (0..n)
                .map(|d| bound_wavefunction(sol, d as f64 * grid.spacing))
                .collect();
            Some(Term {
                coeff,
                phase_step: Complex64::from_polar(1.0, -e * grid.spacing / 2.0),
                phase0: Complex64::from_polar(1.0, -e * grid.origin),
                profile,
            })
        })
        .collect();

    let mut psi = vec![Complex64::new(0.0, 0.0); n * n];
    psi.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for term in &terms {
            let mut phase = term.phase0 * term.phase_step.powu(i as u32);
            let base = term.coeff;
            for (j, v) in row.iter_mut().enumerate() {
                let d = i.abs_diff(j);
                *v += base * phase * term.profile[d];
                phase *= term.phase_step;
            }
        }
    });

    let fraction: f64 = table
        .iter()
        .zip(e_grid)
        .filter_map(|(entry, _)| entry.as_ref())
        .map(|sol| overlap(sol, spec).norm_sqr())
        .sum::<f64>()
        * de;

    Ok(BoundProjection {
        bound_psi: TwoPhotonWavefunction {
            grid: *grid,
            psi,
        },
        bound_fraction: fraction,
    })
}

/// Weight of the bound subspace in the input pulse alone (no lattice
/// reconstruction).
pub fn bound_fraction(
    spec: &PulseSpec,
    params: &SystemParams,
    n_e: usize,
) -> Result<f64, BoundError> {
    let e_grid = energy_grid(spec, n_e);
    let table = solve_bound_table(&e_grid, spec, params)?;
    let de = e_grid[1] - e_grid[0];
    let total: f64 = table
        .par_iter()
        .filter_map(|entry| entry.as_ref())
        .map(|sol| overlap(sol, spec).norm_sqr())
        .sum::<f64>()
        * de;
    Ok(total)
}
