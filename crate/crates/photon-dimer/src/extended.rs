//! Extended (non-bound) two-photon scattering eigenstates.
//!
//! At fixed total wavenumber E the relative-coordinate eigenstates with a
//! real exponent Delta_1 form the continuum that complements the bound
//! state. Depending on Delta_1 the partner exponent Delta_2 is either
//! imaginary (one decaying component, D = 0) or real (a degenerate pair
//! disambiguated by orthogonality constraints). These states are not used
//! for any headline quantity; they exist to close the decomposition
//! diagnostic `decomposition_check`.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::boundstate::{self, BoundStateSolution};
use crate::onephoton::t1_complex;
use crate::optim;
use crate::params::SystemParams;
use crate::pulse::{Grid1D, PulseSpec};
use crate::twophoton::{self, TwoPhotonWavefunction};

#[derive(Debug, thiserror::Error)]
pub enum ExtendedError {
    #[error("Delta_1 must be positive, got {0}")]
    Domain(f64),
    #[error("Delta_1 = {delta1} sits on the real/imaginary Delta_2 boundary at E = {e_total}")]
    BranchBoundary { delta1: f64, e_total: f64 },
    #[error("degenerate-pair constraint iteration did not converge at Delta_1 = {0}")]
    PairDiverged(f64),
    #[error(transparent)]
    Bound(#[from] boundstate::BoundError),
    #[error(transparent)]
    TwoPhoton(#[from] twophoton::TwoPhotonError),
    #[error("linear solve failed: {0}")]
    Linear(#[from] optim::OptimError),
}

/// Which branch the partner exponent falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartnerClass {
    /// g = 0: no photon-photon coupling, plain symmetrized waves.
    Product,
    /// Im Delta_2 > 0: the Delta_2 components decay, D = 0.
    Imaginary,
    /// Delta_2 real: degenerate pair, all four coefficients nonzero.
    Real,
}

/// An extended eigenstate at (E, Delta_1), coefficients in the gauge A = 1.
/// The profile is even in the relative coordinate,
/// f(x) = e^{i D1 |x|} + B e^{-i D1 |x|} + C e^{i D2 |x|} + D e^{-i D2 |x|}.
#[derive(Debug, Clone, Copy)]
pub struct ExtendedState {
    pub e_total: f64,
    pub delta1: f64,
    pub delta2: Complex64,
    pub b_over_a: Complex64,
    pub c_over_a: Complex64,
    pub d_over_a: Complex64,
    pub lambda: Complex64,
    pub class: PartnerClass,
}

pub fn eval(state: &ExtendedState, x: f64) -> Complex64 {
    let ax = x.abs();
    let i = Complex64::new(0.0, 1.0);
    (i * state.delta1 * ax).exp()
        + state.b_over_a * (-i * state.delta1 * ax).exp()
        + state.c_over_a * (i * state.delta2 * ax).exp()
        + state.d_over_a * (-i * state.delta2 * ax).exp()
}

fn boundary_ks(e_total: f64, params: &SystemParams) -> (f64, f64, f64) {
    let (g, kappa, dc) = (params.g, params.kappa, params.delta_c);
    let cross = 2.0 * (e_total - dc) * (e_total / 2.0 - dc) / kappa;
    (
        -cross + kappa / 2.0 + 2.0 * g * g / kappa,
        cross + kappa / 2.0 - 2.0 * g * g / kappa,
        1.5 * e_total - 2.0 * dc,
    )
}

/// B and C as affine functions of D for the state with quantum number
/// `da` and partner `db`: B = b0 + b1 D, C = c0 + c1 D (gauge A = 1).
/// Encodes both boundary conditions.
fn affine_in_d(
    e_total: f64,
    da: Complex64,
    db: Complex64,
    params: &SystemParams,
) -> (Complex64, Complex64, Complex64, Complex64, Complex64) {
    let (k1, k2, k3) = boundary_ks(e_total, params);
    let half = Complex64::new(e_total / 2.0, 0.0);
    let tpa = t1_complex(half + da, params);
    let tma = t1_complex(half - da, params);
    let tpb = t1_complex(half + db, params);
    let tmb = t1_complex(half - db, params);
    let lambda = tpa * tma;
    let i = Complex64::new(0.0, 1.0);
    let r = (lambda + 1.0) * i * k1 + (lambda - 1.0) * k3;
    // derivative condition: B = 1 + (db/da)(C - D)
    let rb = db / da;
    let constant = 2.0 * r + 2.0 * ((i * k2 + da) * tpa + (i * k2 - da) * tma);
    let c_c = rb * r + r + 2.0 * ((i * k2 - da) * tma * rb + (i * k2 + db) * tpb);
    let c_d = -rb * r + r + 2.0 * (-(i * k2 - da) * tma * rb + (i * k2 - db) * tmb);
    let c0 = -constant / c_c;
    let c1 = -c_d / c_c;
    let b0 = 1.0 + rb * c0;
    let b1 = rb * (c1 - 1.0);
    (b0, b1, c0, c1, lambda)
}

/// Solve the degenerate real-Delta_2 pair: both states of the pair satisfy
/// the boundary conditions, and the mutual orthogonality constraints
/// B_1/A_1 = -(C_2/D_2)*, B_2/A_2 = -(C_1/D_1)* fix the remaining freedom.
/// Returns (state at Delta_1, state at Delta_2).
pub fn degenerate_pair(
    delta1: f64,
    delta2: f64,
    e_total: f64,
    params: &SystemParams,
) -> Result<(ExtendedState, ExtendedState), ExtendedError> {
    let d1 = Complex64::new(delta1, 0.0);
    let d2 = Complex64::new(delta2, 0.0);
    let (b10, b11, c10, c11, lambda) = affine_in_d(e_total, d1, d2, params);
    let (b20, b21, c20, c21, _) = affine_in_d(e_total, d2, d1, params);
    // fixed point in the two free D coefficients; the constraints are
    // bilinear so this contracts quickly away from the boundary
    let mut p = Complex64::new(0.0, 0.0);
    let mut q = Complex64::new(0.0, 0.0);
    let mut converged = false;
    for _ in 0..500 {
        let qn = (-c20.conj() / (b11 * p + b10 + c21.conj())).conj();
        let pn = (-c10.conj() / (b20 + b21 * qn + c11.conj())).conj();
        if (pn - p).norm() + (qn - q).norm() < 1e-14 * (1.0 + pn.norm() + qn.norm()) {
            p = pn;
            q = qn;
            converged = true;
            break;
        }
        p = pn;
        q = qn;
    }
    let finite = converged
        && p.is_finite()
        && q.is_finite()
        && [b10, b11, c10, c11, b20, b21, c20, c21].iter().all(|v| v.is_finite());
    if !finite {
        return Err(ExtendedError::PairDiverged(delta1));
    }
    let s1 = ExtendedState {
        e_total,
        delta1,
        delta2: d2,
        b_over_a: b10 + b11 * p,
        c_over_a: c10 + c11 * p,
        d_over_a: p,
        lambda,
        class: PartnerClass::Real,
    };
    let s2 = ExtendedState {
        e_total,
        delta1: delta2,
        delta2: d1,
        b_over_a: b20 + b21 * q,
        c_over_a: c20 + c21 * q,
        d_over_a: q,
        lambda,
        class: PartnerClass::Real,
    };
    Ok((s1, s2))
}

/// Construct the extended eigenstate with quantum number Delta_1 > 0.
pub fn extended_coeffs(
    delta1: f64,
    e_total: f64,
    params: &SystemParams,
) -> Result<ExtendedState, ExtendedError> {
    if !(delta1 > 0.0) {
        return Err(ExtendedError::Domain(delta1));
    }
    let gp_scale = if params.g > 0.0 {
        params.gamma_purcell()
    } else {
        params.kappa
    };
    let d1 = Complex64::new(delta1, 0.0);
    let lambda = boundstate::lambda_eig(e_total, d1, params);
    if params.g == 0.0 {
        // no emitter: the relative part is a plain standing wave and the
        // scattering is the product of the two transmission phases
        return Ok(ExtendedState {
            e_total,
            delta1,
            delta2: Complex64::new(0.0, 0.0),
            b_over_a: Complex64::new(1.0, 0.0),
            c_over_a: Complex64::new(0.0, 0.0),
            d_over_a: Complex64::new(0.0, 0.0),
            lambda,
            class: PartnerClass::Product,
        });
    }
    let delta2 = boundstate::delta2_of(d1, e_total, params).map_err(|_| {
        ExtendedError::BranchBoundary {
            delta1,
            e_total,
        }
    })?;
    if delta2.norm() < 1e-9 * gp_scale {
        return Err(ExtendedError::BranchBoundary { delta1, e_total });
    }
    if delta2.im.abs() < 1e-9 * gp_scale {
        return Ok(degenerate_pair(delta1, delta2.re, e_total, params)?.0);
    }
    if delta2.re.abs() > 1e-6 * delta2.norm() {
        // genuinely complex partner only occurs at the branch boundary
        return Err(ExtendedError::BranchBoundary { delta1, e_total });
    }
    let (k1, k2, k3) = boundary_ks(e_total, params);
    let half = Complex64::new(e_total / 2.0, 0.0);
    let tp1 = t1_complex(half + d1, params);
    let tm1 = t1_complex(half - d1, params);
    let tp2 = t1_complex(half + delta2, params);
    let i = Complex64::new(0.0, 1.0);
    let den = (lambda + 1.0) * k1 * (d1 + delta2)
        + 2.0 * k2 * (delta2 * tm1 + d1 * tp2)
        - i * (lambda - 1.0) * k3 * (d1 + delta2)
        + 2.0 * i * d1 * delta2 * (tm1 - tp2);
    let b_over_a = ((lambda + 1.0) * k1 * (d1 - delta2)
        - 2.0 * delta2 * k2 * tp1
        + 2.0 * d1 * k2 * tp2
        - i * (lambda - 1.0) * k3 * (d1 - delta2)
        + 2.0 * i * d1 * delta2 * (tp1 - tp2))
        / den;
    let c_over_a = -2.0
        * d1
        * ((lambda + 1.0) * k1 + k2 * (tp1 + tm1) - i * (lambda - 1.0) * k3
            - i * d1 * (tp1 - tm1))
        / den;
    Ok(ExtendedState {
        e_total,
        delta1,
        delta2,
        b_over_a,
        c_over_a,
        d_over_a: Complex64::new(0.0, 0.0),
        lambda,
        class: PartnerClass::Imaginary,
    })
}

/// Result of the completeness diagnostic.
#[derive(Debug, Clone)]
pub struct DecompositionReport {
    /// || S in - (bound + extended) || / || S in || on the lattice.
    pub l2_residual: f64,
    pub warning: Option<String>,
}

/// Scatter each relative-coordinate slice of the input through the
/// eigenbasis {extended modes, bound state} and compare against the full
/// two-photon scattering output. Soft diagnostic: finite windows make
/// exact completeness unreachable, but the residual should be small and
/// shrink as `n_modes` grows.
pub fn decomposition_check(
    spec: &PulseSpec,
    grid: &Grid1D,
    params: &SystemParams,
    n_energy: usize,
    n_modes: usize,
) -> Result<DecompositionReport, ExtendedError> {
    let full = twophoton::scatter_two(spec, grid, params)?;
    let psi_dec = eigenbasis_reconstruction(spec, grid, params, n_energy, n_modes)?;
    let n = grid.n_points;
    let mut diff = 0.0;
    let mut norm = 0.0;
    for idx in 0..n * n {
        diff += (full.psi[idx] - psi_dec.psi[idx]).norm_sqr();
        norm += full.psi[idx].norm_sqr();
    }
    let l2_residual = (diff / norm).sqrt();
    let warning = if l2_residual > 0.5 {
        Some(format!(
            "decomposition residual {l2_residual:.3} — quadrature not converged \
             (n_energy = {n_energy}, n_modes = {n_modes})"
        ))
    } else {
        None
    };
    Ok(DecompositionReport {
        l2_residual,
        warning,
    })
}

/// Reconstruct the scattered state from the eigenbasis alone: for each
/// total-wavenumber slice, least-squares-fit the input relative profile
/// onto the modes, apply each mode's eigenvalue, and resum.
pub fn eigenbasis_reconstruction(
    spec: &PulseSpec,
    grid: &Grid1D,
    params: &SystemParams,
    n_energy: usize,
    n_modes: usize,
) -> Result<TwoPhotonWavefunction, ExtendedError> {
    let n = grid.n_points;
    let dt = grid.spacing;
    let l_window = n as f64 * dt;
    let e_grid = boundstate::energy_grid(spec, n_energy);
    let de = e_grid[1] - e_grid[0];
    let bound_table: Vec<Option<BoundStateSolution>> = if params.g > 0.0 {
        boundstate::solve_bound_table(&e_grid, spec, params)?
    } else {
        vec![None; e_grid.len()]
    };

    // input relative profile on the lattice
    let g_in: Vec<f64> = (0..n)
        .map(|d| {
            let x = d as f64 * dt;
            (-x * x / (4.0 * spec.sigma * spec.sigma)).exp()
        })
        .collect();

    // per-slice scattered profiles, indexed like e_grid
    let slices: Vec<Option<Vec<Complex64>>> = e_grid
        .par_iter()
        .zip(&bound_table)
        .map(|(&e, bound)| {
            let com = (-(e - 2.0 * spec.k0).powi(2) * spec.sigma * spec.sigma / 4.0).exp();
            if com < 1e-12 {
                return Ok(None);
            }
            slice_profile(e, params, &g_in, dt, l_window, n_modes, bound.as_ref())
                .map(|mut prof| {
                    let scale = com / (2.0 * PI) * de;
                    for v in &mut prof {
                        *v *= scale;
                    }
                    Some(prof)
                })
        })
        .collect::<Result<_, ExtendedError>>()?;

    let mut psi = vec![Complex64::new(0.0, 0.0); n * n];
    struct Term {
        phase_step: Complex64,
        phase0: Complex64,
        profile: Vec<Complex64>,
    }
    let terms: Vec<Term> = slices
        .into_iter()
        .zip(&e_grid)
        .filter_map(|(s, &e)| {
            s.map(|profile| Term {
                phase_step: Complex64::from_polar(1.0, -e * dt / 2.0),
                phase0: Complex64::from_polar(1.0, -e * grid.origin),
                profile,
            })
        })
        .collect();
    psi.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for term in &terms {
            let mut phase = term.phase0 * term.phase_step.powu(i as u32);
            for (j, v) in row.iter_mut().enumerate() {
                *v += phase * term.profile[i.abs_diff(j)];
                phase *= term.phase_step;
            }
        }
    });
    Ok(TwoPhotonWavefunction { grid: *grid, psi })
}

/// Least-squares decomposition of one relative-coordinate slice onto the
/// mode family at total wavenumber E, each column then multiplied by its
/// scattering eigenvalue. Modes sit at Delta_n = (n - 1/2) pi / L so the
/// g = 0 limit is an exact cosine series on the window.
fn slice_profile(
    e_total: f64,
    params: &SystemParams,
    g_in: &[f64],
    dt: f64,
    l_window: f64,
    n_modes: usize,
    bound: Option<&BoundStateSolution>,
) -> Result<Vec<Complex64>, ExtendedError> {
    let n = g_in.len();
    let d_delta = PI / l_window;
    let mut columns: Vec<(Complex64, Vec<Complex64>)> = Vec::with_capacity(n_modes + 1);
    for m in 0..n_modes {
        let mut delta1 = (m as f64 + 0.5) * d_delta;
        let state = match extended_coeffs(delta1, e_total, params) {
            Ok(s) => s,
            Err(ExtendedError::BranchBoundary { .. }) | Err(ExtendedError::PairDiverged(_)) => {
                // nudge off the boundary; skip the mode if it persists
                delta1 += 1e-4 * d_delta;
                match extended_coeffs(delta1, e_total, params) {
                    Ok(s) => s,
                    Err(_) => continue,
                }
            }
            Err(e) => return Err(e),
        };
        let mut col: Vec<Complex64> = (0..n).map(|d| eval(&state, d as f64 * dt)).collect();
        let norm = col.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) || !state.lambda.is_finite() {
            // mode too close to the real/imaginary boundary to evaluate
            continue;
        }
        for v in &mut col {
            *v /= norm;
        }
        columns.push((state.lambda, col));
    }
    if let Some(sol) = bound {
        let mut col: Vec<Complex64> = (0..n)
            .map(|d| boundstate::bound_wavefunction(sol, d as f64 * dt))
            .collect();
        let norm = col.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        for v in &mut col {
            *v /= norm;
        }
        columns.push((sol.lambda, col));
    }

    // normal equations for min || Phi c - g ||
    let k = columns.len();
    let mut gram: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); k]; k];
    let mut rhs: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); k];
    for a in 0..k {
        for b in a..k {
            let mut s = Complex64::new(0.0, 0.0);
            for d in 0..n {
                s += columns[a].1[d].conj() * columns[b].1[d];
            }
            gram[a][b] = s;
            gram[b][a] = s.conj();
        }
        let mut s = Complex64::new(0.0, 0.0);
        for d in 0..n {
            s += columns[a].1[d].conj() * g_in[d];
        }
        rhs[a] = s;
        // mild ridge keeps near-duplicate modes from blowing up
        gram[a][a] += 1e-12;
    }
    let coeffs = optim::solve_dense_complex(&mut gram, &mut rhs)?;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for ((lambda, col), c) in columns.iter().zip(&coeffs) {
        let w = lambda * c;
        for (o, v) in out.iter_mut().zip(col) {
            *o += w * v;
        }
    }
    Ok(out)
}
