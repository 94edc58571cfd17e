//! Small derivative-free and least-squares solvers used by the root finder
//! and the line-fitting utilities.

#[derive(Debug, thiserror::Error)]
pub enum OptimError {
    #[error("minimizer did not converge after {iters} iterations (best f = {best:.3e})")]
    NoConvergence { iters: usize, best: f64 },
    #[error("least-squares fit did not converge (residual {residual:.3e})")]
    FitDiverged { residual: f64 },
    #[error("singular normal equations")]
    Singular,
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub converged: bool,
}

/// Nelder-Mead simplex minimization (reflection/expansion/contraction/shrink).
///
/// Stops when the best objective value drops below `f_tol` or the simplex
/// collapses below machine scale.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    initial_step: f64,
    f_tol: f64,
    max_iters: usize,
) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += initial_step;
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut iters = 0;
    loop {
        // order best..worst
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| fvals[a].total_cmp(&fvals[b]));
        let ordered: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let fordered: Vec<f64> = idx.iter().map(|&i| fvals[i]).collect();
        simplex = ordered;
        fvals = fordered;

        if fvals[0] <= f_tol {
            return NelderMeadResult {
                x: simplex[0].clone(),
                f: fvals[0],
                iters,
                converged: true,
            };
        }
        if iters >= max_iters {
            return NelderMeadResult {
                x: simplex[0].clone(),
                f: fvals[0],
                iters,
                converged: false,
            };
        }
        iters += 1;

        // centroid of all but worst
        let mut centroid = vec![0.0; n];
        for v in simplex.iter().take(n) {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = fvals[n];
        let second_worst = fvals[n - 1];
        let best = fvals[0];

        let point = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = point(alpha);
        let fr = f(&xr);
        if fr < best {
            let xe = point(gamma);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                fvals[n] = fe;
            } else {
                simplex[n] = xr;
                fvals[n] = fr;
            }
        } else if fr < second_worst {
            simplex[n] = xr;
            fvals[n] = fr;
        } else {
            let (xc, fc) = if fr < worst {
                let xc = point(rho);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = point(-rho);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < worst.min(fr) {
                simplex[n] = xc;
                fvals[n] = fc;
            } else {
                // shrink toward best
                let best_pt = simplex[0].clone();
                for i in 1..=n {
                    for (x, b) in simplex[i].iter_mut().zip(&best_pt) {
                        *x = b + sigma * (*x - b);
                    }
                    fvals[i] = f(&simplex[i]);
                }
            }
        }
    }
}

/// Solve a small dense linear system in place by Gaussian elimination with
/// partial pivoting.
pub fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>, OptimError> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(OptimError::Singular);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Ok(x)
}

/// Complex counterpart of `solve_dense`, same elimination with partial
/// pivoting on the modulus.
pub fn solve_dense_complex(
    a: &mut [Vec<num_complex::Complex64>],
    b: &mut [num_complex::Complex64],
) -> Result<Vec<num_complex::Complex64>, OptimError> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].norm_sqr().total_cmp(&a[j][col].norm_sqr()))
            .unwrap();
        if a[pivot][col].norm_sqr() < 1e-300 {
            return Err(OptimError::Singular);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = vec![num_complex::Complex64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// Root-mean-square residual normalized by the data peak.
    pub residual: f64,
    pub iters: usize,
}

/// Damped (Levenberg-Marquardt style) nonlinear least squares with a
/// forward-difference Jacobian. `model(params, x)` is evaluated at each
/// sample abscissa; a step is only accepted if the residual decreases.
pub fn least_squares<M>(
    model: M,
    xs: &[f64],
    ys: &[f64],
    p0: &[f64],
    max_iters: usize,
) -> Result<FitResult, OptimError>
where
    M: Fn(&[f64], f64) -> f64,
{
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let np = p0.len();
    let mut p = p0.to_vec();
    let mut lambda = 1e-3;

    let sum_sq = |p: &[f64]| -> f64 {
        xs.iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let r = model(p, x) - y;
                r * r
            })
            .sum()
    };
    let mut chi2 = sum_sq(&p);
    let mut iters = 0;

    for _ in 0..max_iters {
        iters += 1;
        // residuals and Jacobian
        let res: Vec<f64> = xs.iter().zip(ys).map(|(&x, &y)| model(&p, x) - y).collect();
        let mut jac = vec![vec![0.0; np]; n];
        for j in 0..np {
            let h = 1e-7 * p[j].abs().max(1e-7);
            let mut pj = p.clone();
            pj[j] += h;
            for (i, &x) in xs.iter().enumerate() {
                jac[i][j] = (model(&pj, x) - (res[i] + ys[i])) / h;
            }
        }
        // normal equations with Marquardt damping
        let mut jtj = vec![vec![0.0; np]; np];
        let mut jtr = vec![0.0; np];
        for i in 0..n {
            for a in 0..np {
                jtr[a] += jac[i][a] * res[i];
                for b in 0..np {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..10 {
            let mut a = jtj.clone();
            for (d, row) in a.iter_mut().enumerate() {
                row[d] *= 1.0 + lambda;
            }
            let mut rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let step = match solve_dense(&mut a, &mut rhs) {
                Ok(s) => s,
                Err(_) => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
            let trial_chi2 = sum_sq(&trial);
            if trial_chi2 < chi2 {
                p = trial;
                chi2 = trial_chi2;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
        if chi2 < 1e-30 {
            break;
        }
    }

    let peak = ys.iter().fold(0.0_f64, |m, &y| m.max(y.abs())).max(1e-300);
    let residual = (chi2 / n as f64).sqrt() / peak;
    if !residual.is_finite() {
        return Err(OptimError::FitDiverged { residual });
    }
    Ok(FitResult {
        params: p,
        residual,
        iters,
    })
}
