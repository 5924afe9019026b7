//! Bounded Levenberg-Marquardt least squares.
//!
//! Minimizes `Σ r_i(x)²` for a residual function `r` with box constraints
//! enforced by projection. The Jacobian is taken by central finite
//! differences, the damping is Marquardt-scaled (`JᵀJ + λ diag(JᵀJ)`) and
//! `λ` is divided by 3 after an accepted step and doubled after a rejected
//! one.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box constraints; `lower[i] == upper[i]` fixes parameter `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    fn is_fixed(&self, i: usize) -> bool {
        self.lower[i] == self.upper[i]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmOptions {
    pub max_iter: usize,
    pub initial_lambda: f64,
    /// Stop when an accepted step lowers chi² by less than this fraction.
    pub ftol: f64,
    /// Stop when the step norm falls below `xtol · (‖x‖ + xtol)`.
    pub xtol: f64,
    /// Treat residuals as already normalized by known standard deviations and
    /// skip the reduced-chi² scaling of the covariance.
    pub absolute_sigma: bool,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iter: 500,
            initial_lambda: 1e-3,
            ftol: 1e-10,
            xtol: 1e-12,
            absolute_sigma: false,
        }
    }
}

/// Outcome of a least-squares fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// Parameter covariance; rows/columns of fixed or bound-pinned
    /// parameters are zero.
    pub covariance: Vec<Vec<f64>>,
    /// Residual sum of squares at the solution.
    pub chi2: f64,
    pub n_data: usize,
    pub n_iter: usize,
    pub converged: bool,
    pub at_bound: Vec<bool>,
    /// Unit-norm parameter-space directions along which the data carry no
    /// information (near-null eigenvectors of the scaled normal matrix).
    pub flat_directions: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.params[i])
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.covariance[i][i].max(0.0).sqrt()
    }

    pub fn sigma_of(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.sigma(i))
    }

    pub fn reduced_chi2(&self) -> f64 {
        let dof = self.n_data.saturating_sub(self.params.len());
        if dof == 0 {
            f64::NAN
        } else {
            self.chi2 / dof as f64
        }
    }

    pub fn with_names<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        self.names = names.iter().map(|s| s.as_ref().to_string()).collect();
        self
    }
}

/// Finite-difference step used for parameter value `x`.
#[inline]
pub fn fd_step(x: f64) -> f64 {
    (1e-6 * x.abs()).max(1e-8)
}

/// Central-difference Jacobian, `m × n`, skipping columns in `skip`.
pub fn jacobian_central<F>(f: &F, x: &[f64], m: usize, skip: &[bool]) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        if skip.get(j).copied().unwrap_or(false) {
            continue;
        }
        let h = fd_step(x[j]);
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn all_finite(r: &[f64]) -> bool {
    r.iter().all(|v| v.is_finite())
}

/// Solve `(A + λ D) δ = −g` on the free subset, with `D = diag(A)` floored.
/// Falls back to an increasing ridge if the system is not positive definite.
fn damped_step(
    a: &DMatrix<f64>,
    g: &DVector<f64>,
    lambda: f64,
    free: &[usize],
    warnings: &mut Vec<String>,
) -> DVector<f64> {
    let n = a.nrows();
    let k = free.len();
    let mut step = DVector::zeros(n);
    if k == 0 {
        return step;
    }
    let max_diag = free.iter().map(|&i| a[(i, i)]).fold(0.0f64, f64::max);
    let floor = (max_diag * 1e-15).max(f64::MIN_POSITIVE);
    let mut m = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for (p, &i) in free.iter().enumerate() {
        for (q, &j) in free.iter().enumerate() {
            m[(p, q)] = a[(i, j)];
        }
        m[(p, p)] += lambda * a[(i, i)].max(floor);
        rhs[p] = -g[i];
    }
    let mut ridge = 0.0;
    let sol = loop {
        let mut trial = m.clone();
        for p in 0..k {
            trial[(p, p)] += ridge;
        }
        if let Some(ch) = trial.cholesky() {
            break ch.solve(&rhs);
        }
        ridge = if ridge == 0.0 {
            1e-12 * max_diag.max(1.0)
        } else {
            ridge * 10.0
        };
        let msg = "singular normal equations, ridge-regularized".to_string();
        if !warnings.contains(&msg) {
            log::warn!("{msg}");
            warnings.push(msg);
        }
        if !ridge.is_finite() {
            break DVector::zeros(k);
        }
    };
    for (p, &i) in free.iter().enumerate() {
        step[i] = sol[p];
    }
    step
}

/// Minimize the sum of squared residuals of `model` starting from `init`.
///
/// Convergence: an accepted step lowers chi² by less than `ftol` (relative),
/// or the step norm drops below `xtol`, or chi² reaches exact zero. Running
/// out of iterations returns `converged = false`. Directions the data do not
/// constrain are reported in `flat_directions` and also clear `converged`.
pub fn lm_minimize<F>(model: F, init: &[f64], bounds: &Bounds, opts: &LmOptions) -> Result<FitResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = init.len();
    if bounds.len() != n || bounds.upper.len() != n {
        return Err(Error::invalid(format!(
            "{n} parameters but bounds for {}",
            bounds.len()
        )));
    }
    for i in 0..n {
        if !init[i].is_finite() {
            return Err(Error::NonFinite("initial parameter"));
        }
        if bounds.lower[i] > bounds.upper[i] || init[i] < bounds.lower[i] || init[i] > bounds.upper[i] {
            return Err(Error::invalid(format!(
                "initial value {} of parameter {i} outside [{}, {}]",
                init[i], bounds.lower[i], bounds.upper[i]
            )));
        }
    }
    let mut x = init.to_vec();
    let mut r = model(&x);
    if !all_finite(&r) {
        return Err(Error::NonFinite("residuals at initial parameters"));
    }
    let m = r.len();
    if m == 0 {
        return Err(Error::InsufficientData("no residuals".into()));
    }
    let fixed: Vec<bool> = (0..n).map(|i| bounds.is_fixed(i)).collect();
    let mut chi2 = sum_sq(&r);
    let mut lambda = opts.initial_lambda;
    let mut warnings = Vec::new();
    let mut converged = chi2 == 0.0;
    let mut n_iter = 0;

    while !converged && n_iter < opts.max_iter {
        n_iter += 1;
        let jac = jacobian_central(&model, &x, m, &fixed);
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * DVector::from_column_slice(&r);

        // Parameters pinned at a bound with the descent direction pointing
        // outward stay put this iteration.
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                !fixed[i]
                    && !((x[i] <= bounds.lower[i] && g[i] > 0.0)
                        || (x[i] >= bounds.upper[i] && g[i] < 0.0))
            })
            .collect();

        // Predicted decrease of a full Gauss-Newton step. When it is below
        // tolerance, take that step (if it helps) and stop.
        let gn = damped_step(&a, &g, 1e-12, &free, &mut warnings);
        let predicted = -g.dot(&gn);
        if predicted <= opts.ftol * chi2 {
            let mut x_new: Vec<f64> = x.iter().zip(gn.iter()).map(|(a, b)| a + b).collect();
            bounds.project(&mut x_new);
            let r_new = model(&x_new);
            let chi2_new = sum_sq(&r_new);
            if all_finite(&r_new) && chi2_new < chi2 {
                x = x_new;
                chi2 = chi2_new;
            }
            converged = true;
            break;
        }

        loop {
            let step = damped_step(&a, &g, lambda, &free, &mut warnings);
            let mut x_new: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            bounds.project(&mut x_new);
            let dx: f64 = x_new
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let tiny_step = dx <= opts.xtol * (xnorm + opts.xtol);

            let r_new = model(&x_new);
            let chi2_new = sum_sq(&r_new);
            if all_finite(&r_new) && chi2_new < chi2 {
                x = x_new;
                r = r_new;
                chi2 = chi2_new;
                lambda = (lambda / 3.0).max(1e-300);
                if tiny_step || chi2 == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 2.0;
            if tiny_step || !lambda.is_finite() {
                // No downhill step exists at machine resolution.
                converged = true;
                break;
            }
        }
    }

    let at_bound: Vec<bool> = (0..n)
        .map(|i| !fixed[i] && (x[i] <= bounds.lower[i] || x[i] >= bounds.upper[i]))
        .collect();
    let (covariance, flat_directions) =
        covariance_at(&model, &x, m, &fixed, &at_bound, chi2, opts.absolute_sigma, n);
    if !flat_directions.is_empty() {
        let msg = format!(
            "{} unconstrained parameter direction(s); model not identifiable from these data",
            flat_directions.len()
        );
        log::warn!("{msg}");
        warnings.push(msg);
        converged = false;
    }
    if n_iter >= opts.max_iter && !converged {
        warnings.push(format!("iteration limit {} reached", opts.max_iter));
    }

    Ok(FitResult {
        names: (0..n).map(|i| format!("p{i}")).collect(),
        params: x,
        covariance,
        chi2,
        n_data: m,
        n_iter,
        converged,
        at_bound,
        flat_directions,
        warnings,
    })
}

/// Relative eigenvalue of the scaled normal matrix below which a direction
/// counts as unconstrained.
const FLAT_EIGEN_TOL: f64 = 1e-12;

/// Eigen-decomposition of `JᵀJ` restricted to `idx`, scaled to unit
/// diagonal so the spectrum is unit-free. Returns the column scales too.
fn scaled_normal_eigen(jac: &DMatrix<f64>, idx: &[usize]) -> (Vec<f64>, SymmetricEigen<f64, nalgebra::Dyn>) {
    let k = idx.len();
    let mut a = DMatrix::zeros(k, k);
    for (p, &i) in idx.iter().enumerate() {
        for (q, &j) in idx.iter().enumerate() {
            a[(p, q)] = jac.column(i).dot(&jac.column(j));
        }
    }
    let scale: Vec<f64> = (0..k)
        .map(|p| {
            let d = a[(p, p)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    for p in 0..k {
        for q in 0..k {
            a[(p, q)] *= scale[p] * scale[q];
        }
    }
    (scale, SymmetricEigen::new(a))
}

#[allow(clippy::too_many_arguments)]
fn covariance_at<F>(
    model: &F,
    x: &[f64],
    m: usize,
    fixed: &[bool],
    at_bound: &[bool],
    chi2: f64,
    absolute_sigma: bool,
    n: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut cov = vec![vec![0.0; n]; n];
    let jac = jacobian_central(model, x, m, fixed);

    // Identifiability is judged over every non-fixed parameter, so a
    // degeneracy is reported even when the fit ended on a bound.
    let active: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
    let mut flat = Vec::new();
    if !active.is_empty() {
        let (scale, eig) = scaled_normal_eigen(&jac, &active);
        let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        for (e, &ev) in eig.eigenvalues.iter().enumerate() {
            if ev <= FLAT_EIGEN_TOL * max_ev || max_ev == 0.0 {
                let v = eig.eigenvectors.column(e);
                let mut dir = vec![0.0; n];
                for (p, &i) in active.iter().enumerate() {
                    dir[i] = v[p] * scale[p];
                }
                let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
                if norm > 0.0 {
                    dir.iter_mut().for_each(|d| *d /= norm);
                }
                flat.push(dir);
            }
        }
    }

    let free: Vec<usize> = (0..n).filter(|&i| !fixed[i] && !at_bound[i]).collect();
    let k = free.len();
    if k == 0 {
        return (cov, flat);
    }
    let (scale, eig) = scaled_normal_eigen(&jac, &free);
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let mut inv = DMatrix::zeros(k, k);
    for (e, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > FLAT_EIGEN_TOL * max_ev && max_ev > 0.0 {
            let v = eig.eigenvectors.column(e);
            inv += (v * v.transpose()) / ev;
        }
    }
    let dof = m.saturating_sub(k);
    let s2 = if absolute_sigma {
        1.0
    } else if dof > 0 {
        chi2 / dof as f64
    } else {
        0.0
    };
    for (p, &i) in free.iter().enumerate() {
        for (q, &j) in free.iter().enumerate() {
            let c = 0.5 * (inv[(p, q)] + inv[(q, p)]) * scale[p] * scale[q] * s2;
            cov[i][j] = c;
        }
    }
    (cov, flat)
}
