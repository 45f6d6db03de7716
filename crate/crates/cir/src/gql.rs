//! Gaussian quasi-likelihood for the discretely observed square-root
//! diffusion, its analytic score, a finite-difference Hessian, and the
//! asymptotic information matrix.
//!
//! The quasi-likelihood replaces the true (noncentral chi-square) transition
//! density with a Gaussian matched to the exact conditional mean and
//! variance,
//!
//! ```text
//! mu(x)     = e^{-beta h} x + (alpha / beta)(1 - e^{-beta h}),
//! sigma2(x) = (gamma / beta)(1 - e^{-beta h})
//!             (e^{-beta h} x + (alpha / (2 beta))(1 - e^{-beta h})),
//! ```
//!
//! and sums the full Gaussian log-density over all transitions. Maximizing it
//! is asymptotically efficient under high-frequency ergodic sampling even
//! though the Gaussian density is misspecified.

use crate::error::{CirError, Result};
use crate::model::{CirParams, SamplingScheme};
use crate::numeric::{sqrt_spd_2x2, KahanSum, Matrix3};
use crate::simulate::Path;

/// Conditional mean and variance of one transition, with their gradients in
/// theta = (alpha, beta, gamma).
///
/// `grad_mean[2] == 0` (the mean does not involve gamma) and
/// `grad_var[2] == var / gamma` (the variance is linear in gamma), both by
/// construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondMoments {
    pub mean: f64,
    pub var: f64,
    pub grad_mean: [f64; 3],
    pub grad_var: [f64; 3],
}

/// Per-parameter coefficients of the conditional moments, hoisted out of the
/// per-observation loop: mu(x) and sigma2(x) are affine in x, so one pass
/// over a path needs only these scalars, not an exp() per step.
///
/// Construction is deliberately unvalidated (raw reals), because the initial
/// estimator must evaluate the variance factor at a pilot estimate that may
/// fall outside the parameter space.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MomentCoeffs {
    h: f64,
    gamma: f64,
    /// e^{-beta h}
    e: f64,
    /// (1 - e^{-beta h}) / beta, also d mu / d alpha
    g: f64,
    /// (alpha / beta)(1 - e^{-beta h})
    mu_const: f64,
    /// constant part of d mu / d beta (x part is -h e)
    dmu_db_const: f64,
    /// x coefficient of c(x) = sigma2(x) / gamma
    c_x: f64,
    /// constant part of c(x)
    c_const: f64,
    /// d c / d alpha (x-free)
    dc_da: f64,
    /// x coefficient of d c / d beta
    dc_db_x: f64,
    /// constant part of d c / d beta
    dc_db_const: f64,
}

impl MomentCoeffs {
    pub(crate) fn new(alpha: f64, beta: f64, gamma: f64, h: f64) -> Self {
        let e = (-beta * h).exp();
        // 1 - e^{-beta h} via expm1: full precision for small beta h.
        let f = -(-beta * h).exp_m1();
        let g = f / beta;
        // d g / d beta
        let gp = (h * e * beta - f) / (beta * beta);
        Self {
            h,
            gamma,
            e,
            g,
            mu_const: alpha / beta * f,
            dmu_db_const: alpha * gp,
            c_x: g * e,
            c_const: g * alpha / (2.0 * beta) * f,
            dc_da: g * f / (2.0 * beta),
            dc_db_x: e * (gp - g * h),
            dc_db_const: alpha * g * gp,
        }
    }

    /// Conditional mean from x.
    pub(crate) fn mean(&self, x: f64) -> f64 {
        self.e * x + self.mu_const
    }

    /// Variance factor c(x) = sigma2(x) / gamma, which does not involve gamma.
    pub(crate) fn var_factor(&self, x: f64) -> f64 {
        self.c_x * x + self.c_const
    }

    /// Full moments and gradients from x.
    pub(crate) fn eval(&self, x: f64) -> CondMoments {
        let c = self.var_factor(x);
        CondMoments {
            mean: self.mean(x),
            var: self.gamma * c,
            grad_mean: [self.g, -self.h * self.e * x + self.dmu_db_const, 0.0],
            grad_var: [
                self.gamma * self.dc_da,
                self.gamma * (self.dc_db_x * x + self.dc_db_const),
                c,
            ],
        }
    }
}

/// Exact conditional mean and variance of X_{t+h} given X_t = x, with
/// gradients in theta.
pub fn cond_moments(params: &CirParams, x: f64, h: f64) -> CondMoments {
    MomentCoeffs::new(params.alpha(), params.beta(), params.gamma(), h).eval(x)
}

fn ln_2pi() -> f64 {
    (2.0 * std::f64::consts::PI).ln()
}

/// Gaussian quasi-log-likelihood of the path:
/// sum over transitions of log phi(X_{t_j}; mu(X_{t_{j-1}}), sigma2(X_{t_{j-1}})),
/// including the -1/2 log(2 pi) normalizer. Terms are accumulated with
/// compensated summation so paths of 10^6 steps lose no precision.
///
/// Fails with [`CirError::NonFiniteLikelihood`] if a conditional variance
/// underflows to zero or any term leaves the reals (the step index is the
/// 1-based transition number), and [`CirError::EmptyPath`] when the path has
/// no increments.
pub fn gqlf(params: &CirParams, path: &Path) -> Result<f64> {
    let n = path.n();
    if n == 0 {
        return Err(CirError::EmptyPath);
    }
    let coeffs = MomentCoeffs::new(params.alpha(), params.beta(), params.gamma(), path.scheme().h());
    let half_ln_2pi = 0.5 * ln_2pi();
    let values = path.values();
    let mut acc = KahanSum::new();
    for j in 1..=n {
        let x_prev = values[j - 1];
        let var = params.gamma() * coeffs.var_factor(x_prev);
        if !(var > 0.0) || !var.is_finite() {
            return Err(CirError::NonFiniteLikelihood { step: j });
        }
        let r = values[j] - coeffs.mean(x_prev);
        let term = -half_ln_2pi - 0.5 * var.ln() - 0.5 * r * r / var;
        if !term.is_finite() {
            return Err(CirError::NonFiniteLikelihood { step: j });
        }
        acc.add(term);
    }
    Ok(acc.value())
}

/// Analytic gradient of [`gqlf`] in theta. For each transition, with residual
/// r = x_j - mu and variance s = sigma2,
///
/// ```text
/// d log phi = (d mu) r / s + (1/2)(d s)(r^2 / s^2 - 1 / s),
/// ```
///
/// and the gamma component reduces exactly to (r^2 / s - 1) / (2 gamma).
pub fn gqlf_gradient(params: &CirParams, path: &Path) -> Result<[f64; 3]> {
    let n = path.n();
    if n == 0 {
        return Err(CirError::EmptyPath);
    }
    let coeffs = MomentCoeffs::new(params.alpha(), params.beta(), params.gamma(), path.scheme().h());
    let values = path.values();
    let mut acc = [KahanSum::new(), KahanSum::new(), KahanSum::new()];
    for j in 1..=n {
        let m = coeffs.eval(values[j - 1]);
        if !(m.var > 0.0) || !m.var.is_finite() {
            return Err(CirError::NonFiniteLikelihood { step: j });
        }
        let r = values[j] - m.mean;
        let score_mean = r / m.var;
        // (1/2)(r^2 / s^2 - 1 / s)
        let score_var = 0.5 * (r * r / (m.var * m.var) - 1.0 / m.var);
        let g_alpha = m.grad_mean[0] * score_mean + m.grad_var[0] * score_var;
        let g_beta = m.grad_mean[1] * score_mean + m.grad_var[1] * score_var;
        // grad_var[2] = var / gamma makes this (r^2 / var - 1) / (2 gamma).
        let g_gamma = (r * r / m.var - 1.0) / (2.0 * params.gamma());
        for (a, g) in acc.iter_mut().zip([g_alpha, g_beta, g_gamma]) {
            if !g.is_finite() {
                return Err(CirError::NonFiniteLikelihood { step: j });
            }
            a.add(g);
        }
    }
    Ok([acc[0].value(), acc[1].value(), acc[2].value()])
}

/// Hessian of [`gqlf`], by central finite differences of the analytic
/// gradient with per-coordinate step 1e-5 (1 + |theta_k|), symmetrized as
/// (H + H^T) / 2. Differencing the exact gradient keeps entries accurate to
/// about square-root machine precision, ample for a Newton step.
pub fn gqlf_hessian(params: &CirParams, path: &Path) -> Result<Matrix3> {
    let theta = params.theta();
    let mut columns = [[0.0; 3]; 3];
    for k in 0..3 {
        let step = 1e-5 * (1.0 + theta[k].abs());
        let mut up = theta;
        up[k] += step;
        let mut down = theta;
        down[k] -= step;
        let g_up = gqlf_gradient(&CirParams::new(up[0], up[1], up[2])?, path)?;
        let g_down = gqlf_gradient(&CirParams::new(down[0], down[1], down[2])?, path)?;
        for i in 0..3 {
            columns[k][i] = (g_up[i] - g_down[i]) / (2.0 * step);
        }
    }
    let mut hess = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            hess[i][j] = 0.5 * (columns[j][i] + columns[i][j]);
        }
    }
    Ok(hess)
}

/// Diagonal of the rate matrix D_n = diag(sqrt(T), sqrt(T), sqrt(n)) with
/// T = n h: the drift components converge at sqrt(T), the diffusion
/// component at sqrt(n).
///
/// Panics if the scheme has no increments (n = 0), for which no rate exists.
pub fn rate_diag(scheme: &SamplingScheme) -> [f64; 3] {
    assert!(scheme.n() >= 1, "rate matrix needs at least one increment");
    let sqrt_t = scheme.horizon().sqrt();
    [sqrt_t, sqrt_t, (scheme.n() as f64).sqrt()]
}

/// The rate matrix D_n as a diagonal 3x3 matrix; see [`rate_diag`].
pub fn rate_matrix(scheme: &SamplingScheme) -> Matrix3 {
    let d = rate_diag(scheme);
    [[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]]
}

/// Asymptotic information matrix of the quasi-likelihood: block diagonal
/// between the drift pair (alpha, beta) and the diffusion parameter gamma.
///
/// Positive definite on the admissible set (it needs 2 alpha > gamma for the
/// inverse invariant moment in the top-left entry to be finite).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoMatrix {
    entries: Matrix3,
}

impl InfoMatrix {
    /// Full 3x3 matrix.
    pub fn entries(&self) -> Matrix3 {
        self.entries
    }

    /// The (alpha, beta) block.
    pub fn drift_block(&self) -> [[f64; 2]; 2] {
        [
            [self.entries[0][0], self.entries[0][1]],
            [self.entries[1][0], self.entries[1][1]],
        ]
    }

    /// The scalar gamma entry 1 / (2 gamma^2).
    pub fn gamma_entry(&self) -> f64 {
        self.entries[2][2]
    }
}

/// Closed-form information matrix at `params`:
///
/// ```text
/// (1/gamma) [ 2 beta / (2 alpha - gamma)   -1            ]   on (alpha, beta),
///           [ -1                            alpha / beta ]
/// 1 / (2 gamma^2)                                             on gamma,
/// ```
///
/// where 2 beta / (2 alpha - gamma) is the inverse moment E[1/X] of the
/// invariant law.
pub fn info_matrix(params: &CirParams) -> InfoMatrix {
    let (a, b, g) = (params.alpha(), params.beta(), params.gamma());
    let inv_moment = 2.0 * b / (2.0 * a - g);
    InfoMatrix {
        entries: [
            [inv_moment / g, -1.0 / g, 0.0],
            [-1.0 / g, a / (b * g), 0.0],
            [0.0, 0.0, 1.0 / (2.0 * g * g)],
        ],
    }
}

/// Closed-form inverse of [`info_matrix`]:
///
/// ```text
/// [ alpha (2 alpha - gamma) / beta   2 alpha - gamma   0          ]
/// [ 2 alpha - gamma                  2 beta            0          ]
/// [ 0                                0                 2 gamma^2  ]
/// ```
///
/// Its diagonal gives the asymptotic variances of the scaled estimation
/// errors.
pub fn info_matrix_inverse(params: &CirParams) -> Matrix3 {
    let (a, b, g) = (params.alpha(), params.beta(), params.gamma());
    let k = 2.0 * a - g;
    [
        [a * k / b, k, 0.0],
        [k, 2.0 * b, 0.0],
        [0.0, 0.0, 2.0 * g * g],
    ]
}

/// Principal square root of [`info_matrix`], used to studentize scaled
/// estimation errors. Computed blockwise: a closed-form 2x2 SPD square root
/// on the drift block, a scalar square root on the gamma entry.
///
/// Fails with [`CirError::NotPositiveDefinite`] outside the region where the
/// information matrix is positive definite (e.g. 2 alpha <= gamma).
pub fn info_sqrt(params: &CirParams) -> Result<Matrix3> {
    let info = info_matrix(params);
    let s = sqrt_spd_2x2(&info.drift_block())?;
    let gamma_entry = info.gamma_entry();
    if !(gamma_entry > 0.0) || !gamma_entry.is_finite() {
        return Err(CirError::NotPositiveDefinite);
    }
    Ok([
        [s[0][0], s[0][1], 0.0],
        [s[1][0], s[1][1], 0.0],
        [0.0, 0.0, gamma_entry.sqrt()],
    ])
}
