//! Parameter estimation from one discretely observed path.
//!
//! The workflow is two-staged: closed-form initial estimators deliver a
//! root-n-consistent pilot point, then a single Newton-Raphson or Fisher
//! scoring step on the Gaussian quasi-likelihood upgrades it to asymptotic
//! efficiency. No iterative optimizer is involved anywhere, so every
//! estimator is a finite, deterministic formula of the data.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{CirError, Result};
use crate::gql::{gqlf_gradient, gqlf_hessian, info_matrix_inverse, info_sqrt, rate_diag, MomentCoeffs};
use crate::model::{theta_admissible, CirParams, SamplingScheme};
use crate::numeric::{mat3_vec, solve3, KahanSum};
use crate::simulate::Path;

/// The estimators this crate implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EstimatorKind {
    /// Closed-form pilot estimators: lag-one least squares for the drift,
    /// standardized squared residuals for the diffusion.
    #[serde(rename = "initial")]
    Initial,
    /// One Newton-Raphson step on the quasi-likelihood from the pilot.
    #[serde(rename = "newton")]
    Newton,
    /// One Fisher scoring step, using the closed-form information matrix
    /// instead of the observed Hessian.
    #[serde(rename = "scoring")]
    Scoring,
    /// Newton step with the (drift, diffusion) cross-blocks of the Hessian
    /// zeroed, exploiting the asymptotic block diagonality.
    #[serde(rename = "newton-blockdiag")]
    NewtonBlockdiag,
    /// Volatility-only estimator from normalized squared increments; the
    /// natural choice when the horizon T stays bounded.
    #[serde(rename = "fixedt-gamma")]
    FixedTGamma,
}

impl EstimatorKind {
    /// All kinds, in canonical order.
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Initial,
        EstimatorKind::Newton,
        EstimatorKind::Scoring,
        EstimatorKind::NewtonBlockdiag,
        EstimatorKind::FixedTGamma,
    ];

    /// Stable machine-readable label, used in CSV columns and CLI flags.
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Initial => "initial",
            EstimatorKind::Newton => "newton",
            EstimatorKind::Scoring => "scoring",
            EstimatorKind::NewtonBlockdiag => "newton-blockdiag",
            EstimatorKind::FixedTGamma => "fixedt-gamma",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EstimatorKind {
    type Err = CirError;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .iter()
            .find(|k| k.label() == s)
            .copied()
            .ok_or_else(|| {
                CirError::InvalidInput(format!(
                    "unknown estimator '{s}' (expected one of: initial, newton, scoring, \
                     newton-blockdiag, fixedt-gamma)"
                ))
            })
    }
}

/// Outcome of applying one estimator to one path.
///
/// `theta` is the raw, unconstrained estimate; nothing clamps it into the
/// parameter space, so entries may be negative, NaN (the fixed-horizon
/// estimator leaves the drift entries undefined), or inadmissible, and the
/// `admissible` flag reports honestly whether the triple lies in the
/// admissible set. `studentized` is only ever present together with
/// `scaled_error`; both require a known truth, see [`studentize`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EstimationResult {
    pub estimator: EstimatorKind,
    /// Estimated (alpha, beta, gamma).
    pub theta: [f64; 3],
    /// Whether `theta` lies in the admissible set (positive, 2 alpha > 5 gamma).
    pub admissible: bool,
    /// D_n (theta_hat - theta_0), if studentized against a known truth.
    pub scaled_error: Option<[f64; 3]>,
    /// I(theta_hat)^{1/2} D_n (theta_hat - theta_0), asymptotically standard
    /// normal in all three coordinates.
    pub studentized: Option<[f64; 3]>,
}

impl EstimationResult {
    fn bare(estimator: EstimatorKind, theta: [f64; 3]) -> Self {
        Self {
            estimator,
            theta,
            admissible: theta_admissible(theta[0], theta[1], theta[2]),
            scaled_error: None,
            studentized: None,
        }
    }
}

/// Closed-form initial estimators.
///
/// The lag-one regression coefficient
/// `R = sum (X_{j-1} - mean_left)(X_j - mean_right) / sum (X_{j-1} - mean_left)^2`
/// identifies `beta = -log(R) / h`; substituting into the conditional mean
/// identifies `alpha = beta (mean_right - R mean_left) / (1 - R)`; and gamma
/// is the average of squared residuals standardized by the gamma-free
/// variance factor sigma2 / gamma evaluated at the drift pilot.
///
/// Fails with [`CirError::DegenerateRegressor`] on a constant path (or a
/// single increment), [`CirError::NonPositiveCorrelation`] when R <= 0 so no
/// finite decay rate fits, and [`CirError::EmptyPath`] without increments.
pub fn initial_estimate(path: &Path) -> Result<EstimationResult> {
    let n = path.n();
    if n == 0 {
        return Err(CirError::EmptyPath);
    }
    let v = path.values();
    let h = path.scheme().h();

    let mut sum_left = KahanSum::new();
    let mut sum_right = KahanSum::new();
    for j in 1..=n {
        sum_left.add(v[j - 1]);
        sum_right.add(v[j]);
    }
    let mean_left = sum_left.value() / n as f64;
    let mean_right = sum_right.value() / n as f64;

    let mut num = KahanSum::new();
    let mut den = KahanSum::new();
    for j in 1..=n {
        let dl = v[j - 1] - mean_left;
        num.add(dl * (v[j] - mean_right));
        den.add(dl * dl);
    }
    if !(den.value() > 0.0) {
        return Err(CirError::DegenerateRegressor);
    }
    let r = num.value() / den.value();
    if !(r > 0.0) || !r.is_finite() {
        return Err(CirError::NonPositiveCorrelation(r));
    }

    let beta = -r.ln() / h;
    // e^{-beta h} equals R by construction, so use R directly.
    let alpha = beta * (mean_right - r * mean_left) / (1.0 - r);

    // Standardize residuals by the gamma-free variance factor at the drift
    // pilot. Raw coefficient evaluation: the pilot may sit outside the
    // parameter space and must still produce a (possibly inadmissible) value.
    let coeffs = MomentCoeffs::new(alpha, beta, 1.0, h);
    let mut acc = KahanSum::new();
    for j in 1..=n {
        let resid = v[j] - coeffs.mean(v[j - 1]);
        acc.add(resid * resid / coeffs.var_factor(v[j - 1]));
    }
    let gamma = acc.value() / n as f64;

    Ok(EstimationResult::bare(
        EstimatorKind::Initial,
        [alpha, beta, gamma],
    ))
}

/// Checks a pilot before a one-step refinement and rebuilds its parameters.
fn admissible_pilot(pilot: &EstimationResult) -> Result<CirParams> {
    if !pilot.admissible {
        return Err(CirError::InadmissibleInitial(
            pilot.theta[0],
            pilot.theta[1],
            pilot.theta[2],
        ));
    }
    CirParams::new(pilot.theta[0], pilot.theta[1], pilot.theta[2])
}

/// One Newton-Raphson step from an admissible pilot:
/// theta_new = theta_pilot - Hessian^{-1} gradient, both evaluated at the
/// pilot. Fails with [`CirError::InadmissibleInitial`] if the pilot is not
/// admissible and [`CirError::SingularHessian`] if the observed Hessian
/// cannot be solved at working precision.
pub fn newton_onestep(path: &Path, pilot: &EstimationResult) -> Result<EstimationResult> {
    let params = admissible_pilot(pilot)?;
    let grad = gqlf_gradient(&params, path)?;
    let hess = gqlf_hessian(&params, path)?;
    let delta = solve3(&hess, &grad)?;
    let theta = [
        pilot.theta[0] - delta[0],
        pilot.theta[1] - delta[1],
        pilot.theta[2] - delta[2],
    ];
    Ok(EstimationResult::bare(EstimatorKind::Newton, theta))
}

/// One Fisher scoring step from an admissible pilot:
/// theta_new = theta_pilot + D_n^{-1} I(pilot)^{-1} D_n^{-1} gradient,
/// replacing the observed Hessian by its deterministic limit
/// -D_n I(theta) D_n. Never needs a linear solve, since the information
/// matrix inverse is closed-form.
pub fn scoring_onestep(path: &Path, pilot: &EstimationResult) -> Result<EstimationResult> {
    let params = admissible_pilot(pilot)?;
    let grad = gqlf_gradient(&params, path)?;
    let inv = info_matrix_inverse(&params);
    let d = rate_diag(&path.scheme());
    let mut theta = pilot.theta;
    for i in 0..3 {
        let mut step = 0.0;
        for j in 0..3 {
            step += inv[i][j] * grad[j] / (d[i] * d[j]);
        }
        theta[i] += step;
    }
    Ok(EstimationResult::bare(EstimatorKind::Scoring, theta))
}

/// Newton step on the block-diagonal part of the Hessian: the (drift,
/// diffusion) cross-entries, which vanish asymptotically, are zeroed before
/// solving. Same contract as [`newton_onestep`].
pub fn newton_blockdiag_onestep(path: &Path, pilot: &EstimationResult) -> Result<EstimationResult> {
    let params = admissible_pilot(pilot)?;
    let grad = gqlf_gradient(&params, path)?;
    let mut hess = gqlf_hessian(&params, path)?;
    hess[0][2] = 0.0;
    hess[2][0] = 0.0;
    hess[1][2] = 0.0;
    hess[2][1] = 0.0;
    let delta = solve3(&hess, &grad)?;
    let theta = [
        pilot.theta[0] - delta[0],
        pilot.theta[1] - delta[1],
        pilot.theta[2] - delta[2],
    ];
    Ok(EstimationResult::bare(EstimatorKind::NewtonBlockdiag, theta))
}

/// Volatility estimator for a bounded horizon:
/// gamma_tilde = (1/n) sum (X_j - X_{j-1})^2 / (h X_{j-1}).
///
/// Only gamma is identifiable when T stays fixed, so the drift entries of
/// the result are NaN and the result is never admissible as a full triple.
pub fn fixed_t_gamma(path: &Path) -> Result<EstimationResult> {
    let n = path.n();
    if n == 0 {
        return Err(CirError::EmptyPath);
    }
    let v = path.values();
    let h = path.scheme().h();
    let mut acc = KahanSum::new();
    for j in 1..=n {
        let dx = v[j] - v[j - 1];
        acc.add(dx * dx / (h * v[j - 1]));
    }
    let gamma = acc.value() / n as f64;
    Ok(EstimationResult::bare(
        EstimatorKind::FixedTGamma,
        [f64::NAN, f64::NAN, gamma],
    ))
}

/// Attach the scaled error D_n (theta_hat - theta_0) and the studentized
/// error I(theta_hat)^{1/2} D_n (theta_hat - theta_0) to an admissible
/// estimate, given the true parameter. Under the quasi-likelihood theory the
/// studentized error is asymptotically standard trivariate normal, which is
/// what the Monte Carlo harness checks.
///
/// Fails with [`CirError::InadmissibleEstimate`] when the estimate lies
/// outside the admissible set (the information square root may not exist
/// there).
pub fn studentize(
    result: &EstimationResult,
    truth: &CirParams,
    scheme: &SamplingScheme,
) -> Result<EstimationResult> {
    if !result.admissible {
        return Err(CirError::InadmissibleEstimate(
            result.theta[0],
            result.theta[1],
            result.theta[2],
        ));
    }
    let est = CirParams::new(result.theta[0], result.theta[1], result.theta[2])?;
    let d = rate_diag(scheme);
    let truth_theta = truth.theta();
    let mut scaled = [0.0; 3];
    for i in 0..3 {
        scaled[i] = d[i] * (result.theta[i] - truth_theta[i]);
    }
    let s = info_sqrt(&est)?;
    let studentized = mat3_vec(&s, &scaled);
    Ok(EstimationResult {
        scaled_error: Some(scaled),
        studentized: Some(studentized),
        ..*result
    })
}
