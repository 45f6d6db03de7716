//! The ergodic square-root diffusion dX = (alpha - beta X) dt + sqrt(gamma X) dW,
//! its parameter space, observation grid, and stationary (invariant) law.

use serde::Serialize;

use crate::error::{CirError, Result};
use crate::numeric::KahanSum;
use crate::simulate::Path;

/// Positive parameter triple (alpha, beta, gamma) of the square-root diffusion.
///
/// Construction validates strict positivity and finiteness; values are
/// immutable afterwards, so a `CirParams` is always a usable parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CirParams {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl CirParams {
    /// Validates that all three parameters are finite and strictly positive.
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(CirError::InvalidInput(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(Self { alpha, beta, gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Parameters as the vector (alpha, beta, gamma).
    pub fn theta(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    /// True when the origin is nonattracting (2 alpha > gamma), so paths
    /// started in (0, inf) stay there. The boundary case 2 alpha == gamma is
    /// excluded conservatively.
    pub fn boundary_nonattracting(&self) -> bool {
        2.0 * self.alpha > self.gamma
    }

    /// True when the parameters lie in the admissible set used by the
    /// estimation theory: positivity plus 2 alpha > 5 gamma, which keeps the
    /// inverse second moment of the invariant law finite.
    pub fn is_admissible(&self) -> bool {
        theta_admissible(self.alpha, self.beta, self.gamma)
    }
}

/// Admissibility test for a raw, possibly unconstrained, parameter triple:
/// finite, strictly positive, and 2 alpha > 5 gamma.
pub fn theta_admissible(alpha: f64, beta: f64, gamma: f64) -> bool {
    [alpha, beta, gamma].iter().all(|v| v.is_finite() && *v > 0.0) && 2.0 * alpha > 5.0 * gamma
}

/// Equidistant observation grid t_j = j h for j = 0, ..., n.
///
/// `n` is the number of increments (so a path carries n + 1 observations);
/// n = 0 describes a grid holding only the initial point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingScheme {
    n: usize,
    h: f64,
}

impl SamplingScheme {
    /// Validates that the step size is finite and strictly positive.
    pub fn new(n: usize, h: f64) -> Result<Self> {
        if !h.is_finite() || h <= 0.0 {
            return Err(CirError::InvalidInput(format!(
                "step size h must be finite and > 0, got {h}"
            )));
        }
        Ok(Self { n, h })
    }

    /// Number of increments.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Step size between consecutive observations.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Terminal time T = n h of the grid.
    pub fn horizon(&self) -> f64 {
        self.n as f64 * self.h
    }
}

/// Invariant (stationary) law of the diffusion: a gamma distribution with
/// shape 2 alpha / gamma and rate 2 beta / gamma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantLaw {
    shape: f64,
    rate: f64,
}

impl InvariantLaw {
    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Mean shape / rate = alpha / beta.
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    /// Variance shape / rate^2 = alpha gamma / (2 beta^2).
    pub fn variance(&self) -> f64 {
        self.shape / (self.rate * self.rate)
    }
}

/// Stationary law of the diffusion at `params`.
pub fn invariant_law(params: &CirParams) -> InvariantLaw {
    InvariantLaw {
        shape: 2.0 * params.alpha() / params.gamma(),
        rate: 2.0 * params.beta() / params.gamma(),
    }
}

/// Fractional moment E[X^order] under the invariant law,
/// Gamma(order + shape) / (Gamma(shape) rate^order), evaluated in log space
/// so large shapes and orders neither overflow nor lose precision.
///
/// Finite exactly when order > -shape = -2 alpha / gamma; otherwise
/// [`CirError::MomentUndefined`].
pub fn invariant_moment(params: &CirParams, order: f64) -> Result<f64> {
    let law = invariant_law(params);
    let bound = -law.shape();
    if !(order > bound) {
        return Err(CirError::MomentUndefined { order, bound });
    }
    let log_m =
        libm::lgamma(order + law.shape()) - libm::lgamma(law.shape()) - order * law.rate().ln();
    Ok(log_m.exp())
}

/// Average of `f` over the first n observations (left endpoints) of a path:
/// (1/n) sum_{j=1..n} f(X_{t_{j-1}}). By ergodicity this converges to the
/// invariant-law expectation of `f` as the horizon grows.
pub fn ergodic_average<F: Fn(f64) -> f64>(path: &Path, f: F) -> Result<f64> {
    let n = path.n();
    if n == 0 {
        return Err(CirError::EmptyPath);
    }
    let mut acc = KahanSum::new();
    for &x in &path.values()[..n] {
        acc.add(f(x));
    }
    Ok(acc.value() / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn theta0() -> CirParams {
        CirParams::new(3.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn params_reject_nonpositive_and_nonfinite() {
        assert!(CirParams::new(0.0, 1.0, 1.0).is_err());
        assert!(CirParams::new(1.0, -2.0, 1.0).is_err());
        assert!(CirParams::new(1.0, 1.0, f64::NAN).is_err());
        assert!(CirParams::new(1.0, f64::INFINITY, 1.0).is_err());
        assert!(CirParams::new(3.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn admissibility_needs_2alpha_over_5gamma() {
        assert!(theta0().is_admissible()); // 6 > 5
        assert!(!CirParams::new(1.0, 1.0, 1.0).unwrap().is_admissible()); // 2 < 5
        assert!(!CirParams::new(2.5, 1.0, 1.0).unwrap().is_admissible()); // 5 > 5 fails
        assert!(theta_admissible(3.0, 1.0, 1.0));
        assert!(!theta_admissible(-3.0, 1.0, 1.0));
        assert!(!theta_admissible(3.0, 1.0, f64::NAN));
    }

    #[test]
    fn boundary_nonattracting_is_strict() {
        assert!(theta0().boundary_nonattracting());
        assert!(!CirParams::new(0.5, 1.0, 1.0).unwrap().boundary_nonattracting());
        assert!(!CirParams::new(0.5, 1.0, 2.0).unwrap().boundary_nonattracting()); // 2a == g
    }

    #[test]
    fn scheme_validates_step_and_exposes_horizon() {
        assert!(SamplingScheme::new(10, 0.0).is_err());
        assert!(SamplingScheme::new(10, -0.1).is_err());
        let s = SamplingScheme::new(5000, 0.1).unwrap();
        assert_relative_eq!(s.horizon(), 500.0, epsilon = 1e-12);
        // A grid holding only the initial point is allowed.
        assert_eq!(SamplingScheme::new(0, 1.0).unwrap().n(), 0);
    }

    #[test]
    fn invariant_law_shape_rate_mean_variance() {
        let law = invariant_law(&theta0());
        assert_eq!(law.shape(), 6.0);
        assert_eq!(law.rate(), 2.0);
        assert_relative_eq!(law.mean(), 3.0, epsilon = 1e-15);
        assert_relative_eq!(law.variance(), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn invariant_moments_at_reference_point() {
        // Gamma(shape 6, rate 2): E[X] = 3, E[X^-1] = rate/(shape-1) = 0.4,
        // E[X^-2] = rate^2/((shape-1)(shape-2)) = 0.2, E[X^0] = 1.
        let p = theta0();
        assert_relative_eq!(invariant_moment(&p, 1.0).unwrap(), 3.0, max_relative = 1e-12);
        assert_relative_eq!(invariant_moment(&p, -1.0).unwrap(), 0.4, max_relative = 1e-12);
        assert_relative_eq!(invariant_moment(&p, -2.0).unwrap(), 0.2, max_relative = 1e-12);
        assert_relative_eq!(invariant_moment(&p, 0.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn moment_recursion_holds_for_large_orders() {
        // E[X^(q+1)] = E[X^q] (q + shape) / rate; log-space evaluation must
        // keep this stable far beyond where Gamma(q + shape) overflows.
        let p = theta0();
        let law = invariant_law(&p);
        for &q in &[0.5, 3.0, 25.0, 140.0, 170.0] {
            let m = invariant_moment(&p, q).unwrap();
            let m1 = invariant_moment(&p, q + 1.0).unwrap();
            assert!(m.is_finite() && m1.is_finite(), "overflow at order {q}");
            assert_relative_eq!(m1, m * (q + law.shape()) / law.rate(), max_relative = 1e-10);
        }
    }

    #[test]
    fn moment_undefined_at_and_below_negative_shape() {
        let p = theta0(); // bound: order > -6
        assert!(matches!(
            invariant_moment(&p, -6.0),
            Err(CirError::MomentUndefined { .. })
        ));
        assert!(invariant_moment(&p, -5.999).is_ok());
        assert!(matches!(
            invariant_moment(&p, -8.5),
            Err(CirError::MomentUndefined { .. })
        ));
    }

    #[test]
    fn ergodic_average_uses_left_endpoints() {
        let scheme = SamplingScheme::new(3, 1.0).unwrap();
        let path = Path::new(scheme, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        // mean of {1, 2, 3}
        assert_relative_eq!(
            ergodic_average(&path, |x| x).unwrap(),
            2.0,
            epsilon = 1e-15
        );
        let single = Path::new(SamplingScheme::new(0, 1.0).unwrap(), vec![1.0]).unwrap();
        assert!(matches!(
            ergodic_average(&single, |x| x),
            Err(CirError::EmptyPath)
        ));
    }
}
