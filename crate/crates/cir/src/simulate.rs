//! Exact simulation of the square-root diffusion on an equidistant grid.
//!
//! The transition law is known in closed form: given X_{t-h} = x,
//! X_t / c follows a noncentral chi-square distribution with
//! d = 4 alpha / gamma degrees of freedom and noncentrality
//! lambda = x e^{-beta h} / c, where c = gamma (1 - e^{-beta h}) / (4 beta).
//! Sampling that law exactly makes paths free of discretization bias, unlike
//! Euler schemes, so estimator bias measured downstream is attributable to
//! the estimator alone.

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::Serialize;

use crate::error::{CirError, Result};
use crate::model::{CirParams, SamplingScheme};
use crate::numeric::fmt_f64;

/// A discretely observed trajectory: values X_{t_0}, ..., X_{t_n} on the
/// grid t_j = j h. All entries are finite and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    scheme: SamplingScheme,
    values: Vec<f64>,
}

impl Path {
    /// Validates that `values` has length `scheme.n() + 1` and that every
    /// entry is finite and strictly positive.
    pub fn new(scheme: SamplingScheme, values: Vec<f64>) -> Result<Self> {
        if values.len() != scheme.n() + 1 {
            return Err(CirError::InvalidInput(format!(
                "path length {} does not match grid with n = {} increments",
                values.len(),
                scheme.n()
            )));
        }
        if let Some((j, &x)) = values
            .iter()
            .enumerate()
            .find(|(_, &x)| !x.is_finite() || x <= 0.0)
        {
            return Err(CirError::InvalidInput(format!(
                "path value at index {j} must be finite and > 0, got {x}"
            )));
        }
        Ok(Self { scheme, values })
    }

    pub fn scheme(&self) -> SamplingScheme {
        self.scheme
    }

    /// Observations X_{t_0}, ..., X_{t_n}.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of increments n (one less than the number of observations).
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    /// Write the path as CSV with header `t,x`, one row per observation,
    /// floats carrying 17 significant digits so the file is lossless and
    /// byte-stable.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,x")?;
        let h = self.scheme.h();
        for (j, &x) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", fmt_f64(j as f64 * h), fmt_f64(x))?;
        }
        Ok(())
    }

    /// Read a path written by [`Path::write_csv`] (or any CSV with header
    /// `t,x`); the step size is supplied by the caller since the time column
    /// is redundant.
    pub fn read_csv<R: BufRead>(r: R, h: f64) -> Result<Self> {
        let mut values = Vec::new();
        let mut lines = r.lines().enumerate();
        match lines.next() {
            Some((_, Ok(header))) if header.trim() == "t,x" => {}
            Some((_, Ok(header))) => {
                return Err(CirError::Parse {
                    line: 1,
                    msg: format!("expected header 't,x', got '{}'", header.trim()),
                })
            }
            Some((_, Err(e))) => return Err(e.into()),
            None => {
                return Err(CirError::Parse {
                    line: 1,
                    msg: "empty file".to_string(),
                })
            }
        }
        for (idx, line) in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let x_field = line.split(',').nth(1).ok_or_else(|| CirError::Parse {
                line: idx + 1,
                msg: "expected two comma-separated fields".to_string(),
            })?;
            let x: f64 = x_field.trim().parse().map_err(|e| CirError::Parse {
                line: idx + 1,
                msg: format!("bad float '{x_field}': {e}"),
            })?;
            values.push(x);
        }
        if values.is_empty() {
            return Err(CirError::Parse {
                line: 2,
                msg: "no observations".to_string(),
            });
        }
        let scheme = SamplingScheme::new(values.len() - 1, h)?;
        Path::new(scheme, values)
    }
}

/// Seed of one reproducible random stream. The master seed keys the cipher,
/// the replication index selects a statistically independent stream, so
/// replication r draws the same numbers no matter which worker runs it or in
/// what order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StreamSeed {
    pub master_seed: u64,
    pub replication_index: u64,
}

impl StreamSeed {
    pub fn new(master_seed: u64, replication_index: u64) -> Self {
        Self {
            master_seed,
            replication_index,
        }
    }

    /// Instantiate the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.replication_index);
        rng
    }
}

/// Scale and degrees of freedom (c, d) of the one-step transition:
/// c = gamma (1 - e^{-beta h}) / (4 beta), d = 4 alpha / gamma.
/// The noncentrality for a step from x is lambda = x e^{-beta h} / c.
pub fn transition_constants(params: &CirParams, h: f64) -> (f64, f64) {
    // 1 - e^{-beta h} via expm1 keeps full precision for small beta h.
    let one_minus_e = -(-params.beta() * h).exp_m1();
    let c = params.gamma() * one_minus_e / (4.0 * params.beta());
    let d = 4.0 * params.alpha() / params.gamma();
    (c, d)
}

/// Draw X_{t+h} given X_t = x, exactly, from the scaled noncentral
/// chi-square transition law.
///
/// For d > 1 the draw is c ((Z + sqrt(lambda))^2 + Q) with Z standard normal
/// and Q chi-square with d - 1 degrees of freedom; for d <= 1 it is a
/// Poisson(lambda / 2) mixture of central chi-squares with d + 2K degrees of
/// freedom. Both branches are exact, not approximations.
pub fn sample_transition<R: Rng + ?Sized>(
    params: &CirParams,
    x: f64,
    h: f64,
    rng: &mut R,
) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(CirError::InvalidInput(format!(
            "transition start value must be finite and > 0, got {x}"
        )));
    }
    if !h.is_finite() || h <= 0.0 {
        return Err(CirError::InvalidInput(format!(
            "step size must be finite and > 0, got {h}"
        )));
    }
    let (c, d) = transition_constants(params, h);
    if !d.is_finite() || d <= 0.0 {
        return Err(CirError::DegenerateKernel(d));
    }
    let lambda = x * (-params.beta() * h).exp() / c;
    let chi2 = if d > 1.0 {
        // (Z + sqrt(lambda))^2 is noncentral chi-square with 1 degree of
        // freedom; an independent central chi-square supplies the rest.
        let z: f64 = rng.sample(StandardNormal);
        let w = z + lambda.sqrt();
        let q = Gamma::new((d - 1.0) / 2.0, 2.0)
            .expect("shape and scale are positive")
            .sample(rng);
        w * w + q
    } else {
        // Mixture representation, valid for all d > 0.
        let k = Poisson::new(lambda / 2.0)
            .map_err(|e| CirError::InvalidInput(format!("poisson mixing weight: {e}")))?
            .sample(rng);
        Gamma::new((d + 2.0 * k) / 2.0, 2.0)
            .expect("shape and scale are positive")
            .sample(rng)
    };
    Ok(c * chi2)
}

/// Draw from the invariant law Gamma(2 alpha / gamma, rate 2 beta / gamma).
pub fn sample_stationary<R: Rng + ?Sized>(params: &CirParams, rng: &mut R) -> f64 {
    let shape = 2.0 * params.alpha() / params.gamma();
    let scale = params.gamma() / (2.0 * params.beta());
    Gamma::new(shape, scale)
        .expect("shape and scale are positive")
        .sample(rng)
}

/// Simulate a stationary path on the grid of `scheme`: the initial value is
/// drawn from the invariant law and each step from the exact transition law.
/// The same `seed` always reproduces the same path.
pub fn simulate_path(
    params: &CirParams,
    scheme: &SamplingScheme,
    seed: StreamSeed,
) -> Result<Path> {
    let mut rng = seed.rng();
    let mut values = Vec::with_capacity(scheme.n() + 1);
    let mut x = sample_stationary(params, &mut rng);
    values.push(x);
    for _ in 0..scheme.n() {
        x = sample_transition(params, x, scheme.h(), &mut rng)?;
        values.push(x);
    }
    Path::new(*scheme, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn theta0() -> CirParams {
        CirParams::new(3.0, 1.0, 1.0).unwrap()
    }

    /// Conditional mean written out independently of the estimation code.
    fn cond_mean(p: &CirParams, x: f64, h: f64) -> f64 {
        let e = (-p.beta() * h).exp();
        e * x + p.alpha() / p.beta() * (1.0 - e)
    }

    /// Conditional variance written out independently of the estimation code.
    fn cond_var(p: &CirParams, x: f64, h: f64) -> f64 {
        let e = (-p.beta() * h).exp();
        p.gamma() / p.beta() * (1.0 - e) * (e * x + p.alpha() / (2.0 * p.beta()) * (1.0 - e))
    }

    #[test]
    fn transition_constants_reference_point() {
        // c = (1 - e^{-0.1}) / 4, d = 12 at (alpha, beta, gamma) = (3, 1, 1), h = 0.1.
        let (c, d) = transition_constants(&theta0(), 0.1);
        assert_relative_eq!(c, 0.023790645491010107, max_relative = 1e-14);
        assert_eq!(d, 12.0);
        let lambda = 2.0 * (-0.1_f64).exp() / c;
        assert_relative_eq!(lambda, 76.0666555582004, max_relative = 1e-13);
    }

    #[test]
    fn transition_constants_match_conditional_moments() {
        // The kernel is consistent with the conditional moments:
        // c (d + lambda) = mean, c^2 (2d + 4 lambda) = variance.
        let cases = [
            (theta0(), 2.0, 0.1),
            (CirParams::new(1.2, 0.3, 0.4).unwrap(), 0.7, 0.05),
            (CirParams::new(5.0, 2.0, 1.9).unwrap(), 4.2, 1.3),
        ];
        for (p, x, h) in cases {
            let (c, d) = transition_constants(&p, h);
            let lambda = x * (-p.beta() * h).exp() / c;
            assert_relative_eq!(c * (d + lambda), cond_mean(&p, x, h), max_relative = 1e-13);
            assert_relative_eq!(
                c * c * (2.0 * d + 4.0 * lambda),
                cond_var(&p, x, h),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn transition_draws_match_moments_high_dof() {
        // d = 12 exercises the normal-plus-chi-square branch.
        let p = theta0();
        let (x0, h, m) = (2.0, 0.1, 20_000);
        let mut rng = StreamSeed::new(7, 0).rng();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..m {
            let x = sample_transition(&p, x0, h, &mut rng).unwrap();
            assert!(x > 0.0);
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / m as f64;
        let var = sumsq / m as f64 - mean * mean;
        let (mu, s2) = (cond_mean(&p, x0, h), cond_var(&p, x0, h));
        let se_mean = (s2 / m as f64).sqrt();
        assert!(
            (mean - mu).abs() < 5.0 * se_mean,
            "mean {mean} vs {mu} (5 se = {})",
            5.0 * se_mean
        );
        assert_relative_eq!(var, s2, max_relative = 0.05);
    }

    #[test]
    fn transition_draws_match_moments_low_dof() {
        // alpha = 0.2, gamma = 1 gives d = 0.8, exercising the Poisson branch.
        let p = CirParams::new(0.2, 1.0, 1.0).unwrap();
        let (x0, h, m) = (0.5, 0.1, 40_000);
        let mut rng = StreamSeed::new(11, 0).rng();
        let mut sum = 0.0;
        for _ in 0..m {
            let x = sample_transition(&p, x0, h, &mut rng).unwrap();
            assert!(x > 0.0, "draw left (0, inf): {x}");
            sum += x;
        }
        let mean = sum / m as f64;
        let mu = cond_mean(&p, x0, h);
        let se = (cond_var(&p, x0, h) / m as f64).sqrt();
        assert!(
            (mean - mu).abs() < 5.0 * se,
            "mean {mean} vs {mu} (5 se = {})",
            5.0 * se
        );
    }

    #[test]
    fn transition_rejects_bad_start_values() {
        let mut rng = StreamSeed::new(0, 0).rng();
        assert!(sample_transition(&theta0(), 0.0, 0.1, &mut rng).is_err());
        assert!(sample_transition(&theta0(), -1.0, 0.1, &mut rng).is_err());
        assert!(sample_transition(&theta0(), f64::NAN, 0.1, &mut rng).is_err());
        assert!(sample_transition(&theta0(), 1.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn stationary_draws_match_invariant_moments() {
        let p = theta0();
        let m = 50_000;
        let mut rng = StreamSeed::new(13, 0).rng();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..m {
            let x = sample_stationary(&p, &mut rng);
            assert!(x > 0.0);
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / m as f64;
        let var = sumsq / m as f64 - mean * mean;
        // Invariant law: mean 3, variance 1.5.
        assert_relative_eq!(mean, 3.0, max_relative = 0.01);
        assert_relative_eq!(var, 1.5, max_relative = 0.06);
    }

    #[test]
    fn simulate_path_is_reproducible_and_stream_separated() {
        let p = theta0();
        let scheme = SamplingScheme::new(200, 0.1).unwrap();
        let a = simulate_path(&p, &scheme, StreamSeed::new(42, 3)).unwrap();
        let b = simulate_path(&p, &scheme, StreamSeed::new(42, 3)).unwrap();
        assert_eq!(a.values(), b.values(), "same seed must reproduce exactly");
        let c = simulate_path(&p, &scheme, StreamSeed::new(42, 4)).unwrap();
        assert_ne!(a.values(), c.values(), "streams must differ");
        let d = simulate_path(&p, &scheme, StreamSeed::new(43, 3)).unwrap();
        assert_ne!(a.values(), d.values(), "master seeds must differ");
        assert_eq!(a.values().len(), 201);
    }

    #[test]
    fn simulate_path_n_zero_is_one_stationary_draw() {
        let scheme = SamplingScheme::new(0, 0.1).unwrap();
        let path = simulate_path(&theta0(), &scheme, StreamSeed::new(5, 0)).unwrap();
        assert_eq!(path.values().len(), 1);
        assert!(path.values()[0] > 0.0);
    }

    #[test]
    fn path_validation_rejects_bad_values() {
        let scheme = SamplingScheme::new(2, 1.0).unwrap();
        assert!(Path::new(scheme, vec![1.0, 2.0]).is_err()); // wrong length
        assert!(Path::new(scheme, vec![1.0, 0.0, 2.0]).is_err()); // zero entry
        assert!(Path::new(scheme, vec![1.0, f64::NAN, 2.0]).is_err());
        assert!(Path::new(scheme, vec![1.0, 2.0, 3.0]).is_ok());
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let p = theta0();
        let scheme = SamplingScheme::new(50, 0.1).unwrap();
        let path = simulate_path(&p, &scheme, StreamSeed::new(99, 0)).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let back = Path::read_csv(buf.as_slice(), scheme.h()).unwrap();
        assert_eq!(back.values(), path.values());
        assert_eq!(back.scheme(), scheme);
    }

    #[test]
    fn csv_reader_rejects_malformed_input() {
        assert!(matches!(
            Path::read_csv("time,value\n0,1\n".as_bytes(), 1.0),
            Err(CirError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Path::read_csv("t,x\n0,oops\n".as_bytes(), 1.0),
            Err(CirError::Parse { line: 2, .. })
        ));
        assert!(Path::read_csv("t,x\n".as_bytes(), 1.0).is_err());
        // Negative observation violates the path invariant.
        assert!(Path::read_csv("t,x\n0,1.0\n1,-2.0\n".as_bytes(), 1.0).is_err());
    }
}
