//! Small numerical utilities: compensated summation, dense 3x3 linear
//! algebra, a closed-form 2x2 SPD square root, the standard normal CDF, and
//! byte-stable float formatting for CSV artifacts.

use crate::error::{CirError, Result};

/// Symmetric or general 3x3 matrix in row-major order.
pub type Matrix3 = [[f64; 3]; 3];

/// Kahan–Neumaier compensated accumulator.
///
/// Keeps the running error of a long sum near one ulp of the result instead
/// of growing with the number of terms; likelihood sums run to 10^6 terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Solve the 3x3 system `a x = b` by Gaussian elimination with partial
/// pivoting. Fails with [`CirError::SingularHessian`] when the best pivot
/// falls below `1e-12 * ||a||_inf`.
pub fn solve3(a: &Matrix3, b: &[f64; 3]) -> Result<[f64; 3]> {
    let mut m = *a;
    let mut v = *b;
    let norm_inf = m
        .iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let tol = 1e-12 * norm_inf.max(f64::MIN_POSITIVE);

    for col in 0..3 {
        let pivot_row = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("nonempty range");
        if !m[pivot_row][col].is_finite() || m[pivot_row][col].abs() < tol {
            return Err(CirError::SingularHessian);
        }
        m.swap(col, pivot_row);
        v.swap(col, pivot_row);
        for row in (col + 1)..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            v[row] -= f * v[col];
        }
    }

    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = v[row];
        for k in (row + 1)..3 {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    if x.iter().all(|t| t.is_finite()) {
        Ok(x)
    } else {
        Err(CirError::SingularHessian)
    }
}

/// Principal square root of a symmetric positive definite 2x2 matrix,
/// via the Cayley–Hamilton closed form
/// `sqrt(A) = (A + sqrt(det A) I) / sqrt(tr A + 2 sqrt(det A))`.
pub fn sqrt_spd_2x2(a: &[[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let tr = a[0][0] + a[1][1];
    if !(det > 0.0 && tr > 0.0) {
        return Err(CirError::NotPositiveDefinite);
    }
    let s = det.sqrt();
    let t = (tr + 2.0 * s).sqrt();
    Ok([
        [(a[0][0] + s) / t, a[0][1] / t],
        [a[1][0] / t, (a[1][1] + s) / t],
    ])
}

/// Matrix product of two 3x3 matrices.
pub fn mat3_mul(a: &Matrix3, b: &Matrix3) -> Matrix3 {
    let mut c = [[0.0; 3]; 3];
    for (i, row) in c.iter_mut().enumerate() {
        for (j, cij) in row.iter_mut().enumerate() {
            *cij = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

/// Matrix-vector product for a 3x3 matrix.
pub fn mat3_vec(a: &Matrix3, x: &[f64; 3]) -> [f64; 3] {
    let mut y = [0.0; 3];
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = (0..3).map(|k| a[i][k] * x[k]).sum();
    }
    y
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Format a float with 17 significant digits so that writing is lossless and
/// byte-identical across runs and worker counts.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kahan_recovers_small_terms_drowned_by_large_ones() {
        // Naive summation of 1e16 + 1.0 * 10^4 - 1e16 loses the ones entirely.
        let mut k = KahanSum::new();
        k.add(1e16);
        for _ in 0..10_000 {
            k.add(1.0);
        }
        k.add(-1e16);
        assert_relative_eq!(k.value(), 10_000.0, max_relative = 1e-12);
    }

    #[test]
    fn solve3_matches_hand_solution() {
        let a = [[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
        let x_true = [1.0, -2.0, 3.0];
        let b = mat3_vec(&a, &x_true);
        let x = solve3(&a, &b).unwrap();
        for i in 0..3 {
            assert_relative_eq!(x[i], x_true[i], max_relative = 1e-13);
        }
    }

    #[test]
    fn solve3_pivots_on_zero_leading_entry() {
        let a = [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let x = solve3(&a, &[2.0, 3.0, 4.0]).unwrap();
        assert_eq!(x, [3.0, 2.0, 4.0]);
    }

    #[test]
    fn solve3_rejects_singular_matrix() {
        let a = [[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]];
        assert!(matches!(
            solve3(&a, &[1.0, 2.0, 1.0]),
            Err(CirError::SingularHessian)
        ));
    }

    #[test]
    fn sqrt_spd_2x2_squares_back() {
        let a = [[0.4, -1.0], [-1.0, 3.0]];
        let s = sqrt_spd_2x2(&a).unwrap();
        let sq = [
            [
                s[0][0] * s[0][0] + s[0][1] * s[1][0],
                s[0][0] * s[0][1] + s[0][1] * s[1][1],
            ],
            [
                s[1][0] * s[0][0] + s[1][1] * s[1][0],
                s[1][0] * s[0][1] + s[1][1] * s[1][1],
            ],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(sq[i][j], a[i][j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn sqrt_spd_2x2_rejects_indefinite() {
        let a = [[1.0, 2.0], [2.0, 1.0]]; // det = -3
        assert!(matches!(
            sqrt_spd_2x2(&a),
            Err(CirError::NotPositiveDefinite)
        ));
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert_relative_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        // Phi(1.959963984540054) = 0.975
        assert_relative_eq!(normal_cdf(1.959963984540054), 0.975, epsilon = 1e-12);
        assert_relative_eq!(normal_cdf(-8.0), 6.220960574271786e-16, max_relative = 1e-10);
    }

    #[test]
    fn fmt_f64_is_lossless_and_stable() {
        for &x in &[0.1, 3.0, -2.5e-7, 1.0 / 3.0, f64::MIN_POSITIVE] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "round trip failed for {s}");
        }
        assert_eq!(fmt_f64(f64::NAN), "NaN");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }
}
