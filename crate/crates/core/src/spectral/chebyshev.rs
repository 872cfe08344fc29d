//! Adaptive Chebyshev approximation of spectral symbols on `[0, bound]`.
//!
//! This is the matrix-free route of the calculus: a symbol is fitted once
//! as a Chebyshev series over the spectral interval, then applied to a
//! vector through the Clenshaw recurrence using only generator matvecs.
//! The fit doubles the degree until both the coefficient tail and a dense
//! sample of the residual drop below the target, so agreement with the
//! eigendecomposition route is a real two-sided check rather than the
//! same computation twice.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

/// A fitted Chebyshev series for a symbol on `[0, bound]`.
#[derive(Debug, Clone)]
pub struct ChebyshevSeries {
    /// Coefficients in the `S = c0/2 + sum_{k>=1} c_k T_k` convention.
    coeffs: Vec<f64>,
    bound: f64,
}

/// Fit `g` on `[0, bound]` to uniform accuracy `tol`, doubling the degree
/// from 8 up to `max_degree` as needed.
pub fn fit(
    g: &dyn Fn(f64) -> f64,
    bound: f64,
    tol: f64,
    max_degree: usize,
    name: &str,
) -> Result<ChebyshevSeries> {
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "chebyshev bound must be positive, got {bound}"
        )));
    }
    let mut degree = 8usize;
    loop {
        let degree_now = degree.min(max_degree);
        let coeffs = coeffs_at_degree(g, bound, degree_now);
        let series = ChebyshevSeries {
            coeffs,
            bound,
        };
        let tail: f64 = series.coeffs[degree_now / 2..]
            .iter()
            .map(|c| c.abs())
            .sum();
        let mut sampled = 0.0f64;
        for i in 0..=512 {
            let u = bound * i as f64 / 512.0;
            sampled = sampled.max((series.eval(u) - g(u)).abs());
        }
        if tail.max(sampled) <= tol {
            return Ok(series.truncated(tol));
        }
        if degree_now >= max_degree {
            return Err(Error::ChebyshevDegree {
                name: name.to_string(),
                tol,
                max_degree,
            });
        }
        degree *= 2;
    }
}

/// Coefficients by discrete cosine transform on the Chebyshev extrema
/// `x_j = cos(pi j / N)`; `O(N^2)` which is fine for the degrees used here.
fn coeffs_at_degree(g: &dyn Fn(f64) -> f64, bound: f64, n: usize) -> Vec<f64> {
    let vals: Vec<f64> = (0..=n)
        .map(|j| {
            let x = (std::f64::consts::PI * j as f64 / n as f64).cos();
            g(bound * (x + 1.0) / 2.0)
        })
        .collect();
    let mut coeffs = vec![0.0f64; n + 1];
    for (k, c) in coeffs.iter_mut().enumerate() {
        let mut acc = 0.5 * (vals[0] + if k % 2 == 0 { vals[n] } else { -vals[n] });
        for (j, &v) in vals.iter().enumerate().take(n).skip(1) {
            acc += v * (std::f64::consts::PI * (k * j) as f64 / n as f64).cos();
        }
        *c = 2.0 * acc / n as f64;
    }
    // The last DCT-I coefficient is shared between mirror frequencies.
    coeffs[n] *= 0.5;
    coeffs
}

impl ChebyshevSeries {
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Drop trailing coefficients that cannot affect the target accuracy.
    fn truncated(mut self, tol: f64) -> ChebyshevSeries {
        let floor = tol / 100.0;
        let mut keep = self.coeffs.len();
        let mut tail = 0.0;
        while keep > 1 {
            tail += self.coeffs[keep - 1].abs();
            if tail > floor {
                break;
            }
            keep -= 1;
        }
        self.coeffs.truncate(keep.max(1));
        self
    }

    /// Scalar Clenshaw evaluation at `u` in `[0, bound]`.
    pub fn eval(&self, u: f64) -> f64 {
        let xi = 2.0 * u / self.bound - 1.0;
        let (mut b1, mut b2) = (0.0f64, 0.0f64);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = c + 2.0 * xi * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        0.5 * self.coeffs[0] + xi * b1 - b2
    }

    /// Operator Clenshaw: evaluates the series on `f` given the generator
    /// action `apply_l`. Uses `degree` applications of the operator.
    pub fn apply(&self, apply_l: &dyn Fn(ArrayView1<f64>) -> Array1<f64>, f: ArrayView1<f64>) -> Array1<f64> {
        // Map the operator onto [-1, 1]: A = (2/bound) L - I.
        let a = |v: ArrayView1<f64>| -> Array1<f64> {
            let mut out = apply_l(v);
            out *= 2.0 / self.bound;
            out -= &v;
            out
        };
        let n = f.len();
        let mut b1 = Array1::<f64>::zeros(n);
        let mut b2 = Array1::<f64>::zeros(n);
        for &c in self.coeffs.iter().skip(1).rev() {
            let mut b0 = a(b1.view());
            b0 *= 2.0;
            b0 -= &b2;
            b0.scaled_add(c, &f);
            b2 = std::mem::replace(&mut b1, b0);
        }
        let mut out = a(b1.view());
        out -= &b2;
        out.scaled_add(0.5 * self.coeffs[0], &f);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_fit_matches_to_target_accuracy() {
        let g = |u: f64| (-u).exp();
        let s = fit(&g, 8.0, 1e-12, 512, "heat").unwrap();
        for i in 0..=1000 {
            let u = 8.0 * i as f64 / 1000.0;
            assert!((s.eval(u) - g(u)).abs() < 5e-12);
        }
    }

    #[test]
    fn degree_cap_produces_a_typed_error() {
        let g = |u: f64| (-u).exp();
        let err = fit(&g, 200.0, 1e-15, 8, "heat").unwrap_err();
        assert!(matches!(err, Error::ChebyshevDegree { .. }));
    }

    #[test]
    fn operator_apply_matches_scalar_eval_on_a_diagonal_action() {
        // Diagonal action: L = diag(d); the series of L acts entrywise.
        let d = [0.0, 0.7, 1.9, 3.2];
        let apply_l = |v: ArrayView1<f64>| -> Array1<f64> {
            Array1::from_iter(v.iter().zip(d.iter()).map(|(x, dd)| x * dd))
        };
        let g = |u: f64| (-u).exp() * (1.0 - (-u).exp());
        let s = fit(&g, 4.0, 1e-11, 256, "band").unwrap();
        let f = ndarray::array![1.0, -2.0, 0.5, 3.0];
        let out = s.apply(&apply_l, f.view());
        for i in 0..4 {
            assert!((out[i] - g(d[i]) * f[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn truncation_keeps_accuracy() {
        let g = |u: f64| 1.0 / (1.0 + u);
        let s = fit(&g, 4.0, 1e-10, 1024, "resolvent").unwrap();
        assert!(s.degree() < 1024);
        for i in 0..=100 {
            let u = 4.0 * i as f64 / 100.0;
            assert!((s.eval(u) - g(u)).abs() < 1e-9);
        }
    }
}
