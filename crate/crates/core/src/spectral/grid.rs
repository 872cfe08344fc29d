//! Geometric scale grids and the log-midpoint quadrature rule.
//!
//! Integrals of the form `int_0^infty F(t) dt/t` are discretized as
//! `sum_j F(t_j) ln(ratio)` on a geometric grid `t_j = t_min ratio^j`.
//! Each node is the log-midpoint of its cell, so refining the ratio to
//! its square root halves the log step and drives the discretization
//! error down at second order (and much faster for analytic integrands).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::Generator;

/// Default span of `[alpha / lambda_max, beta / lambda_2]` for a generator.
pub const DEFAULT_ALPHA: f64 = 1e-4;
pub const DEFAULT_BETA: f64 = 1e4;

/// Geometric grid of scales with a common quadrature weight.
#[derive(Debug, Clone, Serialize)]
pub struct ScaleGrid {
    points: Vec<f64>,
    ratio: f64,
}

impl ScaleGrid {
    /// Points `t_min * ratio^j` until `t_max` is covered (inclusive).
    pub fn geometric(t_min: f64, t_max: f64, ratio: f64) -> Result<ScaleGrid> {
        if !(t_min > 0.0) || !t_min.is_finite() {
            return Err(Error::EmptyGrid(format!("t_min must be positive, got {t_min}")));
        }
        if !(t_max >= t_min) || !t_max.is_finite() {
            return Err(Error::EmptyGrid(format!(
                "t_max must be >= t_min, got [{t_min}, {t_max}]"
            )));
        }
        if !(ratio > 1.0) || !ratio.is_finite() {
            return Err(Error::EmptyGrid(format!("ratio must exceed 1, got {ratio}")));
        }
        // Fixed point count so refinement reproduces coarse nodes exactly.
        let steps = ((t_max / t_min).ln() / ratio.ln() - 1e-12).ceil().max(0.0) as usize;
        let points = (0..=steps).map(|j| t_min * ratio.powi(j as i32)).collect();
        Ok(ScaleGrid { points, ratio })
    }

    /// Grid covering `[alpha / lambda_max, beta / lambda_2]` of a generator:
    /// from well below the fastest mode to well past the slowest one.
    pub fn for_generator(gen: &Generator, ratio: f64, alpha: f64, beta: f64) -> Result<ScaleGrid> {
        let es = gen.eigensystem()?;
        let lmax = es.lambda_max();
        let l2 = es.lambda2().ok_or_else(|| {
            Error::EmptyGrid("generator has no positive eigenvalue".to_string())
        })?;
        ScaleGrid::geometric(alpha / lmax, beta / l2, ratio)
    }

    /// `for_generator` with the default span.
    pub fn for_generator_default(gen: &Generator, ratio: f64) -> Result<ScaleGrid> {
        ScaleGrid::for_generator(gen, ratio, DEFAULT_ALPHA, DEFAULT_BETA)
    }

    /// Same span with the ratio replaced by its square root; the coarse
    /// nodes reappear as every other refined node.
    pub fn refine(&self) -> ScaleGrid {
        let t_min = self.points[0];
        let t_max = *self.points.last().unwrap();
        ScaleGrid::geometric(t_min, t_max, self.ratio.sqrt())
            .expect("refining a valid grid cannot fail")
    }

    /// Drop every other node, keeping the first; the inverse of `refine`
    /// up to span, used to estimate quadrature error by coarsening.
    pub fn coarsen(&self) -> ScaleGrid {
        let points: Vec<f64> = self.points.iter().copied().step_by(2).collect();
        ScaleGrid {
            points,
            ratio: self.ratio * self.ratio,
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// Quadrature weight per node for `int F dt/t`.
    pub fn weight(&self) -> f64 {
        self.ratio.ln()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Midpoint-rule value of `int F(t) dt/t` for a per-node integrand.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.points.len());
        values.iter().sum::<f64>() * self.weight()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_grid_covers_the_requested_span() {
        let g = ScaleGrid::geometric(1e-3, 1e3, 2.0).unwrap();
        assert_eq!(g.points()[0], 1e-3);
        assert!(*g.points().last().unwrap() >= 1e3 * (1.0 - 1e-12));
        for w in g.points().windows(2) {
            assert!((w[1] / w[0] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn refine_nests_the_coarse_nodes() {
        let g = ScaleGrid::geometric(0.5, 100.0, 4.0).unwrap();
        let r = g.refine();
        assert!((r.ratio() - 2.0).abs() < 1e-15);
        for (j, &t) in g.points().iter().enumerate() {
            let fine = r.points()[2 * j];
            assert!((fine / t - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coarsen_doubles_the_ratio_and_keeps_odd_nodes_out() {
        let g = ScaleGrid::geometric(1.0, 256.0, 2.0).unwrap();
        let c = g.coarsen();
        assert_eq!(c.ratio(), 4.0);
        assert_eq!(c.points()[0], 1.0);
        assert_eq!(c.points()[1], 4.0);
    }

    #[test]
    fn invalid_grids_are_rejected() {
        assert!(ScaleGrid::geometric(0.0, 1.0, 2.0).is_err());
        assert!(ScaleGrid::geometric(1.0, 0.5, 2.0).is_err());
        assert!(ScaleGrid::geometric(1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn log_midpoint_rule_integrates_band_pass_to_one_half() {
        // Oracle: int_0^infty e^{-u} (1 - e^{-u}) du = 1/2 exactly.
        let g = ScaleGrid::geometric(1e-7, 1e5, 2f64.powf(0.25)).unwrap();
        let vals: Vec<f64> = g
            .points()
            .iter()
            .map(|&u| u * (-u).exp() * (1.0 - (-u).exp()))
            .collect();
        let got = g.integrate(&vals);
        assert!((got - 0.5).abs() < 1e-6, "got {got}");
    }

    #[test]
    fn refinement_reduces_quadrature_error_from_a_coarse_start() {
        let integrand = |u: f64| u * (-u).exp() * (1.0 - (-u).exp());
        let exact = 0.5;
        let coarse = ScaleGrid::geometric(1e-7, 1e5, 4.0).unwrap();
        let fine = coarse.refine();
        let eval = |g: &ScaleGrid| {
            let vals: Vec<f64> = g.points().iter().map(|&u| integrand(u)).collect();
            (g.integrate(&vals) - exact).abs()
        };
        let (ec, ef) = (eval(&coarse), eval(&fine));
        assert!(
            ef * 2.0 <= ec,
            "refinement did not halve the error: coarse {ec}, fine {ef}"
        );
    }
}
