//! Lower bounds on operator norms between weighted L^p spaces.
//!
//! The estimator is a nonlinear power iteration: apply the operator,
//! take the norming functional of the output in L^q, pull it back through
//! the adjoint, and take the norming element of the result in L^p. Every
//! iterate yields an honest Rayleigh quotient, so the reported value is a
//! certified lower bound on the true norm regardless of convergence; the
//! `converged` flag only says whether the iteration stabilized. Multiple
//! restarts from labeled random substreams guard against bad basins.
//!
//! Input exponents must be genuine norms (`p >= 1`, including infinity);
//! output exponents may be quasinorms (`q > 0`), which bilinear forms
//! need. In the endpoint dual steps, `p = infinity` produces sign
//! patterns and `p = 1` concentrates on the argmax, with deterministic
//! smallest-index ties.

use ndarray::{Array1, ArrayView1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::space::Exponent;
use crate::tol;

/// An operator given by its action and its plain (counting-coordinate)
/// transpose: `<T f, g> = <f, T^t g>` with unweighted sums.
pub trait LinearAction: Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn apply(&self, f: ArrayView1<f64>) -> Array1<f64>;
    fn apply_transpose(&self, g: ArrayView1<f64>) -> Array1<f64>;
}

/// A bilinear map with counting-coordinate transposes in each slot:
/// `<T(f,g), h> = <f, T1^t(h; g)> = <g, T2^t(h; f)>`.
pub trait BilinearAction: Sync {
    fn dim_first(&self) -> usize;
    fn dim_second(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn apply(&self, f: ArrayView1<f64>, g: ArrayView1<f64>) -> Array1<f64>;
    fn transpose_first(&self, h: ArrayView1<f64>, g: ArrayView1<f64>) -> Array1<f64>;
    fn transpose_second(&self, h: ArrayView1<f64>, f: ArrayView1<f64>) -> Array1<f64>;
}

/// Tuning knobs for the power iteration.
#[derive(Debug, Clone)]
pub struct MixedNormConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Relative stall tolerance on the Rayleigh quotient.
    pub tol: f64,
    pub seed: u64,
    /// Substream label; distinct estimates should use distinct labels.
    pub label: String,
}

impl Default for MixedNormConfig {
    fn default() -> Self {
        MixedNormConfig {
            restarts: 16,
            max_iterations: 120,
            tol: tol::POWER_ITERATION,
            seed: 0,
            label: "operator-norm".to_string(),
        }
    }
}

/// Outcome of a norm estimate. `norm` is a lower bound in all cases.
#[derive(Debug, Clone, Serialize)]
pub struct MixedNormEstimate {
    pub norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub restarts: usize,
    #[serde(skip)]
    pub witness: Array1<f64>,
}

/// Outcome of a bilinear norm estimate.
#[derive(Debug, Clone, Serialize)]
pub struct BilinearNormEstimate {
    pub norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub restarts: usize,
    #[serde(skip)]
    pub witness_first: Array1<f64>,
    #[serde(skip)]
    pub witness_second: Array1<f64>,
}

fn validate_measure(nu: &[f64]) -> Result<()> {
    for (x, &v) in nu.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::SingularWeight { vertex: x, value: v });
        }
    }
    Ok(())
}

fn validate_input_exponent(p: Exponent) -> Result<()> {
    match p {
        Exponent::Inf => Ok(()),
        Exponent::P(v) if v >= 1.0 && v.is_finite() => Ok(()),
        Exponent::P(v) => Err(Error::InvalidParameter(format!(
            "input exponent must be >= 1, got {v}"
        ))),
    }
}

fn validate_output_exponent(q: Exponent) -> Result<()> {
    match q {
        Exponent::Inf => Ok(()),
        Exponent::P(v) if v > 0.0 && v.is_finite() => Ok(()),
        Exponent::P(v) => Err(Error::InvalidParameter(format!(
            "output exponent must be positive, got {v}"
        ))),
    }
}

/// Weighted L^p norm against an explicit measure vector.
pub fn lp_weighted(v: ArrayView1<f64>, nu: &[f64], p: Exponent) -> f64 {
    match p {
        Exponent::Inf => v.iter().fold(0.0f64, |m, &x| m.max(x.abs())),
        Exponent::P(p) => v
            .iter()
            .zip(nu)
            .map(|(&x, &w)| x.abs().powf(p) * w)
            .sum::<f64>()
            .powf(1.0 / p),
    }
}

/// Norming functional of `u` in `L^q(nu)`: a `v` with
/// `sum u v nu = ||u||_q` and unit dual norm. For `q < 1` this is the
/// formal analogue used as an ascent direction.
fn norming_functional(u: ArrayView1<f64>, nu: &[f64], q: Exponent, norm: f64) -> Array1<f64> {
    match q {
        Exponent::Inf => {
            let mut best = 0usize;
            for (i, &x) in u.iter().enumerate() {
                if x.abs() > u[best].abs() {
                    best = i;
                }
            }
            let mut v = Array1::zeros(u.len());
            v[best] = u[best].signum_or_one() / nu[best];
            v
        }
        Exponent::P(q) => {
            let scale = norm.max(1e-300).powf(q - 1.0);
            Array1::from_iter(u.iter().map(|&x| {
                if x == 0.0 {
                    0.0
                } else {
                    x.abs().powf(q - 1.0) * x.signum() / scale
                }
            }))
        }
    }
}

/// Norming element: the unit vector of `L^p(nu)` maximizing
/// `sum f w nu` for a given gradient `w`.
fn norming_element(w: ArrayView1<f64>, nu: &[f64], p: Exponent) -> Array1<f64> {
    match p {
        Exponent::Inf => Array1::from_iter(w.iter().map(|&x| x.signum_or_one())),
        Exponent::P(p) if p == 1.0 => {
            // Concentrate on the largest |w|; smallest index on ties.
            let mut best = 0usize;
            for (i, &x) in w.iter().enumerate() {
                if x.abs() > w[best].abs() {
                    best = i;
                }
            }
            let mut f = Array1::zeros(w.len());
            f[best] = w[best].signum_or_one() / nu[best];
            f
        }
        Exponent::P(p) => {
            let dual = 1.0 / (p - 1.0);
            let f = Array1::from_iter(w.iter().map(|&x| {
                if x == 0.0 {
                    0.0
                } else {
                    x.abs().powf(dual) * x.signum()
                }
            }));
            let n = lp_weighted(f.view(), nu, Exponent::P(p));
            if n > 0.0 {
                f / n
            } else {
                f
            }
        }
    }
}

trait SignumOrOne {
    fn signum_or_one(self) -> f64;
}
impl SignumOrOne for f64 {
    fn signum_or_one(self) -> f64 {
        if self < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
}

/// Lower bound on `||T||_{L^p(nu_in) -> L^q(nu_out)}` by restarted
/// nonlinear power iteration.
pub fn operator_norm(
    action: &dyn LinearAction,
    nu_in: &[f64],
    nu_out: &[f64],
    p: Exponent,
    q: Exponent,
    cfg: &MixedNormConfig,
) -> Result<MixedNormEstimate> {
    let (n_in, n_out) = (action.dim_in(), action.dim_out());
    if nu_in.len() != n_in || nu_out.len() != n_out {
        return Err(Error::InvalidParameter(format!(
            "measure lengths ({}, {}) do not match operator dims ({n_in}, {n_out})",
            nu_in.len(),
            nu_out.len()
        )));
    }
    validate_measure(nu_in)?;
    validate_measure(nu_out)?;
    validate_input_exponent(p)?;
    validate_output_exponent(q)?;

    let mut best = MixedNormEstimate {
        norm: 0.0,
        converged: false,
        iterations: 0,
        restarts: 0,
        witness: Array1::zeros(n_in),
    };
    let restarts = cfg.restarts.max(1);
    for r in 0..restarts {
        let mut f = start_vector(n_in, r, cfg);
        let norm_f = lp_weighted(f.view(), nu_in, p);
        if norm_f == 0.0 {
            continue;
        }
        f /= norm_f;
        let mut prev = f64::NEG_INFINITY;
        let mut stalled = 0usize;
        let mut converged = false;
        let mut iters = 0usize;
        for _ in 0..cfg.max_iterations {
            iters += 1;
            let u = action.apply(f.view());
            let sigma = lp_weighted(u.view(), nu_out, q);
            if sigma > best.norm {
                best.norm = sigma;
                best.witness = f.clone();
            }
            if sigma == 0.0 {
                converged = true;
                break;
            }
            if (sigma - prev).abs() <= cfg.tol * sigma.max(1.0) {
                stalled += 1;
                if stalled >= 2 {
                    converged = true;
                    break;
                }
            } else {
                stalled = 0;
            }
            prev = sigma;
            let v = norming_functional(u.view(), nu_out, q, sigma);
            // nu-adjoint pull-back: w = nu_in^{-1} T^t (nu_out v).
            let weighted_v = Array1::from_iter(v.iter().zip(nu_out).map(|(&a, &b)| a * b));
            let mut w = action.apply_transpose(weighted_v.view());
            for (x, val) in w.iter_mut().enumerate() {
                *val /= nu_in[x];
            }
            f = norming_element(w.view(), nu_in, p);
            let nf = lp_weighted(f.view(), nu_in, p);
            if nf == 0.0 {
                break;
            }
            f /= nf;
        }
        best.iterations += iters;
        best.restarts = r + 1;
        best.converged |= converged;
    }
    Ok(best)
}

/// Lower bound on the bilinear norm
/// `||T||: L^{p1}(nu1) x L^{p2}(nu2) -> L^r(nu_out)` by alternating
/// power iteration over the two slots.
#[allow(clippy::too_many_arguments)]
pub fn bilinear_norm(
    action: &dyn BilinearAction,
    nu1: &[f64],
    nu2: &[f64],
    nu_out: &[f64],
    p1: Exponent,
    p2: Exponent,
    r_out: Exponent,
    cfg: &MixedNormConfig,
) -> Result<BilinearNormEstimate> {
    let (n1, n2, n_out) = (action.dim_first(), action.dim_second(), action.dim_out());
    if nu1.len() != n1 || nu2.len() != n2 || nu_out.len() != n_out {
        return Err(Error::InvalidParameter(
            "measure lengths do not match bilinear dims".to_string(),
        ));
    }
    validate_measure(nu1)?;
    validate_measure(nu2)?;
    validate_measure(nu_out)?;
    validate_input_exponent(p1)?;
    validate_input_exponent(p2)?;
    validate_output_exponent(r_out)?;

    let mut best = BilinearNormEstimate {
        norm: 0.0,
        converged: false,
        iterations: 0,
        restarts: 0,
        witness_first: Array1::zeros(n1),
        witness_second: Array1::zeros(n2),
    };
    let restarts = cfg.restarts.max(1);
    for rs in 0..restarts {
        let mut f = start_vector(n1, rs, cfg);
        let mut g = start_vector(
            n2,
            rs,
            &MixedNormConfig {
                label: format!("{}-second", cfg.label),
                ..cfg.clone()
            },
        );
        let (nf, ng) = (lp_weighted(f.view(), nu1, p1), lp_weighted(g.view(), nu2, p2));
        if nf == 0.0 || ng == 0.0 {
            continue;
        }
        f /= nf;
        g /= ng;
        let mut prev = f64::NEG_INFINITY;
        let mut stalled = 0usize;
        let mut converged = false;
        let mut iters = 0usize;
        for _ in 0..cfg.max_iterations {
            iters += 1;
            let u = action.apply(f.view(), g.view());
            let sigma = lp_weighted(u.view(), nu_out, r_out);
            if sigma > best.norm {
                best.norm = sigma;
                best.witness_first = f.clone();
                best.witness_second = g.clone();
            }
            if sigma == 0.0 {
                converged = true;
                break;
            }
            if (sigma - prev).abs() <= cfg.tol * sigma.max(1.0) {
                stalled += 1;
                if stalled >= 2 {
                    converged = true;
                    break;
                }
            } else {
                stalled = 0;
            }
            prev = sigma;
            let v = norming_functional(u.view(), nu_out, r_out, sigma);
            let weighted_v = Array1::from_iter(v.iter().zip(nu_out).map(|(&a, &b)| a * b));

            // Ascend in the first slot with the second held fixed.
            let mut w1 = action.transpose_first(weighted_v.view(), g.view());
            for (x, val) in w1.iter_mut().enumerate() {
                *val /= nu1[x];
            }
            f = norming_element(w1.view(), nu1, p1);
            let nf = lp_weighted(f.view(), nu1, p1);
            if nf == 0.0 {
                break;
            }
            f /= nf;

            // Then the second slot against the refreshed first.
            let u_mid = action.apply(f.view(), g.view());
            let sigma_mid = lp_weighted(u_mid.view(), nu_out, r_out);
            if sigma_mid > best.norm {
                best.norm = sigma_mid;
                best.witness_first = f.clone();
                best.witness_second = g.clone();
            }
            let v_mid = norming_functional(u_mid.view(), nu_out, r_out, sigma_mid);
            let weighted_mid =
                Array1::from_iter(v_mid.iter().zip(nu_out).map(|(&a, &b)| a * b));
            let mut w2 = action.transpose_second(weighted_mid.view(), f.view());
            for (x, val) in w2.iter_mut().enumerate() {
                *val /= nu2[x];
            }
            g = norming_element(w2.view(), nu2, p2);
            let ng = lp_weighted(g.view(), nu2, p2);
            if ng == 0.0 {
                break;
            }
            g /= ng;
        }
        best.iterations += iters;
        best.restarts = rs + 1;
        best.converged |= converged;
    }
    Ok(best)
}

/// Deterministic first start (all ones), labeled random fields after.
fn start_vector(n: usize, restart: usize, cfg: &MixedNormConfig) -> Array1<f64> {
    if restart == 0 {
        Array1::ones(n)
    } else {
        let label = format!("{}-restart-{restart}", cfg.label);
        let mut rng = crate::rng::substream(cfg.seed, &label);
        crate::rng::normal_field(&mut rng, n)
    }
}

// ----------------------------------------------------------------------
// Adapters.
// ----------------------------------------------------------------------

/// Dense matrix in counting coordinates: `(T f)(x) = sum_y A[x][y] f(y)`.
pub struct DenseOperator {
    pub matrix: ndarray::Array2<f64>,
}

impl LinearAction for DenseOperator {
    fn dim_in(&self) -> usize {
        self.matrix.ncols()
    }
    fn dim_out(&self) -> usize {
        self.matrix.nrows()
    }
    fn apply(&self, f: ArrayView1<f64>) -> Array1<f64> {
        self.matrix.dot(&f)
    }
    fn apply_transpose(&self, g: ArrayView1<f64>) -> Array1<f64> {
        self.matrix.t().dot(&g)
    }
}

/// A spectral function of a generator as a linear action. Self-adjoint in
/// the measure inner product, so the counting transpose conjugates by the
/// measure.
pub struct SpectralOperator<'a> {
    pub gen: &'a crate::spectral::Generator,
    pub func: crate::spectral::SpectralFunction,
    pub t: f64,
}

impl LinearAction for SpectralOperator<'_> {
    fn dim_in(&self) -> usize {
        self.gen.len()
    }
    fn dim_out(&self) -> usize {
        self.gen.len()
    }
    fn apply(&self, f: ArrayView1<f64>) -> Array1<f64> {
        self.gen
            .apply_function(&self.func, self.t, f)
            .expect("spectral apply on validated generator")
    }
    fn apply_transpose(&self, g: ArrayView1<f64>) -> Array1<f64> {
        let mu = self.gen.space().measures();
        let scaled = Array1::from_iter(g.iter().zip(mu).map(|(&v, &m)| v / m));
        let mut out = self.apply(scaled.view());
        for (x, v) in out.iter_mut().enumerate() {
            *v *= mu[x];
        }
        out
    }
}

/// Pointwise product `T(f, g) = f g`.
pub struct PointwiseProduct {
    pub n: usize,
}

impl BilinearAction for PointwiseProduct {
    fn dim_first(&self) -> usize {
        self.n
    }
    fn dim_second(&self) -> usize {
        self.n
    }
    fn dim_out(&self) -> usize {
        self.n
    }
    fn apply(&self, f: ArrayView1<f64>, g: ArrayView1<f64>) -> Array1<f64> {
        Array1::from_iter(f.iter().zip(g.iter()).map(|(&a, &b)| a * b))
    }
    fn transpose_first(&self, h: ArrayView1<f64>, g: ArrayView1<f64>) -> Array1<f64> {
        self.apply(h, g)
    }
    fn transpose_second(&self, h: ArrayView1<f64>, f: ArrayView1<f64>) -> Array1<f64> {
        self.apply(h, f)
    }
}
