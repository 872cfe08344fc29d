//! Generators and the semigroup functional calculus.
//!
//! A generator is the positive semidefinite operator `L = M^{-1} Q` on a
//! space, where `Q` is a graph stiffness form and `M` the diagonal measure.
//! `L` is self-adjoint in the measure-weighted inner product, and for a
//! connected graph its kernel is exactly the constants.
//!
//! Functions of `tL` are evaluated along two independent routes:
//! a dense route through the full eigendecomposition of the symmetrized
//! matrix `M^{-1/2} Q M^{-1/2}`, and a matrix-free route through Chebyshev
//! series on a Gershgorin interval. Their agreement is one of the standing
//! cross-checks of the crate.

pub mod chebyshev;
pub mod grid;

use std::fmt;
use std::sync::{Arc, OnceLock};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use ndarray_linalg::{Eigh, UPLO};

use crate::error::{Error, Result};
use crate::space::{Ball, Space};
use crate::tol;

pub use chebyshev::ChebyshevSeries;
pub use grid::ScaleGrid;

/// How the stiffness form is assembled from the edges.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorKind {
    /// Edge weight `1 / len^2`.
    Combinatorial,
    /// Edge weight `a_e / len^2` with prescribed positive coefficients,
    /// one per edge (in the space's edge order).
    Divergence { coeffs: Vec<f64> },
}

/// Default cap on the size of the dense eigendecomposition.
pub const DENSE_CAP: usize = 4096;

/// Positive semidefinite generator with a cached eigendecomposition.
pub struct Generator {
    space: Arc<Space>,
    kind: GeneratorKind,
    /// Parabolic homogeneity order: scale `t` pairs with radius `t^(1/m)`.
    homogeneity: f64,
    q_diag: Vec<f64>,
    /// Off-diagonal stiffness entries: `Q[u][v] = -w` for each edge.
    q_edges: Vec<(u32, u32, f64)>,
    dense_cap: usize,
    eigen: OnceLock<Arc<Eigensystem>>,
}

/// Eigendecomposition of a generator: `L = V diag(lambda) V^T M` with
/// measure-orthonormal columns, `V^T M V = I`.
pub struct Eigensystem {
    pub lambda: Array1<f64>,
    /// Columns are the eigenvectors.
    pub basis: Array2<f64>,
    /// `M V`; analysis coefficients are `weighted^T f`.
    pub weighted: Array2<f64>,
}

/// One entry of a batched apply: evaluate `func(t L)` on an input column.
#[derive(Debug, Clone)]
pub struct ApplyJob {
    pub func: SpectralFunction,
    pub t: f64,
    pub col: usize,
}

impl Generator {
    /// Assemble the stiffness form over a space's edges.
    pub fn assemble(space: Arc<Space>, kind: GeneratorKind) -> Result<Generator> {
        let n = space.len();
        if let GeneratorKind::Divergence { coeffs } = &kind {
            if coeffs.len() != space.edges().len() {
                return Err(Error::InvalidParameter(format!(
                    "{} coefficients for {} edges",
                    coeffs.len(),
                    space.edges().len()
                )));
            }
            for (e, &a) in coeffs.iter().enumerate() {
                if !(a > 0.0) || !a.is_finite() {
                    return Err(Error::EllipticityViolation { edge: e, coeff: a });
                }
            }
        }
        let mut q_diag = vec![0.0f64; n];
        let mut q_edges = Vec::with_capacity(space.edges().len());
        for (e, edge) in space.edges().iter().enumerate() {
            let a = match &kind {
                GeneratorKind::Combinatorial => 1.0,
                GeneratorKind::Divergence { coeffs } => coeffs[e],
            };
            let w = a / (edge.len * edge.len);
            q_diag[edge.u] += w;
            q_diag[edge.v] += w;
            q_edges.push((edge.u as u32, edge.v as u32, w));
        }
        Ok(Generator {
            space,
            kind,
            homogeneity: 2.0,
            q_diag,
            q_edges,
            dense_cap: DENSE_CAP,
            eigen: OnceLock::new(),
        })
    }

    pub fn with_homogeneity(mut self, m: f64) -> Result<Generator> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "homogeneity order must be positive, got {m}"
            )));
        }
        self.homogeneity = m;
        Ok(self)
    }

    pub fn with_dense_cap(mut self, cap: usize) -> Generator {
        self.dense_cap = cap;
        self
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn kind(&self) -> &GeneratorKind {
        &self.kind
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn homogeneity(&self) -> f64 {
        self.homogeneity
    }

    /// Radius paired with a scale: `r = t^(1/m)`.
    pub fn radius_for_scale(&self, t: f64) -> f64 {
        t.powf(1.0 / self.homogeneity)
    }

    /// Scale paired with a radius: `t = r^m`.
    pub fn scale_for_radius(&self, r: f64) -> f64 {
        r.powf(self.homogeneity)
    }

    /// Off-diagonal stiffness entries `(u, v, w)` with `Q[u][v] = -w`.
    pub(crate) fn stiffness_edges(&self) -> &[(u32, u32, f64)] {
        &self.q_edges
    }

    /// Stiffness action `Q f`.
    pub fn apply_q(&self, f: ArrayView1<f64>) -> Array1<f64> {
        let mut out = Array1::from_iter(self.q_diag.iter().zip(f.iter()).map(|(d, v)| d * v));
        for &(u, v, w) in &self.q_edges {
            let (u, v) = (u as usize, v as usize);
            out[u] -= w * f[v];
            out[v] -= w * f[u];
        }
        out
    }

    /// Generator action `L f = M^{-1} Q f`.
    pub fn apply(&self, f: ArrayView1<f64>) -> Array1<f64> {
        let mut out = self.apply_q(f);
        for (v, m) in out.iter_mut().zip(self.space.measures()) {
            *v /= m;
        }
        out
    }

    /// Dirichlet form `sum_e w_e (f_u - f_v)(g_u - g_v) = <L f, g>_mu`.
    pub fn quadratic_form(&self, f: ArrayView1<f64>, g: ArrayView1<f64>) -> f64 {
        let mut acc = 0.0;
        for &(u, v, w) in &self.q_edges {
            let (u, v) = (u as usize, v as usize);
            acc += w * (f[u] - f[v]) * (g[u] - g[v]);
        }
        acc
    }

    /// Gershgorin bound on the spectrum of `L`: `max_x 2 Q_xx / mu_x`.
    pub fn spectral_bound(&self) -> f64 {
        self.q_diag
            .iter()
            .zip(self.space.measures())
            .map(|(d, m)| 2.0 * d / m)
            .fold(0.0f64, f64::max)
    }

    /// Dense eigendecomposition, computed once and cached.
    pub fn eigensystem(&self) -> Result<Arc<Eigensystem>> {
        if let Some(es) = self.eigen.get() {
            return Ok(es.clone());
        }
        let es = Arc::new(self.compute_eigensystem()?);
        let _ = self.eigen.set(es.clone());
        Ok(self.eigen.get().unwrap().clone())
    }

    /// Seed the cache from a previously saved eigensystem.
    pub fn set_eigensystem(&self, es: Arc<Eigensystem>) -> Result<()> {
        if es.lambda.len() != self.len() {
            return Err(Error::Cache(format!(
                "cached eigensystem has {} modes for {} vertices",
                es.lambda.len(),
                self.len()
            )));
        }
        let _ = self.eigen.set(es);
        Ok(())
    }

    fn compute_eigensystem(&self) -> Result<Eigensystem> {
        let n = self.len();
        if n > self.dense_cap {
            return Err(Error::DenseCapExceeded {
                n,
                cap: self.dense_cap,
            });
        }
        // Symmetrize: S = M^{-1/2} Q M^{-1/2} shares eigenvalues with L.
        let mu = self.space.measures();
        let inv_sqrt: Vec<f64> = mu.iter().map(|m| 1.0 / m.sqrt()).collect();
        let mut s = Array2::<f64>::zeros((n, n));
        for (x, &d) in self.q_diag.iter().enumerate() {
            s[[x, x]] = d * inv_sqrt[x] * inv_sqrt[x];
        }
        for &(u, v, w) in &self.q_edges {
            let (u, v) = (u as usize, v as usize);
            let val = -w * inv_sqrt[u] * inv_sqrt[v];
            s[[u, v]] += val;
            s[[v, u]] += val;
        }
        let (mut lambda, u) = s
            .eigh(UPLO::Lower)
            .map_err(|e| Error::Backend(format!("eigendecomposition failed: {e}")))?;

        let lmax = lambda.iter().cloned().fold(0.0f64, f64::max);
        let cut = tol::KERNEL_CUT * lmax.max(1.0);
        for l in lambda.iter_mut() {
            if *l < cut {
                *l = 0.0;
            }
        }

        // Back-transform to measure-orthonormal eigenvectors of L.
        let mut basis = u;
        for (i, mut row) in basis.rows_mut().into_iter().enumerate() {
            row *= inv_sqrt[i];
        }
        // Fix signs deterministically: largest-magnitude entry positive.
        for mut col in basis.columns_mut() {
            let mut best = 0usize;
            for (i, &v) in col.iter().enumerate() {
                if v.abs() > col[best].abs() + 1e-15 {
                    best = i;
                }
            }
            if col[best] < 0.0 {
                col *= -1.0;
            }
        }
        // The kernel of a connected graph is exactly the constants; store
        // that eigenvector exactly so projections onto it are exact.
        if lambda[0] == 0.0 {
            let c = 1.0 / self.space.total_mass().sqrt();
            basis.column_mut(0).fill(c);
        }
        let mut weighted = basis.clone();
        for (i, mut row) in weighted.rows_mut().into_iter().enumerate() {
            row *= mu[i];
        }
        Ok(Eigensystem {
            lambda,
            basis,
            weighted,
        })
    }

    /// Dense-route apply: `func(t L) f` through the eigendecomposition.
    pub fn apply_function(
        &self,
        func: &SpectralFunction,
        t: f64,
        f: ArrayView1<f64>,
    ) -> Result<Array1<f64>> {
        let jobs = [ApplyJob {
            func: func.clone(),
            t,
            col: 0,
        }];
        let fields = f.insert_axis(Axis(1));
        let out = self.apply_batch(&jobs, fields)?;
        Ok(out.column(0).to_owned())
    }

    /// Batched dense-route apply. Job `j` computes `func_j(t_j L)` on input
    /// column `col_j`; the whole batch costs two `n x n x J` multiplies.
    pub fn apply_batch(&self, jobs: &[ApplyJob], fields: ArrayView2<f64>) -> Result<Array2<f64>> {
        let es = self.eigensystem()?;
        let n = self.len();
        if fields.nrows() != n {
            return Err(Error::InvalidParameter(format!(
                "input has {} rows for {} vertices",
                fields.nrows(),
                n
            )));
        }
        for job in jobs {
            if job.col >= fields.ncols() {
                return Err(Error::InvalidParameter(format!(
                    "job references input column {} of {}",
                    job.col,
                    fields.ncols()
                )));
            }
            if !(job.t >= 0.0) || !job.t.is_finite() {
                return Err(Error::FunctionDomainError {
                    name: job.func.name(),
                    arg: job.t,
                });
            }
        }
        let coeffs = es.weighted.t().dot(&fields);
        let mut scaled = Array2::<f64>::zeros((n, jobs.len()));
        for (j, job) in jobs.iter().enumerate() {
            let src = coeffs.column(job.col);
            let mut dst = scaled.column_mut(j);
            for k in 0..n {
                let g = if es.lambda[k] == 0.0 {
                    job.func.at_zero()
                } else {
                    job.func.eval(job.t * es.lambda[k])
                };
                dst[k] = g * src[k];
            }
        }
        Ok(es.basis.dot(&scaled))
    }

    /// Matrix-free apply through an adaptive Chebyshev fit on the
    /// Gershgorin interval. Independent of the dense route.
    pub fn apply_function_chebyshev(
        &self,
        func: &SpectralFunction,
        t: f64,
        f: ArrayView1<f64>,
        fit_tol: f64,
        max_degree: usize,
    ) -> Result<Array1<f64>> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::FunctionDomainError {
                name: func.name(),
                arg: t,
            });
        }
        let bound = self.spectral_bound().max(1e-300) * t.max(1e-300);
        let g = |u: f64| func.eval(u);
        let series = chebyshev::fit(&g, bound, fit_tol, max_degree, &func.name())?;
        let apply_tl = |v: ArrayView1<f64>| {
            let mut out = self.apply(v);
            out *= t;
            out
        };
        let mut out = series.apply(&apply_tl, f);
        // The series carries the continuous extension of the symbol; when
        // the calculus assigns a different value at the kernel, correct the
        // constant mode by the gap.
        let gap = func.eval(0.0) - func.at_zero();
        if gap != 0.0 {
            let mean = self.space.mean(f);
            out -= &(Array1::from_elem(self.len(), gap * mean));
        }
        Ok(out)
    }

    /// Heat kernel matrix `K_t` with action `sum_y K_t(x, y) f(y) mu(y)`.
    pub fn heat_kernel(&self, t: f64) -> Result<Array2<f64>> {
        let es = self.eigensystem()?;
        let n = self.len();
        let mut scaled = es.basis.clone();
        for (k, mut col) in scaled.columns_mut().into_iter().enumerate() {
            col *= (-t * es.lambda[k]).exp();
        }
        let mut out = Array2::zeros((n, n));
        ndarray::linalg::general_mat_mul(1.0, &scaled, &es.basis.t(), 0.0, &mut out);
        Ok(out)
    }

    /// Square root of the carre du champ:
    /// `|grad f|(x) = sqrt( sum_{y ~ x} w_xy (f_x - f_y)^2 / (2 mu_x) )`,
    /// normalized so `sum_x |grad f|^2 mu = <Q f, f>`.
    pub fn gradient_field(&self, f: ArrayView1<f64>) -> Array1<f64> {
        let n = self.len();
        let mut acc = vec![0.0f64; n];
        for &(u, v, w) in &self.q_edges {
            let (u, v) = (u as usize, v as usize);
            let d = f[u] - f[v];
            acc[u] += 0.5 * w * d * d;
            acc[v] += 0.5 * w * d * d;
        }
        Array1::from_iter(
            acc.into_iter()
                .zip(self.space.measures())
                .map(|(a, m)| (a / m).sqrt()),
        )
    }
}

impl Eigensystem {
    pub fn lambda_max(&self) -> f64 {
        self.lambda.iter().cloned().fold(0.0f64, f64::max)
    }

    /// Smallest positive eigenvalue (spectral gap), if any.
    pub fn lambda2(&self) -> Option<f64> {
        self.lambda.iter().cloned().filter(|&l| l > 0.0).fold(
            None,
            |acc: Option<f64>, l| Some(acc.map_or(l, |a| a.min(l))),
        )
    }

    /// Analysis coefficients `V^T M f`.
    pub fn coeffs(&self, f: ArrayView1<f64>) -> Array1<f64> {
        self.weighted.t().dot(&f)
    }

    /// Synthesis `V c`.
    pub fn synth(&self, c: ArrayView1<f64>) -> Array1<f64> {
        self.basis.dot(&c)
    }

    const MAGIC: &'static [u8; 8] = b"SGCALC01";

    /// Serialize to a little-endian binary sidecar with a checksum.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let n = self.lambda.len();
        let mut payload = Vec::with_capacity(16 + 8 * n * (2 * n + 1));
        payload.extend_from_slice(&(n as u64).to_le_bytes());
        for &v in self.lambda.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        for &v in self.basis.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        for &v in self.weighted.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        let mut out = Vec::with_capacity(payload.len() + 16);
        out.extend_from_slice(Self::MAGIC);
        out.extend_from_slice(&fnv64(&payload).to_le_bytes());
        out.extend_from_slice(&payload);
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Load a sidecar written by `save`, validating magic and checksum.
    pub fn load(path: &std::path::Path) -> Result<Eigensystem> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < 24 || &bytes[..8] != Self::MAGIC {
            return Err(Error::Cache(format!(
                "{} is not an eigensystem sidecar",
                path.display()
            )));
        }
        let stored = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let payload = &bytes[16..];
        if fnv64(payload) != stored {
            return Err(Error::Cache(format!(
                "checksum mismatch in {}",
                path.display()
            )));
        }
        let n = u64::from_le_bytes(payload[..8].try_into().unwrap()) as usize;
        let need = 8 + 8 * n + 16 * n * n;
        if payload.len() != need {
            return Err(Error::Cache(format!(
                "sidecar payload is {} bytes, expected {need}",
                payload.len()
            )));
        }
        let mut reader = payload[8..].chunks_exact(8);
        let mut next = || f64::from_le_bytes(reader.next().unwrap().try_into().unwrap());
        let lambda = Array1::from_iter((0..n).map(|_| next()));
        let basis = Array2::from_shape_vec((n, n), (0..n * n).map(|_| next()).collect()).unwrap();
        let weighted =
            Array2::from_shape_vec((n, n), (0..n * n).map(|_| next()).collect()).unwrap();
        Ok(Eigensystem {
            lambda,
            basis,
            weighted,
        })
    }
}

fn fnv64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Spectral symbols used by the calculus. Arguments are dimensionless
/// (`u = t lambda`). `eval` gives the continuous extension at `u = 0`;
/// `at_zero` gives the value the calculus assigns on the kernel, which
/// differs only for the projected variants.
#[derive(Clone)]
pub enum SpectralFunction {
    /// `e^{-u}`
    Heat,
    /// `u^k e^{-u}`, the k-th scaled derivative of the semigroup, `k >= 1`.
    HeatDerivative(u32),
    /// `u^N e^{-u} (1 - e^{-u})`, the band-pass window of order `N`.
    BandPass(u32),
    /// `int_u^infty w e^{-w}(1 - e^{-w}) dw / w = e^{-u} - e^{-2u}/2`,
    /// the tail primitive of the order-1 band pass.
    BandPassPrimitive,
    /// Same with the kernel value set to 0 (projects constants away).
    BandPassPrimitiveZeroed,
    /// `(1 - e^{-u})^k`, the k-fold semigroup defect.
    HeatDefectPow(u32),
    /// `(1 + u)^{-M}`
    ResolventPower(u32),
    /// `(u / (1 + u))^M`
    ResolventGrowth(u32),
    /// `(1 + u)^M`, inverse of the resolvent power.
    ResolventInverse(u32),
    /// `u^k e^{-2u} (1 - e^{-u})^2`, the squared band-pass window.
    QuadBand(u32),
    /// `-int_u^infty w^k e^{-2w} (1 - e^{-w})^2 dw`, the primitive of
    /// `QuadBand(k)` appearing in truncated reproducing formulas.
    CutoffPrimitive(u32),
    Custom {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        at_zero: f64,
    },
}

impl SpectralFunction {
    pub fn name(&self) -> String {
        match self {
            SpectralFunction::Heat => "heat".to_string(),
            SpectralFunction::HeatDerivative(k) => format!("heat_derivative_{k}"),
            SpectralFunction::BandPass(n) => format!("band_pass_{n}"),
            SpectralFunction::BandPassPrimitive => "band_pass_primitive".to_string(),
            SpectralFunction::BandPassPrimitiveZeroed => {
                "band_pass_primitive_zeroed".to_string()
            }
            SpectralFunction::HeatDefectPow(k) => format!("heat_defect_pow_{k}"),
            SpectralFunction::ResolventPower(m) => format!("resolvent_power_{m}"),
            SpectralFunction::ResolventGrowth(m) => format!("resolvent_growth_{m}"),
            SpectralFunction::ResolventInverse(m) => format!("resolvent_inverse_{m}"),
            SpectralFunction::QuadBand(k) => format!("quad_band_{k}"),
            SpectralFunction::CutoffPrimitive(k) => format!("cutoff_primitive_{k}"),
            SpectralFunction::Custom { name, .. } => format!("custom:{name}"),
        }
    }

    /// Continuous evaluation for `u >= 0`.
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            SpectralFunction::Heat => (-u).exp(),
            SpectralFunction::HeatDerivative(k) => u.powi(*k as i32) * (-u).exp(),
            SpectralFunction::BandPass(n) => {
                u.powi(*n as i32) * (-u).exp() * (1.0 - (-u).exp())
            }
            SpectralFunction::BandPassPrimitive | SpectralFunction::BandPassPrimitiveZeroed => {
                (-u).exp() - 0.5 * (-2.0 * u).exp()
            }
            SpectralFunction::HeatDefectPow(k) => (1.0 - (-u).exp()).powi(*k as i32),
            SpectralFunction::ResolventPower(m) => (1.0 + u).powi(-(*m as i32)),
            SpectralFunction::ResolventGrowth(m) => (u / (1.0 + u)).powi(*m as i32),
            SpectralFunction::ResolventInverse(m) => (1.0 + u).powi(*m as i32),
            SpectralFunction::QuadBand(k) => {
                let d = 1.0 - (-u).exp();
                u.powi(*k as i32) * (-2.0 * u).exp() * d * d
            }
            SpectralFunction::CutoffPrimitive(k) => cutoff_primitive(*k, u),
            SpectralFunction::Custom { f, .. } => f(u),
        }
    }

    /// Value assigned on the kernel of the generator.
    pub fn at_zero(&self) -> f64 {
        match self {
            SpectralFunction::BandPassPrimitiveZeroed => 0.0,
            SpectralFunction::Custom { at_zero, .. } => *at_zero,
            other => other.eval(0.0),
        }
    }
}

impl fmt::Debug for SpectralFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpectralFunction({})", self.name())
    }
}

impl PartialEq for SpectralFunction {
    fn eq(&self, other: &Self) -> bool {
        self.name() == other.name()
    }
}

/// `-int_u^infty w^k e^{-2w} (1 - e^{-w})^2 dw` in closed form through
/// upper incomplete gamma functions at integer order.
fn cutoff_primitive(k: u32, u: f64) -> f64 {
    // int_u^infty w^k e^{-aw} dw = k!/a^{k+1} * R_k(a u),
    // R_k(y) = e^{-y} sum_{j<=k} y^j / j!.
    let term = |a: f64| -> f64 {
        factorial(k) / a.powi(k as i32 + 1) * upper_gamma_ratio(k, a * u)
    };
    -(term(2.0) - 2.0 * term(3.0) + term(4.0))
}

fn factorial(k: u32) -> f64 {
    (1..=k as u64).map(|j| j as f64).product()
}

/// Regularized upper incomplete gamma at integer order:
/// `Gamma(k+1, y) / k! = e^{-y} sum_{j=0}^{k} y^j / j!`.
fn upper_gamma_ratio(k: u32, y: f64) -> f64 {
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for j in 1..=k {
        term *= y / j as f64;
        sum += term;
    }
    (-y).exp() * sum
}

// ----------------------------------------------------------------------
// Diagnostics: one-line defect measurements used by the consistency
// checks and the report pipeline.
// ----------------------------------------------------------------------

/// Relative defect of the semigroup law on `f`:
/// `|| e^{-tL} e^{-sL} f - e^{-(t+s)L} f ||_2 / ||f||_2`.
pub fn semigroup_defect(gen: &Generator, f: ArrayView1<f64>, t: f64, s: f64) -> Result<f64> {
    let heat = SpectralFunction::Heat;
    let first = gen.apply_function(&heat, s, f)?;
    let two_step = gen.apply_function(&heat, t, first.view())?;
    let one_step = gen.apply_function(&heat, t + s, f)?;
    let space = gen.space();
    let diff = &two_step - &one_step;
    let denom = space.lp_norm(f, crate::space::Exponent::P(2.0)).max(1e-300);
    Ok(space.lp_norm(diff.view(), crate::space::Exponent::P(2.0)) / denom)
}

/// Sup-norm defect of conservation: `|| e^{-tL} 1 - 1 ||_inf`.
pub fn conservation_defect(gen: &Generator, t: f64) -> Result<f64> {
    let ones = Array1::ones(gen.len());
    let out = gen.apply_function(&SpectralFunction::Heat, t, ones.view())?;
    Ok(out.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max))
}

/// Magnitude of the most negative heat kernel entry (0 when nonnegative).
pub fn heat_positivity_defect(gen: &Generator, t: f64) -> Result<f64> {
    let k = gen.heat_kernel(t)?;
    let min_entry = k.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((-min_entry).max(0.0))
}

/// Short- and long-time limits on `f`: returns
/// `(||e^{-tL} f - f|| at t_small, ||e^{-tL} f - P0 f|| at t_large)`,
/// both relative to `||f||_2`.
pub fn limit_defects(
    gen: &Generator,
    f: ArrayView1<f64>,
    t_small: f64,
    t_large: f64,
) -> Result<(f64, f64)> {
    let space = gen.space();
    let p2 = crate::space::Exponent::P(2.0);
    let denom = space.lp_norm(f, p2).max(1e-300);
    let near = gen.apply_function(&SpectralFunction::Heat, t_small, f)?;
    let short = space.lp_norm((&near - &f).view(), p2) / denom;
    let far = gen.apply_function(&SpectralFunction::Heat, t_large, f)?;
    let mean = space.mean(f);
    let long = space.lp_norm(far.mapv(|v| v - mean).view(), p2) / denom;
    Ok((short, long))
}

/// Endpoint behaviour of the calculus on one field, all entries relative
/// to `||f||_2`. Short-time entries are evaluated at the first grid
/// scale, long-time entries at the last; refining or widening the grid
/// drives every entry toward zero.
#[derive(Debug, Clone)]
pub struct LimitsReport {
    /// `||e^{-tL} f - f||` at the smallest scale.
    pub short_identity: f64,
    /// `||(tL)^k e^{-tL} f||` at the smallest scale, `k = 1, 2`.
    pub short_derivative: [f64; 2],
    /// `||(tL)^k e^{-tL} (f - P0 f)||` at the largest scale, `k = 0, 1, 2`,
    /// with `P0` the measure-weighted projection onto constants.
    pub long_decay: [f64; 3],
}

/// Measures the strong-convergence limits of the semigroup at the ends
/// of a scale grid: the identity limit and derivative vanishing at small
/// time, and the decay of every derivative order on the mean-free part
/// at large time.
pub fn limits_check(gen: &Generator, f: ArrayView1<f64>, grid: &ScaleGrid) -> Result<LimitsReport> {
    let space = gen.space();
    let n = space.len();
    if f.len() != n {
        return Err(Error::InvalidParameter(format!(
            "field has {} entries for {} vertices",
            f.len(),
            n
        )));
    }
    let points = grid.points();
    let t_min = points[0];
    let t_max = *points.last().expect("nonempty grid");
    let mean = space.mean(f);
    let mut fields = Array2::<f64>::zeros((n, 2));
    for x in 0..n {
        fields[[x, 0]] = f[x];
        fields[[x, 1]] = f[x] - mean;
    }
    let jobs = vec![
        ApplyJob { func: SpectralFunction::Heat, t: t_min, col: 0 },
        ApplyJob { func: SpectralFunction::HeatDerivative(1), t: t_min, col: 0 },
        ApplyJob { func: SpectralFunction::HeatDerivative(2), t: t_min, col: 0 },
        ApplyJob { func: SpectralFunction::Heat, t: t_max, col: 1 },
        ApplyJob { func: SpectralFunction::HeatDerivative(1), t: t_max, col: 1 },
        ApplyJob { func: SpectralFunction::HeatDerivative(2), t: t_max, col: 1 },
    ];
    let out = gen.apply_batch(&jobs, fields.view())?;
    let p2 = crate::space::Exponent::P(2.0);
    let denom = space.lp_norm(f, p2).max(1e-300);
    let col_norm = |j: usize| space.lp_norm(out.column(j), p2) / denom;
    let short_identity = {
        let diff = &out.column(0) - &f;
        space.lp_norm(diff.view(), p2) / denom
    };
    Ok(LimitsReport {
        short_identity,
        short_derivative: [col_norm(1), col_norm(2)],
        long_decay: [col_norm(3), col_norm(4), col_norm(5)],
    })
}

/// One-ball Sobolev probe through the resolvent: the sup of `|f|` over
/// the ball against the smallest value the uncentered `L^2` maximal
/// function of `(1 + tL)^M f` takes on the ball. Returns
/// `(lhs, rhs, lhs / rhs)`; sweeps aggregate the ratio over balls with
/// radius matched to the scale.
pub fn resolvent_sobolev_check(
    gen: &Generator,
    t: f64,
    m_pow: u32,
    ball: &Ball,
    f: ArrayView1<f64>,
) -> Result<(f64, f64, f64)> {
    if m_pow == 0 {
        return Err(Error::InvalidParameter(
            "resolvent power must be at least 1".to_string(),
        ));
    }
    let space = gen.space();
    if f.len() != space.len() {
        return Err(Error::InvalidParameter(format!(
            "field has {} entries for {} vertices",
            f.len(),
            space.len()
        )));
    }
    if ball.members.is_empty() {
        return Err(Error::EmptyBall);
    }
    let lifted = gen.apply_function(&SpectralFunction::ResolventInverse(m_pow), t, f)?;
    let maximal = space.maximal(lifted.view(), 2.0);
    let lhs = ball
        .members
        .iter()
        .map(|&x| f[x].abs())
        .fold(0.0f64, f64::max);
    let rhs = ball
        .members
        .iter()
        .map(|&x| maximal[x])
        .fold(f64::INFINITY, f64::min);
    // (1 + tL)^M is invertible, so rhs vanishes only for the zero field.
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok((lhs, rhs, ratio))
}

/// Vertical square function of `f` over a scale grid with the order-N
/// band pass: `Sf(x) = ( sum_j w_j |psi(t_j L) f(x)|^2 )^{1/2}`.
/// Returns the field and the per-scale contributions to `||Sf||_2^2`.
pub fn square_function(
    gen: &Generator,
    f: ArrayView1<f64>,
    grid: &ScaleGrid,
    order: u32,
) -> Result<(Array1<f64>, Vec<f64>)> {
    let jobs: Vec<ApplyJob> = grid
        .points()
        .iter()
        .map(|&t| ApplyJob {
            func: SpectralFunction::BandPass(order),
            t,
            col: 0,
        })
        .collect();
    let fields = f.insert_axis(Axis(1));
    let out = gen.apply_batch(&jobs, fields)?;
    let w = grid.weight();
    let space = gen.space();
    let mut sq = Array1::<f64>::zeros(gen.len());
    let mut per_scale = Vec::with_capacity(jobs.len());
    for j in 0..jobs.len() {
        let col = out.column(j);
        let mut norm2 = 0.0;
        for (x, &v) in col.iter().enumerate() {
            sq[x] += w * v * v;
            norm2 += v * v * space.measure(x);
        }
        per_scale.push(w * norm2);
    }
    Ok((sq.mapv(f64::sqrt), per_scale))
}

/// Closed form of `int_0^infty psi_N(u)^2 du/u` for the band-pass window:
/// `(2N-1)! (2^{-2N} - 2 * 3^{-2N} + 4^{-2N})`.
pub fn band_pass_energy(order: u32) -> f64 {
    let two_n = 2 * order;
    factorial(two_n - 1)
        * ((2.0f64).powi(-(two_n as i32)) - 2.0 * (3.0f64).powi(-(two_n as i32))
            + (4.0f64).powi(-(two_n as i32)))
}

/// Exact continuum limit of `||Sf||_2^2` by eigenexpansion:
/// `sum_{lambda > 0} |fhat|^2 int psi_N(t lambda)^2 dt/t`.
pub fn square_function_exact(gen: &Generator, f: ArrayView1<f64>, order: u32) -> Result<f64> {
    let es = gen.eigensystem()?;
    let coeffs = es.coeffs(f);
    let energy = band_pass_energy(order);
    let mut acc = 0.0;
    for (k, &c) in coeffs.iter().enumerate() {
        if es.lambda[k] > 0.0 {
            acc += c * c * energy;
        }
    }
    Ok(acc)
}
