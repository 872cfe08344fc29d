//! Semigroup paraproducts, trilinear forms, and the product decomposition.
//!
//! Every object here is a quadrature over a geometric scale grid of
//! pointwise products of regularized fields. Three spectral windows
//! appear: the low pass `e^{-tL}`, the band pass
//! `(tL)^N e^{-tL}(I - e^{-tL})` which annihilates constants, and the
//! kernel-annihilating primitive `e^{-tL} - e^{-2tL}/2` (set to zero on
//! constants) whose scale derivative is `-1/t` times the order-one band
//! pass. The primitive is what makes the product decomposition close with
//! an exact remainder: differentiating the triple-smoothed product
//! `P_t[P_t f' . P_t g']` in `t` (with `P_t` the zeroed primitive and
//! primes denoting mean subtraction) and integrating over all scales
//! yields `f g = 8 (three paraproduct parts) + remainder` up to pure
//! quadrature error.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::space::{Exponent, Space};
use crate::spectral::{ApplyJob, Generator, ScaleGrid, SpectralFunction};

/// Argument-position selector for the trilinear forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    First,
    Second,
    Third,
}

/// A scale-integrated trilinear value with its per-scale breakdown.
#[derive(Debug, Clone)]
pub struct TrilinearValue {
    /// The quadrature total.
    pub value: f64,
    /// Weighted contribution of each grid node; sums to `value`.
    pub per_scale: Vec<f64>,
    /// Difference against redoing the quadrature on the grid with every
    /// other node dropped. A proxy for the discretization error.
    pub quadrature_error_estimate: f64,
}

/// A scale-integrated field with per-scale norms.
#[derive(Debug, Clone)]
pub struct ParaproductOutput {
    /// The quadrature total.
    pub field: Array1<f64>,
    /// `L^2(mu)` norm of each weighted summand.
    pub per_scale_norm: Vec<f64>,
    /// `L^2(mu)` distance to the sum over the grid with every other node
    /// dropped (weights doubled). A proxy for the discretization error.
    pub quadrature_error_estimate: f64,
}

/// The three-part splitting of a pointwise product.
#[derive(Debug, Clone)]
pub struct ProductDecomposition {
    /// Band pass outside, both factors smoothed inside.
    pub outer_band: Array1<f64>,
    /// Band pass on the first factor, smoothing outside.
    pub first_band: Array1<f64>,
    /// Band pass on the second factor, smoothing outside.
    pub second_band: Array1<f64>,
    /// `P0 f . g + (f - P0 f) . P0 g + P0((f - P0 f)(g - P0 g))` where
    /// `P0` is the projection onto constants.
    pub remainder: Array1<f64>,
    /// `||8 (sum of parts) + remainder - f g||_2 / ||f g||_2`, pure
    /// quadrature error (absolute norm when `f g` vanishes identically).
    pub residual_norm: f64,
}

/// A two-sided truncated reproducing identity: the quadrature of the
/// squared-band window against the exact primitive difference.
#[derive(Debug, Clone)]
pub struct TruncatedReproducing {
    /// Quadrature of `(tL)^{k+1} e^{-2tL}(I - e^{-tL})^2 f dt/t` over the
    /// window (trapezoid rule in logarithmic scale).
    pub integral: Array1<f64>,
    /// The exact value: primitive at the realized upper endpoint minus
    /// primitive at the lower one.
    pub boundary: Array1<f64>,
    /// `L^2(mu)` distance between the two; pure quadrature error.
    pub defect: f64,
}

/// Smallest band order giving integrable decay against the homogeneous
/// dimension: `ceil(d_hom / m) + 1`, at least 1.
pub fn default_band_order(d_hom: f64, homogeneity: f64) -> u32 {
    let ratio = (d_hom / homogeneity).max(0.0);
    (ratio.ceil() as u32).saturating_add(1).max(1)
}

/// `int_0^infty u^N e^{-u}(1 - e^{-u}) e^{-u} du/u`: the eigenvalue the
/// low-low-band paraproduct assigns to an eigenvector when the other
/// factor is constant. `(N-1)! (2^{-N} - 3^{-N})` for `N >= 1`,
/// `ln(3/2)` at `N = 0`.
pub fn band_heat_cross_energy(order: u32) -> f64 {
    if order == 0 {
        return 1.5f64.ln();
    }
    let n = order as i32;
    factorial(order - 1) * (2f64.powi(-n) - 3f64.powi(-n))
}

/// Normalization making `c int_0^infty psi_N(tL) dt/t = I - P0`:
/// the reciprocal of `(N-1)! (1 - 2^{-N})` for `N >= 1`, of `ln 2` at
/// `N = 0`.
pub fn reproducing_constant(order: u32) -> f64 {
    if order == 0 {
        return 1.0 / 2f64.ln();
    }
    let n = order as i32;
    1.0 / (factorial(order - 1) * (1.0 - 2f64.powi(-n)))
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

fn check_field(gen: &Generator, f: ArrayView1<f64>, name: &str) -> Result<()> {
    if f.len() != gen.len() {
        return Err(Error::InvalidParameter(format!(
            "{name} has {} entries for {} vertices",
            f.len(),
            gen.len()
        )));
    }
    Ok(())
}

fn check_grid(grid: &ScaleGrid) -> Result<()> {
    if grid.len() == 0 {
        return Err(Error::EmptyGrid("scale grid has no nodes".into()));
    }
    Ok(())
}

/// Sum the columns against the grid weight, together with the same sum
/// over every other column at doubled weight. Returns the fine field and
/// the `L^2(mu)` distance between the two sums.
fn integrate_columns(space: &Space, cols: &Array2<f64>, weight: f64) -> (Array1<f64>, f64) {
    let fine = cols.sum_axis(Axis(1)) * weight;
    let mut coarse = Array1::zeros(cols.nrows());
    for j in (0..cols.ncols()).step_by(2) {
        coarse += &cols.column(j);
    }
    coarse *= 2.0 * weight;
    let diff = &fine - &coarse;
    let err = space.lp_norm(diff.view(), Exponent::P(2.0));
    (fine, err)
}

/// Shared quadrature of `sum_j w int w1(t_j L)b . w2(t_j L)f . w3(t_j L)g dmu`.
fn trilinear_core(
    gen: &Generator,
    b: ArrayView1<f64>,
    f: ArrayView1<f64>,
    g: ArrayView1<f64>,
    grid: &ScaleGrid,
    windows: [SpectralFunction; 3],
) -> Result<TrilinearValue> {
    check_field(gen, b, "first argument")?;
    check_field(gen, f, "second argument")?;
    check_field(gen, g, "third argument")?;
    check_grid(grid)?;

    let n = gen.len();
    let mut fields = Array2::zeros((n, 3));
    fields.column_mut(0).assign(&b);
    fields.column_mut(1).assign(&f);
    fields.column_mut(2).assign(&g);

    let mut jobs = Vec::with_capacity(3 * grid.len());
    for &t in grid.points() {
        for (col, func) in windows.iter().enumerate() {
            jobs.push(ApplyJob {
                func: func.clone(),
                t,
                col,
            });
        }
    }
    let out = gen.apply_batch(&jobs, fields.view())?;

    let space = gen.space();
    let w = grid.weight();
    let per_scale: Vec<f64> = (0..grid.len())
        .map(|j| {
            let a = out.column(3 * j);
            let bb = out.column(3 * j + 1);
            let c = out.column(3 * j + 2);
            let mut acc = 0.0;
            for x in 0..n {
                acc += a[x] * bb[x] * c[x] * space.measures()[x];
            }
            w * acc
        })
        .collect();
    let value: f64 = per_scale.iter().sum();
    let coarse: f64 = per_scale.iter().step_by(2).sum::<f64>() * 2.0;
    Ok(TrilinearValue {
        value,
        per_scale,
        quadrature_error_estimate: (value - coarse).abs(),
    })
}

fn slot_windows(special: &SpectralFunction, rest: &SpectralFunction, slot: Slot) -> [SpectralFunction; 3] {
    let mut windows = [rest.clone(), rest.clone(), rest.clone()];
    let at = match slot {
        Slot::First => 0,
        Slot::Second => 1,
        Slot::Third => 2,
    };
    windows[at] = special.clone();
    windows
}

/// One-band trilinear form: the argument at `band_slot` carries the band
/// pass `(tL)^N e^{-tL}(I - e^{-tL})`, the other two the low pass
/// `e^{-tL}`. With the band on the third slot this is the form dual to
/// [`paraproduct_outer_band`]; on the second slot, dual to
/// [`paraproduct_inner_band`].
pub fn trilinear_one_band(
    gen: &Generator,
    b: ArrayView1<f64>,
    f: ArrayView1<f64>,
    g: ArrayView1<f64>,
    grid: &ScaleGrid,
    order: u32,
    band_slot: Slot,
) -> Result<TrilinearValue> {
    let windows = slot_windows(
        &SpectralFunction::BandPass(order),
        &SpectralFunction::Heat,
        band_slot,
    );
    trilinear_core(gen, b, f, g, grid, windows)
}

/// Two-band trilinear form: the argument at `low_slot` carries the low
/// pass, the other two carry band passes. The low pass on the first slot
/// is the form dual to [`paraproduct_modified`] (`<U_b f, g>`); the low
/// pass on the second is the same form with the first two arguments
/// exchanged. With a constant in the low slot and the same eigenvector in
/// both band slots the value is the squared-band energy
/// `int psi_N^2 du/u` (13/144 at order one, up to quadrature).
pub fn trilinear_two_band(
    gen: &Generator,
    b: ArrayView1<f64>,
    f: ArrayView1<f64>,
    g: ArrayView1<f64>,
    grid: &ScaleGrid,
    order: u32,
    low_slot: Slot,
) -> Result<TrilinearValue> {
    let windows = slot_windows(
        &SpectralFunction::Heat,
        &SpectralFunction::BandPass(order),
        low_slot,
    );
    trilinear_core(gen, b, f, g, grid, windows)
}

/// Shared two-stage pipeline: window both inputs per scale, multiply
/// pointwise, window the product, then integrate over scales.
fn paraproduct_core(
    gen: &Generator,
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    grid: &ScaleGrid,
    inner_a: SpectralFunction,
    inner_b: SpectralFunction,
    outer: SpectralFunction,
) -> Result<ParaproductOutput> {
    check_field(gen, a, "first argument")?;
    check_field(gen, b, "second argument")?;
    check_grid(grid)?;

    let n = gen.len();
    let nscales = grid.len();
    let mut fields = Array2::zeros((n, 2));
    fields.column_mut(0).assign(&a);
    fields.column_mut(1).assign(&b);

    let mut jobs = Vec::with_capacity(2 * nscales);
    for &t in grid.points() {
        jobs.push(ApplyJob {
            func: inner_a.clone(),
            t,
            col: 0,
        });
        jobs.push(ApplyJob {
            func: inner_b.clone(),
            t,
            col: 1,
        });
    }
    let smoothed = gen.apply_batch(&jobs, fields.view())?;

    let mut products = Array2::zeros((n, nscales));
    for j in 0..nscales {
        let pa = smoothed.column(2 * j);
        let pb = smoothed.column(2 * j + 1);
        let mut col = products.column_mut(j);
        for x in 0..n {
            col[x] = pa[x] * pb[x];
        }
    }
    let outer_jobs: Vec<ApplyJob> = grid
        .points()
        .iter()
        .enumerate()
        .map(|(j, &t)| ApplyJob {
            func: outer.clone(),
            t,
            col: j,
        })
        .collect();
    let outs = gen.apply_batch(&outer_jobs, products.view())?;

    let space = gen.space();
    let w = grid.weight();
    let per_scale_norm: Vec<f64> = (0..nscales)
        .map(|j| w * space.lp_norm(outs.column(j), Exponent::P(2.0)))
        .collect();
    let (field, quadrature_error_estimate) = integrate_columns(space, &outs, w);
    Ok(ParaproductOutput {
        field,
        per_scale_norm,
        quadrature_error_estimate,
    })
}

/// `sum_j w psi(t_j L)[ e^{-t_j L} h . e^{-t_j L} f ]` with
/// `psi(u) = u^N e^{-u}(1 - e^{-u})`. Against a test field `g` this
/// pairs to the one-band trilinear form with the band on the third slot.
/// With `h = 1` it acts on an eigenvector as multiplication by
/// [`band_heat_cross_energy`]`(order)` (up to quadrature).
pub fn paraproduct_outer_band(
    gen: &Generator,
    h: ArrayView1<f64>,
    f: ArrayView1<f64>,
    grid: &ScaleGrid,
    order: u32,
) -> Result<ParaproductOutput> {
    paraproduct_core(
        gen,
        h,
        f,
        grid,
        SpectralFunction::Heat,
        SpectralFunction::Heat,
        SpectralFunction::BandPass(order),
    )
}

/// `sum_j w e^{-t_j L}[ e^{-t_j L} h . psi(t_j L) f ]`. Against a test
/// field `g` this pairs to the one-band trilinear form with the band on
/// the second slot.
pub fn paraproduct_inner_band(
    gen: &Generator,
    h: ArrayView1<f64>,
    f: ArrayView1<f64>,
    grid: &ScaleGrid,
    order: u32,
) -> Result<ParaproductOutput> {
    paraproduct_core(
        gen,
        h,
        f,
        grid,
        SpectralFunction::Heat,
        SpectralFunction::BandPass(order),
        SpectralFunction::Heat,
    )
}

/// `sum_j w psi(t_j L)[ e^{-t_j L} b . psi(t_j L) f ]`: band passes on
/// both the output and the acted-on factor, low pass on the symbol `b`.
/// Against a test field `g` this pairs to the two-band trilinear form
/// with the low pass on the first slot. With `b = 1` it acts on an
/// eigenvector as multiplication by the squared-band energy
/// `int psi^2 du/u` (up to quadrature).
pub fn paraproduct_modified(
    gen: &Generator,
    b: ArrayView1<f64>,
    f: ArrayView1<f64>,
    grid: &ScaleGrid,
    order: u32,
) -> Result<ParaproductOutput> {
    paraproduct_core(
        gen,
        b,
        f,
        grid,
        SpectralFunction::Heat,
        SpectralFunction::BandPass(order),
        SpectralFunction::BandPass(order),
    )
}

/// Quadrature check of `c_N sum_j w psi(t_j L) f = f - P0 f`. Returns
/// the relative `L^2(mu)` residual. Constant inputs are rejected: the
/// identity is vacuous on the kernel.
pub fn reproducing_residual(
    gen: &Generator,
    f: ArrayView1<f64>,
    grid: &ScaleGrid,
    order: u32,
) -> Result<f64> {
    check_field(gen, f, "field")?;
    check_grid(grid)?;
    let space = gen.space();
    let mean = space.mean(f);
    let target = &f.to_owned() - mean;
    let den = space.lp_norm(target.view(), Exponent::P(2.0));
    if den <= crate::tol::EXACT * space.lp_norm(f, Exponent::P(2.0)).max(1.0) {
        return Err(Error::ZeroInput);
    }
    let jobs: Vec<ApplyJob> = grid
        .points()
        .iter()
        .map(|&t| ApplyJob {
            func: SpectralFunction::BandPass(order),
            t,
            col: 0,
        })
        .collect();
    let n = gen.len();
    let fields = f.to_owned().into_shape((n, 1)).expect("column reshape");
    let outs = gen.apply_batch(&jobs, fields.view())?;
    let approx = outs.sum_axis(Axis(1)) * (grid.weight() * reproducing_constant(order));
    let diff = &approx - &target;
    let num = space.lp_norm(diff.view(), Exponent::P(2.0));
    Ok(num / den)
}

/// Split `f g` into three paraproduct parts plus an exact remainder.
///
/// All three parts use the order-one band pass and the zeroed primitive
/// window; `8 (outer + first + second) + remainder` reproduces `f g` up
/// to quadrature error, reported as `residual_norm`.
pub fn product_decomposition(
    gen: &Generator,
    f: ArrayView1<f64>,
    g: ArrayView1<f64>,
    grid: &ScaleGrid,
) -> Result<ProductDecomposition> {
    check_field(gen, f, "first factor")?;
    check_field(gen, g, "second factor")?;
    check_grid(grid)?;

    let n = gen.len();
    let nscales = grid.len();
    let band = SpectralFunction::BandPass(1);
    let prim = SpectralFunction::BandPassPrimitiveZeroed;

    let mut fields = Array2::zeros((n, 2));
    fields.column_mut(0).assign(&f);
    fields.column_mut(1).assign(&g);
    let mut jobs = Vec::with_capacity(4 * nscales);
    for &t in grid.points() {
        for (func, col) in [(&band, 0), (&band, 1), (&prim, 0), (&prim, 1)] {
            jobs.push(ApplyJob {
                func: func.clone(),
                t,
                col,
            });
        }
    }
    // Columns per scale: band f, band g, primitive f, primitive g.
    let smoothed = gen.apply_batch(&jobs, fields.view())?;

    let mut products = Array2::zeros((n, 3 * nscales));
    for j in 0..nscales {
        let bf = smoothed.column(4 * j);
        let bg = smoothed.column(4 * j + 1);
        let pf = smoothed.column(4 * j + 2);
        let pg = smoothed.column(4 * j + 3);
        for x in 0..n {
            products[[x, 3 * j]] = pf[x] * pg[x];
            products[[x, 3 * j + 1]] = bf[x] * pg[x];
            products[[x, 3 * j + 2]] = pf[x] * bg[x];
        }
    }
    let mut outer_jobs = Vec::with_capacity(3 * nscales);
    for (j, &t) in grid.points().iter().enumerate() {
        for (func, off) in [(&band, 0), (&prim, 1), (&prim, 2)] {
            outer_jobs.push(ApplyJob {
                func: func.clone(),
                t,
                col: 3 * j + off,
            });
        }
    }
    let outs = gen.apply_batch(&outer_jobs, products.view())?;

    let space = gen.space();
    let w = grid.weight();
    let mut outer_band = Array1::zeros(n);
    let mut first_band = Array1::zeros(n);
    let mut second_band = Array1::zeros(n);
    for j in 0..nscales {
        outer_band += &outs.column(3 * j);
        first_band += &outs.column(3 * j + 1);
        second_band += &outs.column(3 * j + 2);
    }
    outer_band *= w;
    first_band *= w;
    second_band *= w;

    let mf = space.mean(f);
    let mg = space.mean(g);
    let fc = &f.to_owned() - mf;
    let gc = &g.to_owned() - mg;
    let cross = &fc * &gc;
    let remainder = {
        let mut r = g.to_owned() * mf;
        r += &(&fc * mg);
        r += space.mean(cross.view());
        r
    };

    let product = &f.to_owned() * &g.to_owned();
    let mut recon = &outer_band + &first_band;
    recon += &second_band;
    recon *= 8.0;
    recon += &remainder;
    let diff = &recon - &product;
    let num = space.lp_norm(diff.view(), Exponent::P(2.0));
    let den = space.lp_norm(product.view(), Exponent::P(2.0));
    let residual_norm = if den > 0.0 { num / den } else { num };

    Ok(ProductDecomposition {
        outer_band,
        first_band,
        second_band,
        remainder,
        residual_norm,
    })
}

/// Quadrature of the squared-band window
/// `(tL)^{k+1} e^{-2tL}(I - e^{-tL})^2 dt/t` over `[t_lo, t_hi]` against
/// its exact primitive difference: the primitive at order `k`
/// differentiates in `t` to `1/t` times the window at order `k + 1`.
/// The node set reaches at least `t_hi` (the last node rounds up) and
/// the boundary term is taken at the realized endpoints, so the defect
/// is pure quadrature error. Over a window covering the whole spectrum
/// the boundary tends to `(13/144)(f - P0 f)` at `k = 1`.
pub fn truncated_reproducing(
    gen: &Generator,
    f: ArrayView1<f64>,
    t_lo: f64,
    t_hi: f64,
    ratio: f64,
    kappa: u32,
) -> Result<TruncatedReproducing> {
    check_field(gen, f, "field")?;
    if !(t_lo > 0.0 && t_hi > t_lo) {
        return Err(Error::InvalidParameter(format!(
            "window [{t_lo}, {t_hi}] is not an increasing positive pair"
        )));
    }
    let grid = ScaleGrid::geometric(t_lo, t_hi, ratio)?;
    let jobs: Vec<ApplyJob> = grid
        .points()
        .iter()
        .map(|&t| ApplyJob {
            func: SpectralFunction::QuadBand(kappa + 1),
            t,
            col: 0,
        })
        .collect();
    let n = gen.len();
    let fields = f.to_owned().into_shape((n, 1)).expect("column reshape");
    let outs = gen.apply_batch(&jobs, fields.view())?;
    let last = outs.ncols() - 1;
    let mut integral = outs.sum_axis(Axis(1));
    integral -= &(&outs.column(0) * 0.5);
    integral -= &(&outs.column(last) * 0.5);
    integral *= grid.weight();

    let prim = SpectralFunction::CutoffPrimitive(kappa);
    let t_last = *grid.points().last().unwrap();
    let hi = gen.apply_function(&prim, t_last, f)?;
    let lo = gen.apply_function(&prim, t_lo, f)?;
    let boundary = &hi - &lo;
    let diff = &integral - &boundary;
    let defect = gen.space().lp_norm(diff.view(), Exponent::P(2.0));
    Ok(TruncatedReproducing {
        integral,
        boundary,
        defect,
    })
}
