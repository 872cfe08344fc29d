//! Off-diagonal decay measurements for the semigroup family.
//!
//! For a scale `s` the operators `e^{-sL}`, `(sL)^k e^{-sL}` and
//! `s^{1/m} grad (sL)^k e^{-sL}` are probed between pairs of balls of
//! radius `s^{1/m}`: the measured quantity is the operator norm from
//! `L^2(Q1)` to `L^2(Q2)`, reported against the normalized separation
//! `1 + d(Q1, Q2)/r`. A log-log fit of ratio against separation gives
//! the empirical decay exponent the kernel estimates promise.

use ndarray::{Array1, Array2, ArrayView2};
use ndarray_linalg::{Eigh, UPLO};

use crate::error::{Error, Result};
use crate::rng;
use crate::space::Space;
use crate::spectral::{ApplyJob, Generator, SpectralFunction};
use crate::tol;

/// Operator family probed between ball pairs, parametrized by the scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorFamily {
    /// `e^{-sL}`
    Heat,
    /// `(sL)^k e^{-sL}`
    HeatDerivative(u32),
    /// `s^{1/m} grad (sL)^k e^{-sL}`
    GradientHeat(u32),
}

impl OperatorFamily {
    fn spectral(&self) -> SpectralFunction {
        match self {
            OperatorFamily::Heat => SpectralFunction::Heat,
            OperatorFamily::HeatDerivative(k) => SpectralFunction::HeatDerivative(*k),
            OperatorFamily::GradientHeat(0) => SpectralFunction::Heat,
            OperatorFamily::GradientHeat(k) => SpectralFunction::HeatDerivative(*k),
        }
    }
}

/// One measured ball pair.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PairEntry {
    pub q1_center: usize,
    pub q2_center: usize,
    /// Exact distance between the two vertex sets.
    pub separation: f64,
    /// `1 + separation / radius`, the abscissa of the decay fit.
    pub normalized: f64,
    /// `L^2(Q1) -> L^2(Q2)` norm of the operator block.
    pub ratio: f64,
}

/// Decay table for one (family, scale) cell.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DecayProfile {
    pub scale: f64,
    pub radius: f64,
    pub entries: Vec<PairEntry>,
    /// Exponent `gamma` fitted to `ratio ~ normalized^{-gamma}`;
    /// `None` when fewer than two usable abscissae survive.
    pub fitted_exponent: Option<f64>,
}

/// Deterministic choice of ball-center pairs whose balls of the given
/// radius are separated by at least `min_separation`. Candidates spread
/// over the distinct separations present (one pass picks the smallest
/// center pair at each separation, further passes fill up to
/// `max_pairs`). Large spaces subsample centers on a fixed stride so the
/// scan stays quadratic in at most 64 centers.
pub fn select_separated_pairs(
    space: &Space,
    radius: f64,
    min_separation: f64,
    max_pairs: usize,
) -> Vec<(usize, usize)> {
    select_pairs(space, radius, max_pairs, |sep| sep >= min_separation, false)
}

/// Same scheme for near pairs: balls separated by at most
/// `max_separation`, the diagonal `Q1 = Q2` included.
pub fn select_near_pairs(
    space: &Space,
    radius: f64,
    max_separation: f64,
    max_pairs: usize,
) -> Vec<(usize, usize)> {
    select_pairs(space, radius, max_pairs, |sep| sep <= max_separation, true)
}

fn select_pairs(
    space: &Space,
    radius: f64,
    max_pairs: usize,
    keep: impl Fn(f64) -> bool,
    include_diagonal: bool,
) -> Vec<(usize, usize)> {
    let n = space.len();
    if max_pairs == 0 || n == 0 {
        return Vec::new();
    }
    let stride = n.div_ceil(64);
    let centers: Vec<usize> = (0..n).step_by(stride).collect();
    let mut balls = Vec::with_capacity(centers.len());
    for &c in &centers {
        balls.push(space.ball(c, radius));
    }
    // (separation, c1, c2), lexicographic order doubles as the tie rule.
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..centers.len() {
        if include_diagonal && keep(0.0) {
            candidates.push((0.0, centers[i], centers[i]));
        }
        for j in (i + 1)..centers.len() {
            let sep = space.set_distance(&balls[i].members, &balls[j].members);
            if keep(sep) {
                candidates.push((sep, centers[i], centers[j]));
            }
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite separations"));

    // Round-robin across distinct separation values, nearest first within
    // each value, so short fits see the whole separation range.
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut last: Option<f64> = None;
    for (sep, c1, c2) in candidates {
        if last != Some(sep) {
            groups.push(Vec::new());
            last = Some(sep);
        }
        groups.last_mut().expect("group exists").push((c1, c2));
    }
    let mut picked = Vec::with_capacity(max_pairs);
    let mut depth = 0;
    while picked.len() < max_pairs {
        let mut any = false;
        for g in &groups {
            if let Some(&p) = g.get(depth) {
                picked.push(p);
                any = true;
                if picked.len() == max_pairs {
                    break;
                }
            }
        }
        if !any {
            break;
        }
        depth += 1;
    }
    picked
}

/// Measures one operator family at one scale across ball pairs given by
/// their centers; both balls take radius `s^{1/m}`.
pub fn off_diagonal_profile(
    gen: &Generator,
    family: OperatorFamily,
    s: f64,
    pairs: &[(usize, usize)],
) -> Result<DecayProfile> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scale must be positive, got {s}"
        )));
    }
    let space = gen.space();
    let n = space.len();
    let radius = gen.radius_for_scale(s);
    let mut entries = Vec::with_capacity(pairs.len());
    for &(c1, c2) in pairs {
        if c1 >= n || c2 >= n {
            return Err(Error::InvalidParameter(format!(
                "ball center pair ({c1}, {c2}) out of range for {n} vertices"
            )));
        }
        let q1 = space.ball(c1, radius);
        let q2 = space.ball(c2, radius);
        if q1.members.is_empty() || q2.members.is_empty() {
            return Err(Error::EmptyBall);
        }
        let separation = space.set_distance(&q1.members, &q2.members);
        let columns = member_columns(gen, family.spectral(), s, &q1.members)?;
        let gram = match family {
            OperatorFamily::GradientHeat(_) => {
                gradient_gram(gen, columns.view(), &q2.members, s)
            }
            _ => restriction_gram(space, columns.view(), &q2.members),
        };
        let ratio = largest_eigenvalue(gram).max(0.0).sqrt();
        entries.push(PairEntry {
            q1_center: c1,
            q2_center: c2,
            separation,
            normalized: 1.0 + separation / radius,
            ratio,
        });
    }
    let fitted_exponent = fit_decay_exponent(
        &entries
            .iter()
            .map(|e| (e.normalized, e.ratio))
            .collect::<Vec<_>>(),
    );
    Ok(DecayProfile {
        scale: s,
        radius,
        entries,
        fitted_exponent,
    })
}

/// Applies the symbol at scale `s` to the measure-normalized indicator
/// of each member: column `i` is `g(sL) (delta_{y_i} / sqrt(mu_{y_i}))`,
/// so Euclidean-unit coefficient vectors are `L^2(mu)`-unit fields on Q1.
pub(crate) fn member_columns(
    gen: &Generator,
    func: SpectralFunction,
    s: f64,
    members: &[usize],
) -> Result<Array2<f64>> {
    let n = gen.len();
    let mut fields = Array2::<f64>::zeros((n, members.len()));
    for (i, &y) in members.iter().enumerate() {
        fields[[y, i]] = 1.0 / gen.space().measure(y).sqrt();
    }
    let jobs: Vec<ApplyJob> = (0..members.len())
        .map(|col| ApplyJob {
            func: func.clone(),
            t: s,
            col,
        })
        .collect();
    gen.apply_batch(&jobs, fields.view())
}

/// Gram matrix of the columns restricted to `Q2` in `L^2(mu)`:
/// `G[i][j] = sum_{x in Q2} mu_x z_i(x) z_j(x)`.
pub(crate) fn restriction_gram(
    space: &Space,
    columns: ArrayView2<f64>,
    q2: &[usize],
) -> Array2<f64> {
    let m = columns.ncols();
    let mut g = Array2::<f64>::zeros((m, m));
    for &x in q2 {
        let mu = space.measure(x);
        for i in 0..m {
            let zi = columns[[x, i]];
            if zi == 0.0 {
                continue;
            }
            for j in i..m {
                g[[i, j]] += mu * zi * columns[[x, j]];
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            g[[i, j]] = g[[j, i]];
        }
    }
    g
}

/// Gram matrix of the scaled gradients restricted to `Q2`:
/// `G[i][j] = s^{2/m} sum_{x in Q2} sum_{y ~ x} (w_xy / 2)
///            (z_i(x) - z_i(y)) (z_j(x) - z_j(y))`,
/// matching the vertex gradient's carre-du-champ normalization.
fn gradient_gram(
    gen: &Generator,
    columns: ArrayView2<f64>,
    q2: &[usize],
    s: f64,
) -> Array2<f64> {
    let m = columns.ncols();
    let scale = gen.radius_for_scale(s).powi(2);
    let mut in_q2 = vec![false; gen.len()];
    for &x in q2 {
        in_q2[x] = true;
    }
    let mut g = Array2::<f64>::zeros((m, m));
    for &(u, v, w) in gen.stiffness_edges() {
        let (u, v) = (u as usize, v as usize);
        // Each edge contributes half its weight per endpoint inside Q2.
        let mult = 0.5 * w * ((in_q2[u] as u32 + in_q2[v] as u32) as f64);
        if mult == 0.0 {
            continue;
        }
        for i in 0..m {
            let di = columns[[u, i]] - columns[[v, i]];
            if di == 0.0 {
                continue;
            }
            for j in i..m {
                let dj = columns[[u, j]] - columns[[v, j]];
                g[[i, j]] += mult * di * dj;
            }
        }
    }
    for i in 0..m {
        for j in i..m {
            g[[i, j]] *= scale;
        }
    }
    for i in 0..m {
        for j in 0..i {
            g[[i, j]] = g[[j, i]];
        }
    }
    g
}

/// Largest eigenvalue of a symmetric PSD matrix: exact decomposition up
/// to 64 columns, deterministic power iteration with seeded restarts
/// above.
pub(crate) fn largest_eigenvalue(g: Array2<f64>) -> f64 {
    let m = g.nrows();
    if m == 0 {
        return 0.0;
    }
    if m <= 64 {
        let (vals, _) = g.eigh(UPLO::Lower).expect("symmetric Gram");
        return vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    }
    let mut best = 0.0f64;
    for restart in 0..5 {
        let mut v: Array1<f64> = if restart == 0 {
            Array1::ones(m)
        } else {
            let mut r = rng::substream(restart as u64, "offdiag-power");
            rng::normal_field(&mut r, m)
        };
        let norm = v.dot(&v).sqrt();
        if norm == 0.0 {
            continue;
        }
        v /= norm;
        let mut lambda = 0.0f64;
        for _ in 0..600 {
            let w = g.dot(&v);
            let next = w.dot(&w).sqrt();
            if next == 0.0 {
                lambda = 0.0;
                break;
            }
            let rayleigh = v.dot(&w);
            v = w / next;
            if (rayleigh - lambda).abs() <= tol::POWER_ITERATION * rayleigh.abs().max(1.0) {
                lambda = rayleigh;
                break;
            }
            lambda = rayleigh;
        }
        best = best.max(lambda);
    }
    best
}

/// Least-squares slope of `-log ratio` against `log normalized`; entries
/// with underflowing ratios are dropped, and at least two distinct
/// abscissae are required for a fit.
pub fn fit_decay_exponent(points: &[(f64, f64)]) -> Option<f64> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(x, r)| x > 0.0 && r > 1e-250)
        .map(|&(x, r)| (x.ln(), r.ln()))
        .collect();
    let first = usable.first()?.0;
    if !usable.iter().any(|&(x, _)| (x - first).abs() > 1e-12) {
        return None;
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(-sxy / sxx)
}
