//! Muckenhoupt weight characteristics over metric balls.
//!
//! A weight is a positive vertex field `w`; its characteristics are sups
//! over every ball of the canonical family (every center, every canonical
//! radius, singletons included, where the defining products collapse to
//! 1). Witnesses record the attaining ball with smallest-center then
//! smallest-radius ties, matching the other sup-over-balls reports.

use ndarray::{Array2, ArrayView1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::space::{Exponent, Space};

/// A sup-over-balls weight characteristic.
#[derive(Debug, Clone, Serialize)]
pub struct WeightReport {
    pub value: f64,
    pub witness_center: usize,
    pub witness_radius: f64,
    /// Sup over centers at each canonical radius.
    pub per_radius: Vec<f64>,
}

fn validate_weight(w: ArrayView1<f64>, n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::InvalidParameter(format!(
            "weight has {} entries for {n} vertices",
            w.len()
        )));
    }
    for (x, &v) in w.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::SingularWeight { vertex: x, value: v });
        }
    }
    Ok(())
}

fn sup_report(space: &Space, table: &[Vec<f64>]) -> WeightReport {
    let grid = space.radius_grid();
    let r_len = grid.len();
    let mut per_radius = vec![f64::NEG_INFINITY; r_len];
    let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
    for (c, row) in table.iter().enumerate() {
        for (l, &v) in row.iter().enumerate() {
            if v > per_radius[l] {
                per_radius[l] = v;
            }
            if v > best.0 || (v == best.0 && (c, l) < (best.1, best.2)) {
                best = (v, c, l);
            }
        }
    }
    WeightReport {
        value: best.0,
        witness_center: best.1,
        witness_radius: grid[best.2],
        per_radius,
    }
}

/// Muckenhoupt characteristic
/// `[w]_{A_p} = sup_Q (avg_Q w) (avg_Q w^{-1/(p-1)})^{p-1}` for `p > 1`,
/// and `sup_Q (avg_Q w) / min_Q w` at the endpoint `p = 1`.
/// Averages are against the base measure.
pub fn ap_characteristic(space: &Space, w: ArrayView1<f64>, p: f64) -> Result<WeightReport> {
    let n = space.len();
    validate_weight(w, n)?;
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Muckenhoupt exponent must be >= 1, got {p}"
        )));
    }
    let grid_len = space.radius_grid().len();
    if p == 1.0 {
        // avg_Q w over running min of w along each center's sorted order.
        let table = par::map_indexed(n, |c| {
            let order = space.nearest_order(c);
            let mut out = vec![0.0f64; grid_len];
            let mut acc = 0.0f64;
            let mut wmin = f64::INFINITY;
            let mut i = 0usize;
            for (l, slot) in out.iter_mut().enumerate() {
                let k = space.ball_count_by_index(c, l);
                while i < k {
                    let y = order[i] as usize;
                    acc += w[y] * space.measure(y);
                    wmin = wmin.min(w[y]);
                    i += 1;
                }
                *slot = acc / space.ball_mass_by_index(c, l) / wmin;
            }
            out
        });
        return Ok(sup_report(space, &table));
    }
    let dual_exp = -1.0 / (p - 1.0);
    let mut fields = Array2::<f64>::zeros((n, 2));
    for x in 0..n {
        fields[[x, 0]] = w[x] * space.measure(x);
        fields[[x, 1]] = w[x].powf(dual_exp) * space.measure(x);
    }
    let sums = space.ball_sums_all(fields.view());
    let table = par::map_indexed(n, |c| {
        (0..grid_len)
            .map(|l| {
                let mass = space.ball_mass_by_index(c, l);
                (sums[[c, l, 0]] / mass) * (sums[[c, l, 1]] / mass).powf(p - 1.0)
            })
            .collect::<Vec<f64>>()
    });
    Ok(sup_report(space, &table))
}

/// Reverse Holder characteristic
/// `[w]_{RH_q} = sup_Q (avg_Q w^q)^{1/q} / (avg_Q w)`, `q >= 1`.
/// At `q = 1` the ratio is identically one.
pub fn rh_characteristic(space: &Space, w: ArrayView1<f64>, q: f64) -> Result<WeightReport> {
    let n = space.len();
    validate_weight(w, n)?;
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "reverse Holder exponent must be >= 1, got {q}"
        )));
    }
    let grid_len = space.radius_grid().len();
    if q == 1.0 {
        let table = vec![vec![1.0f64; grid_len]; n];
        return Ok(sup_report(space, &table));
    }
    let mut fields = Array2::<f64>::zeros((n, 2));
    for x in 0..n {
        fields[[x, 0]] = w[x] * space.measure(x);
        fields[[x, 1]] = w[x].powf(q) * space.measure(x);
    }
    let sums = space.ball_sums_all(fields.view());
    let table = par::map_indexed(n, |c| {
        (0..grid_len)
            .map(|l| {
                let mass = space.ball_mass_by_index(c, l);
                (sums[[c, l, 1]] / mass).powf(1.0 / q) / (sums[[c, l, 0]] / mass)
            })
            .collect::<Vec<f64>>()
    });
    Ok(sup_report(space, &table))
}

/// Dual weight `w^{1-p'} = w^{-1/(p-1)}` for `p` strictly between 1 and
/// infinity; it satisfies `[w^{1-p'}]_{A_{p'}} = [w]_{A_p}^{p'-1}`.
pub fn duality_transform(w: ArrayView1<f64>, p: f64) -> Result<ndarray::Array1<f64>> {
    for (x, &v) in w.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::SingularWeight { vertex: x, value: v });
        }
    }
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "duality transform needs p in (1, infinity), got {p}"
        )));
    }
    Ok(w.mapv(|v| v.powf(-1.0 / (p - 1.0))))
}

/// Norm in `L^p(w dmu)`; `Inf` ignores the weight (it is the plain sup,
/// since weights are strictly positive).
pub fn weighted_norm(
    space: &Space,
    f: ArrayView1<f64>,
    w: ArrayView1<f64>,
    p: Exponent,
) -> Result<f64> {
    let n = space.len();
    validate_weight(w, n)?;
    if f.len() != n {
        return Err(Error::InvalidParameter(format!(
            "field has {} entries for {n} vertices",
            f.len()
        )));
    }
    Ok(match p {
        Exponent::Inf => f.iter().fold(0.0f64, |m, &v| m.max(v.abs())),
        Exponent::P(p) => {
            if !(p > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "norm exponent must be positive, got {p}"
                )));
            }
            f.iter()
                .zip(w.iter())
                .enumerate()
                .map(|(x, (&v, &ww))| v.abs().powf(p) * ww * space.measure(x))
                .sum::<f64>()
                .powf(1.0 / p)
        }
    })
}

/// The weighted measure `w dmu` as an explicit vector, for the norm
/// estimators.
pub fn weighted_measure(space: &Space, w: ArrayView1<f64>) -> Result<Vec<f64>> {
    validate_weight(w, space.len())?;
    Ok(w.iter()
        .enumerate()
        .map(|(x, &v)| v * space.measure(x))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_point_a2_characteristic_is_twenty_five_sixteenths() {
        // Singletons give 1; the whole space gives
        // avg w * avg 1/w = (5/2) * (5/8) = 25/16.
        let s = Space::path(2).unwrap();
        let w = array![1.0, 4.0];
        let rep = ap_characteristic(&s, w.view(), 2.0).unwrap();
        assert!((rep.value - 25.0 / 16.0).abs() < 1e-14);
        assert_eq!(rep.witness_radius, 1.0);
        assert_eq!(rep.witness_center, 0);
        assert!((rep.per_radius[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn two_point_rh2_characteristic_matches_the_closed_form() {
        // sqrt(avg w^2) / avg w = sqrt(17/2) / (5/2).
        let s = Space::path(2).unwrap();
        let w = array![1.0, 4.0];
        let rep = rh_characteristic(&s, w.view(), 2.0).unwrap();
        let oracle = (17.0f64 / 2.0).sqrt() / 2.5;
        assert!((rep.value - oracle).abs() < 1e-14);
    }

    #[test]
    fn rh1_is_identically_one() {
        let s = Space::grid2d(3, 3).unwrap();
        let mut rng = crate::rng::substream(41, "weights-rh1");
        let w = crate::rng::uniform_field(&mut rng, 9).mapv(f64::exp);
        let rep = rh_characteristic(&s, w.view(), 1.0).unwrap();
        assert_eq!(rep.value, 1.0);
    }

    #[test]
    fn constant_weight_has_unit_characteristics() {
        let s = Space::grid2d(4, 2).unwrap();
        let w = ndarray::Array1::from_elem(8, 3.7);
        for p in [1.0, 1.5, 2.0, 4.0] {
            let rep = ap_characteristic(&s, w.view(), p).unwrap();
            assert!((rep.value - 1.0).abs() < 1e-13, "p = {p}");
        }
        for q in [1.0, 2.0, 3.0] {
            let rep = rh_characteristic(&s, w.view(), q).unwrap();
            assert!((rep.value - 1.0).abs() < 1e-13, "q = {q}");
        }
    }

    #[test]
    fn ap_matches_brute_force_enumeration() {
        let mut rng = crate::rng::substream(42, "weights-brute");
        let s = crate::space::Space::random_connected(12, 6, (0.5, 2.0), (0.5, 2.0), &mut rng)
            .unwrap();
        let w = crate::rng::uniform_field(&mut rng, 12).mapv(f64::exp);
        let p = 3.0;
        let rep = ap_characteristic(&s, w.view(), p).unwrap();
        let mut oracle = 0.0f64;
        for c in 0..12 {
            for &r in s.radius_grid() {
                let b = s.ball(c, r);
                let avg_w: f64 = b.members.iter().map(|&y| w[y] * s.measure(y)).sum::<f64>() / b.mass;
                let avg_dual: f64 = b
                    .members
                    .iter()
                    .map(|&y| w[y].powf(-0.5) * s.measure(y))
                    .sum::<f64>()
                    / b.mass;
                oracle = oracle.max(avg_w * avg_dual.powf(p - 1.0));
            }
        }
        assert!((rep.value - oracle).abs() < 1e-12 * oracle);
    }

    #[test]
    fn a1_uses_the_ball_minimum() {
        let s = Space::path(3).unwrap();
        let w = array![4.0, 1.0, 2.0];
        let rep = ap_characteristic(&s, w.view(), 1.0).unwrap();
        let mut oracle = 0.0f64;
        for c in 0..3 {
            for &r in s.radius_grid() {
                let b = s.ball(c, r);
                let avg: f64 = b.members.iter().map(|&y| w[y]).sum::<f64>() / b.mass;
                let min = b.members.iter().map(|&y| w[y]).fold(f64::INFINITY, f64::min);
                oracle = oracle.max(avg / min);
            }
        }
        assert!((rep.value - oracle).abs() < 1e-14);
        // The pair {0, 1} with weights (4, 1): avg 5/2 over min 1.
        assert!((rep.value - 2.5).abs() < 1e-14);
        assert_eq!(rep.witness_center, 0);
    }

    #[test]
    fn duality_transform_values_and_involution() {
        let w = array![8.0, 27.0];
        let dual = duality_transform(w.view(), 4.0).unwrap();
        // w^{-1/3}: 8 -> 1/2, 27 -> 1/3.
        assert!((dual[0] - 0.5).abs() < 1e-14);
        assert!((dual[1] - 1.0 / 3.0).abs() < 1e-14);
        let p = 4.0;
        let p_dual = p / (p - 1.0);
        let back = duality_transform(dual.view(), p_dual).unwrap();
        for (a, b) in back.iter().zip(w.iter()) {
            assert!((a - b).abs() < 1e-12 * b);
        }
        assert!(duality_transform(w.view(), 1.0).is_err());
        assert!(duality_transform(array![1.0, 0.0].view(), 2.0).is_err());
    }

    #[test]
    fn duality_identity_links_the_characteristics() {
        // [w^{1-p'}]_{A_{p'}} = [w]_{A_p}^{p'-1}.
        let mut rng = crate::rng::substream(43, "weights-dualid");
        let s = crate::space::Space::random_connected(10, 5, (0.5, 2.0), (0.5, 2.0), &mut rng)
            .unwrap();
        let w = crate::rng::uniform_field(&mut rng, 10).mapv(|v| (2.0 * v).exp());
        let p = 2.5;
        let p_dual = p / (p - 1.0);
        let lhs = ap_characteristic(&s, duality_transform(w.view(), p).unwrap().view(), p_dual)
            .unwrap()
            .value;
        let rhs = ap_characteristic(&s, w.view(), p)
            .unwrap()
            .value
            .powf(p_dual - 1.0);
        assert!((lhs - rhs).abs() < 1e-10 * rhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn ap_is_nonincreasing_in_p() {
        let mut rng = crate::rng::substream(44, "weights-mono");
        let s = crate::space::Space::random_connected(10, 4, (0.5, 2.0), (0.5, 2.0), &mut rng)
            .unwrap();
        let w = crate::rng::uniform_field(&mut rng, 10).mapv(|v| (3.0 * v).exp());
        let a15 = ap_characteristic(&s, w.view(), 1.5).unwrap().value;
        let a2 = ap_characteristic(&s, w.view(), 2.0).unwrap().value;
        let a4 = ap_characteristic(&s, w.view(), 4.0).unwrap().value;
        assert!(a15 >= a2 - 1e-12);
        assert!(a2 >= a4 - 1e-12);
    }

    #[test]
    fn weighted_norm_frozen_value_and_endpoint() {
        let s = Space::path(2).unwrap();
        let f = array![1.0, -2.0];
        let w = array![1.0, 3.0];
        let n2 = weighted_norm(&s, f.view(), w.view(), Exponent::P(2.0)).unwrap();
        assert!((n2 - 13.0f64.sqrt()).abs() < 1e-14);
        let ninf = weighted_norm(&s, f.view(), w.view(), Exponent::Inf).unwrap();
        assert_eq!(ninf, 2.0);
        let nu = weighted_measure(&s, w.view()).unwrap();
        assert_eq!(nu, vec![1.0, 3.0]);
    }

    #[test]
    fn power_weight_characteristic_growth_separates_exponents() {
        // w = (1 + d(x0, x))^alpha on growing paths: subcritical exponents
        // keep [w]_{A_2} bounded, supercritical ones blow up with size.
        let char_at = |n: usize, alpha: f64| -> f64 {
            let s = Space::path(n).unwrap();
            let w = ndarray::Array1::from_shape_fn(n, |i| {
                (1.0 + s.dist(0, i)).powf(alpha)
            });
            ap_characteristic(&s, w.view(), 2.0).unwrap().value
        };
        let sub: Vec<f64> = [16, 32, 64].iter().map(|&n| char_at(n, 0.5)).collect();
        let sup: Vec<f64> = [16, 32, 64].iter().map(|&n| char_at(n, 3.0)).collect();
        assert!(
            sub[2] / sub[1] < 1.3 && sub[1] / sub[0] < 1.3,
            "subcritical characteristic should stabilize: {sub:?}"
        );
        assert!(
            sup[2] / sup[1] > 1.5 && sup[1] / sup[0] > 1.5,
            "supercritical characteristic should grow: {sup:?}"
        );
    }

    #[test]
    fn invalid_weights_are_rejected_everywhere() {
        let s = Space::path(2).unwrap();
        let bad = array![1.0, 0.0];
        assert!(ap_characteristic(&s, bad.view(), 2.0).is_err());
        assert!(rh_characteristic(&s, bad.view(), 2.0).is_err());
        assert!(weighted_norm(&s, array![1.0, 1.0].view(), bad.view(), Exponent::P(2.0)).is_err());
        let w = array![1.0, 2.0];
        assert!(ap_characteristic(&s, w.view(), 0.5).is_err());
        assert!(rh_characteristic(&s, w.view(), 0.5).is_err());
    }
}
