//! Acceptance gate: twelve numbered end-to-end checks over the whole
//! workspace. Each check prints one PASS/FAIL line with its headline
//! numbers, written straight to stdout so the lines survive harness
//! capture, and asserts the same condition so the target fails loudly.
//!
//! Heavy fixtures (the 4096-vertex grid eigensystem in particular) are
//! shared through `OnceLock`, so checks can run in any order without
//! paying for them twice.

use std::io::Write as _;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use ndarray::{Array1, ArrayView1};

use sgcalc_core::bmo::{band_pass_carleson, bmo_l_norm, cancellation_norm, OscillationVariant};
use sgcalc_core::mixed_norm::{bilinear_norm, BilinearAction, MixedNormConfig};
use sgcalc_core::paraproducts::{
    band_heat_cross_energy, paraproduct_inner_band, paraproduct_outer_band,
    product_decomposition, reproducing_constant, reproducing_residual, trilinear_two_band, Slot,
};
use sgcalc_core::rng;
use sgcalc_core::space::{Exponent, Space};
use sgcalc_core::spectral::{
    conservation_defect, heat_positivity_defect, resolvent_sobolev_check, semigroup_defect,
    Generator, GeneratorKind, ScaleGrid, SpectralFunction,
};
use sgcalc_core::t1::{
    estimate_l2_norm, make_cz_operator, t1_report, DiagonalRule, KernelProfile, KernelSpec,
    OperatorUnderTest, Thresholds,
};
use sgcalc_core::weights::ap_characteristic;

// ----------------------------------------------------------------------
// shared plumbing
// ----------------------------------------------------------------------

fn gate(id: &str, name: &str, pass: bool, detail: String) {
    // Direct write bypasses the test harness capture.
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "acceptance {id} {name}: {verdict} ({detail})").ok();
    drop(out);
    assert!(pass, "{id} {name}: {detail}");
}

struct Level {
    space: Arc<Space>,
    gen: Generator,
}

impl Level {
    fn grid2d(nx: usize) -> Level {
        let space = Space::grid2d(nx, nx).expect("building the grid");
        let gen = Generator::assemble(Arc::clone(&space), GeneratorKind::Combinatorial)
            .expect("assembling the generator");
        Level { space, gen }
    }

    fn grid(&self, ratio: f64, alpha: f64, beta: f64) -> ScaleGrid {
        ScaleGrid::for_generator(&self.gen, ratio, alpha, beta).expect("building the grid")
    }
}

fn level16() -> &'static Level {
    static L: OnceLock<Level> = OnceLock::new();
    L.get_or_init(|| Level::grid2d(16))
}

fn level24() -> &'static Level {
    static L: OnceLock<Level> = OnceLock::new();
    L.get_or_init(|| Level::grid2d(24))
}

fn level32() -> &'static Level {
    static L: OnceLock<Level> = OnceLock::new();
    L.get_or_init(|| Level::grid2d(32))
}

fn level64() -> &'static Level {
    static L: OnceLock<Level> = OnceLock::new();
    L.get_or_init(|| Level::grid2d(64))
}

fn field(space: &Space, seed: u64, label: &str) -> Array1<f64> {
    let mut st = rng::substream(seed, label);
    rng::normal_field(&mut st, space.len())
}

fn mean_zero(space: &Space, seed: u64, label: &str) -> Array1<f64> {
    let f = field(space, seed, label);
    &f - space.mean(f.view())
}

fn l2(space: &Space, f: ArrayView1<f64>) -> f64 {
    space.lp_norm(f, Exponent::P(2.0))
}

fn rel_gap(a: f64, b: f64) -> f64 {
    let lo = a.min(b);
    let hi = a.max(b);
    if hi <= 1e-300 {
        1.0
    } else if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

// ----------------------------------------------------------------------
// 1. dense-spectral vs matrix-free routes
// ----------------------------------------------------------------------

#[test]
fn c01_dense_and_matrix_free_routes_agree() {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let n = 20 + 9 * i as usize;
        let mut st = rng::substream(101, &format!("acc-c1-graph-{i}"));
        let space =
            Space::random_connected(n, n / 4, (0.5, 2.0), (0.5, 2.0), &mut st).expect("graph");
        let gen = Generator::assemble(Arc::clone(&space), GeneratorKind::Combinatorial)
            .expect("generator");
        let es = gen.eigensystem().expect("eigensystem");
        let lam_max = es.lambda_max();
        let lam2 = es.lambda2().expect("connected graph has a gap");
        let f = field(&space, 102, &format!("acc-c1-field-{i}"));
        let times = [
            0.5 / lam_max,
            1.0 / (lam2 * lam_max).sqrt(),
            (1.0 / lam2).min(60.0 / lam_max),
        ];
        let funcs = [
            SpectralFunction::Heat,
            SpectralFunction::HeatDerivative(1),
            SpectralFunction::HeatDerivative(2),
            SpectralFunction::HeatDerivative(3),
            SpectralFunction::BandPass(1),
            SpectralFunction::BandPass(2),
            SpectralFunction::ResolventPower(1),
            SpectralFunction::ResolventPower(2),
        ];
        for &t in &times {
            for func in &funcs {
                let dense = gen.apply_function(func, t, f.view()).expect("dense route");
                let free = gen
                    .apply_function_chebyshev(func, t, f.view(), 1e-12, 4000)
                    .expect("matrix-free route");
                let diff = &dense - &free;
                let rel = l2(&space, diff.view()) / l2(&space, dense.view()).max(1e-280);
                worst = worst.max(rel);
            }
        }
    }
    gate(
        "c01",
        "dense vs matrix-free",
        worst <= 1e-8,
        format!("worst rel {worst:.3e} over 20 graphs, {:.1?}", t0.elapsed()),
    );
}

// ----------------------------------------------------------------------
// 2. semigroup laws across the constructor families
// ----------------------------------------------------------------------

#[test]
fn c02_semigroup_laws_hold_across_families() {
    let t0 = Instant::now();
    let mut spaces: Vec<(String, Arc<Space>)> = vec![
        ("path16".into(), Space::path(16).unwrap()),
        (
            "path12-half".into(),
            Space::path_with_edge_length(12, 0.5).unwrap(),
        ),
        ("cycle14".into(), Space::cycle(14).unwrap()),
        ("grid5x7".into(), Space::grid2d(5, 7).unwrap()),
    ];
    for (i, n) in [(0u64, 40usize), (1, 73)] {
        let mut st = rng::substream(201, &format!("acc-c2-graph-{i}"));
        spaces.push((
            format!("random{n}"),
            Space::random_connected(n, n / 3, (0.5, 2.0), (0.5, 2.0), &mut st).unwrap(),
        ));
    }

    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    for (name, space) in &spaces {
        let mut gens = vec![(
            "combinatorial",
            Generator::assemble(Arc::clone(space), GeneratorKind::Combinatorial).unwrap(),
        )];
        let mut st = rng::substream(202, &format!("acc-c2-coeffs-{name}"));
        let coeffs: Vec<f64> = rng::normal_field(&mut st, space.edges().len())
            .iter()
            .map(|v| 1.25 + 0.75 * v.tanh())
            .collect();
        gens.push((
            "divergence",
            Generator::assemble(Arc::clone(space), GeneratorKind::Divergence { coeffs }).unwrap(),
        ));

        for (kind, gen) in &gens {
            let f = field(space, 203, &format!("acc-c2-field-{name}-{kind}"));
            let g = field(space, 204, &format!("acc-c2-probe-{name}-{kind}"));
            let (t, s) = (0.37, 1.13);
            let heat = SpectralFunction::Heat;
            let pf = gen.apply_function(&heat, t, f.view()).unwrap();
            let pg = gen.apply_function(&heat, t, g.view()).unwrap();
            let sym = (space.inner(pf.view(), g.view()) - space.inner(f.view(), pg.view())).abs()
                / (l2(space, f.view()) * l2(space, g.view()));
            let checks = [
                ("conservation", conservation_defect(gen, t).unwrap()),
                ("positivity", heat_positivity_defect(gen, t).unwrap()),
                (
                    "composition",
                    semigroup_defect(gen, f.view(), t, s).unwrap(),
                ),
                ("self-adjoint", sym),
            ];
            for (what, value) in checks {
                if value > worst {
                    worst = value;
                    worst_at = format!("{what} on {name} ({kind})");
                }
            }
        }
    }
    gate(
        "c02",
        "semigroup laws",
        worst <= 1e-10,
        format!("worst defect {worst:.3e} at {worst_at}, {:.1?}", t0.elapsed()),
    );
}

// ----------------------------------------------------------------------
// 3. analytic quadrature anchors
// ----------------------------------------------------------------------

#[test]
fn c03_quadrature_matches_the_analytic_anchors() {
    let t0 = Instant::now();
    let space = Space::path(16).unwrap();
    let gen = Generator::assemble(Arc::clone(&space), GeneratorKind::Combinatorial).unwrap();
    let grid = ScaleGrid::for_generator(&gen, 2f64.powf(0.25), 1e-4, 1e4).unwrap();
    let es = gen.eigensystem().unwrap();
    let e = es.basis.column(3).to_owned();
    let ones = Array1::<f64>::ones(space.len());

    // The frozen constants themselves: 1 / int psi_1 du/u = 2 and
    // Gamma(N) (2^-N - 3^-N).
    let c_exact = (reproducing_constant(1) - 2.0).abs();
    let cross_1 = (band_heat_cross_energy(1) - (0.5 - 1.0 / 3.0)).abs();
    let cross_2 = (band_heat_cross_energy(2) - (0.25 - 1.0 / 9.0)).abs();

    // Quadrature side on a unit eigenvector with a positive eigenvalue.
    let resid = reproducing_residual(&gen, e.view(), &grid, 1).unwrap();
    let lam1 = trilinear_two_band(&gen, ones.view(), e.view(), e.view(), &grid, 1, Slot::First)
        .unwrap()
        .value;
    let lam1_rel = (lam1 / (13.0 / 144.0) - 1.0).abs();
    let mut pi_rel = 0.0f64;
    for order in [1u32, 2] {
        let out = paraproduct_outer_band(&gen, ones.view(), e.view(), &grid, order).unwrap();
        let alpha = space.inner(out.field.view(), e.view());
        pi_rel = pi_rel.max((alpha / band_heat_cross_energy(order) - 1.0).abs());
    }

    let pass = c_exact == 0.0
        && cross_1 <= 1e-15
        && cross_2 <= 1e-15
        && resid <= 1e-4
        && lam1_rel <= 1e-4
        && pi_rel <= 1e-4;
    gate(
        "c03",
        "analytic anchors",
        pass,
        format!(
            "reproducing resid {resid:.2e}, one-band form rel {lam1_rel:.2e}, \
             low-low band rel {pi_rel:.2e}, {:.1?}",
            t0.elapsed()
        ),
    );
}

// ----------------------------------------------------------------------
// 4. reproducing residual size and refinement decay
// ----------------------------------------------------------------------

#[test]
fn c04_reproducing_residual_is_small_and_refines() {
    let t0 = Instant::now();
    let mut worst_ev = 0.0f64;
    let mut worst_rand = 0.0f64;
    let mut worst_drop = f64::INFINITY;
    for (name, space) in [
        ("path64", Space::path(64).unwrap()),
        ("grid16", Space::grid2d(16, 16).unwrap()),
    ] {
        let gen = Generator::assemble(Arc::clone(&space), GeneratorKind::Combinatorial).unwrap();
        let es = gen.eigensystem().unwrap();
        let ev = es.basis.column(2).to_owned();
        let f = mean_zero(&space, 401, &format!("acc-c4-{name}"));

        // Tolerances at the default quadrature ratio.
        let fine = ScaleGrid::for_generator(&gen, 2f64.powf(0.25), 1e-4, 1e4).unwrap();
        worst_ev = worst_ev.max(reproducing_residual(&gen, ev.view(), &fine, 1).unwrap());
        worst_rand = worst_rand.max(reproducing_residual(&gen, f.view(), &fine, 1).unwrap());

        // Refinement drop where quadrature error still dominates the
        // grid-span truncation floor.
        let coarse = ScaleGrid::for_generator(&gen, 2.0, 1e-4, 1e4).unwrap();
        let refined = coarse.refine();
        for probe in [&ev, &f] {
            let r0 = reproducing_residual(&gen, probe.view(), &coarse, 1).unwrap();
            let r1 = reproducing_residual(&gen, probe.view(), &refined, 1).unwrap();
            worst_drop = worst_drop.min(r0 / r1.max(1e-300));
        }
    }
    let pass = worst_ev <= 1e-6 && worst_rand <= 1e-4 && worst_drop >= 2.0;
    gate(
        "c04",
        "reproducing residual",
        pass,
        format!(
            "eigenvector {worst_ev:.2e}, random {worst_rand:.2e}, \
             refinement drop x{worst_drop:.1}, {:.1?}",
            t0.elapsed()
        ),
    );
}

// ----------------------------------------------------------------------
// 5. oscillation seminorm axioms and band-energy Carleson control
// ----------------------------------------------------------------------

#[test]
fn c05_bmo_axioms_hold_and_carleson_ratios_are_stable() {
    let t0 = Instant::now();

    // Seminorm axioms on a small grid.
    let small = Level::grid2d(8);
    let grid_s = small.grid(2.0, 1e-2, 1e2);
    let f = field(&small.space, 501, "acc-c5-f");
    let g = field(&small.space, 501, "acc-c5-g");
    let norm = |h: ArrayView1<f64>| {
        bmo_l_norm(&small.gen, h, &grid_s, OscillationVariant::L1)
            .unwrap()
            .norm
    };
    let nf = norm(f.view());
    let ng = norm(g.view());
    let scaled = (norm((1.7 * &f).view()) - 1.7 * nf).abs();
    let sum = norm((&f + &g).view());
    let triangle = (sum - nf - ng).max(0.0);
    let constant = norm(Array1::from_elem(small.space.len(), 3.25).view());
    let axioms = scaled <= 1e-10 && triangle <= 1e-10 && constant <= 1e-10;

    // Ratio sup over a 50-field ensemble at two levels.
    let mut sups = Vec::new();
    for level in [level32(), level64()] {
        let grid = level.grid(2.0, 1e-2, 1e2);
        let mut sup = [0.0f64; 2];
        for i in 0..50 {
            let h = field(
                &level.space,
                502,
                &format!("acc-c5-ens-{}-{i}", level.space.len()),
            );
            let b = bmo_l_norm(&level.gen, h.view(), &grid, OscillationVariant::L1).unwrap();
            for (slot, k) in [(0usize, 1u32), (1, 2)] {
                let c = band_pass_carleson(&level.gen, h.view(), &grid, k).unwrap();
                sup[slot] = sup[slot].max(c.norm / (b.norm * b.norm));
            }
        }
        sups.push(sup);
    }
    let drift_k1 = rel_gap(sups[0][0], sups[1][0]);
    let drift_k2 = rel_gap(sups[0][1], sups[1][1]);
    let pass = axioms && drift_k1 <= 1.3 && drift_k2 <= 1.3;
    gate(
        "c05",
        "bmo and carleson",
        pass,
        format!(
            "axiom defects ({scaled:.1e}, {triangle:.1e}, {constant:.1e}); \
             ratio sup k1 {:.4}->{:.4} (x{drift_k1:.3}), k2 {:.4}->{:.4} (x{drift_k2:.3}), {:.1?}",
            sups[0][0],
            sups[1][0],
            sups[0][1],
            sups[1][1],
            t0.elapsed()
        ),
    );
}

// ----------------------------------------------------------------------
// 6. paraproduct norm stability across space refinement
// ----------------------------------------------------------------------

struct OuterParaproduct<'a> {
    gen: &'a Generator,
    grid: &'a ScaleGrid,
    order: u32,
}

impl OuterParaproduct<'_> {
    /// Both counting transposes of the band-outside form: unweigh by the
    /// measure, run the band-inside form with the fixed factor under the
    /// heat window, reweigh.
    fn conjugate(&self, u: ArrayView1<f64>, fixed: ArrayView1<f64>) -> Array1<f64> {
        let mu = self.gen.space().measures();
        let scaled = Array1::from_iter(u.iter().zip(mu).map(|(&v, &m)| v / m));
        let mut adj = paraproduct_inner_band(self.gen, fixed, scaled.view(), self.grid, self.order)
            .expect("adjoint on validated inputs")
            .field;
        for (x, v) in adj.iter_mut().enumerate() {
            *v *= mu[x];
        }
        adj
    }
}

impl BilinearAction for OuterParaproduct<'_> {
    fn dim_first(&self) -> usize {
        self.gen.len()
    }
    fn dim_second(&self) -> usize {
        self.gen.len()
    }
    fn dim_out(&self) -> usize {
        self.gen.len()
    }
    fn apply(&self, f: ArrayView1<f64>, g: ArrayView1<f64>) -> Array1<f64> {
        paraproduct_outer_band(self.gen, f, g, self.grid, self.order)
            .expect("apply on validated inputs")
            .field
    }
    fn transpose_first(&self, h: ArrayView1<f64>, g: ArrayView1<f64>) -> Array1<f64> {
        self.conjugate(h, g)
    }
    fn transpose_second(&self, h: ArrayView1<f64>, f: ArrayView1<f64>) -> Array1<f64> {
        self.conjugate(h, f)
    }
}

#[test]
fn c06_paraproduct_norm_estimates_are_stable_across_levels() {
    let t0 = Instant::now();
    let triples: [(&str, Exponent, Exponent, Exponent); 4] = [
        ("inf-2-2", Exponent::Inf, Exponent::P(2.0), Exponent::P(2.0)),
        (
            "4-4-2",
            Exponent::P(4.0),
            Exponent::P(4.0),
            Exponent::P(2.0),
        ),
        ("2-inf-2", Exponent::P(2.0), Exponent::Inf, Exponent::P(2.0)),
        (
            "2-2-1",
            Exponent::P(2.0),
            Exponent::P(2.0),
            Exponent::P(1.0),
        ),
    ];
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); triples.len() + 1];
    let mut ap_note = String::new();
    for level in [level16(), level32(), level64()] {
        let grid = level.grid(4.0, 1e-2, 1e2);
        let action = OuterParaproduct {
            gen: &level.gen,
            grid: &grid,
            order: 2,
        };
        let mu = level.space.measures().to_vec();
        let cfg = |label: String| MixedNormConfig {
            restarts: 2,
            max_iterations: 60,
            tol: 1e-5,
            seed: 7,
            label,
        };
        for (slot, (tag, p, q, r)) in triples.iter().enumerate() {
            let est = bilinear_norm(
                &action,
                &mu,
                &mu,
                &mu,
                *p,
                *q,
                *r,
                &cfg(format!("acc-c6-{tag}")),
            )
            .unwrap();
            values[slot].push(est.norm);
        }

        // Weighted variant: a power weight lying in both classes.
        let x0 = 0usize;
        let w = Array1::from_iter(
            (0..level.space.len()).map(|x| (1.0 + level.space.dist(x0, x)).powf(0.5)),
        );
        let ap2 = ap_characteristic(&level.space, w.view(), 2.0).unwrap().value;
        let ap4 = ap_characteristic(&level.space, w.view(), 4.0).unwrap().value;
        assert!(ap2.is_finite() && ap4.is_finite() && ap2 >= 1.0 && ap4 >= 1.0);
        if ap_note.is_empty() {
            ap_note = format!("[w]_2 {ap2:.2} [w]_4 {ap4:.2}");
        }
        let nu: Vec<f64> = level
            .space
            .measures()
            .iter()
            .zip(w.iter())
            .map(|(&m, &wv)| m * wv)
            .collect();
        let est = bilinear_norm(
            &action,
            &nu,
            &nu,
            &nu,
            Exponent::P(4.0),
            Exponent::P(4.0),
            Exponent::P(2.0),
            &cfg("acc-c6-weighted".to_string()),
        )
        .unwrap();
        values[triples.len()].push(est.norm);
    }

    let mut worst = 0.0f64;
    let mut detail = String::new();
    for (slot, series) in values.iter().enumerate() {
        let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = series.iter().cloned().fold(0.0f64, f64::max);
        let gap = rel_gap(lo, hi);
        worst = worst.max(gap);
        let tag = if slot < triples.len() {
            triples[slot].0
        } else {
            "weighted-4-4-2"
        };
        detail.push_str(&format!("{tag} x{gap:.3}; "));
    }
    gate(
        "c06",
        "paraproduct stability",
        worst <= 1.2,
        format!("{detail}{ap_note}, {:.1?}", t0.elapsed()),
    );
}

// ----------------------------------------------------------------------
// 7. product decomposition residual under quadrature refinement
// ----------------------------------------------------------------------

#[test]
fn c07_product_decomposition_residual_halves_per_refinement() {
    let t0 = Instant::now();
    let space = Space::path(32).unwrap();
    let gen = Generator::assemble(Arc::clone(&space), GeneratorKind::Combinatorial).unwrap();
    let f = mean_zero(&space, 701, "acc-c7-f");
    let g = mean_zero(&space, 702, "acc-c7-g");
    // Start coarse: below ~1e-8 the span-truncation floor takes over and
    // further quadrature refinement stops showing.
    let g0 = ScaleGrid::for_generator(&gen, 4.0, 1e-4, 1e4).unwrap();
    let g1 = g0.refine();
    let g2 = g1.refine();
    let r0 = product_decomposition(&gen, f.view(), g.view(), &g0)
        .unwrap()
        .residual_norm;
    let r1 = product_decomposition(&gen, f.view(), g.view(), &g1)
        .unwrap()
        .residual_norm;
    let r2 = product_decomposition(&gen, f.view(), g.view(), &g2)
        .unwrap()
        .residual_norm;
    let pass = r1 <= r0 / 2.0 && r2 <= r1 / 2.0;
    gate(
        "c07",
        "product decomposition",
        pass,
        format!("residuals {r0:.2e} -> {r1:.2e} -> {r2:.2e}, {:.1?}", t0.elapsed()),
    );
}

// ----------------------------------------------------------------------
// 8. forward testing conditions for the built-in singular kernel
// ----------------------------------------------------------------------

#[test]
fn c08_riesz_kernel_satisfies_the_forward_hypotheses_stably() {
    let t0 = Instant::now();
    let mut l2_norms = Vec::new();
    let mut bmo_t = Vec::new();
    let mut bmo_ts = Vec::new();
    let mut hyp_ok = true;
    let mut exps = String::new();
    for level in [level16(), level24()] {
        let op = make_cz_operator(
            Arc::clone(&level.space),
            &KernelSpec {
                profile: KernelProfile::RieszLike,
                gamma: 2.0,
                diagonal: DiagonalRule::Zero,
                truncation_radius: None,
                kappa: 2,
                label: format!("acc-c8-{}", level.space.len()),
            },
        )
        .unwrap();
        let grid = level.grid(4.0, 1e-2, 1e2);
        let report = t1_report(&op, &level.gen, &grid, &Thresholds::default()).unwrap();
        hyp_ok &= report.verdict.off_diagonal_pass
            && report.verdict.weak_boundedness_pass
            && report.verdict.hypotheses_pass;
        let fwd = report.off_diagonal.pooled_forward_exponent.unwrap_or(-1.0);
        let adj = report.off_diagonal.pooled_adjoint_exponent.unwrap_or(-1.0);
        exps.push_str(&format!(
            "n{}: decay ({fwd:.2}, {adj:.2}) >= {:.2}; ",
            level.space.len(),
            report.min_decay_exponent
        ));
        l2_norms.push(report.verdict.l2_norm);
        bmo_t.push(report.verdict.t_one_bmo_norm);
        bmo_ts.push(report.verdict.t_star_one_bmo_norm);
    }
    let l2_gap = rel_gap(l2_norms[0], l2_norms[1]);
    let bmo_gap = rel_gap(bmo_t[0], bmo_t[1]).max(rel_gap(bmo_ts[0], bmo_ts[1]));
    let pass = hyp_ok && l2_gap <= 1.15 && bmo_gap <= 1.25;
    gate(
        "c08",
        "forward testing conditions",
        pass,
        format!(
            "{exps}l2 {:.3}->{:.3} (x{l2_gap:.3}), bmo x{bmo_gap:.3}, {:.1?}",
            l2_norms[0],
            l2_norms[1],
            t0.elapsed()
        ),
    );
}

// ----------------------------------------------------------------------
// 9. reverse direction: bounded operators have small smoothed constants
// ----------------------------------------------------------------------

#[test]
fn c09_normalized_random_operators_have_stable_reverse_constants() {
    let t0 = Instant::now();
    let mut worsts = Vec::new();
    for level in [level16(), level24()] {
        let n = level.space.len();
        let grid = level.grid(2.0, 1e-2, 1e2);
        let ones = Array1::<f64>::ones(n);
        let mut worst = 0.0f64;
        for i in 0..10 {
            let mut st = rng::substream(901, &format!("acc-c9-{n}-{i}"));
            let m = rng::normal_field(&mut st, n * n)
                .into_shape((n, n))
                .unwrap();
            let t_op =
                OperatorUnderTest::from_matrix(Arc::clone(&level.space), m, 1, format!("c9-{i}"))
                    .unwrap();
            let est = estimate_l2_norm(&t_op).unwrap();
            let normalized = t_op.matrix().to_owned() / est.norm;
            let t_op = OperatorUnderTest::from_matrix(
                Arc::clone(&level.space),
                normalized,
                1,
                format!("c9n-{i}"),
            )
            .unwrap();
            let t_one = t_op.apply(ones.view());
            let c = cancellation_norm(&level.gen, t_one.view(), &grid, 1).unwrap();
            worst = worst.max(c.norm);
        }
        worsts.push(worst);
    }
    let gap = rel_gap(worsts[0], worsts[1]);
    gate(
        "c09",
        "reverse constants",
        gap <= 1.3,
        format!(
            "sup over 10 operators {:.4} -> {:.4} (x{gap:.3}), {:.1?}",
            worsts[0],
            worsts[1],
            t0.elapsed()
        ),
    );
}

// ----------------------------------------------------------------------
// 10. pointwise-vs-resolvent control over balls
// ----------------------------------------------------------------------

#[test]
fn c10_sobolev_resolvent_ratio_is_bounded_and_stable() {
    let t0 = Instant::now();
    let m_pow = 3u32;
    let mut sups = Vec::new();
    for level in [level32(), level64()] {
        let space = &level.space;
        let gen = &level.gen;
        let min_d = space.min_positive_distance();
        let diam = space.diameter();
        // Dyadic radii shared by both levels, paired with t = r^m.
        let radii: Vec<f64> = [1.0, 2.0, 4.0, 8.0, 16.0]
            .into_iter()
            .filter(|&r| r >= min_d && r <= diam / 2.0)
            .collect();

        let mut sup = 0.0f64;
        let mut cross_checked = false;
        for i in 0..20 {
            let f = field(space, 1001, &format!("acc-c10-{}-{i}", space.len()));
            for (j, &r) in radii.iter().enumerate() {
                let t = gen.scale_for_radius(r);
                let lifted = gen
                    .apply_function(&SpectralFunction::ResolventInverse(m_pow), t, f.view())
                    .unwrap();
                let maximal = space.maximal(lifted.view(), 2.0);
                let mut level_sup = 0.0f64;
                let mut argmax = 0usize;
                for c in 0..space.len() {
                    let ball = space.ball(c, r);
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
                    if rhs > 0.0 && lhs / rhs > level_sup {
                        level_sup = lhs / rhs;
                        argmax = c;
                    }
                }
                // The sweep must agree with the dedicated per-ball probe.
                if i == 0 && j == 0 {
                    let ball = space.ball(argmax, r);
                    let (_, _, ratio) =
                        resolvent_sobolev_check(gen, t, m_pow, &ball, f.view()).unwrap();
                    assert!(
                        (ratio - level_sup).abs() <= 1e-12 * level_sup.max(1.0),
                        "sweep {level_sup} vs probe {ratio}"
                    );
                    cross_checked = true;
                }
                sup = sup.max(level_sup);
            }
        }
        assert!(cross_checked);
        sups.push(sup);
    }
    let gap = rel_gap(sups[0], sups[1]);
    gate(
        "c10",
        "resolvent control",
        sups.iter().all(|s| s.is_finite()) && gap <= 1.25,
        format!(
            "ratio sup {:.3} -> {:.3} (x{gap:.3}), {:.1?}",
            sups[0],
            sups[1],
            t0.elapsed()
        ),
    );
}

// ----------------------------------------------------------------------
// 11. geometry reports against counting oracles
// ----------------------------------------------------------------------

/// Doubling ratios on a uniform path, computed by interval counting over
/// the canonical radii (every distinct distance, zero included).
fn path_doubling_oracle(n: usize, len: f64) -> (f64, Vec<(f64, f64, usize)>) {
    let mass = |i: usize, r: f64| -> f64 {
        let mut total = 1.0;
        for j in 0..n {
            if j != i && (j as f64 - i as f64).abs() * len <= r {
                total += 1.0;
            }
        }
        total
    };
    let radii: Vec<f64> = (0..n).map(|k| k as f64 * len).collect();
    let mut rows = Vec::new();
    let mut c0 = f64::NEG_INFINITY;
    for &r in &radii {
        let mut best = f64::NEG_INFINITY;
        let mut who = 0usize;
        for i in 0..n {
            let ratio = mass(i, 2.0 * r) / mass(i, r);
            if ratio > best {
                best = ratio;
                who = i;
            }
        }
        rows.push((r, best, who));
        c0 = c0.max(best);
    }
    (c0, rows)
}

#[test]
fn c11_geometry_reports_match_the_counting_oracles() {
    let t0 = Instant::now();

    // Exact agreement on paths.
    for (n, len) in [(9usize, 1.0f64), (24, 1.0), (13, 0.5)] {
        let space = if len == 1.0 {
            Space::path(n).unwrap()
        } else {
            Space::path_with_edge_length(n, len).unwrap()
        };
        let report = space.measure_doubling();
        let (c0, rows) = path_doubling_oracle(n, len);
        assert_eq!(report.c0, c0, "c0 on path({n}, {len})");
        assert_eq!(report.per_radius.len(), rows.len());
        for (got, want) in report.per_radius.iter().zip(&rows) {
            assert_eq!(got.radius, want.0);
            assert_eq!(got.max_ratio, want.1);
            assert_eq!(got.witness_center, want.2);
        }
        assert_eq!(report.d_hom, c0.log2().max(0.0));
    }

    // Families beyond paths report sane constants.
    for space in [Space::cycle(12).unwrap(), Space::grid2d(6, 5).unwrap()] {
        let rep = space.measure_doubling();
        assert!(rep.c0 >= 1.0 && rep.c0.is_finite());
        assert!(rep.d_hom >= 0.0 && rep.c_theta >= 1.0);
    }

    // Maximal function against brute-force enumeration.
    let mut worst = 0.0f64;
    for space in [Space::cycle(9).unwrap(), Space::grid2d(4, 3).unwrap()] {
        let f = field(&space, 1101, "acc-c11");
        for s in [1.0f64, 2.0] {
            let fast = space.maximal(f.view(), s);
            for x in 0..space.len() {
                let mut best = 0.0f64;
                for c in 0..space.len() {
                    for &r in space.radius_grid() {
                        let ball = space.ball(c, r);
                        if !ball.members.contains(&x) {
                            continue;
                        }
                        let num: f64 = ball
                            .members
                            .iter()
                            .map(|&y| f[y].abs().powf(s) * space.measure(y))
                            .sum();
                        best = best.max((num / ball.mass).powf(1.0 / s));
                    }
                }
                worst = worst.max((fast[x] - best).abs() / best.max(1e-300));
            }
        }
    }
    gate(
        "c11",
        "geometry oracles",
        worst <= 1e-12,
        format!(
            "paths exact, maximal brute-force rel {worst:.2e}, {:.1?}",
            t0.elapsed()
        ),
    );
}

// ----------------------------------------------------------------------
// 12. byte-identical reports under a fixed seed
// ----------------------------------------------------------------------

#[test]
fn c12_full_config_runs_are_byte_identical() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("acceptance.toml");
    std::fs::write(
        &cfg,
        r#"
seed = 29

[space]
kind = "grid2d"
nx = 8
ny = 8

[grid]
ratio = 2.0

[semigroup]
[bmo]
[carleson]
count = 4

[paraproduct]
weight_alpha = 0.5
restarts = 2
max_iterations = 16

[weights]

[t1]
kernel = "riesz"
gamma = 2.0
diagonal = "zero"

[sweep]
levels = [6, 8]
suites = ["geometry", "bmo"]
drift_tolerance = 2.0
"#,
    )
    .unwrap();

    let commands = [
        "geometry",
        "semigroup",
        "bmo",
        "carleson",
        "paraproduct",
        "weights",
        "t1-check",
        "sweep",
    ];
    let mut all_same = true;
    for command in commands {
        let mut reports = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("{command}-{run}"));
            let status = std::process::Command::new(env!("CARGO_BIN_EXE_sgcalc"))
                .args([
                    command,
                    "--config",
                    cfg.to_str().unwrap(),
                    "--out",
                    out.to_str().unwrap(),
                ])
                .output()
                .expect("running the binary");
            assert!(
                status.status.code() == Some(0) || status.status.code() == Some(2),
                "{command} run {run}: {}",
                String::from_utf8_lossy(&status.stderr)
            );
            reports.push(std::fs::read(out.join("report.json")).unwrap());
        }
        all_same &= reports[0] == reports[1];
    }
    gate(
        "c12",
        "deterministic reports",
        all_same,
        format!("{} commands re-run byte-identically, {:.1?}", commands.len(), t0.elapsed()),
    );
}
