//! Suite runners: build the space, generator, and grid from a config,
//! execute one module's measurements, and package results for emission.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use ndarray::{Array1, Array2, ArrayView1};
use serde_json::json;

use sgcalc_core::bmo::{
    band_pass_carleson, bmo_classical_norm, bmo_l_norm, cancellation_norm, OscillationVariant,
};
use sgcalc_core::mixed_norm::{bilinear_norm, BilinearAction, MixedNormConfig};
use sgcalc_core::paraproducts::{
    default_band_order, paraproduct_inner_band, paraproduct_outer_band, product_decomposition,
    reproducing_residual,
};
use sgcalc_core::space::{poincare_constant, RadiusGridMode, Space};
use sgcalc_core::spectral::{
    conservation_defect, heat_positivity_defect, limits_check, semigroup_defect, Generator,
    GeneratorKind, ScaleGrid, SpectralFunction,
};
use sgcalc_core::t1::{
    make_cz_operator, t1_report, DiagonalRule, KernelProfile, KernelSpec, OperatorUnderTest,
    Thresholds,
};
use sgcalc_core::weights::{
    ap_characteristic, duality_transform, rh_characteristic, weighted_measure,
};
use sgcalc_core::{rng, tol};

use crate::config::{
    exponent_label, parse_exponent, DiagonalKind, ExperimentConfig, FieldKind, GeneratorKindSpec,
    KernelKind, SpaceKind, SuiteName, VariantSpec,
};
use crate::output::{cell, RunOutput, Table};

/// Space, generator, and scale grid assembled from a config.
pub struct Ctx {
    pub space: Arc<Space>,
    pub gen: Generator,
    pub grid: ScaleGrid,
}

pub fn build_ctx(cfg: &ExperimentConfig) -> Result<Ctx> {
    let space = build_space(cfg, None)?;
    finish_ctx(cfg, space)
}

/// Same space family resized to `level` vertices per side (grids) or in
/// total (paths, cycles, random graphs).
pub fn build_ctx_at_level(cfg: &ExperimentConfig, level: usize) -> Result<Ctx> {
    let space = build_space(cfg, Some(level))?;
    finish_ctx(cfg, space)
}

fn finish_ctx(cfg: &ExperimentConfig, space: Arc<Space>) -> Result<Ctx> {
    let kind = match cfg.generator.kind {
        GeneratorKindSpec::Combinatorial => GeneratorKind::Combinatorial,
        GeneratorKindSpec::Divergence => {
            let coeffs = cfg
                .generator
                .coefficients
                .clone()
                .ok_or_else(|| anyhow!("divergence generator needs [generator] coefficients"))?;
            GeneratorKind::Divergence { coeffs }
        }
    };
    let mut gen = Generator::assemble(Arc::clone(&space), kind)
        .context("assembling the generator")?;
    if let Some(m) = cfg.generator.homogeneity {
        gen = gen.with_homogeneity(m).context("setting homogeneity")?;
    }
    let grid = ScaleGrid::for_generator(&gen, cfg.grid.ratio, cfg.grid.alpha, cfg.grid.beta)
        .context("building the scale grid")?;
    Ok(Ctx { space, gen, grid })
}

fn build_space(cfg: &ExperimentConfig, level: Option<usize>) -> Result<Arc<Space>> {
    let spec = &cfg.space;
    let n_of = |default: usize| level.or(spec.n).unwrap_or(default);
    match spec.kind {
        SpaceKind::Path => match spec.edge_length {
            Some(len) => Space::path_with_edge_length(n_of(16), len),
            None => Space::path(n_of(16)),
        }
        .context("building the path space"),
        SpaceKind::Cycle => Space::cycle(n_of(16)).context("building the cycle space"),
        SpaceKind::Grid2d => {
            let nx = level.or(spec.nx).unwrap_or(8);
            let ny = level.or(spec.ny).unwrap_or(nx);
            Space::grid2d(nx, ny).context("building the grid space")
        }
        SpaceKind::Random => {
            let n = n_of(24);
            let extra = spec.extra_edges.unwrap_or(n / 3);
            let lens = spec.length_range.unwrap_or([0.5, 2.0]);
            let meas = spec.measure_range.unwrap_or([0.5, 2.0]);
            let mut stream = rng::substream(cfg.seed, "space-random");
            Space::random_connected(n, extra, (lens[0], lens[1]), (meas[0], meas[1]), &mut stream)
                .context("building the random space")
        }
        SpaceKind::File => {
            if level.is_some() {
                bail!("file-backed spaces cannot be resized by a sweep level");
            }
            let path = spec
                .path
                .as_ref()
                .ok_or_else(|| anyhow!("space kind \"file\" needs a path"))?;
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading space file {path}"))?;
            Space::from_text(&text, RadiusGridMode::Auto).context("parsing the space file")
        }
    }
    .map_err(Into::into)
}

pub fn run_suite(name: SuiteName, cfg: &ExperimentConfig, ctx: &Ctx) -> Result<RunOutput> {
    match name {
        SuiteName::Geometry => run_geometry(cfg, ctx),
        SuiteName::Semigroup => run_semigroup(cfg, ctx),
        SuiteName::Bmo => run_bmo(cfg, ctx),
        SuiteName::Carleson => run_carleson(cfg, ctx),
        SuiteName::Paraproduct => run_paraproduct(cfg, ctx),
        SuiteName::Weights => run_weights(cfg, ctx),
        SuiteName::T1Check => run_t1(cfg, ctx),
    }
}

// ----------------------------------------------------------------------
// geometry
// ----------------------------------------------------------------------

pub fn run_geometry(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<RunOutput> {
    let space = &ctx.space;
    let doubling = space.measure_doubling();
    let ball = space.ball(0, space.diameter() / 4.0);
    let poincare = poincare_constant(space, 2.0, &ball, 4, cfg.seed)?;

    let mut table = Table::new("geometry_per_radius", &["radius", "max_ratio", "witness_center"]);
    for row in &doubling.per_radius {
        table.push(vec![
            cell(row.radius),
            cell(row.max_ratio),
            cell(row.witness_center),
        ]);
    }

    let results = json!({
        "vertices": space.len(),
        "edges": space.edges().len(),
        "diameter": space.diameter(),
        "total_mass": space.total_mass(),
        "doubling": serde_json::to_value(&doubling)?,
        "poincare_q2": { "ball_center": ball.center, "ball_radius": ball.radius, "constant": poincare },
    });
    let summary = vec![
        ("geometry.c0".to_string(), doubling.c0),
        ("geometry.d_hom".to_string(), doubling.d_hom),
        ("geometry.c_comp".to_string(), doubling.c_comp),
        ("geometry.n_comp".to_string(), doubling.n_comp),
        ("geometry.c_theta".to_string(), doubling.c_theta),
        ("geometry.poincare_q2".to_string(), poincare),
    ];
    Ok(RunOutput {
        results,
        summary,
        tables: vec![table],
        flagged: false,
    })
}

// ----------------------------------------------------------------------
// semigroup
// ----------------------------------------------------------------------

pub fn run_semigroup(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<RunOutput> {
    let block = cfg.semigroup.clone().unwrap_or_default();
    let gen = &ctx.gen;
    let space = &ctx.space;
    let pts = ctx.grid.points();
    let mut samples = vec![pts[0], pts[pts.len() / 2], pts[pts.len() - 1]];
    samples.dedup();

    let mut probes = Vec::with_capacity(block.probes.max(1));
    for i in 0..block.probes.max(1) {
        let mut stream = rng::substream(cfg.seed, &format!("semigroup-probe-{i}"));
        probes.push(rng::normal_field(&mut stream, space.len()));
    }

    let mut table = Table::new(
        "semigroup_defects",
        &["scale", "conservation", "positivity", "self_adjoint", "composition"],
    );
    let (mut worst_cons, mut worst_pos, mut worst_sa, mut worst_comp) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let heat = SpectralFunction::Heat;
    for &t in &samples {
        let cons = conservation_defect(gen, t)?;
        let pos = heat_positivity_defect(gen, t)?;
        let mut sa = 0.0f64;
        let mut comp = 0.0f64;
        for pair in probes.chunks(2) {
            let f = &pair[0];
            let g = pair.get(1).unwrap_or(&pair[0]);
            let pf = gen.apply_function(&heat, t, f.view())?;
            let pg = gen.apply_function(&heat, t, g.view())?;
            let lhs = space.inner(pf.view(), g.view());
            let rhs = space.inner(f.view(), pg.view());
            let scale = l2(space, f.view()) * l2(space, g.view());
            sa = sa.max((lhs - rhs).abs() / scale.max(1e-300));
            comp = comp.max(semigroup_defect(gen, f.view(), t, t)?);
        }
        worst_cons = worst_cons.max(cons);
        worst_pos = worst_pos.max(pos);
        worst_sa = worst_sa.max(sa);
        worst_comp = worst_comp.max(comp);
        table.push(vec![cell(t), cell(cons), cell(pos), cell(sa), cell(comp)]);
    }

    // Dense eigenbasis route against the matrix-free Chebyshev route.
    let t_mid = samples[samples.len() / 2];
    let funcs = [
        SpectralFunction::Heat,
        SpectralFunction::HeatDerivative(1),
        SpectralFunction::BandPass(1),
        SpectralFunction::ResolventPower(2),
    ];
    let probe = &probes[0];
    let mut dual_route = Vec::new();
    let mut worst_dual = 0.0f64;
    for func in &funcs {
        let dense = gen.apply_function(func, t_mid, probe.view())?;
        let cheb = gen.apply_function_chebyshev(func, t_mid, probe.view(), 1e-12, 800)?;
        let diff = &dense - &cheb;
        let rel = l2(space, diff.view()) / l2(space, dense.view()).max(1e-300);
        worst_dual = worst_dual.max(rel);
        dual_route.push(json!({ "function": func.name(), "relative_difference": rel }));
    }

    let limits = limits_check(gen, probe.view(), &ctx.grid)?;

    // On spaces small enough to read, include the heat kernel at the
    // half-decay time of the spectral gap (closed form on two points).
    let half_decay = match (space.len() <= 4, gen.eigensystem()?.lambda2()) {
        (true, Some(l2val)) if l2val > 0.0 => {
            let t_half = std::f64::consts::LN_2 / l2val;
            let k = gen.heat_kernel(t_half)?;
            let rows: Vec<Vec<f64>> = k.rows().into_iter().map(|r| r.to_vec()).collect();
            json!({ "t": t_half, "kernel": rows })
        }
        _ => serde_json::Value::Null,
    };

    let worst = worst_cons
        .max(worst_pos)
        .max(worst_sa)
        .max(worst_comp)
        .max(worst_dual);
    let flagged = worst > block.tolerance;

    let results = json!({
        "tolerance": block.tolerance,
        "scales": samples,
        "conservation_max": worst_cons,
        "positivity_max": worst_pos,
        "self_adjoint_max": worst_sa,
        "composition_max": worst_comp,
        "dual_route": dual_route,
        "dual_route_max": worst_dual,
        "limits": {
            "short_identity": limits.short_identity,
            "short_derivative": limits.short_derivative.to_vec(),
            "long_decay": limits.long_decay.to_vec(),
        },
        "half_decay": half_decay,
        "worst_defect": worst,
    });
    let summary = vec![
        ("semigroup.conservation_max".to_string(), worst_cons),
        ("semigroup.positivity_max".to_string(), worst_pos),
        ("semigroup.self_adjoint_max".to_string(), worst_sa),
        ("semigroup.composition_max".to_string(), worst_comp),
        ("semigroup.dual_route_max".to_string(), worst_dual),
        ("semigroup.limits_short_identity".to_string(), limits.short_identity),
        ("semigroup.limits_long_decay".to_string(), limits.long_decay[0]),
    ];
    Ok(RunOutput {
        results,
        summary,
        tables: vec![table],
        flagged,
    })
}

fn l2(space: &Space, f: ArrayView1<f64>) -> f64 {
    space.lp_norm(f, sgcalc_core::space::Exponent::P(2.0))
}

// ----------------------------------------------------------------------
// bmo
// ----------------------------------------------------------------------

fn make_fields(
    cfg: &ExperimentConfig,
    ctx: &Ctx,
    kind: FieldKind,
    count: usize,
    eigen_index: usize,
    value: f64,
    label: &str,
) -> Result<Vec<(String, Array1<f64>)>> {
    let n = ctx.space.len();
    match kind {
        FieldKind::Random => {
            let mut out = Vec::with_capacity(count);
            for i in 0..count {
                let mut stream = rng::substream(cfg.seed, &format!("{label}-field-{i}"));
                out.push((format!("random-{i}"), rng::normal_field(&mut stream, n)));
            }
            Ok(out)
        }
        FieldKind::Eigenvector => {
            let es = ctx.gen.eigensystem()?;
            if eigen_index >= n {
                bail!("eigen_index {eigen_index} out of range for {n} vertices");
            }
            Ok(vec![(
                format!("eigenvector-{eigen_index}"),
                es.basis.column(eigen_index).to_owned(),
            )])
        }
        FieldKind::Constant => Ok(vec![(
            "constant".to_string(),
            Array1::from_elem(n, value),
        )]),
    }
}

pub fn run_bmo(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<RunOutput> {
    let block = cfg.bmo.clone().unwrap_or_default();
    let variant = match block.variant {
        VariantSpec::L1 => OscillationVariant::L1,
        VariantSpec::L2 => OscillationVariant::L2,
    };
    let fields = make_fields(
        cfg,
        ctx,
        block.field,
        block.count,
        block.eigen_index,
        block.value,
        "bmo",
    )?;

    let mut per_field = Vec::new();
    let mut summary = Vec::new();
    let mut table = Table::new("bmo_per_scale", &["field", "scale", "oscillation_sup"]);
    for (i, (label, f)) in fields.iter().enumerate() {
        let report = bmo_l_norm(&ctx.gen, f.view(), &ctx.grid, variant)?;
        let cancel = cancellation_norm(&ctx.gen, f.view(), &ctx.grid, block.kappa)?;
        let classical = bmo_classical_norm(&ctx.space, f.view())?;
        for (t, sup) in ctx.grid.points().iter().zip(&report.per_scale) {
            table.push(vec![cell(i), cell(*t), cell(*sup)]);
        }
        summary.push((format!("bmo.norm.{i}"), report.norm));
        summary.push((format!("bmo.cancellation.{i}"), cancel.norm));
        summary.push((format!("bmo.classical.{i}"), classical.norm));
        per_field.push(json!({
            "field": label,
            "bmo": serde_json::to_value(&report)?,
            "cancellation": serde_json::to_value(&cancel)?,
            "classical_norm": classical.norm,
        }));
    }

    let results = json!({
        "variant": block.variant,
        "kappa": block.kappa,
        "fields": per_field,
    });
    Ok(RunOutput {
        results,
        summary,
        tables: vec![table],
        flagged: false,
    })
}

// ----------------------------------------------------------------------
// carleson
// ----------------------------------------------------------------------

pub fn run_carleson(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<RunOutput> {
    let block = cfg.carleson.clone().unwrap_or_default();
    let n = ctx.space.len();
    let mut fields = Vec::with_capacity(block.count.max(1));
    for i in 0..block.count.max(1) {
        let mut stream = rng::substream(cfg.seed, &format!("carleson-field-{i}"));
        fields.push(rng::normal_field(&mut stream, n));
    }

    let mut table = Table::new(
        "carleson_ensemble",
        &["order", "field", "bmo_norm", "carleson_norm", "ratio"],
    );
    let mut per_order = Vec::new();
    let mut summary = Vec::new();
    for &order in &block.orders {
        let mut max_ratio = 0.0f64;
        let mut sum_ratio = 0.0f64;
        let mut used = 0usize;
        for (i, f) in fields.iter().enumerate() {
            let bmo = bmo_l_norm(&ctx.gen, f.view(), &ctx.grid, OscillationVariant::L1)?;
            let carleson = band_pass_carleson(&ctx.gen, f.view(), &ctx.grid, order)?;
            if bmo.norm <= 1e-300 {
                continue;
            }
            let ratio = carleson.norm / (bmo.norm * bmo.norm);
            max_ratio = max_ratio.max(ratio);
            sum_ratio += ratio;
            used += 1;
            table.push(vec![
                cell(order),
                cell(i),
                cell(bmo.norm),
                cell(carleson.norm),
                cell(ratio),
            ]);
        }
        let mean = if used > 0 { sum_ratio / used as f64 } else { 0.0 };
        summary.push((format!("carleson.ratio_max.k{order}"), max_ratio));
        per_order.push(json!({
            "order": order,
            "fields_used": used,
            "ratio_max": max_ratio,
            "ratio_mean": mean,
        }));
    }

    let results = json!({
        "ensemble": fields.len(),
        "orders": per_order,
    });
    Ok(RunOutput {
        results,
        summary,
        tables: vec![table],
        flagged: false,
    })
}

// ----------------------------------------------------------------------
// paraproduct
// ----------------------------------------------------------------------

/// A paraproduct as a bilinear action. The slot adjoints in the measure
/// pairing are again paraproducts (band and low passes trade places), so
/// the counting transposes conjugate those by the measure.
struct ParaproductAction<'a> {
    gen: &'a Generator,
    grid: &'a ScaleGrid,
    order: u32,
    /// False runs the band pass outside the product, true inside.
    inner: bool,
}

impl ParaproductAction<'_> {
    fn unweigh(&self, u: ArrayView1<f64>) -> Array1<f64> {
        let mu = self.gen.space().measures();
        Array1::from_iter(u.iter().zip(mu).map(|(&v, &m)| v / m))
    }

    fn reweigh(&self, mut v: Array1<f64>) -> Array1<f64> {
        let mu = self.gen.space().measures();
        for (x, val) in v.iter_mut().enumerate() {
            *val *= mu[x];
        }
        v
    }
}

impl BilinearAction for ParaproductAction<'_> {
    fn dim_first(&self) -> usize {
        self.gen.len()
    }
    fn dim_second(&self) -> usize {
        self.gen.len()
    }
    fn dim_out(&self) -> usize {
        self.gen.len()
    }

    fn apply(&self, h: ArrayView1<f64>, f: ArrayView1<f64>) -> Array1<f64> {
        let out = if self.inner {
            paraproduct_inner_band(self.gen, h, f, self.grid, self.order)
        } else {
            paraproduct_outer_band(self.gen, h, f, self.grid, self.order)
        };
        out.expect("paraproduct apply on validated inputs").field
    }

    fn transpose_first(&self, u: ArrayView1<f64>, g: ArrayView1<f64>) -> Array1<f64> {
        let scaled = self.unweigh(u);
        let adj = if self.inner {
            paraproduct_inner_band(self.gen, scaled.view(), g, self.grid, self.order)
        } else {
            paraproduct_inner_band(self.gen, g, scaled.view(), self.grid, self.order)
        };
        self.reweigh(adj.expect("paraproduct transpose on validated inputs").field)
    }

    fn transpose_second(&self, u: ArrayView1<f64>, f: ArrayView1<f64>) -> Array1<f64> {
        let scaled = self.unweigh(u);
        let adj = if self.inner {
            paraproduct_outer_band(self.gen, f, scaled.view(), self.grid, self.order)
        } else {
            paraproduct_inner_band(self.gen, f, scaled.view(), self.grid, self.order)
        };
        self.reweigh(adj.expect("paraproduct transpose on validated inputs").field)
    }
}

pub fn run_paraproduct(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<RunOutput> {
    let block = cfg.paraproduct.clone().unwrap_or_default();
    let space = &ctx.space;
    let gen = &ctx.gen;
    let doubling = space.measure_doubling();
    let order = if block.order == 0 {
        default_band_order(doubling.d_hom, gen.homogeneity())
    } else {
        block.order
    };
    let mu = space.measures().to_vec();

    let mut table = Table::new(
        "paraproduct_norms",
        &["form", "p", "q", "r", "weighted", "norm", "converged", "iterations"],
    );
    let mut norms = Vec::new();
    let mut summary = Vec::new();
    for (form, inner) in [("pi1", false), ("pi2", true)] {
        let action = ParaproductAction { gen, grid: &ctx.grid, order, inner };
        for triple in &block.triples {
            let p = parse_exponent(&triple[0])?;
            let q = parse_exponent(&triple[1])?;
            let r = parse_exponent(&triple[2])?;
            let tag = format!(
                "{}_{}_{}",
                exponent_label(&triple[0]),
                exponent_label(&triple[1]),
                exponent_label(&triple[2])
            );
            let est = bilinear_norm(
                &action,
                &mu,
                &mu,
                &mu,
                p,
                q,
                r,
                &MixedNormConfig {
                    restarts: block.restarts,
                    max_iterations: block.max_iterations,
                    tol: tol::POWER_ITERATION,
                    seed: cfg.seed,
                    label: format!("para-{form}-{tag}"),
                },
            )?;
            summary.push((format!("paraproduct.{form}.{tag}"), est.norm));
            table.push(vec![
                form.to_string(),
                triple[0].clone(),
                triple[1].clone(),
                triple[2].clone(),
                cell(false),
                cell(est.norm),
                cell(est.converged),
                cell(est.iterations),
            ]);
            norms.push(json!({
                "form": form,
                "triple": triple,
                "weighted": false,
                "norm": est.norm,
                "converged": est.converged,
                "iterations": est.iterations,
            }));
        }
    }

    // Weighted variant: power weight in the measures on all three slots.
    let mut weighted = serde_json::Value::Null;
    if let Some(alpha) = block.weight_alpha {
        let w = power_weight(space, block.weight_vertex, alpha);
        let nu = weighted_measure(space, w.view())?;
        let ap2 = ap_characteristic(space, w.view(), 2.0)?;
        let ap4 = ap_characteristic(space, w.view(), 4.0)?;
        let action = ParaproductAction { gen, grid: &ctx.grid, order, inner: false };
        let mut rows = Vec::new();
        for triple in &block.triples {
            let p = parse_exponent(&triple[0])?;
            let q = parse_exponent(&triple[1])?;
            let r = parse_exponent(&triple[2])?;
            let tag = format!(
                "{}_{}_{}",
                exponent_label(&triple[0]),
                exponent_label(&triple[1]),
                exponent_label(&triple[2])
            );
            let est = bilinear_norm(
                &action,
                &nu,
                &nu,
                &nu,
                p,
                q,
                r,
                &MixedNormConfig {
                    restarts: block.restarts,
                    max_iterations: block.max_iterations,
                    tol: tol::POWER_ITERATION,
                    seed: cfg.seed,
                    label: format!("para-weighted-{tag}"),
                },
            )?;
            summary.push((format!("paraproduct.weighted.{tag}"), est.norm));
            table.push(vec![
                "pi1".to_string(),
                triple[0].clone(),
                triple[1].clone(),
                triple[2].clone(),
                cell(true),
                cell(est.norm),
                cell(est.converged),
                cell(est.iterations),
            ]);
            rows.push(json!({
                "triple": triple,
                "norm": est.norm,
                "converged": est.converged,
            }));
        }
        weighted = json!({
            "alpha": alpha,
            "base_vertex": block.weight_vertex,
            "ap2": ap2.value,
            "ap4": ap4.value,
            "norms": rows,
        });
    }

    // Quadrature health on a mean-free random field.
    let mut stream = rng::substream(cfg.seed, "paraproduct-field");
    let f = rng::normal_field(&mut stream, space.len());
    let f = &f - space.mean(f.view());
    let g = rng::normal_field(&mut stream, space.len());
    let residual = reproducing_residual(gen, f.view(), &ctx.grid, order)?;
    let decomposition = product_decomposition(gen, f.view(), g.view(), &ctx.grid)?;
    summary.push(("paraproduct.reproducing_residual".to_string(), residual));
    summary.push((
        "paraproduct.product_residual".to_string(),
        decomposition.residual_norm,
    ));

    let results = json!({
        "order": order,
        "norms": norms,
        "weighted": weighted,
        "reproducing_residual": residual,
        "product_decomposition_residual": decomposition.residual_norm,
    });
    Ok(RunOutput {
        results,
        summary,
        tables: vec![table],
        flagged: false,
    })
}

fn power_weight(space: &Space, x0: usize, alpha: f64) -> Array1<f64> {
    Array1::from_iter((0..space.len()).map(|x| (1.0 + space.dist(x0, x)).powf(alpha)))
}

// ----------------------------------------------------------------------
// weights
// ----------------------------------------------------------------------

pub fn run_weights(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<RunOutput> {
    let block = cfg.weights.clone().unwrap_or_default();
    let space = &ctx.space;
    let x0 = block.base_vertex;
    if x0 >= space.len() {
        bail!("base_vertex {x0} out of range for {} vertices", space.len());
    }

    let mut table = Table::new(
        "weight_characteristics",
        &["alpha", "kind", "exponent", "value", "witness_center", "witness_radius"],
    );
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &alpha in &block.alphas {
        let w = power_weight(space, x0, alpha);
        for &p in &block.p_values {
            let rep = ap_characteristic(space, w.view(), p)?;
            summary.push((format!("weights.ap.alpha{alpha}.p{p}"), rep.value));
            table.push(vec![
                cell(alpha),
                "ap".to_string(),
                cell(p),
                cell(rep.value),
                cell(rep.witness_center),
                cell(rep.witness_radius),
            ]);
            let mut duality = serde_json::Value::Null;
            if p > 1.0 {
                // Exact identity: the dual weight's characteristic at the
                // conjugate exponent is this one raised to 1/(p-1).
                let sigma = duality_transform(w.view(), p)?;
                let p_conj = p / (p - 1.0);
                let dual = ap_characteristic(space, sigma.view(), p_conj)?;
                let expected = rep.value.powf(p_conj - 1.0);
                let delta = (dual.value - expected).abs() / expected.max(1e-300);
                duality = json!({ "dual_value": dual.value, "expected": expected, "relative_delta": delta });
            }
            rows.push(json!({
                "alpha": alpha,
                "kind": "ap",
                "exponent": p,
                "value": rep.value,
                "witness_center": rep.witness_center,
                "witness_radius": rep.witness_radius,
                "duality": duality,
            }));
        }
        for &q in &block.rh_q {
            let rep = rh_characteristic(space, w.view(), q)?;
            summary.push((format!("weights.rh.alpha{alpha}.q{q}"), rep.value));
            table.push(vec![
                cell(alpha),
                "rh".to_string(),
                cell(q),
                cell(rep.value),
                cell(rep.witness_center),
                cell(rep.witness_radius),
            ]);
            rows.push(json!({
                "alpha": alpha,
                "kind": "rh",
                "exponent": q,
                "value": rep.value,
                "witness_center": rep.witness_center,
                "witness_radius": rep.witness_radius,
            }));
        }
    }

    let results = json!({
        "base_vertex": x0,
        "characteristics": rows,
    });
    Ok(RunOutput {
        results,
        summary,
        tables: vec![table],
        flagged: false,
    })
}

// ----------------------------------------------------------------------
// t1-check
// ----------------------------------------------------------------------

fn read_kernel_csv(path: &Path, n: usize) -> Result<Array2<f64>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading kernel {}", path.display()))?;
    let mut m = Array2::<f64>::zeros((n, n));
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            bail!("kernel line {}: expected row,col,value", lineno + 1);
        }
        if lineno == 0 && parts[0].parse::<usize>().is_err() {
            continue; // header
        }
        let row: usize = parts[0]
            .parse()
            .with_context(|| format!("kernel line {}: bad row", lineno + 1))?;
        let col: usize = parts[1]
            .parse()
            .with_context(|| format!("kernel line {}: bad col", lineno + 1))?;
        let value: f64 = parts[2]
            .parse()
            .with_context(|| format!("kernel line {}: bad value", lineno + 1))?;
        if row >= n || col >= n {
            bail!("kernel line {}: index ({row}, {col}) out of range for {n} vertices", lineno + 1);
        }
        m[[row, col]] = value;
    }
    Ok(m)
}

pub fn run_t1(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<RunOutput> {
    let block = cfg.t1.clone().unwrap_or_default();
    let space = Arc::clone(&ctx.space);
    let diagonal = match block.diagonal {
        DiagonalKind::Zero => DiagonalRule::Zero,
        DiagonalKind::ZeroRowSum => DiagonalRule::ZeroRowSum,
    };
    let op = match block.kernel {
        KernelKind::Csv => {
            let path = block
                .csv_path
                .as_ref()
                .ok_or_else(|| anyhow!("kernel \"csv\" needs csv_path"))?;
            let matrix = read_kernel_csv(Path::new(path), space.len())?;
            OperatorUnderTest::from_matrix(space, matrix, block.kappa, "csv-kernel")?
        }
        kind => {
            let (profile, label) = match kind {
                KernelKind::Riesz => (KernelProfile::RieszLike, "riesz"),
                KernelKind::Sign => (KernelProfile::SignInverse, "sign"),
                KernelKind::InverseDistance => (KernelProfile::InverseDistance, "inverse-distance"),
                KernelKind::Csv => unreachable!(),
            };
            make_cz_operator(
                space,
                &KernelSpec {
                    profile,
                    gamma: block.gamma,
                    diagonal,
                    truncation_radius: block.truncation_radius,
                    kappa: block.kappa,
                    label: label.to_string(),
                },
            )?
        }
    };

    let thresholds = Thresholds {
        min_decay_exponent: block.min_decay_exponent,
        near_ratio_factor: block.near_ratio_factor,
        reverse_drift_tolerance: block.reverse_drift_tolerance,
    };
    let report = t1_report(&op, &ctx.gen, &ctx.grid, &thresholds)?;

    let mut offdiag = Table::new(
        "t1_offdiag",
        &["scale", "direction", "q1", "q2", "separation", "normalized", "ratio"],
    );
    for row in &report.off_diagonal.rows {
        for (direction, entries) in [("forward", &row.forward), ("adjoint", &row.adjoint)] {
            for e in entries {
                offdiag.push(vec![
                    cell(row.scale),
                    direction.to_string(),
                    cell(e.q1_center),
                    cell(e.q2_center),
                    cell(e.separation),
                    cell(e.normalized),
                    cell(e.ratio),
                ]);
            }
        }
    }
    let mut weak = Table::new(
        "t1_weak_boundedness",
        &["scale", "q1", "q2", "separation", "inner_order", "forward", "adjoint"],
    );
    for row in &report.weak_boundedness.rows {
        for e in &row.entries {
            for k in 0..3 {
                weak.push(vec![
                    cell(row.scale),
                    cell(e.q1_center),
                    cell(e.q2_center),
                    cell(e.separation),
                    cell(k),
                    cell(e.forward[k]),
                    cell(e.adjoint[k]),
                ]);
            }
        }
    }

    let verdict = &report.verdict;
    let flagged = !(verdict.hypotheses_pass && verdict.reverse_stable);
    let summary = vec![
        ("t1.l2_norm".to_string(), verdict.l2_norm),
        ("t1.t_one_bmo".to_string(), verdict.t_one_bmo_norm),
        ("t1.t_star_one_bmo".to_string(), verdict.t_star_one_bmo_norm),
        (
            "t1.cancellation".to_string(),
            report.constants.t_one_cancellation.norm,
        ),
        (
            "t1.forward_exponent".to_string(),
            report.off_diagonal.pooled_forward_exponent.unwrap_or(-1.0),
        ),
        (
            "t1.adjoint_exponent".to_string(),
            report.off_diagonal.pooled_adjoint_exponent.unwrap_or(-1.0),
        ),
        ("t1.near_ratio_max".to_string(), verdict.near_ratio_max),
        ("t1.reverse_drift".to_string(), verdict.reverse_cancellation_drift),
        (
            "t1.hypotheses_pass".to_string(),
            if verdict.hypotheses_pass { 1.0 } else { 0.0 },
        ),
        (
            "t1.reverse_stable".to_string(),
            if verdict.reverse_stable { 1.0 } else { 0.0 },
        ),
    ];

    let results = json!({
        "report": serde_json::to_value(&report)?,
        "t_one": report.constants.t_one.to_vec(),
        "t_star_one": report.constants.t_star_one.to_vec(),
    });
    Ok(RunOutput {
        results,
        summary,
        tables: vec![offdiag, weak],
        flagged,
    })
}

// ----------------------------------------------------------------------
// sweep
// ----------------------------------------------------------------------

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let block = cfg.sweep.clone().unwrap_or_default();
    if block.levels.len() < 2 {
        bail!("a sweep needs at least two refinement levels");
    }
    if block.suites.is_empty() {
        bail!("a sweep needs at least one suite");
    }

    let mut per_level = Vec::new();
    let mut collected: Vec<(usize, Vec<(String, f64)>)> = Vec::new();
    for &level in &block.levels {
        let ctx = build_ctx_at_level(cfg, level)
            .with_context(|| format!("building level {level}"))?;
        let mut level_results = serde_json::Map::new();
        let mut level_summary = Vec::new();
        for &suite in &block.suites {
            let out = run_suite(suite, cfg, &ctx)
                .with_context(|| format!("running {} at level {level}", suite_name(suite)))?;
            level_results.insert(suite_name(suite).to_string(), out.results);
            level_summary.extend(out.summary);
        }
        per_level.push(json!({
            "level": level,
            "vertices": ctx.space.len(),
            "results": serde_json::Value::Object(level_results),
        }));
        collected.push((level, level_summary));
    }

    // Stability of every summary quantity across levels: max/min, with
    // all-zero rows stable by convention and sign changes flagged.
    let reference = &collected[0].1;
    let mut stability_rows = Vec::new();
    let mut values_table = Table::new("sweep_values", &["quantity", "level", "value"]);
    let mut stability_table = Table::new(
        "sweep_stability",
        &["quantity", "min", "max", "ratio", "flagged"],
    );
    let mut summary = Vec::new();
    let mut flagged_any = false;
    for (name, _) in reference {
        let mut values = Vec::with_capacity(collected.len());
        for (level, rows) in &collected {
            if let Some((_, v)) = rows.iter().find(|(q, _)| q == name) {
                values.push((*level, *v));
            }
        }
        if values.len() != collected.len() {
            continue;
        }
        for (level, v) in &values {
            values_table.push(vec![name.clone(), cell(*level), cell(*v)]);
        }
        let vmax = values.iter().fold(f64::NEG_INFINITY, |m, &(_, v)| m.max(v));
        let vmin = values.iter().fold(f64::INFINITY, |m, &(_, v)| m.min(v));
        let ratio = if vmax.abs() <= 1e-12 && vmin.abs() <= 1e-12 {
            Some(1.0)
        } else if vmin > 0.0 {
            Some(vmax / vmin)
        } else {
            None
        };
        let flagged = match ratio {
            Some(r) => r > 1.0 + block.drift_tolerance,
            None => true,
        };
        flagged_any |= flagged;
        stability_table.push(vec![
            name.clone(),
            cell(vmin),
            cell(vmax),
            ratio.map_or("inf".to_string(), cell),
            cell(flagged),
        ]);
        summary.push((
            format!("stability.{name}"),
            ratio.unwrap_or(f64::MAX),
        ));
        stability_rows.push(json!({
            "quantity": name,
            "values": values.iter().map(|&(_, v)| v).collect::<Vec<_>>(),
            "ratio": ratio,
            "flagged": flagged,
        }));
    }

    let results = json!({
        "levels": block.levels,
        "drift_tolerance": block.drift_tolerance,
        "per_level": per_level,
        "stability": stability_rows,
    });
    Ok(RunOutput {
        results,
        summary,
        tables: vec![values_table, stability_table],
        flagged: flagged_any,
    })
}

pub fn suite_name(s: SuiteName) -> &'static str {
    match s {
        SuiteName::Geometry => "geometry",
        SuiteName::Semigroup => "semigroup",
        SuiteName::Bmo => "bmo",
        SuiteName::Carleson => "carleson",
        SuiteName::Paraproduct => "paraproduct",
        SuiteName::Weights => "weights",
        SuiteName::T1Check => "t1-check",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The power iteration is only a valid lower bound when the
    /// transposes match the forward map in the counting pairing:
    /// `<T(f, g), u> = <f, T1^t(u; g)> = <g, T2^t(u; f)>`.
    #[test]
    fn paraproduct_transposes_satisfy_the_duality_identities() {
        let space = Space::grid2d(4, 3).unwrap();
        let gen = Generator::assemble(Arc::clone(&space), GeneratorKind::Combinatorial).unwrap();
        let grid = ScaleGrid::for_generator(&gen, 2.0, 1e-2, 1e2).unwrap();
        for (inner, tag) in [(false, "outer"), (true, "inner")] {
            let action = ParaproductAction { gen: &gen, grid: &grid, order: 2, inner };
            let mut stream = rng::substream(5, tag);
            let f = rng::normal_field(&mut stream, space.len());
            let g = rng::normal_field(&mut stream, space.len());
            let u = rng::normal_field(&mut stream, space.len());
            let lhs = action.apply(f.view(), g.view()).dot(&u);
            let first = f.dot(&action.transpose_first(u.view(), g.view()));
            let second = g.dot(&action.transpose_second(u.view(), f.view()));
            let tol = 1e-12 * lhs.abs().max(1.0);
            assert!((lhs - first).abs() <= tol, "{tag} slot one: {lhs} vs {first}");
            assert!((lhs - second).abs() <= tol, "{tag} slot two: {lhs} vs {second}");
        }
    }

    #[test]
    fn kernel_csv_reader_takes_headers_and_rejects_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("kernel.csv");
        fs::write(&good, "row,col,value\n# comment\n0,1,2.5\n\n1,0,-2.5\n").unwrap();
        let m = read_kernel_csv(&good, 3).unwrap();
        assert_eq!(m[[0, 1]], 2.5);
        assert_eq!(m[[1, 0]], -2.5);
        assert_eq!(m[[2, 2]], 0.0);

        let out_of_range = dir.path().join("range.csv");
        fs::write(&out_of_range, "0,7,1.0\n").unwrap();
        assert!(read_kernel_csv(&out_of_range, 3).is_err());

        let short = dir.path().join("short.csv");
        fs::write(&short, "0,1\n").unwrap();
        assert!(read_kernel_csv(&short, 3).is_err());
    }
}
