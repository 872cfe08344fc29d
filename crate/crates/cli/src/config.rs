//! Experiment configuration: a strict TOML schema. Unknown keys are
//! errors, every field has a default, and the effective config is echoed
//! into each report so a run can be reproduced from its own output.

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use sgcalc_core::space::Exponent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Where outputs land when `--out` is not given. Excluded from the
    /// config echo: it routes files, it does not shape results.
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: String,
    pub space: SpaceSpec,
    #[serde(default)]
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semigroup: Option<SemigroupBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bmo: Option<BmoBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carleson: Option<CarlesonBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraproduct: Option<ParaproductBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<T1Block>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
}

fn default_seed() -> u64 {
    7
}

fn default_output_dir() -> String {
    "out".to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpaceKind {
    #[serde(rename = "path")]
    Path,
    #[serde(rename = "cycle")]
    Cycle,
    #[serde(rename = "grid2d")]
    Grid2d,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "file")]
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub kind: SpaceKind,
    /// Vertex count for path, cycle, and random spaces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_edges: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure_range: Option<[f64; 2]>,
    /// Edge-list file for `kind = "file"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneratorKindSpec {
    #[serde(rename = "combinatorial")]
    Combinatorial,
    #[serde(rename = "divergence")]
    Divergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(default = "default_generator_kind")]
    pub kind: GeneratorKindSpec,
    /// One positive coefficient per edge for the divergence form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homogeneity: Option<f64>,
}

fn default_generator_kind() -> GeneratorKindSpec {
    GeneratorKindSpec::Combinatorial
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            kind: GeneratorKindSpec::Combinatorial,
            coefficients: None,
            homogeneity: None,
        }
    }
}

/// Scale grid: geometric nodes with ratio `ratio` spanning
/// `[alpha / lambda_max, beta / lambda_2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_grid_ratio")]
    pub ratio: f64,
    #[serde(default = "default_grid_alpha")]
    pub alpha: f64,
    #[serde(default = "default_grid_beta")]
    pub beta: f64,
}

fn default_grid_ratio() -> f64 {
    2.0
}
fn default_grid_alpha() -> f64 {
    1e-2
}
fn default_grid_beta() -> f64 {
    1e2
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            ratio: default_grid_ratio(),
            alpha: default_grid_alpha(),
            beta: default_grid_beta(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemigroupBlock {
    /// Defects above this flag the run.
    #[serde(default = "default_semigroup_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
}

fn default_semigroup_tolerance() -> f64 {
    1e-8
}
fn default_probes() -> usize {
    2
}

impl Default for SemigroupBlock {
    fn default() -> Self {
        SemigroupBlock {
            tolerance: default_semigroup_tolerance(),
            probes: default_probes(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariantSpec {
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "l2")]
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "eigenvector")]
    Eigenvector,
    #[serde(rename = "constant")]
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BmoBlock {
    #[serde(default = "default_variant")]
    pub variant: VariantSpec,
    /// Order of the iterated-defect cancellation norm.
    #[serde(default = "default_kappa_one")]
    pub kappa: u32,
    #[serde(default = "default_field_kind")]
    pub field: FieldKind,
    #[serde(default = "default_eigen_index")]
    pub eigen_index: usize,
    #[serde(default = "default_constant_value")]
    pub value: f64,
    #[serde(default = "default_field_count")]
    pub count: usize,
}

fn default_variant() -> VariantSpec {
    VariantSpec::L1
}
fn default_kappa_one() -> u32 {
    1
}
fn default_field_kind() -> FieldKind {
    FieldKind::Random
}
fn default_eigen_index() -> usize {
    1
}
fn default_constant_value() -> f64 {
    1.0
}
fn default_field_count() -> usize {
    3
}

impl Default for BmoBlock {
    fn default() -> Self {
        BmoBlock {
            variant: default_variant(),
            kappa: default_kappa_one(),
            field: default_field_kind(),
            eigen_index: default_eigen_index(),
            value: default_constant_value(),
            count: default_field_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarlesonBlock {
    #[serde(default = "default_orders")]
    pub orders: Vec<u32>,
    /// Random-field ensemble size.
    #[serde(default = "default_ensemble")]
    pub count: usize,
}

fn default_orders() -> Vec<u32> {
    vec![1, 2]
}
fn default_ensemble() -> usize {
    8
}

impl Default for CarlesonBlock {
    fn default() -> Self {
        CarlesonBlock {
            orders: default_orders(),
            count: default_ensemble(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParaproductBlock {
    /// Band order; 0 picks the smallest integrable order for the space.
    #[serde(default)]
    pub order: u32,
    /// Exponent triples (p, q, r'), each "inf" or a number rendered as a
    /// string.
    #[serde(default = "default_triples")]
    pub triples: Vec<[String; 3]>,
    /// Power-weight exponent for the weighted variant; absent skips it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_alpha: Option<f64>,
    #[serde(default)]
    pub weight_vertex: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_triples() -> Vec<[String; 3]> {
    let t = |a: &str, b: &str, c: &str| [a.to_string(), b.to_string(), c.to_string()];
    vec![
        t("inf", "2", "2"),
        t("4", "4", "2"),
        t("2", "inf", "2"),
        t("2", "2", "1"),
    ]
}
fn default_restarts() -> usize {
    3
}
fn default_max_iterations() -> usize {
    40
}

impl Default for ParaproductBlock {
    fn default() -> Self {
        ParaproductBlock {
            order: 0,
            triples: default_triples(),
            weight_alpha: None,
            weight_vertex: 0,
            restarts: default_restarts(),
            max_iterations: default_max_iterations(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsBlock {
    /// Power-weight exponents `w = (1 + d(x0, x))^alpha`.
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_p_values")]
    pub p_values: Vec<f64>,
    #[serde(default = "default_rh_q")]
    pub rh_q: Vec<f64>,
    #[serde(default)]
    pub base_vertex: usize,
}

fn default_alphas() -> Vec<f64> {
    vec![0.5, -0.5]
}
fn default_p_values() -> Vec<f64> {
    vec![2.0, 4.0]
}
fn default_rh_q() -> Vec<f64> {
    vec![2.0]
}

impl Default for WeightsBlock {
    fn default() -> Self {
        WeightsBlock {
            alphas: default_alphas(),
            p_values: default_p_values(),
            rh_q: default_rh_q(),
            base_vertex: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    #[serde(rename = "riesz")]
    Riesz,
    #[serde(rename = "sign")]
    Sign,
    #[serde(rename = "inverse-distance")]
    InverseDistance,
    #[serde(rename = "csv")]
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagonalKind {
    #[serde(rename = "zero")]
    Zero,
    #[serde(rename = "zero-row-sum")]
    ZeroRowSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct T1Block {
    #[serde(default = "default_kernel")]
    pub kernel: KernelKind,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_diagonal")]
    pub diagonal: DiagonalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_radius: Option<f64>,
    #[serde(default = "default_kappa_two")]
    pub kappa: u32,
    /// (row, col, value) triples for `kernel = "csv"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_decay_exponent: Option<f64>,
    #[serde(default = "default_near_factor")]
    pub near_ratio_factor: f64,
    #[serde(default = "default_reverse_drift")]
    pub reverse_drift_tolerance: f64,
}

fn default_kernel() -> KernelKind {
    KernelKind::Riesz
}
fn default_gamma() -> f64 {
    1.0
}
fn default_diagonal() -> DiagonalKind {
    DiagonalKind::ZeroRowSum
}
fn default_kappa_two() -> u32 {
    2
}
fn default_near_factor() -> f64 {
    10.0
}
fn default_reverse_drift() -> f64 {
    0.3
}

impl Default for T1Block {
    fn default() -> Self {
        T1Block {
            kernel: default_kernel(),
            gamma: default_gamma(),
            diagonal: default_diagonal(),
            truncation_radius: None,
            kappa: default_kappa_two(),
            csv_path: None,
            min_decay_exponent: None,
            near_ratio_factor: default_near_factor(),
            reverse_drift_tolerance: default_reverse_drift(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SuiteName {
    #[serde(rename = "geometry")]
    Geometry,
    #[serde(rename = "semigroup")]
    Semigroup,
    #[serde(rename = "bmo")]
    Bmo,
    #[serde(rename = "carleson")]
    Carleson,
    #[serde(rename = "paraproduct")]
    Paraproduct,
    #[serde(rename = "weights")]
    Weights,
    #[serde(rename = "t1-check")]
    T1Check,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    /// Space sizes, one per refinement level.
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
    #[serde(default = "default_suites")]
    pub suites: Vec<SuiteName>,
    /// Relative drift above which a quantity is flagged:
    /// max/min > 1 + drift_tolerance.
    #[serde(default = "default_drift")]
    pub drift_tolerance: f64,
}

fn default_levels() -> Vec<usize> {
    vec![16, 32]
}
fn default_suites() -> Vec<SuiteName> {
    vec![SuiteName::Geometry, SuiteName::Bmo]
}
fn default_drift() -> f64 {
    0.3
}

impl Default for SweepBlock {
    fn default() -> Self {
        SweepBlock {
            levels: default_levels(),
            suites: default_suites(),
            drift_tolerance: default_drift(),
        }
    }
}

/// Parses "inf" or a numeric string into an exponent.
pub fn parse_exponent(s: &str) -> Result<Exponent> {
    let trimmed = s.trim();
    if trimmed.eq_ignore_ascii_case("inf") {
        return Ok(Exponent::Inf);
    }
    match trimmed.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(Exponent::P(v)),
        _ => bail!("exponent must be \"inf\" or a positive number, got {s:?}"),
    }
}

/// Short label for an exponent, used in quantity names.
pub fn exponent_label(s: &str) -> String {
    s.trim().to_ascii_lowercase().replace('.', "_")
}
