//! End-to-end builders for almost invariant subspaces spanned by resolvent
//! vectors, together with annihilating functionals, and the audit that
//! re-derives every certificate metric from scratch.
//!
//! Two constructions are provided:
//!
//! * `build_entire`: zeros of the entire function built from the orbit's
//!   biorthogonal norms select the points `lambda_n`; functionals take the
//!   values `c^(k)_i` on the orbit.
//! * `build_blaschke`: the zeros of a Blaschke product select the points;
//!   functionals take the Taylor coefficients of `z^m B(z)` on the orbit.
//!
//! At finite dimension the "half-space" is a proxy: the certificate records
//! `dim Y = m` and a set of independent functionals vanishing on `Y`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blaschke::{self, BlaschkeData, BlaschkeKind, FmTable, SummabilityCheck};
use crate::encoding::{hex_c64_vec, hex_cmatrix, hex_cvector, hex_cvector_list, hex_f64};
use crate::entire::{self, CoefficientSequence, PicardStrategy};
use crate::error::{AihsError, Result, Stage, StageExt};
use crate::linalg::{self, real, CMatrix, CVector, C64};
use crate::operator::{self, OperatorModel, OperatorSpec};
use crate::poly;
use crate::resolvent::{self, ResolventMethod, ResolventVector};

pub const SCHEMA: &str = "aihs-cert/1";

/// Relative gap between `1/lambda` and the spectrum required of every point.
pub const DEFAULT_GAP: f64 = 1e-6;

/// Stored and recomputed metrics must agree to this relative accuracy.
pub const AUDIT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// `dist(T y, Y + span{e}) <= tol_ai * ||T y||`.
    pub tol_ai: f64,
    /// Absolute bound on `|f_k(h(lambda_n, e))|`; derived from the
    /// coefficients when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_annihilation: Option<f64>,
    /// Relative factor of the zero residual tolerance.
    pub tol_zero: f64,
    /// Singular values below `tol_rank * reference` count as zero.
    pub tol_rank: f64,
    /// Lower bound on normalized smallest singular values.
    pub tol_independence: f64,
    /// Relative bound on the mismatch between a functional and its orbit values.
    pub tol_extension: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_ai: 1e-8,
            tol_annihilation: None,
            tol_zero: entire::DEFAULT_TOL_ZERO,
            tol_rank: 1e-10,
            tol_independence: 1e-10,
            tol_extension: 1e-9,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("tol_ai", self.tol_ai),
            ("tol_zero", self.tol_zero),
            ("tol_rank", self.tol_rank),
            ("tol_independence", self.tol_independence),
            ("tol_extension", self.tol_extension),
            ("tol_annihilation", self.tol_annihilation.unwrap_or(1.0)),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AihsError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    Entire,
    Blaschke,
}

/// A functional given by its values on the orbit and its least-norm
/// extension to the whole space, in the bilinear pairing `f(x) = sum f_j x_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalRep {
    pub k: usize,
    #[serde(with = "hex_c64_vec")]
    pub orbit_values: Vec<C64>,
    #[serde(with = "hex_cvector")]
    pub dual_vector: CVector,
    /// Bound on the norm of the infinite-dimensional functional.
    #[serde(with = "hex_f64")]
    pub norm_bound: f64,
    #[serde(with = "hex_f64")]
    pub dual_norm: f64,
    /// `max_i |f(x_i) - orbit_values_i|`.
    #[serde(with = "hex_f64")]
    pub extension_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(with = "hex_f64")]
    pub independence_sigma_min: f64,
    pub ai_defect_rank: usize,
    /// `max_y dist(T y, Y + span{e}) / ||T y||` over basis columns.
    #[serde(with = "hex_f64")]
    pub ai_residual: f64,
    #[serde(with = "hex_f64")]
    pub max_annihilation_residual: f64,
    #[serde(with = "hex_f64")]
    pub annihilation_tolerance: f64,
    /// Annihilation residuals relative to the rounding scale of the
    /// polynomial identity they come from.
    #[serde(with = "hex_f64")]
    pub max_annihilation_relative: f64,
    #[serde(with = "hex_f64")]
    pub functional_independence_sigma_min: f64,
    /// Largest extension residual relative to the largest orbit value.
    #[serde(with = "hex_f64")]
    pub max_extension_residual: f64,
    /// `max ||T h - (h / lambda - e)|| / ||h||`.
    #[serde(with = "hex_f64")]
    pub max_th_residual: f64,
    #[serde(with = "hex_f64")]
    pub max_kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(with = "hex_f64")]
    pub value: f64,
    #[serde(with = "hex_f64")]
    pub threshold: f64,
    /// `true` when the value must stay below the threshold, `false` when it
    /// must exceed it.
    pub upper: bool,
    pub passed: bool,
}

impl Check {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            upper: true,
            passed: value < threshold,
        }
    }

    fn above(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            upper: false,
            passed: value > threshold,
        }
    }

    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            upper: true,
            passed: value <= threshold,
        }
    }
}

/// What the Blaschke construction used, stored for the audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlaschkeRecord {
    pub kind: BlaschkeKind,
    pub data: BlaschkeData,
    pub hypothesis: SummabilityCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceCertificate {
    pub schema: String,
    pub construction: Construction,
    /// Operator description, when the certificate was built from one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorSpec>,
    /// Run configuration, when built through a config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub dim: usize,
    /// Orbit length the functionals are defined on.
    pub orbit_length: usize,
    pub requested_m: usize,
    #[serde(with = "hex_c64_vec")]
    pub lambdas: Vec<C64>,
    /// Candidate points dropped by the resolvent gap guard.
    #[serde(with = "hex_c64_vec")]
    pub excluded_lambdas: Vec<C64>,
    #[serde(with = "hex_cvector_list")]
    pub resolvent_vectors: Vec<CVector>,
    #[serde(with = "hex_cmatrix")]
    pub basis: CMatrix,
    #[serde(with = "hex_cvector")]
    pub defect_vector: CVector,
    pub functionals: Vec<FunctionalRep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefficientSequence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blaschke: Option<BlaschkeRecord>,
    pub tolerances: Tolerances,
    pub metrics: Metrics,
    pub checks: Vec<Check>,
    pub hypothesis_verified: bool,
    pub notes: Vec<String>,
}

impl HalfSpaceCertificate {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cert: Self = serde_json::from_str(text)?;
        if cert.schema != SCHEMA {
            return Err(AihsError::Config(format!(
                "unsupported certificate schema `{}`",
                cert.schema
            )));
        }
        Ok(cert)
    }

    /// Value of a named metric, for report tooling and the C interface.
    pub fn metric(&self, name: &str) -> Option<f64> {
        let m = &self.metrics;
        Some(match name {
            "independence_sigma_min" => m.independence_sigma_min,
            "ai_defect_rank" => m.ai_defect_rank as f64,
            "ai_residual" => m.ai_residual,
            "max_annihilation_residual" => m.max_annihilation_residual,
            "annihilation_tolerance" => m.annihilation_tolerance,
            "max_annihilation_relative" => m.max_annihilation_relative,
            "functional_independence_sigma_min" => m.functional_independence_sigma_min,
            "max_extension_residual" => m.max_extension_residual,
            "max_th_residual" => m.max_th_residual,
            "max_kappa" => m.max_kappa,
            "dim_y" => self.basis.ncols() as f64,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntireConfig {
    /// Number of resolvent vectors spanning `Y`.
    pub m: usize,
    /// Functionals `f_0 ..= f_{k_max}`.
    pub k_max: usize,
    /// Degree of the truncated entire function; defaults to `m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    #[serde(default)]
    pub picard: PicardStrategy,
    #[serde(default = "default_gap")]
    pub gap: f64,
}

fn default_gap() -> f64 {
    DEFAULT_GAP
}

impl EntireConfig {
    pub fn new(m: usize, k_max: usize) -> Self {
        Self {
            m,
            k_max,
            degree: None,
            picard: PicardStrategy::Unit,
            gap: DEFAULT_GAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlaschkeConfig {
    /// Number of Blaschke points whose resolvent vectors span `Y`.
    pub m: usize,
    /// Functionals `f_1 ..= f_{m_max}`.
    pub m_max: usize,
    #[serde(default)]
    pub kind: BlaschkeKind,
    /// Factors kept in the product; defaults to `m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<usize>,
    /// Cap on the partial sum of `r_n / n`.
    #[serde(default = "default_cap")]
    pub summability_cap: f64,
    #[serde(default = "default_gap")]
    pub gap: f64,
}

fn default_cap() -> f64 {
    100.0
}

impl BlaschkeConfig {
    pub fn new(m: usize, m_max: usize) -> Self {
        Self {
            m,
            m_max,
            kind: BlaschkeKind::InverseSquare,
            factors: None,
            summability_cap: default_cap(),
            gap: DEFAULT_GAP,
        }
    }
}

/// Least-norm solutions of `f(x_i) = v_i` on a fixed orbit, sharing one QR
/// factorization of the column-normalized orbit matrix.
pub struct OrbitExtender {
    orbit: Vec<CVector>,
    norms: Vec<f64>,
    q: CMatrix,
    r_t: CMatrix,
}

impl OrbitExtender {
    pub fn new(orbit: &[CVector]) -> Result<Self> {
        let dim = orbit.first().map_or(0, |v| v.len());
        if orbit.is_empty() || orbit.len() > dim {
            return Err(AihsError::InvalidArgument(format!(
                "cannot extend from {} orbit vectors in dimension {dim}",
                orbit.len()
            )));
        }
        let norms: Vec<f64> = orbit.iter().map(linalg::norm).collect();
        let x = linalg::normalize_columns(&linalg::columns(orbit));
        let qr = x.qr();
        Ok(Self {
            orbit: orbit.to_vec(),
            norms,
            q: qr.q(),
            r_t: qr.r().transpose(),
        })
    }

    /// Dual vector `f` of least Euclidean norm with `f(x_i) = values[i]`.
    pub fn extend(&self, values: &[C64]) -> Result<CVector> {
        let b = CVector::from_fn(self.norms.len(), |i, _| values[i] / self.norms[i]);
        let u = linalg::triangular_solve(&self.r_t, &b, true).ok_or_else(|| {
            AihsError::InvalidArgument("orbit is rank deficient; no extension".into())
        })?;
        Ok(self.q.map(|z| z.conj()) * u)
    }

    pub fn residual(&self, f: &CVector, values: &[C64]) -> f64 {
        self.orbit
            .iter()
            .zip(values)
            .map(|(x, v)| (linalg::pair(f, x) - v).norm())
            .fold(0.0, f64::max)
    }

    fn functional(&self, k: usize, values: Vec<C64>, norm_bound: f64) -> Result<FunctionalRep> {
        let dual_vector = self.extend(&values)?;
        let extension_residual = self.residual(&dual_vector, &values);
        Ok(FunctionalRep {
            k,
            dual_norm: linalg::norm(&dual_vector),
            orbit_values: values,
            dual_vector,
            norm_bound,
            extension_residual,
        })
    }
}

/// `dist(T y, span(Y ∪ {e})) / ||T y||` over basis columns, and the numerical
/// rank of `(I - P_Y) T` restricted to `Y`.
pub fn almost_invariance(op: &OperatorModel, basis: &CMatrix, e: &CVector, tol_rank: f64) -> (f64, usize) {
    if basis.ncols() == 0 {
        return (0.0, 0);
    }
    let q = linalg::spread_basis(&linalg::pivoted_orthonormal_basis(basis), op.matrix());
    let basis = &q;
    let image = op.matrix() * basis;
    let with_e = linalg::join(basis, &CMatrix::from_columns(std::slice::from_ref(e)), 1e-14);
    let residual = linalg::containment_residual(&with_e, &image);
    let mut projected = image.clone();
    for j in 0..projected.ncols() {
        let col = linalg::project_out(basis, &image.column(j).into_owned());
        projected.set_column(j, &col);
    }
    let reference = op.norm().max(linalg::singular_values(&image).first().copied().unwrap_or(0.0));
    let rank = linalg::singular_values(&projected)
        .iter()
        .filter(|&&s| s > tol_rank * reference)
        .count();
    (residual, rank)
}

/// Pivoted QR of the raw vectors, then spread so no column has a tiny image.
fn certificate_basis(op: &OperatorModel, vectors: &[CVector]) -> CMatrix {
    linalg::spread_basis(&linalg::pivoted_orthonormal_basis(&linalg::columns(vectors)), op.matrix())
}

fn functional_independence(functionals: &[FunctionalRep]) -> f64 {
    if functionals.is_empty() {
        return 0.0;
    }
    let n = functionals[0].dual_vector.len();
    let rows = CMatrix::from_fn(functionals.len(), n, |i, j| functionals[i].dual_vector[j]);
    linalg::sigma_min_normalized_rows(&rows)
}

/// Resolvent vectors at every point, in parallel; each carries its
/// condition estimate.
fn solve_all(op: &OperatorModel, e: &CVector, lambdas: &[C64]) -> Result<Vec<ResolventVector>> {
    lambdas
        .par_iter()
        .map(|&l| resolvent::resolvent_vector(op, l, e, ResolventMethod::DirectSolve)?.with_condition(op))
        .collect()
}

fn max_th_residual(op: &OperatorModel, rvs: &[ResolventVector], e: &CVector) -> f64 {
    rvs.iter()
        .map(|rv| resolvent::check_th_identity(op, rv, e) / linalg::norm(&rv.vector))
        .fold(0.0, f64::max)
}

/// The expected value `f_k(h(lambda, e))` and the rounding scale it is
/// computed against.
trait Identity {
    fn expected(&self, k: usize, lambda: C64) -> C64;
    fn scale(&self, k: usize, lambda: C64) -> f64;
}

struct EntireIdentity<'a>(&'a CoefficientSequence);

impl Identity for EntireIdentity<'_> {
    fn expected(&self, k: usize, lambda: C64) -> C64 {
        lambda.powu(k as u32 + 1) * self.0.evaluate(lambda)
    }
    fn scale(&self, k: usize, lambda: C64) -> f64 {
        lambda.norm().powi(k as i32 + 1) * self.0.magnitude(lambda)
    }
}

struct TableIdentity<'a>(&'a [FunctionalRep]);

impl TableIdentity<'_> {
    fn row(&self, k: usize) -> &[C64] {
        &self.0.iter().find(|f| f.k == k).expect("functional index").orbit_values
    }
}

impl Identity for TableIdentity<'_> {
    fn expected(&self, k: usize, lambda: C64) -> C64 {
        lambda * poly::eval(self.row(k), lambda)
    }
    fn scale(&self, k: usize, lambda: C64) -> f64 {
        lambda.norm() * poly::magnitude(self.row(k), lambda)
    }
}

/// `(max |f_k(h_n)|, max |f_k(h_n)| / scale)` over all pairs.
fn annihilation(
    functionals: &[FunctionalRep],
    vectors: &[CVector],
    lambdas: &[C64],
    identity: &dyn Identity,
) -> (f64, f64) {
    let mut abs: f64 = 0.0;
    let mut rel: f64 = 0.0;
    for f in functionals {
        for (h, &l) in vectors.iter().zip(lambdas) {
            let v = linalg::pair(&f.dual_vector, h).norm();
            abs = abs.max(v);
            let s = identity.scale(f.k, l);
            rel = rel.max(if s > 0.0 { v / s } else { v });
        }
    }
    (abs, rel)
}

/// `1e-8 (1 + max|lambda|)^(k_max + 1 + d) max|c|`: the rounding scale of
/// `lambda^(k+1) F(lambda)` at a degree-`d` zero.
pub fn default_annihilation_tolerance(lambdas: &[C64], k_max: usize, degree: usize, max_coeff: f64) -> f64 {
    let big = lambdas.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    1e-8 * (1.0 + big).powi((k_max + 1 + degree) as i32) * max_coeff
}

struct Assembled {
    metrics: Metrics,
    checks: Vec<Check>,
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    op: &OperatorModel,
    e: &CVector,
    lambdas: &[C64],
    vectors: &[CVector],
    basis: &CMatrix,
    functionals: &[FunctionalRep],
    identity: &dyn Identity,
    annihilation_tolerance: f64,
    kappas: &[f64],
    th: f64,
    tol: &Tolerances,
) -> Assembled {
    let independence_sigma_min = linalg::sigma_min_normalized_columns(&linalg::columns(vectors));
    let (ai_residual, ai_defect_rank) = almost_invariance(op, basis, e, tol.tol_rank);
    let (max_annihilation_residual, max_annihilation_relative) =
        annihilation(functionals, vectors, lambdas, identity);
    let functional_independence_sigma_min = functional_independence(functionals);
    let max_extension_residual = functionals
        .iter()
        .map(|f| {
            let scale = f.orbit_values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
            if scale > 0.0 { f.extension_residual / scale } else { f.extension_residual }
        })
        .fold(0.0, f64::max);
    let metrics = Metrics {
        independence_sigma_min,
        ai_defect_rank,
        ai_residual,
        max_annihilation_residual,
        annihilation_tolerance,
        max_annihilation_relative,
        functional_independence_sigma_min,
        max_extension_residual,
        max_th_residual: th,
        max_kappa: kappas.iter().copied().fold(0.0, f64::max),
    };
    let mut checks = vec![
        Check::at_most("ai_defect_rank", ai_defect_rank as f64, 1.0),
        Check::below("ai_residual", ai_residual, tol.tol_ai),
        Check::below("max_annihilation_residual", max_annihilation_residual, annihilation_tolerance),
        Check::above(
            "functional_independence_sigma_min",
            functional_independence_sigma_min,
            tol.tol_independence,
        ),
        Check::below("max_extension_residual", max_extension_residual, tol.tol_extension),
    ];
    if vectors.len() >= 2 {
        checks.insert(
            1,
            Check::above("independence_sigma_min", independence_sigma_min, tol.tol_independence),
        );
    }
    Assembled { metrics, checks }
}

fn orbit_for(op: &OperatorModel, e: &CVector) -> Result<operator::OrbitData> {
    if e.len() != op.dim() {
        return Err(AihsError::InvalidArgument(format!(
            "seed has length {}, operator has dim {}",
            e.len(),
            op.dim()
        )));
    }
    let alive = operator::orbit_extent(op, e, op.dim());
    if alive == 0 {
        return Err(AihsError::OrbitDied { index: 0 });
    }
    operator::compute_orbit(op, e, alive)
}

/// Points that keep the resolvent gap, and the ones that do not.
fn gap_filter(op: &OperatorModel, candidates: &[C64], gap: f64) -> (Vec<usize>, Vec<usize>) {
    (0..candidates.len()).partition(|&i| op.resolvent_gap_ok(candidates[i], gap))
}

/// Zeros of the entire function built from the orbit norms select the
/// points; functionals `f_0 ..= f_{k_max}` satisfy `f_k(T^i e) = c^(k)_i`.
pub fn build_entire(
    op: &OperatorModel,
    e: &CVector,
    config: &EntireConfig,
    tol: &Tolerances,
) -> Result<HalfSpaceCertificate> {
    tol.validate().stage(Stage::Config)?;
    if config.m == 0 {
        return Err(AihsError::Config("m must be at least 1".into()));
    }
    let orbit = orbit_for(op, e).stage(Stage::Orbit)?;
    let length = orbit.orbit_length;
    let degree = config.degree.unwrap_or(config.m);
    let cs = entire::coefficients_from_norms(&orbit.biorthogonal_norms, degree, config.k_max)
        .and_then(|cs| entire::apply_picard_shift(&cs, config.picard))
        .stage(Stage::Coefficients)?;

    let all = entire::all_zeros(&cs, tol.tol_zero).stage(Stage::Zeros)?;
    let (kept, dropped) = gap_filter(op, &all.lambdas, config.gap);
    if kept.is_empty() {
        return Err(AihsError::RootFinding("no zero keeps the resolvent gap".into()).at(Stage::Zeros));
    }
    let take = config.m.min(kept.len());
    let chosen: Vec<usize> = kept[kept.len() - take..].to_vec();
    let zeros = entire::select_zeros(&cs, &all, &chosen).stage(Stage::Zeros)?;
    let mut notes = Vec::new();
    if take < config.m {
        notes.push(format!("m reduced from {} to {take} by the resolvent gap", config.m));
    }
    let excluded: Vec<C64> = dropped.iter().map(|&i| all.lambdas[i]).collect();

    let rvs = solve_all(op, e, &zeros.lambdas).stage(Stage::Resolvent)?;
    let vectors: Vec<CVector> = rvs.iter().map(|r| r.vector.clone()).collect();
    let basis = certificate_basis(op, &vectors);

    let extender = OrbitExtender::new(&orbit.orbit).stage(Stage::Functionals)?;
    let functionals: Vec<FunctionalRep> = (0..=config.k_max)
        .into_par_iter()
        .map(|k| {
            let shifted = entire::shifted_coefficients(&cs, k);
            let values: Vec<C64> = (0..length)
                .map(|i| real(shifted.get(i).copied().unwrap_or(0.0)))
                .collect();
            extender.functional(k, values, cs.beta[k])
        })
        .collect::<Result<_>>()
        .stage(Stage::Functionals)?;

    let annihilation_tolerance = tol.tol_annihilation.unwrap_or_else(|| {
        default_annihilation_tolerance(&zeros.lambdas, config.k_max, degree, cs.max_abs())
    });
    let kappas: Vec<f64> = rvs.iter().map(|r| r.kappa.unwrap_or(f64::NAN)).collect();
    let th = max_th_residual(op, &rvs, e);
    let a = assemble(
        op,
        e,
        &zeros.lambdas,
        &vectors,
        &basis,
        &functionals,
        &EntireIdentity(&cs),
        annihilation_tolerance,
        &kappas,
        th,
        tol,
    );
    Ok(HalfSpaceCertificate {
        schema: SCHEMA.into(),
        construction: Construction::Entire,
        operator: None,
        config: None,
        dim: op.dim(),
        orbit_length: length,
        requested_m: config.m,
        lambdas: zeros.lambdas,
        excluded_lambdas: excluded,
        resolvent_vectors: vectors,
        basis,
        defect_vector: e.clone(),
        functionals,
        coefficients: Some(cs),
        blaschke: None,
        tolerances: *tol,
        metrics: a.metrics,
        checks: a.checks,
        hypothesis_verified: true,
        notes,
    })
}

/// Blaschke points select the resolvent vectors; functionals
/// `f_1 ..= f_{m_max}` take the Taylor coefficients of `z^m B(z)` on the orbit.
pub fn build_blaschke(
    op: &OperatorModel,
    e: &CVector,
    config: &BlaschkeConfig,
    tol: &Tolerances,
) -> Result<HalfSpaceCertificate> {
    tol.validate().stage(Stage::Config)?;
    if config.m == 0 || config.m_max == 0 {
        return Err(AihsError::Config("m and m_max must be at least 1".into()));
    }
    let rho = op.spectral_radius_estimate();
    if rho > 1.0 + 1e-9 {
        return Err(AihsError::InvalidOperator(format!(
            "spectral radius estimate {rho} exceeds 1"
        ))
        .at(Stage::Operator));
    }
    let orbit = orbit_for(op, e).stage(Stage::Orbit)?;
    let length = orbit.orbit_length;
    let hypothesis = blaschke::summability_check(&orbit.biorthogonal_norms, config.summability_cap);

    let factors = config.factors.unwrap_or(config.m);
    if factors < config.m {
        return Err(AihsError::Config(format!(
            "{} points requested from {factors} Blaschke factors",
            config.m
        )));
    }
    let points = blaschke::blaschke_sequence(&config.kind, factors).stage(Stage::Blaschke)?;
    let data = blaschke::blaschke_taylor(&points, length - 1).stage(Stage::Blaschke)?;
    let table: FmTable = blaschke::fm_coefficient_table(&data, config.m_max, length - 1).stage(Stage::Blaschke)?;

    let candidates = &points[..config.m];
    let (kept, dropped) = gap_filter(op, candidates, config.gap);
    if kept.is_empty() {
        return Err(AihsError::InvalidArgument("no Blaschke point keeps the resolvent gap".into())
            .at(Stage::Resolvent));
    }
    let lambdas: Vec<C64> = kept.iter().map(|&i| candidates[i]).collect();
    let excluded: Vec<C64> = dropped.iter().map(|&i| candidates[i]).collect();
    let mut notes = Vec::new();
    if lambdas.len() < config.m {
        notes.push(format!("m reduced from {} to {} by the resolvent gap", config.m, lambdas.len()));
    }
    if !hypothesis.satisfied {
        notes.push(format!(
            "hypothesis-unverified: sum r_n/n = {:.6e} (cap {:.3e}), tail slope {:.4}",
            hypothesis.partial_sum, hypothesis.cap, hypothesis.tail_slope
        ));
    }

    let rvs = solve_all(op, e, &lambdas).stage(Stage::Resolvent)?;
    let vectors: Vec<CVector> = rvs.iter().map(|r| r.vector.clone()).collect();
    let basis = certificate_basis(op, &vectors);

    let r = &orbit.biorthogonal_norms;
    let extender = OrbitExtender::new(&orbit.orbit).stage(Stage::Functionals)?;
    let functionals: Vec<FunctionalRep> = (1..=config.m_max)
        .into_par_iter()
        .map(|m| {
            let tail: f64 = (m.max(1)..length).map(|n| r[n] / n as f64).sum();
            let bound = data.growth_constant * m as f64 * tail;
            extender.functional(m, table.rows[m].clone(), bound)
        })
        .collect::<Result<_>>()
        .stage(Stage::Functionals)?;

    let max_coeff = table
        .rows
        .iter()
        .flatten()
        .fold(0.0f64, |acc, a| acc.max(a.norm()));
    let annihilation_tolerance = tol
        .tol_annihilation
        .unwrap_or_else(|| default_annihilation_tolerance(&lambdas, config.m_max, 0, max_coeff));
    let kappas: Vec<f64> = rvs.iter().map(|r| r.kappa.unwrap_or(f64::NAN)).collect();
    let th = max_th_residual(op, &rvs, e);
    let a = assemble(
        op,
        e,
        &lambdas,
        &vectors,
        &basis,
        &functionals,
        &TableIdentity(&functionals),
        annihilation_tolerance,
        &kappas,
        th,
        tol,
    );
    Ok(HalfSpaceCertificate {
        schema: SCHEMA.into(),
        construction: Construction::Blaschke,
        operator: None,
        config: None,
        dim: op.dim(),
        orbit_length: length,
        requested_m: config.m,
        lambdas,
        excluded_lambdas: excluded,
        resolvent_vectors: vectors,
        basis,
        defect_vector: e.clone(),
        functionals,
        coefficients: None,
        hypothesis_verified: hypothesis.satisfied,
        blaschke: Some(BlaschkeRecord {
            kind: config.kind.clone(),
            data,
            hypothesis,
        }),
        tolerances: *tol,
        metrics: a.metrics,
        checks: a.checks,
        notes,
    })
}

/// Largest relative error of `f_k(h(lambda, e)) = lambda^(k+1) F(lambda)`
/// (or `lambda F_m(lambda)`) over `grid`, each error measured against the
/// rounding scale of the right-hand side. Exact up to rounding whenever the
/// orbit of `e` reaches zero within the stored orbit length.
pub fn identity_error(op: &OperatorModel, cert: &HalfSpaceCertificate, grid: &[C64]) -> Result<f64> {
    let e = &cert.defect_vector;
    let errors: Vec<f64> = grid
        .par_iter()
        .map(|&l| -> Result<f64> {
            let h = resolvent::resolvent_vector(op, l, e, ResolventMethod::DirectSolve)?.vector;
            let mut worst: f64 = 0.0;
            for f in &cert.functionals {
                let got = linalg::pair(&f.dual_vector, &h);
                let (want, scale) = match &cert.coefficients {
                    Some(cs) => {
                        let id = EntireIdentity(cs);
                        (id.expected(f.k, l), id.scale(f.k, l))
                    }
                    None => {
                        let id = TableIdentity(&cert.functionals);
                        (id.expected(f.k, l), id.scale(f.k, l))
                    }
                };
                worst = worst.max((got - want).norm() / scale);
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(errors.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub metric: String,
    pub stored: f64,
    pub recomputed: f64,
    pub relative_difference: f64,
    /// Whether the recomputed value passes the certificate's threshold.
    pub threshold_passed: bool,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.agrees && e.threshold_passed)
    }

    pub fn first_failure(&self) -> Option<&AuditEntry> {
        self.entries.iter().find(|e| !(e.agrees && e.threshold_passed))
    }

    pub fn max_relative_difference(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.relative_difference)
            .fold(0.0, f64::max)
    }
}

fn relative_difference(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let scale = a.abs().max(b.abs());
    if !scale.is_finite() {
        return f64::INFINITY;
    }
    (a - b).abs() / scale
}

/// Recomputes every metric from the operator and the certificate's stored
/// vectors and compares against the stored values.
pub fn audit_certificate(op: &OperatorModel, cert: &HalfSpaceCertificate) -> Result<AuditReport> {
    if op.dim() != cert.dim || cert.defect_vector.len() != cert.dim {
        return Err(AihsError::Audit {
            metric: "dim".into(),
            detail: format!("operator has dim {}, certificate {}", op.dim(), cert.dim),
        });
    }
    let tol = &cert.tolerances;
    let e = &cert.defect_vector;
    let mut entries = Vec::new();
    // `stored = None` marks a derived quantity with nothing stored to diff against
    let mut push = |metric: &str, stored: Option<f64>, recomputed: f64, threshold_passed: bool| {
        let stored = stored.unwrap_or(recomputed);
        let d = relative_difference(stored, recomputed);
        entries.push(AuditEntry {
            metric: metric.into(),
            stored,
            recomputed,
            relative_difference: d,
            threshold_passed,
            agrees: d <= AUDIT_TOLERANCE,
        });
    };

    // resolvent vectors re-solved from the stored points
    let rvs = solve_all(op, e, &cert.lambdas)?;
    let resolve_diff = rvs
        .iter()
        .zip(&cert.resolvent_vectors)
        .map(|(rv, h)| {
            if rv.vector.len() != h.len() {
                return f64::INFINITY;
            }
            linalg::norm(&(&rv.vector - h)) / linalg::norm(&rv.vector)
        })
        .fold(if rvs.len() == cert.resolvent_vectors.len() { 0.0 } else { f64::INFINITY }, f64::max);
    push("resolvent_vectors", None, resolve_diff, resolve_diff <= AUDIT_TOLERANCE);

    // basis must span the stored vectors
    let span = if cert.basis.ncols() == cert.resolvent_vectors.len() {
        linalg::containment_residual(&cert.basis, &linalg::columns(&cert.resolvent_vectors))
    } else {
        f64::INFINITY
    };
    push("basis_span", None, span, span < tol.tol_ai);

    let m = &cert.metrics;
    let independence = linalg::sigma_min_normalized_columns(&linalg::columns(&cert.resolvent_vectors));
    push(
        "independence_sigma_min",
        Some(m.independence_sigma_min),
        independence,
        cert.resolvent_vectors.len() < 2 || independence > tol.tol_independence,
    );

    let (ai_residual, ai_rank) = almost_invariance(op, &cert.basis, e, tol.tol_rank);
    push("ai_defect_rank", Some(m.ai_defect_rank as f64), ai_rank as f64, ai_rank <= 1);
    push("ai_residual", Some(m.ai_residual), ai_residual, ai_residual < tol.tol_ai);

    let (ann, ann_rel) = match &cert.coefficients {
        Some(cs) => annihilation(&cert.functionals, &cert.resolvent_vectors, &cert.lambdas, &EntireIdentity(cs)),
        None => annihilation(
            &cert.functionals,
            &cert.resolvent_vectors,
            &cert.lambdas,
            &TableIdentity(&cert.functionals),
        ),
    };
    let k_max = cert.functionals.iter().map(|f| f.k).max().unwrap_or(0);
    let ann_tol = match (tol.tol_annihilation, &cert.coefficients, &cert.blaschke) {
        (Some(t), _, _) => t,
        (None, Some(cs), _) => default_annihilation_tolerance(&cert.lambdas, k_max, cs.degree, cs.max_abs()),
        (None, None, Some(b)) => {
            let max_coeff = b.data.taylor[..cert.orbit_length.min(b.data.taylor.len())]
                .iter()
                .fold(0.0f64, |acc, a| acc.max(a.norm()));
            default_annihilation_tolerance(&cert.lambdas, k_max, 0, max_coeff)
        }
        (None, None, None) => f64::NAN,
    };
    push("annihilation_tolerance", Some(m.annihilation_tolerance), ann_tol, ann_tol.is_finite());
    push(
        "max_annihilation_residual",
        Some(m.max_annihilation_residual),
        ann,
        ann < ann_tol,
    );
    push("max_annihilation_relative", Some(m.max_annihilation_relative), ann_rel, true);

    let fi = functional_independence(&cert.functionals);
    push(
        "functional_independence_sigma_min",
        Some(m.functional_independence_sigma_min),
        fi,
        fi > tol.tol_independence,
    );

    // functionals against a freshly computed orbit
    let length = cert.orbit_length;
    let orbit = operator::compute_orbit(op, e, length)?;
    let mut ext: f64 = 0.0;
    for f in &cert.functionals {
        if f.dual_vector.len() != cert.dim || f.orbit_values.len() != length {
            ext = f64::INFINITY;
            continue;
        }
        let r = orbit
            .orbit
            .iter()
            .zip(&f.orbit_values)
            .map(|(x, v)| (linalg::pair(&f.dual_vector, x) - v).norm())
            .fold(0.0, f64::max);
        let scale = f.orbit_values.iter().fold(0.0f64, |acc, v| acc.max(v.norm()));
        ext = ext.max(if scale > 0.0 { r / scale } else { r });
    }
    push("max_extension_residual", Some(m.max_extension_residual), ext, ext < tol.tol_extension);

    let th = max_th_residual(op, &rvs, e);
    push("max_th_residual", Some(m.max_th_residual), th, true);

    Ok(AuditReport { entries })
}

/// Audit that fails with the name of the first metric that disagrees with
/// its stored value or misses its threshold.
pub fn verify_certificate(op: &OperatorModel, cert: &HalfSpaceCertificate) -> Result<AuditReport> {
    let report = audit_certificate(op, cert)?;
    if let Some(bad) = report.first_failure() {
        return Err(AihsError::Audit {
            metric: bad.metric.clone(),
            detail: format!(
                "stored {:e}, recomputed {:e} (relative difference {:e}, threshold {})",
                bad.stored,
                bad.recomputed,
                bad.relative_difference,
                if bad.threshold_passed { "met" } else { "missed" }
            ),
        });
    }
    Ok(report)
}
