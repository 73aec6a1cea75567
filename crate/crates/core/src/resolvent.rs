//! Resolvent vectors `h(lambda, e) = (lambda^{-1} I - T)^{-1} e` and the
//! identities they satisfy.
//!
//! The Neumann form is `h = lambda * sum_{n>=0} lambda^n T^n e`; the trailing
//! `e` is required by `T h = lambda^{-1} h - e` and by the scalar case.

use std::sync::OnceLock;

use nalgebra::linalg::LU;
use nalgebra::Dyn;
use serde::{Deserialize, Serialize};

use crate::error::{AihsError, Result};
use crate::linalg::{self, real, CMatrix, CVector, Triangular, C64};
use crate::operator::{OperatorFamily, OperatorModel};

/// Default relative defect accepted from a direct solve.
pub const DEFAULT_TOL_RESOLVENT: f64 = 1e-10;

/// Relative defect above which a direct solve is reported as singular.
const SINGULAR_DEFECT: f64 = 1e-6;

/// Distance from `lambda^{-1}` to the spectrum, relative to the operator
/// scale, below which a dense shift counts as singular.
const SINGULAR_GAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ResolventMethod {
    DirectSolve,
    NeumannPartialSum { terms: usize },
}

impl std::fmt::Display for ResolventMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ResolventMethod::DirectSolve => f.write_str("direct"),
            ResolventMethod::NeumannPartialSum { terms } => write!(f, "neumann-{terms}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResolventVector {
    pub lambda: C64,
    pub vector: CVector,
    pub method: ResolventMethod,
    /// `||(lambda^{-1} I - T) h - e||`.
    pub defect: f64,
    /// `defect / (||lambda^{-1} h|| + ||T h|| + ||e||)`.
    pub relative_defect: f64,
    /// Estimated `sigma_max / sigma_min` of `lambda^{-1} I - T`.
    pub kappa: Option<f64>,
}

impl ResolventVector {
    pub fn with_condition(mut self, op: &OperatorModel) -> Result<Self> {
        self.kappa = Some(condition_estimate(op, self.lambda)?);
        Ok(self)
    }
}

/// Factorization of `lambda^{-1} I - T` supporting solves with it and its adjoint.
pub struct ShiftedSolver {
    shifted: CMatrix,
    kind: SolverKind,
}

enum SolverKind {
    Lower,
    Upper,
    Lu {
        lu: LU<C64, Dyn, Dyn>,
        lu_adjoint: OnceLock<LU<C64, Dyn, Dyn>>,
    },
}

impl ShiftedSolver {
    pub fn new(op: &OperatorModel, lambda: C64) -> Result<Self> {
        if lambda == C64::new(0.0, 0.0) {
            return Err(AihsError::InvalidArgument("lambda must be nonzero".into()));
        }
        let n = op.dim();
        let shifted = CMatrix::identity(n, n) * lambda.inv() - op.matrix();
        let kind = match op.structure() {
            Triangular::Lower | Triangular::Diagonal => SolverKind::Lower,
            Triangular::Upper => SolverKind::Upper,
            Triangular::None => {
                // LU is backward stable, so a small defect cannot flag a
                // singular shift; compare against the spectrum instead
                let target = lambda.inv();
                let scale = target.norm().max(op.norm());
                let gap = op
                    .eigenvalues()
                    .iter()
                    .fold(f64::INFINITY, |g, mu| g.min((target - mu).norm()));
                if gap <= SINGULAR_GAP * scale {
                    return Err(AihsError::SingularResolvent { lambda });
                }
                SolverKind::Lu {
                    lu: shifted.clone().lu(),
                    lu_adjoint: OnceLock::new(),
                }
            }
        };
        Ok(Self { shifted, kind })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.shifted
    }

    pub fn solve(&self, b: &CVector) -> Option<CVector> {
        match &self.kind {
            SolverKind::Lower => linalg::triangular_solve(&self.shifted, b, true),
            SolverKind::Upper => linalg::triangular_solve(&self.shifted, b, false),
            SolverKind::Lu { lu, .. } => lu.solve(b),
        }
    }

    pub fn solve_adjoint(&self, b: &CVector) -> Option<CVector> {
        match &self.kind {
            SolverKind::Lower => linalg::triangular_solve(&self.shifted.adjoint(), b, false),
            SolverKind::Upper => linalg::triangular_solve(&self.shifted.adjoint(), b, true),
            SolverKind::Lu { lu_adjoint, .. } => lu_adjoint.get_or_init(|| self.shifted.adjoint().lu()).solve(b),
        }
    }
}

fn defects(op: &OperatorModel, lambda: C64, h: &CVector, e: &CVector) -> (f64, f64) {
    let th = op.apply(h);
    let scaled = h * lambda.inv();
    let defect = linalg::norm(&(&scaled - &th - e));
    let scale = linalg::norm(&scaled) + linalg::norm(&th) + linalg::norm(e);
    let rel = if scale > 0.0 { defect / scale } else { 0.0 };
    (defect, rel)
}

fn all_finite(v: &CVector) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Computes `h(lambda, e)` by a direct solve or a Neumann partial sum.
pub fn resolvent_vector(
    op: &OperatorModel,
    lambda: C64,
    e: &CVector,
    method: ResolventMethod,
) -> Result<ResolventVector> {
    if lambda == C64::new(0.0, 0.0) || !lambda.re.is_finite() || !lambda.im.is_finite() {
        return Err(AihsError::InvalidArgument(format!("lambda must be finite and nonzero, got {lambda}")));
    }
    if e.len() != op.dim() {
        return Err(AihsError::InvalidArgument(format!(
            "vector has length {}, operator has dim {}",
            e.len(),
            op.dim()
        )));
    }
    let vector = match method {
        ResolventMethod::DirectSolve => {
            let solver = ShiftedSolver::new(op, lambda)?;
            let h = solver
                .solve(e)
                .filter(all_finite)
                .ok_or(AihsError::SingularResolvent { lambda })?;
            let (_, rel) = defects(op, lambda, &h, e);
            if rel > SINGULAR_DEFECT {
                return Err(AihsError::SingularResolvent { lambda });
            }
            h
        }
        ResolventMethod::NeumannPartialSum { terms } => neumann_sum(op, lambda, e, terms)?,
    };
    let (defect, relative_defect) = defects(op, lambda, &vector, e);
    Ok(ResolventVector {
        lambda,
        vector,
        method,
        defect,
        relative_defect,
        kappa: None,
    })
}

fn neumann_sum(op: &OperatorModel, lambda: C64, e: &CVector, terms: usize) -> Result<CVector> {
    if terms == 0 {
        return Err(AihsError::InvalidArgument("Neumann sum needs at least one term".into()));
    }
    let mut term = e * lambda;
    let mut sum = CVector::zeros(e.len());
    for _ in 0..terms {
        sum += &term;
        term = op.apply(&term) * lambda;
    }
    let exact = term.iter().all(|z| *z == C64::new(0.0, 0.0));
    if exact {
        return Ok(sum);
    }
    let rho = op.spectral_radius_estimate();
    if lambda.norm() * rho >= 1.0 || !all_finite(&sum) || linalg::norm(&term) > linalg::norm(&sum) {
        return Err(AihsError::NeumannDivergent { lambda });
    }
    Ok(sum)
}

/// `||T h - (lambda^{-1} h - e)||`.
pub fn check_th_identity(op: &OperatorModel, rv: &ResolventVector, e: &CVector) -> f64 {
    let lhs = op.apply(&rv.vector);
    let rhs = &rv.vector * rv.lambda.inv() - e;
    linalg::norm(&(lhs - rhs))
}

/// `||h(lambda,e) - h(mu,e) - (mu^{-1} - lambda^{-1}) h(lambda, h(mu,e))||`,
/// all three resolvents by direct solve.
pub fn check_replacement(op: &OperatorModel, lambda: C64, mu: C64, e: &CVector) -> Result<f64> {
    if lambda == mu {
        return Err(AihsError::InvalidArgument("replacement needs lambda != mu".into()));
    }
    let h_lambda = resolvent_vector(op, lambda, e, ResolventMethod::DirectSolve)?.vector;
    let h_mu = resolvent_vector(op, mu, e, ResolventMethod::DirectSolve)?.vector;
    let nested = resolvent_vector(op, lambda, &h_mu, ResolventMethod::DirectSolve)?.vector;
    let factor = mu.inv() - lambda.inv();
    Ok(linalg::norm(&(h_lambda - h_mu - nested * factor)))
}

/// [`check_replacement`] divided by the sum of the norms of its three terms,
/// with one factorization per point.
pub fn check_replacement_relative(op: &OperatorModel, lambda: C64, mu: C64, e: &CVector) -> Result<f64> {
    if lambda == mu {
        return Err(AihsError::InvalidArgument("replacement needs lambda != mu".into()));
    }
    let at_lambda = ShiftedSolver::new(op, lambda)?;
    let at_mu = ShiftedSolver::new(op, mu)?;
    let solve = |s: &ShiftedSolver, l: C64, b: &CVector| {
        s.solve(b).filter(all_finite).ok_or(AihsError::SingularResolvent { lambda: l })
    };
    let h_lambda = solve(&at_lambda, lambda, e)?;
    let h_mu = solve(&at_mu, mu, e)?;
    let nested = solve(&at_lambda, lambda, &h_mu)? * (mu.inv() - lambda.inv());
    let scale = linalg::norm(&h_lambda) + linalg::norm(&h_mu) + linalg::norm(&nested);
    let r = linalg::norm(&(h_lambda - h_mu - nested));
    Ok(if scale > 0.0 { r / scale } else { 0.0 })
}

/// Smallest singular value of the column-normalized matrix of resolvent vectors.
pub fn independence_certificate(vectors: &[ResolventVector]) -> f64 {
    let cols: Vec<CVector> = vectors.iter().map(|v| v.vector.clone()).collect();
    linalg::sigma_min_normalized_columns(&linalg::columns(&cols))
}

/// `sigma_max / sigma_min` of `lambda^{-1} I - T`, estimated by power and
/// inverse iteration (a few solves with the factorization).
pub fn condition_estimate(op: &OperatorModel, lambda: C64) -> Result<f64> {
    let solver = ShiftedSolver::new(op, lambda)?;
    let a = solver.matrix();
    let n = op.dim();
    let start = CVector::from_fn(n, |i, _| real(1.0 + (i as f64 * 0.754_877_666).fract()));
    let sn = start.norm();
    let start = start.map(|x| x / sn);

    let mut v = start.clone();
    let mut smax: f64 = 0.0;
    for _ in 0..30 {
        let w = a * &v;
        let z = a.adjoint() * &w;
        smax = smax.max(linalg::norm(&w));
        let zn = linalg::norm(&z);
        if zn == 0.0 {
            break;
        }
        v = z.map(|x| x / zn);
    }

    let mut v = start;
    let mut inv_norm: f64 = 0.0;
    for _ in 0..30 {
        let Some(w) = solver.solve(&v) else {
            return Ok(f64::INFINITY);
        };
        let wn = linalg::norm(&w);
        if !wn.is_finite() {
            return Ok(f64::INFINITY);
        }
        let prev = inv_norm;
        inv_norm = inv_norm.max(wn);
        let Some(z) = solver.solve_adjoint(&w.map(|x| x / wn)) else {
            return Ok(f64::INFINITY);
        };
        let zn = linalg::norm(&z);
        if !zn.is_finite() || zn == 0.0 {
            break;
        }
        v = z.map(|x| x / zn);
        if (inv_norm - prev).abs() <= 1e-6 * inv_norm {
            break;
        }
    }
    Ok(smax * inv_norm)
}

/// One row of the resolvent residual report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResolventRow {
    pub family: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub method: String,
    pub defect: f64,
    pub th_residual: f64,
    pub replacement_residual: f64,
    pub kappa: f64,
}

impl ResolventRow {
    pub fn new(
        family: OperatorFamily,
        rv: &ResolventVector,
        dim: usize,
        th_residual: f64,
        replacement_residual: f64,
    ) -> Self {
        Self {
            family: family.to_string(),
            n: dim,
            lambda_re: rv.lambda.re,
            lambda_im: rv.lambda.im,
            method: rv.method.to_string(),
            defect: rv.relative_defect,
            th_residual,
            replacement_residual,
            kappa: rv.kappa.unwrap_or(f64::NAN),
        }
    }
}

pub fn write_resolvent_csv<W: std::io::Write>(rows: &[ResolventRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Parameters of the dense-subsequence probe on `x = (1, 1, 1/2!, 1/3!, ...)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Norm exponent `p` of `l_p`.
    pub p: f64,
    /// Truncation dimension.
    pub dim: usize,
    /// Number of basis vectors to extract (`e_1 .. e_{k_max}`).
    pub k_max: usize,
    /// Largest shift index `n`.
    pub n_max: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            dim: 64,
            k_max: 2,
            n_max: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseProbe {
    pub config: ProbeConfig,
    /// Shift indices `n = 1 ..= n_max`.
    pub n_values: Vec<usize>,
    /// `errors[k-1][i]` is the extraction error of `e_k` at `n = n_values[i]`.
    pub errors: Vec<Vec<f64>>,
}

/// Reproduces the extraction `e_1, e_2, ...` from shifts of
/// `x = (1, 1, 1/2!, 1/3!, ...)` under the backward shift `S`.
///
/// With `y^(1)_n = n! S^n x` and `y^(k+1)_n = (n + k) (y^(k)_n - e_k)`,
/// the k-th error is `||y^(k)_n - e_k||_p`. Components are formed as running
/// ratios `n!/(n+j-1)!`, so nothing overflows.
pub fn dense_subsequence_probe(config: ProbeConfig) -> Result<DenseProbe> {
    let ProbeConfig { p, dim, k_max, n_max } = config;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(AihsError::InvalidArgument(format!("need 1 <= p < inf, got {p}")));
    }
    if k_max == 0 || k_max > dim || n_max == 0 {
        return Err(AihsError::InvalidArgument(
            "need 1 <= k_max <= dim and n_max >= 1".into(),
        ));
    }
    let norm_p = |v: &[f64]| v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p);
    let mut errors = vec![Vec::with_capacity(n_max); k_max];
    for n in 1..=n_max {
        // y_j = n!/(n+j-1)! for j = 1..dim (0-based index j-1)
        let mut y = Vec::with_capacity(dim);
        let mut c = 1.0;
        for j in 1..=dim {
            if j > 1 {
                c /= (n + j - 1) as f64;
            }
            y.push(c);
        }
        for (k, errs) in errors.iter_mut().enumerate() {
            // y currently approximates e_{k+1}
            let mut diff = y.clone();
            diff[k] -= 1.0;
            errs.push(norm_p(&diff));
            let scale = (n + k + 1) as f64;
            y = diff.iter().map(|d| d * scale).collect();
        }
    }
    Ok(DenseProbe {
        config,
        n_values: (1..=n_max).collect(),
        errors,
    })
}
