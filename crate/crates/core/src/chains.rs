//! Nested chains `Y_1 ⊃ Y_2 ⊃ ...` of finite-codimension subspaces with
//! vectors `z_n` and functionals `f_n` such that `f_{n+1} = f_n ∘ T ∘ P_n`.
//!
//! Either some `f_{n+1}` vanishes on `Y_n`, in which case `Y_n` is invariant
//! and has codimension `n`, or the chain keeps growing. At desk scale the
//! second branch only produces a growth report: the defect vectors of
//! `T z_{2k}` off `Z = span{z_2, z_4, ...}` gain one dimension per step.
//!
//! Functionals are dual vectors under the bilinear pairing `f(x) = sum f_j x_j`,
//! so `ker f` is the orthogonal complement of `conj(f)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{hex_cmatrix, hex_cvector};
use crate::error::{AihsError, Result};
use crate::linalg::{self, pair, CMatrix, CVector};
use crate::operator::{random_matrix, OperatorFamily, OperatorModel};

/// Property residuals must stay below this at every step.
pub const DEFAULT_PROPERTY_TOL: f64 = 1e-8;

/// `f_{n+1}` counts as vanishing on `Y_n` when its restriction has norm below
/// this multiple of `||f_n|| ||T||`.
pub const DEFAULT_TOL_CHAIN: f64 = 1e-10;

/// Residual bound for an invariant-subspace witness.
pub const WITNESS_TOL: f64 = 1e-9;

/// Where the chain starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChainStart {
    /// `e_N` for forward shifts (whose tail hyperplane `span{e_2..e_N}` is
    /// invariant), `e_1` otherwise.
    #[default]
    Auto,
    /// `e_index`, 1-based.
    Basis { index: usize },
    /// Unit vector with seeded random entries.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainTolerances {
    pub property: f64,
    pub chain: f64,
}

impl Default for ChainTolerances {
    fn default() -> Self {
        Self {
            property: DEFAULT_PROPERTY_TOL,
            chain: DEFAULT_TOL_CHAIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    #[serde(with = "crate::encoding::hex_cvector_list")]
    pub z: Vec<CVector>,
    #[serde(with = "crate::encoding::hex_cvector_list")]
    pub f: Vec<CVector>,
    /// Orthonormal bases of `Y_1, Y_2, ...`.
    #[serde(with = "hex_cmatrix_list")]
    pub y_bases: Vec<CMatrix>,
}

mod hex_cmatrix_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrapped(#[serde(with = "hex_cmatrix")] CMatrix);

    pub fn serialize<S: Serializer>(v: &[CMatrix], s: S) -> std::result::Result<S::Ok, S::Error> {
        let w: Vec<Wrapped> = v.iter().cloned().map(Wrapped).collect();
        w.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<CMatrix>, D::Error> {
        let w: Vec<Wrapped> = Vec::deserialize(d)?;
        Ok(w.into_iter().map(|w| w.0).collect())
    }
}

impl ChainState {
    pub fn depth(&self) -> usize {
        self.z.len()
    }

    pub fn current_basis(&self) -> &CMatrix {
        self.y_bases.last().expect("chain has depth at least 1")
    }
}

fn start_vector(op: &OperatorModel, start: ChainStart) -> Result<CVector> {
    let n = op.dim();
    let z = match start {
        ChainStart::Auto => {
            if op.family() == OperatorFamily::ForwardWeightedShift {
                linalg::basis_vector(n, n - 1)
            } else {
                linalg::basis_vector(n, 0)
            }
        }
        ChainStart::Basis { index } => {
            if index == 0 || index > n {
                return Err(AihsError::InvalidArgument(format!(
                    "start index {index} outside 1..={n}"
                )));
            }
            linalg::basis_vector(n, index - 1)
        }
        ChainStart::Random { seed } => {
            let m = crate::duality::random_orthonormal(n, 1, seed);
            m.column(0).into_owned()
        }
    };
    Ok(z)
}

/// `ker f` inside the span of the orthonormal `q`.
fn kernel_within(q: &CMatrix, f: &CVector) -> CMatrix {
    let r = q.transpose() * f;
    let complement = linalg::orthogonal_complement(&CMatrix::from_columns(&[r.conjugate()]));
    q * complement
}

/// Depth-1 state: `z_1`, `f_1 = conj(z_1) / ||z_1||^2`, `Y_1 = ker f_1`.
pub fn start_chain(op: &OperatorModel, start: ChainStart) -> Result<ChainState> {
    let z1 = start_vector(op, start)?;
    let nz = linalg::norm(&z1);
    let f1 = z1.map(|x| x.conj() / (nz * nz));
    let y1 = kernel_within(&CMatrix::identity(op.dim(), op.dim()), &f1);
    Ok(ChainState {
        z: vec![z1],
        f: vec![f1],
        y_bases: vec![y1],
    })
}

/// `P_n^T T^T f_n`, the dual vector of `x -> f_n(T P_n x)`.
fn next_functional(op: &OperatorModel, state: &ChainState) -> CVector {
    let fn_ = state.f.last().expect("nonempty chain");
    let u = op.matrix().transpose() * fn_;
    let mut out = u.clone();
    for (fk, zk) in state.f.iter().zip(state.z.iter()) {
        let coeff = pair(&u, zk) / pair(fk, zk);
        out -= fk * coeff;
    }
    out
}

/// Residuals of the six chain properties for the step that produced depth `n+1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepResiduals {
    /// Depth after the step.
    pub depth: usize,
    pub dim_y: usize,
    /// `dist(z_{n+1}, Y_n) / ||z_{n+1}||`.
    pub z_in_previous: f64,
    /// `|f_k(y)| / ||f_k||` over `k <= n+1` and `y` in `Y_{n+1}`, and the
    /// containment `Y_{n+1} ⊆ Y_n`.
    pub kernel: f64,
    /// `|f_{n+1}(y) - f_n(T y)| / (||f_n|| ||T||)` over `y` in `Y_n`.
    pub recursion: f64,
    /// Containment `Y_n ⊆ Y_{n+1} + span{z_{n+1}}`.
    pub direct_sum: f64,
    /// `dist(z_{n+1}, Y_{n+1})`, must stay away from zero.
    pub separation: f64,
    /// Containment `T Y_{n+1} ⊆ Y_n`.
    pub t_containment: f64,
    /// `|f_i(z_j)| / (||f_i|| ||z_j||)` over `i != j`.
    pub biorthogonality: f64,
    /// Smallest `|f_i(z_i)| / (||f_i|| ||z_i||)`.
    pub pivot: f64,
    pub dims_ok: bool,
}

impl StepResiduals {
    pub fn worst(&self) -> f64 {
        [
            self.z_in_previous,
            self.kernel,
            self.recursion,
            self.direct_sum,
            self.t_containment,
            self.biorthogonality,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.dims_ok && self.worst() < tol && self.separation > tol && self.pivot > tol
    }
}

fn relative_pair(f: &CVector, z: &CVector) -> f64 {
    let scale = linalg::norm(f) * linalg::norm(z);
    if scale == 0.0 { 0.0 } else { pair(f, z).norm() / scale }
}

/// Recomputes the six properties for the last step of `state` (depth >= 2)
/// from the raw vectors.
pub fn verify_last_step(op: &OperatorModel, state: &ChainState) -> StepResiduals {
    let d = state.depth();
    assert!(d >= 2, "a step needs depth at least 2");
    let (prev, next) = (&state.y_bases[d - 2], &state.y_bases[d - 1]);
    let z = &state.z[d - 1];
    let (f_prev, f_next) = (&state.f[d - 2], &state.f[d - 1]);
    let t_norm = op.norm().max(f64::MIN_POSITIVE);

    let z_in_previous = linalg::relative_distance(prev, z);
    let mut kernel = linalg::containment_residual(prev, next);
    for fk in &state.f {
        let nf = linalg::norm(fk);
        for y in next.column_iter() {
            kernel = kernel.max(pair(fk, &y.into_owned()).norm() / nf);
        }
    }
    let scale = linalg::norm(f_prev) * t_norm;
    let recursion = prev
        .column_iter()
        .map(|y| {
            let y = y.into_owned();
            (pair(f_next, &y) - pair(f_prev, &op.apply(&y))).norm() / scale
        })
        .fold(0.0, f64::max);
    let sum = linalg::join(next, &CMatrix::from_columns(std::slice::from_ref(z)), 1e-14);
    let direct_sum = linalg::containment_residual(&sum, prev);
    let separation = linalg::relative_distance(next, z);
    let t_containment = if next.ncols() == 0 {
        0.0
    } else {
        let spread = linalg::spread_basis(next, op.matrix());
        linalg::containment_residual(prev, &(op.matrix() * spread))
    };
    let mut biorthogonality: f64 = 0.0;
    let mut pivot = f64::INFINITY;
    for (i, fi) in state.f.iter().enumerate() {
        for (j, zj) in state.z.iter().enumerate() {
            let v = relative_pair(fi, zj);
            if i == j {
                pivot = pivot.min(v);
            } else {
                biorthogonality = biorthogonality.max(v);
            }
        }
    }
    let dims_ok = next.ncols() + 1 == prev.ncols() && next.ncols() == op.dim() - d;
    StepResiduals {
        depth: d,
        dim_y: next.ncols(),
        z_in_previous,
        kernel,
        recursion,
        direct_sum,
        separation,
        t_containment,
        biorthogonality,
        pivot,
        dims_ok,
    }
}

/// One step of the recursion. Returns `ChainTerminated` when `f_{n+1}`
/// vanishes on `Y_n`, which makes `Y_n` invariant.
pub fn extend_chain(op: &OperatorModel, state: &ChainState, tol: &ChainTolerances) -> Result<(ChainState, StepResiduals)> {
    let depth = state.depth();
    let q = state.current_basis();
    if depth == 0 || q.ncols() == 0 {
        return Err(AihsError::InvalidArgument("chain needs depth >= 1 and Y_n nontrivial".into()));
    }
    let f_next = next_functional(op, state);
    let r = q.transpose() * &f_next;
    let restricted = linalg::norm(&r);
    let f_prev = state.f.last().expect("nonempty");
    if restricted < tol.chain * linalg::norm(f_prev) * op.norm() || restricted == 0.0 {
        return Err(AihsError::ChainTerminated { depth });
    }
    // the unit direction of Y_n on which |f_{n+1}| is largest
    let z_next = q * r.map(|x| x.conj() / restricted);
    let y_next = q * linalg::orthogonal_complement(&CMatrix::from_columns(&[r.conjugate()]));
    let mut next = state.clone();
    next.z.push(z_next);
    next.f.push(f_next);
    next.y_bases.push(y_next);
    let residuals = verify_last_step(op, &next);
    if !residuals.passed(tol.property) {
        return Err(AihsError::NumericalFailure(format!(
            "chain properties violated at depth {}: worst residual {:e}, pivot {:e}",
            residuals.depth,
            residuals.worst(),
            residuals.pivot
        )));
    }
    Ok((next, residuals))
}

/// `Y_n` with `T Y_n ⊆ Y_n`, found when the chain stops at depth `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantWitness {
    pub depth: usize,
    pub codimension: usize,
    /// Containment residual of `T Y_n` in `Y_n`.
    pub residual: f64,
    #[serde(with = "hex_cmatrix")]
    pub basis: CMatrix,
}

impl InvariantWitness {
    pub fn verified(&self) -> bool {
        self.residual < WITNESS_TOL
    }
}

pub fn invariant_witness(op: &OperatorModel, state: &ChainState) -> InvariantWitness {
    let q = state.current_basis().clone();
    let residual = if q.ncols() == 0 {
        0.0
    } else {
        let spread = linalg::spread_basis(&q, op.matrix());
        linalg::containment_residual(&q, &(op.matrix() * spread))
    };
    InvariantWitness {
        depth: state.depth(),
        codimension: op.dim() - q.ncols(),
        residual,
        basis: q,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChainOutcome {
    Completed,
    InvariantSubspace { witness: InvariantWitness },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    pub state: ChainState,
    pub steps: Vec<StepResiduals>,
    pub outcome: ChainOutcome,
}

/// Extends from depth 1 up to `depth`, stopping early on termination.
pub fn run_chain(op: &OperatorModel, depth: usize, start: ChainStart, tol: &ChainTolerances) -> Result<ChainRun> {
    if depth == 0 || depth > op.dim() {
        return Err(AihsError::InvalidArgument(format!(
            "chain depth must lie in 1..={}, got {depth}",
            op.dim()
        )));
    }
    let mut state = start_chain(op, start)?;
    let mut steps = Vec::new();
    while state.depth() < depth {
        match extend_chain(op, &state, tol) {
            Ok((next, res)) => {
                log::debug!("chain depth {} worst residual {:e}", res.depth, res.worst());
                state = next;
                steps.push(res);
            }
            Err(AihsError::ChainTerminated { depth }) => {
                log::info!("chain terminated at depth {depth}");
                let witness = invariant_witness(op, &state);
                return Ok(ChainRun {
                    state,
                    steps,
                    outcome: ChainOutcome::InvariantSubspace { witness },
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ChainRun {
        state,
        steps,
        outcome: ChainOutcome::Completed,
    })
}

/// Serializable record of a chain run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTranscript {
    pub family: OperatorFamily,
    pub dim: usize,
    pub requested_depth: usize,
    pub reached_depth: usize,
    pub start: ChainStart,
    pub tolerances: ChainTolerances,
    pub steps: Vec<StepResiduals>,
    pub outcome: TranscriptOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TranscriptOutcome {
    Completed,
    InvariantSubspace { depth: usize, codimension: usize, residual: f64, verified: bool },
}

impl ChainTranscript {
    pub fn new(op: &OperatorModel, run: &ChainRun, requested_depth: usize, start: ChainStart, tol: ChainTolerances) -> Self {
        let outcome = match &run.outcome {
            ChainOutcome::Completed => TranscriptOutcome::Completed,
            ChainOutcome::InvariantSubspace { witness } => TranscriptOutcome::InvariantSubspace {
                depth: witness.depth,
                codimension: witness.codimension,
                residual: witness.residual,
                verified: witness.verified(),
            },
        };
        Self {
            family: op.family(),
            dim: op.dim(),
            requested_depth,
            reached_depth: run.state.depth(),
            start,
            tolerances: tol,
            steps: run.steps.clone(),
            outcome,
        }
    }
}

/// Growth of the defect of `Z = span{z_2, z_4, ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    /// `k = 1 ..= depth/2`.
    pub k: Vec<usize>,
    /// Numerical rank of `{v_1 .. v_k}` where `T z_{2k} = u_k + v_k` along
    /// `Z ⊕ Z^perp`.
    pub ranks: Vec<usize>,
    /// `|f_{2k-1}(T z_{2k})| / (||f_{2k-1}|| ||T z_{2k}||)`, must be nonzero.
    pub leading: Vec<f64>,
    /// Largest `|f_{2i-1}(T z_{2k})|` relative value over `i < k`.
    pub cross: f64,
    #[serde(with = "hex_cmatrix")]
    pub z_basis: CMatrix,
}

impl GrowthReport {
    pub fn strictly_increasing(&self) -> bool {
        self.ranks.windows(2).all(|w| w[1] > w[0]) && self.ranks.first().is_none_or(|&r| r >= 1)
    }
}

/// Rank threshold for the defect vectors, relative to the largest singular
/// value of their normalized stack.
pub const GROWTH_RANK_TOL: f64 = 1e-10;

pub fn growth_report(op: &OperatorModel, state: &ChainState) -> GrowthReport {
    let half = state.depth() / 2;
    let evens: Vec<CVector> = (1..=half).map(|k| state.z[2 * k - 1].clone()).collect();
    let z_basis = if evens.is_empty() {
        CMatrix::zeros(op.dim(), 0)
    } else {
        linalg::pivoted_orthonormal_basis(&linalg::columns(&evens))
    };
    let mut ranks = Vec::with_capacity(half);
    let mut leading = Vec::with_capacity(half);
    let mut cross: f64 = 0.0;
    let mut defects: Vec<CVector> = Vec::with_capacity(half);
    for k in 1..=half {
        let tz = op.apply(&state.z[2 * k - 1]);
        defects.push(linalg::project_out(&z_basis, &tz));
        let normalized = linalg::normalize_columns(&linalg::columns(&defects));
        let sv = linalg::singular_values(&normalized);
        let smax = sv.first().copied().unwrap_or(0.0);
        ranks.push(sv.iter().filter(|&&s| s > GROWTH_RANK_TOL * smax && s > 0.0).count());
        leading.push(relative_pair(&state.f[2 * k - 2], &tz));
        for i in 1..k {
            cross = cross.max(relative_pair(&state.f[2 * i - 2], &tz));
        }
    }
    GrowthReport {
        k: (1..=half).collect(),
        ranks,
        leading,
        cross,
        z_basis,
    }
}

/// Chain of length `depth` and its growth report; `ChainTerminated` if an
/// invariant subspace turns up first.
pub fn build_non_ai_halfspace_witness(
    op: &OperatorModel,
    depth: usize,
    start: ChainStart,
    tol: &ChainTolerances,
) -> Result<(ChainRun, GrowthReport)> {
    let run = run_chain(op, depth, start, tol)?;
    if let ChainOutcome::InvariantSubspace { witness } = &run.outcome {
        return Err(AihsError::ChainTerminated { depth: witness.depth });
    }
    let report = growth_report(op, &run.state);
    Ok((run, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodimBranch {
    Chain,
    /// The chain stopped at an invariant subspace and the construction
    /// continued inside it.
    Invariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodimSubspace {
    #[serde(with = "hex_cmatrix")]
    pub basis: CMatrix,
    #[serde(with = "hex_cvector")]
    pub e_y: CVector,
    /// Largest `dist(T y, Y + span{e_Y}) / ||T y||`.
    pub residual: f64,
    pub codimension: usize,
    pub branch: CodimBranch,
}

/// `Y` of codimension `n` with `T Y ⊆ Y + span{e_Y}`.
pub fn codim_n_subspace(op: &OperatorModel, n: usize, start: ChainStart, tol: &ChainTolerances) -> Result<CodimSubspace> {
    if n == 0 || n >= op.dim() {
        return Err(AihsError::InvalidArgument(format!(
            "codimension must lie in 1..{}, got {n}",
            op.dim()
        )));
    }
    let (basis, e_y, branch) = codim_inner(op, n, start, tol)?;
    let residual = if basis.ncols() == 0 {
        0.0
    } else {
        let target = linalg::join(&basis, &CMatrix::from_columns(std::slice::from_ref(&e_y)), 1e-14);
        let spread = linalg::spread_basis(&basis, op.matrix());
        linalg::containment_residual(&target, &(op.matrix() * spread))
    };
    Ok(CodimSubspace {
        codimension: op.dim() - basis.ncols(),
        basis,
        e_y,
        residual,
        branch,
    })
}

fn codim_inner(op: &OperatorModel, n: usize, start: ChainStart, tol: &ChainTolerances) -> Result<(CMatrix, CVector, CodimBranch)> {
    let run = run_chain(op, n, start, tol)?;
    match run.outcome {
        ChainOutcome::Completed => {
            let e_y = run.state.z.last().expect("nonempty").clone();
            Ok((run.state.current_basis().clone(), e_y, CodimBranch::Chain))
        }
        ChainOutcome::InvariantSubspace { witness } => {
            let q = witness.basis;
            let remaining = n - witness.codimension;
            if remaining == 0 || q.ncols() <= 1 {
                // Y_d itself already has the requested codimension
                let e_y = run.state.z.last().expect("nonempty").clone();
                return Ok((q, e_y, CodimBranch::Invariant));
            }
            // continue inside the invariant subspace with T restricted to it
            let restricted = OperatorModel::dense(q.adjoint() * op.matrix() * &q)?;
            let (inner, e_inner, _) = codim_inner(&restricted, remaining, ChainStart::Auto, tol)?;
            Ok((&q * inner, &q * e_inner, CodimBranch::Invariant))
        }
    }
}

/// One row of the dichotomy sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub seed: u64,
    pub dim: usize,
    pub depth: usize,
    pub branch: String,
    pub reached_depth: usize,
    pub worst_property_residual: f64,
    pub witness_residual: Option<f64>,
    pub final_rank: Option<usize>,
    pub ranks_increasing: Option<bool>,
    pub consistent: bool,
}

/// Random dense operators of size `dim` with seeds `first_seed ..`; each
/// instance lands in the invariant branch (verified witness) or the growth
/// branch (strictly increasing ranks).
pub fn dichotomy_sweep(first_seed: u64, count: usize, dim: usize, depth: usize, tol: &ChainTolerances) -> Vec<SweepRecord> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let seed = first_seed + i;
            let op = OperatorModel::dense(random_matrix(dim, seed, 1.0));
            let result = op.and_then(|op| run_chain(&op, depth, ChainStart::Auto, tol).map(|run| (op, run)));
            match result {
                Ok((op, run)) => {
                    let worst = run.steps.iter().map(StepResiduals::worst).fold(0.0, f64::max);
                    match &run.outcome {
                        ChainOutcome::InvariantSubspace { witness } => SweepRecord {
                            seed,
                            dim,
                            depth,
                            branch: "invariant".into(),
                            reached_depth: run.state.depth(),
                            worst_property_residual: worst,
                            witness_residual: Some(witness.residual),
                            final_rank: None,
                            ranks_increasing: None,
                            consistent: witness.verified(),
                        },
                        ChainOutcome::Completed => {
                            let report = growth_report(&op, &run.state);
                            let inc = report.strictly_increasing();
                            SweepRecord {
                                seed,
                                dim,
                                depth,
                                branch: "growth".into(),
                                reached_depth: run.state.depth(),
                                worst_property_residual: worst,
                                witness_residual: None,
                                final_rank: report.ranks.last().copied(),
                                ranks_increasing: Some(inc),
                                consistent: inc,
                            }
                        }
                    }
                }
                Err(e) => {
                    log::warn!("sweep instance {seed} failed: {e}");
                    SweepRecord {
                        seed,
                        dim,
                        depth,
                        branch: "error".into(),
                        reached_depth: 0,
                        worst_property_residual: f64::NAN,
                        witness_residual: None,
                        final_rank: None,
                        ranks_increasing: None,
                        consistent: false,
                    }
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{basis_vector, real, C64};

    fn c(x: f64) -> C64 {
        real(x)
    }

    #[test]
    fn two_by_two_nilpotent_by_hand() {
        // T = [[0,1],[0,0]]: T e_2 = e_1
        let m = CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]);
        let op = OperatorModel::dense(m).unwrap();
        let run = run_chain(&op, 2, ChainStart::Basis { index: 1 }, &ChainTolerances::default()).unwrap();
        assert_eq!(run.outcome, ChainOutcome::Completed);
        let s = &run.state;
        assert_eq!(s.f[1], CVector::from_vec(vec![c(0.0), c(1.0)]));
        assert_eq!(s.z[1], basis_vector(2, 1));
        assert_eq!(s.y_bases[1].ncols(), 0);
        assert_eq!(s.y_bases[0].ncols(), 1);
        assert!((s.y_bases[0][(1, 0)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_terminates_at_depth_one() {
        let op = OperatorModel::dense(CMatrix::identity(8, 8)).unwrap();
        let run = run_chain(&op, 5, ChainStart::Auto, &ChainTolerances::default()).unwrap();
        match run.outcome {
            ChainOutcome::InvariantSubspace { witness } => {
                assert_eq!(witness.depth, 1);
                assert_eq!(witness.codimension, 1);
                assert!(witness.verified());
            }
            other => panic!("expected termination, got {other:?}"),
        }
        let err = build_non_ai_halfspace_witness(&op, 4, ChainStart::Auto, &ChainTolerances::default()).unwrap_err();
        assert!(matches!(err, AihsError::ChainTerminated { depth: 1 }));
    }

    #[test]
    fn random_dense_chain_holds_properties() {
        let op = OperatorModel::dense(random_matrix(32, 11, 1.0)).unwrap();
        let run = run_chain(&op, 11, ChainStart::Auto, &ChainTolerances::default()).unwrap();
        assert_eq!(run.outcome, ChainOutcome::Completed);
        assert_eq!(run.steps.len(), 10);
        for s in &run.steps {
            assert!(s.passed(1e-8), "{s:?}");
        }
    }

    #[test]
    fn shift_growth_report() {
        let op = OperatorModel::forward_shift(vec![c(1.0); 63]).unwrap();
        let (_, report) = build_non_ai_halfspace_witness(&op, 12, ChainStart::Auto, &ChainTolerances::default()).unwrap();
        assert_eq!(report.ranks, vec![1, 2, 3, 4, 5, 6]);
        assert!(report.leading.iter().all(|&v| v > 0.5));
        assert!(report.cross < 1e-10);
        let (_, short) = build_non_ai_halfspace_witness(&op, 2, ChainStart::Auto, &ChainTolerances::default()).unwrap();
        assert_eq!(short.ranks, vec![1]);
    }

    #[test]
    fn codim_subspaces() {
        let tol = ChainTolerances::default();
        let shift = OperatorModel::forward_shift(vec![c(1.0); 31]).unwrap();
        let y = codim_n_subspace(&shift, 3, ChainStart::Auto, &tol).unwrap();
        assert_eq!(y.codimension, 3);
        assert_eq!(y.branch, CodimBranch::Chain);
        assert!(y.residual < 1e-9);

        let id = OperatorModel::dense(CMatrix::identity(6, 6)).unwrap();
        let y = codim_n_subspace(&id, 2, ChainStart::Auto, &tol).unwrap();
        assert_eq!((y.codimension, y.branch), (2, CodimBranch::Invariant));
        assert!(y.residual < 1e-15);

        let dense = OperatorModel::dense(random_matrix(10, 4, 1.0)).unwrap();
        let y = codim_n_subspace(&dense, 1, ChainStart::Auto, &tol).unwrap();
        assert_eq!(y.codimension, 1);
        assert!(y.residual < 1e-14);
    }

    #[test]
    fn state_round_trips_through_json() {
        let op = OperatorModel::dense(random_matrix(6, 2, 1.0)).unwrap();
        let run = run_chain(&op, 3, ChainStart::Auto, &ChainTolerances::default()).unwrap();
        let text = serde_json::to_string(&run.state).unwrap();
        let back: ChainState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, run.state);
    }
}
