//! Finite-rank perturbations, defect spaces and the adjoint half-space at
//! truncation scale.
//!
//! Annihilators are orthogonal complements under the Euclidean inner
//! product, so `Y^perp` stands in for the functionals vanishing on `Y`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::hex_cmatrix;
use crate::error::{AihsError, Result, Stage, StageExt};
use crate::linalg::{self, CMatrix, C64};
use crate::operator::{random_matrix, OperatorModel};

pub const DEFAULT_TOL_RANK: f64 = 1e-10;
pub const DEFAULT_INVARIANCE_TOL: f64 = 1e-9;

/// Smallest singular value of `[Y | F]` (both orthonormal) below which the
/// projection onto `F` along `Y` is refused.
pub const ANGLE_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DefectSpace {
    /// Orthonormal, orthogonal to `Y`.
    pub basis: CMatrix,
    /// Singular values of `(I - P_Y) T Q_Y`, descending.
    pub singular_values: Vec<f64>,
    /// The rank threshold actually applied.
    pub threshold: f64,
}

impl DefectSpace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Range of `(I - P_Y) T` restricted to `Y`, at numerical rank
/// `sigma > tol_rank * max(||T||, ||T Q_Y||)`.
pub fn minimal_defect_space(op: &OperatorModel, basis_y: &CMatrix, tol_rank: f64) -> DefectSpace {
    let n = op.dim();
    if basis_y.ncols() == 0 {
        return DefectSpace {
            basis: CMatrix::zeros(n, 0),
            singular_values: Vec::new(),
            threshold: 0.0,
        };
    }
    let image = op.matrix() * basis_y;
    let projected = project_out_columns(basis_y, &image);
    let reference = op.norm().max(linalg::operator_norm(&image));
    let threshold = tol_rank * reference;
    DefectSpace {
        basis: linalg::range_basis(&projected, tol_rank, Some(reference)),
        singular_values: linalg::singular_values(&projected),
        threshold,
    }
}

/// `numrank([T Y | Y]) - numrank(Y)`, the defect counted without
/// projections.
pub fn brute_force_defect(op: &OperatorModel, basis_y: &CMatrix, tol_rank: f64) -> usize {
    if basis_y.ncols() == 0 {
        return 0;
    }
    let image = op.matrix() * basis_y;
    let stacked = hstack(&[&image, basis_y]);
    let threshold = tol_rank * op.norm().max(1.0);
    let full = linalg::numerical_rank(&stacked, threshold);
    full.saturating_sub(linalg::numerical_rank(basis_y, threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationWitness {
    #[serde(with = "hex_cmatrix")]
    pub k: CMatrix,
    pub rank_k: usize,
    pub dim_f: usize,
    /// Largest `dist((T+K)y, Y) / ||(T+K)y||` over a spread basis of `Y`.
    pub invariance_residual: f64,
    /// Smallest singular value of `[Y | F]`.
    pub angle_sigma_min: f64,
}

impl PerturbationWitness {
    pub fn passed(&self, tol: f64) -> bool {
        self.rank_k <= self.dim_f && self.invariance_residual < tol
    }
}

/// `K = -P T`, where `P` projects onto `F` along `Y` on `Y + F` and vanishes
/// on the orthogonal complement of `Y + F`.
pub fn build_perturbation(
    op: &OperatorModel,
    basis_y: &CMatrix,
    basis_f: &CMatrix,
    tol_rank: f64,
) -> Result<PerturbationWitness> {
    let n = op.dim();
    let (a, b) = (basis_y.ncols(), basis_f.ncols());
    let angle_sigma_min = if b == 0 {
        1.0
    } else {
        linalg::sigma_min(&hstack(&[basis_y, basis_f]))
    };
    let k = if b == 0 {
        CMatrix::zeros(n, n)
    } else {
        if !(angle_sigma_min > ANGLE_THRESHOLD) {
            return Err(AihsError::DegenerateAngle { sigma_min: angle_sigma_min }).stage(Stage::Duality);
        }
        // B^+ = R^{-1} Q^H for B = [Y | F] of full column rank
        let qr = hstack(&[basis_y, basis_f]).qr();
        let (q, r) = (qr.q(), qr.r());
        let r_inv = r.try_inverse().ok_or(AihsError::DegenerateAngle { sigma_min: angle_sigma_min })?;
        let pinv = r_inv * q.adjoint();
        let coords_f = pinv.rows(a, b).into_owned();
        -(basis_f * coords_f * op.matrix())
    };
    let sv = linalg::singular_values(&k);
    let smax = sv.first().copied().unwrap_or(0.0);
    let rank_k = sv.iter().filter(|&&s| s > tol_rank * smax.max(f64::MIN_POSITIVE)).count();
    let perturbed = op.matrix() + &k;
    let spread = linalg::spread_basis(basis_y, &perturbed);
    let invariance_residual = linalg::containment_residual(basis_y, &(&perturbed * spread));
    Ok(PerturbationWitness {
        k,
        rank_k,
        dim_f: b,
        invariance_residual,
        angle_sigma_min,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverseCheck {
    /// Largest relative distance of `T y` from `Y + range(K)`.
    pub residual: f64,
    /// `rank([T Y | Y | range K]) - rank([Y | range K])`; zero when contained.
    pub rank_excess: usize,
    pub range_dim: usize,
}

/// Given `(T+K) Y ⊆ Y`, checks `T Y ⊆ Y + K(Y)`, the reverse implication.
pub fn converse_containment(op: &OperatorModel, basis_y: &CMatrix, k: &CMatrix, tol_rank: f64) -> ConverseCheck {
    let range_k = linalg::range_basis(&(k * basis_y), tol_rank, Some(op.norm().max(f64::MIN_POSITIVE)));
    let target = linalg::join(basis_y, &range_k, 1e-14);
    let spread = linalg::spread_basis(basis_y, op.matrix());
    let image = op.matrix() * &spread;
    let residual = linalg::containment_residual(&target, &image);
    let threshold = tol_rank * op.norm().max(1.0);
    let base = hstack(&[basis_y, &range_k]);
    let full = hstack(&[&image, basis_y, &range_k]);
    let rank_excess = linalg::numerical_rank(&full, threshold).saturating_sub(linalg::numerical_rank(&base, threshold));
    ConverseCheck {
        residual,
        rank_excess,
        range_dim: range_k.ncols(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointHalfspace {
    /// Orthonormal basis of `(Y + F)^perp`.
    pub z_basis: CMatrix,
    /// Largest `dist(T^* z, Y^perp) / ||T^* z||` over a spread basis of `Z`.
    pub residual: f64,
    pub dim: usize,
    pub dim_y: usize,
    pub dim_f: usize,
    pub dim_sum: usize,
    pub dim_z: usize,
    pub dim_y_perp: usize,
    /// `1 / sigma_min([Y | F])`; bounds how much the `Y`/`F` split amplifies
    /// the almost-invariance defect of `T` on `Y`.
    pub kappa: f64,
}

impl AdjointHalfspace {
    /// `dim Z = N - dim(Y+F)`, `dim Y^perp = N - dim Y` and
    /// `dim Y^perp = dim Z + dim F`.
    pub fn dimensions_consistent(&self) -> bool {
        self.dim_z + self.dim_sum == self.dim
            && self.dim_y_perp + self.dim_y == self.dim
            && self.dim_y_perp == self.dim_z + self.dim_f
    }
}

/// `Z = (Y + F)^perp`, and the residual of `T^* Z ⊆ Y^perp`.
pub fn adjoint_halfspace(op: &OperatorModel, basis_y: &CMatrix, basis_f: &CMatrix) -> AdjointHalfspace {
    let n = op.dim();
    let sum = linalg::join(basis_y, basis_f, 1e-14);
    let z_basis = linalg::orthogonal_complement(&sum);
    let y_perp = linalg::orthogonal_complement(basis_y);
    let adjoint = op.matrix().adjoint();
    let residual = if z_basis.ncols() == 0 || basis_y.ncols() == 0 {
        0.0
    } else {
        let spread = linalg::spread_basis(&z_basis, &adjoint);
        let image = &adjoint * spread;
        // dist(v, Y^perp) = ||P_Y v||
        image
            .column_iter()
            .map(|c| {
                let v = c.into_owned();
                let nv = linalg::norm(&v);
                if nv == 0.0 {
                    0.0
                } else {
                    linalg::norm(&linalg::project_onto(basis_y, &v)) / nv
                }
            })
            .fold(0.0, f64::max)
    };
    let sigma = if basis_f.ncols() == 0 || basis_y.ncols() == 0 {
        1.0
    } else {
        linalg::sigma_min(&hstack(&[basis_y, basis_f]))
    };
    AdjointHalfspace {
        dim: n,
        dim_y: basis_y.ncols(),
        dim_f: basis_f.ncols(),
        dim_sum: sum.ncols(),
        dim_z: z_basis.ncols(),
        dim_y_perp: y_perp.ncols(),
        kappa: 1.0 / sigma,
        residual,
        z_basis,
    }
}

/// One row of the equivalence round trip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundTripRecord {
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "dimY")]
    pub dim_y: usize,
    #[serde(rename = "dimF")]
    pub dim_f: usize,
    #[serde(rename = "rankK")]
    pub rank_k: usize,
    pub residual_fwd: f64,
    pub residual_bwd: f64,
}

/// Random orthonormal `n x m` frame from a seeded stream.
pub fn random_orthonormal(n: usize, m: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = CMatrix::zeros(n, m);
    for j in 0..m {
        for i in 0..n {
            raw[(i, j)] = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
    }
    linalg::pivoted_orthonormal_basis(&raw)
}

/// Extended record with the brute-force cross-checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTrip {
    pub record: RoundTripRecord,
    pub brute_force_dim_f: usize,
    pub converse_rank_excess: usize,
}

/// Random dense `T` and random `Y` of dimension at most `N/2`, both drawn
/// from `seed`; runs defect space, perturbation and converse.
pub fn random_round_trip(seed: u64, max_dim: usize, tol_rank: f64) -> Result<RoundTrip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..=max_dim.max(4));
    let dim_y = rng.random_range(1..=n / 2);
    let op = OperatorModel::dense(random_matrix(n, rng.random(), 1.0))?;
    let y = random_orthonormal(n, dim_y, rng.random());
    let f = minimal_defect_space(&op, &y, tol_rank);
    let witness = build_perturbation(&op, &y, &f.basis, tol_rank)?;
    let converse = converse_containment(&op, &y, &witness.k, tol_rank);
    Ok(RoundTrip {
        record: RoundTripRecord {
            seed,
            n,
            dim_y,
            dim_f: f.dim(),
            rank_k: witness.rank_k,
            residual_fwd: witness.invariance_residual,
            residual_bwd: converse.residual,
        },
        brute_force_dim_f: brute_force_defect(&op, &y, tol_rank),
        converse_rank_excess: converse.rank_excess,
    })
}

/// `count` round trips with seeds `first_seed ..`, in parallel, in seed order.
pub fn round_trip_sweep(first_seed: u64, count: usize, max_dim: usize, tol_rank: f64) -> Result<Vec<RoundTrip>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| random_round_trip(first_seed + i, max_dim, tol_rank))
        .collect()
}

pub fn write_round_trip_csv<W: std::io::Write>(records: &[RoundTripRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn hstack(blocks: &[&CMatrix]) -> CMatrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.columns_mut(at, b.ncols()).copy_from(*b);
        at += b.ncols();
    }
    out
}

fn project_out_columns(q: &CMatrix, a: &CMatrix) -> CMatrix {
    let mut out = a.clone();
    for j in 0..a.ncols() {
        out.set_column(j, &linalg::project_out(q, &a.column(j).into_owned()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{basis_vector, real};

    fn diag(values: &[f64]) -> OperatorModel {
        let v: Vec<C64> = values.iter().map(|&x| real(x)).collect();
        OperatorModel::dense(CMatrix::from_diagonal(&linalg::CVector::from_vec(v))).unwrap()
    }

    fn coordinate_span(n: usize, idx: &[usize]) -> CMatrix {
        linalg::columns(&idx.iter().map(|&i| basis_vector(n, i)).collect::<Vec<_>>())
    }

    #[test]
    fn invariant_subspace_has_no_defect() {
        let op = OperatorModel::dense(CMatrix::identity(6, 6)).unwrap();
        let y = random_orthonormal(6, 3, 5);
        assert_eq!(minimal_defect_space(&op, &y, DEFAULT_TOL_RANK).dim(), 0);
        let w = build_perturbation(&op, &y, &CMatrix::zeros(6, 0), DEFAULT_TOL_RANK).unwrap();
        assert_eq!(w.rank_k, 0);
        assert!(w.invariance_residual < 1e-14);
    }

    #[test]
    fn random_subspace_has_full_defect() {
        let op = OperatorModel::dense(random_matrix(20, 3, 1.0)).unwrap();
        let y = random_orthonormal(20, 4, 9);
        let f = minimal_defect_space(&op, &y, DEFAULT_TOL_RANK);
        assert_eq!(f.dim(), 4);
        assert_eq!(brute_force_defect(&op, &y, DEFAULT_TOL_RANK), 4);
        // F is orthogonal to Y
        assert!((y.adjoint() * &f.basis).norm() < 1e-13);
        let w = build_perturbation(&op, &y, &f.basis, DEFAULT_TOL_RANK).unwrap();
        assert_eq!(w.rank_k, 4);
        assert!(w.invariance_residual < 1e-12, "{}", w.invariance_residual);
        let c = converse_containment(&op, &y, &w.k, DEFAULT_TOL_RANK);
        assert!(c.residual < 1e-12 && c.rank_excess == 0);
    }

    #[test]
    fn too_small_defect_space_fails() {
        let op = OperatorModel::dense(random_matrix(12, 8, 1.0)).unwrap();
        let y = random_orthonormal(12, 3, 2);
        let f = minimal_defect_space(&op, &y, DEFAULT_TOL_RANK);
        let smaller = f.basis.columns(0, 2).into_owned();
        let w = build_perturbation(&op, &y, &smaller, DEFAULT_TOL_RANK).unwrap();
        assert!(w.invariance_residual > 1e-3);
    }

    #[test]
    fn degenerate_angle_is_refused() {
        let op = OperatorModel::dense(random_matrix(5, 1, 1.0)).unwrap();
        let y = coordinate_span(5, &[0, 1]);
        let f = coordinate_span(5, &[1]);
        let err = build_perturbation(&op, &y, &f, DEFAULT_TOL_RANK).unwrap_err();
        assert!(matches!(err.root(), AihsError::DegenerateAngle { .. }));
    }

    #[test]
    fn diagonal_adjoint_case() {
        let op = diag(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = coordinate_span(5, &[0, 1]);
        let adj = adjoint_halfspace(&op, &y, &CMatrix::zeros(5, 0));
        assert_eq!(adj.dim_z, 3);
        assert!(adj.dimensions_consistent());
        assert_eq!(adj.residual, 0.0);
        // Z = span{e_3, e_4, e_5}
        let proj = adj.z_basis.adjoint() * coordinate_span(5, &[2, 3, 4]);
        assert!((proj.norm() - 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rank_one_defect_for_shift() {
        // Y = span{e_1, e_2} under the unweighted forward shift leaks into e_3
        let op = OperatorModel::forward_shift(vec![real(1.0); 5]).unwrap();
        let y = coordinate_span(6, &[0, 1]);
        let f = minimal_defect_space(&op, &y, DEFAULT_TOL_RANK);
        assert_eq!(f.dim(), 1);
        assert!((f.basis[(2, 0)].norm() - 1.0).abs() < 1e-14);
        let adj = adjoint_halfspace(&op, &y, &f.basis);
        assert!(adj.dimensions_consistent());
        assert!(adj.residual < 1e-15);
    }

    #[test]
    fn round_trip_csv_header() {
        let trips = round_trip_sweep(0, 3, 16, DEFAULT_TOL_RANK).unwrap();
        let mut buf = Vec::new();
        write_round_trip_csv(&trips.iter().map(|t| t.record).collect::<Vec<_>>(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("seed,N,dimY,dimF,rankK,residual_fwd,residual_bwd\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
