//! Dense complex linear algebra helpers shared by the constructions.
//!
//! Everything works on column-major `nalgebra` matrices of `Complex64`.
//! Subspaces are passed around as matrices whose columns form an
//! orthonormal basis unless a function says otherwise.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

#[inline]
pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Euclidean norm scaled by the largest modulus, so that entries beyond
/// `1e154` or below `1e-154` neither overflow nor underflow when squared.
pub fn norm<'a, I>(entries: I) -> f64
where
    I: IntoIterator<Item = &'a C64>,
{
    // single pass with a running scale, as in the reference BLAS nrm2
    let mut scale = 0.0f64;
    let mut ssq = 1.0f64;
    for z in entries {
        for part in [z.re, z.im] {
            if part != 0.0 {
                let a = part.abs();
                if !a.is_finite() {
                    return f64::INFINITY;
                }
                if scale < a {
                    ssq = 1.0 + ssq * (scale / a) * (scale / a);
                    scale = a;
                } else {
                    ssq += (a / scale) * (a / scale);
                }
            }
        }
    }
    scale * ssq.sqrt()
}

/// Unit basis vector `e_index` (0-based) of length `dim`.
pub fn basis_vector(dim: usize, index: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[index] = real(1.0);
    v
}

/// Bilinear pairing `f(x) = sum_j f_j x_j` between dual coordinates and vectors.
pub fn pair(f: &CVector, x: &CVector) -> C64 {
    f.iter().zip(x.iter()).map(|(a, b)| a * b).sum()
}

pub fn columns(vectors: &[CVector]) -> CMatrix {
    let rows = vectors.first().map_or(0, |v| v.len());
    CMatrix::from_fn(rows, vectors.len(), |i, j| vectors[j][i])
}

/// Columns scaled to unit Euclidean norm. Zero columns stay zero.
pub fn normalize_columns(m: &CMatrix) -> CMatrix {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let n = norm(col.iter());
        if n > 0.0 {
            col.apply(|z| *z /= n);
        }
    }
    out
}

/// Rows scaled to unit Euclidean norm. Zero rows stay zero.
pub fn normalize_rows(m: &CMatrix) -> CMatrix {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let n = norm(row.iter());
        if n > 0.0 {
            row.apply(|z| *z /= n);
        }
    }
    out
}

/// Iteration cap for the SVD sweeps; the unguarded solver can spin forever
/// on subnormal or non-finite input.
const SVD_MAX_ITERATIONS: usize = 20_000;

/// Thin SVD with subnormal entries flushed to zero and a bounded number of
/// sweeps. `None` on non-finite input or non-convergence.
pub fn svd(m: &CMatrix, compute_u: bool, compute_v: bool) -> Option<nalgebra::SVD<C64, nalgebra::Dyn, nalgebra::Dyn>> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return None;
    }
    let flushed = m.map(|z| {
        let re = if z.re.is_normal() { z.re } else { 0.0 };
        let im = if z.im.is_normal() { z.im } else { 0.0 };
        C64::new(re, im)
    });
    nalgebra::SVD::try_new(flushed, compute_u, compute_v, f64::EPSILON * 5.0, SVD_MAX_ITERATIONS)
}

/// Singular values in descending order; NaN if the decomposition fails.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    match svd(m, false, false) {
        Some(d) => {
            let mut s: Vec<f64> = d.singular_values.iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            s
        }
        None => vec![f64::NAN; m.nrows().min(m.ncols())],
    }
}

/// Smallest singular value of the column set, counting missing ones as zero
/// when there are more columns than rows.
pub fn sigma_min(m: &CMatrix) -> f64 {
    if m.ncols() == 0 {
        return 0.0;
    }
    if m.ncols() > m.nrows() {
        return 0.0;
    }
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Smallest singular value after scaling every column to unit norm.
pub fn sigma_min_normalized_columns(m: &CMatrix) -> f64 {
    sigma_min(&normalize_columns(m))
}

/// Smallest singular value after scaling every row to unit norm.
pub fn sigma_min_normalized_rows(m: &CMatrix) -> f64 {
    sigma_min(&normalize_rows(m).transpose())
}

/// Number of singular values strictly above `threshold`.
pub fn numerical_rank(m: &CMatrix, threshold: f64) -> usize {
    singular_values(m).iter().filter(|&&s| s > threshold).count()
}

/// Orthonormal basis of the column space, keeping singular directions with
/// `sigma > rel_tol * reference`. `reference` defaults to the largest
/// singular value.
pub fn range_basis(m: &CMatrix, rel_tol: f64, reference: Option<f64>) -> CMatrix {
    let rows = m.nrows();
    if m.ncols() == 0 || rows == 0 {
        return CMatrix::zeros(rows, 0);
    }
    let Some(svd) = svd(m, true, false) else {
        return CMatrix::zeros(rows, 0);
    };
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let smax = order.first().map_or(0.0, |&i| svd.singular_values[i]);
    let reference = reference.unwrap_or(smax);
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&i| svd.singular_values[i] > rel_tol * reference && svd.singular_values[i] > 0.0)
        .collect();
    CMatrix::from_fn(rows, keep.len(), |i, j| u[(i, keep[j])])
}

/// Orthonormal basis via column-pivoted Householder QR of the column-normalized
/// input. The returned matrix has as many columns as the input.
pub fn pivoted_orthonormal_basis(m: &CMatrix) -> CMatrix {
    let k = m.ncols();
    if k == 0 {
        return CMatrix::zeros(m.nrows(), 0);
    }
    let q = normalize_columns(m).col_piv_qr().q();
    q.columns(0, k.min(q.ncols())).into_owned()
}

/// Unitary change of an orthonormal basis `q` that spreads `a q` evenly:
/// right singular vectors of `a q` mixed by the unitary DFT, so every new
/// column `y` has `||a y||^2` equal to the mean squared singular value.
/// Columns with tiny images would otherwise turn rounding in `q` into large
/// relative errors of `a y`.
pub fn spread_basis(q: &CMatrix, a: &CMatrix) -> CMatrix {
    let k = q.ncols();
    if k <= 1 {
        return q.clone();
    }
    let Some(d) = svd(&(a * q), false, true) else {
        return q.clone();
    };
    let v_t = d.v_t.expect("requested V^H");
    if v_t.nrows() < k {
        return q.clone();
    }
    let scale = 1.0 / (k as f64).sqrt();
    let dft = CMatrix::from_fn(k, k, |i, j| {
        C64::from_polar(scale, -2.0 * std::f64::consts::PI * (i * j) as f64 / k as f64)
    });
    q * v_t.adjoint() * dft
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// (orthonormal or at least full-rank) columns of `basis`.
pub fn orthogonal_complement(basis: &CMatrix) -> CMatrix {
    let n = basis.nrows();
    let k = basis.ncols();
    if k == 0 {
        return CMatrix::identity(n, n);
    }
    if k >= n {
        return CMatrix::zeros(n, 0);
    }
    let mut stacked = CMatrix::zeros(n, k + n);
    stacked.columns_mut(0, k).copy_from(basis);
    stacked.columns_mut(k, n).fill_with_identity();
    let q = stacked.qr().q();
    q.columns(k, n - k).into_owned()
}

/// Orthonormal basis of the span of two column sets.
pub fn join(a: &CMatrix, b: &CMatrix, rel_tol: f64) -> CMatrix {
    let mut m = CMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    m.columns_mut(0, a.ncols()).copy_from(a);
    m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    range_basis(&normalize_columns(&m), rel_tol, None)
}

/// `v - Q Q^H v`, with one reorthogonalization pass.
pub fn project_out(q: &CMatrix, v: &CVector) -> CVector {
    if q.ncols() == 0 {
        return v.clone();
    }
    let mut r = v - q * (q.adjoint() * v);
    r -= q * (q.adjoint() * &r);
    r
}

/// `Q Q^H v`.
pub fn project_onto(q: &CMatrix, v: &CVector) -> CVector {
    v - project_out(q, v)
}

/// Relative distance `dist(v, span Q) / ||v||`, zero for the zero vector.
pub fn relative_distance(q: &CMatrix, v: &CVector) -> f64 {
    let n = norm(v);
    if n == 0.0 {
        return 0.0;
    }
    norm(&project_out(q, v)) / n
}

/// Largest relative distance of the columns of `a` from the span of `q`.
pub fn containment_residual(q: &CMatrix, a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|c| relative_distance(q, &c.into_owned()))
        .fold(0.0, f64::max)
}

/// Spectral norm: exact below a few hundred columns, power iteration on
/// `M^H M` from a fixed start above.
pub fn operator_norm(m: &CMatrix) -> f64 {
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 {
        return 0.0;
    }
    if n <= 384 {
        return singular_values(m).first().copied().unwrap_or(0.0);
    }
    power_norm(m)
}

fn power_norm(m: &CMatrix) -> f64 {
    let n = m.ncols();
    let mut v = CVector::from_fn(n, |i, _| real(1.0 + (i as f64 * 0.618_033_988_75).fract()));
    let vn = v.norm();
    v.apply(|z| *z /= vn);
    let mut estimate = 0.0;
    for _ in 0..60 {
        let w = m * &v;
        let z = m.adjoint() * &w;
        let zn = z.norm();
        if zn == 0.0 {
            return w.norm();
        }
        let next = w.norm();
        v = z.map(|x| x / zn);
        if (next - estimate).abs() <= 1e-12 * next {
            estimate = next;
            break;
        }
        estimate = next;
    }
    (m * &v).norm().max(estimate)
}

/// Lower/upper triangular structure of a square matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Triangular {
    Lower,
    Upper,
    Diagonal,
    None,
}

pub fn triangular_structure(m: &CMatrix) -> Triangular {
    let n = m.nrows();
    let mut upper_empty = true;
    let mut lower_empty = true;
    for j in 0..m.ncols() {
        for i in 0..n {
            if m[(i, j)] != C64::new(0.0, 0.0) {
                if i < j {
                    upper_empty = false;
                } else if i > j {
                    lower_empty = false;
                }
            }
        }
    }
    match (upper_empty, lower_empty) {
        (true, true) => Triangular::Diagonal,
        (true, false) => Triangular::Lower,
        (false, true) => Triangular::Upper,
        (false, false) => Triangular::None,
    }
}

/// Solve `A x = b` for triangular `A` by substitution. Returns `None` on a
/// zero pivot.
pub fn triangular_solve(a: &CMatrix, b: &CVector, lower: bool) -> Option<CVector> {
    let n = a.nrows();
    let mut x = CVector::zeros(n);
    let order: Box<dyn Iterator<Item = usize>> = if lower {
        Box::new(0..n)
    } else {
        Box::new((0..n).rev())
    };
    for i in order {
        let mut acc = b[i];
        let range = if lower { 0..i } else { (i + 1)..n };
        for j in range {
            let aij = a[(i, j)];
            if aij != C64::new(0.0, 0.0) {
                acc -= aij * x[j];
            }
        }
        let d = a[(i, i)];
        if d == C64::new(0.0, 0.0) {
            return None;
        }
        x[i] = acc / d;
    }
    Some(x)
}
