//! Finite truncations of the operator families: forward weighted shifts,
//! Donoghue-type backward shifts and arbitrary dense matrices, plus orbits
//! and their biorthogonal norms.
//!
//! Indices are 1-based in configs and docs (`e_1 .. e_N`) and 0-based in
//! code. A Donoghue operator written `D e_0 = 0, D e_i = w_i e_{i-1}` in the
//! classical 0-based form becomes `D e_1 = 0, D e_i = w_{i-1} e_{i-1}` here.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AihsError, Result};
use crate::linalg::{self, real, CMatrix, CVector, Triangular, C64};

/// Orbit vectors with norm below this multiple of `||e||` count as dead.
pub const ORBIT_DEATH_THRESHOLD: f64 = 1e-290;

/// Relative distance below which an orbit vector is treated as lying in the
/// span of the others.
pub const MINIMALITY_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorFamily {
    ForwardWeightedShift,
    DonoghueBackwardShift,
    DenseMatrix,
}

impl std::fmt::Display for OperatorFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OperatorFamily::ForwardWeightedShift => "forward-weighted-shift",
            OperatorFamily::DonoghueBackwardShift => "donoghue-backward-shift",
            OperatorFamily::DenseMatrix => "dense-matrix",
        })
    }
}

/// A real number or a `[re, im]` pair in a JSON config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexLiteral {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexLiteral {
    pub fn value(&self) -> C64 {
        match *self {
            ComplexLiteral::Real(x) => real(x),
            ComplexLiteral::Pair([re, im]) => C64::new(re, im),
        }
    }
}

/// Weight generators for the shift families. Weight `i` (1-based) is
/// produced for `i = 1 .. N-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum WeightSpec {
    Explicit { values: Vec<ComplexLiteral> },
    /// `w_i = scale * ratio^i`.
    Geometric {
        ratio: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `w_i = 1 / i!`.
    FactorialDecay,
    /// `w_i = value`.
    Constant { value: ComplexLiteral },
    /// `w_i = scale * i^(-power)`.
    Harmonic {
        #[serde(default = "one")]
        power: f64,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl WeightSpec {
    pub fn generate(&self, count: usize) -> Result<Vec<C64>> {
        let w = match self {
            WeightSpec::Explicit { values } => {
                if values.len() != count {
                    return Err(AihsError::InvalidOperator(format!(
                        "expected {count} explicit weights, got {}",
                        values.len()
                    )));
                }
                values.iter().map(ComplexLiteral::value).collect()
            }
            WeightSpec::Geometric { ratio, scale } => {
                (1..=count).map(|i| real(scale * ratio.powi(i as i32))).collect()
            }
            WeightSpec::FactorialDecay => {
                let mut acc = 1.0;
                (1..=count)
                    .map(|i| {
                        acc /= i as f64;
                        real(acc)
                    })
                    .collect()
            }
            WeightSpec::Constant { value } => vec![value.value(); count],
            WeightSpec::Harmonic { power, scale } => {
                (1..=count).map(|i| real(scale * (i as f64).powf(-power))).collect()
            }
        };
        Ok(w)
    }
}

/// Source of a dense matrix in a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MatrixSpec {
    /// Row-major entries.
    Explicit { rows: Vec<Vec<ComplexLiteral>> },
    Identity,
    Zero,
    Diagonal { values: Vec<ComplexLiteral> },
    /// Entries uniform in the square `[-1,1]^2`, scaled by `scale / sqrt(N)`.
    Random {
        seed: u64,
        #[serde(default = "one")]
        scale: f64,
    },
}

impl MatrixSpec {
    pub fn generate(&self, dim: usize) -> Result<CMatrix> {
        match self {
            MatrixSpec::Explicit { rows } => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(AihsError::InvalidOperator(format!(
                        "explicit matrix must be {dim}x{dim}"
                    )));
                }
                Ok(CMatrix::from_fn(dim, dim, |i, j| rows[i][j].value()))
            }
            MatrixSpec::Identity => Ok(CMatrix::identity(dim, dim)),
            MatrixSpec::Zero => Ok(CMatrix::zeros(dim, dim)),
            MatrixSpec::Diagonal { values } => {
                if values.len() != dim {
                    return Err(AihsError::InvalidOperator(format!(
                        "diagonal needs {dim} values, got {}",
                        values.len()
                    )));
                }
                let d: Vec<C64> = values.iter().map(ComplexLiteral::value).collect();
                Ok(CMatrix::from_diagonal(&CVector::from_vec(d)))
            }
            MatrixSpec::Random { seed, scale } => Ok(random_matrix(dim, *seed, *scale)),
        }
    }
}

/// Deterministic random complex matrix with entries in `[-1,1]^2 * scale/sqrt(n)`.
pub fn random_matrix(dim: usize, seed: u64, scale: f64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = scale / (dim as f64).sqrt();
    let mut m = CMatrix::zeros(dim, dim);
    // column-major fill keeps the stream layout independent of nalgebra internals
    for j in 0..dim {
        for i in 0..dim {
            let re: f64 = rng.random_range(-1.0..1.0);
            let im: f64 = rng.random_range(-1.0..1.0);
            m[(i, j)] = C64::new(re * s, im * s);
        }
    }
    m
}

/// JSON operator description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub family: OperatorFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixSpec>,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct OperatorModel {
    family: OperatorFamily,
    weights: Vec<C64>,
    matrix: CMatrix,
    structure: Triangular,
    eigenvalues: OnceLock<Vec<C64>>,
    norm: OnceLock<f64>,
}

/// Builds an operator from its JSON description.
pub fn build_operator(spec: &OperatorSpec) -> Result<OperatorModel> {
    if spec.dim < 2 {
        return Err(AihsError::InvalidOperator(format!(
            "dimension must be at least 2, got {}",
            spec.dim
        )));
    }
    match spec.family {
        OperatorFamily::ForwardWeightedShift | OperatorFamily::DonoghueBackwardShift => {
            let ws = spec.weights.as_ref().ok_or_else(|| {
                AihsError::InvalidOperator(format!("{} requires `weights`", spec.family))
            })?;
            let w = ws.generate(spec.dim - 1)?;
            if spec.family == OperatorFamily::ForwardWeightedShift {
                OperatorModel::forward_shift(w)
            } else {
                OperatorModel::donoghue(w)
            }
        }
        OperatorFamily::DenseMatrix => {
            let ms = spec
                .matrix
                .as_ref()
                .ok_or_else(|| AihsError::InvalidOperator("dense-matrix requires `matrix`".into()))?;
            OperatorModel::dense(ms.generate(spec.dim)?)
        }
    }
}

fn check_weights(w: &[C64]) -> Result<()> {
    if let Some(i) = w.iter().position(|x| *x == C64::new(0.0, 0.0)) {
        return Err(AihsError::ZeroWeight { index: i + 1 });
    }
    if let Some(i) = w.iter().position(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(AihsError::InvalidOperator(format!("weight {} is not finite", i + 1)));
    }
    Ok(())
}

impl OperatorModel {
    fn new(family: OperatorFamily, weights: Vec<C64>, matrix: CMatrix) -> Self {
        let structure = linalg::triangular_structure(&matrix);
        Self {
            family,
            weights,
            matrix,
            structure,
            eigenvalues: OnceLock::new(),
            norm: OnceLock::new(),
        }
    }

    /// `T e_i = w_i e_{i+1}` for `i < N`, `T e_N = 0`.
    pub fn forward_shift(weights: Vec<C64>) -> Result<Self> {
        check_weights(&weights)?;
        let n = weights.len() + 1;
        if n < 2 {
            return Err(AihsError::InvalidOperator("need at least one weight".into()));
        }
        let mut m = CMatrix::zeros(n, n);
        for (i, w) in weights.iter().enumerate() {
            m[(i + 1, i)] = *w;
        }
        Ok(Self::new(OperatorFamily::ForwardWeightedShift, weights, m))
    }

    /// `D e_1 = 0`, `D e_i = w_{i-1} e_{i-1}`, with `|w_i|` strictly decreasing.
    pub fn donoghue(weights: Vec<C64>) -> Result<Self> {
        check_weights(&weights)?;
        if let Some(i) = weights.windows(2).position(|p| p[1].norm() >= p[0].norm()) {
            return Err(AihsError::NotMonotone { index: i + 2 });
        }
        let n = weights.len() + 1;
        if n < 2 {
            return Err(AihsError::InvalidOperator("need at least one weight".into()));
        }
        let mut m = CMatrix::zeros(n, n);
        for (k, w) in weights.iter().enumerate() {
            m[(k, k + 1)] = *w;
        }
        Ok(Self::new(OperatorFamily::DonoghueBackwardShift, weights, m))
    }

    pub fn dense(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() < 2 {
            return Err(AihsError::InvalidOperator(format!(
                "dense operator must be square with dim >= 2, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(AihsError::InvalidOperator("matrix has non-finite entries".into()));
        }
        Ok(Self::new(OperatorFamily::DenseMatrix, Vec::new(), matrix))
    }

    /// Same operator multiplied by a scalar (family and weights scaled too).
    pub fn scaled(&self, factor: C64) -> Result<Self> {
        let w: Vec<C64> = self.weights.iter().map(|w| w * factor).collect();
        match self.family {
            OperatorFamily::ForwardWeightedShift => Self::forward_shift(w),
            OperatorFamily::DonoghueBackwardShift => Self::donoghue(w),
            OperatorFamily::DenseMatrix => Self::dense(&self.matrix * factor),
        }
    }

    pub fn family(&self) -> OperatorFamily {
        self.family
    }

    pub fn weights(&self) -> &[C64] {
        &self.weights
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn structure(&self) -> Triangular {
        self.structure
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        let mut out = CVector::zeros(v.len());
        match self.family {
            OperatorFamily::ForwardWeightedShift => {
                for (i, w) in self.weights.iter().enumerate() {
                    out[i + 1] = w * v[i];
                }
            }
            OperatorFamily::DonoghueBackwardShift => {
                for (k, w) in self.weights.iter().enumerate() {
                    out[k] = w * v[k + 1];
                }
            }
            OperatorFamily::DenseMatrix => out.gemv(real(1.0), &self.matrix, v, real(0.0)),
        }
        out
    }

    /// `T^* v`, the conjugate transpose applied to `v`.
    pub fn adjoint_apply(&self, v: &CVector) -> CVector {
        let mut out = CVector::zeros(v.len());
        match self.family {
            OperatorFamily::ForwardWeightedShift => {
                for (i, w) in self.weights.iter().enumerate() {
                    out[i] = w.conj() * v[i + 1];
                }
            }
            OperatorFamily::DonoghueBackwardShift => {
                for (k, w) in self.weights.iter().enumerate() {
                    out[k + 1] = w.conj() * v[k];
                }
            }
            OperatorFamily::DenseMatrix => out.gemv_ad(real(1.0), &self.matrix, v, real(0.0)),
        }
        out
    }

    /// Strictly triangular truncations are nilpotent with index at most `N`.
    pub fn is_nilpotent(&self) -> bool {
        self.structure != Triangular::None
            && (0..self.dim()).all(|i| self.matrix[(i, i)] == C64::new(0.0, 0.0))
    }

    /// Eigenvalues of the truncation: exact diagonal for triangular matrices,
    /// complex Schur form otherwise.
    pub fn eigenvalues(&self) -> &[C64] {
        self.eigenvalues.get_or_init(|| match self.structure {
            Triangular::None => {
                // bounded sweeps; NaN marks a failed decomposition
                match nalgebra::linalg::Schur::try_new(self.matrix.clone(), f64::EPSILON, 100 * self.dim().max(10)) {
                    Some(schur) => {
                        let (_, t) = schur.unpack();
                        (0..t.nrows()).map(|i| t[(i, i)]).collect()
                    }
                    None => vec![C64::new(f64::NAN, f64::NAN); self.dim()],
                }
            }
            _ => (0..self.dim()).map(|i| self.matrix[(i, i)]).collect(),
        })
    }

    pub fn spectral_radius_estimate(&self) -> f64 {
        if self.is_nilpotent() {
            return 0.0;
        }
        self.eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Spectral norm (exact for small N, power iteration otherwise).
    pub fn norm(&self) -> f64 {
        *self.norm.get_or_init(|| linalg::operator_norm(&self.matrix))
    }

    /// Whether `1/lambda` keeps a relative gap `delta` from every eigenvalue:
    /// `min |1/lambda - mu| > delta * |1/lambda|`.
    pub fn resolvent_gap_ok(&self, lambda: C64, delta: f64) -> bool {
        if lambda == C64::new(0.0, 0.0) {
            return false;
        }
        let inv = lambda.inv();
        let gap = self
            .eigenvalues()
            .iter()
            .map(|mu| (inv - mu).norm())
            .fold(f64::INFINITY, f64::min);
        gap > delta * inv.norm()
    }
}

/// Orbit `x_n = T^n e` with the norms of its biorthogonal functionals.
#[derive(Debug, Clone)]
pub struct OrbitData {
    pub seed: CVector,
    pub orbit: Vec<CVector>,
    /// `r_n = ||x_n^*|| = 1 / dist(x_n, span{x_i : i != n})`.
    pub biorthogonal_norms: Vec<f64>,
    pub orbit_length: usize,
}

impl OrbitData {
    pub fn matrix(&self) -> CMatrix {
        linalg::columns(&self.orbit)
    }
}

fn is_dead(v: &CVector, seed_norm: f64) -> bool {
    let n = linalg::norm(v);
    !n.is_finite() || n <= ORBIT_DEATH_THRESHOLD * seed_norm
}

/// Number of leading orbit vectors that are numerically alive, at most `max_len`.
pub fn orbit_extent(op: &OperatorModel, e: &CVector, max_len: usize) -> usize {
    let seed_norm = linalg::norm(e);
    if seed_norm == 0.0 {
        return 0;
    }
    let mut x = e.clone();
    for n in 0..max_len {
        if is_dead(&x, seed_norm) {
            return n;
        }
        if n + 1 < max_len {
            x = op.apply(&x);
        }
    }
    max_len
}

fn disjoint_supports(vectors: &[CVector]) -> bool {
    let dim = vectors.first().map_or(0, |v| v.len());
    let mut owner = vec![false; dim];
    for v in vectors {
        for (i, z) in v.iter().enumerate() {
            if *z != C64::new(0.0, 0.0) {
                if owner[i] {
                    return false;
                }
                owner[i] = true;
            }
        }
    }
    true
}

/// Computes `x_0 .. x_{L-1}` and their biorthogonal norms.
pub fn compute_orbit(op: &OperatorModel, e: &CVector, length: usize) -> Result<OrbitData> {
    let dim = op.dim();
    if e.len() != dim {
        return Err(AihsError::InvalidArgument(format!(
            "seed has length {}, operator has dim {dim}",
            e.len()
        )));
    }
    let seed_norm = linalg::norm(e);
    if seed_norm == 0.0 {
        return Err(AihsError::InvalidArgument("seed vector is zero".into()));
    }
    if length == 0 || length > dim {
        return Err(AihsError::InvalidArgument(format!(
            "orbit length must be in 1..={dim}, got {length}"
        )));
    }
    let mut orbit = Vec::with_capacity(length);
    let mut x = e.clone();
    for n in 0..length {
        if is_dead(&x, seed_norm) {
            return Err(AihsError::OrbitDied { index: n });
        }
        orbit.push(x.clone());
        if n + 1 < length {
            x = op.apply(&x);
        }
    }
    let biorthogonal_norms = biorthogonal_norms(&orbit)?;
    Ok(OrbitData {
        seed: e.clone(),
        orbit,
        biorthogonal_norms,
        orbit_length: length,
    })
}

/// `1 / dist(x_n, span of the others)` for each vector of a finite family.
///
/// Uses the row norms of the pseudo-inverse of the column-normalized family;
/// orthogonal families (disjoint supports) are handled exactly.
pub fn biorthogonal_norms(vectors: &[CVector]) -> Result<Vec<f64>> {
    let norms: Vec<f64> = vectors.iter().map(linalg::norm).collect();
    if vectors.len() == 1 || disjoint_supports(vectors) {
        return Ok(norms.iter().map(|n| 1.0 / n).collect());
    }
    let x = linalg::normalize_columns(&linalg::columns(vectors));
    let l = vectors.len();
    let svd = linalg::svd(&x, false, true).ok_or_else(|| {
        AihsError::NumericalFailure("SVD of the orbit did not converge".into())
    })?;
    let v_t = svd.v_t.expect("requested V^H");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let mut result = Vec::with_capacity(l);
    let mut worst = (0usize, f64::INFINITY);
    for n in 0..l {
        let mut row = 0.0;
        for j in 0..sigma.len() {
            let s = sigma[j];
            let v = v_t[(j, n)].norm_sqr();
            if s <= smax * f64::EPSILON * 0.5 {
                if v > 0.0 {
                    row = f64::INFINITY;
                }
            } else {
                row += v / (s * s);
            }
        }
        let distance = 1.0 / row.sqrt();
        if distance < worst.1 {
            worst = (n, distance);
        }
        result.push(row.sqrt() / norms[n]);
    }
    if worst.1 < MINIMALITY_THRESHOLD {
        return Err(AihsError::NonMinimalOrbit {
            index: worst.0,
            distance: worst.1,
        });
    }
    Ok(result)
}
