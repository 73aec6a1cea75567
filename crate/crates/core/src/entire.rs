//! Coefficient sequences built from biorthogonal norms, the truncated entire
//! function `F(z) = sum_i c_i z^i` they define, its shifts `z^k F(z)`, and
//! its zeros.

use serde::{Deserialize, Serialize};

use crate::encoding::{hex_c64_vec, hex_f64, hex_f64_vec};
use crate::error::{AihsError, Result};
use crate::linalg::{real, C64};
use crate::poly;

/// Default relative factor in the zero residual tolerance
/// `tol_zero * max|c_i| * max(1, |lambda|)^d`.
pub const DEFAULT_TOL_ZERO: f64 = 1e-10;

/// Zeros closer than this times the largest modulus count as repeated.
pub const DISTINCT_ZEROS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSequence {
    #[serde(with = "hex_f64_vec")]
    pub c: Vec<f64>,
    #[serde(with = "hex_f64_vec")]
    pub r: Vec<f64>,
    /// `beta[k] = sum_i c_i r_{i+k}` for `k = 0..=k_max`.
    #[serde(with = "hex_f64_vec")]
    pub beta: Vec<f64>,
    pub degree: usize,
    pub k_max: usize,
    /// Real constant subtracted from `c_0`; zero when unshifted.
    #[serde(with = "hex_f64")]
    pub picard_shift: f64,
    /// Index from which `c_i^(1/i)` is non-increasing.
    pub root_decay_index: usize,
}

/// Number of norms `r_0..` needed for degree `d` and shifts up to `k_max`.
pub fn required_norms(degree: usize, k_max: usize) -> usize {
    (2 * degree).max(degree + k_max) + 1
}

/// Largest degree whose coefficients and bounds fit in `available` norms.
pub fn max_degree(available: usize, k_max: usize) -> usize {
    let mut d = 0;
    while required_norms(d + 1, k_max) <= available {
        d += 1;
    }
    d
}

/// `c_0 = 1`, `c_i = 2^-i min(1/r_1, ..., 1/r_2i)`, and the bounds `beta_k`.
pub fn coefficients_from_norms(r: &[f64], degree: usize, k_max: usize) -> Result<CoefficientSequence> {
    let required = required_norms(degree, k_max);
    if r.len() < required {
        return Err(AihsError::InsufficientNorms {
            required,
            available: r.len(),
        });
    }
    if let Some(i) = r[..required].iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(AihsError::InvalidArgument(format!(
            "biorthogonal norm r_{i} = {} is not a positive finite number",
            r[i]
        )));
    }
    let mut c = Vec::with_capacity(degree + 1);
    c.push(1.0);
    let mut max_r: f64 = 0.0;
    for i in 1..=degree {
        max_r = max_r.max(r[2 * i - 1]).max(r[2 * i]);
        // 2^-i / max r is the same number as 2^-i * min(1/r), rounded once
        c.push((0.5f64).powi(i as i32) / max_r);
    }
    let r = r[..required].to_vec();
    let beta = bounds(&c, &r, k_max);
    let root_decay_index = root_decay_index(&c);
    Ok(CoefficientSequence {
        c,
        r,
        beta,
        degree,
        k_max,
        picard_shift: 0.0,
        root_decay_index,
    })
}

fn bounds(c: &[f64], r: &[f64], k_max: usize) -> Vec<f64> {
    (0..=k_max)
        .map(|k| c.iter().enumerate().map(|(i, ci)| ci.abs() * r[i + k]).sum())
        .collect()
}

fn root_decay_index(c: &[f64]) -> usize {
    let roots: Vec<f64> = (1..c.len())
        .map(|i| c[i].abs().ln() / i as f64)
        .collect();
    let mut start = roots.len();
    while start > 0 && (start == roots.len() || roots[start - 1] >= roots[start]) {
        start -= 1;
    }
    start + 1
}

/// How the constant `d < 0` subtracted from `c_0` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PicardStrategy {
    /// `d = -max(1, c_0)`.
    #[default]
    Unit,
    Fixed { shift: f64 },
}

/// Replace `c_0` by `c_0 - d`. The bounds `beta_k` are recomputed so that
/// they stay valid for the shifted coefficients.
pub fn apply_picard_shift(cs: &CoefficientSequence, strategy: PicardStrategy) -> Result<CoefficientSequence> {
    if cs.picard_shift != 0.0 {
        return Err(AihsError::InvalidArgument(
            "coefficient sequence is already shifted".into(),
        ));
    }
    let d = match strategy {
        PicardStrategy::Unit => -cs.c[0].max(1.0),
        PicardStrategy::Fixed { shift } => shift,
    };
    if !(d < 0.0 && d.is_finite()) {
        return Err(AihsError::InvalidArgument(format!(
            "shift must be a negative real number, got {d}"
        )));
    }
    let mut out = cs.clone();
    out.c[0] -= d;
    out.picard_shift = d;
    out.beta = bounds(&out.c, &out.r, out.k_max);
    Ok(out)
}

/// `c^(k)`: `k` leading zeros followed by `c`, so it represents `z^k F(z)`.
pub fn shifted_coefficients(cs: &CoefficientSequence, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k];
    out.extend_from_slice(&cs.c);
    out
}

impl CoefficientSequence {
    pub fn evaluate(&self, z: C64) -> C64 {
        poly::eval_real(&self.c, z)
    }

    /// `z^k F(z)`.
    pub fn evaluate_shifted(&self, k: usize, z: C64) -> C64 {
        z.powu(k as u32) * self.evaluate(z)
    }

    /// `sum_i |c_i| |z|^i`, the magnitude against which evaluations at `z`
    /// lose precision.
    pub fn magnitude(&self, z: C64) -> f64 {
        poly::magnitude_real(&self.c, z)
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Residual tolerance for a zero at `z`.
    pub fn zero_tolerance(&self, z: C64, factor: f64) -> f64 {
        factor * self.max_abs() * z.norm().max(1.0).powi(self.degree as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSet {
    #[serde(with = "hex_c64_vec")]
    pub lambdas: Vec<C64>,
    /// `|F(lambda_n)|`.
    #[serde(with = "hex_f64_vec")]
    pub residuals: Vec<f64>,
    /// `|F(lambda_n)| / sum_i |c_i| |lambda_n|^i`.
    #[serde(with = "hex_f64_vec")]
    pub relative_residuals: Vec<f64>,
    pub modulus_sorted: bool,
}

impl ZeroSet {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.lambdas.len() {
            for j in (i + 1)..self.lambdas.len() {
                best = best.min((self.lambdas[i] - self.lambdas[j]).norm());
            }
        }
        best
    }
}

/// Every zero of the degree-`d` truncation, ascending in modulus.
pub fn all_zeros(cs: &CoefficientSequence, tol_zero: f64) -> Result<ZeroSet> {
    if cs.c.last().is_none_or(|&x| x == 0.0) {
        return Err(AihsError::RootFinding(
            "leading coefficient is zero".into(),
        ));
    }
    let coeffs: Vec<C64> = cs.c.iter().map(|&x| real(x)).collect();
    let mut lambdas = poly::roots(&coeffs)?;
    lambdas.sort_by(|a, b| {
        a.norm()
            .total_cmp(&b.norm())
            .then(a.arg().total_cmp(&b.arg()))
    });
    let mut residuals = Vec::with_capacity(lambdas.len());
    let mut relative = Vec::with_capacity(lambdas.len());
    let mut failures = Vec::new();
    for (i, z) in lambdas.iter().enumerate() {
        let res = cs.evaluate(*z).norm();
        let tol = cs.zero_tolerance(*z, tol_zero);
        if !(res <= tol) {
            failures.push(format!("zero {i} at {z}: |F| = {res:e} > {tol:e}"));
        }
        residuals.push(res);
        relative.push(res / cs.magnitude(*z));
    }
    if !failures.is_empty() {
        return Err(AihsError::RootFinding(failures.join("; ")));
    }
    Ok(ZeroSet {
        lambdas,
        residuals,
        relative_residuals: relative,
        modulus_sorted: true,
    })
}

/// Keep the entries at `indices` (in order) and check that they are distinct,
/// both against the fixed relative separation and against how far rounding
/// can move each zero (which catches numerically split multiple zeros).
pub fn select_zeros(cs: &CoefficientSequence, all: &ZeroSet, indices: &[usize]) -> Result<ZeroSet> {
    let pick = |v: &[f64]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let out = ZeroSet {
        lambdas: indices.iter().map(|&i| all.lambdas[i]).collect(),
        residuals: pick(&all.residuals),
        relative_residuals: pick(&all.relative_residuals),
        modulus_sorted: all.modulus_sorted && indices.windows(2).all(|w| w[0] < w[1]),
    };
    check_distinct(cs, &out, indices)?;
    Ok(out)
}

/// Radius within which rounding of the coefficients can move the zero at
/// `z`: the positive root of `|F'| r + |F''| r^2 / 2 = 16 eps M(z)`.
fn uncertainty_radius(cs: &CoefficientSequence, z: C64) -> f64 {
    let d1: Vec<C64> = (1..cs.c.len()).map(|i| real(i as f64 * cs.c[i])).collect();
    let d2: Vec<C64> = (2..cs.c.len()).map(|i| real((i * (i - 1)) as f64 * cs.c[i])).collect();
    let a = poly::eval(&d2, z).norm() / 2.0;
    let b = poly::eval(&d1, z).norm();
    let c = 16.0 * f64::EPSILON * cs.magnitude(z);
    if a == 0.0 {
        return if b > 0.0 { c / b } else { f64::INFINITY };
    }
    2.0 * c / (b + (b * b + 4.0 * a * c).sqrt())
}

fn check_distinct(cs: &CoefficientSequence, zs: &ZeroSet, labels: &[usize]) -> Result<()> {
    let scale = zs.lambdas.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let radii: Vec<f64> = zs.lambdas.iter().map(|&z| uncertainty_radius(cs, z)).collect();
    for i in 0..zs.lambdas.len() {
        for j in (i + 1)..zs.lambdas.len() {
            let gap = (zs.lambdas[i] - zs.lambdas[j]).norm();
            if gap <= DISTINCT_ZEROS * scale || gap <= radii[i] + radii[j] {
                return Err(AihsError::RepeatedZeros {
                    first: labels[i],
                    second: labels[j],
                });
            }
        }
    }
    Ok(())
}

/// The `m` largest-modulus zeros, ascending in modulus.
pub fn find_zeros(cs: &CoefficientSequence, m: usize) -> Result<ZeroSet> {
    find_zeros_with(cs, m, DEFAULT_TOL_ZERO)
}

pub fn find_zeros_with(cs: &CoefficientSequence, m: usize, tol_zero: f64) -> Result<ZeroSet> {
    if m > cs.degree {
        return Err(AihsError::InvalidArgument(format!(
            "asked for {m} zeros of a degree {} truncation",
            cs.degree
        )));
    }
    let all = all_zeros(cs, tol_zero)?;
    let indices: Vec<usize> = (all.len() - m..all.len()).collect();
    select_zeros(cs, &all, &indices)
}
