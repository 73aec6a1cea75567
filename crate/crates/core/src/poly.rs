//! Polynomial evaluation and root finding.
//!
//! Roots come from the eigenvalues of a balanced companion matrix (complex
//! Schur form), then each one is polished by safeguarded Newton steps on the
//! original coefficients. Coefficients that decay super-geometrically give
//! companion matrices spanning hundreds of binary orders of magnitude, so the
//! variable is rescaled first and the matrix is diagonally balanced.

use crate::error::{AihsError, Result};
use crate::linalg::{CMatrix, C64};

/// `sum_i coeffs[i] z^i` by Horner's rule.
pub fn eval(coeffs: &[C64], z: C64) -> C64 {
    coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * z + c)
}

pub fn eval_real(coeffs: &[f64], z: C64) -> C64 {
    coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Value and derivative at `z`.
pub fn eval_with_derivative(coeffs: &[C64], z: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// `sum_i |coeffs[i]| |z|^i`, the rounding scale of an evaluation at `z`.
pub fn magnitude(coeffs: &[C64], z: C64) -> f64 {
    let r = z.norm();
    coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c.norm())
}

pub fn magnitude_real(coeffs: &[f64], z: C64) -> f64 {
    let r = z.norm();
    coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c.abs())
}

/// Parlett-Reinsch balancing with radix 2; only exact power-of-two scalings.
fn balance(m: &mut CMatrix) {
    let n = m.nrows();
    let mut converged = false;
    let mut sweeps = 0;
    while !converged && sweeps < 200 {
        converged = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].norm();
                    r += m[(i, j)].norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let (mut cc, mut rr) = (c, r);
            while cc < rr / 2.0 {
                cc *= 2.0;
                rr /= 2.0;
                f *= 2.0;
            }
            while cc >= rr * 2.0 {
                cc /= 2.0;
                rr *= 2.0;
                f /= 2.0;
            }
            if (cc + rr) < 0.95 * s {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

/// All roots of `sum_i coeffs[i] z^i` (leading coefficient nonzero), unsorted.
pub fn roots(coeffs: &[C64]) -> Result<Vec<C64>> {
    let mut coeffs = coeffs.to_vec();
    while coeffs.last().is_some_and(|c| *c == C64::new(0.0, 0.0)) {
        coeffs.pop();
    }
    let d = coeffs.len().saturating_sub(1);
    if d == 0 {
        return Ok(Vec::new());
    }
    if coeffs[0] == C64::new(0.0, 0.0) {
        return Err(AihsError::RootFinding(
            "constant coefficient is zero; factor out z first".into(),
        ));
    }
    if d == 1 {
        return Ok(vec![-coeffs[0] / coeffs[1]]);
    }

    // z = s u with s the geometric mean root modulus, computed in logs
    let log_s = (coeffs[0].norm().ln() - coeffs[d].norm().ln()) / d as f64;
    let scaled: Vec<C64> = coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mag = c.norm();
            if mag == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                C64::from_polar((mag.ln() + i as f64 * log_s).exp(), c.arg())
            }
        })
        .collect();
    let lead = scaled[d];
    let mut companion = CMatrix::zeros(d, d);
    for i in 1..d {
        companion[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..d {
        companion[(i, d - 1)] = -scaled[i] / lead;
    }
    if companion.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(AihsError::RootFinding(
            "companion matrix overflows after scaling".into(),
        ));
    }
    balance(&mut companion);
    let (_, t) = nalgebra::linalg::Schur::try_new(companion, f64::EPSILON, 100 * d.max(10))
        .ok_or_else(|| AihsError::RootFinding("QR iteration on the companion matrix did not converge".into()))?
        .unpack();
    let s = log_s.exp();
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let z0 = t[(i, i)] * s;
        if !z0.re.is_finite() || !z0.im.is_finite() {
            return Err(AihsError::RootFinding(format!("eigenvalue {i} is not finite")));
        }
        out.push(polish(&coeffs, z0));
    }
    Ok(out)
}

/// Newton steps accepted only while they reduce `|p|`.
pub fn polish(coeffs: &[C64], z0: C64) -> C64 {
    let mut z = z0;
    let mut pz = eval(coeffs, z).norm();
    for _ in 0..80 {
        if pz == 0.0 {
            break;
        }
        let (p, dp) = eval_with_derivative(coeffs, z);
        if dp == C64::new(0.0, 0.0) {
            break;
        }
        let step = p / dp;
        let candidate = z - step;
        let pc = eval(coeffs, candidate).norm();
        if !(pc < pz) {
            break;
        }
        let small = step.norm() <= 4.0 * f64::EPSILON * candidate.norm();
        z = candidate;
        pz = pc;
        if small {
            break;
        }
    }
    z
}
