//! Blaschke sequences and products, their Taylor coefficients at the origin,
//! and the coefficient tables of `F_m(z) = z^m B(z)`.
//!
//! A factor for a zero `a` in the punctured disk is
//! `(|a| / a) (a - z) / (1 - conj(a) z)`.

use serde::{Deserialize, Serialize};

use crate::encoding::{hex_c64_vec, hex_f64};
use crate::error::{AihsError, Result};
use crate::linalg::{real, CMatrix, C64};
use crate::poly;

/// Number of grid points used to spot-check `|B| <= 1`.
pub const GRID_POINTS: usize = 100;
pub const GRID_RADIUS: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BlaschkeKind {
    /// `1 - 1/(n+1)^2`.
    #[default]
    InverseSquare,
    /// `1 - 2^-n`.
    Dyadic,
    Explicit { points: Vec<[f64; 2]> },
}

/// The first `count` points of a Blaschke sequence, `n = 1..=count`.
pub fn blaschke_sequence(kind: &BlaschkeKind, count: usize) -> Result<Vec<C64>> {
    if count == 0 {
        return Err(AihsError::InvalidArgument("need at least one Blaschke point".into()));
    }
    let out: Vec<C64> = match kind {
        BlaschkeKind::InverseSquare => (1..=count)
            .map(|n| real(1.0 - 1.0 / ((n + 1) * (n + 1)) as f64))
            .collect(),
        BlaschkeKind::Dyadic => (1..=count).map(|n| real(1.0 - 0.5f64.powi(n as i32))).collect(),
        BlaschkeKind::Explicit { points } => {
            if points.len() < count {
                return Err(AihsError::InvalidArgument(format!(
                    "{count} points requested, {} given",
                    points.len()
                )));
            }
            points[..count].iter().map(|p| C64::new(p[0], p[1])).collect()
        }
    };
    validate_points(&out)?;
    Ok(out)
}

fn validate_points(points: &[C64]) -> Result<()> {
    match points
        .iter()
        .position(|z| !(z.norm() < 1.0) || *z == C64::new(0.0, 0.0))
    {
        Some(index) => Err(AihsError::OutsideDisk { index }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlaschkeData {
    #[serde(with = "hex_c64_vec")]
    pub lambdas: Vec<C64>,
    pub factors_used: usize,
    /// `b_0..b_M`.
    #[serde(with = "hex_c64_vec")]
    pub taylor: Vec<C64>,
    /// Smallest `C` with `|b_n| <= C / (n + 1)` over the computed range.
    #[serde(with = "hex_f64")]
    pub growth_constant: f64,
    /// `sum (1 - |lambda_n|)` over the retained factors.
    #[serde(with = "hex_f64")]
    pub defect_sum: f64,
    /// Largest `|B(z)|` on the spot-check grid.
    #[serde(with = "hex_f64")]
    pub grid_max_modulus: f64,
}

impl BlaschkeData {
    pub fn order(&self) -> usize {
        self.taylor.len() - 1
    }

    /// `B(z)` from the factors themselves.
    pub fn evaluate_product(&self, z: C64) -> C64 {
        evaluate_product(&self.lambdas, z)
    }

    /// The Taylor polynomial of order `M` at `z`.
    pub fn evaluate_series(&self, z: C64) -> C64 {
        poly::eval(&self.taylor, z)
    }
}

fn factor(a: C64, z: C64) -> C64 {
    (a.norm() / a) * (a - z) / (1.0 - a.conj() * z)
}

pub fn evaluate_product(lambdas: &[C64], z: C64) -> C64 {
    lambdas.iter().fold(real(1.0), |acc, &a| acc * factor(a, z))
}

/// Points of the spot-check grid: ten radii up to `GRID_RADIUS`, ten angles each.
pub fn disk_grid() -> Vec<C64> {
    let rings = 10;
    let per_ring = GRID_POINTS / rings;
    let mut out = Vec::with_capacity(GRID_POINTS);
    for i in 0..rings {
        let r = GRID_RADIUS * (i + 1) as f64 / rings as f64;
        for j in 0..per_ring {
            let theta = 2.0 * std::f64::consts::PI * (j as f64 + 0.5 * i as f64) / per_ring as f64;
            out.push(C64::from_polar(r, theta));
        }
    }
    out
}

/// Taylor coefficients `b_0..b_M` of the finite product at 0.
///
/// Each factor costs `O(M)`: multiply by `(a - z)`, then divide by
/// `(1 - conj(a) z)` with the recurrence `u_n = t_n + conj(a) u_{n-1}`.
pub fn blaschke_taylor(lambdas: &[C64], order: usize) -> Result<BlaschkeData> {
    if lambdas.is_empty() {
        return Err(AihsError::InvalidArgument("no Blaschke factors".into()));
    }
    validate_points(lambdas)?;
    let mut series = vec![C64::new(0.0, 0.0); order + 1];
    series[0] = real(1.0);
    let mut scratch = series.clone();
    for &a in lambdas {
        let unit = a.norm() / a;
        let ca = a.conj();
        let mut prev_t = C64::new(0.0, 0.0);
        for n in 0..=order {
            let t = a * series[n] - if n > 0 { series[n - 1] } else { C64::new(0.0, 0.0) };
            prev_t = t + ca * prev_t;
            scratch[n] = prev_t;
        }
        for n in 0..=order {
            series[n] = unit * scratch[n];
        }
    }
    let growth_constant = series
        .iter()
        .enumerate()
        .fold(0.0f64, |c, (n, b)| c.max(b.norm() * (n + 1) as f64));
    let defect_sum = lambdas.iter().map(|z| 1.0 - z.norm()).sum();
    let grid_max_modulus = disk_grid()
        .into_iter()
        .map(|z| evaluate_product(lambdas, z).norm())
        .fold(0.0, f64::max);
    Ok(BlaschkeData {
        lambdas: lambdas.to_vec(),
        factors_used: lambdas.len(),
        taylor: series,
        growth_constant,
        defect_sum,
        grid_max_modulus,
    })
}

/// `a[m][n]`, the `n`-th Taylor coefficient of `z^m B(z)`, for
/// `m = 0..=m_max` and `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct FmTable {
    pub m_max: usize,
    pub n_max: usize,
    pub rows: Vec<Vec<C64>>,
    pub growth_constant: f64,
}

pub fn fm_coefficient_table(bd: &BlaschkeData, m_max: usize, n_max: usize) -> Result<FmTable> {
    if n_max > bd.order() {
        return Err(AihsError::InsufficientTaylorOrder {
            required: n_max,
            available: bd.order(),
        });
    }
    let rows = (0..=m_max)
        .map(|m| {
            (0..=n_max)
                .map(|n| if n >= m { bd.taylor[n - m] } else { C64::new(0.0, 0.0) })
                .collect()
        })
        .collect();
    Ok(FmTable {
        m_max,
        n_max,
        rows,
        growth_constant: bd.growth_constant,
    })
}

impl FmTable {
    pub fn get(&self, m: usize, n: usize) -> C64 {
        self.rows[m][n]
    }

    /// `sum_n a[m][n] z^n`.
    pub fn evaluate(&self, m: usize, z: C64) -> C64 {
        poly::eval(&self.rows[m], z)
    }

    /// Largest ratio `|a[m][n]| (n - m + 1) / C`; at most 1 by construction.
    pub fn growth_ratio(&self) -> f64 {
        if self.growth_constant == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for (m, row) in self.rows.iter().enumerate() {
            for (n, a) in row.iter().enumerate().skip(m) {
                worst = worst.max(a.norm() * (n - m + 1) as f64 / self.growth_constant);
            }
        }
        worst
    }

    /// Rows `m_range` as a matrix, one table row per matrix row.
    pub fn matrix(&self, m_range: std::ops::RangeInclusive<usize>) -> CMatrix {
        let ms: Vec<usize> = m_range.collect();
        CMatrix::from_fn(ms.len(), self.n_max + 1, |i, n| self.rows[ms[i]][n])
    }

    /// Smallest singular value of the row-normalized rows `m_range`.
    pub fn row_independence(&self, m_range: std::ops::RangeInclusive<usize>) -> f64 {
        crate::linalg::sigma_min_normalized_rows(&self.matrix(m_range))
    }
}

#[derive(Debug, Serialize)]
struct FmRow {
    m: usize,
    n: usize,
    re: f64,
    im: f64,
}

/// CSV with columns `m, n, re, im`.
pub fn write_fm_csv<W: std::io::Write>(table: &FmTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (m, row) in table.rows.iter().enumerate() {
        for (n, a) in row.iter().enumerate() {
            w.serialize(FmRow { m, n, re: a.re, im: a.im })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Empirical check of `sum_n r_n / n < infinity` on a finite range of
/// biorthogonal norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummabilityCheck {
    #[serde(with = "hex_f64")]
    pub partial_sum: f64,
    /// Least-squares slope of `log(r_n / n)` against `log n` over the second
    /// half of the range; summable tails need it below `-1`.
    #[serde(with = "hex_f64")]
    pub tail_slope: f64,
    #[serde(with = "hex_f64")]
    pub cap: f64,
    pub satisfied: bool,
}

/// Tail slopes above this are treated as divergent.
pub const TAIL_SLOPE_LIMIT: f64 = -1.05;

/// `r[0]` is the norm of the seed's coordinate functional and is skipped.
pub fn summability_check(r: &[f64], cap: f64) -> SummabilityCheck {
    let terms: Vec<(f64, f64)> = r
        .iter()
        .enumerate()
        .skip(1)
        .map(|(n, &rn)| (n as f64, rn / n as f64))
        .collect();
    let partial_sum: f64 = terms.iter().map(|t| t.1).sum();
    let tail = &terms[terms.len() / 2..];
    let tail_slope = if tail.len() >= 2 {
        let xs: Vec<f64> = tail.iter().map(|t| t.0.ln()).collect();
        let ys: Vec<f64> = tail.iter().map(|t| t.1.ln()).collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        sxy / sxx
    } else {
        f64::NEG_INFINITY
    };
    let satisfied = partial_sum.is_finite() && partial_sum <= cap && tail_slope < TAIL_SLOPE_LIMIT;
    SummabilityCheck {
        partial_sum,
        tail_slope,
        cap,
        satisfied,
    }
}
