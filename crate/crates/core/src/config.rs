//! Run configuration for the command-line driver.
//!
//! A config is one JSON document; every field except `operator` has a
//! default, and the command-line flags override the tolerances and the seed
//! after parsing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blaschke::BlaschkeKind;
use crate::chains::{ChainStart, ChainTolerances};
use crate::entire::PicardStrategy;
use crate::error::{AihsError, Result};
use crate::halfspace::{BlaschkeConfig, Construction, EntireConfig, Tolerances, DEFAULT_GAP};
use crate::linalg::{self, CVector, C64};
use crate::operator::{OperatorFamily, OperatorSpec, WeightSpec};
use crate::resolvent::ProbeConfig;

/// Which vector seeds the orbit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SeedVector {
    /// `e_N` for backward shifts (which kill `e_1`), `e_1` otherwise.
    #[default]
    Auto,
    /// `e_index`, 1-based.
    Basis { index: usize },
    /// Unit vector drawn from the run seed.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntireOptions {
    pub degree: Option<usize>,
    pub picard: PicardStrategy,
    pub gap: f64,
}

impl Default for EntireOptions {
    fn default() -> Self {
        Self {
            degree: None,
            picard: PicardStrategy::Unit,
            gap: DEFAULT_GAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlaschkeOptions {
    pub kind: BlaschkeKind,
    pub factors: Option<usize>,
    pub summability_cap: f64,
    pub gap: f64,
}

impl Default for BlaschkeOptions {
    fn default() -> Self {
        Self {
            kind: BlaschkeKind::InverseSquare,
            factors: None,
            summability_cap: 100.0,
            gap: DEFAULT_GAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainOptions {
    pub depth: usize,
    pub start: ChainStart,
    /// Also build a subspace of this codimension.
    pub codim: Option<usize>,
    pub tolerances: ChainTolerances,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self {
            depth: 10,
            start: ChainStart::Auto,
            codim: None,
            tolerances: ChainTolerances::default(),
        }
    }
}

/// What `sweep` iterates over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SweepOptions {
    /// The configured build at each dimension.
    Dims { dims: Vec<usize> },
    /// Random perturbation round trips.
    RoundTrip { count: usize, max_dim: usize },
    /// Random dense chains, each landing in one branch of the dichotomy.
    Dichotomy { count: usize, dim: usize, depth: usize },
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions::Dims { dims: vec![64, 128, 256] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub operator: OperatorSpec,
    #[serde(default)]
    pub seed_vector: SeedVector,
    #[serde(default = "default_construction")]
    pub construction: Construction,
    /// Resolvent vectors spanning `Y`.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Highest functional index (`f_0 ..= f_{k_max}` for the entire
    /// construction, `f_1 ..= f_{k_max}` for Blaschke).
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default)]
    pub entire: EntireOptions,
    #[serde(default)]
    pub blaschke: BlaschkeOptions,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub chain: ChainOptions,
    #[serde(default)]
    pub sweep: SweepOptions,
    #[serde(default)]
    pub probe: ProbeConfig,
    /// Output directory; the `--out` flag takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_construction() -> Construction {
    Construction::Entire
}

fn default_m() -> usize {
    4
}

fn default_k_max() -> usize {
    3
}

impl Default for RunConfig {
    /// Donoghue shift on 16 coordinates with weights `0.9^i`, seeded at `e_N`.
    fn default() -> Self {
        Self {
            operator: OperatorSpec {
                family: OperatorFamily::DonoghueBackwardShift,
                weights: Some(WeightSpec::Geometric { ratio: 0.9, scale: 1.0 }),
                matrix: None,
                dim: 16,
            },
            seed_vector: SeedVector::Auto,
            construction: Construction::Entire,
            m: default_m(),
            k_max: default_k_max(),
            entire: EntireOptions::default(),
            blaschke: BlaschkeOptions::default(),
            tolerances: Tolerances::default(),
            seed: 0,
            chain: ChainOptions::default(),
            sweep: SweepOptions::default(),
            probe: ProbeConfig::default(),
            out: None,
        }
    }
}

/// Command-line overrides, applied after the file is read.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol_ai: Option<f64>,
    pub tol_zero: Option<f64>,
    pub tol_annihilation: Option<f64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AihsError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.tol_ai {
            self.tolerances.tol_ai = t;
        }
        if let Some(t) = o.tol_zero {
            self.tolerances.tol_zero = t;
        }
        if let Some(t) = o.tol_annihilation {
            self.tolerances.tol_annihilation = Some(t);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(AihsError::Config("m must be at least 1".into()));
        }
        if self.construction == Construction::Blaschke && self.k_max == 0 {
            return Err(AihsError::Config("the Blaschke construction needs k_max >= 1".into()));
        }
        if self.operator.dim < 2 {
            return Err(AihsError::Config("operator dim must be at least 2".into()));
        }
        self.tolerances.validate()?;
        let chain = &self.chain.tolerances;
        if !(chain.property > 0.0 && chain.chain > 0.0) {
            return Err(AihsError::Config("chain tolerances must be positive".into()));
        }
        if self.chain.depth == 0 {
            return Err(AihsError::Config("chain depth must be at least 1".into()));
        }
        for (name, g) in [("entire.gap", self.entire.gap), ("blaschke.gap", self.blaschke.gap)] {
            if !(g > 0.0 && g.is_finite()) {
                return Err(AihsError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn entire_config(&self) -> EntireConfig {
        EntireConfig {
            m: self.m,
            k_max: self.k_max,
            degree: self.entire.degree,
            picard: self.entire.picard,
            gap: self.entire.gap,
        }
    }

    pub fn blaschke_config(&self) -> BlaschkeConfig {
        BlaschkeConfig {
            m: self.m,
            m_max: self.k_max,
            kind: self.blaschke.kind.clone(),
            factors: self.blaschke.factors,
            summability_cap: self.blaschke.summability_cap,
            gap: self.blaschke.gap,
        }
    }

    /// The orbit seed for an operator of dimension `dim`.
    pub fn seed_vector(&self, dim: usize) -> Result<CVector> {
        match self.seed_vector {
            SeedVector::Auto => Ok(if self.operator.family == OperatorFamily::DonoghueBackwardShift {
                linalg::basis_vector(dim, dim - 1)
            } else {
                linalg::basis_vector(dim, 0)
            }),
            SeedVector::Basis { index } => {
                if index == 0 || index > dim {
                    return Err(AihsError::Config(format!("seed index {index} outside 1..={dim}")));
                }
                Ok(linalg::basis_vector(dim, index - 1))
            }
            SeedVector::Random => {
                let q = crate::duality::random_orthonormal(dim, 1, self.seed);
                Ok(q.column(0).map(|z: C64| z))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::from_json(r#"{"operator": {"family": "forward-weighted-shift", "weights": {"kind": "geometric", "params": {"ratio": 0.5}}, "dim": 32}}"#).unwrap();
        assert_eq!((c.m, c.k_max, c.construction), (4, 3, Construction::Entire));
        c.validate().unwrap();
        assert_eq!(c.seed_vector(32).unwrap(), linalg::basis_vector(32, 0));
    }

    #[test]
    fn m_zero_is_rejected() {
        let c = RunConfig { m: 0, ..Default::default() };
        assert!(matches!(c.validate(), Err(AihsError::Config(_))));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = RunConfig::from_json(r#"{"operator": {"family": "dense-matrix", "matrix": {"kind": "identity"}, "dim": 4}, "mm": 3}"#);
        assert!(err.is_err());
    }

    #[test]
    fn overrides_replace_tolerances() {
        let mut c = RunConfig::default();
        c.apply(Overrides { seed: Some(7), tol_ai: Some(1e-6), tol_zero: None, tol_annihilation: Some(2.0) });
        assert_eq!(c.seed, 7);
        assert_eq!(c.tolerances.tol_ai, 1e-6);
        assert_eq!(c.tolerances.tol_annihilation, Some(2.0));
    }

    #[test]
    fn donoghue_default_seeds_the_last_coordinate() {
        let c = RunConfig::default();
        assert_eq!(c.seed_vector(16).unwrap(), linalg::basis_vector(16, 15));
    }
}
