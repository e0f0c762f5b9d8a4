//! Run configuration read from a TOML file. The schema is documented in
//! `docs/config.md`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use snapzip_core::born_models::ModelKind;
use snapzip_core::lattice::Boundary;
use snapzip_core::sampler::{ChainConfig, ProposalMix};
use snapzip_core::tn_ising::{ContractOptions, DEFAULT_BOND_CAP, DEFAULT_TOL};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub sampler: SamplerSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    pub sizes: Vec<usize>,
    #[serde(default = "default_boundary")]
    pub boundary: String,
}

/// Inclusive range `start, start + step, ...` up to `stop`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub samples: usize,
    #[serde(default = "one")]
    pub chains: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermalization: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thinning: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single_weight: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    #[default]
    None,
    Vortex,
    Correlator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_file: Option<PathBuf>,
    #[serde(default = "default_k")]
    pub baseline_k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_seed: Option<u64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_bond_cap")]
    pub bond_cap: usize,
    #[serde(default = "yes")]
    pub cid: bool,
    #[serde(default)]
    pub observable: Observable,
    #[serde(default = "half")]
    pub vortex_exponent: f64,
    #[serde(default = "default_reference")]
    pub reference_samples: usize,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            baseline_file: None,
            baseline_k: default_k(),
            baseline_seed: None,
            tol: default_tol(),
            bond_cap: default_bond_cap(),
            cid: true,
            observable: Observable::None,
            vortex_exponent: half(),
            reference_samples: default_reference(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<PathBuf>,
}

fn default_boundary() -> String {
    "open".into()
}
fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn half() -> f64 {
    0.5
}
fn default_k() -> usize {
    100
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_bond_cap() -> usize {
    DEFAULT_BOND_CAP
}
fn default_reference() -> usize {
    4096
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub baseline_file: Option<PathBuf>,
    pub tol: Option<f64>,
    pub bond_cap: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config { path: path.to_path_buf(), reason: e.to_string() })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.sampler.seed = Some(s);
        }
        if let Some(f) = &o.baseline_file {
            self.estimator.baseline_file = Some(f.clone());
        }
        if let Some(t) = o.tol {
            self.estimator.tol = t;
        }
        if let Some(c) = o.bond_cap {
            self.estimator.bond_cap = c;
        }
    }

    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> CliResult<()> {
        self.kind()?;
        self.boundary()?;
        self.contract_options()?;
        if self.params()?.is_empty() {
            return Err(CliError::Invalid("parameter grid is empty".into()));
        }
        if self.model.sizes.is_empty() {
            return Err(CliError::Invalid("size list is empty".into()));
        }
        if self.model.sizes.contains(&0) {
            return Err(CliError::Invalid("sizes must be positive".into()));
        }
        if self.sampler.samples == 0 {
            return Err(CliError::Invalid("samples must be positive".into()));
        }
        if self.sampler.chains == 0 {
            return Err(CliError::Invalid("chains must be positive".into()));
        }
        if self.sampler.thinning == Some(0) {
            return Err(CliError::Invalid("thinning must be at least 1".into()));
        }
        self.seed()?;
        self.proposal()?;
        if self.estimator.baseline_k == 0 {
            return Err(CliError::Invalid("baseline_k must be positive".into()));
        }
        if self.estimator.observable != Observable::None && !self.kind()?.is_planar() {
            return Err(CliError::Invalid("observables are only defined for planar models".into()));
        }
        Ok(())
    }

    pub fn kind(&self) -> CliResult<ModelKind> {
        self.model.kind.parse().map_err(|_| CliError::Invalid(format!("unknown model kind '{}'", self.model.kind)))
    }

    pub fn boundary(&self) -> CliResult<Boundary> {
        match self.model.boundary.as_str() {
            "open" => Ok(Boundary::Open),
            "periodic" => Ok(Boundary::Periodic),
            b => Err(CliError::Invalid(format!("unknown boundary '{b}'"))),
        }
    }

    /// Explicit `params`, or the points of `grid`; giving both is an error.
    pub fn params(&self) -> CliResult<Vec<f64>> {
        match (&self.model.params[..], self.model.grid) {
            (p, None) => Ok(p.to_vec()),
            ([], Some(g)) => {
                if !(g.step > 0.0) || !(g.stop >= g.start) {
                    return Err(CliError::Invalid(format!("bad grid {g:?}")));
                }
                let n = ((g.stop - g.start) / g.step + 1e-9).floor() as usize + 1;
                Ok((0..n).map(|i| g.start + i as f64 * g.step).collect())
            }
            _ => Err(CliError::Invalid("give either params or grid, not both".into())),
        }
    }

    pub fn seed(&self) -> CliResult<u64> {
        self.sampler
            .seed
            .ok_or_else(|| CliError::Invalid("a seed is mandatory: set [sampler] seed or pass --seed".into()))
    }

    pub fn baseline_seed(&self) -> CliResult<u64> {
        self.estimator.baseline_seed.map_or_else(|| self.seed(), Ok)
    }

    pub fn proposal(&self) -> CliResult<ProposalMix> {
        let default = ProposalMix::default_for(self.kind()?);
        let mix = ProposalMix {
            pair: self.sampler.pair_weight.unwrap_or(default.pair),
            single: self.sampler.single_weight.unwrap_or(default.single),
        };
        if !(mix.pair >= 0.0 && mix.single >= 0.0 && mix.pair + mix.single > 0.0) {
            return Err(CliError::Invalid(format!("bad proposal weights {mix:?}")));
        }
        Ok(mix)
    }

    pub fn contract_options(&self) -> CliResult<ContractOptions> {
        Ok(ContractOptions::new(self.estimator.tol, self.estimator.bond_cap)?)
    }

    /// Chain template for task `task`; chain `c` of that task uses stream
    /// `task << 20 | c`.
    pub fn chain_template(&self, task: usize) -> CliResult<ChainConfig> {
        let mut cfg = ChainConfig::new(self.sampler.samples, self.seed()?, (task as u64) << 20);
        cfg.proposal = self.proposal()?;
        cfg.thermalization = self.sampler.thermalization;
        cfg.thinning = self.sampler.thinning;
        Ok(cfg)
    }

    /// Sites of a snapshot at linear size `l`.
    pub fn sites(&self, l: usize) -> CliResult<usize> {
        Ok(if self.kind()?.is_planar() { l * l } else { l })
    }

    /// `(L, param)` pairs in task order: sizes outer, parameters inner.
    pub fn tasks(&self) -> CliResult<Vec<(usize, f64)>> {
        let params = self.params()?;
        Ok(self.model.sizes.iter().flat_map(|&l| params.iter().map(move |&p| (l, p))).collect())
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        sha256_hex(text.as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
