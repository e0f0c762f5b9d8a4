//! Scalar estimates from samples.
//!
//! Standard errors come from a blocked jackknife: the sample stream is cut
//! into contiguous blocks, so correlated neighbours in a chain land in the
//! same block.

use std::fmt;

use crate::born_models::{BornModel, PlanarModel};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, map_slice, Exec};
use crate::lattice::{BondField, Snapshot};
use crate::lzcid::{cid, ShuffleBaseline};
use crate::sampler::ChainRun;
use crate::tn_ising::{spin_correlation, IsingInstance};

/// Default number of jackknife blocks.
pub const JACKKNIFE_BLOCKS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorTag {
    Direct,
    Cid,
}

impl fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorTag::Direct => "direct",
            EstimatorTag::Cid => "cid",
        })
    }
}

/// Entropy per site in bits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyEstimate {
    pub s_d: f64,
    pub standard_error: f64,
    pub n_s: usize,
    pub sites: usize,
    pub tag: EstimatorTag,
}

/// A mean with its error and the number of dropped inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub standard_error: f64,
    pub n: usize,
    pub dropped: usize,
}

/// Mean and blocked-jackknife standard error.
pub fn jackknife_mean(values: &[f64], blocks: usize) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::EmptySampleSet { needed: 2, got: n });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let b = blocks.clamp(2, n);
    let total: f64 = values.iter().sum();
    let mut loo = Vec::with_capacity(b);
    for k in 0..b {
        let (lo, hi) = (k * n / b, (k + 1) * n / b);
        let block: f64 = values[lo..hi].iter().sum();
        loo.push((total - block) / (n - (hi - lo)) as f64);
    }
    let center = loo.iter().sum::<f64>() / b as f64;
    let var = loo.iter().map(|v| (v - center).powi(2)).sum::<f64>() * (b - 1) as f64 / b as f64;
    Ok((mean, var.sqrt()))
}

/// `-Σ log2 ρ / (N_s · sites)`.
pub fn direct_entropy(log2_probs: &[f64], sites: usize) -> Result<EntropyEstimate> {
    if let Some(bad) = log2_probs.iter().find(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("sample with log2 probability {bad}")));
    }
    let per_site: Vec<f64> = log2_probs.iter().map(|&l| -l / sites as f64).collect();
    let (s_d, se) = jackknife_mean(&per_site, JACKKNIFE_BLOCKS)?;
    Ok(EntropyEstimate { s_d, standard_error: se, n_s: log2_probs.len(), sites, tag: EstimatorTag::Direct })
}

/// [`direct_entropy`] over chain outputs in chain order.
pub fn direct_entropy_runs(runs: &[ChainRun], sites: usize) -> Result<EntropyEstimate> {
    let lp: Vec<f64> = runs.iter().flat_map(|r| r.samples.iter().map(|s| s.log2p)).collect();
    direct_entropy(&lp, sites)
}

/// Mean CID over snapshots.
pub fn cid_entropy(snapshots: &[Snapshot], baseline: &ShuffleBaseline, exec: Exec) -> Result<EntropyEstimate> {
    let values = map_slice(exec, snapshots, |s| cid(s, baseline)).into_iter().collect::<Result<Vec<_>>>()?;
    let (mean, se) = jackknife_mean(&values, JACKKNIFE_BLOCKS)?;
    let sites = snapshots.first().map_or(0, Snapshot::len);
    Ok(EntropyEstimate { s_d: mean, standard_error: se, n_s: values.len(), sites, tag: EstimatorTag::Cid })
}

/// Exact entropy per site by enumerating every outcome.
pub fn exact_entropy(model: &BornModel) -> Result<f64> {
    let n = model.sites();
    if n > 24 {
        return Err(Error::Invalid(format!("{n} sites is too many to enumerate")));
    }
    let (rows, cols) = model.snapshot_shape();
    let mut total = 0.0;
    for k in 0..1u64 << n {
        let lp = model.log_prob(&Snapshot::from_index(rows, cols, k))?;
        if lp.is_finite() {
            total -= lp.exp2() * lp;
        }
    }
    Ok(total / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexityPoint {
    pub l: usize,
    pub n_s: usize,
    pub epsilon: f64,
    /// Error of `epsilon`, combining both estimates.
    pub epsilon_err: f64,
    pub sigma_cid: f64,
}

/// `ε = |E[CID] - s_d|` against a reference and `σ_CID` = error of the mean.
pub fn epsilon_sigma(l: usize, cid_est: &EntropyEstimate, reference: (f64, f64)) -> ComplexityPoint {
    ComplexityPoint {
        l,
        n_s: cid_est.n_s,
        epsilon: (cid_est.s_d - reference.0).abs(),
        epsilon_err: cid_est.standard_error.hypot(reference.1),
        sigma_cid: cid_est.standard_error,
    }
}

/// Smallest `N_s` in the doubling sequence `2, 4, 8, ...` (up to `cap`)
/// where `σ ≤ α ε`, with `eval(N_s) = (σ, ε)` re-estimated at each trial.
pub fn sample_budget<F>(alpha: f64, cap: usize, mut eval: F) -> Result<usize>
where
    F: FnMut(usize) -> Result<(f64, f64)>,
{
    if !(alpha > 0.0) {
        return Err(Error::NonPositiveInput(alpha));
    }
    let mut n = 2;
    while n <= cap {
        let (sigma, eps) = eval(n)?;
        if alpha.is_infinite() || sigma <= alpha * eps {
            return Ok(n);
        }
        n *= 2;
    }
    Err(Error::BudgetExceeded { cap })
}

/// `2L [s_d(2L) - s_d(L)]`.
pub fn gamma_subleading(s_d_at_l: f64, s_d_at_2l: f64, l: usize) -> f64 {
    2.0 * l as f64 * (s_d_at_2l - s_d_at_l)
}

/// Error of [`gamma_subleading`] from independent errors.
pub fn gamma_error(err_l: f64, err_2l: f64, l: usize) -> f64 {
    2.0 * l as f64 * err_l.hypot(err_2l)
}

/// `|Z_{J,l} / Z_J|^exponent` averaged over bond samples, where `Z_{J,l}`
/// has an extra vortex at the central plaquette. The bond samples fix the
/// ensemble weight; failing contractions are dropped and counted.
pub fn vortex_free_energy(model: &PlanarModel, bonds: &[BondField], exponent: f64, exec: Exec) -> Result<Estimate> {
    let geom = model.geom();
    let path = geom.vortex_insertion_path(geom.center())?;
    let values = map_slice(exec, bonds, |j| -> Option<f64> {
        if model.beta().is_none() {
            return Some(0.0);
        }
        let z = model.log_z(j).ok()?;
        let mut inserted = j.clone();
        inserted.flip_all(&path);
        let zl = model.log_z(&inserted).ok()?;
        Some((exponent * (zl - z).re).exp())
    });
    collect_estimate(values)
}

fn collect_estimate(values: Vec<Option<f64>>) -> Result<Estimate> {
    let dropped = values.iter().filter(|v| v.is_none()).count();
    let kept: Vec<f64> = values.into_iter().flatten().collect();
    let (mean, se) = jackknife_mean(&kept, JACKKNIFE_BLOCKS)?;
    Ok(Estimate { mean, standard_error: se, n: kept.len(), dropped })
}

/// Dual-spin pair used by the disorder-averaged correlator: the corner
/// `(0, L)` and the centre `(L/2, L/2)`.
pub fn correlator_sites(model: &PlanarModel) -> (usize, usize) {
    let geom = model.geom();
    let l = geom.side();
    let grid = geom.grid();
    (grid.spin(0, l), grid.spin(l / 2, l / 2))
}

/// `[<s_i s_j>]` over bond samples at the fixed site pair.
pub fn correlation_disorder_avg(model: &PlanarModel, bonds: &[BondField], exec: Exec) -> Result<Estimate> {
    let (i, j) = correlator_sites(model);
    let values = map_slice(exec, bonds, |b| -> Option<f64> {
        match model.beta() {
            None => Some(1.0),
            Some(beta) => spin_correlation(&IsingInstance::new(b.clone(), beta), i, j, model.opts()).ok(),
        }
    });
    collect_estimate(values)
}

/// Draws `n` Nishimori bond samples from one seeded stream.
pub fn nishimori_bonds(model: &PlanarModel, n: usize, seed: u64, exec: Exec) -> Result<Vec<BondField>> {
    use rand::SeedableRng;
    let chunks = 16.min(n.max(1));
    let parts = map_indexed(exec, chunks, |c| -> Result<Vec<BondField>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let share = n / chunks + usize::from(c < n % chunks);
        (0..share).map(|_| model.direct_sample(&mut rng).map(|(_, b)| b)).collect()
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
