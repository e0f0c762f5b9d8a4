//! Snapshot samplers.
//!
//! The generic chain is Metropolis over snapshots with pair and single-site
//! flips, accepting with `min(1, ρ'/ρ)` and re-evaluating `log2 ρ` from
//! scratch. The TFIM chain does the same with low-rank determinant updates.
//! The planar models sample bond fields instead (every `x` is a gauge orbit
//! of bonds, so the `x`-marginal is the Born distribution):
//!
//! - Nishimori: independent bonds, exact.
//! - deformed paramagnet: replica cluster updates, see [`ReplicaClusterSampler`].
//! - coherent: single-edge Metropolis sweeps with cached environments.
//!
//! For the bond samplers one sweep counts as `N` steps, so the defaults of
//! `5N` thermalization steps and `N`-step thinning become 5 sweeps and 1.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::born_models::{BornModel, ModelKind, PlanarModel, ReplicaClusterSampler};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Exec};
use crate::fermion_tfim::{TfimModel, TfimTracker};
use crate::lattice::{vortex_of_bonds, BondField, Snapshot};
use crate::tn_ising::{EdgeFlipSweeper, IsingNetwork};

/// Relative weights of pair flips and single-site flips.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProposalMix {
    pub pair: f64,
    pub single: f64,
}

impl ProposalMix {
    pub const PAIRS: ProposalMix = ProposalMix { pair: 1.0, single: 0.0 };
    pub const BALANCED: ProposalMix = ProposalMix { pair: 0.5, single: 0.5 };

    fn validate(self) -> Result<Self> {
        if !(self.pair >= 0.0 && self.single >= 0.0 && self.pair + self.single > 0.0) {
            return Err(Error::Invalid(format!("bad proposal mix {self:?}")));
        }
        Ok(self)
    }

    fn pair_probability(self) -> f64 {
        self.pair / (self.pair + self.single)
    }

    /// Pairs only for TFIM (parity preserving), half and half otherwise.
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Tfim => Self::PAIRS,
            _ => Self::BALANCED,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig {
    pub proposal: ProposalMix,
    /// Steps before the first kept sample; `None` means `5N`.
    pub thermalization: Option<usize>,
    /// Steps between kept samples; `None` means `N`.
    pub thinning: Option<usize>,
    pub samples: usize,
    pub seed: u64,
    pub chain: u64,
}

impl ChainConfig {
    pub fn new(samples: usize, seed: u64, chain: u64) -> Self {
        Self { proposal: ProposalMix::PAIRS, thermalization: None, thinning: None, samples, seed, chain }
    }

    pub fn with_proposal(mut self, proposal: ProposalMix) -> Self {
        self.proposal = proposal;
        self
    }

    pub fn thermalization_steps(&self, n: usize) -> usize {
        self.thermalization.unwrap_or(5 * n)
    }

    pub fn thinning_steps(&self, n: usize) -> Result<usize> {
        let t = self.thinning.unwrap_or(n);
        if t == 0 {
            return Err(Error::Invalid("thinning must be >= 1".into()));
        }
        Ok(t)
    }

    /// The chain's private random stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.chain);
        rng
    }
}

/// Current snapshot and its cached `log2 ρ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub snapshot: Snapshot,
    pub log2p: f64,
    pub accepted: u64,
    pub proposed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub snapshot: Snapshot,
    pub log2p: f64,
    /// Bond field behind a planar snapshot.
    pub bonds: Option<BondField>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainRun {
    pub chain: u64,
    pub samples: Vec<Sample>,
    pub accepted: u64,
    pub proposed: u64,
}

impl ChainRun {
    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// A distribution over snapshots with a fixed shape.
pub trait Target {
    fn shape(&self) -> (usize, usize);
    fn log2p(&self, x: &Snapshot) -> Result<f64>;
    /// Site pairs for pair flips.
    fn pairs(&self) -> Vec<(usize, usize)>;
}

impl Target for BornModel {
    fn shape(&self) -> (usize, usize) {
        self.snapshot_shape()
    }

    fn log2p(&self, x: &Snapshot) -> Result<f64> {
        self.log_prob(x)
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        match self {
            BornModel::Tfim(m) => m.geom().bonds(),
            BornModel::Planar(m) => m.geom().vortex_bonds(),
        }
    }
}

/// `min(1, 2^{Δ})` test.
fn accept<R: Rng + ?Sized>(rng: &mut R, log2_ratio: f64) -> bool {
    if log2_ratio >= 0.0 {
        return true;
    }
    if log2_ratio == f64::NEG_INFINITY || log2_ratio.is_nan() {
        return false;
    }
    rng.random::<f64>() < log2_ratio.exp2()
}

/// Sites touched by one proposal.
fn propose<R: Rng + ?Sized>(rng: &mut R, mix: ProposalMix, pairs: &[(usize, usize)], n: usize) -> ([usize; 2], usize) {
    if !pairs.is_empty() && rng.random::<f64>() < mix.pair_probability() {
        let (a, b) = pairs[rng.random_range(0..pairs.len())];
        ([a, b], 2)
    } else {
        ([rng.random_range(0..n), 0], 1)
    }
}

/// All-ones start with its probability.
pub fn initial_state<T: Target + ?Sized>(target: &T) -> Result<ChainState> {
    let (r, c) = target.shape();
    let snapshot = Snapshot::filled(r, c, 1);
    let log2p = target.log2p(&snapshot)?;
    Ok(ChainState { snapshot, log2p, accepted: 0, proposed: 0 })
}

/// One Metropolis step with full re-evaluation.
pub fn step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    pairs: &[(usize, usize)],
    state: &mut ChainState,
    mix: ProposalMix,
    rng: &mut R,
) -> Result<()> {
    let n = state.snapshot.len();
    let (sites, k) = propose(rng, mix, pairs, n);
    let mut next = state.snapshot.clone();
    for &s in &sites[..k] {
        next.flip(s);
    }
    let lp = target.log2p(&next).map_err(|e| Error::ChainHalted {
        step: state.proposed as usize,
        reason: e.to_string(),
    })?;
    state.proposed += 1;
    if accept(rng, lp - state.log2p) {
        state.snapshot = next;
        state.log2p = lp;
        state.accepted += 1;
    }
    Ok(())
}

/// Thermalizes, then keeps `cfg.samples` thinned states.
pub fn run_chain<T: Target + ?Sized>(target: &T, cfg: &ChainConfig) -> Result<ChainRun> {
    let mix = cfg.proposal.validate()?;
    let mut rng = cfg.rng();
    let pairs = target.pairs();
    let mut state = initial_state(target)?;
    let n = state.snapshot.len();
    let thin = cfg.thinning_steps(n)?;
    for _ in 0..cfg.thermalization_steps(n) {
        step(target, &pairs, &mut state, mix, &mut rng)?;
    }
    let mut samples = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        for _ in 0..thin {
            step(target, &pairs, &mut state, mix, &mut rng)?;
        }
        samples.push(Sample { snapshot: state.snapshot.clone(), log2p: state.log2p, bonds: None });
    }
    Ok(ChainRun { chain: cfg.chain, samples, accepted: state.accepted, proposed: state.proposed })
}

/// TFIM chain with incremental determinant ratios.
pub fn run_tfim_chain(model: &TfimModel, cfg: &ChainConfig) -> Result<ChainRun> {
    let mix = cfg.proposal.validate()?;
    let mut rng = cfg.rng();
    let n = model.sites();
    let pairs = model.geom().bonds();
    let thin = cfg.thinning_steps(n)?;
    let mut tracker = TfimTracker::new(model, &vec![1; n])?;
    let (mut accepted, mut proposed) = (0u64, 0u64);
    let mut advance = |tracker: &mut TfimTracker, rng: &mut ChaCha8Rng| -> Result<()> {
        let (sites, k) = propose(rng, mix, &pairs, n);
        let sites = &sites[..k];
        let ratio = tracker.log2_ratio(sites);
        proposed += 1;
        if accept(rng, ratio) {
            tracker.accept(model, sites, ratio).map_err(|e| Error::ChainHalted {
                step: proposed as usize,
                reason: e.to_string(),
            })?;
            accepted += 1;
        }
        Ok(())
    };
    for _ in 0..cfg.thermalization_steps(n) {
        advance(&mut tracker, &mut rng)?;
    }
    let mut samples = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        for _ in 0..thin {
            advance(&mut tracker, &mut rng)?;
        }
        samples.push(Sample { snapshot: Snapshot::chain(tracker.state().to_vec())?, log2p: tracker.log2p(), bonds: None });
    }
    Ok(ChainRun { chain: cfg.chain, samples, accepted, proposed })
}

fn sweeps(steps: usize, n: usize) -> usize {
    steps.div_ceil(n.max(1))
}

fn nishimori_draws(model: &PlanarModel, cfg: &ChainConfig) -> Result<ChainRun> {
    let mut rng = cfg.rng();
    let mut samples = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.samples {
        let (snapshot, bonds) = model.direct_sample(&mut rng)?;
        let log2p = model
            .log_prob_bonds(&bonds)
            .map_err(|e| Error::ChainHalted { step: i, reason: e.to_string() })?;
        samples.push(Sample { snapshot, log2p, bonds: Some(bonds) });
    }
    let n = cfg.samples as u64;
    Ok(ChainRun { chain: cfg.chain, samples, accepted: n, proposed: n })
}

fn cluster_chain(model: &PlanarModel, cfg: &ChainConfig) -> Result<ChainRun> {
    let mut rng = cfg.rng();
    let n = model.geom().vortex_count();
    let mut sampler = ReplicaClusterSampler::new(model)?;
    for _ in 0..sweeps(cfg.thermalization_steps(n), n) {
        sampler.sweep(&mut rng);
    }
    let thin = sweeps(cfg.thinning_steps(n)?, n);
    let mut samples = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.samples {
        for _ in 0..thin {
            sampler.sweep(&mut rng);
        }
        let bonds = sampler.draw_bonds(&mut rng);
        let log2p = model
            .log_prob_bonds(&bonds)
            .map_err(|e| Error::ChainHalted { step: i, reason: e.to_string() })?;
        samples.push(Sample { snapshot: vortex_of_bonds(&bonds), log2p, bonds: Some(bonds) });
    }
    let proposed = (cfg.samples * thin) as u64;
    Ok(ChainRun { chain: cfg.chain, samples, accepted: proposed, proposed })
}

/// Metropolis over bond fields with weight `|Z_J|^power`, one edge at a time.
fn edge_flip_chain(model: &PlanarModel, cfg: &ChainConfig) -> Result<ChainRun> {
    let mut rng = cfg.rng();
    let geom = model.geom();
    let n = geom.vortex_count();
    let beta = model.beta().ok_or_else(|| Error::Invalid("edge-flip chain needs a finite coupling".into()))?;
    let start = BondField::ferromagnetic(geom);
    let net = IsingNetwork::<Complex64>::ising(geom.grid(), start.values(), beta)?;
    let mut sweeper = EdgeFlipSweeper::new(net, start.values().to_vec(), model.opts())?;
    let power = model.weight_power();
    let (mut accepted, mut proposed) = (0u64, 0u64);
    let mut last_log_z = Complex64::new(0.0, 0.0);
    let mut run_sweep = |sweeper: &mut EdgeFlipSweeper<Complex64>, rng: &mut ChaCha8Rng, step: usize| -> Result<Complex64> {
        let summary = sweeper
            .sweep(|p| {
                let r = p.ratio.norm();
                let log2_ratio = if r > 0.0 { power * r.log2() } else { f64::NEG_INFINITY };
                accept(rng, log2_ratio)
            })
            .map_err(|e| Error::ChainHalted { step, reason: e.to_string() })?;
        accepted += summary.accepted as u64;
        proposed += summary.proposed as u64;
        Ok(summary.log_z)
    };
    for s in 0..sweeps(cfg.thermalization_steps(n), n) {
        last_log_z = run_sweep(&mut sweeper, &mut rng, s)?;
    }
    let thin = sweeps(cfg.thinning_steps(n)?, n);
    let mut samples = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.samples {
        for _ in 0..thin {
            last_log_z = run_sweep(&mut sweeper, &mut rng, i)?;
        }
        let bonds = BondField::new(geom, sweeper.couplings().to_vec())?;
        let log2p = model.log_prob_from_log_z(last_log_z);
        samples.push(Sample { snapshot: vortex_of_bonds(&bonds), log2p, bonds: Some(bonds) });
    }
    Ok(ChainRun { chain: cfg.chain, samples, accepted, proposed })
}

/// One chain of the model's native sampler.
pub fn sample_chain(model: &BornModel, cfg: &ChainConfig) -> Result<ChainRun> {
    match model {
        BornModel::Tfim(m) => run_tfim_chain(m, cfg),
        BornModel::Planar(m) => match m.kind() {
            ModelKind::Nishimori => nishimori_draws(m, cfg),
            ModelKind::DeformedParamagnet if m.param() >= 0.0 => cluster_chain(m, cfg),
            _ if m.beta().is_none() => nishimori_draws_trivial(m, cfg),
            _ => edge_flip_chain(m, cfg),
        },
    }
}

/// Infinite coupling: the all-ones snapshot with probability one.
fn nishimori_draws_trivial(model: &PlanarModel, cfg: &ChainConfig) -> Result<ChainRun> {
    let bonds = BondField::ferromagnetic(model.geom());
    let sample = Sample { snapshot: vortex_of_bonds(&bonds), log2p: 0.0, bonds: Some(bonds) };
    Ok(ChainRun { chain: cfg.chain, samples: vec![sample; cfg.samples], accepted: 0, proposed: 0 })
}

/// `chains` independent chains sharing `template` except for the chain
/// index, with `total` samples split as evenly as possible. Results are in
/// chain order whatever the executor.
pub fn sample_chains(model: &BornModel, template: &ChainConfig, chains: usize, total: usize, exec: Exec) -> Result<Vec<ChainRun>> {
    let chains = chains.max(1);
    map_indexed(exec, chains, |i| {
        let share = total / chains + usize::from(i < total % chains);
        let cfg = ChainConfig { samples: share, chain: template.chain + i as u64, ..template.clone() };
        sample_chain(model, &cfg)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Boundary, ChainGeom};

    /// Two-site chain whose only outcomes are `++` and `--` with ratio 3:1.
    struct Toy;

    impl Target for Toy {
        fn shape(&self) -> (usize, usize) {
            (1, 2)
        }
        fn log2p(&self, x: &Snapshot) -> Result<f64> {
            Ok(match x.values() {
                [1, 1] => 0.75f64.log2(),
                [-1, -1] => 0.25f64.log2(),
                _ => f64::NEG_INFINITY,
            })
        }
        fn pairs(&self) -> Vec<(usize, usize)> {
            vec![(0, 1)]
        }
    }

    struct Uniform(usize);

    impl Target for Uniform {
        fn shape(&self) -> (usize, usize) {
            (1, self.0)
        }
        fn log2p(&self, _: &Snapshot) -> Result<f64> {
            Ok(-(self.0 as f64))
        }
        fn pairs(&self) -> Vec<(usize, usize)> {
            (1..self.0).map(|i| (i - 1, i)).collect()
        }
    }

    #[test]
    fn uniform_target_always_accepts() {
        let mut cfg = ChainConfig::new(50, 1, 0).with_proposal(ProposalMix::BALANCED);
        cfg.thinning = Some(3);
        let run = run_chain(&Uniform(6), &cfg).unwrap();
        assert_eq!(run.accepted, run.proposed);
    }

    #[test]
    fn two_outcome_stationary_frequencies() {
        let mut cfg = ChainConfig::new(100_000, 9, 0);
        cfg.thinning = Some(1);
        let run = run_chain(&Toy, &cfg).unwrap();
        let n = run.samples.len() as f64;
        let up = run.samples.iter().filter(|s| s.snapshot.values()[0] == 1).count() as f64 / n;
        // the two-state chain has eigenvalue -1/3, so successive samples are
        // anticorrelated and the iid error is an upper bound
        let sigma = (0.75 * 0.25 / n).sqrt();
        assert!((up - 0.75).abs() < 3.0 * sigma, "{up}");
    }

    #[test]
    fn zero_samples_is_empty() {
        let model = BornModel::tfim(0.5, ChainGeom::new(6, Boundary::Open).unwrap()).unwrap();
        let run = sample_chain(&model, &ChainConfig::new(0, 3, 0)).unwrap();
        assert!(run.samples.is_empty());
        assert!(run.proposed > 0);
    }

    #[test]
    fn tfim_chain_tracks_log_prob() {
        let model = BornModel::tfim(0.6, ChainGeom::new(10, Boundary::Open).unwrap()).unwrap();
        let run = sample_chain(&model, &ChainConfig::new(300, 4, 2)).unwrap();
        for s in &run.samples {
            assert!((s.log2p - model.log_prob(&s.snapshot).unwrap()).abs() < 1e-9);
            assert_eq!(s.snapshot.parity(), 1);
        }
    }

    #[test]
    fn streams_are_reproducible() {
        let model = BornModel::tfim(0.4, ChainGeom::new(12, Boundary::Open).unwrap()).unwrap();
        let cfg = ChainConfig::new(40, 77, 0);
        let a = sample_chains(&model, &cfg, 3, 40, Exec::Sequential).unwrap();
        let b = sample_chains(&model, &cfg, 3, 40, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|r| r.samples.len()).sum::<usize>(), 40);
        assert_ne!(a[0].samples, a[1].samples);
    }

    #[test]
    fn planar_samples_carry_exact_log_prob() {
        let opts = crate::tn_ising::ContractOptions::default();
        for model in [
            BornModel::deformed_paramagnet(0.2, 4, opts).unwrap(),
            BornModel::nishimori(0.1, 4, opts).unwrap(),
            BornModel::coherent(0.1 * std::f64::consts::PI, 4, opts).unwrap(),
        ] {
            let run = sample_chain(&model, &ChainConfig::new(5, 8, 1)).unwrap();
            for s in &run.samples {
                let lp = model.log_prob(&s.snapshot).unwrap();
                assert!((s.log2p - lp).abs() < 1e-6, "{:?}: {} vs {lp}", model.kind(), s.log2p);
                assert_eq!(vortex_of_bonds(s.bonds.as_ref().unwrap()), s.snapshot);
            }
        }
    }
}
