//! The four snapshot distributions behind one interface.
//!
//! The chain model is the free-fermion TFIM ground state. The three planar
//! models live on an `L x L` vortex grid whose outcome `x` fixes a bond field
//! `J` up to gauge, and `ρ_x` is a power of the dual Ising partition function
//! `Z_J`:
//!
//! | model               | β                            | ρ_x ∝   |
//! |---------------------|------------------------------|---------|
//! | deformed paramagnet | `tanh β = 1 - 2q`            | `Z²`    |
//! | Nishimori           | `tanh β = 1 - 2p`            | `Z`     |
//! | coherent            | `e^{2β} = i tan φ`           | `|Z|²`  |

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fermion_tfim::TfimModel;
use crate::lattice::{vortex_of_bonds, BondField, ChainGeom, DualSquareGeom, Snapshot};
use crate::tn_ising::{contract_log_z, replica_norm_logsum, ContractOptions, IsingInstance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Tfim,
    DeformedParamagnet,
    Nishimori,
    Coherent,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Tfim => "tfim",
            ModelKind::DeformedParamagnet => "deformed_paramagnet",
            ModelKind::Nishimori => "nishimori",
            ModelKind::Coherent => "coherent",
        }
    }

    pub fn is_planar(self) -> bool {
        self != ModelKind::Tfim
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tfim" => Ok(ModelKind::Tfim),
            "deformed_paramagnet" | "deformed" | "dp" => Ok(ModelKind::DeformedParamagnet),
            "nishimori" | "rbim" => Ok(ModelKind::Nishimori),
            "coherent" => Ok(ModelKind::Coherent),
            other => Err(Error::Invalid(format!("unknown model '{other}'"))),
        }
    }
}

/// `atanh(y)` continued past `y = 1` onto the branch `Im β = π/2`.
fn atanh_complex(y: f64) -> Complex64 {
    let re = 0.5 * ((1.0 + y) / (1.0 - y)).abs().ln();
    let im = if y.abs() > 1.0 { std::f64::consts::FRAC_PI_2 } else { 0.0 };
    Complex64::new(re, im)
}

/// Dual coupling of the deformed paramagnet. `None` at `q = 0` (β = ∞).
///
/// Negative `q` (an antiferromagnetic deformation) gives `tanh β > 1`, handled
/// on the complex branch; only the modulus of `Z` enters `ρ`.
pub fn deformed_beta(q: f64) -> Option<Complex64> {
    (q != 0.0).then(|| atanh_complex(1.0 - 2.0 * q))
}

/// Nishimori temperature. `None` at `p = 0`.
pub fn nishimori_beta(p: f64) -> Option<f64> {
    (p != 0.0).then(|| 0.5 * ((1.0 - p) / p).ln())
}

/// `β = ln(tan φ)/2 + iπ/4`.
pub fn coherent_beta(phi: f64) -> Complex64 {
    Complex64::new(0.5 * phi.tan().ln(), std::f64::consts::FRAC_PI_4)
}

/// Partner of `q` under the sublattice flip, which reverses the sign of the
/// deformation `K` with `tanh K = q / (1 - q)`.
pub fn sublattice_partner(q: f64) -> f64 {
    -q / (1.0 - 2.0 * q)
}

/// Kramers-Wannier dual of a chain coupling: `tanh β = e^{-2K}`.
pub fn dual_beta(k: f64) -> f64 {
    (-2.0 * k).exp().atanh()
}

/// One of the three vortex-grid models.
#[derive(Clone, Debug)]
pub struct PlanarModel {
    kind: ModelKind,
    param: f64,
    geom: DualSquareGeom,
    beta: Option<Complex64>,
    /// Natural log of the sum of unnormalized weights, or of the per-bond
    /// factor for Nishimori.
    log_norm: f64,
    opts: ContractOptions,
}

impl PlanarModel {
    pub fn new(kind: ModelKind, param: f64, l: usize, opts: ContractOptions) -> Result<Self> {
        let geom = DualSquareGeom::new(l)?;
        let edges = geom.edge_count() as f64;
        let (beta, log_norm) = match kind {
            ModelKind::DeformedParamagnet => {
                if !(param < 0.5) {
                    return Err(Error::ParameterOutOfRange { name: "q", value: param, range: "(-inf, 0.5)" });
                }
                let beta = deformed_beta(param);
                let norm = match beta {
                    Some(b) => replica_norm_logsum(geom, b, opts)?,
                    None => 0.0,
                };
                (beta, norm)
            }
            ModelKind::Nishimori => {
                if !(0.0..=0.5).contains(&param) {
                    return Err(Error::ParameterOutOfRange { name: "p", value: param, range: "[0, 0.5]" });
                }
                let beta = nishimori_beta(param).map(|b| Complex64::new(b, 0.0));
                let norm = if param > 0.0 {
                    0.5 * edges * (param * (1.0 - param)).ln() - std::f64::consts::LN_2
                } else {
                    0.0
                };
                (beta, norm)
            }
            ModelKind::Coherent => {
                if !(param > 0.0 && param < std::f64::consts::FRAC_PI_2) {
                    return Err(Error::ParameterOutOfRange { name: "phi", value: param, range: "(0, pi/2)" });
                }
                let beta = coherent_beta(param);
                (Some(beta), replica_norm_logsum(geom, beta, opts)?)
            }
            ModelKind::Tfim => return Err(Error::Invalid("tfim is not a planar model".into())),
        };
        Ok(Self { kind, param, geom, beta, log_norm, opts })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn param(&self) -> f64 {
        self.param
    }

    pub fn geom(&self) -> DualSquareGeom {
        self.geom
    }

    /// `None` when the coupling is infinite (`q = 0` or `p = 0`).
    pub fn beta(&self) -> Option<Complex64> {
        self.beta
    }

    pub fn opts(&self) -> ContractOptions {
        self.opts
    }

    /// Power of `|Z_J|` in `ρ`.
    pub fn weight_power(&self) -> f64 {
        match self.kind {
            ModelKind::Nishimori => 1.0,
            _ => 2.0,
        }
    }

    /// Normalized `log2 ρ` from the natural log of `Z_J`.
    pub fn log_prob_from_log_z(&self, log_z: Complex64) -> f64 {
        let ln = match self.kind {
            ModelKind::Nishimori => log_z.re + self.log_norm,
            _ => 2.0 * log_z.re - self.log_norm,
        };
        ln / std::f64::consts::LN_2
    }

    /// `ln Z_J` for any bond field of this grid.
    pub fn log_z(&self, bonds: &BondField) -> Result<Complex64> {
        let beta = self.beta.ok_or_else(|| Error::Invalid("partition function at infinite coupling".into()))?;
        Ok(contract_log_z(&IsingInstance::new(bonds.clone(), beta), self.opts)?.log_z)
    }

    /// `log2 ρ` of the vortex configuration of `bonds`.
    pub fn log_prob_bonds(&self, bonds: &BondField) -> Result<f64> {
        if bonds.geom() != self.geom {
            return Err(Error::GeometryMismatch { expected: self.geom.edge_count(), found: bonds.values().len() });
        }
        if self.beta.is_none() {
            let clean = bonds.geom().vortex_count() == 0 || vortex_of_bonds(bonds).values().iter().all(|&v| v > 0);
            return Ok(if clean { 0.0 } else { f64::NEG_INFINITY });
        }
        Ok(self.log_prob_from_log_z(self.log_z(bonds)?))
    }

    pub fn log_prob(&self, x: &Snapshot) -> Result<f64> {
        let bonds = crate::lattice::reference_bonds(self.geom, x)?;
        self.log_prob_bonds(&bonds)
    }

    /// Independent bond draws with `P(J_e = -1) = p`.
    pub fn direct_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Snapshot, BondField)> {
        if self.kind != ModelKind::Nishimori {
            return Err(Error::Invalid(format!("{} has no direct sampler", self.kind)));
        }
        let values = (0..self.geom.edge_count())
            .map(|_| if rng.random::<f64>() < self.param { -1 } else { 1 })
            .collect();
        let bonds = BondField::new(self.geom, values)?;
        Ok((vortex_of_bonds(&bonds), bonds))
    }
}

/// Any of the four models.
#[derive(Clone, Debug)]
pub enum BornModel {
    Tfim(TfimModel),
    Planar(PlanarModel),
}

impl BornModel {
    pub fn tfim(j: f64, geom: ChainGeom) -> Result<Self> {
        Ok(BornModel::Tfim(TfimModel::new(j, geom)?))
    }

    pub fn deformed_paramagnet(q: f64, l: usize, opts: ContractOptions) -> Result<Self> {
        Ok(BornModel::Planar(PlanarModel::new(ModelKind::DeformedParamagnet, q, l, opts)?))
    }

    pub fn nishimori(p: f64, l: usize, opts: ContractOptions) -> Result<Self> {
        Ok(BornModel::Planar(PlanarModel::new(ModelKind::Nishimori, p, l, opts)?))
    }

    pub fn coherent(phi: f64, l: usize, opts: ContractOptions) -> Result<Self> {
        Ok(BornModel::Planar(PlanarModel::new(ModelKind::Coherent, phi, l, opts)?))
    }

    /// Builds a model from its kind. `l` is the chain length or grid side.
    pub fn build(kind: ModelKind, param: f64, l: usize, boundary: crate::lattice::Boundary, opts: ContractOptions) -> Result<Self> {
        match kind {
            ModelKind::Tfim => Self::tfim(param, ChainGeom::new(l, boundary)?),
            _ => Ok(BornModel::Planar(PlanarModel::new(kind, param, l, opts)?)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            BornModel::Tfim(_) => ModelKind::Tfim,
            BornModel::Planar(m) => m.kind,
        }
    }

    pub fn param(&self) -> f64 {
        match self {
            BornModel::Tfim(m) => m.coupling(),
            BornModel::Planar(m) => m.param,
        }
    }

    /// Number of measured sites.
    pub fn sites(&self) -> usize {
        match self {
            BornModel::Tfim(m) => m.sites(),
            BornModel::Planar(m) => m.geom.vortex_count(),
        }
    }

    /// `(rows, cols)` of a snapshot.
    pub fn snapshot_shape(&self) -> (usize, usize) {
        match self {
            BornModel::Tfim(m) => (1, m.sites()),
            BornModel::Planar(m) => m.geom.snapshot_shape(),
        }
    }

    /// Normalized `log2 ρ_x`.
    pub fn log_prob(&self, x: &Snapshot) -> Result<f64> {
        match self {
            BornModel::Tfim(m) => {
                if x.len() != m.sites() {
                    return Err(Error::GeometryMismatch { expected: m.sites(), found: x.len() });
                }
                m.log_born_prob(x.values())
            }
            BornModel::Planar(m) => m.log_prob(x),
        }
    }

    pub fn as_planar(&self) -> Option<&PlanarModel> {
        match self {
            BornModel::Planar(m) => Some(m),
            BornModel::Tfim(_) => None,
        }
    }

    pub fn as_tfim(&self) -> Option<&TfimModel> {
        match self {
            BornModel::Tfim(m) => Some(m),
            BornModel::Planar(_) => None,
        }
    }
}

/// Exact bond-field sampler for the deformed paramagnet.
///
/// Writing `Z_J² = Σ_{s,s'} exp(β Σ_e J_e (s_a s_b + s'_a s'_b))` and gauging
/// `J_e → J_e s_a s_b` leaves the relative spin `τ = s s'` as a ferromagnet
/// with `e^{2K} = cosh 2β`, sampled by Swendsen-Wang. Given `τ`, each gauged
/// bond is independent: `P(+1) = e^{2β} / (2 cosh 2β)` on aligned edges and
/// `1/2` on the rest.
#[derive(Clone, Debug)]
pub struct ReplicaClusterSampler {
    geom: DualSquareGeom,
    tau: Vec<i8>,
    p_bond: f64,
    p_plus: f64,
}

impl ReplicaClusterSampler {
    pub fn new(model: &PlanarModel) -> Result<Self> {
        if model.kind != ModelKind::DeformedParamagnet || model.param < 0.0 {
            return Err(Error::Invalid("cluster sampler needs the deformed paramagnet with q >= 0".into()));
        }
        let beta = model.beta.map_or(f64::INFINITY, |b| b.re);
        let geom = model.geom;
        Ok(Self {
            geom,
            tau: vec![1; geom.spin_count()],
            p_bond: 1.0 - 1.0 / (2.0 * beta).cosh(),
            p_plus: 1.0 / (1.0 + (-4.0 * beta).exp()),
        })
    }

    /// One Swendsen-Wang update of `τ`.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let grid = self.geom.grid();
        let n = grid.spin_count();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut a: usize) -> usize {
            while parent[a] != a {
                parent[a] = parent[parent[a]];
                a = parent[a];
            }
            a
        }
        for e in 0..grid.edge_count() {
            let (a, b) = grid.edge_endpoints(e);
            if self.tau[a] == self.tau[b] && rng.random::<f64>() < self.p_bond {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra] = rb;
                }
            }
        }
        let mut sign = vec![0i8; n];
        for s in 0..n {
            let root = find(&mut parent, s);
            if sign[root] == 0 {
                sign[root] = if rng.random::<bool>() { 1 } else { -1 };
            }
            self.tau[s] = sign[root];
        }
    }

    /// Draws a bond field given the current `τ`.
    pub fn draw_bonds<R: Rng + ?Sized>(&self, rng: &mut R) -> BondField {
        let grid = self.geom.grid();
        let values = (0..grid.edge_count())
            .map(|e| {
                let (a, b) = grid.edge_endpoints(e);
                let p = if self.tau[a] == self.tau[b] { self.p_plus } else { 0.5 };
                if rng.random::<f64>() < p {
                    1
                } else {
                    -1
                }
            })
            .collect();
        BondField::new(self.geom, values).expect("edge count matches geometry")
    }

    pub fn tau(&self) -> &[i8] {
        &self.tau
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn enumerate_total(m: &PlanarModel) -> f64 {
        let (r, c) = m.geom.snapshot_shape();
        (0..1u64 << (r * c))
            .map(|k| m.log_prob(&Snapshot::from_index(r, c, k)).unwrap().exp2())
            .sum()
    }

    #[test]
    fn planar_normalization() {
        let opts = ContractOptions::new(1e-14, 128).unwrap();
        for l in [1, 2, 3] {
            for (kind, param) in [
                (ModelKind::DeformedParamagnet, 0.1),
                (ModelKind::DeformedParamagnet, 0.3),
                (ModelKind::DeformedParamagnet, -0.2),
                (ModelKind::DeformedParamagnet, sublattice_partner(0.3)),
                (ModelKind::Nishimori, 0.05),
                (ModelKind::Nishimori, 0.2),
                (ModelKind::Nishimori, 0.5),
                (ModelKind::Coherent, 0.1 * std::f64::consts::PI),
                (ModelKind::Coherent, 0.4 * std::f64::consts::PI),
            ] {
                let m = PlanarModel::new(kind, param, l, opts).unwrap();
                let total = enumerate_total(&m);
                assert!((total - 1.0).abs() < 1e-6, "{kind} {param} L={l}: {total}");
            }
        }
    }

    /// `Σ_S t^{|S|}` over edge sets of the qubit lattice (including one
    /// exterior edge per open side of each boundary site) whose odd-degree
    /// sites are exactly the `-1` sites of `x`, for every `x` at once.
    fn loop_gas_amplitudes(l: usize, t: f64) -> Vec<f64> {
        let site = |r: usize, c: usize| r * l + c;
        let mut edges: Vec<Vec<usize>> = Vec::new();
        for r in 0..l {
            for c in 0..l {
                if c + 1 < l {
                    edges.push(vec![site(r, c), site(r, c + 1)]);
                }
                if r + 1 < l {
                    edges.push(vec![site(r, c), site(r + 1, c)]);
                }
                let open_sides = [r == 0, r + 1 == l, c == 0, c + 1 == l];
                for _ in open_sides.iter().filter(|&&b| b) {
                    edges.push(vec![site(r, c)]);
                }
            }
        }
        let masks: Vec<u64> = edges.iter().map(|e| e.iter().fold(0u64, |m, &s| m ^ (1 << s))).collect();
        let mut amp = vec![0.0; 1 << (l * l)];
        for set in 0u64..1 << masks.len() {
            let mut boundary = 0u64;
            let mut bits = set;
            while bits != 0 {
                boundary ^= masks[bits.trailing_zeros() as usize];
                bits &= bits - 1;
            }
            amp[boundary as usize] += t.powi(set.count_ones() as i32);
        }
        amp
    }

    #[test]
    fn matches_deformed_product_state_amplitudes() {
        let opts = ContractOptions::default();
        for l in [2, 3] {
            for q in [0.15, 0.3, sublattice_partner(0.15), -0.4] {
                let m = PlanarModel::new(ModelKind::DeformedParamagnet, q, l, opts).unwrap();
                let amp = loop_gas_amplitudes(l, q / (1.0 - q));
                let norm: f64 = amp.iter().map(|a| a * a).sum();
                for (k, a) in amp.iter().enumerate() {
                    let p = m.log_prob(&Snapshot::from_index(l, l, k as u64)).unwrap().exp2();
                    // signed weights at q < 0 cost a few digits to cancellation
                    let tol = if q < 0.0 { 1e-6 } else { 1e-9 };
                    assert!((p - a * a / norm).abs() < tol, "L={l} q={q} x={k}: {p} vs {}", a * a / norm);
                }
            }
        }
    }

    #[test]
    fn infinite_coupling_limits() {
        let opts = ContractOptions::default();
        for m in [
            PlanarModel::new(ModelKind::DeformedParamagnet, 0.0, 3, opts).unwrap(),
            PlanarModel::new(ModelKind::Nishimori, 0.0, 3, opts).unwrap(),
        ] {
            assert_eq!(m.log_prob(&Snapshot::filled(3, 3, 1)).unwrap(), 0.0);
            let mut x = Snapshot::filled(3, 3, 1);
            x.flip(4);
            assert_eq!(m.log_prob(&x).unwrap(), f64::NEG_INFINITY);
        }
        let tiny = PlanarModel::new(ModelKind::Coherent, 1e-4, 3, opts).unwrap();
        assert!(tiny.log_prob(&Snapshot::filled(3, 3, 1)).unwrap().exp2() > 0.999);
    }

    #[test]
    fn parameter_ranges() {
        let opts = ContractOptions::default();
        assert!(PlanarModel::new(ModelKind::DeformedParamagnet, 0.5, 2, opts).is_err());
        assert!(PlanarModel::new(ModelKind::Nishimori, 0.6, 2, opts).is_err());
        assert!(PlanarModel::new(ModelKind::Coherent, 0.0, 2, opts).is_err());
        assert!(BornModel::tfim(1.2, ChainGeom::new(4, crate::lattice::Boundary::Open).unwrap()).is_err());
    }

    #[test]
    fn nishimori_density_of_vortices() {
        let m = PlanarModel::new(ModelKind::Nishimori, 0.1, 6, ContractOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = m.geom();
        let interior: Vec<usize> = (0..g.vortex_count()).collect();
        let n = 10_000;
        let mut hits = Vec::with_capacity(n);
        for _ in 0..n {
            let (x, _) = m.direct_sample(&mut rng).unwrap();
            let v = interior.iter().filter(|&&p| x.values()[p] < 0).count() as f64 / interior.len() as f64;
            hits.push(v);
        }
        let mean = hits.iter().sum::<f64>() / n as f64;
        let var = hits.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected = (1.0 - 0.8f64.powi(4)) / 2.0;
        assert!((mean - expected).abs() < 3.0 * (var / n as f64).sqrt(), "{mean} vs {expected}");
    }

    #[test]
    fn cluster_sampler_matches_enumeration() {
        let m = PlanarModel::new(ModelKind::DeformedParamagnet, 0.2, 2, ContractOptions::default()).unwrap();
        let mut s = ReplicaClusterSampler::new(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let mut counts = [0usize; 16];
        for _ in 0..n {
            s.sweep(&mut rng);
            let x = vortex_of_bonds(&s.draw_bonds(&mut rng));
            let k = x.values().iter().enumerate().map(|(i, &v)| ((v < 0) as usize) << i).sum::<usize>();
            counts[k] += 1;
        }
        for (k, &c) in counts.iter().enumerate() {
            let p = m.log_prob(&Snapshot::from_index(2, 2, k as u64)).unwrap().exp2();
            let f = c as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt().max(1e-6);
            assert!((f - p).abs() < 5.0 * se, "outcome {k}: {f} vs {p}");
        }
    }
}
