//! Boundary-MPS contraction of 2D Ising partition functions.
//!
//! Spins live on a [`SpinGrid`]. Every edge carries a 2x2 weight matrix
//! `W_e[s_a][s_b]` (index 0 is spin +1, index 1 is spin -1; `a` is above or
//! left of `b`) and spins may carry vertex weights. Rows are absorbed from the
//! bottom up into an MPS over the current row. Horizontal edges are applied by
//! threading each spin value one site to the right on an extra bond index, then
//! the MPS is brought to left-canonical form by QR and truncated right to left
//! by SVD, keeping the smallest bond with discarded relative weight `<= tol`.
//! Row norms are accumulated in log space.
//!
//! The same code runs over `f64` and `Complex64` weights.

pub mod sweep;

use nalgebra::{ComplexField, DMatrix, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{BondField, DualSquareGeom, SpinGrid};

pub use sweep::EdgeFlipSweeper;

/// Default truncation tolerance on discarded relative weight.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default hard cap on the bond dimension.
pub const DEFAULT_BOND_CAP: usize = 128;

/// Scalar type of a contraction.
pub trait Weight: ComplexField<RealField = f64> + Copy + Send + Sync + 'static {
    /// Converts from a complex value; real types keep only the real part.
    fn from_c64(z: Complex64) -> Self;
    fn to_c64(self) -> Complex64;
}

impl Weight for f64 {
    fn from_c64(z: Complex64) -> Self {
        z.re
    }
    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Weight for Complex64 {
    fn from_c64(z: Complex64) -> Self {
        z
    }
    fn to_c64(self) -> Complex64 {
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractOptions {
    pub tol: f64,
    pub bond_cap: usize,
}

impl Default for ContractOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, bond_cap: DEFAULT_BOND_CAP }
    }
}

impl ContractOptions {
    pub fn new(tol: f64, bond_cap: usize) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::ParameterOutOfRange { name: "tol", value: tol, range: "(0, inf)" });
        }
        if bond_cap == 0 {
            return Err(Error::Invalid("bond cap must be >= 1".into()));
        }
        Ok(Self { tol, bond_cap })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionResult {
    /// Natural log of `Z`; the imaginary part is the phase.
    pub log_z: Complex64,
    /// Sum of discarded relative weights over all truncations.
    pub truncation_error: f64,
    pub max_bond_dimension_used: usize,
}

/// An Ising model on the dual spins of a vortex grid.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingInstance {
    pub geom: DualSquareGeom,
    pub bonds: BondField,
    pub beta: Complex64,
}

impl IsingInstance {
    pub fn new(bonds: BondField, beta: Complex64) -> Self {
        Self { geom: bonds.geom(), bonds, beta }
    }

    pub fn real(bonds: BondField, beta: f64) -> Self {
        Self::new(bonds, Complex64::new(beta, 0.0))
    }

    pub fn is_real(&self) -> bool {
        self.beta.im == 0.0
    }
}

/// Edge and vertex weights on a spin grid.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingNetwork<T> {
    pub grid: SpinGrid,
    pub edges: Vec<[[T; 2]; 2]>,
    pub vertices: Option<Vec<[T; 2]>>,
    /// `Z` of the network is `exp(log_prefactor)` times the contracted value.
    pub log_prefactor: f64,
}

impl<T: Weight> IsingNetwork<T> {
    /// `exp(β J_e s_a s_b)` on every edge, rescaled by `exp(-|Re β|)` so the
    /// entries stay bounded; the scale goes into `log_prefactor`.
    pub fn ising(grid: SpinGrid, couplings: &[i8], beta: Complex64) -> Result<Self> {
        if couplings.len() != grid.edge_count() {
            return Err(Error::GeometryMismatch { expected: grid.edge_count(), found: couplings.len() });
        }
        let shift = beta.re.abs();
        let up = T::from_c64((beta - shift).exp());
        let down = T::from_c64((-beta - shift).exp());
        let edges = couplings
            .iter()
            .map(|&j| if j > 0 { [[up, down], [down, up]] } else { [[down, up], [up, down]] })
            .collect();
        Ok(Self { grid, edges, vertices: None, log_prefactor: shift * couplings.len() as f64 })
    }

    /// Same symmetric weight matrix on every edge.
    pub fn uniform(grid: SpinGrid, aligned: T, anti: T) -> Self {
        let edges = vec![[[aligned, anti], [anti, aligned]]; grid.edge_count()];
        Self { grid, edges, vertices: None, log_prefactor: 0.0 }
    }

    /// Multiplies spin `site` by its value (`s = ±1`) inside the sum.
    pub fn insert_spin(&mut self, site: usize) {
        let n = self.grid.spin_count();
        let v = self.vertices.get_or_insert_with(|| vec![[T::one(), T::one()]; n]);
        v[site][1] = -v[site][1];
    }

    fn vertex(&self, site: usize) -> [T; 2] {
        self.vertices.as_ref().map_or([T::one(), T::one()], |v| v[site])
    }

    /// Full bottom-up contraction.
    pub fn contract(&self, opts: ContractOptions) -> Result<ContractionResult> {
        let mut stats = Stats::default();
        let top = self.contract_rows(None, self.grid.rows, &mut stats, opts)?;
        Ok(self.finish(&top, stats))
    }

    /// Absorbs rows `below_row - 1` down to `0` on top of `mps`, which must be
    /// the environment of rows `>= below_row` expressed on row `below_row`
    /// spins, or `None` when `below_row == rows`.
    pub(crate) fn contract_rows(
        &self,
        mut mps: Option<Mps<T>>,
        below_row: usize,
        stats: &mut Stats,
        opts: ContractOptions,
    ) -> Result<Mps<T>> {
        for r in (0..below_row).rev() {
            let lifted = mps.map(|m| self.transfer_up(m, r));
            mps = Some(self.absorb_row(lifted, r, stats, opts)?);
        }
        mps.ok_or_else(|| Error::Invalid("no rows to contract".into()))
    }

    /// Sums the top row and folds in scales.
    pub(crate) fn finish(&self, top: &Mps<T>, stats: Stats) -> ContractionResult {
        let v = top.close_with_ones();
        let log_z = log_of(v.to_c64(), top.log_scale + self.log_prefactor);
        ContractionResult {
            log_z,
            truncation_error: stats.truncation_error,
            max_bond_dimension_used: stats.max_bond,
        }
    }

    /// Applies the vertical edges between rows `r` and `r + 1` to an MPS on
    /// row `r + 1` spins, giving an MPS on row `r` spins.
    pub(crate) fn transfer_up(&self, mut mps: Mps<T>, r: usize) -> Mps<T> {
        for c in 0..self.grid.cols {
            let w = self.edges[self.grid.v_edge(r, c)];
            let [a0, a1] = take2(&mut mps.sites[c]);
            mps.sites[c] = [&a0 * w[0][0] + &a1 * w[0][1], &a0 * w[1][0] + &a1 * w[1][1]];
        }
        mps
    }

    /// Applies the vertical edges between rows `r - 1` and `r` to an MPS on
    /// row `r - 1` spins, giving an MPS on row `r` spins.
    pub(crate) fn transfer_down(&self, mut mps: Mps<T>, r: usize) -> Mps<T> {
        for c in 0..self.grid.cols {
            let w = self.edges[self.grid.v_edge(r - 1, c)];
            let [a0, a1] = take2(&mut mps.sites[c]);
            mps.sites[c] = [&a0 * w[0][0] + &a1 * w[1][0], &a0 * w[0][1] + &a1 * w[1][1]];
        }
        mps
    }

    /// Multiplies in row `r`'s vertex and horizontal weights and compresses.
    pub(crate) fn absorb_row(
        &self,
        base: Option<Mps<T>>,
        r: usize,
        stats: &mut Stats,
        opts: ContractOptions,
    ) -> Result<Mps<T>> {
        let cols = self.grid.cols;
        let mut mps = base.unwrap_or_else(|| Mps::ones(cols));
        for c in 0..cols {
            let h = self.vertex(self.grid.spin(r, c));
            let [a0, a1] = take2(&mut mps.sites[c]);
            let a = [a0 * h[0], a1 * h[1]];
            let pl = if c > 0 { 2 } else { 1 };
            let pr = if c + 1 < cols { 2 } else { 1 };
            let (dl, dr) = a[0].shape();
            let w = (c > 0).then(|| self.edges[self.grid.h_edge(r, c - 1)]);
            let mut out = [DMatrix::zeros(dl * pl, dr * pr), DMatrix::zeros(dl * pl, dr * pr)];
            for t in 0..2 {
                for p in 0..pl {
                    let wpt = w.map_or(T::one(), |w| w[p][t]);
                    let q = if pr == 2 { t } else { 0 };
                    for ia in 0..dl {
                        for ib in 0..dr {
                            out[t][(ia * pl + p, ib * pr + q)] = a[t][(ia, ib)] * wpt;
                        }
                    }
                }
            }
            mps.sites[c] = out;
        }
        mps.compress(stats, opts)?;
        Ok(mps)
    }
}

fn take2<T: Weight>(x: &mut [DMatrix<T>; 2]) -> [DMatrix<T>; 2] {
    std::mem::replace(x, [DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)])
}

fn log_of(v: Complex64, log_scale: f64) -> Complex64 {
    if v == Complex64::new(0.0, 0.0) || log_scale == f64::NEG_INFINITY {
        return Complex64::new(f64::NEG_INFINITY, 0.0);
    }
    v.ln() + log_scale
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Stats {
    pub truncation_error: f64,
    pub max_bond: usize,
}

/// MPS over one row of spins; represented vector is `exp(log_scale) * tensors`.
#[derive(Clone, Debug)]
pub(crate) struct Mps<T> {
    pub sites: Vec<[DMatrix<T>; 2]>,
    pub log_scale: f64,
}

impl<T: Weight> Mps<T> {
    pub fn ones(n: usize) -> Self {
        let one = DMatrix::from_element(1, 1, T::one());
        Self { sites: vec![[one.clone(), one]; n], log_scale: 0.0 }
    }

    /// Contracts with the all-ones vector.
    pub fn close_with_ones(&self) -> T {
        let mut acc = DMatrix::from_element(1, 1, T::one());
        for s in &self.sites {
            acc = acc * (&s[0] + &s[1]);
        }
        acc[(0, 0)]
    }

    /// QR sweep to left-canonical form, then SVD truncation right to left.
    pub fn compress(&mut self, stats: &mut Stats, opts: ContractOptions) -> Result<()> {
        let n = self.sites.len();
        for c in 0..n.saturating_sub(1) {
            let (dl, dr) = self.sites[c][0].shape();
            let mut m = DMatrix::zeros(2 * dl, dr);
            m.rows_mut(0, dl).copy_from(&self.sites[c][0]);
            m.rows_mut(dl, dl).copy_from(&self.sites[c][1]);
            let qr = m.qr();
            let (q, rmat) = (qr.q(), qr.r());
            let k = q.ncols();
            self.sites[c] = [q.rows(0, dl).into_owned(), q.rows(dl, dl).into_owned()];
            let next = take2(&mut self.sites[c + 1]);
            self.sites[c + 1] = [&rmat * &next[0], &rmat * &next[1]];
            debug_assert_eq!(self.sites[c + 1][0].nrows(), k);
        }
        for c in (1..n).rev() {
            let (dl, dr) = self.sites[c][0].shape();
            let mut m = DMatrix::zeros(dl, 2 * dr);
            m.columns_mut(0, dr).copy_from(&self.sites[c][0]);
            m.columns_mut(dr, dr).copy_from(&self.sites[c][1]);
            let svd = SVD::try_new(m, true, true, f64::EPSILON, 0)
                .ok_or_else(|| Error::Diagonalization("SVD did not converge during compression".into()))?;
            let u = svd.u.expect("requested U");
            let vt = svd.v_t.expect("requested Vᵀ");
            let s = svd.singular_values;
            let mut order: Vec<usize> = (0..s.len()).collect();
            order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
            let total: f64 = s.iter().map(|v| v * v).sum();
            let mut keep = order.len();
            let mut tail = 0.0;
            while keep > 1 {
                let sv = s[order[keep - 1]];
                if tail + sv * sv > opts.tol * total {
                    break;
                }
                tail += sv * sv;
                keep -= 1;
            }
            if keep > opts.bond_cap {
                return Err(Error::BondCapExceeded { needed: keep, cap: opts.bond_cap, tol: opts.tol });
            }
            if total > 0.0 {
                stats.truncation_error += tail / total;
            }
            stats.max_bond = stats.max_bond.max(keep);
            let vk = DMatrix::from_fn(keep, 2 * dr, |i, j| vt[(order[i], j)]);
            let us = DMatrix::from_fn(dl, keep, |i, j| u[(i, order[j])] * T::from_real(s[order[j]]));
            self.sites[c] = [vk.columns(0, dr).into_owned(), vk.columns(dr, dr).into_owned()];
            let prev = take2(&mut self.sites[c - 1]);
            self.sites[c - 1] = [&prev[0] * &us, &prev[1] * &us];
        }
        let norm = self.sites[0].iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
        if norm == 0.0 {
            self.log_scale = f64::NEG_INFINITY;
        } else {
            let inv = T::from_real(1.0 / norm);
            for m in self.sites[0].iter_mut() {
                *m *= inv;
            }
            self.log_scale += norm.ln();
        }
        Ok(())
    }
}

/// Network for an instance, as real or complex weights.
fn real_network(inst: &IsingInstance) -> Result<IsingNetwork<f64>> {
    IsingNetwork::ising(inst.geom.grid(), inst.bonds.values(), inst.beta)
}

fn complex_network(inst: &IsingInstance) -> Result<IsingNetwork<Complex64>> {
    IsingNetwork::ising(inst.geom.grid(), inst.bonds.values(), inst.beta)
}

/// `ln Z` of `Σ_s exp(β Σ_e J_e s_a s_b)` over the dual spins.
pub fn contract_log_z(inst: &IsingInstance, opts: ContractOptions) -> Result<ContractionResult> {
    if inst.is_real() {
        real_network(inst)?.contract(opts)
    } else {
        complex_network(inst)?.contract(opts)
    }
}

/// `<s_i s_j>` (real part for complex β).
pub fn spin_correlation(inst: &IsingInstance, i: usize, j: usize, opts: ContractOptions) -> Result<f64> {
    let n = inst.geom.spin_count();
    for s in [i, j] {
        if s >= n {
            return Err(Error::InvalidSite { index: s, count: n });
        }
    }
    if i == j {
        return Err(Error::Invalid("correlation needs two distinct spins".into()));
    }
    if inst.is_real() {
        Ok(correlation_generic(&real_network(inst)?, i, j, opts)?.re)
    } else {
        Ok(correlation_generic(&complex_network(inst)?, i, j, opts)?.re)
    }
}

/// `Z[s_i s_j] / Z`, sharing the environment of the rows below both spins.
pub fn correlation_generic<T: Weight>(
    net: &IsingNetwork<T>,
    i: usize,
    j: usize,
    opts: ContractOptions,
) -> Result<Complex64> {
    let grid = net.grid;
    let lowest = (i / grid.cols).max(j / grid.cols);
    let mut stats = Stats::default();
    let mut shared = None;
    for r in (lowest + 1..grid.rows).rev() {
        let lifted = shared.map(|m| net.transfer_up(m, r));
        shared = Some(net.absorb_row(lifted, r, &mut stats, opts)?);
    }
    let plain = net.contract_rows(shared.clone(), lowest + 1, &mut stats, opts)?;
    let z = net.finish(&plain, stats).log_z;
    let mut inserted = net.clone();
    inserted.insert_spin(i);
    inserted.insert_spin(j);
    let top = inserted.contract_rows(shared, lowest + 1, &mut stats, opts)?;
    let zij = inserted.finish(&top, stats).log_z;
    if z.re == f64::NEG_INFINITY {
        return Err(Error::Invalid("partition function vanishes".into()));
    }
    Ok((zij - z).exp())
}

/// `ln Σ_x |Z_x|²` over all vortex configurations of the grid.
///
/// Every `x` has `2^(V-1)` bond representatives with equal `|Z|`, and summing
/// `|Z_J|²` over all bond fields leaves a uniform Ising model in the relative
/// spin `τ = s s'` with edge weights `2 cosh(2 Re β)` (aligned) and
/// `2 cos(2 Im β)` (anti-aligned), times `2^V`. Together:
/// `Σ_x |Z_x|² = 2 Z_w`.
pub fn replica_norm_logsum(geom: DualSquareGeom, beta: Complex64, opts: ContractOptions) -> Result<f64> {
    let aligned = 2.0 * (2.0 * beta.re).cosh();
    let anti = 2.0 * (2.0 * beta.im).cos();
    let grid = geom.grid();
    let edges = grid.edge_count() as f64;
    // scale by the aligned weight so entries stay O(1)
    let net = IsingNetwork::uniform(grid, 1.0f64, anti / aligned);
    let zw = net.contract(opts)?.log_z;
    if zw.im.abs() > 1e-6 {
        return Err(Error::Invalid("replica normalization is not positive".into()));
    }
    Ok(zw.re + edges * aligned.ln() + std::f64::consts::LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force `Z` of a network.
    fn enumerate<T: Weight>(net: &IsingNetwork<T>) -> Complex64 {
        let n = net.grid.spin_count();
        let mut total = Complex64::new(0.0, 0.0);
        for k in 0u64..1 << n {
            let bit = |s: usize| ((k >> s) & 1) as usize;
            let mut w = T::one();
            for (e, m) in net.edges.iter().enumerate() {
                let (a, b) = net.grid.edge_endpoints(e);
                w *= m[bit(a)][bit(b)];
            }
            for s in 0..n {
                w *= net.vertex(s)[bit(s)];
            }
            total += w.to_c64();
        }
        total * net.log_prefactor.exp()
    }

    fn random_couplings(rng: &mut ChaCha8Rng, n: usize) -> Vec<i8> {
        (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
    }

    #[test]
    fn two_spins_one_bond() {
        let g = SpinGrid::new(1, 2);
        for beta in [0.3, 1.7] {
            let net = IsingNetwork::<f64>::ising(g, &[1], Complex64::new(beta, 0.0)).unwrap();
            let z = net.contract(ContractOptions::default()).unwrap().log_z;
            assert!((z.re - (4.0 * f64::cosh(beta)).ln()).abs() < 1e-12);
            assert_eq!(z.im, 0.0);
        }
    }

    #[test]
    fn two_by_two_square() {
        let g = SpinGrid::new(2, 2);
        let beta = 0.4f64;
        let net = IsingNetwork::<f64>::ising(g, &[1; 4], Complex64::new(beta, 0.0)).unwrap();
        let z = net.contract(ContractOptions::default()).unwrap().log_z.re.exp();
        let expect = 2.0 * (4.0 * beta).exp() + 12.0 + 2.0 * (-4.0 * beta).exp();
        assert!((z - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn complex_single_bond() {
        let beta = Complex64::new(0.0, std::f64::consts::FRAC_PI_4);
        let net = IsingNetwork::<Complex64>::ising(SpinGrid::new(2, 1), &[1], beta).unwrap();
        let z = net.contract(ContractOptions::default()).unwrap().log_z.exp();
        assert!((z - Complex64::new(2.0 * 2f64.sqrt(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn matches_enumeration_real_and_complex() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (rows, cols) in [(3, 3), (2, 5), (4, 4), (3, 5), (1, 6)] {
            let g = SpinGrid::new(rows, cols);
            for beta in [
                Complex64::new(0.6, 0.0),
                Complex64::new(0.2, 0.0),
                Complex64::new(0.5 * (0.3f64).tan().ln(), std::f64::consts::FRAC_PI_4),
            ] {
                let j = random_couplings(&mut rng, g.edge_count());
                let net = IsingNetwork::<Complex64>::ising(g, &j, beta).unwrap();
                let exact = enumerate(&net);
                let z = net.contract(ContractOptions::default()).unwrap();
                assert!((z.log_z.exp() - exact).norm() < 1e-9 * exact.norm(), "{rows}x{cols} {beta}");
                if beta.im == 0.0 {
                    let rnet = IsingNetwork::<f64>::ising(g, &j, beta).unwrap();
                    let zr = rnet.contract(ContractOptions::default()).unwrap();
                    assert!((zr.log_z - z.log_z).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn real_sign_shows_as_phase() {
        // a frustrated instance with an imaginary-temperature twist can go negative
        let g = SpinGrid::new(2, 2);
        let net = IsingNetwork::<f64>::uniform(g, 1.0, -1.5);
        let exact = enumerate(&net);
        let z = net.contract(ContractOptions::default()).unwrap().log_z;
        assert!((z.exp() - exact).norm() < 1e-10);
        if exact.re < 0.0 {
            assert!((z.im - std::f64::consts::PI).abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let geom = DualSquareGeom::new(2).unwrap();
        let bonds = BondField::new(geom, random_couplings(&mut rng, geom.edge_count())).unwrap();
        let inst = IsingInstance::real(bonds.clone(), 0.5);
        let net = real_network(&inst).unwrap();
        let z = enumerate(&net);
        for (i, j) in [(0, 8), (3, 4), (7, 1)] {
            let mut ins = net.clone();
            ins.insert_spin(i);
            ins.insert_spin(j);
            let exact = (enumerate(&ins) / z).re;
            let got = spin_correlation(&inst, i, j, ContractOptions::default()).unwrap();
            assert!((got - exact).abs() < 1e-9);
        }
        let hot = IsingInstance::real(bonds.clone(), 0.0);
        assert!(spin_correlation(&hot, 0, 8, ContractOptions::default()).unwrap().abs() < 1e-12);
        let cold = IsingInstance::real(BondField::ferromagnetic(geom), 8.0);
        assert!(spin_correlation(&cold, 0, 8, ContractOptions::default()).unwrap() > 1.0 - 1e-6);
        assert!(spin_correlation(&cold, 0, 0, ContractOptions::default()).is_err());
    }

    #[test]
    fn bond_cap_is_enforced() {
        let g = SpinGrid::new(6, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let j = random_couplings(&mut rng, g.edge_count());
        let net = IsingNetwork::<f64>::ising(g, &j, Complex64::new(0.8, 0.0)).unwrap();
        let err = net.contract(ContractOptions { tol: 1e-14, bond_cap: 2 }).unwrap_err();
        assert!(matches!(err, Error::BondCapExceeded { cap: 2, .. }));
    }
}
