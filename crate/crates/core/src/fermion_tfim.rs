//! Born probabilities of the transverse-field Ising chain ground state in the
//! X basis, via Jordan-Wigner fermions.
//!
//! With Majoranas `a_j = c_j + c_j†`, `b_j = -i(c_j - c_j†)` we have
//! `X_j = -i a_j b_j` and `Z_j Z_{j+1} = -i b_j a_{j+1}`, so
//! `H = -(1-J) Σ X - J Σ ZZ` only couples `a` to `b`. The covariance
//! `M_{kl} = -i<γ_k γ_l>` (k ≠ l) of any such state is fixed by its `a`-`b`
//! block `G`, with `G_{ij} = -i<a_i b_j>`. The ground state maximizes
//! `tr(Bᵀ G)` over orthogonal `G`, where `B` is the coupling block, which the
//! SVD of `B` solves directly. An X-basis product state has `G = diag(x)`, and
//! the overlap between two such states reduces to an `L x L` determinant:
//! `|<x|Ψ>|² = |det((diag(x) + G) / 2)|`.

use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};
use crate::lattice::{Boundary, ChainGeom, Snapshot};

/// Probabilities below this are reported as `-inf` in log space.
pub const PROB_FLOOR: f64 = 1e-300;

/// Number of accepted updates between full refreshes of a [`TfimTracker`].
const REFRESH_EVERY: usize = 64;

/// Majorana covariance `M` (2L x 2L), ordered `a_1, b_1, a_2, b_2, ...`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix {
    m: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Builds `M` from its `a`-`b` block (`a`-`a` and `b`-`b` blocks zero).
    pub fn from_ab_block(g: &DMatrix<f64>) -> Self {
        let l = g.nrows();
        let mut m = DMatrix::zeros(2 * l, 2 * l);
        for i in 0..l {
            for j in 0..l {
                m[(2 * i, 2 * j + 1)] = g[(i, j)];
                m[(2 * j + 1, 2 * i)] = -g[(i, j)];
            }
        }
        Self { m }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn modes(&self) -> usize {
        self.m.nrows() / 2
    }

    /// `max |M Mᵀ - I|`, zero for a pure state.
    pub fn purity_defect(&self) -> f64 {
        let n = self.m.nrows();
        (&self.m * self.m.transpose() - DMatrix::identity(n, n)).amax()
    }

    /// `max |M + Mᵀ|`.
    pub fn antisymmetry_defect(&self) -> f64 {
        (&self.m + self.m.transpose()).amax()
    }
}

/// Covariance of the Fock state `|x>` with occupations `(1 - x_j) / 2`.
pub fn x_basis_covariance(x: &Snapshot) -> CovarianceMatrix {
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        x.len(),
        x.values().iter().map(|&v| v as f64),
    ));
    CovarianceMatrix::from_ab_block(&d)
}

/// `log2 |<ψ1|ψ2>|²` for pure Gaussian states, `log2 √det((M1 + M2) / 2)`.
pub fn gaussian_overlap_log2(m1: &CovarianceMatrix, m2: &CovarianceMatrix) -> Result<f64> {
    if m1.m.shape() != m2.m.shape() {
        return Err(Error::DimensionMismatch { expected: m1.m.nrows(), found: m2.m.nrows() });
    }
    let s = (&m1.m + &m2.m) * 0.5;
    let (log2_det, _) = log2_abs_det(s);
    Ok(floor_log2(0.5 * log2_det))
}

fn floor_log2(v: f64) -> f64 {
    if v < PROB_FLOOR.log2() || v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// `(log2 |det A|, sign)` by partial-pivot LU. Singular gives `(-inf, 0)`.
pub fn log2_abs_det(mut a: DMatrix<f64>) -> (f64, f64) {
    let n = a.nrows();
    let mut sign = 1.0;
    let mut acc = 0.0;
    for k in 0..n {
        let (p, piv) = (k..n)
            .map(|r| (r, a[(r, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv == 0.0 {
            return (f64::NEG_INFINITY, 0.0);
        }
        if p != k {
            a.swap_rows(p, k);
            sign = -sign;
        }
        let pivot = a[(k, k)];
        if pivot < 0.0 {
            sign = -sign;
        }
        acc += pivot.abs().log2();
        for r in k + 1..n {
            let f = a[(r, k)] / pivot;
            if f != 0.0 {
                for c in k + 1..n {
                    let v = a[(k, c)];
                    a[(r, c)] -= f * v;
                }
            }
        }
    }
    (acc, sign)
}

/// The `L x L` block `B` with `H = (i/2) Σ A_kl γ_k γ_l`, `A = [[0, B], [-Bᵀ, 0]]`
/// in `(a..., b...)` ordering. Periodic chains use the even-parity
/// (antiperiodic) fermion boundary.
pub fn coupling_block(j: f64, geom: ChainGeom) -> DMatrix<f64> {
    let l = geom.len();
    let mut b = DMatrix::zeros(l, l);
    for i in 0..l {
        b[(i, i)] = 1.0 - j;
    }
    for i in 0..l - 1 {
        b[(i + 1, i)] = -j;
    }
    if geom.boundary() == Boundary::Periodic && l > 2 {
        b[(0, l - 1)] += j;
    }
    b
}

/// Ground state of the chain in the even fermion-parity sector.
#[derive(Clone, Debug)]
pub struct TfimModel {
    j: f64,
    geom: ChainGeom,
    g: DMatrix<f64>,
    energy: f64,
}

impl TfimModel {
    pub fn new(j: f64, geom: ChainGeom) -> Result<Self> {
        if !(0.0..=1.0).contains(&j) {
            return Err(Error::ParameterOutOfRange { name: "J", value: j, range: "[0, 1]" });
        }
        let b = coupling_block(j, geom);
        let svd = SVD::try_new(b.clone(), true, true, 1e-14, 10_000)
            .ok_or_else(|| Error::Diagonalization(format!("SVD did not converge at J = {j}")))?;
        let u = svd.u.as_ref().expect("requested U");
        let vt = svd.v_t.as_ref().expect("requested Vᵀ");
        let sv = &svd.singular_values;
        // Parity of the state with covariance block G is det G. Flip the
        // softest mode if needed to land in the even sector.
        let orient = log2_abs_det(u.clone()).1 * log2_abs_det(vt.clone()).1;
        if orient == 0.0 {
            return Err(Error::Diagonalization("singular Bogoliubov rotation".into()));
        }
        let mut s = vec![1.0; sv.len()];
        let mut energy = -sv.sum();
        if orient < 0.0 {
            let (kmin, smin) = sv.iter().enumerate().fold((0, f64::INFINITY), |best, (k, &v)| {
                if v < best.1 {
                    (k, v)
                } else {
                    best
                }
            });
            s[kmin] = -1.0;
            energy += 2.0 * smin;
        }
        let us = DMatrix::from_fn(u.nrows(), u.ncols(), |r, c| u[(r, c)] * s[c]);
        let g = us * vt;
        Ok(Self { j, geom, g, energy })
    }

    pub fn coupling(&self) -> f64 {
        self.j
    }

    pub fn geom(&self) -> ChainGeom {
        self.geom
    }

    pub fn sites(&self) -> usize {
        self.geom.len()
    }

    /// Ground-state energy of `H`.
    pub fn ground_energy(&self) -> f64 {
        self.energy
    }

    /// The `a`-`b` covariance block.
    pub fn ab_block(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn covariance(&self) -> CovarianceMatrix {
        CovarianceMatrix::from_ab_block(&self.g)
    }

    fn check_len(&self, x: &[i8]) -> Result<()> {
        if x.len() != self.sites() {
            return Err(Error::DimensionMismatch { expected: self.sites(), found: x.len() });
        }
        Ok(())
    }

    fn kernel(&self, x: &[i8]) -> DMatrix<f64> {
        let mut k = self.g.clone();
        for (i, &v) in x.iter().enumerate() {
            k[(i, i)] += v as f64;
        }
        k
    }

    /// `log2 ρ_x`; `-inf` for odd-parity or underflowing outcomes.
    pub fn log_born_prob(&self, x: &[i8]) -> Result<f64> {
        self.check_len(x)?;
        if odd_parity(x) {
            return Ok(f64::NEG_INFINITY);
        }
        let (ld, _) = log2_abs_det(self.kernel(x));
        Ok(floor_log2(ld - self.sites() as f64))
    }
}

/// `ground_covariance` as a free function.
pub fn ground_covariance(j: f64, geom: ChainGeom) -> Result<CovarianceMatrix> {
    Ok(TfimModel::new(j, geom)?.covariance())
}

fn odd_parity(x: &[i8]) -> bool {
    x.iter().filter(|&&v| v < 0).count() % 2 == 1
}

/// Incremental `log2 ρ` for single-site and pair flips.
///
/// Keeps `K⁻¹` with `K = diag(x) + G`. Flipping sites `F` adds
/// `E W Eᵀ` to `K` with `W = diag(-2 x_f)`, so the determinant ratio is
/// `det(I + W Eᵀ K⁻¹ E)` and `K⁻¹` follows from the Woodbury identity.
#[derive(Clone, Debug)]
pub struct TfimTracker {
    x: Vec<i8>,
    kinv: DMatrix<f64>,
    log2p: f64,
    updates: usize,
}

impl TfimTracker {
    pub fn new(model: &TfimModel, x: &[i8]) -> Result<Self> {
        model.check_len(x)?;
        let log2p = model.log_born_prob(x)?;
        if log2p == f64::NEG_INFINITY {
            return Err(Error::Invalid("tracker needs a state with nonzero probability".into()));
        }
        let kinv = model
            .kernel(x)
            .try_inverse()
            .ok_or_else(|| Error::Invalid("singular kernel".into()))?;
        Ok(Self { x: x.to_vec(), kinv, log2p, updates: 0 })
    }

    pub fn state(&self) -> &[i8] {
        &self.x
    }

    pub fn log2p(&self) -> f64 {
        self.log2p
    }

    /// `log2(ρ' / ρ)` for flipping one or two distinct sites.
    pub fn log2_ratio(&self, sites: &[usize]) -> f64 {
        let det = self.small_matrix(sites).determinant();
        if odd_parity_change(&self.x, sites) {
            return f64::NEG_INFINITY;
        }
        let r = det.abs();
        if r > 0.0 {
            r.log2()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// `I + W Eᵀ K⁻¹ E`.
    fn small_matrix(&self, sites: &[usize]) -> DMatrix<f64> {
        let n = sites.len();
        DMatrix::from_fn(n, n, |r, c| {
            let w = -2.0 * self.x[sites[r]] as f64;
            let delta = if r == c { 1.0 } else { 0.0 };
            delta + w * self.kinv[(sites[r], sites[c])]
        })
    }

    /// Applies the flip with a precomputed `log2_ratio`.
    pub fn accept(&mut self, model: &TfimModel, sites: &[usize], log2_ratio: f64) -> Result<()> {
        let n = sites.len();
        let l = self.x.len();
        let small = self.small_matrix(sites);
        let small_inv = small
            .try_inverse()
            .ok_or_else(|| Error::Invalid("accepted a zero-probability move".into()))?;
        // K'⁻¹ = K⁻¹ - K⁻¹ E (I + W Eᵀ K⁻¹ E)⁻¹ W Eᵀ K⁻¹
        let cols = DMatrix::from_fn(l, n, |r, c| self.kinv[(r, sites[c])]);
        let rows = DMatrix::from_fn(n, l, |r, c| -2.0 * self.x[sites[r]] as f64 * self.kinv[(sites[r], c)]);
        let correction = cols * (small_inv * rows);
        self.kinv -= correction;
        for &s in sites {
            self.x[s] = -self.x[s];
        }
        self.log2p += log2_ratio;
        self.updates += 1;
        if self.updates >= REFRESH_EVERY {
            self.refresh(model)?;
        }
        Ok(())
    }

    /// Recomputes `K⁻¹` and `log2 ρ` from scratch.
    pub fn refresh(&mut self, model: &TfimModel) -> Result<()> {
        *self = Self::new(model, &self.x)?;
        Ok(())
    }
}

fn odd_parity_change(x: &[i8], sites: &[usize]) -> bool {
    let _ = x;
    sites.len() % 2 == 1
}
