//! Single-edge coupling flips with cached boundary environments.
//!
//! A sweep visits every edge once, row by row from the top and left to right
//! within a row. For row `r` the environment above (`Top_r`, a function of the
//! row-`r` spins) and below (`Bot_{r+1}`, a function of the row-`r+1` spins)
//! are fixed, and the strip in between holds row `r`'s horizontal edges and the
//! vertical edges down to row `r + 1`. Left and right environments along the
//! strip give `Z` with one edge matrix swapped in `O(χ³)`, so the whole sweep
//! costs about two full contractions.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{log_of, ContractOptions, IsingNetwork, Mps, Stats, Weight};
use crate::error::{Error, Result};

/// What the caller sees for each proposed flip.
#[derive(Clone, Copy, Debug)]
pub struct FlipProposal {
    pub edge: usize,
    /// `Z_flipped / Z_current`.
    pub ratio: Complex64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SweepSummary {
    pub proposed: usize,
    pub accepted: usize,
    /// `ln Z` of the configuration at the end of the sweep.
    pub log_z: Complex64,
    pub truncation_error: f64,
    pub max_bond_dimension_used: usize,
}

/// Ising network whose couplings are updated one edge at a time.
#[derive(Clone, Debug)]
pub struct EdgeFlipSweeper<T> {
    net: IsingNetwork<T>,
    couplings: Vec<i8>,
    opts: ContractOptions,
}

fn flipped<T: Weight>(w: [[T; 2]; 2]) -> [[T; 2]; 2] {
    [[w[0][1], w[0][0]], [w[1][1], w[1][0]]]
}

/// `Σ_ab A_ab B_ab` without conjugation.
fn dot<T: Weight>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

impl<T: Weight> EdgeFlipSweeper<T> {
    pub fn new(net: IsingNetwork<T>, couplings: Vec<i8>, opts: ContractOptions) -> Result<Self> {
        if couplings.len() != net.edges.len() {
            return Err(Error::GeometryMismatch { expected: net.edges.len(), found: couplings.len() });
        }
        Ok(Self { net, couplings, opts })
    }

    pub fn couplings(&self) -> &[i8] {
        &self.couplings
    }

    pub fn network(&self) -> &IsingNetwork<T> {
        &self.net
    }

    fn flip(&mut self, e: usize) {
        self.net.edges[e] = flipped(self.net.edges[e]);
        self.couplings[e] = -self.couplings[e];
    }

    /// One pass over all edges. `decide` gets each proposal and returns
    /// whether to accept it.
    pub fn sweep<F>(&mut self, mut decide: F) -> Result<SweepSummary>
    where
        F: FnMut(FlipProposal) -> bool,
    {
        let rows = self.net.grid.rows;
        let mut stats = Stats::default();
        let bots = self.bottom_envs(&mut stats)?;
        let mut summary = SweepSummary::default();
        let mut top: Option<Mps<T>> = None;
        let mut last_row_z = T::zero();
        for r in 0..rows {
            let bot = if r + 1 < rows { bots[r + 1].as_ref() } else { None };
            last_row_z = self.strip(r, top.as_ref(), bot, &mut decide, &mut summary)?;
            if r + 1 < rows {
                let absorbed = self.net.absorb_row(top.take(), r, &mut stats, self.opts)?;
                top = Some(self.net.transfer_down(absorbed, r + 1));
            }
        }
        let top_scale = top.as_ref().map_or(0.0, |m| m.log_scale);
        summary.log_z = log_of(last_row_z.to_c64(), top_scale + self.net.log_prefactor);
        summary.truncation_error = stats.truncation_error;
        summary.max_bond_dimension_used = stats.max_bond;
        Ok(summary)
    }

    fn bottom_envs(&self, stats: &mut Stats) -> Result<Vec<Option<Mps<T>>>> {
        let rows = self.net.grid.rows;
        let mut bots: Vec<Option<Mps<T>>> = vec![None; rows + 1];
        let mut cur: Option<Mps<T>> = None;
        for r in (1..rows).rev() {
            let lifted = cur.take().map(|m| self.net.transfer_up(m, r));
            let m = self.net.absorb_row(lifted, r, stats, self.opts)?;
            bots[r] = Some(m.clone());
            cur = Some(m);
        }
        Ok(bots)
    }

    /// Processes row `r` and returns the strip value after all accepted
    /// flips. `Z` is this value times the scales of `top` and `bot`.
    fn strip<F>(
        &mut self,
        r: usize,
        top: Option<&Mps<T>>,
        bot: Option<&Mps<T>>,
        decide: &mut F,
        summary: &mut SweepSummary,
    ) -> Result<T>
    where
        F: FnMut(FlipProposal) -> bool,
    {
        let grid = self.net.grid;
        let cols = grid.cols;
        let one = DMatrix::from_element(1, 1, T::one());
        let ones2 = [one.clone(), one.clone()];
        let tp = |c: usize| -> [DMatrix<T>; 2] { top.map_or_else(|| ones2.clone(), |m| m.sites[c].clone()) };
        let bt = |c: usize| -> [DMatrix<T>; 2] { bot.map_or_else(|| ones2.clone(), |m| m.sites[c].clone()) };
        let has_below = bot.is_some();
        let vert = |net: &IsingNetwork<T>, c: usize| net.edges[grid.v_edge(r, c)];
        let absorb_vertical = |w: [[T; 2]; 2], b: &[DMatrix<T>; 2]| -> [DMatrix<T>; 2] {
            [&b[0] * w[0][0] + &b[1] * w[0][1], &b[0] * w[1][0] + &b[1] * w[1][1]]
        };
        let mut m: Vec<[DMatrix<T>; 2]> = (0..cols)
            .map(|c| if has_below { absorb_vertical(vert(&self.net, c), &bt(c)) } else { ones2.clone() })
            .collect();
        let h = |net: &IsingNetwork<T>, c: usize| net.vertex(grid.spin(r, c));
        // Right environments R_c[t] and their W-folded forms G_c[t].
        let mut right: Vec<[DMatrix<T>; 2]> = vec![ones2.clone(); cols + 1];
        let mut gs: Vec<[DMatrix<T>; 2]> = vec![ones2.clone(); cols];
        for c in (0..cols).rev() {
            let g = if c + 1 < cols {
                let w = self.net.edges[grid.h_edge(r, c)];
                let rn = &right[c + 1];
                [&rn[0] * w[0][0] + &rn[1] * w[0][1], &rn[0] * w[1][0] + &rn[1] * w[1][1]]
            } else {
                ones2.clone()
            };
            let t_c = tp(c);
            let hv = h(&self.net, c);
            right[c] = [
                (&t_c[0] * &g[0] * m[c][0].transpose()) * hv[0],
                (&t_c[1] * &g[1] * m[c][1].transpose()) * hv[1],
            ];
            gs[c] = g;
        }
        // Left sweep with proposals.
        let mut left: [DMatrix<T>; 2] = ones2.clone();
        for c in 0..cols {
            if c >= 1 {
                let e = grid.h_edge(r, c - 1);
                let mut x = [[T::zero(); 2]; 2];
                for (p, xp) in x.iter_mut().enumerate() {
                    for (t, xpt) in xp.iter_mut().enumerate() {
                        *xpt = dot(&left[p], &right[c][t]);
                    }
                }
                let w = self.net.edges[e];
                let eval = |w: [[T; 2]; 2]| {
                    let mut z = T::zero();
                    for p in 0..2 {
                        for t in 0..2 {
                            z += w[p][t] * x[p][t];
                        }
                    }
                    z
                };
                if self.propose(e, eval(w), eval(flipped(w)), decide, summary) {
                    self.flip(e);
                }
            }
            // e_t = Σ_p E_c[p] W(p, t)
            let e_t: [DMatrix<T>; 2] = if c == 0 {
                ones2.clone()
            } else {
                let w = self.net.edges[grid.h_edge(r, c - 1)];
                [&left[0] * w[0][0] + &left[1] * w[1][0], &left[0] * w[0][1] + &left[1] * w[1][1]]
            };
            let t_c = tp(c);
            if has_below {
                let e = grid.v_edge(r, c);
                let b_c = bt(c);
                let hv = h(&self.net, c);
                let mut y = [[T::zero(); 2]; 2];
                for t in 0..2 {
                    let lt = t_c[t].transpose() * &e_t[t];
                    for u in 0..2 {
                        y[t][u] = dot(&(&lt * &b_c[u]), &gs[c][t]) * hv[t];
                    }
                }
                let w = self.net.edges[e];
                let eval = |w: [[T; 2]; 2]| {
                    let mut z = T::zero();
                    for t in 0..2 {
                        for u in 0..2 {
                            z += w[t][u] * y[t][u];
                        }
                    }
                    z
                };
                if self.propose(e, eval(w), eval(flipped(w)), decide, summary) {
                    self.flip(e);
                    m[c] = absorb_vertical(self.net.edges[e], &b_c);
                }
            }
            let hv = h(&self.net, c);
            let next = [
                (t_c[0].transpose() * &e_t[0] * &m[c][0]) * hv[0],
                (t_c[1].transpose() * &e_t[1] * &m[c][1]) * hv[1],
            ];
            left = next;
        }
        Ok(left[0][(0, 0)] + left[1][(0, 0)])
    }

    fn propose<F>(&self, edge: usize, z: T, z_new: T, decide: &mut F, summary: &mut SweepSummary) -> bool
    where
        F: FnMut(FlipProposal) -> bool,
    {
        summary.proposed += 1;
        let (z, z_new) = (z.to_c64(), z_new.to_c64());
        let ratio = if z.norm() == 0.0 {
            Complex64::new(f64::INFINITY, 0.0)
        } else {
            z_new / z
        };
        let ok = decide(FlipProposal { edge, ratio });
        if ok {
            summary.accepted += 1;
        }
        ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::SpinGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_z(grid: SpinGrid, j: &[i8], beta: Complex64) -> Complex64 {
        let n = grid.spin_count();
        let mut total = Complex64::new(0.0, 0.0);
        for k in 0u64..1 << n {
            let s = |i: usize| if (k >> i) & 1 == 1 { -1.0 } else { 1.0 };
            let mut energy = Complex64::new(0.0, 0.0);
            for (e, &je) in j.iter().enumerate() {
                let (a, b) = grid.edge_endpoints(e);
                energy += beta * (je as f64 * s(a) * s(b));
            }
            total += energy.exp();
        }
        total
    }

    fn check<T: Weight>(beta: Complex64) {
        let grid = SpinGrid::new(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let j0: Vec<i8> = (0..grid.edge_count()).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let net = IsingNetwork::<T>::ising(grid, &j0, beta).unwrap();
        let mut sweeper = EdgeFlipSweeper::new(net, j0.clone(), ContractOptions::default()).unwrap();
        for _ in 0..3 {
            let mut mirror = sweeper.couplings().to_vec();
            let mut seen = Vec::new();
            let summary = sweeper
                .sweep(|p| {
                    let z = brute_z(grid, &mirror, beta);
                    mirror[p.edge] = -mirror[p.edge];
                    let z_new = brute_z(grid, &mirror, beta);
                    assert!((p.ratio - z_new / z).norm() < 1e-8 * (z_new / z).norm().max(1.0), "edge {}", p.edge);
                    seen.push(p.edge);
                    let accept = rng.random::<bool>();
                    if !accept {
                        mirror[p.edge] = -mirror[p.edge];
                    }
                    accept
                })
                .unwrap();
            seen.sort();
            assert_eq!(seen, (0..grid.edge_count()).collect::<Vec<_>>());
            assert_eq!(summary.proposed, grid.edge_count());
            assert_eq!(sweeper.couplings(), &mirror[..]);
            let exact = brute_z(grid, &mirror, beta);
            assert!((summary.log_z.exp() - exact).norm() < 1e-8 * exact.norm());
        }
    }

    #[test]
    fn ratios_match_brute_force_real() {
        check::<f64>(Complex64::new(0.45, 0.0));
    }

    #[test]
    fn ratios_match_brute_force_complex() {
        check::<Complex64>(Complex64::new(0.5 * (0.25f64).tan().ln(), std::f64::consts::FRAC_PI_4));
    }
}
