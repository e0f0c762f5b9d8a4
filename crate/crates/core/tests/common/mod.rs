//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use snapzip_core::lattice::SpinGrid;

/// Even-parity ground state of `-(1-J) Σ X - J Σ ZZ` (open chain) in the X
/// basis, by dense diagonalization. Bit `i` set means `x_i = -1`.
pub fn dense_born(l: usize, j: f64) -> Vec<f64> {
    let even: Vec<usize> = (0..1usize << l).filter(|s| s.count_ones() % 2 == 0).collect();
    let mut pos = vec![usize::MAX; 1 << l];
    for (k, &s) in even.iter().enumerate() {
        pos[s] = k;
    }
    let d = even.len();
    let mut h = DMatrix::<f64>::zeros(d, d);
    for (k, &s) in even.iter().enumerate() {
        let down = s.count_ones() as f64;
        h[(k, k)] = -(1.0 - j) * (l as f64 - 2.0 * down);
        // Z_i Z_{i+1} flips both X eigenvalues
        for i in 0..l - 1 {
            let t = s ^ (0b11 << i);
            h[(pos[t], k)] -= j;
        }
    }
    let eig = SymmetricEigen::new(h);
    let g = eig.eigenvalues.imin();
    let v = eig.eigenvectors.column(g);
    let mut p = vec![0.0; 1 << l];
    for (k, &s) in even.iter().enumerate() {
        p[s] = v[k] * v[k];
    }
    p
}

pub fn outcome(l: usize, s: usize) -> Vec<i8> {
    (0..l).map(|i| if s >> i & 1 == 1 { -1 } else { 1 }).collect()
}

/// `Σ_s exp(β Σ_e J_e s_a s_b)` by brute force. The energy of each
/// configuration is an integer, so `Z` is a polynomial in `e^β` and is
/// accumulated per energy level.
pub fn brute_log_z(grid: SpinGrid, couplings: &[i8], beta: Complex64) -> Complex64 {
    let n = grid.spin_count();
    let m = couplings.len();
    let ends: Vec<(usize, usize)> = (0..m).map(|e| grid.edge_endpoints(e)).collect();
    let mut levels = vec![0u64; 2 * m + 1];
    for k in 0u64..1 << n {
        let mut energy = 0i64;
        for (e, &(a, b)) in ends.iter().enumerate() {
            let same = ((k >> a) ^ (k >> b)) & 1 == 0;
            energy += if same { couplings[e] as i64 } else { -(couplings[e] as i64) };
        }
        levels[(energy + m as i64) as usize] += 1;
    }
    // shift by the largest |Re| term to avoid overflow
    let shift = beta.re.abs() * m as f64;
    let mut z = Complex64::new(0.0, 0.0);
    for (i, &c) in levels.iter().enumerate() {
        if c > 0 {
            let e = i as f64 - m as f64;
            z += c as f64 * (beta * e - shift).exp();
        }
    }
    z.ln() + shift
}

/// Equality of two complex logarithms up to a multiple of 2πi.
pub fn close_log(a: Complex64, b: Complex64, tol: f64) -> bool {
    let d = a - b;
    let phase = (d.im / std::f64::consts::TAU).round() * std::f64::consts::TAU;
    d.re.abs() < tol && (d.im - phase).abs() < tol
}
