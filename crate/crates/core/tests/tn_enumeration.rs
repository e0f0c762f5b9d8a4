mod common;

use common::{brute_log_z, close_log};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snapzip_core::born_models::coherent_beta;
use snapzip_core::lattice::{gauge_transform, BondField, DualSquareGeom, SpinGrid};
use snapzip_core::tn_ising::{contract_log_z, ContractOptions, IsingInstance, IsingNetwork};

fn exact() -> ContractOptions {
    ContractOptions::new(1e-14, 1 << 12).unwrap()
}

#[test]
fn every_small_grid_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let betas: Vec<Complex64> = [0.2, 0.6, 1.0]
        .iter()
        .map(|&b| Complex64::new(b, 0.0))
        .chain([0.1, 0.3].iter().map(|&f| coherent_beta(f * std::f64::consts::PI)))
        .collect();
    let mut checked = 0;
    for rows in 1..=20 {
        for cols in 1..=20 / rows {
            let grid = SpinGrid::new(rows, cols);
            if grid.spin_count() < 2 {
                continue;
            }
            let couplings: Vec<i8> = (0..grid.edge_count()).map(|_| if rng.random() { 1 } else { -1 }).collect();
            for &beta in &betas {
                let net = IsingNetwork::<Complex64>::ising(grid, &couplings, beta).unwrap();
                let got = net.contract(exact()).unwrap().log_z;
                let want = brute_log_z(grid, &couplings, beta);
                assert!(close_log(got, want, 1e-6), "{rows}x{cols} β={beta}: {got} vs {want}");
                checked += 1;
            }
        }
    }
    assert!(checked > 200);
}

#[test]
fn dual_instances_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for l in [2, 3] {
        let geom = DualSquareGeom::new(l).unwrap();
        for beta in [0.2, 0.6, 1.0] {
            let values = (0..geom.edge_count()).map(|_| if rng.random_bool(0.3) { -1 } else { 1 }).collect();
            let bonds = BondField::new(geom, values).unwrap();
            let got = contract_log_z(&IsingInstance::real(bonds.clone(), beta), exact()).unwrap().log_z;
            let want = brute_log_z(geom.grid(), bonds.values(), Complex64::new(beta, 0.0));
            assert!(close_log(got, want, 1e-6), "L={l} β={beta}: {got} vs {want}");
        }
    }
}

#[test]
fn gauge_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let geom = DualSquareGeom::new(4).unwrap();
    let values = (0..geom.edge_count()).map(|_| if rng.random_bool(0.2) { -1 } else { 1 }).collect();
    let bonds = BondField::new(geom, values).unwrap();
    for beta in [Complex64::new(0.6, 0.0), coherent_beta(0.3 * std::f64::consts::PI)] {
        let base = contract_log_z(&IsingInstance::new(bonds.clone(), beta), exact()).unwrap().log_z;
        for _ in 0..100 {
            let sigma: Vec<i8> = (0..geom.spin_count()).map(|_| if rng.random() { 1 } else { -1 }).collect();
            let g = gauge_transform(&bonds, &sigma).unwrap();
            let z = contract_log_z(&IsingInstance::new(g, beta), exact()).unwrap().log_z;
            assert!(close_log(z, base, 1e-8), "β={beta}: {z} vs {base}");
        }
    }
}
