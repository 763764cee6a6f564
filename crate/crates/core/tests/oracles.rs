mod common;

use common::oracles::*;

#[test]
fn admm_matches_simplex_grid() {
    for seed in 0..50 {
        let (admm, grid) = admm_vs_grid(seed);
        assert!(admm - grid <= 1e-6, "seed {seed}: admm {admm} grid {grid}");
    }
}

#[test]
fn admm_matches_projected_subgradient() {
    for seed in 0..5 {
        let (admm, oracle) = admm_vs_subgradient(seed);
        let rel = (admm - oracle).abs() / oracle;
        assert!(rel <= 1e-4, "seed {seed}: admm {admm} oracle {oracle} rel {rel:e}");
    }
}

#[test]
fn psi_update_is_stationary() {
    for seed in 0..20 {
        let g = psi_stationarity(seed);
        assert!(g <= 1e-6, "seed {seed}: gradient {g:e}");
    }
}

#[test]
fn endmember_update_is_stationary() {
    for seed in 0..20 {
        let g = endmember_stationarity(seed);
        assert!(g <= 1e-6, "seed {seed}: gradient {g:e}");
    }
}

#[test]
fn cp_recovers_exact_rank_two() {
    let (rel, worst) = cp_exact_recovery(0);
    assert!(rel <= 1e-6, "relative error {rel:e}");
    assert!(worst <= 1e-12, "trace increase {worst:e}");
}
