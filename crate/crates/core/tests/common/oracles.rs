//! Independent reference computations for the solver checks.

use hyperunmix::model::{AbundanceMatrix, EndmemberMatrix, EndmemberTensor, ImageCube};
use hyperunmix::tensor::{cp_als, CpDecomposition, CpOptions};
use hyperunmix::unmixing::{
    abundance_objective, objective_unmix, project_simplex, update_abundances_admm,
    update_endmembers_unprojected, UnmixConfig,
};
use hyperunmix::variability::{objective_psi, update_psi, VariabilityConfig};
use nalgebra::DMatrix;
use rand::Rng;

use super::*;

/// Single pixel, two endmembers, no spatial term: ADMM objective and the
/// minimum over the grid `α = (t, 1 − t)`, `t ∈ {0, 1e-4, …, 1}`.
pub fn admm_vs_grid(seed: u64) -> (f64, f64) {
    let mut g = rng(seed);
    let bands = 6;
    let m = uniform(&mut g, bands, 2, 0.05, 1.0);
    let r = uniform(&mut g, bands, 1, 0.05, 1.0);
    let cube = ImageCube::new(1, 1, r.clone()).unwrap();
    let mt = EndmemberTensor::new(vec![m.clone()]).unwrap();
    let cfg = UnmixConfig { lambda_a: 0.0, ..UnmixConfig::default() };
    let a0 = AbundanceMatrix::uniform(2, 1, 1);
    let out = update_abundances_admm(&mt, &cube, &a0, &cfg).unwrap();
    let admm = abundance_objective(out.abundances.matrix(), &mt, &cube, 0.0).unwrap();

    let mut grid = f64::INFINITY;
    for i in 0..=10_000 {
        let t = i as f64 * 1e-4;
        let mut f = 0.0;
        for l in 0..bands {
            let e = r[(l, 0)] - m[(l, 0)] * t - m[(l, 1)] * (1.0 - t);
            f += e * e;
        }
        grid = grid.min(0.5 * f);
    }
    (admm, grid)
}

/// A 4×4 image with three endmembers and a spatial term: ADMM objective
/// and the best value of projected subgradient descent.
pub fn admm_vs_subgradient(seed: u64) -> (f64, f64) {
    let mut g = rng(seed);
    let (n1, n2, bands, r) = (4, 4, 6, 3);
    let m0 = endmembers(&mut g, bands, r);
    let psi = tensor(&mut g, [n1, n2, bands, r], 0.8, 1.2);
    let m = scaled(&m0, &psi);
    let a_true = sparse_abundances(&mut g, r, n1, n2);
    let data = DMatrix::from_fn(bands, n1 * n2, |l, n| {
        (m.slice(n) * a_true.column(n))[l] + g.random_range(-0.02..0.02)
    });
    let cube = ImageCube::new(n1, n2, data).unwrap();
    let lambda_a = 0.02;
    let cfg = UnmixConfig {
        lambda_a,
        admm_max_iter: 5000,
        admm_tol: 1e-9,
        ..UnmixConfig::default()
    };
    let start = AbundanceMatrix::uniform(r, n1, n2);
    let out = update_abundances_admm(&m, &cube, &start, &cfg).unwrap();
    let admm = abundance_objective(out.abundances.matrix(), &m, &cube, lambda_a).unwrap();
    (admm, projected_subgradient(&m, &cube, lambda_a, start.matrix().clone(), 200_000))
}

fn projected_subgradient(m: &EndmemberTensor, cube: &ImageCube, lambda_a: f64, mut a: DMatrix<f64>, iters: usize) -> f64 {
    let (n1, n2) = (cube.rows(), cube.cols());
    let pixels = n1 * n2;
    let lipschitz = (0..pixels)
        .map(|n| m.slice(n).transpose() * m.slice(n))
        .map(|g| g.symmetric_eigenvalues().max())
        .fold(0.0, f64::max);
    let mut best = abundance_objective(&a, m, cube, lambda_a).unwrap();
    let mut grad = DMatrix::zeros(a.nrows(), pixels);
    let idx = |i: usize, j: usize| i + n1 * j;
    for it in 0..iters {
        for n in 0..pixels {
            let res = m.slice(n) * a.column(n) - cube.pixel(n);
            grad.set_column(n, &(m.slice(n).transpose() * res));
        }
        // Subgradient of the column-wise L2 norms of the forward differences.
        let add_edge = |p: usize, q: usize, grad: &mut DMatrix<f64>| {
            let d = a.column(q) - a.column(p);
            let norm = d.norm();
            if norm > 1e-14 {
                let u = d * (lambda_a / norm);
                let mut cq = grad.column_mut(q);
                cq += &u;
                let mut cp = grad.column_mut(p);
                cp -= &u;
            }
        };
        for j in 0..n2 {
            for i in 0..n1 {
                if j + 1 < n2 {
                    add_edge(idx(i, j), idx(i, j + 1), &mut grad);
                }
                if i + 1 < n1 {
                    add_edge(idx(i, j), idx(i + 1, j), &mut grad);
                }
            }
        }
        let step = 1.0 / (lipschitz * (1.0 + it as f64).sqrt());
        a -= &grad * step;
        for mut c in a.column_iter_mut() {
            project_simplex(c.as_mut_slice());
        }
        best = best.min(abundance_objective(&a, m, cube, lambda_a).unwrap());
    }
    best
}

/// Max-norm of the finite-difference gradient of the scaling-factor
/// objective at the output of `update_psi`.
pub fn psi_stationarity(seed: u64) -> f64 {
    let mut g = rng(seed);
    let (n1, n2, bands, r) = (3, 2, 4, 2);
    let cube = cube(&mut g, n1, n2, bands);
    let m0 = endmembers(&mut g, bands, r);
    let pure = pure_sets(&mut g, n1, n2, r);
    let phi = tensor(&mut g, [n1, n2, bands, r], 0.5, 1.5);
    let cfg = VariabilityConfig {
        lambda_psi: [1.0, 10.0, 1e3][g.random_range(0..3)],
        epsilon: [1e-5, 0.1, 1.0][g.random_range(0..3)],
        ..VariabilityConfig::default()
    };
    let psi = update_psi(&phi, &cube, &m0, &pure, &cfg).unwrap();
    let dims = psi.dims();
    let grad = fd_gradient(psi.data(), 1e-5, |x| {
        let t = hyperunmix::tensor::Tensor4::new(dims, x.to_vec()).unwrap();
        objective_psi(&t, &phi, &cube, &m0, &pure, &cfg).unwrap()
    });
    max_abs(&grad)
}

/// Max-norm of the finite-difference gradient of the endmember terms at the
/// output of `update_endmembers_unprojected`.
pub fn endmember_stationarity(seed: u64) -> f64 {
    let mut g = rng(seed);
    let (n1, n2, bands, r) = (2, 3, 5, 3);
    let cube = cube(&mut g, n1, n2, bands);
    let m0 = endmembers(&mut g, bands, r);
    let psi = tensor(&mut g, [n1, n2, bands, r], 0.5, 1.5);
    let a = abundances(&mut g, r, n1, n2);
    let cfg = UnmixConfig {
        lambda_m: [0.01, 0.1, 1.0, 10.0][g.random_range(0..4)],
        lambda_a: 0.0,
        ..UnmixConfig::default()
    };
    let m = update_endmembers_unprojected(&a, &cube, &m0, &psi, &cfg).unwrap();
    let pixels = n1 * n2;
    let unflat = |x: &[f64]| {
        let slices = (0..pixels)
            .map(|n| DMatrix::from_fn(bands, r, |l, k| x[(n * bands + l) * r + k]))
            .collect();
        EndmemberTensor::new(slices).unwrap()
    };
    let grad = fd_gradient(&m.flat(), 1e-4, |x| {
        objective_unmix(&a, &unflat(x), &cube, &m0, &psi, &cfg).unwrap()
    });
    max_abs(&grad)
}

/// CP fit of an exact rank-2 tensor of dims (4, 4, 5, 3): relative error and
/// the largest increase of the error trace relative to the initial error.
pub fn cp_exact_recovery(seed: u64) -> (f64, f64) {
    let mut g = rng(seed);
    let dims = [4, 4, 5, 3];
    let factors = dims.map(|d| uniform(&mut g, d, 2, -1.0, 1.0));
    let truth = CpDecomposition::new(vec![1.0, 1.0], factors).unwrap().reconstruct().unwrap();
    let fit = cp_als(
        &truth,
        &CpOptions { rank: 2, seed, max_iter: 5000, rel_tol: 1e-15 },
    )
    .unwrap();
    let rel = truth.distance(&fit.decomposition.reconstruct().unwrap()).unwrap() / truth.frobenius_norm();
    let e0 = fit.error_trace[0];
    let worst = fit
        .error_trace
        .windows(2)
        .map(|w| (w[1] - w[0]) / e0)
        .fold(f64::NEG_INFINITY, f64::max);
    (rel, worst)
}

pub fn endmember_matrix(values: DMatrix<f64>) -> EndmemberMatrix {
    EndmemberMatrix::new(values).unwrap()
}
