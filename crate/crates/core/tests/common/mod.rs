#![allow(dead_code)]


use hyperunmix::extraction::PurePixelSets;
use hyperunmix::model::{AbundanceMatrix, EndmemberMatrix, EndmemberTensor, ImageCube};
use hyperunmix::tensor::Tensor4;
use hyperunmix::unmixing::project_simplex;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

pub fn cube(rng: &mut ChaCha8Rng, n1: usize, n2: usize, bands: usize) -> ImageCube {
    ImageCube::new(n1, n2, uniform(rng, bands, n1 * n2, 0.05, 1.0)).unwrap()
}

pub fn endmembers(rng: &mut ChaCha8Rng, bands: usize, r: usize) -> EndmemberMatrix {
    EndmemberMatrix::new(uniform(rng, bands, r, 0.1, 1.0)).unwrap()
}

pub fn abundances(rng: &mut ChaCha8Rng, r: usize, n1: usize, n2: usize) -> AbundanceMatrix {
    let mut a = uniform(rng, r, n1 * n2, 0.0, 1.0);
    for mut c in a.column_iter_mut() {
        let s = c.sum();
        c /= s;
    }
    AbundanceMatrix::new(a, n1, n2).unwrap()
}

/// Simplex point with some coordinates exactly zero.
pub fn sparse_abundances(rng: &mut ChaCha8Rng, r: usize, n1: usize, n2: usize) -> AbundanceMatrix {
    let mut a = uniform(rng, r, n1 * n2, -0.5, 1.0);
    for mut c in a.column_iter_mut() {
        project_simplex(c.as_mut_slice());
    }
    AbundanceMatrix::new(a, n1, n2).unwrap()
}

pub fn tensor(rng: &mut ChaCha8Rng, dims: [usize; 4], lo: f64, hi: f64) -> Tensor4 {
    Tensor4::from_fn(dims, |_| rng.random_range(lo..hi))
}

/// About a third of the pixels, assigned to random endmembers.
pub fn pure_sets(rng: &mut ChaCha8Rng, n1: usize, n2: usize, r: usize) -> PurePixelSets {
    let mut sets = vec![Vec::new(); r];
    for b in 0..n2 {
        for a in 0..n1 {
            if rng.random_bool(0.35) {
                sets[rng.random_range(0..r)].push((a, b));
            }
        }
    }
    PurePixelSets::from_sets(sets)
}

/// `M0 ⊙ Ψ_n` for every pixel.
pub fn scaled(m0: &EndmemberMatrix, psi: &Tensor4) -> EndmemberTensor {
    EndmemberTensor::scaled_reference(m0, psi).unwrap()
}

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
pub mod oracles;

/// A quick end-to-end configuration on a 10×9 scene.
pub fn small_config(dir: &std::path::Path) -> hyperunmix::config::RunConfig {
    let mut cfg = hyperunmix::config::RunConfig::default();
    let text = "n1 = 10\nn2 = 9\nbands = 16\nsigma_spatial = 2\nsigma_spectral = 4\nabundance_sigma = 1.5\n\
                pure_counts = 6,4,3\nrank = 2\npsi_max_iter = 5\nouter_max_iter = 4\nrender = false\n";
    for line in text.lines() {
        let (k, v) = line.split_once('=').unwrap();
        cfg.set(k.trim(), v.trim()).unwrap();
    }
    cfg.output_dir = dir.to_path_buf();
    cfg
}
