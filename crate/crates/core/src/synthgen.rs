//! Seeded synthetic scenes following the generalized linear mixing model
//! `r_n = (M ⊙ Ψ_n) α_n + e_n`, with known abundances, scaling factors and noise.
//!
//! Abundances come from smoothed Gaussian random fields pushed through a
//! softmax, with blocks of pixels overwritten by one-hot (pure) columns.
//! Scaling factors are `1 + amplitude · g` clamped at zero, where `g` is a
//! stationary Gaussian random field with unit marginal variance, correlated
//! by a separable 3-D Gaussian filter (two spatial axes, one spectral). Noise
//! is white and rescaled so the cube has exactly the requested SNR.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{AbundanceMatrix, EndmemberMatrix, EndmemberTensor, ImageCube};
use crate::tensor::Tensor4;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n1: usize,
    pub n2: usize,
    pub bands: usize,
    pub endmembers: usize,
    /// `f64::INFINITY` produces a noiseless cube.
    pub snr_db: f64,
    pub variability_amplitude: f64,
    /// Spatial width of the scaling-factor filter, in pixels.
    pub sigma_spatial: f64,
    /// Spectral width of the scaling-factor filter, in bands.
    pub sigma_spectral: f64,
    /// Spatial width of the abundance-field filter, in pixels.
    pub abundance_sigma: f64,
    /// Softmax temperature applied to the unit-variance abundance fields.
    pub temperature: f64,
    /// Fraction of all pixels made pure for each endmember.
    pub pure_region_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n1: 50,
            n2: 50,
            bands: 50,
            endmembers: 3,
            snr_db: 30.0,
            variability_amplitude: 0.1,
            sigma_spatial: 25.0,
            sigma_spectral: 40.0,
            abundance_sigma: 1.5,
            temperature: 0.3,
            pure_region_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 || self.bands == 0 || self.endmembers == 0 {
            return Err(Error::arg("scene dims and endmember count must be positive"));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::arg(format!("snr_db must be finite or +inf, got {}", self.snr_db)));
        }
        if !(self.variability_amplitude >= 0.0) {
            return Err(Error::arg("variability_amplitude must be >= 0"));
        }
        if !(self.sigma_spatial >= 0.0) || !(self.sigma_spectral >= 0.0) || !(self.abundance_sigma >= 0.0) {
            return Err(Error::arg("filter widths must be >= 0"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::arg("temperature must be > 0"));
        }
        if !(self.pure_region_fraction >= 0.0 && self.pure_region_fraction < 1.0) {
            return Err(Error::arg(format!(
                "pure_region_fraction must lie in [0, 1), got {}",
                self.pure_region_fraction
            )));
        }
        if self.pure_region_fraction * self.endmembers as f64 > 1.0 {
            return Err(Error::arg(format!(
                "pure regions cover {} of the image",
                self.pure_region_fraction * self.endmembers as f64
            )));
        }
        Ok(())
    }

    fn pure_count(&self) -> usize {
        (self.pure_region_fraction * (self.n1 * self.n2) as f64).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub cube: ImageCube,
    pub a_true: AbundanceMatrix,
    pub psi_true: Tensor4,
    pub m_true: EndmemberMatrix,
    /// The noise that was added, `L × N`; zero for a noiseless scene.
    pub noise: DMatrix<f64>,
}

impl GroundTruth {
    /// `M ⊙ Ψ_n` at every pixel.
    pub fn endmember_tensor(&self) -> Result<EndmemberTensor> {
        EndmemberTensor::scaled_reference(&self.m_true, &self.psi_true)
    }

    /// `10·log10(‖signal‖² / ‖noise‖²)`, recomputed from the stored parts.
    pub fn measured_snr_db(&self) -> f64 {
        let signal = self.cube.matrix() - &self.noise;
        10.0 * (signal.norm_squared() / self.noise.norm_squared()).log10()
    }
}

/// Noiseless forward model: column `n` is `(M ⊙ Ψ_n) α_n`.
pub fn forward_glmm(a: &AbundanceMatrix, psi: &Tensor4, m: &EndmemberMatrix) -> Result<ImageCube> {
    let (n1, n2) = a.image_dims();
    let [p1, p2, l, r] = psi.dims();
    if (p1, p2) != (n1, n2) || l != m.bands() || r != m.count() || a.endmembers() != r {
        return Err(Error::shape(format!(
            "abundances {}x{} on a {n1}x{n2} image, scaling tensor {:?}, endmembers {}x{}",
            a.endmembers(),
            a.pixels(),
            psi.dims(),
            m.bands(),
            m.count()
        )));
    }
    let mut data = DMatrix::zeros(l, n1 * n2);
    for k in 0..r {
        for b in 0..l {
            let mk = m.matrix()[(b, k)];
            for j in 0..n2 {
                for i in 0..n1 {
                    let n = i + n1 * j;
                    data[(b, n)] += mk * psi.get([i, j, b, k]) * a.matrix()[(k, n)];
                }
            }
        }
    }
    ImageCube::new(n1, n2, data)
}

/// Draws a scene from `cfg`, using the first `cfg.endmembers` spectra of `library`.
pub fn generate(cfg: &SynthConfig, library: &EndmemberMatrix) -> Result<GroundTruth> {
    cfg.validate()?;
    if library.bands() != cfg.bands {
        return Err(Error::arg(format!(
            "library has {} bands, scene needs {}",
            library.bands(),
            cfg.bands
        )));
    }
    if library.count() < cfg.endmembers {
        return Err(Error::arg(format!(
            "library has {} spectra, scene needs {}",
            library.count(),
            cfg.endmembers
        )));
    }
    let m_true = library.select(&(0..cfg.endmembers).collect::<Vec<_>>())?;
    let (n1, n2, l, r) = (cfg.n1, cfg.n2, cfg.bands, cfg.endmembers);
    let n = n1 * n2;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Abundance fields, one smoothed unit-variance field per endmember.
    let mut fields = DMatrix::zeros(r, n);
    for k in 0..r {
        let smooth = gaussian_field(&mut rng, [n1, n2, 1], [cfg.abundance_sigma, cfg.abundance_sigma, 0.0]);
        for (p, v) in smooth.into_iter().enumerate() {
            fields[(k, p)] = v;
        }
    }
    let mut a = DMatrix::zeros(r, n);
    for p in 0..n {
        let col = fields.column(p) / cfg.temperature;
        let max = col.max();
        let exp = col.map(|v| (v - max).exp());
        let sum = exp.sum();
        a.set_column(p, &(exp / sum));
    }
    // Pure regions: for each endmember in turn, its highest-abundance free pixels.
    let count = cfg.pure_count();
    let mut taken = vec![false; n];
    for k in 0..r {
        let mut order: Vec<usize> = (0..n).filter(|&p| !taken[p]).collect();
        order.sort_by(|&x, &y| a[(k, y)].total_cmp(&a[(k, x)]).then(x.cmp(&y)));
        for &p in order.iter().take(count) {
            taken[p] = true;
            a.column_mut(p).fill(0.0);
            a[(k, p)] = 1.0;
        }
    }
    // Renormalize softmax columns so each sums to one in floating point as well.
    for (p, mut c) in a.column_iter_mut().enumerate() {
        if !taken[p] {
            let s = c.sum();
            c /= s;
        }
    }
    let a_true = AbundanceMatrix::new(a, n1, n2)?;

    // Scaling factors, independently per endmember.
    let mut psi = Tensor4::zeros([n1, n2, l, r]);
    for k in 0..r {
        let smooth = gaussian_field(&mut rng, [n1, n2, l], [cfg.sigma_spatial, cfg.sigma_spatial, cfg.sigma_spectral]);
        let base = k * n * l;
        for (off, g) in smooth.into_iter().enumerate() {
            psi.data_mut()[base + off] = (1.0 + cfg.variability_amplitude * g).max(0.0);
        }
    }

    let clean = forward_glmm(&a_true, &psi, &m_true)?;
    let mut noise: DMatrix<f64> = DMatrix::zeros(l, n);
    if cfg.snr_db.is_finite() {
        for v in noise.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let target = clean.matrix().norm_squared() / 10f64.powf(cfg.snr_db / 10.0);
        let have = noise.norm_squared();
        if have > 0.0 {
            noise *= (target / have).sqrt();
        }
    }
    let cube = ImageCube::new(n1, n2, clean.matrix() + &noise)?;
    Ok(GroundTruth {
        cube,
        a_true,
        psi_true: psi,
        m_true,
        noise,
    })
}

/// Normalized Gaussian kernel truncated at radius `ceil(3σ)`; `[1]` for σ = 0.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Stationary Gaussian random field on a 3-D grid (first axis fastest) with
/// zero mean, unit marginal variance and Gaussian correlation of width
/// `sigmas[i]` along axis `i`.
///
/// White noise is drawn on the grid padded by the kernel radius on every side,
/// filtered without boundary handling and cropped, so every output sample is a
/// full kernel average. Dividing by the kernel's root sum of squares restores
/// unit variance.
pub fn gaussian_field<R: Rng>(rng: &mut R, dims: [usize; 3], sigmas: [f64; 3]) -> Vec<f64> {
    let kernels = sigmas.map(gaussian_kernel);
    let mut shape = [0; 3];
    for i in 0..3 {
        shape[i] = dims[i] + kernels[i].len() - 1;
    }
    let mut cur: Vec<f64> = (0..shape.iter().product::<usize>())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let mut gain = 1.0;
    for axis in 0..3 {
        let kernel = &kernels[axis];
        gain *= kernel.iter().map(|w| w * w).sum::<f64>();
        let mut out_shape = shape;
        out_shape[axis] = dims[axis];
        let in_strides = [1, shape[0], shape[0] * shape[1]];
        let mut out = Vec::with_capacity(out_shape.iter().product());
        for z in 0..out_shape[2] {
            for y in 0..out_shape[1] {
                for x in 0..out_shape[0] {
                    let base = x * in_strides[0] + y * in_strides[1] + z * in_strides[2];
                    let step = in_strides[axis];
                    out.push(kernel.iter().enumerate().map(|(t, w)| w * cur[base + t * step]).sum::<f64>());
                }
            }
        }
        cur = out;
        shape = out_shape;
    }
    let scale = gain.sqrt().recip();
    cur.iter_mut().for_each(|v| *v *= scale);
    cur
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::bundled_library;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n1: 12,
            n2: 10,
            bands: 16,
            endmembers: 3,
            sigma_spatial: 2.0,
            sigma_spectral: 2.0,
            abundance_sigma: 2.0,
            seed,
            ..Default::default()
        }
    }

    fn library(bands: usize) -> EndmemberMatrix {
        bundled_library().resample(bands).unwrap()
    }

    #[test]
    fn zero_amplitude_gives_unit_scaling() {
        let cfg = SynthConfig {
            variability_amplitude: 0.0,
            ..small(1)
        };
        let gt = generate(&cfg, &library(16)).unwrap();
        assert!(gt.psi_true.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn noiseless_cube_equals_forward_model() {
        let cfg = SynthConfig {
            snr_db: f64::INFINITY,
            ..small(2)
        };
        let gt = generate(&cfg, &library(16)).unwrap();
        let clean = forward_glmm(&gt.a_true, &gt.psi_true, &gt.m_true).unwrap();
        assert_eq!(clean, gt.cube);
    }

    #[test]
    fn measured_snr_matches_request() {
        for snr in [10.0, 30.0, 45.0] {
            let cfg = SynthConfig { snr_db: snr, ..small(3) };
            let gt = generate(&cfg, &library(16)).unwrap();
            assert!((gt.measured_snr_db() - snr).abs() <= 0.1, "{}", gt.measured_snr_db());
        }
    }

    #[test]
    fn reproducible_per_seed() {
        let a = generate(&small(5), &library(16)).unwrap();
        let b = generate(&small(5), &library(16)).unwrap();
        assert_eq!(a.cube, b.cube);
        assert_eq!(a.psi_true, b.psi_true);
        let c = generate(&small(6), &library(16)).unwrap();
        assert_ne!(a.cube, c.cube);
    }

    #[test]
    fn abundances_on_simplex_with_pure_regions() {
        let cfg = small(7);
        let gt = generate(&cfg, &library(16)).unwrap();
        assert!(gt.a_true.is_feasible());
        let want = cfg.pure_count();
        for k in 0..3 {
            let pure = gt.a_true.matrix().row(k).iter().filter(|&&v| v == 1.0).count();
            assert!(pure >= want, "endmember {k}: {pure} pure pixels");
        }
        assert!(gt.psi_true.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn infeasible_pure_fraction_rejected() {
        let cfg = SynthConfig {
            pure_region_fraction: 0.4,
            ..small(0)
        };
        assert!(matches!(generate(&cfg, &library(16)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn library_shape_checked() {
        assert!(generate(&small(0), &library(20)).is_err());
        let one = library(16).select(&[0, 1]).unwrap();
        assert!(generate(&small(0), &one).is_err());
    }

    #[test]
    fn forward_model_reductions() {
        let m = EndmemberMatrix::new(DMatrix::from_row_slice(3, 2, &[0.2, 0.6, 0.4, 0.3, 0.8, 0.1])).unwrap();
        let a = AbundanceMatrix::new(DMatrix::from_column_slice(2, 2, &[0.25, 0.75, 1.0, 0.0]), 2, 1).unwrap();
        let ones = Tensor4::ones([2, 1, 3, 2]);
        let lmm = forward_glmm(&a, &ones, &m).unwrap();
        let expected = m.matrix() * a.matrix();
        assert!((lmm.matrix() - expected).norm() < 1e-15);

        let psi = Tensor4::from_fn([2, 1, 3, 2], |[i, _, l, k]| 0.5 + 0.1 * (i + 2 * l + 3 * k) as f64);
        let out = forward_glmm(&a, &psi, &m).unwrap();
        // Pixel 1 is pure for endmember 0.
        for l in 0..3 {
            let want = m.matrix()[(l, 0)] * psi.get([1, 0, l, 0]);
            assert!((out.matrix()[(l, 1)] - want).abs() < 1e-15);
        }
        // Pixel 0 against a scalar triple loop.
        for l in 0..3 {
            let mut want = 0.0;
            for k in 0..2 {
                want += psi.get([0, 0, l, k]) * m.matrix()[(l, k)] * a.matrix()[(k, 0)];
            }
            assert!((out.matrix()[(l, 0)] - want).abs() < 1e-15);
        }
    }

    fn lag1_autocorrelation(t: &Tensor4) -> f64 {
        let [n1, n2, l, r] = t.dims();
        let mean = t.data().iter().sum::<f64>() / t.len() as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..r {
            for b in 0..l {
                for j in 0..n2 {
                    for i in 0..n1 {
                        let x = t.get([i, j, b, k]) - mean;
                        den += x * x;
                        if i + 1 < n1 {
                            num += x * (t.get([i + 1, j, b, k]) - mean);
                        }
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn wider_filter_means_longer_correlation() {
        let narrow = generate(&SynthConfig { sigma_spatial: 0.5, ..small(8) }, &library(16)).unwrap();
        let wide = generate(&SynthConfig { sigma_spatial: 3.0, ..small(8) }, &library(16)).unwrap();
        assert!(lag1_autocorrelation(&wide.psi_true) > lag1_autocorrelation(&narrow.psi_true));
    }

    #[test]
    fn kernel_is_normalized() {
        for s in [0.5, 1.0, 3.0] {
            let k = gaussian_kernel(s);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert_eq!(k.len(), 2 * (3.0 * s).ceil() as usize + 1);
        }
    }

    #[test]
    fn field_variance_is_uniform_over_the_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = [6, 5, 4];
        let draws = 4000;
        let mut sq = vec![0.0; 120];
        for _ in 0..draws {
            let f = gaussian_field(&mut rng, dims, [2.0, 2.0, 3.0]);
            for (s, v) in sq.iter_mut().zip(&f) {
                *s += v * v / draws as f64;
            }
        }
        // Corner, edge and interior samples all have unit variance.
        for idx in [0, 5, 119, 6 * 2 + 3 + 30] {
            assert!((sq[idx] - 1.0).abs() < 0.1, "index {idx}: variance {}", sq[idx]);
        }
    }
}
