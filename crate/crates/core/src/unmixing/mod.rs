//! Joint estimation of abundances and per-pixel endmembers given a scaling tensor.
//!
//! Minimizes
//!
//! ```text
//! J(A, 𝕄) = ½ Σ_n (‖r_n − M_n α_n‖² + λ_M ‖M_n − M0 ⊙ Ψ_n‖²_F) + λ_A (‖Hh A‖_{2,1} + ‖Hv A‖_{2,1})
//! ```
//!
//! subject to `A ≥ 0`, `Aᵀ1 = 1`, `𝕄 ≥ 0`, by alternating a closed-form
//! endmember update (projected onto the nonnegative orthant) with an ADMM
//! solve for the abundances.

mod admm;
pub mod gradient;
mod simplex;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use admm::{default_rho, update_abundances_admm, AdmmOutcome};
pub use simplex::project_simplex;

use crate::error::{Error, Result, Warning};
use crate::model::{check_psi, psi_slice, AbundanceMatrix, EndmemberMatrix, EndmemberTensor, ImageCube};
use crate::tensor::Tensor4;

#[derive(Debug, Clone, PartialEq)]
pub struct UnmixConfig {
    pub lambda_m: f64,
    pub lambda_a: f64,
    /// ADMM penalty; `None` uses [`default_rho`].
    pub admm_rho: Option<f64>,
    pub admm_max_iter: usize,
    pub admm_tol: f64,
    pub outer_max_iter: usize,
    pub outer_rel_tol: f64,
}

impl Default for UnmixConfig {
    fn default() -> Self {
        Self {
            lambda_m: 0.1,
            lambda_a: 0.01,
            admm_rho: None,
            admm_max_iter: 1000,
            admm_tol: 1e-6,
            outer_max_iter: 20,
            outer_rel_tol: 1e-4,
        }
    }
}

impl UnmixConfig {
    /// Settings used by [`fcls`]: no spatial term and a tight per-pixel tolerance.
    pub fn fcls() -> Self {
        Self {
            lambda_m: 0.0,
            lambda_a: 0.0,
            admm_max_iter: 5000,
            admm_tol: 1e-10,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_m >= 0.0) || !(self.lambda_a >= 0.0) {
            return Err(Error::arg(format!(
                "lambda_m and lambda_a must be >= 0, got {} and {}",
                self.lambda_m, self.lambda_a
            )));
        }
        if let Some(rho) = self.admm_rho {
            if !(rho > 0.0) || !rho.is_finite() {
                return Err(Error::arg(format!("admm_rho must be > 0, got {rho}")));
            }
        }
        if self.admm_max_iter == 0 || self.outer_max_iter == 0 {
            return Err(Error::arg("iteration limits must be at least 1"));
        }
        if !(self.admm_tol > 0.0) || !(self.outer_rel_tol > 0.0) {
            return Err(Error::arg("tolerances must be positive"));
        }
        Ok(())
    }
}

/// The abundance subproblem objective:
/// `½ Σ_n ‖r_n − M_n α_n‖² + λ_A (‖Hh A‖_{2,1} + ‖Hv A‖_{2,1})`.
pub fn abundance_objective(
    a: &DMatrix<f64>,
    m: &EndmemberTensor,
    cube: &ImageCube,
    lambda_a: f64,
) -> Result<f64> {
    if a.ncols() != cube.pixels() || m.pixels() != cube.pixels() || a.nrows() != m.endmembers() {
        return Err(Error::shape("abundances, endmembers and cube disagree"));
    }
    let fit: f64 = (0..cube.pixels())
        .map(|n| (cube.pixel(n) - m.slice(n) * a.column(n)).norm_squared())
        .sum();
    Ok(0.5 * fit + lambda_a * spatial_penalty(a, cube.rows(), cube.cols()))
}

/// `‖Hh A‖_{2,1} + ‖Hv A‖_{2,1}`.
pub fn spatial_penalty(a: &DMatrix<f64>, n1: usize, n2: usize) -> f64 {
    gradient::l21_norm(&gradient::horizontal(a, n1, n2))
        + gradient::l21_norm(&gradient::vertical(a, n1, n2))
}

/// Horizontal gradient of every abundance map.
pub fn gradient_h(a: &AbundanceMatrix) -> DMatrix<f64> {
    let (n1, n2) = a.image_dims();
    gradient::horizontal(a.matrix(), n1, n2)
}

/// Vertical gradient of every abundance map.
pub fn gradient_v(a: &AbundanceMatrix) -> DMatrix<f64> {
    let (n1, n2) = a.image_dims();
    gradient::vertical(a.matrix(), n1, n2)
}

fn check_inputs(cube: &ImageCube, m0: &EndmemberMatrix, psi: &Tensor4) -> Result<()> {
    if m0.bands() != cube.bands() {
        return Err(Error::shape(format!(
            "cube has {} bands, endmembers have {}",
            cube.bands(),
            m0.bands()
        )));
    }
    check_psi(psi, cube.bands(), m0.count(), cube.pixels())?;
    let [n1, n2, _, _] = psi.dims();
    if (n1, n2) != (cube.rows(), cube.cols()) {
        return Err(Error::shape(format!(
            "scaling tensor image is {n1}x{n2}, cube is {}x{}",
            cube.rows(),
            cube.cols()
        )));
    }
    Ok(())
}

/// Full value of `J(A, 𝕄)`.
pub fn objective_unmix(
    a: &AbundanceMatrix,
    m: &EndmemberTensor,
    cube: &ImageCube,
    m0: &EndmemberMatrix,
    psi: &Tensor4,
    cfg: &UnmixConfig,
) -> Result<f64> {
    check_inputs(cube, m0, psi)?;
    let base = abundance_objective(a.matrix(), m, cube, cfg.lambda_a)?;
    let prior: f64 = (0..cube.pixels())
        .map(|n| (m.slice(n) - m0.matrix().component_mul(&psi_slice(psi, n))).norm_squared())
        .sum();
    Ok(base + 0.5 * cfg.lambda_m * prior)
}

/// Per-pixel minimizer of the endmember terms before the nonnegativity projection:
/// `M̂_n = (r_n α_nᵀ + λ_M M0 ⊙ Ψ_n)(α_n α_nᵀ + λ_M I)⁻¹`.
///
/// The inverse is applied in closed form (Sherman–Morrison), giving
/// `M̂_n = X − (X α_n) α_nᵀ / (λ_M + ‖α_n‖²)` with `X = r_n α_nᵀ / λ_M + M0 ⊙ Ψ_n`.
pub fn update_endmembers_unprojected(
    a: &AbundanceMatrix,
    cube: &ImageCube,
    m0: &EndmemberMatrix,
    psi: &Tensor4,
    cfg: &UnmixConfig,
) -> Result<EndmemberTensor> {
    check_inputs(cube, m0, psi)?;
    if a.pixels() != cube.pixels() || a.endmembers() != m0.count() {
        return Err(Error::shape("abundances do not match the cube and endmembers"));
    }
    let lambda = cfg.lambda_m;
    let slices: Result<Vec<DMatrix<f64>>> = (0..cube.pixels())
        .into_par_iter()
        .map(|n| {
            let alpha = a.column(n);
            let r = cube.pixel(n);
            let prior = m0.matrix().component_mul(&psi_slice(psi, n));
            let s = alpha.norm_squared();
            if lambda > 0.0 {
                let x = r * alpha.transpose() / lambda + prior;
                let xa = &x * alpha;
                Ok(x - xa * alpha.transpose() / (lambda + s))
            } else if alpha.len() == 1 && s > 0.0 {
                Ok(DMatrix::from_iterator(r.len(), 1, r.iter().map(|v| v / alpha[0])))
            } else {
                Err(Error::Singular { pixel: n })
            }
        })
        .collect();
    EndmemberTensor::new(slices?)
}

/// Endmember step: [`update_endmembers_unprojected`] followed by setting every
/// negative entry to zero.
pub fn update_endmembers(
    a: &AbundanceMatrix,
    cube: &ImageCube,
    m0: &EndmemberMatrix,
    psi: &Tensor4,
    cfg: &UnmixConfig,
) -> Result<EndmemberTensor> {
    let raw = update_endmembers_unprojected(a, cube, m0, psi, cfg)?;
    EndmemberTensor::new(
        raw.slices()
            .iter()
            .map(|s| s.map(|v| v.max(0.0)))
            .collect(),
    )
}

/// Fully constrained least squares with fixed endmembers `m0`.
pub fn fcls(cube: &ImageCube, m0: &EndmemberMatrix) -> Result<AbundanceMatrix> {
    fcls_with(cube, m0, &UnmixConfig::fcls()).map(|o| o.abundances)
}

/// [`fcls`] with explicit ADMM settings; `lambda_a` is forced to zero.
pub fn fcls_with(cube: &ImageCube, m0: &EndmemberMatrix, cfg: &UnmixConfig) -> Result<AdmmOutcome> {
    if m0.bands() != cube.bands() {
        return Err(Error::shape(format!(
            "cube has {} bands, endmembers have {}",
            cube.bands(),
            m0.bands()
        )));
    }
    let cfg = UnmixConfig {
        lambda_a: 0.0,
        ..cfg.clone()
    };
    let m = EndmemberTensor::constant(m0, cube.pixels());
    let start = AbundanceMatrix::uniform(m0.count(), cube.rows(), cube.cols());
    update_abundances_admm(&m, cube, &start, &cfg)
}

#[derive(Debug, Clone)]
pub struct UnmixResult {
    pub abundances: AbundanceMatrix,
    pub endmembers: EndmemberTensor,
    /// `J(A, 𝕄)` after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub warnings: Vec<Warning>,
}

/// Relative slack tolerated on increases of the outer objective.
pub const TRACE_SLACK: f64 = 1e-8;

/// Alternates [`update_endmembers`] and [`update_abundances_admm`] from
/// `a_init` (FCLS when `None`) until the relative change of `J` falls below
/// `cfg.outer_rel_tol` or `cfg.outer_max_iter` is reached.
pub fn unmix(
    cube: &ImageCube,
    m0: &EndmemberMatrix,
    psi: &Tensor4,
    cfg: &UnmixConfig,
    a_init: Option<&AbundanceMatrix>,
) -> Result<UnmixResult> {
    cfg.validate()?;
    check_inputs(cube, m0, psi)?;
    let mut a = match a_init {
        Some(a) => {
            if a.endmembers() != m0.count() || a.image_dims() != (cube.rows(), cube.cols()) {
                return Err(Error::shape("initial abundances do not match the cube and endmembers"));
            }
            a.clone()
        }
        None => fcls(cube, m0)?,
    };
    let mut trace: Vec<f64> = Vec::new();
    let mut warnings: Vec<Warning> = Vec::new();
    let mut endmembers = None;
    let mut iterations = 0;
    while iterations < cfg.outer_max_iter {
        iterations += 1;
        let m = update_endmembers(&a, cube, m0, psi, cfg)?;
        let step = update_abundances_admm(&m, cube, &a, cfg)?;
        warnings.extend(step.warnings);
        a = step.abundances;
        let obj = objective_unmix(&a, &m, cube, m0, psi, cfg)?;
        endmembers = Some(m);
        let prev = trace.last().copied();
        trace.push(obj);
        if let Some(prev) = prev {
            if obj > prev + TRACE_SLACK * prev.abs() {
                log::debug!("unmixing objective rose from {prev} to {obj} at iteration {iterations}");
                warnings.push(Warning::NonMonotone {
                    stage: "unmix",
                    iteration: iterations,
                    increase: obj - prev,
                });
            }
            if (prev - obj).abs() <= cfg.outer_rel_tol * prev.abs() {
                break;
            }
        }
        if obj == 0.0 {
            break;
        }
    }
    Ok(UnmixResult {
        abundances: a,
        endmembers: endmembers.expect("at least one outer iteration runs"),
        objective_trace: trace,
        iterations,
        warnings,
    })
}
