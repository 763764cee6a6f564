//! Estimation of the per-pixel, per-band, per-endmember scaling tensor `Ψ`.
//!
//! The estimator alternates between an element-wise closed-form update of `Ψ`
//! and a rank-`r` CP fit `Φ` of the current `Ψ`, minimizing
//!
//! ```text
//! ‖Ψ − Φ‖²_F + ε‖Ψ − 1‖²_F + λ_Ψ Σ_k Σ_{(n1,n2) pure for k} ‖r̃_{n1,n2} − m0_k ⊙ Ψ[n1,n2,:,k]‖²
//! ```
//!
//! Pure pixels pin the scaling factors at their locations; the low-rank `Φ`
//! spreads that information smoothly over the rest of the image.

use crate::error::{Error, Result, Warning};
use crate::extraction::PurePixelSets;
use crate::model::{EndmemberMatrix, ImageCube};
use crate::tensor::{cp_als, cp_als_from, CpDecomposition, CpOptions, Tensor4};

#[derive(Debug, Clone, PartialEq)]
pub struct VariabilityConfig {
    pub lambda_psi: f64,
    pub epsilon: f64,
    pub rank: usize,
    pub max_outer_iter: usize,
    pub rel_tol: f64,
    pub cp_seed: u64,
    pub cp_max_iter: usize,
    pub cp_rel_tol: f64,
}

impl Default for VariabilityConfig {
    fn default() -> Self {
        Self {
            lambda_psi: 1e3,
            epsilon: 1e-5,
            rank: 10,
            max_outer_iter: 30,
            rel_tol: 1e-4,
            cp_seed: 0,
            cp_max_iter: 100,
            cp_rel_tol: 1e-6,
        }
    }
}

impl VariabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_psi >= 0.0) || !self.lambda_psi.is_finite() {
            return Err(Error::arg(format!("lambda_psi must be >= 0, got {}", self.lambda_psi)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::arg(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if self.rank == 0 {
            return Err(Error::arg("rank must be at least 1"));
        }
        if self.max_outer_iter == 0 || self.cp_max_iter == 0 {
            return Err(Error::arg("iteration limits must be at least 1"));
        }
        if !(self.rel_tol > 0.0) || !(self.cp_rel_tol > 0.0) {
            return Err(Error::arg("tolerances must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct VariabilityResult {
    pub psi: Tensor4,
    pub phi: CpDecomposition,
    /// Objective after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub warnings: Vec<Warning>,
}

/// Relative slack tolerated on increases of the outer objective.
pub const TRACE_SLACK: f64 = 1e-9;

fn check_shapes(
    psi_dims: [usize; 4],
    cube: &ImageCube,
    m0: &EndmemberMatrix,
    pure: &PurePixelSets,
) -> Result<Vec<Option<usize>>> {
    let expected = [cube.rows(), cube.cols(), cube.bands(), m0.count()];
    if psi_dims != expected {
        return Err(Error::shape(format!(
            "scaling tensor dims {psi_dims:?}, expected {expected:?}"
        )));
    }
    if m0.bands() != cube.bands() {
        return Err(Error::shape(format!(
            "cube has {} bands, endmembers have {}",
            cube.bands(),
            m0.bands()
        )));
    }
    if pure.endmembers() != m0.count() {
        return Err(Error::shape(format!(
            "{} pure-pixel sets for {} endmembers",
            pure.endmembers(),
            m0.count()
        )));
    }
    pure.membership(cube.rows(), cube.cols())
}

/// Value of the estimator's objective at `(psi, phi)`.
pub fn objective_psi(
    psi: &Tensor4,
    phi: &Tensor4,
    cube: &ImageCube,
    m0: &EndmemberMatrix,
    pure: &PurePixelSets,
    cfg: &VariabilityConfig,
) -> Result<f64> {
    psi.check_same_dims(phi)?;
    let owner = check_shapes(psi.dims(), cube, m0, pure)?;
    let mut fit = 0.0;
    let mut prior = 0.0;
    for (p, f) in psi.data().iter().zip(phi.data()) {
        fit += (p - f) * (p - f);
        prior += (p - 1.0) * (p - 1.0);
    }
    let mut anchor = 0.0;
    let [n1, n2, bands, _] = psi.dims();
    for b in 0..n2 {
        for a in 0..n1 {
            let n = a + n1 * b;
            if let Some(k) = owner[n] {
                let px = cube.pixel(n);
                for l in 0..bands {
                    let e = px[l] - m0.matrix()[(l, k)] * psi.get([a, b, l, k]);
                    anchor += e * e;
                }
            }
        }
    }
    Ok(fit + cfg.epsilon * prior + cfg.lambda_psi * anchor)
}

/// Minimizer of the objective over `Ψ ≥ 0` with `Φ` fixed.
///
/// Each element solves a scalar quadratic: `(φ + ε)/(1 + ε)` away from pure
/// pixels and `(φ + ε + λ m r̃)/(1 + ε + λ m²)` at pixels pure for its
/// endmember; the stationary value is then clamped at zero.
pub fn update_psi(
    phi: &Tensor4,
    cube: &ImageCube,
    m0: &EndmemberMatrix,
    pure: &PurePixelSets,
    cfg: &VariabilityConfig,
) -> Result<Tensor4> {
    cfg.validate()?;
    let owner = check_shapes(phi.dims(), cube, m0, pure)?;
    let eps = cfg.epsilon;
    let lambda = cfg.lambda_psi;
    let [n1, n2, bands, r] = phi.dims();
    let mut out = Tensor4::zeros(phi.dims());
    for k in 0..r {
        for l in 0..bands {
            let m = m0.matrix()[(l, k)];
            for b in 0..n2 {
                for a in 0..n1 {
                    let idx = [a, b, l, k];
                    let f = phi.get(idx);
                    let n = a + n1 * b;
                    let v = if lambda != 0.0 && owner[n] == Some(k) {
                        (f + eps + lambda * m * cube.matrix()[(l, n)]) / (1.0 + eps + lambda * m * m)
                    } else {
                        (f + eps) / (1.0 + eps)
                    };
                    out.set(idx, v.max(0.0));
                }
            }
        }
    }
    Ok(out)
}

/// Alternates [`update_psi`] with a CP fit of `Ψ` until the relative objective
/// change drops below `cfg.rel_tol` or `cfg.max_outer_iter` is reached.
///
/// `Φ` starts at the all-ones tensor. The first CP fit starts from seeded random
/// factors; later fits warm-start from the previous factors, which keeps each
/// `Φ` step from increasing `‖Ψ − Φ‖_F`.
pub fn estimate_variability(
    cube: &ImageCube,
    m0: &EndmemberMatrix,
    pure: &PurePixelSets,
    cfg: &VariabilityConfig,
) -> Result<VariabilityResult> {
    cfg.validate()?;
    let dims = [cube.rows(), cube.cols(), cube.bands(), m0.count()];
    check_shapes(dims, cube, m0, pure)?;

    let mut phi = Tensor4::ones(dims);
    let mut dec: Option<CpDecomposition> = None;
    let mut trace: Vec<f64> = Vec::new();
    let mut warnings = pure.warnings.clone();
    let mut psi = phi.clone();
    let mut iterations = 0;

    while iterations < cfg.max_outer_iter {
        iterations += 1;
        psi = update_psi(&phi, cube, m0, pure, cfg)?;
        let fit = match dec.take() {
            None => cp_als(
                &psi,
                &CpOptions {
                    rank: cfg.rank,
                    seed: cfg.cp_seed,
                    max_iter: cfg.cp_max_iter,
                    rel_tol: cfg.cp_rel_tol,
                },
            )?,
            Some(prev) => cp_als_from(&psi, prev, cfg.cp_max_iter, cfg.cp_rel_tol)?,
        };
        for w in &fit.warnings {
            if !warnings.contains(w) {
                warnings.push(w.clone());
            }
        }
        phi = fit.decomposition.reconstruct()?;
        dec = Some(fit.decomposition);

        let obj = objective_psi(&psi, &phi, cube, m0, pure, cfg)?;
        let prev = trace.last().copied();
        trace.push(obj);
        if let Some(prev) = prev {
            if obj > prev + TRACE_SLACK * prev.abs() {
                log::debug!("variability objective rose from {prev} to {obj} at iteration {iterations}");
                warnings.push(Warning::NonMonotone {
                    stage: "variability",
                    iteration: iterations,
                    increase: obj - prev,
                });
            }
            if (prev - obj).abs() <= cfg.rel_tol * prev.abs() {
                break;
            }
        }
        if obj == 0.0 {
            break;
        }
    }

    Ok(VariabilityResult {
        psi,
        phi: dec.expect("at least one outer iteration runs"),
        objective_trace: trace,
        iterations,
        warnings,
    })
}
