//! ADMM for the simplex-constrained, TV-regularized abundance problem
//!
//! ```text
//! min_A ½ Σ_n ‖r_n − M_n α_n‖² + λ_A (‖Hh A‖_{2,1} + ‖Hv A‖_{2,1})   s.t. A ≥ 0, Aᵀ1 = 1
//! ```
//!
//! Splitting `Vh = Hh A`, `Vv = Hv A`, `U = A` (scaled duals `Dh`, `Dv`, `Du`):
//!
//! * A-step: `(blkdiag(M_nᵀM_n) + ρ(HhᵀHh + HvᵀHv + I)) A = [M_nᵀr_n] + ρ(Hhᵀ(Vh−Dh) + Hvᵀ(Vv−Dv) + U − Du)`,
//!   solved by block-Jacobi preconditioned conjugate gradient, warm-started;
//! * `Vh`, `Vv`: column-wise group soft-thresholding with threshold `λ_A/ρ`;
//! * `U`: column-wise Euclidean projection onto the simplex.
//!
//! Residuals are root-mean-square per entry:
//! `primal = ‖(HhA−Vh, HvA−Vv, A−U)‖ / √(3RN)` and
//! `dual = (ρ/ρ₀)‖Hhᵀ ΔVh + Hvᵀ ΔVv + ΔU‖ / √(RN)`, where `Δ` is the change over one
//! iteration and `ρ₀` the starting penalty, so both are in abundance units and
//! the stopping rule does not depend on the scale of the data. `ρ` is
//! rebalanced every few iterations when one residual exceeds the other tenfold. With `λ_A = 0` the problem separates and each pixel runs
//! its own small ADMM with only the `U` split.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use super::gradient::{
    degree, group_soft_threshold, horizontal, horizontal_adjoint, vertical, vertical_adjoint,
};
use super::simplex::project_simplex;
use super::{abundance_objective, UnmixConfig};
use crate::error::{Error, Result, Warning};
use crate::model::{AbundanceMatrix, EndmemberTensor, ImageCube};

const CG_TOL: f64 = 1e-10;
const CG_MAX_ITER: usize = 2000;
const BALANCE_EVERY: usize = 10;
const BALANCE_RATIO: f64 = 10.0;
const BALANCE_FACTOR: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    pub abundances: AbundanceMatrix,
    pub iterations: usize,
    pub primal: f64,
    pub dual: f64,
    pub converged: bool,
    pub warnings: Vec<Warning>,
}

/// Default penalty: `1e-2 · mean_n ‖r_n‖²`.
pub fn default_rho(cube: &ImageCube) -> f64 {
    let mean = cube.matrix().norm_squared() / cube.pixels() as f64;
    if mean > 0.0 {
        1e-2 * mean
    } else {
        1e-2
    }
}

/// Solves the abundance problem at fixed per-pixel endmembers `m`.
///
/// The returned columns are exact simplex projections. If `a_init` is feasible
/// and scores better than the ADMM iterate, `a_init` is returned instead, so
/// the objective never increases relative to a feasible start.
pub fn update_abundances_admm(
    m: &EndmemberTensor,
    cube: &ImageCube,
    a_init: &AbundanceMatrix,
    cfg: &UnmixConfig,
) -> Result<AdmmOutcome> {
    cfg.validate()?;
    let (n1, n2) = (cube.rows(), cube.cols());
    if m.pixels() != cube.pixels() || m.bands() != cube.bands() {
        return Err(Error::shape(format!(
            "endmember tensor ({} pixels, {} bands) does not match cube ({} pixels, {} bands)",
            m.pixels(),
            m.bands(),
            cube.pixels(),
            cube.bands()
        )));
    }
    if a_init.endmembers() != m.endmembers() || a_init.image_dims() != (n1, n2) {
        return Err(Error::shape(format!(
            "initial abundances are {}x{} for a {n1}x{n2} image, expected {} endmembers",
            a_init.endmembers(),
            a_init.pixels(),
            m.endmembers()
        )));
    }
    let rho = cfg.admm_rho.unwrap_or_else(|| default_rho(cube));

    let mut outcome = if cfg.lambda_a == 0.0 {
        separable(m, cube, a_init, cfg, rho)?
    } else {
        coupled(m, cube, a_init, cfg, rho)?
    };

    if a_init.is_feasible() {
        let start = abundance_objective(a_init.matrix(), m, cube, cfg.lambda_a)?;
        let end = abundance_objective(outcome.abundances.matrix(), m, cube, cfg.lambda_a)?;
        if end > start {
            log::debug!("ADMM result ({end}) worse than its feasible start ({start}); keeping the start");
            outcome.abundances = a_init.clone();
        }
    }
    if !outcome.converged {
        let w = Warning::AdmmNotConverged {
            iterations: outcome.iterations,
            primal: outcome.primal,
            dual: outcome.dual,
        };
        log::debug!("{w}");
        outcome.warnings.push(w);
    }
    Ok(outcome)
}

struct PixelSolution {
    alpha: DVector<f64>,
    iterations: usize,
    primal: f64,
    dual: f64,
    converged: bool,
}

fn separable(
    m: &EndmemberTensor,
    cube: &ImageCube,
    a_init: &AbundanceMatrix,
    cfg: &UnmixConfig,
    rho: f64,
) -> Result<AdmmOutcome> {
    let r = m.endmembers();
    let solutions: Vec<PixelSolution> = (0..cube.pixels())
        .into_par_iter()
        .map(|n| {
            let mn = m.slice(n);
            let gram = mn.transpose() * mn;
            let rhs = mn.transpose() * cube.pixel(n);
            solve_pixel(&gram, &rhs, a_init.column(n).clone_owned(), rho, cfg)
        })
        .collect();
    let mut values = DMatrix::zeros(r, cube.pixels());
    let mut iterations = 0;
    let (mut primal, mut dual) = (0.0_f64, 0.0_f64);
    let mut converged = true;
    for (n, s) in solutions.into_iter().enumerate() {
        values.set_column(n, &s.alpha);
        iterations = iterations.max(s.iterations);
        primal = primal.max(s.primal);
        dual = dual.max(s.dual);
        converged &= s.converged;
    }
    Ok(AdmmOutcome {
        abundances: AbundanceMatrix::unchecked(values, cube.rows(), cube.cols())?,
        iterations,
        primal,
        dual,
        converged,
        warnings: Vec::new(),
    })
}

fn solve_pixel(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    init: DVector<f64>,
    rho0: f64,
    cfg: &UnmixConfig,
) -> PixelSolution {
    let r = gram.nrows();
    let scale = (r as f64).sqrt();
    let mut rho = rho0;
    let factor = |rho: f64| {
        Cholesky::new(gram + DMatrix::identity(r, r) * rho).expect("Gram plus ρI is positive definite")
    };
    let mut chol = factor(rho);
    let mut u = init;
    project_simplex(u.as_mut_slice());
    let mut d = DVector::zeros(r);
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);
    for it in 1..=cfg.admm_max_iter {
        let alpha = chol.solve(&(rhs + (&u - &d) * rho));
        let u_old = std::mem::replace(&mut u, &alpha + &d);
        project_simplex(u.as_mut_slice());
        d += &alpha - &u;
        primal = (&alpha - &u).norm() / scale;
        dual = rho / rho0 * (&u - &u_old).norm() / scale;
        if primal.max(dual) <= cfg.admm_tol {
            return PixelSolution {
                alpha: u,
                iterations: it,
                primal,
                dual,
                converged: true,
            };
        }
        if it % BALANCE_EVERY == 0 {
            if primal > BALANCE_RATIO * dual {
                rho *= BALANCE_FACTOR;
                d /= BALANCE_FACTOR;
                chol = factor(rho);
            } else if dual > BALANCE_RATIO * primal {
                rho /= BALANCE_FACTOR;
                d *= BALANCE_FACTOR;
                chol = factor(rho);
            }
        }
    }
    PixelSolution {
        alpha: u,
        iterations: cfg.admm_max_iter,
        primal,
        dual,
        converged: false,
    }
}

/// The coupled A-step system and its block-Jacobi preconditioner.
struct System {
    grams: Vec<DMatrix<f64>>,
    degree: Vec<f64>,
    n1: usize,
    n2: usize,
    rho: f64,
    precond: Vec<Cholesky<f64, Dyn>>,
}

impl System {
    fn new(m: &EndmemberTensor, n1: usize, n2: usize, rho: f64) -> Self {
        let grams: Vec<DMatrix<f64>> = m.slices().iter().map(|s| s.transpose() * s).collect();
        let mut sys = Self {
            grams,
            degree: degree(n1, n2),
            n1,
            n2,
            rho,
            precond: Vec::new(),
        };
        sys.set_rho(rho);
        sys
    }

    fn set_rho(&mut self, rho: f64) {
        self.rho = rho;
        let r = self.grams[0].nrows();
        self.precond = self
            .grams
            .iter()
            .zip(&self.degree)
            .map(|(g, &deg)| {
                Cholesky::new(g + DMatrix::identity(r, r) * (rho * (1.0 + deg)))
                    .expect("preconditioner block is positive definite")
            })
            .collect();
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (n1, n2) = (self.n1, self.n2);
        let lap = horizontal_adjoint(&horizontal(x, n1, n2), n1, n2)
            + vertical_adjoint(&vertical(x, n1, n2), n1, n2);
        let mut y = (lap + x) * self.rho;
        for (n, g) in self.grams.iter().enumerate() {
            let gx = g * x.column(n);
            let mut col = y.column_mut(n);
            col += gx;
        }
        y
    }

    fn precondition(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(r.nrows(), r.ncols());
        for (n, c) in self.precond.iter().enumerate() {
            z.set_column(n, &c.solve(&r.column(n).clone_owned()));
        }
        z
    }

    /// Preconditioned conjugate gradient from `x`.
    fn solve(&self, b: &DMatrix<f64>, mut x: DMatrix<f64>) -> DMatrix<f64> {
        let bnorm = b.norm();
        if bnorm == 0.0 {
            return DMatrix::zeros(b.nrows(), b.ncols());
        }
        let mut res = b - self.apply(&x);
        let mut z = self.precondition(&res);
        let mut p = z.clone();
        let mut rz = res.dot(&z);
        for _ in 0..CG_MAX_ITER {
            if res.norm() <= CG_TOL * bnorm {
                break;
            }
            let ap = self.apply(&p);
            let alpha = rz / p.dot(&ap);
            x += &p * alpha;
            res -= &ap * alpha;
            z = self.precondition(&res);
            let rz_new = res.dot(&z);
            let beta = rz_new / rz;
            rz = rz_new;
            p = &z + p * beta;
        }
        x
    }
}

fn coupled(
    m: &EndmemberTensor,
    cube: &ImageCube,
    a_init: &AbundanceMatrix,
    cfg: &UnmixConfig,
    rho0: f64,
) -> Result<AdmmOutcome> {
    let (n1, n2) = (cube.rows(), cube.cols());
    let r = m.endmembers();
    let count = (r * cube.pixels()) as f64;
    let mut sys = System::new(m, n1, n2, rho0);

    let mut data_rhs = DMatrix::zeros(r, cube.pixels());
    for n in 0..cube.pixels() {
        data_rhs.set_column(n, &(m.slice(n).transpose() * cube.pixel(n)));
    }

    let mut a = a_init.matrix().clone();
    let mut u = a.clone();
    for mut c in u.column_iter_mut() {
        project_simplex(c.as_mut_slice());
    }
    let mut vh = horizontal(&a, n1, n2);
    let mut vv = vertical(&a, n1, n2);
    let zeros = || DMatrix::zeros(r, n1 * n2);
    let (mut dh, mut dv, mut du) = (zeros(), zeros(), zeros());

    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.admm_max_iter {
        iterations += 1;
        let rho = sys.rho;
        let rhs = &data_rhs
            + (horizontal_adjoint(&(&vh - &dh), n1, n2)
                + vertical_adjoint(&(&vv - &dv), n1, n2)
                + (&u - &du))
                * rho;
        a = sys.solve(&rhs, a);

        let ha = horizontal(&a, n1, n2);
        let va = vertical(&a, n1, n2);
        let (vh_old, vv_old, u_old) = (vh.clone(), vv.clone(), u.clone());
        vh = &ha + &dh;
        group_soft_threshold(&mut vh, cfg.lambda_a / rho);
        vv = &va + &dv;
        group_soft_threshold(&mut vv, cfg.lambda_a / rho);
        u = &a + &du;
        for mut c in u.column_iter_mut() {
            project_simplex(c.as_mut_slice());
        }

        let rh = &ha - &vh;
        let rv = &va - &vv;
        let ru = &a - &u;
        dh += &rh;
        dv += &rv;
        du += &ru;

        primal = ((rh.norm_squared() + rv.norm_squared() + ru.norm_squared()) / (3.0 * count)).sqrt();
        let s = horizontal_adjoint(&(&vh - &vh_old), n1, n2)
            + vertical_adjoint(&(&vv - &vv_old), n1, n2)
            + (&u - &u_old);
        dual = rho / rho0 * s.norm() / count.sqrt();
        if primal.max(dual) <= cfg.admm_tol {
            converged = true;
            break;
        }
        if iterations % BALANCE_EVERY == 0 {
            let factor = if primal > BALANCE_RATIO * dual {
                BALANCE_FACTOR
            } else if dual > BALANCE_RATIO * primal {
                1.0 / BALANCE_FACTOR
            } else {
                1.0
            };
            if factor != 1.0 {
                sys.set_rho(rho * factor);
                dh /= factor;
                dv /= factor;
                du /= factor;
            }
        }
    }

    Ok(AdmmOutcome {
        abundances: AbundanceMatrix::unchecked(u, n1, n2)?,
        iterations,
        primal,
        dual,
        converged,
        warnings: Vec::new(),
    })
}
