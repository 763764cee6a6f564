//! Error measures against ground truth, and endmember label matching.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::extraction::unit_angle;
use crate::model::{AbundanceMatrix, EndmemberMatrix, EndmemberTensor, ImageCube};
use crate::tensor::Tensor4;

/// `sqrt(mean((x − y)²))` over equally long slices.
pub fn rmse(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("rmse of lengths {} and {}", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::shape("rmse of empty inputs"));
    }
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / x.len() as f64).sqrt())
}

pub fn rmse_matrix(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::shape(format!("rmse of {:?} and {:?} matrices", x.shape(), y.shape())));
    }
    rmse(x.as_slice(), y.as_slice())
}

pub fn rmse_tensor(x: &Tensor4, y: &Tensor4) -> Result<f64> {
    x.check_same_dims(y)?;
    rmse(x.data(), y.data())
}

/// Abundance RMSE after reordering the estimate's rows by `perm`.
pub fn rmse_abundances(est: &AbundanceMatrix, truth: &AbundanceMatrix, perm: &[usize]) -> Result<f64> {
    check_perm(perm, truth.endmembers())?;
    if est.endmembers() != truth.endmembers() {
        return Err(Error::shape("abundance matrices differ in endmember count"));
    }
    rmse_matrix(est.permute_rows(perm).matrix(), truth.matrix())
}

/// Endmember RMSE over all pixels, bands and endmembers, after reordering.
pub fn rmse_endmembers(est: &EndmemberTensor, truth: &EndmemberTensor, perm: &[usize]) -> Result<f64> {
    check_tensors(est, truth)?;
    check_perm(perm, truth.endmembers())?;
    rmse(&est.permute_columns(perm).flat(), &truth.flat())
}

/// Spectral angles in radians between matched endmembers, `N × R`.
pub fn sam_per_pair(est: &EndmemberTensor, truth: &EndmemberTensor, perm: &[usize]) -> Result<DMatrix<f64>> {
    check_tensors(est, truth)?;
    check_perm(perm, truth.endmembers())?;
    let (n, r) = (truth.pixels(), truth.endmembers());
    let mut out = DMatrix::zeros(n, r);
    for p in 0..n {
        for k in 0..r {
            let x = est.slice(p).column(perm[k]);
            let y = truth.slice(p).column(k);
            let (nx, ny) = (x.norm(), y.norm());
            if nx == 0.0 || ny == 0.0 {
                return Err(Error::ZeroNorm { pixel: p, endmember: k });
            }
            out[(p, k)] = unit_angle(x.as_slice(), nx, y.as_slice(), ny);
        }
    }
    Ok(out)
}

/// Spectral angle distance in radians: summed over endmembers and averaged
/// over pixels, or averaged over all pixel-endmember pairs when `per_pair`.
pub fn sam(est: &EndmemberTensor, truth: &EndmemberTensor, perm: &[usize], per_pair: bool) -> Result<f64> {
    let angles = sam_per_pair(est, truth, perm)?;
    let denom = if per_pair { angles.len() } else { angles.nrows() };
    Ok(angles.sum() / denom as f64)
}

/// Reconstruction RMSE `sqrt(mean((r_n − M_n α_n)²))`.
pub fn rmse_reconstruction(cube: &ImageCube, m: &EndmemberTensor, a: &AbundanceMatrix) -> Result<f64> {
    if m.pixels() != cube.pixels() || m.bands() != cube.bands() || a.pixels() != cube.pixels() || a.endmembers() != m.endmembers() {
        return Err(Error::shape("reconstruction inputs do not match the cube"));
    }
    let mut ss = 0.0;
    for n in 0..cube.pixels() {
        let d = cube.pixel(n) - m.slice(n) * a.column(n);
        ss += d.norm_squared();
    }
    Ok((ss / cube.matrix().len() as f64).sqrt())
}

fn check_tensors(est: &EndmemberTensor, truth: &EndmemberTensor) -> Result<()> {
    if est.pixels() != truth.pixels() || est.bands() != truth.bands() || est.endmembers() != truth.endmembers() {
        return Err(Error::shape(format!(
            "endmember tensors {}x{}x{} and {}x{}x{}",
            est.pixels(),
            est.bands(),
            est.endmembers(),
            truth.pixels(),
            truth.bands(),
            truth.endmembers()
        )));
    }
    Ok(())
}

fn check_perm(perm: &[usize], r: usize) -> Result<()> {
    let mut seen = vec![false; r];
    if perm.len() != r {
        return Err(Error::arg(format!("permutation of length {} for {r} endmembers", perm.len())));
    }
    for &p in perm {
        if p >= r || seen[p] {
            return Err(Error::arg(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Minimum-cost assignment on a square cost matrix (Hungarian method).
///
/// Returns `perm` with `perm[i]` the column assigned to row `i`.
pub fn assignment(cost: &DMatrix<f64>) -> Result<Vec<usize>> {
    let n = cost.nrows();
    if cost.ncols() != n {
        return Err(Error::shape(format!("assignment needs a square cost, got {:?}", cost.shape())));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::arg("assignment costs must be finite"));
    }
    // Potentials u (rows), v (columns); way[] tracks the alternating path.
    // Index 0 is a virtual row/column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    Ok(perm)
}

/// Matches estimated to true endmembers by minimum total pixel-averaged
/// spectral angle. `perm[k]` is the estimated column paired with true column `k`.
pub fn match_endmembers(est: &EndmemberTensor, truth: &EndmemberTensor) -> Result<Vec<usize>> {
    check_tensors(est, truth)?;
    let r = truth.endmembers();
    let mut cost = DMatrix::zeros(r, r);
    for n in 0..truth.pixels() {
        for k in 0..r {
            let y = truth.slice(n).column(k);
            for j in 0..r {
                let x = est.slice(n).column(j);
                let (nx, ny) = (x.norm(), y.norm());
                // A zero spectrum matches nothing; give it the largest possible angle.
                cost[(k, j)] += if nx == 0.0 || ny == 0.0 {
                    std::f64::consts::PI
                } else {
                    unit_angle(x.as_slice(), nx, y.as_slice(), ny)
                };
            }
        }
    }
    assignment(&cost)
}

/// [`match_endmembers`] for a single spectrum per endmember.
pub fn match_endmember_matrices(est: &EndmemberMatrix, truth: &EndmemberMatrix) -> Result<Vec<usize>> {
    match_endmembers(&EndmemberTensor::constant(est, 1), &EndmemberTensor::constant(truth, 1))
}

/// Matches abundance rows by minimum total squared difference.
pub fn match_abundances(est: &AbundanceMatrix, truth: &AbundanceMatrix) -> Result<Vec<usize>> {
    if est.endmembers() != truth.endmembers() || est.pixels() != truth.pixels() {
        return Err(Error::shape("abundance matrices differ in shape"));
    }
    let r = truth.endmembers();
    let cost = DMatrix::from_fn(r, r, |k, j| (truth.matrix().row(k) - est.matrix().row(j)).norm_squared());
    assignment(&cost)
}

/// Scores for one method on one scene. Endmember scores are absent when the
/// method does not estimate per-pixel endmembers or no truth is available.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rmse_a: f64,
    pub rmse_m: Option<f64>,
    pub sam_m: Option<f64>,
    pub rmse_r: f64,
    pub rmse_psi: Option<f64>,
    pub permutation: Vec<usize>,
}

pub const METRICS_HEADER: &str = "rmse_a,rmse_m,sam_m,rmse_r,rmse_psi,permutation";

impl MetricsReport {
    /// One CSV row matching [`METRICS_HEADER`]; absent values are empty cells
    /// and the permutation is space separated.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let perm: Vec<String> = self.permutation.iter().map(|p| p.to_string()).collect();
        format!(
            "{},{},{},{},{},{}",
            self.rmse_a,
            opt(self.rmse_m),
            opt(self.sam_m),
            self.rmse_r,
            opt(self.rmse_psi),
            perm.join(" ")
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "--".into());
        writeln!(f, "RMSE_A   {:.6}", self.rmse_a)?;
        writeln!(f, "RMSE_M   {}", opt(self.rmse_m))?;
        writeln!(f, "SAM_M    {}", opt(self.sam_m))?;
        writeln!(f, "RMSE_R   {:.6}", self.rmse_r)?;
        writeln!(f, "RMSE_Psi {}", opt(self.rmse_psi))?;
        write!(f, "matching {:?}", self.permutation)
    }
}

/// Scores an estimate given a fixed label matching `perm` (see
/// [`match_endmembers`]). `m_est` is used for the reconstruction error; endmember
/// scores are computed only when `m_true` is given.
pub fn evaluate(
    cube: &ImageCube,
    a_est: &AbundanceMatrix,
    m_est: &EndmemberTensor,
    a_true: &AbundanceMatrix,
    m_true: Option<&EndmemberTensor>,
    perm: &[usize],
    sam_per_pair_average: bool,
) -> Result<MetricsReport> {
    let rmse_a = rmse_abundances(a_est, a_true, perm)?;
    let rmse_r = rmse_reconstruction(cube, m_est, a_est)?;
    let (rmse_m, sam_m) = match m_true {
        Some(t) => (
            Some(rmse_endmembers(m_est, t, perm)?),
            Some(sam(m_est, t, perm, sam_per_pair_average)?),
        ),
        None => (None, None),
    };
    Ok(MetricsReport {
        rmse_a,
        rmse_m,
        sam_m,
        rmse_r,
        rmse_psi: None,
        permutation: perm.to_vec(),
    })
}
