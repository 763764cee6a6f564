//! Dense 4-way tensors and rank-r CP (CANDECOMP/PARAFAC) decomposition.
//!
//! A [`Tensor4`] with dims `(N1, N2, L, R)` stores element `(n1, n2, l, k)` at
//! linear offset `n1 + N1 * (n2 + N2 * (l + L * k))`, so the first index varies
//! fastest. The mode-m unfolding has one row per mode-m index and its columns
//! run over the remaining indices with the lowest-numbered mode fastest, i.e.
//! `X_(1) = Z1 · (Z4 ⊙ Z3 ⊙ Z2)ᵀ` for a rank-1 `Z1 ∘ Z2 ∘ Z3 ∘ Z4`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result, Warning};

/// Gram condition number above which the ALS step switches to a pseudo-inverse.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::arg(format!("tensor dims must be positive, got {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::shape(format!(
                "tensor dims {dims:?} need {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn filled(dims: [usize; 4], value: f64) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "tensor dims must be positive");
        Self {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self::filled(dims, 0.0)
    }

    /// The all-ones tensor.
    pub fn ones(dims: [usize; 4]) -> Self {
        Self::filled(dims, 1.0)
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut([usize; 4]) -> f64) -> Self {
        let mut t = Self::zeros(dims);
        for k in 0..dims[3] {
            for l in 0..dims[2] {
                for n2 in 0..dims[1] {
                    for n1 in 0..dims[0] {
                        let off = t.offset([n1, n2, l, k]);
                        t.data[off] = f([n1, n2, l, k]);
                    }
                }
            }
        }
        t
    }

    /// Rank-1 tensor `u ∘ v ∘ w ∘ x`.
    pub fn outer(u: &[f64], v: &[f64], w: &[f64], x: &[f64]) -> Self {
        Self::from_fn([u.len(), v.len(), w.len(), x.len()], |[a, b, c, d]| {
            u[a] * v[b] * w[c] * x[d]
        })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, [n1, n2, l, k]: [usize; 4]) -> usize {
        let [d1, d2, d3, _] = self.dims;
        n1 + d1 * (n2 + d2 * (l + d3 * k))
    }

    #[inline]
    pub fn get(&self, idx: [usize; 4]) -> f64 {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 4], value: f64) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `‖self − other‖_F`.
    pub fn distance(&self, other: &Tensor4) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn scaled(&self, factor: f64) -> Tensor4 {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub(crate) fn check_same_dims(&self, other: &Tensor4) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "tensor dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Mode-`mode` unfolding (`mode` in `1..=4`).
    pub fn unfold(&self, mode: usize) -> Result<DMatrix<f64>> {
        let m = check_mode(mode)?;
        let others = other_modes(m);
        let rows = self.dims[m];
        let cols = self.len() / rows;
        let mut out = DMatrix::zeros(rows, cols);
        for k in 0..self.dims[3] {
            for l in 0..self.dims[2] {
                for n2 in 0..self.dims[1] {
                    for n1 in 0..self.dims[0] {
                        let idx = [n1, n2, l, k];
                        out[(idx[m], unfold_column(&self.dims, &others, &idx))] = self.get(idx);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`Tensor4::unfold`].
    pub fn fold(matrix: &DMatrix<f64>, mode: usize, dims: [usize; 4]) -> Result<Tensor4> {
        let m = check_mode(mode)?;
        let len: usize = dims.iter().product();
        if matrix.nrows() != dims[m] || matrix.nrows() * matrix.ncols() != len {
            return Err(Error::shape(format!(
                "cannot fold a {}x{} matrix along mode {mode} into dims {dims:?}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let others = other_modes(m);
        Ok(Tensor4::from_fn(dims, |idx| {
            matrix[(idx[m], unfold_column(&dims, &others, &idx))]
        }))
    }
}

fn check_mode(mode: usize) -> Result<usize> {
    if !(1..=4).contains(&mode) {
        return Err(Error::arg(format!("mode must be in 1..=4, got {mode}")));
    }
    Ok(mode - 1)
}

fn other_modes(m: usize) -> [usize; 3] {
    let mut out = [0; 3];
    let mut j = 0;
    for o in 0..4 {
        if o != m {
            out[j] = o;
            j += 1;
        }
    }
    out
}

#[inline]
fn unfold_column(dims: &[usize; 4], others: &[usize; 3], idx: &[usize; 4]) -> usize {
    let [a, b, c] = *others;
    idx[a] + dims[a] * (idx[b] + dims[b] * idx[c])
}

/// Column-wise Kronecker product; row `j + rows(b) * i` of column `c` is `a[i,c] * b[j,c]`.
pub fn khatri_rao(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.ncols(), "khatri-rao needs equal column counts");
    DMatrix::from_fn(a.nrows() * b.nrows(), a.ncols(), |row, c| {
        a[(row / b.nrows(), c)] * b[(row % b.nrows(), c)]
    })
}

/// Weighted sum of `rank` rank-1 terms, `Σ_i ξ_i z1_i ∘ z2_i ∘ z3_i ∘ z4_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpDecomposition {
    pub weights: Vec<f64>,
    pub factors: [DMatrix<f64>; 4],
}

impl CpDecomposition {
    pub fn new(weights: Vec<f64>, factors: [DMatrix<f64>; 4]) -> Result<Self> {
        let d = Self { weights, factors };
        d.check()?;
        Ok(d)
    }

    fn check(&self) -> Result<()> {
        let r = self.weights.len();
        if r == 0 {
            return Err(Error::arg("CP rank must be at least 1"));
        }
        for (m, f) in self.factors.iter().enumerate() {
            if f.ncols() != r || f.nrows() == 0 {
                return Err(Error::shape(format!(
                    "factor {} is {}x{}, expected ?x{r}",
                    m + 1,
                    f.nrows(),
                    f.ncols()
                )));
            }
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> [usize; 4] {
        [0, 1, 2, 3].map(|m| self.factors[m].nrows())
    }

    /// Moves every column's scale into the weights and orders terms by
    /// decreasing `|ξ|`. The represented tensor is unchanged.
    pub fn canonicalize(&mut self) {
        let r = self.rank();
        for i in 0..r {
            for f in self.factors.iter_mut() {
                let norm = f.column(i).norm();
                if norm > 0.0 {
                    f.column_mut(i).unscale_mut(norm);
                    self.weights[i] *= norm;
                }
            }
        }
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&a, &b| {
            self.weights[b]
                .abs()
                .total_cmp(&self.weights[a].abs())
                .then(a.cmp(&b))
        });
        self.weights = order.iter().map(|&i| self.weights[i]).collect();
        for f in self.factors.iter_mut() {
            *f = f.select_columns(&order);
        }
    }

    /// Full multilinear product back to a dense tensor.
    pub fn reconstruct(&self) -> Result<Tensor4> {
        self.check()?;
        let dims = self.dims();
        let r = self.rank();
        let [z1, z2, z3, z4] = &self.factors;
        let mut out = Tensor4::zeros(dims);
        let mut w34 = vec![0.0; r];
        let mut w234 = vec![0.0; r];
        let mut off = 0;
        for k in 0..dims[3] {
            for l in 0..dims[2] {
                for i in 0..r {
                    w34[i] = self.weights[i] * z3[(l, i)] * z4[(k, i)];
                }
                for n2 in 0..dims[1] {
                    for i in 0..r {
                        w234[i] = w34[i] * z2[(n2, i)];
                    }
                    for n1 in 0..dims[0] {
                        let mut acc = 0.0;
                        for i in 0..r {
                            acc += z1[(n1, i)] * w234[i];
                        }
                        out.data[off] = acc;
                        off += 1;
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpOptions {
    pub rank: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for CpOptions {
    fn default() -> Self {
        Self {
            rank: 1,
            seed: 0,
            max_iter: 100,
            rel_tol: 1e-6,
        }
    }
}

/// Outcome of an ALS run.
#[derive(Debug, Clone)]
pub struct CpFit {
    pub decomposition: CpDecomposition,
    /// `‖t − reconstruct‖_F` before the first sweep and after every sweep.
    pub error_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub warnings: Vec<Warning>,
}

impl CpFit {
    pub fn final_error(&self) -> f64 {
        *self.error_trace.last().expect("trace holds the initial error")
    }
}

/// Random factor matrices with i.i.d. standard normal entries and unit weights.
pub fn random_init(dims: [usize; 4], rank: usize, seed: u64) -> Result<CpDecomposition> {
    if rank == 0 {
        return Err(Error::arg("CP rank must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors = dims.map(|d| {
        let mut f = DMatrix::zeros(d, rank);
        for i in 0..rank {
            for row in 0..d {
                f[(row, i)] = StandardNormal.sample(&mut rng);
            }
        }
        f
    });
    CpDecomposition::new(vec![1.0; rank], factors)
}

/// Rank-`opts.rank` CP fit by alternating least squares from a seeded random start.
pub fn cp_als(t: &Tensor4, opts: &CpOptions) -> Result<CpFit> {
    if opts.rank == 0 {
        return Err(Error::arg("CP rank must be at least 1"));
    }
    let init = random_init(t.dims(), opts.rank, opts.seed)?;
    cp_als_from(t, init, opts.max_iter, opts.rel_tol)
}

/// ALS starting from the given decomposition.
///
/// Every mode update is an exact least-squares solve with the other three
/// factors held fixed, so the reconstruction error never increases. Stops when
/// the relative change of the error is at most `rel_tol`, or when the error
/// reaches round-off level relative to `‖t‖_F`.
pub fn cp_als_from(
    t: &Tensor4,
    init: CpDecomposition,
    max_iter: usize,
    rel_tol: f64,
) -> Result<CpFit> {
    if max_iter == 0 {
        return Err(Error::arg("max_iter must be at least 1"));
    }
    if !(rel_tol > 0.0) {
        return Err(Error::arg(format!("rel_tol must be positive, got {rel_tol}")));
    }
    init.check()?;
    if init.dims() != t.dims() {
        return Err(Error::shape(format!(
            "initial decomposition dims {:?} vs tensor dims {:?}",
            init.dims(),
            t.dims()
        )));
    }

    let dims = t.dims();
    let rank = init.rank();
    let mut warnings = Vec::new();
    for (m, &d) in dims.iter().enumerate() {
        if rank > d {
            warnings.push(Warning::RankExceedsDimension {
                rank,
                mode: m + 1,
                dim: d,
            });
        }
    }

    let floor = 64.0 * f64::EPSILON * t.frobenius_norm();
    let mut dec = init;
    let mut trace = vec![t.distance(&dec.reconstruct()?)?];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_iter {
        sweeps += 1;
        for m in 0..4 {
            als_update(t, &mut dec, m);
        }
        let err = t.distance(&dec.reconstruct()?)?;
        let prev = *trace.last().unwrap();
        trace.push(err);
        if err <= floor || (prev - err).abs() <= rel_tol * prev {
            converged = true;
            break;
        }
    }
    dec.canonicalize();
    Ok(CpFit {
        decomposition: dec,
        error_trace: trace,
        sweeps,
        converged,
        warnings,
    })
}

/// Replace factor `m` with its least-squares optimum given the others.
fn als_update(t: &Tensor4, dec: &mut CpDecomposition, m: usize) {
    let rank = dec.rank();
    // Gram of the Khatri-Rao product of the fixed factors, as a Hadamard product.
    let mut gram = DMatrix::from_element(rank, rank, 1.0);
    for o in (0..4).filter(|&o| o != m) {
        gram.component_mul_assign(&(dec.factors[o].transpose() * &dec.factors[o]));
    }
    let mttkrp = mttkrp(t, &dec.factors, m);
    let mut updated = solve_gram(&gram, &mttkrp);
    dec.weights = vec![1.0; rank];
    for i in 0..rank {
        let norm = updated.column(i).norm();
        if norm > 0.0 {
            updated.column_mut(i).unscale_mut(norm);
            dec.weights[i] = norm;
        } else {
            dec.weights[i] = 0.0;
        }
    }
    dec.factors[m] = updated;
}

/// `X_(m) · (Khatri-Rao of the other factors)`, accumulated in storage order.
fn mttkrp(t: &Tensor4, factors: &[DMatrix<f64>; 4], m: usize) -> DMatrix<f64> {
    let dims = t.dims();
    let rank = factors[0].ncols();
    let mut out = DMatrix::zeros(dims[m], rank);
    let mut w = vec![0.0; rank];
    let mut off = 0;
    for k in 0..dims[3] {
        for l in 0..dims[2] {
            for n2 in 0..dims[1] {
                for n1 in 0..dims[0] {
                    let idx = [n1, n2, l, k];
                    let x = t.data[off];
                    off += 1;
                    if x == 0.0 {
                        continue;
                    }
                    for (i, wi) in w.iter_mut().enumerate() {
                        let mut p = x;
                        for o in 0..4 {
                            if o != m {
                                p *= factors[o][(idx[o], i)];
                            }
                        }
                        *wi = p;
                    }
                    let row = idx[m];
                    for (i, wi) in w.iter().enumerate() {
                        out[(row, i)] += wi;
                    }
                }
            }
        }
    }
    out
}

/// Solves `Z · G = B` for symmetric positive semidefinite `G`.
fn solve_gram(gram: &DMatrix<f64>, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 && max / min <= GRAM_CONDITION_LIMIT {
        if let Some(chol) = gram.clone().cholesky() {
            return chol.solve(&rhs.transpose()).transpose();
        }
    }
    // Pseudo-inverse through the eigendecomposition.
    let cutoff = max * f64::EPSILON * gram.nrows() as f64;
    let inv_vals = eig
        .eigenvalues
        .map(|v| if v > cutoff { 1.0 / v } else { 0.0 });
    let pinv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    rhs * pinv
}
