//! Data types shared across the unmixing stages.
//!
//! Pixels are addressed either by image coordinates `(n1, n2)` or by the
//! linear index `n = n1 + N1 * n2`, matching the storage order of
//! [`Tensor4`].

use nalgebra::{DMatrix, DMatrixView, DVectorView};

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Observed hyperspectral image, stored as the `L × N` matrix whose column `n`
/// is the spectrum of pixel `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageCube {
    n1: usize,
    n2: usize,
    data: DMatrix<f64>,
}

impl ImageCube {
    pub fn new(n1: usize, n2: usize, data: DMatrix<f64>) -> Result<Self> {
        if n1 == 0 || n2 == 0 || data.nrows() == 0 {
            return Err(Error::arg(format!(
                "cube dims must be positive, got {n1}x{n2}x{}",
                data.nrows()
            )));
        }
        if data.ncols() != n1 * n2 {
            return Err(Error::shape(format!(
                "cube {n1}x{n2} needs {} pixel columns, got {}",
                n1 * n2,
                data.ncols()
            )));
        }
        Ok(Self { n1, n2, data })
    }

    pub fn rows(&self) -> usize {
        self.n1
    }

    pub fn cols(&self) -> usize {
        self.n2
    }

    pub fn bands(&self) -> usize {
        self.data.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn pixel(&self, n: usize) -> DVectorView<'_, f64> {
        self.data.column(n)
    }

    #[inline]
    pub fn index(&self, n1: usize, n2: usize) -> usize {
        n1 + self.n1 * n2
    }

    #[inline]
    pub fn coords(&self, n: usize) -> (usize, usize) {
        (n % self.n1, n / self.n1)
    }

    pub fn scaled(&self, c: f64) -> ImageCube {
        ImageCube {
            n1: self.n1,
            n2: self.n2,
            data: &self.data * c,
        }
    }
}

/// Reference endmember spectra, one column per material (`L × R`).
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberMatrix {
    values: DMatrix<f64>,
    pub wavelengths: Option<Vec<f64>>,
    pub names: Option<Vec<String>>,
}

impl EndmemberMatrix {
    /// Entries must be nonnegative and no column may be all zero.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::arg("endmember matrix must be non-empty"));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::arg(format!(
                "endmember entries must be finite and nonnegative, found {v}"
            )));
        }
        if let Some(k) = (0..values.ncols()).find(|&k| values.column(k).norm() == 0.0) {
            return Err(Error::arg(format!("endmember column {k} is all zero")));
        }
        Ok(Self {
            values,
            wavelengths: None,
            names: None,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        self.names = Some(names);
        self
    }

    pub fn bands(&self) -> usize {
        self.values.nrows()
    }

    pub fn count(&self) -> usize {
        self.values.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column(&self, k: usize) -> DVectorView<'_, f64> {
        self.values.column(k)
    }

    /// Keeps the listed columns, in order.
    pub fn select(&self, columns: &[usize]) -> Result<EndmemberMatrix> {
        if let Some(&c) = columns.iter().find(|&&c| c >= self.count()) {
            return Err(Error::arg(format!(
                "column {c} out of range for {} endmembers",
                self.count()
            )));
        }
        Ok(EndmemberMatrix {
            values: self.values.select_columns(columns),
            wavelengths: self.wavelengths.clone(),
            names: self
                .names
                .as_ref()
                .map(|n| columns.iter().map(|&c| n[c].clone()).collect()),
        })
    }

    /// Linear interpolation of every spectrum onto `bands` evenly spaced
    /// positions spanning the original band range.
    pub fn resample(&self, bands: usize) -> Result<EndmemberMatrix> {
        if bands == 0 {
            return Err(Error::arg("cannot resample to zero bands"));
        }
        let src = self.bands();
        let pos = |i: usize| {
            if bands == 1 {
                0.0
            } else {
                i as f64 * (src - 1) as f64 / (bands - 1) as f64
            }
        };
        let values = DMatrix::from_fn(bands, self.count(), |i, k| {
            let x = pos(i);
            let lo = x.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            let t = x - lo as f64;
            (1.0 - t) * self.values[(lo, k)] + t * self.values[(hi, k)]
        });
        let wavelengths = self.wavelengths.as_ref().map(|w| {
            (0..bands)
                .map(|i| {
                    let x = pos(i);
                    let lo = x.floor() as usize;
                    let hi = (lo + 1).min(src - 1);
                    let t = x - lo as f64;
                    (1.0 - t) * w[lo] + t * w[hi]
                })
                .collect()
        });
        Ok(EndmemberMatrix {
            values,
            wavelengths,
            names: self.names.clone(),
        })
    }
}

/// Fractional abundances, `R × N`, column `n` on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceMatrix {
    values: DMatrix<f64>,
    n1: usize,
    n2: usize,
}

/// Slack allowed on negativity of abundance entries.
pub const ABUNDANCE_NEG_TOL: f64 = 1e-8;
/// Slack allowed on the sum-to-one constraint.
pub const ABUNDANCE_SUM_TOL: f64 = 1e-6;

impl AbundanceMatrix {
    /// Builds an abundance matrix, checking the simplex constraints.
    pub fn new(values: DMatrix<f64>, n1: usize, n2: usize) -> Result<Self> {
        let a = Self::unchecked(values, n1, n2)?;
        if let Some((n, why)) = a.first_infeasible() {
            return Err(Error::arg(format!("abundance column {n} is not on the simplex: {why}")));
        }
        Ok(a)
    }

    /// Builds an abundance-shaped matrix without checking the simplex
    /// constraints; used for intermediate ADMM iterates and test inputs.
    pub fn unchecked(values: DMatrix<f64>, n1: usize, n2: usize) -> Result<Self> {
        if values.ncols() != n1 * n2 || values.nrows() == 0 {
            return Err(Error::shape(format!(
                "abundance matrix is {}x{}, image is {n1}x{n2}",
                values.nrows(),
                values.ncols()
            )));
        }
        Ok(Self { values, n1, n2 })
    }

    /// Uniform `1/R` abundances.
    pub fn uniform(endmembers: usize, n1: usize, n2: usize) -> Self {
        Self {
            values: DMatrix::from_element(endmembers, n1 * n2, 1.0 / endmembers as f64),
            n1,
            n2,
        }
    }

    pub fn first_infeasible(&self) -> Option<(usize, String)> {
        self.values.column_iter().enumerate().find_map(|(n, c)| {
            if let Some(v) = c.iter().find(|v| !(**v >= -ABUNDANCE_NEG_TOL)) {
                return Some((n, format!("entry {v} is negative")));
            }
            let s = c.sum();
            if !((s - 1.0).abs() <= ABUNDANCE_SUM_TOL) {
                return Some((n, format!("entries sum to {s}")));
            }
            None
        })
    }

    pub fn is_feasible(&self) -> bool {
        self.first_infeasible().is_none()
    }

    pub fn endmembers(&self) -> usize {
        self.values.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.values.ncols()
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.values
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.values
    }

    pub fn column(&self, n: usize) -> DVectorView<'_, f64> {
        self.values.column(n)
    }

    /// Abundance map of endmember `k` as an `N1 × N2` image.
    pub fn map(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n1, self.n2, |i, j| self.values[(k, i + self.n1 * j)])
    }

    /// Reorders rows so that row `k` of the result is row `perm[k]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> AbundanceMatrix {
        AbundanceMatrix {
            values: DMatrix::from_fn(self.values.nrows(), self.values.ncols(), |k, n| {
                self.values[(perm[k], n)]
            }),
            n1: self.n1,
            n2: self.n2,
        }
    }
}

/// Per-pixel endmember matrices `M_n` (`L × R` each), indexed by pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberTensor {
    slices: Vec<DMatrix<f64>>,
}

impl EndmemberTensor {
    pub fn new(slices: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = slices.first() else {
            return Err(Error::arg("endmember tensor needs at least one pixel"));
        };
        let shape = first.shape();
        if let Some(n) = slices.iter().position(|s| s.shape() != shape) {
            return Err(Error::shape(format!(
                "pixel {n} endmember matrix is {:?}, expected {shape:?}",
                slices[n].shape()
            )));
        }
        Ok(Self { slices })
    }

    /// `M_0` repeated at every pixel.
    pub fn constant(m0: &EndmemberMatrix, pixels: usize) -> Self {
        Self {
            slices: vec![m0.matrix().clone(); pixels],
        }
    }

    /// `M_0 ⊙ Ψ_n` at every pixel.
    pub fn scaled_reference(m0: &EndmemberMatrix, psi: &Tensor4) -> Result<Self> {
        let pixels = psi.dims()[0] * psi.dims()[1];
        check_psi(psi, m0.bands(), m0.count(), pixels)?;
        Ok(Self {
            slices: (0..pixels)
                .map(|n| m0.matrix().component_mul(&psi_slice(psi, n)))
                .collect(),
        })
    }

    pub fn pixels(&self) -> usize {
        self.slices.len()
    }

    pub fn bands(&self) -> usize {
        self.slices[0].nrows()
    }

    pub fn endmembers(&self) -> usize {
        self.slices[0].ncols()
    }

    pub fn slice(&self, n: usize) -> &DMatrix<f64> {
        &self.slices[n]
    }

    pub fn slices(&self) -> &[DMatrix<f64>] {
        &self.slices
    }

    pub fn slice_view(&self, n: usize) -> DMatrixView<'_, f64> {
        self.slices[n].as_view()
    }

    /// Reorders endmember columns of every slice, as [`AbundanceMatrix::permute_rows`].
    pub fn permute_columns(&self, perm: &[usize]) -> EndmemberTensor {
        EndmemberTensor {
            slices: self.slices.iter().map(|s| s.select_columns(perm)).collect(),
        }
    }

    /// Flattened values in `(n, l, k)` order, pixel slowest.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.pixels() * self.bands() * self.endmembers());
        for s in &self.slices {
            for l in 0..s.nrows() {
                for k in 0..s.ncols() {
                    out.push(s[(l, k)]);
                }
            }
        }
        out
    }

    /// Packs the slices into an `(N1, N2, L, R)` tensor.
    pub fn to_tensor(&self, n1: usize, n2: usize) -> Result<Tensor4> {
        if n1 * n2 != self.pixels() {
            return Err(Error::shape(format!(
                "{} pixels do not fit a {n1}x{n2} image",
                self.pixels()
            )));
        }
        Ok(Tensor4::from_fn(
            [n1, n2, self.bands(), self.endmembers()],
            |[a, b, l, k]| self.slices[a + n1 * b][(l, k)],
        ))
    }

    pub fn from_tensor(t: &Tensor4) -> EndmemberTensor {
        let [n1, n2, _, _] = t.dims();
        EndmemberTensor {
            slices: (0..n1 * n2).map(|n| psi_slice(t, n)).collect(),
        }
    }
}

/// `Ψ_n`, the `L × R` slice of a scaling tensor at linear pixel index `n`.
pub fn psi_slice(psi: &Tensor4, n: usize) -> DMatrix<f64> {
    let [n1, _, l, r] = psi.dims();
    DMatrix::from_fn(l, r, |b, k| psi.get([n % n1, n / n1, b, k]))
}

pub(crate) fn check_psi(psi: &Tensor4, bands: usize, endmembers: usize, pixels: usize) -> Result<()> {
    let [n1, n2, l, r] = psi.dims();
    if l != bands || r != endmembers || n1 * n2 != pixels {
        return Err(Error::shape(format!(
            "scaling tensor dims {:?} do not match {pixels} pixels, {bands} bands, {endmembers} endmembers",
            psi.dims()
        )));
    }
    Ok(())
}
