//! Dense complex linear algebra helpers on top of LAPACK.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Eig, FactorizeInto, Inverse, LUFactorized, Solve};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn complexify(a: &Array2<f64>) -> Array2<C64> {
    a.mapv(|v| C64::new(v, 0.0))
}

pub fn complexify_vec(a: &Array1<f64>) -> Array1<C64> {
    a.mapv(|v| C64::new(v, 0.0))
}

/// Eigenvalues, right eigenvectors (columns) and left eigenvectors (columns)
/// normalized so that `leftᴴ right = I`.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: Array1<C64>,
    pub right_vectors: Array2<C64>,
    pub left_vectors: Array2<C64>,
    pub biorth_residual: f64,
    /// `max_i ‖A r_i − σ_i r_i‖ / ‖A‖_max`.
    pub residual: f64,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `R diag(e^{σ t}) Lᴴ x`.
    pub fn exp_apply(&self, t: f64, coeffs: &Array1<C64>) -> Array1<C64> {
        let scaled: Array1<C64> = coeffs
            .iter()
            .zip(self.eigenvalues.iter())
            .map(|(c, s)| c * (s * t).exp())
            .collect();
        self.right_vectors.dot(&scaled)
    }

    /// Coordinates `Lᴴ x` of a vector in the eigenbasis.
    pub fn coordinates(&self, x: &Array1<C64>) -> Array1<C64> {
        self.left_vectors.t().mapv(|z| z.conj()).dot(x)
    }

    /// Indices sorted by decreasing real part.
    pub fn order_by_real_desc(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.eigenvalues[b].re.total_cmp(&self.eigenvalues[a].re));
        idx
    }
}

pub fn max_abs(a: ArrayView2<C64>) -> f64 {
    a.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// General dense eigendecomposition with biorthogonal left vectors taken as
/// the rows of `R⁻¹`, which stays valid inside degenerate eigenspaces.
pub fn eig_biorthogonal(a: &Array2<C64>) -> Result<EigenSystem> {
    let (vals, mut right) = a.eig().map_err(|e| Error::Linalg(format!("eigendecomposition failed: {e}")))?;
    // unit columns
    for mut col in right.axis_iter_mut(Axis(1)) {
        let n = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        col.mapv_inplace(|z| z / n);
    }
    let inv = right.inv().map_err(|e| Error::Linalg(format!("eigenvector matrix is singular: {e}")))?;
    let left = inv.t().mapv(|z| z.conj());
    let prod = left.t().mapv(|z| z.conj()).dot(&right);
    let n = a.nrows();
    let mut biorth = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            biorth = biorth.max((prod[[i, j]] - target).norm());
        }
    }
    let scale = max_abs(a.view()).max(f64::MIN_POSITIVE);
    let av = a.dot(&right);
    let mut res = 0.0f64;
    for j in 0..n {
        let r = av.column(j).iter().zip(right.column(j).iter()).map(|(x, y)| (x - vals[j] * y).norm_sqr()).sum::<f64>();
        res = res.max(r.sqrt() / scale);
    }
    Ok(EigenSystem { eigenvalues: vals, right_vectors: right, left_vectors: left, biorth_residual: biorth, residual: res })
}

/// LU factorization of a complex matrix for repeated solves.
pub struct ComplexLu {
    lu: LUFactorized<ndarray::OwnedRepr<C64>>,
}

impl ComplexLu {
    pub fn new(a: Array2<C64>) -> Result<Self> {
        let lu = a.factorize_into().map_err(|e| Error::Linalg(format!("LU factorization failed: {e}")))?;
        Ok(ComplexLu { lu })
    }

    pub fn solve(&self, b: &Array1<C64>) -> Result<Array1<C64>> {
        self.lu.solve(b).map_err(|e| Error::Linalg(format!("LU solve failed: {e}")))
    }
}

/// `I − c A`.
pub fn shifted_identity(a: &Array2<C64>, c: f64) -> Array2<C64> {
    let mut m = a.mapv(|z| -z * c);
    for i in 0..m.nrows() {
        m[[i, i]] += C64::new(1.0, 0.0);
    }
    m
}

/// `e^{A t}` by Taylor scaling and squaring. Independent of any
/// eigendecomposition; used to cross-check spectral propagation.
pub fn expm(a: &Array2<C64>, t: f64) -> Array2<C64> {
    let n = a.nrows();
    let norm1 = (0..n).map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max) * t.abs();
    let squarings = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a.mapv(|z| z * (t / 2f64.powi(squarings)));
    let mut out = Array2::<C64>::eye(n);
    let mut term = Array2::<C64>::eye(n);
    for m in 1..=18 {
        term = term.dot(&scaled).mapv(|z| z / m as f64);
        out += &term;
    }
    for _ in 0..squarings {
        out = out.dot(&out);
    }
    out
}
