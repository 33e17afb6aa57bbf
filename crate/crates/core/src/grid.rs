//! Truncated velocity lattice, trapezoid quadrature and Maxwellian fields.
//!
//! Operators act on the interior nodes only: the truncation is Dirichlet, so
//! boundary values are identically zero and every interior node carries the
//! same weight `h³`.

use ndarray::{Array1, ArrayView1};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_NORMALIZER: f64 = -1.5 * 1.837_877_066_409_345_5; // -(3/2) ln(2π)

/// Discretization and model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub n_per_axis: usize,
    pub radius: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub cutoff_d: f64,
    pub nu0: f64,
    pub k_max: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_per_axis: 9,
            radius: 4.5,
            gamma: 0.0,
            epsilon: 0.1,
            cutoff_d: 0.5,
            nu0: 1.0,
            k_max: 8,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_axis < 5 {
            return Err(Error::InvalidSpec(format!(
                "n_per_axis must be at least 5, got {}",
                self.n_per_axis
            )));
        }
        if self.n_per_axis % 2 == 0 {
            return Err(Error::InvalidSpec(format!(
                "n_per_axis must be odd, got {}",
                self.n_per_axis
            )));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidSpec(format!("radius must be positive, got {}", self.radius)));
        }
        if !(self.gamma > -2.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidSpec(format!("gamma must lie in (-2, 1], got {}", self.gamma)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidSpec(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.cutoff_d > 0.0 && self.cutoff_d.is_finite()) {
            return Err(Error::InvalidSpec(format!("cutoff_d must be positive, got {}", self.cutoff_d)));
        }
        if !(self.nu0 > 0.0 && self.nu0.is_finite()) {
            return Err(Error::InvalidSpec(format!("nu0 must be positive, got {}", self.nu0)));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.radius / (self.n_per_axis as f64 - 1.0)
    }
}

/// Japanese bracket used throughout: `1 + |ξ|`.
#[inline]
pub fn bracket(xi: &[f64; 3]) -> f64 {
    1.0 + norm3(xi)
}

#[inline]
pub fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[inline]
pub fn log_maxwellian_at(xi: &[f64; 3]) -> f64 {
    LOG_NORMALIZER - 0.5 * (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2])
}

#[derive(Debug, Clone)]
pub struct VelocityGrid {
    pub spec: GridSpec,
    pub h: f64,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub maxwellian: Vec<f64>,
    pub sqrt_maxwellian: Vec<f64>,
    pub log_maxwellian: Vec<f64>,
    /// Full-lattice index of each interior (unknown) node.
    pub interior: Vec<usize>,
    /// Interior index of each lattice node, `None` on the boundary.
    pub node_to_dof: Vec<Option<usize>>,
}

pub fn build_grid(spec: GridSpec) -> Result<VelocityGrid> {
    spec.validate()?;
    let n = spec.n_per_axis;
    let h = spec.spacing();
    let r = spec.radius;
    let axis: Vec<f64> = (0..n).map(|i| -r + h * i as f64).collect();
    let w1 = |i: usize| if i == 0 || i == n - 1 { 0.5 * h } else { h };

    let total = n * n * n;
    let mut points = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut node_to_dof = Vec::with_capacity(total);
    let mut interior = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                // index the center exactly so ξ = 0 is a node without rounding
                let c = (n - 1) / 2;
                let coord = |m: usize| if m == c { 0.0 } else { axis[m] };
                points.push([coord(i), coord(j), coord(k)]);
                weights.push(w1(i) * w1(j) * w1(k));
                let inside = (1..n - 1).contains(&i) && (1..n - 1).contains(&j) && (1..n - 1).contains(&k);
                if inside {
                    node_to_dof.push(Some(interior.len()));
                    interior.push(points.len() - 1);
                } else {
                    node_to_dof.push(None);
                }
            }
        }
    }
    let log_maxwellian: Vec<f64> = points.iter().map(log_maxwellian_at).collect();
    let maxwellian = log_maxwellian.iter().map(|l| l.exp()).collect();
    let sqrt_maxwellian = log_maxwellian.iter().map(|l| (0.5 * l).exp()).collect();
    Ok(VelocityGrid {
        spec,
        h,
        points,
        weights,
        maxwellian,
        sqrt_maxwellian,
        log_maxwellian,
        interior,
        node_to_dof,
    })
}

impl VelocityGrid {
    pub fn n(&self) -> usize {
        self.spec.n_per_axis
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of unknowns (interior nodes).
    pub fn dof(&self) -> usize {
        self.interior.len()
    }

    /// Quadrature weight of every interior node.
    pub fn cell_volume(&self) -> f64 {
        self.h * self.h * self.h
    }

    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.n();
        (i * n + j) * n + k
    }

    pub fn lattice_index(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.n();
        (idx / (n * n), (idx / n) % n, idx % n)
    }

    pub fn dof_point(&self, a: usize) -> [f64; 3] {
        self.points[self.interior[a]]
    }

    pub fn dof_points(&self) -> Vec<[f64; 3]> {
        self.interior.iter().map(|&i| self.points[i]).collect()
    }

    /// Interior restriction of a per-node field.
    pub fn restrict<T: Copy>(&self, full: &[T]) -> Result<Vec<T>> {
        check_len(self.len(), full.len())?;
        Ok(self.interior.iter().map(|&i| full[i]).collect())
    }

    /// Zero extension of an interior vector to the whole lattice.
    pub fn embed(&self, dof: ArrayView1<Complex64>) -> Result<Array1<Complex64>> {
        check_len(self.dof(), dof.len())?;
        let mut out = Array1::zeros(self.len());
        for (a, &i) in self.interior.iter().enumerate() {
            out[i] = dof[a];
        }
        Ok(out)
    }

    /// Discrete inner product over interior unknowns (uniform weight `h³`).
    pub fn dof_inner(&self, f: ArrayView1<Complex64>, g: ArrayView1<Complex64>) -> Complex64 {
        let s: Complex64 = f.iter().zip(g.iter()).map(|(a, b)| a * b.conj()).sum();
        s * self.cell_volume()
    }

    pub fn dof_norm(&self, f: ArrayView1<Complex64>) -> f64 {
        (f.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.cell_volume()).sqrt()
    }

    pub fn dof_norm_real(&self, f: ArrayView1<f64>) -> f64 {
        (f.iter().map(|z| z * z).sum::<f64>() * self.cell_volume()).sqrt()
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}

/// `Σ w ⟨ξ⟩^{2s} f conj(g)` over all lattice nodes.
pub fn weighted_inner(
    f: ArrayView1<Complex64>,
    g: ArrayView1<Complex64>,
    grid: &VelocityGrid,
    s: f64,
) -> Result<Complex64> {
    check_len(grid.len(), f.len())?;
    check_len(grid.len(), g.len())?;
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..grid.len() {
        let wt = grid.weights[i] * bracket(&grid.points[i]).powf(2.0 * s);
        acc += f[i] * g[i].conj() * wt;
    }
    Ok(acc)
}

pub fn weighted_norm(f: ArrayView1<Complex64>, grid: &VelocityGrid, s: f64) -> Result<f64> {
    Ok(weighted_inner(f, f, grid, s)?.re.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, r: f64) -> GridSpec {
        GridSpec { n_per_axis: n, radius: r, ..GridSpec::default() }
    }

    #[test]
    fn basic_lattice() {
        let g = build_grid(spec(9, 4.0)).unwrap();
        assert_eq!(g.len(), 729);
        assert_eq!(g.h, 1.0);
        assert_eq!(g.dof(), 343);
        assert!(g.points.iter().any(|p| *p == [0.0, 0.0, 0.0]));
        let m0 = g.maxwellian[g.flat_index(4, 4, 4)];
        assert!((m0 - 0.063_493_6).abs() < 1e-7);
        let mass: f64 = g.weights.iter().sum();
        assert!((mass - 512.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(build_grid(spec(8, 4.0)).is_err());
        assert!(build_grid(spec(9, 0.0)).is_err());
        assert!(build_grid(GridSpec { gamma: -2.0, ..spec(9, 4.0) }).is_err());
    }

    #[test]
    fn indicator_inner() {
        let g = build_grid(spec(9, 4.0)).unwrap();
        let idx = g.flat_index(5, 4, 4);
        assert_eq!(g.points[idx], [1.0, 0.0, 0.0]);
        let mut f = Array1::zeros(g.len());
        f[idx] = Complex64::new(1.0, 0.0);
        let v0 = weighted_inner(f.view(), f.view(), &g, 0.0).unwrap();
        assert!((v0.re - g.weights[idx]).abs() < 1e-15);
        let v1 = weighted_inner(f.view(), f.view(), &g, 1.0).unwrap();
        assert!((v1.re - 4.0 * g.weights[idx]).abs() < 1e-14);
    }

    #[test]
    fn length_mismatch() {
        let g = build_grid(spec(5, 2.0)).unwrap();
        let f = Array1::<Complex64>::zeros(3);
        assert!(matches!(
            weighted_inner(f.view(), f.view(), &g, 0.0),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
