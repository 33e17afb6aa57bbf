//! Matrix-free `K_s` on fine grids and the `D`-scaling of `‖∇ξ K_s‖`.
//!
//! Off the diagonal `K_s` is `m(ξ) m(ξ*) k(ξ − ξ*; ξ)` with `m = M^{1/2}` and
//!
//! ```text
//! k = |ξ|² A2(η) − Σ_ab ξ_a ξ_b B_ab(η) − 2 A2(η) + 2(γ+3) A0(η)
//! A0 = |η|^γ χ,  A2 = |η|^{γ+2} χ,  B_ab = |η|^γ η_a η_b χ
//! ```
//!
//! so one application is eight lattice convolutions of `m f`, done by FFT on a
//! zero-padded box.

use std::sync::Arc;

use log::debug;
use ndarray::Array1;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::collision::{gradient, gradient_adjoint};
use crate::error::{Error, Result};
use crate::grid::{log_maxwellian_at, VelocityGrid};
use crate::quadrature::{chi, cube_power_integral};

/// Pairs of (first, second) kernel indices sharing one complex inverse FFT.
const PAIRS: [(usize, usize); 4] = [(0, 1), (2, 3), (4, 5), (6, 7)];

/// `K_s(D)` applied through FFT convolutions.
pub struct SingularOperator {
    grid: Arc<VelocityGrid>,
    cutoff: f64,
    /// interior extent per axis and padded FFT extent
    m: usize,
    p: usize,
    /// Spectra of A0, A2, B11, B22, B33, B12, B13, B23 on the padded box.
    spectra: Vec<Vec<f64>>,
    diag: Vec<f64>,
    sqrt_m: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SingularOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SingularOperator").field("cutoff", &self.cutoff).field("m", &self.m).field("p", &self.p).finish()
    }
}


/// In-place 3-D transform of a `p³` box (row-major).
fn fft3(data: &mut [Complex64], p: usize, fft: &Arc<dyn Fft<f64>>) {
    // last axis: contiguous rows
    fft.process(data);
    let mut line = vec![Complex64::new(0.0, 0.0); p];
    for axis_stride in [p, p * p] {
        for base in 0..p * p * p {
            // visit each line once: the coordinate along this axis must be 0
            if (base / axis_stride) % p != 0 {
                continue;
            }
            for t in 0..p {
                line[t] = data[base + t * axis_stride];
            }
            fft.process(&mut line);
            for t in 0..p {
                data[base + t * axis_stride] = line[t];
            }
        }
    }
}

impl SingularOperator {
    pub fn new(grid: Arc<VelocityGrid>, cutoff: f64) -> Result<Self> {
        let h = grid.h;
        if !(cutoff > 2.0 * h) {
            return Err(Error::Domain(format!("cutoff D = {cutoff} does not resolve the cutoff ball at h = {h}")));
        }
        let gamma = grid.spec.gamma;
        let m = grid.n() - 2;
        let reach = (2.0 * cutoff / h).ceil() as usize;
        let p = fft_size(m + reach + 1);
        let mut spectra = Vec::with_capacity(8);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(p);
        let inv = planner.plan_fft_inverse(p);
        let wrap = |i: usize| if i <= p / 2 { i as f64 } else { i as f64 - p as f64 };
        for which in 0..8 {
            let mut box3 = vec![Complex64::new(0.0, 0.0); p * p * p];
            for i in 0..p {
                for j in 0..p {
                    for k in 0..p {
                        let eta = [wrap(i) * h, wrap(j) * h, wrap(k) * h];
                        let r2 = eta[0] * eta[0] + eta[1] * eta[1] + eta[2] * eta[2];
                        if r2 == 0.0 {
                            continue;
                        }
                        let r = r2.sqrt();
                        let c = chi(r / cutoff);
                        if c == 0.0 {
                            continue;
                        }
                        let pg = r.powf(gamma) * c;
                        let v = match which {
                            0 => pg,
                            1 => pg * r2,
                            2 => pg * eta[0] * eta[0],
                            3 => pg * eta[1] * eta[1],
                            4 => pg * eta[2] * eta[2],
                            5 => pg * eta[0] * eta[1],
                            6 => pg * eta[0] * eta[2],
                            _ => pg * eta[1] * eta[2],
                        };
                        box3[(i * p + j) * p + k] = Complex64::new(v, 0.0);
                    }
                }
            }
            fft3(&mut box3, p, &fwd);
            // even real kernels have real spectra
            spectra.push(box3.iter().map(|z| z.re).collect());
        }
        let ip2 = cube_power_integral(gamma + 2.0, h, Some(cutoff))?;
        let ip0 = cube_power_integral(gamma, h, Some(cutoff))?;
        let pts = grid.dof_points();
        let diag = pts
            .iter()
            .map(|x| {
                let xx = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                log_maxwellian_at(x).exp() * ((2.0 / 3.0) * xx * ip2 - 2.0 * ip2 + 2.0 * (gamma + 3.0) * ip0)
            })
            .collect();
        let sqrt_m = pts.iter().map(|x| (0.5 * log_maxwellian_at(x)).exp()).collect();
        Ok(Self { grid, cutoff, m, p, spectra, diag, sqrt_m, fwd, inv })
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn apply(&self, f: &Array1<f64>) -> Array1<f64> {
        let (m, p) = (self.m, self.p);
        let pts = self.grid.dof_points();
        let mut gbox = vec![Complex64::new(0.0, 0.0); p * p * p];
        let at = |a: usize| {
            let (i, j, k) = (a / (m * m), (a / m) % m, a % m);
            (i * p + j) * p + k
        };
        for a in 0..f.len() {
            gbox[at(a)] = Complex64::new(self.sqrt_m[a] * f[a], 0.0);
        }
        fft3(&mut gbox, p, &self.fwd);
        let scale = 1.0 / (p * p * p) as f64;
        let mut conv = vec![vec![0.0; f.len()]; 8];
        let mut work = vec![Complex64::new(0.0, 0.0); p * p * p];
        for &(u, v) in &PAIRS {
            let (su, sv) = (&self.spectra[u], &self.spectra[v]);
            for (idx, w) in work.iter_mut().enumerate() {
                let g = gbox[idx];
                *w = g * su[idx] + Complex64::new(-g.im, g.re) * sv[idx];
            }
            fft3(&mut work, p, &self.inv);
            for a in 0..f.len() {
                let z = work[at(a)] * scale;
                conv[u][a] = z.re;
                conv[v][a] = z.im;
            }
        }
        let vol = self.grid.cell_volume();
        let mut out = Array1::<f64>::zeros(f.len());
        for (a, x) in pts.iter().enumerate() {
            let xx = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            let quad = xx * conv[1][a]
                - (x[0] * x[0] * conv[2][a] + x[1] * x[1] * conv[3][a] + x[2] * x[2] * conv[4][a])
                - 2.0 * (x[0] * x[1] * conv[5][a] + x[0] * x[2] * conv[6][a] + x[1] * x[2] * conv[7][a]);
            let gamma = self.grid.spec.gamma;
            let body = quad - 2.0 * conv[1][a] + 2.0 * (gamma + 3.0) * conv[0][a];
            out[a] = self.sqrt_m[a] * body * vol + self.diag[a] * f[a];
        }
        out
    }

    /// `‖∇ξ K_s‖` by power iteration on `K_s ∇ᵀ∇ K_s`.
    pub fn gradient_norm(&self, tol: f64, max_iter: usize) -> Result<f64> {
        let grid = &self.grid;
        let dof = grid.dof();
        let mut x = Array1::from_shape_fn(dof, |i| 1.0 + 0.3 * ((i * 2654435761usize) % 97) as f64 / 97.0);
        let mut est = 0.0f64;
        for it in 0..max_iter {
            let nx = x.dot(&x).sqrt();
            x /= nx;
            let y = self.apply(&x);
            let g = gradient(grid, y.view());
            let ynew = self.apply(&gradient_adjoint(grid, &g));
            let lam = x.dot(&ynew);
            if (lam - est).abs() <= tol * lam {
                debug!("gradient norm at D = {} settled after {} sweeps", self.cutoff, it + 1);
                return Ok(lam.sqrt());
            }
            est = lam;
            x = ynew;
        }
        Err(Error::Convergence(format!("power iteration for D = {} did not settle", self.cutoff)))
    }
}

/// Smallest size ≥ `n` with only the factors 2, 3 and 5.
fn fft_size(n: usize) -> usize {
    (n..).find(|&s| {
        let mut r = s;
        for f in [2, 3, 5] {
            while r % f == 0 {
                r /= f;
            }
        }
        r == 1
    })
    .unwrap()
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SingularScan {
    pub d_values: Vec<f64>,
    pub norms: Vec<f64>,
    pub slope: f64,
}

/// Log-log slope of `‖∇ξ K_s(D)‖` against `D`.
pub fn singular_norm_scan(grid: Arc<VelocityGrid>, d_values: &[f64]) -> Result<SingularScan> {
    if d_values.len() < 4 {
        return Err(Error::InvalidArgument("need at least four cutoff values".into()));
    }
    let (lo, hi) = (2.0 * grid.h, grid.spec.radius / 4.0);
    for &d in d_values {
        if !(d > lo && d < hi) {
            return Err(Error::Domain(format!("cutoff D = {d} outside ({lo}, {hi})")));
        }
    }
    let mut norms = Vec::with_capacity(d_values.len());
    for &d in d_values {
        let op = SingularOperator::new(grid.clone(), d)?;
        norms.push(op.gradient_norm(1e-6, 400)?);
    }
    let lx: Vec<f64> = d_values.iter().map(|d| d.ln()).collect();
    let ly: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let slope = crate::fit::linear_regression(&lx, &ly)?.0;
    Ok(SingularScan { d_values: d_values.to_vec(), norms, slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::kernel_matrix;
    use crate::grid::{build_grid, GridSpec};

    #[test]
    fn matches_dense_masked_kernel() {
        for gamma in [0.0, -1.0] {
            let grid = Arc::new(build_grid(GridSpec { n_per_axis: 13, radius: 3.0, gamma, ..GridSpec::default() }).unwrap());
            let d = 1.1;
            let dense = kernel_matrix(&grid, Some(d)).unwrap();
            let op = SingularOperator::new(grid.clone(), d).unwrap();
            let f = Array1::from_shape_fn(grid.dof(), |i| ((i as f64) * 0.37).sin());
            let want = dense.dot(&f);
            let got = op.apply(&f);
            let err = (&want - &got).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
            let scale = want.mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
            assert!(err < 1e-11 * scale, "gamma {gamma}: {err} vs {scale}");
        }
    }

    #[test]
    fn rejects_unresolved_cutoff() {
        let grid = Arc::new(build_grid(GridSpec::default()).unwrap());
        assert!(SingularOperator::new(grid.clone(), 1.0).is_err());
        assert!(singular_norm_scan(grid, &[3.0, 3.1, 3.2, 3.3]).is_err());
    }
}
