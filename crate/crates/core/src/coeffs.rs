//! Interaction matrix Φ, diffusion matrix θ and its radial eigenvalues.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::norm3;
use crate::quadrature;

pub type Mat3 = [[f64; 3]; 3];

/// `Φ(η) = |η|^{γ+2} (I − η ηᵀ/|η|²)`.
pub fn phi_matrix(eta: &[f64; 3], gamma: f64) -> Result<Mat3> {
    let r2 = eta[0] * eta[0] + eta[1] * eta[1] + eta[2] * eta[2];
    if r2 == 0.0 {
        return Err(Error::Domain("phi_matrix is singular at eta = 0".into()));
    }
    let b = r2.powf(0.5 * (gamma + 2.0));
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let delta = if i == j { 1.0 } else { 0.0 };
            m[i][j] = b * (delta - eta[i] * eta[j] / r2);
        }
    }
    Ok(m)
}

/// Radial projector `P(ξ) = ξ ξᵀ / |ξ|²`; zero at the origin.
pub fn radial_projector(xi: &[f64; 3]) -> Mat3 {
    let r2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    let mut p = [[0.0; 3]; 3];
    if r2 > 0.0 {
        for i in 0..3 {
            for j in 0..3 {
                p[i][j] = xi[i] * xi[j] / r2;
            }
        }
    }
    p
}

// ∫_{-1}^{1} w(μ) e^{aμ} dμ expanded in even powers; used for small a.
fn angular_series(a: f64, moment: impl Fn(i32) -> f64) -> f64 {
    let mut term = 1.0;
    let mut sum = moment(0);
    let mut n = 0;
    while n < 40 {
        n += 2;
        term *= a * a / ((n - 1) as f64 * n as f64);
        let t = term * moment(n);
        sum += t;
        if t.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

// e^{-(r²+ρ²)/2} ∫ (1−μ²) e^{rρμ} dμ and e^{-(r²+ρ²)/2} ∫ (1+μ²)/2 e^{rρμ} dμ,
// with the exponentials combined so nothing overflows.
fn angular_factors(r: f64, rho: f64) -> (f64, f64) {
    let a = r * rho;
    let base = -0.5 * (r * r + rho * rho);
    if a < 1.0 {
        let g = base.exp();
        let f1 = angular_series(a, |n| 2.0 / (n as f64 + 1.0) - 2.0 / (n as f64 + 3.0));
        let f2 = angular_series(a, |n| 1.0 / (n as f64 + 1.0) + 1.0 / (n as f64 + 3.0));
        (g * f1, g * f2)
    } else {
        let ep = (base + a).exp();
        let em = (base - a).exp();
        let ch = 0.5 * (ep + em);
        let sh = 0.5 * (ep - em);
        let f1 = 4.0 / (a * a) * (ch - sh / a);
        let f2 = 2.0 * sh / a - 2.0 * ch / (a * a) + 2.0 * sh / (a * a * a);
        (f1, f2)
    }
}

/// Eigenvalues `(λ1, λ2)` of `θ(ξ) = ∫ Φ(ξ − ξ*) M(ξ*) dξ*` at `|ξ| = r`.
///
/// With `ξ = r e₃` and `η = ξ − ξ*` in spherical coordinates the azimuth and
/// polar angle integrate in closed form, leaving an adaptive radial integral.
pub fn theta_eigs(r: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("radius must be finite and non-negative, got {r}")));
    }
    let c = (2.0 * PI).powf(-0.5);
    let hi = r + 14.0;
    let pw = gamma + 4.0;
    let l1 = quadrature::integrate(|rho| rho.powf(pw) * angular_factors(r, rho).0, 0.0, hi, 1e-15, 1e-12)?;
    let l2 = quadrature::integrate(|rho| rho.powf(pw) * angular_factors(r, rho).1, 0.0, hi, 1e-15, 1e-12)?;
    let (l1, l2) = (c * l1, c * l2);
    if !(l1.is_finite() && l2.is_finite()) || l1 <= 0.0 || l2 <= 0.0 {
        return Err(Error::Quadrature(format!("theta eigenvalues invalid at r={r}: {l1}, {l2}")));
    }
    Ok((l1, l2))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoeffProfile {
    pub radii: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub gamma: f64,
    pub fitted_c1: f64,
    pub fitted_c2: f64,
}

impl CoeffProfile {
    /// Uniform profile on `[0, r_max]`.
    pub fn build(gamma: f64, r_max: f64, n_radii: usize) -> Result<Self> {
        if n_radii < 8 || !(r_max > 0.0) {
            return Err(Error::InvalidArgument("profile needs r_max > 0 and at least 8 radii".into()));
        }
        let radii: Vec<f64> = (0..n_radii).map(|i| r_max * i as f64 / (n_radii - 1) as f64).collect();
        let mut lambda1 = Vec::with_capacity(n_radii);
        let mut lambda2 = Vec::with_capacity(n_radii);
        for &r in &radii {
            let (a, b) = theta_eigs(r, gamma)?;
            lambda1.push(a);
            lambda2.push(b);
        }
        let q = 3 * n_radii / 4;
        let fit = |vals: &[f64], p: f64| {
            let (mut num, mut den) = (0.0, 0.0);
            for i in q..n_radii {
                let w = (1.0 + radii[i]).powf(p);
                num += vals[i] * w;
                den += w * w;
            }
            num / den
        };
        let fitted_c1 = fit(&lambda1, gamma);
        let fitted_c2 = fit(&lambda2, gamma + 2.0);
        Ok(CoeffProfile { radii, lambda1, lambda2, gamma, fitted_c1, fitted_c2 })
    }

    /// Default profile covering the whole truncated lattice.
    pub fn for_radius(gamma: f64, radius: f64) -> Result<Self> {
        Self::build(gamma, 3f64.sqrt() * radius + 1.0, 400)
    }

    pub fn r_max(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    /// Four-point Lagrange interpolation of `(λ1, λ2)` at `r`.
    pub fn eval(&self, r: f64) -> Result<(f64, f64)> {
        if r < 0.0 || r > self.r_max() * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("radius {r} outside profile range [0, {}]", self.r_max())));
        }
        let n = self.radii.len();
        let dr = self.radii[1] - self.radii[0];
        let cell = ((r / dr).floor() as usize).min(n - 2);
        let start = cell.saturating_sub(1).min(n - 4);
        let mut out = (0.0, 0.0);
        for a in start..start + 4 {
            let mut w = 1.0;
            for b in start..start + 4 {
                if a != b {
                    w *= (r - self.radii[b]) / (self.radii[a] - self.radii[b]);
                }
            }
            out.0 += w * self.lambda1[a];
            out.1 += w * self.lambda2[a];
        }
        Ok(out)
    }

    pub fn to_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "r,lambda1,lambda2")?;
        for i in 0..self.radii.len() {
            writeln!(w, "{},{},{}", self.radii[i], self.lambda1[i], self.lambda2[i])?;
        }
        Ok(())
    }
}

/// `θ(ξ) = λ1 P(ξ) + λ2 (I − P(ξ))`.
pub fn theta_matrix(xi: &[f64; 3], profile: &CoeffProfile) -> Result<Mat3> {
    let (l1, l2) = profile.eval(norm3(xi))?;
    let p = radial_projector(xi);
    let mut t = [[0.0; 3]; 3];
    let origin = norm3(xi) == 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let delta = if i == j { 1.0 } else { 0.0 };
            t[i][j] = if origin { l1 * delta } else { l1 * p[i][j] + l2 * (delta - p[i][j]) };
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_examples() {
        let p = phi_matrix(&[1.0, 0.0, 0.0], 0.0).unwrap();
        assert_eq!(p, [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let p = phi_matrix(&[0.0, 2.0, 0.0], -1.0).unwrap();
        assert_eq!(p, [[2.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 2.0]]);
        assert!(phi_matrix(&[0.0; 3], 0.0).is_err());
    }

    #[test]
    fn theta_at_origin() {
        for gamma in [0.0, -1.0, 0.5] {
            let (l1, l2) = theta_eigs(0.0, gamma).unwrap();
            assert!((l1 - l2).abs() < 1e-12 * l1);
        }
        let (l1, _) = theta_eigs(0.0, 0.0).unwrap();
        assert!((l1 - 2.0).abs() < 1e-10);
    }

    #[test]
    fn hard_sphere_closed_forms() {
        // γ = 0: λ1 = E|ξ*_⊥|² = 2, trace = 2 E|ξ − ξ*|² = 2 (r² + 3)
        for r in [0.3, 1.0, 2.5, 6.0, 9.0] {
            let (l1, l2) = theta_eigs(r, 0.0).unwrap();
            assert!((l1 - 2.0).abs() < 1e-9, "r={r} l1={l1}");
            assert!((l2 - (r * r + 2.0)).abs() < 1e-9 * (r * r + 2.0), "r={r} l2={l2}");
        }
    }

    #[test]
    fn interpolation_accuracy() {
        let p = CoeffProfile::build(-1.0, 8.8, 400).unwrap();
        for r in [0.011, 1.234, 4.321, 8.7] {
            let (a, b) = p.eval(r).unwrap();
            let (ea, eb) = theta_eigs(r, -1.0).unwrap();
            assert!((a - ea).abs() < 1e-7 && (b - eb).abs() < 1e-7);
        }
        assert!(p.eval(9.0).is_err());
    }
}
