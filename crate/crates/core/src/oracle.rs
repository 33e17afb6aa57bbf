//! Finite-difference oracles, kept independent of the closed forms they check.

use std::f64::consts::PI;

fn maxwellian(xi: &[f64; 3]) -> f64 {
    let r2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    (2.0 * PI).powf(-1.5) * (-0.5 * r2).exp()
}

/// `Φ_ij(η) = |η|^{γ+2} δ_ij − |η|^γ η_i η_j`, written out directly.
fn phi(eta: &[f64; 3], gamma: f64, i: usize, j: usize) -> f64 {
    let r2 = eta[0] * eta[0] + eta[1] * eta[1] + eta[2] * eta[2];
    let d = if i == j { 1.0 } else { 0.0 };
    r2.powf(0.5 * (gamma + 2.0)) * d - r2.powf(0.5 * gamma) * eta[i] * eta[j]
}

fn shifted(x: &[f64; 3], axis: usize, h: f64) -> [f64; 3] {
    let mut y = *x;
    y[axis] += h;
    y
}

/// `M^{−1/2}(ξ) M^{−1/2}(ξ*) Σ_ij ∂_{ξ_i} ∂_{ξ*_j} Z_ij(ξ, ξ*)` with
/// `Z = M(ξ) M(ξ*) Φ(ξ − ξ*)`, by nested centered differences of step `h`.
pub fn ktilde_fd(xi: &[f64; 3], xis: &[f64; 3], gamma: f64, h: f64) -> f64 {
    let z = |a: &[f64; 3], b: &[f64; 3], i: usize, j: usize| {
        let eta = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        maxwellian(a) * maxwellian(b) * phi(&eta, gamma, i, j)
    };
    let mut sum = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let (ap, am) = (shifted(xi, i, h), shifted(xi, i, -h));
            let (bp, bm) = (shifted(xis, j, h), shifted(xis, j, -h));
            sum += (z(&ap, &bp, i, j) - z(&ap, &bm, i, j) - z(&am, &bp, i, j) + z(&am, &bm, i, j)) / (4.0 * h * h);
        }
    }
    sum / (maxwellian(xi) * maxwellian(xis)).sqrt()
}

/// `Σ_j ∂_j Φ_ij(η)` by centered differences.
pub fn phi_divergence_fd(eta: &[f64; 3], gamma: f64, h: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        for j in 0..3 {
            *o += (phi(&shifted(eta, j, h), gamma, i, j) - phi(&shifted(eta, j, -h), gamma, i, j)) / (2.0 * h);
        }
    }
    out
}

/// `Σ_ij ∂_i ∂_j Φ_ij(η)` by nested centered differences.
pub fn phi_double_divergence_fd(eta: &[f64; 3], gamma: f64, h: f64) -> f64 {
    let mut sum = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let f = |a: f64, b: f64| {
                let mut e = *eta;
                e[i] += a;
                e[j] += b;
                phi(&e, gamma, i, j)
            };
            sum += (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::ktilde_kernel;

    #[test]
    fn reference_value_at_unit_offset() {
        // bracket 0 − 2 + 6 = 4 at ξ = e₁, ξ* = 0, γ = 0
        let want = 4.0 * (2.0 * PI).powf(-1.5) * (-0.25f64).exp();
        assert!((want - 0.19779).abs() < 1e-5);
        let fd = ktilde_fd(&[1.0, 0.0, 0.0], &[0.0; 3], 0.0, 1e-4);
        assert!((fd - want).abs() < 1e-5 * want, "{fd} vs {want}");
        let closed = ktilde_kernel(&[1.0, 0.0, 0.0], &[0.0; 3], 0.0).unwrap();
        assert!((closed - want).abs() < 1e-13);
    }

    #[test]
    fn divergence_identities() {
        let d = phi_divergence_fd(&[1.0, 0.0, 0.0], 0.0, 1e-4);
        assert!((d[0] + 2.0).abs() < 1e-7 && d[1].abs() < 1e-7 && d[2].abs() < 1e-7, "{d:?}");
        for gamma in [0.0, -1.0, 0.5] {
            let eta = [0.7, -0.4, 1.1];
            let r = (0.49f64 + 0.16 + 1.21).sqrt();
            let dd = phi_double_divergence_fd(&eta, gamma, 1e-4);
            let want = -2.0 * (gamma + 3.0) * r.powf(gamma);
            assert!((dd - want).abs() < 1e-5 * want.abs(), "gamma {gamma}: {dd} vs {want}");
        }
    }
}
