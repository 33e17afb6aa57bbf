//! One-dimensional adaptive Gauss–Legendre and singular self-cell integrals.

use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

fn rule(order: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static R10: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static R21: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static R32: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let cell = match order {
        10 => &R10,
        21 => &R21,
        32 => &R32,
        _ => unreachable!("unsupported rule order"),
    };
    cell.get_or_init(|| {
        let q = GaussLegendre::new(order.try_into().unwrap());
        q.as_node_weight_pairs().iter().copied().unzip()
    })
}

fn fixed<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, order: usize) -> f64 {
    let (x, w) = rule(order);
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    x.iter().zip(w).map(|(xi, wi)| wi * f(c + r * xi)).sum::<f64>() * r
}

/// Gauss–Legendre rule of the given order on `[a, b]` (orders 10, 21, 32).
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, order: usize) -> f64 {
    fixed(&f, a, b, order)
}

/// Globally adaptive bisection comparing 10- and 21-point rules.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let mut stack = vec![(a, b, 0u32)];
    let mut total = 0.0;
    let mut budget = 20_000usize;
    while let Some((lo, hi, depth)) = stack.pop() {
        budget = budget
            .checked_sub(1)
            .ok_or_else(|| Error::Quadrature("subdivision budget exhausted".into()))?;
        let coarse = fixed(&f, lo, hi, 10);
        let fine = fixed(&f, lo, hi, 21);
        if !fine.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand on [{lo}, {hi}]")));
        }
        let width = (hi - lo) / (b - a).abs().max(f64::MIN_POSITIVE);
        let err = (fine - coarse).abs();
        if err <= (abs_tol * width).max(rel_tol * fine.abs()) || depth >= 40 {
            total += fine;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    Ok(total)
}

/// C² bump with `χ = 1` on `[0, 1]` and `χ = 0` on `[2, ∞)`.
#[inline]
pub fn chi(r: f64) -> f64 {
    let r = r.abs();
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        let s = r - 1.0;
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// `∫_0^ρ s^{p+2} χ(s/D) ds`, exact below `D`.
fn radial_moment(p: f64, rho: f64, cutoff: Option<f64>) -> f64 {
    let q = p + 3.0;
    match cutoff {
        None => rho.powf(q) / q,
        Some(d) => {
            let core = rho.min(d).powf(q) / q;
            let hi = rho.min(2.0 * d);
            if hi <= d {
                core
            } else {
                core + fixed(&|s: f64| s.powf(p + 2.0) * chi(s / d), d, hi, 21)
            }
        }
    }
}

/// `∫ |η|^p w(|η|) dη` over the cube `[-h/2, h/2]³`, with `w = 1` or
/// `w = χ(|η|/D)`. The cube is split into six face pyramids; the radial
/// direction is integrated exactly, the face by tensor Gauss–Legendre.
pub fn cube_power_integral(p: f64, h: f64, cutoff: Option<f64>) -> Result<f64> {
    if p <= -3.0 {
        return Err(Error::Quadrature(format!("|η|^{p} is not integrable at the origin")));
    }
    let a = 0.5 * h;
    let panels = 4;
    let (x, w) = rule(32);
    // quarter face [0, a]², doubled twice by symmetry
    let mut face = 0.0;
    for py in 0..panels {
        for pz in 0..panels {
            let y0 = a * py as f64 / panels as f64;
            let z0 = a * pz as f64 / panels as f64;
            let half = 0.5 * a / panels as f64;
            for (xi, wi) in x.iter().zip(w) {
                let y = y0 + half * (1.0 + xi);
                for (xj, wj) in x.iter().zip(w) {
                    let z = z0 + half * (1.0 + xj);
                    let rho = (a * a + y * y + z * z).sqrt();
                    face += wi * wj * half * half * radial_moment(p, rho, cutoff) / rho.powi(3);
                }
            }
        }
    }
    let v = 6.0 * 4.0 * a * face;
    if !v.is_finite() {
        return Err(Error::Quadrature("non-finite self-cell integral".into()));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adaptive_matches_closed_form() {
        let v = integrate(|x: f64| (-x * x).exp(), 0.0, 8.0, 1e-14, 1e-13).unwrap();
        assert!((v - 0.5 * std::f64::consts::PI.sqrt()).abs() < 1e-12);
        let v = integrate(|x: f64| x.sqrt(), 0.0, 1.0, 1e-13, 1e-13).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn chi_shape() {
        assert_eq!(chi(0.3), 1.0);
        assert_eq!(chi(1.0), 1.0);
        assert_eq!(chi(2.5), 0.0);
        assert!((chi(1.5) - 0.5).abs() < 1e-15);
        // C² at the joints
        let d = 1e-5;
        for &r in &[1.0, 2.0] {
            let d1 = (chi(r + d) - chi(r - d)) / (2.0 * d);
            let d2 = (chi(r + d) - 2.0 * chi(r) + chi(r - d)) / (d * d);
            assert!(d1.abs() < 1e-8 && d2.abs() < 1e-3, "r={r} d1={d1} d2={d2}");
        }
    }

    #[test]
    fn cube_integrals() {
        // volume and second moment of the unit cube
        let v0 = cube_power_integral(0.0, 1.0, None).unwrap();
        assert!((v0 - 1.0).abs() < 1e-12);
        let v2 = cube_power_integral(2.0, 1.0, None).unwrap();
        assert!((v2 - 0.25).abs() < 1e-12);
        // scaling |η|^p over a cube of side h is h^{p+3}
        let a = cube_power_integral(-1.0, 1.0, None).unwrap();
        let b = cube_power_integral(-1.0, 2.0, None).unwrap();
        assert!((b / a - 4.0).abs() < 1e-12);
        // mask covering the whole cube changes nothing; a tiny mask gives the ball
        let m = cube_power_integral(0.0, 1.0, Some(1.0)).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
        let d = 0.1;
        let small = cube_power_integral(0.0, 1.0, Some(d)).unwrap();
        let ball = 4.0 * std::f64::consts::PI * integrate(|s| s * s * chi(s / d), 0.0, 2.0 * d, 1e-15, 1e-13).unwrap();
        assert!((small - ball).abs() < 1e-9 * ball);
    }
}
