#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use landau_core::{assemble_collision, build_grid, CoeffProfile, CollisionOperators, GridSpec, C64};
use ndarray::Array1;

/// Assembled operators on the default box, cached per `(n, γ)`.
pub fn ops(n: usize, gamma: f64) -> Arc<CollisionOperators> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Arc<CollisionOperators>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut map = cache.lock().unwrap();
    map.entry((n, gamma.to_bits()))
        .or_insert_with(|| {
            let spec = GridSpec { n_per_axis: n, gamma, ..GridSpec::default() };
            let grid = Arc::new(build_grid(spec).unwrap());
            let profile = CoeffProfile::for_radius(gamma, spec.radius).unwrap();
            Arc::new(assemble_collision(grid, &profile).unwrap())
        })
        .clone()
}

/// A smooth, non-symmetric test state: a shifted Gaussian times `M^{1/2}`.
pub fn smooth_state(ops: &CollisionOperators) -> Array1<C64> {
    ops.grid
        .dof_points()
        .iter()
        .map(|x| {
            let r2 = (x[0] - 0.3).powi(2) + (x[1] + 0.2).powi(2) + x[2] * x[2];
            C64::new((-0.5 * r2).exp() * (1.0 + 0.2 * x[0]), 0.1 * x[1] * (-0.5 * r2).exp())
        })
        .collect()
}

pub fn rel_err(a: &Array1<C64>, b: &Array1<C64>) -> f64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    d / b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE)
}
