//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use landau_core::{assemble_collision, build_grid, CoeffProfile, CollisionOperators, GridSpec, Result};

/// Collision operators on an `n³` grid with the default radius.
pub fn operators(n: usize, gamma: f64) -> Result<CollisionOperators> {
    let spec = GridSpec { n_per_axis: n, gamma, ..GridSpec::default() };
    let grid = Arc::new(build_grid(spec)?);
    let profile = CoeffProfile::for_radius(gamma, spec.radius)?;
    assemble_collision(grid, &profile)
}
