//! Velocity-space discretization and Fourier-mode spectral analysis of the
//! linearized Landau operator on a periodic box.

extern crate blas_src;
extern crate openblas_src;

pub mod coeffs;
pub mod collision;
pub mod error;
pub mod grid;
pub mod quadrature;

pub use coeffs::{phi_matrix, theta_eigs, theta_matrix, CoeffProfile};
pub use collision::{assemble_collision, ktilde_kernel, CollisionOperators};
pub use error::{Error, Result};
pub use grid::{build_grid, weighted_inner, GridSpec, VelocityGrid};
pub mod linalg;
pub mod mode;
pub mod ode;

pub use linalg::{EigenSystem, C64};
pub use mode::{mode_operator, propagate, Generator, ModeOperator, BETA};
pub mod spectral;
pub mod fit;
pub mod singular;
pub mod green;
pub mod kinetic;
pub mod io;
pub mod oracle;
pub mod config;
pub use fit::{classify_regime, fit_decay, DecayFit, DecayModel, Regime};
pub use singular::{singular_norm_scan, SingularOperator, SingularScan};
pub use green::{
    fluid_mode_sum_envelope, prepare_initial, synthesize_green, DecompositionSnapshot, GreenSynthesis, InitialProfile,
    ModeField,
};
pub use kinetic::{mixture_apply, picard_chain, ChainOptions, PicardChain};
pub mod harness;
pub use config::SuiteConfig;
pub use harness::{run_stages, run_suite, CheckResult, CheckStatus, Measurement, RunOptions, RunReport, Stage};
