//! Per-Fourier-mode operators `A(k) = −iβε(ξ·k) + G` and their propagation.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use log::warn;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::collision::CollisionOperators;
use crate::error::{Error, Result};
use crate::linalg::{complexify, eig_biorthogonal, EigenSystem, C64};
use crate::ode::{self, DenseFlow, OdeOptions};

/// Phase constant: `e^{iβεk·x}` is periodic on the box of side `1/ε`.
pub const BETA: f64 = 2.0 * PI;

pub type ModeIndex = [i64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Generator {
    #[serde(rename = "FULL_L")]
    FullL,
    #[serde(rename = "LAMBDA_ONLY")]
    LambdaOnly,
    #[serde(rename = "LAMBDA_PLUS_KS")]
    LambdaPlusKs,
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generator::FullL => "FULL_L",
            Generator::LambdaOnly => "LAMBDA_ONLY",
            Generator::LambdaPlusKs => "LAMBDA_PLUS_KS",
        })
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "FULL_L" => Ok(Generator::FullL),
            "LAMBDA_ONLY" => Ok(Generator::LambdaOnly),
            "LAMBDA_PLUS_KS" => Ok(Generator::LambdaPlusKs),
            other => Err(Error::InvalidArgument(format!("unknown generator tag {other:?}"))),
        }
    }
}

/// Real generator matrix selected by the tag.
pub fn generator_matrix(ops: &CollisionOperators, tag: Generator) -> Array2<f64> {
    match tag {
        Generator::FullL => ops.l_full.clone(),
        Generator::LambdaOnly => ops.lambda_mod.clone(),
        Generator::LambdaPlusKs => &ops.lambda_mod + &ops.k_singular,
    }
}

/// Transport symbol `βε (ξ·k)` at every unknown.
pub fn transport_symbol(ops: &CollisionOperators, k: ModeIndex, eps: f64) -> Array1<f64> {
    ops.grid
        .dof_points()
        .iter()
        .map(|p| BETA * eps * (p[0] * k[0] as f64 + p[1] * k[1] as f64 + p[2] * k[2] as f64))
        .collect()
}

pub fn kappa_of(epsilon: f64, k: ModeIndex) -> f64 {
    BETA * epsilon * ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt()
}

#[derive(Debug)]
pub struct ModeOperator {
    pub k: ModeIndex,
    pub epsilon: f64,
    pub kappa: f64,
    pub generator_tag: Generator,
    pub matrix: Array2<C64>,
    eigensystem: OnceLock<Arc<EigenSystem>>,
}

pub fn mode_operator(ops: &CollisionOperators, k: ModeIndex, tag: Generator) -> Result<ModeOperator> {
    let km = ops.grid.spec.k_max as i64;
    if k.iter().any(|c| c.abs() > km) {
        return Err(Error::InvalidArgument(format!("mode {k:?} exceeds k_max = {km}")));
    }
    Ok(mode_operator_unchecked(ops, k, ops.grid.spec.epsilon, tag))
}

/// Mode operator at an explicit `ε`, without the `k_max` retention check.
pub fn mode_operator_unchecked(ops: &CollisionOperators, k: ModeIndex, epsilon: f64, tag: Generator) -> ModeOperator {
    let sym = transport_symbol(ops, k, epsilon);
    let mut matrix = complexify(&generator_matrix(ops, tag));
    for (i, s) in sym.iter().enumerate() {
        matrix[[i, i]] += C64::new(0.0, -s);
    }
    ModeOperator {
        k,
        epsilon,
        kappa: kappa_of(epsilon, k),
        generator_tag: tag,
        matrix,
        eigensystem: OnceLock::new(),
    }
}

/// Mode operator along an arbitrary direction at wavenumber `kappa`.
pub fn mode_operator_along(ops: &CollisionOperators, khat: [f64; 3], kappa: f64, tag: Generator) -> ModeOperator {
    let mut matrix = complexify(&generator_matrix(ops, tag));
    for (i, p) in ops.grid.dof_points().iter().enumerate() {
        let s = kappa * (p[0] * khat[0] + p[1] * khat[1] + p[2] * khat[2]);
        matrix[[i, i]] += C64::new(0.0, -s);
    }
    ModeOperator { k: [0, 0, 0], epsilon: 0.0, kappa, generator_tag: tag, matrix, eigensystem: OnceLock::new() }
}

impl ModeOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cached_eigensystem(&self) -> Option<Arc<EigenSystem>> {
        self.eigensystem.get().cloned()
    }

    /// Computes (once) and caches the dense eigendecomposition.
    pub fn eigensystem(&self) -> Result<Arc<EigenSystem>> {
        if let Some(e) = self.eigensystem.get() {
            return Ok(e.clone());
        }
        let es = Arc::new(eig_biorthogonal(&self.matrix)?);
        Ok(self.eigensystem.get_or_init(|| es).clone())
    }

    pub fn set_eigensystem(&self, es: Arc<EigenSystem>) {
        let _ = self.eigensystem.set(es);
    }

    /// Hermitian part `(A + Aᴴ)/2`.
    pub fn hermitian_part(&self) -> Array2<C64> {
        let ah = self.matrix.t().mapv(|z| z.conj());
        (&self.matrix + &ah).mapv(|z| z * 0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropagationMethod {
    Eigen,
    Ode,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Array1<C64>>,
    pub method: PropagationMethod,
    /// Set when the eigen path was requested but could not be used.
    pub warning: Option<String>,
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.first().is_some_and(|&t| t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("times must start at t >= 0 and increase".into()));
    }
    Ok(())
}

/// `e^{At} f0` at each time: eigen path when a decomposition is cached,
/// adaptive SDIRK otherwise.
pub fn propagate(a: &ModeOperator, f0: &Array1<C64>, times: &[f64]) -> Result<Trajectory> {
    let method = if a.cached_eigensystem().is_some() { PropagationMethod::Eigen } else { PropagationMethod::Ode };
    propagate_with(a, f0, times, method)
}

pub fn propagate_with(a: &ModeOperator, f0: &Array1<C64>, times: &[f64], method: PropagationMethod) -> Result<Trajectory> {
    check_times(times)?;
    if f0.len() != a.dim() {
        return Err(Error::LengthMismatch { expected: a.dim(), got: f0.len() });
    }
    let mut warning = None;
    if method == PropagationMethod::Eigen {
        match a.eigensystem() {
            Ok(es) if es.biorth_residual < 1e-6 => {
                let c = es.coordinates(f0);
                let states = times.iter().map(|&t| if t == 0.0 { f0.clone() } else { es.exp_apply(t, &c) }).collect();
                return Ok(Trajectory { times: times.to_vec(), states, method, warning: None });
            }
            Ok(es) => {
                let msg = format!("eigenbasis ill-conditioned (biorth residual {:.2e}); using ODE path", es.biorth_residual);
                warn!("{msg}");
                warning = Some(msg);
            }
            Err(e) => {
                let msg = format!("eigendecomposition failed ({e}); using ODE path");
                warn!("{msg}");
                warning = Some(msg);
            }
        }
    }
    let sol = ode::integrate(&DenseFlow(&a.matrix), f0, times, &OdeOptions::default())?;
    Ok(Trajectory { times: times.to_vec(), states: sol.states, method: PropagationMethod::Ode, warning })
}

type CacheKey = (ModeIndex, u64, Generator);

/// Bounded cache of eigendecompositions keyed by mode, `ε` and generator.
pub struct EigenCache {
    capacity: usize,
    inner: Mutex<(HashMap<CacheKey, Arc<EigenSystem>>, VecDeque<CacheKey>)>,
}

impl Default for EigenCache {
    fn default() -> Self {
        Self::new(64)
    }
}

impl EigenCache {
    pub fn new(capacity: usize) -> Self {
        EigenCache { capacity: capacity.max(1), inner: Mutex::new((HashMap::new(), VecDeque::new())) }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, k: ModeIndex, epsilon: f64, tag: Generator) -> Option<Arc<EigenSystem>> {
        let mut g = self.inner.lock().unwrap();
        let key = (k, epsilon.to_bits(), tag);
        let hit = g.0.get(&key).cloned();
        if hit.is_some() {
            g.1.retain(|x| *x != key);
            g.1.push_back(key);
        }
        hit
    }

    /// Returns the cached system, computing it outside the lock on a miss.
    /// Concurrent misses keep whichever value was inserted first.
    pub fn get_or_compute(&self, a: &ModeOperator) -> Result<Arc<EigenSystem>> {
        if let Some(e) = self.get(a.k, a.epsilon, a.generator_tag) {
            a.set_eigensystem(e.clone());
            return Ok(e);
        }
        let es = a.eigensystem()?;
        let mut g = self.inner.lock().unwrap();
        let key = (a.k, a.epsilon.to_bits(), a.generator_tag);
        if let Some(existing) = g.0.get(&key) {
            return Ok(existing.clone());
        }
        g.0.insert(key, es.clone());
        g.1.push_back(key);
        while g.0.len() > self.capacity {
            if let Some(old) = g.1.pop_front() {
                g.0.remove(&old);
            }
        }
        Ok(es)
    }
}
