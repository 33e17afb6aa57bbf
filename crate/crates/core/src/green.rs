//! Initial data on the torus, Fourier synthesis of the Green function and its
//! long-wave / short-wave and fluid / non-fluid buckets.
//!
//! Spatial profiles are expressed in torus units `u = εx ∈ [0, 1)³`, so the
//! coefficient of `e^{iβεk·x}` does not depend on `ε`. Norms use the averaged
//! `L²_x`, so Parseval carries no volume factor.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use log::debug;
use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{collision_invariants, CollisionOperators};
use crate::error::{Error, Result};
use crate::fit::{classify_regime, Regime};
use crate::grid::{log_maxwellian_at, VelocityGrid};
use crate::linalg::{eig_biorthogonal, C64};
use crate::mode::{kappa_of, mode_operator_unchecked, Generator, ModeIndex, BETA};
use crate::quadrature::integrate;
use crate::spectral::GapEstimate;

/// Spatial factor `g(u)` of a separable profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpatialProfile {
    /// `amplitude · cos(2π k·u)`.
    PureMode { k: ModeIndex, #[serde(default = "one")] amplitude: f64 },
    /// Product of 1-D bumps `cos²(π(u−c)/(2a))` on `|u − c| < a`, with
    /// `a = half_width / 2` (so `half_width` is relative to half the side).
    CosineBump { half_width: f64, #[serde(default)] center: [f64; 3] },
}

fn one() -> f64 {
    1.0
}

/// A monomial term `coef · ξ^powers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: [u32; 3],
}

/// Velocity factor `φ(ξ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocityProfile {
    /// `M^{1/2}(ξ) Σ c ξ^p`.
    MaxwellianPolynomial { terms: Vec<Monomial> },
    /// `M_{u,T}(ξ) / M^{1/2}(ξ)`, evaluated in exponent space; needs `T < 2`.
    GaussianRatio { shift: [f64; 3], temperature: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialProfile {
    pub spatial: SpatialProfile,
    pub velocity: VelocityProfile,
    #[serde(default = "yes")]
    pub zero_mean: bool,
    /// Rescale to unit `L²_x L²_ξ` norm after the mean is removed.
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn yes() -> bool {
    true
}

fn mono(coef: f64, powers: [u32; 3]) -> Monomial {
    Monomial { coef, powers }
}

/// Names accepted by [`InitialProfile::builtin`].
pub const BUILTIN_PROFILES: [&str; 4] = ["pure_mode", "cosine_bump", "narrow_bump", "shifted_bump"];

impl InitialProfile {
    pub fn builtin(name: &str) -> Result<Self> {
        let asym = VelocityProfile::MaxwellianPolynomial {
            terms: vec![mono(1.0, [0, 0, 0]), mono(1.0, [1, 0, 0]), mono(1.0, [1, 1, 0]), mono(0.5, [2, 0, 0])],
        };
        let sym = VelocityProfile::MaxwellianPolynomial {
            terms: vec![mono(1.0, [0, 0, 0]), mono(0.5, [2, 0, 0]), mono(0.5, [0, 2, 0]), mono(0.5, [0, 0, 2])],
        };
        let (spatial, velocity) = match name {
            "pure_mode" => (SpatialProfile::PureMode { k: [1, 0, 0], amplitude: 1.0 }, asym),
            "cosine_bump" => (SpatialProfile::CosineBump { half_width: 0.4, center: [0.0; 3] }, sym),
            "narrow_bump" => (SpatialProfile::CosineBump { half_width: 0.1, center: [0.0; 3] }, sym),
            "shifted_bump" => (
                SpatialProfile::CosineBump { half_width: 0.4, center: [0.0; 3] },
                VelocityProfile::GaussianRatio { shift: [0.5, 0.0, 0.0], temperature: 0.8 },
            ),
            other => {
                return Err(Error::Config(format!("unknown profile name {other:?}; known: {}", BUILTIN_PROFILES.join(", "))))
            }
        };
        Ok(Self { spatial, velocity, zero_mean: true, normalize: true })
    }
}

/// Fourier coefficient `∫₀¹ b(u) e^{−2πiku} du` of the centered 1-D bump of
/// half-support `a`.
pub fn bump_coefficient(k: i64, a: f64) -> f64 {
    if k == 0 {
        return a;
    }
    let w = 2.0 * PI * k as f64;
    let denom = 1.0 - (w * a / PI).powi(2);
    if denom.abs() > 1e-6 {
        return (w * a).sin() / (w * denom);
    }
    // next to the removable singularity
    integrate(|u: f64| (PI * u / (2.0 * a)).cos().powi(2) * (w * u).cos(), -a, a, 1e-15, 1e-13).unwrap_or(a / 2.0)
}

impl SpatialProfile {
    fn validate(&self) -> Result<()> {
        match self {
            SpatialProfile::PureMode { k, amplitude } => {
                if *k == [0, 0, 0] || !amplitude.is_finite() {
                    return Err(Error::Config("pure mode needs k ≠ 0 and a finite amplitude".into()));
                }
            }
            SpatialProfile::CosineBump { half_width, center } => {
                if !(*half_width > 0.0 && *half_width <= 1.0) || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Config(format!("bump half_width {half_width} outside (0, 1]")));
                }
            }
        }
        Ok(())
    }

    /// Coefficients for all `|k|∞ ≤ k_max` and the relative squared-norm
    /// weight of the dropped modes.
    fn coefficients(&self, k_max: usize) -> (BTreeMap<ModeIndex, C64>, f64) {
        let km = k_max as i64;
        let mut out = BTreeMap::new();
        match self {
            SpatialProfile::PureMode { k, amplitude } => {
                if k.iter().all(|c| c.abs() <= km) {
                    out.insert(*k, C64::new(0.5 * amplitude, 0.0));
                    out.insert([-k[0], -k[1], -k[2]], C64::new(0.5 * amplitude, 0.0));
                    (out, 0.0)
                } else {
                    (out, 1.0)
                }
            }
            SpatialProfile::CosineBump { half_width, center } => {
                let a = 0.5 * half_width;
                let c1: Vec<f64> = (-km..=km).map(|k| bump_coefficient(k, a)).collect();
                let kept: f64 = c1.iter().map(|c| c * c).sum();
                // 1-D Parseval: Σ_all ĉ² = ∫ b² = 3a/4
                let tail = (1.0 - (kept / (0.75 * a)).powi(3)).max(0.0);
                for i in -km..=km {
                    for j in -km..=km {
                        for l in -km..=km {
                            let mag = c1[(i + km) as usize] * c1[(j + km) as usize] * c1[(l + km) as usize];
                            let ph = -2.0 * PI * (i as f64 * center[0] + j as f64 * center[1] + l as f64 * center[2]);
                            out.insert([i, j, l], C64::from_polar(mag, ph));
                        }
                    }
                }
                (out, tail)
            }
        }
    }

    /// Invariant under every signed axis permutation about the origin.
    fn cubic(&self) -> bool {
        matches!(self, SpatialProfile::CosineBump { center, .. } if center.iter().all(|&c| c == 0.0))
    }
}

impl VelocityProfile {
    pub fn evaluate(&self, grid: &VelocityGrid) -> Result<Array1<f64>> {
        let pts = grid.dof_points();
        match self {
            VelocityProfile::MaxwellianPolynomial { terms } => {
                if terms.is_empty() {
                    return Err(Error::Config("polynomial profile has no terms".into()));
                }
                Ok(pts
                    .iter()
                    .map(|p| {
                        let poly: f64 = terms
                            .iter()
                            .map(|m| m.coef * p[0].powi(m.powers[0] as i32) * p[1].powi(m.powers[1] as i32) * p[2].powi(m.powers[2] as i32))
                            .sum();
                        (0.5 * log_maxwellian_at(p)).exp() * poly
                    })
                    .collect())
            }
            VelocityProfile::GaussianRatio { shift, temperature } => {
                let t = *temperature;
                if !(t > 0.0 && t < 2.0) {
                    return Err(Error::Config(format!("temperature {t} outside (0, 2)")));
                }
                Ok(pts
                    .iter()
                    .map(|p| {
                        let d2: f64 = (0..3).map(|i| (p[i] - shift[i]).powi(2)).sum();
                        let log_m = -1.5 * (2.0 * PI * t).ln() - d2 / (2.0 * t);
                        (log_m - 0.5 * log_maxwellian_at(p)).exp()
                    })
                    .collect())
            }
        }
    }
}

/// Fourier coefficients `Î_k` of a phase-space function over retained modes.
#[derive(Debug, Clone)]
pub struct ModeField {
    pub grid: Arc<VelocityGrid>,
    pub epsilon: f64,
    pub k_max: usize,
    pub coefficients: BTreeMap<ModeIndex, Array1<C64>>,
    pub zero_mean: bool,
    /// The represented function is real, so `Î_{−k} = conj(Î_k)`.
    pub real: bool,
    /// Invariant under signed axis permutations (checked before use).
    pub cubic: bool,
    /// Relative squared norm of the modes beyond `k_max` (analytic bound).
    pub tail_bound: f64,
}

/// Builds `Î_k = ĝ(k) φ` for a separable profile.
pub fn prepare_initial(profile: &InitialProfile, grid: Arc<VelocityGrid>, epsilon: f64, k_max: usize) -> Result<ModeField> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    profile.spatial.validate()?;
    let phi = profile.velocity.evaluate(&grid)?;
    let (ghat, tail_bound) = profile.spatial.coefficients(k_max);
    if ghat.is_empty() {
        return Err(Error::Config(format!("no retained modes with k_max = {k_max}")));
    }
    let phi_c: Array1<C64> = phi.mapv(|v| C64::new(v, 0.0));
    let mut coefficients: BTreeMap<ModeIndex, Array1<C64>> = ghat.into_iter().map(|(k, g)| (k, phi_c.mapv(|v| v * g))).collect();
    if profile.zero_mean {
        if let Some(c0) = coefficients.get_mut(&[0, 0, 0]) {
            let v = collision_invariants(&grid);
            let w = grid.cell_volume();
            for _ in 0..2 {
                for i in 0..5 {
                    let col = v.column(i);
                    let proj: C64 = col.iter().zip(c0.iter()).map(|(a, b)| b * *a).sum::<C64>() * w;
                    c0.zip_mut_with(&col, |x, &a| *x -= proj * a);
                }
            }
        }
    }
    let sym_velocity = match &profile.velocity {
        VelocityProfile::MaxwellianPolynomial { .. } => true,
        VelocityProfile::GaussianRatio { shift, .. } => shift.iter().all(|&s| s == 0.0),
    };
    let mut field = ModeField {
        grid,
        epsilon,
        k_max,
        coefficients,
        zero_mean: profile.zero_mean,
        real: true,
        cubic: profile.spatial.cubic() && sym_velocity,
        tail_bound,
    };
    if profile.normalize {
        let nrm = field.parseval_norm(0);
        if !(nrm > 0.0) {
            return Err(Error::Config("initial profile vanishes after removing its mean".into()));
        }
        for c in field.coefficients.values_mut() {
            c.mapv_inplace(|z| z / nrm);
        }
    }
    Ok(field)
}

/// Sobolev weight `(1 + κ²)^s`.
pub fn sobolev_weight(epsilon: f64, k: ModeIndex, s: u32) -> f64 {
    (1.0 + kappa_of(epsilon, k).powi(2)).powi(s as i32)
}

impl ModeField {
    /// `(Σ_k (1 + |βεk|²)^s ‖f̂_k‖²)^{1/2}`.
    pub fn parseval_norm(&self, s: u32) -> f64 {
        self.coefficients
            .iter()
            .map(|(k, v)| sobolev_weight(self.epsilon, *k, s) * self.grid.dof_norm(v.view()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest `|⟨inv_i, Î_0⟩|`.
    pub fn mean_moments(&self) -> f64 {
        let Some(c0) = self.coefficients.get(&[0, 0, 0]) else { return 0.0 };
        let v = collision_invariants(&self.grid);
        let w = self.grid.cell_volume();
        (0..5)
            .map(|i| v.column(i).iter().zip(c0.iter()).map(|(a, b)| b * *a).sum::<C64>().norm() * w)
            .fold(0.0, f64::max)
    }

    /// Largest `‖Î_{−k} − conj(Î_k)‖`, relative to the largest coefficient.
    pub fn conjugate_defect(&self) -> f64 {
        let scale = self.coefficients.values().map(|v| self.grid.dof_norm(v.view())).fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for (k, v) in &self.coefficients {
            let Some(w) = self.coefficients.get(&neg(*k)) else { return f64::INFINITY };
            worst = worst.max(self.grid.dof_norm((w - &v.mapv(|z| z.conj())).view()));
        }
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }

    /// Mode orbits under the largest symmetry the data actually has.
    pub fn orbits(&self) -> (Reduction, Vec<ModeOrbit>) {
        if self.cubic {
            let group = signed_permutations();
            let maps: Vec<Arc<Vec<usize>>> = group.iter().map(|q| Arc::new(node_permutation(&self.grid, q))).collect();
            if self.cubic_consistent(&group, &maps) {
                let mut seen: HashMap<ModeIndex, ()> = HashMap::new();
                let mut orbits = Vec::new();
                for k in self.coefficients.keys() {
                    if seen.contains_key(k) {
                        continue;
                    }
                    let mut members = Vec::new();
                    for (q, m) in group.iter().zip(&maps) {
                        let qk = q.apply_k(*k);
                        if seen.insert(qk, ()).is_none() {
                            let map = if qk == *k { ModeMap::Identity } else { ModeMap::Permute(m.clone()) };
                            members.push((qk, map));
                        }
                    }
                    // the identity element comes first in the group
                    orbits.push(ModeOrbit { rep: *k, members });
                }
                return (Reduction::Cubic, orbits);
            }
        }
        if self.real && self.conjugate_defect() < 1e-13 {
            let mut orbits = Vec::new();
            for k in self.coefficients.keys() {
                let nk = neg(*k);
                if nk < *k {
                    continue;
                }
                let mut members = vec![(*k, ModeMap::Identity)];
                if nk != *k {
                    members.push((nk, ModeMap::Conjugate));
                }
                orbits.push(ModeOrbit { rep: *k, members });
            }
            return (Reduction::Conjugate, orbits);
        }
        let orbits = self.coefficients.keys().map(|k| ModeOrbit { rep: *k, members: vec![(*k, ModeMap::Identity)] }).collect();
        (Reduction::None, orbits)
    }

    fn cubic_consistent(&self, group: &[SignedPermutation], maps: &[Arc<Vec<usize>>]) -> bool {
        let scale = self.coefficients.values().map(|v| self.grid.dof_norm(v.view())).fold(0.0, f64::max).max(1e-300);
        for (k, v) in &self.coefficients {
            for (q, m) in group.iter().zip(maps) {
                let Some(w) = self.coefficients.get(&q.apply_k(*k)) else { return false };
                let pv = ModeMap::Permute(m.clone()).apply(v);
                if self.grid.dof_norm((w - &pv).view()) > 1e-12 * scale {
                    debug!("cubic symmetry fails at k = {k:?}");
                    return false;
                }
            }
        }
        true
    }
}

fn neg(k: ModeIndex) -> ModeIndex {
    [-k[0], -k[1], -k[2]]
}

/// `(Qk)_i = sign_i · k_{perm_i}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignedPermutation {
    pub perm: [usize; 3],
    pub sign: [i64; 3],
}

impl SignedPermutation {
    pub fn apply_k(&self, k: ModeIndex) -> ModeIndex {
        [self.sign[0] * k[self.perm[0]], self.sign[1] * k[self.perm[1]], self.sign[2] * k[self.perm[2]]]
    }
}

/// The 48 signed axis permutations, identity first.
pub fn signed_permutations() -> Vec<SignedPermutation> {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::with_capacity(48);
    for perm in perms {
        for bits in 0..8 {
            let sign = [if bits & 1 == 0 { 1 } else { -1 }, if bits & 2 == 0 { 1 } else { -1 }, if bits & 4 == 0 { 1 } else { -1 }];
            out.push(SignedPermutation { perm, sign });
        }
    }
    out
}

/// Index map of `(P_Q f)(ξ) = f(Q⁻¹ξ)` on the unknowns: `(P_Q f)[a] = f[map[a]]`.
pub fn node_permutation(grid: &VelocityGrid, q: &SignedPermutation) -> Vec<usize> {
    let half = (grid.n() as i64 - 1) / 2;
    (0..grid.dof())
        .map(|a| {
            let (i, j, k) = grid.lattice_index(grid.interior[a]);
            let eta = [i as i64 - half, j as i64 - half, k as i64 - half];
            let mut xi = [0i64; 3];
            for d in 0..3 {
                xi[q.perm[d]] = q.sign[d] * eta[d];
            }
            let idx = grid.flat_index((xi[0] + half) as usize, (xi[1] + half) as usize, (xi[2] + half) as usize);
            grid.node_to_dof[idx].expect("signed permutations map interior nodes to interior nodes")
        })
        .collect()
}

/// How a member's coefficient follows from its orbit representative.
#[derive(Debug, Clone)]
pub enum ModeMap {
    Identity,
    Conjugate,
    Permute(Arc<Vec<usize>>),
}

impl ModeMap {
    pub fn apply(&self, v: &Array1<C64>) -> Array1<C64> {
        match self {
            ModeMap::Identity => v.clone(),
            ModeMap::Conjugate => v.mapv(|z| z.conj()),
            ModeMap::Permute(m) => m.iter().map(|&i| v[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Cubic,
    Conjugate,
    None,
}

#[derive(Debug, Clone)]
pub struct ModeOrbit {
    pub rep: ModeIndex,
    /// Every mode of the orbit with its map from the representative; the
    /// representative itself comes first.
    pub members: Vec<(ModeIndex, ModeMap)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    /// `k = 0`: the fluid part is the projection on the collision invariants.
    Mean,
    Long,
    Short,
}

struct RepMode {
    k: ModeIndex,
    kappa: f64,
    multiplicity: usize,
    kind: ModeKind,
    eigenvalues: Array1<C64>,
    /// `R diag(Lᴴ Î_k)`: column `i` is the modal part of `Î_k` along `σ_i`.
    modal: Array2<C64>,
    data: Array1<C64>,
    fluid: Vec<usize>,
}

impl RepMode {
    fn evolve(&self, t: f64, keep: impl Fn(usize) -> bool) -> Array1<C64> {
        let e: Array1<C64> = self.eigenvalues.iter().enumerate().map(|(i, s)| if keep(i) { (s * t).exp() } else { C64::new(0.0, 0.0) }).collect();
        self.modal.dot(&e)
    }
}

/// Per-mode pieces of `e^{A(k)t} Î_k`.
#[derive(Debug, Clone)]
pub struct ModeBuckets {
    pub total: Array1<C64>,
    pub short: Array1<C64>,
    pub long_perp: Array1<C64>,
    pub fluid: Array1<C64>,
}

/// Squared-norm sums at one Sobolev order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketNorms {
    pub total: f64,
    pub short: f64,
    pub long_perp: f64,
    pub fluid: f64,
    pub kinetic: Option<f64>,
    pub remainder: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSnapshot {
    pub t: f64,
    pub regime: Regime,
    /// Norms at `s = 0` and `s = 2`.
    pub norms: [BucketNorms; 2],
}

pub const SNAPSHOT_ORDERS: [u32; 2] = [0, 2];

/// Eigen-synthesis of `G^t I` for one initial field.
pub struct GreenSynthesis {
    pub epsilon: f64,
    pub delta_hat: f64,
    pub tau_hat: f64,
    pub regime: Regime,
    pub reduction: Reduction,
    pub orbits: Vec<ModeOrbit>,
    grid: Arc<VelocityGrid>,
    invariants: Array2<f64>,
    modes: Vec<RepMode>,
}

impl fmt::Debug for GreenSynthesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GreenSynthesis")
            .field("epsilon", &self.epsilon)
            .field("delta_hat", &self.delta_hat)
            .field("regime", &self.regime)
            .field("reduction", &self.reduction)
            .field("orbits", &self.orbits.len())
            .finish()
    }
}

impl GreenSynthesis {
    pub fn new(field: &ModeField, ops: &CollisionOperators, gap: &GapEstimate) -> Result<Self> {
        Self::with_delta(field, ops, gap, None)
    }

    /// As [`GreenSynthesis::new`] with an optional replacement for `δ̂`.
    pub fn with_delta(field: &ModeField, ops: &CollisionOperators, gap: &GapEstimate, delta_override: Option<f64>) -> Result<Self> {
        if field.grid.dof() != ops.dof() {
            return Err(Error::LengthMismatch { expected: ops.dof(), got: field.grid.dof() });
        }
        let delta = delta_override.unwrap_or(gap.delta_hat);
        if !(delta > 0.0) {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
        }
        let (reduction, orbits) = field.orbits();
        let eps = field.epsilon;
        let tau = gap.tau_hat;
        let modes = orbits
            .par_iter()
            .map(|orb| {
                let k = orb.rep;
                let kappa = kappa_of(eps, k);
                let kind = if k == [0, 0, 0] {
                    ModeKind::Mean
                } else if kappa < delta {
                    ModeKind::Long
                } else {
                    ModeKind::Short
                };
                let a = mode_operator_unchecked(ops, k, eps, Generator::FullL);
                let es = eig_biorthogonal(&a.matrix)?;
                let data = field.coefficients[&k].clone();
                let coords = es.coordinates(&data);
                let fluid = if kind == ModeKind::Long {
                    let order = es.order_by_real_desc();
                    let lo = es.eigenvalues[order[4]].re;
                    let next = es.eigenvalues[order[5]].re;
                    if !(lo > next && lo > -tau) {
                        return Err(Error::Domain(format!(
                            "fluid eigenvalues not isolated at k = {k:?} (kappa = {kappa:.3}): fifth Re = {lo:.4}, sixth Re = {next:.4}"
                        )));
                    }
                    if es.biorth_residual > 1e-6 {
                        return Err(Error::Linalg(format!("near-defective eigenbasis at k = {k:?}")));
                    }
                    order[..5].to_vec()
                } else {
                    Vec::new()
                };
                let mut modal = es.right_vectors;
                for (mut col, c) in modal.columns_mut().into_iter().zip(coords.iter()) {
                    col.mapv_inplace(|z| z * c);
                }
                Ok(RepMode { k, kappa, multiplicity: orb.members.len(), kind, eigenvalues: es.eigenvalues, modal, data, fluid })
            })
            .collect::<Result<Vec<_>>>()?;
        debug!("green synthesis: {} modes in {} orbits ({reduction:?})", field.coefficients.len(), orbits.len());
        let regime = classify_regime(eps, &GapEstimate { delta_hat: delta, ..gap.clone() });
        Ok(Self {
            epsilon: eps,
            delta_hat: delta,
            tau_hat: tau,
            regime,
            reduction,
            orbits,
            grid: field.grid.clone(),
            invariants: collision_invariants(&field.grid),
            modes,
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn rep_mode(&self, r: usize) -> (ModeIndex, f64, ModeKind) {
        let m = &self.modes[r];
        (m.k, m.kappa, m.kind)
    }

    /// Buckets of the representative `r` at time `t`.
    pub fn buckets(&self, r: usize, t: f64) -> Result<ModeBuckets> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("time must be non-negative, got {t}")));
        }
        let m = &self.modes[r];
        let total = m.evolve(t, |_| true);
        let zero = Array1::<C64>::zeros(total.len());
        Ok(match m.kind {
            ModeKind::Short => ModeBuckets { short: total.clone(), long_perp: zero.clone(), fluid: zero, total },
            ModeKind::Long => {
                let fluid = m.evolve(t, |i| m.fluid.contains(&i));
                let long_perp = m.evolve(t, |i| !m.fluid.contains(&i));
                ModeBuckets { short: zero, long_perp, fluid, total }
            }
            ModeKind::Mean => {
                // L annihilates the invariants, so their span is carried unchanged
                let w = self.grid.cell_volume();
                let mut fluid = zero.clone();
                for i in 0..5 {
                    let col = self.invariants.column(i);
                    let p: C64 = col.iter().zip(m.data.iter()).map(|(a, b)| b * *a).sum::<C64>() * w;
                    fluid.zip_mut_with(&col, |x, &a| *x += p * a);
                }
                let long_perp = &total - &fluid;
                ModeBuckets { short: zero, long_perp, fluid, total }
            }
        })
    }

    /// Snapshot at `t`. `kinetic`, when given, holds `Σ_j h^(j)` per
    /// representative at the same time.
    pub fn snapshot(&self, t: f64, kinetic: Option<&[Array1<C64>]>) -> Result<DecompositionSnapshot> {
        if let Some(kv) = kinetic {
            if kv.len() != self.modes.len() {
                return Err(Error::LengthMismatch { expected: self.modes.len(), got: kv.len() });
            }
        }
        let mut norms = [BucketNorms::default(); 2];
        if kinetic.is_some() {
            for n in &mut norms {
                n.kinetic = Some(0.0);
                n.remainder = Some(0.0);
            }
        }
        for (r, m) in self.modes.iter().enumerate() {
            let b = self.buckets(r, t)?;
            let sq = |v: &Array1<C64>| self.grid.dof_norm(v.view()).powi(2) * m.multiplicity as f64;
            let parts = [sq(&b.total), sq(&b.short), sq(&b.long_perp), sq(&b.fluid)];
            let extra = kinetic.map(|kv| {
                let rem = &(&b.total - &kv[r]) - &b.fluid;
                (sq(&kv[r]), sq(&rem))
            });
            for (n, &s) in norms.iter_mut().zip(&SNAPSHOT_ORDERS) {
                let w = (1.0 + m.kappa * m.kappa).powi(s as i32);
                n.total += w * parts[0];
                n.short += w * parts[1];
                n.long_perp += w * parts[2];
                n.fluid += w * parts[3];
                if let Some((kn, rn)) = extra {
                    *n.kinetic.as_mut().unwrap() += w * kn;
                    *n.remainder.as_mut().unwrap() += w * rn;
                }
            }
        }
        for n in &mut norms {
            n.total = n.total.sqrt();
            n.short = n.short.sqrt();
            n.long_perp = n.long_perp.sqrt();
            n.fluid = n.fluid.sqrt();
            n.kinetic = n.kinetic.map(f64::sqrt);
            n.remainder = n.remainder.map(f64::sqrt);
        }
        Ok(DecompositionSnapshot { t, regime: self.regime, norms })
    }

    /// `‖G_F^t I(x = 0, ·)‖_{L²_ξ} = ‖Σ_k F_k(t)‖`.
    pub fn fluid_at_origin(&self, t: f64) -> Result<f64> {
        let mut acc = Array1::<C64>::zeros(self.grid.dof());
        for (r, orb) in self.orbits.iter().enumerate() {
            if self.modes[r].kind == ModeKind::Short {
                continue;
            }
            let f = self.buckets(r, t)?.fluid;
            for (_, map) in &orb.members {
                acc += &map.apply(&f);
            }
        }
        Ok(self.grid.dof_norm(acc.view()))
    }

    /// `Σ_k ‖F_k(t)‖`, which bounds `sup_x ‖G_F^t I(x, ·)‖_{L²_ξ}`.
    pub fn fluid_majorant(&self, t: f64) -> Result<f64> {
        let mut acc = 0.0;
        for (r, m) in self.modes.iter().enumerate() {
            if m.kind != ModeKind::Short {
                acc += m.multiplicity as f64 * self.grid.dof_norm(self.buckets(r, t)?.fluid.view());
            }
        }
        Ok(acc)
    }

    /// `‖short + long⊥ + fluid − total‖ / ‖total‖` over representatives.
    pub fn bucket_defect(&self, t: f64) -> Result<f64> {
        let mut worst = 0.0f64;
        for r in 0..self.modes.len() {
            let b = self.buckets(r, t)?;
            let sum = &(&b.short + &b.long_perp) + &b.fluid;
            let nrm = self.grid.dof_norm(b.total.view());
            if nrm > 0.0 {
                worst = worst.max(self.grid.dof_norm((&sum - &b.total).view()) / nrm);
            }
        }
        Ok(worst)
    }
}

/// One-shot snapshot without the kinetic chain.
pub fn synthesize_green(field: &ModeField, ops: &CollisionOperators, gap: &GapEstimate, t: f64) -> Result<DecompositionSnapshot> {
    GreenSynthesis::new(field, ops, gap)?.snapshot(t, None)
}

/// `(βε)³ Σ_{κ_k < δ} e^{−κ_k² t}` over the whole lattice, the Riemann sum of
/// `∫ e^{−|y|² t} dy = π^{3/2} t^{−3/2}`.
pub fn gaussian_mode_sum(epsilon: f64, delta: f64, t: f64) -> f64 {
    let step = BETA * epsilon;
    let kmax = (delta / step).ceil() as i64;
    let mut acc = 0.0;
    for i in -kmax..=kmax {
        for j in -kmax..=kmax {
            for l in -kmax..=kmax {
                let kap2 = step * step * (i * i + j * j + l * l) as f64;
                if kap2 < delta * delta {
                    acc += (-kap2 * t).exp();
                }
            }
        }
    }
    acc * step.powi(3)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluidEnvelope {
    pub times: Vec<f64>,
    pub mode_sum: Vec<f64>,
    /// `π^{3/2} t^{−3/2}` (infinite at `t = 0`).
    pub gaussian_integral: Vec<f64>,
    /// Fluid part at `x = 0`.
    pub fluid_origin: Vec<f64>,
    /// `Σ_k ‖F_k‖`, the bound on the fluid part uniformly in `x`.
    pub fluid_majorant: Vec<f64>,
    /// Fluid part in `L²_x L²_ξ`.
    pub fluid_l2: Vec<f64>,
}

impl FluidEnvelope {
    /// Largest `|sum / integral − 1|` over samples with `t ∈ [lo, hi]`.
    pub fn mode_sum_deviation(&self, lo: f64, hi: f64) -> f64 {
        self.times
            .iter()
            .zip(self.mode_sum.iter().zip(&self.gaussian_integral))
            .filter(|(t, _)| **t >= lo && **t <= hi)
            .map(|(_, (s, g))| (s / g - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

pub fn fluid_mode_sum_envelope(field: &ModeField, ops: &CollisionOperators, gap: &GapEstimate, times: &[f64]) -> Result<FluidEnvelope> {
    if !(BETA * field.epsilon < gap.delta_hat) {
        return Err(Error::Domain(format!("epsilon {} leaves no long waves below delta_hat {}", field.epsilon, gap.delta_hat)));
    }
    GreenSynthesis::new(field, ops, gap)?.fluid_envelope(times)
}

impl GreenSynthesis {
    pub fn fluid_envelope(&self, times: &[f64]) -> Result<FluidEnvelope> {
        let mut env = FluidEnvelope {
            times: times.to_vec(),
            mode_sum: Vec::with_capacity(times.len()),
            gaussian_integral: Vec::with_capacity(times.len()),
            fluid_origin: Vec::with_capacity(times.len()),
            fluid_majorant: Vec::with_capacity(times.len()),
            fluid_l2: Vec::with_capacity(times.len()),
        };
        for &t in times {
            env.mode_sum.push(gaussian_mode_sum(self.epsilon, self.delta_hat, t));
            env.gaussian_integral.push(if t > 0.0 { PI.powf(1.5) * t.powf(-1.5) } else { f64::INFINITY });
            env.fluid_origin.push(self.fluid_at_origin(t)?);
            env.fluid_majorant.push(self.fluid_majorant(t)?);
            env.fluid_l2.push(self.snapshot(t, None)?.norms[0].fluid);
        }
        Ok(env)
    }
}

/// Snapshot CSV: `t,s,total,short,long_perp,fluid,kinetic,remainder,regime`.
pub fn write_snapshots_csv<W: std::io::Write>(snaps: &[DecompositionSnapshot], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,s,total,short,long_perp,fluid,kinetic,remainder,regime")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
    for snap in snaps {
        for (n, s) in snap.norms.iter().zip(SNAPSHOT_ORDERS) {
            writeln!(
                w,
                "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{}",
                snap.t,
                s,
                n.total,
                n.short,
                n.long_perp,
                n.fluid,
                opt(n.kinetic),
                opt(n.remainder),
                snap.regime
            )?;
        }
    }
    Ok(())
}
