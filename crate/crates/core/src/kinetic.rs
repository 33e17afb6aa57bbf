//! Picard chain, mixture operators and the `D_t = t∇x + ∇ξ` commutator, all
//! per Fourier mode.
//!
//! With `T_k` the transport diagonal `−iβε(ξ·k)`, the chain is
//!
//! ```text
//! h⁻¹' = (T_k + Λ + K_s) h⁻¹,          h⁻¹(0) = Î_k
//! h⁰'  = (T_k + Λ) h⁰ + K_r h⁻¹,       h⁰(0) = 0
//! hʲ'  = (T_k + Λ) hʲ + K hʲ⁻¹,        hʲ(0) = 0
//! ```
//!
//! and `R = f − Σ hʲ` solves `R' = (T_k + L) R + K h^{j_max}`, `R(0) = 0`.

use std::sync::Arc;

use log::debug;
use ndarray::{s, Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::CollisionOperators;
use crate::error::{Error, Result};
use crate::fit::{fit_decay_envelope, DecayFit, DecayModel};
use crate::green::{ModeField, ModeMap, ModeOrbit, VelocityProfile};
use crate::grid::VelocityGrid;
use crate::linalg::{complexify, eig_biorthogonal, EigenSystem, C64};
use crate::mode::{kappa_of, mode_operator_unchecked, transport_symbol, Generator, ModeIndex};
use crate::ode::{integrate, BlockLowerFlow, OdeOptions};

/// `T_k + G` for a real generator `G`.
fn shifted(ops: &CollisionOperators, k: ModeIndex, eps: f64, g: &Array2<f64>) -> Array2<C64> {
    let sym = transport_symbol(ops, k, eps);
    let mut m = complexify(g);
    for (i, s) in sym.iter().enumerate() {
        m[[i, i]] += C64::new(0.0, -s);
    }
    m
}

#[derive(Debug, Clone, Copy)]
pub struct ChainOptions {
    pub ode: OdeOptions,
    /// Keep every `hʲ` state (memory: blocks × times × dof per mode).
    pub keep_states: bool,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self { ode: OdeOptions::default(), keep_states: false }
    }
}

/// Chain results for one orbit representative.
#[derive(Debug, Clone)]
pub struct ChainMode {
    pub k: ModeIndex,
    pub kappa: f64,
    pub multiplicity: usize,
    /// `Σ_j hʲ(t)` at every output time.
    pub kinetic_sum: Vec<Array1<C64>>,
    /// `h^{j_max}(t)`.
    pub top: Vec<Array1<C64>>,
    /// `‖hʲ‖²` as `block_sq[j + 1][time]`.
    pub block_sq: Vec<Vec<f64>>,
    /// `states[j + 1][time]`, if kept.
    pub states: Option<Vec<Vec<Array1<C64>>>>,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct PicardChain {
    pub j_max: usize,
    pub epsilon: f64,
    pub times: Vec<f64>,
    /// `norms[j + 1][time]`: `‖hʲ‖_{L²_x L²_ξ}`.
    pub norms: Vec<Vec<f64>>,
    /// `‖∂²_x h^{j_max}‖` with `∂_x ↦ iβεk`.
    pub top_dx2: Vec<f64>,
    pub initial_norm: f64,
    pub orbits: Vec<ModeOrbit>,
    pub modes: Vec<ChainMode>,
}

/// Block flow of the chain (plus an optional trailing remainder block).
fn chain_flow(ops: &CollisionOperators, k: ModeIndex, eps: f64, j_max: usize, with_remainder: bool) -> Result<BlockLowerFlow> {
    let head = Arc::new(shifted(ops, k, eps, &(&ops.lambda_mod + &ops.k_singular)));
    let damped = Arc::new(shifted(ops, k, eps, &ops.lambda_mod));
    let kr = Arc::new(complexify(&ops.k_regular));
    let kk = Arc::new(complexify(&ops.k_mod));
    let mut diag = vec![head];
    let mut sub = vec![(1, 0, kr)];
    for b in 1..=j_max + 1 {
        diag.push(damped.clone());
        if b >= 2 {
            sub.push((b, b - 1, kk.clone()));
        }
    }
    if with_remainder {
        let last = diag.len();
        diag.push(Arc::new(shifted(ops, k, eps, &ops.l_full)));
        sub.push((last, last - 1, kk));
    }
    BlockLowerFlow::new(ops.dof(), diag, sub)
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.first() != Some(&0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("times must start at 0 and increase strictly".into()));
    }
    Ok(())
}

pub fn picard_chain(field: &ModeField, ops: &CollisionOperators, j_max: usize, times: &[f64], opts: &ChainOptions) -> Result<PicardChain> {
    check_times(times)?;
    if field.grid.dof() != ops.dof() {
        return Err(Error::LengthMismatch { expected: ops.dof(), got: field.grid.dof() });
    }
    let (_, orbits) = field.orbits();
    let eps = field.epsilon;
    let dof = ops.dof();
    let modes = orbits
        .par_iter()
        .map(|orb| {
            let k = orb.rep;
            let flow = chain_flow(ops, k, eps, j_max, false)?;
            let mut y0 = Array1::<C64>::zeros(dof * (j_max + 2));
            y0.slice_mut(s![..dof]).assign(&field.coefficients[&k]);
            let sol = integrate(&flow, &y0, times, &opts.ode)?;
            debug!("chain k = {k:?}: {} steps, {} rejected", sol.accepted, sol.rejected);
            let block = |y: &Array1<C64>, b: usize| y.slice(s![b * dof..(b + 1) * dof]).to_owned();
            let kinetic_sum = sol
                .states
                .iter()
                .map(|y| (0..j_max + 2).fold(Array1::<C64>::zeros(dof), |acc, b| acc + block(y, b)))
                .collect();
            let top = sol.states.iter().map(|y| block(y, j_max + 1)).collect();
            let block_sq = (0..j_max + 2)
                .map(|b| sol.states.iter().map(|y| field.grid.dof_norm(y.slice(s![b * dof..(b + 1) * dof])).powi(2)).collect())
                .collect();
            let states = opts.keep_states.then(|| (0..j_max + 2).map(|b| sol.states.iter().map(|y| block(y, b)).collect()).collect());
            Ok(ChainMode { k, kappa: kappa_of(eps, k), multiplicity: orb.members.len(), kinetic_sum, top, block_sq, states, steps: sol.accepted })
        })
        .collect::<Result<Vec<_>>>()?;
    let nt = times.len();
    let mut sq = vec![vec![0.0; nt]; j_max + 2];
    let mut top = vec![0.0; nt];
    for m in &modes {
        let w = m.multiplicity as f64;
        for (ti, v) in m.top.iter().enumerate() {
            top[ti] += w * m.kappa.powi(4) * field.grid.dof_norm(v.view()).powi(2);
        }
        for (b, series) in m.block_sq.iter().enumerate() {
            for (ti, v) in series.iter().enumerate() {
                sq[b][ti] += w * v;
            }
        }
    }
    Ok(PicardChain {
        j_max,
        epsilon: eps,
        times: times.to_vec(),
        norms: sq.into_iter().map(|b| b.into_iter().map(f64::sqrt).collect()).collect(),
        top_dx2: top.into_iter().map(f64::sqrt).collect(),
        initial_norm: field.parseval_norm(0),
        orbits,
        modes,
    })
}

impl PicardChain {
    /// `Σ_j hʲ` per representative at output index `ti`, in orbit order.
    pub fn kinetic_at(&self, ti: usize) -> Vec<Array1<C64>> {
        self.modes.iter().map(|m| m.kinetic_sum[ti].clone()).collect()
    }

    /// Envelope fit of `‖hʲ‖` with `C t^p e^{−rt}` over `window`.
    pub fn fit_order(&self, j: i64, window: (f64, f64)) -> Result<DecayFit> {
        let b = usize::try_from(j + 1).ok().filter(|&b| b < self.norms.len()).ok_or_else(|| Error::InvalidArgument(format!("no chain member j = {j}")))?;
        fit_decay_envelope(&self.times, &self.norms[b], DecayModel::PowerExp, window)
    }

    /// Per-j CSV: `t,j,norm,fitted_order,fitted_rate`.
    pub fn write_csv<W: std::io::Write>(&self, fits: &[Option<DecayFit>], mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,j,norm,fitted_order,fitted_rate")?;
        for (b, series) in self.norms.iter().enumerate() {
            let (p, r) = match fits.get(b).and_then(|f| f.as_ref()) {
                Some(f) => (format!("{:.6}", f.poly_order), format!("{:.6}", f.rate)),
                None => (String::new(), String::new()),
            };
            for (t, v) in self.times.iter().zip(series) {
                writeln!(w, "{},{},{:.12e},{},{}", t, b as i64 - 1, v, p, r)?;
            }
        }
        Ok(())
    }
}

/// All chain members of a single mode: `out[j + 1][time]`.
pub fn chain_states(
    ops: &CollisionOperators,
    k: ModeIndex,
    epsilon: f64,
    f0: &Array1<C64>,
    j_max: usize,
    times: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<Vec<Array1<C64>>>> {
    check_times(times)?;
    let dof = ops.dof();
    if f0.len() != dof {
        return Err(Error::LengthMismatch { expected: dof, got: f0.len() });
    }
    let flow = chain_flow(ops, k, epsilon, j_max, false)?;
    let mut y0 = Array1::<C64>::zeros(dof * (j_max + 2));
    y0.slice_mut(s![..dof]).assign(f0);
    let sol = integrate(&flow, &y0, times, opts)?;
    Ok((0..j_max + 2).map(|b| sol.states.iter().map(|y| y.slice(s![b * dof..(b + 1) * dof]).to_owned()).collect()).collect())
}

/// `R(t)` of one mode two ways: as `f − Σ hʲ` and by integrating its own
/// equation alongside the chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemainderCheck {
    pub k: ModeIndex,
    pub times: Vec<f64>,
    /// `‖R(0)‖` from the difference.
    pub initial: f64,
    /// `max_t ‖R_diff − R_ode‖ / max_t ‖R_diff‖`.
    pub relative_gap: f64,
    pub remainder_norms: Vec<f64>,
}

pub fn remainder_check(
    ops: &CollisionOperators,
    k: ModeIndex,
    epsilon: f64,
    f0: &Array1<C64>,
    j_max: usize,
    times: &[f64],
    opts: &OdeOptions,
) -> Result<RemainderCheck> {
    check_times(times)?;
    let dof = ops.dof();
    let flow = chain_flow(ops, k, epsilon, j_max, true)?;
    let mut y0 = Array1::<C64>::zeros(dof * (j_max + 3));
    y0.slice_mut(s![..dof]).assign(f0);
    let sol = integrate(&flow, &y0, times, opts)?;
    let a = mode_operator_unchecked(ops, k, epsilon, Generator::FullL);
    let es = eig_biorthogonal(&a.matrix)?;
    let c = es.coordinates(f0);
    let grid = &ops.grid;
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    let mut norms = Vec::with_capacity(times.len());
    let mut initial = 0.0;
    for (ti, (&t, y)) in times.iter().zip(&sol.states).enumerate() {
        let full = es.exp_apply(t, &c);
        let sum = (0..j_max + 2).fold(Array1::<C64>::zeros(dof), |acc, b| acc + y.slice(s![b * dof..(b + 1) * dof]));
        let r_diff = &full - &sum;
        let r_ode = y.slice(s![(j_max + 2) * dof..]).to_owned();
        let nd = grid.dof_norm(r_diff.view());
        if ti == 0 {
            initial = nd;
        }
        norms.push(nd);
        scale = scale.max(nd);
        worst = worst.max(grid.dof_norm((&r_diff - &r_ode).view()));
    }
    Ok(RemainderCheck { k, times: times.to_vec(), initial, relative_gap: worst / scale.max(f64::MIN_POSITIVE), remainder_norms: norms })
}

/// `M_j^t f0` through the augmented chain `u₀' = A_S u₀`,
/// `u_m' = A_S u_m + K u_{m−1}`, returning `u_{2j}(t)`.
pub fn mixture_apply(
    f0: &Array1<C64>,
    j: usize,
    ops: &CollisionOperators,
    k: ModeIndex,
    epsilon: f64,
    times: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<Array1<C64>>> {
    if !(j == 1 || j == 2) {
        return Err(Error::InvalidArgument(format!("mixture order must be 1 or 2, got {j}")));
    }
    check_times(times)?;
    let dof = ops.dof();
    if f0.len() != dof {
        return Err(Error::LengthMismatch { expected: dof, got: f0.len() });
    }
    let damped = Arc::new(shifted(ops, k, epsilon, &ops.lambda_mod));
    let kk = Arc::new(complexify(&ops.k_mod));
    let blocks = 2 * j + 1;
    let diag = vec![damped; blocks];
    let sub = (1..blocks).map(|m| (m, m - 1, kk.clone())).collect();
    let flow = BlockLowerFlow::new(dof, diag, sub)?;
    let mut y0 = Array1::<C64>::zeros(dof * blocks);
    y0.slice_mut(s![..dof]).assign(f0);
    let sol = integrate(&flow, &y0, times, opts)?;
    Ok(sol.states.iter().map(|y| y.slice(s![(blocks - 1) * dof..]).to_owned()).collect())
}

/// Composite Simpson weights on `[0, t]` with `n` (even) intervals.
fn simpson(t: f64, n: usize) -> Vec<(f64, f64)> {
    let h = t / n as f64;
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            (i as f64 * h, w * h / 3.0)
        })
        .collect()
}

/// `∫₀ᵗ S^{t−s} K_r O^s f0 ds` by composite Simpson with eigen-propagated
/// factors; an independent check on the chain's `h⁰`.
pub fn duhamel_quadrature(ops: &CollisionOperators, k: ModeIndex, epsilon: f64, f0: &Array1<C64>, t: f64, intervals: usize) -> Result<Array1<C64>> {
    let s_op = mode_operator_unchecked(ops, k, epsilon, Generator::LambdaOnly);
    let o_op = mode_operator_unchecked(ops, k, epsilon, Generator::LambdaPlusKs);
    let es_s = eig_biorthogonal(&s_op.matrix)?;
    let es_o = eig_biorthogonal(&o_op.matrix)?;
    let kr = complexify(&ops.k_regular);
    let co = es_o.coordinates(f0);
    let mut acc = Array1::<C64>::zeros(f0.len());
    for (s, w) in simpson(t, intervals.max(2) & !1) {
        let inner = kr.dot(&es_o.exp_apply(s, &co));
        acc.scaled_add(C64::new(w, 0.0), &es_s.exp_apply(t - s, &es_s.coordinates(&inner)));
    }
    Ok(acc)
}

/// `M_1^t f0` by nested Simpson over the simplex `0 ≤ s₂ ≤ s₁ ≤ t`, worked in
/// the eigen-coordinates of `A_S`.
pub fn mixture1_quadrature(ops: &CollisionOperators, k: ModeIndex, epsilon: f64, f0: &Array1<C64>, t: f64, intervals: usize) -> Result<Array1<C64>> {
    let s_op = mode_operator_unchecked(ops, k, epsilon, Generator::LambdaOnly);
    let es = eig_biorthogonal(&s_op.matrix)?;
    // K in eigen-coordinates: Lᴴ K R
    let w = es.left_vectors.t().mapv(|z| z.conj()).dot(&complexify(&ops.k_mod)).dot(&es.right_vectors);
    let c0 = es.coordinates(f0);
    let lam = &es.eigenvalues;
    let decay = |v: &Array1<C64>, dt: f64| -> Array1<C64> { v.iter().zip(lam.iter()).map(|(c, l)| c * (l * dt).exp()).collect() };
    let n = intervals.max(2) & !1;
    let mut outer = Array1::<C64>::zeros(c0.len());
    for (s1, w1) in simpson(t, n) {
        let mut inner = Array1::<C64>::zeros(c0.len());
        if s1 > 0.0 {
            for (s2, w2) in simpson(s1, n) {
                inner.scaled_add(C64::new(w2, 0.0), &decay(&w.dot(&decay(&c0, s2)), s1 - s2));
            }
        }
        outer.scaled_add(C64::new(w1, 0.0), &decay(&w.dot(&inner), t - s1));
    }
    Ok(es.right_vectors.dot(&outer))
}

/// Centered differences inside, second-order one-sided closures on the
/// outermost unknowns of each axis.
pub fn gradient_one_sided(grid: &VelocityGrid, f: &Array1<C64>) -> [Array1<C64>; 3] {
    let m = grid.n() - 2;
    let h = grid.h;
    let at = |i: usize, j: usize, k: usize| (i * m + j) * m + k;
    let mut out = [Array1::zeros(f.len()), Array1::zeros(f.len()), Array1::zeros(f.len())];
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let idx = [i, j, k];
                for (d, g) in out.iter_mut().enumerate() {
                    let node = |off: isize| {
                        let mut p = idx;
                        p[d] = (p[d] as isize + off) as usize;
                        f[at(p[0], p[1], p[2])]
                    };
                    let c = idx[d];
                    g[at(i, j, k)] = if c == 0 {
                        (node(0) * -3.0 + node(1) * 4.0 - node(2)) / (2.0 * h)
                    } else if c == m - 1 {
                        (node(0) * 3.0 - node(-1) * 4.0 + node(-2)) / (2.0 * h)
                    } else {
                        (node(1) - node(-1)) / (2.0 * h)
                    };
                }
            }
        }
    }
    out
}

fn vec3_norm(grid: &VelocityGrid, v: &[Array1<C64>; 3]) -> f64 {
    v.iter().map(|c| grid.dof_norm(c.view()).powi(2)).sum::<f64>().sqrt()
}

/// `‖D_t(T^t f0) − T^t(∇ξ f0)‖` for free transport `T^t = e^{−iβε(ξ·k)t}`.
pub fn transport_commutator_residual(grid: &VelocityGrid, profile: &VelocityProfile, k: ModeIndex, epsilon: f64, t: f64) -> Result<f64> {
    let f0 = profile.evaluate(grid)?.mapv(|v| C64::new(v, 0.0));
    let phase: Array1<C64> = grid
        .dof_points()
        .iter()
        .map(|p| {
            let s = crate::mode::BETA * epsilon * (p[0] * k[0] as f64 + p[1] * k[1] as f64 + p[2] * k[2] as f64);
            C64::from_polar(1.0, -s * t)
        })
        .collect();
    let ft = &f0 * &phase;
    let mut lhs = gradient_one_sided(grid, &ft);
    let g0 = gradient_one_sided(grid, &f0);
    for d in 0..3 {
        let dx = C64::new(0.0, crate::mode::BETA * epsilon * k[d] as f64 * t);
        lhs[d].scaled_add(dx, &ft);
        lhs[d] -= &(&g0[d] * &phase);
    }
    Ok(vec3_norm(grid, &lhs))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommutatorReport {
    pub t_values: Vec<f64>,
    pub h_coarse: f64,
    pub h_fine: f64,
    pub residual_coarse: Vec<f64>,
    pub residual_fine: Vec<f64>,
    /// `log(r_coarse / r_fine) / log(h_coarse / h_fine)` at each `t > 0`.
    pub slopes: Vec<f64>,
}

pub fn dt_commutator_check(
    profile: &VelocityProfile,
    coarse: &VelocityGrid,
    fine: &VelocityGrid,
    k: ModeIndex,
    epsilon: f64,
    t_values: &[f64],
) -> Result<CommutatorReport> {
    if !(fine.h < coarse.h) {
        return Err(Error::InvalidArgument("the fine grid must have the smaller spacing".into()));
    }
    let rc = t_values.iter().map(|&t| transport_commutator_residual(coarse, profile, k, epsilon, t)).collect::<Result<Vec<_>>>()?;
    let rf = t_values.iter().map(|&t| transport_commutator_residual(fine, profile, k, epsilon, t)).collect::<Result<Vec<_>>>()?;
    let slopes = t_values
        .iter()
        .zip(rc.iter().zip(&rf))
        .filter(|(t, _)| **t > 0.0)
        .map(|(_, (a, b))| (a / b).ln() / (coarse.h / fine.h).ln())
        .collect();
    Ok(CommutatorReport { t_values: t_values.to_vec(), h_coarse: coarse.h, h_fine: fine.h, residual_coarse: rc, residual_fine: rf, slopes })
}

/// `‖D_t S^t f0 − S^t ∇ξ f0‖ / ‖f0‖` with the damped semigroup `S^t`.
pub fn damped_commutator_series(ops: &CollisionOperators, profile: &VelocityProfile, k: ModeIndex, epsilon: f64, times: &[f64]) -> Result<Vec<f64>> {
    let grid = &ops.grid;
    let f0 = profile.evaluate(grid)?.mapv(|v| C64::new(v, 0.0));
    let a = mode_operator_unchecked(ops, k, epsilon, Generator::LambdaOnly);
    let es: EigenSystem = eig_biorthogonal(&a.matrix)?;
    let g0 = gradient_one_sided(grid, &f0);
    let c0 = es.coordinates(&f0);
    let cg: Vec<Array1<C64>> = g0.iter().map(|g| es.coordinates(g)).collect();
    let n0 = grid.dof_norm(f0.view());
    times
        .iter()
        .map(|&t| {
            let st = es.exp_apply(t, &c0);
            let mut lhs = gradient_one_sided(grid, &st);
            for d in 0..3 {
                lhs[d].scaled_add(C64::new(0.0, crate::mode::BETA * epsilon * k[d] as f64 * t), &st);
                lhs[d] -= &es.exp_apply(t, &cg[d]);
            }
            Ok(vec3_norm(grid, &lhs) / n0)
        })
        .collect()
}

/// Maps a per-representative vector to every member of its orbit.
pub fn expand_orbit(orbit: &ModeOrbit, v: &Array1<C64>) -> Vec<(ModeIndex, Array1<C64>)> {
    orbit.members.iter().map(|(k, map): &(ModeIndex, ModeMap)| (*k, map.apply(v))).collect()
}
