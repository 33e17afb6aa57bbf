//! Spectral gap, fluid branch tracking, dispersion fits and the Euler oracle.

use log::{debug, info};
use ndarray::{Array2, Axis};
use ndarray_linalg::{Eig, EigValsh, Eigh, UPLO};
use serde::{Deserialize, Serialize};

use crate::collision::CollisionOperators;
use crate::error::{Error, Result};
use crate::linalg::{complexify, max_abs, ComplexLu, EigenSystem, C64};
use crate::mode::{mode_operator_along, Generator, ModeOperator};

/// Eigenvalues of the first-order transport matrix on the continuum
/// invariants, from exact Gaussian moments. Sorted ascending.
pub fn euler_moment_oracle(khat: [f64; 3]) -> Result<[f64; 5]> {
    let norm = (khat[0] * khat[0] + khat[1] * khat[1] + khat[2] * khat[2]).sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("khat must be a unit vector, |khat| = {norm}")));
    }
    // monomial exponents of {1, ξ1, ξ2, ξ3, |ξ|²} as sums of (a1, a2, a3) terms
    let basis: [Vec<[u32; 3]>; 5] = [
        vec![[0, 0, 0]],
        vec![[1, 0, 0]],
        vec![[0, 1, 0]],
        vec![[0, 0, 1]],
        vec![[2, 0, 0], [0, 2, 0], [0, 0, 2]],
    ];
    // E[ξ^a] for a standard Gaussian: product of (a_i − 1)!! for even a_i
    let moment = |a: [u32; 3]| -> f64 {
        a.iter()
            .map(|&p| if p % 2 == 1 { 0.0 } else { (1..p).step_by(2).map(|q| q as f64).product::<f64>() })
            .product()
    };
    let add = |x: [u32; 3], y: [u32; 3]| [x[0] + y[0], x[1] + y[1], x[2] + y[2]];
    let mut gram = Array2::<f64>::zeros((5, 5));
    let mut tmat = Array2::<f64>::zeros((5, 5));
    for i in 0..5 {
        for j in 0..5 {
            for &p in &basis[i] {
                for &q in &basis[j] {
                    let pq = add(p, q);
                    gram[[i, j]] += moment(pq);
                    for d in 0..3 {
                        let mut e = [0; 3];
                        e[d] = 1;
                        tmat[[i, j]] += khat[d] * moment(add(pq, e));
                    }
                }
            }
        }
    }
    // generalized symmetric problem via Cholesky of the Gram matrix
    let (ev, _) = (tmat, gram).eigh(UPLO::Lower).map_err(|e| Error::Linalg(e.to_string()))?;
    let mut out = [0.0; 5];
    for i in 0..5 {
        out[i] = ev[i];
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// `T_ij = ⟨v_i, (ξ·k̂) v_j⟩` on the discrete invariants.
pub fn transport_moment_matrix(ops: &CollisionOperators, khat: [f64; 3]) -> Array2<f64> {
    let v = &ops.invariants5;
    let w = ops.grid.cell_volume();
    let pts = ops.grid.dof_points();
    let mut xv = v.clone();
    for (a, p) in pts.iter().enumerate() {
        let s = p[0] * khat[0] + p[1] * khat[1] + p[2] * khat[2];
        xv.row_mut(a).mapv_inplace(|x| x * s);
    }
    v.t().dot(&xv) * w
}

/// Dense spectrum of a mode operator, cached on the operator.
pub fn full_spectrum(a: &ModeOperator) -> Result<std::sync::Arc<EigenSystem>> {
    a.eigensystem()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapEstimate {
    pub tau_hat: f64,
    pub delta_hat: f64,
    pub kappa_step: f64,
    pub kappa_max: f64,
    /// The isolation condition still held at the end of the scan, so `δ̂`
    /// is only a lower bound.
    pub saturated: bool,
    /// Per scanned κ: the largest real part among non-fluid eigenvalues.
    pub scan: Vec<(f64, f64)>,
    /// Smallest fluid real part at each scanned κ.
    pub fluid_min_re: Vec<f64>,
}

/// `τ̂ = −σ₆(L)` from the symmetric spectrum at `k = 0`.
pub fn tau_hat(ops: &CollisionOperators) -> Result<f64> {
    let ev = ops.l_full.eigvalsh(UPLO::Lower)?;
    let m = ev.len();
    if m < 6 {
        return Err(Error::InvalidArgument("operator too small for a gap".into()));
    }
    let t = -ev[m - 6];
    if !(t > 0.0) {
        return Err(Error::Convergence(format!("no spectral gap: sixth eigenvalue {}", ev[m - 6])));
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchSolver {
    /// Full dense eigendecomposition at every κ.
    Dense,
    /// Shift-invert block subspace iteration around the fluid cluster.
    Subspace,
}

#[derive(Debug, Clone)]
pub struct BranchSet {
    pub khat: [f64; 3],
    pub kappas: Vec<f64>,
    /// `sigma[[j, m]]`: branch `j` at `kappas[m]`.
    pub sigma: Array2<C64>,
    /// Right eigenvectors per κ, branches as columns.
    pub vectors: Vec<Array2<C64>>,
    /// Overlaps between consecutive κ (`overlaps[m][j]` for step m → m+1).
    pub overlaps: Vec<[f64; 5]>,
    /// Leading-order wave speeds from the discrete transport moment matrix.
    pub t_eigenvalues: [f64; 5],
}

impl BranchSet {
    pub fn min_overlap(&self) -> f64 {
        self.overlaps.iter().flat_map(|o| o.iter().copied()).fold(1.0, f64::min)
    }

    /// `‖Gram − I‖max` of the unit-normalized branch vectors at κ index m.
    pub fn gram_defect(&self, m: usize) -> f64 {
        let v = &self.vectors[m];
        let g = v.t().mapv(|z| z.conj()).dot(v);
        let mut d = 0.0f64;
        for i in 0..5 {
            for j in 0..5 {
                let t = if i == j { 1.0 } else { 0.0 };
                d = d.max((g[[i, j]] - t).norm());
            }
        }
        d
    }

    pub fn to_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "kappa,j,re_sigma,im_sigma,overlap")?;
        for (m, &k) in self.kappas.iter().enumerate() {
            for j in 0..5 {
                let ov = if m == 0 { 1.0 } else { self.overlaps[m - 1][j] };
                let s = self.sigma[[j, m]];
                writeln!(w, "{},{},{},{},{}", k, j, s.re, s.im, ov)?;
            }
        }
        Ok(())
    }
}

fn normalize_columns(v: &mut Array2<C64>) {
    for mut c in v.axis_iter_mut(Axis(1)) {
        let n = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            c.mapv_inplace(|z| z / n);
        }
    }
}

/// Orthonormal basis of the column span (modified Gram–Schmidt, two passes).
pub(crate) fn orthonormalize(v: &Array2<C64>) -> Array2<C64> {
    let mut q = v.clone();
    let k = q.ncols();
    for _ in 0..2 {
        for j in 0..k {
            for i in 0..j {
                let qi = q.column(i).to_owned();
                let proj: C64 = qi.iter().zip(q.column(j).iter()).map(|(a, b)| a.conj() * b).sum();
                q.column_mut(j).scaled_add(-proj, &qi);
            }
            let n = q.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            q.column_mut(j).mapv_inplace(|z| z / n);
        }
    }
    q
}

/// Norm of the projection of unit `u` onto the span of orthonormal `q`.
fn projection_norm(u: ndarray::ArrayView1<C64>, q: &Array2<C64>) -> f64 {
    let c = q.t().mapv(|z| z.conj()).dot(&u);
    let nu = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / nu
}

/// Candidate eigenpairs near the fluid cluster: `(values, unit right vectors)`.
#[derive(Debug, Clone)]
pub struct Candidates {
    pub values: Vec<C64>,
    pub vectors: Array2<C64>,
}

/// Group candidate indices whose eigenvalues coincide to rounding.
fn clusters(values: &[C64]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    'outer: for (i, v) in values.iter().enumerate() {
        for c in out.iter_mut() {
            let w = values[c[0]];
            if (w - v).norm() <= 1e-8 * (1.0 + w.norm()) {
                c.push(i);
                continue 'outer;
            }
        }
        out.push(vec![i]);
    }
    out
}

/// First step away from the degenerate kernel: each group of tracked vectors
/// (equal leading-order speed) claims the candidates with the largest
/// projection onto the group's span.
fn match_groups(prev: &Array2<C64>, cand: &Candidates, groups: &[Vec<usize>]) -> Result<([usize; 5], [f64; 5], Array2<C64>)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (g, members) in groups.iter().enumerate() {
        let mut span = Array2::<C64>::zeros((prev.nrows(), members.len()));
        for (c, &j) in members.iter().enumerate() {
            span.column_mut(c).assign(&prev.column(j));
        }
        let q = orthonormalize(&span);
        for i in 0..cand.values.len() {
            pairs.push((projection_norm(cand.vectors.column(i), &q), g, i));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut taken = vec![false; cand.values.len()];
    let mut owned: Vec<Vec<(usize, f64)>> = vec![Vec::new(); groups.len()];
    for (p, g, i) in pairs {
        if taken[i] || owned[g].len() == groups[g].len() {
            continue;
        }
        taken[i] = true;
        owned[g].push((i, p));
    }
    let mut idx = [0usize; 5];
    let mut ov = [0.0f64; 5];
    let mut vecs = Array2::<C64>::zeros((prev.nrows(), 5));
    for (g, members) in groups.iter().enumerate() {
        if owned[g].len() < members.len() {
            return Err(Error::Convergence("branch crossing unresolved; refine kappas".into()));
        }
        // stable order inside a group: decreasing real part, then imaginary part
        let mut o = owned[g].clone();
        o.sort_by(|a, b| {
            let (x, y) = (cand.values[a.0], cand.values[b.0]);
            y.re.total_cmp(&x.re).then(x.im.total_cmp(&y.im))
        });
        for (&j, &(i, p)) in members.iter().zip(&o) {
            idx[j] = i;
            ov[j] = p;
            vecs.column_mut(j).assign(&cand.vectors.column(i));
        }
    }
    Ok((idx, ov, vecs))
}

/// Matches tracked unit vectors (columns of `prev`) to candidates by maximal
/// overlap. Candidates with coinciding eigenvalues form one subspace; a
/// tracked vector mapped there is carried over as its projection.
fn match_branches(prev: &Array2<C64>, cand: &Candidates, groups: Option<&[Vec<usize>]>) -> Result<([usize; 5], [f64; 5], Array2<C64>)> {
    if let Some(g) = groups {
        return match_groups(prev, cand, g);
    }
    let cl = clusters(&cand.values);
    let bases: Vec<Array2<C64>> = cl
        .iter()
        .map(|c| {
            let mut m = Array2::<C64>::zeros((cand.vectors.nrows(), c.len()));
            for (j, &i) in c.iter().enumerate() {
                m.column_mut(j).assign(&cand.vectors.column(i));
            }
            orthonormalize(&m)
        })
        .collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for j in 0..5 {
        for (c, b) in bases.iter().enumerate() {
            pairs.push((projection_norm(prev.column(j), b), j, c));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut capacity: Vec<usize> = cl.iter().map(|c| c.len()).collect();
    let mut assigned: [Option<(usize, f64)>; 5] = [None; 5];
    for (p, j, c) in pairs {
        if assigned[j].is_some() || capacity[c] == 0 {
            continue;
        }
        capacity[c] -= 1;
        assigned[j] = Some((c, p));
    }
    let mut idx = [0usize; 5];
    let mut ov = [0.0f64; 5];
    let mut vecs = Array2::<C64>::zeros((prev.nrows(), 5));
    let mut used = vec![0usize; cl.len()];
    for j in 0..5 {
        let (c, p) = assigned[j].ok_or_else(|| Error::Convergence("branch crossing unresolved; refine kappas".into()))?;
        ov[j] = p;
        idx[j] = cl[c][used[c]];
        used[c] += 1;
        if cl[c].len() == 1 {
            vecs.column_mut(j).assign(&cand.vectors.column(cl[c][0]));
        } else {
            let b = &bases[c];
            let coef = b.t().mapv(|z| z.conj()).dot(&prev.column(j));
            let mut v = b.dot(&coef);
            let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            v.mapv_inplace(|z| z / n);
            vecs.column_mut(j).assign(&v);
        }
    }
    Ok((idx, ov, vecs))
}

fn dense_candidates(a: &ModeOperator) -> Result<Candidates> {
    let es = a.eigensystem()?;
    let mut v = es.right_vectors.clone();
    normalize_columns(&mut v);
    Ok(Candidates { values: es.eigenvalues.to_vec(), vectors: v })
}

/// Shift-invert block subspace iteration for the eigenvalues of `a` nearest
/// the real shift. Returns `block` Ritz pairs sorted by distance to the shift.
pub fn subspace_eigenpairs(a: &Array2<C64>, start: &Array2<C64>, shift: f64, tol: f64, max_iter: usize) -> Result<Candidates> {
    let m = a.nrows();
    let b = start.ncols();
    let mut shifted = a.clone();
    for i in 0..m {
        shifted[[i, i]] -= C64::new(shift, 0.0);
    }
    let lu = ComplexLu::new(shifted)?;
    let scale = max_abs(a.view()).max(1.0);
    let mut x = orthonormalize(start);
    let nconv = 5.min(b);
    for it in 0..max_iter {
        let mut y = Array2::<C64>::zeros((m, b));
        for j in 0..b {
            y.column_mut(j).assign(&lu.solve(&x.column(j).to_owned())?);
        }
        let q = orthonormalize(&y);
        let aq = a.dot(&q);
        let h = q.t().mapv(|z| z.conj()).dot(&aq);
        let (theta, w) = h.eig().map_err(|e| Error::Linalg(format!("Ritz eigenproblem failed: {e}")))?;
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&i, &j| (theta[i] - shift).norm().total_cmp(&(theta[j] - shift).norm()));
        let mut vecs = Array2::<C64>::zeros((m, b));
        let mut vals = Vec::with_capacity(b);
        let mut worst = 0.0f64;
        for (c, &i) in order.iter().enumerate() {
            let mut v = q.dot(&w.column(i));
            let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            v.mapv_inplace(|z| z / n);
            if c < nconv {
                let r = a.dot(&v) - v.mapv(|z| z * theta[i]);
                worst = worst.max(r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / scale);
            }
            vecs.column_mut(c).assign(&v);
            vals.push(theta[i]);
        }
        if worst < tol {
            debug!("subspace iteration converged in {} sweeps", it + 1);
            return Ok(Candidates { values: vals, vectors: vecs });
        }
        x = vecs;
    }
    Err(Error::Convergence(format!("subspace iteration did not converge in {max_iter} sweeps")))
}

fn khat_unit(khat: [f64; 3]) -> Result<[f64; 3]> {
    let n = (khat[0] * khat[0] + khat[1] * khat[1] + khat[2] * khat[2]).sqrt();
    if !(n > 0.0) {
        return Err(Error::InvalidArgument("khat must be nonzero".into()));
    }
    Ok([khat[0] / n, khat[1] / n, khat[2] / n])
}

/// Fluid labeling at κ = 0 from the transport moment matrix: unit branch
/// vectors ordered by wave speed, grouped by (numerically) equal speed.
fn kernel_labels(ops: &CollisionOperators, khat: [f64; 3]) -> Result<([f64; 5], Array2<C64>, Vec<Vec<usize>>)> {
    let t = transport_moment_matrix(ops, khat);
    let (ev, w) = t.eigh(UPLO::Lower)?;
    let basis = ops.invariants5.dot(&w);
    let mut v = complexify(&basis);
    normalize_columns(&mut v);
    let speeds = [ev[0], ev[1], ev[2], ev[3], ev[4]];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for j in 0..5 {
        match groups.iter_mut().find(|g| (speeds[g[0]] - speeds[j]).abs() < 1e-6) {
            Some(g) => g.push(j),
            None => groups.push(vec![j]),
        }
    }
    Ok((speeds, v, groups))
}

pub fn trace_branches(ops: &CollisionOperators, khat: [f64; 3], kappas: &[f64], solver: BranchSolver) -> Result<BranchSet> {
    let khat = khat_unit(khat)?;
    if kappas.first() != Some(&0.0) || kappas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("kappas must start at 0 and increase".into()));
    }
    let (speeds, v0, groups) = kernel_labels(ops, khat)?;
    let nk = kappas.len();
    let mut sigma = Array2::<C64>::zeros((5, nk));
    let mut vectors = vec![v0.clone()];
    let mut overlaps = Vec::with_capacity(nk - 1);
    let mut prev = v0;
    // subspace start: the kernel plus a few deterministic extra directions
    let mut block = {
        let m = ops.dof();
        let mut b = Array2::<C64>::zeros((m, 8));
        for j in 0..5 {
            b.column_mut(j).assign(&prev.column(j));
        }
        for j in 5..8 {
            for i in 0..m {
                b[[i, j]] = C64::new(((i * (j + 3)) as f64 * 0.7548).sin(), ((i * (j + 1)) as f64 * 0.5698).cos());
            }
        }
        b
    };
    let tau = tau_hat(ops)?;
    for (mi, &kappa) in kappas.iter().enumerate().skip(1) {
        let a = mode_operator_along(ops, khat, kappa, Generator::FullL);
        let cand = match solver {
            BranchSolver::Dense => dense_candidates(&a)?,
            BranchSolver::Subspace => {
                let c = subspace_eigenpairs(&a.matrix, &block, 0.05 * tau, 1e-11, 500)?;
                block = c.vectors.clone();
                c
            }
        };
        let g = if mi == 1 { Some(groups.as_slice()) } else { None };
        let (idx, ov, vecs) = match_branches(&prev, &cand, g)?;
        if ov.iter().any(|&o| o < 0.8) {
            return Err(Error::Convergence(format!(
                "branch crossing unresolved at kappa = {kappa} (overlaps {ov:?}); refine kappas"
            )));
        }
        for j in 0..5 {
            sigma[[j, mi]] = cand.values[idx[j]];
        }
        overlaps.push(ov);
        vectors.push(vecs.clone());
        prev = vecs;
    }
    Ok(BranchSet { khat, kappas: kappas.to_vec(), sigma, vectors, overlaps, t_eigenvalues: speeds })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchFit {
    pub a1: [f64; 5],
    pub a2: [f64; 5],
    pub a3: [f64; 5],
    pub a4: [f64; 5],
    pub fit_residual: [f64; 5],
    pub kappa_window: (f64, f64),
}

/// Least squares of `Im σ = a1 κ + a3 κ³`, `Re σ = −a2 κ² + a4 κ⁴` per branch.
pub fn fit_dispersion(b: &BranchSet, window: (f64, f64)) -> Result<BranchFit> {
    let sel: Vec<usize> = (0..b.kappas.len()).filter(|&m| b.kappas[m] >= window.0 && b.kappas[m] <= window.1 && b.kappas[m] > 0.0).collect();
    if sel.len() < 6 {
        return Err(Error::InvalidArgument(format!("fit window {window:?} holds {} points, need 6", sel.len())));
    }
    let mut fit = BranchFit { a1: [0.0; 5], a2: [0.0; 5], a3: [0.0; 5], a4: [0.0; 5], fit_residual: [0.0; 5], kappa_window: window };
    for j in 0..5 {
        let ks: Vec<f64> = sel.iter().map(|&m| b.kappas[m]).collect();
        let im: Vec<f64> = sel.iter().map(|&m| b.sigma[[j, m]].im).collect();
        let re: Vec<f64> = sel.iter().map(|&m| b.sigma[[j, m]].re).collect();
        let (c_im, r_im) = lstsq2(&ks, &im, 1, 3)?;
        let (c_re, r_re) = lstsq2(&ks, &re, 2, 4)?;
        fit.a1[j] = c_im[0];
        fit.a3[j] = c_im[1];
        fit.a2[j] = -c_re[0];
        fit.a4[j] = c_re[1];
        fit.fit_residual[j] = (r_im * r_im + r_re * r_re).sqrt();
    }
    Ok(fit)
}

/// Least squares of `y ≈ c0 x^p + c1 x^q`; returns coefficients and RMS residual.
fn lstsq2(x: &[f64], y: &[f64], p: i32, q: i32) -> Result<([f64; 2], f64)> {
    let (mut s00, mut s01, mut s11, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let f0 = xi.powi(p);
        let f1 = xi.powi(q);
        s00 += f0 * f0;
        s01 += f0 * f1;
        s11 += f1 * f1;
        b0 += f0 * yi;
        b1 += f1 * yi;
    }
    let det = s00 * s11 - s01 * s01;
    if det.abs() <= 1e-12 * s00 * s11 {
        return Err(Error::InvalidArgument("ill-conditioned dispersion fit; adjust the window".into()));
    }
    let c0 = (b0 * s11 - b1 * s01) / det;
    let c1 = (s00 * b1 - s01 * b0) / det;
    let rss: f64 = x.iter().zip(y).map(|(&xi, &yi)| (yi - c0 * xi.powi(p) - c1 * xi.powi(q)).powi(2)).sum();
    Ok(([c0, c1], (rss / x.len() as f64).sqrt()))
}

/// `P_F = Σ_j r_j l_jᴴ` over the given eigen-indices.
pub fn fluid_projector(es: &EigenSystem, idx: &[usize]) -> Result<Array2<C64>> {
    if idx.len() != 5 || idx.iter().any(|&i| i >= es.len()) {
        return Err(Error::InvalidArgument("fluid projector needs five valid indices".into()));
    }
    if es.biorth_residual > 1e-6 {
        return Err(Error::Linalg(format!("near-defective eigenbasis, biorth residual {:.2e}", es.biorth_residual)));
    }
    let m = es.right_vectors.nrows();
    let mut r = Array2::<C64>::zeros((m, 5));
    let mut l = Array2::<C64>::zeros((m, 5));
    for (c, &i) in idx.iter().enumerate() {
        r.column_mut(c).assign(&es.right_vectors.column(i));
        l.column_mut(c).assign(&es.left_vectors.column(i));
    }
    Ok(r.dot(&l.t().mapv(|z| z.conj())))
}

/// Indices of the five eigenvalues with the largest real parts.
pub fn leading_indices(es: &EigenSystem) -> [usize; 5] {
    let o = es.order_by_real_desc();
    [o[0], o[1], o[2], o[3], o[4]]
}

/// Scans κ along `khat` in steps of `step`: `δ̂` is the last κ of the initial
/// run where the five continuity-tracked fluid eigenvalues stay strictly to
/// the right of every other eigenvalue and of the line `Re = −τ̂`.
pub fn estimate_gap(ops: &CollisionOperators, khat: [f64; 3], kappa_max: f64, step: f64) -> Result<GapEstimate> {
    if !(kappa_max > 0.0 && step > 0.0) {
        return Err(Error::InvalidArgument("kappa_max and step must be positive".into()));
    }
    let tau = tau_hat(ops)?;
    let nsteps = (kappa_max / step).round() as usize;
    let kappas: Vec<f64> = (0..=nsteps).map(|i| i as f64 * step).collect();
    let khat = khat_unit(khat)?;
    let (_, v0, groups) = kernel_labels(ops, khat)?;
    let mut prev = v0;
    let mut delta = 0.0;
    let mut scan = vec![(0.0, -tau)];
    let mut fluid_min = vec![0.0];
    for (mi, &kappa) in kappas.iter().enumerate().skip(1) {
        let a = mode_operator_along(ops, khat, kappa, Generator::FullL);
        let cand = dense_candidates(&a)?;
        let g = if mi == 1 { Some(groups.as_slice()) } else { None };
        let matched = match_branches(&prev, &cand, g);
        let Ok((idx, ov, vecs)) = matched else { break };
        let fluid_re = idx.iter().map(|&i| cand.values[i].re).fold(f64::INFINITY, f64::min);
        let other_re = (0..cand.values.len()).filter(|i| !idx.contains(i)).map(|i| cand.values[i].re).fold(f64::NEG_INFINITY, f64::max);
        scan.push((kappa, other_re));
        fluid_min.push(fluid_re);
        let ok = ov.iter().all(|&o| o >= 0.8) && fluid_re > -tau && fluid_re > other_re;
        debug!("gap scan kappa={kappa:.3} fluid_min_re={fluid_re:.4} other_max_re={other_re:.4} ok={ok}");
        if !ok {
            break;
        }
        delta = kappa;
        prev = vecs;
    }
    if !(delta > 0.0) {
        return Err(Error::Convergence(format!("no isolated fluid branches found (tau_hat = {tau}); grid too coarse?")));
    }
    let saturated = (delta - kappas[nsteps]).abs() < 1e-12;
    info!("tau_hat = {tau:.4}, delta_hat = {delta:.3}{}", if saturated { " (scan limit)" } else { "" });
    Ok(GapEstimate { tau_hat: tau, delta_hat: delta, kappa_step: step, kappa_max, saturated, scan, fluid_min_re: fluid_min })
}

pub fn default_kappas() -> Vec<f64> {
    (0..=10).map(|i| 0.02 * i as f64).collect()
}

