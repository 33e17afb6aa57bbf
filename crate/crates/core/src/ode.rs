//! Adaptive L-stable SDIRK integration of linear constant-coefficient systems
//! `y' = A y`, with `A` dense or block lower triangular.

use std::sync::Arc;

use log::debug;
use ndarray::{s, Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::{shifted_identity, ComplexLu, C64};

/// A linear generator that can apply itself and solve `(I − c A) x = b`.
pub trait LinearFlow: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &Array1<C64>) -> Array1<C64>;
    fn factor(&self, c: f64) -> Result<Box<dyn ShiftedSolver + '_>>;
}

pub trait ShiftedSolver {
    fn solve(&self, b: &Array1<C64>) -> Result<Array1<C64>>;
}

pub struct DenseFlow<'a>(pub &'a Array2<C64>);

struct DenseSolver(ComplexLu);

impl ShiftedSolver for DenseSolver {
    fn solve(&self, b: &Array1<C64>) -> Result<Array1<C64>> {
        self.0.solve(b)
    }
}

impl LinearFlow for DenseFlow<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &Array1<C64>) -> Array1<C64> {
        self.0.dot(x)
    }

    fn factor(&self, c: f64) -> Result<Box<dyn ShiftedSolver + '_>> {
        Ok(Box::new(DenseSolver(ComplexLu::new(shifted_identity(self.0, c))?)))
    }
}

/// Block lower-triangular generator. Diagonal blocks that share an `Arc`
/// share one factorization.
#[derive(Clone)]
pub struct BlockLowerFlow {
    pub block: usize,
    pub diag: Vec<Arc<Array2<C64>>>,
    /// `(row, col, matrix)` with `row > col`.
    pub sub: Vec<(usize, usize, Arc<Array2<C64>>)>,
}

impl BlockLowerFlow {
    pub fn new(block: usize, diag: Vec<Arc<Array2<C64>>>, sub: Vec<(usize, usize, Arc<Array2<C64>>)>) -> Result<Self> {
        for d in &diag {
            if d.nrows() != block || d.ncols() != block {
                return Err(Error::InvalidArgument("diagonal block has wrong shape".into()));
            }
        }
        for (r, c, m) in &sub {
            if r <= c || *r >= diag.len() || m.nrows() != block || m.ncols() != block {
                return Err(Error::InvalidArgument(format!("bad sub-diagonal block ({r}, {c})")));
            }
        }
        Ok(BlockLowerFlow { block, diag, sub })
    }

    pub fn blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn slice<'a>(&self, x: &'a Array1<C64>, i: usize) -> ndarray::ArrayView1<'a, C64> {
        x.slice(s![i * self.block..(i + 1) * self.block])
    }
}

struct BlockSolver {
    block: usize,
    c: f64,
    // per diagonal block, index into `lus`
    which: Vec<usize>,
    lus: Vec<ComplexLu>,
    sub: Vec<(usize, usize, Arc<Array2<C64>>)>,
}

impl ShiftedSolver for BlockSolver {
    fn solve(&self, b: &Array1<C64>) -> Result<Array1<C64>> {
        let m = self.block;
        let mut x = Array1::<C64>::zeros(b.len());
        for i in 0..self.which.len() {
            let mut rhs = b.slice(s![i * m..(i + 1) * m]).to_owned();
            for (r, c, mat) in &self.sub {
                if *r == i {
                    let xc = x.slice(s![c * m..(c + 1) * m]);
                    rhs.scaled_add(C64::new(self.c, 0.0), &mat.dot(&xc));
                }
            }
            let xi = self.lus[self.which[i]].solve(&rhs)?;
            x.slice_mut(s![i * m..(i + 1) * m]).assign(&xi);
        }
        Ok(x)
    }
}

impl LinearFlow for BlockLowerFlow {
    fn dim(&self) -> usize {
        self.block * self.diag.len()
    }

    fn apply(&self, x: &Array1<C64>) -> Array1<C64> {
        let m = self.block;
        let mut y = Array1::<C64>::zeros(x.len());
        for (i, d) in self.diag.iter().enumerate() {
            y.slice_mut(s![i * m..(i + 1) * m]).assign(&d.dot(&self.slice(x, i)));
        }
        for (r, c, mat) in &self.sub {
            let add = mat.dot(&self.slice(x, *c));
            let mut yr = y.slice_mut(s![r * m..(r + 1) * m]);
            yr += &add;
        }
        y
    }

    fn factor(&self, c: f64) -> Result<Box<dyn ShiftedSolver + '_>> {
        let mut uniq: Vec<&Arc<Array2<C64>>> = Vec::new();
        let mut which = Vec::with_capacity(self.diag.len());
        for d in &self.diag {
            match uniq.iter().position(|u| Arc::ptr_eq(u, d)) {
                Some(p) => which.push(p),
                None => {
                    which.push(uniq.len());
                    uniq.push(d);
                }
            }
        }
        let lus = uniq.iter().map(|d| ComplexLu::new(shifted_identity(d, c))).collect::<Result<Vec<_>>>()?;
        Ok(Box::new(BlockSolver { block: self.block, c, which, lus, sub: self.sub.clone() }))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    /// Absolute floor, relative to `‖y0‖∞`.
    pub atol_rel: f64,
    pub initial_step: f64,
    pub max_steps: usize,
    pub min_step: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-8, atol_rel: 1e-12, initial_step: 1e-3, max_steps: 200_000, min_step: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Array1<C64>>,
    pub accepted: usize,
    pub rejected: usize,
    pub factorizations: usize,
}

// L-stable, stiffly accurate SDIRK of order 4 with embedded order 3.
const GAMMA: f64 = 0.25;
const A: [[f64; 5]; 5] = [
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [0.5, 0.25, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.25, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25],
];
const B_HAT: [f64; 5] = [59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0];

fn error_norm(err: &Array1<C64>, y0: &Array1<C64>, y1: &Array1<C64>, rtol: f64, atol: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..err.len() {
        let sc = atol + rtol * y0[i].norm().max(y1[i].norm());
        acc += (err[i].norm() / sc).powi(2);
    }
    (acc / err.len() as f64).sqrt()
}

/// Integrates `y' = A y` and returns the state at each requested time.
pub fn integrate(flow: &dyn LinearFlow, y0: &Array1<C64>, times: &[f64], opts: &OdeOptions) -> Result<OdeSolution> {
    if y0.len() != flow.dim() {
        return Err(Error::LengthMismatch { expected: flow.dim(), got: y0.len() });
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidArgument("times must be non-negative and increasing".into()));
    }
    let atol = opts.atol_rel * y0.iter().fold(0.0f64, |m, z| m.max(z.norm())).max(f64::MIN_POSITIVE);
    let mut out = OdeSolution { times: times.to_vec(), states: Vec::with_capacity(times.len()), accepted: 0, rejected: 0, factorizations: 0 };
    let mut t = 0.0;
    let mut y = y0.clone();
    let mut h = opts.initial_step;
    let mut cached: Option<(f64, Box<dyn ShiftedSolver + '_>)> = None;
    for &target in times {
        while target - t > 1e-14 * target.max(1.0) {
            if out.accepted + out.rejected >= opts.max_steps {
                return Err(Error::Convergence(format!("step budget exhausted at t = {t}")));
            }
            // equal sub-steps to the next output keep the step (and its factorization) stable
            let remaining = target - t;
            let pieces = (remaining / h * (1.0 - 1e-9)).ceil().max(1.0);
            let mut step = remaining / pieces;
            if let Some((hc, _)) = &cached {
                if (step - hc).abs() <= 1e-9 * hc {
                    step = *hc;
                }
            }
            let need = cached.as_ref().is_none_or(|(hc, _)| (hc - step).abs() > 1e-15 * step);
            if need {
                cached = Some((step, flow.factor(GAMMA * step)?));
                out.factorizations += 1;
            }
            let solver = &cached.as_ref().unwrap().1;
            let mut k: Vec<Array1<C64>> = Vec::with_capacity(5);
            for i in 0..5 {
                // stage: z_i = y + h Σ_{j<i} a_ij k_j + h γ k_i, k_i = A z_i
                let mut base = y.clone();
                for (j, kj) in k.iter().enumerate() {
                    base.scaled_add(C64::new(step * A[i][j], 0.0), kj);
                }
                let z = solver.solve(&base)?;
                k.push(flow.apply(&z));
            }
            let mut y_new = y.clone();
            let mut err = Array1::<C64>::zeros(y.len());
            for i in 0..5 {
                y_new.scaled_add(C64::new(step * A[4][i], 0.0), &k[i]);
                err.scaled_add(C64::new(step * (A[4][i] - B_HAT[i]), 0.0), &k[i]);
            }
            let en = error_norm(&err, &y, &y_new, opts.rtol, atol);
            if !en.is_finite() {
                return Err(Error::Convergence(format!("non-finite error estimate at t = {t}")));
            }
            let fac = (0.9 * en.max(1e-10).powf(-0.25)).clamp(0.2, 4.0);
            if en <= 1.0 {
                t += step;
                y = y_new;
                out.accepted += 1;
                if !(1.0..=1.3).contains(&fac) {
                    h = step * fac;
                } else {
                    h = h.max(step);
                }
            } else {
                out.rejected += 1;
                h = step * fac.min(0.7);
                if h < opts.min_step {
                    return Err(Error::Convergence(format!("step size collapse at t = {t}")));
                }
            }
        }
        out.states.push(y.clone());
    }
    debug!("sdirk: {} accepted, {} rejected, {} factorizations", out.accepted, out.rejected, out.factorizations);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn scalar_decay_and_rotation() {
        let a = array![[C64::new(-2.0, 3.0)]];
        let y0 = array![C64::new(1.0, 0.0)];
        let sol = integrate(&DenseFlow(&a), &y0, &[0.0, 0.5, 2.0], &OdeOptions::default()).unwrap();
        for (t, y) in sol.times.iter().zip(&sol.states) {
            let exact = (C64::new(-2.0, 3.0) * t).exp();
            assert!((y[0] - exact).norm() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn stiff_block_system() {
        // y1' = -1000 y1, y2' = -y2 + y1: closed form available
        let d1 = Arc::new(array![[C64::new(-1000.0, 0.0)]]);
        let d2 = Arc::new(array![[C64::new(-1.0, 0.0)]]);
        let c = Arc::new(array![[C64::new(1.0, 0.0)]]);
        let flow = BlockLowerFlow::new(1, vec![d1, d2], vec![(1, 0, c)]).unwrap();
        let y0 = array![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let sol = integrate(&flow, &y0, &[1.0], &OdeOptions::default()).unwrap();
        let t: f64 = 1.0;
        let exact = ((-t).exp() - (-1000.0 * t).exp()) / 999.0;
        assert!((sol.states[0][1].re - exact).abs() < 1e-8 * exact);
        assert!(sol.accepted < 2000);
    }
}
