//! Acceptance checks and the staged suite runner.
//!
//! Stages run in the order assemble → gap → branches → chain → green → fits,
//! each over every configured `γ`. Every check is recorded with its measured
//! values, the bounds they were held to and the tolerances used.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::info;
use ndarray::Array1;
use ndarray_linalg::{EigValsh, UPLO};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoeffProfile;
use crate::collision::{assemble_collision, coercivity_gram, ktilde_kernel, max_abs_diff_transpose, CollisionOperators};
use crate::config::{SuiteConfig, CHECK_IDS};
use crate::error::{Error, Result};
use crate::fit::{default_window, fit_decay_envelope, DecayFit, DecayModel};
use crate::green::{
    prepare_initial, write_snapshots_csv, DecompositionSnapshot, FluidEnvelope, GreenSynthesis, InitialProfile, ModeField, Monomial,
    VelocityProfile,
};
use crate::grid::{build_grid, GridSpec, VelocityGrid};
use crate::io::{export_operators, write_json, write_with};
use crate::kinetic::{
    chain_states, damped_commutator_series, dt_commutator_check, duhamel_quadrature, gradient_one_sided, mixture1_quadrature, mixture_apply,
    picard_chain, remainder_check, ChainOptions, CommutatorReport, PicardChain, RemainderCheck,
};
use crate::linalg::C64;
use crate::mode::{mode_operator_along, Generator, ModeIndex, BETA};
use crate::ode::OdeOptions;
use crate::oracle::ktilde_fd;
use crate::singular::{singular_norm_scan, SingularScan};
use crate::spectral::{
    estimate_gap, euler_moment_oracle, fit_dispersion, full_spectrum, leading_indices, trace_branches, BranchFit, BranchSolver, GapEstimate,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `value ≤ bound + tolerance`
    AtMost,
    /// `value ≥ bound − tolerance`
    AtLeast,
    /// `|value − bound| ≤ tolerance`
    Within,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub quantity: String,
    pub value: f64,
    pub relation: Relation,
    pub bound: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Measurement {
    fn new(quantity: impl Into<String>, value: f64, relation: Relation, bound: f64, tolerance: f64) -> Self {
        let passed = value.is_finite()
            && match relation {
                Relation::AtMost => value <= bound + tolerance,
                Relation::AtLeast => value >= bound - tolerance,
                Relation::Within => (value - bound).abs() <= tolerance,
            };
        Self { quantity: quantity.into(), value, relation, bound, tolerance, passed }
    }

    pub fn at_most(quantity: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(quantity, value, Relation::AtMost, bound, 0.0)
    }

    pub fn at_least(quantity: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(quantity, value, Relation::AtLeast, bound, 0.0)
    }

    pub fn within(quantity: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Self::new(quantity, value, Relation::Within, target, tolerance)
    }

    /// `value > 0`, recorded against the smallest positive normal float.
    pub fn positive(quantity: impl Into<String>, value: f64) -> Self {
        Self::at_least(quantity, value, f64::MIN_POSITIVE)
    }

    /// A fitted constant that only has to be finite.
    pub fn finite(quantity: impl Into<String>, value: f64) -> Self {
        Self::at_most(quantity, value, f64::MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Passed,
    Failed,
    Skipped,
}

impl CheckStatus {
    pub fn label(self) -> &'static str {
        match self {
            CheckStatus::Passed => "PASS",
            CheckStatus::Failed => "FAIL",
            CheckStatus::Skipped => "SKIP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: String,
    pub title: String,
    pub gamma: Option<f64>,
    pub status: CheckStatus,
    pub measurements: Vec<Measurement>,
    pub notes: Vec<String>,
}

pub fn check_title(id: &str) -> &'static str {
    match id {
        "A1" => "operator structure",
        "A2" => "coercivity",
        "A3" => "kernel formula",
        "A4" => "dispersion",
        "A5" => "spectral gap",
        "A6" => "Picard bounds",
        "A7" => "mixture bound",
        "A8" => "K_s scaling",
        "A9" => "decay regimes",
        "A10" => "decomposition identities",
        "A11" => "D_t commutation",
        _ => "unknown",
    }
}

impl CheckResult {
    pub fn from_measurements(id: &str, gamma: Option<f64>, measurements: Vec<Measurement>, notes: Vec<String>) -> Self {
        let ok = !measurements.is_empty() && measurements.iter().all(|m| m.passed);
        Self {
            id: id.into(),
            title: check_title(id).into(),
            gamma,
            status: if ok { CheckStatus::Passed } else { CheckStatus::Failed },
            measurements,
            notes,
        }
    }

    pub fn errored(id: &str, gamma: Option<f64>, err: &Error) -> Self {
        Self {
            id: id.into(),
            title: check_title(id).into(),
            gamma,
            status: CheckStatus::Failed,
            measurements: Vec::new(),
            notes: vec![format!("error: {err}")],
        }
    }

    pub fn skipped(id: &str, reason: &str) -> Self {
        Self {
            id: id.into(),
            title: check_title(id).into(),
            gamma: None,
            status: CheckStatus::Skipped,
            measurements: Vec::new(),
            notes: vec![reason.into()],
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.id, self.status.label(), self.title)?;
        if let Some(g) = self.gamma {
            write!(f, " [gamma={g}]")?;
        }
        for m in &self.measurements {
            let rel = match m.relation {
                Relation::AtMost => "<=",
                Relation::AtLeast => ">=",
                Relation::Within => "~",
            };
            write!(f, "; {} = {:.4e} {} {:.4e}", m.quantity, m.value, rel, m.bound)?;
            if m.relation == Relation::Within {
                write!(f, " +- {:.2e}", m.tolerance)?;
            }
            if !m.passed {
                f.write_str(" (x)")?;
            }
        }
        for n in &self.notes {
            write!(f, "; {n}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSummary {
    pub epsilon: f64,
    pub times: Vec<f64>,
    /// `norms[j + 1][time]`
    pub norms: Vec<Vec<f64>>,
    /// `‖∂²_x h^{j_max}‖` per time.
    pub top_dx2: Vec<f64>,
    pub remainder: Option<RemainderCheck>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeSeries {
    pub name: String,
    pub beta_epsilon: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaReport {
    pub gamma: f64,
    pub n_per_axis: usize,
    pub dof: usize,
    pub nu0: f64,
    pub c0_hat: f64,
    pub gap: Option<GapEstimate>,
    pub euler_speeds: Option<[f64; 5]>,
    pub branch_fit: Option<BranchFit>,
    pub branch_fit_slow: Option<BranchFit>,
    pub singular: Option<SingularScan>,
    pub chain: Option<ChainSummary>,
    pub commutator: Option<CommutatorReport>,
    pub snapshots: Vec<DecompositionSnapshot>,
    pub regime_three: Option<FluidEnvelope>,
    pub fits: BTreeMap<String, DecayFit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: SuiteConfig,
    pub slow: bool,
    pub stages: Vec<Stage>,
    pub gammas: Vec<GammaReport>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
    /// Wall-clock per stage; the only field that differs between runs.
    pub wall_clock: Vec<StageTiming>,
}

impl RunReport {
    /// Status per check id: failed if any record failed, skipped if every
    /// record was skipped. Ids that never ran are absent.
    pub fn summary(&self) -> Vec<(String, CheckStatus)> {
        CHECK_IDS
            .iter()
            .filter_map(|id| {
                let recs = self.check(id);
                if recs.is_empty() {
                    return None;
                }
                let status = if recs.iter().any(|c| c.status == CheckStatus::Failed) {
                    CheckStatus::Failed
                } else if recs.iter().all(|c| c.status == CheckStatus::Skipped) {
                    CheckStatus::Skipped
                } else {
                    CheckStatus::Passed
                };
                Some((id.to_string(), status))
            })
            .collect()
    }

    pub fn check(&self, id: &str) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| c.id == id).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Assemble,
    Gap,
    Branches,
    Chain,
    Green,
    Fits,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Assemble, Stage::Gap, Stage::Branches, Stage::Chain, Stage::Green, Stage::Fits];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Assemble => "assemble",
            Stage::Gap => "gap",
            Stage::Branches => "branches",
            Stage::Chain => "chain",
            Stage::Green => "green",
            Stage::Fits => "fits",
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub slow: bool,
    /// Dump the assembled matrices in the binary layout.
    pub export_operators: bool,
}

/// Completed stages and written files, kept whether or not the run finished.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub completed_stages: Vec<Stage>,
    pub failed_stage: Option<Stage>,
    pub error: Option<String>,
    pub files: Vec<String>,
}

fn tag(gamma: f64) -> String {
    format!("g{gamma}")
}

fn seed_for(seed: u64, gamma: f64, salt: u64) -> u64 {
    seed ^ gamma.to_bits().rotate_left(17) ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn norm_c(grid: &VelocityGrid, v: &Array1<C64>) -> f64 {
    grid.dof_norm(v.view())
}

fn linspace(t1: f64, samples: usize) -> Vec<f64> {
    (0..samples).map(|i| t1 * i as f64 / (samples - 1) as f64).collect()
}

fn logspace(t0: f64, t1: f64, samples: usize) -> Vec<f64> {
    let (a, b) = (t0.ln(), t1.ln());
    (0..samples).map(|i| (a + (b - a) * i as f64 / (samples - 1) as f64).exp()).collect()
}

/// `M^{1/2}` as a velocity profile.
fn maxwellian_profile() -> VelocityProfile {
    VelocityProfile::MaxwellianPolynomial { terms: vec![Monomial { coef: 1.0, powers: [0, 0, 0] }] }
}

fn unit(khat: [f64; 3]) -> [f64; 3] {
    let n = (khat[0] * khat[0] + khat[1] * khat[1] + khat[2] * khat[2]).sqrt();
    [khat[0] / n, khat[1] / n, khat[2] / n]
}

fn build_ops(base: &GridSpec, n: usize, gamma: f64) -> Result<CollisionOperators> {
    let spec = GridSpec { n_per_axis: n, gamma, ..*base };
    let grid = Arc::new(build_grid(spec)?);
    let profile = CoeffProfile::for_radius(gamma, spec.radius)?;
    assemble_collision(grid, &profile)
}

type CheckOutcome = Result<(Vec<Measurement>, Vec<String>)>;

/// Symmetry, sign and the five-fold kernel of `L`.
pub fn check_structure(ops: &CollisionOperators) -> CheckOutcome {
    let l = &ops.l_full;
    let scale = l.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let asym = max_abs_diff_transpose(l) / scale;
    let mut ev = l.eigvalsh(UPLO::Lower)?.to_vec();
    ev.sort_by(|a, b| b.total_cmp(a));
    let cluster = ev[..5].iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let sixth = ev[5].abs();
    // near zero: below the geometric mean of the cluster size and |σ₆|
    let cut = (cluster.max(f64::MIN_POSITIVE) * sixth).sqrt();
    let count = ev.iter().filter(|v| v.abs() <= cut).count();
    Ok((
        vec![
            Measurement::at_most("relative asymmetry of L", asym, 1e-12),
            Measurement::at_most("largest eigenvalue of L", ev[0], 1e-8),
            Measurement::within("eigenvalues in the near-zero cluster", count as f64, 5.0, 0.0),
            Measurement::at_least("|sigma_6| / max |sigma_1..5|", sixth / cluster.max(f64::MIN_POSITIVE), 10.0),
        ],
        vec![format!("cluster cut {cut:.3e}")],
    ))
}

/// The coercivity inequality with the estimated constant on random vectors.
pub fn check_coercivity(ops: &CollisionOperators, samples: usize, seed: u64) -> CheckOutcome {
    let gram = coercivity_gram(&ops.grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c0 = ops.c0_hat;
    let (mut violations, mut min_ratio) = (0usize, f64::INFINITY);
    for _ in 0..samples {
        let f = Array1::from_shape_fn(ops.dof(), |_| rng.gen_range(-1.0..1.0));
        let (lhs, rhs) = ops.coercivity_terms(f.view(), &gram);
        min_ratio = min_ratio.min(lhs / (c0 * rhs));
        if lhs < c0 * rhs {
            violations += 1;
        }
    }
    Ok((
        vec![
            Measurement::positive("c0_hat", c0),
            Measurement::at_most(format!("violations in {samples} samples"), violations as f64, 0.0),
            Measurement::at_least("min <-Lambda f, f> / (c0_hat |f|^2)", min_ratio, 1.0),
        ],
        Vec::new(),
    ))
}

/// Closed-form kernel against nested finite differences, and matrix symmetry.
pub fn check_kernel(ops: &CollisionOperators, pairs: usize, seed: u64) -> CheckOutcome {
    let gamma = ops.gamma();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut drawn = 0;
    while drawn < pairs {
        let mut p = || -> [f64; 3] { [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)] };
        let (xi, xs) = (p(), p());
        let d = ((xi[0] - xs[0]).powi(2) + (xi[1] - xs[1]).powi(2) + (xi[2] - xs[2]).powi(2)).sqrt();
        if d < 0.25 {
            continue;
        }
        drawn += 1;
        let exact = ktilde_kernel(&xi, &xs, gamma)?;
        let fd = ktilde_fd(&xi, &xs, gamma, 1e-4);
        worst = worst.max((fd - exact).abs() / exact.abs().max(1e-300));
    }
    let kt = &ops.k_tilde;
    let scale = kt.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok((
        vec![
            Measurement::at_most(format!("max relative kernel error over {pairs} pairs"), worst, 1e-5),
            Measurement::at_most("relative asymmetry of K~", max_abs_diff_transpose(kt) / scale, 1e-10),
        ],
        vec!["pairs in [-3,3]^3 with |xi - xi*| >= 0.25, step 1e-4".into()],
    ))
}

/// Coarse and fine dispersion fits against the Euler speeds. Errors are
/// relative, with the zero speeds scaled by `√(5/3)`.
pub fn dispersion_measurements(coarse: &BranchFit, fine: &BranchFit, speeds: [f64; 5], tol: f64, fine_n: usize) -> Vec<Measurement> {
    let scale = (5.0f64 / 3.0).sqrt();
    let errors = |fit: &BranchFit| -> Vec<f64> {
        let mut a1 = fit.a1;
        a1.sort_by(f64::total_cmp);
        a1.iter().zip(&speeds).map(|(a, s)| (a - s).abs() / s.abs().max(scale)).collect()
    };
    let (ef, ec) = (errors(fine), errors(coarse));
    let mut m: Vec<Measurement> = ef
        .iter()
        .zip(&speeds)
        .map(|(e, s)| Measurement::at_most(format!("relative a1 error at speed {s:+.4} (n={fine_n})"), *e, tol))
        .collect();
    let a2_min = fine.a2.iter().copied().fold(f64::INFINITY, f64::min);
    m.push(Measurement::positive(format!("min a2 (n={fine_n})"), a2_min));
    let worst = |e: &[f64]| e.iter().copied().fold(0.0f64, f64::max);
    m.push(Measurement::at_most("max a1 error fine / coarse", worst(&ef) / worst(&ec).max(f64::MIN_POSITIVE), 1.0));
    m
}

struct GammaState {
    gamma: f64,
    grid: Arc<VelocityGrid>,
    ops: CollisionOperators,
    gap: Option<GapEstimate>,
    field: Option<ModeField>,
    chain: Option<PicardChain>,
    /// A10 measurements from the chain stage, completed by the green stage.
    a10: Option<CheckOutcome>,
    /// Decay series for the regime CSV.
    regimes: Vec<RegimeSeries>,
    report: GammaReport,
}

struct Runner<'a> {
    cfg: &'a SuiteConfig,
    slow: bool,
    export: bool,
    out: PathBuf,
    manifest: Manifest,
    checks: Vec<CheckResult>,
}

impl Runner<'_> {
    fn file(&mut self, name: &str) -> PathBuf {
        if !self.manifest.files.iter().any(|f| f == name) {
            self.manifest.files.push(name.to_string());
        }
        self.out.join(name)
    }

    fn push(&mut self, id: &str, gamma: Option<f64>, res: CheckOutcome) {
        if !self.cfg.enabled(id) {
            return;
        }
        let rec = match res {
            Ok((m, notes)) => CheckResult::from_measurements(id, gamma, m, notes),
            Err(e) => CheckResult::errored(id, gamma, &e),
        };
        info!("{rec}");
        self.checks.push(rec);
    }

    fn skip(&mut self, id: &str, reason: &str) {
        if self.cfg.enabled(id) && !self.checks.iter().any(|c| c.id == id) {
            self.checks.push(CheckResult::skipped(id, reason));
        }
    }

    fn assemble(&mut self, gamma: f64) -> Result<GammaState> {
        let cfg = self.cfg;
        let spec = GridSpec { gamma, ..cfg.grid };
        let grid = Arc::new(build_grid(spec)?);
        let profile = CoeffProfile::for_radius(gamma, spec.radius)?;
        let ops = assemble_collision(grid.clone(), &profile)?;
        let t = tag(gamma);
        write_with(&self.file(&format!("profile_{t}.csv")), |w| profile.to_csv(w))?;
        if self.export {
            let dir = format!("operators_{t}");
            for p in export_operators(&ops, &self.out.join(&dir))? {
                let name = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                self.file(&format!("{dir}/{name}"));
            }
        }
        let report = GammaReport {
            gamma,
            n_per_axis: spec.n_per_axis,
            dof: ops.dof(),
            nu0: ops.nu0,
            c0_hat: ops.c0_hat,
            gap: None,
            euler_speeds: None,
            branch_fit: None,
            branch_fit_slow: None,
            singular: None,
            chain: None,
            commutator: None,
            snapshots: Vec::new(),
            regime_three: None,
            fits: BTreeMap::new(),
        };
        let mut st = GammaState { gamma, grid, ops, gap: None, field: None, chain: None, a10: None, regimes: Vec::new(), report };
        if cfg.enabled("A1") {
            let r = check_structure(&st.ops);
            self.push("A1", Some(gamma), r);
        }
        if cfg.enabled("A2") {
            let r = check_coercivity(&st.ops, cfg.coercivity_samples, seed_for(cfg.seed, gamma, 2));
            self.push("A2", Some(gamma), r);
        }
        if cfg.enabled("A3") {
            let r = check_kernel(&st.ops, cfg.kernel_pairs, seed_for(cfg.seed, gamma, 3));
            self.push("A3", Some(gamma), r);
        }
        if cfg.enabled("A8") {
            let s = &cfg.singular;
            let res = (|| {
                let g = build_grid(GridSpec { n_per_axis: s.n_per_axis, radius: s.radius, gamma, ..cfg.grid })?;
                let scan = singular_norm_scan(Arc::new(g), &s.d_values)?;
                let m = vec![Measurement::within("log-log slope of |grad K_s| in D", scan.slope, gamma + 2.0, 0.3)];
                st.report.singular = Some(scan);
                Ok((m, vec![format!("n={} R={}", s.n_per_axis, s.radius)]))
            })();
            self.push("A8", Some(gamma), res);
        }
        Ok(st)
    }

    fn gap(&mut self, st: &mut GammaState) -> Result<()> {
        let g = &self.cfg.gap;
        let gap = estimate_gap(&st.ops, g.khat, g.kappa_max, g.kappa_step)?;
        let khat = unit(g.khat);
        let mut rows = Vec::new();
        for kappa in [0.0, 0.5 * gap.delta_hat, gap.delta_hat] {
            let a = mode_operator_along(&st.ops, khat, kappa, Generator::FullL);
            let es = full_spectrum(&a)?;
            let lead = leading_indices(&es);
            for (i, z) in es.eigenvalues.iter().enumerate() {
                rows.push((kappa, z.re, z.im, lead.contains(&i)));
            }
        }
        let t = tag(st.gamma);
        let tau = gap.tau_hat;
        write_with(&self.file(&format!("spectrum_{t}.csv")), |w| {
            use std::io::Write;
            writeln!(w, "kappa,re,im,fluid,tau_hat")?;
            for (k, re, im, fl) in &rows {
                writeln!(w, "{k},{re:.12e},{im:.12e},{},{tau:.12e}", u8::from(*fl))?;
            }
            Ok(())
        })?;
        write_json(&self.file(&format!("gap_{t}.json")), &gap)?;
        st.report.gap = Some(gap.clone());
        st.gap = Some(gap);
        Ok(())
    }

    fn branches(&mut self, st: &mut GammaState) -> Result<()> {
        let cfg = self.cfg;
        let b = &cfg.branches;
        let khat = unit(cfg.gap.khat);
        let set = trace_branches(&st.ops, khat, &b.kappas, BranchSolver::Subspace)?;
        let fit = fit_dispersion(&set, b.fit_window)?;
        let speeds = euler_moment_oracle(khat)?;
        let t = tag(st.gamma);
        write_with(&self.file(&format!("branches_{t}.csv")), |w| set.to_csv(w))?;
        #[derive(Serialize)]
        struct FitFile<'a> {
            gamma: f64,
            #[serde(flatten)]
            fit: &'a BranchFit,
            euler_speeds: [f64; 5],
        }
        write_json(&self.file(&format!("branch_fit_{t}.json")), &FitFile { gamma: st.gamma, fit: &fit, euler_speeds: speeds })?;
        st.report.euler_speeds = Some(speeds);
        st.report.branch_fit = Some(fit.clone());
        if cfg.enabled("A4") && self.slow {
            let res = (|| {
                let ops = build_ops(&cfg.grid, cfg.slow_n, st.gamma)?;
                let set2 = trace_branches(&ops, khat, &b.kappas, BranchSolver::Subspace)?;
                let fit2 = fit_dispersion(&set2, b.fit_window)?;
                let m = dispersion_measurements(&fit, &fit2, speeds, b.speed_tolerance, cfg.slow_n);
                st.report.branch_fit_slow = Some(fit2);
                Ok((m, vec![format!("coarse n={}, fine n={}", cfg.grid.n_per_axis, cfg.slow_n)]))
            })();
            self.push("A4", Some(st.gamma), res);
        }
        Ok(())
    }

    fn chain(&mut self, st: &mut GammaState) -> Result<()> {
        let cfg = self.cfg;
        let c = &cfg.chain;
        let eps = cfg.grid.epsilon;
        let field = prepare_initial(&cfg.profile.resolve()?, st.grid.clone(), eps, cfg.k_max())?;
        let mut times = c.times();
        times.extend(cfg.times.iter().copied());
        times.sort_by(f64::total_cmp);
        times.dedup();
        let chain = picard_chain(&field, &st.ops, c.j_max, &times, &ChainOptions::default())?;

        let mut onset: Vec<Option<DecayFit>> = Vec::new();
        let mut a6 = Vec::new();
        let floor = 0.4 * st.ops.c0_hat;
        for j in -1..=c.j_max as i64 {
            let fit = chain.fit_order(j, c.order_window);
            if j <= 3 {
                match &fit {
                    Ok(f) => {
                        a6.push(Measurement::within(format!("order of h^({j})"), f.poly_order, (j + 1) as f64, 0.5));
                        a6.push(Measurement::at_least(format!("rate of h^({j})"), f.rate, floor));
                    }
                    Err(_) => a6.push(Measurement::within(format!("order of h^({j}) (fit failed)"), f64::NAN, (j + 1) as f64, 0.5)),
                }
            }
            if let Ok(f) = &fit {
                st.report.fits.insert(format!("chain_onset_j{j}"), f.clone());
            }
            if let Ok(f) = chain.fit_order(j, (c.t_min, c.tail_window.1)) {
                st.report.fits.insert(format!("chain_wide_j{j}"), f);
            }
            let b = (j + 1) as usize;
            if let Ok(f) = fit_decay_envelope(&chain.times, &chain.norms[b], DecayModel::Exp, c.tail_window) {
                st.report.fits.insert(format!("chain_tail_j{j}"), f);
            }
            onset.push(fit.ok());
        }
        if let Ok(f) = fit_decay_envelope(&chain.times, &chain.top_dx2, DecayModel::PowerExp, c.tail_window) {
            st.report.fits.insert("chain_top_dx2".into(), f);
        }
        write_with(&self.file(&format!("chain_{}.csv", tag(st.gamma))), |w| chain.write_csv(&onset, w))?;

        let k1: ModeIndex = [1, 0, 0];
        let tight = OdeOptions { rtol: 1e-11, atol_rel: 1e-14, ..OdeOptions::default() };
        let small = if cfg.enabled("A6") || cfg.enabled("A7") {
            Some((|| -> Result<(CollisionOperators, Array1<C64>)> {
                let ops = build_ops(&cfg.grid, c.oracle_n, st.gamma)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed_for(cfg.seed, st.gamma, 6));
                let f0 = Array1::from_shape_fn(ops.dof(), |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                Ok((ops, f0))
            })())
        } else {
            None
        };
        let small_ref = || -> Result<&(CollisionOperators, Array1<C64>)> {
            match small.as_ref() {
                Some(Ok(v)) => Ok(v),
                Some(Err(e)) => Err(Error::Assembly(format!("oracle grid: {e}"))),
                None => Err(Error::InvalidArgument("oracle grid not built".into())),
            }
        };

        if cfg.enabled("A6") {
            let duhamel = small_ref().and_then(|(ops, f0)| {
                let states = chain_states(ops, k1, eps, f0, 0, &[0.0, c.oracle_t], &tight)?;
                let q = duhamel_quadrature(ops, k1, eps, f0, c.oracle_t, c.oracle_intervals)?;
                Ok(norm_c(&ops.grid, &(&states[1][1] - &q)) / norm_c(&ops.grid, &q))
            });
            let res = duhamel.map(|rel| {
                a6.push(Measurement::at_most(format!("Duhamel quadrature vs chain h^(0) (n={})", c.oracle_n), rel, 1e-4));
                (a6, vec![format!("orders fitted as C t^p e^(-rt) on t in [{}, {}]", c.order_window.0, c.order_window.1)])
            });
            self.push("A6", Some(st.gamma), res);
        }

        let f_rep = field.coefficients.get(&k1).cloned();
        let need_rep = || f_rep.as_ref().ok_or_else(|| Error::Config("profile has no k = (1,0,0) coefficient".into()));
        if cfg.enabled("A7") {
            let res = (|| {
                let mut m = Vec::new();
                let (ops5, f05) = small_ref()?;
                let mix = mixture_apply(f05, 1, ops5, k1, eps, &[0.0, c.oracle_t], &tight)?;
                let q = mixture1_quadrature(ops5, k1, eps, f05, c.oracle_t, c.oracle_intervals)?;
                m.push(Measurement::at_most(
                    format!("nested quadrature vs M_1 (n={})", c.oracle_n),
                    norm_c(&ops5.grid, &(&mix[1] - &q)) / norm_c(&ops5.grid, &q),
                    1e-4,
                ));
                let f0 = need_rep()?;
                let grad = gradient_one_sided(&st.grid, f0);
                let gn = grad.iter().map(|g| norm_c(&st.grid, g).powi(2)).sum::<f64>().sqrt();
                let scale = norm_c(&st.grid, f0) + gn;
                let kappa = BETA * eps;
                let mix = mixture_apply(f0, 1, &st.ops, k1, eps, &chain.times, &OdeOptions::default())?;
                let (ts, vs): (Vec<f64>, Vec<f64>) = chain
                    .times
                    .iter()
                    .zip(&mix)
                    .filter(|(t, _)| **t > 0.0)
                    .map(|(t, v)| (*t, kappa * norm_c(&st.grid, v) / (scale * t)))
                    .unzip();
                let fit = fit_decay_envelope(&ts, &vs, DecayModel::Exp, c.tail_window)?;
                m.push(Measurement::positive("rate r of |d_x M_1 f0| / (t |f0|_H1)", fit.rate));
                m.push(Measurement::finite("prefactor C", fit.prefactor));
                st.report.fits.insert("mixture_1".into(), fit);
                let mut notes = Vec::new();
                if self.slow {
                    let mix2 = mixture_apply(f0, 2, &st.ops, k1, eps, &chain.times, &OdeOptions::default())?;
                    let vs2: Vec<f64> = mix2.iter().skip(1).map(|v| kappa * kappa * norm_c(&st.grid, v)).collect();
                    let fit2 = fit_decay_envelope(&chain.times[1..], &vs2, DecayModel::PowerExp, c.tail_window)?;
                    m.push(Measurement::within("order p of |d_x^2 M_2 f0| ~ C t^p e^(-rt)", fit2.poly_order, 2.0, 0.7));
                    // four K factors: the series starts like t^4
                    if let Ok(onset) = fit_decay_envelope(&chain.times[1..], &vs2, DecayModel::PowerExp, c.order_window) {
                        notes.push(format!("M_2 onset order on t in [{}, {}] = {:.3}", c.order_window.0, c.order_window.1, onset.poly_order));
                    }
                    st.report.fits.insert("mixture_2".into(), fit2);
                } else {
                    notes.push("j=2 variant runs under --slow".into());
                }
                Ok((m, notes))
            })();
            self.push("A7", Some(st.gamma), res);
        }

        let mut remainder = None;
        if cfg.enabled("A10") {
            let res = (|| {
                let f0 = need_rep()?;
                let ts: Vec<f64> = chain.times.iter().copied().filter(|t| *t <= 10.0).collect();
                let rc = remainder_check(&st.ops, k1, eps, f0, c.j_max, &ts, &OdeOptions::default())?;
                let m = vec![
                    Measurement::at_most("|R(0)| / |f0|", rc.initial / norm_c(&st.grid, f0), 1e-12),
                    Measurement::at_most("remainder re-integration gap", rc.relative_gap, 1e-6),
                ];
                remainder = Some(rc);
                Ok((m, Vec::new()))
            })();
            st.a10 = Some(res);
        }

        if cfg.enabled("A11") {
            let cm = &cfg.commutator;
            let eps_c = cm.kappa / BETA;
            if !self.checks.iter().any(|r| r.id == "A11" && r.gamma.is_none()) {
                let res = (|| {
                    let coarse = build_grid(GridSpec { n_per_axis: cm.coarse_n, gamma: st.gamma, ..cfg.grid })?;
                    let fine = build_grid(GridSpec { n_per_axis: cm.fine_n, gamma: st.gamma, ..cfg.grid })?;
                    let rep = dt_commutator_check(&maxwellian_profile(), &coarse, &fine, k1, eps_c, &cm.t_values)?;
                    let m = rep
                        .t_values
                        .iter()
                        .filter(|t| **t > 0.0)
                        .zip(&rep.slopes)
                        .map(|(t, s)| Measurement::within(format!("transport residual order in h at t={t}"), *s, 2.0, 0.4))
                        .collect();
                    st.report.commutator = Some(rep);
                    Ok((m, vec![format!("free transport, independent of gamma; n={} vs {}", cm.coarse_n, cm.fine_n)]))
                })();
                self.push("A11", None, res);
            }
            let res = (|| {
                let series = damped_commutator_series(&st.ops, &maxwellian_profile(), k1, eps_c, &chain.times)?;
                let fit = fit_decay_envelope(&chain.times, &series, DecayModel::Exp, c.tail_window)?;
                let m = vec![Measurement::positive("damped residual rate r", fit.rate), Measurement::finite("damped residual prefactor C", fit.prefactor)];
                st.report.fits.insert("damped_commutator".into(), fit);
                Ok((m, Vec::new()))
            })();
            self.push("A11", Some(st.gamma), res);
        }

        st.report.chain = Some(ChainSummary {
            epsilon: eps,
            times: chain.times.clone(),
            norms: chain.norms.clone(),
            top_dx2: chain.top_dx2.clone(),
            remainder,
        });
        st.field = Some(field);
        st.chain = Some(chain);
        Ok(())
    }

    fn green(&mut self, st: &mut GammaState) -> Result<()> {
        let cfg = self.cfg;
        let gap = st.gap.clone().ok_or_else(|| Error::InvalidArgument("green stage needs the gap stage".into()))?;
        let field = match st.field.take() {
            Some(f) => f,
            None => prepare_initial(&cfg.profile.resolve()?, st.grid.clone(), cfg.grid.epsilon, cfg.k_max())?,
        };
        let synth = GreenSynthesis::with_delta(&field, &st.ops, &gap, cfg.delta_override)?;
        let delta = synth.delta_hat;

        // at the chain times when the chain ran, so kinetic and remainder are filled
        let (times, all) = match &st.chain {
            Some(ch) => {
                let snaps = ch.times.iter().enumerate().map(|(i, &t)| synth.snapshot(t, Some(&ch.kinetic_at(i)))).collect::<Result<Vec<_>>>()?;
                (ch.times.clone(), snaps)
            }
            None => {
                let mut ts = cfg.times.clone();
                ts.sort_by(f64::total_cmp);
                ts.dedup();
                let snaps = ts.iter().map(|&t| synth.snapshot(t, None)).collect::<Result<Vec<_>>>()?;
                (ts, snaps)
            }
        };
        let rows: Vec<DecompositionSnapshot> = all.iter().filter(|s| cfg.times.contains(&s.t)).cloned().collect();
        write_with(&self.file(&format!("decomposition_{}.csv", tag(st.gamma))), |w| write_snapshots_csv(&rows, w))?;
        st.report.snapshots = rows;

        if cfg.enabled("A10") {
            let pending = st.a10.take();
            let res = (|| {
                let (mut m, mut notes) = match pending {
                    Some(r) => r?,
                    None => (Vec::new(), Vec::new()),
                };
                let defect = times.iter().map(|&t| synth.bucket_defect(t)).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0f64, f64::max);
                m.push(Measurement::at_most("bucket reconstruction defect", defect, 1e-10));
                let rem: Vec<f64> = all.iter().map(|s| s.norms[1].remainder.unwrap_or(f64::NAN)).collect();
                if rem.iter().all(|v| v.is_finite()) {
                    let fit = fit_decay_envelope(&times, &rem, DecayModel::Exp, cfg.chain.tail_window)?;
                    m.push(Measurement::at_least("|G_R|_H2 envelope rate", fit.rate, 0.4 * st.ops.c0_hat.min(gap.tau_hat)));
                    st.report.fits.insert("remainder_h2".into(), fit);
                } else {
                    notes.push("remainder envelope needs the chain stage".into());
                }
                Ok((m, notes))
            })();
            self.push("A10", Some(st.gamma), res);
        }

        if cfg.enabled("A5") {
            let r = &cfg.regimes;
            let pure = InitialProfile::builtin("pure_mode")?;
            let res = (|| {
                let mut m = vec![Measurement::positive("tau_hat", gap.tau_hat)];
                let bound = 0.5 * gap.tau_hat;
                // regime I: every mode is short-wave
                let be1 = r.regime_i_fraction * delta;
                let s1 = GreenSynthesis::with_delta(&prepare_initial(&pure, st.grid.clone(), be1 / BETA, cfg.k_max())?, &st.ops, &gap, Some(delta))?;
                let ts1 = linspace(8.0, 161);
                let snaps = ts1.iter().map(|&t| s1.snapshot(t, None)).collect::<Result<Vec<_>>>()?;
                let short: Vec<f64> = snaps.iter().map(|s| s.norms[0].short).collect();
                let fluid: Vec<f64> = snaps.iter().map(|s| s.norms[0].fluid).collect();
                let fit = fit_decay_envelope(&ts1, &short, DecayModel::Exp, default_window(&ts1))?;
                m.push(Measurement::at_least("short-wave decay rate", fit.rate, bound));
                m.push(Measurement::at_least("short-wave fit r^2", fit.r_squared, 0.95));
                st.report.fits.insert("regime1_short".into(), fit);
                st.regimes.push(RegimeSeries { name: "regime1_short".into(), beta_epsilon: be1, times: ts1.clone(), values: short });
                st.regimes.push(RegimeSeries { name: "regime1_fluid".into(), beta_epsilon: be1, times: ts1, values: fluid });
                // regime II: long-wave non-fluid part
                let be2 = r.regime_ii_fractions[0] * delta;
                let s2 = GreenSynthesis::with_delta(&prepare_initial(&pure, st.grid.clone(), be2 / BETA, cfg.k_max())?, &st.ops, &gap, Some(delta))?;
                let ts2 = linspace(4.0, 81);
                let lp = ts2.iter().map(|&t| s2.snapshot(t, None).map(|s| s.norms[0].long_perp)).collect::<Result<Vec<_>>>()?;
                let fit = fit_decay_envelope(&ts2, &lp, DecayModel::Exp, default_window(&ts2))?;
                m.push(Measurement::at_least("long-wave non-fluid decay rate", fit.rate, bound));
                m.push(Measurement::at_least("long-wave non-fluid fit r^2", fit.r_squared, 0.95));
                st.report.fits.insert("regime2_long_perp".into(), fit);
                st.regimes.push(RegimeSeries { name: "regime2_long_perp".into(), beta_epsilon: be2, times: ts2, values: lp });
                Ok((m, vec![format!("short-wave at beta*eps = {be1}, long-wave at beta*eps = {be2}, grid n = {}", cfg.grid.n_per_axis)]))
            })();
            self.push("A5", Some(st.gamma), res);
        }
        self.write_regimes(st)
    }

    fn write_regimes(&mut self, st: &GammaState) -> Result<()> {
        if st.regimes.is_empty() {
            return Ok(());
        }
        write_with(&self.file(&format!("regimes_{}.csv", tag(st.gamma))), |w| {
            use std::io::Write;
            writeln!(w, "series,beta_epsilon,t,value")?;
            for s in &st.regimes {
                for (t, v) in s.times.iter().zip(&s.values) {
                    writeln!(w, "{},{},{},{:.12e}", s.name, s.beta_epsilon, t, v)?;
                }
            }
            Ok(())
        })
    }

    fn fits(&mut self, st: &mut GammaState) -> Result<()> {
        if !(self.cfg.enabled("A9") && self.slow) {
            return Ok(());
        }
        let res = self.regime_checks(st);
        self.push("A9", Some(st.gamma), res);
        self.write_regimes(st)?;
        if let Some(env) = st.report.regime_three.clone() {
            write_with(&self.file(&format!("regime3_{}.csv", tag(st.gamma))), |w| {
                use std::io::Write;
                writeln!(w, "t,mode_sum,gaussian_integral,fluid_origin,fluid_majorant,fluid_l2")?;
                for i in 0..env.times.len() {
                    writeln!(
                        w,
                        "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                        env.times[i], env.mode_sum[i], env.gaussian_integral[i], env.fluid_origin[i], env.fluid_majorant[i], env.fluid_l2[i]
                    )?;
                }
                Ok(())
            })?;
        }
        Ok(())
    }

    fn regime_checks(&mut self, st: &mut GammaState) -> CheckOutcome {
        let cfg = self.cfg;
        let r = &cfg.regimes;
        let gap = st.gap.clone().ok_or_else(|| Error::InvalidArgument("regime checks need the gap stage".into()))?;
        let delta = cfg.delta_override.unwrap_or(gap.delta_hat);
        let pure = InitialProfile::builtin("pure_mode")?;
        let synth_at = |profile: &InitialProfile, be: f64, k_max: usize| -> Result<(GreenSynthesis, f64)> {
            let f = prepare_initial(profile, st.grid.clone(), be / BETA, k_max)?;
            Ok((GreenSynthesis::with_delta(&f, &st.ops, &gap, Some(delta))?, f.tail_bound))
        };
        let mut m = Vec::new();
        let mut notes = Vec::new();

        // regime I
        let fluid1 = match st.regimes.iter().find(|s| s.name == "regime1_fluid") {
            Some(s) => s.values.clone(),
            None => {
                let (s, _) = synth_at(&pure, r.regime_i_fraction * delta, cfg.k_max())?;
                linspace(8.0, 161).iter().map(|&t| s.snapshot(t, None).map(|x| x.norms[0].fluid)).collect::<Result<Vec<_>>>()?
            }
        };
        m.push(Measurement::at_most("regime I max fluid norm", fluid1.iter().copied().fold(0.0, f64::max), 1e-14));

        // regime II: fluid decay rate against c (βε)²
        let eps = cfg.grid.epsilon;
        let ts = linspace(r.regime_ii_horizon / (eps * eps), r.regime_ii_samples);
        let (mut kap2, mut rates) = (Vec::new(), Vec::new());
        let mut new_series = Vec::new();
        for &frac in &r.regime_ii_fractions {
            let be = frac * delta;
            let (s, _) = synth_at(&pure, be, cfg.k_max())?;
            let fl = ts.iter().map(|&t| s.snapshot(t, None).map(|x| x.norms[0].fluid)).collect::<Result<Vec<_>>>()?;
            let fit = fit_decay_envelope(&ts, &fl, DecayModel::Exp, default_window(&ts))?;
            kap2.push(be * be);
            rates.push(fit.rate);
            st.report.fits.insert(format!("regime2_fluid_{frac}"), fit);
            new_series.push(RegimeSeries { name: format!("regime2_fluid_{frac}"), beta_epsilon: be, times: ts.clone(), values: fl });
        }
        // least squares for rate ≈ c κ²
        let c = rates.iter().zip(&kap2).map(|(r, k)| r * k).sum::<f64>() / kap2.iter().map(|k| k * k).sum::<f64>();
        for ((frac, rate), k2) in r.regime_ii_fractions.iter().zip(&rates).zip(&kap2) {
            let q = rate / (c * k2);
            m.push(Measurement::at_least(format!("regime II rate / (c kappa^2) at {frac} delta"), q, 0.3));
            m.push(Measurement::at_most(format!("regime II rate / (c kappa^2) at {frac} delta"), q, 3.0));
        }
        let n = rates.len();
        let ratio = (rates[n - 1] / rates[0]) / (kap2[n - 1] / kap2[0]);
        m.push(Measurement::within("regime II rate ratio / kappa^2 ratio", ratio, 1.0, 0.4));
        notes.push(format!("fitted c = {c:.5}"));
        if let Some(fit) = &st.report.branch_fit {
            notes.push(format!("smallest branch a2 = {:.5}", fit.a2.iter().copied().fold(f64::INFINITY, f64::min)));
        }

        // regime III: spreading of a narrow bump
        let be3 = r.regime_iii_fraction * delta;
        let (s, tail) = synth_at(&r.regime_iii_profile.resolve()?, be3, r.regime_iii_k_max)?;
        let unit_t = 1.0 / (be3 * be3);
        let (w0, w1) = (r.envelope_window.0 * unit_t, r.envelope_window.1 * unit_t);
        let mut times = logspace(1.0, 1.1 * w1, r.envelope_samples);
        times.extend([r.mode_sum_range.0, r.mode_sum_range.1]);
        times.sort_by(f64::total_cmp);
        times.dedup();
        let env = s.fluid_envelope(&times)?;
        let fit = fit_decay_envelope(&env.times, &env.fluid_majorant, DecayModel::PolyExp, (w0, w1))?;
        m.push(Measurement::within("regime III envelope exponent", fit.poly_order, 1.5, 0.3));
        let dev = env.mode_sum_deviation(r.mode_sum_range.0, r.mode_sum_range.1);
        m.push(Measurement::at_most("regime III |mode sum / Gaussian integral - 1|", dev, r.alpha0));
        notes.push(format!("regime III at beta*eps = {be3}, window [{w0:.1}, {w1:.1}], Fourier tail {tail:.2e}"));
        st.report.fits.insert("regime3_majorant".into(), fit);
        if let Ok(f) = fit_decay_envelope(&env.times, &env.fluid_origin, DecayModel::PolyExp, (w0, w1)) {
            st.report.fits.insert("regime3_origin".into(), f);
        }
        st.report.regime_three = Some(env);
        st.regimes.extend(new_series);
        Ok((m, notes))
    }
}

/// Runs `stages` over every configured `γ` and writes artifacts into `out`.
/// On a stage failure MANIFEST.json and a partial report are still written.
pub fn run_stages(cfg: &SuiteConfig, stages: &[Stage], out: &Path, opts: RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let mut stages = stages.to_vec();
    stages.sort();
    stages.dedup();
    let slow = opts.slow || cfg.slow;
    let mut runner = Runner { cfg, slow, export: opts.export_operators, out: out.to_path_buf(), manifest: Manifest::default(), checks: Vec::new() };
    let mut states: Vec<GammaState> = Vec::new();
    let mut timing = Vec::new();
    let result = (|| -> Result<()> {
        for &stage in &stages {
            let start = Instant::now();
            runner.manifest.failed_stage = Some(stage);
            info!("stage {}", stage.name());
            if stage == Stage::Assemble {
                for &g in &cfg.gammas {
                    states.push(runner.assemble(g)?);
                }
            } else {
                if states.is_empty() {
                    return Err(Error::InvalidArgument(format!("stage {} needs the assemble stage", stage.name())));
                }
                for st in states.iter_mut() {
                    match stage {
                        Stage::Gap => runner.gap(st)?,
                        Stage::Branches => runner.branches(st)?,
                        Stage::Chain => runner.chain(st)?,
                        Stage::Green => runner.green(st)?,
                        Stage::Fits => runner.fits(st)?,
                        Stage::Assemble => unreachable!(),
                    }
                }
            }
            runner.manifest.failed_stage = None;
            runner.manifest.completed_stages.push(stage);
            timing.push(StageTiming { stage: stage.name().into(), seconds: start.elapsed().as_secs_f64() });
        }
        Ok(())
    })();

    // A10 parts left over when the green stage did not run
    for st in states.iter_mut() {
        if let Some(res) = st.a10.take() {
            runner.push("A10", Some(st.gamma), res);
        }
    }
    if !slow && stages.contains(&Stage::Branches) {
        runner.skip("A4", "slow only");
    }
    if !slow && stages.contains(&Stage::Fits) {
        runner.skip("A9", "slow only");
    }
    if let Err(e) = &result {
        runner.manifest.error = Some(e.to_string());
    }

    let mut checks = std::mem::take(&mut runner.checks);
    checks.sort_by_key(|c| CHECK_IDS.iter().position(|id| *id == c.id).unwrap_or(usize::MAX));
    let passed = result.is_ok() && checks.iter().all(|c| c.status != CheckStatus::Failed);
    let report = RunReport {
        config: cfg.clone(),
        slow,
        stages: stages.clone(),
        gammas: states.into_iter().map(|s| s.report).collect(),
        checks,
        passed,
        wall_clock: timing,
    };
    if result.is_ok() {
        let fits: BTreeMap<String, &BTreeMap<String, DecayFit>> = report.gammas.iter().map(|g| (tag(g.gamma), &g.fits)).collect();
        write_json(&runner.file("fits.json"), &fits)?;
    }
    let report_path = runner.file("report.json");
    let manifest_path = runner.file("MANIFEST.json");
    write_json(&report_path, &report)?;
    write_json(&manifest_path, &runner.manifest)?;
    result.map(|_| report)
}

/// Full suite from a config file.
pub fn run_suite(config_path: &Path, out: &Path, slow: bool) -> Result<RunReport> {
    let cfg = SuiteConfig::load(config_path)?;
    run_stages(&cfg, &Stage::ALL, out, RunOptions { slow, export_operators: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measurement_relations() {
        assert!(Measurement::at_most("x", 1.0, 1.0).passed);
        assert!(!Measurement::at_most("x", 1.0 + 1e-12, 1.0).passed);
        assert!(Measurement::at_least("x", 2.0, 1.0).passed);
        assert!(Measurement::within("x", 1.3, 1.5, 0.3).passed);
        assert!(!Measurement::within("x", 1.9, 1.5, 0.3).passed);
        assert!(!Measurement::at_most("x", f64::NAN, 1.0).passed);
        assert!(!Measurement::positive("x", 0.0).passed);
        assert!(!Measurement::finite("x", f64::INFINITY).passed);
    }

    #[test]
    fn empty_measurements_fail() {
        assert_eq!(CheckResult::from_measurements("A1", None, vec![], vec![]).status, CheckStatus::Failed);
    }

    #[test]
    fn dispersion_scoring() {
        let s = (5.0f64 / 3.0).sqrt();
        let speeds = [-s, 0.0, 0.0, 0.0, s];
        let fit = |err: f64| BranchFit {
            a1: [s * (1.0 + err), 0.0, -s * (1.0 + err), err, 0.0],
            a2: [0.1; 5],
            a3: [0.0; 5],
            a4: [0.0; 5],
            fit_residual: [0.0; 5],
            kappa_window: (0.0, 0.2),
        };
        let m = dispersion_measurements(&fit(0.05), &fit(0.01), speeds, 0.03, 15);
        assert!(m.iter().all(|x| x.passed), "{m:?}");
        let m = dispersion_measurements(&fit(0.01), &fit(0.05), speeds, 0.03, 15);
        assert!(!m.last().unwrap().passed);
    }

    #[test]
    fn display_line_carries_values() {
        let r = CheckResult::from_measurements("A8", Some(-1.0), vec![Measurement::within("slope", 0.9, 1.0, 0.3)], vec![]);
        let s = r.to_string();
        assert!(s.starts_with("A8 PASS K_s scaling [gamma=-1]"), "{s}");
        assert!(s.contains("9.0000e-1 ~ 1.0000e0 +- 3.00e-1"), "{s}");
    }
}
