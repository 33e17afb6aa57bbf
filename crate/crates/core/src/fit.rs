//! Decay-envelope fits and regime classification.

use ndarray::{Array1, Array2};
use ndarray_linalg::LeastSquaresSvd;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mode::BETA;
use crate::spectral::GapEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecayModel {
    /// `v = C e^{−rt}`
    Exp,
    /// `v = C (1+t)^{−p} e^{−rt}`
    PolyExp,
    /// `v = C t^p e^{−rt}`, for quantities that vanish at `t = 0`
    PowerExp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    pub rate: f64,
    /// `p` in `C t^p` (power model) or `C (1+t)^{−p}` (polynomial model); 0 otherwise.
    pub poly_order: f64,
    pub prefactor: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    /// Whether the upper envelope replaced the raw samples.
    pub enveloped: bool,
}

/// Ordinary least squares `y ≈ a x + b`; returns `(a, b, r²)`.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("regression needs two or more paired samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument("degenerate regression design".into()));
    }
    let a = sxy / sxx;
    let b = my - a * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(u, v)| (v - a * u - b).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    Ok((a, b, r_squared(ss_res, ss_tot)))
}

fn r_squared(ss_res: f64, ss_tot: f64) -> f64 {
    if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else if ss_res <= 1e-24 {
        1.0
    } else {
        0.0
    }
}

/// Default window: drop `t < 0.5` and the last 10 % of the span.
pub fn default_window(times: &[f64]) -> (f64, f64) {
    let (t0, t1) = (times[0], times[times.len() - 1]);
    (t0.max(0.5), t1 - 0.1 * (t1 - t0))
}

/// Fit over every sample with `lo ≤ t ≤ hi`.
pub fn fit_decay_windowed(times: &[f64], values: &[f64], model: DecayModel, window: (f64, f64)) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::LengthMismatch { expected: times.len(), got: values.len() });
    }
    let sel: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= window.0 && times[i] <= window.1).collect();
    let t: Vec<f64> = sel.iter().map(|&i| times[i]).collect();
    let v: Vec<f64> = sel.iter().map(|&i| values[i]).collect();
    let mut fit = fit_decay(&t, &v, model)?;
    fit.window = window;
    Ok(fit)
}

/// Fit of `log v` on all samples.
pub fn fit_decay(times: &[f64], values: &[f64], model: DecayModel) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::LengthMismatch { expected: times.len(), got: values.len() });
    }
    if times.len() < 8 {
        return Err(Error::InvalidArgument(format!("decay fit needs at least 8 samples, got {}", times.len())));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("decay fit needs positive finite values, got {v}")));
    }
    if model == DecayModel::PowerExp && times.iter().any(|&t| t <= 0.0) {
        return Err(Error::InvalidArgument("power model needs t > 0".into()));
    }
    let window = (times[0], times[times.len() - 1]);
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    if model == DecayModel::Exp {
        let (a, b, r2) = linear_regression(times, &y)?;
        return Ok(DecayFit { model, rate: -a, poly_order: 0.0, prefactor: b.exp(), window, r_squared: r2, enveloped: false });
    }
    let n = times.len();
    let mut design = Array2::<f64>::zeros((n, 3));
    for (i, &t) in times.iter().enumerate() {
        design[[i, 0]] = 1.0;
        design[[i, 1]] = match model {
            DecayModel::PolyExp => (1.0 + t).ln(),
            _ => t.ln(),
        };
        design[[i, 2]] = -t;
    }
    let rhs = Array1::from(y.clone());
    let sol = design.least_squares(&rhs).map_err(|e| Error::Linalg(e.to_string()))?;
    let sv = sol.singular_values;
    if sol.rank < 3 || sv[sv.len() - 1] <= 1e-12 * sv[0] {
        return Err(Error::InvalidArgument("degenerate decay-fit design matrix".into()));
    }
    let c = sol.solution;
    let pred = design.dot(&c);
    let my = y.iter().sum::<f64>() / n as f64;
    let ss_res: f64 = y.iter().zip(pred.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let poly_order = match model {
        DecayModel::PolyExp => -c[1],
        _ => c[1],
    };
    Ok(DecayFit { model, rate: c[2], poly_order, prefactor: c[0].exp(), window, r_squared: r_squared(ss_res, ss_tot), enveloped: false })
}

/// True when `v` rises somewhere, i.e. the series is not a clean decay.
fn oscillates(values: &[f64]) -> bool {
    values.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12))
}

/// Upper envelope of a beating series: the endpoints and local maxima are
/// kept, and between consecutive peaks `log v` is replaced by the larger of
/// itself and the straight line through the two peaks.
pub fn upper_envelope(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut peaks = vec![0];
    for i in 1..n.saturating_sub(1) {
        if values[i] >= values[i - 1] && values[i] >= values[i + 1] {
            peaks.push(i);
        }
    }
    if n > 1 {
        peaks.push(n - 1);
    }
    let mut env = values.to_vec();
    for w in peaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (la, lb) = (values[a].ln(), values[b].ln());
        for i in a + 1..b {
            let s = (times[i] - times[a]) / (times[b] - times[a]);
            env[i] = env[i].max((la + s * (lb - la)).exp());
        }
    }
    env
}

/// Fit inside `window`, on the upper envelope when the samples oscillate.
/// Monotone series are fitted directly.
pub fn fit_decay_envelope(times: &[f64], values: &[f64], model: DecayModel, window: (f64, f64)) -> Result<DecayFit> {
    let sel: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= window.0 && times[i] <= window.1).collect();
    let t: Vec<f64> = sel.iter().map(|&i| times[i]).collect();
    let v: Vec<f64> = sel.iter().map(|&i| values[i]).collect();
    let enveloped = model != DecayModel::PowerExp && oscillates(&v);
    let data = if enveloped { upper_envelope(&t, &v) } else { v };
    let fit = fit_decay(&t, &data, model)?;
    Ok(DecayFit { window, enveloped, ..fit })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    I,
    II,
    III,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::I => "I",
            Regime::II => "II",
            Regime::III => "III",
        })
    }
}

/// Regime from the smallest nonzero transport wavenumber `βε` against `δ̂`.
pub fn classify_regime(epsilon: f64, gap: &GapEstimate) -> Regime {
    let kappa1 = BETA * epsilon;
    if kappa1 > gap.delta_hat {
        Regime::I
    } else if kappa1 <= 0.1 * gap.delta_hat {
        Regime::III
    } else {
        Regime::II
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_times(n: usize, t1: f64) -> Vec<f64> {
        (0..n).map(|i| t1 * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn exact_exponential() {
        let t = grid_times(40, 10.0);
        let v: Vec<f64> = t.iter().map(|t| 3.0 * (-0.8 * t).exp()).collect();
        let f = fit_decay(&t, &v, DecayModel::Exp).unwrap();
        assert!((f.rate - 0.8).abs() < 1e-10);
        assert!((f.prefactor - 3.0).abs() < 1e-10);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_poly_exp() {
        let t = grid_times(60, 50.0);
        let v: Vec<f64> = t.iter().map(|t| (1.0 + t).powf(-1.5) * (-0.02 * t).exp()).collect();
        let f = fit_decay(&t, &v, DecayModel::PolyExp).unwrap();
        assert!((f.poly_order - 1.5).abs() < 1e-8, "{}", f.poly_order);
        assert!((f.rate - 0.02).abs() < 1e-8);
    }

    #[test]
    fn noisy_poly_exp_exponent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = grid_times(60, 50.0);
        let v: Vec<f64> = t.iter().map(|t| (1.0 + t).powf(-1.5) * (-0.02 * t).exp() * (1.0 + 0.01 * (2.0 * rng.gen::<f64>() - 1.0))).collect();
        let f = fit_decay(&t, &v, DecayModel::PolyExp).unwrap();
        assert!((f.poly_order - 1.5).abs() < 0.15, "{}", f.poly_order);
    }

    #[test]
    fn power_model_recovers_growth_order() {
        let t: Vec<f64> = (1..50).map(|i| 0.2 * i as f64).collect();
        let v: Vec<f64> = t.iter().map(|t| 0.5 * t.powi(3) * (-0.7 * t).exp()).collect();
        let f = fit_decay(&t, &v, DecayModel::PowerExp).unwrap();
        assert!((f.poly_order - 3.0).abs() < 1e-9);
        assert!((f.rate - 0.7).abs() < 1e-9);
    }

    #[test]
    fn envelope_recovers_rate_of_beating_series() {
        let t = grid_times(400, 20.0);
        let v: Vec<f64> = t.iter().map(|t| (-0.3 * t).exp() * (1.0 + 0.9 * (3.0 * t).cos()).max(1e-3)).collect();
        let raw = fit_decay_windowed(&t, &v, DecayModel::Exp, (0.5, 18.0)).unwrap();
        let env = fit_decay_envelope(&t, &v, DecayModel::Exp, (0.5, 18.0)).unwrap();
        assert!(env.enveloped);
        assert!((env.rate - 0.3).abs() < 0.02, "{}", env.rate);
        assert!(env.r_squared > raw.r_squared);
    }

    #[test]
    fn rejects_bad_input() {
        let t = grid_times(5, 1.0);
        assert!(fit_decay(&t, &[1.0; 5], DecayModel::Exp).is_err());
        let t = grid_times(10, 1.0);
        let mut v = vec![1.0; 10];
        v[3] = -1.0;
        assert!(fit_decay(&t, &v, DecayModel::Exp).is_err());
        assert!(fit_decay(&[1.0; 10], &[1.0; 10], DecayModel::PolyExp).is_err());
    }

    #[test]
    fn default_window_trims_transient_and_tail() {
        let t = grid_times(11, 10.0);
        assert_eq!(default_window(&t), (0.5, 9.0));
    }

    #[test]
    fn regimes() {
        let gap = GapEstimate { tau_hat: 1.0, delta_hat: 2.0, kappa_step: 0.05, kappa_max: 2.0, saturated: true, scan: vec![], fluid_min_re: vec![] };
        let eps = |c: f64| c * gap.delta_hat / BETA;
        assert_eq!(classify_regime(eps(2.0), &gap), Regime::I);
        assert_eq!(classify_regime(eps(0.5), &gap), Regime::II);
        assert_eq!(classify_regime(eps(0.05), &gap), Regime::III);
    }
}
