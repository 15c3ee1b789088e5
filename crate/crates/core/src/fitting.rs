//! Least-squares extraction of frequency and damping from a sampled signal.
//!
//! The model is `y = a exp(-g tau) cos(W tau + phi) + c` with
//! `tau = t - t_ref`, where `t_ref` is the first sample inside the window.
//! Referencing the window start keeps the fit invariant under a common time
//! shift of samples and window.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, Median};

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 20;
pub const MAX_ITERATIONS: usize = 500;
pub const STEP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub start: f64,
    pub end: f64,
}

impl FitWindow {
    pub fn new(start: f64, end: f64) -> Self {
        FitWindow { start, end }
    }

    pub fn all() -> Self {
        FitWindow {
            start: f64::NEG_INFINITY,
            end: f64::INFINITY,
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampedFit {
    pub omega: f64,
    pub gamma: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    pub t_ref: f64,
    pub residual_rms: f64,
    pub converged: bool,
    /// Set when the series carries no signal to fit (constant input).
    pub degenerate: bool,
    pub iterations: usize,
    pub samples: usize,
}

impl DampedFit {
    pub fn evaluate(&self, t: f64) -> f64 {
        let tau = t - self.t_ref;
        self.amplitude * (-self.gamma * tau).exp() * (self.omega * tau + self.phase).cos() + self.offset
    }
}

/// `Q = W / g`; `+inf` when the decay rate vanishes.
pub fn quality_of(fit: &DampedFit) -> Result<f64> {
    if !fit.converged {
        return Err(Error::Fit(format!(
            "quality factor of a non-converged fit ({} iterations, rms {:e})",
            fit.iterations, fit.residual_rms
        )));
    }
    if fit.gamma < 1e-12 {
        return Ok(f64::INFINITY);
    }
    Ok(fit.omega / fit.gamma)
}

fn select(t: &[f64], y: &[f64], window: FitWindow) -> Result<(Vec<f64>, Vec<f64>)> {
    if t.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: t.len(),
            got: y.len(),
        });
    }
    let (ts, ys): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(y)
        .filter(|(ti, _)| window.contains(**ti))
        .map(|(a, b)| (*a, *b))
        .unzip();
    if ts.len() < MIN_SAMPLES {
        return Err(Error::Fit(format!(
            "{} samples in window [{}, {}], need at least {MIN_SAMPLES}",
            ts.len(),
            window.start,
            window.end
        )));
    }
    if ts.iter().chain(&ys).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite sample in fit window".into()));
    }
    if ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Fit("sample times must be strictly increasing".into()));
    }
    Ok((ts, ys))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn constant_fit(t_ref: f64, ys: &[f64]) -> Option<DampedFit> {
    let c = mean(ys);
    let spread = ys.iter().map(|y| (y - c).abs()).fold(0.0, f64::max);
    if spread > 1e-14 * c.abs().max(1e-300) && spread > 1e-300 {
        return None;
    }
    Some(DampedFit {
        omega: 0.0,
        gamma: 0.0,
        amplitude: 0.0,
        phase: 0.0,
        offset: c,
        t_ref,
        residual_rms: rms(ys.iter().map(|y| y - c)),
        converged: true,
        degenerate: true,
        iterations: 0,
        samples: ys.len(),
    })
}

fn rms(r: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = r.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (sum / n.max(1) as f64).sqrt()
}

fn zero_crossings(tau: &[f64], y: &[f64], level: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..y.len() {
        let (a, b) = (y[i - 1] - level, y[i] - level);
        if a == 0.0 && i == 1 {
            out.push(tau[0]);
        }
        if (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0) {
            out.push(tau[i - 1] + (tau[i] - tau[i - 1]) * a / (a - b));
        }
    }
    out
}

/// Slope of log|y - c| at the per-lobe maxima between crossings.
fn envelope_rate(tau: &[f64], y: &[f64], level: f64, crossings: &[f64]) -> f64 {
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend_from_slice(crossings);
    edges.push(f64::INFINITY);
    let mut pts = Vec::new();
    for w in edges.windows(2) {
        let peak = tau
            .iter()
            .zip(y)
            .filter(|(t, _)| **t > w[0] && **t < w[1])
            .map(|(t, v)| (*t, (v - level).abs()))
            .fold(None, |best: Option<(f64, f64)>, p| match best {
                Some(b) if b.1 >= p.1 => Some(b),
                _ => Some(p),
            });
        if let Some((t, v)) = peak {
            if v > 0.0 {
                pts.push((t, v.ln()));
            }
        }
    }
    if pts.len() < 2 {
        return 0.0;
    }
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        (-sxy / sxx).max(0.0)
    }
}

/// Linear least squares for the coefficients of fixed basis columns.
fn linear_coefficients(columns: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let a = DMatrix::from_fn(y.len(), columns.len(), |i, j| columns[j][i]);
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-14).ok().map(|x| x.as_slice().to_vec())
}

trait Model<const P: usize> {
    fn value_and_gradient(&self, p: &SVector<f64, P>, tau: f64) -> (f64, SVector<f64, P>);
    /// Project onto the admissible set (non-negative decay rate).
    fn project(&self, p: &mut SVector<f64, P>);
}

/// `[a, g, W, phi, c]`
struct Oscillating;

impl Model<5> for Oscillating {
    fn value_and_gradient(&self, p: &SVector<f64, 5>, tau: f64) -> (f64, SVector<f64, 5>) {
        let (a, g, w, phi) = (p[0], p[1], p[2], p[3]);
        let e = (-g * tau).exp();
        let (s, c) = (w * tau + phi).sin_cos();
        let value = a * e * c + p[4];
        let grad = SVector::<f64, 5>::from([e * c, -tau * a * e * c, -tau * a * e * s, -a * e * s, 1.0]);
        (value, grad)
    }

    fn project(&self, p: &mut SVector<f64, 5>) {
        p[1] = p[1].max(0.0);
    }
}

/// `[a, g, c]`
struct Decaying;

impl Model<3> for Decaying {
    fn value_and_gradient(&self, p: &SVector<f64, 3>, tau: f64) -> (f64, SVector<f64, 3>) {
        let e = (-p[1] * tau).exp();
        (p[0] * e + p[2], SVector::<f64, 3>::from([e, -tau * p[0] * e, 1.0]))
    }

    fn project(&self, p: &mut SVector<f64, 3>) {
        p[1] = p[1].max(0.0);
    }
}

struct LmOutcome<const P: usize> {
    params: SVector<f64, P>,
    cost: f64,
    iterations: usize,
    converged: bool,
}

fn cost_of<const P: usize>(m: &impl Model<P>, p: &SVector<f64, P>, tau: &[f64], y: &[f64]) -> f64 {
    tau.iter()
        .zip(y)
        .map(|(t, v)| (m.value_and_gradient(p, *t).0 - v).powi(2))
        .sum()
}

fn levenberg_marquardt<const P: usize>(
    model: &impl Model<P>,
    mut p: SVector<f64, P>,
    tau: &[f64],
    y: &[f64],
) -> LmOutcome<P> {
    let mut lambda = 1e-3;
    let mut cost = cost_of(model, &p, tau, y);
    for iter in 1..=MAX_ITERATIONS {
        let mut jtj = SMatrix::<f64, P, P>::zeros();
        let mut jtr = SVector::<f64, P>::zeros();
        for (t, v) in tau.iter().zip(y) {
            let (f, g) = model.value_and_gradient(&p, *t);
            jtj += g * g.transpose();
            jtr += g * (f - v);
        }
        if cost == 0.0 || jtr.norm() == 0.0 {
            return LmOutcome { params: p, cost, iterations: iter, converged: true };
        }
        loop {
            let mut damped = jtj;
            for k in 0..P {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let step = match damped.cholesky() {
                Some(ch) => -ch.solve(&jtr),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        return LmOutcome { params: p, cost, iterations: iter, converged: true };
                    }
                    continue;
                }
            };
            let mut trial = p + step;
            model.project(&mut trial);
            let trial_cost = cost_of(model, &trial, tau, y);
            if trial_cost.is_finite() && trial_cost <= cost {
                let moved = (trial - p).norm();
                p = trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                if moved <= STEP_TOLERANCE * (p.norm() + STEP_TOLERANCE) {
                    return LmOutcome { params: p, cost, iterations: iter, converged: true };
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                // no descent direction left at working precision
                return LmOutcome { params: p, cost, iterations: iter, converged: true };
            }
        }
    }
    LmOutcome { params: p, cost, iterations: MAX_ITERATIONS, converged: false }
}

/// Fit `y = a exp(-g tau) + c` (no oscillation) over the window.
pub fn fit_pure_decay(t: &[f64], y: &[f64], window: FitWindow) -> Result<DampedFit> {
    let (ts, ys) = select(t, y, window)?;
    let t_ref = ts[0];
    if let Some(fit) = constant_fit(t_ref, &ys) {
        return Ok(fit);
    }
    let tau: Vec<f64> = ts.iter().map(|v| v - t_ref).collect();
    Ok(decay_fit(t_ref, &tau, &ys))
}

fn decay_fit(t_ref: f64, tau: &[f64], ys: &[f64]) -> DampedFit {
    let span = tau[tau.len() - 1];
    // coarse log-spaced scan over g with (a, c) solved linearly
    let mut best: Option<(f64, SVector<f64, 3>)> = None;
    for k in 0..=120 {
        let g = 1e-3 / span * 10f64.powf(k as f64 / 20.0);
        let col: Vec<f64> = tau.iter().map(|t| (-g * t).exp()).collect();
        if let Some(ac) = linear_coefficients(&[col, vec![1.0; tau.len()]], ys) {
            let p = SVector::<f64, 3>::from([ac[0], g, ac[1]]);
            let c = cost_of(&Decaying, &p, tau, ys);
            if best.as_ref().is_none_or(|b| c < b.0) {
                best = Some((c, p));
            }
        }
    }
    let start = best.map(|b| b.1).unwrap_or_else(|| SVector::<f64, 3>::from([ys[0], 0.0, 0.0]));
    let out = levenberg_marquardt(&Decaying, start, tau, ys);
    let p = out.params;
    DampedFit {
        omega: 0.0,
        gamma: p[1],
        amplitude: p[0],
        phase: 0.0,
        offset: p[2],
        t_ref,
        residual_rms: (out.cost / ys.len() as f64).sqrt(),
        converged: out.converged,
        degenerate: false,
        iterations: out.iterations,
        samples: ys.len(),
    }
}

/// Damped-cosine fit. Series with fewer than two crossings of their median
/// are fitted with the non-oscillating model and report `omega = 0`.
pub fn fit_damped_cosine(t: &[f64], y: &[f64], window: FitWindow) -> Result<DampedFit> {
    let (ts, ys) = select(t, y, window)?;
    let t_ref = ts[0];
    if let Some(fit) = constant_fit(t_ref, &ys) {
        return Ok(fit);
    }
    let tau: Vec<f64> = ts.iter().map(|v| v - t_ref).collect();
    // The median sits near the asymptote of a damped trace, where the mean is
    // dragged off by the first lobe.
    let level = Data::new(ys.clone()).median();
    let crossings = zero_crossings(&tau, &ys, level);
    if crossings.len() < 2 {
        return Ok(decay_fit(t_ref, &tau, &ys));
    }
    let spacing = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
    let omega0 = std::f64::consts::PI / spacing;
    let gamma0 = envelope_rate(&tau, &ys, level, &crossings);

    let mut best: Option<(LmOutcome<5>, f64)> = None;
    for scale in [1.0, 0.9, 1.1] {
        let w = omega0 * scale;
        let damp: Vec<f64> = tau.iter().map(|t| (-gamma0 * t).exp()).collect();
        let cos_col: Vec<f64> = tau.iter().zip(&damp).map(|(t, e)| e * (w * t).cos()).collect();
        let sin_col: Vec<f64> = tau.iter().zip(&damp).map(|(t, e)| e * (w * t).sin()).collect();
        let Some(coef) = linear_coefficients(&[cos_col, sin_col, vec![1.0; tau.len()]], &ys) else {
            continue;
        };
        // a cos(x + phi) = a cos(phi) cos x - a sin(phi) sin x
        let amp = coef[0].hypot(coef[1]);
        let phi = (-coef[1]).atan2(coef[0]);
        let start = SVector::<f64, 5>::from([amp, gamma0, w, phi, coef[2]]);
        let out = levenberg_marquardt(&Oscillating, start, &tau, &ys);
        let cost = out.cost;
        if best.as_ref().is_none_or(|b| cost < b.1) {
            best = Some((out, cost));
        }
    }
    let Some((out, _)) = best else {
        return Err(Error::Fit("initial linear solve failed".into()));
    };
    let mut p = out.params;
    // canonical sign: positive amplitude and frequency, phase in (-pi, pi]
    if p[2] < 0.0 {
        p[2] = -p[2];
        p[3] = -p[3];
    }
    if p[0] < 0.0 {
        p[0] = -p[0];
        p[3] += std::f64::consts::PI;
    }
    p[3] = wrap_phase(p[3]);
    Ok(DampedFit {
        omega: p[2],
        gamma: p[1],
        amplitude: p[0],
        phase: p[3],
        offset: p[4],
        t_ref,
        residual_rms: (out.cost / ys.len() as f64).sqrt(),
        converged: out.converged,
        degenerate: false,
        iterations: out.iterations,
        samples: ys.len(),
    })
}

fn wrap_phase(phi: f64) -> f64 {
    use std::f64::consts::PI;
    let mut v = phi.rem_euclid(2.0 * PI);
    if v > PI {
        v -= 2.0 * PI;
    }
    v
}
