//! Short-iterative-Lanczos time stepping.
//!
//! Each step freezes the Hamiltonian at the interval midpoint, builds an
//! orthonormal Krylov basis from the current state, and exponentiates the
//! projected tridiagonal matrix exactly:
//! `psi(t + dt) = V exp(-i T dt) V^+ psi(t)` with `T = V^+ H(t + dt/2) V`.

use log::{debug, warn};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{FieldSchedule, SparseHamiltonian};
use crate::state::{axpy, dot, norm_sqr, StateVector};

pub const MAX_KRYLOV_DIM: usize = 64;
/// Norm drift above which the state is renormalized (and the event counted).
pub const RENORMALIZE_THRESHOLD: f64 = 1e-10;
/// Per-step norm change that aborts the propagation.
pub const ABORT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SilParams {
    pub dt: f64,
    pub krylov_dim: usize,
    pub breakdown_tol: f64,
    pub reorthogonalize: bool,
}

impl SilParams {
    /// Defaults scaled to the bath cutoff: `dt = 0.02 / omega_c`, `n = 12`.
    pub fn for_cutoff(omega_c: f64) -> Self {
        SilParams {
            dt: 0.02 / omega_c,
            ..Default::default()
        }
    }

    pub fn with_dt(self, dt: f64) -> Self {
        SilParams { dt, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Domain(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(2..=MAX_KRYLOV_DIM).contains(&self.krylov_dim) {
            return Err(Error::Domain(format!(
                "krylov_dim must be in 2..={MAX_KRYLOV_DIM}, got {}",
                self.krylov_dim
            )));
        }
        if !(self.breakdown_tol >= 0.0) {
            return Err(Error::Domain("breakdown_tol must be >= 0".into()));
        }
        Ok(())
    }
}

impl Default for SilParams {
    fn default() -> Self {
        SilParams {
            dt: 0.004,
            krylov_dim: 12,
            breakdown_tol: 1e-13,
            reorthogonalize: true,
        }
    }
}

/// Anything that can apply `H(t)` to a vector.
pub trait HamiltonianAction: Sync {
    fn dimension(&self) -> usize;
    fn apply_at(&self, t: f64, psi: &[Complex64], out: &mut [Complex64]) -> Result<()>;
}

/// Stored operators plus a field schedule.
#[derive(Debug, Clone, Copy)]
pub struct DrivenHamiltonian<'a> {
    pub ops: &'a SparseHamiltonian,
    pub schedule: &'a FieldSchedule,
}

impl HamiltonianAction for DrivenHamiltonian<'_> {
    fn dimension(&self) -> usize {
        self.ops.dimension()
    }

    fn apply_at(&self, t: f64, psi: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        let field = self.schedule.field_at(t)?;
        self.ops.apply_with_field(field, psi, out)
    }
}

/// Lanczos basis and tridiagonal coefficients for one step.
#[derive(Debug, Clone)]
pub struct KrylovProjection {
    pub basis: Vec<Vec<Complex64>>,
    /// Diagonal of `T`.
    pub alphas: Vec<f64>,
    /// Off-diagonal of `T` (length `basis.len() - 1`).
    pub betas: Vec<f64>,
    /// Norm of the starting vector.
    pub start_norm: f64,
    pub breakdown: bool,
}

impl KrylovProjection {
    pub fn dim(&self) -> usize {
        self.alphas.len()
    }

    pub fn tridiagonal(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut t = DMatrix::zeros(n, n);
        for i in 0..n {
            t[(i, i)] = self.alphas[i];
            if i + 1 < n {
                t[(i, i + 1)] = self.betas[i];
                t[(i + 1, i)] = self.betas[i];
            }
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub subspace_dim: usize,
    pub breakdown: bool,
}

/// Reusable Krylov workspace.
#[derive(Debug, Clone)]
pub struct SilPropagator {
    params: SilParams,
    basis: Vec<Vec<Complex64>>,
    work: Vec<Complex64>,
}

impl SilPropagator {
    pub fn new(params: SilParams, dimension: usize) -> Result<Self> {
        params.validate()?;
        let zero = Complex64::new(0.0, 0.0);
        let n = params.krylov_dim.min(dimension.max(1));
        Ok(SilPropagator {
            params,
            basis: vec![vec![zero; dimension]; n],
            work: vec![zero; dimension],
        })
    }

    pub fn params(&self) -> &SilParams {
        &self.params
    }

    /// Lanczos recursion with optional full reorthogonalization. Fills
    /// `self.basis[..dim]` and returns `(alphas, betas, breakdown)`.
    fn lanczos<H: HamiltonianAction + ?Sized>(
        &mut self,
        h: &H,
        t: f64,
        psi: &[Complex64],
        start_norm: f64,
    ) -> Result<(Vec<f64>, Vec<f64>, bool)> {
        let n = self.basis.len();
        let mut alphas = Vec::with_capacity(n);
        let mut betas: Vec<f64> = Vec::with_capacity(n);
        let inv = 1.0 / start_norm;
        self.basis[0]
            .iter_mut()
            .zip(psi)
            .for_each(|(v, p)| *v = p * inv);

        let mut breakdown = false;
        for j in 0..n {
            h.apply_at(t, &self.basis[j], &mut self.work)?;
            let mut alpha = dot(&self.basis[j], &self.work).re;
            axpy(Complex64::new(-alpha, 0.0), &self.basis[j], &mut self.work);
            if j > 0 {
                axpy(Complex64::new(-betas[j - 1], 0.0), &self.basis[j - 1], &mut self.work);
            }
            if self.params.reorthogonalize {
                for i in 0..=j {
                    let c = dot(&self.basis[i], &self.work);
                    axpy(-c, &self.basis[i], &mut self.work);
                    if i == j {
                        alpha += c.re;
                    }
                }
            }
            alphas.push(alpha);
            if j + 1 == n {
                break;
            }
            let beta = norm_sqr(&self.work).sqrt();
            if !beta.is_finite() {
                return Err(Error::NonFinite { t });
            }
            if beta < self.params.breakdown_tol {
                breakdown = true;
                break;
            }
            betas.push(beta);
            let inv = 1.0 / beta;
            self.basis[j + 1]
                .iter_mut()
                .zip(&self.work)
                .for_each(|(v, w)| *v = w * inv);
        }
        Ok((alphas, betas, breakdown))
    }

    /// Krylov basis of `psi` under `H(t)` without stepping, for inspection.
    pub fn project<H: HamiltonianAction + ?Sized>(
        &mut self,
        h: &H,
        t: f64,
        psi: &StateVector,
    ) -> Result<KrylovProjection> {
        let start_norm = psi.norm();
        let (alphas, betas, breakdown) = self.lanczos(h, t, psi.amplitudes(), start_norm)?;
        Ok(KrylovProjection {
            basis: self.basis[..alphas.len()].to_vec(),
            alphas,
            betas,
            start_norm,
            breakdown,
        })
    }

    /// Advance `psi` from `t` to `t + dt` in place using `H(t + dt/2)`.
    pub fn step<H: HamiltonianAction + ?Sized>(
        &mut self,
        h: &H,
        t: f64,
        dt: f64,
        psi: &mut StateVector,
    ) -> Result<StepInfo> {
        if psi.len() != h.dimension() {
            return Err(Error::DimensionMismatch {
                expected: h.dimension(),
                got: psi.len(),
            });
        }
        if dt == 0.0 {
            return Ok(StepInfo {
                subspace_dim: 0,
                breakdown: false,
            });
        }
        let start_norm = psi.norm();
        if !start_norm.is_finite() {
            return Err(Error::NonFinite { t });
        }
        if start_norm == 0.0 {
            return Ok(StepInfo {
                subspace_dim: 0,
                breakdown: true,
            });
        }
        let (alphas, betas, breakdown) = self.lanczos(h, t + 0.5 * dt, psi.amplitudes(), start_norm)?;
        let m = alphas.len();
        let coeffs = exp_tridiagonal_first_column(&alphas, &betas, dt);

        let out = psi.amplitudes_mut();
        out.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
        for (j, c) in coeffs.iter().enumerate() {
            axpy(c * start_norm, &self.basis[j], out);
        }
        if !psi.is_finite() {
            return Err(Error::NonFinite { t: t + dt });
        }
        Ok(StepInfo {
            subspace_dim: m,
            breakdown,
        })
    }
}

/// `exp(-i T dt) e_1` for a real symmetric tridiagonal `T`.
fn exp_tridiagonal_first_column(alphas: &[f64], betas: &[f64], dt: f64) -> Vec<Complex64> {
    let m = alphas.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let q = &eig.eigenvectors;
    (0..m)
        .map(|row| {
            (0..m)
                .map(|k| {
                    let phase = Complex64::from_polar(1.0, -eig.eigenvalues[k] * dt);
                    phase * (q[(row, k)] * q[(0, k)])
                })
                .sum()
        })
        .collect()
}

/// Single SIL step as a pure function.
pub fn krylov_step<H: HamiltonianAction + ?Sized>(
    psi: &StateVector,
    t: f64,
    params: &SilParams,
    h: &H,
) -> Result<StateVector> {
    let mut prop = SilPropagator::new(*params, psi.len())?;
    let mut out = psi.clone();
    prop.step(h, t, params.dt, &mut out)?;
    Ok(out)
}

/// Where the propagation is when an observer is called.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    pub step: usize,
    pub n_steps: usize,
    pub t: f64,
}

impl StepContext {
    pub fn is_last(&self) -> bool {
        self.step == self.n_steps
    }
}

/// Hook invoked after every accepted step (and once at the start).
pub trait Observer {
    fn observe(&mut self, ctx: StepContext, psi: &StateVector) -> Result<()>;
}

impl<F> Observer for F
where
    F: FnMut(StepContext, &StateVector) -> Result<()>,
{
    fn observe(&mut self, ctx: StepContext, psi: &StateVector) -> Result<()> {
        self(ctx, psi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationStats {
    pub n_steps: usize,
    /// Step actually used (the request is shrunk to tile the window exactly).
    pub dt: f64,
    pub max_step_norm_change: f64,
    pub max_norm_drift: f64,
    pub renormalizations: usize,
    pub breakdowns: usize,
    pub min_subspace_dim: usize,
}

/// Number of equal steps of size at most `dt` tiling `[t_start, t_end]`.
pub fn step_count(t_start: f64, t_end: f64, dt: f64) -> usize {
    let span = t_end - t_start;
    if span <= 0.0 {
        return 0;
    }
    let ratio = span / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() < 1e-9 * ratio.max(1.0) {
        nearest.max(1.0) as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Propagate `psi` over `[t_start, t_end]`, calling `observer` at `t_start`
/// and after every step.
pub fn propagate<H, O>(
    psi: &mut StateVector,
    h: &H,
    window: (f64, f64),
    params: &SilParams,
    observer: &mut O,
) -> Result<PropagationStats>
where
    H: HamiltonianAction + ?Sized,
    O: Observer + ?Sized,
{
    params.validate()?;
    let (t_start, t_end) = window;
    if !(t_end >= t_start) {
        return Err(Error::Domain(format!("empty time window [{t_start}, {t_end}]")));
    }
    let n_steps = step_count(t_start, t_end, params.dt);
    let dt = if n_steps > 0 {
        (t_end - t_start) / n_steps as f64
    } else {
        0.0
    };
    let mut prop = SilPropagator::new(*params, psi.len())?;
    let mut stats = PropagationStats {
        n_steps,
        dt,
        max_step_norm_change: 0.0,
        max_norm_drift: (psi.norm() - 1.0).abs(),
        renormalizations: 0,
        breakdowns: 0,
        min_subspace_dim: params.krylov_dim,
    };

    observer.observe(StepContext { step: 0, n_steps, t: t_start }, psi)?;
    let mut norm = psi.norm();
    for step in 1..=n_steps {
        let t = t_start + (step - 1) as f64 * dt;
        let info = prop.step(h, t, dt, psi)?;
        let t_next = if step == n_steps { t_end } else { t_start + step as f64 * dt };
        stats.min_subspace_dim = stats.min_subspace_dim.min(info.subspace_dim);
        if info.breakdown {
            stats.breakdowns += 1;
        }

        let new_norm = psi.norm();
        let change = (new_norm - norm).abs();
        stats.max_step_norm_change = stats.max_step_norm_change.max(change);
        if change > ABORT_THRESHOLD {
            return Err(Error::NormDrift {
                t: t_next,
                drift: change,
                limit: ABORT_THRESHOLD,
            });
        }
        let drift = (new_norm - 1.0).abs();
        stats.max_norm_drift = stats.max_norm_drift.max(drift);
        if drift > RENORMALIZE_THRESHOLD {
            warn!("norm drift {drift:.3e} at t = {t_next}; renormalizing");
            psi.normalize();
            stats.renormalizations += 1;
            norm = 1.0;
        } else {
            norm = new_norm;
        }
        observer.observe(StepContext { step, n_steps, t: t_next }, psi)?;
    }
    debug!("propagation finished: {stats:?}");
    Ok(stats)
}
