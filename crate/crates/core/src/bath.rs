//! Discretization of the Ohmic-family spectral density
//! `J(w) = 2 alpha w^s wc^(1-s) exp(-w/wc)` into `M` bosonic modes.
//!
//! Modes tile `[0, 2 wc]` in bins of equal measure under a density of states
//! `rho(w) ~ exp(-w/wc)` normalized so that the total measure is `M`. Each
//! mode sits at the centroid of its bin and couples with `g_k^2 = J(w_k)/rho(w_k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub alpha: f64,
    /// Spectral exponent (1 = Ohmic).
    pub s: f64,
    pub omega_c: f64,
    pub modes: usize,
}

impl BathSpec {
    pub fn ohmic(alpha: f64, omega_c: f64, modes: usize) -> Self {
        BathSpec {
            alpha,
            s: 1.0,
            omega_c,
            modes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Domain(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::Domain(format!("spectral exponent must be > 0, got {}", self.s)));
        }
        if !(self.omega_c > 0.0 && self.omega_c.is_finite()) {
            return Err(Error::Domain(format!("omega_c must be > 0, got {}", self.omega_c)));
        }
        if self.modes == 0 {
            return Err(Error::Domain("number of modes must be at least 1".into()));
        }
        Ok(())
    }

    /// Upper edge of the discretized band.
    pub fn band_edge(&self) -> f64 {
        2.0 * self.omega_c
    }

    /// Width of one frequency bin.
    pub fn spacing(&self) -> f64 {
        self.band_edge() / self.modes as f64
    }

    /// `2 pi / dw`: beyond this time the discrete bath returns energy to the
    /// qubit and traces stop resembling the continuum.
    pub fn recurrence_time(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.spacing()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathModes {
    pub omegas: Vec<f64>,
    pub couplings: Vec<f64>,
}

impl BathModes {
    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// `sum_k g_k^2`, the discrete counterpart of `int J(w) dw`.
    pub fn coupling_weight(&self) -> f64 {
        self.couplings.iter().map(|g| g * g).sum()
    }
}

pub fn spectral_density(omega: f64, spec: &BathSpec) -> Result<f64> {
    if omega < 0.0 || omega.is_nan() {
        return Err(Error::Domain(format!("spectral density needs omega >= 0, got {omega}")));
    }
    if omega == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * spec.alpha * omega.powf(spec.s) * spec.omega_c.powf(1.0 - spec.s) * (-omega / spec.omega_c).exp())
}

pub fn discretize(spec: &BathSpec) -> Result<BathModes> {
    spec.validate()?;
    let wc = spec.omega_c;
    let m = spec.modes as f64;
    // rho(w) = amp * exp(-w/wc) with int_0^{2wc} rho = M
    let band_fraction = 1.0 - (-2.0f64).exp();
    let amp = m / (wc * band_fraction);
    let density = |w: f64| amp * (-w / wc).exp();
    // bin edge j solves int_0^{w_j} rho = j
    let edge = |j: usize| {
        if j == spec.modes {
            spec.band_edge()
        } else {
            -wc * (1.0 - j as f64 * band_fraction / m).ln()
        }
    };
    // antiderivative of w rho(w)
    let first_moment = |w: f64| -amp * wc * (-w / wc).exp() * (w + wc);

    let mut omegas = Vec::with_capacity(spec.modes);
    let mut couplings = Vec::with_capacity(spec.modes);
    let mut lo = 0.0;
    for j in 1..=spec.modes {
        let hi = edge(j);
        // each bin carries unit measure
        let centroid = first_moment(hi) - first_moment(lo);
        let g2 = spectral_density(centroid, spec)? / density(centroid);
        omegas.push(centroid);
        couplings.push(g2.sqrt());
        lo = hi;
    }
    Ok(BathModes { omegas, couplings })
}
