//! Sparse qubit+bath Hamiltonian
//! `H(t) = -1/2 h(t).sigma + sum_k w_k b_k^+ b_k + 1/2 (sigma.n) sum_k g_k (b_k^+ + b_k)`.
//!
//! Only the bath block is stored: the diagonal `H_B` and the real symmetric
//! displacement operator `X = sum_k g_k (b_k^+ + b_k)` on one spin block.
//! Pauli operators act on the spin-major block structure directly, and the
//! time-dependent qubit field is applied matrix-free at every call.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::BathModes;
use crate::error::{Error, Result};
use crate::fock_basis::{BasisTable, Ladder, Spin};
use crate::state::{StateVector, CHUNK};

pub const DEFAULT_MAX_NONZEROS: u128 = 1_000_000_000;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CouplingAxis {
    X,
    Z,
}

impl CouplingAxis {
    pub fn unit_vector(self) -> [f64; 3] {
        match self {
            CouplingAxis::X => [1.0, 0.0, 0.0],
            CouplingAxis::Z => [0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// Qubit field `h(t)` entering `H_S = -1/2 h(t).sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSchedule {
    /// `h = (delta, 0, h0)`
    Static { delta: f64, h0: f64 },
    /// `h = (h sin th, 0, h0 + h cos th)` with `th = pi (t - t0) / tf`
    RotatingSweep { h0: f64, h: f64, t0: f64, tf: f64 },
}

impl FieldSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FieldSchedule::Static { delta, h0 } => {
                if !(delta.is_finite() && h0.is_finite()) {
                    return Err(Error::Domain("static field must be finite".into()));
                }
            }
            FieldSchedule::RotatingSweep { h0, h, t0, tf } => {
                if !(h0.is_finite() && h.is_finite() && t0.is_finite() && tf.is_finite()) {
                    return Err(Error::Domain("sweep parameters must be finite".into()));
                }
                if tf <= t0 {
                    return Err(Error::Domain(format!("sweep needs tf > t0, got t0={t0}, tf={tf}")));
                }
            }
        }
        Ok(())
    }

    /// Time window of a sweep; `None` for static fields.
    pub fn window(&self) -> Option<(f64, f64)> {
        match *self {
            FieldSchedule::Static { .. } => None,
            FieldSchedule::RotatingSweep { t0, tf, .. } => Some((t0, tf)),
        }
    }

    pub fn field_at(&self, t: f64) -> Result<[f64; 3]> {
        match *self {
            FieldSchedule::Static { delta, h0 } => Ok([delta, 0.0, h0]),
            FieldSchedule::RotatingSweep { h0, h, t0, tf } => {
                let slack = 1e-12 * tf.abs().max(1.0);
                if !(t >= t0 - slack && t <= tf + slack) {
                    return Err(Error::Domain(format!("t = {t} outside sweep window [{t0}, {tf}]")));
                }
                let theta = std::f64::consts::PI * (t - t0) / tf;
                Ok([h * theta.sin(), 0.0, h0 + h * theta.cos()])
            }
        }
    }
}

/// Real CSR matrix on one spin block.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .zip(&self.vals[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn max_row_nnz(&self) -> usize {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for p in self.row_ptr[i]..self.row_ptr[i + 1] {
            acc += x[self.cols[p] as usize] * self.vals[p];
        }
        acc
    }
}

#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    /// `sum_k w_k n_k` per bath state.
    bath_diagonal: Vec<f64>,
    /// `X = sum_k g_k (b_k^+ + b_k)` projected onto the truncated space.
    displacement: CsrMatrix,
    axis: CouplingAxis,
}

pub fn build_operators(
    table: &BasisTable,
    modes: &BathModes,
    axis: CouplingAxis,
) -> Result<SparseHamiltonian> {
    build_operators_with_limit(table, modes, axis, DEFAULT_MAX_NONZEROS)
}

pub fn build_operators_with_limit(
    table: &BasisTable,
    modes: &BathModes,
    axis: CouplingAxis,
    max_nonzeros: u128,
) -> Result<SparseHamiltonian> {
    if modes.len() != table.modes() {
        return Err(Error::DimensionMismatch {
            expected: table.modes(),
            got: modes.len(),
        });
    }
    let bath_dim = table.bath_dim();
    let n_modes = table.modes();
    let budget = table.max_excitations();

    let bath_diagonal: Vec<f64> = (0..bath_dim)
        .into_par_iter()
        .map(|b| {
            table
                .bath_occupations(b)
                .iter()
                .zip(&modes.omegas)
                .map(|(&n, &w)| n as f64 * w)
                .sum()
        })
        .collect();

    let active: Vec<usize> = (0..n_modes).filter(|&k| modes.couplings[k] != 0.0).collect();

    // first pass: count so the capacity check happens before allocating
    let row_counts: Vec<usize> = (0..bath_dim)
        .into_par_iter()
        .map(|b| {
            let occ = table.bath_occupations(b);
            let room = occ.iter().map(|&n| n as usize).sum::<usize>() < budget;
            active
                .iter()
                .map(|&k| usize::from(room) + usize::from(occ[k] > 0))
                .sum()
        })
        .collect();
    let nnz: usize = row_counts.iter().sum();
    if 2 * nnz as u128 > max_nonzeros {
        return Err(Error::Capacity {
            what: "stored nonzeros",
            requested: 2 * nnz as u128,
            limit: max_nonzeros,
        });
    }

    let rows: Vec<Vec<(u32, f64)>> = (0..bath_dim)
        .into_par_iter()
        .map(|b| {
            let config = table.config(b);
            let mut row = Vec::with_capacity(row_counts[b]);
            for &k in &active {
                for dir in [Ladder::Raise, Ladder::Lower] {
                    if let Some((target, amp)) = table.ladder_action(&config, k, dir) {
                        let col = table
                            .bath_index(&target.occupations)
                            .expect("ladder action stays inside the table");
                        row.push((col as u32, amp * modes.couplings[k]));
                    }
                }
            }
            row.sort_by_key(|&(c, _)| c);
            row
        })
        .collect();

    let mut row_ptr = Vec::with_capacity(bath_dim + 1);
    let mut cols = Vec::with_capacity(nnz);
    let mut vals = Vec::with_capacity(nnz);
    row_ptr.push(0);
    for row in rows {
        for (c, v) in row {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }

    Ok(SparseHamiltonian {
        bath_diagonal,
        displacement: CsrMatrix {
            dim: bath_dim,
            row_ptr,
            cols,
            vals,
        },
        axis,
    })
}

impl SparseHamiltonian {
    pub fn dimension(&self) -> usize {
        2 * self.bath_diagonal.len()
    }

    pub fn axis(&self) -> CouplingAxis {
        self.axis
    }

    pub fn bath_diagonal(&self) -> &[f64] {
        &self.bath_diagonal
    }

    pub fn displacement(&self) -> &CsrMatrix {
        &self.displacement
    }

    /// Upper bound on stored entries touched per row of the full operator.
    pub fn max_row_nnz(&self) -> usize {
        // bath diagonal + sigma_z diagonal + spin flip + displacement row
        3 + self.displacement.max_row_nnz()
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: len,
            });
        }
        Ok(())
    }

    /// `out = H(field) psi` for a fixed qubit field.
    pub fn apply_with_field(&self, field: [f64; 3], psi: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        self.check_dim(psi.len())?;
        self.check_dim(out.len())?;
        self.kernel(field, 1.0, 1.0, psi, out);
        Ok(())
    }

    pub fn apply(
        &self,
        schedule: &FieldSchedule,
        t: f64,
        psi: &StateVector,
        out: &mut StateVector,
    ) -> Result<()> {
        let field = schedule.field_at(t)?;
        self.apply_with_field(field, psi.amplitudes(), out.amplitudes_mut())
    }

    /// `out = H_B psi`
    pub fn apply_bath(&self, psi: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        self.check_dim(psi.len())?;
        self.check_dim(out.len())?;
        self.kernel([0.0; 3], 1.0, 0.0, psi, out);
        Ok(())
    }

    /// `out = H_I psi`
    pub fn apply_coupling(&self, psi: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        self.check_dim(psi.len())?;
        self.check_dim(out.len())?;
        self.kernel([0.0; 3], 0.0, 1.0, psi, out);
        Ok(())
    }

    /// Row-parallel gather kernel:
    /// `out = (-1/2 field.sigma + bath_scale H_B + coupling_scale H_I) psi`.
    fn kernel(
        &self,
        field: [f64; 3],
        bath_scale: f64,
        coupling_scale: f64,
        psi: &[Complex64],
        out: &mut [Complex64],
    ) {
        let half = self.bath_diagonal.len();
        let (up, down) = psi.split_at(half);
        let (out_up, out_down) = out.split_at_mut(half);
        let x = &self.displacement;
        let with_coupling = coupling_scale != 0.0 && x.nnz() > 0;
        let coupling_half = 0.5 * coupling_scale;

        for (spin, same, other, target) in [(Spin::Up, up, down, out_up), (Spin::Down, down, up, out_down)] {
            let sign = spin.sign();
            let diag_field = -0.5 * sign * field[2];
            let flip = Complex64::new(-0.5 * field[0], 0.5 * sign * field[1]);
            let (coupled, coupling_sign) = match self.axis {
                CouplingAxis::Z => (same, sign),
                CouplingAxis::X => (other, 1.0),
            };
            let scale = coupling_half * coupling_sign;
            let fill = |(c, chunk): (usize, &mut [Complex64])| {
                let base = c * CHUNK;
                for (offset, slot) in chunk.iter_mut().enumerate() {
                    let i = base + offset;
                    let mut acc = same[i] * (bath_scale * self.bath_diagonal[i] + diag_field) + other[i] * flip;
                    if with_coupling {
                        acc += x.row_dot(i, coupled) * scale;
                    }
                    *slot = acc;
                }
            };
            // a single chunk is not worth a pool dispatch
            if half <= CHUNK {
                fill((0, target));
            } else {
                target.par_chunks_mut(CHUNK).enumerate().for_each(fill);
            }
        }
    }

    /// `out = S psi` for a lifted Pauli operator.
    pub fn apply_pauli(&self, pauli: Pauli, psi: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        self.check_dim(psi.len())?;
        self.check_dim(out.len())?;
        apply_pauli(pauli, psi, out);
        Ok(())
    }

    /// `<psi|H_B|psi>` via the stored diagonal.
    pub fn bath_expectation(&self, psi: &StateVector) -> Result<f64> {
        self.check_dim(psi.len())?;
        let (up, down) = psi.blocks();
        Ok(self
            .bath_diagonal
            .iter()
            .zip(up.iter().zip(down))
            .map(|(&e, (u, d))| e * (u.norm_sqr() + d.norm_sqr()))
            .sum())
    }

    /// `<psi|H_I|psi>`
    pub fn coupling_expectation(&self, psi: &StateVector) -> Result<f64> {
        let mut tmp = StateVector::zeros(psi.len());
        self.apply_coupling(psi.amplitudes(), tmp.amplitudes_mut())?;
        Ok(psi.dot(&tmp).re)
    }

    /// `<psi|H(field)|psi>`
    pub fn energy_with_field(&self, field: [f64; 3], psi: &StateVector) -> Result<f64> {
        let mut tmp = StateVector::zeros(psi.len());
        self.apply_with_field(field, psi.amplitudes(), tmp.amplitudes_mut())?;
        Ok(psi.dot(&tmp).re)
    }
}

pub(crate) fn apply_pauli(pauli: Pauli, psi: &[Complex64], out: &mut [Complex64]) {
    let half = psi.len() / 2;
    let (up, down) = psi.split_at(half);
    let (out_up, out_down) = out.split_at_mut(half);
    match pauli {
        Pauli::X => {
            out_up.copy_from_slice(down);
            out_down.copy_from_slice(up);
        }
        Pauli::Y => {
            out_up.iter_mut().zip(down).for_each(|(o, d)| *o = -I * d);
            out_down.iter_mut().zip(up).for_each(|(o, u)| *o = I * u);
        }
        Pauli::Z => {
            out_up.copy_from_slice(up);
            out_down.iter_mut().zip(down).for_each(|(o, d)| *o = -d);
        }
    }
}

/// Free function form of [`SparseHamiltonian::apply`].
pub fn apply_hamiltonian(
    ops: &SparseHamiltonian,
    schedule: &FieldSchedule,
    t: f64,
    psi: &StateVector,
) -> Result<StateVector> {
    let mut out = StateVector::zeros(psi.len());
    ops.apply(schedule, t, psi, &mut out)?;
    Ok(out)
}
