//! Quantities extracted from the joint qubit+bath state.

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bath::BathModes;
use crate::error::{Error, Result};
use crate::fock_basis::BasisTable;
use crate::hamiltonian::FieldSchedule;
use crate::state::StateVector;

/// Below this field magnitude the qubit ground state is ill-defined.
pub const GAP_EPSILON: f64 = 1e-12;

/// Reduced qubit density matrix in the `{|z;+>, |z;->}` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedQubitState {
    pub rho: Matrix2<Complex64>,
}

impl ReducedQubitState {
    pub fn from_bloch(b: [f64; 3]) -> Self {
        let c = Complex64::new;
        ReducedQubitState {
            rho: Matrix2::new(
                c(0.5 * (1.0 + b[2]), 0.0),
                c(0.5 * b[0], -0.5 * b[1]),
                c(0.5 * b[0], 0.5 * b[1]),
                c(0.5 * (1.0 - b[2]), 0.0),
            ),
        }
    }

    pub fn trace(&self) -> f64 {
        (self.rho[(0, 0)] + self.rho[(1, 1)]).re
    }

    pub fn purity(&self) -> f64 {
        (self.rho * self.rho).trace().re
    }

    /// Largest deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.rho - self.rho.adjoint();
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let tr = self.trace();
        let b = bloch_vector(self);
        0.5 * (tr - (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub bloch: [f64; 3],
    pub bath_energy: f64,
    pub total_energy: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSnapshot {
    pub t: f64,
    pub occupations: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub mode_snapshots: Vec<ModeSnapshot>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn component(&self, axis: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.bloch[axis]).collect()
    }

    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }
}

fn check_len(psi: &StateVector, table: &BasisTable) -> Result<()> {
    if psi.len() != table.dimension() {
        return Err(Error::DimensionMismatch {
            expected: table.dimension(),
            got: psi.len(),
        });
    }
    Ok(())
}

/// Partial trace over the bath: the spin blocks are contiguous halves, so
/// `rho_{ss'} = sum_b psi_{s,b} conj(psi_{s',b})`.
pub fn reduce_to_qubit(psi: &StateVector, table: &BasisTable) -> Result<ReducedQubitState> {
    check_len(psi, table)?;
    let (up, down) = psi.blocks();
    let mut uu = 0.0;
    let mut dd = 0.0;
    let mut ud = Complex64::new(0.0, 0.0);
    for (u, d) in up.iter().zip(down) {
        uu += u.norm_sqr();
        dd += d.norm_sqr();
        ud += u * d.conj();
    }
    Ok(ReducedQubitState {
        rho: Matrix2::new(Complex64::new(uu, 0.0), ud, ud.conj(), Complex64::new(dd, 0.0)),
    })
}

pub fn bloch_vector(rho: &ReducedQubitState) -> [f64; 3] {
    let ud = rho.rho[(0, 1)];
    [
        2.0 * ud.re,
        -2.0 * ud.im,
        (rho.rho[(0, 0)] - rho.rho[(1, 1)]).re,
    ]
}

/// `<n_k>` for every mode (the zero-temperature reference occupation is 0).
pub fn mode_occupations(psi: &StateVector, table: &BasisTable) -> Result<Vec<f64>> {
    check_len(psi, table)?;
    let (up, down) = psi.blocks();
    let mut occ = vec![0.0; table.modes()];
    for (b, (u, d)) in up.iter().zip(down).enumerate() {
        let weight = u.norm_sqr() + d.norm_sqr();
        if weight == 0.0 {
            continue;
        }
        for (slot, &n) in occ.iter_mut().zip(table.bath_occupations(b)) {
            if n > 0 {
                *slot += weight * n as f64;
            }
        }
    }
    Ok(occ)
}

/// `<H_B> = sum_k w_k <n_k>`
pub fn bath_energy(psi: &StateVector, table: &BasisTable, modes: &BathModes) -> Result<f64> {
    if modes.len() != table.modes() {
        return Err(Error::DimensionMismatch {
            expected: table.modes(),
            got: modes.len(),
        });
    }
    let occ = mode_occupations(psi, table)?;
    Ok(occ.iter().zip(&modes.omegas).map(|(n, w)| n * w).sum())
}

fn field_for(schedule: &FieldSchedule, t: f64) -> Result<[f64; 3]> {
    let field = schedule.field_at(t)?;
    let mag = norm3(field);
    if mag < GAP_EPSILON {
        return Err(Error::DegenerateGap { t, field: mag });
    }
    Ok(field)
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Ground state of `-1/2 h.sigma`: the spin coherent state along `h/|h|`.
fn ground_ket(field: [f64; 3]) -> [Complex64; 2] {
    let mag = norm3(field);
    let nz = (field[2] / mag).clamp(-1.0, 1.0);
    let theta = nz.acos();
    let phi = field[1].atan2(field[0]);
    [
        Complex64::new((0.5 * theta).cos(), 0.0),
        Complex64::from_polar((0.5 * theta).sin(), phi),
    ]
}

/// `<psi_gs(t)| rho_S |psi_gs(t)>` with `psi_gs` the instantaneous qubit ground state.
pub fn fidelity(rho: &ReducedQubitState, schedule: &FieldSchedule, t: f64) -> Result<f64> {
    let field = field_for(schedule, t)?;
    let g = ground_ket(field);
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            acc += g[i].conj() * rho.rho[(i, j)] * g[j];
        }
    }
    Ok(acc.re.clamp(0.0, 1.0))
}

/// `Tr[rho_S H_S(t)] - e_gs(t)` with `e_gs = -|h(t)|/2`.
pub fn excess_energy(rho: &ReducedQubitState, schedule: &FieldSchedule, t: f64) -> Result<f64> {
    let f = field_for(schedule, t)?;
    let c = Complex64::new;
    let h_s = Matrix2::new(
        c(-0.5 * f[2], 0.0),
        c(-0.5 * f[0], 0.5 * f[1]),
        c(-0.5 * f[0], -0.5 * f[1]),
        c(0.5 * f[2], 0.0),
    );
    let energy = (rho.rho * h_s).trace().re;
    Ok((energy + 0.5 * norm3(f)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{discretize, BathSpec};
    use crate::fock_basis::{BasisConfig, Spin};
    use crate::hamiltonian::{build_operators, CouplingAxis};
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn product_state_reduces_to_projector() {
        let table = BasisTable::enumerate(3, 2).unwrap();
        let psi = StateVector::basis(table.dimension(), 0);
        let rho = reduce_to_qubit(&psi, &table).unwrap();
        assert_eq!(rho.rho, Matrix2::new(c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)));
        assert_eq!(bloch_vector(&rho), [0.0, 0.0, 1.0]);
        assert_abs_diff_eq!(rho.purity(), 1.0);
    }

    #[test]
    fn spin_superposition_has_coherence() {
        let table = BasisTable::enumerate(2, 1).unwrap();
        let mut psi = StateVector::zeros(table.dimension());
        let s = 0.5f64.sqrt();
        psi.amplitudes_mut()[0] = c(s, 0.);
        psi.amplitudes_mut()[table.bath_dim()] = c(s, 0.);
        let rho = reduce_to_qubit(&psi, &table).unwrap();
        assert_abs_diff_eq!(rho.rho[(0, 1)].re, 0.5, epsilon = 1e-15);
        let b = bloch_vector(&rho);
        assert_abs_diff_eq!(b[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn entangled_pair_is_maximally_mixed() {
        // (|up,0> + |down,1>)/sqrt2 for a single mode
        let table = BasisTable::enumerate(1, 1).unwrap();
        let mut psi = StateVector::zeros(4);
        let s = 0.5f64.sqrt();
        psi.amplitudes_mut()[0] = c(s, 0.);
        psi.amplitudes_mut()[3] = c(s, 0.);
        let rho = reduce_to_qubit(&psi, &table).unwrap();
        assert_abs_diff_eq!(rho.rho[(0, 0)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.rho[(1, 1)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.rho[(0, 1)].norm(), 0.0, epsilon = 1e-15);
        assert_eq!(bloch_vector(&rho), [0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(rho.purity(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn sigma_y_sign() {
        // |y;+> = (|up> + i|down>)/sqrt2
        let table = BasisTable::enumerate(1, 0).unwrap();
        let s = 0.5f64.sqrt();
        let psi = StateVector::from_amplitudes(vec![c(s, 0.), c(0., s)]);
        let b = bloch_vector(&reduce_to_qubit(&psi, &table).unwrap());
        assert_abs_diff_eq!(b[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn occupations_and_bath_energy() {
        let table = BasisTable::enumerate(3, 2).unwrap();
        let modes = discretize(&BathSpec::ohmic(0.2, 5.0, 3)).unwrap();
        let vac = StateVector::basis(table.dimension(), 0);
        assert_eq!(mode_occupations(&vac, &table).unwrap(), vec![0.0; 3]);
        assert_eq!(bath_energy(&vac, &table, &modes).unwrap(), 0.0);

        let one = table
            .index_of(&BasisConfig { spin: Spin::Down, occupations: vec![0, 1, 0] })
            .unwrap();
        let psi = StateVector::basis(table.dimension(), one);
        assert_eq!(mode_occupations(&psi, &table).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(bath_energy(&psi, &table, &modes).unwrap(), modes.omegas[1]);
    }

    #[test]
    fn bath_energy_two_paths() {
        let table = BasisTable::enumerate(4, 3).unwrap();
        let modes = discretize(&BathSpec::ohmic(0.2, 5.0, 4)).unwrap();
        let ops = build_operators(&table, &modes, CouplingAxis::Z).unwrap();
        let dim = table.dimension();
        let amps: Vec<Complex64> = (0..dim).map(|i| c((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let mut psi = StateVector::from_amplitudes(amps);
        psi.normalize();
        let via_occ = bath_energy(&psi, &table, &modes).unwrap();
        let via_op = ops.bath_expectation(&psi).unwrap();
        assert_abs_diff_eq!(via_occ, via_op, epsilon = 1e-12);
        let occ = mode_occupations(&psi, &table).unwrap();
        assert!(occ.iter().sum::<f64>() <= 3.0 + 1e-12);
    }

    #[test]
    fn fidelity_and_excess_energy() {
        let sched = FieldSchedule::Static { delta: 0.6, h0: 0.8 };
        let ground = ReducedQubitState::from_bloch([0.6, 0.0, 0.8]);
        let excited = ReducedQubitState::from_bloch([-0.6, 0.0, -0.8]);
        let mixed = ReducedQubitState::from_bloch([0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(fidelity(&ground, &sched, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity(&excited, &sched, 0.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity(&mixed, &sched, 0.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(excess_energy(&ground, &sched, 0.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(excess_energy(&excited, &sched, 0.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn excess_energy_fidelity_identity() {
        let sched = FieldSchedule::RotatingSweep { h0: 0.25, h: 1.0, t0: 0.0, tf: 3.0 };
        for k in 0..=30 {
            let t = 3.0 * k as f64 / 30.0;
            let b = [(k as f64).sin() * 0.7, (k as f64 * 0.3).cos() * 0.5, 0.3];
            let rho = ReducedQubitState::from_bloch(b);
            let f = sched.field_at(t).unwrap();
            let mag = norm3(f);
            let lhs = excess_energy(&rho, &sched, t).unwrap();
            let rhs = mag * (1.0 - fidelity(&rho, &sched, t).unwrap());
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        }
        let at_end = ReducedQubitState::from_bloch([0.1, 0.2, 0.3]);
        let lhs = excess_energy(&at_end, &sched, 3.0).unwrap();
        let rhs = (1.0f64 - 0.25).abs() * (1.0 - fidelity(&at_end, &sched, 3.0).unwrap());
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_gap_flagged() {
        let sched = FieldSchedule::RotatingSweep { h0: 1.0, h: 1.0, t0: 0.0, tf: 2.0 };
        let rho = ReducedQubitState::from_bloch([0.0, 0.0, 1.0]);
        assert!(matches!(excess_energy(&rho, &sched, 2.0), Err(Error::DegenerateGap { .. })));
        assert!(matches!(fidelity(&rho, &sched, 2.0), Err(Error::DegenerateGap { .. })));
    }
}
