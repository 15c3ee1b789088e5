use num_complex::Complex64;
use proptest::prelude::*;

use sil_sbm::fitting::{fit_damped_cosine, quality_of, FitWindow};
use sil_sbm::fock_basis::Ladder;
use sil_sbm::observables::{bloch_vector, excess_energy, fidelity, reduce_to_qubit};
use sil_sbm::oracles::{closed_sweep_state, quality_factor};
use sil_sbm::{build_operators, discretize, BasisTable, BathSpec, CouplingAxis, FieldSchedule, StateVector};

fn random_state(dim: usize, seeds: &[(f64, f64)]) -> StateVector {
    let amps = (0..dim)
        .map(|i| {
            let (re, im) = seeds[i % seeds.len()];
            Complex64::new(re + 0.1 * i as f64, im - 0.05 * i as f64)
        })
        .collect();
    let mut psi = StateVector::from_amplitudes(amps);
    psi.normalize();
    psi
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn seeds() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 3..9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ordinal_round_trip(m in 1usize..=6, n in 0usize..=4, pick in 0.0..1.0f64) {
        let table = BasisTable::enumerate(m, n).unwrap();
        let i = ((pick * table.dimension() as f64) as usize).min(table.dimension() - 1);
        let config = table.config(i);
        prop_assert!(config.excitations() <= n);
        prop_assert_eq!(table.index_of(&config).unwrap(), i);
    }

    #[test]
    fn raise_then_lower(m in 1usize..=5, n in 1usize..=4, pick in 0.0..1.0f64, mode_pick in 0.0..1.0f64) {
        let table = BasisTable::enumerate(m, n).unwrap();
        let i = ((pick * table.dimension() as f64) as usize).min(table.dimension() - 1);
        let mode = ((mode_pick * m as f64) as usize).min(m - 1);
        let config = table.config(i);
        if let Some((up, a)) = table.ladder_action(&config, mode, Ladder::Raise) {
            let (back, b) = table.ladder_action(&up, mode, Ladder::Lower).unwrap();
            prop_assert_eq!(&back, &config);
            let expected = config.occupations[mode] as f64 + 1.0;
            prop_assert!((a * b - expected).abs() < 1e-12);
        } else {
            prop_assert_eq!(config.excitations(), n);
        }
    }

    #[test]
    fn hamiltonian_is_hermitian(
        m in 1usize..=4,
        n in 1usize..=3,
        alpha in 0.0..0.6f64,
        x_axis in any::<bool>(),
        field in (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64),
        a in seeds(),
        b in seeds(),
    ) {
        let table = BasisTable::enumerate(m, n).unwrap();
        let modes = discretize(&BathSpec::ohmic(alpha, 5.0, m)).unwrap();
        let axis = if x_axis { CouplingAxis::X } else { CouplingAxis::Z };
        let ops = build_operators(&table, &modes, axis).unwrap();
        let dim = table.dimension();
        let u = random_state(dim, &a);
        let v = random_state(dim, &b);
        let f = [field.0, field.1, field.2];
        let mut hu = vec![Complex64::new(0.0, 0.0); dim];
        let mut hv = hu.clone();
        ops.apply_with_field(f, u.amplitudes(), &mut hu).unwrap();
        ops.apply_with_field(f, v.amplitudes(), &mut hv).unwrap();
        let lhs = dot(v.amplitudes(), &hu);
        let rhs = dot(&hv, u.amplitudes());
        prop_assert!((lhs - rhs).norm() < 1e-12);
        prop_assert!(ops.max_row_nnz() <= 2 * m + 3);
    }

    #[test]
    fn coupling_scales_with_root_alpha(alpha in 0.01..1.0f64, m in 1usize..60) {
        let one = discretize(&BathSpec::ohmic(alpha, 5.0, m)).unwrap();
        let two = discretize(&BathSpec::ohmic(2.0 * alpha, 5.0, m)).unwrap();
        prop_assert_eq!(&one.omegas, &two.omegas);
        for (g1, g2) in one.couplings.iter().zip(&two.couplings) {
            prop_assert!((g2 - std::f64::consts::SQRT_2 * g1).abs() <= 1e-12 * g2.abs().max(1.0));
        }
    }

    #[test]
    fn purity_bounds(m in 1usize..=4, n in 0usize..=3, a in seeds()) {
        let table = BasisTable::enumerate(m, n).unwrap();
        let psi = random_state(table.dimension(), &a);
        let rho = reduce_to_qubit(&psi, &table).unwrap();
        prop_assert!((rho.trace() - 1.0).abs() < 1e-12);
        prop_assert!(rho.purity() >= 0.5 - 1e-12 && rho.purity() <= 1.0 + 1e-12);
        prop_assert!(rho.min_eigenvalue() >= -1e-12);
    }

    #[test]
    fn excess_energy_is_gap_times_infidelity(
        m in 1usize..=3,
        a in seeds(),
        h0 in -0.5..0.5f64,
        frac in 0.0..1.0f64,
        tf in 0.5..20.0f64,
    ) {
        let table = BasisTable::enumerate(m, 2).unwrap();
        let psi = random_state(table.dimension(), &a);
        let rho = reduce_to_qubit(&psi, &table).unwrap();
        let schedule = FieldSchedule::RotatingSweep { h0, h: 1.0, t0: 0.0, tf };
        let t = frac * tf;
        let field = schedule.field_at(t).unwrap();
        let gap = field.iter().map(|c| c * c).sum::<f64>().sqrt();
        let e = excess_energy(&rho, &schedule, t).unwrap();
        let f = fidelity(&rho, &schedule, t).unwrap();
        prop_assert!((e - gap * (1.0 - f)).abs() < 1e-10);
        let b = bloch_vector(&rho);
        prop_assert!(b.iter().map(|c| c * c).sum::<f64>() <= 1.0 + 1e-12);
    }

    #[test]
    fn closed_sweep_stays_pure(tf in 0.1..30.0f64, frac in 0.0..1.0f64, h in 0.2..3.0f64) {
        let b = closed_sweep_state(frac * tf, tf, h);
        prop_assert!((b.iter().map(|c| c * c).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quality_factor_decreases_below_pole(a in 0.001..0.66f64, b in 0.001..0.66f64) {
        prop_assume!((a - b).abs() > 1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(quality_factor(lo).unwrap() > quality_factor(hi).unwrap());
    }
}

fn damped(t: &[f64], omega: f64, gamma: f64, phase: f64) -> Vec<f64> {
    t.iter().map(|&t| 0.8 * (-gamma * t).exp() * (omega * t + phase).cos() + 0.02).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fit_is_scale_equivariant(
        omega in 0.5..2.0f64,
        gamma in 0.02..0.3f64,
        phase in -1.0..1.0f64,
        scale in 0.1..10.0f64,
    ) {
        let t: Vec<f64> = (0..800).map(|i| 0.025 * i as f64).collect();
        let y = damped(&t, omega, gamma, phase);
        let ys: Vec<f64> = y.iter().map(|v| scale * v).collect();
        let window = FitWindow::new(1.0, f64::INFINITY);
        let f1 = fit_damped_cosine(&t, &y, window).unwrap();
        let f2 = fit_damped_cosine(&t, &ys, window).unwrap();
        prop_assert!(f1.converged && f2.converged);
        prop_assert!((f1.omega - f2.omega).abs() < 1e-6 * f1.omega);
        prop_assert!((f1.gamma - f2.gamma).abs() < 1e-6 * f1.gamma.max(1e-3));
        prop_assert!((f2.amplitude.abs() - scale * f1.amplitude.abs()).abs() < 1e-6 * scale);
        let (q1, q2) = (quality_of(&f1).unwrap(), quality_of(&f2).unwrap());
        prop_assert!((q1 - q2).abs() < 1e-5 * q1);
    }

    #[test]
    fn time_shift_only_moves_phase(
        omega in 0.5..2.0f64,
        gamma in 0.02..0.3f64,
        phase in -1.0..1.0f64,
        shift in -5.0..5.0f64,
    ) {
        let t: Vec<f64> = (0..800).map(|i| 0.025 * i as f64).collect();
        let y = damped(&t, omega, gamma, phase);
        let ts: Vec<f64> = t.iter().map(|v| v + shift).collect();
        let f1 = fit_damped_cosine(&t, &y, FitWindow::all()).unwrap();
        let f2 = fit_damped_cosine(&ts, &y, FitWindow::all()).unwrap();
        prop_assert!((f1.omega - f2.omega).abs() < 1e-6 * f1.omega);
        prop_assert!((f1.gamma - f2.gamma).abs() < 1e-6 * f1.gamma);
        prop_assert!((f1.amplitude - f2.amplitude).abs() < 1e-6);
        prop_assert!((f1.offset - f2.offset).abs() < 1e-8);
        prop_assert!((f1.evaluate(1.0) - f2.evaluate(1.0 + shift)).abs() < 1e-8);
    }
}
