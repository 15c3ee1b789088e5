//! The two driven experiments: a static-field quench from `|z;+> (x) vacuum`
//! and a rotating-field sweep, plus a parallel scan over sweep times and
//! coupling strengths.

use std::f64::consts::PI;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{discretize, BathModes, BathSpec};
use crate::error::{Error, Result};
use crate::fock_basis::{BasisTable, Spin, DEFAULT_MAX_DIMENSION};
use crate::hamiltonian::{build_operators, CouplingAxis, FieldSchedule, SparseHamiltonian};
use crate::observables::{
    bloch_vector, excess_energy, fidelity, mode_occupations, reduce_to_qubit, ModeSnapshot, Trajectory,
    TrajectorySample,
};
use crate::oracles::{renormalized_gaps, RenormalizedGaps};
use crate::propagator::{propagate, DrivenHamiltonian, PropagationStats, SilParams, StepContext};
use crate::state::StateVector;

/// Unit of `t_end` and snapshot times in a static run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    /// `1 / delta` for static runs, `1 / h` for sweeps.
    Field,
    /// `1 / delta_r`; static runs only.
    RenormalizedGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    /// End time of a static run. Sweeps always stop at `tf`.
    pub t_end: f64,
    /// Record every `stride`-th step (the last step is always recorded).
    pub stride: usize,
    pub mode_snapshots: Vec<f64>,
    pub time_unit: TimeUnit,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            t_end: 20.0,
            stride: 1,
            mode_snapshots: Vec::new(),
            time_unit: TimeUnit::Field,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub bath: BathSpec,
    /// Mode count of the Fock basis; must equal `bath.modes`.
    pub basis_modes: usize,
    pub max_excitations: usize,
    pub schedule: FieldSchedule,
    pub coupling_axis: CouplingAxis,
    pub sil: SilParams,
    pub sampling: Sampling,
    pub max_dimension: u128,
}

impl ExperimentConfig {
    pub fn new(bath: BathSpec, max_excitations: usize, schedule: FieldSchedule, coupling_axis: CouplingAxis) -> Self {
        ExperimentConfig {
            basis_modes: bath.modes,
            sil: SilParams::for_cutoff(bath.omega_c),
            bath,
            max_excitations,
            schedule,
            coupling_axis,
            sampling: Sampling::default(),
            max_dimension: DEFAULT_MAX_DIMENSION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bath.validate()?;
        if self.basis_modes != self.bath.modes {
            return Err(Error::config(
                None,
                format!(
                    "basis has M = {} modes but the bath is discretized into {}",
                    self.basis_modes, self.bath.modes
                ),
            ));
        }
        self.schedule.validate()?;
        self.sil.validate()?;
        if self.sampling.stride == 0 {
            return Err(Error::config(None, "sample stride must be >= 1"));
        }
        if matches!(self.schedule, FieldSchedule::Static { .. }) && !(self.sampling.t_end >= 0.0) {
            return Err(Error::config(None, format!("t_end must be >= 0, got {}", self.sampling.t_end)));
        }
        if matches!(self.schedule, FieldSchedule::RotatingSweep { .. })
            && self.sampling.time_unit == TimeUnit::RenormalizedGap
        {
            return Err(Error::config(None, "time_unit = delta_r only applies to static runs"));
        }
        Ok(())
    }

    /// `(delta_r, delta_eff)` of a static run; `None` for sweeps.
    pub fn gaps(&self) -> Result<Option<RenormalizedGaps>> {
        match self.schedule {
            FieldSchedule::Static { delta, .. } => {
                Ok(Some(renormalized_gaps(self.bath.alpha, delta, self.bath.omega_c)?))
            }
            FieldSchedule::RotatingSweep { .. } => Ok(None),
        }
    }

    /// Multiplier converting configured times to raw times.
    fn time_scale(&self) -> Result<f64> {
        match self.sampling.time_unit {
            TimeUnit::Field => Ok(1.0),
            TimeUnit::RenormalizedGap => {
                let g = self.gaps()?.expect("static schedule checked in validate");
                if !(g.delta_r > 0.0) {
                    return Err(Error::config(None, "time_unit = delta_r needs a nonzero gap"));
                }
                Ok(1.0 / g.delta_r)
            }
        }
    }

    pub fn window(&self) -> Result<(f64, f64)> {
        match self.schedule.window() {
            Some(w) => Ok(w),
            None => Ok((0.0, self.sampling.t_end * self.time_scale()?)),
        }
    }
}

/// Basis, discretized bath and operators for one configuration.
#[derive(Debug, Clone)]
pub struct PreparedSystem {
    pub table: BasisTable,
    pub modes: BathModes,
    pub ops: SparseHamiltonian,
}

impl PreparedSystem {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let table = BasisTable::enumerate_with_limit(config.basis_modes, config.max_excitations, config.max_dimension)?;
        Self::with_table(config, table)
    }

    /// Reuse an enumerated basis (the table depends only on `M` and `N_ph`).
    pub fn with_table(config: &ExperimentConfig, table: BasisTable) -> Result<Self> {
        config.validate()?;
        if table.modes() != config.basis_modes || table.max_excitations() != config.max_excitations {
            return Err(Error::config(None, "basis table does not match the configuration"));
        }
        let modes = discretize(&config.bath)?;
        let ops = build_operators(&table, &modes, config.coupling_axis)?;
        Ok(PreparedSystem { table, modes, ops })
    }
}

/// `|z;+> (x) |0...0>`: amplitude one on the first basis ordinal.
pub fn initial_state(table: &BasisTable) -> StateVector {
    let ordinal = table.ordinal(Spin::Up, 0);
    StateVector::basis(table.dimension(), ordinal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSample {
    pub t: f64,
    pub field_norm: f64,
    pub excess_energy: f64,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub stats: PropagationStats,
    pub gaps: Option<RenormalizedGaps>,
    pub dimension: usize,
    /// Per-sample `(e_res, F)` of a sweep; empty for static runs.
    pub sweep: Vec<SweepSample>,
}

impl RunOutput {
    pub fn final_sweep(&self) -> Option<&SweepSample> {
        self.sweep.last()
    }

    /// Sample times in units of `1 / delta_r` (static runs).
    pub fn rescaled_times(&self) -> Option<Vec<f64>> {
        let dr = self.gaps?.delta_r;
        Some(self.trajectory.samples.iter().map(|s| s.t * dr).collect())
    }

    /// `max |E(t) - E(0)|` over the samples.
    pub fn energy_drift(&self) -> f64 {
        let Some(first) = self.trajectory.samples.first() else {
            return 0.0;
        };
        self.trajectory
            .samples
            .iter()
            .map(|s| (s.total_energy - first.total_energy).abs())
            .fold(0.0, f64::max)
    }
}

/// Records samples and mode snapshots while the state is propagated.
struct Recorder<'a> {
    system: &'a PreparedSystem,
    schedule: &'a FieldSchedule,
    stride: usize,
    snapshot_times: Vec<f64>,
    next_snapshot: usize,
    half_step: f64,
    trajectory: Trajectory,
    sweep: Vec<SweepSample>,
}

impl Recorder<'_> {
    fn observe(&mut self, ctx: StepContext, psi: &StateVector) -> Result<()> {
        if !psi.is_finite() {
            return Err(Error::NonFinite { t: ctx.t });
        }
        while self.next_snapshot < self.snapshot_times.len()
            && (self.snapshot_times[self.next_snapshot] <= ctx.t + self.half_step || ctx.is_last())
        {
            self.trajectory.mode_snapshots.push(ModeSnapshot {
                t: ctx.t,
                occupations: mode_occupations(psi, &self.system.table)?,
            });
            self.next_snapshot += 1;
        }
        if !ctx.step.is_multiple_of(self.stride) && !ctx.is_last() {
            return Ok(());
        }
        let rho = reduce_to_qubit(psi, &self.system.table)?;
        let field = self.schedule.field_at(ctx.t)?;
        let ops = &self.system.ops;
        self.trajectory.samples.push(TrajectorySample {
            t: ctx.t,
            bloch: bloch_vector(&rho),
            bath_energy: ops.bath_expectation(psi)?,
            total_energy: ops.energy_with_field(field, psi)?,
            norm: psi.norm(),
        });
        if let FieldSchedule::RotatingSweep { .. } = self.schedule {
            self.sweep.push(SweepSample {
                t: ctx.t,
                field_norm: (field[0] * field[0] + field[1] * field[1] + field[2] * field[2]).sqrt(),
                excess_energy: excess_energy(&rho, self.schedule, ctx.t)?,
                fidelity: fidelity(&rho, self.schedule, ctx.t)?,
            });
        }
        Ok(())
    }
}

/// Run either experiment on a prepared system.
pub fn run_prepared(config: &ExperimentConfig, system: &PreparedSystem) -> Result<RunOutput> {
    config.validate()?;
    let window = config.window()?;
    let scale = config.time_scale()?;
    let mut snapshot_times: Vec<f64> = config.sampling.mode_snapshots.iter().map(|t| t * scale).collect();
    snapshot_times.sort_by(f64::total_cmp);
    let mut recorder = Recorder {
        system,
        schedule: &config.schedule,
        stride: config.sampling.stride,
        snapshot_times,
        next_snapshot: 0,
        half_step: 0.5 * config.sil.dt,
        trajectory: Trajectory::default(),
        sweep: Vec::new(),
    };
    let h = DrivenHamiltonian {
        ops: &system.ops,
        schedule: &config.schedule,
    };
    let mut psi = initial_state(&system.table);
    let mut observer = |ctx: StepContext, psi: &StateVector| recorder.observe(ctx, psi);
    let stats = propagate(&mut psi, &h, window, &config.sil, &mut observer)?;
    info!(
        "run finished: dim {} steps {} renormalizations {}",
        system.table.dimension(),
        stats.n_steps,
        stats.renormalizations
    );
    Ok(RunOutput {
        trajectory: recorder.trajectory,
        stats,
        gaps: config.gaps()?,
        dimension: system.table.dimension(),
        sweep: recorder.sweep,
    })
}

pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    let system = PreparedSystem::build(config)?;
    run_prepared(config, &system)
}

/// Static-field quench.
pub fn run_sbm(config: &ExperimentConfig) -> Result<RunOutput> {
    if !matches!(config.schedule, FieldSchedule::Static { .. }) {
        return Err(Error::config(None, "run_sbm needs a static schedule"));
    }
    run(config)
}

/// Rotating-field sweep; the final `(e_res, F)` is the last sweep sample.
pub fn run_sweep(config: &ExperimentConfig) -> Result<RunOutput> {
    if !matches!(config.schedule, FieldSchedule::RotatingSweep { .. }) {
        return Err(Error::config(None, "run_sweep needs a rotating_sweep schedule"));
    }
    run(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub alpha: f64,
    pub tf: f64,
    pub excess_energy: Option<f64>,
    pub fidelity: Option<f64>,
    pub error: Option<String>,
}

/// Independent sweeps over the `(alpha, tf)` grid. Cells run concurrently;
/// failures are recorded per row and rows come back sorted by `(alpha, tf)`.
pub fn sweep_scan(template: &ExperimentConfig, tf_grid: &[f64], alpha_grid: &[f64]) -> Result<Vec<ScanRow>> {
    let FieldSchedule::RotatingSweep { h0, h, t0, .. } = template.schedule else {
        return Err(Error::config(None, "scan needs a rotating_sweep template"));
    };
    template.bath.validate()?;
    let table = BasisTable::enumerate_with_limit(template.basis_modes, template.max_excitations, template.max_dimension)?;
    let mut cells: Vec<(f64, f64)> = alpha_grid
        .iter()
        .flat_map(|&a| tf_grid.iter().map(move |&tf| (a, tf)))
        .collect();
    cells.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let rows = cells
        .par_iter()
        .map(|&(alpha, tf)| {
            let mut cfg = template.clone();
            cfg.bath.alpha = alpha;
            cfg.schedule = FieldSchedule::RotatingSweep { h0, h, t0, tf };
            // only the end point is needed
            cfg.sampling.stride = usize::MAX;
            cfg.sampling.mode_snapshots.clear();
            let outcome = PreparedSystem::with_table(&cfg, table.clone())
                .and_then(|sys| run_prepared(&cfg, &sys))
                .and_then(|out| {
                    out.final_sweep()
                        .copied()
                        .ok_or_else(|| Error::Domain("sweep produced no samples".into()))
                });
            match outcome {
                Ok(s) => ScanRow {
                    alpha,
                    tf,
                    excess_energy: Some(s.excess_energy),
                    fidelity: Some(s.fidelity),
                    error: None,
                },
                Err(e) => ScanRow {
                    alpha,
                    tf,
                    excess_energy: None,
                    fidelity: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(rows)
}

/// Largest local maximum of the closed-system residual energy below the
/// second zero, in units of `1/h`.
pub const TF_MAX: f64 = 8.42;
/// Second exact zero of the closed-system residual energy, `pi sqrt(15)/h`.
pub const TF_MIN: f64 = 12.17;
/// Alternative value quoted for the same minimum; it is not a zero.
pub const TF_MIN_ALT: f64 = 12.7;

pub const PRESETS: &[&str] = &[
    "sbm-fig1",
    "sbm-fig1-desk",
    "sweep-fig5",
    "sweep-fig5-desk",
    "sweep-fig6",
    "sweep-fig6-desk",
    "sweep-tfmin",
    "sweep-tfmin-alt",
];

fn desk(modes: usize, nph: usize) -> (usize, usize) {
    (modes.div_ceil(2), nph.div_ceil(2))
}

/// Named parameter sets. `-desk` variants halve `M` and `N_ph` (rounding
/// up), trading accuracy at strong coupling for a basis small enough for a
/// workstation.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (base, is_desk) = match name.strip_suffix("-desk") {
        Some(b) => (b, true),
        None => (name, false),
    };
    let (modes, nph) = match base {
        "sbm-fig1" => (50, 6),
        "sweep-fig5" => (80, 3),
        "sweep-fig6" | "sweep-tfmin" | "sweep-tfmin-alt" => (70, 5),
        _ => return Err(Error::config(None, format!("unknown preset '{name}'; known: {}", PRESETS.join(", ")))),
    };
    if is_desk && !PRESETS.contains(&name) {
        return Err(Error::config(None, format!("unknown preset '{name}'; known: {}", PRESETS.join(", "))));
    }
    let (modes, nph) = if is_desk { desk(modes, nph) } else { (modes, nph) };
    let omega_c = 5.0;
    let mut cfg = if base == "sbm-fig1" {
        let mut c = ExperimentConfig::new(
            BathSpec::ohmic(0.1, omega_c, modes),
            nph,
            FieldSchedule::Static { delta: 1.0, h0: 0.0 },
            CouplingAxis::Z,
        );
        c.sampling = Sampling {
            t_end: 20.0,
            stride: 10,
            mode_snapshots: vec![0.03, 0.06, 1.14, 4.85, 6.0],
            time_unit: TimeUnit::RenormalizedGap,
        };
        c
    } else {
        let tf = match base {
            "sweep-tfmin" => TF_MIN,
            "sweep-tfmin-alt" => TF_MIN_ALT,
            _ => TF_MAX,
        };
        let mut c = ExperimentConfig::new(
            BathSpec::ohmic(0.1, omega_c, modes),
            nph,
            FieldSchedule::RotatingSweep { h0: 0.0, h: 1.0, t0: 0.0, tf },
            CouplingAxis::Z,
        );
        c.sampling.stride = 10;
        c
    };
    cfg.basis_modes = modes;
    Ok(cfg)
}

/// `pi / tf`, the angular sweep rate.
pub fn sweep_rate(tf: f64) -> f64 {
    PI / tf
}
