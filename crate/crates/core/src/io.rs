//! Plain-text configuration, delimited output tables and run manifests.
//!
//! Configuration is `key = value` per line; `#` starts a comment. A `preset`
//! line, if present, is applied first and later keys override it.
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `preset` | named parameter set | |
//! | `experiment` | `static` or `sweep` | required |
//! | `alpha`, `omega_c`, `modes`, `nph` | bath and basis | required |
//! | `s` | spectral exponent | `1` |
//! | `basis_modes` | must equal `modes` | `modes` |
//! | `delta`, `h0` | static field `(delta, 0, h0)` | `delta` required, `h0 = 0` |
//! | `h`, `tf`, `t0`, `h0` | sweep field | `h`, `tf` required, `t0 = 0`, `h0 = 0` |
//! | `coupling_axis` | `z` or `x` | `z` |
//! | `dt`, `krylov_dim`, `breakdown_tol` | integrator | `0.02/omega_c`, `12`, `1e-13` |
//! | `t_end`, `time_unit` | static run length, `field` or `delta_r` | `20`, `field` |
//! | `stride`, `snapshots` | sample stride, mode snapshot times | `1`, none |
//! | `max_dimension` | refuse larger bases | `1e8` |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::fock_basis::{dimension_estimate, MAX_EXCITATIONS};
use crate::hamiltonian::{CouplingAxis, FieldSchedule};
use crate::observables::Trajectory;
use crate::oracles::toulouse_rate;
use crate::propagator::{PropagationStats, SilParams};
use crate::protocols::{preset, ExperimentConfig, ScanRow, SweepSample, TimeUnit};

const KNOWN_KEYS: &[&str] = &[
    "preset",
    "experiment",
    "alpha",
    "s",
    "omega_c",
    "modes",
    "basis_modes",
    "nph",
    "delta",
    "h0",
    "h",
    "tf",
    "t0",
    "coupling_axis",
    "dt",
    "krylov_dim",
    "breakdown_tol",
    "t_end",
    "time_unit",
    "stride",
    "snapshots",
    "max_dimension",
];

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

fn tokenize(text: &str) -> Result<BTreeMap<String, Entry>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(Error::config(Some(line), format!("expected `key = value`, got `{body}`")));
        };
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::config(
                Some(line),
                format!("unknown key `{key}`; known keys: {}", KNOWN_KEYS.join(", ")),
            ));
        }
        if value.is_empty() {
            return Err(Error::config(Some(line), format!("`{key}` has no value")));
        }
        if let Some(prev) = out.insert(key.clone(), Entry { line, value }) {
            return Err(Error::config(
                Some(line),
                format!("`{key}` already set on line {}", prev.line),
            ));
        }
    }
    Ok(out)
}

struct Keys {
    map: BTreeMap<String, Entry>,
}

impl Keys {
    fn line(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|e| e.line)
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        self.map.get(key)
    }

    fn float(&self, key: &str) -> Result<Option<f64>> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        let v: f64 = e
            .value
            .parse()
            .map_err(|_| Error::config(Some(e.line), format!("`{key}`: `{}` is not a number", e.value)))?;
        if !v.is_finite() {
            return Err(Error::config(Some(e.line), format!("`{key}` must be finite")));
        }
        Ok(Some(v))
    }

    fn count(&self, key: &str) -> Result<Option<usize>> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        e.value
            .parse()
            .map(Some)
            .map_err(|_| Error::config(Some(e.line), format!("`{key}`: `{}` is not a non-negative integer", e.value)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
}

fn range_check(keys: &Keys, key: &str, ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(keys.line(key), format!("`{key}` {what}")))
    }
}

/// Parse and validate a configuration, resolving every default.
pub fn parse_config(text: &str) -> Result<ParsedConfig> {
    let keys = Keys { map: tokenize(text)? };
    let mut warnings = Vec::new();

    let base = match keys.raw("preset") {
        Some(e) => Some(preset(&e.value).map_err(|err| match err {
            Error::Config { message, .. } => Error::config(Some(e.line), message),
            other => other,
        })?),
        None => None,
    };

    let experiment = match (keys.raw("experiment"), &base) {
        (Some(e), _) => match e.value.as_str() {
            "static" => "static",
            "sweep" => "sweep",
            other => {
                return Err(Error::config(
                    Some(e.line),
                    format!("`experiment` must be `static` or `sweep`, got `{other}`"),
                ))
            }
        },
        (None, Some(b)) => match b.schedule {
            FieldSchedule::Static { .. } => "static",
            FieldSchedule::RotatingSweep { .. } => "sweep",
        },
        (None, None) => "",
    };

    if base.is_none() {
        let mut required = vec!["experiment", "alpha", "omega_c", "modes", "nph"];
        match experiment {
            "static" => required.push("delta"),
            "sweep" => required.extend(["h", "tf"]),
            _ => {}
        }
        let missing: Vec<&str> = required.into_iter().filter(|k| keys.raw(k).is_none()).collect();
        if !missing.is_empty() {
            return Err(Error::config(None, format!("missing required keys: {}", missing.join(", "))));
        }
    }

    let alpha = keys.float("alpha")?.or(base.as_ref().map(|b| b.bath.alpha)).unwrap_or(0.0);
    range_check(&keys, "alpha", alpha >= 0.0, "must be >= 0")?;
    let s = keys.float("s")?.or(base.as_ref().map(|b| b.bath.s)).unwrap_or(1.0);
    range_check(&keys, "s", s > 0.0, "must be > 0")?;
    let omega_c = keys.float("omega_c")?.or(base.as_ref().map(|b| b.bath.omega_c)).unwrap_or(0.0);
    range_check(&keys, "omega_c", omega_c > 0.0, "must be > 0")?;
    let modes = keys.count("modes")?.or(base.as_ref().map(|b| b.bath.modes)).unwrap_or(0);
    range_check(&keys, "modes", modes >= 1, "must be >= 1")?;
    let basis_modes = keys.count("basis_modes")?.unwrap_or(modes);
    if basis_modes != modes {
        return Err(Error::config(
            keys.line("basis_modes"),
            format!("`basis_modes` = {basis_modes} does not match `modes` = {modes}"),
        ));
    }
    let nph = keys.count("nph")?.or(base.as_ref().map(|b| b.max_excitations)).unwrap_or(0);
    let max_dimension = match keys.float("max_dimension")? {
        Some(v) if v >= 2.0 => v as u128,
        Some(_) => return Err(Error::config(keys.line("max_dimension"), "`max_dimension` must be >= 2")),
        None => base.as_ref().map(|b| b.max_dimension).unwrap_or(crate::fock_basis::DEFAULT_MAX_DIMENSION),
    };
    let estimate = dimension_estimate(modes, nph);
    if nph > MAX_EXCITATIONS || estimate > max_dimension {
        let msg = format!(
            "basis (M = {modes}, N_ph = {nph}) has dimension {estimate} ({:.3e}); limit is {max_dimension} and N_ph <= {MAX_EXCITATIONS}",
            estimate as f64
        );
        warn!("{msg}");
        warnings.push(msg);
        return Err(if nph > MAX_EXCITATIONS {
            Error::Capacity {
                what: "N_ph",
                requested: nph as u128,
                limit: MAX_EXCITATIONS as u128,
            }
        } else {
            Error::Capacity {
                what: "basis dimension",
                requested: estimate,
                limit: max_dimension,
            }
        });
    }

    let base_static = base.as_ref().and_then(|b| match b.schedule {
        FieldSchedule::Static { delta, h0 } => Some((delta, h0)),
        _ => None,
    });
    let base_sweep = base.as_ref().and_then(|b| match b.schedule {
        FieldSchedule::RotatingSweep { h0, h, t0, tf } => Some((h0, h, t0, tf)),
        _ => None,
    });
    let schedule = if experiment == "static" {
        for k in ["h", "tf", "t0"] {
            if keys.raw(k).is_some() {
                return Err(Error::config(keys.line(k), format!("`{k}` only applies to sweeps")));
            }
        }
        let delta = keys.float("delta")?.or(base_static.map(|b| b.0));
        let Some(delta) = delta else {
            return Err(Error::config(None, "missing required keys: delta"));
        };
        let h0 = keys.float("h0")?.or(base_static.map(|b| b.1)).unwrap_or(0.0);
        FieldSchedule::Static { delta, h0 }
    } else {
        for k in ["delta", "t_end"] {
            if keys.raw(k).is_some() {
                return Err(Error::config(keys.line(k), format!("`{k}` only applies to static runs")));
            }
        }
        let h = keys.float("h")?.or(base_sweep.map(|b| b.1));
        let tf = keys.float("tf")?.or(base_sweep.map(|b| b.3));
        let (Some(h), Some(tf)) = (h, tf) else {
            return Err(Error::config(None, "missing required keys: h, tf"));
        };
        let h0 = keys.float("h0")?.or(base_sweep.map(|b| b.0)).unwrap_or(0.0);
        let t0 = keys.float("t0")?.or(base_sweep.map(|b| b.2)).unwrap_or(0.0);
        range_check(&keys, "tf", tf > t0, "must exceed t0")?;
        FieldSchedule::RotatingSweep { h0, h, t0, tf }
    };

    let coupling_axis = match keys.raw("coupling_axis") {
        Some(e) => match e.value.to_ascii_lowercase().as_str() {
            "z" => CouplingAxis::Z,
            "x" => CouplingAxis::X,
            other => {
                return Err(Error::config(
                    Some(e.line),
                    format!("`coupling_axis` must be `x` or `z`, got `{other}`"),
                ))
            }
        },
        None => base.as_ref().map(|b| b.coupling_axis).unwrap_or(CouplingAxis::Z),
    };

    let default_sil = SilParams::for_cutoff(omega_c);
    let dt = keys.float("dt")?.unwrap_or(default_sil.dt);
    range_check(&keys, "dt", dt > 0.0, "must be > 0")?;
    let krylov_dim = keys.count("krylov_dim")?.unwrap_or(default_sil.krylov_dim);
    range_check(
        &keys,
        "krylov_dim",
        (2..=crate::propagator::MAX_KRYLOV_DIM).contains(&krylov_dim),
        &format!("must be in 2..={}", crate::propagator::MAX_KRYLOV_DIM),
    )?;
    let breakdown_tol = keys.float("breakdown_tol")?.unwrap_or(default_sil.breakdown_tol);
    range_check(&keys, "breakdown_tol", breakdown_tol >= 0.0, "must be >= 0")?;

    let mut sampling = match &base {
        Some(b) if (experiment == "static") == matches!(b.schedule, FieldSchedule::Static { .. }) => b.sampling.clone(),
        _ => Default::default(),
    };
    if let Some(t_end) = keys.float("t_end")? {
        range_check(&keys, "t_end", t_end >= 0.0, "must be >= 0")?;
        sampling.t_end = t_end;
    }
    if let Some(e) = keys.raw("time_unit") {
        sampling.time_unit = match e.value.as_str() {
            "field" => TimeUnit::Field,
            "delta_r" => TimeUnit::RenormalizedGap,
            other => {
                return Err(Error::config(
                    Some(e.line),
                    format!("`time_unit` must be `field` or `delta_r`, got `{other}`"),
                ))
            }
        };
    }
    if let Some(stride) = keys.count("stride")? {
        range_check(&keys, "stride", stride >= 1, "must be >= 1")?;
        sampling.stride = stride;
    }
    if let Some(e) = keys.raw("snapshots") {
        let mut times = Vec::new();
        for item in e.value.split(',') {
            let v: f64 = item
                .trim()
                .parse()
                .map_err(|_| Error::config(Some(e.line), format!("`snapshots`: `{}` is not a number", item.trim())))?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(Some(e.line), "`snapshots` must be finite and >= 0"));
            }
            times.push(v);
        }
        sampling.mode_snapshots = times;
    }

    let config = ExperimentConfig {
        bath: BathSpec { alpha, s, omega_c, modes },
        basis_modes,
        max_excitations: nph,
        schedule,
        coupling_axis,
        sil: SilParams {
            dt,
            krylov_dim,
            breakdown_tol,
            ..default_sil
        },
        sampling,
        max_dimension,
    };
    config.validate().map_err(|e| match e {
        Error::Config { line: None, message } => Error::config(None, message),
        other => Error::config(None, other.to_string()),
    })?;
    Ok(ParsedConfig { config, warnings })
}

pub fn read_config(path: &Path) -> Result<ParsedConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Fully resolved configuration in the input schema; parses back to an
/// identical config.
pub fn render_config(config: &ExperimentConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    match config.schedule {
        FieldSchedule::Static { delta, h0 } => {
            kv("experiment", "static".into());
            kv("delta", fmt_f64(delta));
            kv("h0", fmt_f64(h0));
        }
        FieldSchedule::RotatingSweep { h0, h, t0, tf } => {
            kv("experiment", "sweep".into());
            kv("h", fmt_f64(h));
            kv("tf", fmt_f64(tf));
            kv("t0", fmt_f64(t0));
            kv("h0", fmt_f64(h0));
        }
    }
    kv("alpha", fmt_f64(config.bath.alpha));
    kv("s", fmt_f64(config.bath.s));
    kv("omega_c", fmt_f64(config.bath.omega_c));
    kv("modes", config.bath.modes.to_string());
    kv("basis_modes", config.basis_modes.to_string());
    kv("nph", config.max_excitations.to_string());
    kv(
        "coupling_axis",
        match config.coupling_axis {
            CouplingAxis::X => "x".into(),
            CouplingAxis::Z => "z".into(),
        },
    );
    kv("dt", fmt_f64(config.sil.dt));
    kv("krylov_dim", config.sil.krylov_dim.to_string());
    kv("breakdown_tol", fmt_f64(config.sil.breakdown_tol));
    if matches!(config.schedule, FieldSchedule::Static { .. }) {
        kv("t_end", fmt_f64(config.sampling.t_end));
    }
    kv(
        "time_unit",
        match config.sampling.time_unit {
            TimeUnit::Field => "field".into(),
            TimeUnit::RenormalizedGap => "delta_r".into(),
        },
    );
    kv("stride", config.sampling.stride.to_string());
    if !config.sampling.mode_snapshots.is_empty() {
        let list: Vec<String> = config.sampling.mode_snapshots.iter().map(|v| fmt_f64(*v)).collect();
        kv("snapshots", list.join(", "));
    }
    kv("max_dimension", config.max_dimension.to_string());
    out
}

/// 17 significant digits: parses back to the identical `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub const TRAJECTORY_HEADER: &str = "t,sx,sy,sz,E_bath,E_total,norm";
pub const MODES_HEADER: &str = "t,k,omega_k,dn_k";
pub const SWEEP_HEADER: &str = "t,field_norm,e_res,fidelity";
pub const SCAN_HEADER: &str = "alpha,tf,e_res,fidelity,error";

pub fn trajectory_table(traj: &Trajectory) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for s in &traj.samples {
        let cols = [s.t, s.bloch[0], s.bloch[1], s.bloch[2], s.bath_energy, s.total_energy, s.norm];
        let row: Vec<String> = cols.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    write_file(path, &trajectory_table(traj))
}

/// Long format, one row per `(snapshot, mode)`.
pub fn write_mode_snapshots(traj: &Trajectory, omegas: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from(MODES_HEADER);
    out.push('\n');
    for snap in &traj.mode_snapshots {
        for (k, (dn, w)) in snap.occupations.iter().zip(omegas).enumerate() {
            let _ = writeln!(out, "{},{},{},{}", fmt_f64(snap.t), k, fmt_f64(*w), fmt_f64(*dn));
        }
    }
    write_file(path, &out)
}

pub fn write_sweep_samples(samples: &[SweepSample], path: &Path) -> Result<()> {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(s.t),
            fmt_f64(s.field_norm),
            fmt_f64(s.excess_energy),
            fmt_f64(s.fidelity)
        );
    }
    write_file(path, &out)
}

pub fn scan_table(rows: &[ScanRow]) -> String {
    let mut sorted: Vec<&ScanRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then(a.tf.total_cmp(&b.tf)));
    let mut out = String::from(SCAN_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in sorted {
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(r.alpha),
            fmt_f64(r.tf),
            opt(r.excess_energy),
            opt(r.fidelity),
            err
        );
    }
    out
}

pub fn write_scan(rows: &[ScanRow], path: &Path) -> Result<()> {
    write_file(path, &scan_table(rows))
}

/// A numeric table read back from delimited text.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::config(None, format!("no column `{name}`; have {}", self.header.join(", "))))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }
}

pub fn parse_table(text: &str) -> Result<Table> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::config(Some(1), "empty table"))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            // empty cells (missing values) read as NaN
            .map(|c| match c.trim() {
                "" => Ok(f64::NAN),
                v => v.parse::<f64>(),
            })
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::config(Some(i + 2), format!("non-numeric row `{line}`")))?;
        if row.len() != header.len() {
            return Err(Error::config(
                Some(i + 2),
                format!("{} fields, header has {}", row.len(), header.len()),
            ));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub dimension: u128,
    pub delta_r: Option<f64>,
    pub delta_eff: Option<f64>,
    /// `pi delta^2 / (2 omega_c)`, the decay rate at `alpha = 1/2`.
    pub toulouse_gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub status: RunStatus,
    /// Energies in units of `delta` (static runs) or `h` (sweeps).
    pub units: String,
    pub config: ExperimentConfig,
    pub config_text: String,
    pub derived: Derived,
    pub stats: Option<PropagationStats>,
    pub wall_time_s: Option<f64>,
    pub error: Option<String>,
    pub outputs: Vec<OutputDigest>,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let gaps = config.gaps()?;
        let (units, gamma) = match config.schedule {
            FieldSchedule::Static { delta, .. } => ("delta", Some(toulouse_rate(delta, config.bath.omega_c))),
            FieldSchedule::RotatingSweep { .. } => ("h", None),
        };
        Ok(RunManifest {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            status: RunStatus::Running,
            units: units.to_string(),
            config: config.clone(),
            config_text: render_config(config),
            derived: Derived {
                dimension: dimension_estimate(config.basis_modes, config.max_excitations),
                delta_r: gaps.map(|g| g.delta_r),
                delta_eff: gaps.map(|g| g.delta_eff),
                toulouse_gamma: gamma,
            },
            stats: None,
            wall_time_s: None,
            error: None,
            outputs: Vec::new(),
        })
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.outputs.push(OutputDigest {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Domain(format!("manifest encoding: {e}")))?;
        write_file(path, &(json + "\n"))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(None, format!("manifest {}: {e}", path.display())))
    }
}
