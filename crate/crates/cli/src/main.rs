#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use sil_sbm::fitting::{fit_damped_cosine, fit_pure_decay, quality_of, FitWindow};
use sil_sbm::fock_basis::{dimension_estimate, memory_estimate, DEFAULT_MAX_DIMENSION, MAX_EXCITATIONS};
use sil_sbm::io::{
    fmt_f64, read_config, read_table, write_mode_snapshots, write_scan, write_sweep_samples, write_trajectory,
    RunManifest, RunStatus,
};
use sil_sbm::oracles::{
    closed_excess_energy, closed_sweep_state, quality_factor, toulouse_sigma_z, weak_coupling_curves,
};
use sil_sbm::protocols::{run_prepared, sweep_scan, PreparedSystem};
use sil_sbm::{discretize, BathSpec, Error, FieldSchedule};

const THREADS_VAR: &str = "SIL_SBM_THREADS";

#[derive(Parser)]
#[command(name = "sil-sbm", version, about = "Qubit + bosonic bath dynamics by short-iterative Lanczos")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one configuration and write trajectory, snapshots and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Independent sweeps over a grid of final times and coupling strengths.
    Scan {
        #[arg(long)]
        config: PathBuf,
        /// `start:stop:count`, inclusive.
        #[arg(long)]
        tf_grid: String,
        /// Comma-separated list or `start:stop:count`.
        #[arg(long)]
        alpha_grid: String,
        #[arg(long, default_value = "scan.csv")]
        out: PathBuf,
    },
    /// Tabulate a closed-form reference curve to stdout.
    Oracle {
        #[arg(long, value_enum)]
        which: OracleKind,
        /// `key=value` pairs: delta, omega_c, alpha, h0, beta, h, tf.
        #[arg(long, default_value = "")]
        params: String,
        /// Abscissa grid `start:stop:count` (time, tf or alpha).
        #[arg(long)]
        grid: Option<String>,
    },
    /// Fit a damped cosine (or a pure decay) to one column of a table.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "sz")]
        column: String,
        /// `start:stop`; either side may be empty.
        #[arg(long, default_value = ":")]
        window: String,
        #[arg(long, value_enum, default_value = "damped")]
        model: FitModel,
    },
    /// Dimension and memory estimate of a truncated basis.
    BasisInfo {
        #[arg(long)]
        modes: usize,
        #[arg(long)]
        nph: usize,
        #[arg(long, default_value_t = 12)]
        krylov_dim: usize,
    },
    /// Discretized bath frequencies and couplings.
    BathDump {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        omega_c: f64,
        #[arg(long)]
        modes: usize,
        #[arg(long, default_value_t = 1.0)]
        s: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    Toulouse,
    Weak,
    EresClosed,
    Qfactor,
    SweepClosed,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitModel {
    Damped,
    Decay,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config {
        line: None,
        message: msg.into(),
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64, Error> {
    let v = s.trim();
    match v {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        _ => v.parse().map_err(|_| config_err(format!("{what}: `{s}` is not a number"))),
    }
}

fn linspace(text: &str) -> Result<Vec<f64>, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, n] = parts[..] else {
        return Err(config_err(format!("grid `{text}` must be start:stop:count")));
    };
    let (a, b) = (parse_f64(a, "grid start")?, parse_f64(b, "grid stop")?);
    let n: usize = n
        .trim()
        .parse()
        .map_err(|_| config_err(format!("grid count `{n}` is not an integer")))?;
    if n == 0 || !a.is_finite() || !b.is_finite() {
        return Err(config_err(format!("grid `{text}` needs finite bounds and count >= 1")));
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
}

fn value_list(text: &str) -> Result<Vec<f64>, Error> {
    if text.contains(':') {
        return linspace(text);
    }
    text.split(',').map(|v| parse_f64(v, "list value")).collect()
}

fn parse_window(text: &str) -> Result<FitWindow, Error> {
    let Some((a, b)) = text.split_once(':') else {
        return Err(config_err(format!("window `{text}` must be start:stop")));
    };
    let start = if a.trim().is_empty() { f64::NEG_INFINITY } else { parse_f64(a, "window start")? };
    let end = if b.trim().is_empty() { f64::INFINITY } else { parse_f64(b, "window stop")? };
    Ok(FitWindow::new(start, end))
}

struct OracleParams {
    delta: f64,
    omega_c: f64,
    alpha: f64,
    h0: f64,
    beta: f64,
    h: f64,
    tf: f64,
}

fn parse_params(text: &str) -> Result<OracleParams, Error> {
    let mut p = OracleParams {
        delta: 1.0,
        omega_c: 5.0,
        alpha: 0.0,
        h0: 0.0,
        beta: f64::INFINITY,
        h: 1.0,
        tf: 8.42,
    };
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let Some((k, v)) = item.split_once('=') else {
            return Err(config_err(format!("parameter `{item}` must be key=value")));
        };
        let v = parse_f64(v, k)?;
        match k.trim() {
            "delta" => p.delta = v,
            "omega_c" => p.omega_c = v,
            "alpha" => p.alpha = v,
            "h0" => p.h0 = v,
            "beta" => p.beta = v,
            "h" => p.h = v,
            "tf" => p.tf = v,
            other => return Err(config_err(format!("unknown oracle parameter `{other}`"))),
        }
    }
    if !(p.omega_c > 0.0) {
        return Err(config_err("omega_c must be > 0"));
    }
    if !(p.beta > 0.0) {
        return Err(config_err("beta must be > 0 (use beta=inf for T = 0)"));
    }
    Ok(p)
}

fn oracle(which: OracleKind, params: &str, grid: Option<&str>) -> Result<(), Error> {
    let p = parse_params(params)?;
    let grid = |default: &str| linspace(grid.unwrap_or(default));
    match which {
        OracleKind::Toulouse => {
            println!("t,sz");
            for t in grid("0:20:201")? {
                println!("{},{}", fmt_f64(t), fmt_f64(toulouse_sigma_z(t, p.h0, p.beta, p.delta, p.omega_c)?));
            }
        }
        OracleKind::Weak => {
            println!("t,sz,sx");
            for t in grid("0:30:301")? {
                let w = weak_coupling_curves(t, p.alpha, p.delta, p.h0, p.omega_c)?;
                println!("{},{},{}", fmt_f64(t), fmt_f64(w.sigma_z), fmt_f64(w.sigma_x));
            }
        }
        OracleKind::EresClosed => {
            println!("tf,e_res");
            for tf in grid("0.2:20:100")? {
                println!("{},{}", fmt_f64(tf), fmt_f64(closed_excess_energy(tf, p.h)));
            }
        }
        OracleKind::Qfactor => {
            println!("alpha,Q");
            for a in grid("0.05:0.5:10")? {
                println!("{},{}", fmt_f64(a), fmt_f64(quality_factor(a)?));
            }
        }
        OracleKind::SweepClosed => {
            if !(p.tf > 0.0) {
                return Err(config_err("tf must be > 0"));
            }
            println!("t,sx,sy,sz");
            let default = format!("0:{}:101", p.tf);
            for t in grid(&default)? {
                if t < 0.0 || t > p.tf * (1.0 + 1e-12) {
                    return Err(config_err(format!("t = {t} outside [0, tf]")));
                }
                let b = closed_sweep_state(t, p.tf, p.h);
                println!("{},{},{},{}", fmt_f64(t), fmt_f64(b[0]), fmt_f64(b[1]), fmt_f64(b[2]));
            }
        }
    }
    Ok(())
}

fn run(config: &Path, out_dir: &Path) -> Result<(), Error> {
    let parsed = read_config(config)?;
    for w in &parsed.warnings {
        warn!("{w}");
    }
    let cfg = parsed.config;
    fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let manifest_path = out_dir.join("manifest.json");
    let mut manifest = RunManifest::new(&cfg)?;
    // written before any result so a crashed run still leaves its inputs behind
    manifest.write(&manifest_path)?;

    let start = Instant::now();
    let outcome = PreparedSystem::build(&cfg).and_then(|system| {
        info!("basis dimension {}", system.table.dimension());
        run_prepared(&cfg, &system).map(|out| (out, system))
    });
    manifest.wall_time_s = Some(start.elapsed().as_secs_f64());
    let (out, system) = match outcome {
        Ok(v) => v,
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
            manifest.write(&manifest_path)?;
            return Err(e);
        }
    };

    let traj_path = out_dir.join("trajectory.csv");
    write_trajectory(&out.trajectory, &traj_path)?;
    manifest.record_output(&traj_path)?;
    if !out.trajectory.mode_snapshots.is_empty() {
        let path = out_dir.join("modes.csv");
        write_mode_snapshots(&out.trajectory, &system.modes.omegas, &path)?;
        manifest.record_output(&path)?;
    }
    if let FieldSchedule::RotatingSweep { .. } = cfg.schedule {
        let path = out_dir.join("sweep.csv");
        write_sweep_samples(&out.sweep, &path)?;
        manifest.record_output(&path)?;
        if let Some(last) = out.final_sweep() {
            println!("e_res = {}", fmt_f64(last.excess_energy));
            println!("fidelity = {}", fmt_f64(last.fidelity));
        }
    }
    manifest.stats = Some(out.stats.clone());
    manifest.status = RunStatus::Complete;
    manifest.write(&manifest_path)?;
    println!("dimension = {}", out.dimension);
    println!("steps = {}", out.stats.n_steps);
    println!("manifest = {}", manifest_path.display());
    Ok(())
}

fn scan(config: &Path, tf_grid: &str, alpha_grid: &str, out: &Path) -> Result<(), Error> {
    let parsed = read_config(config)?;
    let tfs = linspace(tf_grid)?;
    let alphas = value_list(alpha_grid)?;
    let rows = sweep_scan(&parsed.config, &tfs, &alphas)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    for r in rows.iter().filter(|r| r.error.is_some()) {
        warn!("cell alpha = {}, tf = {} failed: {}", r.alpha, r.tf, r.error.as_deref().unwrap_or(""));
    }
    write_scan(&rows, out)?;
    println!("cells = {}", rows.len());
    println!("failed = {failed}");
    println!("table = {}", out.display());
    Ok(())
}

fn fit(input: &Path, column: &str, window: &str, model: FitModel) -> Result<(), Error> {
    let table = read_table(input)?;
    let t = table.column("t")?;
    let y = table.column(column)?;
    let window = parse_window(window)?;
    let fit = match model {
        FitModel::Damped => fit_damped_cosine(&t, &y, window)?,
        FitModel::Decay => fit_pure_decay(&t, &y, window)?,
    };
    println!("omega = {}", fmt_f64(fit.omega));
    println!("gamma = {}", fmt_f64(fit.gamma));
    println!("amplitude = {}", fmt_f64(fit.amplitude));
    println!("phase = {}", fmt_f64(fit.phase));
    println!("offset = {}", fmt_f64(fit.offset));
    println!("t_ref = {}", fmt_f64(fit.t_ref));
    println!("residual_rms = {}", fmt_f64(fit.residual_rms));
    println!("converged = {}", fit.converged);
    println!("degenerate = {}", fit.degenerate);
    println!("iterations = {}", fit.iterations);
    println!("samples = {}", fit.samples);
    match quality_of(&fit) {
        Ok(q) => println!("quality = {}", fmt_f64(q)),
        Err(_) => println!("quality = nan"),
    }
    if !fit.converged {
        return Err(Error::Fit("least squares did not converge".into()));
    }
    Ok(())
}

fn basis_info(modes: usize, nph: usize, krylov_dim: usize) {
    let dim = dimension_estimate(modes, nph);
    println!("modes = {modes}");
    println!("nph = {nph}");
    println!("dimension = {dim}");
    println!("memory_bytes = {}", memory_estimate(modes, nph, krylov_dim));
    let fits = nph <= MAX_EXCITATIONS && dim <= DEFAULT_MAX_DIMENSION;
    println!("enumerable = {fits}");
}

fn bath_dump(alpha: f64, omega_c: f64, modes: usize, s: f64) -> Result<(), Error> {
    let spec = BathSpec { alpha, s, omega_c, modes };
    let bath = discretize(&spec)?;
    println!("k,omega_k,g_k");
    for (k, (w, g)) in bath.omegas.iter().zip(&bath.couplings).enumerate() {
        println!("{k},{},{}", fmt_f64(*w), fmt_f64(*g));
    }
    Ok(())
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| config_err(format!("{THREADS_VAR} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| config_err(format!("thread pool: {e}")))
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config() || matches!(e, Error::Io { .. }) {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Run { config, out_dir } => run(config, out_dir),
        Command::Scan {
            config,
            tf_grid,
            alpha_grid,
            out,
        } => scan(config, tf_grid, alpha_grid, out),
        Command::Oracle { which, params, grid } => oracle(*which, params, grid.as_deref()),
        Command::Fit {
            input,
            column,
            window,
            model,
        } => fit(input, column, window, *model),
        Command::BasisInfo { modes, nph, krylov_dim } => {
            basis_info(*modes, *nph, *krylov_dim);
            Ok(())
        }
        Command::BathDump { alpha, omega_c, modes, s } => bath_dump(*alpha, *omega_c, *modes, *s),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
