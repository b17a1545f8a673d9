//! Run orchestration and export of data products.

mod config;

pub use config::{Format, Mode, RunConfig};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chaos::{self, ScanOptions};
use crate::fock::FockCutoff;
use crate::meanfield::{self, ClassicalState, MeanFieldState, NondimParams};
use crate::network::{parse_network, ReactionNetwork};
use crate::ode::{StepOptions, Tolerances};
use crate::quantum::{self, MicrocanonicalWindow, Propagator, QuantumOptions};
use crate::table::Table;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl WorkbenchError {
    /// Process exit code: 2 for configuration and output problems, 3 for
    /// numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            WorkbenchError::Config(_) | WorkbenchError::Io { .. } => 2,
            WorkbenchError::Stage { .. } => 3,
        }
    }
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> WorkbenchError {
    move |e| WorkbenchError::Stage {
        stage,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    /// Effective configuration with the seed filled in.
    pub config: RunConfig,
    pub config_text: String,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub manifest: Manifest,
    pub tables: Vec<(String, Table)>,
    pub scalars: BTreeMap<String, f64>,
}

impl ResultBundle {
    pub fn empty(config: RunConfig) -> Self {
        Self {
            manifest: Manifest {
                version: VERSION.to_string(),
                config_text: config.render(),
                config,
                wall_time_seconds: 0.0,
            },
            tables: Vec::new(),
            scalars: BTreeMap::new(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

/// Fills in an unset seed from the operating system RNG.
pub fn resolve_seed(config: &mut RunConfig) -> u64 {
    *config.seed.get_or_insert_with(rand::random)
}

/// Loads the network named by the configuration, if any.
pub fn load_network(config: &RunConfig) -> Result<Option<ReactionNetwork>, WorkbenchError> {
    let text = match (&config.reaction, &config.network_file) {
        (Some(r), _) => r.clone(),
        (None, Some(path)) => fs::read_to_string(path).map_err(|source| WorkbenchError::Io {
            path: path.clone(),
            source,
        })?,
        (None, None) => return Ok(None),
    };
    parse_network(&text)
        .map(Some)
        .map_err(|e| WorkbenchError::Config(format!("network: {e}")))
}

fn step_options(config: &RunConfig) -> StepOptions<f64> {
    StepOptions::from(Tolerances {
        rel: config.rel_tol,
        abs: config.abs_tol,
    })
}

/// Nondimensional parameters: from the concurrent network when given,
/// otherwise `c1`, `c2` from the configuration.
fn nondim_params(config: &RunConfig, network: Option<&ReactionNetwork>) -> Result<NondimParams<f64>, WorkbenchError> {
    match network {
        None => Ok(NondimParams::from_couplings(config.c1, config.c2)),
        Some(net) => {
            let (e_a, e_a2, k1, k2) = meanfield::concurrent_constants(net).map_err(|e| WorkbenchError::Config(e.to_string()))?;
            meanfield::nondimensionalize(e_a, e_a2, k1, k2).map_err(|e| WorkbenchError::Config(e.to_string()))
        }
    }
}

/// Runs the configured mode. An unset seed is generated and recorded in
/// the manifest.
pub fn run(config: &RunConfig) -> Result<ResultBundle, WorkbenchError> {
    let start = Instant::now();
    let mut config = config.clone();
    resolve_seed(&mut config);
    config.validate()?;
    let network = load_network(&config)?;
    let mut bundle = ResultBundle::empty(config.clone());
    match config.mode {
        Mode::Quantum => run_quantum(&config, network, &mut bundle)?,
        Mode::Meanfield => run_meanfield(&config, network, &mut bundle)?,
        Mode::Classical => run_classical(&config, network, &mut bundle)?,
        Mode::Poincare => run_poincare(&config, network, &mut bundle)?,
        Mode::Lyapunov => run_lyapunov(&config, network, &mut bundle)?,
        Mode::Sweep => run_sweep(&config, &mut bundle)?,
    }
    bundle.manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok(bundle)
}

fn first_species_amplitudes(species: usize, n: f64) -> Vec<Complex<f64>> {
    let mut a = vec![Complex::new(0.0, 0.0); species];
    if let Some(first) = a.first_mut() {
        *first = Complex::new(n.sqrt(), 0.0);
    }
    a
}

fn run_quantum(config: &RunConfig, network: Option<ReactionNetwork>, bundle: &mut ResultBundle) -> Result<(), WorkbenchError> {
    let network = network.unwrap_or_else(|| quantum::diatomic_network(config.n));
    let amplitudes = first_species_amplitudes(network.species_count(), config.n);
    let opts = QuantumOptions {
        tau_max: config.tau_max(),
        dtau: config.dtau(),
        tail_mass: config.tail_mass,
        cutoff: config.cutoff.map(|k| vec![k; network.species_count()]),
        entropy: config.entropy,
        meanfield: true,
        breakdown_threshold: config.breakdown_threshold,
        window: MicrocanonicalWindow {
            halfwidth: config.halfwidth,
            ..Default::default()
        },
        ..Default::default()
    };
    let run = quantum::run_coherent(&network, &amplitudes, &opts).map_err(stage("quantum evolution"))?;
    bundle.tables.push(("timeseries".into(), run.timeseries_table()));
    if let Some(t) = run.meanfield_table() {
        bundle.tables.push(("meanfield".into(), t));
    }
    let s = &mut bundle.scalars;
    s.insert("hilbert_dim".into(), run.hilbert_dim as f64);
    s.insert("max_norm_error".into(), run.max_norm_error);
    if let Some(t) = run.tau_mf {
        s.insert("tau_mf".into(), t);
    }
    if let Some(t) = run.revival {
        s.insert("revival".into(), t);
    }
    if let Ok(r) = &run.report {
        s.insert("mean_diag".into(), r.mean_diag);
        s.insert("fluct_sq".into(), r.fluct_sq);
        s.insert("mean_micro".into(), r.mean_micro);
        s.insert("window_center".into(), r.window.0);
        s.insert("window_halfwidth".into(), r.window.1);
    }
    Ok(())
}

fn run_meanfield(config: &RunConfig, network: Option<ReactionNetwork>, bundle: &mut ResultBundle) -> Result<(), WorkbenchError> {
    let opts = step_options(config);
    match network {
        Some(net) => {
            let field = meanfield::meanfield_vector_field::<f64>(&net);
            let initial = MeanFieldState::new(first_species_amplitudes(net.species_count(), config.n));
            let tr = meanfield::integrate(&field, &initial, config.tau_max(), config.dtau(), opts)
                .map_err(stage("mean-field integration"))?;
            bundle.scalars.insert("energy_drift".into(), tr.relative_energy_drift());
            bundle.tables.push(("timeseries".into(), tr.to_table()));
        }
        None => {
            let params = nondim_params(config, None)?;
            let field = meanfield::nondim_vector_field(params);
            let initial = MeanFieldState::new(vec![Complex::new(config.a0, 0.0), Complex::new(0.0, 0.0)]);
            let tr = meanfield::integrate(&field, &initial, config.tau_max(), config.dtau(), opts)
                .map_err(stage("mean-field integration"))?;
            let s = &mut bundle.scalars;
            s.insert("energy_drift".into(), tr.relative_energy_drift());
            if let Ok(fit) = chaos::measure_modulation(&tr.times, &tr.occupations(0)) {
                s.insert("modulation_amplitude".into(), fit.amplitude);
                s.insert("modulation_frequency".into(), fit.frequency);
            }
            if let Ok(p) = meanfield::perturbative_modulation(params.c1, params.c2, config.a0) {
                s.insert("predicted_amplitude".into(), p.amplitude);
                s.insert("predicted_frequency".into(), p.frequency);
                s.insert("prediction_valid".into(), if p.valid { 1.0 } else { 0.0 });
            }
            bundle.tables.push(("timeseries".into(), tr.to_table()));
        }
    }
    Ok(())
}

fn run_classical(config: &RunConfig, network: Option<ReactionNetwork>, bundle: &mut ResultBundle) -> Result<(), WorkbenchError> {
    let network = match network {
        Some(n) => n,
        None => parse_network("A + A <k=1> A2").expect("static network text"),
    };
    let field = meanfield::classical_rate_field::<f64>(&network);
    let mut c = vec![0.0; network.species_count()];
    c[0] = config.concentration;
    let tr = meanfield::integrate_classical(
        &field,
        &ClassicalState { concentrations: c },
        config.tau_max(),
        config.dtau(),
        step_options(config),
    )
    .map_err(stage("rate-equation integration"))?;
    let names: Vec<String> = network.species().iter().map(|s| s.name.clone()).collect();
    if let Some(last) = tr.states.last() {
        for (name, v) in names.iter().zip(&last.concentrations) {
            bundle.scalars.insert(format!("final_{name}"), *v);
        }
    }
    bundle.tables.push(("timeseries".into(), tr.to_table(&names)));
    Ok(())
}

fn run_poincare(config: &RunConfig, network: Option<ReactionNetwork>, bundle: &mut ResultBundle) -> Result<(), WorkbenchError> {
    let params = nondim_params(config, network.as_ref())?;
    let seed = config.seed.expect("seed resolved");
    let initials = chaos::sample_energy_surface(config.energy, &params, config.trajectories, seed)
        .map_err(stage("energy-surface sampling"))?;
    let field = meanfield::nondim_vector_field(params);
    let section = chaos::poincare_section(&field, &initials, config.tau_max(), step_options(config))
        .map_err(stage("poincare section"))?;
    let s = &mut bundle.scalars;
    s.insert("points".into(), section.point_count() as f64);
    s.insert(
        "degenerate".into(),
        section.trajectories.iter().filter(|t| t.degenerate).count() as f64,
    );
    if let Ok(f) = chaos::filling_fraction(&section, config.grid) {
        s.insert("filling_fraction".into(), f);
    }
    bundle.tables.push(("section".into(), section.to_table()));
    Ok(())
}

fn run_lyapunov(config: &RunConfig, network: Option<ReactionNetwork>, bundle: &mut ResultBundle) -> Result<(), WorkbenchError> {
    let seed = config.seed.expect("seed resolved");
    if let Some(grid) = &config.c1_grid {
        let opts = ScanOptions {
            energy: config.energy,
            c2: config.c2,
            c1_grid: grid.clone(),
            trajectories: config.trajectories,
            seed,
            section_tau: config.tau_max(),
            lyapunov_horizon: config.tau_max(),
            renorm_interval: config.renorm,
            transient: config.transient,
            grid_resolution: config.grid,
        };
        let points = chaos::regime_scan(&opts).map_err(stage("regime scan"))?;
        bundle.tables.push(("scan".into(), chaos::scan_table(&points)));
        return Ok(());
    }
    let params = nondim_params(config, network.as_ref())?;
    let initials = chaos::sample_energy_surface(config.energy, &params, config.trajectories, seed)
        .map_err(stage("energy-surface sampling"))?;
    let field = meanfield::nondim_vector_field(params);
    let opts = step_options(config);
    let estimates = initials
        .par_iter()
        .map(|p| chaos::lyapunov_max(&field, &p.to_state(), config.tau_max(), config.renorm, config.transient, opts))
        .collect::<Result<Vec<_>, _>>()
        .map_err(stage("lyapunov estimate"))?;
    let mut t = Table::new(["traj_id", "lambda_max"]);
    for (i, e) in estimates.iter().enumerate() {
        t.push(vec![i.into(), e.lambda_max.into()]);
    }
    let mean = estimates.iter().map(|e| e.lambda_max).sum::<f64>() / estimates.len() as f64;
    bundle.scalars.insert("lambda_mean".into(), mean);
    bundle.tables.push(("lyapunov".into(), t));
    Ok(())
}

/// Diagonal-ensemble mean and temporal fluctuation `√ΔN²` of the atom
/// number after a coherent quench of `N` atoms.
pub fn ensemble_point(n: f64, tail_mass: f64, cutoff: Option<u32>) -> Result<(f64, f64), WorkbenchError> {
    let network = quantum::diatomic_network(n);
    let amplitudes = first_species_amplitudes(2, n);
    let cut = match cutoff {
        Some(k) => FockCutoff::uniform(2, k),
        None => FockCutoff::for_coherent(&[n, 0.0], tail_mass),
    };
    let run = || -> Result<(f64, f64), quantum::QuantumError> {
        let psi = quantum::coherent_product_state(&network, &amplitudes, &cut, tail_mass)?;
        let blocks = quantum::hamiltonian_blocks::<f64>(&network, &psi.layout())?;
        let eig = std::sync::Arc::new(quantum::diagonalize(&blocks)?);
        let p = Propagator::new(eig, &psi)?;
        let (mean, fluct_sq) = quantum::diagonal_ensemble(&p, 0)?;
        Ok((mean, fluct_sq.max(0.0).sqrt()))
    };
    run().map_err(stage("ensemble sweep"))
}

fn run_sweep(config: &RunConfig, bundle: &mut ResultBundle) -> Result<(), WorkbenchError> {
    let rows = config
        .sweep_n
        .par_iter()
        .map(|&n| ensemble_point(n, config.tail_mass, config.cutoff).map(|(m, f)| (n, m, f)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new(["N", "mean", "fluct"]);
    for (n, m, f) in rows {
        t.push(vec![n.into(), m.into(), f.into()]);
    }
    bundle.tables.push(("sweep".into(), t));
    Ok(())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> WorkbenchError + '_ {
    move |source| WorkbenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Serialize)]
struct ManifestFile<'a> {
    version: &'a str,
    mode: Mode,
    seed: Option<u64>,
    wall_time_seconds: f64,
    config: &'a RunConfig,
    config_text: &'a str,
    scalars: &'a BTreeMap<String, f64>,
    files: Vec<String>,
}

/// Writes one file per table and format plus `manifest.json` into `dir`;
/// returns the written paths.
pub fn export(bundle: &ResultBundle, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>, WorkbenchError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for (name, table) in &bundle.tables {
        for f in formats {
            let path = dir.join(format!("{name}.{f}"));
            match f {
                Format::Csv => {
                    let file = fs::File::create(&path).map_err(io_err(&path))?;
                    table.write_csv(file).map_err(|e| WorkbenchError::Io {
                        path: path.clone(),
                        source: std::io::Error::other(e.to_string()),
                    })?;
                }
                Format::Json => {
                    let text = serde_json::to_string_pretty(table).expect("tables serialize");
                    fs::write(&path, text).map_err(io_err(&path))?;
                }
            }
            written.push(path);
        }
    }
    let m = &bundle.manifest;
    let manifest = ManifestFile {
        version: &m.version,
        mode: m.config.mode,
        seed: m.config.seed,
        wall_time_seconds: m.wall_time_seconds,
        config: &m.config,
        config_text: &m.config_text,
        scalars: &bundle.scalars,
        files: written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes")).map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_bundle_exports_manifest_only() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = ResultBundle::empty(RunConfig::new(Mode::Sweep));
        let files = export(&bundle, dir.path(), &[Format::Csv, Format::Json]).unwrap();
        assert_eq!(files, vec![dir.path().join("manifest.json")]);
        let text = fs::read_to_string(&files[0]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["mode"], "sweep");
        assert_eq!(v["files"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn seed_is_written_back() {
        let mut cfg = RunConfig::new(Mode::Classical);
        cfg.tau_max = Some(1.0);
        let b = run(&cfg).unwrap();
        assert!(b.manifest.config.seed.is_some());
        assert!(b.manifest.config_text.contains("seed = "));
        cfg.seed = Some(11);
        assert_eq!(run(&cfg).unwrap().manifest.config.seed, Some(11));
    }

    #[test]
    fn classical_default_is_diatomic() {
        let mut cfg = RunConfig::new(Mode::Classical);
        cfg.seed = Some(0);
        let b = run(&cfg).unwrap();
        let t = b.table("timeseries").unwrap();
        assert_eq!(t.columns, ["t", "A", "A2"]);
        assert!((b.scalars["final_A"] - 0.5).abs() < 1e-6);
        assert!((b.scalars["final_A2"] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn bad_network_is_a_config_error() {
        let mut cfg = RunConfig::new(Mode::Classical);
        cfg.reaction = Some("A + <k=1> B".into());
        let err = run(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        cfg.reaction = None;
        cfg.network_file = Some("/nonexistent/net.rxn".into());
        assert_eq!(run(&cfg).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn numeric_failure_exits_with_three() {
        // pair creation from the bath squeezes without bound
        let mut cfg = RunConfig::new(Mode::Meanfield);
        cfg.reaction = Some("0 <k=1> A + A".into());
        cfg.n = 1.0;
        cfg.tau_max = Some(1000.0);
        cfg.seed = Some(1);
        let err = run(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
        assert!(err.to_string().contains("mean-field integration"));
    }
}
