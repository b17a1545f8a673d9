//! Coherent-state quench runs comparing exact and mean-field dynamics.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::{breakdown_time, ensemble_report, first_revival, EnsembleReport, MicrocanonicalWindow};
use super::{
    coherent_product_state, diagonalize, entanglement_entropy, hamiltonian_blocks, number_expectation,
    ObservableSeries, Propagator, QuantumError,
};
use crate::fock::{FockCutoff, DEFAULT_TAIL_MASS};
use crate::meanfield::{self, MeanFieldState, NetworkField};
use crate::network::{parse_network, ReactionNetwork};
use crate::ode::{uniform_grid, StepOptions};
use crate::table::{Table, Value};

/// `A + A <-> A2` with zero ground energies and coupling `1/√N`, so that
/// the mean-field time scale stays fixed as `N` grows.
pub fn diatomic_network(n_atoms: f64) -> ReactionNetwork {
    let k = 1.0 / n_atoms.max(1.0).sqrt();
    parse_network(&format!("A + A <k={k:?}> A2")).expect("static network text")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumOptions {
    pub tau_max: f64,
    pub dtau: f64,
    pub tail_mass: f64,
    /// Per-species cutoff; chosen from the tail mass when absent.
    pub cutoff: Option<Vec<u32>>,
    /// Entanglement entropy of species 0 (two-species networks only).
    pub entropy: bool,
    pub meanfield: bool,
    pub breakdown_threshold: f64,
    pub window: MicrocanonicalWindow<f64>,
    pub revival_fidelity: f64,
}

impl Default for QuantumOptions {
    fn default() -> Self {
        Self {
            tau_max: 20.0,
            dtau: 0.01,
            tail_mass: DEFAULT_TAIL_MASS,
            cutoff: None,
            entropy: true,
            meanfield: true,
            breakdown_threshold: super::DEFAULT_BREAKDOWN_THRESHOLD,
            window: MicrocanonicalWindow::default(),
            revival_fidelity: super::DEFAULT_REVIVAL_FIDELITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherentRun {
    pub times: Vec<f64>,
    /// `⟨n̂_s(τ)⟩` per species.
    pub occupations: Vec<ObservableSeries<f64>>,
    pub entropy: Option<ObservableSeries<f64>>,
    /// `|α_s(τ)|²` per species.
    pub meanfield: Option<Vec<ObservableSeries<f64>>>,
    pub tau_mf: Option<f64>,
    /// Diagonal-ensemble report for species 0; `Err` carries the reason
    /// it does not apply (e.g. degeneracy).
    pub report: Result<EnsembleReport<f64>, String>,
    pub revival: Option<f64>,
    pub max_norm_error: f64,
    pub hilbert_dim: usize,
}

impl CoherentRun {
    /// `tau,n_atoms,n_molecules[,entropy]` for two species, otherwise
    /// `tau,n_0,…`.
    pub fn timeseries_table(&self) -> Table {
        let species = self.occupations.len();
        let mut cols: Vec<String> = vec!["tau".into()];
        if species == 2 {
            cols.extend(["n_atoms".into(), "n_molecules".into()]);
        } else {
            cols.extend((0..species).map(|s| format!("n_{s}")));
        }
        if self.entropy.is_some() {
            cols.push("entropy".into());
        }
        let mut t = Table::new(cols);
        for (i, &tau) in self.times.iter().enumerate() {
            let mut row = vec![Value::from(tau)];
            row.extend(self.occupations.iter().map(|s| Value::from(s.values[i])));
            if let Some(e) = &self.entropy {
                row.push(e.values[i].into());
            }
            t.push(row);
        }
        t
    }

    /// `tau,n_0,…` of the mean-field comparison.
    pub fn meanfield_table(&self) -> Option<Table> {
        let mf = self.meanfield.as_ref()?;
        let mut t = Table::new(std::iter::once("tau".to_string()).chain((0..mf.len()).map(|s| format!("n_{s}"))));
        for (i, &tau) in self.times.iter().enumerate() {
            let mut row = vec![Value::from(tau)];
            row.extend(mf.iter().map(|s| Value::from(s.values[i])));
            t.push(row);
        }
        Some(t)
    }
}

/// Exact evolution of a coherent product state, sampled on
/// `0, dτ, …, τ_max`, with optional mean-field comparison.
pub fn run_coherent(
    network: &ReactionNetwork,
    amplitudes: &[Complex<f64>],
    opts: &QuantumOptions,
) -> Result<CoherentRun, QuantumError> {
    let species = network.species_count();
    let means: Vec<f64> = amplitudes.iter().map(|a| a.norm_sqr()).collect();
    let cutoff = match &opts.cutoff {
        Some(c) => FockCutoff::new(c.clone()),
        None => FockCutoff::for_coherent(&means, opts.tail_mass),
    };
    let psi = coherent_product_state(network, amplitudes, &cutoff, opts.tail_mass)?;
    let blocks = hamiltonian_blocks::<f64>(network, &psi.layout())?;
    let eig = Arc::new(diagonalize(&blocks)?);
    drop(blocks);
    let prop = Propagator::new(eig, &psi)?;
    let times = uniform_grid(0.0, opts.tau_max, opts.dtau).map_err(|e| QuantumError::Invalid(e.to_string()))?;
    let with_entropy = opts.entropy && species == 2;

    let samples = times
        .par_iter()
        .map(|&t| {
            let s = prop.state_at(t);
            let occ: Vec<f64> = (0..species).map(|k| number_expectation(&s, k)).collect();
            let entropy = if with_entropy { Some(entanglement_entropy(&s, 0)?) } else { None };
            Ok((occ, entropy, (s.norm() - 1.0).abs()))
        })
        .collect::<Result<Vec<_>, QuantumError>>()?;

    let series = |values: Vec<f64>| ObservableSeries {
        times: times.clone(),
        values,
    };
    let occupations: Vec<_> = (0..species)
        .map(|k| series(samples.iter().map(|s| s.0[k]).collect()))
        .collect();
    let entropy = with_entropy.then(|| series(samples.iter().map(|s| s.1.expect("computed")).collect()));
    let max_norm_error = samples.iter().map(|s| s.2).fold(0.0, f64::max);

    let meanfield = if opts.meanfield {
        let field = NetworkField::<f64>::new(network);
        let tr = meanfield::integrate_on(&field, &MeanFieldState::new(amplitudes.to_vec()), &times, StepOptions::default())
            .map_err(|e| QuantumError::Invalid(format!("mean-field integration failed: {e}")))?;
        Some((0..species).map(|k| series(tr.occupations(k))).collect::<Vec<_>>())
    } else {
        None
    };
    let tau_mf = match &meanfield {
        Some(mf) => breakdown_time(&occupations[0], &mf[0], opts.breakdown_threshold)?,
        None => None,
    };
    let report = ensemble_report(&prop, 0, &opts.window).map_err(|e| e.to_string());
    let revival = first_revival(&prop, &times, opts.revival_fidelity);

    Ok(CoherentRun {
        times,
        occupations,
        entropy,
        meanfield,
        tau_mf,
        report,
        revival,
        max_norm_error,
        hilbert_dim: psi.dim(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_diatomic_run_is_consistent() {
        let net = diatomic_network(9.0);
        let opts = QuantumOptions {
            tau_max: 4.0,
            dtau: 0.05,
            ..Default::default()
        };
        let run = run_coherent(&net, &[Complex::new(3.0, 0.0), Complex::new(0.0, 0.0)], &opts).unwrap();
        assert!(run.max_norm_error < 1e-10);
        for i in 0..run.times.len() {
            let charge = run.occupations[0].values[i] + 2.0 * run.occupations[1].values[i];
            assert!((charge - 9.0).abs() < 1e-9);
        }
        let e = run.entropy.as_ref().unwrap();
        assert!(e.values[0].abs() < 1e-9);
        let t = run.timeseries_table();
        assert_eq!(t.columns.join(","), "tau,n_atoms,n_molecules,entropy");
        assert_eq!(t.len(), 81);
        assert!(run.report.is_ok());
    }
}
