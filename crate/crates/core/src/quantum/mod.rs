//! Exact dynamics on truncated Fock spaces.
//!
//! A [`QuantumState`] is a list of blocks, one per conserved-charge sector
//! (or a single product-space block when the network conserves nothing
//! usable). Hamiltonians are diagonalized block by block and states are
//! propagated in the eigenbasis, `ψ(τ) = V e^{−iΛτ} Vᵀ ψ(0)`.

mod ensemble;
mod protocol;

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::{self, FockCutoff, FockError, HamiltonianBlock, SectorBasis};
use crate::linalg::{self, LinalgError, Matrix};
use crate::network::ReactionNetwork;
use crate::scalar::Real;

pub use ensemble::{
    breakdown_time, diagonal_ensemble, ensemble_report, first_revival, microcanonical_average, time_average,
    EnsembleReport, MicrocanonicalWindow, DEFAULT_BREAKDOWN_THRESHOLD, DEFAULT_HALFWIDTH_FRACTION,
    DEFAULT_MIN_POPULATION, DEFAULT_REVIVAL_FIDELITY,
};
pub use protocol::{diatomic_network, run_coherent, CoherentRun, QuantumOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("Poisson tail beyond cutoff {cutoff} of species {species} is {mass:e}, above {limit:e}")]
    TailMass { species: usize, cutoff: u32, mass: f64, limit: f64 },
    #[error("state and operator live on different basis layouts")]
    LayoutMismatch,
    #[error("occupation {0:?} is not part of the layout")]
    OutsideLayout(Vec<u32>),
    #[error("near-degenerate eigenvalues in block {block} (gap {gap:e}); diagonal-ensemble formulas do not apply")]
    Degenerate { block: usize, gap: f64 },
    #[error("no eigenstate inside the energy window")]
    EmptyWindow,
    #[error("density matrix has eigenvalue {0:e} below -1e-10")]
    NegativeEigenvalue(f64),
    #[error("averaging window [{start}, {end}] is not covered by the series")]
    Window { start: f64, end: f64 },
    #[error("series must share one time grid")]
    GridMismatch,
    #[error("detuning must be nonzero")]
    ZeroDetuning,
    #[error("species index {0} out of range")]
    Species(usize),
    #[error("{0}")]
    Invalid(String),
}

/// Amplitudes on one basis block.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBlock<T> {
    pub basis: Arc<SectorBasis>,
    pub amplitudes: Vec<Complex<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState<T> {
    blocks: Vec<StateBlock<T>>,
}

impl<T: Real> QuantumState<T> {
    pub fn from_blocks(blocks: Vec<StateBlock<T>>) -> Result<Self, QuantumError> {
        if blocks.iter().any(|b| b.amplitudes.len() != b.basis.dim()) {
            return Err(QuantumError::LayoutMismatch);
        }
        Ok(Self { blocks })
    }

    /// Superposition of occupation states on a given layout (not normalized).
    pub fn from_occupations(
        layout: &[Arc<SectorBasis>],
        terms: &[(Vec<u32>, Complex<T>)],
    ) -> Result<Self, QuantumError> {
        let mut blocks: Vec<StateBlock<T>> = layout
            .iter()
            .map(|b| StateBlock {
                basis: b.clone(),
                amplitudes: vec![Complex::new(T::zero(), T::zero()); b.dim()],
            })
            .collect();
        for (occ, amp) in terms {
            let (b, i) = blocks
                .iter()
                .enumerate()
                .find_map(|(b, blk)| blk.basis.position(occ).map(|i| (b, i)))
                .ok_or_else(|| QuantumError::OutsideLayout(occ.clone()))?;
            blocks[b].amplitudes[i] += amp;
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[StateBlock<T>] {
        &self.blocks
    }

    pub fn layout(&self) -> Vec<Arc<SectorBasis>> {
        self.blocks.iter().map(|b| b.basis.clone()).collect()
    }

    pub fn species_count(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.basis.species_count())
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.basis.dim()).sum()
    }

    pub fn norm(&self) -> T {
        self.blocks
            .iter()
            .flat_map(|b| b.amplitudes.iter())
            .map(|c| c.norm_sqr())
            .sum::<T>()
            .sqrt()
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > T::zero() {
            for c in self.blocks.iter_mut().flat_map(|b| b.amplitudes.iter_mut()) {
                *c /= n;
            }
        }
        self
    }

    pub fn is_finite(&self) -> bool {
        self.blocks
            .iter()
            .flat_map(|b| b.amplitudes.iter())
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// `⟨ψ|φ⟩` on a shared layout.
    pub fn inner(&self, other: &Self) -> Result<Complex<T>, QuantumError> {
        if self.blocks.len() != other.blocks.len() {
            return Err(QuantumError::LayoutMismatch);
        }
        let mut acc = Complex::new(T::zero(), T::zero());
        for (a, b) in self.blocks.iter().zip(&other.blocks) {
            if a.basis != b.basis {
                return Err(QuantumError::LayoutMismatch);
            }
            for (x, y) in a.amplitudes.iter().zip(&b.amplitudes) {
                acc += x.conj() * y;
            }
        }
        Ok(acc)
    }

    /// Amplitude of one occupation tuple (zero when absent).
    pub fn amplitude(&self, occupations: &[u32]) -> Complex<T> {
        self.blocks
            .iter()
            .find_map(|b| b.basis.position(occupations).map(|i| b.amplitudes[i]))
            .unwrap_or_else(|| Complex::new(T::zero(), T::zero()))
    }
}

/// `c_n = e^{−|α|²/2} αⁿ/√(n!)` for `n = 0..=n_max`.
pub fn coherent_mode<T: Real>(alpha: Complex<T>, n_max: u32) -> Vec<Complex<T>> {
    let mean = alpha.norm_sqr().as_f64();
    let pmf = fock::poisson_pmf(mean, n_max);
    let phase = alpha.arg();
    pmf.iter()
        .enumerate()
        .map(|(n, p)| Complex::from_polar(T::lit(p.sqrt()), phase * T::from_count(n as u64)))
        .collect()
}

/// Poisson mass beyond `cutoff` for mean `|α|²`.
fn tail_beyond(mean: f64, cutoff: u32) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let far = (mean + 60.0 * mean.sqrt() + 100.0).ceil() as u32;
    if far <= cutoff {
        return 0.0;
    }
    fock::poisson_pmf(mean, far)[cutoff as usize + 1..].iter().rev().sum()
}

/// Sector layout used for a network: sectors of the leading charge when
/// it has strictly positive weights, otherwise the product basis.
fn layout_charge(network: &ReactionNetwork) -> Option<crate::network::ChargeVector> {
    network
        .conserved_charges()
        .into_iter()
        .next()
        .filter(|c| c.weights().iter().all(|&w| w > 0))
}

/// Sector bases for the given charge values; sectors are complete (no
/// truncation inside a sector).
pub fn sector_layout(network: &ReactionNetwork, values: &[i64]) -> Result<Vec<Arc<SectorBasis>>, QuantumError> {
    let charge = layout_charge(network).ok_or_else(|| QuantumError::Invalid("network has no positive conserved charge".into()))?;
    values
        .iter()
        .map(|&v| {
            let cutoff = FockCutoff::covering(&charge, v)?;
            Ok(Arc::new(fock::sector_basis(network, &charge, v, &cutoff)?))
        })
        .collect()
}

/// Product of coherent states, truncated at `cutoff` and renormalized.
///
/// With a positive conserved charge the state is split over the sectors it
/// touches; otherwise it lives on the product basis of `cutoff`.
pub fn coherent_product_state<T: Real>(
    network: &ReactionNetwork,
    amplitudes: &[Complex<T>],
    cutoff: &FockCutoff,
    tail_mass: f64,
) -> Result<QuantumState<T>, QuantumError> {
    let species = network.species_count();
    if amplitudes.len() != species || cutoff.len() != species {
        return Err(FockError::SpeciesMismatch {
            expected: species,
            found: amplitudes.len().min(cutoff.len()),
        }
        .into());
    }
    for (s, (a, &k)) in amplitudes.iter().zip(cutoff.as_slice()).enumerate() {
        let mass = tail_beyond(a.norm_sqr().as_f64(), k);
        if mass >= tail_mass {
            return Err(QuantumError::TailMass {
                species: s,
                cutoff: k,
                mass,
                limit: tail_mass,
            });
        }
    }
    let modes: Vec<Vec<Complex<T>>> = amplitudes
        .iter()
        .zip(cutoff.as_slice())
        .map(|(&a, &k)| coherent_mode(a, k))
        .collect();
    let product = fock::product_basis(network, cutoff)?;
    let amp_of = |occ: &[u32]| -> Complex<T> {
        occ.iter()
            .zip(&modes)
            .fold(Complex::new(T::one(), T::zero()), |acc, (&n, m)| acc * m[n as usize])
    };

    let state = match layout_charge(network) {
        None => {
            let amps = product.states().iter().map(|s| amp_of(s)).collect();
            QuantumState {
                blocks: vec![StateBlock {
                    basis: Arc::new(product),
                    amplitudes: amps,
                }],
            }
        }
        Some(charge) => {
            let mut by_value: BTreeMap<i64, Vec<(Vec<u32>, Complex<T>)>> = BTreeMap::new();
            for occ in product.states() {
                let a = amp_of(occ);
                if a.norm_sqr() > T::zero() {
                    by_value.entry(charge.value(occ)).or_default().push((occ.clone(), a));
                }
            }
            let values: Vec<i64> = by_value.keys().copied().collect();
            let layout = sector_layout(network, &values)?;
            let blocks = layout
                .into_iter()
                .zip(by_value.into_values())
                .map(|(basis, terms)| {
                    let mut amps = vec![Complex::new(T::zero(), T::zero()); basis.dim()];
                    for (occ, a) in terms {
                        let i = basis.position(&occ).expect("sector holds every state of its charge value");
                        amps[i] = a;
                    }
                    StateBlock { basis, amplitudes: amps }
                })
                .collect();
            QuantumState { blocks }
        }
    };
    Ok(state.normalized())
}

/// Hamiltonian blocks on a state's layout.
pub fn hamiltonian_blocks<T: Real>(
    network: &ReactionNetwork,
    layout: &[Arc<SectorBasis>],
) -> Result<Vec<HamiltonianBlock<T>>, QuantumError> {
    layout
        .par_iter()
        .map(|b| fock::build_hamiltonian(network, b.clone()).map_err(QuantumError::from))
        .collect()
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of one block.
#[derive(Debug, Clone)]
pub struct BlockEigen<T> {
    pub basis: Arc<SectorBasis>,
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

#[derive(Debug, Clone)]
pub struct EigenSystem<T> {
    pub blocks: Vec<BlockEigen<T>>,
}

impl<T: Real> EigenSystem<T> {
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.values.len()).sum()
    }
}

/// Full spectrum of every block.
pub fn diagonalize<T: Real>(blocks: &[HamiltonianBlock<T>]) -> Result<EigenSystem<T>, QuantumError> {
    let blocks = blocks
        .par_iter()
        .map(|h| {
            let e = linalg::symmetric_eigen(&h.matrix)?;
            Ok(BlockEigen {
                basis: h.basis.clone(),
                values: e.eigenvalues,
                vectors: e.eigenvectors,
            })
        })
        .collect::<Result<Vec<_>, QuantumError>>()?;
    Ok(EigenSystem { blocks })
}

/// Evolves one initial state in the eigenbasis; holds `c_α = ⟨α|ψ(0)⟩`.
#[derive(Debug, Clone)]
pub struct Propagator<T> {
    eig: Arc<EigenSystem<T>>,
    coefficients: Vec<Vec<Complex<T>>>,
}

impl<T: Real> Propagator<T> {
    pub fn new(eig: Arc<EigenSystem<T>>, initial: &QuantumState<T>) -> Result<Self, QuantumError> {
        if eig.blocks.len() != initial.blocks.len() {
            return Err(QuantumError::LayoutMismatch);
        }
        let coefficients = eig
            .blocks
            .iter()
            .zip(&initial.blocks)
            .map(|(e, s)| {
                if !Arc::ptr_eq(&e.basis, &s.basis) && e.basis != s.basis {
                    return Err(QuantumError::LayoutMismatch);
                }
                let d = e.values.len();
                Ok((0..d)
                    .map(|a| {
                        (0..d).fold(Complex::new(T::zero(), T::zero()), |acc, i| {
                            acc + s.amplitudes[i] * e.vectors[(i, a)]
                        })
                    })
                    .collect())
            })
            .collect::<Result<Vec<Vec<_>>, _>>()?;
        Ok(Self { eig, coefficients })
    }

    pub fn eigensystem(&self) -> &EigenSystem<T> {
        &self.eig
    }

    pub fn coefficients(&self) -> &[Vec<Complex<T>>] {
        &self.coefficients
    }

    /// `|c_α|²` per block.
    pub fn populations(&self) -> Vec<Vec<T>> {
        self.coefficients
            .iter()
            .map(|b| b.iter().map(|c| c.norm_sqr()).collect())
            .collect()
    }

    /// `⟨ψ|H|ψ⟩ = Σ |c_α|² E_α`.
    pub fn energy(&self) -> T {
        self.coefficients
            .iter()
            .zip(&self.eig.blocks)
            .flat_map(|(c, b)| c.iter().zip(&b.values).map(|(c, &e)| c.norm_sqr() * e))
            .sum()
    }

    pub fn state_at(&self, tau: T) -> QuantumState<T> {
        let blocks = self
            .eig
            .blocks
            .iter()
            .zip(&self.coefficients)
            .map(|(e, c)| {
                let d = e.values.len();
                let rotated: Vec<Complex<T>> = c
                    .iter()
                    .zip(&e.values)
                    .map(|(c, &l)| c * Complex::from_polar(T::one(), -l * tau))
                    .collect();
                let amplitudes = (0..d)
                    .map(|i| {
                        let row = e.vectors.row(i);
                        row.iter()
                            .zip(&rotated)
                            .fold(Complex::new(T::zero(), T::zero()), |acc, (&v, r)| acc + r * v)
                    })
                    .collect();
                StateBlock {
                    basis: e.basis.clone(),
                    amplitudes,
                }
            })
            .collect();
        QuantumState { blocks }
    }

    /// `|⟨ψ(0)|ψ(τ)⟩|²`.
    pub fn fidelity(&self, tau: T) -> T {
        let overlap = self
            .coefficients
            .iter()
            .zip(&self.eig.blocks)
            .flat_map(|(c, b)| c.iter().zip(&b.values))
            .fold(Complex::new(T::zero(), T::zero()), |acc, (c, &l)| {
                acc + Complex::from_polar(c.norm_sqr(), -l * tau)
            });
        overlap.norm_sqr()
    }
}

/// States at each requested time.
pub fn evolve<T: Real>(
    eig: Arc<EigenSystem<T>>,
    state: &QuantumState<T>,
    times: &[T],
) -> Result<Vec<QuantumState<T>>, QuantumError> {
    let p = Propagator::new(eig, state)?;
    Ok(times.iter().map(|&t| p.state_at(t)).collect())
}

/// `Σ |c|² n_s` over the basis.
pub fn number_expectation<T: Real>(state: &QuantumState<T>, species: usize) -> T {
    state
        .blocks
        .iter()
        .flat_map(|b| {
            b.basis
                .states()
                .iter()
                .zip(&b.amplitudes)
                .map(move |(occ, c)| c.norm_sqr() * T::from_count(u64::from(occ[species])))
        })
        .sum()
}

/// Partial trace over every species except `species`; indexed by its
/// occupation `0..=max` over the layout.
pub fn reduced_density<T: Real>(state: &QuantumState<T>, species: usize) -> Result<Matrix<Complex<T>>, QuantumError> {
    if species >= state.species_count() {
        return Err(QuantumError::Species(species));
    }
    let dim = state
        .blocks
        .iter()
        .flat_map(|b| b.basis.states().iter().map(|s| s[species]))
        .max()
        .map_or(1, |m| m as usize + 1);
    let mut groups: BTreeMap<Vec<u32>, Vec<(usize, Complex<T>)>> = BTreeMap::new();
    for b in &state.blocks {
        for (occ, &c) in b.basis.states().iter().zip(&b.amplitudes) {
            if c.norm_sqr() == T::zero() {
                continue;
            }
            let mut rest = occ.clone();
            rest.remove(species);
            groups.entry(rest).or_default().push((occ[species] as usize, c));
        }
    }
    let mut rho = Matrix::zeros(dim, dim);
    for entries in groups.values() {
        for &(n, a) in entries {
            for &(m, b) in entries {
                rho[(n, m)] += a * b.conj();
            }
        }
    }
    Ok(rho)
}

/// `−Σ λ ln λ` over eigenvalues above `1e−14`.
pub fn von_neumann_entropy<T: Real>(rho: &Matrix<Complex<T>>) -> Result<T, QuantumError> {
    let values = linalg::hermitian_eigenvalues(rho)?;
    let mut s = T::zero();
    for &l in &values {
        if l < T::lit(-1e-10) {
            return Err(QuantumError::NegativeEigenvalue(l.as_f64()));
        }
        if l > T::lit(1e-14) {
            s -= l * l.ln();
        }
    }
    Ok(s)
}

/// Entanglement entropy between `species` and the rest. For two species
/// the smaller reduced density matrix is diagonalized (equal spectra).
pub fn entanglement_entropy<T: Real>(state: &QuantumState<T>, species: usize) -> Result<T, QuantumError> {
    let target = if state.species_count() == 2 {
        let support = |s: usize| {
            state
                .blocks
                .iter()
                .flat_map(|b| b.basis.states().iter().map(move |o| o[s]))
                .max()
                .unwrap_or(0)
        };
        if support(1 - species) < support(species) {
            1 - species
        } else {
            species
        }
    } else {
        species
    };
    von_neumann_entropy(&reduced_density(state, target)?)
}

/// Times and values of a scalar observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries<T> {
    pub times: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Real> ObservableSeries<T> {
    pub fn new(times: Vec<T>, values: Vec<T>) -> Result<Self, QuantumError> {
        if times.len() != values.len() {
            return Err(QuantumError::GridMismatch);
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(QuantumError::Invalid("times must increase strictly".into()));
        }
        Ok(Self { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Two-photon Raman coupling `k = k1 k2 / (2Δ)`.
pub fn raman_rate<T: Real>(k1: T, k2: T, detuning: T) -> Result<T, QuantumError> {
    if detuning == T::zero() {
        return Err(QuantumError::ZeroDetuning);
    }
    Ok(k1 * k2 / (detuning + detuning))
}
