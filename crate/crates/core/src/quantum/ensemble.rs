//! Infinite-time predictions and finite-window statistics.

use serde::{Deserialize, Serialize};

use super::{ObservableSeries, Propagator, QuantumError};
use crate::scalar::Real;

pub const DEFAULT_HALFWIDTH_FRACTION: f64 = 0.05;
/// Eigenstates with `|c_α|²` at or below this are treated as unpopulated.
pub const DEFAULT_MIN_POPULATION: f64 = 1e-12;
pub const DEFAULT_BREAKDOWN_THRESHOLD: f64 = 0.05;
pub const DEFAULT_REVIVAL_FIDELITY: f64 = 0.5;
/// Relative eigenvalue gap below which a sector counts as degenerate.
const DEGENERACY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport<T> {
    pub mean_diag: T,
    pub fluct_sq: T,
    pub mean_micro: T,
    /// `(E_center, E_halfwidth)`.
    pub window: (T, T),
}

/// Energy window of the microcanonical average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicrocanonicalWindow<T> {
    /// Defaults to `⟨ψ|H|ψ⟩`.
    pub center: Option<T>,
    /// Defaults to [`DEFAULT_HALFWIDTH_FRACTION`] of the populated spectral range.
    pub halfwidth: Option<T>,
    pub min_population: T,
}

impl<T: Real> Default for MicrocanonicalWindow<T> {
    fn default() -> Self {
        Self {
            center: None,
            halfwidth: None,
            min_population: T::lit(DEFAULT_MIN_POPULATION),
        }
    }
}

/// `N_αβ = Σ_i V_iα n_i V_iβ` for one block and one species.
fn number_in_eigenbasis<T: Real>(p: &Propagator<T>, block: usize, species: usize) -> Vec<T> {
    let b = &p.eigensystem().blocks[block];
    let d = b.values.len();
    let n: Vec<T> = b.basis.states().iter().map(|s| T::from_count(u64::from(s[species]))).collect();
    let v = &b.vectors;
    let mut out = vec![T::zero(); d * d];
    let mut scaled = vec![T::zero(); d];
    for a in 0..d {
        for i in 0..d {
            scaled[i] = v[(i, a)] * n[i];
        }
        for bb in a..d {
            let x: T = (0..d).map(|i| scaled[i] * v[(i, bb)]).sum();
            out[a * d + bb] = x;
            out[bb * d + a] = x;
        }
    }
    out
}

fn check_species<T: Real>(p: &Propagator<T>, species: usize) -> Result<(), QuantumError> {
    match p.eigensystem().blocks.first() {
        Some(b) if species < b.basis.species_count() => Ok(()),
        _ => Err(QuantumError::Species(species)),
    }
}

/// `N̄ = Σ_α |c_α|² N_αα` and `ΔN² = Σ_{α≠β} |c_α|²|c_β|² |N_αβ|²`.
///
/// Off-diagonal terms only couple states of one sector, so sectors that
/// hold a near-degenerate populated pair are rejected.
pub fn diagonal_ensemble<T: Real>(p: &Propagator<T>, species: usize) -> Result<(T, T), QuantumError> {
    check_species(p, species)?;
    let pops = p.populations();
    let min_pop = T::lit(DEFAULT_MIN_POPULATION);
    let mut mean = T::zero();
    let mut fluct = T::zero();
    for (bi, (b, w)) in p.eigensystem().blocks.iter().zip(&pops).enumerate() {
        let d = b.values.len();
        let populated: Vec<usize> = (0..d).filter(|&a| w[a] > min_pop).collect();
        if populated.is_empty() {
            continue;
        }
        if d > 1 {
            let range = b.values[d - 1] - b.values[0];
            let tol = T::lit(DEGENERACY_TOLERANCE) * range.max(T::min_positive_value());
            for pair in populated.windows(2) {
                let (a, c) = (pair[0], pair[1]);
                // ascending values: the closest populated neighbour decides
                let gap = b.values[c] - b.values[a];
                if gap < tol {
                    return Err(QuantumError::Degenerate { block: bi, gap: gap.as_f64() });
                }
            }
        }
        let n = number_in_eigenbasis(p, bi, species);
        for a in 0..d {
            mean += w[a] * n[a * d + a];
            for c in 0..d {
                if c != a {
                    let x = n[a * d + c];
                    fluct += w[a] * w[c] * x * x;
                }
            }
        }
    }
    Ok((mean, fluct))
}

/// Unweighted mean of `N_αα` over populated eigenstates with
/// `|E_α − center| ≤ halfwidth`; returns the average and the window used.
pub fn microcanonical_average<T: Real>(
    p: &Propagator<T>,
    species: usize,
    window: &MicrocanonicalWindow<T>,
) -> Result<(T, (T, T)), QuantumError> {
    check_species(p, species)?;
    let pops = p.populations();
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for (b, w) in p.eigensystem().blocks.iter().zip(&pops) {
        for (&e, &pw) in b.values.iter().zip(w) {
            if pw > window.min_population {
                lo = lo.min(e);
                hi = hi.max(e);
            }
        }
    }
    if lo > hi {
        return Err(QuantumError::EmptyWindow);
    }
    let center = window.center.unwrap_or_else(|| p.energy());
    let halfwidth = window.halfwidth.unwrap_or(T::lit(DEFAULT_HALFWIDTH_FRACTION) * (hi - lo));
    let mut sum = T::zero();
    let mut count = 0u64;
    for (bi, (b, w)) in p.eigensystem().blocks.iter().zip(&pops).enumerate() {
        let d = b.values.len();
        let inside: Vec<usize> = (0..d)
            .filter(|&a| w[a] > window.min_population && (b.values[a] - center).abs() <= halfwidth)
            .collect();
        if inside.is_empty() {
            continue;
        }
        let n: Vec<T> = b.basis.states().iter().map(|s| T::from_count(u64::from(s[species]))).collect();
        let v = &p.eigensystem().blocks[bi].vectors;
        for a in inside {
            sum += (0..d).map(|i| v[(i, a)] * v[(i, a)] * n[i]).sum::<T>();
            count += 1;
        }
    }
    if count == 0 {
        return Err(QuantumError::EmptyWindow);
    }
    Ok((sum / T::from_count(count), (center, halfwidth)))
}

/// Diagonal-ensemble and microcanonical predictions for one species.
pub fn ensemble_report<T: Real>(
    p: &Propagator<T>,
    species: usize,
    window: &MicrocanonicalWindow<T>,
) -> Result<EnsembleReport<T>, QuantumError> {
    let (mean_diag, fluct_sq) = diagonal_ensemble(p, species)?;
    let (mean_micro, window) = microcanonical_average(p, species, window)?;
    Ok(EnsembleReport {
        mean_diag,
        fluct_sq,
        mean_micro,
        window,
    })
}

/// Trapezoidal mean and variance about it over the samples in `[τ1, τ2]`.
pub fn time_average<T: Real>(series: &ObservableSeries<T>, start: T, end: T) -> Result<(T, T), QuantumError> {
    let err = || QuantumError::Window {
        start: start.as_f64(),
        end: end.as_f64(),
    };
    let (Some(&first), Some(&last)) = (series.times.first(), series.times.last()) else {
        return Err(err());
    };
    let slack = T::lit(1e-9) * (last - first).abs().max(T::one());
    if !(end > start) || start < first - slack || end > last + slack {
        return Err(err());
    }
    let idx: Vec<usize> = (0..series.len())
        .filter(|&i| series.times[i] >= start - slack && series.times[i] <= end + slack)
        .collect();
    if idx.len() < 2 {
        return Err(err());
    }
    let integrate = |f: &dyn Fn(T) -> T| -> T {
        idx.windows(2)
            .map(|w| {
                let (i, j) = (w[0], w[1]);
                let dt = series.times[j] - series.times[i];
                dt * (f(series.values[i]) + f(series.values[j])) * T::lit(0.5)
            })
            .sum()
    };
    let span = series.times[*idx.last().expect("non-empty")] - series.times[idx[0]];
    let mean = integrate(&|x| x) / span;
    let var = integrate(&|x| (x - mean) * (x - mean)) / span;
    Ok((mean, var))
}

/// First time `|q − m| / max(|q(0)|, 1)` exceeds `threshold`.
pub fn breakdown_time<T: Real>(
    quantum: &ObservableSeries<T>,
    meanfield: &ObservableSeries<T>,
    threshold: T,
) -> Result<Option<T>, QuantumError> {
    if quantum.times != meanfield.times {
        return Err(QuantumError::GridMismatch);
    }
    let Some(&q0) = quantum.values.first() else {
        return Ok(None);
    };
    let scale = q0.abs().max(T::one());
    Ok(quantum
        .values
        .iter()
        .zip(&meanfield.values)
        .zip(&quantum.times)
        .find(|((q, m), _)| (**q - **m).abs() / scale > threshold)
        .map(|(_, &t)| t))
}

/// First sample time at which the fidelity to the initial state climbs back
/// above `threshold` after having dropped below it.
pub fn first_revival<T: Real>(p: &Propagator<T>, times: &[T], threshold: T) -> Option<T> {
    let mut left = false;
    for &t in times {
        let f = p.fidelity(t);
        if !left {
            left = f < threshold;
        } else if f > threshold {
            return Some(t);
        }
    }
    None
}
