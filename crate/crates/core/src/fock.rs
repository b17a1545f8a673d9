//! Truncated bosonic Fock spaces and dense Hamiltonian blocks.
//!
//! A [`SectorBasis`] is either the full tensor-product occupation basis up
//! to a [`FockCutoff`] or the set of occupation tuples with a fixed value of
//! a conserved charge. [`build_hamiltonian`] assembles
//! `Σ_s E_s n̂_s + Σ_m (M_m + M_mᵀ)` on it, dropping any ladder action that
//! leaves the basis (projector truncation).

use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::Matrix;
use crate::network::{interaction_terms, ChargeVector, ReactionNetwork};
use crate::scalar::Real;

/// Default cap on the product-basis dimension.
pub const DEFAULT_DIMENSION_CAP: usize = 2_000_000;

/// Default Poisson tail mass tolerated beyond a coherent-state cutoff.
pub const DEFAULT_TAIL_MASS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("species {species} needs occupation {required} but the cutoff is {cutoff}; enlarge the cutoff")]
    SectorClipped { species: usize, required: u32, cutoff: u32 },
    #[error("charge weight of species {species} is not positive, the sector is unbounded")]
    UnboundedSector { species: usize },
    #[error("negative charge value {0}")]
    NegativeCharge(i64),
    #[error("product basis dimension {dimension} exceeds the cap {cap}")]
    DimensionCap { dimension: u128, cap: usize },
    #[error("expected {expected} species, found {found}")]
    SpeciesMismatch { expected: usize, found: usize },
}

/// Per-species maximum occupation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FockCutoff(Vec<u32>);

impl FockCutoff {
    pub fn new(max_occupation: Vec<u32>) -> Self {
        Self(max_occupation)
    }

    pub fn uniform(species: usize, max_occupation: u32) -> Self {
        Self(vec![max_occupation; species])
    }

    /// Largest occupations admissible in the sector `Σ w_s n_s = value`
    /// (positive weights), so that [`sector_basis`] never clips.
    pub fn covering(charge: &ChargeVector, value: i64) -> Result<Self, FockError> {
        if value < 0 {
            return Err(FockError::NegativeCharge(value));
        }
        charge
            .weights()
            .iter()
            .enumerate()
            .map(|(s, &w)| {
                if w <= 0 {
                    Err(FockError::UnboundedSector { species: s })
                } else {
                    Ok(u32::try_from(value / w).unwrap_or(u32::MAX))
                }
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }

    /// Per-mode cutoffs for a coherent product state with the given mean
    /// occupations `|α_s|²`.
    pub fn for_coherent(mean_occupations: &[f64], tail_mass: f64) -> Self {
        Self(mean_occupations.iter().map(|&m| poisson_cutoff(m, tail_mass)).collect())
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Poisson probabilities `P(n)` for `n = 0..=n_max`, computed in log space.
pub fn poisson_pmf(mean: f64, n_max: u32) -> Vec<f64> {
    if mean == 0.0 {
        let mut p = vec![0.0; n_max as usize + 1];
        p[0] = 1.0;
        return p;
    }
    let ln_mean = mean.ln();
    let mut ln_fact = 0.0;
    (0..=n_max)
        .map(|n| {
            if n > 0 {
                ln_fact += f64::from(n).ln();
            }
            (-mean + f64::from(n) * ln_mean - ln_fact).exp()
        })
        .collect()
}

/// Smallest cutoff `K` with `P(n > K) < tail_mass` for a Poisson law.
pub fn poisson_cutoff(mean: f64, tail_mass: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let hi = (mean + 40.0 * mean.sqrt() + 60.0).ceil() as u32;
    let pmf = poisson_pmf(mean, hi);
    // P(n > k), summed from the far end for accuracy
    let mut tail = 0.0;
    for k in (0..hi).rev() {
        tail += pmf[k as usize + 1];
        if tail >= tail_mass {
            return k + 1;
        }
    }
    0
}

#[derive(Debug, Clone)]
enum Lookup {
    Hashed(HashMap<Vec<u32>, usize>),
    /// Mixed-radix index of the product basis.
    Strides(Vec<usize>),
}

/// Ordered occupation-number basis of one charge sector or of the full
/// truncated product space.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    charge: Option<ChargeVector>,
    charge_value: i64,
    cutoff: FockCutoff,
    states: Vec<Vec<u32>>,
    lookup: Lookup,
}

impl PartialEq for SectorBasis {
    fn eq(&self, other: &Self) -> bool {
        self.charge == other.charge
            && self.charge_value == other.charge_value
            && self.cutoff == other.cutoff
            && self.states == other.states
    }
}

impl SectorBasis {
    pub fn charge(&self) -> Option<&ChargeVector> {
        self.charge.as_ref()
    }

    pub fn charge_value(&self) -> i64 {
        self.charge_value
    }

    pub fn cutoff(&self) -> &FockCutoff {
        &self.cutoff
    }

    pub fn states(&self) -> &[Vec<u32>] {
        &self.states
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn species_count(&self) -> usize {
        self.cutoff.len()
    }

    pub fn is_product(&self) -> bool {
        self.charge.is_none()
    }

    /// Index of an occupation tuple, `None` when outside the basis.
    pub fn position(&self, occupations: &[u32]) -> Option<usize> {
        match &self.lookup {
            Lookup::Hashed(map) => map.get(occupations).copied(),
            Lookup::Strides(strides) => {
                let mut idx = 0;
                for ((&n, &k), &stride) in occupations.iter().zip(self.cutoff.as_slice()).zip(strides) {
                    if n > k {
                        return None;
                    }
                    idx += n as usize * stride;
                }
                Some(idx)
            }
        }
    }

    /// Occupation of one species in every basis state.
    pub fn occupations_of(&self, species: usize) -> Vec<u32> {
        self.states.iter().map(|s| s[species]).collect()
    }
}

/// Occupation tuples with `Σ w_s n_s = value`, descending lexicographically
/// (largest first-species occupation first).
pub fn sector_basis(
    network: &ReactionNetwork,
    charge: &ChargeVector,
    value: i64,
    cutoff: &FockCutoff,
) -> Result<SectorBasis, FockError> {
    let species = network.species_count();
    if cutoff.len() != species {
        return Err(FockError::SpeciesMismatch { expected: species, found: cutoff.len() });
    }
    if charge.weights().len() != species {
        return Err(FockError::SpeciesMismatch { expected: species, found: charge.weights().len() });
    }
    // The covering cutoff doubles as the positivity check.
    FockCutoff::covering(charge, value)?;

    let weights = charge.weights();
    let mut states = Vec::new();
    let mut current = vec![0u32; species];
    enumerate_sector(weights, value, 0, &mut current, &mut states);

    for state in &states {
        for (s, (&n, &k)) in state.iter().zip(cutoff.as_slice()).enumerate() {
            if n > k {
                return Err(FockError::SectorClipped { species: s, required: n, cutoff: k });
            }
        }
    }
    let lookup = Lookup::Hashed(states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect());
    Ok(SectorBasis {
        charge: Some(charge.clone()),
        charge_value: value,
        cutoff: cutoff.clone(),
        states,
        lookup,
    })
}

fn enumerate_sector(weights: &[i64], remaining: i64, s: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    let w = weights[s];
    if s + 1 == weights.len() {
        if remaining % w == 0 {
            current[s] = (remaining / w) as u32;
            out.push(current.clone());
        }
        return;
    }
    for n in (0..=remaining / w).rev() {
        current[s] = n as u32;
        enumerate_sector(weights, remaining - n * w, s + 1, current, out);
    }
}

/// Full tensor-product basis, ascending lexicographic (last species fastest).
pub fn product_basis(network: &ReactionNetwork, cutoff: &FockCutoff) -> Result<SectorBasis, FockError> {
    product_basis_capped(network, cutoff, DEFAULT_DIMENSION_CAP)
}

pub fn product_basis_capped(
    network: &ReactionNetwork,
    cutoff: &FockCutoff,
    cap: usize,
) -> Result<SectorBasis, FockError> {
    let species = network.species_count();
    if cutoff.len() != species {
        return Err(FockError::SpeciesMismatch { expected: species, found: cutoff.len() });
    }
    let dimension: u128 = cutoff.as_slice().iter().map(|&k| u128::from(k) + 1).product();
    if dimension > cap as u128 {
        return Err(FockError::DimensionCap { dimension, cap });
    }
    let dim = dimension as usize;
    let mut strides = vec![1usize; species];
    for s in (0..species.saturating_sub(1)).rev() {
        strides[s] = strides[s + 1] * (cutoff.as_slice()[s + 1] as usize + 1);
    }
    let states = (0..dim)
        .map(|idx| {
            strides
                .iter()
                .zip(cutoff.as_slice())
                .map(|(&stride, &k)| ((idx / stride) % (k as usize + 1)) as u32)
                .collect()
        })
        .collect();
    Ok(SectorBasis {
        charge: None,
        charge_value: 0,
        cutoff: cutoff.clone(),
        states,
        lookup: Lookup::Strides(strides),
    })
}

/// Dense real symmetric Hamiltonian on one basis.
#[derive(Debug, Clone)]
pub struct HamiltonianBlock<T> {
    pub basis: Arc<SectorBasis>,
    pub matrix: Matrix<T>,
}

impl<T: Real> HamiltonianBlock<T> {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Debug dump of the nonzero entries as `row,col,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "row,col,value")?;
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                let v = self.matrix[(i, j)];
                if v != T::zero() {
                    writeln!(out, "{},{},{:e}", i, j, v.as_f64())?;
                }
            }
        }
        Ok(())
    }
}

/// `√(n (n−1) ⋯ (n−p+1))`, the amplitude of `a^p |n⟩`.
fn falling_root<T: Real>(n: u32, p: u32) -> T {
    let mut acc = T::one();
    for i in 0..p {
        acc *= T::from_count(u64::from(n - i));
    }
    acc.sqrt()
}

pub fn build_hamiltonian<T: Real>(network: &ReactionNetwork, basis: Arc<SectorBasis>) -> Result<HamiltonianBlock<T>, FockError> {
    let species = network.species_count();
    if basis.species_count() != species {
        return Err(FockError::SpeciesMismatch { expected: species, found: basis.species_count() });
    }
    let dim = basis.dim();
    let energies: Vec<T> = network.ground_energies().into_iter().map(T::lit).collect();
    let mut h = Matrix::<T>::zeros(dim, dim);
    for (i, state) in basis.states().iter().enumerate() {
        h[(i, i)] = state
            .iter()
            .zip(&energies)
            .map(|(&n, &e)| e * T::from_count(u64::from(n)))
            .sum();
    }
    let mut target = vec![0u32; species];
    for mono in interaction_terms(network) {
        let rate = T::lit(mono.rate);
        if rate == T::zero() {
            continue;
        }
        'states: for (j, state) in basis.states().iter().enumerate() {
            let mut amp = rate;
            for (s, (&n, &(create, annihilate))) in state.iter().zip(&mono.factors).enumerate() {
                if n < annihilate {
                    continue 'states;
                }
                let lowered = n - annihilate;
                target[s] = lowered + create;
                amp *= falling_root::<T>(n, annihilate) * falling_root::<T>(lowered + create, create);
            }
            if let Some(i) = basis.position(&target) {
                h[(i, j)] += amp;
                h[(j, i)] += amp;
            }
        }
    }
    Ok(HamiltonianBlock { basis, matrix: h })
}

/// Diagonal matrix of the occupations of one species.
pub fn number_matrix<T: Real>(basis: &SectorBasis, species: usize) -> Matrix<T> {
    let diag: Vec<T> = basis
        .occupations_of(species)
        .into_iter()
        .map(|n| T::from_count(u64::from(n)))
        .collect();
    Matrix::from_diagonal(&diag)
}

/// Truncated annihilation operator of one species on a basis.
pub fn annihilation_matrix<T: Real>(basis: &SectorBasis, species: usize) -> Matrix<T> {
    let dim = basis.dim();
    let mut a = Matrix::zeros(dim, dim);
    let mut target = vec![0u32; basis.species_count()];
    for (j, state) in basis.states().iter().enumerate() {
        if state[species] == 0 {
            continue;
        }
        target.copy_from_slice(state);
        target[species] -= 1;
        if let Some(i) = basis.position(&target) {
            a[(i, j)] = T::from_count(u64::from(state[species])).sqrt();
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::parse_network;

    fn diatomic() -> ReactionNetwork {
        parse_network("A + A <k=1> A2").unwrap()
    }

    fn charge() -> ChargeVector {
        ChargeVector::new(vec![1, 2]).unwrap()
    }

    fn sector(value: i64) -> SectorBasis {
        let c = charge();
        sector_basis(&diatomic(), &c, value, &FockCutoff::covering(&c, value).unwrap()).unwrap()
    }

    #[test]
    fn diatomic_sectors_enumerated_by_hand() {
        assert_eq!(sector(4).states(), &[vec![4, 0], vec![2, 1], vec![0, 2]]);
        assert_eq!(sector(0).states(), &[vec![0, 0]]);
        assert_eq!(sector(5).states(), &[vec![5, 0], vec![3, 1], vec![1, 2]]);
        for v in 0..30 {
            let b = sector(v);
            assert_eq!(b.dim() as i64, v / 2 + 1);
            assert!(b.states().iter().all(|s| charge().value(s) == v));
        }
    }

    #[test]
    fn clipped_sector_is_reported() {
        let err = sector_basis(&diatomic(), &charge(), 4, &FockCutoff::new(vec![3, 2])).unwrap_err();
        assert_eq!(err, FockError::SectorClipped { species: 0, required: 4, cutoff: 3 });
        let neg = ChargeVector::new(vec![1, -1]).unwrap();
        assert!(matches!(
            sector_basis(&diatomic(), &neg, 1, &FockCutoff::new(vec![5, 5])),
            Err(FockError::UnboundedSector { species: 1 })
        ));
        assert!(matches!(
            sector_basis(&diatomic(), &charge(), -1, &FockCutoff::new(vec![5, 5])),
            Err(FockError::NegativeCharge(-1))
        ));
    }

    #[test]
    fn product_basis_dimensions_and_cap() {
        let one = parse_network("0 <k=1> A").unwrap();
        let b = product_basis(&one, &FockCutoff::new(vec![3])).unwrap();
        assert_eq!(b.states(), &[vec![0], vec![1], vec![2], vec![3]]);
        let two = parse_network("A <k=1> B").unwrap();
        assert_eq!(product_basis(&two, &FockCutoff::new(vec![1, 1])).unwrap().dim(), 4);
        assert!(matches!(
            product_basis(&two, &FockCutoff::new(vec![1999, 1999])),
            Err(FockError::DimensionCap { dimension: 4_000_000, .. })
        ));
        let b = product_basis(&two, &FockCutoff::new(vec![2, 3])).unwrap();
        for (i, s) in b.states().iter().enumerate() {
            assert_eq!(b.position(s), Some(i));
        }
        assert_eq!(b.position(&[3, 0]), None);
    }

    #[test]
    fn sector_two_block_is_hand_computed() {
        let h: HamiltonianBlock<f64> = build_hamiltonian(&diatomic(), Arc::new(sector(2))).unwrap();
        assert_eq!(h.basis.states(), &[vec![2, 0], vec![0, 1]]);
        let s = 2f64.sqrt();
        let expect = Matrix::from_fn(2, 2, |i, j| if i == j { 0.0 } else { s });
        assert!(h.matrix.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn zero_rate_gives_free_hamiltonian() {
        let net = parse_network("A + A <k=0> A2\nenergy A = 0.5\nenergy A2 = 1.25").unwrap();
        let h: HamiltonianBlock<f64> = build_hamiltonian(&net, Arc::new(sector(6))).unwrap();
        let expect: Vec<f64> = h.basis.states().iter().map(|s| 0.5 * s[0] as f64 + 1.25 * s[1] as f64).collect();
        assert_eq!(h.matrix, Matrix::from_diagonal(&expect));
    }

    #[test]
    fn bath_coupling_is_tridiagonal_with_root_ladder() {
        let net = parse_network("0 <k=1> A").unwrap();
        let b = product_basis(&net, &FockCutoff::new(vec![3])).unwrap();
        let h: HamiltonianBlock<f64> = build_hamiltonian(&net, Arc::new(b)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i + 1 == j || j + 1 == i { (i.max(j) as f64).sqrt() } else { 0.0 };
                assert!((h.matrix[(i, j)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn hamiltonian_is_exactly_symmetric() {
        let net = parse_network("A + A <k=0.7> A2\n0 <k=0.3> A\nA2 <k=1.1> B + C").unwrap();
        let b = product_basis(&net, &FockCutoff::new(vec![4, 3, 2, 2])).unwrap();
        let h: HamiltonianBlock<f64> = build_hamiltonian(&net, Arc::new(b)).unwrap();
        assert_eq!(h.matrix.max_abs_diff(&h.matrix.transpose()), 0.0);
    }

    #[test]
    fn charge_commutes_on_product_space() {
        let net = diatomic();
        let b = Arc::new(product_basis(&net, &FockCutoff::new(vec![12, 6])).unwrap());
        let h: HamiltonianBlock<f64> = build_hamiltonian(&net, b.clone()).unwrap();
        let na = number_matrix::<f64>(&b, 0);
        let nm = number_matrix::<f64>(&b, 1);
        let q = Matrix::from_fn(b.dim(), b.dim(), |i, j| na[(i, j)] + 2.0 * nm[(i, j)]);
        assert!(h.matrix.commutator(&q).max_abs() < 1e-12);
    }

    #[test]
    fn truncated_ccr_holds_below_the_cutoff() {
        let net = parse_network("A <k=1> B").unwrap();
        let b = product_basis(&net, &FockCutoff::new(vec![5, 3])).unwrap();
        for s in 0..2 {
            let a = annihilation_matrix::<f64>(&b, s);
            let ad = a.transpose();
            let comm = a.commutator(&ad);
            for (i, state) in b.states().iter().enumerate() {
                if state[s] < b.cutoff().as_slice()[s] {
                    for j in 0..b.dim() {
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!((comm[(i, j)] - expect).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn product_hamiltonian_permutes_to_sector_blocks() {
        let net = parse_network("A + A <k=0.8> A2\nenergy A = 0.3\nenergy A2 = -0.1").unwrap();
        let kmax = 9u32;
        let pb = Arc::new(product_basis(&net, &FockCutoff::new(vec![kmax, kmax / 2])).unwrap());
        let full: HamiltonianBlock<f64> = build_hamiltonian(&net, pb.clone()).unwrap();
        for v in 0..=i64::from(kmax) {
            let sb = sector(v);
            let block: HamiltonianBlock<f64> = build_hamiltonian(&net, Arc::new(sb.clone())).unwrap();
            let idx: Vec<usize> = sb.states().iter().map(|s| pb.position(s).unwrap()).collect();
            for (a, &ia) in idx.iter().enumerate() {
                for (b, &ib) in idx.iter().enumerate() {
                    assert_eq!(block.matrix[(a, b)], full.matrix[(ia, ib)]);
                }
            }
        }
    }

    #[test]
    fn number_matrix_examples() {
        let b = sector(2);
        assert_eq!(number_matrix::<f64>(&b, 0), Matrix::from_diagonal(&[2.0, 0.0]));
        assert_eq!(number_matrix::<f64>(&b, 1), Matrix::from_diagonal(&[0.0, 1.0]));
        let b = sector(11);
        let total: u32 = b.occupations_of(0).iter().sum();
        assert_eq!(number_matrix::<f64>(&b, 0).trace(), f64::from(total));
    }

    #[test]
    fn poisson_cutoff_bounds_the_tail() {
        for mean in [0.5, 4.0, 9.0, 100.0, 400.0] {
            let k = poisson_cutoff(mean, 1e-12) as usize;
            let far = poisson_pmf(mean, (mean + 60.0 * mean.sqrt() + 100.0) as u32);
            let tail = |from: usize| -> f64 { far[from..].iter().rev().sum() };
            assert!(tail(k + 1) < 1e-12, "mean {mean}: tail {}", tail(k + 1));
            assert!(tail(k) >= 1e-12, "mean {mean}: cutoff not minimal");
        }
        assert_eq!(poisson_cutoff(0.0, 1e-12), 0);
        assert!(poisson_cutoff(4.0, 1e-12) <= 32);
    }

    #[test]
    fn csv_dump() {
        let h: HamiltonianBlock<f64> = build_hamiltonian(&diatomic(), Arc::new(sector(2))).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("row,col,value\n0,1,"));
    }
}
