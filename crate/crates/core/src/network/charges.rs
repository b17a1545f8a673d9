//! Integer particle-number charges conserved by every reaction of a network.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::ReactionNetwork;

/// Weights `w_s` of a conserved charge `Q = Σ_s w_s n̂_s`.
///
/// Canonical form: primitive (gcd 1) with the first nonzero weight positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChargeVector {
    weights: Vec<i64>,
}

impl ChargeVector {
    /// Canonicalizes the weights; `None` for the zero vector.
    pub fn new(weights: Vec<i64>) -> Option<Self> {
        let g = weights.iter().fold(0i64, |g, &w| g.gcd(&w));
        if g == 0 {
            return None;
        }
        let sign = weights.iter().find(|&&w| w != 0).map_or(1, |w| w.signum());
        Some(Self {
            weights: weights.iter().map(|w| sign * w / g).collect(),
        })
    }

    pub fn weights(&self) -> &[i64] {
        &self.weights
    }

    /// `Σ w_s n_s` for one occupation tuple.
    pub fn value(&self, occupations: &[u32]) -> i64 {
        self.weights
            .iter()
            .zip(occupations)
            .map(|(w, &n)| w * i64::from(n))
            .sum()
    }

    /// Exact integer check that every reaction leaves the charge unchanged.
    pub fn is_conserved_by(&self, network: &ReactionNetwork) -> bool {
        network.reactions().iter().all(|r| {
            let delta = r.net_change(network.species_count());
            self.weights.iter().zip(&delta).map(|(w, d)| w * d).sum::<i64>() == 0
        })
    }
}

type Row = Vec<BigRational>;

/// Reduced row echelon form in place; returns the pivot columns.
fn rref(rows: &mut [Row], cols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows.len() {
            break;
        }
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let inv = rows[r][c].recip();
        for v in rows[r].iter_mut() {
            *v = &*v * &inv;
        }
        for i in 0..rows.len() {
            if i != r && !rows[i][c].is_zero() {
                let f = rows[i][c].clone();
                for j in 0..cols {
                    let delta = &f * &rows[r][j];
                    rows[i][j] = &rows[i][j] - delta;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

fn rank(vectors: &[Row], cols: usize) -> usize {
    let mut rows = vectors.to_vec();
    rref(&mut rows, cols).len()
}

/// Clears denominators and divides out the content.
fn to_primitive(v: &[BigRational]) -> Option<ChargeVector> {
    let lcm = v.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    let ints: Vec<BigInt> = v.iter().map(|x| (x * &lcm).to_integer()).collect();
    let g = ints.iter().fold(BigInt::zero(), |g, x| g.gcd(x));
    if g.is_zero() {
        return None;
    }
    let weights = ints
        .iter()
        .map(|x| (x / &g).to_i64())
        .collect::<Option<Vec<i64>>>()?;
    ChargeVector::new(weights)
}

/// Basis of the integer nullspace of the reaction balance constraints
/// `Σ_s w_s (ν_s − μ_s) = 0`, computed with exact rational elimination.
///
/// When the plain particle count `(1, …, 1)` is conserved it is returned
/// first and the rest of the basis is completed around it.
pub fn conserved_charges(network: &ReactionNetwork) -> Vec<ChargeVector> {
    let n = network.species_count();
    let mut rows: Vec<Row> = network
        .reactions()
        .iter()
        .map(|r| {
            r.net_change(n)
                .into_iter()
                .map(|d| BigRational::from_integer(BigInt::from(d)))
                .collect()
        })
        .collect();
    let pivots = rref(&mut rows, n);
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();

    let mut basis: Vec<Row> = free
        .iter()
        .map(|&f| {
            let mut v = vec![BigRational::zero(); n];
            v[f] = BigRational::one();
            for (row, &p) in rows.iter().zip(&pivots) {
                v[p] = -row[f].clone();
            }
            v
        })
        .collect();

    let ones: Row = vec![BigRational::one(); n];
    let ones_conserved = network
        .reactions()
        .iter()
        .all(|r| r.net_change(n).iter().sum::<i64>() == 0);
    if ones_conserved && !basis.is_empty() {
        let mut chosen = vec![ones];
        for v in basis {
            chosen.push(v);
            if rank(&chosen, n) < chosen.len() {
                chosen.pop();
            }
        }
        basis = chosen;
    }

    basis.iter().filter_map(|v| to_primitive(v)).collect()
}
