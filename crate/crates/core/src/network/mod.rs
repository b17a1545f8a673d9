//! Reaction networks: species, reversible reactions, their ladder-operator
//! interaction terms and the particle-number charges they conserve.

mod charges;
mod dsl;

use std::fmt;

use thiserror::Error;

pub use charges::{conserved_charges, ChargeVector};
pub use dsl::parse_network;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate rate specification at {line}:{column}: {message}")]
    DuplicateRate {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("non-positive stoichiometric coefficient at {line}:{column}")]
    NonPositiveCoefficient { line: usize, column: usize },
    #[error("unknown token at {line}:{column}: {token:?}")]
    UnknownToken {
        line: usize,
        column: usize,
        token: String,
    },
    #[error("species {name:?} appears on both sides of a reaction (line {line})")]
    SpeciesOnBothSides { name: String, line: usize },
    #[error("invalid network: {0}")]
    Invalid(String),
}

/// A chemical species with its single-mode ground-state energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    pub name: String,
    pub ground_energy: f64,
}

/// One species with its stoichiometric coefficient on one side of a reaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Term {
    pub species: usize,
    pub coefficient: u32,
}

/// Reversible reaction `Σ μ_i A_i ⇌ Σ ν_j B_j` with a single rate.
///
/// An empty side stands for the bath.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub reactants: Vec<Term>,
    pub products: Vec<Term>,
    pub rate: f64,
    /// Optional subscript of the rate symbol (`k_2`), kept for printing.
    pub rate_label: Option<u32>,
}

impl Reaction {
    /// Net change `ν − μ` of every species when the reaction runs forward.
    pub fn net_change(&self, species_count: usize) -> Vec<i64> {
        let mut delta = vec![0i64; species_count];
        for t in &self.reactants {
            delta[t.species] -= i64::from(t.coefficient);
        }
        for t in &self.products {
            delta[t.species] += i64::from(t.coefficient);
        }
        delta
    }

    pub fn order(&self) -> u32 {
        let m: u32 = self.reactants.iter().map(|t| t.coefficient).sum();
        let n: u32 = self.products.iter().map(|t| t.coefficient).sum();
        m.max(n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    species: Vec<Species>,
    reactions: Vec<Reaction>,
}

impl ReactionNetwork {
    /// Builds a network, checking indices, coefficients and rates.
    pub fn new(species: Vec<Species>, reactions: Vec<Reaction>) -> Result<Self, NetworkError> {
        if reactions.is_empty() {
            return Err(NetworkError::Invalid("a network needs at least one reaction".into()));
        }
        for (i, s) in species.iter().enumerate() {
            if !s.ground_energy.is_finite() {
                return Err(NetworkError::Invalid(format!(
                    "ground energy of {:?} is not finite",
                    s.name
                )));
            }
            if species[..i].iter().any(|o| o.name == s.name) {
                return Err(NetworkError::Invalid(format!("duplicate species {:?}", s.name)));
            }
        }
        for r in &reactions {
            if r.reactants.is_empty() && r.products.is_empty() {
                return Err(NetworkError::Invalid("a reaction needs at least one species".into()));
            }
            if !(r.rate.is_finite() && r.rate >= 0.0) {
                return Err(NetworkError::Invalid(format!("rate {} must be finite and >= 0", r.rate)));
            }
            for side in [&r.reactants, &r.products] {
                for (i, t) in side.iter().enumerate() {
                    if t.species >= species.len() {
                        return Err(NetworkError::Invalid(format!("species index {} out of range", t.species)));
                    }
                    if t.coefficient == 0 {
                        return Err(NetworkError::Invalid("zero stoichiometric coefficient".into()));
                    }
                    if side[..i].iter().any(|o| o.species == t.species) {
                        return Err(NetworkError::Invalid(format!(
                            "species {:?} repeated within one side",
                            species[t.species].name
                        )));
                    }
                }
            }
            if r
                .reactants
                .iter()
                .any(|a| r.products.iter().any(|b| a.species == b.species))
            {
                return Err(NetworkError::Invalid("species on both sides of a reaction".into()));
            }
        }
        Ok(Self { species, reactions })
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn species_count(&self) -> usize {
        self.species.len()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn ground_energies(&self) -> Vec<f64> {
        self.species.iter().map(|s| s.ground_energy).collect()
    }

    /// Copy of the network with every ground energy replaced.
    pub fn with_ground_energies(&self, energies: &[f64]) -> Result<Self, NetworkError> {
        if energies.len() != self.species.len() {
            return Err(NetworkError::Invalid("one energy per species required".into()));
        }
        let species = self
            .species
            .iter()
            .zip(energies)
            .map(|(s, &e)| Species {
                name: s.name.clone(),
                ground_energy: e,
            })
            .collect();
        Self::new(species, self.reactions.clone())
    }

    /// Copy of the network with every reaction rate replaced.
    pub fn with_rates(&self, rates: &[f64]) -> Result<Self, NetworkError> {
        if rates.len() != self.reactions.len() {
            return Err(NetworkError::Invalid("one rate per reaction required".into()));
        }
        let reactions = self
            .reactions
            .iter()
            .zip(rates)
            .map(|(r, &k)| Reaction { rate: k, ..r.clone() })
            .collect();
        Self::new(self.species.clone(), reactions)
    }

    /// One ladder monomial per reaction; the Hermitian conjugate is implied.
    pub fn interaction_terms(&self) -> Vec<LadderMonomial> {
        interaction_terms(self)
    }

    pub fn conserved_charges(&self) -> Vec<ChargeVector> {
        conserved_charges(self)
    }
}

/// `rate · Π_s (a†_s)^create (a_s)^annihilate`, stored without its
/// Hermitian conjugate.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderMonomial {
    pub rate: f64,
    /// `(creation power, annihilation power)` per species.
    pub factors: Vec<(u32, u32)>,
}

impl LadderMonomial {
    /// Net occupation change of each species when the monomial acts.
    pub fn shift(&self) -> Vec<i64> {
        self.factors
            .iter()
            .map(|&(c, a)| i64::from(c) - i64::from(a))
            .collect()
    }

    /// The conjugate monomial (creation and annihilation powers swapped).
    pub fn adjoint(&self) -> Self {
        Self {
            rate: self.rate,
            factors: self.factors.iter().map(|&(c, a)| (a, c)).collect(),
        }
    }
}

/// Reactants are created and products annihilated, each to the power of its
/// stoichiometric coefficient: `k Π (a†_{A_i})^{μ_i} Π (a_{B_j})^{ν_j} + h.c.`
pub fn interaction_terms(network: &ReactionNetwork) -> Vec<LadderMonomial> {
    let n = network.species_count();
    network
        .reactions()
        .iter()
        .map(|r| {
            let mut factors = vec![(0u32, 0u32); n];
            for t in &r.reactants {
                factors[t.species].0 = t.coefficient;
            }
            for t in &r.products {
                factors[t.species].1 = t.coefficient;
            }
            LadderMonomial { rate: r.rate, factors }
        })
        .collect()
}

fn fmt_side(f: &mut fmt::Formatter<'_>, network: &ReactionNetwork, side: &[Term]) -> fmt::Result {
    if side.is_empty() {
        return write!(f, "0");
    }
    for (i, t) in side.iter().enumerate() {
        if i > 0 {
            write!(f, " + ")?;
        }
        if t.coefficient != 1 {
            write!(f, "{} ", t.coefficient)?;
        }
        write!(f, "{}", network.species[t.species].name)?;
    }
    Ok(())
}

/// Prints the DSL form; the output parses back to an identical network.
impl fmt::Display for ReactionNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.reactions {
            fmt_side(f, self, &r.reactants)?;
            match r.rate_label {
                Some(l) => write!(f, " <k_{}={:?}> ", l, r.rate)?,
                None => write!(f, " <k={:?}> ", r.rate)?,
            }
            fmt_side(f, self, &r.products)?;
            writeln!(f)?;
        }
        for s in &self.species {
            if s.ground_energy != 0.0 {
                writeln!(f, "energy {} = {:?}", s.name, s.ground_energy)?;
            }
        }
        Ok(())
    }
}
