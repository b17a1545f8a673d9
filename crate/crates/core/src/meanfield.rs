//! Coherent-state mean-field dynamics, classical rate equations and the
//! perturbative modulation formula.
//!
//! Mode operators are replaced by complex amplitudes and the amplitudes
//! evolve as `i·dα_s/dτ = ∂H/∂ᾱ_s`. Complex states are handed to the
//! integrator as interleaved `(re, im)` pairs.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{LadderMonomial, ReactionNetwork};
use crate::ode::{integrate_at, uniform_grid, OdeError, StepOptions};
use crate::scalar::Real;
use crate::table::{Table, Value};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeanFieldError {
    #[error("nondimensional scaling undefined: {0}")]
    UndefinedScaling(&'static str),
    #[error("modulation amplitude has a pole at c2 = 2")]
    Pole,
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("state has {got} amplitudes, field expects {expected}")]
    SpeciesMismatch { expected: usize, got: usize },
    #[error("network is not the concurrent A + A <-> A2, 0 <-> A system: {0}")]
    NotConcurrent(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState<T> {
    pub amplitudes: Vec<Complex<T>>,
}

impl<T: Real> MeanFieldState<T> {
    pub fn new(amplitudes: Vec<Complex<T>>) -> Self {
        Self { amplitudes }
    }

    pub fn zeros(species: usize) -> Self {
        Self::new(vec![Complex::new(T::zero(), T::zero()); species])
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// `⟨n̂_s⟩ = |α_s|²`.
    pub fn occupation(&self, species: usize) -> T {
        self.amplitudes[species].norm_sqr()
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    pub fn to_real(&self) -> Vec<T> {
        pack(&self.amplitudes)
    }

    pub fn from_real(y: &[T]) -> Self {
        Self::new(unpack(y))
    }
}

pub(crate) fn pack<T: Real>(z: &[Complex<T>]) -> Vec<T> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

pub(crate) fn unpack<T: Real>(y: &[T]) -> Vec<Complex<T>> {
    y.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect()
}

/// A mean-field flow `dα/dτ = −i ∂H/∂ᾱ` with its energy function.
pub trait VectorField<T: Real>: Send + Sync {
    fn modes(&self) -> usize;

    /// Writes `dα/dτ`.
    fn eval(&self, alpha: &[Complex<T>], out: &mut [Complex<T>]);

    /// Energy `H(α, ᾱ)`, real by construction.
    fn energy(&self, alpha: &[Complex<T>]) -> T;

    /// Directional derivative of the flow along `v` (central differences
    /// unless overridden).
    fn jvp(&self, alpha: &[Complex<T>], v: &[Complex<T>], out: &mut [Complex<T>]) {
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<T>().sqrt();
        if norm == T::zero() {
            out.iter_mut().for_each(|o| *o = Complex::new(T::zero(), T::zero()));
            return;
        }
        let scale = alpha.iter().map(|c| c.norm()).fold(T::one(), T::max);
        let h = T::epsilon().cbrt() * scale / norm;
        let plus: Vec<_> = alpha.iter().zip(v).map(|(a, d)| a + d * h).collect();
        let minus: Vec<_> = alpha.iter().zip(v).map(|(a, d)| a - d * h).collect();
        let mut fp = vec![Complex::new(T::zero(), T::zero()); alpha.len()];
        let mut fm = fp.clone();
        self.eval(&plus, &mut fp);
        self.eval(&minus, &mut fm);
        let two_h = h + h;
        for (o, (p, m)) in out.iter_mut().zip(fp.iter().zip(&fm)) {
            *o = (p - m) / two_h;
        }
    }
}

/// Mean-field field of a network: `H = Σ E_s|α_s|² + Σ_m k_m (Π ᾱ^c α^a + c.c.)`.
#[derive(Debug, Clone)]
pub struct NetworkField<T> {
    energies: Vec<T>,
    monomials: Vec<(T, Vec<(u32, u32)>)>,
}

impl<T: Real> NetworkField<T> {
    pub fn new(network: &ReactionNetwork) -> Self {
        Self {
            energies: network.ground_energies().into_iter().map(T::lit).collect(),
            monomials: network
                .interaction_terms()
                .into_iter()
                .map(|LadderMonomial { rate, factors }| (T::lit(rate), factors))
                .collect(),
        }
    }
}

/// Builds the mean-field vector field of a network.
pub fn meanfield_vector_field<T: Real>(network: &ReactionNetwork) -> NetworkField<T> {
    NetworkField::new(network)
}

fn cpow<T: Real>(z: Complex<T>, p: u32) -> Complex<T> {
    let mut acc = Complex::new(T::one(), T::zero());
    for _ in 0..p {
        acc *= z;
    }
    acc
}

impl<T: Real> VectorField<T> for NetworkField<T> {
    fn modes(&self) -> usize {
        self.energies.len()
    }

    fn eval(&self, alpha: &[Complex<T>], out: &mut [Complex<T>]) {
        let zero = Complex::new(T::zero(), T::zero());
        // grad[s] accumulates ∂H/∂ᾱ_s
        for (o, (&e, &a)) in out.iter_mut().zip(self.energies.iter().zip(alpha)) {
            *o = a * e;
        }
        for (k, factors) in &self.monomials {
            // term  k Π ᾱ_s^{c_s} α_s^{a_s}  and its conjugate  k Π α_s^{c_s} ᾱ_s^{a_s}
            for s in 0..factors.len() {
                let (c_s, a_s) = factors[s];
                if c_s == 0 && a_s == 0 {
                    continue;
                }
                let mut d_term = zero;
                let mut d_conj = zero;
                if c_s > 0 {
                    let mut p = Complex::new(*k * T::from_count(c_s.into()), T::zero());
                    for (j, &(c, a)) in factors.iter().enumerate() {
                        let (c, a) = if j == s { (c - 1, a) } else { (c, a) };
                        p *= cpow(alpha[j].conj(), c) * cpow(alpha[j], a);
                    }
                    d_term = p;
                }
                if a_s > 0 {
                    let mut p = Complex::new(*k * T::from_count(a_s.into()), T::zero());
                    for (j, &(c, a)) in factors.iter().enumerate() {
                        let (c, a) = if j == s { (c, a - 1) } else { (c, a) };
                        p *= cpow(alpha[j], c) * cpow(alpha[j].conj(), a);
                    }
                    d_conj = p;
                }
                out[s] += d_term + d_conj;
            }
        }
        // dα/dτ = −i ∂H/∂ᾱ
        for o in out.iter_mut() {
            *o = Complex::new(o.im, -o.re);
        }
    }

    fn energy(&self, alpha: &[Complex<T>]) -> T {
        let mut h: T = self.energies.iter().zip(alpha).map(|(&e, a)| e * a.norm_sqr()).sum();
        for (k, factors) in &self.monomials {
            let mut m = Complex::new(*k, T::zero());
            for (j, &(c, a)) in factors.iter().enumerate() {
                m *= cpow(alpha[j].conj(), c) * cpow(alpha[j], a);
            }
            h += m.re + m.re;
        }
        h
    }
}

/// Parameters of the nondimensional concurrent system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondimParams<T> {
    pub t0: T,
    pub alpha0: T,
    pub c1: T,
    pub c2: T,
}

impl<T: Real> NondimParams<T> {
    /// Parameters for given `(c1, c2)` with unit time and amplitude scales.
    pub fn from_couplings(c1: T, c2: T) -> Self {
        Self {
            t0: T::one(),
            alpha0: T::one(),
            c1,
            c2,
        }
    }
}

/// `t0 = 1/E_A`, `α0 = k2/E_A`, `c1 = k1 k2 / E_A²`, `c2 = E_A2 / E_A`.
pub fn nondimensionalize<T: Real>(e_a: T, e_a2: T, k1: T, k2: T) -> Result<NondimParams<T>, MeanFieldError> {
    if e_a == T::zero() {
        return Err(MeanFieldError::UndefinedScaling("E_A = 0"));
    }
    if k2 == T::zero() {
        return Err(MeanFieldError::UndefinedScaling("k2 = 0"));
    }
    Ok(NondimParams {
        t0: T::one() / e_a,
        alpha0: k2 / e_a,
        c1: k1 * k2 / (e_a * e_a),
        c2: e_a2 / e_a,
    })
}

/// Reads `(E_A, E_A2, k1, k2)` from a network made of `A + A <-> A2` and
/// `0 <-> A`, in any order.
pub fn concurrent_constants(network: &ReactionNetwork) -> Result<(f64, f64, f64, f64), MeanFieldError> {
    let bad = |m: &str| MeanFieldError::NotConcurrent(m.to_string());
    if network.species_count() != 2 || network.reactions().len() != 2 {
        return Err(bad("expected two species and two reactions"));
    }
    let mut k1 = None;
    let mut k2 = None;
    let mut atom = None;
    let mut molecule = None;
    for r in network.reactions() {
        match (r.reactants.as_slice(), r.products.as_slice()) {
            ([a], [m]) if a.coefficient == 2 && m.coefficient == 1 => {
                k1 = Some(r.rate);
                atom = Some(a.species);
                molecule = Some(m.species);
            }
            ([], [a]) if a.coefficient == 1 => {
                k2 = Some(r.rate);
                if atom.is_some_and(|s| s != a.species) {
                    return Err(bad("bath feeds the molecule"));
                }
                atom = Some(a.species);
            }
            _ => return Err(bad("unexpected reaction shape")),
        }
    }
    let (Some(k1), Some(k2), Some(atom), Some(molecule)) = (k1, k2, atom, molecule) else {
        return Err(bad("missing formation or bath reaction"));
    };
    if atom != 0 || molecule != 1 {
        return Err(bad("the atom must be the first species"));
    }
    let e = network.ground_energies();
    Ok((e[0], e[1], k1, k2))
}

/// `i·ȧ = a + b + 2c1·ā·m`, `i·ṁ = c2·m + c1·a²` with `b = 1` when the bath
/// coupling is on and `0` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NondimField<T> {
    pub params: NondimParams<T>,
    pub bath: bool,
}

/// Builds the nondimensional field of the concurrent reaction.
pub fn nondim_vector_field<T: Real>(params: NondimParams<T>) -> NondimField<T> {
    NondimField { params, bath: true }
}

impl<T: Real> NondimField<T> {
    pub fn without_bath(self) -> Self {
        Self { bath: false, ..self }
    }

    fn drive(&self) -> T {
        if self.bath {
            T::one()
        } else {
            T::zero()
        }
    }
}

impl<T: Real> VectorField<T> for NondimField<T> {
    fn modes(&self) -> usize {
        2
    }

    fn eval(&self, z: &[Complex<T>], out: &mut [Complex<T>]) {
        let NondimParams { c1, c2, .. } = self.params;
        let (a, m) = (z[0], z[1]);
        let ga = a + self.drive() + a.conj() * m * (c1 + c1);
        let gm = m * c2 + a * a * c1;
        out[0] = Complex::new(ga.im, -ga.re);
        out[1] = Complex::new(gm.im, -gm.re);
    }

    fn energy(&self, z: &[Complex<T>]) -> T {
        nondim_energy_with(z, &self.params, self.bath)
    }

    fn jvp(&self, z: &[Complex<T>], v: &[Complex<T>], out: &mut [Complex<T>]) {
        let NondimParams { c1, c2, .. } = self.params;
        let two_c1 = c1 + c1;
        let (a, m) = (z[0], z[1]);
        let (da, dm) = (v[0], v[1]);
        let ga = da + (da.conj() * m + a.conj() * dm) * two_c1;
        let gm = dm * c2 + a * da * two_c1;
        out[0] = Complex::new(ga.im, -ga.re);
        out[1] = Complex::new(gm.im, -gm.re);
    }
}

fn nondim_energy_with<T: Real>(z: &[Complex<T>], p: &NondimParams<T>, bath: bool) -> T {
    let (a, m) = (z[0], z[1]);
    let cross = a.conj() * a.conj() * m;
    let mut h = a.norm_sqr() + p.c2 * m.norm_sqr() + (p.c1 + p.c1) * cross.re;
    if bath {
        h += a.re + a.re;
    }
    h
}

/// `H̃ = |a|² + c2|m|² + c1(ā²m + c.c.) + (ā + c.c.)`.
pub fn nondim_energy<T: Real>(state: &MeanFieldState<T>, params: &NondimParams<T>) -> T {
    nondim_energy_with(&state.amplitudes, params, true)
}

/// Samples of an integrated mean-field trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<MeanFieldState<T>>,
    pub energy: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn occupations(&self, species: usize) -> Vec<T> {
        self.states.iter().map(|s| s.occupation(species)).collect()
    }

    /// Largest `|E(τ) − E(0)| / max(|E(0)|, tiny)` along the trajectory.
    pub fn relative_energy_drift(&self) -> T {
        let e0 = self.energy[0];
        let denom = e0.abs().max(T::min_positive_value());
        self.energy.iter().map(|e| (*e - e0).abs() / denom).fold(T::zero(), T::max)
    }

    /// `tau,re_a,im_a,re_m,im_m,n_atoms,n_molecules,energy` for two
    /// species; other species counts get `re_<i>,im_<i>,n_<i>` columns.
    pub fn to_table(&self) -> Table {
        let modes = self.states.first().map_or(0, |s| s.len());
        let mut table = if modes == 2 {
            Table::new(["tau", "re_a", "im_a", "re_m", "im_m", "n_atoms", "n_molecules", "energy"])
        } else {
            let mut cols = vec!["tau".to_string()];
            for i in 0..modes {
                cols.extend([format!("re_{i}"), format!("im_{i}")]);
            }
            cols.extend((0..modes).map(|i| format!("n_{i}")));
            cols.push("energy".into());
            Table::new(cols)
        };
        for ((t, s), e) in self.times.iter().zip(&self.states).zip(&self.energy) {
            let mut row: Vec<Value> = vec![t.as_f64().into()];
            for a in &s.amplitudes {
                row.push(a.re.as_f64().into());
                row.push(a.im.as_f64().into());
            }
            row.extend(s.amplitudes.iter().map(|a| Value::from(a.norm_sqr().as_f64())));
            row.push(e.as_f64().into());
            table.push(row);
        }
        table
    }
}

/// Integrates a field and samples it on `0, dτ, …, τ_end`.
pub fn integrate<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    initial: &MeanFieldState<T>,
    tau_end: T,
    dtau: T,
    options: StepOptions<T>,
) -> Result<Trajectory<T>, MeanFieldError> {
    let times = uniform_grid(T::zero(), tau_end, dtau)?;
    integrate_on(field, initial, &times, options)
}

/// Integrates a field and samples it at the given increasing times.
pub fn integrate_on<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    initial: &MeanFieldState<T>,
    times: &[T],
    options: StepOptions<T>,
) -> Result<Trajectory<T>, MeanFieldError> {
    if initial.len() != field.modes() {
        return Err(MeanFieldError::SpeciesMismatch {
            expected: field.modes(),
            got: initial.len(),
        });
    }
    if !initial.is_finite() {
        return Err(OdeError::NonFinite { t: 0.0 }.into());
    }
    let ys = integrate_at(real_rhs(field), initial.to_real(), times, options)?;
    let states: Vec<_> = ys.iter().map(|y| MeanFieldState::from_real(y)).collect();
    let energy = states.iter().map(|s| field.energy(&s.amplitudes)).collect();
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        energy,
    })
}

/// Adapts a complex field to the real interleaved integrator interface.
pub fn real_rhs<'a, T: Real, F: VectorField<T> + ?Sized>(field: &'a F) -> impl FnMut(T, &[T], &mut [T]) + 'a {
    let n = field.modes();
    let mut z = vec![Complex::new(T::zero(), T::zero()); n];
    let mut dz = z.clone();
    move |_t, y, dy| {
        for (c, p) in z.iter_mut().zip(y.chunks_exact(2)) {
            *c = Complex::new(p[0], p[1]);
        }
        field.eval(&z, &mut dz);
        for (p, c) in dy.chunks_exact_mut(2).zip(&dz) {
            p[0] = c.re;
            p[1] = c.im;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState<T> {
    pub concentrations: Vec<T>,
}

/// Mass-action rate equations: each reaction contributes
/// `r = k(Π[reactants]^μ − Π[products]^ν)`, consuming `μ_i r` of every
/// reactant and producing `ν_j r` of every product.
#[derive(Debug, Clone)]
pub struct ClassicalField<T> {
    reactions: Vec<(T, Vec<(usize, u32)>, Vec<(usize, u32)>)>,
    species: usize,
}

pub fn classical_rate_field<T: Real>(network: &ReactionNetwork) -> ClassicalField<T> {
    let side = |terms: &[crate::network::Term]| terms.iter().map(|t| (t.species, t.coefficient)).collect();
    ClassicalField {
        reactions: network
            .reactions()
            .iter()
            .map(|r| (T::lit(r.rate), side(&r.reactants), side(&r.products)))
            .collect(),
        species: network.species_count(),
    }
}

impl<T: Real> ClassicalField<T> {
    pub fn eval(&self, c: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        let mass = |side: &[(usize, u32)]| side.iter().fold(T::one(), |acc, &(s, p)| acc * c[s].powi(p as i32));
        for (k, reactants, products) in &self.reactions {
            let r = *k * (mass(reactants) - mass(products));
            for &(s, mu) in reactants {
                out[s] -= T::from_count(mu.into()) * r;
            }
            for &(s, nu) in products {
                out[s] += T::from_count(nu.into()) * r;
            }
        }
    }

    pub fn species(&self) -> usize {
        self.species
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalTrajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<ClassicalState<T>>,
}

impl<T: Real> ClassicalTrajectory<T> {
    pub fn to_table(&self, names: &[String]) -> Table {
        let mut table = Table::new(std::iter::once("t".to_string()).chain(names.iter().cloned()));
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut row = vec![Value::from(t.as_f64())];
            row.extend(s.concentrations.iter().map(|c| Value::from(c.as_f64())));
            table.push(row);
        }
        table
    }
}

pub fn integrate_classical<T: Real>(
    field: &ClassicalField<T>,
    initial: &ClassicalState<T>,
    t_end: T,
    dt: T,
    options: StepOptions<T>,
) -> Result<ClassicalTrajectory<T>, MeanFieldError> {
    if initial.concentrations.len() != field.species {
        return Err(MeanFieldError::SpeciesMismatch {
            expected: field.species,
            got: initial.concentrations.len(),
        });
    }
    let times = uniform_grid(T::zero(), t_end, dt)?;
    let ys = integrate_at(|_t, y: &[T], dy: &mut [T]| field.eval(y, dy), initial.concentrations.clone(), &times, options)?;
    Ok(ClassicalTrajectory {
        times,
        states: ys.into_iter().map(|concentrations| ClassicalState { concentrations }).collect(),
    })
}

/// Boltzmann constant in J/K for SI-mode Arrhenius rates.
pub const BOLTZMANN_SI: f64 = 1.380_649e-23;

/// `prefactor · exp(−E_a / (κ T))`; pass `κ = 1` for dimensionless units.
pub fn arrhenius_rate<T: Real>(prefactor: T, activation_energy: T, temperature: T, kappa: T) -> Result<T, MeanFieldError> {
    if !(temperature > T::zero()) {
        return Err(MeanFieldError::NonPositiveTemperature(temperature.as_f64()));
    }
    Ok(prefactor * (-activation_energy / (kappa * temperature)).exp())
}

/// Leading-order modulation of the atom number in the weak-coupling regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbativeModulation<T> {
    pub amplitude: T,
    pub frequency: T,
    /// `c1²A0² ≤ 0.1`, `A0 ≥ 10` and `1 < c2 < 2`.
    pub valid: bool,
}

/// `A_mod = 4(A0+1)A0³c1²/(c2−2)²`, `ω_mod = c2 − 1`.
pub fn perturbative_modulation<T: Real>(c1: T, c2: T, a0: T) -> Result<PerturbativeModulation<T>, MeanFieldError> {
    let gap = c2 - T::lit(2.0);
    if gap == T::zero() {
        return Err(MeanFieldError::Pole);
    }
    let amplitude = T::lit(4.0) * (a0 + T::one()) * a0.powi(3) * c1 * c1 / (gap * gap);
    let valid = c1 * c1 * a0 * a0 <= T::lit(0.1) && a0 >= T::lit(10.0) && c2 > T::one() && c2 < T::lit(2.0);
    Ok(PerturbativeModulation {
        amplitude,
        frequency: c2 - T::one(),
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::parse_network;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type C = Complex<f64>;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn field_of(text: &str) -> NetworkField<f64> {
        meanfield_vector_field(&parse_network(text).unwrap())
    }

    fn eval<F: VectorField<f64>>(f: &F, z: &[C]) -> Vec<C> {
        let mut out = vec![C::default(); z.len()];
        f.eval(z, &mut out);
        out
    }

    #[test]
    fn decoupled_rotation() {
        let f = field_of("A + A <k=0> A2\nenergy A = 1.5\nenergy A2 = -0.5");
        let z = [c(1.0, 2.0), c(-0.3, 0.7)];
        let d = eval(&f, &z);
        assert!((d[0] - C::new(0.0, -1.5) * z[0]).norm() < 1e-15);
        assert!((d[1] - C::new(0.0, 0.5) * z[1]).norm() < 1e-15);
    }

    #[test]
    fn concurrent_network_field_has_the_expected_form() {
        let (ea, em, k1, k2) = (1.3, 0.7, 0.4, 0.9);
        let f = field_of(&format!("A + A <k_1={k1}> A2\n0 <k_2={k2}> A\nenergy A = {ea}\nenergy A2 = {em}"));
        let z = [c(0.3, -1.2), c(0.8, 0.5)];
        let d = eval(&f, &z);
        let i = C::i();
        let ga = z[0] * ea + z[0].conj() * z[1] * (2.0 * k1) + k2;
        let gm = z[1] * em + z[0] * z[0] * k1;
        assert!((i * d[0] - ga).norm() < 1e-14);
        assert!((i * d[1] - gm).norm() < 1e-14);
    }

    #[test]
    fn diatomic_and_bath_special_cases() {
        let z = [c(0.3, -1.2), c(0.8, 0.5)];
        let d = eval(&field_of("A + A <k=1> A2"), &z);
        assert!((C::i() * d[0] - z[0].conj() * z[1] * 2.0).norm() < 1e-14);
        assert!((C::i() * d[1] - z[0] * z[0]).norm() < 1e-14);
        let d = eval(&field_of("0 <k=0.25> A\nenergy A = 2"), &z[..1]);
        assert!((C::i() * d[0] - (z[0] * 2.0 + 0.25)).norm() < 1e-14);
    }

    /// `i·α̇_s` must equal `∂H/∂ᾱ_s = ½(∂H/∂x_s + i ∂H/∂y_s)`.
    fn gradient_defect<F: VectorField<f64>>(f: &F, z: &[C]) -> f64 {
        let d = eval(f, z);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for s in 0..z.len() {
            let shifted = |dz: C| {
                let mut w = z.to_vec();
                w[s] += dz;
                f.energy(&w)
            };
            let dx = (shifted(c(h, 0.0)) - shifted(c(-h, 0.0))) / (2.0 * h);
            let dy = (shifted(c(0.0, h)) - shifted(c(0.0, -h))) / (2.0 * h);
            let grad = c(0.5 * dx, 0.5 * dy);
            worst = worst.max((C::i() * d[s] - grad).norm() / grad.norm().max(1.0));
        }
        worst
    }

    #[test]
    fn fields_are_energy_gradients_at_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let nondim = nondim_vector_field(NondimParams::from_couplings(0.37, 1.1));
        let general = field_of("A + A <k_1=0.37> A2\n0 <k_2=1> A\nA + A2 <k=0.2> B\nenergy A = 1\nenergy A2 = 1.1\nenergy B = -0.4");
        for _ in 0..100 {
            let mut z = || c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let two = [z(), z()];
            assert!(gradient_defect(&nondim, &two) < 1e-6);
            let three = [z(), z(), z()];
            assert!(gradient_defect(&general, &three) < 1e-6);
        }
    }

    #[test]
    fn nondimensional_field_is_the_rescaled_dimensional_field() {
        let (ea, em, k2) = (2.0, 2.2, 4.0);
        for k1 in [0.0, 0.35] {
            let p = nondimensionalize(ea, em, k1, k2).unwrap();
            let dim = field_of(&format!("A + A <k_1={k1}> A2\n0 <k_2={k2}> A\nenergy A = {ea}\nenergy A2 = {em}"));
            let nd = nondim_vector_field(p);
            for z in [[c(0.3, 0.1), c(-0.2, 0.4)], [c(-1.5, 0.8), c(0.0, 1.0)]] {
                let scaled: Vec<C> = z.iter().map(|w| w * p.alpha0).collect();
                let d_dim = eval(&dim, &scaled);
                let d_nd = eval(&nd, &z);
                for s in 0..2 {
                    // dα̃/dτ = (t0/α0) dα/dt
                    let expect = d_dim[s] * (p.t0 / p.alpha0);
                    assert!((d_nd[s] - expect).norm() < 1e-12, "k1={k1}");
                }
            }
        }
    }

    #[test]
    fn nondimensionalize_examples() {
        let p = nondimensionalize(2.0_f64, 2.2, 1.0, 4.0).unwrap();
        assert_eq!((p.t0, p.alpha0, p.c1), (0.5, 2.0, 1.0));
        assert!((p.c2 - 1.1).abs() < 1e-15);
        let p = nondimensionalize(1.0_f64, 1.1, 0.3, 0.5).unwrap();
        assert!((p.c1 - 0.15).abs() < 1e-15 && (p.c2 - 1.1).abs() < 1e-15);
        assert!(nondimensionalize(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(nondimensionalize(1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn concurrent_constants_are_read_back() {
        let net = parse_network("A + A <k_1=0.3> A2\n0 <k_2=0.5> A\nenergy A = 1\nenergy A2 = 1.1").unwrap();
        assert_eq!(concurrent_constants(&net).unwrap(), (1.0, 1.1, 0.3, 0.5));
        assert!(concurrent_constants(&parse_network("A + A <k=1> A2").unwrap()).is_err());
    }

    #[test]
    fn analytic_jvp_matches_finite_differences() {
        struct Fd(NondimField<f64>);
        impl VectorField<f64> for Fd {
            fn modes(&self) -> usize {
                2
            }
            fn eval(&self, a: &[C], o: &mut [C]) {
                self.0.eval(a, o)
            }
            fn energy(&self, a: &[C]) -> f64 {
                self.0.energy(a)
            }
        }
        let f = nondim_vector_field(NondimParams::from_couplings(0.2, 1.1));
        let z = [c(1.2, -0.4), c(0.3, 0.9)];
        let v = [c(0.1, 0.5), c(-0.7, 0.2)];
        let (mut a, mut b) = ([C::default(); 2], [C::default(); 2]);
        f.jvp(&z, &v, &mut a);
        Fd(f).jvp(&z, &v, &mut b);
        for s in 0..2 {
            assert!((a[s] - b[s]).norm() < 1e-7);
        }
    }

    #[test]
    fn nondim_energy_examples() {
        let p = NondimParams::from_couplings(0.5, 1.1);
        let e = |a: C, m: C| nondim_energy(&MeanFieldState::new(vec![a, m]), &p);
        assert_eq!(e(c(0.0, 0.0), c(0.0, 0.0)), 0.0);
        assert!((e(c(1.0, 0.0), c(0.0, 0.0)) - 3.0).abs() < 1e-15);
        assert!((e(c(0.0, 0.0), c(0.0, 1.0)) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn decoupled_molecule_stays_empty() {
        let f = nondim_vector_field(NondimParams::from_couplings(0.0, 1.1));
        let init = MeanFieldState::new(vec![c(3.0, 0.0), c(0.0, 0.0)]);
        let tr = integrate(&f, &init, 50.0, 0.5, StepOptions::default()).unwrap();
        assert!(tr.states.iter().all(|s| s.amplitudes[1] == c(0.0, 0.0)));
    }

    #[test]
    fn classical_field_examples() {
        let net = parse_network("A + A <k=1> A2").unwrap();
        let f = classical_rate_field::<f64>(&net);
        let mut d = [0.0; 2];
        f.eval(&[1.0, 0.0], &mut d);
        assert_eq!(d, [-2.0, 1.0]);
        f.eval(&[0.7, 0.49], &mut d);
        assert!(d.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn arrhenius_examples() {
        assert_eq!(arrhenius_rate(3.0, 0.0, 10.0, 1.0).unwrap(), 3.0);
        assert!((arrhenius_rate(3.0, 2.0_f64.ln(), 1.0, 1.0).unwrap() - 1.5).abs() < 1e-15);
        assert!((arrhenius_rate(3.0_f64, 1.0, 1e12, 1.0).unwrap() - 3.0).abs() < 1e-11);
        assert!(arrhenius_rate(1.0, 1.0, 0.0, 1.0).is_err());
        let si = arrhenius_rate(1.0, BOLTZMANN_SI * 300.0, 300.0, BOLTZMANN_SI).unwrap();
        assert!((si - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn modulation_formula_examples() {
        assert_eq!(perturbative_modulation(0.0, 1.1, 10.0).unwrap().amplitude, 0.0);
        let m = perturbative_modulation(1e-3_f64, 1.1, 10.0).unwrap();
        assert!((m.frequency - 0.1).abs() < 1e-15);
        assert!((m.amplitude - 4.0 * 11.0 * 1000.0 * 1e-6 / 0.81).abs() < 1e-12);
        assert!((m.amplitude - 0.05432).abs() < 1e-5);
        assert!(m.valid);
        assert!(!perturbative_modulation(0.1, 1.1, 10.0).unwrap().valid);
        assert!(!perturbative_modulation(1e-4, 2.5, 100.0).unwrap().valid);
        assert_eq!(perturbative_modulation(1e-3, 2.0, 10.0), Err(MeanFieldError::Pole));
    }

    #[test]
    fn trajectory_table_header() {
        let f = nondim_vector_field(NondimParams::from_couplings(0.01, 1.1));
        let tr = integrate(&f, &MeanFieldState::new(vec![c(1.0, 0.0), c(0.0, 0.0)]), 1.0, 0.5, StepOptions::default()).unwrap();
        let t = tr.to_table();
        assert_eq!(t.columns.join(","), "tau,re_a,im_a,re_m,im_m,n_atoms,n_molecules,energy");
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn species_mismatch_is_rejected() {
        let f = nondim_vector_field(NondimParams::from_couplings(0.01, 1.1));
        let r = integrate(&f, &MeanFieldState::zeros(3), 1.0, 0.5, StepOptions::default());
        assert!(matches!(r, Err(MeanFieldError::SpeciesMismatch { .. })));
    }
}
