//! Dense statevector engine.
//!
//! Qubit 0 is the least-significant bit of the amplitude index. Pauli labels
//! in text form list qubit 0 first, so the label `XZ` puts `X` on the least
//! significant bit.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::{PauliObservable, PauliString};
use crate::parallel;

/// Largest qubit count for which dense matrices are materialized.
pub const DENSE_LIMIT: usize = 12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩`.
    pub fn zero(num_qubits: usize) -> Self {
        let mut amps = vec![ZERO; 1 << num_qubits];
        amps[0] = ONE;
        Self { num_qubits, amps }
    }

    /// Wrap raw amplitudes, normalizing them. Fails on a length that is not
    /// a power of two or on a zero vector.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("amplitude length {len} is not a power of two")));
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            num_qubits: len.trailing_zeros() as usize,
            amps: amps.into_iter().map(|a| a / norm).collect(),
        })
    }

    /// Haar-ish random state from a seeded Gaussian draw.
    pub fn random(num_qubits: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = (0..1usize << num_qubits)
            .map(|_| Complex64::new(gaussian(&mut rng), gaussian(&mut rng)))
            .collect();
        Self::from_amplitudes(amps).expect("random draw is nonzero")
    }

    /// Tensor product `a ⊗ b` where `b` holds the low qubits.
    pub fn product(high: &StateVector, low: &StateVector) -> Self {
        let mut amps = Vec::with_capacity(high.amps.len() * low.amps.len());
        for h in &high.amps {
            for l in &low.amps {
                amps.push(h * l);
            }
        }
        Self { num_qubits: high.num_qubits + low.num_qubits, amps }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Apply a 2×2 matrix `[[a, b], [c, d]]` to `qubit`.
    pub fn apply_single(&mut self, qubit: usize, m: [[Complex64; 2]; 2]) {
        let stride = 1usize << qubit;
        for base in (0..self.amps.len()).step_by(stride << 1) {
            for j in base..base + stride {
                let a0 = self.amps[j];
                let a1 = self.amps[j + stride];
                self.amps[j] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[j + stride] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    pub fn apply_ry(&mut self, qubit: usize, theta: f64) {
        self.apply_single(qubit, ry_matrix(theta));
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        let c = 1usize << control;
        let t = 1usize << target;
        for j in 0..self.amps.len() {
            if j & c != 0 && j & t == 0 {
                self.amps.swap(j, j | t);
            }
        }
    }

    /// `⟨ψ|P|ψ⟩` for a single Pauli string.
    pub fn pauli_expectation(&self, p: &PauliString) -> f64 {
        let (x, z) = p.masks();
        let phase = y_phase(p);
        let acc: Complex64 = self
            .amps
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let sign = if (j as u64 & z).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
                self.amps[(j as u64 ^ x) as usize].conj() * a * sign
            })
            .sum();
        (acc * phase).re
    }

    /// `|ψ⟩⟨ψ|` as a density matrix.
    pub fn to_density(&self) -> DensityMatrix {
        let v = nalgebra::DVector::from_column_slice(&self.amps);
        DensityMatrix::from_matrix_unchecked(&v * v.adjoint())
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// `i^{#Y}` factor of a Pauli string in the `(x, z)` representation.
fn y_phase(p: &PauliString) -> Complex64 {
    let (x, z) = p.masks();
    match (x & z).count_ones() % 4 {
        0 => ONE,
        1 => Complex64::new(0.0, 1.0),
        2 => -ONE,
        _ => Complex64::new(0.0, -1.0),
    }
}

pub fn ry_matrix(theta: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

/// Layered hardware-efficient ansatz: an `R_y` layer, then `depth` repetitions
/// of (CNOT block, `R_y` layer). `params[layer * n + q]` is the angle on qubit
/// `q` in rotation layer `layer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsatzCircuit {
    pub num_qubits: usize,
    pub depth: usize,
    /// CNOT `(control, target)` pairs applied, in order, in every block.
    pub entangler: Vec<(usize, usize)>,
    pub params: Vec<f64>,
    /// Seed used to initialize training; informational.
    #[serde(default)]
    pub seed: u64,
}

impl AnsatzCircuit {
    pub fn linear(num_qubits: usize, depth: usize, params: Vec<f64>) -> Self {
        Self {
            num_qubits,
            depth,
            entangler: linear_entangler(num_qubits),
            params,
            seed: 0,
        }
    }

    pub fn expected_param_count(&self) -> usize {
        self.num_qubits * (self.depth + 1)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn linear_entangler(num_qubits: usize) -> Vec<(usize, usize)> {
    (0..num_qubits.saturating_sub(1)).map(|i| (i, i + 1)).collect()
}

pub fn prepare_ansatz_state(circuit: &AnsatzCircuit) -> Result<StateVector> {
    let n = circuit.num_qubits;
    if circuit.params.len() != circuit.expected_param_count() {
        return Err(Error::DimensionMismatch {
            expected: circuit.expected_param_count(),
            got: circuit.params.len(),
        });
    }
    if let Some(&(c, t)) = circuit.entangler.iter().find(|&&(c, t)| c >= n || t >= n || c == t) {
        return Err(Error::InvalidArgument(format!("bad CNOT pair ({c}, {t})")));
    }
    let mut state = StateVector::zero(n);
    for layer in 0..=circuit.depth {
        if layer > 0 {
            for &(c, t) in &circuit.entangler {
                state.apply_cnot(c, t);
            }
        }
        for q in 0..n {
            state.apply_ry(q, circuit.params[layer * n + q]);
        }
    }
    Ok(state)
}

pub fn exact_expectation(state: &StateVector, obs: &PauliObservable) -> Result<f64> {
    if obs.num_qubits() != state.num_qubits() {
        return Err(Error::DimensionMismatch { expected: state.num_qubits(), got: obs.num_qubits() });
    }
    let parts = parallel::map_indexed(obs.len(), |i| {
        let t = &obs.terms()[i];
        if t.string.is_identity() {
            t.coeff * state.norm_sqr()
        } else {
            t.coeff * state.pauli_expectation(&t.string)
        }
    });
    Ok(parts.into_iter().sum())
}

/// Dense matrix of the observable; errors above [`DENSE_LIMIT`].
pub fn dense_matrix(obs: &PauliObservable) -> Result<DMatrix<Complex64>> {
    let n = obs.num_qubits();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge { qubits: n, limit: DENSE_LIMIT });
    }
    let dim = 1usize << n;
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    for t in obs.terms() {
        let (x, z) = t.string.masks();
        let phase = y_phase(&t.string) * t.coeff;
        for j in 0..dim {
            let sign = if (j as u64 & z).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            m[((j as u64 ^ x) as usize, j)] += phase * sign;
        }
    }
    Ok(m)
}

/// Smallest eigenvalue of the dense Hamiltonian.
pub fn ground_energy_dense(obs: &PauliObservable) -> Result<f64> {
    let h = dense_matrix(obs)?;
    // Real symmetric when every term has an even number of Y factors.
    let real = obs.terms().iter().all(|t| {
        let (x, z) = t.string.masks();
        (x & z).count_ones() % 2 == 0
    });
    let min = if real {
        let hr = h.map(|c| c.re);
        SymmetricEigen::new(hr).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    } else {
        SymmetricEigen::new(h).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    Ok(min)
}

/// Hermitian, unit-trace, positive semidefinite matrix on `num_qubits`
/// qubits. Index bit `i` belongs to the `i`-th qubit of the register it
/// describes.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    num_qubits: usize,
    mat: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn from_matrix_unchecked(mat: DMatrix<Complex64>) -> Self {
        let num_qubits = mat.nrows().trailing_zeros() as usize;
        Self { num_qubits, mat }
    }

    /// Validate Hermiticity, trace and positivity within `tol`.
    pub fn from_matrix(mat: DMatrix<Complex64>, tol: f64) -> Result<Self> {
        if mat.nrows() != mat.ncols() || !mat.nrows().is_power_of_two() {
            return Err(Error::InvalidArgument("density matrix must be square with power-of-two size".into()));
        }
        let d = Self::from_matrix_unchecked(mat);
        let herm = d.hermiticity_error();
        if herm > tol {
            return Err(Error::InvalidArgument(format!("not Hermitian (deviation {herm:e})")));
        }
        if (d.trace() - 1.0).abs() > tol {
            return Err(Error::InvalidArgument(format!("trace {} is not 1", d.trace())));
        }
        let min = d.min_eigenvalue();
        if min < -tol {
            return Err(Error::InvalidArgument(format!("negative eigenvalue {min:e}")));
        }
        Ok(d)
    }

    pub fn maximally_mixed(num_qubits: usize) -> Self {
        let dim = 1usize << num_qubits;
        Self {
            num_qubits,
            mat: DMatrix::identity(dim, dim) * Complex64::new(1.0 / dim as f64, 0.0),
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.mat - self.mat.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        SymmetricEigen::new(self.hermitian_part()).eigenvalues.iter().cloned().collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn hermitian_part(&self) -> DMatrix<Complex64> {
        (&self.mat + self.mat.adjoint()) * Complex64::new(0.5, 0.0)
    }

    /// Trace out every qubit not in `keep`. Kept qubits are renumbered in
    /// ascending order of their original index.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let keep = validate_subset(keep, self.num_qubits)?;
        let rest: Vec<usize> = (0..self.num_qubits).filter(|q| !keep.contains(q)).collect();
        let k = keep.len();
        let mut out = DMatrix::<Complex64>::zeros(1 << k, 1 << k);
        for a in 0..1usize << k {
            for b in 0..1usize << k {
                let mut acc = ZERO;
                for r in 0..1usize << rest.len() {
                    let ia = scatter(a, &keep) | scatter(r, &rest);
                    let ib = scatter(b, &keep) | scatter(r, &rest);
                    acc += self.mat[(ia, ib)];
                }
                out[(a, b)] = acc;
            }
        }
        Ok(Self { num_qubits: k, mat: out })
    }
}

/// Place the low bits of `value` at the positions listed in `qubits`.
pub(crate) fn scatter(value: usize, qubits: &[usize]) -> usize {
    qubits
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &q)| acc | (((value >> i) & 1) << q))
}

/// Inverse of [`scatter`].
pub(crate) fn gather(index: usize, qubits: &[usize]) -> usize {
    qubits
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &q)| acc | (((index >> q) & 1) << i))
}

pub(crate) fn validate_subset(keep: &[usize], n: usize) -> Result<Vec<usize>> {
    if keep.is_empty() {
        return Err(Error::InvalidSubset("empty subset".into()));
    }
    let mut sorted = keep.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != keep.len() {
        return Err(Error::InvalidSubset(format!("duplicate qubits in {keep:?}")));
    }
    if let Some(&q) = sorted.iter().find(|&&q| q >= n) {
        return Err(Error::InvalidSubset(format!("qubit {q} out of range for {n} qubits")));
    }
    Ok(sorted)
}

/// Reduced state of `keep` (renumbered ascending).
pub fn partial_trace(state: &StateVector, keep: &[usize]) -> Result<DensityMatrix> {
    let n = state.num_qubits();
    let keep = validate_subset(keep, n)?;
    let rest: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
    let rows = 1usize << keep.len();
    let cols = 1usize << rest.len();
    // M[a, r] = ψ[scatter(a) | scatter(r)], ρ = M M†.
    let mut m = DMatrix::<Complex64>::zeros(rows, cols);
    for (j, amp) in state.amplitudes().iter().enumerate() {
        m[(gather(j, &keep), gather(j, &rest))] = *amp;
    }
    Ok(DensityMatrix { num_qubits: keep.len(), mat: &m * m.adjoint() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VqeConfig {
    pub depth: usize,
    /// Entangler pairs; `None` selects the linear chain.
    pub entangler: Option<Vec<(usize, usize)>>,
    /// Maximum coordinate sweeps per restart.
    pub max_sweeps: usize,
    pub restarts: usize,
    /// Accepted gap to the dense ground energy.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for VqeConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            entangler: None,
            max_sweeps: 400,
            restarts: 8,
            threshold: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VqeResult {
    pub circuit: AnsatzCircuit,
    pub energy: f64,
    pub reference_energy: f64,
    pub threshold: f64,
    pub converged: bool,
    pub sweeps: usize,
    pub evaluations: usize,
}

/// Seeded coordinate-wise minimization of `⟨ψ(θ)|O|ψ(θ)⟩`.
///
/// Each `R_y` angle enters the energy as `A sin(θ + B) + C`, so three
/// evaluations give the exact one-dimensional minimizer. Sweeps repeat until
/// the energy stalls; random restarts continue until the dense ground energy
/// is reached within the threshold or the restart budget is spent. The best
/// circuit is always returned, with `converged` reporting the threshold test.
pub fn train_vqe(obs: &PauliObservable, config: &VqeConfig) -> Result<VqeResult> {
    let n = obs.num_qubits();
    let reference = ground_energy_dense(obs)?;
    let entangler = config.entangler.clone().unwrap_or_else(|| linear_entangler(n));
    let n_params = n * (config.depth + 1);
    let template = AnsatzCircuit {
        num_qubits: n,
        depth: config.depth,
        entangler,
        params: vec![0.0; n_params],
        seed: config.seed,
    };
    let mut evaluations = 0usize;

    if obs.is_constant() {
        let energy = energy_of(&template, obs)?;
        evaluations += 1;
        return Ok(VqeResult {
            circuit: template,
            energy,
            reference_energy: reference,
            threshold: config.threshold,
            converged: (energy - reference).abs() <= config.threshold,
            sweeps: 0,
            evaluations,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(AnsatzCircuit, f64)> = None;
    let mut total_sweeps = 0usize;
    for _ in 0..config.restarts.max(1) {
        let mut circ = template.clone();
        for p in circ.params.iter_mut() {
            *p = rng.gen_range(-PI..PI);
        }
        let mut energy = energy_of(&circ, obs)?;
        evaluations += 1;
        for _ in 0..config.max_sweeps {
            total_sweeps += 1;
            let before = energy;
            for j in 0..n_params {
                let phi = circ.params[j];
                circ.params[j] = phi + FRAC_PI_2;
                let ep = energy_of(&circ, obs)?;
                circ.params[j] = phi - FRAC_PI_2;
                let em = energy_of(&circ, obs)?;
                evaluations += 2;
                let theta = phi - FRAC_PI_2 - (2.0 * energy - ep - em).atan2(ep - em);
                circ.params[j] = wrap_angle(theta);
                let e = energy_of(&circ, obs)?;
                evaluations += 1;
                if e <= energy {
                    energy = e;
                } else {
                    circ.params[j] = phi;
                }
            }
            if before - energy < 1e-13 || energy - reference <= config.threshold * 1e-3 {
                break;
            }
        }
        if best.as_ref().is_none_or(|(_, e)| energy < *e) {
            best = Some((circ, energy));
        }
        if best.as_ref().is_some_and(|(_, e)| e - reference <= config.threshold) {
            break;
        }
    }
    let (circuit, energy) = best.expect("at least one restart");
    Ok(VqeResult {
        circuit,
        energy,
        reference_energy: reference,
        threshold: config.threshold,
        converged: energy - reference <= config.threshold,
        sweeps: total_sweeps,
        evaluations,
    })
}

fn energy_of(circ: &AnsatzCircuit, obs: &PauliObservable) -> Result<f64> {
    exact_expectation(&prepare_ansatz_state(circ)?, obs)
}

fn wrap_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t <= -PI {
        t + 2.0 * PI
    } else {
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::Pauli;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn single_qubit_rotations() {
        let s = prepare_ansatz_state(&AnsatzCircuit::linear(1, 0, vec![0.0])).unwrap();
        assert!(close(s.amplitudes()[0], c(1.0), 1e-15));
        let s = prepare_ansatz_state(&AnsatzCircuit::linear(1, 0, vec![PI])).unwrap();
        assert!(s.amplitudes()[0].norm() < 1e-15);
        assert!((s.amplitudes()[1].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_qubit_layer_matches_hand_product() {
        // R_y(π/2)⊗R_y(π/2)|00⟩ = |++⟩ = (1,1,1,1)/2; CNOT(0→1) maps it to
        // itself; the final zero-angle layer is the identity.
        let s = prepare_ansatz_state(&AnsatzCircuit::linear(2, 1, vec![PI / 2.0, PI / 2.0, 0.0, 0.0])).unwrap();
        for a in s.amplitudes() {
            assert!(close(*a, c(0.5), 1e-15));
        }
        // Nontrivial case: R_y(π/2) on qubit 0 only, then CNOT(0→1) gives a
        // Bell state (|00⟩ + |11⟩)/√2 with qubit 0 as the low bit.
        let s = prepare_ansatz_state(&AnsatzCircuit::linear(2, 1, vec![PI / 2.0, 0.0, 0.0, 0.0])).unwrap();
        let expect = [FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2];
        for (a, e) in s.amplitudes().iter().zip(expect) {
            assert!(close(*a, c(e), 1e-15));
        }
    }

    #[test]
    fn parameter_count_checked() {
        let err = prepare_ansatz_state(&AnsatzCircuit::linear(2, 1, vec![0.0; 3])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 4, got: 3 }));
    }

    #[test]
    fn simple_expectations() {
        let s = StateVector::zero(1);
        let z = PauliObservable::from_labels(&[(1.0, "Z")]).unwrap();
        let x = PauliObservable::from_labels(&[(1.0, "X")]).unwrap();
        assert_eq!(exact_expectation(&s, &z).unwrap(), 1.0);
        assert_eq!(exact_expectation(&s, &x).unwrap(), 0.0);
        let zz = PauliObservable::from_labels(&[(1.0, "ZZ")]).unwrap();
        assert!(exact_expectation(&s, &zz).is_err());
    }

    #[test]
    fn expectation_matches_dense_matrix() {
        let s = StateVector::random(3, 11);
        let o = PauliObservable::from_labels(&[
            (0.3, "XYZ"),
            (-1.2, "YYI"),
            (0.7, "ZIX"),
            (2.0, "III"),
            (-0.4, "IYX"),
        ])
        .unwrap();
        let h = dense_matrix(&o).unwrap();
        let v = nalgebra::DVector::from_column_slice(s.amplitudes());
        let dense = (v.adjoint() * &h * &v)[(0, 0)];
        assert!(dense.im.abs() < 1e-12);
        assert!((exact_expectation(&s, &o).unwrap() - dense.re).abs() < 1e-10);
    }

    #[test]
    fn ground_energies() {
        let z = PauliObservable::from_labels(&[(1.0, "Z")]).unwrap();
        assert!((ground_energy_dense(&z).unwrap() + 1.0).abs() < 1e-12);
        let id = PauliObservable::scaled_identity(3, 2.5);
        assert!((ground_energy_dense(&id).unwrap() - 2.5).abs() < 1e-12);
        // Z⊗Z + 0.5 X⊗I: blocks decouple into [[1, .5], [.5, -1]] pairs, so
        // eigenvalues are ±√(1 + 1/4).
        let o = PauliObservable::from_labels(&[(1.0, "ZZ"), (0.5, "XI")]).unwrap();
        assert!((ground_energy_dense(&o).unwrap() + 1.25f64.sqrt()).abs() < 1e-12);
        // Y-containing observable goes through the complex path.
        let y = PauliObservable::from_labels(&[(1.0, "Y"), (1.0, "Z")]).unwrap();
        assert!((ground_energy_dense(&y).unwrap() + 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dense_limit_enforced() {
        let o = PauliObservable::scaled_identity(DENSE_LIMIT + 1, 1.0);
        assert!(matches!(ground_energy_dense(&o), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn partial_trace_product_and_bell() {
        // |0⟩ on qubit 0, |+⟩ on qubit 1.
        let plus = StateVector::from_amplitudes(vec![c(1.0), c(1.0)]).unwrap();
        let s = StateVector::product(&plus, &StateVector::zero(1));
        let r = partial_trace(&s, &[1]).unwrap();
        for e in r.matrix().iter() {
            assert!(close(*e, c(0.5), 1e-14));
        }
        let bell = StateVector::from_amplitudes(vec![c(1.0), c(0.0), c(0.0), c(1.0)]).unwrap();
        for q in 0..2 {
            let r = partial_trace(&bell, &[q]).unwrap();
            assert!(close(r.matrix()[(0, 0)], c(0.5), 1e-14));
            assert!(close(r.matrix()[(1, 1)], c(0.5), 1e-14));
            assert!(r.matrix()[(0, 1)].norm() < 1e-14);
        }
    }

    /// Dense oracle: materialize |ψ⟩⟨ψ| and sum the traced indices directly.
    fn dense_partial_trace(s: &StateVector, keep: &[usize]) -> DMatrix<Complex64> {
        let n = s.num_qubits();
        let k = keep.len();
        let mut out = DMatrix::zeros(1 << k, 1 << k);
        let amps = s.amplitudes();
        for i in 0..1usize << n {
            for j in 0..1usize << n {
                let traced_equal = (0..n).filter(|q| !keep.contains(q)).all(|q| (i >> q) & 1 == (j >> q) & 1);
                if traced_equal {
                    let a = keep.iter().enumerate().fold(0, |acc, (b, &q)| acc | (((i >> q) & 1) << b));
                    let b = keep.iter().enumerate().fold(0, |acc, (bb, &q)| acc | (((j >> q) & 1) << bb));
                    out[(a, b)] += amps[i] * amps[j].conj();
                }
            }
        }
        out
    }

    #[test]
    fn partial_trace_matches_dense_oracle() {
        let s = StateVector::random(4, 5);
        let r = partial_trace(&s, &[0, 2]).unwrap();
        let oracle = dense_partial_trace(&s, &[0, 2]);
        assert!((r.matrix() - oracle).iter().all(|e| e.norm() < 1e-12));
        assert!(r.hermiticity_error() < 1e-12);
        assert!((r.trace() - 1.0).abs() < 1e-12);
        assert!(r.min_eigenvalue() > -1e-12);
    }

    #[test]
    fn partial_trace_composes() {
        let s = StateVector::random(4, 9);
        let direct = partial_trace(&s, &[1, 3]).unwrap();
        // Tracing to {0,1,3} first renumbers 1 → 1 and 3 → 2.
        let two_step = partial_trace(&s, &[0, 1, 3]).unwrap().partial_trace(&[1, 2]).unwrap();
        assert!((direct.matrix() - two_step.matrix()).iter().all(|e| e.norm() < 1e-12));
        let full = s.to_density().partial_trace(&[1, 3]).unwrap();
        assert!((direct.matrix() - full.matrix()).iter().all(|e| e.norm() < 1e-12));
    }

    #[test]
    fn partial_trace_rejects_bad_subsets() {
        let s = StateVector::zero(2);
        assert!(matches!(partial_trace(&s, &[]), Err(Error::InvalidSubset(_))));
        assert!(matches!(partial_trace(&s, &[2]), Err(Error::InvalidSubset(_))));
        assert!(matches!(partial_trace(&s, &[0, 0]), Err(Error::InvalidSubset(_))));
    }

    #[test]
    fn gates_are_unitary_and_norm_preserving() {
        for theta in [0.0, 0.3, 1.7, PI, -2.2] {
            let m = ry_matrix(theta);
            for i in 0..2 {
                for j in 0..2 {
                    let v: Complex64 = (0..2).map(|k| m[k][i].conj() * m[k][j]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((v - c(want)).norm() < 1e-15);
                }
            }
        }
        let mut s = StateVector::random(5, 3);
        for q in 0..5 {
            s.apply_ry(q, 0.37 * q as f64 + 0.1);
            s.apply_cnot(q, (q + 2) % 5);
            assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn expectation_is_linear_in_coefficients() {
        let s = StateVector::random(3, 21);
        let labels = ["XYZ", "ZZI", "IXX", "YIY"];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let singles: Vec<f64> = labels
            .iter()
            .map(|l| exact_expectation(&s, &PauliObservable::from_labels(&[(1.0, l)]).unwrap()).unwrap())
            .collect();
        for _ in 0..10 {
            let coeffs: Vec<f64> = labels.iter().map(|_| rng.gen_range(-3.0..3.0)).collect();
            let terms: Vec<(f64, &str)> = coeffs.iter().cloned().zip(labels.iter().cloned()).collect();
            let o = PauliObservable::from_labels(&terms).unwrap();
            let lin: f64 = coeffs.iter().zip(&singles).map(|(a, b)| a * b).sum();
            assert!((exact_expectation(&s, &o).unwrap() - lin).abs() < 1e-12);
        }
    }

    #[test]
    fn y_sign_convention() {
        // Y|0⟩ = i|1⟩, so on (|0⟩ + i|1⟩)/√2 the expectation of Y is +1.
        let s = StateVector::from_amplitudes(vec![c(1.0), Complex64::new(0.0, 1.0)]).unwrap();
        let y = PauliString::new(vec![Pauli::Y]);
        assert!((s.pauli_expectation(&y) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vqe_single_qubit_z() {
        let o = PauliObservable::from_labels(&[(1.0, "Z")]).unwrap();
        let r = train_vqe(&o, &VqeConfig { depth: 0, threshold: 1e-6, ..Default::default() }).unwrap();
        assert!(r.converged);
        assert!((r.energy + 1.0).abs() < 1e-6);
    }

    #[test]
    fn vqe_two_qubit() {
        let o = PauliObservable::from_labels(&[(1.0, "ZZ"), (0.2, "XX")]).unwrap();
        let r = train_vqe(&o, &VqeConfig { depth: 1, ..Default::default() }).unwrap();
        let reference = ground_energy_dense(&o).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((r.energy - reference).abs() < 1e-4);
    }

    #[test]
    fn vqe_identity_terminates_immediately() {
        let o = PauliObservable::scaled_identity(2, 1.5);
        let r = train_vqe(&o, &VqeConfig::default()).unwrap();
        assert_eq!(r.sweeps, 0);
        assert_eq!(r.evaluations, 1);
        assert!((r.energy - 1.5).abs() < 1e-12);
        assert!(r.converged);
    }

    #[test]
    fn vqe_is_deterministic() {
        let o = crate::observables::transverse_field_ising(3, 1.0, 0.7, false).unwrap();
        let cfg = VqeConfig { depth: 2, seed: 3, ..Default::default() };
        let a = train_vqe(&o, &cfg).unwrap();
        let b = train_vqe(&o, &cfg).unwrap();
        assert_eq!(a.circuit.params, b.circuit.params);
    }

    #[test]
    fn ansatz_json_round_trip() {
        let c = AnsatzCircuit::linear(3, 2, (0..9).map(|i| i as f64 * 0.1).collect());
        assert_eq!(AnsatzCircuit::from_json(&c.to_json().unwrap()).unwrap(), c);
    }
}
