//! Pauli-basis estimators: one basis per string, or one basis per
//! qubit-wise commuting group.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::TraceRow;
use crate::observables::{BasisLabel, PauliGrouping, PauliObservable};
use crate::parallel::map_indexed;
use crate::sampling::{derive_seed, sample_pauli_basis, BitstringBatch};
use crate::simulator::StateVector;

/// Shots spent on one measured setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Observable term indices evaluated from this setting.
    pub members: Vec<usize>,
    pub shots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub method: String,
    pub mean: f64,
    /// Estimated standard error `ε`.
    pub error: f64,
    pub allocations: Vec<Allocation>,
    pub total_shots: usize,
    /// Shot allocation rule, recorded so comparisons can state it.
    pub convention: String,
    /// Whether `ε` includes covariances between strings sharing samples.
    pub includes_covariance: bool,
}

impl BaselineResult {
    pub fn variance(&self) -> f64 {
        self.error * self.error
    }

    /// Single-row trace in the adaptive runner's schema.
    pub fn trace_rows(&self) -> Vec<TraceRow> {
        vec![TraceRow {
            t: 1,
            shots: self.total_shots,
            mean: self.mean,
            variance: self.variance(),
            mixed_mean: self.mean,
            mixed_variance: self.variance(),
            grad_inf_norm: 0.0,
            digest: self.method.clone(),
        }]
    }
}

/// Sample mean and unbiased sample variance; the variance is infinite for a
/// single shot.
fn mean_var(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1) as f64)
}

fn group_values<'a>(batch: &'a BitstringBatch, obs: &'a PauliObservable, members: &'a [usize]) -> impl Iterator<Item = f64> + Clone + 'a {
    (0..batch.shots()).map(move |s| {
        members.iter().map(|&k| obs.terms()[k].coeff * batch.eigenvalue(s, &obs.terms()[k].string)).sum::<f64>()
    })
}

/// Each non-identity string measured in its own basis with `shots_per_term`
/// shots; `ε² = Σ_k c_k² Var(P_k) / S_k`.
pub fn pauli_estimate(state: &StateVector, obs: &PauliObservable, shots_per_term: usize, seed: u64) -> Result<BaselineResult> {
    if obs.num_qubits() != state.num_qubits() {
        return Err(Error::DimensionMismatch { expected: state.num_qubits(), got: obs.num_qubits() });
    }
    if shots_per_term == 0 {
        return Err(Error::InvalidArgument("shots per term must be at least 1".into()));
    }
    let measured: Vec<usize> = (0..obs.len()).filter(|&k| !obs.terms()[k].string.is_identity()).collect();
    let parts = map_indexed(measured.len(), |i| -> Result<(f64, f64)> {
        let k = measured[i];
        let basis: Vec<BasisLabel> = obs.terms()[k].string.labels().iter().map(|&p| BasisLabel::from_pauli(p)).collect();
        let batch = sample_pauli_basis(state, &basis, shots_per_term, derive_seed(seed, k as u64))?;
        let s = &obs.terms()[k].string;
        let (m, v) = mean_var((0..batch.shots()).map(|j| batch.eigenvalue(j, s)), batch.shots());
        let c = obs.terms()[k].coeff;
        Ok((c * m, c * c * v / shots_per_term as f64))
    });
    let mut mean = obs.constant_offset();
    let mut var = 0.0;
    for p in parts {
        let (m, v) = p?;
        mean += m;
        var += v;
    }
    Ok(BaselineResult {
        method: "pauli".into(),
        mean,
        error: var.sqrt(),
        allocations: measured.iter().map(|&k| Allocation { members: vec![k], shots: shots_per_term }).collect(),
        total_shots: measured.len() * shots_per_term,
        convention: "uniform per string".into(),
        includes_covariance: false,
    })
}

/// One shared basis per group with `shots_per_group` shots; each group's
/// variance is that of the summed member eigenvalues, so covariances inside
/// a group are included.
pub fn grouped_pauli_estimate(
    state: &StateVector,
    obs: &PauliObservable,
    grouping: &PauliGrouping,
    shots_per_group: usize,
    seed: u64,
) -> Result<BaselineResult> {
    if obs.num_qubits() != state.num_qubits() {
        return Err(Error::DimensionMismatch { expected: state.num_qubits(), got: obs.num_qubits() });
    }
    if shots_per_group == 0 {
        return Err(Error::InvalidArgument("shots per group must be at least 1".into()));
    }
    check_grouping(obs, grouping)?;
    let parts = map_indexed(grouping.len(), |g| -> Result<(f64, f64)> {
        let group = &grouping.groups[g];
        let batch = sample_pauli_basis(state, &group.basis, shots_per_group, derive_seed(seed, g as u64))?;
        let (m, v) = mean_var(group_values(&batch, obs, &group.members), batch.shots());
        Ok((m, v / shots_per_group as f64))
    });
    let mut mean = obs.constant_offset();
    let mut var = 0.0;
    for p in parts {
        let (m, v) = p?;
        mean += m;
        var += v;
    }
    Ok(BaselineResult {
        method: "grouped".into(),
        mean,
        error: var.sqrt(),
        allocations: grouping
            .groups
            .iter()
            .map(|g| Allocation { members: g.members.clone(), shots: shots_per_group })
            .collect(),
        total_shots: grouping.len() * shots_per_group,
        convention: "uniform per group".into(),
        includes_covariance: true,
    })
}

/// Every non-identity term in exactly one group, and each member diagonal in
/// the group's basis.
fn check_grouping(obs: &PauliObservable, grouping: &PauliGrouping) -> Result<()> {
    let mut seen = vec![0usize; obs.len()];
    for g in &grouping.groups {
        if g.basis.len() != obs.num_qubits() {
            return Err(Error::DimensionMismatch { expected: obs.num_qubits(), got: g.basis.len() });
        }
        for &k in &g.members {
            let t = obs.terms().get(k).ok_or_else(|| Error::InvalidArgument(format!("group member {k} out of range")))?;
            let fits = t
                .string
                .labels()
                .iter()
                .zip(&g.basis)
                .all(|(&p, &b)| BasisLabel::from_pauli(p) == BasisLabel::Free || BasisLabel::from_pauli(p) == b);
            if !fits {
                return Err(Error::InvalidArgument(format!("term {} does not fit its group's basis", t.string)));
            }
            seen[k] += 1;
        }
    }
    for (k, &c) in seen.iter().enumerate() {
        let expected = usize::from(!obs.terms()[k].string.is_identity());
        if c != expected {
            return Err(Error::InvalidArgument(format!("term {} is covered {c} times", obs.terms()[k].string)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::group_qubitwise;
    use crate::sampling::pauli_basis_probabilities;
    use crate::simulator::exact_expectation;
    use num_complex::Complex64;

    fn obs(terms: &[(f64, &str)]) -> PauliObservable {
        PauliObservable::from_labels(terms).unwrap()
    }

    fn bell() -> StateVector {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::from_amplitudes(vec![Complex64::from(h), 0.0.into(), 0.0.into(), h.into()]).unwrap()
    }

    #[test]
    fn eigenstate_has_zero_error() {
        let r = pauli_estimate(&StateVector::zero(1), &obs(&[(1.0, "Z")]), 100, 1).unwrap();
        assert_eq!((r.mean, r.error, r.total_shots), (1.0, 0.0, 100));
    }

    #[test]
    fn x_on_zero_has_unit_variance() {
        let s = 10_000;
        let r = pauli_estimate(&StateVector::zero(1), &obs(&[(1.0, "X")]), s, 2).unwrap();
        assert!((r.error - (1.0 / s as f64).sqrt()).abs() < 1e-4);
        assert!(r.mean.abs() < 4.0 / (s as f64).sqrt());
    }

    #[test]
    fn identity_costs_nothing() {
        let o = PauliObservable::scaled_identity(1, 2.0);
        let r = pauli_estimate(&StateVector::zero(1), &o, 10, 0).unwrap();
        assert_eq!((r.mean, r.error, r.total_shots), (2.0, 0.0, 0));
        assert!(r.allocations.is_empty());
    }

    #[test]
    fn compatible_terms_share_one_group() {
        let o = obs(&[(1.0, "ZZ"), (0.5, "ZI"), (0.25, "IZ"), (0.3, "II")]);
        let g = group_qubitwise(&o);
        let r = grouped_pauli_estimate(&StateVector::zero(2), &o, &g, 500, 3).unwrap();
        assert_eq!(r.total_shots, 500);
        assert!((r.mean - 2.05).abs() < 1e-12);
        assert_eq!(r.error, 0.0);
    }

    #[test]
    fn bell_stabilizers_have_zero_variance() {
        let o = obs(&[(1.0, "ZZ"), (1.0, "XX")]);
        let g = group_qubitwise(&o);
        assert_eq!(g.len(), 2);
        let r = grouped_pauli_estimate(&bell(), &o, &g, 1000, 4).unwrap();
        assert_eq!(r.total_shots, 2000);
        assert!((r.mean - 2.0).abs() < 1e-12);
        assert_eq!(r.error, 0.0);
    }

    #[test]
    fn accounting_and_validation() {
        let o = obs(&[(1.0, "XIZ"), (0.5, "IYZ"), (0.2, "ZZZ"), (0.1, "III")]);
        let p = pauli_estimate(&StateVector::random(3, 1), &o, 300, 5).unwrap();
        assert_eq!(p.total_shots, 900);
        let g = group_qubitwise(&o);
        let r = grouped_pauli_estimate(&StateVector::random(3, 1), &o, &g, 300, 5).unwrap();
        assert_eq!(r.total_shots, 300 * g.len());
        let mut bad = g.clone();
        bad.groups[0].members.pop();
        assert!(grouped_pauli_estimate(&StateVector::random(3, 1), &o, &bad, 10, 0).is_err());
    }

    #[test]
    fn infinite_shot_limits_are_unbiased() {
        let o = obs(&[(0.8, "XIZ"), (-0.5, "IYZ"), (0.2, "ZZZ"), (0.4, "XYI"), (0.3, "III"), (-0.7, "IIZ")]);
        for seed in 0..5 {
            let state = StateVector::random(3, seed);
            let exact = exact_expectation(&state, &o).unwrap();
            let g = group_qubitwise(&o);
            let mut grouped = o.constant_offset();
            for group in &g.groups {
                let probs = pauli_basis_probabilities(&state, &group.basis).unwrap();
                let batch = BitstringBatch { num_qubits: 3, basis: group.basis.clone(), bits: (0..8).collect(), seed: 0 };
                for (s, p) in probs.iter().enumerate() {
                    grouped += p * group_values(&batch, &o, &group.members).nth(s).unwrap();
                }
            }
            assert!((grouped - exact).abs() < 1e-10);
            let mut plain = o.constant_offset();
            for t in o.non_identity_terms() {
                let basis: Vec<BasisLabel> = t.string.labels().iter().map(|&p| BasisLabel::from_pauli(p)).collect();
                let probs = pauli_basis_probabilities(&state, &basis).unwrap();
                let batch = BitstringBatch { num_qubits: 3, basis, bits: (0..8).collect(), seed: 0 };
                plain += t.coeff * (0..8).map(|s| probs[s] * batch.eigenvalue(s, &t.string)).sum::<f64>();
            }
            assert!((plain - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn finite_shot_means_within_error() {
        let o = obs(&[(0.8, "XIZ"), (-0.5, "IYZ"), (0.4, "XYI")]);
        let state = StateVector::random(3, 9);
        let exact = exact_expectation(&state, &o).unwrap();
        let p = pauli_estimate(&state, &o, 20_000, 1).unwrap();
        assert!((p.mean - exact).abs() < 4.0 * p.error);
        let g = grouped_pauli_estimate(&state, &o, &group_qubitwise(&o), 20_000, 1).unwrap();
        assert!((g.mean - exact).abs() < 4.0 * g.error);
    }
}
