//! Reduced-state tomography from stored POVM outcomes.
//!
//! Every batch `t` of an estimation run contributes the marginal effects
//! `Ξ_(t,m) = (⊗_{i∈A} Π^(t)_{m_i}) S_t / S` on a qubit subset `A`, which
//! together resolve the identity. The reduced state is reconstructed by
//! diluted likelihood iteration over this collective POVM.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector2};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::povm::{LocalPovm, PovmParams};
use crate::sampling::OutcomeBatch;
use crate::simulator::{partial_trace, validate_subset, DensityMatrix, StateVector};

/// Collective effects on a subset, each stored as `weight · |v⟩⟨v|`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveEffectSet {
    pub subset: Vec<usize>,
    pub weights: Vec<f64>,
    pub vectors: Vec<DVector<Complex64>>,
    /// Local effect vectors of each batch, one set per subset qubit.
    pub locals: Vec<Vec<[Vector2<Complex64>; 4]>>,
    /// Observed (or expected) count of each effect.
    pub counts: Vec<f64>,
    pub shots_per_batch: Vec<usize>,
}

impl CollectiveEffectSet {
    pub fn dim(&self) -> usize {
        1 << self.subset.len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_shots(&self) -> usize {
        self.shots_per_batch.iter().sum()
    }

    pub fn effect(&self, j: usize) -> DMatrix<Complex64> {
        let v = &self.vectors[j];
        v * v.adjoint() * Complex64::new(self.weights[j], 0.0)
    }

    pub fn effect_sum(&self) -> DMatrix<Complex64> {
        (0..self.len()).fold(DMatrix::zeros(self.dim(), self.dim()), |acc, j| acc + self.effect(j))
    }

    /// `Tr[ρ Ξ_j]`.
    pub fn probability(&self, rho: &DMatrix<Complex64>, j: usize) -> f64 {
        let v = &self.vectors[j];
        self.weights[j] * v.dotc(&(rho * v)).re
    }
}

/// `⊗_j π_j` with bit `j` of the index belonging to factor `j`.
fn tensor_vector(factors: &[Vector2<Complex64>]) -> DVector<Complex64> {
    let k = factors.len();
    DVector::from_fn(1 << k, |a, _| (0..k).fold(Complex64::new(1.0, 0.0), |acc, j| acc * factors[j][(a >> j) & 1]))
}

/// Marginal outcome index on `subset` (first subset qubit least significant).
fn marginal_index(m: &[u8], subset: &[usize]) -> usize {
    subset.iter().rev().fold(0, |acc, &q| acc * 4 + m[q] as usize)
}

fn effect_skeleton(params: &[PovmParams], shots: &[usize], subset: &[usize]) -> Result<CollectiveEffectSet> {
    if params.is_empty() {
        return Err(Error::Empty("batch history"));
    }
    if params.len() != shots.len() {
        return Err(Error::DimensionMismatch { expected: params.len(), got: shots.len() });
    }
    let n = params[0].num_qubits();
    if params.iter().any(|p| p.num_qubits() != n) {
        return Err(Error::InvalidArgument("batches disagree on the qubit count".into()));
    }
    let subset = validate_subset(subset, n)?;
    let total: usize = shots.iter().sum();
    if total == 0 {
        return Err(Error::Empty("outcome counts"));
    }
    let k = subset.len();
    let mut weights = Vec::with_capacity(params.len() << (2 * k));
    let mut vectors = Vec::with_capacity(weights.capacity());
    let mut all_locals = Vec::with_capacity(params.len());
    for (p, &s) in params.iter().zip(shots) {
        let locals: Vec<_> = subset.iter().map(|&q| LocalPovm::from_params(&p.rows[q]).vectors).collect();
        for m in 0..1usize << (2 * k) {
            let factors: Vec<_> = (0..k).map(|j| locals[j][(m >> (2 * j)) & 3]).collect();
            vectors.push(tensor_vector(&factors));
            weights.push(s as f64 / total as f64);
        }
        all_locals.push(locals);
    }
    let counts = vec![0.0; weights.len()];
    Ok(CollectiveEffectSet { subset, weights, vectors, locals: all_locals, counts, shots_per_batch: shots.to_vec() })
}

/// Collective effects and observed marginal counts; `params[t]` is the POVM
/// batch `t` was drawn under.
pub fn marginalize(batches: &[OutcomeBatch], params: &[PovmParams], subset: &[usize]) -> Result<CollectiveEffectSet> {
    if batches.len() != params.len() {
        return Err(Error::DimensionMismatch { expected: params.len(), got: batches.len() });
    }
    if let Some(b) = batches.iter().zip(params).find(|(b, p)| b.num_qubits != p.num_qubits()) {
        return Err(Error::DimensionMismatch { expected: b.1.num_qubits(), got: b.0.num_qubits });
    }
    let shots: Vec<usize> = batches.iter().map(|b| b.shots()).collect();
    let mut set = effect_skeleton(params, &shots, subset)?;
    let block = 1usize << (2 * set.subset.len());
    for (t, b) in batches.iter().enumerate() {
        for row in b.rows() {
            set.counts[t * block + marginal_index(row, &set.subset)] += 1.0;
        }
    }
    Ok(set)
}

/// Expected counts `S_t Tr[ρ ⊗Π^(t)_m]` for a known reduced state `rho` on
/// `subset`.
pub fn planted_effect_set(
    rho: &DensityMatrix,
    params: &[PovmParams],
    shots: &[usize],
    subset: &[usize],
) -> Result<CollectiveEffectSet> {
    let mut set = effect_skeleton(params, shots, subset)?;
    if rho.dim() != set.dim() {
        return Err(Error::DimensionMismatch { expected: set.dim(), got: rho.dim() });
    }
    let total = set.total_shots() as f64;
    for j in 0..set.len() {
        set.counts[j] = total * set.probability(rho.matrix(), j).max(0.0);
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MleOptions {
    /// Dilution `ε` in `I + ε (R − I)`.
    pub dilution: f64,
    /// Halve `ε` and retry when a step lowers the likelihood.
    pub adaptive: bool,
    /// Factor applied to `ε` after an accepted step (adaptive mode only).
    pub growth: f64,
    pub max_dilution: f64,
    /// Stop once the per-shot log-likelihood gain falls below this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { dilution: 0.1, adaptive: true, growth: 2.0, max_dilution: 1.9, tol: 1e-15, max_iters: 20_000 }
    }
}

impl MleOptions {
    /// No gain cutoff, for exact frequencies.
    ///
    /// Near a pure target the population outside the support decays only as
    /// `1/t`, and per-step gains drop below double precision long before the
    /// state is resolved, so the iteration budget is the only useful stop.
    pub fn exact(max_iters: usize) -> Self {
        Self { tol: f64::NEG_INFINITY, max_iters, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleResult {
    pub rho: DensityMatrix,
    pub iterations: usize,
    /// `Σ_j (f_j / S) ln Tr[ρ Ξ_j]`.
    pub log_likelihood: f64,
    pub converged: bool,
    pub dilution: f64,
}

/// Batch-wise contraction of `ρ` against product effects, one qubit at a
/// time. Tensors hold one base-4 digit per qubit: `r + 2c` for a matrix
/// entry `(r, c)`, or an outcome `a`.
struct Contractor {
    k: usize,
    /// Position in the column-major matrix of each digit string `Σ (r_i + 2c_i) 4^i`.
    place: Vec<usize>,
    /// `tables[t][i][a][r + 2c] = (π_a)_c (π_a)_r^*` for batch `t`, qubit `i`.
    tables: Vec<Vec<[[Complex64; 4]; 4]>>,
    adjoints: Vec<Vec<[[Complex64; 4]; 4]>>,
    weights: Vec<f64>,
    freq: Vec<f64>,
    x: Vec<Complex64>,
    y: Vec<Complex64>,
}

impl Contractor {
    fn new(set: &CollectiveEffectSet, total: f64) -> Self {
        let k = set.subset.len();
        let d = set.dim();
        let place = (0..1usize << (2 * k))
            .map(|s| {
                let (mut r, mut c) = (0, 0);
                for i in 0..k {
                    let digit = (s >> (2 * i)) & 3;
                    r |= (digit & 1) << i;
                    c |= (digit >> 1) << i;
                }
                r + d * c
            })
            .collect();
        let tables = set
            .locals
            .iter()
            .map(|locals| {
                locals
                    .iter()
                    .map(|v| {
                        let mut m = [[Complex64::new(0.0, 0.0); 4]; 4];
                        for (a, row) in m.iter_mut().enumerate() {
                            for (s, x) in row.iter_mut().enumerate() {
                                *x = v[a][s >> 1] * v[a][s & 1].conj();
                            }
                        }
                        m
                    })
                    .collect()
            })
            .collect::<Vec<Vec<_>>>();
        let adjoints = tables
            .iter()
            .map(|ms| {
                ms.iter()
                    .map(|m| {
                        let mut h = [[Complex64::new(0.0, 0.0); 4]; 4];
                        for (a, row) in m.iter().enumerate() {
                            for (s, x) in row.iter().enumerate() {
                                h[s][a] = x.conj();
                            }
                        }
                        h
                    })
                    .collect()
            })
            .collect();
        let block = 1usize << (2 * k);
        let weights = (0..set.locals.len()).map(|t| set.weights[t * block]).collect();
        let freq = set.counts.iter().map(|&f| f / total).collect();
        Self { k, place, tables, adjoints, weights, freq, x: vec![Complex64::new(0.0, 0.0); block], y: vec![Complex64::new(0.0, 0.0); block] }
    }

    /// Replace digit `i` of `x` through `m`.
    fn sweep(x: &mut Vec<Complex64>, y: &mut Vec<Complex64>, i: usize, m: &[[Complex64; 4]; 4]) {
        let stride = 1usize << (2 * i);
        for hi in (0..x.len()).step_by(4 * stride) {
            for lo in 0..stride {
                let base = hi + lo;
                let v = [x[base], x[base + stride], x[base + 2 * stride], x[base + 3 * stride]];
                for out in 0..4 {
                    y[base + out * stride] = m[out][0] * v[0] + m[out][1] * v[1] + m[out][2] * v[2] + m[out][3] * v[3];
                }
            }
        }
        std::mem::swap(x, y);
    }

    fn probabilities(&mut self, rho: &DMatrix<Complex64>, q: &mut [f64]) {
        let block = self.place.len();
        let rs = rho.as_slice();
        for (t, qt) in q.chunks_mut(block).enumerate() {
            for (x, &p) in self.x.iter_mut().zip(&self.place) {
                *x = rs[p];
            }
            for i in 0..self.k {
                Self::sweep(&mut self.x, &mut self.y, i, &self.tables[t][i]);
            }
            for (qj, x) in qt.iter_mut().zip(&self.x) {
                *qj = self.weights[t] * x.re;
            }
        }
    }

    fn log_likelihood(&self, q: &[f64]) -> f64 {
        let mut l = 0.0;
        for (&f, &qj) in self.freq.iter().zip(q) {
            if f > 0.0 {
                if qj <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                l += f * qj.ln();
            }
        }
        l
    }

    /// `R = Σ_j (f_j / q_j) Ξ_j`.
    fn r_operator(&mut self, q: &[f64], r: &mut DMatrix<Complex64>) {
        let block = self.place.len();
        r.fill(Complex64::new(0.0, 0.0));
        for t in 0..self.tables.len() {
            for j in 0..block {
                let (f, qj) = (self.freq[t * block + j], q[t * block + j]);
                self.x[j] = Complex64::new(if f > 0.0 { f / qj * self.weights[t] } else { 0.0 }, 0.0);
            }
            for i in 0..self.k {
                Self::sweep(&mut self.x, &mut self.y, i, &self.adjoints[t][i]);
            }
            let rs = r.as_mut_slice();
            for (x, &p) in self.x.iter().zip(&self.place) {
                rs[p] += x;
            }
        }
    }
}

/// Rounding allowance on the per-shot log-likelihood.
const LL_SLACK: f64 = 1e-14;

/// Diluted iteration `ρ ← A ρ A / Tr`, `A = I + ε (R − I)`, from `I/d`.
pub fn mle_reconstruct(set: &CollectiveEffectSet, opts: &MleOptions) -> Result<MleResult> {
    let total: f64 = set.counts.iter().sum();
    if set.is_empty() || !(total > 0.0) {
        return Err(Error::Empty("outcome counts"));
    }
    if !(opts.dilution > 0.0) || !(opts.max_dilution >= opts.dilution) {
        return Err(Error::InvalidArgument(format!(
            "dilution {} must be positive and at most {}",
            opts.dilution, opts.max_dilution
        )));
    }
    let d = set.dim();
    let mut packed = Contractor::new(set, total);
    let mut rho = DensityMatrix::maximally_mixed(set.subset.len()).matrix().clone();
    let mut q = vec![0.0; set.len()];
    let mut cand_q = q.clone();
    let mut r = DMatrix::<Complex64>::zeros(d, d);
    let (mut a, mut tmp, mut cand) = (r.clone(), r.clone(), r.clone());
    packed.probabilities(&rho, &mut q);
    let mut ll = packed.log_likelihood(&q);
    let mut eps = opts.dilution;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        packed.r_operator(&q, &mut r);
        let cand_ll = loop {
            // A is Hermitian, so A ρ A† = A ρ A
            a.copy_from(&r);
            a *= Complex64::new(eps, 0.0);
            for i in 0..d {
                a[(i, i)] += 1.0 - eps;
            }
            a.mul_to(&rho, &mut tmp);
            tmp.mul_to(&a, &mut cand);
            let tr = cand.trace().re;
            for i in 0..d {
                for j in 0..=i {
                    let h = (cand[(i, j)] + cand[(j, i)].conj()) * 0.5 / tr;
                    cand[(i, j)] = h;
                    cand[(j, i)] = h.conj();
                }
            }
            packed.probabilities(&cand, &mut cand_q);
            let l = packed.log_likelihood(&cand_q);
            if !opts.adaptive || l - ll >= -LL_SLACK || eps < 1e-12 {
                break l;
            }
            eps /= 2.0;
        };
        let gain = cand_ll - ll;
        if gain < -LL_SLACK && opts.adaptive {
            // no dilution improves on the current iterate
            converged = true;
            break;
        }
        std::mem::swap(&mut rho, &mut cand);
        ll = cand_ll;
        std::mem::swap(&mut q, &mut cand_q);
        if gain < opts.tol {
            converged = true;
            break;
        }
        if opts.adaptive {
            eps = (eps * opts.growth).min(opts.max_dilution);
        }
    }
    Ok(MleResult { rho: DensityMatrix::from_matrix_unchecked(rho), iterations, log_likelihood: ll, converged, dilution: eps })
}

fn check_state(rho: &DensityMatrix, tol: f64) -> Result<()> {
    DensityMatrix::from_matrix(rho.matrix().clone(), tol).map(|_| ())
}

fn hermitian_eigen(m: &DMatrix<Complex64>) -> SymmetricEigen<Complex64, nalgebra::Dyn> {
    SymmetricEigen::new((m + m.adjoint()) * Complex64::new(0.5, 0.0))
}

fn sqrt_psd(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let e = hermitian_eigen(m);
    let s = DMatrix::from_diagonal(&e.eigenvalues.map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0)));
    &e.eigenvectors * s * e.eigenvectors.adjoint()
}

/// Leading eigenvector when `m` is pure to within `1e-12`.
fn pure_vector(m: &DMatrix<Complex64>) -> Option<DVector<Complex64>> {
    let e = hermitian_eigen(m);
    let (i, &top) = e.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    (top >= 1.0 - 1e-12).then(|| e.eigenvectors.column(i).into_owned())
}

/// `(Tr √(√ρ σ √ρ))²`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), got: sigma.dim() });
    }
    check_state(rho, 1e-8)?;
    check_state(sigma, 1e-8)?;
    let (a, b) = (rho.matrix(), sigma.matrix());
    let f = if let Some(v) = pure_vector(b) {
        v.dotc(&(a * &v)).re
    } else if let Some(v) = pure_vector(a) {
        v.dotc(&(b * &v)).re
    } else {
        let s = sqrt_psd(a);
        let m = &s * b * &s;
        let root: f64 = hermitian_eigen(&m).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
        root * root
    };
    Ok(f.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub subset: Vec<usize>,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub fidelity: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSummary {
    pub k: usize,
    pub evaluated: usize,
    pub total_subsets: usize,
    pub mean_infidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KwiseReport {
    pub subsets: Vec<SubsetReport>,
    pub summary: Vec<KSummary>,
    /// Subsets sampled per `k` once all-subset enumeration is off.
    pub subset_cap: usize,
}

impl KwiseReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.subsets {
            let ids: Vec<String> = r.subset.iter().map(|q| q.to_string()).collect();
            let _ = writeln!(
                s,
                "subset {} iterations {} log_likelihood {:e} fidelity {:e} converged {}",
                ids.join(","),
                r.iterations,
                r.log_likelihood,
                r.fidelity,
                r.converged
            );
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("k,evaluated,total_subsets,mean_infidelity\n");
        for k in &self.summary {
            let _ = writeln!(s, "{},{},{},{:e}", k.k, k.evaluated, k.total_subsets, k.mean_infidelity);
        }
        s
    }

    pub fn mean_infidelity(&self, k: usize) -> Option<f64> {
        self.summary.iter().find(|s| s.k == k).map(|s| s.mean_infidelity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KwiseOptions {
    pub mle: MleOptions,
    /// All subsets are used up to this size.
    pub enumerate_up_to: usize,
    pub subset_cap: usize,
    pub seed: u64,
}

impl Default for KwiseOptions {
    fn default() -> Self {
        Self { mle: MleOptions::default(), enumerate_up_to: 4, subset_cap: 32, seed: 0 }
    }
}

/// Where the counts come from.
#[derive(Debug, Clone, Copy)]
pub enum Counts<'a> {
    Observed(&'a [OutcomeBatch]),
    /// Expected counts from the true state.
    Exact(&'a [usize]),
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] < n - k + i) else { break };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
    out
}

/// Average infidelity of reconstructed `k`-qubit marginals for every
/// `k ≤ max_k`, against the partial traces of `state`.
pub fn kwise_report(
    state: &StateVector,
    params: &[PovmParams],
    counts: Counts<'_>,
    max_k: usize,
    opts: &KwiseOptions,
) -> Result<KwiseReport> {
    let n = state.num_qubits();
    if max_k == 0 || max_k > n {
        return Err(Error::InvalidArgument(format!("k = {max_k} must lie in 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut jobs = Vec::new();
    let mut summary = Vec::new();
    for k in 1..=max_k {
        let mut all = combinations(n, k);
        let total_subsets = all.len();
        if k > opts.enumerate_up_to && all.len() > opts.subset_cap {
            all.shuffle(&mut rng);
            all.truncate(opts.subset_cap);
            all.sort();
        }
        summary.push(KSummary { k, evaluated: all.len(), total_subsets, mean_infidelity: 0.0 });
        jobs.extend(all);
    }
    let results = map_indexed(jobs.len(), |i| -> Result<SubsetReport> {
        let subset = &jobs[i];
        let truth = partial_trace(state, subset)?;
        let set = match counts {
            Counts::Observed(b) => marginalize(b, params, subset)?,
            Counts::Exact(shots) => planted_effect_set(&truth, params, shots, subset)?,
        };
        let r = mle_reconstruct(&set, &opts.mle)?;
        Ok(SubsetReport {
            subset: subset.clone(),
            iterations: r.iterations,
            log_likelihood: r.log_likelihood,
            fidelity: fidelity(&r.rho, &truth)?,
            converged: r.converged,
        })
    });
    let subsets = results.into_iter().collect::<Result<Vec<_>>>()?;
    for s in summary.iter_mut() {
        let inf: Vec<f64> = subsets.iter().filter(|r| r.subset.len() == s.k).map(|r| 1.0 - r.fidelity).collect();
        s.mean_infidelity = inf.iter().sum::<f64>() / inf.len() as f64;
    }
    Ok(KwiseReport { subsets, summary, subset_cap: opts.subset_cap })
}

/// `|ψ⟩⟨ψ|` as a density matrix.
pub fn pure_density(state: &StateVector) -> DensityMatrix {
    let v = DVector::from_column_slice(state.amplitudes());
    DensityMatrix::from_matrix_unchecked(&v * v.adjoint())
}

/// Sum of the collective effects minus the identity, max-abs entry.
pub fn completeness_error(set: &CollectiveEffectSet) -> f64 {
    let d = set.dim();
    (set.effect_sum() - DMatrix::<Complex64>::identity(d, d)).iter().map(|c| c.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::povm::{sic_params, SicVariant};
    use crate::sampling::sample_povm;
    use rand::Rng;

    fn sic1(n: usize) -> PovmParams {
        sic_params(SicVariant::One, n)
    }

    fn random_params(rng: &mut ChaCha8Rng, n: usize) -> PovmParams {
        loop {
            let rows = (0..n).map(|_| [0; 8].map(|_| rng.gen_range(0.1..0.9))).collect();
            let p = PovmParams::new(rows, 0.05).unwrap();
            if p.local_povms().iter().all(|l| crate::povm::dual_table(l).is_ok()) {
                return p;
            }
        }
    }

    #[test]
    fn collective_effects_resolve_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params: Vec<PovmParams> = (0..4).map(|_| random_params(&mut rng, 3)).collect();
        let shots = [1000, 1000, 2000, 1234];
        for subset in [vec![0], vec![2, 0], vec![0, 1, 2]] {
            let set = effect_skeleton(&params, &shots, &subset).unwrap();
            assert!(completeness_error(&set) < 1e-10);
        }
        assert!(effect_skeleton(&params, &shots, &[]).is_err());
    }

    #[test]
    fn full_subset_counts_match_histogram() {
        let p = sic1(2);
        let batch = sample_povm(&StateVector::random(2, 3), &p.local_povms(), 2000, 1, "x").unwrap();
        let set = marginalize(std::slice::from_ref(&batch), &[p], &[0, 1]).unwrap();
        let mut hist = vec![0.0; 16];
        for row in batch.rows() {
            hist[crate::sampling::outcome_index(row)] += 1.0;
        }
        assert_eq!(set.counts, hist);
        assert!(set.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn planted_counts_carry_batch_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params: Vec<PovmParams> = (0..3).map(|_| random_params(&mut rng, 2)).collect();
        let shots = [1000, 2000, 3000];
        let state = StateVector::random(2, 4);
        let rho = partial_trace(&state, &[1]).unwrap();
        let set = planted_effect_set(&rho, &params, &shots, &[1]).unwrap();
        for (t, &s) in shots.iter().enumerate() {
            let mass: f64 = set.counts[t * 4..(t + 1) * 4].iter().sum();
            assert!((mass - s as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn marginal_of_product_state_is_independent() {
        let state = StateVector::product(&StateVector::random(1, 1), &StateVector::random(1, 2));
        let p = sic1(2);
        let shots = 40_000;
        let batch = sample_povm(&state, &p.local_povms(), shots, 5, "x").unwrap();
        let joint = marginalize(std::slice::from_ref(&batch), std::slice::from_ref(&p), &[0, 1]).unwrap().counts;
        let a = marginalize(std::slice::from_ref(&batch), std::slice::from_ref(&p), &[0]).unwrap().counts;
        let b = marginalize(&[batch], &[p], &[1]).unwrap().counts;
        // χ² test of independence with 9 degrees of freedom (0.999 quantile 27.88)
        let mut chi2 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let e = a[i] * b[j] / shots as f64;
                chi2 += (joint[i + 4 * j] - e).powi(2) / e;
            }
        }
        assert!(chi2 < 27.88, "{chi2}");
    }

    #[test]
    fn mixed_state_is_a_fixed_point() {
        let rho = DensityMatrix::maximally_mixed(2);
        let set = planted_effect_set(&rho, &[sic_params(SicVariant::Two, 2)], &[1000], &[0, 1]).unwrap();
        let r = mle_reconstruct(&set, &MleOptions::default()).unwrap();
        assert!((r.rho.matrix() - rho.matrix()).iter().all(|c| c.norm() < 1e-12));
        assert!(r.iterations <= 2);
    }

    #[test]
    fn recovers_zero_state_under_sic1() {
        let rho = pure_density(&StateVector::zero(1));
        let set = planted_effect_set(&rho, &[sic1(1)], &[1000], &[0]).unwrap();
        let r = mle_reconstruct(&set, &MleOptions::exact(300_000)).unwrap();
        assert!(1.0 - fidelity(&r.rho, &rho).unwrap() < 1e-6);
        assert!((r.rho.matrix() - rho.matrix()).iter().all(|c| c.norm() < 1e-6));
    }

    #[test]
    fn recovers_planted_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in 1..=3 {
            let params: Vec<PovmParams> = (0..3).map(|_| random_params(&mut rng, k)).collect();
            let subset: Vec<usize> = (0..k).collect();
            for seed in 0..2 {
                // well inside the state space, so convergence is geometric
                let reduced = partial_trace(&StateVector::random(k + 2, seed), &subset).unwrap();
                let mixed = DensityMatrix::maximally_mixed(k);
                let m = reduced.matrix() * Complex64::new(0.8, 0.0) + mixed.matrix() * Complex64::new(0.2, 0.0);
                let rho = DensityMatrix::from_matrix(m, 1e-12).unwrap();
                let set = planted_effect_set(&rho, &params, &[1000, 2000, 3000], &subset).unwrap();
                let r = mle_reconstruct(&set, &MleOptions::exact(20_000)).unwrap();
                let inf = 1.0 - fidelity(&r.rho, &rho).unwrap();
                assert!(inf < 1e-6, "k={k}: {inf} after {}", r.iterations);
            }
        }
    }

    #[test]
    fn likelihood_never_decreases() {
        let p = sic1(2);
        let state = StateVector::random(2, 6);
        let batch = sample_povm(&state, &p.local_povms(), 3000, 2, "x").unwrap();
        let set = marginalize(&[batch], &[p], &[0, 1]).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for iters in 1..40 {
            let r = mle_reconstruct(&set, &MleOptions { max_iters: iters, ..Default::default() }).unwrap();
            assert!(r.log_likelihood >= prev - 1e-12);
            prev = r.log_likelihood;
            assert!(r.rho.min_eigenvalue() > -1e-10);
            assert!((r.rho.trace() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn fidelity_examples() {
        let zero = pure_density(&StateVector::zero(1));
        let one = pure_density(&StateVector::from_amplitudes(vec![0.0.into(), 1.0.into()]).unwrap());
        let mixed = DensityMatrix::maximally_mixed(1);
        assert!((fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-12);
        assert!(fidelity(&zero, &one).unwrap() < 1e-12);
        assert!((fidelity(&zero, &mixed).unwrap() - 0.5).abs() < 1e-12);
        for seed in 0..5 {
            let a = partial_trace(&StateVector::random(4, seed), &[0, 1]).unwrap();
            let b = partial_trace(&StateVector::random(4, seed + 10), &[1, 3]).unwrap();
            let (f, g) = (fidelity(&a, &b).unwrap(), fidelity(&b, &a).unwrap());
            assert!((f - g).abs() < 1e-10);
            assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-10);
        }
        let bad = DensityMatrix::from_matrix_unchecked(DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(1.5, 0.0),
            Complex64::new(-0.5, 0.0),
        ])));
        assert!(fidelity(&bad, &mixed).is_err());
    }

    #[test]
    fn product_state_kwise_exact() {
        let state = StateVector::zero(4);
        let params = vec![sic1(4), sic_params(SicVariant::Two, 4)];
        let opts = KwiseOptions { mle: MleOptions::exact(400_000), ..Default::default() };
        let report = kwise_report(&state, &params, Counts::Exact(&[1000, 2000]), 2, &opts).unwrap();
        assert_eq!(report.summary.len(), 2);
        assert_eq!(report.summary[1].evaluated, 6);
        for s in &report.summary {
            assert!(s.mean_infidelity < 1e-6, "{s:?}");
        }
        assert!(kwise_report(&state, &params, Counts::Exact(&[1, 1]), 5, &KwiseOptions::default()).is_err());
    }

    #[test]
    fn infidelity_shrinks_with_shots() {
        let state = StateVector::random(3, 12);
        let p = sic1(3);
        let mut means = Vec::new();
        for shots in [1000, 100_000] {
            let mut acc = 0.0;
            for seed in 0..5 {
                let batch = sample_povm(&state, &p.local_povms(), shots, seed, "x").unwrap();
                let r = kwise_report(&state, std::slice::from_ref(&p), Counts::Observed(&[batch]), 2, &KwiseOptions::default())
                    .unwrap();
                acc += r.mean_infidelity(2).unwrap();
                assert!(r.subsets.iter().all(|s| s.fidelity <= 1.0 && s.fidelity >= 0.0));
            }
            means.push(acc / 5.0);
        }
        assert!(means[1] < means[0], "{means:?}");
    }

    #[test]
    fn subset_sampling_is_capped() {
        assert_eq!(combinations(5, 2).len(), 10);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        let state = StateVector::zero(6);
        let opts = KwiseOptions { enumerate_up_to: 1, subset_cap: 4, ..Default::default() };
        let r = kwise_report(&state, &[sic1(6)], Counts::Exact(&[100]), 2, &opts).unwrap();
        assert_eq!(r.summary[1].evaluated, 4);
        assert_eq!(r.summary[1].total_subsets, 15);
        let again = kwise_report(&state, &[sic1(6)], Counts::Exact(&[100]), 2, &opts).unwrap();
        assert_eq!(r, again);
    }
}
