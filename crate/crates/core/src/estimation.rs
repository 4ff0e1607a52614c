//! Outcome weights, Monte Carlo estimates, the second-moment gradient and
//! inverse-variance mixing.
//!
//! For a product POVM with per-qubit dual tables `b`, an observable
//! `O = Σ_k c_k P_k` is reproduced by the outcome weights
//! `ω(m) = Σ_k c_k Π_i b_i[k_i][m_i]`, so the sample mean of `ω` over
//! outcomes drawn from the POVM is an unbiased estimate of `⟨O⟩`.
//!
//! Identity factors use the exact value 1 instead of the numerically solved
//! row 0 of the table.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::PauliObservable;
use crate::parallel::{map_chunks, CHUNK};
use crate::povm::{cross_dual_table, dual_table, CrossDualTable, DualTable, LocalPovm, PovmParams};
use crate::sampling::{outcome_from_index, OutcomeBatch};

#[derive(Debug, Clone)]
struct Term {
    coeff: f64,
    /// `(qubit, Pauli index in 1..=3)` for each non-identity factor.
    support: Vec<(usize, usize)>,
}

/// Observable plus per-qubit dual tables: everything needed to weight
/// outcomes.
#[derive(Debug, Clone)]
pub struct WeightContext {
    num_qubits: usize,
    terms: Vec<Term>,
    tables: Vec<DualTable>,
    /// For each qubit, the `(term, position in support)` pairs touching it.
    by_qubit: Vec<Vec<(usize, usize)>>,
}

impl WeightContext {
    /// Dual tables computed from `params`.
    pub fn new(obs: &PauliObservable, params: &PovmParams) -> Result<Self> {
        let tables = params.local_povms().iter().map(dual_table).collect::<Result<Vec<_>>>()?;
        Self::from_tables(obs, tables)
    }

    pub fn from_povms(obs: &PauliObservable, povms: &[LocalPovm]) -> Result<Self> {
        let tables = povms.iter().map(dual_table).collect::<Result<Vec<_>>>()?;
        Self::from_tables(obs, tables)
    }

    pub fn from_tables(obs: &PauliObservable, tables: Vec<DualTable>) -> Result<Self> {
        let n = obs.num_qubits();
        if tables.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: tables.len() });
        }
        let mut by_qubit = vec![Vec::new(); n];
        let terms: Vec<Term> = obs
            .terms()
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let support: Vec<(usize, usize)> = t
                    .string
                    .labels()
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.index() != 0)
                    .map(|(q, p)| (q, p.index()))
                    .collect();
                for (pos, &(q, _)) in support.iter().enumerate() {
                    by_qubit[q].push((k, pos));
                }
                Term { coeff: t.coeff, support }
            })
            .collect();
        Ok(Self { num_qubits: n, terms, tables, by_qubit })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn tables(&self) -> &[DualTable] {
        &self.tables
    }

    /// `Π_i b_i[k_i][m_i]` for term `k` (1 for identity strings).
    fn term_value(&self, k: usize, m: &[u8]) -> f64 {
        self.terms[k].support.iter().map(|&(q, a)| self.tables[q].b[a][m[q] as usize]).product()
    }

    pub fn omega(&self, m: &[u8]) -> f64 {
        (0..self.terms.len()).map(|k| self.terms[k].coeff * self.term_value(k, m)).sum()
    }
}

pub fn omega(m: &[u8], ctx: &WeightContext) -> f64 {
    ctx.omega(m)
}

/// One batch's estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub mean: f64,
    /// Variance of the mean: unbiased sample variance of `ω` over `S`.
    /// Infinite for a single shot.
    pub variance: f64,
    pub second_moment: f64,
    pub shots: usize,
    pub params: Option<PovmParams>,
}

/// Mean, variance of the mean and second moment of the values produced by
/// `value(s)` for `s in 0..n`, reduced in chunk order.
fn moments<F>(n: usize, value: F) -> (f64, f64, f64)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    // shifting by the first value keeps constant data exactly constant
    let shift = value(0);
    let parts = map_chunks(n, CHUNK, |a, b| {
        let mut acc = [0.0; 3];
        for s in a..b {
            let v = value(s);
            let d = v - shift;
            acc[0] += d;
            acc[1] += d * d;
            acc[2] += v * v;
        }
        acc
    });
    let mut acc = [0.0; 3];
    for p in parts {
        for i in 0..3 {
            acc[i] += p[i];
        }
    }
    let s = n as f64;
    let mean = shift + acc[0] / s;
    let variance = if n > 1 { ((acc[1] - acc[0] * acc[0] / s) / (s - 1.0)).max(0.0) / s } else { f64::INFINITY };
    (mean, variance, acc[2] / s)
}

pub fn estimate(batch: &OutcomeBatch, ctx: &WeightContext) -> Result<EstimateRecord> {
    if batch.shots() == 0 {
        return Err(Error::Empty("outcome batch"));
    }
    if batch.num_qubits != ctx.num_qubits {
        return Err(Error::DimensionMismatch { expected: ctx.num_qubits, got: batch.num_qubits });
    }
    let (mean, variance, second_moment) = moments(batch.shots(), |s| ctx.omega(batch.row(s)));
    Ok(EstimateRecord { mean, variance, second_moment, shots: batch.shots(), params: None })
}

/// `(Σ p_m ω_m, Σ p_m ω_m² − mean²)` over a full `4^N` probability table.
pub fn exhaustive_moments(probs: &[f64], ctx: &WeightContext) -> Result<(f64, f64)> {
    let n = ctx.num_qubits;
    if probs.len() != 1usize << (2 * n) {
        return Err(Error::DimensionMismatch { expected: 1 << (2 * n), got: probs.len() });
    }
    let (mut mean, mut second) = (0.0, 0.0);
    for (i, &p) in probs.iter().enumerate() {
        let w = ctx.omega(&outcome_from_index(i, n));
        mean += p * w;
        second += p * w * w;
    }
    Ok((mean, second - mean * mean))
}

/// Finite-difference gradient of `⟨ω²⟩` with respect to the flat POVM
/// parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    pub values: Vec<f64>,
    /// `⟨ω²⟩` at the unperturbed parameters.
    pub second_moment: f64,
    /// Reweighted `⟨ω′²⟩` for each perturbed parameter.
    pub perturbed: Vec<f64>,
    /// Signed step used for each parameter (negative at the upper clamp,
    /// zero when no usable perturbation exists).
    pub steps: Vec<f64>,
}

impl Gradient {
    pub fn inf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

struct Perturbation {
    qubit: usize,
    step: f64,
    b: DualTable,
    d: CrossDualTable,
}

fn perturb(params: &PovmParams, k: usize, h: f64, old: &LocalPovm) -> Option<Perturbation> {
    let qubit = k / 8;
    let x = params.get(k);
    let (lo, hi) = (params.delta, 1.0 - params.delta);
    let forward = x + h <= hi + 1e-15;
    let mut order = vec![if forward { h } else { -h }];
    let other = -order[0];
    if (lo - 1e-15..=hi + 1e-15).contains(&(x + other)) {
        order.push(other);
    }
    order.into_iter().find_map(|step| {
        let mut row = params.rows[qubit];
        row[k % 8] = x + step;
        let new = LocalPovm::from_params(&row);
        let b = dual_table(&new).ok()?;
        let d = cross_dual_table(&new, old).ok()?;
        Some(Perturbation { qubit, step, b, d })
    })
}

fn gradient_engine<F>(n_items: usize, ctx: &WeightContext, params: &PovmParams, h: f64, item: F) -> Result<Gradient>
where
    F: Fn(usize, &mut [u8]) -> f64 + Sync + Send,
{
    let n = ctx.num_qubits;
    if params.num_qubits() != n {
        return Err(Error::DimensionMismatch { expected: n, got: params.num_qubits() });
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step {h} must be positive")));
    }
    let olds = params.local_povms();
    let perts: Vec<Option<Perturbation>> = (0..params.num_params()).map(|k| perturb(params, k, h, &olds[k / 8])).collect();
    let np = perts.len();

    let parts = map_chunks(n_items, CHUNK, |a, b| {
        let mut acc = vec![0.0; np + 1];
        let mut m = vec![0u8; n];
        let mut full = vec![0.0; ctx.terms.len()];
        let mut excl: Vec<Vec<f64>> = ctx.terms.iter().map(|t| vec![0.0; t.support.len()]).collect();
        let mut coef = vec![[0.0f64; 4]; n];
        for s in a..b {
            let w = item(s, &mut m);
            if w == 0.0 {
                continue;
            }
            // full products and leave-one-out products via prefix/suffix scans
            let mut omega = 0.0;
            for (k, t) in ctx.terms.iter().enumerate() {
                let e = &mut excl[k];
                let mut prefix = 1.0;
                for (pos, &(q, lab)) in t.support.iter().enumerate() {
                    e[pos] = prefix;
                    prefix *= ctx.tables[q].b[lab][m[q] as usize];
                }
                full[k] = prefix;
                let mut suffix = 1.0;
                for (pos, &(q, lab)) in t.support.iter().enumerate().rev() {
                    e[pos] *= suffix;
                    suffix *= ctx.tables[q].b[lab][m[q] as usize];
                }
                omega += t.coeff * prefix;
            }
            // ω as a function of the Pauli label's dual row on qubit l:
            // ω = coef[l][0] + Σ_a coef[l][a] b_l[a][m_l]
            for l in 0..n {
                let mut c = [omega, 0.0, 0.0, 0.0];
                for &(k, pos) in &ctx.by_qubit[l] {
                    let t = &ctx.terms[k];
                    c[0] -= t.coeff * full[k];
                    c[t.support[pos].1] += t.coeff * excl[k][pos];
                }
                coef[l] = c;
            }
            for (k, p) in perts.iter().enumerate() {
                let Some(p) = p else { continue };
                let c = &coef[p.qubit];
                let ml = m[p.qubit] as usize;
                let mut v = 0.0;
                for r in 0..4 {
                    let wr = c[0] + c[1] * p.b.b[1][r] + c[2] * p.b.b[2][r] + c[3] * p.b.b[3][r];
                    v += p.d.d[r][ml] * wr * wr;
                }
                acc[k] += w * v;
            }
            acc[np] += w * omega * omega;
        }
        acc
    });
    let mut acc = vec![0.0; np + 1];
    for p in parts {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    let second_moment = acc[np];
    let mut values = vec![0.0; np];
    let mut steps = vec![0.0; np];
    let mut perturbed = vec![second_moment; np];
    for (k, p) in perts.iter().enumerate() {
        if let Some(p) = p {
            perturbed[k] = acc[k];
            steps[k] = p.step;
            values[k] = (acc[k] - second_moment) / p.step;
        }
    }
    Ok(Gradient { values, second_moment, perturbed, steps })
}

/// Gradient of `⟨ω²⟩` from one batch drawn under `params`, reusing the same
/// outcomes for every perturbed POVM.
pub fn second_moment_gradient(batch: &OutcomeBatch, ctx: &WeightContext, params: &PovmParams, h: f64) -> Result<Gradient> {
    let s = batch.shots();
    if s == 0 {
        return Err(Error::Empty("outcome batch"));
    }
    if batch.num_qubits != ctx.num_qubits {
        return Err(Error::DimensionMismatch { expected: ctx.num_qubits, got: batch.num_qubits });
    }
    let w = 1.0 / s as f64;
    gradient_engine(s, ctx, params, h, |i, m| {
        m.copy_from_slice(batch.row(i));
        w
    })
}

/// Same reweighting with exact outcome probabilities in place of a batch.
pub fn second_moment_gradient_exhaustive(
    probs: &[f64],
    ctx: &WeightContext,
    params: &PovmParams,
    h: f64,
) -> Result<Gradient> {
    let n = ctx.num_qubits;
    if probs.len() != 1usize << (2 * n) {
        return Err(Error::DimensionMismatch { expected: 1 << (2 * n), got: probs.len() });
    }
    gradient_engine(probs.len(), ctx, params, h, |i, m| {
        m.copy_from_slice(&outcome_from_index(i, n));
        probs[i]
    })
}

/// Mixed estimate over a sequence of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningEstimate {
    pub mean: f64,
    pub variance: f64,
    /// Running sum of `1 / V̄_t`.
    pub inverse_variance: f64,
    /// Set once a zero-variance record arrives; later records are ignored.
    pub exact: bool,
    pub history: Vec<EstimateRecord>,
}

impl RunningEstimate {
    pub fn new(first: EstimateRecord) -> Self {
        let exact = first.variance == 0.0;
        Self {
            mean: first.mean,
            variance: first.variance,
            inverse_variance: if exact { f64::INFINITY } else { 1.0 / first.variance },
            exact,
            history: vec![first],
        }
    }

    pub fn error(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn shots(&self) -> usize {
        self.history.iter().map(|r| r.shots).sum()
    }

    pub fn push(&mut self, rec: EstimateRecord) {
        if !self.exact {
            if rec.variance == 0.0 {
                self.mean = rec.mean;
                self.variance = 0.0;
                self.inverse_variance = f64::INFINITY;
                self.exact = true;
            } else if self.variance.is_infinite() {
                self.mean = rec.mean;
                self.variance = rec.variance;
                self.inverse_variance = 1.0 / rec.variance;
            } else if rec.variance.is_finite() {
                let (v, vt) = (self.variance, rec.variance);
                self.mean = (rec.mean * v + self.mean * vt) / (v + vt);
                self.variance = v * vt / (v + vt);
                self.inverse_variance += 1.0 / vt;
            }
        }
        self.history.push(rec);
    }
}

pub fn mix(mut running: RunningEstimate, new: EstimateRecord) -> RunningEstimate {
    running.push(new);
    running
}

/// Inverse-variance weighted mean and `1 / Σ 1/V̄_t`.
pub fn one_step_mix(records: &[EstimateRecord]) -> Result<(f64, f64)> {
    if records.is_empty() {
        return Err(Error::Empty("record list"));
    }
    if let Some(r) = records.iter().find(|r| !(r.variance > 0.0)) {
        return Err(Error::InvalidArgument(format!("record variance {} is not positive", r.variance)));
    }
    let rho: f64 = records.iter().map(|r| 1.0 / r.variance).sum();
    let mean = records.iter().map(|r| r.mean / r.variance).sum::<f64>() / rho;
    Ok((mean, 1.0 / rho))
}

/// Per-string estimates from the same outcome data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEstimates {
    /// `P̄_k` in observable term order (identity strings give 1).
    pub means: Vec<f64>,
    /// Covariance of the `P̄_k`, `K × K` row-major.
    pub covariance: Vec<f64>,
    /// Variance of the total estimate from the single-pass `ω` data.
    pub total_variance: f64,
    /// `Σ_k c_k² Var(P̄_k)`, which ignores the correlations.
    pub independent_variance: f64,
}

impl TermEstimates {
    pub fn cov(&self, j: usize, k: usize) -> f64 {
        self.covariance[j * self.means.len() + k]
    }
}

pub fn pauli_term_estimates(batch: &OutcomeBatch, ctx: &WeightContext) -> Result<TermEstimates> {
    let s = batch.shots();
    if s < 2 {
        return Err(Error::InvalidArgument("term covariances need at least two shots".into()));
    }
    if batch.num_qubits != ctx.num_qubits {
        return Err(Error::DimensionMismatch { expected: ctx.num_qubits, got: batch.num_qubits });
    }
    let kk = ctx.terms.len();
    let sums = map_chunks(s, CHUNK, |a, b| {
        let mut acc = vec![0.0; kk];
        for i in a..b {
            for (k, v) in acc.iter_mut().enumerate() {
                *v += ctx.term_value(k, batch.row(i));
            }
        }
        acc
    });
    let mut means = vec![0.0; kk];
    for p in sums {
        for (m, v) in means.iter_mut().zip(p) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= s as f64);
    let parts = map_chunks(s, CHUNK, |a, b| {
        let mut acc = vec![0.0; kk * kk];
        let mut d = vec![0.0; kk];
        for i in a..b {
            for k in 0..kk {
                d[k] = ctx.term_value(k, batch.row(i)) - means[k];
            }
            for j in 0..kk {
                for k in 0..kk {
                    acc[j * kk + k] += d[j] * d[k];
                }
            }
        }
        acc
    });
    let mut covariance = vec![0.0; kk * kk];
    for p in parts {
        for (c, v) in covariance.iter_mut().zip(p) {
            *c += v;
        }
    }
    let norm = 1.0 / ((s - 1) as f64 * s as f64);
    covariance.iter_mut().for_each(|c| *c *= norm);
    let independent_variance = (0..kk).map(|k| ctx.terms[k].coeff.powi(2) * covariance[k * kk + k]).sum();
    let total_variance = estimate(batch, ctx)?.variance;
    Ok(TermEstimates { means, covariance, total_variance, independent_variance })
}

/// One line of an iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub shots: usize,
    pub mean: f64,
    pub variance: f64,
    pub mixed_mean: f64,
    pub mixed_variance: f64,
    pub grad_inf_norm: f64,
    pub digest: String,
}

pub const TRACE_HEADER: &str = "t,shots,mean,variance,mixed_mean,mixed_variance,grad_inf_norm,x_digest";

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut w: W) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:e},{:e},{:e},{:e},{:e},{}",
            r.t, r.shots, r.mean, r.variance, r.mixed_mean, r.mixed_variance, r.grad_inf_norm, r.digest
        )?;
    }
    Ok(())
}

pub fn read_trace_csv<R: BufRead>(r: R) -> Result<Vec<TraceRow>> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || i == 0 && line == TRACE_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = |msg: &str| Error::Parse { line: i + 1, msg: msg.to_string() };
        if f.len() != 8 {
            return Err(bad("expected 8 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        rows.push(TraceRow {
            t: f[0].parse().map_err(|_| bad("bad iteration"))?,
            shots: f[1].parse().map_err(|_| bad("bad shot count"))?,
            mean: num(f[2])?,
            variance: num(f[3])?,
            mixed_mean: num(f[4])?,
            mixed_variance: num(f[5])?,
            grad_inf_norm: num(f[6])?,
            digest: f[7].to_string(),
        });
    }
    if rows.is_empty() {
        return Err(Error::Empty("trace"));
    }
    Ok(rows)
}
