//! The learning loop: sample under the current POVM, estimate, mix, take a
//! normalized gradient step on the second moment, repeat.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{estimate, second_moment_gradient, EstimateRecord, RunningEstimate, TraceRow, WeightContext};
use crate::observables::PauliObservable;
use crate::povm::{dual_table, LocalPovm, PovmParams};
use crate::sampling::{derive_seed, sample_povm, OutcomeBatch};
use crate::simulator::StateVector;

/// Shot and step-size schedule. Both change at the same period boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub initial_shots: usize,
    pub shot_increment: usize,
    pub increment_period: usize,
    pub initial_step: f64,
    pub step_decay: f64,
    pub delta: f64,
    pub fd_step: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            initial_shots: 1000,
            shot_increment: 1000,
            increment_period: 3,
            initial_step: 0.05,
            step_decay: 1.2,
            delta: 0.05,
            fd_step: 1e-3,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_shots > 0
            && self.increment_period > 0
            && self.initial_step > 0.0
            && self.step_decay > 0.0
            && self.delta > 0.0
            && self.delta < 0.5
            && self.fd_step > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid schedule {self:?}")))
        }
    }

    fn period(&self, t: usize) -> usize {
        (t.max(1) - 1) / self.increment_period
    }

    /// `S_t` for 1-based iteration `t`.
    pub fn shots_at(&self, t: usize) -> usize {
        self.initial_shots + self.shot_increment * self.period(t)
    }

    /// `ν_t` for 1-based iteration `t`.
    pub fn step_at(&self, t: usize) -> f64 {
        self.initial_step / self.step_decay.powi(self.period(t) as i32)
    }

    /// Total shots after `t` full iterations.
    pub fn cumulative_shots(&self, t: usize) -> usize {
        (1..=t).map(|i| self.shots_at(i)).sum()
    }
}

/// Any criterion that is set can end the run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopCriteria {
    /// Stop once `V̄̄^{1/2}` is at or below this.
    pub target_error: Option<f64>,
    pub shot_budget: Option<usize>,
    pub max_iterations: Option<usize>,
}

impl StopCriteria {
    pub fn validate(&self, schedule: &Schedule) -> Result<()> {
        if self.target_error.is_none() && self.shot_budget.is_none() && self.max_iterations.is_none() {
            return Err(Error::InvalidArgument("no stop criterion set".into()));
        }
        if let Some(e) = self.target_error {
            if !(e > 0.0) {
                return Err(Error::InvalidArgument(format!("target error {e} must be positive")));
            }
        }
        if let Some(b) = self.shot_budget {
            if b < schedule.initial_shots {
                return Err(Error::InvalidArgument(format!(
                    "shot budget {b} is smaller than the first batch ({})",
                    schedule.initial_shots
                )));
            }
        }
        if self.max_iterations == Some(0) {
            return Err(Error::InvalidArgument("iteration cap must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetError,
    ShotBudget,
    IterationCap,
    /// A zero-variance batch made the estimate exact.
    Exact,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::TargetError => "target_error",
            StopReason::ShotBudget => "shot_budget",
            StopReason::IterationCap => "iteration_cap",
            StopReason::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveOptions {
    pub schedule: Schedule,
    pub stop: StopCriteria,
    pub seed: u64,
    /// Update the POVM between batches; `false` keeps `x₀` throughout.
    pub learn: bool,
    /// Number of leading records left out of the mixed estimate.
    pub discard_first: usize,
    /// Keep every outcome batch in the result.
    pub keep_batches: bool,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            schedule: Schedule::default(),
            stop: StopCriteria::default(),
            seed: 0,
            learn: true,
            discard_first: 0,
            keep_batches: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    /// POVM the batch was drawn under.
    pub params: PovmParams,
    pub record: EstimateRecord,
    pub mixed_mean: f64,
    pub mixed_variance: f64,
    /// `‖∇⟨ω²⟩‖∞`; zero when no step followed the batch.
    pub grad_inf_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveRun {
    pub trace: Vec<IterationRecord>,
    pub estimate: RunningEstimate,
    pub stop_reason: StopReason,
    pub total_shots: usize,
    pub batches: Vec<OutcomeBatch>,
}

impl AdaptiveRun {
    pub fn trace_rows(&self) -> Vec<TraceRow> {
        self.trace
            .iter()
            .map(|it| TraceRow {
                t: it.t,
                shots: it.record.shots,
                mean: it.record.mean,
                variance: it.record.variance,
                mixed_mean: it.mixed_mean,
                mixed_variance: it.mixed_variance,
                grad_inf_norm: it.grad_inf_norm,
                digest: it.params.digest(),
            })
            .collect()
    }

    pub fn final_params(&self) -> &PovmParams {
        &self.trace.last().expect("a run has at least one iteration").params
    }
}

/// `x − ν g / max|g|`, clamped to `[δ, 1 − δ]`.
pub fn update_params(x: &PovmParams, g: &[f64], nu: f64) -> PovmParams {
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = x.clone();
    if scale > 0.0 && scale.is_finite() {
        for (k, gk) in g.iter().enumerate() {
            out.set_clamped(k, x.get(k) - nu * gk / scale);
        }
    }
    out
}

fn complete(params: &PovmParams) -> bool {
    params.rows.iter().all(|r| dual_table(&LocalPovm::from_params(r)).is_ok())
}

pub fn run_adaptive(
    state: &StateVector,
    obs: &PauliObservable,
    x0: &PovmParams,
    opts: &AdaptiveOptions,
) -> Result<AdaptiveRun> {
    let sched = &opts.schedule;
    sched.validate()?;
    opts.stop.validate(sched)?;
    if obs.num_qubits() != state.num_qubits() || x0.num_qubits() != state.num_qubits() {
        return Err(Error::DimensionMismatch { expected: state.num_qubits(), got: obs.num_qubits().max(x0.num_qubits()) });
    }
    let mut x = PovmParams::new(x0.rows.clone(), sched.delta)?;
    let mut ctx = WeightContext::new(obs, &x)?;

    let mut trace = Vec::new();
    let mut batches = Vec::new();
    let mut running: Option<RunningEstimate> = None;
    let mut used = 0usize;
    let mut t = 0usize;
    let stop_reason = loop {
        t += 1;
        let mut shots = sched.shots_at(t);
        if let Some(budget) = opts.stop.shot_budget {
            shots = shots.min(budget - used);
        }
        let batch = sample_povm(state, &x.local_povms(), shots, derive_seed(opts.seed, t as u64), x.digest())?;
        used += shots;
        let mut record = estimate(&batch, &ctx)?;
        record.params = Some(x.clone());
        if t > opts.discard_first {
            match running.as_mut() {
                Some(r) => r.push(record.clone()),
                None => running = Some(RunningEstimate::new(record.clone())),
            }
        }
        let (mixed_mean, mixed_variance) = running.as_ref().map_or((f64::NAN, f64::INFINITY), |r| (r.mean, r.variance));

        let reason = if running.as_ref().is_some_and(|r| r.exact) {
            Some(StopReason::Exact)
        } else if opts.stop.target_error.is_some_and(|e| mixed_variance.sqrt() <= e) {
            Some(StopReason::TargetError)
        } else if opts.stop.shot_budget.is_some_and(|b| b - used < 2) {
            Some(StopReason::ShotBudget)
        } else if opts.stop.max_iterations.is_some_and(|m| t >= m) {
            Some(StopReason::IterationCap)
        } else {
            None
        };

        let mut grad_inf_norm = 0.0;
        let step = sched.step_at(t);
        let mut next = None;
        if reason.is_none() && opts.learn {
            let g = second_moment_gradient(&batch, &ctx, &x, sched.fd_step)?;
            grad_inf_norm = g.inf_norm();
            // back off if the step lands on a numerically incomplete POVM
            let mut nu = step;
            for _ in 0..20 {
                let cand = update_params(&x, &g.values, nu);
                if complete(&cand) {
                    next = Some(cand);
                    break;
                }
                nu /= 2.0;
            }
        }
        trace.push(IterationRecord { t, params: x.clone(), record, mixed_mean, mixed_variance, grad_inf_norm, step });
        if opts.keep_batches {
            batches.push(batch);
        }
        if let Some(r) = reason {
            break r;
        }
        if let Some(n) = next {
            x = n;
            ctx = WeightContext::new(obs, &x)?;
        }
    };
    let estimate = match running {
        Some(r) => r,
        None => return Err(Error::InvalidArgument(format!("all {t} records were discarded"))),
    };
    Ok(AdaptiveRun { trace, estimate, stop_reason, total_shots: used, batches })
}

/// Single batch of `shots` under a fixed POVM, reported in the same shape as
/// an adaptive run.
pub fn run_fixed(
    state: &StateVector,
    obs: &PauliObservable,
    params: &PovmParams,
    shots: usize,
    seed: u64,
    keep_batch: bool,
) -> Result<AdaptiveRun> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shot count must be positive".into()));
    }
    let schedule = Schedule { initial_shots: shots, delta: params.delta.max(f64::MIN_POSITIVE), ..Schedule::default() };
    let opts = AdaptiveOptions {
        schedule,
        stop: StopCriteria { max_iterations: Some(1), ..StopCriteria::default() },
        seed,
        learn: false,
        discard_first: 0,
        keep_batches: keep_batch,
    };
    run_adaptive(state, obs, params, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::povm::{sic_params, SicVariant};
    use crate::simulator::{train_vqe, VqeConfig};

    fn obs(terms: &[(f64, &str)]) -> PauliObservable {
        PauliObservable::from_labels(terms).unwrap()
    }

    #[test]
    fn schedule_defaults_follow_periods() {
        let s = Schedule::default();
        let shots: Vec<usize> = (1..=7).map(|t| s.shots_at(t)).collect();
        assert_eq!(shots, [1000, 1000, 1000, 2000, 2000, 2000, 3000]);
        assert_eq!(s.step_at(3), 0.05);
        assert!((s.step_at(4) - 0.05 / 1.2).abs() < 1e-15);
        assert!(s.step_at(7) < s.step_at(6));
        // groups of three: 1500 g (g + 1)
        assert_eq!(s.cumulative_shots(21), 1500 * 7 * 8);
    }

    #[test]
    fn update_rules() {
        let x = sic_params(SicVariant::One, 1);
        assert_eq!(update_params(&x, &[0.0; 8], 0.05), x);
        let mut g = [0.0; 8];
        g[2] = 3.7;
        let y = update_params(&x, &g, 0.05);
        assert!((y.rows[0][2] - (x.rows[0][2] - 0.05)).abs() < 1e-15);
        let mut x = x;
        x.rows[0][4] = 0.051;
        let mut g = [0.0; 8];
        g[4] = 1.0;
        g[0] = -0.1;
        let y = update_params(&x, &g, 0.05);
        assert_eq!(y.rows[0][4], 0.05);
        assert!(y.rows.iter().flatten().all(|v| (0.05..=0.95).contains(v)));
    }

    #[test]
    fn budget_below_first_batch_is_rejected() {
        let o = obs(&[(1.0, "Z")]);
        let opts = AdaptiveOptions {
            stop: StopCriteria { shot_budget: Some(500), ..Default::default() },
            ..Default::default()
        };
        assert!(run_adaptive(&StateVector::zero(1), &o, &sic_params(SicVariant::One, 1), &opts).is_err());
        let opts = AdaptiveOptions::default();
        assert!(run_adaptive(&StateVector::zero(1), &o, &sic_params(SicVariant::One, 1), &opts).is_err());
    }

    #[test]
    fn identity_observable_stops_exact() {
        let o = PauliObservable::scaled_identity(2, 0.5);
        let opts = AdaptiveOptions {
            stop: StopCriteria { shot_budget: Some(100_000), ..Default::default() },
            ..Default::default()
        };
        let run = run_adaptive(&StateVector::random(2, 1), &o, &sic_params(SicVariant::One, 2), &opts).unwrap();
        assert_eq!(run.stop_reason, StopReason::Exact);
        assert_eq!(run.trace.len(), 1);
        assert!(run.estimate.exact);
        assert_eq!(run.estimate.mean, 0.5);
    }

    #[test]
    fn shot_accounting_is_exact() {
        let o = obs(&[(1.0, "ZI"), (0.5, "XX")]);
        for budget in [1000, 2500, 10_000, 12_345] {
            let opts = AdaptiveOptions {
                stop: StopCriteria { shot_budget: Some(budget), ..Default::default() },
                seed: 3,
                keep_batches: true,
                ..Default::default()
            };
            let run = run_adaptive(&StateVector::random(2, 5), &o, &sic_params(SicVariant::One, 2), &opts).unwrap();
            assert_eq!(run.stop_reason, StopReason::ShotBudget);
            assert_eq!(run.total_shots, budget);
            assert_eq!(run.estimate.shots(), budget);
            assert_eq!(run.batches.iter().map(|b| b.shots()).sum::<usize>(), budget);
            let shots: Vec<usize> = run.trace.iter().map(|r| r.record.shots).collect();
            assert!(shots[..shots.len() - 1].windows(2).all(|w| w[0] <= w[1]));
            for it in &run.trace {
                assert!(it.params.rows.iter().flatten().all(|v| (0.05..=0.95).contains(v)));
            }
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let o = obs(&[(1.0, "ZZ"), (0.3, "XX")]);
        let opts = AdaptiveOptions {
            stop: StopCriteria { shot_budget: Some(8000), ..Default::default() },
            seed: 11,
            ..Default::default()
        };
        let x0 = sic_params(SicVariant::One, 2);
        let a = run_adaptive(&StateVector::random(2, 2), &o, &x0, &opts).unwrap();
        let b = run_adaptive(&StateVector::random(2, 2), &o, &x0, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn target_error_and_iteration_cap() {
        let o = obs(&[(1.0, "Z")]);
        let x0 = sic_params(SicVariant::One, 1);
        let opts = AdaptiveOptions {
            stop: StopCriteria { target_error: Some(0.03), max_iterations: Some(200), ..Default::default() },
            ..Default::default()
        };
        let run = run_adaptive(&StateVector::zero(1), &o, &x0, &opts).unwrap();
        assert_eq!(run.stop_reason, StopReason::TargetError);
        assert!(run.estimate.error() <= 0.03);
        let opts = AdaptiveOptions { stop: StopCriteria { max_iterations: Some(4), ..Default::default() }, ..opts };
        let opts = AdaptiveOptions { stop: StopCriteria { target_error: None, ..opts.stop }, ..opts };
        let run = run_adaptive(&StateVector::zero(1), &o, &x0, &opts).unwrap();
        assert_eq!(run.stop_reason, StopReason::IterationCap);
        assert_eq!(run.trace.len(), 4);
    }

    #[test]
    fn discard_first_leaves_records_out() {
        let o = obs(&[(1.0, "Z")]);
        let x0 = sic_params(SicVariant::One, 1);
        let opts = AdaptiveOptions {
            stop: StopCriteria { max_iterations: Some(5), ..Default::default() },
            discard_first: 2,
            ..Default::default()
        };
        let run = run_adaptive(&StateVector::zero(1), &o, &x0, &opts).unwrap();
        assert_eq!(run.estimate.history.len(), 3);
        assert!(run.trace[0].mixed_variance.is_infinite());
        let opts = AdaptiveOptions { discard_first: 5, ..opts };
        assert!(run_adaptive(&StateVector::zero(1), &o, &x0, &opts).is_err());
    }

    #[test]
    fn sigma_z_learning_reduces_variance() {
        let o = obs(&[(1.0, "Z")]);
        let x0 = sic_params(SicVariant::One, 1);
        let mut hits = 0;
        for seed in 0..20 {
            let opts = AdaptiveOptions {
                stop: StopCriteria { shot_budget: Some(20_000), ..Default::default() },
                seed,
                ..Default::default()
            };
            let run = run_adaptive(&StateVector::zero(1), &o, &x0, &opts).unwrap();
            let first = run.trace[0].record.variance;
            assert!(run.estimate.variance < first);
            if (run.estimate.mean - 1.0).abs() <= 4.0 * run.estimate.error() {
                hits += 1;
            }
        }
        assert!(hits >= 19, "{hits}");
    }

    #[test]
    fn learning_beats_fixed_sic_on_two_qubits() {
        let o = obs(&[(1.0, "ZZ"), (0.3, "XX")]);
        let vqe = train_vqe(&o, &VqeConfig { depth: 1, ..Default::default() }).unwrap();
        let state = crate::simulator::prepare_ansatz_state(&vqe.circuit).unwrap();
        let x0 = sic_params(SicVariant::One, 2);
        let budget = 20_000;
        let (mut adaptive, mut fixed) = (0.0, 0.0);
        for seed in 0..20 {
            let opts = AdaptiveOptions {
                stop: StopCriteria { shot_budget: Some(budget), ..Default::default() },
                seed,
                ..Default::default()
            };
            adaptive += run_adaptive(&state, &o, &x0, &opts).unwrap().estimate.variance;
            fixed += run_fixed(&state, &o, &x0, budget, seed, false).unwrap().estimate.variance;
        }
        assert!(adaptive < fixed, "{adaptive} vs {fixed}");
    }
}
