//! Experiment configuration, run directories, and the shot-count analysis
//! (extrapolation to a target error and power-law fits).

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adaptive::{run_adaptive, run_fixed, AdaptiveOptions, AdaptiveRun, Schedule, StopCriteria};
use crate::baselines::{grouped_pauli_estimate, pauli_estimate, BaselineResult};
use crate::error::{Error, Result};
use crate::estimation::{read_trace_csv, write_trace_csv, TraceRow};
use crate::observables::{group_qubitwise, parse_observable, PauliObservable};
use crate::parallel::{is_parallel, map_indexed};
use crate::povm::{effect_to_bloch, sic_params, PovmFile, PovmParams, SicVariant};
use crate::sampling::OutcomeBatch;
use crate::simulator::{
    exact_expectation, prepare_ansatz_state, train_vqe, AnsatzCircuit, StateVector, VqeConfig,
};
use crate::tomography::{kwise_report, Counts, KwiseOptions, KwiseReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pauli,
    Grouped,
    Sic1,
    Sic2,
    #[serde(rename = "adaptive-1")]
    Adaptive1,
    #[serde(rename = "adaptive-2")]
    Adaptive2,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Pauli, Method::Grouped, Method::Sic1, Method::Sic2, Method::Adaptive1, Method::Adaptive2];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pauli => "pauli",
            Method::Grouped => "grouped",
            Method::Sic1 => "sic1",
            Method::Sic2 => "sic2",
            Method::Adaptive1 => "adaptive-1",
            Method::Adaptive2 => "adaptive-2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, Method::Adaptive1 | Method::Adaptive2)
    }

    /// Starting (or fixed) POVM of the IC methods.
    pub fn initial_povm(self, num_qubits: usize) -> Option<PovmParams> {
        match self {
            Method::Sic1 | Method::Adaptive1 => Some(sic_params(SicVariant::One, num_qubits)),
            Method::Sic2 | Method::Adaptive2 => Some(sic_params(SicVariant::Two, num_qubits)),
            Method::Pauli | Method::Grouped => None,
        }
    }
}

/// Where the measured state comes from. With none of the three set, a VQE
/// circuit is trained with default settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StateSpec {
    /// Circuit JSON as written by `vqe-train`.
    pub ansatz: Option<PathBuf>,
    /// Explicit angles for the linear-entangler ansatz of `depth` layers.
    pub theta: Option<Vec<f64>>,
    pub depth: Option<usize>,
    pub vqe: Option<VqeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub observable: PathBuf,
    pub state: StateSpec,
    pub method: Method,
    /// Total shots for the fixed methods; default shot budget for the
    /// adaptive ones.
    pub shots: Option<usize>,
    pub schedule: Schedule,
    pub stop: StopCriteria,
    pub discard_first: usize,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    /// Write outcome batches of IC runs.
    pub persist_batches: bool,
    pub bootstrap_resamples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            observable: PathBuf::new(),
            state: StateSpec::default(),
            method: Method::Adaptive1,
            shots: None,
            schedule: Schedule::default(),
            stop: StopCriteria::default(),
            discard_first: 0,
            seeds: vec![0],
            output: PathBuf::from("runs/default"),
            persist_batches: true,
            bootstrap_resamples: 1000,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// Stop criteria after folding `shots` in as the budget.
    pub fn effective_stop(&self) -> StopCriteria {
        let mut stop = self.stop.clone();
        if stop.shot_budget.is_none() {
            stop.shot_budget = self.shots;
        }
        stop
    }

    pub fn validate(&self) -> Result<()> {
        if self.observable.as_os_str().is_empty() {
            return Err(Error::InvalidArgument("no observable file given".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Empty("seed list"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::InvalidArgument("seeds must be distinct".into()));
        }
        let s = &self.state;
        if [s.ansatz.is_some(), s.theta.is_some(), s.vqe.is_some()].iter().filter(|&&b| b).count() > 1 {
            return Err(Error::InvalidArgument("give at most one of ansatz, theta and vqe".into()));
        }
        if s.depth.is_some() && s.theta.is_none() {
            return Err(Error::InvalidArgument("depth only applies to explicit theta".into()));
        }
        if self.method.is_adaptive() {
            self.schedule.validate()?;
            self.effective_stop().validate(&self.schedule)?;
        } else {
            match self.shots {
                Some(s) if s > 0 => {}
                _ => return Err(Error::InvalidArgument(format!("method {} needs a positive shot count", self.method.name()))),
            }
        }
        Ok(())
    }
}

/// Measured state together with how it was obtained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreparedState {
    pub circuit: AnsatzCircuit,
    pub exact_value: f64,
    /// Dense ground energy when a VQE circuit was trained.
    pub reference_energy: Option<f64>,
}

pub fn prepare_state(spec: &StateSpec, obs: &PauliObservable) -> Result<PreparedState> {
    let n = obs.num_qubits();
    let (circuit, reference_energy) = if let Some(path) = &spec.ansatz {
        (AnsatzCircuit::from_json(&fs::read_to_string(path)?)?, None)
    } else if let Some(theta) = &spec.theta {
        let depth = spec.depth.unwrap_or((theta.len() / n.max(1)).saturating_sub(1));
        (AnsatzCircuit::linear(n, depth, theta.clone()), None)
    } else {
        let vqe = train_vqe(obs, &spec.vqe.clone().unwrap_or_default())?;
        (vqe.circuit, Some(vqe.reference_energy))
    };
    if circuit.num_qubits != n {
        return Err(Error::DimensionMismatch { expected: n, got: circuit.num_qubits });
    }
    let state = prepare_ansatz_state(&circuit)?;
    let exact_value = exact_expectation(&state, obs)?;
    Ok(PreparedState { circuit, exact_value, reference_energy })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub estimate: f64,
    /// Estimated statistical error `V̄̄^{1/2}`.
    pub estimated_error: f64,
    pub abs_error: f64,
    pub total_shots: usize,
    pub iterations: usize,
    pub stop_reason: Option<String>,
    pub final_povm: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub parallel: bool,
    pub method: Method,
    pub num_qubits: usize,
    pub exact_value: f64,
    pub reference_energy: Option<f64>,
    pub seeds: Vec<SeedResult>,
    pub mean_abs_error: Interval,
    pub mean_estimated_error: Interval,
    pub rms_error: f64,
}

/// Outcome of one seed before it is written out.
pub struct SeedRun {
    pub result: SeedResult,
    pub trace: Vec<TraceRow>,
    /// POVM of every batch (IC methods only).
    pub povms: Vec<PovmParams>,
    pub batches: Vec<OutcomeBatch>,
}

fn from_adaptive(seed: u64, run: AdaptiveRun, exact: f64, adaptive: bool) -> SeedRun {
    let trace = run.trace_rows();
    let povms: Vec<PovmParams> = run.trace.iter().map(|it| it.params.clone()).collect();
    let result = SeedResult {
        seed,
        estimate: run.estimate.mean,
        estimated_error: run.estimate.error(),
        abs_error: (run.estimate.mean - exact).abs(),
        total_shots: run.total_shots,
        iterations: run.trace.len(),
        stop_reason: adaptive.then(|| run.stop_reason.as_str().to_string()),
        final_povm: Some(run.final_params().digest()),
    };
    SeedRun { result, trace, povms, batches: run.batches }
}

fn from_baseline(seed: u64, b: BaselineResult, exact: f64) -> SeedRun {
    let trace = b.trace_rows();
    let result = SeedResult {
        seed,
        estimate: b.mean,
        estimated_error: b.error,
        abs_error: (b.mean - exact).abs(),
        total_shots: b.total_shots,
        iterations: 1,
        stop_reason: None,
        final_povm: None,
    };
    SeedRun { result, trace, povms: Vec::new(), batches: Vec::new() }
}

/// Runs one seed of `method`; `shots` is the total for the fixed methods.
pub fn run_seed(cfg: &ExperimentConfig, state: &StateVector, obs: &PauliObservable, exact: f64, seed: u64) -> Result<SeedRun> {
    let n = obs.num_qubits();
    let keep = cfg.persist_batches;
    match cfg.method {
        Method::Pauli => {
            let k = obs.non_identity_terms().count().max(1);
            let shots = cfg.shots.unwrap_or(0);
            if shots < k {
                return Err(Error::InvalidArgument(format!("{shots} shots cannot cover {k} Pauli strings")));
            }
            Ok(from_baseline(seed, pauli_estimate(state, obs, shots / k, seed)?, exact))
        }
        Method::Grouped => {
            let grouping = group_qubitwise(obs);
            let g = grouping.len().max(1);
            let shots = cfg.shots.unwrap_or(0);
            if shots < g {
                return Err(Error::InvalidArgument(format!("{shots} shots cannot cover {g} groups")));
            }
            Ok(from_baseline(seed, grouped_pauli_estimate(state, obs, &grouping, shots / g, seed)?, exact))
        }
        Method::Sic1 | Method::Sic2 => {
            let params = cfg.method.initial_povm(n).expect("IC method");
            let run = run_fixed(state, obs, &params, cfg.shots.unwrap_or(0), seed, keep)?;
            Ok(from_adaptive(seed, run, exact, false))
        }
        Method::Adaptive1 | Method::Adaptive2 => {
            let x0 = cfg.method.initial_povm(n).expect("IC method");
            let opts = AdaptiveOptions {
                schedule: cfg.schedule.clone(),
                stop: cfg.effective_stop(),
                seed,
                learn: true,
                discard_first: cfg.discard_first,
                keep_batches: keep,
            };
            Ok(from_adaptive(seed, run_adaptive(state, obs, &x0, &opts)?, exact, true))
        }
    }
}

pub fn seed_dir(run_dir: &Path, seed: u64) -> PathBuf {
    run_dir.join(format!("seed-{seed}"))
}

/// `t,qubit,effect,x,y,z` for every POVM in `povms` (1-based `t`).
pub fn bloch_csv(povms: &[PovmParams]) -> String {
    let mut s = String::from("t,qubit,effect,x,y,z\n");
    for (t, p) in povms.iter().enumerate() {
        for (q, local) in p.local_povms().iter().enumerate() {
            for (e, effect) in local.effects().iter().enumerate() {
                let r = effect_to_bloch(effect);
                let _ = writeln!(s, "{},{q},{e},{:e},{:e},{:e}", t + 1, r[0], r[1], r[2]);
            }
        }
    }
    s
}

fn povm_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("povm").join(format!("iter-{t}.povm"))
}

fn batch_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("batches").join(format!("batch-{t}.csv"))
}

fn write_seed(dir: &Path, run: &SeedRun) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(fs::File::create(dir.join("trace.csv"))?);
    write_trace_csv(&run.trace, &mut w)?;
    drop(w);
    if !run.povms.is_empty() {
        fs::create_dir_all(dir.join("povm"))?;
        for (t, p) in run.povms.iter().enumerate() {
            let file = PovmFile { params: p.clone(), variant: format!("iteration {}", t + 1), residual: None };
            fs::write(povm_path(dir, t + 1), file.to_text())?;
        }
        fs::write(dir.join("bloch.csv"), bloch_csv(&run.povms))?;
    }
    if !run.batches.is_empty() {
        fs::create_dir_all(dir.join("batches"))?;
        for (t, b) in run.batches.iter().enumerate() {
            let mut w = BufWriter::new(fs::File::create(batch_path(dir, t + 1))?);
            b.write_csv(&mut w)?;
        }
    }
    fs::write(dir.join("result.json"), serde_json::to_string_pretty(&run.result)?)?;
    Ok(())
}

/// Runs every seed, writes the run directory and returns the summary.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let obs = parse_observable(&fs::read_to_string(&cfg.observable)?)?;
    let prepared = prepare_state(&cfg.state, &obs)?;
    let state = prepare_ansatz_state(&prepared.circuit)?;
    let out = &cfg.output;
    fs::create_dir_all(out)?;

    // the snapshot pins the trained circuit so the run can be repeated
    let mut snapshot = cfg.clone();
    snapshot.observable = PathBuf::from("observable.txt");
    snapshot.state = StateSpec { ansatz: Some(PathBuf::from("circuit.json")), ..StateSpec::default() };
    snapshot.output = PathBuf::from(".");
    fs::write(out.join("config.json"), serde_json::to_string_pretty(&snapshot)?)?;
    fs::write(out.join("observable.txt"), obs.to_text())?;
    fs::write(out.join("circuit.json"), prepared.circuit.to_json()?)?;
    fs::write(out.join("state.json"), serde_json::to_string_pretty(&prepared)?)?;

    let runs = map_indexed(cfg.seeds.len(), |i| -> Result<SeedResult> {
        let seed = cfg.seeds[i];
        let run = run_seed(cfg, &state, &obs, prepared.exact_value, seed)?;
        write_seed(&seed_dir(out, seed), &run)?;
        Ok(run.result)
    });
    let seeds = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = summarize(cfg, &obs, &prepared, seeds);
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

fn summarize(cfg: &ExperimentConfig, obs: &PauliObservable, prepared: &PreparedState, seeds: Vec<SeedResult>) -> RunSummary {
    let abs: Vec<f64> = seeds.iter().map(|s| s.abs_error).collect();
    let est: Vec<f64> = seeds.iter().map(|s| s.estimated_error).collect();
    let rms = (abs.iter().map(|e| e * e).sum::<f64>() / abs.len() as f64).sqrt();
    let b = cfg.bootstrap_resamples;
    RunSummary {
        version: env!("CARGO_PKG_VERSION").to_string(),
        parallel: is_parallel(),
        method: cfg.method,
        num_qubits: obs.num_qubits(),
        exact_value: prepared.exact_value,
        reference_energy: prepared.reference_energy,
        mean_abs_error: bootstrap_mean(&abs, b, 0.95, 0),
        mean_estimated_error: bootstrap_mean(&est, b, 0.95, 1),
        rms_error: rms,
        seeds,
    }
}

/// Sample mean with a percentile bootstrap interval.
pub fn bootstrap_mean(values: &[f64], resamples: usize, level: f64, seed: u64) -> Interval {
    let n = values.len();
    if n == 0 {
        return Interval { estimate: f64::NAN, lower: f64::NAN, upper: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if resamples == 0 || n == 1 {
        return Interval { estimate: mean, lower: mean, upper: mean };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let (lower, upper) = percentile_bounds(&means, level);
    Interval { estimate: mean, lower, upper }
}

fn percentile_bounds(sorted: &[f64], level: f64) -> (f64, f64) {
    let alpha = (1.0 - level) / 2.0;
    let at = |q: f64| sorted[((sorted.len() - 1) as f64 * q).round() as usize];
    (at(alpha), at(1.0 - alpha))
}

/// Reads a seed's persisted POVMs and batches.
pub fn load_batches(seed_dir: &Path) -> Result<(Vec<PovmParams>, Vec<OutcomeBatch>)> {
    let mut povms = Vec::new();
    let mut batches = Vec::new();
    for t in 1.. {
        let bp = batch_path(seed_dir, t);
        if !bp.exists() {
            break;
        }
        let pp = povm_path(seed_dir, t);
        let params = PovmFile::parse(&fs::read_to_string(&pp).map_err(|e| missing(&pp, e))?)?.params;
        batches.push(OutcomeBatch::read_csv(BufReader::new(fs::File::open(&bp)?))?);
        povms.push(params);
    }
    if batches.is_empty() {
        return Err(Error::InvalidArgument(format!("no outcome batches under {}", seed_dir.display())));
    }
    Ok((povms, batches))
}

fn missing(path: &Path, e: std::io::Error) -> Error {
    Error::InvalidArgument(format!("{}: {e}", path.display()))
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceRow>> {
    read_trace_csv(BufReader::new(fs::File::open(path).map_err(|e| missing(path, e))?))
}

/// k-wise tomography of one seed of a finished run, from its stored batches.
pub fn tomography_from_run(run_dir: &Path, seed: Option<u64>, max_k: usize, opts: &KwiseOptions) -> Result<KwiseReport> {
    let cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(run_dir.join("config.json"))?)?;
    let seed = seed.unwrap_or(cfg.seeds[0]);
    let prepared: PreparedState = serde_json::from_str(&fs::read_to_string(run_dir.join("state.json"))?)?;
    let state = prepare_ansatz_state(&prepared.circuit)?;
    if max_k == 0 || max_k > state.num_qubits() {
        return Err(Error::InvalidArgument(format!("k = {max_k} outside 1..={}", state.num_qubits())));
    }
    let (povms, batches) = load_batches(&seed_dir(run_dir, seed))?;
    kwise_report(&state, &povms, Counts::Observed(&batches), max_k, opts)
}

/// Shots needed to reach `target`.
///
/// The earliest cumulative shot count whose mixed error is at or below the
/// target, or else `S_lim ε_lim² / ε_tar²` from the final row.
pub fn extrapolate_shots(trace: &[TraceRow], target: f64) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::Empty("trace"));
    }
    if !(target > 0.0) {
        return Err(Error::InvalidArgument(format!("target error {target} must be positive")));
    }
    let mut cumulative = 0usize;
    for row in trace {
        cumulative += row.shots;
        if row.mixed_variance.sqrt() <= target {
            return Ok(cumulative as f64);
        }
    }
    let last = trace.last().expect("nonempty").mixed_variance;
    if !last.is_finite() {
        return Err(Error::InvalidArgument("final error is not finite".into()));
    }
    Ok(cumulative as f64 * last / (target * target))
}

/// `S = a N^b` fitted by least squares on `(ln N, ln S)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub points: Vec<(f64, f64)>,
    pub a: f64,
    pub b: f64,
    /// Standard error of `a` by the delta method on `ln a`.
    pub a_std_err: f64,
    pub b_std_err: f64,
    pub ln_a: f64,
    pub ln_a_std_err: f64,
    /// Log-space residuals `ln S − ln a − b ln N`.
    pub residuals: Vec<f64>,
    pub b_interval: Option<Interval>,
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("{} points, need at least 3", points.len())));
    }
    if let Some(p) = points.iter().find(|(n, s)| !(*n > 0.0 && *s > 0.0 && n.is_finite() && s.is_finite())) {
        return Err(Error::Degenerate(format!("point {p:?} is not positive")));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    if !(sxx > 1e-12 * n) {
        return Err(Error::Degenerate("all N are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let b = sxy / sxx;
    let ln_a = ym - b * xm;
    let residuals: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - ln_a - b * x).collect();
    let sigma2 = residuals.iter().map(|r| r * r).sum::<f64>() / (n - 2.0);
    let b_std_err = (sigma2 / sxx).sqrt();
    let ln_a_std_err = (sigma2 * (1.0 / n + xm * xm / sxx)).sqrt();
    let a = ln_a.exp();
    Ok(ScalingFit {
        points: points.to_vec(),
        a,
        b,
        a_std_err: a * ln_a_std_err,
        b_std_err,
        ln_a,
        ln_a_std_err,
        residuals,
        b_interval: None,
    })
}

/// Fit plus a pairs-bootstrap percentile interval on `b`. Resamples whose N
/// values all coincide are redrawn.
pub fn fit_power_law_bootstrap(points: &[(f64, f64)], resamples: usize, level: f64, seed: u64) -> Result<ScalingFit> {
    let mut fit = fit_power_law(points)?;
    if resamples == 0 {
        return Ok(fit);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bs = Vec::with_capacity(resamples);
    let mut draws = 0usize;
    while bs.len() < resamples && draws < 100 * resamples {
        draws += 1;
        let sample: Vec<(f64, f64)> = (0..points.len()).map(|_| points[rng.gen_range(0..points.len())]).collect();
        if let Ok(f) = fit_power_law(&sample) {
            bs.push(f.b);
        }
    }
    if bs.is_empty() {
        return Err(Error::Degenerate("no usable bootstrap resample".into()));
    }
    bs.sort_by(f64::total_cmp);
    let (lower, upper) = percentile_bounds(&bs, level);
    fit.b_interval = Some(Interval { estimate: fit.b, lower, upper });
    Ok(fit)
}

/// `N,S` pairs, one per line; a non-numeric first line is a header.
pub fn parse_points(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split([',', ' ', '\t']).filter(|c| !c.is_empty()).collect();
        let parsed: Option<Vec<f64>> = cells.iter().map(|c| c.parse().ok()).collect();
        match parsed {
            Some(v) if v.len() == 2 => points.push((v[0], v[1])),
            None if i == 0 => continue,
            _ => return Err(Error::Parse { line: i + 1, msg: format!("expected two numbers, got {line:?}") }),
        }
    }
    Ok(points)
}
