//! Parametric single-qubit informationally complete POVMs.
//!
//! Eight numbers in `[0, 1]` describe a qubit-ancilla unitary `U`; measuring
//! both qubits in the computational basis after `U` realizes four rank-1
//! effects `Π_i = |π_i⟩⟨π_i|`. Within the 4×4 matrix the system qubit is the
//! high bit, so outcome `i = 2 b_q + b_a` labels row `i` and the columns that
//! matter (ancilla in `|0⟩`) are 0 and 2.
//!
//! The columns are built as follows: column 0 (`u_0`) is a real point on
//! `S^3` from the angles `(πx_0, πx_1, 2πx_2)`; column 2 (`u_1`) is
//! `Σ_k z_k u⊥_k`, where `u⊥` is the Gram-Schmidt completion of `u_0` seeded
//! with the canonical basis and `z_k = r_{2k} + i r_{2k+1}` comes from the
//! point `r` on `S^5` with angles `(πx_3, …, πx_6, 2πx_7)`. Columns 1 and 3
//! finish the unitary by another Gram-Schmidt pass.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Matrix2, Matrix4, SMatrix, SVector, SymmetricEigen, Vector2, Vector4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Row = [f64; 8];
pub type Unitary4 = Matrix4<Complex64>;
pub type Effect = Matrix2<Complex64>;

/// Default clamp keeping parameters away from chart singularities.
pub const DEFAULT_DELTA: f64 = 0.05;
/// Largest accepted condition number of the effect Gram matrix.
pub const GRAM_CONDITION_LIMIT: f64 = 1e8;
const GS_SKIP: f64 = 1e-8;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);
const CI: Complex64 = Complex64::new(0.0, 1.0);

/// Pauli matrices in `I, X, Y, Z` order.
pub fn pauli_matrices() -> [Effect; 4] {
    [
        Matrix2::new(C1, C0, C0, C1),
        Matrix2::new(C0, C1, C1, C0),
        Matrix2::new(C0, -CI, CI, C0),
        Matrix2::new(C1, C0, C0, -C1),
    ]
}

/// Per-qubit parameter rows, each entry within `[δ, 1 − δ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovmParams {
    pub rows: Vec<Row>,
    pub delta: f64,
}

impl PovmParams {
    pub fn new(rows: Vec<Row>, delta: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&delta) {
            return Err(Error::InvalidArgument(format!("clamp δ = {delta} must lie in [0, 0.5)")));
        }
        for (q, row) in rows.iter().enumerate() {
            if let Some(v) = row.iter().find(|v| !(delta..=1.0 - delta).contains(*v)) {
                return Err(Error::InvalidArgument(format!(
                    "parameter {v} on qubit {q} is outside [{delta}, {}]",
                    1.0 - delta
                )));
            }
        }
        Ok(Self { rows, delta })
    }

    /// Same row on every qubit.
    pub fn uniform(row: Row, num_qubits: usize, delta: f64) -> Result<Self> {
        Self::new(vec![row; num_qubits], delta)
    }

    pub fn num_qubits(&self) -> usize {
        self.rows.len()
    }

    pub fn num_params(&self) -> usize {
        8 * self.rows.len()
    }

    /// Flat parameter `k` (`row k / 8`, entry `k % 8`).
    pub fn get(&self, k: usize) -> f64 {
        self.rows[k / 8][k % 8]
    }

    pub fn set_clamped(&mut self, k: usize, v: f64) {
        self.rows[k / 8][k % 8] = v.clamp(self.delta, 1.0 - self.delta);
    }

    pub fn local_povms(&self) -> Vec<LocalPovm> {
        self.rows.iter().map(LocalPovm::from_params).collect()
    }

    /// Short stable digest of the parameter values (FNV-1a over the bits).
    pub fn digest(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.rows.iter().flatten() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }
}

/// Four rank-1 effects of one qubit, stored as their (subnormalized) vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPovm {
    pub vectors: [Vector2<Complex64>; 4],
    pub unitary: Option<Unitary4>,
}

impl LocalPovm {
    pub fn from_params(row: &Row) -> Self {
        unitary_to_effects(&params_to_unitary(row)).expect("parametrized unitary is unitary")
    }

    pub fn from_vectors(vectors: [Vector2<Complex64>; 4]) -> Self {
        Self { vectors, unitary: None }
    }

    pub fn effect(&self, i: usize) -> Effect {
        let v = self.vectors[i];
        v * v.adjoint()
    }

    pub fn effects(&self) -> [Effect; 4] {
        [0, 1, 2, 3].map(|i| self.effect(i))
    }

    /// `‖Σ_i Π_i − I‖` entrywise maximum.
    pub fn completeness_error(&self) -> f64 {
        let sum: Effect = self.effects().iter().sum();
        (sum - Effect::identity()).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `⟨π_i|ρ|π_i⟩` for a 2×2 density matrix.
    pub fn probabilities(&self, rho: &Effect) -> [f64; 4] {
        [0, 1, 2, 3].map(|i| {
            let v = self.vectors[i];
            (v.adjoint() * rho * v)[(0, 0)].re
        })
    }
}

/// Euclidean coordinates of the point on `S^{len}` with the given
/// hyperspherical angles (the last angle is the azimuth).
fn hypersphere(angles: &[f64]) -> Vec<f64> {
    let n = angles.len() + 1;
    let mut r = vec![0.0; n];
    let mut s = 1.0;
    for (i, a) in angles[..angles.len() - 1].iter().enumerate() {
        r[i] = s * a.cos();
        s *= a.sin();
    }
    let phi = angles[angles.len() - 1];
    r[n - 2] = s * phi.cos();
    r[n - 1] = s * phi.sin();
    r
}

/// Orthonormal completion of `fixed` from the canonical basis of `C^4`,
/// returning `need` new vectors. Candidates whose projection falls below
/// `1e-8` are skipped.
fn gram_schmidt(fixed: &[Vector4<Complex64>], need: usize) -> Vec<Vector4<Complex64>> {
    let mut out: Vec<Vector4<Complex64>> = Vec::with_capacity(need);
    for j in 0..4 {
        if out.len() == need {
            break;
        }
        let mut v = Vector4::<Complex64>::zeros();
        v[j] = C1;
        // Two passes for numerical orthogonality.
        for _ in 0..2 {
            for u in fixed.iter().chain(out.iter()) {
                let proj = u.dotc(&v);
                v -= u * proj;
            }
        }
        let norm = v.norm();
        if norm > GS_SKIP {
            out.push(v / Complex64::new(norm, 0.0));
        }
    }
    out
}

pub fn params_to_unitary(x: &Row) -> Unitary4 {
    let r0 = hypersphere(&[PI * x[0], PI * x[1], 2.0 * PI * x[2]]);
    let u0 = Vector4::from_iterator(r0.iter().map(|&v| Complex64::new(v, 0.0)));
    let perp = gram_schmidt(&[u0], 3);
    let r1 = hypersphere(&[PI * x[3], PI * x[4], PI * x[5], PI * x[6], 2.0 * PI * x[7]]);
    let mut u1 = Vector4::<Complex64>::zeros();
    for (k, p) in perp.iter().enumerate() {
        u1 += p * Complex64::new(r1[2 * k], r1[2 * k + 1]);
    }
    let rest = gram_schmidt(&[u0, u1], 2);
    let mut u = Unitary4::zeros();
    u.set_column(0, &u0);
    u.set_column(2, &u1);
    u.set_column(1, &rest[0]);
    u.set_column(3, &rest[1]);
    u
}

pub fn unitary_error(u: &Unitary4) -> f64 {
    (u.adjoint() * u - Unitary4::identity()).iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Effects realized by `U` acting on (system, ancilla = `|0⟩`):
/// `|π_i⟩ = Σ_k conj(U[i, 2k]) |k⟩`.
pub fn unitary_to_effects(u: &Unitary4) -> Result<LocalPovm> {
    let err = unitary_error(u);
    if err > 1e-8 {
        return Err(Error::NotUnitary(err));
    }
    let vectors = [0, 1, 2, 3].map(|i| Vector2::new(u[(i, 0)].conj(), u[(i, 2)].conj()));
    Ok(LocalPovm { vectors, unitary: Some(*u) })
}

/// Which symmetric informationally complete POVM to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SicVariant {
    /// `|0⟩` plus three states at polar angle `arccos(-1/3)` spaced by `2π/3`.
    One,
    /// Tetrahedron with Bloch vectors `(±1, ±1, ±1)/√3` of even parity;
    /// every non-identity dual entry is `±√3`.
    Two,
}

impl SicVariant {
    pub fn name(self) -> &'static str {
        match self {
            SicVariant::One => "sic1",
            SicVariant::Two => "sic2",
        }
    }
}

pub fn sic_povm(variant: SicVariant) -> LocalPovm {
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let vectors = match variant {
        SicVariant::One => {
            let mut v = [Vector2::new(Complex64::new(half, 0.0), C0); 4];
            for (k, slot) in v.iter_mut().enumerate().skip(1) {
                let phase = Complex64::from_polar(1.0, 2.0 * PI * (k as f64 - 1.0) / 3.0);
                *slot = Vector2::new(C1, phase * 2f64.sqrt()) * Complex64::new(half / 3f64.sqrt(), 0.0);
            }
            v
        }
        SicVariant::Two => {
            let s = 1.0 / 3f64.sqrt();
            let dirs = [[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]];
            dirs.map(|n| {
                let theta = n[2].acos();
                let phi = n[1].atan2(n[0]);
                Vector2::new(
                    Complex64::new((theta / 2.0).cos() * half, 0.0),
                    Complex64::from_polar((theta / 2.0).sin() * half, phi),
                )
            })
        }
    };
    LocalPovm::from_vectors(vectors)
}

/// `b[k][m]` with `σ_k = Σ_m b[k][m] Π_m`, rows in `I, X, Y, Z` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualTable {
    pub b: [[f64; 4]; 4],
}

/// `d[r][m]` with `Γ_r = Σ_m d[r][m] Π_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossDualTable {
    pub d: [[f64; 4]; 4],
}

fn trace_product(a: &Effect, b: &Effect) -> f64 {
    (a * b).trace().re
}

/// Solve `Σ_m coeff[m] Π_m = target` for each target in the Hilbert-Schmidt
/// inner product.
fn expand_in_effects(povm: &LocalPovm, targets: &[Effect; 4]) -> Result<[[f64; 4]; 4]> {
    let effects = povm.effects();
    let gram = SMatrix::<f64, 4, 4>::from_fn(|m, n| trace_product(&effects[m], &effects[n]));
    let eig = SymmetricEigen::new(gram).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= GRAM_CONDITION_LIMIT) {
        return Err(Error::InformationallyIncomplete(cond));
    }
    let lu = gram.lu();
    let mut out = [[0.0; 4]; 4];
    for (k, t) in targets.iter().enumerate() {
        let rhs = SVector::<f64, 4>::from_fn(|n, _| trace_product(t, &effects[n]));
        let sol = lu.solve(&rhs).ok_or(Error::InformationallyIncomplete(cond))?;
        out[k] = [sol[0], sol[1], sol[2], sol[3]];
    }
    Ok(out)
}

pub fn dual_table(povm: &LocalPovm) -> Result<DualTable> {
    Ok(DualTable { b: expand_in_effects(povm, &pauli_matrices())? })
}

/// Expansion of the effects of `new` in those of `old`.
pub fn cross_dual_table(new: &LocalPovm, old: &LocalPovm) -> Result<CrossDualTable> {
    Ok(CrossDualTable { d: expand_in_effects(old, &new.effects())? })
}

/// `max_{k} ‖Σ_m b[k][m] Π_m − σ_k‖`.
pub fn dual_residual(povm: &LocalPovm, table: &DualTable) -> f64 {
    reconstruction_residual(povm, &table.b, &pauli_matrices())
}

pub fn cross_dual_residual(new: &LocalPovm, old: &LocalPovm, table: &CrossDualTable) -> f64 {
    reconstruction_residual(old, &table.d, &new.effects())
}

fn reconstruction_residual(povm: &LocalPovm, coeffs: &[[f64; 4]; 4], targets: &[Effect; 4]) -> f64 {
    let effects = povm.effects();
    (0..4)
        .map(|k| {
            let rec: Effect = (0..4).map(|m| effects[m] * Complex64::new(coeffs[k][m], 0.0)).sum();
            (rec - targets[k]).iter().map(|c| c.norm()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Bloch-ball coordinates `r = (Tr[Πσ_x], Tr[Πσ_y], Tr[Πσ_z])` of an effect.
pub fn effect_to_bloch(effect: &Effect) -> [f64; 3] {
    let p = pauli_matrices();
    [1, 2, 3].map(|k| trace_product(effect, &p[k]))
}

/// Inverse of [`effect_to_bloch`] on rank-1 effects: `(|r| I + r·σ) / 2`.
pub fn bloch_to_effect(r: [f64; 3]) -> Effect {
    let p = pauli_matrices();
    let norm = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    (p[0] * Complex64::new(norm, 0.0)
        + p[1] * Complex64::new(r[0], 0.0)
        + p[2] * Complex64::new(r[1], 0.0)
        + p[3] * Complex64::new(r[2], 0.0))
        * Complex64::new(0.5, 0.0)
}

/// Outcome of [`fit_params`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub row: Row,
    /// `Σ_i ‖Π_i(x) − Π_i^target‖²_F` at `row`.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub starts: usize,
    pub seed: u64,
    pub delta: f64,
    pub max_iters: usize,
    pub target_residual: f64,
    pub accept_residual: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 32,
            seed: 0,
            delta: DEFAULT_DELTA,
            max_iters: 300,
            target_residual: 1e-24,
            accept_residual: 1e-6,
        }
    }
}

fn effect_residuals(row: &Row, target: &[Effect; 4]) -> SVector<f64, 32> {
    let effects = LocalPovm::from_params(row).effects();
    let mut r = SVector::<f64, 32>::zeros();
    for i in 0..4 {
        for (e, (a, b)) in effects[i].iter().zip(target[i].iter()).enumerate() {
            let d = a - b;
            r[8 * i + 2 * e] = d.re;
            r[8 * i + 2 * e + 1] = d.im;
        }
    }
    r
}

/// Box-constrained Levenberg-Marquardt from many seeded starts, minimizing
/// the Frobenius distance between parametrized and target effects.
/// Returns the best row found; `converged` is false when its residual is
/// above `accept_residual`.
pub fn fit_params(target: &LocalPovm, opts: &FitOptions) -> FitResult {
    let target_effects = target.effects();
    let lo = opts.delta;
    let hi = 1.0 - opts.delta;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(Row, f64)> = None;
    for _ in 0..opts.starts.max(1) {
        let mut x: Row = [0.0; 8];
        for v in x.iter_mut() {
            *v = rng.gen_range(lo..hi);
        }
        let (row, res) = levenberg_marquardt(x, &target_effects, lo, hi, opts);
        if best.as_ref().is_none_or(|(_, b)| res < *b) {
            best = Some((row, res));
        }
        if res < opts.target_residual {
            break;
        }
    }
    let (row, residual) = best.expect("at least one start");
    FitResult { row, residual, converged: residual <= opts.accept_residual }
}

fn levenberg_marquardt(mut x: Row, target: &[Effect; 4], lo: f64, hi: f64, opts: &FitOptions) -> (Row, f64) {
    let mut r = effect_residuals(&x, target);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let fd = 1e-6;
    for _ in 0..opts.max_iters {
        if cost < opts.target_residual {
            break;
        }
        let mut jac = SMatrix::<f64, 32, 8>::zeros();
        for k in 0..8 {
            // Central difference, shifted inward at the box edge.
            let (a, b) = if x[k] + fd > hi {
                (x[k] - 2.0 * fd, x[k])
            } else if x[k] - fd < lo {
                (x[k], x[k] + 2.0 * fd)
            } else {
                (x[k] - fd, x[k] + fd)
            };
            let mut xa = x;
            let mut xb = x;
            xa[k] = a;
            xb[k] = b;
            let col = (effect_residuals(&xb, target) - effect_residuals(&xa, target)) / (b - a);
            jac.set_column(k, &col);
        }
        let jtj = jac.transpose() * jac;
        let jtr = jac.transpose() * r;
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj;
            for i in 0..8 {
                a[(i, i)] += lambda * (jtj[(i, i)] + 1e-12);
            }
            let Some(step) = a.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let mut cand = x;
            for i in 0..8 {
                cand[i] = (x[i] + step[i]).clamp(lo, hi);
            }
            let rc = effect_residuals(&cand, target);
            let cc = rc.norm_squared();
            if cc < cost {
                x = cand;
                r = rc;
                let gain = cost - cc;
                cost = cc;
                lambda = (lambda / 3.0).max(1e-15);
                improved = gain > 0.0;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    (x, cost)
}

/// Text form of a parameter set with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovmFile {
    pub params: PovmParams,
    pub variant: String,
    pub residual: Option<f64>,
}

impl PovmFile {
    pub fn to_text(&self) -> String {
        let mut s = String::from("# apovm povm parameters v1\n");
        let _ = writeln!(s, "variant {}", self.variant);
        let _ = writeln!(s, "delta {:?}", self.params.delta);
        if let Some(r) = self.residual {
            let _ = writeln!(s, "residual {r:e}");
        }
        for row in &self.params.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.17}")).collect();
            let _ = writeln!(s, "row {}", cells.join(" "));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut variant = String::from("custom");
        let mut delta = DEFAULT_DELTA;
        let mut residual = None;
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Parse { line: i + 1, msg };
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
            match key {
                "variant" => variant = rest.trim().to_string(),
                "delta" => delta = num(rest)?,
                "residual" => residual = Some(num(rest)?),
                "row" => {
                    let vals = rest.split_whitespace().map(num).collect::<Result<Vec<_>>>()?;
                    let row: Row = vals
                        .try_into()
                        .map_err(|v: Vec<f64>| bad(format!("expected 8 values, got {}", v.len())))?;
                    rows.push(row);
                }
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        if rows.is_empty() {
            return Err(Error::Empty("POVM parameter file has no rows"));
        }
        Ok(Self { params: PovmParams::new(rows, delta)?, variant, residual })
    }
}

/// Shipped fitted parameter rows for the two SIC POVMs.
pub fn sic_row(variant: SicVariant) -> Row {
    let text = match variant {
        SicVariant::One => include_str!("../data/sic1.povm"),
        SicVariant::Two => include_str!("../data/sic2.povm"),
    };
    PovmFile::parse(text).expect("shipped SIC file parses").params.rows[0]
}

pub fn sic_params(variant: SicVariant, num_qubits: usize) -> PovmParams {
    PovmParams { rows: vec![sic_row(variant); num_qubits], delta: DEFAULT_DELTA }
}
