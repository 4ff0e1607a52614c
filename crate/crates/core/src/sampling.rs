//! Outcome sampling for product POVMs and for Pauli-basis measurements.
//!
//! Every shot draws from its own counter-based stream, a ChaCha8 generator
//! seeded with the batch seed and positioned on stream `shot index`, so the
//! batch is identical whatever the thread count.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::{BasisLabel, PauliString};
use crate::parallel;
use crate::povm::LocalPovm;
use crate::simulator::StateVector;

/// Largest qubit count for exhaustive outcome enumeration.
pub const ENUMERATION_LIMIT: usize = 8;
const NORM_FLOOR: f64 = 1e-14;

pub(crate) fn shot_rng(seed: u64, shot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot as u64);
    rng
}

/// Child seed for job `index` (iteration, term, group), decorrelated from
/// neighbouring indices by a splitmix64 finalizer.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `S` outcome strings over `{0, 1, 2, 3}`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeBatch {
    pub num_qubits: usize,
    pub outcomes: Vec<u8>,
    pub povm_id: String,
    pub seed: u64,
}

impl OutcomeBatch {
    pub fn new(num_qubits: usize, outcomes: Vec<u8>, povm_id: impl Into<String>, seed: u64) -> Result<Self> {
        if num_qubits == 0 || !outcomes.len().is_multiple_of(num_qubits) {
            return Err(Error::InvalidArgument("outcome buffer is not a whole number of rows".into()));
        }
        if outcomes.iter().any(|&m| m > 3) {
            return Err(Error::InvalidArgument("outcome digit above 3".into()));
        }
        Ok(Self { num_qubits, outcomes, povm_id: povm_id.into(), seed })
    }

    pub fn shots(&self) -> usize {
        self.outcomes.len() / self.num_qubits.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn row(&self, s: usize) -> &[u8] {
        &self.outcomes[s * self.num_qubits..(s + 1) * self.num_qubits]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.outcomes.chunks(self.num_qubits)
    }

    /// First `shots` rows.
    pub fn truncated(&self, shots: usize) -> Self {
        let n = shots.min(self.shots()) * self.num_qubits;
        Self { outcomes: self.outcomes[..n].to_vec(), ..self.clone() }
    }

    /// CSV with a `#` header recording provenance, then `shot,digits` rows
    /// (qubit 0 first).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# povm_id={} seed={} shots={} num_qubits={}",
            self.povm_id,
            self.seed,
            self.shots(),
            self.num_qubits
        )?;
        writeln!(w, "shot,outcome")?;
        let mut line = String::new();
        for (s, row) in self.rows().enumerate() {
            line.clear();
            let _ = write!(line, "{s},");
            line.extend(row.iter().map(|&m| char::from(b'0' + m)));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut povm_id = String::new();
        let mut seed = 0u64;
        let mut shots = None;
        let mut num_qubits = None;
        let mut outcomes = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let bad = |msg: String| Error::Parse { line: i + 1, msg };
            if let Some(header) = line.strip_prefix('#') {
                for kv in header.split_whitespace() {
                    let Some((k, v)) = kv.split_once('=') else { continue };
                    match k {
                        "povm_id" => povm_id = v.to_string(),
                        "seed" => seed = v.parse().map_err(|_| bad(format!("bad seed {v:?}")))?,
                        "shots" => shots = Some(v.parse::<usize>().map_err(|_| bad(format!("bad shots {v:?}")))?),
                        "num_qubits" => {
                            num_qubits = Some(v.parse::<usize>().map_err(|_| bad(format!("bad num_qubits {v:?}")))?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if line.trim().is_empty() || line.starts_with("shot") {
                continue;
            }
            let (_, digits) = line.split_once(',').ok_or_else(|| bad("expected `shot,outcome`".into()))?;
            let n = *num_qubits.get_or_insert(digits.len());
            if digits.len() != n {
                return Err(bad(format!("expected {n} digits, got {}", digits.len())));
            }
            for c in digits.bytes() {
                if !(b'0'..=b'3').contains(&c) {
                    return Err(bad(format!("bad outcome digit {:?}", c as char)));
                }
                outcomes.push(c - b'0');
            }
        }
        let n = num_qubits.ok_or(Error::Empty("outcome batch file"))?;
        let batch = Self::new(n, outcomes, povm_id, seed)?;
        if let Some(s) = shots {
            if s != batch.shots() {
                return Err(Error::Parse { line: 1, msg: format!("header says {s} shots, found {}", batch.shots()) });
            }
        }
        Ok(batch)
    }
}

/// Index of an outcome string in a `4^N` table (qubit 0 least significant).
pub fn outcome_index(m: &[u8]) -> usize {
    m.iter().rev().fold(0, |acc, &d| acc * 4 + d as usize)
}

pub fn outcome_from_index(mut idx: usize, num_qubits: usize) -> Vec<u8> {
    (0..num_qubits)
        .map(|_| {
            let d = (idx % 4) as u8;
            idx /= 4;
            d
        })
        .collect()
}

/// Contract `⟨π|` onto qubit 0 of `amps`, writing the remaining qubits into
/// `out` and returning its squared norm.
#[inline]
fn contract_low(amps: &[Complex64], v: &nalgebra::Vector2<Complex64>, out: &mut [Complex64]) -> f64 {
    let (a, b) = (v[0].conj(), v[1].conj());
    let mut norm = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        *o = a * amps[2 * j] + b * amps[2 * j + 1];
        norm += o.norm_sqr();
    }
    norm
}

fn check_povms(state: &StateVector, povms: &[LocalPovm]) -> Result<()> {
    if povms.len() != state.num_qubits() {
        return Err(Error::DimensionMismatch { expected: state.num_qubits(), got: povms.len() });
    }
    Ok(())
}

/// Draw `shots` i.i.d. outcome strings from `p_m = Tr[ρ ⊗_i Π_{m_i}]` by
/// sequential conditional sampling in ascending qubit order.
pub fn sample_povm(
    state: &StateVector,
    povms: &[LocalPovm],
    shots: usize,
    seed: u64,
    povm_id: impl Into<String>,
) -> Result<OutcomeBatch> {
    check_povms(state, povms)?;
    let n = state.num_qubits();
    let parts = parallel::map_chunks(shots, parallel::CHUNK, |start, end| -> Result<Vec<u8>> {
        let dim = 1usize << n;
        let mut cur = vec![Complex64::new(0.0, 0.0); dim];
        let mut cand: [Vec<Complex64>; 4] = std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); dim / 2]);
        let mut out = Vec::with_capacity((end - start) * n);
        for s in start..end {
            let mut rng = shot_rng(seed, s);
            cur.copy_from_slice(state.amplitudes());
            let mut len = dim;
            for povm in povms {
                let half = len / 2;
                let mut probs = [0.0f64; 4];
                for m in 0..4 {
                    probs[m] = contract_low(&cur[..len], &povm.vectors[m], &mut cand[m][..half]);
                }
                let total: f64 = probs.iter().sum();
                if total < NORM_FLOOR {
                    return Err(Error::ZeroNorm);
                }
                let u = rng.gen::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = 3;
                for (m, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc && *p > 0.0 {
                        pick = m;
                        break;
                    }
                }
                while probs[pick] <= 0.0 {
                    pick -= 1;
                }
                let scale = 1.0 / probs[pick].sqrt();
                for (c, v) in cur[..half].iter_mut().zip(&cand[pick][..half]) {
                    *c = v * scale;
                }
                len = half;
                out.push(pick as u8);
            }
        }
        Ok(out)
    });
    let mut outcomes = Vec::with_capacity(shots * n);
    for p in parts {
        outcomes.extend(p?);
    }
    OutcomeBatch::new(n.max(1), outcomes, povm_id, seed)
}

/// Exact outcome distribution over all `4^N` strings, indexed by
/// [`outcome_index`].
pub fn enumerate_probabilities(state: &StateVector, povms: &[LocalPovm]) -> Result<Vec<f64>> {
    check_povms(state, povms)?;
    let n = state.num_qubits();
    if n > ENUMERATION_LIMIT {
        return Err(Error::TooLarge { qubits: n, limit: ENUMERATION_LIMIT });
    }
    // branches[p] is the unnormalized state of the remaining qubits after
    // the outcome prefix with table index p.
    let mut branches: Vec<Vec<Complex64>> = vec![state.amplitudes().to_vec()];
    for (q, povm) in povms.iter().enumerate() {
        let half = 1usize << (n - q - 1);
        let mut next = vec![Vec::new(); branches.len() * 4];
        for (p, amps) in branches.iter().enumerate() {
            for m in 0..4 {
                let mut out = vec![Complex64::new(0.0, 0.0); half];
                contract_low(amps, &povm.vectors[m], &mut out);
                next[p + m * (1 << (2 * q))] = out;
            }
        }
        branches = next;
    }
    Ok(branches.into_iter().map(|v| v[0].norm_sqr()).collect())
}

/// Computational-basis samples after rotating each measured qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct BitstringBatch {
    pub num_qubits: usize,
    pub basis: Vec<BasisLabel>,
    /// Bit `q` of entry `s` is the outcome of qubit `q` in shot `s`.
    pub bits: Vec<u64>,
    pub seed: u64,
}

impl BitstringBatch {
    pub fn shots(&self) -> usize {
        self.bits.len()
    }

    /// `±1` eigenvalue of `p` in shot `s`; `p` must be diagonal in the basis.
    pub fn eigenvalue(&self, s: usize, p: &PauliString) -> f64 {
        let (x, z) = p.masks();
        if (self.bits[s] & (x | z)).count_ones() % 2 == 1 {
            -1.0
        } else {
            1.0
        }
    }
}

fn hadamard() -> [[Complex64; 2]; 2] {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

/// Probabilities of the `2^N` bitstrings after rotating each measured qubit
/// into the computational basis (`X`: H, `Y`: H S†).
pub fn pauli_basis_probabilities(state: &StateVector, basis: &[BasisLabel]) -> Result<Vec<f64>> {
    let n = state.num_qubits();
    if basis.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: basis.len() });
    }
    let mut rotated = state.clone();
    let sdg = [
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        [Complex64::new(0.0, 0.0), Complex64::new(0.0, -1.0)],
    ];
    for (q, b) in basis.iter().enumerate() {
        match b {
            BasisLabel::X => rotated.apply_single(q, hadamard()),
            BasisLabel::Y => {
                rotated.apply_single(q, sdg);
                rotated.apply_single(q, hadamard());
            }
            BasisLabel::Z | BasisLabel::Free => {}
        }
    }
    Ok(rotated.amplitudes().iter().map(|a| a.norm_sqr()).collect())
}

/// Rotate into the measurement basis and sample bitstrings.
pub fn sample_pauli_basis(state: &StateVector, basis: &[BasisLabel], shots: usize, seed: u64) -> Result<BitstringBatch> {
    let n = state.num_qubits();
    let probs = pauli_basis_probabilities(state, basis)?;
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    let last_nonzero = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    let bits = parallel::map_indexed(shots, |s| {
        let u = shot_rng(seed, s).gen::<f64>() * total;
        let idx = cdf.partition_point(|&c| c <= u);
        idx.min(last_nonzero) as u64
    });
    Ok(BitstringBatch { num_qubits: n, basis: basis.to_vec(), bits, seed })
}
