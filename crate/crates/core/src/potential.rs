//! Quasi-periodic potentials and frequency arithmetic on the lattice `Z^l`.
//!
//! A potential is the finite trigonometric sum
//! `V(x) = Σ_{0 < |n| ≤ Q} V_n e^{i⟨nω,x⟩}` where `n` runs over integer
//! vectors of the lattice `Z^l`, `|n|` is the sup norm, and
//! `nω = Σ_j n_j ω_j` combines the `l > d` basic frequencies into a vector of
//! `R^d`. Reality of `V` is enforced through the Hermitian symmetry
//! `V_{-n} = conj(V_n)`; the mean value `V_0` is fixed to zero so the
//! dispersion of the free operator carries no constant offset.
//!
//! The overall coupling strength is *not* stored here: coefficients are
//! normalized data and experiments scale them by a coupling `ε`, so one
//! potential serves a whole coupling sweep.

use crate::error::{Error, Result};
use crate::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// The basic frequencies `ω_1,…,ω_l ∈ R^d`, each component in `[-1/2, 1/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyVector {
    d: usize,
    omega: Vec<Vec<f64>>,
}

impl FrequencyVector {
    /// Builds from explicit vectors; validates `l > d ≥ 2` and the component
    /// range `[-1/2, 1/2]`.
    pub fn new(d: usize, omega: Vec<Vec<f64>>) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidFrequencies(format!(
                "spatial dimension d = {d} must be ≥ 2"
            )));
        }
        let l = omega.len();
        if l <= d {
            return Err(Error::InvalidFrequencies(format!(
                "need more basic frequencies than spatial dimensions (l = {l}, d = {d})"
            )));
        }
        for (j, w) in omega.iter().enumerate() {
            if w.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "ω_{} has {} components, expected {}",
                    j + 1,
                    w.len(),
                    d
                )));
            }
            for &c in w {
                if !(-0.5..=0.5).contains(&c) || !c.is_finite() {
                    return Err(Error::InvalidFrequencies(format!(
                        "component {c} of ω_{} outside [-1/2, 1/2]",
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { d, omega })
    }

    /// Spatial dimension `d`.
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of basic frequencies `l`.
    pub fn count(&self) -> usize {
        self.omega.len()
    }

    /// The `j`-th basic frequency (0-based).
    pub fn omega(&self, j: usize) -> &[f64] {
        &self.omega[j]
    }

    /// All basic frequencies.
    pub fn omegas(&self) -> &[Vec<f64>] {
        &self.omega
    }

    /// Largest Euclidean norm among the basic frequencies.
    pub fn max_norm(&self) -> f64 {
        self.omega
            .iter()
            .map(|w| w.iter().map(|c| c * c).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// An integer vector `n ∈ Z^l` with its sup norm.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticeIndex(pub Vec<i64>);

impl LatticeIndex {
    /// Sup norm `|n| = max_j |n_j|`.
    pub fn sup_norm(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    /// True when every component is zero.
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// Component-wise negation.
    pub fn neg(&self) -> Self {
        LatticeIndex(self.0.iter().map(|&c| -c).collect())
    }

    /// Component-wise difference `self - other`.
    pub fn sub(&self, other: &Self) -> Self {
        LatticeIndex(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| a - b)
                .collect(),
        )
    }
}

/// Draws `l` basic frequencies uniformly from `[-1/2, 1/2]^d`,
/// deterministically for a fixed seed.
pub fn sample_frequencies(seed: u64, d: usize, l: usize) -> Result<FrequencyVector> {
    if d < 2 || l <= d {
        return Err(Error::InvalidFrequencies(format!(
            "need l > d ≥ 2 (got d = {d}, l = {l})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = (0..l)
        .map(|_| (0..d).map(|_| rng.gen_range(-0.5..=0.5)).collect())
        .collect();
    FrequencyVector::new(d, omega)
}

/// Computes the frequency `nω = Σ_j n_j ω_j ∈ R^d`.
pub fn frequency_of(n: &LatticeIndex, freq: &FrequencyVector) -> Result<Vec<f64>> {
    if n.0.len() != freq.count() {
        return Err(Error::DimensionMismatch(format!(
            "lattice index has {} components, expected l = {}",
            n.0.len(),
            freq.count()
        )));
    }
    let mut out = vec![0.0; freq.dim()];
    for (j, &nj) in n.0.iter().enumerate() {
        if nj != 0 {
            let w = freq.omega(j);
            for (o, &c) in out.iter_mut().zip(w) {
                *o += nj as f64 * c;
            }
        }
    }
    Ok(out)
}

/// Result of the finite-window Diophantine diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct DiophantineMargin {
    /// The minimizing lattice index.
    pub worst_n: LatticeIndex,
    /// `min_{0<|n|≤N} |nω|·|n|^τ`; strictly positive certifies the absence of
    /// an exact resonance in the window.
    pub margin: f64,
}

/// Finite-window Diophantine diagnostic: minimizes `|nω|·|n|^τ` over
/// `0 < |n| ≤ N` (sup norm on `n`, Euclidean norm on `nω`).
///
/// This diagnoses — it does not enforce — the small-divisor quality of the
/// frequencies; exact rational dependence in the window shows up as a zero
/// margin.
pub fn diophantine_margin(freq: &FrequencyVector, n_max: i64, tau: f64) -> Result<DiophantineMargin> {
    if n_max < 1 {
        return Err(Error::EmptyGrid(format!(
            "diophantine window N = {n_max} must be ≥ 1"
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidFrequencies(format!(
            "diophantine exponent τ = {tau} must be positive"
        )));
    }
    let l = freq.count();
    let mut best: Option<(f64, LatticeIndex)> = None;
    let mut n = vec![-n_max; l];
    loop {
        let idx = LatticeIndex(n.clone());
        if !idx.is_zero() {
            let f = frequency_of(&idx, freq)?;
            let norm = f.iter().map(|c| c * c).sum::<f64>().sqrt();
            let value = norm * (idx.sup_norm() as f64).powf(tau);
            let better = match &best {
                None => true,
                Some((b, _)) => value < *b,
            };
            if better {
                best = Some((value, idx));
            }
        }
        // Odometer increment over the window [-N, N]^l.
        let mut pos = l;
        loop {
            if pos == 0 {
                let (margin, worst_n) = best.expect("window contains nonzero indices");
                return Ok(DiophantineMargin { worst_n, margin });
            }
            pos -= 1;
            if n[pos] < n_max {
                n[pos] += 1;
                for c in n.iter_mut().skip(pos + 1) {
                    *c = -n_max;
                }
                break;
            }
        }
    }
}

/// Hermitian Fourier data of a quasi-periodic potential.
///
/// Coefficients are stored for *all* nonzero `n` with `|n| ≤ Q` that carry a
/// nonzero amplitude, both members of each `±n` pair, in a deterministic
/// (lexicographically ordered) map.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    freq: FrequencyVector,
    q: u32,
    coeffs: BTreeMap<LatticeIndex, Complex>,
}

impl PotentialSpec {
    /// Builds from explicit coefficients, validating Hermitian symmetry
    /// `V_{-n} = conj(V_n)`, the support bound `|n| ≤ Q`, and `V_0 = 0`.
    ///
    /// The input may list either one or both members of each `±n` pair; a
    /// missing mirror is filled in by conjugation, while a present mirror is
    /// checked for consistency.
    pub fn new(
        freq: FrequencyVector,
        q: u32,
        coeffs: Vec<(LatticeIndex, Complex)>,
    ) -> Result<Self> {
        let l = freq.count();
        let mut map: BTreeMap<LatticeIndex, Complex> = BTreeMap::new();
        for (n, v) in coeffs {
            if n.0.len() != l {
                return Err(Error::DimensionMismatch(format!(
                    "coefficient index {:?} has {} components, expected l = {}",
                    n.0,
                    n.0.len(),
                    l
                )));
            }
            if n.is_zero() {
                if v.norm() != 0.0 {
                    return Err(Error::SupportViolation(
                        "mean coefficient V_0 must be zero".into(),
                    ));
                }
                continue;
            }
            if n.sup_norm() > q as i64 {
                return Err(Error::SupportViolation(format!(
                    "coefficient at {:?} outside support |n| ≤ {}",
                    n.0, q
                )));
            }
            if v.norm() == 0.0 {
                continue;
            }
            if let Some(prev) = map.insert(n.clone(), v) {
                if (prev - v).norm() > 1e-15 * (1.0 + v.norm()) {
                    return Err(Error::SupportViolation(format!(
                        "conflicting duplicate coefficient at {:?}",
                        n.0
                    )));
                }
            }
        }
        // Fill or check mirrors.
        let keys: Vec<LatticeIndex> = map.keys().cloned().collect();
        for n in keys {
            let v = map[&n];
            let m = n.neg();
            match map.get(&m) {
                None => {
                    map.insert(m, v.conj());
                }
                Some(&w) => {
                    if (w - v.conj()).norm() > 1e-12 * (1.0 + v.norm()) {
                        return Err(Error::HermitianViolation(n.0.clone()));
                    }
                }
            }
        }
        Ok(Self { freq, q, coeffs: map })
    }

    /// Random Hermitian potential: `pairs` coefficient pairs at distinct
    /// indices of sup norm ≤ `q`, unit-modulus random phases, amplitudes
    /// normalized so `Σ_{n≠0} |V_n| = 1`.
    ///
    /// The first `min(pairs, l)` indices are the unit lattice vectors
    /// `e_1, e_2, …` — guaranteeing the potential couples every basic
    /// frequency — and any further indices are drawn from the window.
    pub fn random_normalized(
        seed: u64,
        freq: FrequencyVector,
        q: u32,
        pairs: usize,
    ) -> Result<Self> {
        if q < 1 {
            return Err(Error::SupportViolation(
                "support radius Q must be ≥ 1".into(),
            ));
        }
        if pairs == 0 {
            return Err(Error::SupportViolation(
                "need at least one coefficient pair".into(),
            ));
        }
        let l = freq.count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(17));
        let mut chosen: Vec<LatticeIndex> = Vec::new();
        for j in 0..pairs.min(l) {
            let mut e = vec![0i64; l];
            e[j] = 1;
            chosen.push(LatticeIndex(e));
        }
        let mut guard = 0;
        while chosen.len() < pairs {
            let cand = LatticeIndex(
                (0..l)
                    .map(|_| rng.gen_range(-(q as i64)..=q as i64))
                    .collect(),
            );
            let canonical = canonical_representative(&cand);
            if !cand.is_zero() && !chosen.contains(&canonical) {
                chosen.push(canonical);
            }
            guard += 1;
            if guard > 10_000 {
                return Err(Error::SupportViolation(format!(
                    "cannot place {pairs} distinct pairs inside |n| ≤ {q}"
                )));
            }
        }
        let amp = 1.0 / (2 * pairs) as f64;
        let coeffs = chosen
            .into_iter()
            .map(|n| {
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                (n, Complex::from_polar(amp, phase))
            })
            .collect();
        Self::new(freq, q, coeffs)
    }

    /// The basic frequencies.
    pub fn freq(&self) -> &FrequencyVector {
        &self.freq
    }

    /// Fourier support radius `Q`.
    pub fn q(&self) -> u32 {
        self.q
    }

    /// Coefficient `V_n` (zero when absent from the support).
    pub fn coeff(&self, n: &LatticeIndex) -> Complex {
        self.coeffs.get(n).copied().unwrap_or(Complex::new(0.0, 0.0))
    }

    /// All stored nonzero coefficients in deterministic lexicographic order,
    /// both members of each `±n` pair.
    pub fn coeffs(&self) -> impl Iterator<Item = (&LatticeIndex, &Complex)> {
        self.coeffs.iter()
    }

    /// Number of stored nonzero coefficients.
    pub fn support_len(&self) -> usize {
        self.coeffs.len()
    }

    /// `Σ_{n≠0} |V_n|` — scales the sup norm of the potential.
    pub fn amplitude_l1(&self) -> f64 {
        self.coeffs.values().map(|v| v.norm()).sum()
    }

    /// Evaluates `V(x) = Σ V_n e^{i⟨nω,x⟩}` by direct summation, returning
    /// the real value.
    ///
    /// By Hermitian symmetry the imaginary residue of the sum is pure
    /// roundoff; it is asserted below `10⁻¹²` (relative to the amplitude
    /// scale) and discarded.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.freq.dim() {
            return Err(Error::DimensionMismatch(format!(
                "point has {} components, expected d = {}",
                x.len(),
                self.freq.dim()
            )));
        }
        let mut acc = Complex::new(0.0, 0.0);
        for (n, v) in &self.coeffs {
            let f = frequency_of(n, &self.freq)?;
            let phase: f64 = f.iter().zip(x).map(|(a, b)| a * b).sum();
            acc += v * Complex::from_polar(1.0, phase);
        }
        let scale = self.amplitude_l1().max(1.0);
        debug_assert!(
            acc.im.abs() < 1e-12 * scale,
            "imaginary residue {} exceeds tolerance",
            acc.im
        );
        Ok(acc.re)
    }

    /// Serializes to the interchange JSON document. Only the
    /// lexicographically positive member of each `±n` pair is stored; the
    /// mirror is implied by Hermitian symmetry.
    pub fn to_json(&self) -> String {
        let doc = PotentialDoc::from(self);
        serde_json::to_string_pretty(&doc).expect("potential serialization cannot fail")
    }

    /// Deserializes from the interchange JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PotentialDoc =
            serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        doc.try_into()
    }
}

/// Picks the lexicographically positive member of a `±n` pair: the first
/// nonzero component is positive.
pub fn canonical_representative(n: &LatticeIndex) -> LatticeIndex {
    for &c in &n.0 {
        if c > 0 {
            return n.clone();
        }
        if c < 0 {
            return n.neg();
        }
    }
    n.clone()
}

#[derive(Serialize, Deserialize)]
struct CoeffDoc {
    n: Vec<i64>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct PotentialDoc {
    d: usize,
    l: usize,
    #[serde(rename = "Q")]
    q: u32,
    omega: Vec<Vec<f64>>,
    coeffs: Vec<CoeffDoc>,
}

impl From<&PotentialSpec> for PotentialDoc {
    fn from(spec: &PotentialSpec) -> Self {
        let coeffs = spec
            .coeffs
            .iter()
            .filter(|(n, _)| canonical_representative(n) == **n)
            .map(|(n, v)| CoeffDoc {
                n: n.0.clone(),
                re: v.re,
                im: v.im,
            })
            .collect();
        PotentialDoc {
            d: spec.freq.dim(),
            l: spec.freq.count(),
            q: spec.q,
            omega: spec.freq.omegas().to_vec(),
            coeffs,
        }
    }
}

impl TryFrom<PotentialDoc> for PotentialSpec {
    type Error = Error;

    fn try_from(doc: PotentialDoc) -> Result<Self> {
        if doc.omega.len() != doc.l {
            return Err(Error::Serialization(format!(
                "document lists {} frequencies but declares l = {}",
                doc.omega.len(),
                doc.l
            )));
        }
        let freq = FrequencyVector::new(doc.d, doc.omega)?;
        let coeffs = doc
            .coeffs
            .into_iter()
            .map(|c| (LatticeIndex(c.n), Complex::new(c.re, c.im)))
            .collect();
        PotentialSpec::new(freq, doc.q, coeffs)
    }
}

/// Enumerates the lattice window `|n| ≤ m` of `Z^l` in lexicographic order.
pub fn lattice_window(l: usize, m: i64) -> Vec<LatticeIndex> {
    let side = (2 * m + 1) as usize;
    let count = side.pow(l as u32);
    let mut out = Vec::with_capacity(count);
    let mut n = vec![-m; l];
    for _ in 0..count {
        out.push(LatticeIndex(n.clone()));
        for pos in (0..l).rev() {
            if n[pos] < m {
                n[pos] += 1;
                for c in n.iter_mut().skip(pos + 1) {
                    *c = -m;
                }
                break;
            }
        }
    }
    out
}
