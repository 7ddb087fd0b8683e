//! Synthetic associative memory standing in for one MLP down-projection.
//!
//! A memory is a weight `W: d_m x d_k` fitted so that each fact key maps to
//! the vocabulary vector of its label, plus a linear-softmax readout over the
//! vocabulary. [`build_knowledge_sets`] assembles the forget/utility
//! matrices that every editor consumes.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::solve_right_sym;
use crate::matrix::{expect_shape, Matrix};
use crate::rng::{dot, gaussian_vec, norm, normalize, stream, unit_gaussian_vec, Stream};

const FIT_RIDGE: f64 = 1e-6;
const FIT_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct FactRecord {
    pub id: usize,
    /// Unit-norm key vector of length `d_k`.
    pub key: Vec<f64>,
    pub value_label: usize,
    /// Target output of length `d_m` (the label's vocabulary vector).
    pub value: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssociativeMemory {
    pub w: Matrix,
    /// `d_m x vocab_size`, one unit-norm column per label.
    pub vocabulary: Matrix,
    pub temperature: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryParams {
    pub seed: u64,
    pub d_k: usize,
    pub d_m: usize,
    pub n_facts: usize,
    pub vocab_size: usize,
    pub temperature: f64,
}

impl AssociativeMemory {
    pub fn new(w: Matrix, vocabulary: Matrix, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::validation(format!("temperature must be > 0, got {temperature}")));
        }
        if vocabulary.rows() != w.rows() {
            return Err(Error::validation(format!(
                "vocabulary vectors have length {} but W has {} output rows",
                vocabulary.rows(),
                w.rows()
            )));
        }
        if vocabulary.cols() < 2 {
            return Err(Error::validation("vocabulary needs at least 2 entries"));
        }
        for (j, v) in vocabulary.columns().iter().enumerate() {
            if (norm(v) - 1.0).abs() > 1e-9 {
                return Err(Error::validation(format!("vocabulary vector {j} is not unit-norm")));
            }
        }
        Ok(AssociativeMemory {
            w,
            vocabulary,
            temperature,
        })
    }

    pub fn d_k(&self) -> usize {
        self.w.cols()
    }

    pub fn d_m(&self) -> usize {
        self.w.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.cols()
    }

    /// Same vocabulary and readout, different weight.
    pub fn with_weight(&self, w: Matrix) -> Result<Self> {
        expect_shape(&w, self.d_m(), self.d_k(), "edited weight")?;
        Ok(AssociativeMemory {
            w,
            vocabulary: self.vocabulary.clone(),
            temperature: self.temperature,
        })
    }

    /// Layer output `W k`.
    pub fn output(&self, key: &[f64]) -> Vec<f64> {
        self.w.apply_vec(key)
    }

    /// Softmax over the vocabulary of an output vector.
    pub fn readout_output(&self, output: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = (0..self.vocab_size())
            .map(|j| dot(&self.vocabulary.column(j), output) / self.temperature)
            .collect();
        softmax(&logits)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Probability over the vocabulary for `key`: `softmax(V^T (W key) / T)`.
pub fn readout(memory: &AssociativeMemory, key: &[f64]) -> Vec<f64> {
    memory.readout_output(&memory.output(key))
}

/// Index of the largest probability, lowest index on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub fn generate_memory(params: &MemoryParams) -> Result<(AssociativeMemory, Vec<FactRecord>)> {
    let MemoryParams {
        seed,
        d_k,
        d_m,
        n_facts,
        vocab_size,
        temperature,
    } = *params;
    if d_k == 0 || d_m == 0 {
        return Err(Error::validation("d_k and d_m must be positive"));
    }
    if n_facts > d_k {
        return Err(Error::validation(format!(
            "n_facts ({n_facts}) must not exceed d_k ({d_k}) so that fact keys stay independent"
        )));
    }
    if vocab_size < 2 {
        return Err(Error::validation(format!("vocab_size must be >= 2, got {vocab_size}")));
    }

    let vocab_cols: Vec<Vec<f64>> = (0..vocab_size)
        .map(|j| unit_gaussian_vec(&mut stream(seed, Stream::Vocabulary, j as u64), d_m))
        .collect();
    let vocabulary = Matrix::from_columns(d_m, &vocab_cols)?;

    let facts: Vec<FactRecord> = (0..n_facts)
        .map(|i| {
            let key = unit_gaussian_vec(&mut stream(seed, Stream::Keys, i as u64), d_k);
            let label = i % vocab_size;
            FactRecord {
                id: i,
                key,
                value_label: label,
                value: vocab_cols[label].clone(),
            }
        })
        .collect();

    let w = if facts.is_empty() {
        Matrix::zeros(d_m, d_k)
    } else {
        fit_weight(&facts, d_k, d_m)?
    };
    for f in &facts {
        let out = w.apply_vec(&f.key);
        let err = norm(&out.iter().zip(&f.value).map(|(a, b)| a - b).collect::<Vec<_>>());
        if err > FIT_TOLERANCE {
            return Err(Error::numerical(format!(
                "memory fit residual {err:.3e} for fact {} exceeds {FIT_TOLERANCE:e}; keys are too ill-conditioned",
                f.id
            )));
        }
    }
    let memory = AssociativeMemory::new(w, vocabulary, temperature)?;
    Ok((memory, facts))
}

/// Ridge least squares `min |W K - V|^2 + ridge |W|^2`, solved in the
/// `n x n` dual form `W = V (K^T K + ridge I)^{-1} K^T`.
fn fit_weight(facts: &[FactRecord], d_k: usize, d_m: usize) -> Result<Matrix> {
    let keys = Matrix::from_columns(d_k, &facts.iter().map(|f| f.key.clone()).collect::<Vec<_>>())?;
    let values = Matrix::from_columns(d_m, &facts.iter().map(|f| f.value.clone()).collect::<Vec<_>>())?;
    let gram = &keys.t_matmul(&keys) + &Matrix::identity(facts.len()).scale(FIT_RIDGE);
    let coeffs = solve_right_sym(&values, &gram, 0.0)?.x;
    coeffs.matmul_t(&keys).ensure_finite("memory fit")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyParams {
    /// Number of random prefixes averaged per key (at least 1).
    pub n_prefixes: usize,
    /// Standard deviation of the per-prefix key perturbation.
    pub prefix_noise: f64,
    pub seed: u64,
}

/// Prefix-averaged key: `(1/N) sum_j normalize(key + eps_j)`, with
/// `eps_j ~ N(0, noise^2 I)` drawn from a stream keyed by the fact id.
pub fn extract_key(fact: &FactRecord, n_prefixes: usize, prefix_noise: f64, seed: u64) -> Vec<f64> {
    extract_key_in(fact, n_prefixes, prefix_noise, seed, Stream::Prefix)
}

pub(crate) fn extract_key_in(
    fact: &FactRecord,
    n_prefixes: usize,
    prefix_noise: f64,
    seed: u64,
    tag: Stream,
) -> Vec<f64> {
    let n = n_prefixes.max(1);
    if prefix_noise == 0.0 {
        return fact.key.clone();
    }
    let mut rng = stream(seed, tag, fact.id as u64);
    let mut acc = vec![0.0; fact.key.len()];
    for _ in 0..n {
        let eps = gaussian_vec(&mut rng, fact.key.len());
        let mut k: Vec<f64> = fact.key.iter().zip(&eps).map(|(k, e)| k + prefix_noise * e).collect();
        normalize(&mut k);
        acc.iter_mut().zip(&k).for_each(|(a, x)| *a += x);
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeutralMode {
    /// One neutral vector repeated for every forget column.
    SharedNeutral,
    /// An independent neutral vector per forget column.
    PerFactNeutral,
}

/// Forget and utility blocks for one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeSets {
    k_f: Matrix,
    m_f: Matrix,
    k_0: Matrix,
    m_0: Matrix,
    m_n: Matrix,
}

impl KnowledgeSets {
    pub fn new(k_f: Matrix, m_f: Matrix, k_0: Matrix, m_0: Matrix, m_n: Matrix) -> Result<Self> {
        let (d_k, n_f) = k_f.shape();
        let d_m = m_f.rows();
        let n_0 = k_0.cols();
        expect_shape(&m_f, d_m, n_f, "M_f")?;
        expect_shape(&k_0, d_k, n_0, "K_0")?;
        expect_shape(&m_0, d_m, n_0, "M_0")?;
        expect_shape(&m_n, d_m, n_f, "M_n")?;
        if n_0 == 0 {
            return Err(Error::validation("the utility set needs at least one key"));
        }
        if d_k == 0 || d_m == 0 {
            return Err(Error::validation("key and value dimensions must be positive"));
        }
        Ok(KnowledgeSets {
            k_f,
            m_f,
            k_0,
            m_0,
            m_n,
        })
    }

    /// Builds the sets with `M_f = W K_f` and `M_0 = W K_0`.
    pub fn from_weight(w: &Matrix, k_f: Matrix, k_0: Matrix, m_n: Matrix) -> Result<Self> {
        if k_f.rows() != w.cols() || k_0.rows() != w.cols() {
            return Err(Error::validation(format!(
                "keys have length {}/{} but W expects {}",
                k_f.rows(),
                k_0.rows(),
                w.cols()
            )));
        }
        let m_f = w.matmul(&k_f);
        let m_0 = w.matmul(&k_0);
        Self::new(k_f, m_f, k_0, m_0, m_n)
    }

    pub fn k_f(&self) -> &Matrix {
        &self.k_f
    }
    pub fn m_f(&self) -> &Matrix {
        &self.m_f
    }
    pub fn k_0(&self) -> &Matrix {
        &self.k_0
    }
    pub fn m_0(&self) -> &Matrix {
        &self.m_0
    }
    pub fn m_n(&self) -> &Matrix {
        &self.m_n
    }
    pub fn d_k(&self) -> usize {
        self.k_f.rows()
    }
    pub fn d_m(&self) -> usize {
        self.m_f.rows()
    }
    pub fn n_forget(&self) -> usize {
        self.k_f.cols()
    }
    pub fn n_utility(&self) -> usize {
        self.k_0.cols()
    }

    pub(crate) fn check_weight(&self, w: &Matrix) -> Result<()> {
        expect_shape(w, self.d_m(), self.d_k(), "W")
    }
}

pub fn build_knowledge_sets(
    memory: &AssociativeMemory,
    facts: &[FactRecord],
    forget_ids: &[usize],
    n_utility: usize,
    m_n_mode: NeutralMode,
    key_params: &KeyParams,
) -> Result<KnowledgeSets> {
    let d_k = memory.d_k();
    let d_m = memory.d_m();
    let mut seen = HashSet::new();
    for &id in forget_ids {
        if !seen.insert(id) {
            return Err(Error::validation(format!("duplicate forget id {id}")));
        }
    }
    if n_utility == 0 {
        return Err(Error::validation("n_utility must be >= 1"));
    }
    if key_params.n_prefixes == 0 {
        return Err(Error::validation("n_prefixes must be >= 1"));
    }
    if !(key_params.prefix_noise >= 0.0) {
        return Err(Error::validation("prefix_noise must be >= 0"));
    }
    let forget: Vec<&FactRecord> = forget_ids
        .iter()
        .map(|&id| {
            facts
                .iter()
                .find(|f| f.id == id)
                .ok_or_else(|| Error::validation(format!("forget id {id} is not a known fact")))
        })
        .collect::<Result<_>>()?;

    let kf_cols: Vec<Vec<f64>> = forget
        .iter()
        .map(|f| extract_key(f, key_params.n_prefixes, key_params.prefix_noise, key_params.seed))
        .collect();
    let k_f = Matrix::from_columns(d_k, &kf_cols)?;

    let k0_cols: Vec<Vec<f64>> = (0..n_utility)
        .map(|i| unit_gaussian_vec(&mut stream(key_params.seed, Stream::Utility, i as u64), d_k))
        .collect();
    let k_0 = Matrix::from_columns(d_k, &k0_cols)?;

    let basis = orthonormal_basis(&memory.vocabulary);
    let mn_cols: Vec<Vec<f64>> = match m_n_mode {
        NeutralMode::SharedNeutral => {
            if forget.is_empty() {
                Vec::new()
            } else {
                let v = neutral_vector(&basis, d_m, key_params.seed, 0)?;
                vec![v; forget.len()]
            }
        }
        NeutralMode::PerFactNeutral => (0..forget.len())
            .map(|j| neutral_vector(&basis, d_m, key_params.seed, j as u64 + 1))
            .collect::<Result<_>>()?,
    };
    let m_n = Matrix::from_columns(d_m, &mn_cols)?;

    KnowledgeSets::from_weight(&memory.w, k_f, k_0, m_n)
}

/// Modified Gram-Schmidt over the columns, dropping dependent ones.
fn orthonormal_basis(vectors: &Matrix) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors.columns() {
        let mut r = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&r, b);
                r.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = norm(&r);
        if n > 1e-10 * norm(&v).max(1.0) {
            r.iter_mut().for_each(|x| *x /= n);
            basis.push(r);
        }
    }
    basis
}

/// Unit vector orthogonal to every vocabulary vector.
fn neutral_vector(basis: &[Vec<f64>], d_m: usize, seed: u64, index: u64) -> Result<Vec<f64>> {
    let mut v = unit_gaussian_vec(&mut stream(seed, Stream::Neutral, index), d_m);
    for _ in 0..2 {
        for b in basis {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
    let n = norm(&v);
    if n < 1e-8 {
        return Err(Error::validation(format!(
            "vocabulary spans all of R^{d_m}; no neutral direction is left (need vocab_size < d_m)"
        )));
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(seed: u64) -> MemoryParams {
        MemoryParams {
            seed,
            d_k: 16,
            d_m: 16,
            n_facts: 12,
            vocab_size: 8,
            temperature: 0.1,
        }
    }

    fn kp(seed: u64) -> KeyParams {
        KeyParams {
            n_prefixes: 4,
            prefix_noise: 0.05,
            seed,
        }
    }

    #[test]
    fn generated_memory_reads_out_every_fact() {
        let (mem, facts) = generate_memory(&params(1)).unwrap();
        assert_eq!(facts.len(), 12);
        for f in &facts {
            assert!((norm(&f.key) - 1.0).abs() < 1e-12);
            assert_eq!(f.value_label, f.id % 8);
            let p = readout(&mem, &f.key);
            assert_eq!(argmax(&p), f.value_label, "fact {}", f.id);
        }
    }

    #[test]
    fn empty_memory_is_valid() {
        let mut p = params(1);
        p.n_facts = 0;
        let (mem, facts) = generate_memory(&p).unwrap();
        assert!(facts.is_empty());
        assert_eq!(mem.w.shape(), (16, 16));
    }

    #[test]
    fn generation_is_deterministic() {
        let (a, fa) = generate_memory(&params(3)).unwrap();
        let (b, fb) = generate_memory(&params(3)).unwrap();
        assert_eq!(a.w.row_major(), b.w.row_major());
        assert_eq!(fa, fb);
        let (c, _) = generate_memory(&params(4)).unwrap();
        assert_ne!(a.w.row_major(), c.w.row_major());
    }

    #[test]
    fn generation_validates() {
        let mut p = params(1);
        p.n_facts = 17;
        assert!(matches!(generate_memory(&p), Err(Error::Validation(_))));
        let mut p = params(1);
        p.vocab_size = 1;
        assert!(matches!(generate_memory(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn noiseless_extraction_returns_the_key() {
        let (_, facts) = generate_memory(&params(1)).unwrap();
        assert_eq!(extract_key(&facts[0], 16, 0.0, 9), facts[0].key);
    }

    #[test]
    fn single_prefix_replays_the_stream() {
        let (_, facts) = generate_memory(&params(1)).unwrap();
        let f = &facts[2];
        let got = extract_key(f, 1, 0.1, 2);
        let eps = gaussian_vec(&mut stream(2, Stream::Prefix, f.id as u64), f.key.len());
        let mut want: Vec<f64> = f.key.iter().zip(&eps).map(|(k, e)| k + 0.1 * e).collect();
        normalize(&mut want);
        assert_eq!(got, want);
    }

    #[test]
    fn more_prefixes_concentrate_the_key() {
        let (_, facts) = generate_memory(&params(1)).unwrap();
        let err = |n: usize| -> f64 {
            (0..50)
                .map(|s| {
                    let k = extract_key(&facts[0], n, 0.05, s);
                    norm(&k.iter().zip(&facts[0].key).map(|(a, b)| a - b).collect::<Vec<_>>())
                })
                .sum::<f64>()
                / 50.0
        };
        assert!(err(64) < err(4));
    }

    #[test]
    fn knowledge_sets_for_empty_forget_set() {
        let (mem, facts) = generate_memory(&params(1)).unwrap();
        let sets = build_knowledge_sets(&mem, &facts, &[], 64, NeutralMode::SharedNeutral, &kp(1)).unwrap();
        assert_eq!(sets.n_forget(), 0);
        assert_eq!(sets.m_n().shape(), (16, 0));
        assert_eq!(sets.k_0().shape(), (16, 64));
        assert_eq!(sets.m_0(), &mem.w.matmul(sets.k_0()));
    }

    #[test]
    fn shared_neutral_is_orthogonal_to_vocabulary() {
        let (mem, facts) = generate_memory(&params(1)).unwrap();
        let sets = build_knowledge_sets(&mem, &facts, &[0, 4, 7], 64, NeutralMode::SharedNeutral, &kp(1)).unwrap();
        let m_n = sets.m_n();
        assert_eq!(m_n.column(0), m_n.column(1));
        assert_eq!(m_n.column(0), m_n.column(2));
        assert!((norm(&m_n.column(0)) - 1.0).abs() < 1e-12);
        let overlap = mem.vocabulary.t_matmul(m_n).max_abs();
        assert!(overlap <= 1e-10, "overlap {overlap:e}");
        // M_0 is definitionally W K_0, bit for bit
        assert_eq!((sets.m_0() - &mem.w.matmul(sets.k_0())).frobenius_norm(), 0.0);
    }

    #[test]
    fn per_fact_neutral_columns_differ() {
        let (mem, facts) = generate_memory(&params(1)).unwrap();
        let sets = build_knowledge_sets(&mem, &facts, &[1, 2], 8, NeutralMode::PerFactNeutral, &kp(1)).unwrap();
        assert_ne!(sets.m_n().column(0), sets.m_n().column(1));
        assert!(mem.vocabulary.t_matmul(sets.m_n()).max_abs() <= 1e-10);
    }

    #[test]
    fn knowledge_sets_validate() {
        let (mem, facts) = generate_memory(&params(1)).unwrap();
        let bad = build_knowledge_sets(&mem, &facts, &[1, 1], 8, NeutralMode::SharedNeutral, &kp(1));
        assert!(matches!(bad, Err(Error::Validation(_))));
        let bad = build_knowledge_sets(&mem, &facts, &[99], 8, NeutralMode::SharedNeutral, &kp(1));
        assert!(matches!(bad, Err(Error::Validation(_))));
        let bad = build_knowledge_sets(&mem, &facts, &[1], 0, NeutralMode::SharedNeutral, &kp(1));
        assert!(matches!(bad, Err(Error::Validation(_))));
    }

    #[test]
    fn readout_limits() {
        let (mem, facts) = generate_memory(&params(1)).unwrap();
        let zero = mem.with_weight(Matrix::zeros(16, 16)).unwrap();
        let p = readout(&zero, &facts[0].key);
        assert!(p.iter().all(|&x| (x - 0.125).abs() < 1e-15));

        let sharp = AssociativeMemory::new(mem.w.clone(), mem.vocabulary.clone(), 1e-3).unwrap();
        let p = readout(&sharp, &facts[3].key);
        assert!(p[facts[3].value_label] > 1.0 - 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
