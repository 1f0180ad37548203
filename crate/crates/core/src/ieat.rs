//! Embedding association test.
//!
//! Measures differential association between two target concept sets X, Y
//! and two attribute sets A, B over cosine similarity, with a one-sided
//! permutation p-value and a standardized effect size. The p-value
//! enumerates every partition of the pooled targets into parts of sizes
//! |X| and |Y| when that count fits under a cap, and falls back to
//! Monte-Carlo sampling otherwise.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::{cast_usize, Scalar};

/// A labeled, non-empty bag of embedding vectors of uniform dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptSet<T> {
    pub label: String,
    vectors: Vec<Vec<T>>,
}

impl<T: Scalar> ConceptSet<T> {
    pub fn new(label: impl Into<String>, vectors: Vec<Vec<T>>) -> Result<Self> {
        let label = label.into();
        if vectors.is_empty() {
            return Err(Error::Empty(format!("concept set {label:?} has no vectors")));
        }
        let dim = vectors[0].len();
        if dim == 0 {
            return Err(Error::Empty(format!(
                "concept set {label:?} has zero-dimensional vectors"
            )));
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::Shape(format!(
                    "concept set {label:?}: vector {i} has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::Numeric(format!(
                    "concept set {label:?}: vector {i} has a non-finite entry"
                )));
            }
            if v.iter().all(|x| *x == T::zero()) {
                return Err(Error::Numeric(format!(
                    "concept set {label:?}: vector {i} is all zeros"
                )));
            }
        }
        Ok(ConceptSet { label, vectors })
    }

    pub fn vectors(&self) -> &[Vec<T>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }
}

pub fn cosine<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "cosine of vectors with dimensions {} and {}",
            u.len(),
            v.len()
        )));
    }
    let mut dot = T::zero();
    let mut nu = T::zero();
    let mut nv = T::zero();
    for (a, b) in u.iter().zip(v) {
        dot += *a * *b;
        nu += *a * *a;
        nv += *b * *b;
    }
    if nu == T::zero() || nv == T::zero() {
        return Err(Error::Numeric("cosine with a zero-norm vector".into()));
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

/// Association of one vector with the attribute poles:
/// mean cosine against A minus mean cosine against B.
pub fn assoc<T: Scalar>(w: &[T], a: &ConceptSet<T>, b: &ConceptSet<T>) -> Result<T> {
    let mut sa = T::zero();
    for v in a.vectors() {
        sa += cosine(w, v)?;
    }
    let mut sb = T::zero();
    for v in b.vectors() {
        sb += cosine(w, v)?;
    }
    Ok(sa / cast_usize::<T>(a.len()) - sb / cast_usize::<T>(b.len()))
}

/// Per-element associations of X then Y against (A, B), in pooled order.
fn pooled_assocs<T: Scalar>(
    x: &ConceptSet<T>,
    y: &ConceptSet<T>,
    a: &ConceptSet<T>,
    b: &ConceptSet<T>,
) -> Result<Vec<T>> {
    let mut vals = Vec::with_capacity(x.len() + y.len());
    for w in x.vectors() {
        vals.push(assoc(w, a, b)?);
    }
    for w in y.vectors() {
        vals.push(assoc(w, a, b)?);
    }
    Ok(vals)
}

/// Statistic for the partition that assigns `chosen` (ascending indices) to
/// the X part: sum of chosen associations minus sum of the rest.
fn partition_statistic<T: Scalar>(assocs: &[T], chosen: &[usize]) -> T {
    let mut inside = T::zero();
    let mut idx = 0;
    let mut outside = T::zero();
    for (i, v) in assocs.iter().enumerate() {
        if idx < chosen.len() && chosen[idx] == i {
            inside += *v;
            idx += 1;
        } else {
            outside += *v;
        }
    }
    inside - outside
}

/// Test statistic: sum of X associations minus sum of Y associations.
pub fn test_statistic<T: Scalar>(
    x: &ConceptSet<T>,
    y: &ConceptSet<T>,
    a: &ConceptSet<T>,
    b: &ConceptSet<T>,
) -> Result<T> {
    let assocs = pooled_assocs(x, y, a, b)?;
    let chosen: Vec<usize> = (0..x.len()).collect();
    Ok(partition_statistic(&assocs, &chosen))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Exact,
    MonteCarlo,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Exact => f.write_str("exact"),
            Method::MonteCarlo => f.write_str("monte-carlo"),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IeatConfig {
    /// Enumerate exactly when the number of partitions is at most this.
    pub cap: u64,
    /// Monte-Carlo draw count used beyond the cap.
    pub draws: u64,
    pub seed: u64,
}

impl Default for IeatConfig {
    fn default() -> Self {
        IeatConfig {
            cap: 200_000,
            draws: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PValue {
    pub p: f64,
    pub method: Method,
    /// Partitions examined: the full count when exact, the draw count when
    /// sampled.
    pub partitions: u64,
    /// Binomial standard error; only present for Monte-Carlo estimates.
    pub se: Option<f64>,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i + 1) as u128;
    }
    acc
}

/// Advance `idx` to the next k-combination of `0..n` in lexicographic
/// order; returns false after the last one.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    loop {
        if i == 0 {
            return false;
        }
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
}

/// One-sided permutation p-value: the fraction of partitions of the pooled
/// targets (multiset semantics, identity included) whose statistic is
/// strictly greater than the observed one.
pub fn p_value<T: Scalar>(
    x: &ConceptSet<T>,
    y: &ConceptSet<T>,
    a: &ConceptSet<T>,
    b: &ConceptSet<T>,
    cfg: &IeatConfig,
) -> Result<PValue> {
    let assocs = pooled_assocs(x, y, a, b)?;
    let n = assocs.len();
    let nx = x.len();
    let observed = {
        let chosen: Vec<usize> = (0..nx).collect();
        partition_statistic(&assocs, &chosen)
    };

    let total = binomial(n, nx);
    if total <= cfg.cap as u128 {
        let mut idx: Vec<usize> = (0..nx).collect();
        let mut greater: u64 = 0;
        loop {
            if partition_statistic(&assocs, &idx) > observed {
                greater += 1;
            }
            if !next_combination(&mut idx, n) {
                break;
            }
        }
        Ok(PValue {
            p: greater as f64 / total as f64,
            method: Method::Exact,
            partitions: total as u64,
            se: None,
        })
    } else {
        // Each draw derives its own stream from the draw index, so the
        // estimate does not depend on how draws are batched across workers.
        let base = Rng::with_stream(cfg.seed, 7);
        let mut greater: u64 = 0;
        let mut scratch: Vec<usize> = (0..n).collect();
        let mut chosen = vec![0usize; nx];
        for i in 0..cfg.draws {
            let mut rng = base.split(i);
            for (k, s) in scratch.iter_mut().enumerate() {
                *s = k;
            }
            for j in 0..nx {
                let pick = j + rng.below(n - j);
                scratch.swap(j, pick);
            }
            chosen.copy_from_slice(&scratch[..nx]);
            chosen.sort_unstable();
            if partition_statistic(&assocs, &chosen) > observed {
                greater += 1;
            }
        }
        let p = greater as f64 / cfg.draws as f64;
        Ok(PValue {
            p,
            method: Method::MonteCarlo,
            partitions: cfg.draws,
            se: Some((p * (1.0 - p) / cfg.draws as f64).sqrt()),
        })
    }
}

/// Standardized mean difference of associations: the gap between the X and
/// Y means divided by the sample standard deviation (n-1 divisor) of the
/// pooled associations.
pub fn effect_size<T: Scalar>(
    x: &ConceptSet<T>,
    y: &ConceptSet<T>,
    a: &ConceptSet<T>,
    b: &ConceptSet<T>,
) -> Result<T> {
    let assocs = pooled_assocs(x, y, a, b)?;
    let n = assocs.len();
    if n < 2 {
        return Err(Error::Empty(
            "effect size needs at least two pooled targets".into(),
        ));
    }
    let mean_x = assocs[..x.len()].iter().copied().sum::<T>() / cast_usize::<T>(x.len());
    let mean_y = assocs[x.len()..].iter().copied().sum::<T>() / cast_usize::<T>(y.len());
    let mean_all = assocs.iter().copied().sum::<T>() / cast_usize::<T>(n);
    let mut ss = T::zero();
    for v in &assocs {
        let d = *v - mean_all;
        ss += d * d;
    }
    let var = ss / cast_usize::<T>(n - 1);
    if var == T::zero() {
        return Err(Error::Degenerate(
            "zero dispersion of associations, effect size undefined".into(),
        ));
    }
    Ok((mean_x - mean_y) / var.sqrt())
}

#[derive(Clone, Debug)]
pub struct IeatResult<T> {
    pub statistic: T,
    pub p: f64,
    pub d: T,
    pub method: Method,
    pub partitions: u64,
    pub se: Option<f64>,
}

/// Run the full association test: statistic, p-value and effect size.
pub fn ieat<T: Scalar>(
    x: &ConceptSet<T>,
    y: &ConceptSet<T>,
    a: &ConceptSet<T>,
    b: &ConceptSet<T>,
    cfg: &IeatConfig,
) -> Result<IeatResult<T>> {
    let statistic = test_statistic(x, y, a, b)?;
    let pv = p_value(x, y, a, b, cfg)?;
    let d = effect_size(x, y, a, b)?;
    Ok(IeatResult {
        statistic,
        p: pv.p,
        d,
        method: pv.method,
        partitions: pv.partitions,
        se: pv.se,
    })
}

#[allow(unused)]
fn unit<T: Scalar>(dim: usize, axis: usize) -> Vec<T> {
    let mut v = vec![T::zero(); dim];
    v[axis] = T::one();
    v
}
