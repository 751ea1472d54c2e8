//! Kruskal-Wallis H test and Dunn's pairwise comparisons.
//!
//! Observations are ranked jointly with midranks for ties. p-values come
//! either from the asymptotic chi-square / normal tails or from the exact
//! permutation distribution, computed by dynamic programming over per-group
//! rank sums. [`PValueMethod::Auto`] picks the exact route whenever the state
//! space stays small, which covers every sample where the asymptotic tails
//! are poor.

mod dist;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

pub use dist::{chi_square_sf, gamma_q, ln_gamma, normal_sf};

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("group `{0}` is empty")]
    EmptyGroup(String),
    #[error("need at least 3 observations, got {0}")]
    TooFewObservations(usize),
    #[error("duplicate group label `{0}`")]
    DuplicateGroup(String),
    #[error("non-finite observation in group `{0}`")]
    NonFinite(String),
    #[error("{0}")]
    InvalidArgument(String),
}

/// Labelled groups of real observations.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedSamples<T = f64> {
    groups: Vec<(String, Vec<T>)>,
}

impl<T: Scalar> GroupedSamples<T> {
    pub fn new<I, S>(groups: I) -> Result<Self, StatsError>
    where
        I: IntoIterator<Item = (S, Vec<T>)>,
        S: Into<String>,
    {
        let groups: Vec<(String, Vec<T>)> = groups.into_iter().map(|(l, v)| (l.into(), v)).collect();
        if groups.len() < 2 {
            return Err(StatsError::TooFewGroups(groups.len()));
        }
        for (i, (label, values)) in groups.iter().enumerate() {
            if values.is_empty() {
                return Err(StatsError::EmptyGroup(label.clone()));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite(label.clone()));
            }
            if groups[..i].iter().any(|(l, _)| l == label) {
                return Err(StatsError::DuplicateGroup(label.clone()));
            }
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[(String, Vec<T>)] {
        &self.groups
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(|(_, v)| v.len()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PValueMethod {
    /// Exact when the permutation state space is small, asymptotic otherwise.
    #[default]
    Auto,
    Asymptotic,
    /// Exact permutation distribution; falls back to asymptotic if the state
    /// space exceeds the internal cap.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Adjustment {
    #[default]
    None,
    Bonferroni,
}

impl Adjustment {
    pub fn as_str(self) -> &'static str {
        match self {
            Adjustment::None => "none",
            Adjustment::Bonferroni => "bonferroni",
        }
    }
}

/// Which tail produced a p-value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PValueSource {
    Asymptotic,
    Exact,
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairwiseResult<T = f64> {
    pub z: T,
    pub p_value: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestResult<T = f64> {
    pub statistic: T,
    pub p_value: T,
    pub source: PValueSource,
    /// Keyed by (first label, second label) in input order.
    pub pairwise: Option<BTreeMap<(String, String), PairwiseResult<T>>>,
}

/// Pooled midrank view of the samples.
struct Ranked<T> {
    n: usize,
    sizes: Vec<usize>,
    /// mean rank per group
    mean_ranks: Vec<T>,
    /// Σ (t³ − t) over tie blocks
    tie_sum: T,
    /// doubled midranks in pooled sorted order (integers)
    doubled_ranks: Vec<u64>,
    /// doubled rank sum per group
    doubled_sums: Vec<u64>,
}

fn rank<T: Scalar>(samples: &GroupedSamples<T>) -> Ranked<T> {
    let mut pooled: Vec<(T, usize)> =
        samples.groups.iter().enumerate().flat_map(|(g, (_, v))| v.iter().map(move |&x| (x, g))).collect();
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite observations"));
    let n = pooled.len();
    let k = samples.groups.len();
    let mut doubled_sums = vec![0u64; k];
    let mut doubled_ranks = Vec::with_capacity(n);
    let mut tie_sum = T::zero();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        // positions i..j share the midrank (i+1 + j)/2; doubled: i + 1 + j
        let doubled = (i + 1 + j) as u64;
        for &(_, g) in &pooled[i..j] {
            doubled_sums[g] += doubled;
            doubled_ranks.push(doubled);
        }
        let t = T::from_count(j - i);
        tie_sum = tie_sum + t * t * t - t;
        i = j;
    }
    let sizes: Vec<usize> = samples.groups.iter().map(|(_, v)| v.len()).collect();
    let mean_ranks = doubled_sums
        .iter()
        .zip(&sizes)
        .map(|(&s, &m)| T::from_u64(s).unwrap() / (T::lit(2.0) * T::from_count(m)))
        .collect();
    Ranked { n, sizes, mean_ranks, tie_sum, doubled_ranks, doubled_sums }
}

fn h_statistic<T: Scalar>(r: &Ranked<T>) -> Option<T> {
    let n = T::from_count(r.n);
    let correction = T::one() - r.tie_sum / (n * n * n - n);
    if correction <= T::zero() {
        return None;
    }
    let centre = (n + T::one()) / T::lit(2.0);
    let ss: T =
        r.mean_ranks.iter().zip(&r.sizes).map(|(&m, &size)| T::from_count(size) * (m - centre) * (m - centre)).sum();
    Some(T::lit(12.0) / (n * (n + T::one())) * ss / correction)
}

/// Upper bound on live DP states before the exact route gives up.
const EXACT_STATE_CAP: usize = 1_000_000;
const AUTO_MAX_N: usize = 30;

/// Distribution of doubled rank-sum vectors over all distinct assignments of
/// the pooled ranks to groups of the given sizes. Counts are exact.
fn rank_sum_distribution(doubled_ranks: &[u64], sizes: &[usize]) -> Option<Vec<(Vec<u64>, u128)>> {
    let k = sizes.len();
    // key: fill counts followed by sums
    let mut states: HashMap<Vec<u64>, u128> = HashMap::new();
    states.insert(vec![0; 2 * k], 1);
    for &r in doubled_ranks {
        let mut next: HashMap<Vec<u64>, u128> = HashMap::with_capacity(states.len() * 2);
        for (key, count) in states {
            for g in 0..k {
                if key[g] < sizes[g] as u64 {
                    let mut nk = key.clone();
                    nk[g] += 1;
                    nk[k + g] += r;
                    *next.entry(nk).or_insert(0) += count;
                }
            }
        }
        if next.len() > EXACT_STATE_CAP {
            return None;
        }
        states = next;
    }
    Some(states.into_iter().map(|(key, c)| (key[k..].to_vec(), c)).collect())
}

/// Σ S_g² / n_g scaled by the product of sizes, as an exact integer. H is an
/// increasing affine function of Σ S_g² / n_g for fixed pooled data.
fn kw_score(sums: &[u64], sizes: &[usize]) -> u128 {
    let prod: u128 = sizes.iter().map(|&s| s as u128).product();
    sums.iter().zip(sizes).map(|(&s, &m)| (s as u128) * (s as u128) * (prod / m as u128)).sum()
}

/// |S_a n_b − S_b n_a|, proportional to |mean rank a − mean rank b|.
fn dunn_score(sums: &[u64], sizes: &[usize], a: usize, b: usize) -> u128 {
    let lhs = sums[a] as i128 * sizes[b] as i128;
    let rhs = sums[b] as i128 * sizes[a] as i128;
    (lhs - rhs).unsigned_abs()
}

struct ExactTail {
    dist: Vec<(Vec<u64>, u128)>,
    total: u128,
}

impl ExactTail {
    fn build<T>(r: &Ranked<T>, method: PValueMethod) -> Option<Self> {
        let try_exact = match method {
            PValueMethod::Asymptotic => false,
            PValueMethod::Exact => true,
            PValueMethod::Auto => r.n <= AUTO_MAX_N,
        };
        if !try_exact {
            return None;
        }
        let dist = rank_sum_distribution(&r.doubled_ranks, &r.sizes)?;
        let total = dist.iter().map(|(_, c)| *c).sum();
        Some(Self { dist, total })
    }

    fn tail<T: Scalar, F: Fn(&[u64]) -> u128>(&self, score: F, observed: u128) -> T {
        let hits: u128 = self.dist.iter().filter(|(s, _)| score(s) >= observed).map(|(_, c)| *c).sum();
        T::from_f64(hits as f64 / self.total as f64).unwrap()
    }
}

fn check_size<T: Scalar>(samples: &GroupedSamples<T>) -> Result<(), StatsError> {
    let n = samples.total();
    if n < 3 {
        return Err(StatsError::TooFewObservations(n));
    }
    Ok(())
}

/// Kruskal-Wallis H with tie correction.
pub fn kruskal_wallis<T: Scalar>(
    samples: &GroupedSamples<T>,
    method: PValueMethod,
) -> Result<TestResult<T>, StatsError> {
    check_size(samples)?;
    let r = rank(samples);
    let Some(h) = h_statistic(&r) else {
        return Ok(TestResult {
            statistic: T::zero(),
            p_value: T::one(),
            source: PValueSource::Degenerate,
            pairwise: None,
        });
    };
    if let Some(exact) = ExactTail::build(&r, method) {
        let observed = kw_score(&r.doubled_sums, &r.sizes);
        let p = exact.tail(|s| kw_score(s, &r.sizes), observed);
        return Ok(TestResult { statistic: h, p_value: p, source: PValueSource::Exact, pairwise: None });
    }
    let p = chi_square_sf(h.max(T::zero()), samples.groups.len() - 1)?;
    Ok(TestResult { statistic: h, p_value: p, source: PValueSource::Asymptotic, pairwise: None })
}

/// Dunn's z for every unordered pair, two-sided p-values.
pub fn dunn_pairwise<T: Scalar>(
    samples: &GroupedSamples<T>,
    adjustment: Adjustment,
    method: PValueMethod,
) -> Result<BTreeMap<(String, String), PairwiseResult<T>>, StatsError> {
    check_size(samples)?;
    let r = rank(samples);
    let k = samples.groups.len();
    let n = T::from_count(r.n);
    let base_var = n * (n + T::one()) / T::lit(12.0) - r.tie_sum / (T::lit(12.0) * (n - T::one()));
    let n_pairs = k * (k - 1) / 2;
    let exact = if base_var > T::zero() { ExactTail::build(&r, method) } else { None };
    let mut out = BTreeMap::new();
    for a in 0..k {
        for b in a + 1..k {
            let key = (samples.groups[a].0.clone(), samples.groups[b].0.clone());
            if base_var <= T::zero() {
                out.insert(key, PairwiseResult { z: T::zero(), p_value: T::one() });
                continue;
            }
            let se = (base_var * (T::one() / T::from_count(r.sizes[a]) + T::one() / T::from_count(r.sizes[b]))).sqrt();
            let z = (r.mean_ranks[a] - r.mean_ranks[b]) / se;
            let raw = match &exact {
                Some(ex) => {
                    let observed = dunn_score(&r.doubled_sums, &r.sizes, a, b);
                    ex.tail(|s| dunn_score(s, &r.sizes, a, b), observed)
                }
                None => T::lit(2.0) * normal_sf(z.abs()),
            };
            let p = match adjustment {
                Adjustment::None => raw,
                Adjustment::Bonferroni => (raw * T::from_count(n_pairs)).min(T::one()),
            };
            out.insert(key, PairwiseResult { z, p_value: p.min(T::one()) });
        }
    }
    Ok(out)
}

/// Omnibus test with Dunn's comparisons attached.
pub fn kruskal_dunn<T: Scalar>(
    samples: &GroupedSamples<T>,
    adjustment: Adjustment,
    method: PValueMethod,
) -> Result<TestResult<T>, StatsError> {
    let mut result = kruskal_wallis(samples, method)?;
    result.pairwise = Some(dunn_pairwise(samples, adjustment, method)?);
    Ok(result)
}
