//! Exact occupancy probabilities.
//!
//! A [`Pattern`] `(n_1, ..., n_k)` lists box counts left to right: `n_1 > 0`
//! is the leftmost occupied box and `n_k` the box `]P_1, 1[`. With left
//! cumulative sums `S_j = n_1 + ... + n_j` the finite-`n` probability is
//!
//! ```text
//! P{pattern} = prod_j p(S_j : n_j),   p(s : m) = C(s, m) E[W^{s-m} (1-W)^m]
//! ```
//!
//! and the `n -> inf` limit law of the first `l` counts is the same product
//! divided by `mu * S_l`. The binomials inside `p` already make up the
//! multinomial coefficient, so no extra multinomial factor is applied.

use crate::error::{Result, SieveError};
use crate::extended::Extended;
use crate::par::Execution;
use crate::stats::CompensatedSum;
use crate::stick_law::StickLaw;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

/// Above this many balls `p(n:m)` is evaluated in log space.
const LINEAR_LIMIT: u32 = 500;

/// Left-to-right occupancy counts starting at the leftmost occupied box.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Pattern(Vec<u32>);

impl Pattern {
    pub fn new(parts: Vec<u32>) -> Result<Self> {
        match parts.first() {
            Some(&first) if first > 0 => Ok(Self(parts)),
            _ => Err(SieveError::InvalidArgument(format!(
                "pattern must be nonempty with a positive first part, got {parts:?}"
            ))),
        }
    }

    pub fn parts(&self) -> &[u32] {
        &self.0
    }

    pub fn into_parts(self) -> Vec<u32> {
        self.0
    }

    /// Number of balls `n`.
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `I_n`, the index of the leftmost occupied box.
    pub fn depth(&self) -> usize {
        self.0.len()
    }

    /// `Z^{(i)}` for `i >= 1`, zero past the last box.
    pub fn z(&self, i: usize) -> u32 {
        assert!(i >= 1, "occupancy counts are indexed from 1");
        self.0.get(i - 1).copied().unwrap_or(0)
    }

    /// `K_n`, the number of occupied boxes.
    pub fn occupied(&self) -> usize {
        self.0.iter().filter(|&&c| c > 0).count()
    }

    /// `K_{n,r}`; for `r = 0`, the empty boxes right of the leftmost occupied one.
    pub fn r_count(&self, r: u32) -> usize {
        self.0.iter().filter(|&&c| c == r).count()
    }

    /// Cumulative sums `S_1, ..., S_k`.
    pub fn cumulative(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().scan(0u32, |s, &c| {
            *s += c;
            Some(*s)
        })
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Pattern {
    type Err = SieveError;

    /// Accepts parts joined by `-` or `,`.
    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(['-', ','])
            .map(|p| {
                p.trim()
                    .parse::<u32>()
                    .map_err(|_| SieveError::InvalidArgument(format!("bad pattern part {p:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(parts)
    }
}

/// `C(n, m)` as a float (exact for moderate `n`).
pub fn binomial(n: u32, m: u32) -> f64 {
    if m > n {
        return 0.0;
    }
    let k = m.min(n - m);
    let mut r = 1.0f64;
    for i in 1..=k {
        r = r * f64::from(n - k + i) / f64::from(i);
    }
    r
}

pub fn ln_binomial(n: u32, m: u32) -> f64 {
    ln_gamma(f64::from(n) + 1.0) - ln_gamma(f64::from(m) + 1.0) - ln_gamma(f64::from(n - m) + 1.0)
}

/// `p(n:m) = C(n,m) E[W^{n-m} (1-W)^m]`, the chance that `m` of `n`
/// uniform balls fall in the box next to 1. `p(0:0) = 1`.
pub fn p_nm(law: &StickLaw, n: u32, m: u32) -> Result<f64> {
    if m > n {
        return Err(SieveError::InvalidArgument(format!("p(n:m) needs m <= n, got n={n}, m={m}")));
    }
    if n == 0 {
        return Ok(1.0);
    }
    if n <= LINEAR_LIMIT {
        let v = binomial(n, m) * law.joint_moment(n - m, m)?;
        if v >= 1e-300 {
            return Ok(v);
        }
    }
    Ok(ln_p_nm(law, n, m)?.exp())
}

/// `ln p(n:m)`.
pub fn ln_p_nm(law: &StickLaw, n: u32, m: u32) -> Result<f64> {
    if m > n {
        return Err(SieveError::InvalidArgument(format!("p(n:m) needs m <= n, got n={n}, m={m}")));
    }
    if n == 0 {
        return Ok(0.0);
    }
    Ok(ln_binomial(n, m) + law.ln_joint_moment(n - m, m)?)
}

fn product_of_p(law: &StickLaw, parts: &[u32]) -> Result<f64> {
    let mut s = 0u32;
    let mut prod = 1.0;
    for &c in parts {
        s += c;
        prod *= p_nm(law, s, c)?;
    }
    if prod >= 1e-300 {
        return Ok(prod);
    }
    let mut s = 0u32;
    let mut ln = 0.0;
    for &c in parts {
        s += c;
        ln += ln_p_nm(law, s, c)?;
    }
    Ok(ln.exp())
}

/// Exact probability that the sieve with `pattern.total()` balls produces
/// exactly `pattern`.
pub fn pattern_prob(law: &StickLaw, pattern: &Pattern) -> Result<f64> {
    product_of_p(law, pattern.parts())
}

/// `P{Z^{(1)} = n_1, ..., Z^{(l)} = n_l}` in the `n -> inf` limit.
pub fn limit_pmf(law: &StickLaw, parts: &[u32]) -> Result<f64> {
    let pattern = Pattern::new(parts.to_vec())?;
    let total = f64::from(pattern.total());
    Ok(product_of_p(law, pattern.parts())? / (law.mu()? * total))
}

/// `E[K_r*]`: `1/(mu r)` for `r >= 1` and `nu/mu` for `r = 0`.
pub fn expected_kr(law: &StickLaw, r: u32) -> Result<Extended> {
    let mu = law.mu()?;
    if r >= 1 {
        return Ok(Extended::Finite(1.0 / (mu * f64::from(r))));
    }
    Ok(match law.nu()? {
        Extended::Finite(nu) => Extended::Finite(nu / mu),
        Extended::Infinite => Extended::Infinite,
    })
}

// ------------------------------------------------------------------ enumeration

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumerationOptions {
    /// Maximum number of patterns to emit.
    pub budget: u64,
    /// Prefixes whose probability falls below this are pruned, their full
    /// completion mass charged to the tail bound. Zero disables pruning.
    pub prune_floor: f64,
    pub execution: Execution,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self {
            budget: 5_000_000,
            prune_floor: 1e-16,
            execution: Execution::default(),
        }
    }
}

/// Exact pattern law for `n` balls, truncated at depth `k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternPmf {
    pub n: u32,
    pub k_max: u32,
    pub entries: BTreeMap<Pattern, f64>,
    pub covered_mass: f64,
    /// `n E[W]^{k_max}`, bounding `P{I_n > k_max}`.
    pub depth_tail: f64,
    /// Completion mass of pruned prefixes.
    pub pruned_mass: f64,
    /// Upper bound on the probability of patterns missing from `entries`.
    pub tail_bound: f64,
}

#[derive(Serialize)]
struct PmfRow<'a> {
    pattern: &'a [u32],
    probability: f64,
}

#[derive(Serialize)]
struct PmfJson<'a> {
    n: u32,
    k_max: u32,
    covered_mass: f64,
    tail_bound: f64,
    depth_tail: f64,
    pruned_mass: f64,
    entries: Vec<PmfRow<'a>>,
}

impl PatternPmf {
    pub fn get(&self, parts: &[u32]) -> Option<f64> {
        self.entries.get(&Pattern(parts.to_vec())).copied()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(PmfJson {
            n: self.n,
            k_max: self.k_max,
            covered_mass: self.covered_mass,
            tail_bound: self.tail_bound,
            depth_tail: self.depth_tail,
            pruned_mass: self.pruned_mass,
            entries: self
                .entries
                .iter()
                .map(|(p, &probability)| PmfRow {
                    pattern: p.parts(),
                    probability,
                })
                .collect(),
        })
        .expect("plain data serializes")
    }

    /// One row per pattern, parts joined by `-`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pattern,probability\n");
        for (p, prob) in &self.entries {
            out.push_str(&format!("{p},{prob}\n"));
        }
        out
    }
}

struct Enumerator<'a> {
    n: u32,
    k_max: u32,
    floor: f64,
    budget: u64,
    // p[s][m] = p(s:m)
    p: Vec<Vec<f64>>,
    // completion mass from cumulative sum s with unlimited depth
    completion: Vec<f64>,
    emitted: &'a AtomicU64,
}

#[derive(Default)]
struct Branch {
    rows: Vec<(Vec<u32>, f64)>,
    pruned: f64,
}

impl Enumerator<'_> {
    fn emit(&self, out: &mut Branch, parts: &[u32], prob: f64) -> Result<()> {
        let count = self.emitted.fetch_add(1, Ordering::Relaxed) + 1;
        if count > self.budget {
            return Err(SieveError::BudgetExceeded {
                count: u128::from(count),
                budget: u128::from(self.budget),
            });
        }
        out.rows.push((parts.to_vec(), prob));
        Ok(())
    }

    fn walk(&self, parts: &mut Vec<u32>, s: u32, prob: f64, out: &mut Branch) -> Result<()> {
        let depth = parts.len() as u32;
        if s == self.n {
            self.emit(out, parts, prob)?;
            let zero = self.p[self.n as usize][0];
            let base = parts.len();
            let mut q = prob;
            for _ in depth..self.k_max {
                q *= zero;
                if q < self.floor {
                    out.pruned += q * self.completion[self.n as usize];
                    break;
                }
                parts.push(0);
                self.emit(out, parts, q)?;
            }
            parts.truncate(base);
            return Ok(());
        }
        if depth == self.k_max {
            // Completions are deeper than k_max; charged to the depth tail.
            return Ok(());
        }
        let first = if depth == 0 { 1 } else { 0 };
        for m in first..=(self.n - s) {
            let s2 = s + m;
            let q = prob * self.p[s2 as usize][m as usize];
            if q < self.floor {
                out.pruned += q * self.completion[s2 as usize];
                continue;
            }
            parts.push(m);
            self.walk(parts, s2, q, out)?;
            parts.pop();
        }
        Ok(())
    }

    fn branch(&self, first: u32) -> Result<Branch> {
        let mut out = Branch::default();
        let q = self.p[first as usize][first as usize];
        if q < self.floor {
            out.pruned += q * self.completion[first as usize];
            return Ok(out);
        }
        let mut parts = vec![first];
        self.walk(&mut parts, first, q, &mut out)?;
        Ok(out)
    }
}

/// Number of weak compositions of `n` with positive first part into at most
/// `k_max` parts, `C(n + k_max - 1, k_max - 1)`, saturating.
pub fn pattern_count(n: u32, k_max: u32) -> u128 {
    let top = u128::from(n) + u128::from(k_max) - 1;
    let k = u128::from(k_max - 1).min(u128::from(n));
    let mut r: u128 = 1;
    for i in 1..=k {
        r = match r.checked_mul(top - k + i) {
            Some(v) => v / i,
            None => return u128::MAX,
        };
    }
    r
}

/// All patterns of `n` balls of depth at most `k_max` with their exact
/// probabilities and a rigorous bound on the omitted mass.
pub fn enumerate_finite(law: &StickLaw, n: u32, k_max: u32, opts: &EnumerationOptions) -> Result<PatternPmf> {
    if n == 0 || k_max == 0 {
        return Err(SieveError::InvalidArgument(format!(
            "enumeration needs n >= 1 and k_max >= 1, got n={n}, k_max={k_max}"
        )));
    }
    if opts.prune_floor <= 0.0 {
        let count = pattern_count(n, k_max);
        if count > u128::from(opts.budget) {
            return Err(SieveError::BudgetExceeded {
                count,
                budget: u128::from(opts.budget),
            });
        }
    }
    let mut p = Vec::with_capacity(n as usize + 1);
    for s in 0..=n {
        p.push((0..=s).map(|m| p_nm(law, s, m)).collect::<Result<Vec<_>>>()?);
    }
    let mut completion = vec![0.0; n as usize + 1];
    let nu = n as usize;
    completion[nu] = 1.0 / (1.0 - p[nu][0]);
    for s in (1..nu).rev() {
        let mut acc = CompensatedSum::default();
        for m in 1..=(nu - s) {
            acc.add(p[s + m][m] * completion[s + m]);
        }
        completion[s] = acc.value() / (1.0 - p[s][0]);
    }
    let emitted = AtomicU64::new(0);
    let en = Enumerator {
        n,
        k_max,
        floor: opts.prune_floor.max(0.0),
        budget: opts.budget,
        p,
        completion,
        emitted: &emitted,
    };
    let branches: Vec<Result<Branch>> = match opts.execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (1..=n).into_par_iter().map(|first| en.branch(first)).collect()
        }
        _ => (1..=n).map(|first| en.branch(first)).collect(),
    };
    let mut entries = BTreeMap::new();
    let mut pruned = CompensatedSum::default();
    for b in branches {
        let b = b?;
        pruned.add(b.pruned);
        for (parts, prob) in b.rows {
            entries.insert(Pattern(parts), prob);
        }
    }
    let mut covered = CompensatedSum::default();
    for &v in entries.values() {
        covered.add(v);
    }
    let mean_w = law.joint_moment(1, 0)?;
    let depth_tail = (f64::from(n) * mean_w.powi(k_max as i32)).min(1.0);
    let pruned_mass = pruned.value();
    Ok(PatternPmf {
        n,
        k_max,
        entries,
        covered_mass: covered.value(),
        depth_tail,
        pruned_mass,
        tail_bound: (depth_tail + pruned_mass).min(1.0),
    })
}

/// Marginal laws aggregated from a [`PatternPmf`]; every table inherits the
/// pattern law's tail bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteMarginals {
    pub n: u32,
    /// `z[i-1]` is the law of `Z_n^{(i)}`.
    pub z: Vec<BTreeMap<u32, f64>>,
    /// Law of `I_n`.
    pub depth: BTreeMap<u32, f64>,
    /// Law of `K_n`.
    pub occupied: BTreeMap<u32, f64>,
    /// `r_counts[r]` is the law of `K_{n,r}`, `r = 0..=n`.
    pub r_counts: Vec<BTreeMap<u32, f64>>,
    /// `E[K_{n,r}]` over the covered mass.
    pub mean_r_counts: Vec<f64>,
    pub tail_bound: f64,
}

fn add_to(map: &mut BTreeMap<u32, CompensatedSum>, key: u32, v: f64) {
    map.entry(key).or_default().add(v);
}

fn settle(map: BTreeMap<u32, CompensatedSum>) -> BTreeMap<u32, f64> {
    map.into_iter().map(|(k, s)| (k, s.value())).collect()
}

impl FiniteMarginals {
    /// Aggregates `pmf`, reporting `Z^{(i)}` for `i <= z_depth`.
    pub fn from_pmf(pmf: &PatternPmf, z_depth: usize) -> Self {
        let n = pmf.n;
        let mut z = vec![BTreeMap::new(); z_depth];
        let mut depth = BTreeMap::new();
        let mut occupied = BTreeMap::new();
        let mut r_counts = vec![BTreeMap::new(); n as usize + 1];
        let mut means = vec![CompensatedSum::default(); n as usize + 1];
        for (pattern, &prob) in &pmf.entries {
            for (i, table) in z.iter_mut().enumerate() {
                add_to(table, pattern.z(i + 1), prob);
            }
            add_to(&mut depth, pattern.depth() as u32, prob);
            add_to(&mut occupied, pattern.occupied() as u32, prob);
            for r in 0..=n {
                let k = pattern.r_count(r) as u32;
                add_to(&mut r_counts[r as usize], k, prob);
                means[r as usize].add(f64::from(k) * prob);
            }
        }
        Self {
            n,
            z: z.into_iter().map(settle).collect(),
            depth: settle(depth),
            occupied: settle(occupied),
            r_counts: r_counts.into_iter().map(settle).collect(),
            mean_r_counts: means.iter().map(|s| s.value()).collect(),
            tail_bound: pmf.tail_bound,
        }
    }
}

/// Enumerates and aggregates in one step; `Z` marginals go to depth `k_max`.
pub fn finite_marginals(law: &StickLaw, n: u32, k_max: u32, opts: &EnumerationOptions) -> Result<FiniteMarginals> {
    let pmf = enumerate_finite(law, n, k_max, opts)?;
    Ok(FiniteMarginals::from_pmf(&pmf, k_max as usize))
}

// -------------------------------------------------------------- limit marginal

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitMarginalOptions {
    /// Largest acceptable mass of the lower coordinates left out of the sum.
    pub tolerance: f64,
    /// Upper limit for the lower-coordinate sum `S_{l-1}`.
    pub max_prefix_sum: u32,
}

impl Default for LimitMarginalOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            max_prefix_sum: 4096,
        }
    }
}

/// Law of one coordinate `Z^{(l)}` of the limit sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitMarginal {
    pub coordinate: u32,
    pub pmf: BTreeMap<u32, f64>,
    /// `1 - sum(pmf)`: mass beyond the support cap plus truncation loss.
    pub residual: f64,
    /// Mass of lower-coordinate configurations left out of the sums; bounds
    /// the total error of the tabulated values.
    pub truncation_residual: f64,
    pub prefix_sum_cap: u32,
}

/// `P{Z^{(l)} = m}` for `m <= support_cap`.
///
/// For `l >= 2` the lower coordinates are summed out by dynamic programming
/// over their total `S`, which is capped; the cap doubles until the omitted
/// `(l-1)`-dimensional mass is within `opts.tolerance`.
pub fn limit_marginal(law: &StickLaw, coordinate: u32, support_cap: u32, opts: &LimitMarginalOptions) -> Result<LimitMarginal> {
    if coordinate == 0 || support_cap == 0 {
        return Err(SieveError::InvalidArgument("coordinate and support cap must be positive".into()));
    }
    let mu = law.mu()?;
    let mut pmf = BTreeMap::new();
    if coordinate == 1 {
        for k in 1..=support_cap {
            pmf.insert(k, p_nm(law, k, k)? / (mu * f64::from(k)));
        }
        let total: f64 = pmf.values().sum();
        return Ok(LimitMarginal {
            coordinate,
            pmf,
            residual: 1.0 - total,
            truncation_residual: 0.0,
            prefix_sum_cap: 0,
        });
    }
    let mut cap = 128u32.min(opts.max_prefix_sum.max(1));
    let (weights, truncation) = loop {
        let weights = prefix_weights(law, coordinate - 1, cap)?;
        let mut mass = CompensatedSum::default();
        for (s, w) in weights.iter().enumerate().skip(1) {
            mass.add(w / (mu * s as f64));
        }
        let truncation = (1.0 - mass.value()).max(0.0);
        if truncation <= opts.tolerance {
            break (weights, truncation);
        }
        if cap >= opts.max_prefix_sum {
            return Err(SieveError::Truncation {
                residual: truncation,
                tolerance: opts.tolerance,
            });
        }
        cap = (cap * 2).min(opts.max_prefix_sum);
    };
    for m in 0..=support_cap {
        let mut acc = CompensatedSum::default();
        for (s, w) in weights.iter().enumerate().skip(1) {
            if *w == 0.0 {
                continue;
            }
            let s = s as u32;
            acc.add(w * p_nm(law, s + m, m)? / (mu * f64::from(s + m)));
        }
        pmf.insert(m, acc.value());
    }
    let total: f64 = pmf.values().sum();
    Ok(LimitMarginal {
        coordinate,
        pmf,
        residual: 1.0 - total,
        truncation_residual: truncation,
        prefix_sum_cap: cap,
    })
}

/// `F_j(S)`: sum over prefixes `(n_1..n_j)` with total `S` of
/// `prod p(S_i : n_i)`, for `S = 0..=cap` (index 0 unused).
fn prefix_weights(law: &StickLaw, len: u32, cap: u32) -> Result<Vec<f64>> {
    let cap = cap as usize;
    let mut f = vec![0.0; cap + 1];
    for (s, slot) in f.iter_mut().enumerate().skip(1) {
        *slot = p_nm(law, s as u32, s as u32)?;
    }
    for _ in 1..len {
        let mut next = vec![0.0; cap + 1];
        for (s2, slot) in next.iter_mut().enumerate().skip(1) {
            let mut acc = CompensatedSum::default();
            for m in 0..s2 {
                let prev = f[s2 - m];
                if prev != 0.0 {
                    acc.add(prev * p_nm(law, s2 as u32, m as u32)?);
                }
            }
            *slot = acc.value();
        }
        f = next;
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uniform() -> StickLaw {
        StickLaw::uniform()
    }

    #[test]
    fn pattern_statistics() {
        let p = Pattern::new(vec![2, 0, 1, 0]).unwrap();
        assert_eq!(p.total(), 3);
        assert_eq!(p.depth(), 4);
        assert_eq!(p.occupied(), 2);
        assert_eq!(p.r_count(0), 2);
        assert_eq!(p.occupied(), p.depth() - p.r_count(0));
        assert_eq!(p.z(1), 2);
        assert_eq!(p.z(9), 0);
        assert_eq!(p.to_string(), "2-0-1-0");
        assert_eq!("2-0-1-0".parse::<Pattern>().unwrap(), p);
        assert!(Pattern::new(vec![0, 1]).is_err());
        assert!(Pattern::new(vec![]).is_err());
    }

    #[test]
    fn p_nm_examples() {
        let u = uniform();
        assert_abs_diff_eq!(p_nm(&u, 3, 2).unwrap(), 0.25, epsilon = 1e-15);
        let sum: f64 = (1..=5).map(|m| p_nm(&u, 5, m).unwrap()).sum();
        assert_abs_diff_eq!(sum, 5.0 / 6.0, epsilon = 1e-15);
        for law in [u, StickLaw::beta(1.5, 2.5).unwrap()] {
            assert_abs_diff_eq!(p_nm(&law, 1, 1).unwrap(), 1.0 - law.joint_moment(1, 0).unwrap(), epsilon = 1e-15);
        }
        assert_eq!(p_nm(&uniform(), 0, 0).unwrap(), 1.0);
        assert!(p_nm(&uniform(), 2, 3).is_err());
    }

    #[test]
    fn uniform_p_nm_is_flat() {
        let u = uniform();
        for n in 1..=30 {
            for m in 0..=n {
                assert_abs_diff_eq!(p_nm(&u, n, m).unwrap(), 1.0 / f64::from(n + 1), epsilon = 1e-14);
            }
        }
        // log-space path
        assert_abs_diff_eq!(p_nm(&u, 2000, 700).unwrap() * 2001.0, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn sum_identity() {
        for law in [uniform(), StickLaw::beta_theta_one(2.0).unwrap(), StickLaw::heavy_meander(1.0).unwrap()] {
            for n in 1..=30 {
                let s: f64 = (1..=n).map(|m| p_nm(&law, n, m).unwrap()).sum();
                assert_abs_diff_eq!(s, 1.0 - law.joint_moment(n, 0).unwrap(), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn pattern_prob_examples() {
        let u = uniform();
        let prob = |parts: &[u32]| pattern_prob(&u, &Pattern::new(parts.to_vec()).unwrap()).unwrap();
        assert_abs_diff_eq!(prob(&[2, 1]), 1.0 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(prob(&[1, 2]), 1.0 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(prob(&[3]), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(prob(&[3, 0]), 1.0 / 16.0, epsilon = 1e-15);
    }

    #[test]
    fn limit_pmf_examples() {
        let u = uniform();
        for k in 1..=20u32 {
            let expect = 1.0 / f64::from(k * (k + 1));
            assert_abs_diff_eq!(limit_pmf(&u, &[k]).unwrap(), expect, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(limit_pmf(&u, &[1, 0]).unwrap(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(limit_pmf(&u, &[1, 1]).unwrap(), 1.0 / 12.0, epsilon = 1e-15);
        assert!(limit_pmf(&u, &[0, 1]).is_err());
    }

    #[test]
    fn expected_kr_examples() {
        let u = uniform();
        assert_eq!(expected_kr(&u, 1).unwrap(), Extended::Finite(1.0));
        assert_eq!(expected_kr(&u, 0).unwrap(), Extended::Finite(1.0));
        assert_eq!(expected_kr(&u, 2).unwrap(), Extended::Finite(0.5));
        let heavy = StickLaw::heavy_meander(1.0).unwrap();
        assert_eq!(expected_kr(&heavy, 0).unwrap(), Extended::Infinite);
    }

    #[test]
    fn enumeration_spot_values() {
        let pmf = enumerate_finite(&uniform(), 3, 12, &EnumerationOptions::default()).unwrap();
        assert_abs_diff_eq!(pmf.get(&[3]).unwrap(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(pmf.get(&[1, 2]).unwrap(), 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(pmf.get(&[2, 1]).unwrap(), 1.0 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pmf.get(&[1, 1, 1]).unwrap(), 1.0 / 24.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pmf.get(&[3, 0]).unwrap(), 1.0 / 16.0, epsilon = 1e-15);
        assert!(pmf.covered_mass >= 1.0 - 3.0 * 2f64.powi(-12) - 1e-12);
        assert!(pmf.covered_mass <= 1.0 + 1e-12);
        assert!(pmf.covered_mass + pmf.tail_bound >= 1.0 - 1e-12);
        assert!(pmf.entries.values().all(|&p| p > 0.0));
    }

    #[test]
    fn single_ball_depth_is_geometric() {
        let pmf = enumerate_finite(&uniform(), 1, 10, &EnumerationOptions::default()).unwrap();
        for k in 1..=10 {
            let mut parts = vec![1];
            parts.resize(k, 0);
            assert_abs_diff_eq!(pmf.get(&parts).unwrap(), 0.5f64.powi(k as i32), epsilon = 1e-15);
        }
        let law = StickLaw::beta(1.5, 2.5).unwrap();
        let pmf = enumerate_finite(&law, 1, 6, &EnumerationOptions::default()).unwrap();
        let ew = law.joint_moment(1, 0).unwrap();
        assert_abs_diff_eq!(pmf.get(&[1, 0, 0]).unwrap(), (1.0 - ew) * ew * ew, epsilon = 1e-15);
    }

    #[test]
    fn depth_one_enumeration() {
        let pmf = enumerate_finite(&uniform(), 3, 1, &EnumerationOptions::default()).unwrap();
        assert_eq!(pmf.entries.len(), 1);
        assert_abs_diff_eq!(pmf.covered_mass, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn budget_guard() {
        let opts = EnumerationOptions {
            budget: 100,
            prune_floor: 0.0,
            ..Default::default()
        };
        match enumerate_finite(&uniform(), 6, 40, &opts) {
            Err(SieveError::BudgetExceeded { count, budget }) => {
                assert_eq!(count, pattern_count(6, 40));
                assert_eq!(budget, 100);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
        let opts = EnumerationOptions {
            budget: 100,
            ..Default::default()
        };
        assert!(matches!(
            enumerate_finite(&uniform(), 6, 40, &opts),
            Err(SieveError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn pattern_count_matches_brute_force() {
        // n = 3, depth <= 3: (3),(1,2),(2,1),(3,0),(1,0,2),(1,1,1),(1,2,0),(2,0,1),(2,1,0),(3,0,0)
        assert_eq!(pattern_count(3, 3), 10);
        let pmf = enumerate_finite(
            &uniform(),
            4,
            6,
            &EnumerationOptions {
                prune_floor: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(pmf.entries.len() as u128, pattern_count(4, 6));
    }

    #[test]
    fn pruning_is_charged_to_tail() {
        let law = StickLaw::beta_theta_one(2.0).unwrap();
        let opts = EnumerationOptions {
            prune_floor: 1e-6,
            ..Default::default()
        };
        let pmf = enumerate_finite(&law, 5, 30, &opts).unwrap();
        assert!(pmf.pruned_mass > 0.0);
        assert!(pmf.covered_mass + pmf.tail_bound >= 1.0 - 1e-12);
        assert!(pmf.covered_mass <= 1.0 + 1e-12);
    }

    #[test]
    fn sequential_and_parallel_enumeration_agree() {
        let law = StickLaw::beta(1.5, 2.5).unwrap();
        let seq = enumerate_finite(
            &law,
            5,
            20,
            &EnumerationOptions {
                execution: Execution::Sequential,
                ..Default::default()
            },
        )
        .unwrap();
        let par = enumerate_finite(&law, 5, 20, &EnumerationOptions::default()).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn marginals_are_consistent() {
        let u = uniform();
        let m1 = finite_marginals(&u, 1, 15, &EnumerationOptions::default()).unwrap();
        for k in 1..=15u32 {
            assert_abs_diff_eq!(m1.depth[&k], 0.5f64.powi(k as i32), epsilon = 1e-15);
        }
        let pmf = enumerate_finite(&u, 3, 30, &EnumerationOptions::default()).unwrap();
        let m = FiniteMarginals::from_pmf(&pmf, 4);
        let conserved: f64 = m.mean_r_counts.iter().enumerate().map(|(r, e)| r as f64 * e).sum();
        assert_abs_diff_eq!(conserved, 3.0 * pmf.covered_mass, epsilon = 1e-12);
        let one_box: f64 = pmf.entries.iter().filter(|(p, _)| p.occupied() == 1).map(|(_, v)| v).sum();
        assert_abs_diff_eq!(m.occupied[&1], one_box, epsilon = 1e-14);
        let z1: f64 = m.z[0].values().sum();
        assert_abs_diff_eq!(z1, pmf.covered_mass, epsilon = 1e-14);
    }

    #[test]
    fn limit_marginal_first_coordinate() {
        let m = limit_marginal(&uniform(), 1, 50, &LimitMarginalOptions::default()).unwrap();
        for k in 1..=50u32 {
            assert_abs_diff_eq!(m.pmf[&k], 1.0 / f64::from(k * (k + 1)), epsilon = 1e-15);
        }
        assert_abs_diff_eq!(m.residual, 1.0 / 51.0, epsilon = 1e-12);
    }

    #[test]
    fn limit_marginal_second_coordinate() {
        let u = uniform();
        let m = limit_marginal(&u, 2, 20, &LimitMarginalOptions::default()).unwrap();
        assert!(m.truncation_residual <= 1e-3);
        // P{Z2 = 0} = sum_k 1/(k(k+1)) * 1/(k+1)
        let direct: f64 = (1..=m.prefix_sum_cap).map(|k| {
            let k = f64::from(k);
            1.0 / (k * (k + 1.0) * (k + 1.0))
        }).sum();
        assert_abs_diff_eq!(m.pmf[&0], direct, epsilon = 1e-12);
        assert!(m.pmf.values().sum::<f64>() <= 1.0);
        let tight = LimitMarginalOptions {
            tolerance: 1e-9,
            max_prefix_sum: 256,
        };
        assert!(matches!(limit_marginal(&u, 2, 5, &tight), Err(SieveError::Truncation { .. })));
    }

    #[test]
    fn limit_first_coordinate_sums_to_one() {
        for law in [StickLaw::beta(1.5, 2.5).unwrap(), StickLaw::beta_theta_one(0.5).unwrap()] {
            let m = limit_marginal(&law, 1, 20_000, &LimitMarginalOptions::default()).unwrap();
            assert!(m.residual > 0.0 && m.residual < 1e-2, "{law}: {}", m.residual);
        }
    }

    #[test]
    fn csv_and_json_forms() {
        let pmf = enumerate_finite(&uniform(), 2, 2, &EnumerationOptions::default()).unwrap();
        let csv = pmf.to_csv();
        assert!(csv.starts_with("pattern,probability\n"));
        assert!(csv.contains("1-1,"));
        let json = pmf.to_json();
        assert_eq!(json["entries"][0]["pattern"], serde_json::json!([1, 1]));
    }
}
