//! Comparison utilities: total variation, chi-square goodness of fit,
//! Kolmogorov–Smirnov tests, means with standard errors and convergence tables.

use crate::error::{Result, SieveError};
use crate::extended::Extended;
use serde::Serialize;
use statrs::function::gamma::gamma_ur;
use std::collections::BTreeMap;
use std::fmt::Debug;

/// Reported p-values never go below this.
pub const P_VALUE_FLOOR: f64 = 1e-300;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub type Pmf<K> = BTreeMap<K, f64>;

/// Frequency table built from replicate outcomes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalPmf<K: Ord> {
    counts: BTreeMap<K, u64>,
    replicates: u64,
}

impl<K: Ord> Default for EmpiricalPmf<K> {
    fn default() -> Self {
        Self {
            counts: BTreeMap::new(),
            replicates: 0,
        }
    }
}

impl<K: Ord + Clone> EmpiricalPmf<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, key: K) {
        *self.counts.entry(key).or_insert(0) += 1;
        self.replicates += 1;
    }

    pub fn merge(&mut self, other: Self) {
        for (k, c) in other.counts {
            *self.counts.entry(k).or_insert(0) += c;
        }
        self.replicates += other.replicates;
    }

    pub fn replicates(&self) -> u64 {
        self.replicates
    }

    pub fn counts(&self) -> &BTreeMap<K, u64> {
        &self.counts
    }

    pub fn count(&self, key: &K) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn frequency(&self, key: &K) -> f64 {
        if self.replicates == 0 {
            return 0.0;
        }
        self.count(key) as f64 / self.replicates as f64
    }

    /// Binomial standard error of [`Self::frequency`].
    pub fn standard_error(&self, key: &K) -> f64 {
        if self.replicates == 0 {
            return 0.0;
        }
        let p = self.frequency(key);
        (p * (1.0 - p) / self.replicates as f64).sqrt()
    }

    pub fn to_pmf(&self) -> Pmf<K> {
        self.counts.keys().map(|k| (k.clone(), self.frequency(k))).collect()
    }

    /// Re-keys outcomes, merging those that map to the same key.
    pub fn map_keys<J: Ord + Clone>(&self, f: impl Fn(&K) -> J) -> EmpiricalPmf<J> {
        let mut out = EmpiricalPmf::new();
        for (k, &c) in &self.counts {
            *out.counts.entry(f(k)).or_insert(0) += c;
        }
        out.replicates = self.replicates;
        out
    }
}

#[derive(Serialize)]
struct EmpiricalRow<'a, K> {
    key: &'a K,
    count: u64,
    frequency: f64,
    se: f64,
}

#[derive(Serialize)]
struct EmpiricalJson<'a, K> {
    replicates: u64,
    entries: Vec<EmpiricalRow<'a, K>>,
}

// Keys may be sequences, so entries serialize as a list rather than a map.
impl<K: Ord + Clone + Serialize> Serialize for EmpiricalPmf<K> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        EmpiricalJson {
            replicates: self.replicates,
            entries: self
                .counts
                .iter()
                .map(|(key, &count)| EmpiricalRow {
                    key,
                    count,
                    frequency: self.frequency(key),
                    se: self.standard_error(key),
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

/// Mean of a nonnegative integer statistic with its standard error,
/// accumulated from exact integer sums.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IntegerMoments {
    pub n: u64,
    pub sum: u128,
    pub sum_sq: u128,
}

impl IntegerMoments {
    pub fn push(&mut self, x: u64) {
        self.n += 1;
        self.sum += u128::from(x);
        self.sum_sq += u128::from(x) * u128::from(x);
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        self.sum as f64 / self.n as f64
    }

    /// Standard error of the mean using the unbiased sample variance.
    pub fn standard_error(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let mean = self.mean();
        let var = ((self.sum_sq as f64) - n * mean * mean).max(0.0) / (n - 1.0);
        (var / n).sqrt()
    }

    pub fn estimate(&self) -> MeanEstimate {
        MeanEstimate {
            mean: self.mean(),
            se: self.standard_error(),
            n: self.n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: u64,
}

pub fn mean_with_se(values: &[f64]) -> MeanEstimate {
    let n = values.len();
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / n as f64;
    let ss = values.iter().map(|v| (v - mean).powi(2)).collect::<CompensatedSum>().value();
    let se = if n > 1 { (ss / (n as f64 - 1.0) / n as f64).sqrt() } else { f64::NAN };
    MeanEstimate { mean, se, n: n as u64 }
}

// ------------------------------------------------------------------------- TV

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TvReport {
    /// Restricted distance plus half the gap between excluded masses.
    pub distance: f64,
    /// `(1/2) sum |p - q|` over the restricted support.
    pub restricted: f64,
    /// `1 - sum of p` over the restricted support.
    pub excluded_p: f64,
    pub excluded_q: f64,
}

/// Total variation distance between `p` and `q` on the keys accepted by
/// `support`; mass outside it (including mass missing from a truncated table)
/// is reported rather than dropped.
pub fn tv_distance<K: Ord>(p: &Pmf<K>, q: &Pmf<K>, support: impl Fn(&K) -> bool) -> Result<TvReport> {
    let mut restricted = CompensatedSum::default();
    let mut in_p = CompensatedSum::default();
    let mut in_q = CompensatedSum::default();
    let mut cells = 0usize;
    for (k, &pv) in p.iter().filter(|(k, _)| support(k)) {
        let qv = q.get(k).copied().unwrap_or(0.0);
        restricted.add((pv - qv).abs());
        in_p.add(pv);
        in_q.add(qv);
        cells += 1;
    }
    for (_, &qv) in q.iter().filter(|(k, _)| support(k) && !p.contains_key(k)) {
        restricted.add(qv.abs());
        in_q.add(qv);
        cells += 1;
    }
    if cells == 0 {
        return Err(SieveError::Stats("total variation over an empty support".into()));
    }
    let excluded_p = (1.0 - in_p.value()).max(0.0);
    let excluded_q = (1.0 - in_q.value()).max(0.0);
    let restricted = (0.5 * restricted.value()).clamp(0.0, 1.0);
    Ok(TvReport {
        distance: (restricted + 0.5 * (excluded_p - excluded_q).abs()).clamp(0.0, 1.0),
        restricted,
        excluded_p,
        excluded_q,
    })
}

/// Unrestricted total variation distance.
pub fn tv_distance_full<K: Ord>(p: &Pmf<K>, q: &Pmf<K>) -> Result<f64> {
    Ok(tv_distance(p, q, |_| true)?.distance)
}

// ----------------------------------------------------------------- chi-square

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub key: String,
    /// Expected count.
    pub expected: f64,
    pub observed: u64,
    /// Standard error of the observed count under the expected law.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub tv: TvReport,
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub replicates: u64,
    pub cells: Vec<Cell>,
    /// Expected mass outside the compared support; pooled into the tail cell.
    pub excluded_expected: f64,
    /// Observed fraction outside the compared support.
    pub excluded_observed: f64,
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell,expected,observed,se\n");
        for c in &self.cells {
            out.push_str(&format!("{},{},{},{}\n", c.key, c.expected, c.observed, c.se));
        }
        out
    }
}

/// `P{chi2_df > statistic}`, floored at [`P_VALUE_FLOOR`].
pub fn chi_square_p_value(statistic: f64, df: usize) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    if !statistic.is_finite() {
        return P_VALUE_FLOOR;
    }
    gamma_ur(df as f64 / 2.0, statistic / 2.0).clamp(P_VALUE_FLOOR, 1.0)
}

fn cell(key: String, expected_mass: f64, observed: u64, n: f64) -> Cell {
    Cell {
        key,
        expected: expected_mass * n,
        observed,
        se: (n * expected_mass * (1.0 - expected_mass)).max(0.0).sqrt(),
    }
}

/// Pearson goodness of fit of `observed` against `expected` on the keys
/// accepted by `support`.
///
/// Keys outside the support and cells whose expected count is below
/// `min_expected` are pooled into a single tail cell whose expected mass is
/// the complement of the retained cells.
pub fn chi_square_gof<K: Ord + Clone + Debug>(
    observed: &EmpiricalPmf<K>,
    expected: &Pmf<K>,
    support: impl Fn(&K) -> bool,
    min_expected: f64,
) -> Result<ComparisonReport> {
    let n = observed.replicates();
    if n == 0 {
        return Err(SieveError::Stats("chi-square with no replicates".into()));
    }
    let nf = n as f64;
    for k in observed.counts().keys().filter(|k| support(k)) {
        if !expected.contains_key(k) {
            return Err(SieveError::Stats(format!("no expected mass for observed cell {k:?}")));
        }
    }
    let mut cells = Vec::new();
    let mut kept_mass = CompensatedSum::default();
    let mut kept_obs = 0u64;
    let mut in_support_mass = CompensatedSum::default();
    let mut in_support_obs = 0u64;
    for (k, &mass) in expected.iter().filter(|(k, _)| support(k)) {
        let obs = observed.count(k);
        in_support_mass.add(mass);
        in_support_obs += obs;
        if mass * nf >= min_expected {
            kept_mass.add(mass);
            kept_obs += obs;
            cells.push(cell(format!("{k:?}"), mass, obs, nf));
        }
    }
    let tail_mass = (1.0 - kept_mass.value()).max(0.0);
    let tail_obs = n - kept_obs;
    if tail_mass * nf > 0.0 || tail_obs > 0 {
        cells.push(cell("tail".into(), tail_mass, tail_obs, nf));
    }
    if cells.len() < 2 {
        return Err(SieveError::Stats(format!("{} cell(s) after pooling; need at least 2", cells.len())));
    }
    let mut statistic = CompensatedSum::default();
    for c in &cells {
        if c.expected > 0.0 {
            statistic.add((c.observed as f64 - c.expected).powi(2) / c.expected);
        } else if c.observed > 0 {
            statistic.add(f64::INFINITY);
        }
    }
    let statistic = statistic.value();
    let df = cells.len() - 1;
    let tv = tv_distance(&observed.to_pmf(), expected, &support)?;
    Ok(ComparisonReport {
        tv,
        statistic,
        degrees_of_freedom: df,
        p_value: chi_square_p_value(statistic, df),
        replicates: n,
        cells,
        excluded_expected: (1.0 - in_support_mass.value()).max(0.0),
        excluded_observed: (n - in_support_obs) as f64 / nf,
    })
}

// ------------------------------------------------------------------------- KS

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
    /// Effective sample size used for the p-value.
    pub effective_n: f64,
}

/// Kolmogorov survival function `Q(lambda) = 2 sum (-1)^{j-1} e^{-2 j^2 lambda^2}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d).max(P_VALUE_FLOOR)
}

/// One-sample test of `samples` against a continuous `cdf`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsReport> {
    if samples.is_empty() {
        return Err(SieveError::Stats("KS test with no samples".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(KsReport {
        statistic: d,
        p_value: ks_p_value(d, n),
        effective_n: n,
    })
}

/// Two-sample test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsReport> {
    if a.is_empty() || b.is_empty() {
        return Err(SieveError::Stats("KS test with an empty sample".into()));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    Ok(KsReport {
        statistic: d,
        p_value: ks_p_value(d, ne),
        effective_n: ne,
    })
}

// --------------------------------------------------------- convergence tables

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: u64,
    pub estimate: f64,
    pub se: f64,
    /// `|estimate - target|`, or the raw estimate for an infinite target.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub target: Extended,
    pub rows: Vec<ConvergenceRow>,
    /// Finite target: gaps nonincreasing. Infinite target: estimates strictly increasing.
    pub monotone: bool,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,estimate,se,gap\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.n, r.estimate, r.se, r.gap));
        }
        out
    }
}

/// Gap-to-target table over a series of `(n, estimate, se)`.
pub fn convergence_table(series: &[(u64, f64, f64)], target: Extended) -> ConvergenceTable {
    let rows: Vec<ConvergenceRow> = series
        .iter()
        .map(|&(n, estimate, se)| ConvergenceRow {
            n,
            estimate,
            se,
            gap: match target {
                Extended::Finite(t) => (estimate - t).abs(),
                Extended::Infinite => estimate,
            },
        })
        .collect();
    let monotone = match target {
        Extended::Finite(_) => rows.windows(2).all(|w| w[1].gap <= w[0].gap),
        Extended::Infinite => rows.windows(2).all(|w| w[1].gap > w[0].gap),
    };
    ConvergenceTable { target, rows, monotone }
}
