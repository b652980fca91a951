//! Finite-`n` Monte Carlo for the sieve.
//!
//! Balls are never drawn individually. Given `P_{j-1}`, the `m` balls not yet
//! placed are iid uniform on `[0, P_{j-1}]`, so the count landing in
//! `]P_j, P_{j-1}[` is `Binomial(m, 1 - W_j)`. Each replicate costs `O(I_n)`
//! draws.

use crate::error::{Result, SieveError};
use crate::exact::Pattern;
use crate::par::{fold_replicates, Execution, Stream};
use crate::stats::{EmpiricalPmf, IntegerMoments};
use crate::stick_law::StickLaw;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

/// One realization, box counts listed from the box next to 1 leftward.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SieveOutcome {
    n: u32,
    counts_rtl: Vec<u32>,
}

impl SieveOutcome {
    pub fn from_right_to_left(counts_rtl: Vec<u32>) -> Result<Self> {
        match counts_rtl.last() {
            Some(&c) if c > 0 => {}
            _ => {
                return Err(SieveError::InvalidArgument(format!(
                    "leftmost listed box must be occupied: {counts_rtl:?}"
                )))
            }
        }
        let n = counts_rtl.iter().sum();
        Ok(Self { n, counts_rtl })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn counts_right_to_left(&self) -> &[u32] {
        &self.counts_rtl
    }

    pub fn pattern(&self) -> Pattern {
        Pattern::new(self.counts_rtl.iter().rev().copied().collect()).expect("leftmost box is occupied")
    }

    /// `I_n`.
    pub fn depth(&self) -> usize {
        self.counts_rtl.len()
    }

    /// `Z_n^{(i)}`, zero past the last box.
    pub fn z(&self, i: usize) -> u32 {
        assert!(i >= 1, "occupancy counts are indexed from 1");
        let k = self.counts_rtl.len();
        if i > k {
            0
        } else {
            self.counts_rtl[k - i]
        }
    }

    pub fn z_prefix(&self, len: usize) -> Vec<u32> {
        (1..=len).map(|i| self.z(i)).collect()
    }

    /// `K_n`.
    pub fn occupied(&self) -> usize {
        self.counts_rtl.iter().filter(|&&c| c > 0).count()
    }

    /// `K_{n,r}`; `r = 0` counts empty boxes right of the leftmost occupied one.
    pub fn r_count(&self, r: u32) -> usize {
        self.counts_rtl.iter().filter(|&&c| c == r).count()
    }

    /// `(K_{n,0}, ..., K_{n,r_max})` in one pass.
    pub fn r_counts(&self, r_max: u32) -> Vec<u32> {
        let mut out = vec![0u32; r_max as usize + 1];
        for &c in &self.counts_rtl {
            if c <= r_max {
                out[c as usize] += 1;
            }
        }
        out
    }
}

/// Draws one sieve outcome for `n` balls by the binomial chain.
pub fn simulate_outcome<R: Rng + ?Sized>(law: &StickLaw, n: u32, rng: &mut R) -> Result<SieveOutcome> {
    if n == 0 {
        return Err(SieveError::InvalidArgument("the sieve needs at least one ball".into()));
    }
    let mut remaining = u64::from(n);
    let mut counts = Vec::new();
    while remaining > 0 {
        let draw = law.sample_draw(rng);
        let c = Binomial::new(remaining, draw.complement)
            .map_err(|e| SieveError::Numerical {
                context: format!("binomial with p = {}: {e}", draw.complement),
                estimate: draw.complement,
            })?
            .sample(rng);
        counts.push(c as u32);
        remaining -= c;
    }
    Ok(SieveOutcome { n, counts_rtl: counts })
}

/// Which statistic [`replicate`] tabulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "len")]
pub enum Statistic {
    /// The full left-to-right pattern.
    Pattern,
    /// `(Z^{(1)}, ..., Z^{(len)})`.
    ZPrefix(usize),
    /// `(K_{n,0}, ..., K_{n,r_max})`.
    RCounts,
    /// `I_n`.
    Depth,
    /// `K_n`.
    Occupied,
}

impl Statistic {
    /// Full patterns for `n <= 12`, otherwise the first eight counts.
    pub fn default_for(n: u32) -> Self {
        if n <= 12 {
            Self::Pattern
        } else {
            Self::ZPrefix(8)
        }
    }

    fn key(&self, outcome: &SieveOutcome, r_counts: &[u32]) -> Vec<u32> {
        match *self {
            Self::Pattern => outcome.pattern().into_parts(),
            Self::ZPrefix(len) => outcome.z_prefix(len),
            Self::RCounts => r_counts.to_vec(),
            Self::Depth => vec![outcome.depth() as u32],
            Self::Occupied => vec![outcome.occupied() as u32],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateConfig {
    pub n: u32,
    pub replicates: u64,
    pub seed: u64,
    pub statistic: Statistic,
    /// Largest `r` with a reported mean `K_{n,r}`.
    pub r_max: u32,
    pub execution: Execution,
}

impl ReplicateConfig {
    pub fn new(n: u32, replicates: u64, seed: u64) -> Self {
        Self {
            n,
            replicates,
            seed,
            statistic: Statistic::default_for(n),
            r_max: 2,
            execution: Execution::default(),
        }
    }
}

/// Aggregates of [`replicate`]; all sums are exact integers, so the result
/// does not depend on how replicates were scheduled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateSummary {
    pub n: u32,
    pub statistic: Statistic,
    pub pmf: EmpiricalPmf<Vec<u32>>,
    /// `r_counts[r]` accumulates `K_{n,r}`.
    pub r_counts: Vec<IntegerMoments>,
    pub depth: IntegerMoments,
    pub occupied: IntegerMoments,
}

impl ReplicateSummary {
    fn empty(n: u32, statistic: Statistic, r_max: u32) -> Self {
        Self {
            n,
            statistic,
            pmf: EmpiricalPmf::new(),
            r_counts: vec![IntegerMoments::default(); r_max as usize + 1],
            depth: IntegerMoments::default(),
            occupied: IntegerMoments::default(),
        }
    }

    fn record(&mut self, outcome: &SieveOutcome) {
        let r_max = self.r_counts.len() as u32 - 1;
        let rc = outcome.r_counts(r_max);
        self.pmf.record(self.statistic.key(outcome, &rc));
        for (acc, &k) in self.r_counts.iter_mut().zip(&rc) {
            acc.push(u64::from(k));
        }
        self.depth.push(outcome.depth() as u64);
        self.occupied.push(outcome.occupied() as u64);
    }

    fn merge(mut self, other: Self) -> Self {
        self.pmf.merge(other.pmf);
        for (a, b) in self.r_counts.iter_mut().zip(&other.r_counts) {
            a.merge(b);
        }
        self.depth.merge(&other.depth);
        self.occupied.merge(&other.occupied);
        self
    }

    pub fn replicates(&self) -> u64 {
        self.pmf.replicates()
    }
}

/// Runs `config.replicates` independent sieves, replicate `i` on stream
/// `(config.seed, i)`.
pub fn replicate(law: &StickLaw, config: &ReplicateConfig) -> Result<ReplicateSummary> {
    if config.n == 0 || config.replicates == 0 {
        return Err(SieveError::InvalidArgument("n and replicates must be positive".into()));
    }
    let (n, statistic, r_max) = (config.n, config.statistic, config.r_max);
    fold_replicates(
        config.execution,
        config.seed,
        config.replicates,
        || ReplicateSummary::empty(n, statistic, r_max),
        |acc, rng: &mut Stream, _| {
            let outcome = simulate_outcome(law, n, rng)?;
            acc.record(&outcome);
            Ok(())
        },
        ReplicateSummary::merge,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::stream;

    #[test]
    fn outcome_statistics() {
        let o = SieveOutcome::from_right_to_left(vec![0, 1, 0, 2]).unwrap();
        assert_eq!(o.n(), 3);
        assert_eq!(o.pattern().parts(), &[2, 0, 1, 0]);
        assert_eq!(o.depth(), 4);
        assert_eq!(o.z(1), 2);
        assert_eq!(o.z(3), 1);
        assert_eq!(o.z(5), 0);
        assert_eq!(o.occupied(), 2);
        assert_eq!(o.r_count(0), 2);
        assert_eq!(o.r_counts(3), vec![2, 1, 1, 0]);
        assert!(SieveOutcome::from_right_to_left(vec![1, 0]).is_err());
    }

    #[test]
    fn outcomes_conserve_balls() {
        let laws = [StickLaw::uniform(), StickLaw::beta(0.7, 0.6).unwrap(), StickLaw::heavy_meander(1.0).unwrap()];
        let mut rng = stream(11, 0);
        for law in &laws {
            for n in [1u32, 2, 7, 100, 5000] {
                let o = simulate_outcome(law, n, &mut rng).unwrap();
                let rc = o.r_counts(n);
                let total: u64 = rc.iter().enumerate().map(|(r, &k)| r as u64 * u64::from(k)).sum();
                assert_eq!(total, u64::from(n));
                assert_eq!(o.occupied(), o.depth() - o.r_count(0));
                assert!(o.z(1) > 0);
            }
        }
        assert!(simulate_outcome(&laws[0], 0, &mut rng).is_err());
    }

    #[test]
    fn replicate_is_schedule_independent() {
        let law = StickLaw::uniform();
        let mut cfg = ReplicateConfig::new(50, 2_000, 3);
        cfg.execution = Execution::Sequential;
        let seq = replicate(&law, &cfg).unwrap();
        cfg.execution = Execution::Parallel;
        let par = replicate(&law, &cfg).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq.replicates(), 2_000);
        assert_eq!(seq.statistic, Statistic::ZPrefix(8));
    }

    #[test]
    fn statistic_keys() {
        let o = SieveOutcome::from_right_to_left(vec![0, 1, 0, 2]).unwrap();
        let rc = o.r_counts(2);
        assert_eq!(Statistic::Pattern.key(&o, &rc), vec![2, 0, 1, 0]);
        assert_eq!(Statistic::ZPrefix(6).key(&o, &rc), vec![2, 0, 1, 0, 0, 0]);
        assert_eq!(Statistic::RCounts.key(&o, &rc), vec![2, 1, 1]);
        assert_eq!(Statistic::Depth.key(&o, &rc), vec![4]);
        assert_eq!(Statistic::Occupied.key(&o, &rc), vec![2]);
    }
}
