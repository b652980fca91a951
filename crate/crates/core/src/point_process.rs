//! The limit model: a self-similar point process `B` with intensity
//! `dx/(mu x)` and an independent unit Poisson process `U`.
//!
//! On the log scale `s = -ln x`, `B` is a stationary renewal process with
//! spacings distributed as `|ln W|`. A window is started from the forward
//! recurrence time at its upper edge and grown in either direction; growing
//! past a boundary that has no realized epoch beyond it uses the spacing that
//! straddles the boundary, i.e. `|ln W|` conditioned to exceed the realized
//! forward part.

use crate::error::{Result, SieveError};
use crate::par::{fold_replicates, Execution, Stream};
use crate::stats::{EmpiricalPmf, IntegerMoments};
use crate::stick_law::StickLaw;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::Serialize;
use std::collections::VecDeque;

/// Points of `U`, generated left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonStream {
    points: Vec<f64>,
}

impl PoissonStream {
    /// Starts the stream at its leftmost point `Y ~ Exp(1)`.
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let y: f64 = Exp1.sample(rng);
        Self { points: vec![y] }
    }

    /// Appends points until one exceeds `x`.
    pub fn extend_to<R: Rng + ?Sized>(&mut self, rng: &mut R, x: f64) {
        let mut last = self.rightmost();
        while last <= x {
            let step: f64 = Exp1.sample(rng);
            last += step;
            self.points.push(last);
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn leftmost(&self) -> f64 {
        self.points[0]
    }

    pub fn rightmost(&self) -> f64 {
        *self.points.last().expect("stream is never empty")
    }
}

/// Realization of `B` on `[x_lo, x_hi]` that can be grown in both directions.
///
/// Epochs are stored on the log scale. Spacings below the resolution of `f64`
/// (possible for laws with `W` extremely close to 1) produce repeated values.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewalWindow {
    // increasing s, all within [s_top, s_bottom]
    epochs: VecDeque<f64>,
    s_top: f64,
    s_bottom: f64,
    // nearest realized epoch with s < s_top, if any
    above: Option<f64>,
    // nearest realized epoch with s > s_bottom
    below: f64,
}

fn check_bounds(x_lo: f64, x_hi: f64) -> Result<()> {
    if !(x_lo > 0.0 && x_lo < x_hi && x_hi.is_finite()) {
        return Err(SieveError::InvalidArgument(format!(
            "window needs 0 < x_lo < x_hi < inf, got [{x_lo}, {x_hi}]"
        )));
    }
    Ok(())
}

/// A realization of `B` restricted to `[x_lo, x_hi]`.
pub fn build_window<R: Rng + ?Sized>(law: &StickLaw, rng: &mut R, x_lo: f64, x_hi: f64) -> Result<RenewalWindow> {
    check_bounds(x_lo, x_hi)?;
    let s_top = -x_hi.ln();
    let s_bottom = -x_lo.ln();
    let mut e = s_top + law.sample_forward_recurrence(rng)?;
    let mut epochs = VecDeque::new();
    while e <= s_bottom {
        epochs.push_back(e);
        e += law.sample_draw(rng).neg_log();
    }
    Ok(RenewalWindow {
        epochs,
        s_top,
        s_bottom,
        above: None,
        below: e,
    })
}

impl RenewalWindow {
    pub fn x_lo(&self) -> f64 {
        (-self.s_bottom).exp()
    }

    pub fn x_hi(&self) -> f64 {
        (-self.s_top).exp()
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Points in increasing order.
    pub fn points(&self) -> Vec<f64> {
        self.epochs.iter().rev().map(|s| (-s).exp()).collect()
    }

    /// Log-ratios of consecutive points, `ln(x_{i+1} / x_i)`.
    pub fn log_spacings(&self) -> Vec<f64> {
        self.epochs.iter().zip(self.epochs.iter().skip(1)).map(|(a, b)| b - a).collect()
    }

    /// Largest point of `B` at or below `x_hi`, which may lie below `x_lo`.
    pub fn largest_at_or_below_hi(&self) -> f64 {
        (-self.epochs.front().copied().unwrap_or(self.below)).exp()
    }

    /// Points inside `[a, b]`.
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        let (sa, sb) = (-b.ln(), -a.ln());
        self.epochs.iter().filter(|&&s| s >= sa && s <= sb).count()
    }

    /// Lowers `x_lo` to `new_lo`.
    pub fn extend_down<R: Rng + ?Sized>(&mut self, law: &StickLaw, rng: &mut R, new_lo: f64) -> Result<()> {
        check_bounds(new_lo, self.x_hi())?;
        let s_new = -new_lo.ln();
        if s_new <= self.s_bottom {
            return Ok(());
        }
        let mut e = self.below;
        while e <= s_new {
            self.epochs.push_back(e);
            e += law.sample_draw(rng).neg_log();
        }
        self.below = e;
        self.s_bottom = s_new;
        Ok(())
    }

    /// Raises `x_hi` to `new_hi`.
    pub fn extend_up<R: Rng + ?Sized>(&mut self, law: &StickLaw, rng: &mut R, new_hi: f64) -> Result<()> {
        check_bounds(self.x_lo(), new_hi)?;
        let s_new = -new_hi.ln();
        if s_new >= self.s_top {
            return Ok(());
        }
        let mut e = match self.above {
            Some(a) => a,
            None => {
                let first = self.epochs.front().copied().unwrap_or(self.below);
                first - law.sample_log_spacing_above(rng, first - self.s_top)?
            }
        };
        while e >= s_new {
            self.epochs.push_front(e);
            e -= law.sample_draw(rng).neg_log();
        }
        self.above = Some(e);
        self.s_top = s_new;
        Ok(())
    }
}

/// One gap of `B` and the number of `U` points inside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gap {
    pub left: f64,
    pub right: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapOccupancy {
    /// Closed gaps between consecutive points, left to right.
    pub gaps: Vec<Gap>,
    /// `U` points left of the first `B` point.
    pub before: u64,
    /// `U` points right of the last `B` point, awaiting a wider window.
    pub pending: u64,
}

/// Counts sorted `u` points in the gaps of sorted `b` points by a merge scan.
pub fn gap_counts_sorted(b: &[f64], u: &[f64]) -> Result<GapOccupancy> {
    let mut gaps: Vec<Gap> = b
        .windows(2)
        .map(|w| Gap {
            left: w[0],
            right: w[1],
            count: 0,
        })
        .collect();
    let mut before = 0;
    let mut pending = 0;
    let mut j = 0usize;
    for &x in u {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j < b.len() && b[j] == x {
            return Err(SieveError::CoincidentPoints(x));
        }
        match j {
            0 => before += 1,
            _ if j == b.len() => pending += 1,
            _ => gaps[j - 1].count += 1,
        }
    }
    Ok(GapOccupancy { gaps, before, pending })
}

/// Gap occupancies of `window` by `stream`; the stream must already reach
/// past the window's last point.
pub fn gap_counts(window: &RenewalWindow, stream: &PoissonStream) -> Result<GapOccupancy> {
    let b = window.points();
    if let Some(&last) = b.last() {
        if stream.rightmost() < last {
            return Err(SieveError::InvalidArgument(format!(
                "stream ends at {} before the window's last point {last}",
                stream.rightmost()
            )));
        }
    }
    gap_counts_sorted(&b, stream.points())
}

fn poisson_count<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> Result<u64> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| SieveError::Numerical {
        context: format!("poisson with mean {mean}: {e}"),
        estimate: mean,
    })?;
    let v: f64 = d.sample(rng);
    Ok(v as u64)
}

/// Walks the gaps of `B` from the one containing `Y` rightward, yielding
/// each gap's `U` count and Poisson mean.
struct GapWalk<'a> {
    law: &'a StickLaw,
    right: f64,
    started: bool,
}

impl<'a> GapWalk<'a> {
    fn new(law: &'a StickLaw) -> Self {
        Self {
            law,
            right: 0.0,
            started: false,
        }
    }

    fn next_gap<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(u64, f64)> {
        if !self.started {
            self.started = true;
            let y: f64 = Exp1.sample(rng);
            let r = self.law.sample_forward_recurrence(rng)?;
            let l = self.law.sample_log_spacing_above(rng, r)?;
            // The gap is ]y e^{-r}, y e^{l-r}[ and contains y.
            let mean = y * (l - r).exp_m1();
            self.right = y * (l - r).exp();
            return Ok((1 + poisson_count(rng, mean)?, mean));
        }
        let l = self.law.sample_draw(rng).neg_log();
        let mean = self.right * l.exp_m1();
        self.right *= l.exp();
        if !self.right.is_finite() {
            return Err(SieveError::Numerical {
                context: "gap endpoint overflowed".into(),
                estimate: self.right,
            });
        }
        Ok((poisson_count(rng, mean)?, mean))
    }
}

fn saturate(c: u64) -> u32 {
    u32::try_from(c).unwrap_or(u32::MAX)
}

/// `(Z^{(1)}, ..., Z^{(len)})` of the limit model. Counts above `u32::MAX`
/// saturate.
pub fn sample_limit_z<R: Rng + ?Sized>(law: &StickLaw, rng: &mut R, len: usize) -> Result<Vec<u32>> {
    if len == 0 {
        return Err(SieveError::InvalidArgument("prefix length must be positive".into()));
    }
    let mut walk = GapWalk::new(law);
    (0..len).map(|_| walk.next_gap(rng).map(|(c, _)| saturate(c))).collect()
}

/// Same law as [`sample_limit_z`], built from an explicit window and stream.
pub fn sample_limit_z_explicit<R: Rng + ?Sized>(law: &StickLaw, rng: &mut R, len: usize) -> Result<Vec<u32>> {
    if len == 0 {
        return Err(SieveError::InvalidArgument("prefix length must be positive".into()));
    }
    let mut stream = PoissonStream::new(rng);
    let y = stream.leftmost();
    let mut window = build_window(law, rng, 0.5 * y, y)?;
    while window.is_empty() {
        let lo = 0.5 * window.x_lo();
        window.extend_down(law, rng, lo)?;
    }
    let mut hi = y;
    while window.points().iter().filter(|&&p| p > y).count() < len {
        hi *= 2.0;
        window.extend_up(law, rng, hi)?;
    }
    let points = window.points();
    stream.extend_to(rng, *points.last().expect("nonempty window"));
    let occ = gap_counts(&window, &stream)?;
    let first = occ
        .gaps
        .iter()
        .position(|g| g.left < y && y < g.right)
        .ok_or_else(|| SieveError::Numerical {
            context: "no gap contains the leftmost Poisson point".into(),
            estimate: y,
        })?;
    Ok(occ.gaps[first..first + len].iter().map(|g| saturate(g.count)).collect())
}

/// Stopping rule for the rightward gap scan of [`sample_limit_kr`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StopParams {
    pub consecutive: usize,
    pub factor: f64,
    pub gap_budget: u64,
}

impl Default for StopParams {
    fn default() -> Self {
        Self {
            consecutive: 12,
            factor: 4.0,
            gap_budget: 1_000_000,
        }
    }
}

/// Small-part counts of the limit model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitKr {
    /// `K_0*`, or `None` when it is infinite for the law.
    pub k0: Option<u64>,
    /// `positive[r - 1]` is `K_r*`.
    pub positive: Vec<u64>,
    /// Every gap in the stopping run also had Poisson mean above the threshold.
    pub confident: bool,
    pub gaps_scanned: u64,
    /// Smallest Poisson mean within the stopping run.
    pub stop_mean: f64,
}

/// `(K_0*, ..., K_{r_max}*)` from a rightward scan that stops after
/// `stop.consecutive` gaps in a row each hold more than `stop.factor * r_max`
/// points. `K_0*` is skipped when `nu` is infinite.
pub fn sample_limit_kr<R: Rng + ?Sized>(law: &StickLaw, rng: &mut R, r_max: u32, stop: &StopParams) -> Result<LimitKr> {
    if r_max == 0 || stop.consecutive == 0 || stop.factor.is_nan() || stop.factor <= 0.0 {
        return Err(SieveError::InvalidArgument(format!(
            "need r_max >= 1 and a positive stop rule, got r_max={r_max}, {stop:?}"
        )));
    }
    let track_k0 = !law.nu()?.is_infinite();
    let threshold = stop.factor * f64::from(r_max);
    let mut k0 = 0u64;
    let mut positive = vec![0u64; r_max as usize];
    let mut walk = GapWalk::new(law);
    let mut run = 0usize;
    let mut run_min_mean = f64::INFINITY;
    let mut scanned = 0u64;
    loop {
        if scanned >= stop.gap_budget {
            return Err(SieveError::IncompleteScan { gaps: scanned as usize });
        }
        let (count, mean) = walk.next_gap(rng)?;
        scanned += 1;
        if count == 0 {
            k0 += 1;
        } else if count <= u64::from(r_max) {
            positive[count as usize - 1] += 1;
        }
        if count as f64 > threshold {
            run += 1;
            run_min_mean = run_min_mean.min(mean);
        } else {
            run = 0;
            run_min_mean = f64::INFINITY;
        }
        if run >= stop.consecutive {
            break;
        }
    }
    Ok(LimitKr {
        k0: track_k0.then_some(k0),
        positive,
        confident: run_min_mean > threshold,
        gaps_scanned: scanned,
        stop_mean: run_min_mean,
    })
}

/// Empirical law of `(Z^{(1)}, ..., Z^{(len)})` over independent replicates.
pub fn replicate_limit_z(
    law: &StickLaw,
    len: usize,
    replicates: u64,
    seed: u64,
    execution: Execution,
) -> Result<EmpiricalPmf<Vec<u32>>> {
    law.warm_up()?;
    fold_replicates(
        execution,
        seed,
        replicates,
        EmpiricalPmf::new,
        |acc, rng: &mut Stream, _| {
            acc.record(sample_limit_z(law, rng, len)?);
            Ok(())
        },
        |mut a, b| {
            a.merge(b);
            a
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitKrSummary {
    pub r_max: u32,
    /// `None` when `K_0*` is infinite.
    pub k0: Option<IntegerMoments>,
    /// `positive[r - 1]` accumulates `K_r*`.
    pub positive: Vec<IntegerMoments>,
    pub unconfident: u64,
    pub max_gaps_scanned: u64,
}

impl LimitKrSummary {
    fn empty(r_max: u32, track_k0: bool) -> Self {
        Self {
            r_max,
            k0: track_k0.then(IntegerMoments::default),
            positive: vec![IntegerMoments::default(); r_max as usize],
            unconfident: 0,
            max_gaps_scanned: 0,
        }
    }

    fn record(&mut self, s: &LimitKr) {
        if let (Some(acc), Some(k)) = (self.k0.as_mut(), s.k0) {
            acc.push(k);
        }
        for (acc, &k) in self.positive.iter_mut().zip(&s.positive) {
            acc.push(k);
        }
        self.unconfident += u64::from(!s.confident);
        self.max_gaps_scanned = self.max_gaps_scanned.max(s.gaps_scanned);
    }

    fn merge(mut self, other: Self) -> Self {
        if let (Some(a), Some(b)) = (self.k0.as_mut(), other.k0.as_ref()) {
            a.merge(b);
        }
        for (a, b) in self.positive.iter_mut().zip(&other.positive) {
            a.merge(b);
        }
        self.unconfident += other.unconfident;
        self.max_gaps_scanned = self.max_gaps_scanned.max(other.max_gaps_scanned);
        self
    }

    pub fn replicates(&self) -> u64 {
        self.positive.first().map_or(0, |m| m.n)
    }
}

/// Means of `K_r*` over independent replicates.
pub fn replicate_limit_kr(
    law: &StickLaw,
    r_max: u32,
    stop: &StopParams,
    replicates: u64,
    seed: u64,
    execution: Execution,
) -> Result<LimitKrSummary> {
    law.warm_up()?;
    let track_k0 = !law.nu()?.is_infinite();
    fold_replicates(
        execution,
        seed,
        replicates,
        || LimitKrSummary::empty(r_max, track_k0),
        |acc, rng: &mut Stream, _| {
            acc.record(&sample_limit_kr(law, rng, r_max, stop)?);
            Ok(())
        },
        LimitKrSummary::merge,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::stream;

    #[test]
    fn merge_scan_example() {
        let occ = gap_counts_sorted(&[1.0, 2.0, 4.0], &[2.5, 3.0, 5.0]).unwrap();
        assert_eq!(occ.gaps.len(), 2);
        assert_eq!(occ.gaps[0].count, 0);
        assert_eq!(occ.gaps[1].count, 2);
        assert_eq!(occ.pending, 1);
        assert_eq!(occ.before, 0);
    }

    #[test]
    fn merge_scan_edge_cases() {
        let occ = gap_counts_sorted(&[1.0, 2.0, 4.0], &[]).unwrap();
        assert!(occ.gaps.iter().all(|g| g.count == 0));
        let occ = gap_counts_sorted(&[0.0, 10.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(occ.gaps[0].count, 3);
        assert!(matches!(
            gap_counts_sorted(&[1.0, 2.0], &[2.0]),
            Err(SieveError::CoincidentPoints(x)) if x == 2.0
        ));
    }

    #[test]
    fn window_points_lie_inside_and_increase() {
        let law = StickLaw::uniform();
        let mut rng = stream(5, 0);
        for _ in 0..200 {
            let mut w = build_window(&law, &mut rng, 0.01, 1.0).unwrap();
            w.extend_up(&law, &mut rng, 50.0).unwrap();
            w.extend_down(&law, &mut rng, 1e-4).unwrap();
            let pts = w.points();
            assert!(pts.windows(2).all(|p| p[0] < p[1]));
            assert!(pts.iter().all(|&p| (1e-4..=50.0).contains(&p)));
            assert!((w.x_hi() - 50.0).abs() < 1e-12);
        }
    }

    #[test]
    fn z_prefix_starts_positive() {
        let law = StickLaw::beta(1.5, 2.5).unwrap();
        let mut rng = stream(9, 0);
        for _ in 0..500 {
            let z = sample_limit_z(&law, &mut rng, 4).unwrap();
            assert!(z[0] >= 1);
            let z = sample_limit_z_explicit(&law, &mut rng, 4).unwrap();
            assert!(z[0] >= 1);
        }
    }

    #[test]
    fn heavy_law_reports_infinite_k0() {
        let law = StickLaw::heavy_meander(1.0).unwrap();
        let mut rng = stream(2, 0);
        let kr = sample_limit_kr(&law, &mut rng, 2, &StopParams::default()).unwrap();
        assert_eq!(kr.k0, None);
        assert_eq!(kr.positive.len(), 2);
    }

    #[test]
    fn larger_r_max_never_stops_earlier() {
        let law = StickLaw::uniform();
        for i in 0..200 {
            let a = sample_limit_kr(&law, &mut stream(4, i), 1, &StopParams::default()).unwrap();
            let b = sample_limit_kr(&law, &mut stream(4, i), 3, &StopParams::default()).unwrap();
            assert!(b.gaps_scanned >= a.gaps_scanned);
            assert!(b.positive[0] >= a.positive[0]);
        }
    }

    #[test]
    fn scan_budget_is_enforced() {
        let stop = StopParams {
            gap_budget: 3,
            ..StopParams::default()
        };
        let r = sample_limit_kr(&StickLaw::uniform(), &mut stream(1, 0), 2, &stop);
        assert!(matches!(r, Err(SieveError::IncompleteScan { gaps: 3 })));
    }
}
