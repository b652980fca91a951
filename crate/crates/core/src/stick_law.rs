//! The stick-breaking factor `W`.
//!
//! A [`StickLaw`] describes the distribution of `W` on `(0,1)` and answers
//! every question the rest of the crate asks about it: iid draws, the joint
//! moments `m(a,b) = E[W^a (1-W)^b]`, `mu = E[-ln W]`, `nu = E[-ln(1-W)]`,
//! the CDF, the tail of `|ln W|`, and draws of the size-biased meander
//! variable `W0` whose density on `(0,1]` is `P{W < x} / (mu x)`.
//!
//! Beta-type laws use closed forms. `HeavyMeander(a)` sets `W = 1 - e^{-Z}`
//! with `P{Z > z} = z^{-a}` on `[1, inf)`; its moments come from adaptive
//! quadrature after the substitution `Z = u^{-1/a}`, which maps the problem to
//! a bounded integrand on `(0,1)`.

use crate::error::{Result, SieveError};
use crate::extended::Extended;
use crate::quadrature::{Estimate, Quadrature};
use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::gamma::digamma;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{OnceLock, RwLock};

/// Largest `f64` strictly below one.
pub const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

/// Attempts made by plain rejection before switching to inversion when
/// drawing a spacing conditioned to exceed a threshold.
const FAST_REJECTION_ATTEMPTS: u32 = 64;

/// Relative tolerance used for quadrature-backed moments.
const MOMENT_REL_TOL: f64 = 1e-12;

/// Interpolation tolerance of the `W0` inverse-CDF table.
const W0_TABLE_TOL: f64 = 1e-9;
/// Required agreement between the tabulated `W0` mass and one.
const W0_MASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

/// The distribution of `W`.
#[derive(Debug, Clone, PartialEq)]
pub enum LawKind {
    /// Density `theta x^{theta-1}`, i.e. `Beta(theta, 1)`.
    BetaThetaOne { theta: f64 },
    Beta(BetaParams),
    Uniform,
    BetaMixture {
        weights: Vec<f64>,
        components: Vec<BetaParams>,
    },
    /// `W = 1 - e^{-Z}` with `Z` Pareto of index `a` on `[1, inf)`.
    HeavyMeander { a: f64 },
}

/// One draw of `W`, carrying `1 - W` at full precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StickDraw {
    pub w: f64,
    pub complement: f64,
}

impl StickDraw {
    /// `-ln W`, accurate also when `W` is within rounding of one.
    pub fn neg_log(&self) -> f64 {
        if self.complement < 0.5 {
            -(-self.complement).ln_1p()
        } else {
            -self.w.ln()
        }
    }
}

#[derive(Debug, Clone)]
enum Sampler {
    Uniform,
    ThetaOne { inv_theta: f64 },
    Beta(Beta<f64>),
    Mixture { cumulative: Vec<f64>, parts: Vec<Beta<f64>> },
    Heavy { inv_a: f64 },
}

/// Memo table for `m(a,b)`, optionally capped in size.
#[derive(Debug, Default)]
pub struct MomentCache {
    table: RwLock<HashMap<(u32, u32), f64>>,
    cap: Option<usize>,
}

impl MomentCache {
    pub fn with_cap(cap: usize) -> Self {
        Self {
            table: RwLock::default(),
            cap: Some(cap),
        }
    }

    pub fn len(&self) -> usize {
        self.table.read().map(|t| t.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, key: (u32, u32)) -> Option<f64> {
        self.table.read().ok()?.get(&key).copied()
    }

    fn insert(&self, key: (u32, u32), value: f64) {
        if let Ok(mut t) = self.table.write() {
            if self.cap.is_none_or(|c| t.len() < c) {
                t.insert(key, value);
            }
        }
    }
}

/// A validated law of `W` together with its moment cache and `W0` table.
pub struct StickLaw {
    kind: LawKind,
    sampler: Sampler,
    cache: MomentCache,
    mu: OnceLock<Result<f64>>,
    w0: OnceLock<Result<W0Table>>,
}

impl fmt::Debug for StickLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StickLaw").field("kind", &self.kind).finish()
    }
}

impl Clone for StickLaw {
    fn clone(&self) -> Self {
        Self::from_kind(self.kind.clone()).expect("kind was validated at construction")
    }
}

impl PartialEq for StickLaw {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(SieveError::InvalidLaw(format!("{name} must be positive and finite, got {v}")))
    }
}

fn beta_sampler(p: BetaParams) -> Result<Beta<f64>> {
    Beta::new(p.alpha, p.beta).map_err(|e| SieveError::InvalidLaw(format!("beta({}, {}): {e}", p.alpha, p.beta)))
}

/// `E[W^a (1-W)^b]` for `W ~ Beta(alpha, beta)`.
fn beta_moment(p: BetaParams, a: u32, b: u32) -> f64 {
    if a + b <= 2048 {
        let s = p.alpha + p.beta;
        let mut m = 1.0;
        for i in 0..a {
            m *= (p.alpha + i as f64) / (s + i as f64);
        }
        for j in 0..b {
            m *= (p.beta + j as f64) / (s + (a + j) as f64);
        }
        m
    } else {
        ln_beta_moment(p, a, b).exp()
    }
}

fn ln_beta_moment(p: BetaParams, a: u32, b: u32) -> f64 {
    ln_beta(p.alpha + a as f64, p.beta + b as f64) - ln_beta(p.alpha, p.beta)
}

/// `-ln(1 - e^{-1})`, the largest value of `|ln W|` under `HeavyMeander`.
pub fn heavy_max_log_spacing() -> f64 {
    -(-(-1f64).exp()).ln_1p()
}

impl StickLaw {
    pub fn uniform() -> Self {
        Self::from_kind(LawKind::Uniform).expect("uniform is valid")
    }

    pub fn beta_theta_one(theta: f64) -> Result<Self> {
        Self::from_kind(LawKind::BetaThetaOne { theta })
    }

    /// `Beta(alpha, beta)`; `Beta(1,1)` is normalized to [`LawKind::Uniform`].
    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        if alpha == 1.0 && beta == 1.0 {
            return Ok(Self::uniform());
        }
        Self::from_kind(LawKind::Beta(BetaParams { alpha, beta }))
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<BetaParams>) -> Result<Self> {
        Self::from_kind(LawKind::BetaMixture { weights, components })
    }

    pub fn heavy_meander(a: f64) -> Result<Self> {
        Self::from_kind(LawKind::HeavyMeander { a })
    }

    pub fn from_kind(kind: LawKind) -> Result<Self> {
        let sampler = match &kind {
            LawKind::Uniform => Sampler::Uniform,
            LawKind::BetaThetaOne { theta } => {
                check_positive("theta", *theta)?;
                Sampler::ThetaOne { inv_theta: 1.0 / theta }
            }
            LawKind::Beta(p) => {
                check_positive("alpha", p.alpha)?;
                check_positive("beta", p.beta)?;
                Sampler::Beta(beta_sampler(*p)?)
            }
            LawKind::BetaMixture { weights, components } => {
                if weights.is_empty() || weights.len() != components.len() {
                    return Err(SieveError::InvalidLaw(
                        "mixture needs one weight per component and at least one component".into(),
                    ));
                }
                for w in weights {
                    check_positive("mixture weight", *w)?;
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(SieveError::InvalidLaw(format!("mixture weights sum to {total}, not 1")));
                }
                let mut parts = Vec::with_capacity(components.len());
                for p in components {
                    check_positive("alpha", p.alpha)?;
                    check_positive("beta", p.beta)?;
                    parts.push(beta_sampler(*p)?);
                }
                let mut acc = 0.0;
                let cumulative = weights
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect();
                Sampler::Mixture { cumulative, parts }
            }
            LawKind::HeavyMeander { a } => {
                if !(a.is_finite() && *a > 0.0 && *a <= 1.0) {
                    return Err(SieveError::InvalidLaw(format!("heavy meander index must lie in (0,1], got {a}")));
                }
                Sampler::Heavy { inv_a: 1.0 / a }
            }
        };
        Ok(Self {
            kind,
            sampler,
            cache: MomentCache::default(),
            mu: OnceLock::new(),
            w0: OnceLock::new(),
        })
    }

    /// Replaces the moment cache with a size-capped one.
    pub fn with_cache_cap(mut self, cap: usize) -> Self {
        self.cache = MomentCache::with_cap(cap);
        self
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    pub fn cache(&self) -> &MomentCache {
        &self.cache
    }

    /// Whether `m(a,b)` has a closed form (all Beta-type laws).
    pub fn has_closed_form(&self) -> bool {
        !matches!(self.kind, LawKind::HeavyMeander { .. })
    }

    // ---------------------------------------------------------------- sampling

    pub fn sample_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> StickDraw {
        match &self.sampler {
            Sampler::Uniform => {
                let u: f64 = rng.sample(Open01);
                StickDraw { w: u, complement: 1.0 - u }
            }
            Sampler::ThetaOne { inv_theta } => {
                let u: f64 = rng.sample(Open01);
                let log_w = u.ln() * inv_theta;
                StickDraw {
                    w: log_w.exp(),
                    complement: -log_w.exp_m1(),
                }
            }
            Sampler::Beta(b) => {
                let w = b.sample(rng);
                StickDraw { w, complement: 1.0 - w }
            }
            Sampler::Mixture { cumulative, parts } => {
                let u: f64 = rng.random();
                let idx = cumulative.partition_point(|&c| c <= u).min(parts.len() - 1);
                let w = parts[idx].sample(rng);
                StickDraw { w, complement: 1.0 - w }
            }
            Sampler::Heavy { inv_a } => {
                let u: f64 = rng.sample(Open01);
                let z = u.powf(-inv_a);
                StickDraw {
                    w: -(-z).exp_m1(),
                    complement: (-z).exp(),
                }
            }
        }
    }

    /// One draw of `W`, clamped to stay strictly below one in `f64`.
    ///
    /// Under `HeavyMeander` the exact value can lie within rounding of one;
    /// use [`StickLaw::sample_draw`] when `1 - W` or `ln W` matter.
    pub fn sample_w<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_draw(rng).w.min(ONE_MINUS_ULP)
    }

    // ----------------------------------------------------------------- moments

    /// `m(a,b) = E[W^a (1-W)^b]`, memoized.
    pub fn joint_moment(&self, a: u32, b: u32) -> Result<f64> {
        if a == 0 && b == 0 {
            return Ok(1.0);
        }
        if let Some(v) = self.cache.get((a, b)) {
            return Ok(v);
        }
        let v = match &self.kind {
            LawKind::Uniform => beta_moment(BetaParams { alpha: 1.0, beta: 1.0 }, a, b),
            LawKind::BetaThetaOne { theta } => beta_moment(BetaParams { alpha: *theta, beta: 1.0 }, a, b),
            LawKind::Beta(p) => beta_moment(*p, a, b),
            LawKind::BetaMixture { weights, components } => weights
                .iter()
                .zip(components)
                .map(|(w, p)| w * beta_moment(*p, a, b))
                .sum(),
            LawKind::HeavyMeander { .. } => self.joint_moment_quadrature(a, b)?,
        };
        self.cache.insert((a, b), v);
        Ok(v)
    }

    /// `ln m(a,b)`; closed-form laws avoid underflow for large arguments.
    pub fn ln_joint_moment(&self, a: u32, b: u32) -> Result<f64> {
        match &self.kind {
            LawKind::Uniform => Ok(ln_beta_moment(BetaParams { alpha: 1.0, beta: 1.0 }, a, b)),
            LawKind::BetaThetaOne { theta } => Ok(ln_beta_moment(BetaParams { alpha: *theta, beta: 1.0 }, a, b)),
            LawKind::Beta(p) => Ok(ln_beta_moment(*p, a, b)),
            _ => Ok(self.joint_moment(a, b)?.ln()),
        }
    }

    /// `m(a,b)` by adaptive quadrature against the density, for any law.
    pub fn joint_moment_quadrature(&self, a: u32, b: u32) -> Result<f64> {
        let ai = a as i32;
        let bi = b as i32;
        self.expect_quadrature(move |w, c| w.powi(ai) * c.powi(bi))
    }

    /// `E[g(W, 1-W)]` by quadrature, splitting `(0,1)` at one half so each
    /// endpoint singularity sits in its own segment.
    fn expect_quadrature<G: Fn(f64, f64) -> f64>(&self, g: G) -> Result<f64> {
        let quad = Quadrature::relative(MOMENT_REL_TOL);
        let breaks = [0.0, 0.5, 1.0];
        let est = match &self.kind {
            LawKind::HeavyMeander { a } => {
                let inv_a = 1.0 / a;
                quad.integrate_with_breaks(
                    |u| {
                        let z = u.powf(-inv_a);
                        g(-(-z).exp_m1(), (-z).exp())
                    },
                    &breaks,
                )
            }
            _ => {
                // The upper half is integrated in t = 1 - x so the complement
                // keeps full relative precision near 1.
                let components = self.beta_components();
                let dens = |x: f64, c: f64| -> f64 {
                    components
                        .iter()
                        .map(|(w, p)| {
                            w * ((p.alpha - 1.0) * x.ln() + (p.beta - 1.0) * c.ln() - ln_beta(p.alpha, p.beta)).exp()
                        })
                        .sum()
                };
                let half = |h: &dyn Fn(f64) -> f64| quad.integrate(h, 0.0, 0.5);
                let lo = half(&|x| if x <= 0.0 { 0.0 } else { g(x, 1.0 - x) * dens(x, 1.0 - x) });
                let hi = half(&|t| if t <= 0.0 { 0.0 } else { g(1.0 - t, t) * dens(1.0 - t, t) });
                match (lo, hi) {
                    (Ok(a), Ok(b)) => Ok(Estimate {
                        value: a.value + b.value,
                        error: a.error + b.error,
                        subdivisions: a.subdivisions + b.subdivisions,
                    }),
                    (Err(e), _) | (_, Err(e)) => Err(e),
                }
            }
        };
        est.map(|e| e.value).map_err(|e| match e {
            SieveError::Numerical { context, estimate } => SieveError::Numerical {
                context: format!("moment of {self}: {context}"),
                estimate,
            },
            other => other,
        })
    }

    fn beta_components(&self) -> Vec<(f64, BetaParams)> {
        match &self.kind {
            LawKind::Uniform => vec![(1.0, BetaParams { alpha: 1.0, beta: 1.0 })],
            LawKind::BetaThetaOne { theta } => vec![(1.0, BetaParams { alpha: *theta, beta: 1.0 })],
            LawKind::Beta(p) => vec![(1.0, *p)],
            LawKind::BetaMixture { weights, components } => weights.iter().copied().zip(components.iter().copied()).collect(),
            LawKind::HeavyMeander { .. } => Vec::new(),
        }
    }

    /// `mu = E[-ln W]`.
    pub fn mu(&self) -> Result<f64> {
        self.mu
            .get_or_init(|| match &self.kind {
                LawKind::Uniform => Ok(1.0),
                LawKind::BetaThetaOne { theta } => Ok(1.0 / theta),
                LawKind::HeavyMeander { .. } => self.expect_quadrature(|w, c| {
                    if c < 0.5 {
                        -(-c).ln_1p()
                    } else {
                        -w.ln()
                    }
                }),
                _ => Ok(self
                    .beta_components()
                    .iter()
                    .map(|(w, p)| w * beta_mu(*p))
                    .sum()),
            })
            .clone()
    }

    /// `nu = E[-ln(1-W)]`; the marker is returned analytically for `HeavyMeander`.
    pub fn nu(&self) -> Result<Extended> {
        match &self.kind {
            LawKind::HeavyMeander { .. } => Ok(Extended::Infinite),
            LawKind::Uniform => Ok(Extended::Finite(1.0)),
            _ => Ok(Extended::Finite(
                self.beta_components()
                    .iter()
                    .map(|(w, p)| w * beta_nu(*p))
                    .sum(),
            )),
        }
    }

    /// `E[-ln W]` by quadrature (cross-check for the closed forms).
    pub fn mu_quadrature(&self) -> Result<f64> {
        self.expect_quadrature(|w, c| if c < 0.5 { -(-c).ln_1p() } else { -w.ln() })
    }

    /// `E[-ln(1-W)]` by quadrature; only meaningful when `nu` is finite.
    pub fn nu_quadrature(&self) -> Result<f64> {
        self.expect_quadrature(|w, c| if w < 0.5 { -(-w).ln_1p() } else { -c.ln() })
    }

    // -------------------------------------------------------------- distribution

    /// `P{W < x}` for `x` in `[0,1]`.
    pub fn cdf_w(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        match &self.kind {
            LawKind::Uniform => x,
            LawKind::BetaThetaOne { theta } => x.powf(*theta),
            LawKind::HeavyMeander { a } => {
                let z = -(-x).ln_1p();
                if z <= 1.0 {
                    0.0
                } else {
                    1.0 - z.powf(-a)
                }
            }
            _ => self
                .beta_components()
                .iter()
                .map(|(w, p)| w * beta_reg(p.alpha, p.beta, x))
                .sum(),
        }
    }

    /// `P{|ln W| > r} = P{W < e^{-r}}`, accurate for small `r`.
    pub fn log_tail(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 1.0;
        }
        match &self.kind {
            LawKind::Uniform => (-r).exp(),
            LawKind::BetaThetaOne { theta } => (-theta * r).exp(),
            LawKind::HeavyMeander { a } => {
                // W < e^{-r}  <=>  Z < -ln(1 - e^{-r})
                let z = -(-(-r).exp_m1()).ln();
                if z <= 1.0 {
                    0.0
                } else {
                    1.0 - z.powf(-a)
                }
            }
            _ => self.cdf_w((-r).exp()),
        }
    }

    /// Upper end of the support of `|ln W|`, if bounded.
    pub fn max_log_spacing(&self) -> Option<f64> {
        match self.kind {
            LawKind::HeavyMeander { .. } => Some(heavy_max_log_spacing()),
            _ => None,
        }
    }

    // -------------------------------------------------------------- W0 and tails

    fn w0_table(&self) -> Result<&W0Table> {
        self.w0
            .get_or_init(|| W0Table::build(self))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Forces construction of the `W0` table, surfacing grid-build failures.
    pub fn warm_up(&self) -> Result<()> {
        self.mu()?;
        self.w0_table().map(|_| ())
    }

    /// `-ln W0`: the stationary forward recurrence time of the renewal
    /// process with spacing `|ln W|`, density `P{|ln W| > r} / mu`.
    pub fn sample_forward_recurrence<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        Ok(self.w0_table()?.sample(rng))
    }

    /// One draw of `W0` with density `P{W < x} / (mu x)` on `(0,1]`.
    pub fn sample_w0<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        Ok((-self.sample_forward_recurrence(rng)?).exp())
    }

    /// CDF of `W0`, i.e. `int_0^x P{W < t} / (mu t) dt`, by quadrature.
    pub fn cdf_w0(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        if x >= 1.0 {
            return Ok(1.0);
        }
        // P{W0 <= x} = P{R >= -ln x} = 1 - int_0^{-ln x} g.
        let mu = self.mu()?;
        let s = -x.ln();
        let head = Quadrature::with_abs_tol(1e-13).integrate(|r| self.log_tail(r) / mu, 0.0, s)?;
        Ok((1.0 - head.value).clamp(0.0, 1.0))
    }

    /// A draw of `|ln W|` conditioned to exceed `r`.
    ///
    /// Beta(theta,1) laws use the memoryless closed form. Other laws try
    /// plain rejection first and fall back to numerical inversion of the
    /// conditional tail; both routes are exact in distribution.
    pub fn sample_log_spacing_above<R: Rng + ?Sized>(&self, rng: &mut R, r: f64) -> Result<f64> {
        let r = r.max(0.0);
        match &self.kind {
            LawKind::Uniform => {
                let u: f64 = rng.sample(Open01);
                Ok(r - u.ln())
            }
            LawKind::BetaThetaOne { theta } => {
                let u: f64 = rng.sample(Open01);
                Ok(r - u.ln() / theta)
            }
            _ => {
                for _ in 0..FAST_REJECTION_ATTEMPTS {
                    let l = self.sample_draw(rng).neg_log();
                    if l > r {
                        return Ok(l);
                    }
                }
                self.invert_log_tail(rng, r)
            }
        }
    }

    /// Pure rejection version of [`StickLaw::sample_log_spacing_above`].
    pub fn sample_log_spacing_above_rejection<R: Rng + ?Sized>(&self, rng: &mut R, r: f64, budget: u64) -> Result<f64> {
        for _ in 0..budget {
            let l = self.sample_draw(rng).neg_log();
            if l > r {
                return Ok(l);
            }
        }
        Err(SieveError::RejectionBudget {
            attempts: budget,
            forward: r,
        })
    }

    fn invert_log_tail<R: Rng + ?Sized>(&self, rng: &mut R, r: f64) -> Result<f64> {
        let base = self.log_tail(r);
        if base <= 0.0 {
            return Err(SieveError::RejectionBudget {
                attempts: u64::from(FAST_REJECTION_ATTEMPTS),
                forward: r,
            });
        }
        let u: f64 = rng.sample(Open01);
        let target = u * base;
        let mut lo = r;
        let mut hi = match self.max_log_spacing() {
            Some(m) => m,
            None => {
                let mut hi = r + 1.0;
                while self.log_tail(hi) > target {
                    hi = r + 2.0 * (hi - r);
                    if hi > 1e8 {
                        return Err(SieveError::Numerical {
                            context: "conditioned spacing inversion failed to bracket".into(),
                            estimate: hi,
                        });
                    }
                }
                hi
            }
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.log_tail(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

fn beta_mu(p: BetaParams) -> f64 {
    if p.beta == 1.0 {
        1.0 / p.alpha
    } else {
        digamma(p.alpha + p.beta) - digamma(p.alpha)
    }
}

fn beta_nu(p: BetaParams) -> f64 {
    if p.alpha == 1.0 {
        1.0 / p.beta
    } else {
        digamma(p.alpha + p.beta) - digamma(p.beta)
    }
}

/// Piecewise cubic Hermite table of the CDF of `R = -ln W0`.
///
/// Nodes are refined until the interpolant matches quadrature at every cell
/// midpoint within [`W0_TABLE_TOL`]; the total mass must equal one within
/// [`W0_MASS_TOL`].
#[derive(Debug, Clone)]
struct W0Table {
    nodes: Vec<f64>,
    cum: Vec<f64>,
    dens: Vec<f64>,
}

impl W0Table {
    fn build(law: &StickLaw) -> Result<Self> {
        let mu = law.mu()?;
        let g = |r: f64| law.log_tail(r) / mu;
        let r_end = match law.max_log_spacing() {
            Some(m) => m,
            None => {
                let mut r = 1.0;
                while law.log_tail(r) > 1e-17 {
                    r *= 2.0;
                    if r > 1e6 {
                        return Err(SieveError::Numerical {
                            context: format!("W0 table for {law}: tail of |ln W| does not decay"),
                            estimate: law.log_tail(r),
                        });
                    }
                }
                r
            }
        };
        let quad = Quadrature::with_abs_tol(1e-14);
        let mut table = W0Table {
            nodes: vec![0.0],
            cum: vec![0.0],
            dens: vec![g(0.0)],
        };
        let cells = 64;
        let h = r_end / cells as f64;
        for i in 0..cells {
            let a = i as f64 * h;
            let b = if i + 1 == cells { r_end } else { (i + 1) as f64 * h };
            table.refine(&g, &quad, a, b, 0)?;
        }
        let total = *table.cum.last().expect("table has nodes");
        if (total - 1.0).abs() > W0_MASS_TOL {
            return Err(SieveError::Numerical {
                context: format!("W0 table for {law}: CDF reaches {total} instead of 1"),
                estimate: (total - 1.0).abs(),
            });
        }
        Ok(table)
    }

    fn refine<G: Fn(f64) -> f64>(&mut self, g: &G, quad: &Quadrature, a: f64, b: f64, depth: u32) -> Result<()> {
        let h_a = *self.cum.last().expect("table has nodes");
        let g_a = *self.dens.last().expect("table has nodes");
        let g_b = g(b);
        let whole = quad.integrate(g, a, b)?.value;
        let mid = 0.5 * (a + b);
        let half = quad.integrate(g, a, mid)?.value;
        let interpolated = 0.5 * whole + 0.125 * (b - a) * (g_a - g_b);
        if (half - interpolated).abs() > W0_TABLE_TOL && depth < 48 && mid > a && mid < b {
            self.refine(g, quad, a, mid, depth + 1)?;
            return self.refine(g, quad, mid, b, depth + 1);
        }
        self.nodes.push(b);
        self.cum.push(h_a + whole);
        self.dens.push(g_b);
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = *self.cum.last().expect("table has nodes");
        let u: f64 = rng.sample::<f64, _>(Open01) * total;
        let i = self.cum.partition_point(|&c| c <= u).clamp(1, self.cum.len() - 1) - 1;
        let (a, b) = (self.nodes[i], self.nodes[i + 1]);
        let h = b - a;
        let (c0, c1) = (self.cum[i], self.cum[i + 1]);
        let (d0, d1) = (self.dens[i] * h, self.dens[i + 1] * h);
        let target = u - c0;
        let value = |t: f64| {
            let t2 = t * t;
            let t3 = t2 * t;
            (-2.0 * t3 + 3.0 * t2) * (c1 - c0) + (t3 - 2.0 * t2 + t) * d0 + (t3 - t2) * d1
        };
        let slope = |t: f64| {
            let t2 = t * t;
            (-6.0 * t2 + 6.0 * t) * (c1 - c0) + (3.0 * t2 - 4.0 * t + 1.0) * d0 + (3.0 * t2 - 2.0 * t) * d1
        };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut t = if c1 > c0 { (target / (c1 - c0)).clamp(0.0, 1.0) } else { 0.5 };
        for _ in 0..60 {
            let f = value(t) - target;
            if f.abs() <= 1e-15 * total {
                break;
            }
            if f < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let s = slope(t);
            let newton = if s > 0.0 { t - f / s } else { f64::NAN };
            t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-16 {
                break;
            }
        }
        a + t * h
    }
}

// ---------------------------------------------------------------- text form

impl fmt::Display for StickLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            LawKind::Uniform => f.write_str("uniform"),
            LawKind::BetaThetaOne { theta } => write!(f, "beta-theta:{theta}"),
            LawKind::Beta(p) => write!(f, "beta:{},{}", p.alpha, p.beta),
            LawKind::HeavyMeander { a } => write!(f, "heavy:{a}"),
            LawKind::BetaMixture { weights, components } => {
                f.write_str("mixture:")?;
                for (i, (w, p)) in weights.iter().zip(components).enumerate() {
                    if i > 0 {
                        f.write_str("+")?;
                    }
                    write!(f, "{w}*beta:{},{}", p.alpha, p.beta)?;
                }
                Ok(())
            }
        }
    }
}

fn parse_real(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| SieveError::InvalidLaw(format!("cannot parse {what} from {s:?}")))
}

fn parse_beta_pair(s: &str) -> Result<BetaParams> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| SieveError::InvalidLaw(format!("expected `alpha,beta`, got {s:?}")))?;
    Ok(BetaParams {
        alpha: parse_real(a, "alpha")?,
        beta: parse_real(b, "beta")?,
    })
}

fn parse_component(s: &str) -> Result<BetaParams> {
    let s = s.trim();
    if s == "uniform" {
        Ok(BetaParams { alpha: 1.0, beta: 1.0 })
    } else if let Some(rest) = s.strip_prefix("beta-theta:") {
        Ok(BetaParams {
            alpha: parse_real(rest, "theta")?,
            beta: 1.0,
        })
    } else if let Some(rest) = s.strip_prefix("beta:") {
        parse_beta_pair(rest)
    } else {
        Err(SieveError::InvalidLaw(format!("unknown mixture component {s:?}")))
    }
}

impl FromStr for StickLaw {
    type Err = SieveError;

    /// Parses `uniform`, `beta-theta:T`, `beta:A,B`, `heavy:A` and
    /// `mixture:W1*beta:A,B+W2*beta:A,B+...`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "uniform" {
            return Ok(Self::uniform());
        }
        if let Some(rest) = s.strip_prefix("beta-theta:") {
            return Self::beta_theta_one(parse_real(rest, "theta")?);
        }
        if let Some(rest) = s.strip_prefix("beta:") {
            let p = parse_beta_pair(rest)?;
            return Self::beta(p.alpha, p.beta);
        }
        if let Some(rest) = s.strip_prefix("heavy:") {
            return Self::heavy_meander(parse_real(rest, "tail index")?);
        }
        if let Some(rest) = s.strip_prefix("mixture:") {
            let mut weights = Vec::new();
            let mut components = Vec::new();
            for term in rest.split('+') {
                let (w, comp) = term
                    .split_once('*')
                    .ok_or_else(|| SieveError::InvalidLaw(format!("mixture term {term:?} lacks `weight*`")))?;
                weights.push(parse_real(w, "mixture weight")?);
                components.push(parse_component(comp)?);
            }
            return Self::mixture(weights, components);
        }
        Err(SieveError::InvalidLaw(format!("unrecognized law {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_laws() -> Vec<StickLaw> {
        [
            "uniform",
            "beta-theta:2",
            "beta-theta:0.5",
            "beta:1.5,2.5",
            "beta:1,2",
            "beta:0.7,0.6",
            "mixture:0.3*beta:1,1+0.7*beta:2,1",
            "heavy:1",
            "heavy:0.5",
        ]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect()
    }

    #[test]
    fn parses_documented_forms() {
        for s in ["uniform", "beta-theta:2", "beta:1.5,2.5", "mixture:0.3*beta:1,1+0.7*beta:2,1", "heavy:1"] {
            let law: StickLaw = s.parse().unwrap();
            assert_eq!(law.to_string(), s);
        }
        assert_eq!("beta:1,1".parse::<StickLaw>().unwrap().kind(), &LawKind::Uniform);
    }

    #[test]
    fn rejects_bad_specs() {
        for s in ["", "beta:1", "beta:-1,2", "heavy:1.5", "mixture:0.5*beta:1,1", "gamma:1", "beta-theta:0"] {
            assert!(s.parse::<StickLaw>().is_err(), "{s} should fail");
        }
    }

    #[test]
    fn moment_examples() {
        let u = StickLaw::uniform();
        assert_eq!(u.joint_moment(0, 0).unwrap(), 1.0);
        assert_abs_diff_eq!(u.joint_moment(1, 1).unwrap(), 1.0 / 6.0, epsilon = 1e-15);
        let t2 = StickLaw::beta_theta_one(2.0).unwrap();
        assert_abs_diff_eq!(t2.joint_moment(1, 0).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn mu_nu_examples() {
        assert_eq!(StickLaw::uniform().mu().unwrap(), 1.0);
        assert_eq!(StickLaw::beta_theta_one(2.0).unwrap().mu().unwrap(), 0.5);
        assert_eq!(StickLaw::beta(1.0, 1.0).unwrap().mu().unwrap(), StickLaw::uniform().mu().unwrap());
        assert_eq!(StickLaw::uniform().nu().unwrap(), Extended::Finite(1.0));
        let b12 = StickLaw::beta(1.0, 2.0).unwrap().nu().unwrap().finite().unwrap();
        assert_abs_diff_eq!(b12, 0.5, epsilon = 1e-14);
        assert!(StickLaw::heavy_meander(1.0).unwrap().nu().unwrap().is_infinite());
    }

    #[test]
    fn digamma_routes_match_quadrature() {
        for law in all_laws() {
            let mu = law.mu().unwrap();
            assert_abs_diff_eq!(mu, law.mu_quadrature().unwrap(), epsilon = 1e-9);
            if let Extended::Finite(nu) = law.nu().unwrap() {
                assert_abs_diff_eq!(nu, law.nu_quadrature().unwrap(), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn cdf_examples() {
        assert_abs_diff_eq!(StickLaw::uniform().cdf_w(0.3), 0.3);
        assert_abs_diff_eq!(StickLaw::beta_theta_one(2.0).unwrap().cdf_w(0.5), 0.25, epsilon = 1e-15);
        for law in all_laws() {
            assert_eq!(law.cdf_w(1.0), 1.0);
            assert_eq!(law.cdf_w(0.0), 0.0);
            let mut prev = 0.0;
            for i in 1..100 {
                let c = law.cdf_w(i as f64 / 100.0);
                assert!(c >= prev - 1e-15, "{law} cdf not monotone");
                prev = c;
            }
        }
        let heavy = StickLaw::heavy_meander(1.0).unwrap();
        assert_eq!(heavy.cdf_w(0.6), 0.0);
    }

    #[test]
    fn log_tail_matches_cdf() {
        for law in all_laws() {
            for r in [0.01, 0.1, 0.3, 1.0, 3.0] {
                assert_abs_diff_eq!(law.log_tail(r), law.cdf_w((-r).exp()), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn heavy_draws_are_bounded_below() {
        let law = StickLaw::heavy_meander(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let floor = 1.0 - (-1f64).exp();
        for _ in 0..100_000 {
            let w = law.sample_w(&mut rng);
            assert!(w >= floor && w < 1.0);
        }
    }

    #[test]
    fn samples_stay_in_open_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for law in all_laws() {
            for _ in 0..10_000 {
                let w = law.sample_w(&mut rng);
                assert!(w > 0.0 && w < 1.0, "{law}: {w}");
                let w0 = law.sample_w0(&mut rng).unwrap();
                assert!(w0 > 0.0 && w0 <= 1.0, "{law}: {w0}");
            }
        }
    }

    #[test]
    fn w0_cdf_for_theta_laws_is_power() {
        // W0 has the law of W for Beta(theta, 1).
        let law = StickLaw::beta_theta_one(2.0).unwrap();
        for x in [0.1, 0.5, 0.9] {
            assert_abs_diff_eq!(law.cdf_w0(x).unwrap(), x * x, epsilon = 1e-10);
        }
    }

    #[test]
    fn w0_table_builds_for_all_laws() {
        for law in all_laws() {
            law.warm_up().unwrap();
        }
    }

    #[test]
    fn conditioned_spacing_exceeds_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for law in all_laws() {
            let cap = law.max_log_spacing().unwrap_or(f64::INFINITY);
            for r in [0.0, 0.05, 0.2, 0.4, 2.0] {
                if r >= cap {
                    continue;
                }
                for _ in 0..200 {
                    let l = law.sample_log_spacing_above(&mut rng, r).unwrap();
                    assert!(l >= r && l <= cap + 1e-12, "{law}: {l} vs {r}");
                }
            }
        }
    }

    #[test]
    fn rejection_budget_error() {
        let law = StickLaw::heavy_meander(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = law.sample_log_spacing_above_rejection(&mut rng, 10.0, 100).unwrap_err();
        assert!(matches!(err, SieveError::RejectionBudget { attempts: 100, .. }));
    }

    #[test]
    fn capped_cache_stops_growing() {
        let law = StickLaw::heavy_meander(1.0).unwrap().with_cache_cap(3);
        for a in 0..6 {
            law.joint_moment(a, 1).unwrap();
        }
        assert_eq!(law.cache().len(), 3);
    }
}
