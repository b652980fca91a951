//! Reproducible verification suites shared by the CLI and the acceptance tests.
//!
//! Each check returns a [`CriterionResult`] whose `data` payload depends only
//! on the seed, never on timing or worker count.

use crate::error::Result;
use crate::exact::{self, EnumerationOptions};
use crate::extended::Extended;
use crate::par::{self, fold_replicates, with_workers, Execution, Stream};
use crate::point_process::{build_window, replicate_limit_kr, replicate_limit_z, StopParams};
use crate::sieve::{replicate, ReplicateConfig, Statistic};
use crate::stats::{chi_square_gof, convergence_table, ks_one_sample, IntegerMoments, Pmf};
use crate::stick_law::StickLaw;
use rand::{RngCore, SeedableRng};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    /// Replicate counts divided by ten.
    Basic,
    /// Replicate counts as specified by the criteria.
    Full,
}

impl Suite {
    fn reps(self, full: u64) -> u64 {
        match self {
            Suite::Full => full,
            Suite::Basic => (full / 10).max(1),
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "basic" => Ok(Suite::Basic),
            "full" => Ok(Suite::Full),
            _ => Err(format!("unknown suite {s:?}; expected basic or full")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub suite: Suite,
    pub seed: u64,
    pub execution: Execution,
}

impl VerifyConfig {
    pub fn new(suite: Suite, seed: u64) -> Self {
        Self {
            suite,
            seed,
            execution: Execution::default(),
        }
    }

    /// Independent master seed for one check.
    fn seed_for(&self, tag: u64) -> u64 {
        par::Stream::seed_from_u64(self.seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)).next_u64()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub summary: String,
    pub data: Value,
}

impl CriterionResult {
    fn new(id: u32, name: &str, passed: bool, summary: String, data: Value) -> Self {
        Self {
            id,
            name: name.to_string(),
            passed,
            summary,
            data,
        }
    }

    fn failed(id: u32, name: &str, err: &crate::SieveError) -> Self {
        Self::new(id, name, false, format!("error: {err}"), json!({ "error": err.to_string() }))
    }
}

pub const CRITERIA: [(u32, &str); 12] = [
    (1, "pattern formula vs right-to-left oracle"),
    (2, "enumeration normalization and spot values"),
    (3, "first limit marginal closed form"),
    (4, "limit law marginal consistency"),
    (5, "finite sieve converges to the limit law"),
    (6, "limit-model sampler vs limit law"),
    (7, "expected small-part counts of the limit model"),
    (8, "convergence of expected r-counts"),
    (9, "infinite nu dichotomy"),
    (10, "renewal construction intensity and W0 law"),
    (11, "moment identities"),
    (12, "reproducibility across schedules"),
];

/// Runs one check by number.
pub fn run_criterion(id: u32, cfg: &VerifyConfig) -> CriterionResult {
    let name = CRITERIA.iter().find(|c| c.0 == id).map_or("unknown", |c| c.1);
    let out = match id {
        1 => pattern_oracle(),
        2 => normalization(),
        3 => first_marginal(),
        4 => marginal_consistency(),
        5 => finite_convergence(cfg),
        6 => limit_sampler(cfg),
        7 => limit_kr_means(cfg),
        8 => expectation_convergence(cfg),
        9 => nu_dichotomy(cfg),
        10 => renewal_construction(cfg),
        11 => moment_identities(),
        12 => schedule_independence(cfg),
        _ => Err(crate::SieveError::InvalidArgument(format!("no criterion {id}"))),
    };
    match out {
        Ok((passed, summary, data)) => CriterionResult::new(id, name, passed, summary, data),
        Err(e) => CriterionResult::failed(id, name, &e),
    }
}

pub fn run_suite(cfg: &VerifyConfig) -> Vec<CriterionResult> {
    CRITERIA.iter().map(|&(id, _)| run_criterion(id, cfg)).collect()
}

type Outcome = Result<(bool, String, Value)>;

/// Laws used by the law-generic checks.
pub fn reference_laws() -> Vec<StickLaw> {
    [
        "uniform",
        "beta-theta:2",
        "beta-theta:0.5",
        "beta:1.5,2.5",
        "beta:0.7,0.6",
        "mixture:0.3*beta:1,3+0.7*beta:2,1",
        "heavy:1",
        "heavy:0.5",
    ]
    .iter()
    .map(|s| s.parse().expect("reference law parses"))
    .collect()
}

// ------------------------------------------------------------------- exact

/// Probability of a left-to-right pattern by conditioning right to left:
/// box `j` from the right receives `c_j` of the `M_{j-1}` remaining balls,
/// with moments integrated numerically.
pub fn right_to_left_oracle(law: &StickLaw, parts_ltr: &[u32]) -> Result<f64> {
    let mut remaining: u32 = parts_ltr.iter().sum();
    let mut prob = 1.0;
    for &c in parts_ltr.iter().rev() {
        let left = remaining - c;
        prob *= exact::binomial(remaining, c) * law.joint_moment_quadrature(left, c)?;
        remaining = left;
    }
    Ok(prob)
}

fn pattern_oracle() -> Outcome {
    let opts = EnumerationOptions {
        prune_floor: 0.0,
        ..EnumerationOptions::default()
    };
    let mut worst: f64 = 0.0;
    let mut checked = 0u64;
    for law in [StickLaw::uniform(), StickLaw::beta_theta_one(2.0)?] {
        for n in 1..=4 {
            let pmf = exact::enumerate_finite(&law, n, 10, &opts)?;
            for (pattern, &p) in &pmf.entries {
                let direct = exact::pattern_prob(&law, pattern)?;
                let oracle = right_to_left_oracle(&law, pattern.parts())?;
                worst = worst.max((direct - oracle).abs()).max((p - oracle).abs());
                checked += 1;
            }
        }
    }
    let passed = worst <= 1e-9;
    Ok((
        passed,
        format!("{checked} patterns, max |diff| = {worst:.3e} (tol 1e-9)"),
        json!({ "patterns": checked, "max_abs_diff": worst }),
    ))
}

fn normalization() -> Outcome {
    let law = StickLaw::uniform();
    let opts = EnumerationOptions {
        prune_floor: 0.0,
        ..EnumerationOptions::default()
    };
    let pmf = exact::enumerate_finite(&law, 3, 40, &opts)?;
    let tol = 3.0 * 2f64.powi(-40) + 1e-10;
    let mass_gap = (1.0 - pmf.covered_mass).abs();
    let spots = [
        (vec![3], 0.25),
        (vec![1, 2], 0.125),
        (vec![2, 1], 1.0 / 12.0),
        (vec![3, 0], 1.0 / 16.0),
    ];
    let mut worst_spot: f64 = 0.0;
    for (parts, want) in &spots {
        let got = pmf.get(parts).unwrap_or(f64::NAN);
        worst_spot = worst_spot.max((got - want).abs());
    }
    let passed = mass_gap <= tol && worst_spot <= 1e-12;
    Ok((
        passed,
        format!("|1 - covered| = {mass_gap:.3e} (tol {tol:.3e}), spot max diff {worst_spot:.3e} (tol 1e-12)"),
        json!({ "covered_mass": pmf.covered_mass, "patterns": pmf.entries.len(), "max_spot_diff": worst_spot }),
    ))
}

fn first_marginal() -> Outcome {
    let law = StickLaw::uniform();
    let mut worst: f64 = 0.0;
    for k in 1..=50u32 {
        let want = 1.0 / (f64::from(k) * f64::from(k + 1));
        worst = worst.max((exact::limit_pmf(&law, &[k])? - want).abs());
    }
    let mut total = 0.0;
    for k in 1..=200u32 {
        total += exact::limit_pmf(&law, &[k])?;
    }
    let tol = 1.0 / 201.0 + 1e-10;
    let passed = worst <= 1e-12 && (1.0 - total).abs() <= tol;
    Ok((
        passed,
        format!("max |diff| {worst:.3e} (tol 1e-12), 1 - sum = {:.6e} (tol {tol:.6e})", 1.0 - total),
        json!({ "max_abs_diff": worst, "sum_to_200": total }),
    ))
}

fn marginal_consistency() -> Outcome {
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for law in [StickLaw::uniform(), StickLaw::beta_theta_one(2.0)?] {
        for n1 in 1..=5u32 {
            let mut sum = 0.0;
            for n2 in 0..=200u32 {
                sum += exact::limit_pmf(&law, &[n1, n2])?;
            }
            let target = exact::limit_pmf(&law, &[n1])?;
            let gap = (sum - target).abs();
            worst = worst.max(gap);
            rows.push(json!({ "law": law.to_string(), "n1": n1, "partial_sum": sum, "marginal": target, "gap": gap }));
        }
    }
    Ok((
        worst <= 1e-6,
        format!("max gap over n1 <= 5 = {worst:.3e} (tol 1e-6)"),
        json!({ "rows": rows, "max_gap": worst }),
    ))
}

// -------------------------------------------------------------- statistical

fn joint_support(key: &[u32]) -> bool {
    key.len() == 2 && key[0] >= 1 && key[0] + key[1] <= 6
}

/// `limit_pmf` on `{(n1, n2) : n1 >= 1, n1 + n2 <= 6}`.
pub fn joint_limit_table(law: &StickLaw) -> Result<Pmf<Vec<u32>>> {
    let mut out = Pmf::new();
    for n1 in 1..=6u32 {
        for n2 in 0..=(6 - n1) {
            out.insert(vec![n1, n2], exact::limit_pmf(law, &[n1, n2])?);
        }
    }
    Ok(out)
}

fn finite_convergence(cfg: &VerifyConfig) -> Outcome {
    let law = StickLaw::uniform();
    let expected = joint_limit_table(&law)?;
    let reps = cfg.suite.reps(1_000_000);
    let seed = cfg.seed_for(5);
    let mut rows = Vec::new();
    let mut tvs = Vec::new();
    let mut last = None;
    for n in [100u32, 1_000, 10_000] {
        let config = ReplicateConfig {
            statistic: Statistic::ZPrefix(2),
            execution: cfg.execution,
            ..ReplicateConfig::new(n, reps, seed)
        };
        let summary = replicate(&law, &config)?;
        let report = chi_square_gof(&summary.pmf, &expected, |k| joint_support(k), 5.0)?;
        tvs.push(report.tv.distance);
        rows.push(json!({
            "n": n,
            "tv": report.tv.distance,
            "chi_square": report.statistic,
            "df": report.degrees_of_freedom,
            "p_value": report.p_value,
        }));
        last = Some(report);
    }
    let last = last.expect("three sizes");
    let monotone = tvs.windows(2).all(|w| w[1] <= w[0]);
    let passed = last.p_value > 1e-3 && last.tv.distance < 0.01 && monotone;
    Ok((
        passed,
        format!(
            "n=1e4: p = {:.4}, TV = {:.5}; TV over n = {:.5?} nonincreasing: {monotone}",
            last.p_value, last.tv.distance, tvs
        ),
        json!({ "replicates": reps, "rows": rows, "tv_nonincreasing": monotone }),
    ))
}

fn limit_sampler(cfg: &VerifyConfig) -> Outcome {
    let law = StickLaw::uniform();
    let reps = cfg.suite.reps(1_000_000);
    let observed = replicate_limit_z(&law, 2, reps, cfg.seed_for(6), cfg.execution)?;
    let report = chi_square_gof(&observed, &joint_limit_table(&law)?, |k| joint_support(k), 5.0)?;
    Ok((
        report.p_value > 1e-3,
        format!("chi2 = {:.3}, df = {}, p = {:.4}", report.statistic, report.degrees_of_freedom, report.p_value),
        json!({
            "replicates": reps,
            "chi_square": report.statistic,
            "df": report.degrees_of_freedom,
            "p_value": report.p_value,
            "tv": report.tv.distance,
        }),
    ))
}

fn within_se(m: &IntegerMoments, target: f64, k: f64) -> (bool, f64) {
    let est = m.estimate();
    let z = (est.mean - target).abs() / est.se;
    (z <= k, z)
}

fn limit_kr_means(cfg: &VerifyConfig) -> Outcome {
    let law = StickLaw::uniform();
    let reps = cfg.suite.reps(100_000);
    let s = replicate_limit_kr(&law, 2, &StopParams::default(), reps, cfg.seed_for(7), cfg.execution)?;
    let k0 = s.k0.expect("uniform has finite nu");
    let checks = [("K1", &s.positive[0], 1.0), ("K2", &s.positive[1], 0.5), ("K0", &k0, 1.0)];
    let mut passed = true;
    let mut parts = Vec::new();
    let mut rows = Vec::new();
    for (name, m, target) in checks {
        let (ok, z) = within_se(m, target, 3.0);
        passed &= ok;
        parts.push(format!("{name} = {:.4} ({z:.2} SE)", m.mean()));
        rows.push(json!({ "stat": name, "mean": m.mean(), "se": m.standard_error(), "target": target }));
    }
    Ok((
        passed,
        parts.join(", "),
        json!({ "replicates": reps, "rows": rows, "unconfident": s.unconfident, "max_gaps": s.max_gaps_scanned }),
    ))
}

fn r_count_series(law: &StickLaw, ns: &[u32], reps: u64, seed: u64, execution: Execution) -> Result<Vec<Vec<IntegerMoments>>> {
    ns.iter()
        .map(|&n| {
            let config = ReplicateConfig {
                statistic: Statistic::Depth,
                execution,
                ..ReplicateConfig::new(n, reps, seed)
            };
            Ok(replicate(law, &config)?.r_counts)
        })
        .collect()
}

fn expectation_convergence(cfg: &VerifyConfig) -> Outcome {
    let law = StickLaw::uniform();
    let ns = [1_000u32, 10_000, 100_000];
    let reps = cfg.suite.reps(10_000);
    let series = r_count_series(&law, &ns, reps, cfg.seed_for(8), cfg.execution)?;
    let mut passed = true;
    let mut parts = Vec::new();
    let mut tables = Vec::new();
    for r in 0..=2usize {
        let target = exact::expected_kr(&law, r as u32)?.finite().expect("finite for uniform");
        let rows: Vec<(u64, f64, f64)> = ns
            .iter()
            .zip(&series)
            .map(|(&n, ms)| (u64::from(n), ms[r].mean(), ms[r].standard_error()))
            .collect();
        let table = convergence_table(&rows, Extended::Finite(target));
        let last = rows.last().expect("three sizes").1;
        let close = (last - target).abs() <= 0.1 * target;
        passed &= close && table.monotone;
        parts.push(format!(
            "K{r}: {last:.4} vs {target} (10%: {close}), gaps {:.4?} monotone: {}",
            table.rows.iter().map(|x| x.gap).collect::<Vec<_>>(),
            table.monotone
        ));
        tables.push(json!({ "r": r, "table": table }));
    }
    Ok((passed, parts.join("; "), json!({ "replicates": reps, "tables": tables })))
}

fn nu_dichotomy(cfg: &VerifyConfig) -> Outcome {
    let ns = [100u32, 1_000, 10_000, 100_000];
    let reps = cfg.suite.reps(10_000);
    let seed = cfg.seed_for(9);
    let heavy = StickLaw::heavy_meander(1.0)?;
    let nu_infinite = heavy.nu()?.is_infinite();
    let series = r_count_series(&heavy, &ns, reps, seed, cfg.execution)?;
    let rows: Vec<(u64, f64, f64)> = ns
        .iter()
        .zip(&series)
        .map(|(&n, ms)| (u64::from(n), ms[0].mean(), ms[0].standard_error()))
        .collect();
    let divergent = convergence_table(&rows, Extended::Infinite);

    // Control: every mean stays within 10% of nu/mu plus three standard errors.
    let control = StickLaw::uniform();
    let limit = exact::expected_kr(&control, 0)?.finite().expect("finite for uniform");
    let cseries = r_count_series(&control, &ns, reps, seed, cfg.execution)?;
    let crows: Vec<(u64, f64, f64)> = ns
        .iter()
        .zip(&cseries)
        .map(|(&n, ms)| (u64::from(n), ms[0].mean(), ms[0].standard_error()))
        .collect();
    let plateau = crows.iter().all(|&(_, m, se)| (m - limit).abs() <= 0.1 * limit + 3.0 * se);
    let passed = nu_infinite && divergent.monotone && plateau;
    Ok((
        passed,
        format!(
            "heavy K0 means {:.3?} increasing: {}; nu infinite: {nu_infinite}; control {:.3?} plateau at {limit}: {plateau}",
            rows.iter().map(|r| r.1).collect::<Vec<_>>(),
            divergent.monotone,
            crows.iter().map(|r| r.1).collect::<Vec<_>>(),
        ),
        json!({ "replicates": reps, "heavy": divergent, "control": convergence_table(&crows, Extended::Finite(limit)), "control_plateau": plateau }),
    ))
}

fn renewal_construction(cfg: &VerifyConfig) -> Outcome {
    let reps = cfg.suite.reps(100_000);
    let mut passed = true;
    let mut parts = Vec::new();
    let mut rows = Vec::new();
    for (li, law) in [StickLaw::uniform(), StickLaw::beta(1.5, 2.5)?].iter().enumerate() {
        law.warm_up()?;
        let mu = law.mu()?;
        for (wi, (a, b)) in [(0.1f64, 1.0f64), (1.0, 10.0)].into_iter().enumerate() {
            let counts = fold_replicates(
                cfg.execution,
                cfg.seed_for(100 + (li * 2 + wi) as u64),
                reps,
                IntegerMoments::default,
                |acc, rng: &mut Stream, _| {
                    acc.push(build_window(law, rng, a, b)?.len() as u64);
                    Ok(())
                },
                |mut x, y| {
                    x.merge(&y);
                    x
                },
            )?;
            let target = (b / a).ln() / mu;
            let (ok, z) = within_se(&counts, target, 3.0);
            passed &= ok;
            parts.push(format!("{law} [{a},{b}]: {:.4} vs {target:.4} ({z:.2} SE)", counts.mean()));
            rows.push(json!({ "law": law.to_string(), "a": a, "b": b, "mean": counts.mean(), "se": counts.standard_error(), "target": target }));
        }
        let draws = fold_replicates(
            cfg.execution,
            cfg.seed_for(200 + li as u64),
            reps,
            Vec::new,
            |acc: &mut Vec<(u64, f64)>, rng: &mut Stream, i| {
                acc.push((i, law.sample_w0(rng)?));
                Ok(())
            },
            |mut x, mut y| {
                x.append(&mut y);
                x
            },
        )?;
        let xs: Vec<f64> = draws.into_iter().map(|d| d.1).collect();
        let cdf_err = std::cell::Cell::new(None);
        let ks = ks_one_sample(&xs, |x| {
            law.cdf_w0(x).unwrap_or_else(|e| {
                cdf_err.set(Some(e));
                f64::NAN
            })
        })?;
        if let Some(e) = cdf_err.take() {
            return Err(e);
        }
        passed &= ks.p_value > 1e-3;
        parts.push(format!("{law} W0 KS p = {:.4}", ks.p_value));
        rows.push(json!({ "law": law.to_string(), "w0_ks_statistic": ks.statistic, "w0_ks_p": ks.p_value }));
    }
    Ok((passed, parts.join("; "), json!({ "replicates": reps, "rows": rows })))
}

fn moment_identities() -> Outcome {
    let mut recursion: f64 = 0.0;
    let mut completeness: f64 = 0.0;
    let mut quadrature: f64 = 0.0;
    for law in reference_laws() {
        for n in 0..=30u32 {
            let mut total = 0.0;
            for m in 0..=n {
                total += exact::p_nm(&law, n, m)?;
            }
            completeness = completeness.max((total - 1.0).abs());
            for a in 0..=n {
                let b = n - a;
                let lhs = law.joint_moment(a, b)?;
                let rhs = law.joint_moment(a + 1, b)? + law.joint_moment(a, b + 1)?;
                recursion = recursion.max((lhs - rhs).abs());
                if law.has_closed_form() {
                    quadrature = quadrature.max((lhs - law.joint_moment_quadrature(a, b)?).abs());
                }
            }
        }
        if law.has_closed_form() {
            quadrature = quadrature.max((law.mu()? - law.mu_quadrature()?).abs());
            if let Extended::Finite(nu) = law.nu()? {
                quadrature = quadrature.max((nu - law.nu_quadrature()?).abs());
            }
        }
    }
    let passed = recursion <= 1e-10 && completeness <= 1e-10 && quadrature <= 1e-8;
    Ok((
        passed,
        format!("recursion {recursion:.2e}, completeness {completeness:.2e} (tol 1e-10); quadrature {quadrature:.2e} (tol 1e-8)"),
        json!({ "recursion": recursion, "completeness": completeness, "quadrature": quadrature }),
    ))
}

fn schedule_independence(cfg: &VerifyConfig) -> Outcome {
    let law = StickLaw::beta(1.5, 2.5)?;
    let reps = cfg.suite.reps(20_000);
    let seed = cfg.seed_for(12);
    let run = |execution: Execution| -> Result<Value> {
        let config = ReplicateConfig {
            execution,
            ..ReplicateConfig::new(1_000, reps, seed)
        };
        let sieve = replicate(&law, &config)?;
        let limit = replicate_limit_kr(&law, 3, &StopParams::default(), reps, seed, execution)?;
        Ok(json!({ "sieve": sieve, "limit": limit }))
    };
    let sequential = run(Execution::Sequential)?;
    let parallel = with_workers(Some(1), || run(Execution::Parallel))?;
    let parallel3 = with_workers(Some(3), || run(Execution::Parallel))?;
    let same = sequential == parallel && parallel == parallel3;
    let pattern_count = sequential["sieve"]["pmf"]["entries"].as_array().map_or(0, |m| m.len());
    Ok((
        same,
        format!("sequential, 1 and 3 workers agree: {same}"),
        json!({ "replicates": reps, "identical": same, "distinct_keys": pattern_count }),
    ))
}

/// Checks used by `verify --law`: identities and a finite-`n` simulation
/// against exact enumeration for an arbitrary law.
pub fn run_law_checks(law: &StickLaw, cfg: &VerifyConfig) -> Vec<CriterionResult> {
    let mut out = Vec::new();
    let identities = (|| -> Outcome {
        let mut completeness: f64 = 0.0;
        let mut recursion: f64 = 0.0;
        for n in 0..=30u32 {
            let total: f64 = (0..=n).map(|m| exact::p_nm(law, n, m)).sum::<Result<f64>>()?;
            completeness = completeness.max((total - 1.0).abs());
            for a in 0..=n {
                let b = n - a;
                let rhs = law.joint_moment(a + 1, b)? + law.joint_moment(a, b + 1)?;
                recursion = recursion.max((law.joint_moment(a, b)? - rhs).abs());
            }
        }
        Ok((
            completeness <= 1e-10 && recursion <= 1e-10,
            format!("completeness {completeness:.2e}, recursion {recursion:.2e}"),
            json!({ "completeness": completeness, "recursion": recursion }),
        ))
    })();
    out.push(match identities {
        Ok((p, s, d)) => CriterionResult::new(1, "moment identities", p, s, d),
        Err(e) => CriterionResult::failed(1, "moment identities", &e),
    });
    let oracle = (|| -> Outcome {
        let n = 4;
        let pmf = exact::enumerate_finite(law, n, 40, &EnumerationOptions::default())?;
        let config = ReplicateConfig {
            statistic: Statistic::Pattern,
            execution: cfg.execution,
            ..ReplicateConfig::new(n, cfg.suite.reps(1_000_000), cfg.seed_for(1_000))
        };
        let observed = replicate(law, &config)?;
        let expected: Pmf<Vec<u32>> = pmf.entries.iter().map(|(p, &v)| (p.parts().to_vec(), v)).collect();
        let report = chi_square_gof(&observed.pmf, &expected, |_| true, 5.0)?;
        Ok((
            report.p_value > 1e-3,
            format!("n = {n}: chi2 p = {:.4}, TV = {:.5}", report.p_value, report.tv.distance),
            json!({ "p_value": report.p_value, "tv": report.tv.distance, "df": report.degrees_of_freedom }),
        ))
    })();
    out.push(match oracle {
        Ok((p, s, d)) => CriterionResult::new(2, "simulation vs exact patterns", p, s, d),
        Err(e) => CriterionResult::failed(2, "simulation vs exact patterns", &e),
    });
    let limit = (|| -> Outcome {
        let observed = replicate_limit_z(law, 2, cfg.suite.reps(1_000_000), cfg.seed_for(1_001), cfg.execution)?;
        let report = chi_square_gof(&observed, &joint_limit_table(law)?, |k| joint_support(k), 5.0)?;
        Ok((
            report.p_value > 1e-3,
            format!("limit sampler chi2 p = {:.4}", report.p_value),
            json!({ "p_value": report.p_value, "tv": report.tv.distance }),
        ))
    })();
    out.push(match limit {
        Ok((p, s, d)) => CriterionResult::new(3, "limit sampler vs limit law", p, s, d),
        Err(e) => CriterionResult::failed(3, "limit sampler vs limit law", &e),
    });
    out
}
