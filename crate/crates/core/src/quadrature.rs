//! Globally adaptive Gauss–Kronrod (10/21 point) quadrature.
//!
//! Intervals are kept in a max-heap keyed by their local error estimate and
//! the worst one is bisected until the summed estimate meets the tolerance or
//! the subdivision budget runs out. The rule never evaluates the integrand at
//! interval endpoints, so integrable endpoint singularities such as `-ln x`
//! at 0 are handled by repeated bisection toward the singular point. Callers
//! pass breakpoints to isolate singularities in their own subintervals.

use crate::error::{Result, SieveError};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_015_259_477,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes.
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

/// Tolerances and budget for [`Quadrature::integrate`].
///
/// The target is `max(abs_tol, rel_tol * |I|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 0.0,
            max_subdivisions: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

impl Quadrature {
    pub fn with_abs_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }

    /// Relative-accuracy configuration for integrands whose value may be tiny.
    pub fn relative(rel_tol: f64) -> Self {
        Self {
            abs_tol: 1e-300,
            rel_tol,
            ..Self::default()
        }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<Estimate> {
        self.integrate_with_breaks(f, &[a, b])
    }

    /// Integrates over `[breaks[0], breaks[last]]`, starting from one segment
    /// per pair of consecutive breakpoints.
    pub fn integrate_with_breaks<F: Fn(f64) -> f64>(&self, f: F, breaks: &[f64]) -> Result<Estimate> {
        if breaks.len() < 2 || breaks.windows(2).any(|w| !matches!(w[0].partial_cmp(&w[1]), Some(Ordering::Less | Ordering::Equal))) {
            return Err(SieveError::InvalidArgument(format!(
                "quadrature breakpoints must be sorted and at least two: {breaks:?}"
            )));
        }
        let mut heap = BinaryHeap::new();
        let mut frozen_value = 0.0;
        let mut frozen_error = 0.0;
        for w in breaks.windows(2) {
            if w[0] < w[1] {
                heap.push(gauss_kronrod(&f, w[0], w[1]));
            }
        }
        let mut subdivisions = heap.len();
        let mut value: f64 = heap.iter().map(|s| s.value).sum();
        let mut error: f64 = heap.iter().map(|s| s.error).sum();
        loop {
            if !value.is_finite() || !error.is_finite() {
                return Err(SieveError::Numerical {
                    context: "quadrature produced a non-finite value".into(),
                    estimate: error,
                });
            }
            let target = self.abs_tol.max(self.rel_tol * value.abs());
            if error <= target {
                // Resum to shed drift from the incremental updates.
                let value = frozen_value + heap.iter().map(|s| s.value).sum::<f64>();
                let error = frozen_error + heap.iter().map(|s| s.error).sum::<f64>();
                return Ok(Estimate {
                    value,
                    error,
                    subdivisions,
                });
            }
            let worst = match heap.pop() {
                Some(s) => s,
                None => {
                    return Err(SieveError::Numerical {
                        context: "quadrature: all segments at resolution limit".into(),
                        estimate: error,
                    })
                }
            };
            if subdivisions >= self.max_subdivisions {
                return Err(SieveError::Numerical {
                    context: format!("quadrature budget of {} subdivisions", self.max_subdivisions),
                    estimate: error,
                });
            }
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                // Cannot bisect further; keep its contribution as is.
                frozen_value += worst.value;
                frozen_error += worst.error;
                if heap.is_empty() && frozen_error > target {
                    return Err(SieveError::Numerical {
                        context: "quadrature: all segments at resolution limit".into(),
                        estimate: frozen_error,
                    });
                }
                continue;
            }
            let left = gauss_kronrod(&f, worst.a, mid);
            let right = gauss_kronrod(&f, mid, worst.b);
            value += left.value + right.value - worst.value;
            error += left.error + right.error - worst.error;
            heap.push(left);
            heap.push(right);
            subdivisions += 1;
        }
    }
}
