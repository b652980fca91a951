//! Replicate execution with counter-based random streams.
//!
//! Replicate `i` of a run seeded with `seed` always draws from the ChaCha8
//! stream `(seed, i)`, so results depend only on `(seed, replicates)` and
//! never on how replicates are scheduled across workers. Accumulators must
//! merge exactly (integer counts, not floating sums) for aggregates to be
//! bitwise reproducible.
//!
//! With the `parallel` feature (on by default) [`Execution::Parallel`] runs
//! on the current rayon pool; without it every execution is sequential.

use crate::error::{Result, SieveError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Random stream handle owned by a single replicate.
pub type Stream = ChaCha8Rng;

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 0xB5EE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// The stream for replicate `index` of a run seeded with `seed`.
pub fn stream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

struct Partial<A> {
    acc: A,
    // Lowest-index failure, kept so error reporting is schedule independent.
    failure: Option<(u64, SieveError)>,
}

#[cfg(feature = "parallel")]
fn keep_first(a: Option<(u64, SieveError)>, b: Option<(u64, SieveError)>) -> Option<(u64, SieveError)> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if x.0 <= y.0 { x } else { y }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Folds `replicates` independent replicates into one accumulator.
///
/// `step` receives the accumulator, the replicate's own stream and its index.
/// `merge` must be associative and commutative. If any replicate fails, the
/// error of the lowest failing index is returned.
pub fn fold_replicates<A, I, F, M>(execution: Execution, seed: u64, replicates: u64, identity: I, step: F, merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, &mut Stream, u64) -> Result<()> + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(not(feature = "parallel"))]
    let _ = merge;
    let fold_one = |mut p: Partial<A>, i: u64| {
        if p.failure.is_none() {
            let mut rng = stream(seed, i);
            if let Err(e) = step(&mut p.acc, &mut rng, i) {
                p.failure = Some((i, e));
            }
        }
        p
    };
    let start = || Partial {
        acc: identity(),
        failure: None,
    };
    let result = match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..replicates)
            .into_par_iter()
            .fold(start, fold_one)
            .reduce(start, |a, b| Partial {
                acc: merge(a.acc, b.acc),
                failure: keep_first(a.failure, b.failure),
            }),
        _ => (0..replicates).fold(start(), fold_one),
    };
    match result.failure {
        Some((_, e)) => Err(e),
        None => Ok(result.acc),
    }
}

/// Runs `f` inside a pool of `workers` threads (no-op when sequential).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    if let Some(n) = workers {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            return pool.install(f);
        }
    }
    let _ = workers;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sum_draws(execution: Execution) -> u64 {
        fold_replicates(
            execution,
            7,
            5_000,
            || 0u64,
            |acc, rng, _| {
                *acc += rng.random_range(0..1000u64);
                Ok(())
            },
            |a, b| a + b,
        )
        .unwrap()
    }

    #[test]
    fn schedule_does_not_change_result() {
        let seq = sum_draws(Execution::Sequential);
        assert_eq!(seq, sum_draws(Execution::Parallel));
        assert_eq!(seq, with_workers(Some(3), || sum_draws(Execution::Parallel)));
    }

    #[test]
    fn streams_differ_by_index() {
        let a: u64 = stream(1, 0).random();
        let b: u64 = stream(1, 1).random();
        assert_ne!(a, b);
        let c: u64 = stream(1, 0).random();
        assert_eq!(a, c);
    }

    #[test]
    fn lowest_failing_index_wins() {
        let err = fold_replicates(
            Execution::Parallel,
            1,
            100,
            || (),
            |_, _, i| {
                if i % 10 == 7 {
                    Err(SieveError::Stats(format!("fail {i}")))
                } else {
                    Ok(())
                }
            },
            |_, _| (),
        )
        .unwrap_err();
        assert_eq!(err, SieveError::Stats("fail 7".into()));
    }
}
