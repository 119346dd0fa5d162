//! Thin switch between rayon-backed and sequential candidate evaluation.
//!
//! Every reduction routed through here is a total-order minimum, so the
//! result is independent of chunking and worker count.

/// Folds `items` with `score`, keeping the minimum under `better`.
///
/// `better(a, b)` returns true when `a` should replace `b`. The comparison
/// must be a strict total order for determinism across worker counts.
#[cfg(feature = "parallel")]
pub fn min_by<T, R, S, B>(items: Vec<T>, workers: usize, score: S, better: B) -> Option<R>
where
    T: Send,
    R: Send,
    S: Fn(T) -> Option<R> + Sync + Send,
    B: Fn(&R, &R) -> bool + Sync + Send,
{
    use rayon::prelude::*;
    let pick = |a: Option<R>, b: Option<R>| -> Option<R> {
        match (a, b) {
            (Some(x), Some(y)) => Some(if better(&y, &x) { y } else { x }),
            (x, None) => x,
            (None, y) => y,
        }
    };
    if workers == 1 {
        return items.into_iter().fold(None, |acc, it| pick(acc, score(it)));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build();
    match pool {
        Ok(pool) => pool.install(|| {
            items
                .into_par_iter()
                .map(&score)
                .reduce(|| None, pick)
        }),
        // Pool construction only fails under resource exhaustion; degrade to
        // the sequential path rather than aborting the search.
        Err(_) => items.into_iter().fold(None, |acc, it| pick(acc, score(it))),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn min_by<T, R, S, B>(items: Vec<T>, _workers: usize, score: S, better: B) -> Option<R>
where
    S: Fn(T) -> Option<R>,
    B: Fn(&R, &R) -> bool,
{
    let mut acc: Option<R> = None;
    for it in items {
        if let Some(r) = score(it) {
            acc = match acc {
                Some(cur) => Some(if better(&r, &cur) { r } else { cur }),
                None => Some(r),
            };
        }
    }
    acc
}

/// Folds `items` with `score` and an associative, commutative `merge`.
///
/// Unlike [`min_by`] the accumulator may track several minima at once; the
/// same total-order requirement applies to each component `merge` keeps.
#[cfg(feature = "parallel")]
pub fn map_merge<T, R, S, M>(items: Vec<T>, workers: usize, score: S, merge: M) -> Option<R>
where
    T: Send,
    R: Send,
    S: Fn(T) -> R + Sync + Send,
    M: Fn(R, R) -> R + Sync + Send,
{
    if workers == 1 {
        let mut acc: Option<R> = None;
        for it in items {
            let r = score(it);
            acc = Some(match acc {
                Some(cur) => merge(cur, r),
                None => r,
            });
        }
        return acc;
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build();
    match pool {
        Ok(pool) => pool.install(|| items.into_par_iter().map(&score).reduce_with(&merge)),
        Err(_) => {
            let mut acc: Option<R> = None;
            for it in items {
                let r = score(it);
                acc = Some(match acc {
                    Some(cur) => merge(cur, r),
                    None => r,
                });
            }
            acc
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_merge<T, R, S, M>(items: Vec<T>, _workers: usize, score: S, merge: M) -> Option<R>
where
    S: Fn(T) -> R,
    M: Fn(R, R) -> R,
{
    let mut acc: Option<R> = None;
    for it in items {
        let r = score(it);
        acc = Some(match acc {
            Some(cur) => merge(cur, r),
            None => r,
        });
    }
    acc
}
