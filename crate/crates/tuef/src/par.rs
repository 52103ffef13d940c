//! Data-parallel helpers with a sequential fallback.
//!
//! Every hot loop in the crate funnels through these functions. With the
//! `parallel` feature (default) they fan out over rayon; without it they run
//! the same closures sequentially. Results are collected in input order, and
//! floating-point reductions happen in a fixed chunk order, so both builds
//! produce bit-identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving order.
pub(crate) fn map_collect<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Map `f` over an index range, preserving order.
pub(crate) fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Accumulate per-source score vectors: each chunk of sources produces a
/// partial `Vec<f64>` which is then summed in chunk order. The chunk
/// boundaries are fixed, so the float addition order does not depend on
/// scheduling.
pub(crate) fn accumulate_chunked<F>(n_sources: usize, out_len: usize, f: F) -> Vec<f64>
where
    F: Fn(std::ops::Range<usize>) -> Vec<f64> + Sync + Send,
{
    const CHUNK: usize = 32;
    let ranges: Vec<std::ops::Range<usize>> = (0..n_sources)
        .step_by(CHUNK)
        .map(|start| start..(start + CHUNK).min(n_sources))
        .collect();
    let partials = map_collect(&ranges, |r| f(r.clone()));
    let mut total = vec![0.0; out_len];
    for partial in partials {
        debug_assert_eq!(partial.len(), out_len);
        for (acc, v) in total.iter_mut().zip(partial) {
            *acc += v;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_collect_preserves_order() {
        let items: Vec<u32> = (0..100).collect();
        let doubled = map_collect(&items, |x| x * 2);
        assert_eq!(doubled, (0..100).map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn accumulate_matches_sequential_sum() {
        let n = 101;
        let got = accumulate_chunked(n, 3, |range| {
            let mut v = vec![0.0; 3];
            for i in range {
                v[0] += i as f64;
                v[1] += 1.0;
                v[2] += (i as f64).sqrt();
            }
            v
        });
        let want_sum: f64 = (0..n).map(|i| i as f64).sum();
        assert_eq!(got[0], want_sum);
        assert_eq!(got[1], n as f64);
    }
}
