//! Data-parallel execution helpers.
//!
//! With the `parallel` feature (default) the index loops below fan out
//! through rayon; without it they run sequentially. Results are collected
//! by index, so the output is identical either way. The `_seq` variants
//! stay available under both configurations for the benchmark suite.

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Sequential reference implementation of [`map_indexed`].
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Fold `f(0), .., f(n-1)` with an associative, order-insensitive `join`.
///
/// The reduction tree differs between the two execution modes, so callers
/// must pass a `join` whose result does not depend on association order
/// (index-tagged max/min with deterministic tie-breaks, bitwise-identical
/// sums are NOT guaranteed — sum sequentially if bitwise identity matters).
pub fn fold_indexed<T, F, J>(n: usize, identity: T, f: F, join: J) -> T
where
    T: Send + Clone + Sync,
    F: Fn(usize) -> T + Sync + Send,
    J: Fn(T, T) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .map(f)
            .reduce(|| identity.clone(), &join)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).fold(identity, join)
    }
}

/// `(best_value, best_index)` of `f` over `0..n`; ties keep the smallest
/// index, so the witness is deterministic under any execution order.
pub fn argmax_indexed<F>(n: usize, f: F) -> Option<(f64, usize)>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let join = |a: Option<(f64, usize)>, b: Option<(f64, usize)>| match (a, b) {
        (None, x) => x,
        (x, None) => x,
        (Some((va, ia)), Some((vb, ib))) => {
            if vb > va || (vb == va && ib < ia) {
                Some((vb, ib))
            } else {
                Some((va, ia))
            }
        }
    };
    fold_indexed(n, None, |i| Some((f(i), i)), join)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_toward_smallest_index() {
        let vals = [1.0, 3.0, 3.0, 0.5];
        let (v, i) = argmax_indexed(vals.len(), |k| vals[k]).unwrap();
        assert_eq!((v, i), (3.0, 1));
    }

    #[test]
    fn parallel_and_sequential_map_agree() {
        let a = map_indexed(100, |i| i * i);
        let b = map_indexed_seq(100, |i| i * i);
        assert_eq!(a, b);
    }
}
