//! Thin execution-policy shim: rayon when the `parallel` feature is on,
//! plain iterators otherwise. Output order is the input order in both
//! builds, so results never depend on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving input order in the output.
#[cfg(feature = "parallel")]
pub fn map_collect<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_par_iter().map(f).collect()
}

/// Map `f` over `items`, preserving input order in the output.
#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Always-sequential variant, kept available in both builds so benches can
/// compare against it directly.
pub fn map_collect_seq<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let squares = map_collect((0u64..1000).collect(), |x| x * x);
        let expected: Vec<u64> = (0..1000).map(|x| x * x).collect();
        assert_eq!(squares, expected);
        assert_eq!(map_collect_seq((0u64..1000).collect(), |x| x * x), expected);
    }
}
