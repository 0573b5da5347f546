//! Data-parallel helpers with a sequential fallback.
//!
//! Scans over potential or density grids are embarrassingly parallel; every
//! entry point here preserves input order in the output so results are
//! byte-identical with or without the `parallel` feature. `serial_map` is
//! always available and is what the benches use as the baseline.

/// Map `f` over `items`, in parallel when the `parallel` feature is enabled.
///
/// Output order matches input order in both builds.
#[cfg(feature = "parallel")]
pub fn parallel_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn parallel_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Sequential map with the same signature as [`parallel_map`].
pub fn serial_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<u64> = (0..257).collect();
        let par = parallel_map(&xs, |x| x * x);
        let ser = serial_map(&xs, |x| x * x);
        assert_eq!(par, ser);
    }
}
