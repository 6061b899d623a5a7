//! Execution policy for the data-parallel loops.
//!
//! With the `parallel` feature (on by default) [`Exec::Parallel`] fans work
//! out over rayon. Without it every policy runs sequentially. Both paths
//! produce identical results: work is split into fixed chunks and chunk
//! results are reduced in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Evaluates `f(0..count)` and returns the results in index order.
pub fn map_indexed<T, F>(exec: Exec, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec.is_parallel() && count > 1 {
            return (0..count).into_par_iter().map(f).collect();
        }
    }
    let _ = exec;
    (0..count).map(f).collect()
}

/// Keeps the elements of `items` satisfying `keep`, preserving order.
pub fn filter<T, F>(exec: Exec, items: &[T], keep: F) -> Vec<T>
where
    T: Copy + Send + Sync,
    F: Fn(&T) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec.is_parallel() && items.len() >= PAR_THRESHOLD {
            return items.par_iter().copied().filter(|x| keep(x)).collect();
        }
    }
    let _ = exec;
    items.iter().copied().filter(|x| keep(x)).collect()
}

/// Position of the smallest key; ties go to the lowest position.
pub fn argmin_by_key<T, F>(exec: Exec, items: &[T], key: F) -> Option<usize>
where
    T: Sync,
    F: Fn(&T) -> f64 + Sync + Send,
{
    let better = |a: (usize, f64), b: (usize, f64)| {
        if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) {
            b
        } else {
            a
        }
    };
    #[cfg(feature = "parallel")]
    {
        if exec.is_parallel() && items.len() >= PAR_THRESHOLD {
            return items
                .par_iter()
                .enumerate()
                .map(|(i, x)| (i, key(x)))
                .reduce_with(better)
                .map(|(i, _)| i);
        }
    }
    let _ = exec;
    items
        .iter()
        .enumerate()
        .map(|(i, x)| (i, key(x)))
        .reduce(better)
        .map(|(i, _)| i)
}

#[cfg(feature = "parallel")]
const PAR_THRESHOLD: usize = 4096;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree() {
        let xs: Vec<u32> = (0..20_000).map(|i| (i * 7919) % 10_007).collect();
        let a = filter(Exec::Sequential, &xs, |x| x % 3 == 0);
        let b = filter(Exec::Parallel, &xs, |x| x % 3 == 0);
        assert_eq!(a, b);
        let key = |x: &u32| f64::from(*x % 101);
        assert_eq!(
            argmin_by_key(Exec::Sequential, &xs, key),
            argmin_by_key(Exec::Parallel, &xs, key)
        );
        let m1 = map_indexed(Exec::Sequential, 100, |i| i * i);
        let m2 = map_indexed(Exec::Parallel, 100, |i| i * i);
        assert_eq!(m1, m2);
    }

    #[test]
    fn argmin_ties_go_low() {
        let xs = [3.0, 1.0, 1.0, 2.0];
        assert_eq!(argmin_by_key(Exec::Sequential, &xs, |x| *x), Some(1));
        assert_eq!(argmin_by_key(Exec::Sequential, &[] as &[f64], |x| *x), None);
    }
}
