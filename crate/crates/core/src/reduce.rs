//! Fixed-topology parallel reductions.
//!
//! Work over `n` items is split into chunks of a fixed size, chunks are
//! processed in parallel, and the per-chunk partial results are combined by
//! a pairwise tree whose shape depends only on the number of chunks. Totals
//! are therefore bit-identical for any worker count.

use rayon::prelude::*;

/// Points per chunk for point-wise loss and Jacobian assembly.
pub const POINT_CHUNK: usize = 256;

/// `[start, end)` ranges covering `0..n` in order.
pub fn chunk_ranges(n: usize, chunk: usize) -> Vec<(usize, usize)> {
    let chunk = chunk.max(1);
    (0..n.div_ceil(chunk)).map(|c| (c * chunk, ((c + 1) * chunk).min(n))).collect()
}

/// Applies `f` to every chunk in parallel and returns the results in chunk order.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync + Send,
{
    chunk_ranges(n, chunk).into_par_iter().map(|(s, e)| f(s, e)).collect()
}

/// Combines adjacent pairs level by level: `((a⊕b)⊕(c⊕d))⊕e`.
pub fn tree_reduce<T>(mut items: Vec<T>, mut combine: impl FnMut(T, T) -> T) -> Option<T> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Element-wise `a += b`, returning `a`.
pub fn add_into(mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    for (x, y) in a.iter_mut().zip(&b) {
        *x += y;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_cover_everything_once() {
        assert_eq!(chunk_ranges(0, 4), vec![]);
        assert_eq!(chunk_ranges(5, 2), vec![(0, 2), (2, 4), (4, 5)]);
        assert_eq!(chunk_ranges(4, 4), vec![(0, 4)]);
    }

    #[test]
    fn tree_shape_is_fixed() {
        let items: Vec<String> = ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
        let r = tree_reduce(items, |a, b| format!("({a}{b})")).unwrap();
        assert_eq!(r, "(((ab)(cd))e)");
        assert_eq!(tree_reduce(Vec::<f64>::new(), |a, b| a + b), None);
    }

    #[test]
    fn worker_count_does_not_change_sums() {
        let vals: Vec<f64> = (0..10_000).map(|i| ((i as f64) * 0.37).sin() * 1e8f64.powf((i % 7) as f64 / 7.0)).collect();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let parts = map_chunks(vals.len(), 97, |s, e| vals[s..e].iter().sum::<f64>());
                tree_reduce(parts, |a, b| a + b).unwrap()
            })
        };
        let one = run(1);
        assert_eq!(one.to_bits(), run(3).to_bits());
        assert_eq!(one.to_bits(), run(4).to_bits());
    }
}
