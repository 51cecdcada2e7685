//! Length changes on normalized time, shared by conversion and metrics.
//!
//! Output frame `i` of `n` reads source position `i·(m−1)/(n−1)`, so first
//! and last frames stay pinned. A single output frame reads the source midpoint.

use crate::scalar::Scalar;

fn source_pos(i: usize, m: usize, n: usize) -> f64 {
    if n == 1 {
        (m - 1) as f64 / 2.0
    } else {
        i as f64 * (m - 1) as f64 / (n - 1) as f64
    }
}

/// Linear interpolation; an empty source yields zeros.
pub fn linear<T: Scalar>(src: &[T], n: usize) -> Vec<T> {
    let m = src.len();
    if m == n {
        return src.to_vec();
    }
    if m == 0 {
        return vec![T::zero(); n];
    }
    (0..n)
        .map(|i| {
            let x = source_pos(i, m, n);
            let lo = x.floor() as usize;
            let hi = (lo + 1).min(m - 1);
            let w = T::lit(x - lo as f64);
            src[lo] + (src[hi] - src[lo]) * w
        })
        .collect()
}

/// Nearest-neighbour resampling (ties round away from zero); an empty source yields defaults.
pub fn nearest<V: Clone + Default>(src: &[V], n: usize) -> Vec<V> {
    let m = src.len();
    if m == n {
        return src.to_vec();
    }
    if m == 0 {
        return vec![V::default(); n];
    }
    (0..n)
        .map(|i| src[(source_pos(i, m, n).round() as usize).min(m - 1)].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(linear(&[0.0f64, 1.0], 3), vec![0.0, 0.5, 1.0]);
        assert_eq!(linear(&[1.0f64, 2.0, 3.0], 3), vec![1.0, 2.0, 3.0]);
        assert_eq!(linear(&[2.0f64, 4.0], 1), vec![3.0]);
        assert_eq!(linear::<f64>(&[], 2), vec![0.0, 0.0]);
        assert_eq!(nearest(&[true, false], 4), vec![true, true, false, false]);
        assert_eq!(nearest(&[1, 2, 3], 2), vec![1, 3]);
    }

    proptest! {
        #[test]
        fn constant_stays_constant(c in -5.0f64..5.0, m in 1usize..40, n in 0usize..80) {
            prop_assert!(linear(&vec![c; m], n).iter().all(|&v| (v - c).abs() < 1e-12));
        }

        #[test]
        fn endpoints_pinned(src in prop::collection::vec(-5.0f64..5.0, 2..30), n in 2usize..60) {
            let out = linear(&src, n);
            prop_assert_eq!(out.len(), n);
            prop_assert!((out[0] - src[0]).abs() < 1e-12);
            prop_assert!((out[n - 1] - src[src.len() - 1]).abs() < 1e-12);
        }
    }
}
