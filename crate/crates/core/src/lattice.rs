//! Iteration over weighted integer lattice windows.
//!
//! Enumerates `[lo, hi]^dims` in odometer order, maintaining the product
//! of per-coordinate weights incrementally so the per-point cost stays
//! close to constant.

/// Call `f(point, weight)` for every point of `[lo, hi]^dims`, where
/// `weight` is the product over coordinates of `weights[value - lo]`.
pub(crate) fn for_each_weighted_point<F: FnMut(&[i64], f64)>(
    lo: i64,
    hi: i64,
    dims: usize,
    weights: &[f64],
    mut f: F,
) {
    debug_assert_eq!(weights.len(), (hi - lo + 1) as usize);
    if dims == 0 {
        f(&[], 1.0);
        return;
    }
    let mut point = vec![lo; dims];
    // prefix[d] = product of weights for coordinates > d; prefix[dims] = 1
    let mut suffix = vec![1.0f64; dims + 1];
    for d in (0..dims).rev() {
        suffix[d] = suffix[d + 1] * weights[0];
    }
    loop {
        // full product = suffix[1] * w(point[0]), with point[1..] encoded in suffix[1]
        let w = suffix[1] * weights[(point[0] - lo) as usize];
        f(&point, w);
        // odometer increment
        let mut d = 0;
        loop {
            if d == dims {
                return;
            }
            point[d] += 1;
            if point[d] <= hi {
                break;
            }
            point[d] = lo;
            d += 1;
        }
        // refresh suffix products at and below the changed digit
        for i in (1..=d).rev() {
            suffix[i] = suffix[i + 1] * weights[(point[i] - lo) as usize];
        }
    }
}

/// Number of points in `[lo, hi]^dims`, saturating.
pub(crate) fn lattice_volume(lo: i64, hi: i64, dims: usize) -> u64 {
    let width = (hi - lo + 1) as u64;
    let mut vol = 1u64;
    for _ in 0..dims {
        vol = vol.saturating_mul(width);
    }
    vol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_every_point_with_the_product_weight() {
        let weights = [0.5, 0.3, 0.2];
        let mut seen = Vec::new();
        let mut total = 0.0;
        for_each_weighted_point(-1, 1, 2, &weights, |p, w| {
            seen.push(p.to_vec());
            total += w;
            let expect: f64 = p.iter().map(|&v| weights[(v + 1) as usize]).product();
            assert!((w - expect).abs() < 1e-15);
        });
        assert_eq!(seen.len(), 9);
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(lattice_volume(-1, 1, 2), 9);
    }

    #[test]
    fn zero_dims_is_the_empty_product() {
        let mut calls = 0;
        for_each_weighted_point(0, 5, 0, &[1.0; 6], |p, w| {
            calls += 1;
            assert!(p.is_empty());
            assert_eq!(w, 1.0);
        });
        assert_eq!(calls, 1);
    }
}
