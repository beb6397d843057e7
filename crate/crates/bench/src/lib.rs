//! Fixtures shared by the benchmarks.

use golden_anosov::anosov2d::ManifoldPoint;
use golden_anosov::Real;

/// `count` points on a diagonal line through the torus, away from the
/// boundary of the fundamental domain.
pub fn diagonal_points<R: Real>(count: usize) -> Vec<ManifoldPoint<R>> {
    (0..count)
        .map(|i| {
            let x = R::from_ratio(2 * i as i64 + 1, 2 * count as i64);
            let y = R::from_ratio(i as i64 + 1, 4 * (count as i64 + 1));
            ManifoldPoint::new(x, y).expect("points lie in the domain")
        })
        .collect()
}

/// Grid midpoints of the unit interval.
pub fn midpoints<R: Real>(count: usize) -> Vec<R> {
    (0..count).map(|i| R::from_ratio(2 * i as i64 + 1, 2 * count as i64)).collect()
}
