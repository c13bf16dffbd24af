use crate::error::{Error, Result};
use crate::geometry::{Point2, Transform2D};

/// Least-squares rigid transform mapping the `a` points onto the `b` points.
///
/// Both sets are centered on their centroids; the rotation is
/// `atan2(Sxy - Syx, Sxx + Syy)` from the cross-correlation sums of the
/// reduced coordinates and the translation is `mean(b) - R * mean(a)`.
pub fn cal_tf(pairs: &[(Point2, Point2)]) -> Result<Transform2D> {
    if pairs.len() < 2 {
        return Err(Error::DegenerateGeometry("at least two point pairs are required"));
    }
    let first = pairs[0].0;
    if pairs.iter().all(|(a, _)| *a == first) {
        return Err(Error::DegenerateGeometry("all source points coincide"));
    }

    let n = pairs.len() as f64;
    let (mut ax, mut ay, mut bx, mut by) = (0.0, 0.0, 0.0, 0.0);
    for (a, b) in pairs {
        ax += a.x;
        ay += a.y;
        bx += b.x;
        by += b.y;
    }
    let a_mean = Point2::new(ax / n, ay / n);
    let b_mean = Point2::new(bx / n, by / n);

    let (mut sxx, mut syy, mut sxy, mut syx) = (0.0, 0.0, 0.0, 0.0);
    for (a, b) in pairs {
        let (ax, ay) = (a.x - a_mean.x, a.y - a_mean.y);
        let (bx, by) = (b.x - b_mean.x, b.y - b_mean.y);
        sxx += ax * bx;
        syy += ay * by;
        sxy += ax * by;
        syx += ay * bx;
    }
    let dtheta = (sxy - syx).atan2(sxx + syy);
    let rot = Transform2D::new(dtheta, 0.0, 0.0);
    let ra = rot.rotate(a_mean);
    Ok(Transform2D::new(dtheta, b_mean.x - ra.x, b_mean.y - ra.y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn identity_pairs() {
        let t = cal_tf(&[(p(0.0, 0.0), p(0.0, 0.0)), (p(1.0, 0.0), p(1.0, 0.0))]).unwrap();
        assert!(t.max_abs_diff(&Transform2D::identity()) < 1e-12);
    }

    #[test]
    fn pure_translation() {
        let t = cal_tf(&[(p(0.0, 0.0), p(2.0, 3.0)), (p(1.0, 0.0), p(3.0, 3.0))]).unwrap();
        assert!(t.max_abs_diff(&Transform2D::new(0.0, 2.0, 3.0)) < 1e-12);
    }

    #[test]
    fn quarter_turn() {
        // Sxx = 0.5, Syy = -0.5, Sxy = 0.5, Syx = -0.5 -> atan2(1, 0) = 90 deg.
        let t = cal_tf(&[(p(1.0, 0.0), p(0.0, 1.0)), (p(0.0, 1.0), p(-1.0, 0.0))]).unwrap();
        assert!((t.dtheta_degrees() - 90.0).abs() < 1e-12);
        assert!(t.dx.abs() < 1e-12 && t.dy.abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(cal_tf(&[]), Err(Error::DegenerateGeometry(_))));
        assert!(matches!(
            cal_tf(&[(p(1.0, 1.0), p(0.0, 0.0))]),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(matches!(
            cal_tf(&[
                (p(1.0, 1.0), p(0.0, 0.0)),
                (p(1.0, 1.0), p(5.0, 0.0)),
                (p(1.0, 1.0), p(2.0, 2.0))
            ]),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    fn sse(t: &Transform2D, pairs: &[(Point2, Point2)]) -> f64 {
        pairs.iter().map(|(a, b)| t.apply(*a).distance_squared(b)).sum()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn exact_recovery(theta in -3.1..3.1f64, dx in -50.0..50.0f64, dy in -50.0..50.0f64,
                          pts in prop::collection::vec((-60.0..60.0f64, -60.0..60.0f64), 2..20)) {
            let first = pts[0];
            prop_assume!(pts.iter().any(|q| (q.0 - first.0).hypot(q.1 - first.1) > 1e-3));
            let truth = Transform2D::new(theta, dx, dy);
            let pairs: Vec<_> = pts.iter().map(|&(x, y)| (p(x, y), truth.apply(p(x, y)))).collect();
            let est = cal_tf(&pairs).unwrap();
            prop_assert!(est.max_abs_diff(&truth) < 1e-9, "{:?} vs {:?}", est, truth);
        }

        #[test]
        fn locally_optimal(theta in -3.1..3.1f64, dx in -20.0..20.0f64, dy in -20.0..20.0f64,
                           pts in prop::collection::vec((-30.0..30.0f64, -30.0..30.0f64, -0.3..0.3f64, -0.3..0.3f64), 3..15)) {
            let truth = Transform2D::new(theta, dx, dy);
            let pairs: Vec<_> = pts.iter()
                .map(|&(x, y, nx, ny)| {
                    let b = truth.apply(p(x, y));
                    (p(x, y), p(b.x + nx, b.y + ny))
                })
                .collect();
            let est = cal_tf(&pairs).unwrap();
            let base = sse(&est, &pairs);
            let n = pairs.len() as f64;
            let a_mean = p(pairs.iter().map(|q| q.0.x).sum::<f64>() / n, pairs.iter().map(|q| q.0.y).sum::<f64>() / n);
            let b_mean = p(pairs.iter().map(|q| q.1.x).sum::<f64>() / n, pairs.iter().map(|q| q.1.y).sum::<f64>() / n);
            for delta in [-0.1f64, 0.1] {
                let th = est.dtheta + delta.to_radians();
                let ra = Transform2D::new(th, 0.0, 0.0).rotate(a_mean);
                let perturbed = Transform2D::new(th, b_mean.x - ra.x, b_mean.y - ra.y);
                prop_assert!(sse(&perturbed, &pairs) >= base - 1e-9 * (1.0 + base));
            }
        }
    }
}
