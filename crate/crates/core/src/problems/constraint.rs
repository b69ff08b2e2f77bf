//! Closed convex feasible sets with Euclidean projectors.

use nalgebra::DVector;

/// The feasible set `K`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    FullSpace,
    /// `{ x : ||x|| <= radius }`.
    Ball(f64),
    /// `[lo, hi]^m`.
    Box(f64, f64),
}

impl ConstraintSet {
    /// Euclidean projection.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match *self {
            ConstraintSet::FullSpace => x.clone(),
            ConstraintSet::Ball(r) => {
                let n = x.norm();
                if n <= r {
                    x.clone()
                } else {
                    x * (r / n)
                }
            }
            ConstraintSet::Box(lo, hi) => x.map(|v| v.clamp(lo, hi)),
        }
    }

    /// Membership with absolute slack `tol`.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        match *self {
            ConstraintSet::FullSpace => true,
            ConstraintSet::Ball(r) => x.norm() <= r + tol,
            ConstraintSet::Box(lo, hi) => x.iter().all(|&v| v >= lo - tol && v <= hi + tol),
        }
    }

    pub fn is_full_space(&self) -> bool {
        matches!(self, ConstraintSet::FullSpace)
    }

    /// Minimizer of `beta ||z||_1 + (1/2) ||z - v||^2` over the set.
    ///
    /// Shrinking first and projecting second is exact here: the box is
    /// separable, and for the ball the KKT conditions make the solution a
    /// positive multiple of the shrunk point.
    pub fn prox_l1(&self, v: &DVector<f64>, beta: f64) -> DVector<f64> {
        self.project(&soft_threshold(v, beta))
    }
}

/// Componentwise `sign(x) max(|x| - beta, 0)`.
pub fn soft_threshold(x: &DVector<f64>, beta: f64) -> DVector<f64> {
    if beta == 0.0 {
        return x.clone();
    }
    x.map(|v| {
        let m = v.abs() - beta;
        if m > 0.0 {
            m.copysign(v)
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn projection_examples() {
        let ball = ConstraintSet::Ball(1.0);
        assert_eq!(ball.project(&dv(&[0.3, 0.4])), dv(&[0.3, 0.4]));
        let p = ball.project(&dv(&[3.0, 4.0]));
        assert!((p - dv(&[0.6, 0.8])).norm() < 1e-15);
        let bx = ConstraintSet::Box(0.0, 1.0);
        assert_eq!(bx.project(&dv(&[-1.0, -1.0, -1.0])), dv(&[0.0, 0.0, 0.0]));
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&dv(&[0.3]), 0.5), dv(&[0.0]));
        assert_eq!(soft_threshold(&dv(&[2.0, -2.0]), 1.0), dv(&[1.0, -1.0]));
        let x = dv(&[0.7, -3.0, 0.0]);
        assert_eq!(soft_threshold(&x, 0.0), x);
    }

    fn sets() -> Vec<ConstraintSet> {
        vec![
            ConstraintSet::FullSpace,
            ConstraintSet::Ball(1.0),
            ConstraintSet::Box(-0.5, 2.0),
        ]
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_feasible_and_nearest(
            x in proptest::collection::vec(-4.0f64..4.0, 3),
            z in proptest::collection::vec(-4.0f64..4.0, 3),
        ) {
            let x = dv(&x);
            for k in sets() {
                let p = k.project(&x);
                prop_assert!(k.contains(&p, 1e-12));
                prop_assert!((k.project(&p) - &p).norm() < 1e-12);
                let zf = k.project(&dv(&z));
                prop_assert!((&p - &x).norm() <= (&zf - &x).norm() + 1e-12);
            }
        }

        // prox_l1 against a brute-force check of the optimality of its output:
        // no feasible perturbation lowers the objective.
        #[test]
        fn prox_l1_is_optimal(
            v in proptest::collection::vec(-3.0f64..3.0, 3),
            d in proptest::collection::vec(-1.0f64..1.0, 3),
            beta in 0.0f64..1.0,
        ) {
            let v = dv(&v);
            let obj = |z: &DVector<f64>| beta * z.lp_norm(1) + 0.5 * (z - &v).norm_squared();
            for k in sets() {
                let z = k.prox_l1(&v, beta);
                for t in [1e-3, 1e-2, 1e-1] {
                    let w = k.project(&(&z + dv(&d) * t));
                    prop_assert!(obj(&z) <= obj(&w) + 1e-12);
                }
            }
        }
    }
}
