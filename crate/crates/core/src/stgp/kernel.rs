//! Composite kernels over space-time points.
//!
//! A kernel is an expression tree whose leaves are RBF kernels acting on
//! either the spatial distance or the temporal distance between two
//! space-time points, and whose internal nodes combine two subtrees by sum
//! or product. The trees are serializable so experiment configs can spell
//! out the kernel structure directly.

use serde::{Deserialize, Serialize};

use super::{GpError, SpaceTimePoint};

/// Distance conventions on the grid.
///
/// Kernels measure space with the Euclidean distance on cell coordinates:
/// squared-exponential kernels over the Manhattan metric are indefinite (a
/// 5x5 grid already produces eigenvalues near -0.33), so Euclidean distance
/// is required for a positive semi-definite Gram matrix. The Lipschitz
/// machinery instead uses the Manhattan distance, where one grid move costs
/// exactly one unit. Time is measured in whole steps in both cases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridMetric {
    cols: usize,
}

impl GridMetric {
    pub fn new(cols: usize) -> Self {
        assert!(cols > 0, "grid must have at least one column");
        Self { cols }
    }

    /// Euclidean distance in cells between two row-major state indices; the
    /// kernel space metric.
    pub fn d_s(&self, a: usize, b: usize) -> f64 {
        let (ra, ca) = (a / self.cols, a % self.cols);
        let (rb, cb) = (b / self.cols, b % self.cols);
        let dr = ra.abs_diff(rb) as f64;
        let dc = ca.abs_diff(cb) as f64;
        (dr * dr + dc * dc).sqrt()
    }

    /// Manhattan distance in cells; the Lipschitz space metric.
    pub fn manhattan(&self, a: usize, b: usize) -> f64 {
        let (ra, ca) = (a / self.cols, a % self.cols);
        let (rb, cb) = (b / self.cols, b % self.cols);
        (ra.abs_diff(rb) + ca.abs_diff(cb)) as f64
    }

    /// Time distance in steps.
    pub fn d_t(&self, t1: usize, t2: usize) -> f64 {
        t1.abs_diff(t2) as f64
    }
}

/// Kernel expression tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `variance * exp(-d_s^2 / (2 * length_scale^2))`
    RbfSpace { variance: f64, length_scale: f64 },
    /// `variance * exp(-d_t^2 / (2 * length_scale^2))`
    RbfTime { variance: f64, length_scale: f64 },
    Sum {
        left: Box<KernelSpec>,
        right: Box<KernelSpec>,
    },
    Product {
        left: Box<KernelSpec>,
        right: Box<KernelSpec>,
    },
}

impl KernelSpec {
    pub fn rbf_space(variance: f64, length_scale: f64) -> Self {
        KernelSpec::RbfSpace {
            variance,
            length_scale,
        }
    }

    pub fn rbf_time(variance: f64, length_scale: f64) -> Self {
        KernelSpec::RbfTime {
            variance,
            length_scale,
        }
    }

    pub fn sum(left: KernelSpec, right: KernelSpec) -> Self {
        KernelSpec::Sum {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn product(left: KernelSpec, right: KernelSpec) -> Self {
        KernelSpec::Product {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Every leaf must have a positive, finite variance and length scale.
    pub fn validate(&self) -> Result<(), GpError> {
        match self {
            KernelSpec::RbfSpace {
                variance,
                length_scale,
            }
            | KernelSpec::RbfTime {
                variance,
                length_scale,
            } => {
                if !(variance.is_finite() && *variance > 0.0) {
                    return Err(GpError::InvalidKernel(format!(
                        "leaf variance must be positive and finite, got {variance}"
                    )));
                }
                if !(length_scale.is_finite() && *length_scale > 0.0) {
                    return Err(GpError::InvalidKernel(format!(
                        "leaf length scale must be positive and finite, got {length_scale}"
                    )));
                }
                Ok(())
            }
            KernelSpec::Sum { left, right } | KernelSpec::Product { left, right } => {
                left.validate()?;
                right.validate()
            }
        }
    }

    /// Evaluate the tree on precomputed spatial and temporal distances.
    pub fn eval_at(&self, d_s: f64, d_t: f64) -> f64 {
        match self {
            KernelSpec::RbfSpace {
                variance,
                length_scale,
            } => rbf(*variance, *length_scale, d_s),
            KernelSpec::RbfTime {
                variance,
                length_scale,
            } => rbf(*variance, *length_scale, d_t),
            KernelSpec::Sum { left, right } => left.eval_at(d_s, d_t) + right.eval_at(d_s, d_t),
            KernelSpec::Product { left, right } => left.eval_at(d_s, d_t) * right.eval_at(d_s, d_t),
        }
    }
}

fn rbf(variance: f64, length_scale: f64, d: f64) -> f64 {
    variance * (-d * d / (2.0 * length_scale * length_scale)).exp()
}

/// Kernel value between two space-time points under the given metric.
pub fn eval_kernel(
    spec: &KernelSpec,
    a: SpaceTimePoint,
    b: SpaceTimePoint,
    metric: &GridMetric,
) -> Result<f64, GpError> {
    let value = spec.eval_at(metric.d_s(a.s, b.s), metric.d_t(a.t, b.t));
    if value.is_finite() {
        Ok(value)
    } else {
        Err(GpError::InvalidKernel(format!(
            "kernel evaluated to a non-finite value at {a:?}, {b:?}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(t: usize, s: usize) -> SpaceTimePoint {
        SpaceTimePoint::new(t, s)
    }

    #[test]
    fn rbf_at_zero_distance_is_variance() {
        let k = KernelSpec::rbf_space(1.0, 2.0);
        let m = GridMetric::new(4);
        assert_eq!(eval_kernel(&k, pt(0, 5), pt(0, 5), &m).unwrap(), 1.0);
    }

    #[test]
    fn sum_at_zero_distance_adds_variances() {
        let k = KernelSpec::sum(KernelSpec::rbf_space(1.0, 2.0), KernelSpec::rbf_time(1.0, 1.5));
        let m = GridMetric::new(4);
        assert_eq!(eval_kernel(&k, pt(3, 5), pt(3, 5), &m).unwrap(), 2.0);
    }

    #[test]
    fn composite_tree_matches_termwise_formula() {
        // (k_s + k_t) + (k̂_s * k̂_t) with variances 1.0, 1.0, 0.5, 0.5 and
        // length scales 2.0, 1.5, 4.0, 10, evaluated at d_s = 1, d_t = 0.
        // Expected value written out term by term from the scalar formula.
        let k = KernelSpec::sum(
            KernelSpec::sum(KernelSpec::rbf_space(1.0, 2.0), KernelSpec::rbf_time(1.0, 1.5)),
            KernelSpec::product(
                KernelSpec::rbf_space(0.5, 4.0),
                KernelSpec::rbf_time(0.5, 10.0),
            ),
        );
        let d_s: f64 = 1.0;
        let d_t: f64 = 0.0;
        let term_s = 1.0 * (-d_s * d_s / (2.0 * 2.0 * 2.0)).exp();
        let term_t = 1.0 * (-d_t * d_t / (2.0 * 1.5 * 1.5)).exp();
        let term_cross = (0.5 * (-d_s * d_s / (2.0 * 4.0 * 4.0)).exp())
            * (0.5 * (-d_t * d_t / (2.0 * 10.0 * 10.0)).exp());
        let expected = term_s + term_t + term_cross;

        // Adjacent cells (Manhattan distance 1), same time step.
        let m = GridMetric::new(4);
        let got = eval_kernel(&k, pt(7, 1), pt(7, 2), &m).unwrap();
        assert!((got - expected).abs() < 1e-15, "got {got}, want {expected}");
    }

    #[test]
    fn symmetry_over_random_pairs() {
        let k = KernelSpec::sum(
            KernelSpec::product(KernelSpec::rbf_space(0.7, 3.0), KernelSpec::rbf_time(1.3, 2.0)),
            KernelSpec::rbf_space(0.2, 1.0),
        );
        let m = GridMetric::new(5);
        for a in 0..25 {
            for b in 0..25 {
                let x = eval_kernel(&k, pt(2, a), pt(9, b), &m).unwrap();
                let y = eval_kernel(&k, pt(9, b), pt(2, a), &m).unwrap();
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn invalid_leaf_parameters_are_rejected() {
        assert!(KernelSpec::rbf_space(0.0, 2.0).validate().is_err());
        assert!(KernelSpec::rbf_time(1.0, -1.0).validate().is_err());
        assert!(KernelSpec::sum(
            KernelSpec::rbf_space(1.0, 2.0),
            KernelSpec::rbf_time(f64::NAN, 1.0)
        )
        .validate()
        .is_err());
    }

    #[test]
    fn metrics_on_row_major_indices() {
        let m = GridMetric::new(4);
        // state 0 = (0,0), state 7 = (1,3)
        assert_eq!(m.manhattan(0, 7), 4.0);
        assert_eq!(m.d_s(0, 7), 10.0_f64.sqrt());
        assert_eq!(m.d_s(7, 7), 0.0);
        // Adjacent cells agree across both space metrics.
        assert_eq!(m.d_s(0, 1), 1.0);
        assert_eq!(m.manhattan(0, 1), 1.0);
        assert_eq!(m.d_t(3, 10), 7.0);
    }
}
