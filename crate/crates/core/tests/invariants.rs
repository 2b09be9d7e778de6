//! Property tests for the algebraic and geometric invariants the library
//! promises: group laws, action equivariance, fixed-point recovery,
//! splitting soundness, and pointwise metric/curvature identities on the
//! catalog charts.

use holonomy_core::affine::{
    self, affine_frame_to_product, frame_right_action, product_right_action,
    product_to_affine_frame, solve_fixed_point, AffineFrame, AffineIsometry, FixedPointVerdict,
};
use holonomy_core::analysis::derham_split;
use holonomy_core::catalog;
use holonomy_core::{Chart64, Tolerances};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tol() -> Tolerances {
    Tolerances::default()
}

/// Catalog probe boxes: a chart together with a region safely inside its
/// domain, away from coordinate degeneracies.
fn probe_cases() -> Vec<(Chart64, Vec<(f64, f64)>)> {
    vec![
        (catalog::flat_chart(2), vec![(-2.0, 2.0), (-2.0, 2.0)]),
        (catalog::sphere_chart(1.0), vec![(0.4, 2.7), (0.0, 6.0)]),
        (catalog::hyperbolic_chart(), vec![(-3.0, 3.0), (0.3, 4.0)]),
        (catalog::paraboloid_chart(), vec![(-2.0, 2.0), (-2.0, 2.0)]),
        (
            catalog::cone_circle_chart(0.5, 0.05, 10.0).unwrap(),
            vec![(0.3, 3.0), (0.0, 6.0)],
        ),
        (
            catalog::lookup("cone-sphere")
                .unwrap()
                .descriptor
                .build()
                .unwrap(),
            vec![(0.4, 2.5), (0.4, 2.7), (0.0, 6.0)],
        ),
    ]
}

fn probe_point(case: usize, unit: &[f64; 3]) -> (Chart64, DVector<f64>) {
    let cases = probe_cases();
    let (chart, boxes) = &cases[case % cases.len()];
    let x = DVector::from_iterator(
        boxes.len(),
        boxes
            .iter()
            .zip(unit.iter())
            .map(|((lo, hi), t)| lo + (hi - lo) * t),
    );
    (chart.clone(), x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Conjugating a pure translation by any element rotates the
    /// translation vector by the linear part: h (I,v) h^{-1} = (I, A_h v).
    #[test]
    fn conjugation_rotates_pure_translations(seed in any::<u64>(), dim in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = affine::random_affine::<f64>(dim, &mut rng);
        let v = affine::random_unit_vector::<f64>(dim, &mut rng);
        let tau = AffineIsometry::new(DMatrix::identity(dim, dim), v.clone()).unwrap();
        let conj = h
            .compose(&tau.compose(&h.inverse().unwrap()).unwrap())
            .unwrap();
        let expect = AffineIsometry::new(DMatrix::identity(dim, dim), &h.a * &v).unwrap();
        prop_assert!(conj.deviation_from(&expect) < 1e-12);
    }

    /// The frame-to-product identification intertwines the two right
    /// actions: mapping after acting equals acting after mapping.
    #[test]
    fn frame_to_product_map_is_equivariant(seed in any::<u64>(), dim in 1usize..=4) {
        let t = tol();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let af = AffineFrame {
            point: affine::random_unit_vector::<f64>(dim, &mut rng) * 2.0,
            frame: affine::random_rotation::<f64>(dim, &mut rng),
        };
        let g = affine::random_affine::<f64>(dim, &mut rng);
        let lhs = affine_frame_to_product(&frame_right_action(&af, &g).unwrap(), &t).unwrap();
        let rhs = product_right_action(&affine_frame_to_product(&af, &t).unwrap(), &g).unwrap();
        prop_assert!((&lhs.frame - &rhs.frame).amax() < 1e-12);
        prop_assert!((&lhs.vector - &rhs.vector).amax() < 1e-12);
    }

    /// Acting by g then g' equals acting once by the block-matrix product
    /// g g' (our compose with g' as the earlier factor), for both the
    /// affine-frame action and the product-trivialization action.
    #[test]
    fn right_actions_respect_composition(seed in any::<u64>(), dim in 1usize..=4) {
        let t = tol();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let af = AffineFrame {
            point: affine::random_unit_vector::<f64>(dim, &mut rng) * 2.0,
            frame: affine::random_rotation::<f64>(dim, &mut rng),
        };
        let g = affine::random_affine::<f64>(dim, &mut rng);
        let gp = affine::random_affine::<f64>(dim, &mut rng);
        let combined = g.compose(&gp).unwrap();

        let two_steps = frame_right_action(&frame_right_action(&af, &g).unwrap(), &gp).unwrap();
        let one_step = frame_right_action(&af, &combined).unwrap();
        prop_assert!((&two_steps.point - &one_step.point).amax() < 1e-12);
        prop_assert!((&two_steps.frame - &one_step.frame).amax() < 1e-12);

        let p = affine_frame_to_product(&af, &t).unwrap();
        let two = product_right_action(&product_right_action(&p, &g).unwrap(), &gp).unwrap();
        let one = product_right_action(&p, &combined).unwrap();
        prop_assert!((&two.frame - &one.frame).amax() < 1e-12);
        prop_assert!((&two.vector - &one.vector).amax() < 1e-12);
    }

    /// The frame/product identification is a bijection: mapping there and
    /// back returns the original affine frame.
    #[test]
    fn frame_product_roundtrip(seed in any::<u64>(), dim in 1usize..=4) {
        let t = tol();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let af = AffineFrame {
            point: affine::random_unit_vector::<f64>(dim, &mut rng) * 3.0,
            frame: affine::random_rotation::<f64>(dim, &mut rng),
        };
        let back = product_to_affine_frame(&affine_frame_to_product(&af, &t).unwrap());
        prop_assert!((&back.point - &af.point).amax() < 1e-12);
        prop_assert!((&back.frame - &af.frame).amax() < 1e-12);
    }

    /// A synthetic consistent family b_i = (I - A_i) p0 hands back p0
    /// whenever the stacked system is well conditioned.
    #[test]
    fn fixed_point_solver_recovers_planted_center(seed in any::<u64>(), dim in 2usize..=4) {
        let t = tol();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p0 = affine::random_unit_vector::<f64>(dim, &mut rng) * 2.0;
        let samples: Vec<AffineIsometry<f64>> = (0..4)
            .map(|_| {
                let a = affine::random_rotation::<f64>(dim, &mut rng);
                let b = &p0 - &a * &p0;
                AffineIsometry::new(a, b).unwrap()
            })
            .collect();
        let res = solve_fixed_point(&samples, &t).unwrap();
        // Ridge regularization bounds recovery accuracy by sigma_min^2.
        prop_assume!(*res.stack_singular_values.last().unwrap() > 1e-2);
        prop_assert_eq!(res.verdict, FixedPointVerdict::FixedPoint);
        prop_assert!((&res.point - &p0).norm() < 1e-8, "{:?} vs {:?}", res.point, p0);
    }

    /// Splitting soundness: for block-rotation samples conjugated by a
    /// common orthogonal matrix, every reported subspace is invariant under
    /// every sample and the dimensions exhaust the space.
    #[test]
    fn splitting_subspaces_are_invariant_and_exhaustive(
        seed in any::<u64>(),
        dims in prop::collection::vec(1usize..=2, 2..=3),
    ) {
        let t = tol();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m: usize = dims.iter().sum();
        let q = affine::random_rotation::<f64>(m, &mut rng);
        let samples: Vec<AffineIsometry<f64>> = (0..5)
            .map(|_| {
                let mut a = DMatrix::<f64>::zeros(m, m);
                let mut off = 0;
                for &d in &dims {
                    let block = affine::random_rotation::<f64>(d, &mut rng);
                    a.view_mut((off, off), (d, d)).copy_from(&block);
                    off += d;
                }
                let rotated = &q * a * q.transpose();
                let b = affine::random_unit_vector::<f64>(m, &mut rng);
                AffineIsometry::new(rotated, b).unwrap()
            })
            .collect();
        let split = derham_split(&samples, &t).unwrap();
        let total: usize = split.factors.iter().map(|f| f.dim()).sum();
        prop_assert_eq!(total, m);
        for factor in &split.factors {
            let basis = &factor.basis;
            let proj = basis * basis.transpose();
            let id = DMatrix::<f64>::identity(m, m);
            for s in &samples {
                let image = &s.a * basis;
                let leak = (&id - &proj) * &image;
                prop_assert!(
                    leak.amax() < 10.0 * t.tol_split,
                    "leak {} for basis of dim {}",
                    leak.amax(),
                    basis.ncols()
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Pointwise chart identities on catalog geometries: symmetric
    /// positive-definite metric, symmetric connection coefficients,
    /// curvature antisymmetric in its two arguments and skew in a
    /// g-orthonormal frame.
    #[test]
    fn chart_probes_satisfy_metric_and_curvature_identities(
        case in 0usize..6,
        unit in [0.05f64..0.95, 0.05f64..0.95, 0.05f64..0.95],
        seed in any::<u64>(),
    ) {
        let t = tol();
        let (chart, x) = probe_point(case, &unit);
        let m = chart.dim();

        let g = chart.metric_at(&x, &t).unwrap();
        prop_assert!((&g - g.transpose()).amax() < 1e-15);

        let gam = chart.christoffels(&x, &t).unwrap();
        for k in 0..m {
            prop_assert!((&gam[k] - gam[k].transpose()).amax() < 1e-12);
        }
        if chart.has_analytic_christoffel() {
            let fd = chart.christoffels_fd(&x, &t).unwrap();
            for k in 0..m {
                prop_assert!(
                    (&gam[k] - &fd[k]).amax() < 10.0 * t.h_fd * t.h_fd,
                    "chart {} coeff {k}",
                    chart.label()
                );
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xv = affine::random_unit_vector::<f64>(m, &mut rng);
        let yv = affine::random_unit_vector::<f64>(m, &mut rng);
        let rxy = chart.curvature_op(&x, &xv, &yv, &t).unwrap();
        let ryx = chart.curvature_op(&x, &yv, &xv, &t).unwrap();
        prop_assert!((&rxy.matrix + &ryx.matrix).amax() < 1e-12);

        let frame = chart.orthonormal_frame(&x, None, &t).unwrap();
        let gram = frame.matrix.transpose() * &g * &frame.matrix;
        prop_assert!((&gram - DMatrix::<f64>::identity(m, m)).amax() < 1e-9);

        // Normalize the arguments to unit g-length so the curvature matrix
        // has order-one entries and the skewness bound is meaningful.
        let xg = (xv.dot(&(&g * &xv))).sqrt();
        let yg = (yv.dot(&(&g * &yv))).sqrt();
        let op = chart
            .curvature_op(&x, &(&xv / xg), &(&yv / yg), &t)
            .unwrap();
        let in_frame = frame
            .matrix
            .clone()
            .lu()
            .solve(&(&op.matrix * &frame.matrix))
            .unwrap();
        prop_assert!(
            (&in_frame + in_frame.transpose()).amax() < t.tol_curv,
            "chart {}: skew defect {}",
            chart.label(),
            (&in_frame + in_frame.transpose()).amax()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Geodesics conserve speed and invert the connecting solve: the
    /// exponential of the connecting velocity lands on the target.
    #[test]
    fn geodesics_conserve_speed_and_invert_connection(
        case in 0usize..6,
        unit in [0.25f64..0.75, 0.25f64..0.75, 0.25f64..0.75],
        seed in any::<u64>(),
    ) {
        let t = tol();
        let (chart, x) = probe_point(case, &unit);
        let m = chart.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = affine::random_unit_vector::<f64>(m, &mut rng);

        let trace = chart.geodesic(&x, &v, 0.4, 1e-3, &t).unwrap();
        prop_assert!(trace.speed_drift < t.tol_speed, "{}", trace.speed_drift);

        let y = &x + affine::random_unit_vector::<f64>(m, &mut rng) * 0.1;
        prop_assume!(chart.in_domain(&y));
        let w = chart.geodesic_connect(&x, &y, 1e-3, &t).unwrap();
        let reached = chart.exp_map(&x, &w, 1e-3, &t).unwrap();
        prop_assert!(
            chart.wrapped_delta(&reached, &y).norm() < 1e-8,
            "{}",
            chart.wrapped_delta(&reached, &y).norm()
        );
    }
}
