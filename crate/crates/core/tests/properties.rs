use aihs::blaschke;
use aihs::duality;
use aihs::encoding::{format_hex, parse_hex};
use aihs::entire;
use aihs::linalg::{self, CMatrix, CVector, C64};
use aihs::operator::{build_operator, OperatorFamily, OperatorModel, OperatorSpec, WeightSpec};
use aihs::poly;
use aihs::resolvent::{self, ResolventMethod};
use proptest::prelude::*;

fn complex() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| C64::new(re, im))
}

fn disk_point(radius: f64) -> impl Strategy<Value = C64> {
    (0.05f64..radius, 0.0f64..std::f64::consts::TAU).prop_map(|(r, t)| C64::from_polar(r, t))
}

fn shift_op(family: OperatorFamily, ratio: f64, dim: usize) -> OperatorModel {
    build_operator(&OperatorSpec {
        family,
        weights: Some(WeightSpec::Geometric { ratio, scale: 1.0 }),
        matrix: None,
        dim,
    })
    .unwrap()
}

fn random_matrix(rows: usize, cols: usize, entries: &[C64]) -> CMatrix {
    CMatrix::from_fn(rows, cols, |i, j| entries[(i * cols + j) % entries.len()] + C64::new((i * 7 + j * 3) as f64 * 1e-3, 0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hex_encoding_is_lossless(x in any::<f64>()) {
        let back = parse_hex(&format_hex(x)).unwrap();
        if x.is_nan() {
            prop_assert!(back.is_nan());
        } else {
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn th_identity_holds_on_shifts(
        forward in any::<bool>(),
        ratio in 0.3f64..0.99,
        dim in 4usize..48,
        r in 0.1f64..10.0,
        theta in 0.0f64..std::f64::consts::TAU,
    ) {
        let family = if forward { OperatorFamily::ForwardWeightedShift } else { OperatorFamily::DonoghueBackwardShift };
        let op = shift_op(family, ratio, dim);
        let e = linalg::basis_vector(dim, if forward { 0 } else { dim - 1 });
        let l = C64::from_polar(r, theta);
        let rv = resolvent::resolvent_vector(&op, l, &e, ResolventMethod::DirectSolve).unwrap();
        let scale = linalg::norm(&rv.vector) / r + linalg::norm(&op.apply(&rv.vector)) + 1.0;
        prop_assert!(resolvent::check_th_identity(&op, &rv, &e) / scale < 1e-13);
        let series = resolvent::resolvent_vector(&op, l, &e, ResolventMethod::NeumannPartialSum { terms: dim }).unwrap();
        prop_assert!(linalg::norm(&(&series.vector - &rv.vector)) <= 1e-12 * linalg::norm(&rv.vector));
    }

    #[test]
    fn coefficient_bound_holds_termwise(
        r in prop::collection::vec(1e-3f64..1e3, 40),
        degree in 1usize..12,
        k_max in 0usize..8,
    ) {
        prop_assume!(entire::required_norms(degree, k_max) <= r.len());
        let cs = entire::coefficients_from_norms(&r, degree, k_max).unwrap();
        prop_assert_eq!(cs.c[0], 1.0);
        for k in 0..=k_max {
            for i in k.max(1)..=degree {
                let bound = 0.5f64.powi(i as i32);
                prop_assert!(cs.c[i] * r[i + k] <= bound * (1.0 + 4.0 * f64::EPSILON));
            }
        }
    }

    #[test]
    fn polynomial_roots_are_roots(roots in prop::collection::vec(disk_point(3.0), 1..7)) {
        // expand prod (z - r_i), ascending coefficients
        let mut coeffs = vec![C64::new(1.0, 0.0)];
        for r in &roots {
            let mut next = vec![C64::new(0.0, 0.0); coeffs.len() + 1];
            for (i, c) in coeffs.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= r * c;
            }
            coeffs = next;
        }
        let found = poly::roots(&coeffs).unwrap();
        prop_assert_eq!(found.len(), roots.len());
        for z in &found {
            let p = poly::eval(&coeffs, *z).norm();
            prop_assert!(p <= 1e-9 * poly::magnitude(&coeffs, *z).max(1.0));
        }
    }

    #[test]
    fn blaschke_product_is_bounded_and_vanishes(
        points in prop::collection::vec(disk_point(0.9), 1..6),
        z in disk_point(0.99),
    ) {
        prop_assert!(blaschke::evaluate_product(&points, z).norm() <= 1.0 + 1e-12);
        for p in &points {
            prop_assert!(blaschke::evaluate_product(&points, *p).norm() < 1e-12);
        }
    }

    #[test]
    fn taylor_series_matches_product(points in prop::collection::vec(disk_point(0.8), 1..5), z in disk_point(0.4)) {
        let bd = blaschke::blaschke_taylor(&points, 200).unwrap();
        prop_assert!((bd.evaluate_series(z) - bd.evaluate_product(z)).norm() < 1e-10);
        let table = blaschke::fm_coefficient_table(&bd, 3, 200).unwrap();
        for m in 0..=3 {
            let want = z.powu(m as u32) * bd.evaluate_series(z);
            prop_assert!((table.evaluate(m, z) - want).norm() < 1e-12);
        }
    }

    #[test]
    fn spread_basis_keeps_the_span(entries in prop::collection::vec(complex(), 12..40), k in 2usize..5) {
        let n = 8;
        let q = linalg::pivoted_orthonormal_basis(&random_matrix(n, k, &entries));
        let a = random_matrix(n, n, &entries[1..]);
        let s = linalg::spread_basis(&q, &a);
        prop_assert_eq!(s.ncols(), q.ncols());
        let gram = s.adjoint() * &s - CMatrix::identity(s.ncols(), s.ncols());
        prop_assert!(gram.norm() < 1e-12);
        prop_assert!(linalg::containment_residual(&q, &s) < 1e-12);
        // every column of A S has the same length
        let lens: Vec<f64> = (a * &s).column_iter().map(|c| c.norm()).collect();
        let mean = lens.iter().sum::<f64>() / lens.len() as f64;
        prop_assert!(lens.iter().all(|l| (l - mean).abs() <= 1e-10 * mean.max(1e-300)));
    }

    #[test]
    fn orthogonal_complement_is_complementary(entries in prop::collection::vec(complex(), 10..30), k in 1usize..6) {
        let n = 7;
        let q = linalg::pivoted_orthonormal_basis(&random_matrix(n, k, &entries));
        let c = linalg::orthogonal_complement(&q);
        prop_assert_eq!(q.ncols() + c.ncols(), n);
        prop_assert!((q.adjoint() * &c).norm() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn perturbation_round_trip(seed in any::<u64>()) {
        let trip = duality::random_round_trip(seed, 32, duality::DEFAULT_TOL_RANK).unwrap();
        let r = &trip.record;
        prop_assert_eq!(r.rank_k, r.dim_f);
        prop_assert_eq!(trip.brute_force_dim_f, r.dim_f);
        prop_assert_eq!(trip.converse_rank_excess, 0);
        prop_assert!(r.residual_fwd < 1e-9);
    }

    #[test]
    fn dichotomy_runs_land_in_one_branch(seed in any::<u64>()) {
        let records = aihs::chains::dichotomy_sweep(seed, 1, 12, 6, &Default::default());
        prop_assert!(records[0].consistent, "{:?}", records[0]);
    }

    #[test]
    fn defect_space_matches_brute_force(seed in any::<u64>(), dim_y in 1usize..5) {
        let n = 10;
        let op = aihs::operator::OperatorModel::dense(aihs::operator::random_matrix(n, seed, 1.0)).unwrap();
        let y = duality::random_orthonormal(n, dim_y, seed ^ 0x5eed);
        let d = duality::minimal_defect_space(&op, &y, duality::DEFAULT_TOL_RANK);
        prop_assert_eq!(d.dim(), duality::brute_force_defect(&op, &y, duality::DEFAULT_TOL_RANK));
        // T Y lies in Y + D
        let joined = linalg::join(&y, &d.basis, 1e-12);
        prop_assert!(linalg::containment_residual(&joined, &(op.matrix() * &y)) < 1e-10);
    }
}

#[test]
fn zero_vector_seed_is_rejected_by_the_resolvent() {
    let op = shift_op(OperatorFamily::ForwardWeightedShift, 0.5, 8);
    let e = CVector::zeros(5);
    assert!(resolvent::resolvent_vector(&op, C64::new(1.0, 0.0), &e, ResolventMethod::DirectSolve).is_err());
}
