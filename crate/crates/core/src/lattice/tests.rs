use super::*;
use crate::test_util::TestRng;
use proptest::prelude::*;

fn random_field(spec: &GridSpec, rng: &mut TestRng) -> GridFunction {
    GridFunction::from_raw(spec.clone(), (0..spec.len()).map(|_| rng.uniform(-1.0, 1.0)).collect())
}

/// Random values on cells with |α|_∞ ≤ r, zero elsewhere.
fn compact_field(spec: &GridSpec, r: i64, rng: &mut TestRng) -> GridFunction {
    let values = (0..spec.len())
        .map(|i| {
            if spec.alpha(i).iter().all(|a| a.abs() <= r) {
                rng.uniform(-1.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    GridFunction::from_raw(spec.clone(), values)
}

fn random_velocity(spec: &GridSpec, r: i64, rng: &mut TestRng) -> VectorGridFunction {
    VectorGridFunction::new((0..spec.dim()).map(|_| compact_field(spec, r, rng).scale(2.0)).collect())
        .unwrap()
}

#[test]
fn spec_validation() {
    assert!(GridSpec::new(0, 3, 0.1).is_err());
    assert!(GridSpec::new(1, 0, 0.1).is_err());
    assert!(GridSpec::new(1, 3, 0.0).is_err());
    assert!(GridSpec::new(1, 3, f64::NAN).is_err());
    let s = GridSpec::new(2, 3, 0.5).unwrap();
    assert_eq!(s.len(), 49);
    assert_eq!(s.cell_volume(), 0.25);
}

#[test]
fn index_roundtrip() {
    let s = GridSpec::new(3, 2, 1.0).unwrap();
    for i in 0..s.len() {
        assert_eq!(s.index(&s.alpha(i)), Some(i));
    }
    assert_eq!(s.index(&[3, 0, 0]), None);
}

#[test]
fn periodic_lookup_wraps() {
    let s = GridSpec::new(1, 2, 1.0).unwrap().with_boundary(Boundary::Periodic);
    let f = GridFunction::from_index_fn(&s, |a| a[0] as f64);
    assert_eq!(f.get(&[3]), -2.0);
    assert_eq!(f.get(&[-3]), 2.0);
    assert_eq!(f.shifted(s.index(&[2]).unwrap(), 0, 1), -2.0);
    let z = GridSpec::new(1, 2, 1.0).unwrap();
    let g = GridFunction::from_index_fn(&z, |a| a[0] as f64);
    assert_eq!(g.get(&[3]), 0.0);
}

#[test]
fn project_examples() {
    let s = GridSpec::new(2, 3, 0.3).unwrap();
    let c = project(|_| 3.5, &s, 3).unwrap();
    assert!(c.values().iter().all(|&v| (v - 3.5).abs() < 1e-14));

    let s1 = GridSpec::new(1, 4, 0.5).unwrap();
    let lin = project(|x| x[0], &s1, 1).unwrap();
    for i in 0..s1.len() {
        assert!((lin.values()[i] - s1.x(i)[0]).abs() < 1e-15);
    }
    // ∫_{−1/4}^{1/4} x² dx / Δx = Δx²/12
    for order in 2..5 {
        let sq = project(|x| x[0] * x[0], &s1, order).unwrap();
        assert!((sq.get(&[0]) - 0.25 / 12.0).abs() < 1e-15, "order {order}");
    }
}

#[test]
fn project_rejects_non_finite_samples() {
    let s = GridSpec::new(1, 3, 0.5).unwrap();
    let err = project(|x| if x[0] > 1.2 { f64::NAN } else { 0.0 }, &s, 2).unwrap_err();
    match err {
        Error::NonFiniteSample { alpha, .. } => assert_eq!(alpha, vec![3]),
        e => panic!("unexpected error {e}"),
    }
    assert!(project(|_| 1.0, &s, 0).is_err());
}

#[test]
fn project_is_a_contraction() {
    let s = GridSpec::new(1, 20, 0.2).unwrap();
    let f = |x: &[f64]| (3.0 * x[0]).sin() * (-x[0] * x[0]).exp();
    let pf = project(f, &s, 4).unwrap();
    let fine = project(f, &GridSpec::new(1, 2000, 0.002).unwrap(), 4).unwrap();
    for p in [1.0, 2.0, f64::INFINITY] {
        assert!(lp_norm(&pf, p).unwrap() <= lp_norm(&fine, p).unwrap() * (1.0 + 1e-6), "p={p}");
    }
}

#[test]
fn differences_of_constants_and_linears() {
    let s = GridSpec::new(1, 5, 0.1).unwrap();
    let c = GridFunction::constant(&s, 2.0);
    let lin = GridFunction::from_fn(&s, |x| x[0]);
    for i in 1..s.len() - 1 {
        assert_eq!(forward_diff(&c, 0).values()[i], 0.0);
        assert!((forward_diff(&lin, 0).values()[i] - 1.0).abs() < 1e-12);
        assert!((backward_diff(&lin, 0).values()[i] - 1.0).abs() < 1e-12);
        assert!((central_diff(&lin, 0).values()[i] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn differences_match_index_shift_loops() {
    let mut rng = TestRng::new(2);
    for boundary in [Boundary::ZeroExterior, Boundary::Periodic] {
        let s = GridSpec::new(2, 3, 0.2).unwrap().with_boundary(boundary);
        let f = random_field(&s, &mut rng);
        for j in 0..2 {
            let fp = forward_diff(&f, j);
            let fm = backward_diff(&f, j);
            let f0 = central_diff(&f, j);
            let ap = average_plus(&f, j);
            let am = average_minus(&f, j);
            for i in 0..s.len() {
                let a = s.alpha(i);
                let mut up = a.clone();
                up[j] += 1;
                let mut dn = a.clone();
                dn[j] -= 1;
                let (u, c, d) = (f.get(&up), f.values()[i], f.get(&dn));
                assert!((fp.values()[i] - (u - c) / 0.2).abs() < 1e-13);
                assert!((fm.values()[i] - (c - d) / 0.2).abs() < 1e-13);
                assert!((f0.values()[i] - (u - d) / 0.4).abs() < 1e-13);
                assert!((ap.values()[i] - (u + c) / 2.0).abs() < 1e-15);
                assert!((am.values()[i] - (d + c) / 2.0).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn averages_examples() {
    let s = GridSpec::new(1, 3, 1.0).unwrap();
    let c = GridFunction::constant(&s, 4.0);
    assert_eq!(average_plus(&c, 0).get(&[0]), 4.0);
    let sig = GridFunction::from_index_fn(&s, |a| if a[0] == 1 { 3.0 } else { 1.0 });
    assert_eq!(average_plus(&sig, 0).get(&[0]), 2.0);
}

#[test]
fn upwind_with_nonnegative_velocity_is_backward_difference() {
    let mut rng = TestRng::new(4);
    let s = GridSpec::new(2, 4, 0.25).unwrap();
    let v = VectorGridFunction::new(vec![
        random_field(&s, &mut rng).map(f64::abs),
        random_field(&s, &mut rng).map(f64::abs),
    ])
    .unwrap();
    let f = random_field(&s, &mut rng);
    let got = upwind_apply(&v, &f);
    let mut expect = GridFunction::zeros(&s);
    for j in 0..2 {
        expect = expect.add(&v.component(j).mul(&backward_diff(&f, j)));
    }
    assert!(got.sub(&expect).max_abs() < 1e-13);
    assert_eq!(upwind_apply(&v, &GridFunction::constant(&s, 1.0)).get(&[0, 0]), 0.0);
}

#[test]
fn upwind_operators_match_loop_oracle() {
    let mut rng = TestRng::new(9);
    let s = GridSpec::new(1, 6, 0.3).unwrap();
    let v = VectorGridFunction::new(vec![random_field(&s, &mut rng)]).unwrap();
    let f = random_field(&s, &mut rng);
    let d = upwind_apply(&v, &f);
    let dd = dual_upwind_apply(&v, &f);
    let vv = v.component(0);
    for a in -6i64..=6 {
        let vp = |k: i64| vv.get(&[k]).max(0.0);
        let vm = |k: i64| (-vv.get(&[k])).max(0.0);
        let fa = |k: i64| f.get(&[k]);
        let expect = (vp(a) * (fa(a) - fa(a - 1)) - vm(a) * (fa(a + 1) - fa(a))) / 0.3;
        assert!((d.get(&[a]) - expect).abs() < 1e-13);
        let expect_dual =
            ((vp(a + 1) * fa(a + 1) - vp(a) * fa(a)) - (vm(a) * fa(a) - vm(a - 1) * fa(a - 1))) / 0.3;
        assert!((dd.get(&[a]) - expect_dual).abs() < 1e-13);
    }
}

#[test]
fn dual_upwind_one_examples() {
    let s = GridSpec::new(1, 10, 0.1).unwrap();
    let c = VectorGridFunction::new(vec![GridFunction::constant(&s, -0.7)]).unwrap();
    let one = dual_upwind_one(&c);
    for a in -9..=9 {
        assert_eq!(one.get(&[a]), 0.0);
    }
    let lin = VectorGridFunction::new(vec![project(|x| x[0], &s, 3).unwrap()]).unwrap();
    let d = dual_upwind_one(&lin);
    // The sign change at the origin is an outflow point, where both one-sided
    // parts contribute.
    for a in -9..=9 {
        let expect = if a == 0 { 2.0 } else { 1.0 };
        assert!((d.get(&[a]) - expect).abs() < 1e-12, "α={a}: {}", d.get(&[a]));
    }
    let g = GridFunction::constant(&s, 1.0);
    assert!(dual_upwind_apply(&lin, &g).sub(&d).max_abs() < 1e-15);
}

#[test]
fn dual_upwind_one_converges_to_divergence() {
    let mut errs = vec![];
    for &dx in &[0.1, 0.05, 0.025, 0.0125] {
        let s = GridSpec::covering(1, 3.0, dx).unwrap();
        let v = VectorGridFunction::new(vec![project(|x| x[0].sin(), &s, 4).unwrap()]).unwrap();
        let target = project(|x| x[0].cos(), &s, 4).unwrap();
        let div = dual_upwind_one(&v);
        let inner: Vec<f64> = (0..s.len())
            .filter(|&i| (0.5..2.5).contains(&s.x(i)[0].abs()))
            .map(|i| div.values()[i] - target.values()[i])
            .collect();
        errs.push(lp_norm_slice(&inner, dx, 2.0).unwrap());
    }
    for w in errs.windows(2) {
        assert!(w[1] < 0.6 * w[0], "{errs:?}");
    }
}

#[test]
fn lp_norm_examples() {
    let s = GridSpec::new(1, 4, 0.5).unwrap();
    let mut v = vec![0.0; s.len()];
    v[3] = -2.0;
    let f = GridFunction::new(s.clone(), v).unwrap();
    assert!((lp_norm(&f, 2.0).unwrap() - 2.0 * 0.5f64.sqrt()).abs() < 1e-15);
    assert_eq!(lp_norm(&f, f64::INFINITY).unwrap(), 2.0);
    let one = GridFunction::constant(&s, 1.0);
    assert!((lp_norm(&one, 1.0).unwrap() - 9.0 * 0.5).abs() < 1e-15);
    assert!(lp_norm(&one, 0.5).is_err());

    let mut rng = TestRng::new(1);
    let r = random_field(&s, &mut rng);
    let oracle = (0.5 * r.values().iter().map(|x| x.abs().powi(3)).sum::<f64>()).cbrt();
    assert!((lp_norm(&r, 3.0).unwrap() - oracle).abs() < 1e-14);
}

#[test]
fn periodic_forward_difference_sums_to_zero() {
    let mut rng = TestRng::new(6);
    let s = GridSpec::new(2, 5, 0.1).unwrap().with_boundary(Boundary::Periodic);
    let f = random_field(&s, &mut rng);
    for j in 0..2 {
        let sum: f64 = forward_diff(&f, j).values().iter().sum();
        assert!(sum.abs() < 1e-12, "{sum}");
    }
}

#[test]
fn calculus_identities_hold_on_random_fixtures() {
    let mut rng = TestRng::new(17);
    for dim in 1..=2 {
        let n = if dim == 1 { 12 } else { 6 };
        let s = GridSpec::new(dim, n, rng.uniform(0.05, 0.5)).unwrap();
        for _ in 0..20 {
            let r = (n as i64) / 2 - 1;
            let f = compact_field(&s, r, &mut rng);
            let g = compact_field(&s, r, &mut rng);
            let v = random_velocity(&s, n as i64 - 1, &mut rng);
            let rep = calculus_identity_suite(&f, &g, &v);
            for res in &rep.residuals {
                assert!(res.relative <= 1e-13, "{} = {:e}", res.name, res.relative);
            }
        }
    }
}

#[test]
fn debug_csv_has_expected_columns() {
    let s = GridSpec::new(2, 1, 0.5).unwrap();
    let f = GridFunction::constant(&s, 1.0);
    let mut buf = Vec::new();
    f.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "alpha_1,alpha_2,x_1,x_2,value");
    assert_eq!(lines.count(), 9);
}

#[test]
fn grid_function_rejects_bad_values() {
    let s = GridSpec::new(1, 1, 1.0).unwrap();
    assert!(GridFunction::new(s.clone(), vec![0.0; 2]).is_err());
    assert!(GridFunction::new(s, vec![0.0, f64::INFINITY, 0.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operators_are_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = TestRng::new(seed);
        let s = GridSpec::new(1, 8, 0.2).unwrap();
        let f = random_field(&s, &mut rng);
        let g = random_field(&s, &mut rng);
        let v = random_velocity(&s, 8, &mut rng);
        let comb = f.scale(a).add(&g.scale(b));
        let ops: Vec<Box<dyn Fn(&GridFunction) -> GridFunction>> = vec![
            Box::new(|x| forward_diff(x, 0)),
            Box::new(|x| backward_diff(x, 0)),
            Box::new(|x| central_diff(x, 0)),
            Box::new(|x| second_diff(x, 0)),
            Box::new(|x| upwind_apply(&v, x)),
            Box::new(|x| dual_upwind_apply(&v, x)),
        ];
        for op in &ops {
            let lhs = op(&comb);
            let rhs = op(&f).scale(a).add(&op(&g).scale(b));
            prop_assert!(lhs.sub(&rhs).max_abs() <= 1e-12 * (1.0 + rhs.max_abs()));
        }
    }

    #[test]
    fn differences_are_skew_adjoint(seed in any::<u64>(), dx in 0.01f64..1.0) {
        let mut rng = TestRng::new(seed);
        let s = GridSpec::new(2, 6, dx).unwrap();
        let f = compact_field(&s, 5, &mut rng);
        let g = compact_field(&s, 5, &mut rng);
        let scale = lp_norm(&f, 2.0).unwrap() * lp_norm(&g, 2.0).unwrap() / dx;
        for j in 0..2 {
            let l = inner(&f, &forward_diff(&g, j));
            let r = -inner(&g, &backward_diff(&f, j));
            prop_assert!((l - r).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn upwind_summation_by_parts(seed in any::<u64>()) {
        let mut rng = TestRng::new(seed);
        let s = GridSpec::new(1, 10, 0.1).unwrap();
        let f = compact_field(&s, 9, &mut rng);
        let g = compact_field(&s, 9, &mut rng);
        let v = random_velocity(&s, 10, &mut rng);
        let l = inner(&g, &upwind_apply(&v, &f));
        let r = -inner(&f, &dual_upwind_apply(&v, &g));
        prop_assert!((l - r).abs() < 1e-12);
    }
}
