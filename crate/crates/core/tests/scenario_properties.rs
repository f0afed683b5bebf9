use nalgebra::DVector;
use proptest::prelude::*;
use sic_certify::qmath::{c, sigma_dot, BlochVector, Operator};
use sic_certify::scenario::{
    eval_functional, functional_by_name, local_bound, quantum_table, reference_setup, BellFunctional, LocalStrategy,
    Measurements,
};

fn unit(v: [f64; 3]) -> BlochVector {
    let b = BlochVector::from_array(v);
    if b.norm() < 1e-6 {
        BlochVector::new(0., 0., 1.)
    } else {
        b.scale(1.0 / b.norm())
    }
}

fn pure_two_qubit(re: [f64; 4], im: [f64; 4]) -> Operator {
    let mut k = DVector::from_iterator(4, (0..4).map(|i| c(re[i], im[i])));
    let n = k.norm();
    if n < 1e-6 {
        k[0] = c(1.0, 0.0);
    } else {
        k /= c(n, 0.0);
    }
    Operator::projector(&k)
}

fn coefficient() -> impl Strategy<Value = f64> {
    -2.0f64..2.0
}

fn functional() -> impl Strategy<Value = BellFunctional> {
    (proptest::collection::vec(coefficient(), 44), 0.0f64..4.0).prop_map(|(p, k)| BellFunctional::from_params(&p, k))
}

fn direction() -> impl Strategy<Value = BlochVector> {
    proptest::array::uniform3(-1.0f64..1.0).prop_map(unit)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn elegant_value_never_exceeds_four_root_three(
        re in proptest::array::uniform4(-1.0f64..1.0),
        im in proptest::array::uniform4(-1.0f64..1.0),
        a in proptest::array::uniform3(direction()),
        b in proptest::array::uniform4(direction()),
    ) {
        let setup = reference_setup();
        let m = Measurements {
            alice_binary: a.map(sigma_dot),
            alice_povm: setup.measurements.alice_povm.clone(),
            bob: b.map(sigma_dot),
        };
        let t = quantum_table(&pure_two_qubit(re, im), &m).unwrap();
        let v = eval_functional(&functional_by_name("elegant").unwrap(), &t).unwrap().value;
        prop_assert!(v <= 4.0 * 3f64.sqrt() + 1e-9, "{}", v);
    }

    #[test]
    fn functional_is_linear_in_coefficients(f in functional(), g in functional(), s in -3.0f64..3.0) {
        let t = sic_certify::scenario::ideal_table(&reference_setup()).unwrap();
        let mut params = f.to_params();
        for (p, q) in params.iter_mut().zip(g.to_params()) {
            *p += s * q;
        }
        // common k so the penalty part adds up too
        let g_k = BellFunctional::from_params(&g.to_params(), f.k);
        let sum = BellFunctional::from_params(&params, f.k);
        let lhs = eval_functional(&sum, &t).unwrap().value;
        let rhs = eval_functional(&f, &t).unwrap().value + s * eval_functional(&g_k, &t).unwrap().value;
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn functional_is_affine_in_mixtures(f in functional(), lambda in 0.0f64..1.0, v in 0.0f64..1.0) {
        let setup = reference_setup();
        let ideal = sic_certify::scenario::ideal_table(&setup).unwrap();
        let other = sic_certify::scenario::werner_table(&setup, v).unwrap();
        let mixed = ideal.mix(lambda, &other);
        let lhs = eval_functional(&f, &mixed).unwrap().value;
        let rhs = lambda * eval_functional(&f, &ideal).unwrap().value
            + (1.0 - lambda) * eval_functional(&f, &other).unwrap().value;
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn deterministic_strategies_respect_local_bound(
        f in functional(),
        alice in proptest::array::uniform3(prop_oneof![Just(1i8), Just(-1i8)]),
        bob in proptest::array::uniform4(prop_oneof![Just(1i8), Just(-1i8)]),
        povm in 0usize..4,
    ) {
        let s = LocalStrategy { alice_binary: alice, alice_povm: povm, bob };
        let v = eval_functional(&f, &s.table()).unwrap().value;
        prop_assert!(v <= local_bound(&f).value + 1e-9);
    }
}
