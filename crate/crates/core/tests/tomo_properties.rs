use proptest::prelude::*;
use sic_certify::qmath::{operator_from_bloch, qubit_state, BlochVector};
use sic_certify::scenario::reference_setup;
use sic_certify::tomo::{invert_projective, invert_sic, two_qubit_tomography, FrequencyContext, FrequencyTable};

fn ball() -> impl Strategy<Value = BlochVector> {
    (proptest::array::uniform3(-1.0f64..1.0), 0.0f64..=1.0).prop_map(|(v, r)| {
        let b = BlochVector::from_array(v);
        if b.norm() < 1e-9 {
            BlochVector::ZERO
        } else {
            b.scale(r / b.norm())
        }
    })
}

fn two_qubit_frequencies() -> impl Strategy<Value = FrequencyTable> {
    proptest::collection::vec(proptest::array::uniform4(0.01f64..1.0), 9).prop_map(|rows| {
        let counts: Vec<Option<Vec<f64>>> = rows.into_iter().map(|r| Some(r.to_vec())).collect();
        FrequencyTable::from_counts(FrequencyContext::TwoQubit, &counts).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn sic_inversion_is_exact_left_inverse(r in ball()) {
        let frame = reference_setup().povm_directions;
        let p = frame.map(|n| (1.0 + r.dot(n)) / 4.0);
        let s = invert_sic(&FrequencyTable::sic(p, None), &frame).unwrap();
        prop_assert!(s.bloch.distance(r) < 1e-12);
    }

    #[test]
    fn projective_inversion_of_born_frequencies(r in ball()) {
        let rho = qubit_state(r);
        let axes = [BlochVector::new(1., 0., 0.), BlochVector::new(0., 1., 0.), BlochVector::new(0., 0., 1.)];
        let f = axes.map(|n| rho.trace_product(&operator_from_bloch(1.0, n)));
        let s = invert_projective(&FrequencyTable::projective(f, None), false).unwrap();
        prop_assert!(s.bloch.distance(r) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn two_qubit_inversion_is_affine(f in two_qubit_frequencies(), g in two_qubit_frequencies(), l in 0.0f64..1.0) {
        let mut mix = f.clone();
        for (m, q) in mix.frequencies.iter_mut().zip(&g.frequencies) {
            let (m, q) = (m.as_mut().unwrap(), q.as_ref().unwrap());
            for (a, b) in m.iter_mut().zip(q) {
                *a = l * *a + (1.0 - l) * b;
            }
        }
        let lhs = two_qubit_tomography(&mix, false).unwrap();
        let rf = two_qubit_tomography(&f, false).unwrap();
        let rg = two_qubit_tomography(&g, false).unwrap();
        let rhs = &rf.scale(l) + &rg.scale(1.0 - l);
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        prop_assert!((lhs.trace().re - 1.0).abs() < 1e-12);
    }
}
