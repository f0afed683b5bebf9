use sic_certify_web::{bell_curve, certify, tomography};

#[test]
fn curve_endpoints() {
    let c = bell_curve("elegant", 11).unwrap();
    assert_eq!(c.visibility.len(), 11);
    assert!(c.value[0].abs() < 1e-12);
    assert!((c.value[10] - 4.0 * 3f64.sqrt()).abs() < 1e-9);
    assert_eq!(c.local_bound, 6.0);
    assert!(bell_curve("nope", 3).is_err());
}

#[test]
fn tomography_view() {
    let t = tomography(0.995, 150.0, 5, 1).unwrap();
    assert_eq!(t.fidelity.len(), 8);
    assert!(t.fidelity.iter().all(|&f| f > 0.95));
    assert!(t.svg.starts_with("<svg"));
}

#[test]
fn certify_levels() {
    let json = certify("elegant", "1", 0.995, 0).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["level"], "1");
    assert!(certify("elegant", "2", 0.995, 0).is_err());
}
