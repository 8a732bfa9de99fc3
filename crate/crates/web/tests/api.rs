use spectral_flow_web::{compute_bands, compute_flow, compute_ids};

const PERIOD2: &str = r#"{"d": 1, "period": [2], "cell_values": [0.0, 3.0],
  "impurity": {"psi": {"kind": "constant", "value": 1.0}, "p": 2.0}}"#;

#[test]
fn bands_report_the_gap() {
    let b = compute_bands(PERIOD2, 64).unwrap();
    assert_eq!(b.k.len(), b.bands.len());
    assert_eq!(b.gaps.len(), 1);
    assert!((b.gaps[0].lower - 2.0).abs() < 1e-9 && (b.gaps[0].upper - 5.0).abs() < 1e-9);
    assert!(compute_bands(PERIOD2, 1).is_err());
}

#[test]
fn ids_curve_is_monotone_and_flat_in_gap() {
    let c = compute_ids(PERIOD2).unwrap();
    assert!(c.rho.windows(2).all(|w| w[0] <= w[1]));
    for (l, r) in c.lambda.iter().zip(&c.rho) {
        if *l > 2.0 && *l < 5.0 {
            assert!((r - 0.5).abs() < 1e-12);
        }
    }
}

#[test]
fn flow_curve_matches_study() {
    let f = compute_flow(PERIOD2, f64::NAN, 100.0, 10000.0, 3).unwrap();
    assert_eq!(f.lambda, 3.5);
    assert_eq!(f.n, vec![8, 22, 70]);
    assert!((f.ratio[2].unwrap() - 1.0).abs() < 0.2);
    assert!(compute_flow(PERIOD2, 1.0, 100.0, 1000.0, 3).is_err());
    assert!(compute_flow("{}", f64::NAN, 100.0, 1000.0, 3).is_err());
}
