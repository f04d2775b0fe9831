use eigennet_web::{analytic, spectrum, Demo, PLOT_POINTS};

#[test]
fn session_trains_and_reports_curves() {
    let mut d = Demo::new("multi", 1).unwrap();
    assert_eq!(d.outputs(), 3);
    assert_eq!(d.step(0).unwrap(), vec![0.0]);
    let first = d.step(2).unwrap();
    assert_eq!(first[0], 2.0);
    assert_eq!(first.len(), 2 + 3 + 3);
    assert!(first[1].is_finite());
    assert_eq!(d.values().len(), 3 * PLOT_POINTS);
    assert_eq!(d.reference().len(), 3 * PLOT_POINTS);
}

#[test]
fn sessions_are_seeded() {
    let mut a = Demo::new("sine", 4).unwrap();
    let mut b = Demo::new("sine", 4).unwrap();
    assert_eq!(a.step(2).unwrap(), b.step(2).unwrap());
    assert_eq!(a.values(), b.values());
}

#[test]
fn unknown_problem_is_an_error() {
    assert!(Demo::new("wave", 0).is_err());
    assert!(analytic("wave", 1, 10).is_err());
}

#[test]
fn analytic_linear_curve() {
    let v = analytic("linear", 1, 5).unwrap();
    assert_eq!(v.len(), 10);
    assert_eq!(v[4], std::f64::consts::FRAC_PI_2);
    assert!((v[9] - 1.0).abs() < 1e-15);
}

#[test]
fn spectrum_pairs_exact_and_fd() {
    let s = spectrum(1000, 5).unwrap();
    for k in 0..5 {
        assert!((s[5 + k] - s[k]).abs() / s[k] < 1e-4);
    }
    assert_eq!(spectrum(2, 5).unwrap().len(), 4);
}
