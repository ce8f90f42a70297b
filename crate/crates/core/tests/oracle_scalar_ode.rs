use linbias::scalar_ode::*;
use linbias::Error;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn pq_examples() {
    let (p, q) = integrate_pq(2, 1.0).unwrap();
    assert!(rel(p, 1f64.cosh()) <= 1e-12 && rel(q, 1f64.sinh()) <= 1e-12);
    // The numerical path agrees with the closed form.
    let (p, q) = integrate_pq_ode(2, 1.0).unwrap();
    assert!(rel(p, 1.5430806348152437) <= 1e-10 && rel(q, 1.1752011936438014) <= 1e-10);
    for l in 2..=5 {
        assert_eq!(integrate_pq(l, 0.0).unwrap(), (1.0, 0.0));
    }
}

#[test]
fn pq_depth_three_taylor() {
    for t in [1e-3, 1e-2] {
        let (p, q) = integrate_pq(3, t).unwrap();
        assert!((q - t).abs() <= t * t * t);
        assert!((p - 1.0 - t * t / 2.0).abs() <= t.powi(4));
    }
}

#[test]
fn pq_blows_up_in_finite_time() {
    let c = domain_hint(3).unwrap();
    assert!(c.is_finite() && c > 0.0);
    assert!(matches!(
        integrate_pq(3, 2.0 * c),
        Err(Error::Domain { .. })
    ));
}

#[test]
fn h_examples() {
    let v = (2f64).sinh() / 2.0;
    assert!((h(2, 1.0).unwrap() - 1.8134302039235093).abs() <= 1e-12);
    assert!((h(2, 1.0).unwrap() - v).abs() <= 1e-15);
    assert!((h(2, -1.0).unwrap() + 1.8134302039235093).abs() <= 1e-12);
    for l in 2..=4 {
        assert_eq!(h(l, 0.0).unwrap(), 0.0);
    }
}

#[test]
fn h_inv_examples() {
    let v = (2f64).sinh() / 2.0;
    assert!((h_inv(2, v).unwrap() - 1.0).abs() <= 1e-12);
    assert_eq!(h_inv(2, 0.0).unwrap(), 0.0);
    assert!((h_inv(2, 10.0).unwrap() - 20f64.asinh() / 2.0).abs() <= 1e-12);
    // Quoted as ≈ 1.8449; the exact value is 1.84475…
    assert!((h_inv(2, 10.0).unwrap() - 1.8449).abs() <= 5e-4);
    for l in 3..=4 {
        assert_eq!(h_inv(l, 0.0).unwrap(), 0.0);
        let t = h_inv(l, 5.0).unwrap();
        assert!(rel(h(l, t).unwrap(), 5.0) <= 1e-10);
    }
}

#[test]
fn big_h_examples() {
    let want = (2f64.asinh() - (5f64.sqrt() - 1.0) / 2.0) / 2.0;
    assert!((h_inv_integral(2, 1.0).unwrap() - want).abs() <= 1e-14);
    assert!((want - 0.41277).abs() <= 1e-4);
    let quad = h_inv_integral_quadrature(2, 1.0, 1e-12).unwrap();
    assert!((quad - want).abs() <= 1e-9);
    for l in 2..=4 {
        assert_eq!(h_inv_integral(l, 0.0).unwrap(), 0.0);
        for t in [0.3, 2.0, 17.0] {
            assert_eq!(
                h_inv_integral(l, -t).unwrap(),
                h_inv_integral(l, t).unwrap()
            );
        }
    }
}

#[test]
fn big_h_matches_quadrature_for_deeper_nets() {
    for l in [3, 4] {
        for t in [0.5, 3.0, 40.0] {
            let a = h_inv_integral(l, t).unwrap();
            let b = h_inv_integral_quadrature(l, t, 1e-11).unwrap();
            assert!(
                (a - b).abs() <= 1e-8 * (1.0 + b),
                "L = {l}, t = {t}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn q_value_examples() {
    for alpha in [1e-3, 1.0, 1e3] {
        assert_eq!(q_value(2, alpha, &[1.0, 2.0], &[0.0, 0.0]).unwrap(), 0.0);
    }
    let q = q_value(2, 1.0, &[1.0], &[1.0]).unwrap();
    assert!((q - h_inv_integral(2, 1.0).unwrap()).abs() <= 1e-15);
    assert!(q_value(2, 1.0, &[0.0, 1.0], &[1.0, 1.0]).is_err());
}

#[test]
fn q_limits_examples() {
    let rho = [0.5, -2.0, 1.5];
    assert_eq!(q_limits(3, &[1.0; 3], &rho).unwrap(), (4.0, 6.5));
    let (l1, _) = q_limits(2, &[0.3, 7.0, 2.0], &rho).unwrap();
    assert_eq!(l1, 4.0);
    assert_eq!(q_limits(4, &[0.5, 2.0], &[0.0, 0.0]).unwrap(), (0.0, 0.0));
}

#[test]
fn q_approaches_its_limits() {
    let eta = [0.7, 1.3];
    let rho = [0.4, -0.9];
    let other = [1.1, 0.2];
    for l in [2, 3] {
        let (_, l2) = q_limits(l, &eta, &rho).unwrap();
        let big = 1e3f64;
        let q = q_value(l, big, &eta, &rho).unwrap();
        let scaled = q * big.powi(2 * l as i32 - 2);
        assert!(
            rel(scaled, l2 / 2.0) <= 1e-3,
            "L = {l}: {scaled} vs {}",
            l2 / 2.0
        );
    }
    // For L ≥ 3 and small α, Q is proportional to the weighted ℓ1 term.
    for l in [3, 4] {
        let small = 1e-5f64;
        let ratio =
            q_value(l, small, &eta, &rho).unwrap() / q_value(l, small, &eta, &other).unwrap();
        let want = q_limits(l, &eta, &rho).unwrap().0 / q_limits(l, &eta, &other).unwrap().0;
        assert!(rel(ratio, want) <= 1e-2, "L = {l}: {ratio} vs {want}");
    }
}
