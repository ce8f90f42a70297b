use linbias::solvers::*;
use linbias::Error;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn svd_of_diagonal() {
    let sv = svd(&Matrix::from_diag(&[3.0, 1.0]));
    assert!(max_abs_diff(&sv.s, &[3.0, 1.0]) <= 1e-15);
}

#[test]
fn svd_of_swap_has_tied_values() {
    let sv = svd(&Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
    assert!(max_abs_diff(&sv.s, &[1.0, 1.0]) <= 1e-15);
    assert!(
        sv.reconstruct()
            .sub(&Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap())
            .unwrap()
            .max_abs()
            <= 1e-14
    );
}

#[test]
fn svd_of_rank_one_is_compact() {
    let u = [1.0, -2.0, 0.5];
    let v = [3.0, 4.0];
    let rows: Vec<Vec<f64>> = u
        .iter()
        .map(|a| v.iter().map(|b| a * b).collect())
        .collect();
    let sv = svd(&Matrix::from_rows(&rows).unwrap());
    assert_eq!(sv.s.len(), 1);
    assert!((sv.s[0] - norm(&u) * norm(&v)).abs() <= 1e-13);
}

#[test]
fn svd_sign_convention() {
    let m = Matrix::from_rows(&[vec![-2.0, 0.1], vec![0.3, -1.0], vec![0.0, 0.5]]).unwrap();
    let sv = svd(&m);
    for j in 0..sv.s.len() {
        let c = sv.u.col(j);
        let big = c.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let first = c.iter().find(|v| v.abs() == big).unwrap();
        assert!(*first > 0.0, "column {j}: {c:?}");
    }
}

#[test]
fn solve_identity_systems() {
    let b = vec![1.0, -2.0, 3.0];
    assert_eq!(solve_spd(&Matrix::identity(3), &b).unwrap(), b);
    assert_eq!(solve(&Matrix::identity(3), &b).unwrap(), b);
}

#[test]
fn hilbert_inverse_matches_rationals() {
    let h = Matrix::from_rows(&[
        vec![1.0, 1.0 / 2.0, 1.0 / 3.0],
        vec![1.0 / 2.0, 1.0 / 3.0, 1.0 / 4.0],
        vec![1.0 / 3.0, 1.0 / 4.0, 1.0 / 5.0],
    ])
    .unwrap();
    let inv = [
        [9.0, -36.0, 30.0],
        [-36.0, 192.0, -180.0],
        [30.0, -180.0, 180.0],
    ];
    for k in 0..3 {
        let mut e = vec![0.0; 3];
        e[k] = 1.0;
        let col: Vec<f64> = (0..3).map(|i| inv[i][k]).collect();
        assert!(max_abs_diff(&solve_spd(&h, &e).unwrap(), &col) <= 1e-10);
        assert!(max_abs_diff(&solve(&h, &e).unwrap(), &col) <= 1e-10);
    }
}

#[test]
fn solve_spd_rejects_indefinite() {
    let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
    assert!(matches!(
        solve_spd(&a, &[1.0, 1.0]),
        Err(Error::Singular(_))
    ));
}

#[test]
fn pinv_rows_gives_min_norm_solution() {
    let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
    let p = pinv_rows(&x).unwrap();
    assert!(max_abs_diff(&p.matvec(&[1.0]).unwrap(), &[0.2, 0.4]) <= 1e-15);
    let rank_def = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
    assert!(pinv_rows(&rank_def).is_err());
}

#[test]
fn sym_eig_of_diagonal() {
    let (q, l) = sym_eig(&Matrix::from_diag(&[2.0, 5.0, -1.0])).unwrap();
    assert_eq!(l, vec![5.0, 2.0, -1.0]);
    assert!(
        q.transpose()
            .matmul(&q)
            .unwrap()
            .sub(&Matrix::identity(3))
            .unwrap()
            .max_abs()
            <= 1e-15
    );
}

#[test]
fn sym_eig_reconstructs() {
    let a = Matrix::from_rows(&[
        vec![2.0, 1.0, 0.0],
        vec![1.0, 3.0, -1.0],
        vec![0.0, -1.0, 1.0],
    ])
    .unwrap();
    let (q, l) = sym_eig(&a).unwrap();
    let back = q
        .matmul(&Matrix::from_diag(&l))
        .unwrap()
        .matmul(&q.transpose())
        .unwrap();
    assert!(back.sub(&a).unwrap().max_abs() <= 1e-13);
}

#[test]
fn bracket_examples() {
    assert!((bracket_and_solve(|t| t, 7.0).unwrap() - 7.0).abs() <= 1e-10);
    assert!((bracket_and_solve(f64::sinh, 1.0).unwrap() - 0.881373587019543).abs() <= 1e-10);
    // g of the m = 1 two-layer preset: s = 1, a = 1, b = 0.
    let g = |nu: f64| 0.5 * (2.0 * nu).sinh();
    assert!((bracket_and_solve(g, 1.0).unwrap() - 2f64.asinh() / 2.0).abs() <= 1e-10);
}

#[test]
fn bracket_gives_up_on_bounded_functions() {
    assert!(matches!(
        bracket_and_solve(f64::atan, 2.0),
        Err(Error::NoConvergence { .. })
    ));
}

#[test]
fn simpson_integrates_smooth_functions() {
    let v = integrate(f64::cos, 0.0, 1.0, 1e-12);
    assert!((v - 1f64.sin()).abs() <= 1e-11);
}
