use linbias::decomp::*;
use linbias::solvers::Matrix;
use linbias::Architecture;

#[test]
fn dft_small_cases() {
    let f1 = dft_matrix(1);
    assert_eq!((f1.get(0, 0).re, f1.get(0, 0).im), (1.0, 0.0));

    let f2 = dft_matrix(2);
    let h = 1.0 / 2f64.sqrt();
    let want = [[h, h], [h, -h]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((f2.get(i, j).re - want[i][j]).abs() <= 1e-15);
            assert!(f2.get(i, j).im.abs() <= 1e-15);
        }
    }
}

#[test]
fn dft_is_unitary() {
    let f = dft_matrix(4);
    assert!(f.orthonormality_error() <= 1e-12);
    let ffh = f.matmul(&f.adjoint()).unwrap();
    let id = ComplexMatrix::identity(4);
    assert!(ffh.re.sub(&id.re).unwrap().max_abs() <= 1e-12);
    assert!(ffh.im.max_abs() <= 1e-12);
}

#[test]
fn diag_decomposition_is_identity() {
    for (d, l) in [(2, 2), (3, 3)] {
        let dec = diag_decomposition(d, l);
        assert_eq!(dec.m(), d);
        assert_eq!(dec.s.re, Matrix::identity(d));
        assert!(dec
            .us
            .iter()
            .all(|u| u.re == Matrix::identity(d) && u.im.max_abs() == 0.0));
        let arch = Architecture::Diagonal { d, depth: l };
        let xs = vec![vec![1.0; d], (0..d).map(|i| i as f64 - 0.5).collect()];
        let r = verify_decomposition(&arch, &dec, &xs).unwrap();
        assert_eq!(r.max_error, 0.0);
    }
}

#[test]
fn conv_decomposition_two_by_two() {
    let dec = conv_decomposition(2, 2).unwrap();
    let f = dft_matrix(2);
    assert!(dec.s.re.sub(&f.re.scale(2f64.sqrt())).unwrap().max_abs() <= 1e-15);
    let arch = Architecture::Convolutional {
        d: 2,
        filters: vec![2, 2],
    };
    let r = verify_decomposition(&arch, &dec, &[vec![1.0, 2.0]]).unwrap();
    assert!(r.max_error <= 1e-12 && r.max_imag <= 1e-12, "{r:?}");
}

#[test]
fn conv_decomposition_scalar() {
    let dec = conv_decomposition(1, 3).unwrap();
    assert!((dec.s.get(0, 0).re - 1.0).abs() <= 1e-15);
    let arch = Architecture::Convolutional {
        d: 1,
        filters: vec![1, 1, 1],
    };
    assert_eq!(
        verify_decomposition(&arch, &dec, &[vec![2.5]])
            .unwrap()
            .max_error,
        0.0
    );
}

#[test]
fn conv_decomposition_depth_three() {
    let dec = conv_decomposition(3, 3).unwrap();
    let arch = Architecture::Convolutional {
        d: 3,
        filters: vec![3, 3, 3],
    };
    let xs: Vec<Vec<f64>> = (0..20)
        .map(|k| {
            (0..3)
                .map(|i| ((7 * k + 3 * i) as f64 * 0.37).sin() * 2.0)
                .collect()
        })
        .collect();
    let r = verify_decomposition(&arch, &dec, &xs).unwrap();
    assert!(r.passes(), "{r:?}");
}

#[test]
fn conv_decomposition_requires_full_filters() {
    assert!(conv_decomposition_for(3, &[2, 3]).is_err());
    assert!(conv_decomposition_for(3, &[3, 3]).is_ok());
}

#[test]
fn wrong_scale_is_detected() {
    let good = conv_decomposition(2, 2).unwrap();
    let bad = OrthoDecomposition::new(good.s.scale(2.0), good.us.clone()).unwrap();
    let arch = Architecture::Convolutional {
        d: 2,
        filters: vec![2, 2],
    };
    let x = vec![1.0, 2.0];
    let r = verify_decomposition(&arch, &bad, &[x.clone()]).unwrap();
    // Doubling S doubles the reconstruction, so the error equals max |M(x)|.
    let m = arch.build(&x).unwrap();
    let biggest = m.data().iter().fold(0.0f64, |a, b| a.max(b.abs()));
    assert!((r.max_error - biggest).abs() <= 1e-12, "{r:?}");
    assert!(!r.passes());
}

#[test]
fn evenness_examples() {
    assert!(is_even(&[1.0, 2.0, 3.0, 2.0], 0.0));
    assert!(is_even(&[5.0, 1.0, 1.0], 0.0));
    assert!(is_even(&[4.0], 0.0));
    assert!(is_even(&[-1.0, 7.0], 0.0));
    assert!(!is_even(&[1.0, 2.0, 3.0, 4.0], 1e-12));
    assert_eq!(
        project_even(&[1.0, 2.0, 3.0, 4.0]),
        vec![1.0, 3.0, 3.0, 3.0]
    );
}

#[test]
fn dft_of_even_vectors() {
    let c = dft_of_even_is_real_even(&[1.0, 2.0, 3.0, 2.0]);
    assert!(c.holds(), "{c:?}");
    // F x = (8, −2, 0, −2) / 2.
    let want = [4.0, -1.0, 0.0, -1.0];
    for (a, b) in c.real_part.iter().zip(want) {
        assert!((a - b).abs() <= 1e-12);
    }

    let d = 5;
    let c = dft_of_even_is_real_even(&vec![1.0; d]);
    assert!((c.real_part[0] - (d as f64).sqrt()).abs() <= 1e-12);
    assert!(c.real_part[1..].iter().all(|v| v.abs() <= 1e-12));

    let mut e1 = vec![0.0; d];
    e1[0] = 1.0;
    let c = dft_of_even_is_real_even(&e1);
    assert!(c
        .real_part
        .iter()
        .all(|v| (v - 1.0 / (d as f64).sqrt()).abs() <= 1e-12));
    assert!(c.holds());
}

#[test]
fn s_of_conv_decomposition_is_scaled_unitary() {
    for (d, l) in [(2, 2), (4, 3), (5, 4)] {
        let dec = conv_decomposition(d, l).unwrap();
        let c = (d as f64).powf((l as f64 - 1.0) / 2.0);
        let g = dec.s.adjoint().matmul(&dec.s).unwrap();
        let id = Matrix::identity(d).scale(c * c);
        assert!(g.re.sub(&id).unwrap().max_abs() <= 1e-10 * c * c);
        assert!(g.im.max_abs() <= 1e-10 * c * c);
    }
}
