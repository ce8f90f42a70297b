use linbias::solvers::{svd, Matrix};
use linbias::tensor::*;
use linbias::{Architecture, DataTensor, Error, TensorNetwork};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn identity_contracted_off_diagonal_is_zero() {
    let a = DataTensor::from_matrix(&Matrix::identity(2));
    let u = [1.0, 0.0];
    let v = [0.0, 1.0];
    let r = multilinear_mul(&a, &[ModeMap::Vector(&u), ModeMap::Vector(&v)]).unwrap();
    assert_eq!(r.as_scalar(), Some(0.0));
}

#[test]
fn identity_maps_leave_tensor_unchanged() {
    let a = DataTensor::new(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 4.0, -1.0]).unwrap();
    let r = multilinear_mul(&a, &[ModeMap::Identity, ModeMap::Identity]).unwrap();
    assert_eq!(r, a);
}

#[test]
fn all_ones_cube_sums_to_eight() {
    let a = DataTensor::new(vec![2, 2, 2], vec![1.0; 8]).unwrap();
    let one = [1.0, 1.0];
    let r = contract_all(&a, &[one.to_vec(), one.to_vec(), one.to_vec()]).unwrap();
    assert_eq!(r, 8.0);
}

#[test]
fn mismatched_map_names_the_mode() {
    let a = DataTensor::new(vec![2, 3], vec![0.0; 6]).unwrap();
    let v = [1.0, 2.0];
    let err = multilinear_mul(&a, &[ModeMap::Identity, ModeMap::Vector(&v)]).unwrap_err();
    assert!(matches!(
        err,
        Error::ModeMismatch {
            mode: 1,
            expected: 3,
            got: 2
        }
    ));
}

#[test]
fn diag_builder_examples() {
    let m = build_diag_tensor(&[1.0, 2.0], 2).unwrap();
    assert_eq!(m.to_matrix().unwrap(), Matrix::from_diag(&[1.0, 2.0]));

    let m = build_diag_tensor(&[3.0], 3).unwrap();
    assert_eq!(m.shape(), &[1, 1, 1]);
    assert_eq!(m.data(), &[3.0]);

    let m = build_diag_tensor(&[1.0, 2.0], 3).unwrap();
    let mut nz = Vec::new();
    m.for_each_nonzero(|i, v| nz.push((i.to_vec(), v)));
    assert_eq!(nz, vec![(vec![0, 0, 0], 1.0), (vec![1, 1, 1], 2.0)]);
}

#[test]
fn conv_builder_examples() {
    let m = build_conv_tensor(&[1.5, -2.0], &[2, 2]).unwrap();
    assert_eq!(
        m.to_matrix().unwrap().to_rows(),
        vec![vec![1.5, -2.0], vec![-2.0, 1.5]]
    );

    let m = build_conv_tensor(&[5.0], &[1, 1, 1]).unwrap();
    assert_eq!(m.data(), &[5.0]);

    let m = build_conv_tensor(&[1.0, 2.0, 3.0], &[1, 3]).unwrap();
    assert_eq!(m.to_matrix().unwrap().to_rows(), vec![vec![1.0, 2.0, 3.0]]);
}

#[test]
fn conv_builder_rejects_short_last_filter() {
    assert!(build_conv_tensor(&[1.0, 2.0, 3.0], &[3, 2]).is_err());
    assert!(build_conv_tensor(&[1.0, 2.0], &[3, 2]).is_err());
}

#[test]
fn fc_builder_examples() {
    let (a, b) = (0.7, -1.3);
    let m = build_fc_tensor(&[a, b], &[2, 2]).unwrap();
    assert_eq!(
        m.to_matrix().unwrap().to_rows(),
        vec![vec![a, 0.0], vec![b, 0.0], vec![0.0, a], vec![0.0, b]]
    );

    let m = build_fc_tensor(&[a, b], &[2, 1]).unwrap();
    assert_eq!(m.shape(), &[2, 1]);
    assert_eq!(m.data(), &[a, b]);

    let m = build_fc_tensor(&[4.0], &[1, 1, 1]).unwrap();
    assert_eq!(m.shape(), &[1, 1, 1]);
    assert_eq!(m.data(), &[4.0]);
}

#[test]
fn oversized_fc_tensor_is_rejected() {
    let err = build_fc_tensor(&[1.0; 40], &[40, 40, 40]).unwrap_err();
    assert!(matches!(err, Error::TooLarge { .. }));
}

fn forward_cases() -> Vec<(Architecture, Vec<Vec<f64>>, Vec<f64>, f64)> {
    vec![
        (
            Architecture::Diagonal { d: 2, depth: 2 },
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![1.0, 2.0],
            3.0,
        ),
        (
            Architecture::FullyConnected { widths: vec![2, 2] },
            vec![vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0]],
            vec![4.0, 7.0],
            4.0,
        ),
        (
            Architecture::Convolutional {
                d: 2,
                filters: vec![2, 2],
            },
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![9.0, 5.0],
            9.0,
        ),
    ]
}

#[test]
fn forward_examples() {
    for (arch, params, x, want) in forward_cases() {
        let net = TensorNetwork::new(arch.clone(), params).unwrap();
        assert_eq!(net.forward(&x).unwrap(), want, "{arch:?}");
    }
}

#[test]
fn direct_forward_reproduces_examples() {
    for (arch, params, x, want) in forward_cases() {
        assert_eq!(
            direct_forward(&arch, &params, &x).unwrap(),
            want,
            "{arch:?}"
        );
    }
}

#[test]
fn linear_coefficients_examples() {
    let net = TensorNetwork::new(
        Architecture::Diagonal { d: 2, depth: 2 },
        vec![vec![2.0, 3.0], vec![1.0, 1.0]],
    )
    .unwrap();
    assert_eq!(net.linear_coefficients().unwrap(), vec![2.0, 3.0]);

    let w3 = vec![0.4, -0.9];
    let net = TensorNetwork::new(
        Architecture::FullyConnected {
            widths: vec![2, 2, 2],
        },
        vec![
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
            w3.clone(),
        ],
    )
    .unwrap();
    assert_eq!(net.linear_coefficients().unwrap(), w3);
}

#[test]
fn conv_linear_coefficients_are_circular_correlation() {
    // f(x) = Σ_j v2_j Σ_i v1_i x_{(i+j) mod d}, so β_k = Σ_i v1_i v2_{(k−i) mod d}.
    let d = 3;
    let v1 = vec![0.5, -1.0];
    let v2 = vec![2.0, 0.3, -0.7];
    let net = TensorNetwork::new(
        Architecture::Convolutional {
            d,
            filters: vec![2, 3],
        },
        vec![v1.clone(), v2.clone()],
    )
    .unwrap();
    let beta = net.linear_coefficients().unwrap();
    for k in 0..d {
        let want: f64 = (0..2).map(|i| v1[i] * v2[(k + d - i) % d]).sum();
        assert!(
            close(beta[k], want, 1e-14),
            "k = {k}: {} vs {want}",
            beta[k]
        );
    }
}

#[test]
fn singular_residual_examples() {
    let a = DataTensor::from_matrix(&Matrix::from_diag(&[3.0, 1.0]));
    let e1 = vec![1.0, 0.0];
    assert_eq!(
        singular_residual(&a, &[e1.clone(), e1.clone()], 3.0).unwrap(),
        vec![0.0, 0.0]
    );
    let r = singular_residual(&a, &[e1.clone(), e1.clone()], 1.0).unwrap();
    assert!(r.iter().all(|&v| close(v, 2.0, 1e-15)), "{r:?}");

    let mut t = DataTensor::zeros(vec![2, 2, 2]).unwrap();
    t.set(&[0, 0, 0], 2.0);
    let r = singular_residual(&t, &[e1.clone(), e1.clone(), e1.clone()], 2.0).unwrap();
    assert_eq!(r, vec![0.0, 0.0, 0.0]);
}

#[test]
fn singular_residual_rejects_non_unit_vectors() {
    let a = DataTensor::from_matrix(&Matrix::identity(2));
    assert!(singular_residual(&a, &[vec![2.0, 0.0], vec![1.0, 0.0]], 1.0).is_err());
}

#[test]
fn svd_triples_are_singular_tuples() {
    let m = Matrix::from_rows(&[vec![1.0, 2.0, 0.5], vec![-0.3, 0.8, 1.1]]).unwrap();
    let a = DataTensor::from_matrix(&m);
    let sv = svd(&m);
    for j in 0..sv.s.len() {
        let r = singular_residual(&a, &[sv.u.col(j), sv.v.col(j)], sv.s[j]).unwrap();
        assert!(r.iter().all(|&v| v <= 1e-10), "{r:?}");
    }
}
