mod common;

use common::*;
use proptest::prelude::*;
use quadrom_core::pod::*;
use quadrom_core::synthetic::{generate_synthetic, SyntheticKind, SyntheticSpec};
use quadrom_core::DenseMatrix;
use rand::Rng;

fn tiny_set() -> SnapshotSet {
    let points = DenseMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0]]).unwrap();
    let params = DenseMatrix::from_rows(&[[0.5]]).unwrap();
    let fields = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0, 4.0]]).unwrap();
    SnapshotSet::new(points, params, fields, 2).unwrap()
}

#[test]
fn snapshot_matrix_layout() {
    let set = tiny_set();
    let s = assemble_snapshot_matrix(&set).unwrap();
    assert_eq!(s.shape(), (4, 1));
    assert_eq!(s.column(0), vec![1.0, 2.0, 3.0, 4.0]);
    assert_eq!(s.column(0), set.snapshot(0));
}

#[test]
fn snapshot_set_rejects_bad_shapes() {
    let points = DenseMatrix::zeros(3, 2);
    let dup = DenseMatrix::from_rows(&[[1.0], [1.0]]).unwrap();
    assert!(SnapshotSet::new(points.clone(), dup, DenseMatrix::zeros(2, 6), 2).is_err());
    let params = DenseMatrix::from_rows(&[[1.0], [2.0]]).unwrap();
    assert!(SnapshotSet::new(points.clone(), params.clone(), DenseMatrix::zeros(2, 5), 2).is_err());
    assert!(SnapshotSet::new(points, params, DenseMatrix::zeros(1, 6), 2).is_err());
}

#[test]
fn orthogonal_columns_give_their_norms() {
    let s = DenseMatrix::from_columns(&[
        vec![0.0, 2.0, 0.0, 0.0],
        vec![3.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ])
    .unwrap();
    let basis = compute_pod(&s, 2).unwrap();
    assert!((basis.singular_values()[0] - 3.0).abs() < 1e-14);
    assert!((basis.singular_values()[1] - 2.0).abs() < 1e-14);
    assert!(compute_pod(&s, 0).is_err());
    assert!(compute_pod(&s, 4).is_err());
}

#[test]
fn full_rank_reconstruction_is_exact() {
    let s = random_matrix(30, 6, 11);
    let basis = compute_pod(&s, 6).unwrap();
    for j in 0..6 {
        let u = s.column(j);
        let rec = basis.reconstruct(&basis.project(&u).unwrap()).unwrap();
        assert!(diff_norm(&u, &rec) <= 1e-10 * norm(&u));
        let tau = exact_correction(&u, &rec).unwrap();
        assert!(norm(&tau) <= 1e-10 * norm(&u));
    }
}

#[test]
fn retained_energy_matches_gram_eigenvalues() {
    let mut spec = SyntheticSpec::new(SyntheticKind::GenericNonlinear, 12, 10, 6, 3, 20);
    spec.seed = 4;
    let set = generate_synthetic(&spec).unwrap();
    let basis = PodBasis::from_snapshots(&set, 3).unwrap();
    let s = assemble_snapshot_matrix(&set).unwrap();
    let eig = symmetric_eigenvalues(&gram(&s));
    let total: f64 = eig.iter().map(|l| l.max(0.0)).sum();
    let oracle = eig[..3].iter().sum::<f64>() / total;
    assert!((basis.retained_energy() - oracle).abs() <= 1e-8);
}

#[test]
fn projection_examples() {
    let s = random_matrix(20, 5, 3);
    let basis = compute_pod(&s, 3).unwrap();
    let phi1 = basis.modes().column(0);
    let phi2 = basis.modes().column(1);
    let a = basis.project(&phi1).unwrap();
    assert!((a[0] - 1.0).abs() < 1e-12 && a[1].abs() < 1e-12 && a[2].abs() < 1e-12);
    assert_eq!(basis.project(&[0.0; 20]).unwrap(), vec![0.0; 3]);
    let u: Vec<f64> = phi1.iter().zip(&phi2).map(|(x, y)| 2.0 * x - 3.0 * y).collect();
    let a = basis.project(&u).unwrap();
    assert!((a[0] - 2.0).abs() < 1e-12 && (a[1] + 3.0).abs() < 1e-12 && a[2].abs() < 1e-12);
    assert_eq!(basis.reconstruct(&[1.0, 0.0, 0.0]).unwrap(), phi1);
    let b = [0.3, -1.2, 2.0];
    let back = basis.project(&basis.reconstruct(&b).unwrap()).unwrap();
    assert!(diff_norm(&b, &back) < 1e-12);
    assert!(basis.project(&[0.0; 3]).is_err());
    assert!(basis.reconstruct(&[0.0; 2]).is_err());
    assert!(exact_correction(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn projection_is_optimal_in_span() {
    let s = random_matrix(25, 8, 21);
    let basis = compute_pod(&s, 3).unwrap();
    let mut r = rng(99);
    for j in 0..8 {
        let u = s.column(j);
        let a = basis.project(&u).unwrap();
        let best = diff_norm(&u, &basis.reconstruct(&a).unwrap());
        for _ in 0..50 {
            let c: Vec<f64> = a.iter().map(|x| x + r.gen_range(-1.0..1.0)).collect();
            let v = basis.reconstruct(&c).unwrap();
            assert!(best <= diff_norm(&u, &v));
        }
    }
}

#[test]
fn corrections_are_orthogonal_to_modes() {
    let s = random_matrix(40, 10, 5);
    let basis = compute_pod(&s, 4).unwrap();
    for j in 0..10 {
        let u = s.column(j);
        let ut = basis.reconstruct(&basis.project(&u).unwrap()).unwrap();
        let tau = exact_correction(&u, &ut).unwrap();
        let proj = basis.project(&tau).unwrap();
        assert!(norm(&proj) <= 1e-10);
    }
}

#[test]
fn kernel_values() {
    assert_eq!(kernel_eval(KernelKind::Linear, 2.5).unwrap(), 2.5);
    assert_eq!(kernel_eval(KernelKind::ThinPlateSpline, 0.0).unwrap(), 0.0);
    assert_eq!(kernel_eval(KernelKind::ThinPlateSpline, 1.0).unwrap(), 0.0);
    let d: f64 = 2.0;
    assert!((kernel_eval(KernelKind::ThinPlateSpline, d).unwrap() - d * d * d.ln()).abs() < 1e-15);
    assert!(kernel_eval(KernelKind::Linear, -1.0).is_err());
}

#[test]
fn rbf_single_center_and_zero_weights() {
    let c = DenseMatrix::from_rows(&[[0.3]]).unwrap();
    let v = DenseMatrix::from_rows(&[[1.5, -2.0]]).unwrap();
    for kind in [KernelKind::Linear, KernelKind::ThinPlateSpline] {
        let f = rbf_fit(&c, &v, kind).unwrap();
        assert_eq!(rbf_eval(&f, &[0.3]).unwrap(), vec![1.5, -2.0]);
    }
    let centers = DenseMatrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
    let zero = RbfInterpolant::from_parts(KernelKind::Linear, centers, DenseMatrix::zeros(3, 2)).unwrap();
    assert_eq!(rbf_eval(&zero, &[0.7]).unwrap(), vec![0.0, 0.0]);
    assert!(rbf_eval(&zero, &[0.7, 1.0]).is_err());
}

#[test]
fn rbf_rejects_duplicates() {
    let c = DenseMatrix::from_rows(&[[0.3], [0.3]]).unwrap();
    assert!(rbf_fit(&c, &DenseMatrix::zeros(2, 1), KernelKind::Linear).is_err());
    assert!(rbf_fit(&c, &DenseMatrix::zeros(3, 1), KernelKind::Linear).is_err());
}

#[test]
fn rbf_linear_midpoint_by_hand() {
    // K = [[0, 1], [1, 0]] so ω = (1, 0) and a(0.5) = 1·|0.5 − 0| + 0 = 0.5.
    let c = DenseMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
    let v = DenseMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
    let f = rbf_fit(&c, &v, KernelKind::Linear).unwrap();
    let mid = rbf_eval(&f, &[0.5]).unwrap()[0];
    assert!((mid - 0.5).abs() <= 1e-12);
    let brute: f64 = (0..2).map(|i| f.weights()[(i, 0)] * (0.5 - f.centers()[(i, 0)]).abs()).sum();
    assert!((mid - brute).abs() <= 1e-12);
}

/// Centers in [0, 1]^d_mu, values generated from a random expansion.
fn forward_generated(kind: KernelKind, n: usize, d_mu: usize, seed: u64) -> (DenseMatrix, DenseMatrix, DenseMatrix) {
    let mut r = rng(seed);
    let centers = DenseMatrix::from_fn(n, d_mu, |_, _| r.gen_range(0.0..1.0));
    let omega = DenseMatrix::from_fn(n, 3, |_, _| r.gen_range(-1.0..1.0));
    let values = DenseMatrix::from_fn(n, 3, |j, c| {
        (0..n)
            .map(|i| {
                let d: f64 = (0..d_mu)
                    .map(|k| (centers[(j, k)] - centers[(i, k)]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                omega[(i, c)] * kernel_eval(kind, d).unwrap()
            })
            .sum()
    });
    (centers, values, omega)
}

#[test]
fn rbf_recovers_generating_weights() {
    for kind in [KernelKind::Linear, KernelKind::ThinPlateSpline] {
        let (centers, values, omega) = forward_generated(kind, 8, 1, 3);
        let f = rbf_fit(&centers, &values, kind).unwrap();
        let err = frob(&f.weights().sub(&omega).unwrap()) / frob(&omega);
        assert!(err <= 1e-8, "{:?}: {err}", kind);
    }
}

#[test]
fn rbf_interpolates_centers_both_kernels() {
    for kind in [KernelKind::Linear, KernelKind::ThinPlateSpline] {
        for d_mu in [1, 2] {
            let mut r = rng(17 + d_mu as u64);
            let centers = DenseMatrix::from_fn(30, d_mu, |_, _| r.gen_range(0.0..10.0));
            let values = DenseMatrix::from_fn(30, 3, |_, _| r.gen_range(-5.0..5.0));
            let f = rbf_fit(&centers, &values, kind).unwrap();
            for c in 0..3 {
                let col = values.column(c);
                let got: Vec<f64> = (0..30).map(|j| rbf_eval(&f, centers.row(j)).unwrap()[c]).collect();
                assert!(diff_norm(&got, &col) <= 1e-8 * norm(&col), "{:?} d_mu={d_mu} err {}", kind, diff_norm(&got, &col) / norm(&col));
            }
        }
    }
}

#[test]
fn rbf_is_continuous() {
    let (centers, values, _) = forward_generated(KernelKind::ThinPlateSpline, 10, 1, 8);
    let f = rbf_fit(&centers, &values, KernelKind::ThinPlateSpline).unwrap();
    for q in [0.123, 0.456, 0.789] {
        let a = rbf_eval(&f, &[q]).unwrap();
        let b = rbf_eval(&f, &[q + 1e-9]).unwrap();
        assert!(diff_norm(&a, &b) <= 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pod_properties(rows in 10usize..40, cols in 2usize..12, seed in any::<u64>()) {
        let s = random_matrix(rows, cols, seed);
        let max_r = rows.min(cols);
        let svd_all = compute_pod(&s, max_r).unwrap();
        let mut prev: Option<Vec<f64>> = None;
        for r in 1..=max_r {
            let basis = compute_pod(&s, r).unwrap();
            prop_assert!(orthonormality_defect(basis.modes()) <= 1e-10);
            prop_assert!(basis.singular_values().windows(2).all(|w| w[0] >= w[1]));
            let mut total = 0.0;
            let mut errs = Vec::new();
            for j in 0..cols {
                let u = s.column(j);
                let e = diff_norm(&u, &basis.reconstruct(&basis.project(&u).unwrap()).unwrap());
                total += e * e;
                errs.push(e);
            }
            let tail: f64 = svd_all.spectrum()[r..].iter().map(|x| x * x).sum();
            prop_assert!((total - tail).abs() <= 1e-8 * tail.max(1e-12) + 1e-20);
            if let Some(p) = &prev {
                for (a, b) in errs.iter().zip(p) {
                    prop_assert!(*a <= b + 1e-12);
                }
            }
            prev = Some(errs);
        }
    }
}
