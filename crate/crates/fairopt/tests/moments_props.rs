//! Property tests for the moment-tensor machinery: homogeneity, linearity,
//! coefficient-path/generic-evaluator agreement, permutation invariance, and
//! the exact binary-Z redundancy.

mod common;

use fairopt::data::Dataset;
use fairopt::metrics::{ks_binary, ks_categorical, ks_joint_product};
use fairopt::moments::{
    linear_coef_tensor, quad_coef_family, residual_linf, residual_tensor, z_power_moment,
    DEFAULT_TENSOR_BUDGET,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn small_fixture() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    // omega n×p, z n×r with n in 4..20, p in 1..4, r in 1..3
    (4usize..20, 1usize..4, 1usize..3).prop_flat_map(|(n, p, r)| {
        let omega = proptest::collection::vec(-2.0f64..2.0, n * p);
        let z = proptest::collection::vec(-1.0f64..1.0, n * r);
        (omega, z).prop_map(move |(ov, zv)| {
            (
                DMatrix::from_vec(n, p, ov),
                DMatrix::from_vec(n, r, zv),
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn degree_q_homogeneity((omega, z) in small_fixture(),
                            coefs in proptest::collection::vec(-1.5f64..1.5, 4),
                            scale in -3.0f64..3.0) {
        let p = omega.ncols();
        let b = DMatrix::from_fn(1, p, |_, j| coefs[j % coefs.len()]);
        for m in 1..=2usize {
            for q in 1..=3usize {
                let base = residual_linf(&b, &omega, &z, m, q, DEFAULT_TENSOR_BUDGET).unwrap();
                let scaled = residual_linf(&(&b * scale), &omega, &z, m, q, DEFAULT_TENSOR_BUDGET).unwrap();
                let expect = scale.abs().powi(q as i32) * base;
                prop_assert!((scaled - expect).abs() <= 1e-10 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn q1_residual_tensor_is_linear((omega, z) in small_fixture(),
                                    c1 in proptest::collection::vec(-1.0f64..1.0, 4),
                                    c2 in proptest::collection::vec(-1.0f64..1.0, 4),
                                    a in -2.0f64..2.0, bb in -2.0f64..2.0) {
        let p = omega.ncols();
        let b1 = DMatrix::from_fn(1, p, |_, j| c1[j % c1.len()]);
        let b2 = DMatrix::from_fn(1, p, |_, j| c2[j % c2.len()]);
        let combo = &b1 * a + &b2 * bb;
        for m in 1..=2usize {
            let t1 = residual_tensor(&b1, &omega, &z, m, 1, DEFAULT_TENSOR_BUDGET).unwrap();
            let t2 = residual_tensor(&b2, &omega, &z, m, 1, DEFAULT_TENSOR_BUDGET).unwrap();
            let tc = residual_tensor(&combo, &omega, &z, m, 1, DEFAULT_TENSOR_BUDGET).unwrap();
            for k in 0..tc.data.len() {
                let expect = a * t1.data[k] + bb * t2.data[k];
                prop_assert!((tc.data[k] - expect).abs() <= 1e-10 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn coefficient_paths_match_generic((omega, z) in small_fixture(),
                                       coefs in proptest::collection::vec(-1.0f64..1.0, 4)) {
        let p = omega.ncols();
        let b = DMatrix::from_fn(1, p, |_, j| coefs[j % coefs.len()]);
        let bv = DVector::from_fn(p, |j, _| b[(0, j)]);
        for m in 1..=2usize {
            let lin = linear_coef_tensor(&omega, &z, m, DEFAULT_TENSOR_BUDGET).unwrap();
            let generic = residual_linf(&b, &omega, &z, m, 1, DEFAULT_TENSOR_BUDGET).unwrap();
            prop_assert!((lin.max_abs_residual(&bv) - generic).abs() <= 1e-10);
            let quad = quad_coef_family(&omega, &z, m, DEFAULT_TENSOR_BUDGET).unwrap();
            let generic2 = residual_linf(&b, &omega, &z, m, 2, DEFAULT_TENSOR_BUDGET).unwrap();
            prop_assert!((quad.max_abs_residual(&bv) - generic2).abs() <= 1e-10);
        }
    }

    #[test]
    fn tensors_are_row_permutation_invariant((omega, z) in small_fixture(), seed in 0u64..1000) {
        let n = omega.nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        // deterministic Fisher-Yates from the seed
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (state >> 33) as usize % (i + 1);
            perm.swap(i, j);
        }
        let omega_p = omega.select_rows(&perm);
        let z_p = z.select_rows(&perm);
        for m in 1..=2usize {
            let zp = z_power_moment(&z, m, DEFAULT_TENSOR_BUDGET).unwrap();
            let zp_p = z_power_moment(&z_p, m, DEFAULT_TENSOR_BUDGET).unwrap();
            for k in 0..zp.data.len() {
                prop_assert!((zp.data[k] - zp_p.data[k]).abs() <= 1e-12);
            }
            let lin = linear_coef_tensor(&omega, &z, m, DEFAULT_TENSOR_BUDGET).unwrap();
            let lin_p = linear_coef_tensor(&omega_p, &z_p, m, DEFAULT_TENSOR_BUDGET).unwrap();
            for (a, b) in lin.coefs.iter().zip(&lin_p.coefs) {
                prop_assert!((a - b).amax() <= 1e-12);
            }
        }
    }

    #[test]
    fn ks_variants_invariant_to_monotone_transforms(
        scores in proptest::collection::vec(-5.0f64..5.0, 8..40),
        flags in proptest::collection::vec(0usize..2, 8..40),
    ) {
        let n = scores.len().min(flags.len());
        let scores = &scores[..n];
        let z: Vec<f64> = flags[..n].iter().map(|&f| f as f64).collect();
        let both = z.iter().any(|&v| v == 0.0) && z.iter().any(|&v| v == 1.0);
        prop_assume!(both);
        // strictly increasing transform: affine + exp mix
        let t: Vec<f64> = scores.iter().map(|&s| 0.3 * s + (0.5 * s).exp()).collect();
        let k0 = ks_binary(scores, &z).unwrap();
        let k1 = ks_binary(&t, &z).unwrap();
        prop_assert_eq!(k0, k1);
        prop_assert!((0.0..=1.0).contains(&k0));
        let c0 = ks_categorical(scores, &z).unwrap();
        let c1 = ks_categorical(&t, &z).unwrap();
        prop_assert_eq!(c0, c1);
        let j0 = ks_joint_product(scores, &z).unwrap();
        let j1 = ks_joint_product(&t, &z).unwrap();
        prop_assert_eq!(j0, j1);
        prop_assert!((0.0..=1.0).contains(&j0));
    }
}

#[test]
fn binary_z_redundancy_is_exact_over_many_datasets() {
    // z·z == z bitwise for {0,1} data, so the higher-order coefficient
    // tensors coincide exactly with m = 1
    let mut state = 0x1234_5678_u64;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..50 {
        let n = 10 + (next() * 50.0) as usize;
        let p = 1 + (next() * 3.0) as usize;
        let omega = DMatrix::from_fn(n, p, |_, _| next() * 4.0 - 2.0);
        let z = DMatrix::from_fn(n, 1, |_, _| if next() > 0.5 { 1.0 } else { 0.0 });
        let t1 = linear_coef_tensor(&omega, &z, 1, DEFAULT_TENSOR_BUDGET).unwrap();
        for m in 2..=3 {
            let tm = linear_coef_tensor(&omega, &z, m, DEFAULT_TENSOR_BUDGET).unwrap();
            assert_eq!(t1.coefs[0], tm.coefs[0], "m={m} differs from m=1");
        }
        let q1 = quad_coef_family(&omega, &z, 1, DEFAULT_TENSOR_BUDGET).unwrap();
        for m in 2..=3 {
            let qm = quad_coef_family(&omega, &z, m, DEFAULT_TENSOR_BUDGET).unwrap();
            assert_eq!(q1.mats[0], qm.mats[0], "quad m={m} differs from m=1");
        }
    }
}

#[test]
fn select_rows_keeps_dataset_aligned() {
    let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    let y = DVector::from_vec(vec![1.0, -1.0, 1.0, -1.0]);
    let z = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 1.0, 0.0]);
    let ds = Dataset::from_parts(x, y, z).unwrap();
    let sub = ds.select_rows(&[2, 0]);
    assert_eq!(sub.n(), 2);
    assert_eq!(sub.x[(0, 0)], 5.0);
    assert_eq!(sub.y[1], 1.0);
    assert_eq!(sub.z_raw[0], 1.0);
}
