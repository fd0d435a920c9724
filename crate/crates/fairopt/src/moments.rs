//! Empirical moment tensors and the coefficient structures that make the
//! fairness constraints explicit polynomials in the rule coefficients B.
//!
//! For a dataset with protected attributes Z (n × r) and features Ω (n × p),
//! the (m, q) fairness constraint bounds the ℓ∞ norm of
//!
//! ```text
//! E_n(Z^⊗m (BΩ)^⊗q) − E_n(Z^⊗m) ⊗ E_n((BΩ)^⊗q)
//! ```
//!
//! For d = 1 rules this reduces per multi-index σ ∈ [r]^m to `B·c_σ` (q = 1)
//! and `B Q_σ Bᵀ` (q = 2); [`constraint_residual_generic`] evaluates the full
//! tensor directly from samples and serves as the independent cross-check for
//! those coefficient paths.
//!
//! All accumulations run in dataset order (no pairwise or compensated
//! summation) so that results are bit-reproducible and exactly reproduce the
//! binary-Z redundancy: for Z coded {0,1}, z·z == z in floating point, hence
//! the m ≥ 2 coefficient tensors equal the m = 1 tensor bit for bit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::featmap::DecisionRule;

/// Default cap on dense tensor sizes (entry count).
pub const DEFAULT_TENSOR_BUDGET: usize = 1_000_000;

/// Dense real tensor in row-major multi-index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl MomentTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(Error::Shape(format!(
                "tensor with shape {shape:?} needs {expect} entries, got {}",
                data.len()
            )));
        }
        Ok(MomentTensor { shape, data })
    }

    /// ℓ∞ norm: the largest absolute entry. NaN entries are rejected.
    pub fn linf(&self) -> Result<f64> {
        linf_norm(&self.data)
    }
}

/// ℓ∞ vector norm for a tensor viewed as a flat slice.
pub fn linf_norm(data: &[f64]) -> Result<f64> {
    let mut best = 0.0f64;
    for &v in data {
        if v.is_nan() {
            return Err(Error::Numeric("NaN entry in tensor".into()));
        }
        best = best.max(v.abs());
    }
    Ok(best)
}

/// Number of multi-indices in [r]^m, guarded against overflow.
fn index_count(r: usize, m: usize) -> u128 {
    (r as u128).pow(m as u32)
}

fn check_budget(m: usize, q: usize, entries: u128, budget: usize) -> Result<()> {
    if entries > budget as u128 {
        return Err(Error::LevelLimit {
            m,
            q,
            entries,
            budget,
        });
    }
    Ok(())
}

/// Visit every σ ∈ [r]^m in row-major (lexicographic) order.
fn for_each_multi_index(r: usize, m: usize, mut f: impl FnMut(&[usize])) {
    let mut sigma = vec![0usize; m];
    loop {
        f(&sigma);
        // odometer increment, last position fastest
        let mut k = m;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            sigma[k] += 1;
            if sigma[k] < r {
                break;
            }
            sigma[k] = 0;
            if k == 0 {
                return;
            }
        }
    }
}

fn z_product(z: &DMatrix<f64>, i: usize, sigma: &[usize]) -> f64 {
    let mut v = 1.0;
    for &k in sigma {
        v *= z[(i, k)];
    }
    v
}

/// Empirical Z-power moment: entry at σ is (1/n) Σ_i Π_k Z_i[σ_k].
pub fn z_power_moment(z: &DMatrix<f64>, m: usize, budget: usize) -> Result<MomentTensor> {
    if m == 0 {
        return Err(Error::Parameter("z_power_moment requires m >= 1".into()));
    }
    let (n, r) = (z.nrows(), z.ncols());
    if n == 0 {
        return Err(Error::Shape("z_power_moment needs n >= 1 samples".into()));
    }
    let entries = index_count(r, m);
    check_budget(m, 0, entries, budget)?;
    let mut data = Vec::with_capacity(entries as usize);
    for_each_multi_index(r, m, |sigma| {
        let mut sum = 0.0;
        for i in 0..n {
            sum += z_product(z, i, sigma);
        }
        data.push(sum / n as f64);
    });
    MomentTensor::new(vec![r; m], data)
}

/// Coefficients of the q = 1 constraints: for each σ ∈ [r]^m a p-vector
/// `c_σ = E_n(Π_k Z_{σ_k} · Ω) − E_n(Π_k Z_{σ_k}) · E_n(Ω)`, so that the
/// (m, 1) residual for a d = 1 rule is `max_σ |B · c_σ|`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearCoefTensor {
    pub m: usize,
    pub r: usize,
    pub p: usize,
    /// Row-major over σ ∈ [r]^m.
    pub coefs: Vec<DVector<f64>>,
}

impl LinearCoefTensor {
    /// Signed residual vector (one entry per σ) for a coefficient row b.
    pub fn residuals(&self, b: &DVector<f64>) -> Vec<f64> {
        self.coefs.iter().map(|c| c.dot(b)).collect()
    }

    pub fn max_abs_residual(&self, b: &DVector<f64>) -> f64 {
        self.residuals(b)
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

pub fn linear_coef_tensor(
    omega: &DMatrix<f64>,
    z: &DMatrix<f64>,
    m: usize,
    budget: usize,
) -> Result<LinearCoefTensor> {
    if m == 0 {
        return Err(Error::Parameter("linear_coef_tensor requires m >= 1".into()));
    }
    let (n, r) = (z.nrows(), z.ncols());
    let p = omega.ncols();
    if omega.nrows() != n {
        return Err(Error::Shape(format!(
            "omega has {} rows, z has {}",
            omega.nrows(),
            n
        )));
    }
    let entries = index_count(r, m) * p as u128;
    check_budget(m, 1, entries, budget)?;

    let nf = n as f64;
    let mut mean_omega: DVector<f64> = DVector::zeros(p);
    for j in 0..p {
        let mut sum = 0.0;
        for i in 0..n {
            sum += omega[(i, j)];
        }
        mean_omega[j] = sum / nf;
    }

    let mut coefs = Vec::with_capacity((entries / p as u128) as usize);
    for_each_multi_index(r, m, |sigma| {
        let mut sum_z = 0.0;
        let mut sum_zo: DVector<f64> = DVector::zeros(p);
        for i in 0..n {
            let zp = z_product(z, i, sigma);
            sum_z += zp;
            for j in 0..p {
                sum_zo[j] += zp * omega[(i, j)];
            }
        }
        let mean_z = sum_z / nf;
        let mut c: DVector<f64> = DVector::zeros(p);
        for j in 0..p {
            c[j] = sum_zo[j] / nf - mean_z * mean_omega[j];
        }
        coefs.push(c);
    });
    Ok(LinearCoefTensor { m, r, p, coefs })
}

/// Coefficients of the q = 2 constraints: for each σ ∈ [r]^m a symmetric
/// p × p matrix `Q_σ = sym(E_n(Π_k Z_{σ_k} · ΩΩᵀ) − E_n(Π_k Z_{σ_k}) · E_n(ΩΩᵀ))`,
/// so the (m, 2) residual for a d = 1 rule is `max_σ |B Q_σ Bᵀ|`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadCoefFamily {
    pub m: usize,
    pub r: usize,
    pub p: usize,
    /// Row-major over σ ∈ [r]^m.
    pub mats: Vec<DMatrix<f64>>,
}

impl QuadCoefFamily {
    pub fn residuals(&self, b: &DVector<f64>) -> Vec<f64> {
        self.mats.iter().map(|q| (q * b).dot(b)).collect()
    }

    pub fn max_abs_residual(&self, b: &DVector<f64>) -> f64 {
        self.residuals(b)
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

pub fn quad_coef_family(
    omega: &DMatrix<f64>,
    z: &DMatrix<f64>,
    m: usize,
    budget: usize,
) -> Result<QuadCoefFamily> {
    if m == 0 {
        return Err(Error::Parameter("quad_coef_family requires m >= 1".into()));
    }
    let (n, r) = (z.nrows(), z.ncols());
    let p = omega.ncols();
    if omega.nrows() != n {
        return Err(Error::Shape(format!(
            "omega has {} rows, z has {}",
            omega.nrows(),
            n
        )));
    }
    let entries = index_count(r, m) * (p * p) as u128;
    check_budget(m, 2, entries, budget)?;

    let nf = n as f64;
    let mut mean_oo: DMatrix<f64> = DMatrix::zeros(p, p);
    for i in 0..n {
        for j in 0..p {
            for k in 0..p {
                mean_oo[(j, k)] += omega[(i, j)] * omega[(i, k)];
            }
        }
    }
    mean_oo /= nf;

    let mut mats = Vec::new();
    for_each_multi_index(r, m, |sigma| {
        let mut sum_z = 0.0;
        let mut sum_zoo: DMatrix<f64> = DMatrix::zeros(p, p);
        for i in 0..n {
            let zp = z_product(z, i, sigma);
            sum_z += zp;
            for j in 0..p {
                for k in 0..p {
                    sum_zoo[(j, k)] += zp * omega[(i, j)] * omega[(i, k)];
                }
            }
        }
        let mean_z = sum_z / nf;
        let mut q: DMatrix<f64> = DMatrix::zeros(p, p);
        for j in 0..p {
            for k in 0..p {
                q[(j, k)] = sum_zoo[(j, k)] / nf - mean_z * mean_oo[(j, k)];
            }
        }
        // symmetrize after accumulation
        let qt = q.transpose();
        mats.push((q + qt) * 0.5);
    });
    Ok(QuadCoefFamily { m, r, p, mats })
}

/// The signed joint-minus-product tensor for a general d × p rule matrix,
/// computed directly from samples with no coefficient shortcut. Shape is
/// `[r; m] ++ [d; q]`.
pub fn residual_tensor(
    b: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    z: &DMatrix<f64>,
    m: usize,
    q: usize,
    budget: usize,
) -> Result<MomentTensor> {
    if m == 0 || q == 0 {
        return Err(Error::Parameter("residual tensor requires m, q >= 1".into()));
    }
    let (n, r) = (z.nrows(), z.ncols());
    let d = b.nrows();
    let p = omega.ncols();
    if b.ncols() != p {
        return Err(Error::Shape(format!(
            "rule matrix has {} columns, omega has {}",
            b.ncols(),
            p
        )));
    }
    if omega.nrows() != n {
        return Err(Error::Shape(format!(
            "omega has {} rows, z has {}",
            omega.nrows(),
            n
        )));
    }
    let n_sigma = index_count(r, m);
    let n_tau = index_count(d, q);
    check_budget(m, q, n_sigma * n_tau, budget)?;
    let (n_sigma, n_tau) = (n_sigma as usize, n_tau as usize);

    let nf = n as f64;
    let mut joint = vec![0.0f64; n_sigma * n_tau];
    let mut zm = vec![0.0f64; n_sigma];
    let mut vq = vec![0.0f64; n_tau];
    let mut zprods = vec![0.0f64; n_sigma];
    let mut vprods = vec![0.0f64; n_tau];
    let mut v: DVector<f64> = DVector::zeros(d);

    for i in 0..n {
        // v_i = B Ω_i
        for a in 0..d {
            let mut s = 0.0;
            for j in 0..p {
                s += b[(a, j)] * omega[(i, j)];
            }
            v[a] = s;
        }
        let mut si = 0usize;
        for_each_multi_index(r, m, |sigma| {
            zprods[si] = z_product(z, i, sigma);
            si += 1;
        });
        let mut ti = 0usize;
        for_each_multi_index(d, q, |tau| {
            let mut prod = 1.0;
            for &a in tau {
                prod *= v[a];
            }
            vprods[ti] = prod;
            ti += 1;
        });
        for (s, &zp) in zprods.iter().enumerate() {
            zm[s] += zp;
            let base = s * n_tau;
            for (t, &vp) in vprods.iter().enumerate() {
                joint[base + t] += zp * vp;
            }
        }
        for (t, &vp) in vprods.iter().enumerate() {
            vq[t] += vp;
        }
    }

    let mut data = vec![0.0f64; n_sigma * n_tau];
    for s in 0..n_sigma {
        for t in 0..n_tau {
            data[s * n_tau + t] = joint[s * n_tau + t] / nf - (zm[s] / nf) * (vq[t] / nf);
        }
    }
    let mut shape = vec![r; m];
    shape.extend(std::iter::repeat(d).take(q));
    MomentTensor::new(shape, data)
}

/// ℓ∞ norm of the full joint-minus-product tensor for a decision rule on a
/// dataset. This is the generic evaluator used as the oracle for the
/// coefficient-tensor constraint paths.
pub fn constraint_residual_generic(
    rule: &DecisionRule,
    ds: &Dataset,
    m: usize,
    q: usize,
    budget: usize,
) -> Result<f64> {
    let omega = rule.feature_map.eval_dataset(ds)?;
    residual_tensor(&rule.b, &omega, &ds.z, m, q, budget)?.linf()
}

/// Same evaluator on raw matrices.
pub fn residual_linf(
    b: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    z: &DMatrix<f64>,
    m: usize,
    q: usize,
    budget: usize,
) -> Result<f64> {
    residual_tensor(b, omega, z, m, q, budget)?.linf()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, vals: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, vals)
    }

    #[test]
    fn z_power_hand_average() {
        // rows (1,0), (0,1)
        let z = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let t1 = z_power_moment(&z, 1, DEFAULT_TENSOR_BUDGET).unwrap();
        assert_eq!(t1.data, vec![0.5, 0.5]);
        let t2 = z_power_moment(&z, 2, DEFAULT_TENSOR_BUDGET).unwrap();
        // 2x2: diag 0.5, off-diag 0
        assert_eq!(t2.shape, vec![2, 2]);
        assert_eq!(t2.data, vec![0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn z_power_constant_case() {
        let c = 0.7;
        let z = DMatrix::from_element(5, 1, c);
        for m in 1..=4 {
            let t = z_power_moment(&z, m, DEFAULT_TENSOR_BUDGET).unwrap();
            assert_eq!(t.data.len(), 1);
            assert!((t.data[0] - c.powi(m as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn z_power_level_limit() {
        let z = DMatrix::from_element(4, 10, 1.0);
        let err = z_power_moment(&z, 8, DEFAULT_TENSOR_BUDGET).unwrap_err();
        assert!(matches!(err, Error::LevelLimit { .. }));
    }

    #[test]
    fn linear_coef_hand_computation() {
        // scalar z = [0,1], omega = [1,-1]: c = E(zw) - E(z)E(w) = -0.5 - 0.5*0
        let z = mat(2, 1, &[0.0, 1.0]);
        let omega = mat(2, 1, &[1.0, -1.0]);
        let t = linear_coef_tensor(&omega, &z, 1, DEFAULT_TENSOR_BUDGET).unwrap();
        assert_eq!(t.coefs.len(), 1);
        assert!((t.coefs[0][0] - (-0.5)).abs() < 1e-15);
    }

    #[test]
    fn linear_coef_constant_z_is_zero() {
        let z = DMatrix::from_element(4, 1, 0.3);
        let omega = mat(4, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, 1.0, 0.0, -2.0]);
        let t = linear_coef_tensor(&omega, &z, 1, DEFAULT_TENSOR_BUDGET).unwrap();
        for c in &t.coefs {
            for v in c.iter() {
                assert!(v.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn binary_z_higher_orders_equal_exactly() {
        let z = mat(6, 1, &[0.0, 1.0, 1.0, 0.0, 1.0, 0.0]);
        let omega = mat(
            6,
            2,
            &[1.0, 0.3, -0.2, 1.5, 0.7, -1.1, 2.0, 0.0, -0.5, 0.9, 1.2, 0.4],
        );
        let t1 = linear_coef_tensor(&omega, &z, 1, DEFAULT_TENSOR_BUDGET).unwrap();
        let t2 = linear_coef_tensor(&omega, &z, 2, DEFAULT_TENSOR_BUDGET).unwrap();
        let t3 = linear_coef_tensor(&omega, &z, 3, DEFAULT_TENSOR_BUDGET).unwrap();
        assert_eq!(t1.coefs[0], t2.coefs[0]);
        assert_eq!(t1.coefs[0], t3.coefs[0]);
        let q1 = quad_coef_family(&omega, &z, 1, DEFAULT_TENSOR_BUDGET).unwrap();
        let q2 = quad_coef_family(&omega, &z, 2, DEFAULT_TENSOR_BUDGET).unwrap();
        assert_eq!(q1.mats[0], q2.mats[0]);
    }

    #[test]
    fn quad_coef_hand_computation() {
        // z = [0,1], omega rows (1,0), (0,1):
        // Q = E(z·ΩΩᵀ) − E(z)E(ΩΩᵀ) = diag(0, 0.5) − 0.5·diag(0.5, 0.5)
        let z = mat(2, 1, &[0.0, 1.0]);
        let omega = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let fam = quad_coef_family(&omega, &z, 1, DEFAULT_TENSOR_BUDGET).unwrap();
        let q = &fam.mats[0];
        assert!((q[(0, 0)] - (-0.25)).abs() < 1e-15);
        assert!((q[(1, 1)] - 0.25).abs() < 1e-15);
        assert!(q[(0, 1)].abs() < 1e-15);
        assert!(q[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn quad_constant_z_is_zero() {
        let z = DMatrix::from_element(5, 1, 0.42);
        let omega = mat(5, 2, &[1.0, 0.3, -0.2, 1.5, 0.7, -1.1, 2.0, 0.0, -0.5, 0.9]);
        let fam = quad_coef_family(&omega, &z, 1, DEFAULT_TENSOR_BUDGET).unwrap();
        for q in &fam.mats {
            for v in q.iter() {
                assert!(v.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn quad_is_exactly_symmetric() {
        let z = mat(5, 2, &[0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.5]);
        let omega = mat(
            5,
            3,
            &[
                1.0, 0.3, -0.2, 1.5, 0.7, -1.1, 2.0, 0.0, -0.5, 0.9, 1.2, 0.4, 0.1, -0.6, 0.8,
            ],
        );
        let fam = quad_coef_family(&omega, &z, 2, DEFAULT_TENSOR_BUDGET).unwrap();
        for q in &fam.mats {
            assert_eq!(*q, q.transpose());
        }
    }

    #[test]
    fn residual_zero_rule_is_zero() {
        let z = mat(3, 1, &[0.0, 1.0, 1.0]);
        let omega = mat(3, 2, &[1.0, 0.5, -0.3, 0.2, 0.8, -1.0]);
        let b = DMatrix::zeros(1, 2);
        for m in 1..=2 {
            for q in 1..=3 {
                let v = residual_linf(&b, &omega, &z, m, q, DEFAULT_TENSOR_BUDGET).unwrap();
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn residual_matches_linear_coef_path() {
        let z = mat(4, 2, &[0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.5]);
        let omega = mat(4, 2, &[1.0, 0.5, -0.3, 0.2, 0.8, -1.0, 0.1, 0.9]);
        let b_vec = DVector::from_vec(vec![0.7, -1.3]);
        let b = DMatrix::from_row_slice(1, 2, b_vec.as_slice());
        for m in 1..=3 {
            let coef = linear_coef_tensor(&omega, &z, m, DEFAULT_TENSOR_BUDGET).unwrap();
            let via_coef = coef.max_abs_residual(&b_vec);
            let generic = residual_linf(&b, &omega, &z, m, 1, DEFAULT_TENSOR_BUDGET).unwrap();
            assert!((via_coef - generic).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_matches_quad_coef_path() {
        let z = mat(4, 1, &[0.0, 1.0, 1.0, 0.3]);
        let omega = mat(4, 2, &[1.0, 0.5, -0.3, 0.2, 0.8, -1.0, 0.1, 0.9]);
        let b_vec = DVector::from_vec(vec![0.7, -1.3]);
        let b = DMatrix::from_row_slice(1, 2, b_vec.as_slice());
        for m in 1..=2 {
            let fam = quad_coef_family(&omega, &z, m, DEFAULT_TENSOR_BUDGET).unwrap();
            let via_coef = fam.max_abs_residual(&b_vec);
            let generic = residual_linf(&b, &omega, &z, m, 2, DEFAULT_TENSOR_BUDGET).unwrap();
            assert!((via_coef - generic).abs() < 1e-12);
        }
    }

    #[test]
    fn degree_q_homogeneity() {
        let z = mat(4, 1, &[0.0, 1.0, 1.0, 0.3]);
        let omega = mat(4, 2, &[1.0, 0.5, -0.3, 0.2, 0.8, -1.0, 0.1, 0.9]);
        let b = DMatrix::from_row_slice(1, 2, &[0.4, -0.9]);
        let c = -2.7;
        for q in 1..=3 {
            let base = residual_linf(&b, &omega, &z, 1, q, DEFAULT_TENSOR_BUDGET).unwrap();
            let scaled =
                residual_linf(&(&b * c), &omega, &z, 1, q, DEFAULT_TENSOR_BUDGET).unwrap();
            let expect = c.abs().powi(q as i32) * base;
            assert!((scaled - expect).abs() <= 1e-10 * expect.max(1.0));
        }
    }

    #[test]
    fn linf_rejects_nan() {
        assert!(linf_norm(&[0.0, f64::NAN]).is_err());
        assert_eq!(linf_norm(&[]).unwrap(), 0.0);
        assert_eq!(linf_norm(&[-3.0, 2.0]).unwrap(), 3.0);
        assert_eq!(linf_norm(&[-0.25, 0.25, 0.0, 0.0]).unwrap(), 0.25);
    }
}
