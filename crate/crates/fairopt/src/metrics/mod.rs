//! Fairness and accuracy metrics plus moment-based independence diagnostics.
//!
//! Empirical CDFs are right-continuous and evaluated at sample points, which
//! is sufficient for exact suprema of step functions; the KS statistics are
//! computed with integer counts so the reported values are exact.

pub mod pmf;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ProtectedKind};
use crate::error::{Error, Result};
use crate::moments::{residual_linf, DEFAULT_TENSOR_BUDGET};

/// Fixed seed for the Monte-Carlo sphere suprema in the mutual
/// characteristic bound.
const DIRECTION_SEED: u64 = 0x4a11_d1ce;
const N_DIRECTIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsMethod {
    Binary,
    Categorical,
    JointProduct,
}

/// Fairness diagnostics for a scored dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FairnessReport {
    /// Kolmogorov-Smirnov fairness value in [0, 1].
    pub ks: f64,
    pub method: KsMethod,
    /// Equalized-odds gap; present when the target is a binary label and the
    /// protected attribute is discrete.
    pub eo: Option<f64>,
    /// Truncated mutual-majorization estimate.
    pub mm_hat: f64,
}

/// Exact two-sample KS distance via integer counts over the pooled sample.
fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut sa: Vec<f64> = a.to_vec();
    let mut sb: Vec<f64> = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (sa.len() as i64, sb.len() as i64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut max_num = 0i64;
    while i < sa.len() || j < sb.len() {
        let v = match (sa.get(i), sb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < sa.len() && sa[i] <= v {
            i += 1;
        }
        while j < sb.len() && sb[j] <= v {
            j += 1;
        }
        let num = (i as i64 * nb - j as i64 * na).abs();
        max_num = max_num.max(num);
    }
    max_num as f64 / (na * nb) as f64
}

fn group_scores(scores: &[f64], groups: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
    if scores.len() != groups.len() {
        return Err(Error::Shape(format!(
            "scores and groups have different lengths ({} vs {})",
            scores.len(),
            groups.len()
        )));
    }
    let mut keys: Vec<f64> = Vec::new();
    for &g in groups {
        if !keys.contains(&g) {
            keys.push(g);
        }
    }
    keys.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(keys
        .into_iter()
        .map(|k| {
            let vals = scores
                .iter()
                .zip(groups)
                .filter(|(_, &g)| g == k)
                .map(|(&s, _)| s)
                .collect();
            (k, vals)
        })
        .collect())
}

/// Disparate impact for a binary protected attribute: the exact sup-distance
/// between the score CDFs conditional on the two groups.
pub fn ks_binary(scores: &[f64], z: &[f64]) -> Result<f64> {
    let groups = group_scores(scores, z)?;
    if groups.len() != 2 {
        return Err(Error::Group(format!(
            "binary KS needs exactly 2 groups, found {}",
            groups.len()
        )));
    }
    Ok(ks_two_sample(&groups[0].1, &groups[1].1))
}

/// Max over unordered category pairs of the two-sample KS distance.
pub fn ks_categorical(scores: &[f64], z: &[f64]) -> Result<f64> {
    let groups = group_scores(scores, z)?;
    if groups.len() < 2 {
        return Err(Error::Group(
            "categorical KS needs at least 2 categories".into(),
        ));
    }
    let mut best = 0.0f64;
    for i in 0..groups.len() {
        for j in (i + 1)..groups.len() {
            best = best.max(ks_two_sample(&groups[i].1, &groups[j].1));
        }
    }
    Ok(best)
}

/// Sup over the sample grid of |F̂_{Z,S}(s,t) − F̂_Z(s)·F̂_S(t)|, the KS
/// distance between the joint and product empirical distributions. Exact via
/// integer counts; O(u_z · u_s) over the unique values.
pub fn ks_joint_product(scores: &[f64], z: &[f64]) -> Result<f64> {
    let n = scores.len();
    if z.len() != n {
        return Err(Error::Shape("scores and z have different lengths".into()));
    }
    if n < 2 {
        return Err(Error::Group("joint-product KS needs n >= 2".into()));
    }
    let rank_of = |vals: &[f64]| -> (Vec<usize>, usize) {
        let mut sorted: Vec<f64> = vals.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted.dedup();
        let ranks = vals
            .iter()
            .map(|v| sorted.partition_point(|x| x < v))
            .collect();
        (ranks, sorted.len())
    };
    let (zr, uz) = rank_of(z);
    let (sr, us) = rank_of(scores);

    // samples bucketed by z-rank; global counts per s-rank
    let mut by_z: Vec<Vec<usize>> = vec![Vec::new(); uz];
    let mut s_count = vec![0i64; us];
    for i in 0..n {
        by_z[zr[i]].push(sr[i]);
        s_count[sr[i]] += 1;
    }

    let nf = n as i64;
    let mut cum = vec![0i64; us];
    let mut cz = 0i64;
    let mut max_num = 0i64;
    for bucket in &by_z {
        for &s in bucket {
            cum[s] += 1;
        }
        cz += bucket.len() as i64;
        let mut joint = 0i64;
        let mut cs = 0i64;
        for s in 0..us {
            joint += cum[s];
            cs += s_count[s];
            let num = (joint * nf - cz * cs).abs();
            max_num = max_num.max(num);
        }
    }
    Ok(max_num as f64 / (nf * nf) as f64)
}

/// Equalized-odds gap: the max over target classes of the categorical KS
/// distance restricted to that class. Every (group, class) cell must be
/// nonempty.
pub fn equalized_odds_gap(scores: &[f64], z: &[f64], y: &[f64]) -> Result<f64> {
    let n = scores.len();
    if z.len() != n || y.len() != n {
        return Err(Error::Shape("scores, z, y must have equal lengths".into()));
    }
    let mut classes: Vec<f64> = Vec::new();
    for &v in y {
        if !classes.contains(&v) {
            classes.push(v);
        }
    }
    classes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut groups: Vec<f64> = Vec::new();
    for &v in z {
        if !groups.contains(&v) {
            groups.push(v);
        }
    }
    for &class in &classes {
        for &g in &groups {
            let any = (0..n).any(|i| y[i] == class && z[i] == g);
            if !any {
                return Err(Error::Cell {
                    class: format!("{class}"),
                    group: format!("{g}"),
                });
            }
        }
    }
    let mut worst = 0.0f64;
    for &class in &classes {
        let idx: Vec<usize> = (0..n).filter(|&i| y[i] == class).collect();
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let zc: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
        worst = worst.max(ks_categorical(&s, &zc)?);
    }
    Ok(worst)
}

/// Area under the ROC curve via the Mann-Whitney statistic with half credit
/// for ties (average ranks).
pub fn auc(scores: &[f64], y: &[f64]) -> Result<f64> {
    let n = scores.len();
    if y.len() != n {
        return Err(Error::Shape("scores and y have different lengths".into()));
    }
    let n_pos = y.iter().filter(|&&v| v > 0.0).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Group("AUC needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0usize;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if y[k] > 0.0 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Out-of-sample R²: 1 − SSE(pred) / SSE(train-mean baseline).
pub fn out_of_sample_r2(pred: &[f64], y_test: &[f64], y_train_mean: f64) -> Result<f64> {
    if pred.len() != y_test.len() {
        return Err(Error::Shape("pred and y_test have different lengths".into()));
    }
    if y_test.is_empty() {
        return Err(Error::Group("out-of-sample R² needs a nonempty test set".into()));
    }
    let sse: f64 = pred
        .iter()
        .zip(y_test)
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    let sse_base: f64 = y_test
        .iter()
        .map(|y| (y_train_mean - y) * (y_train_mean - y))
        .sum();
    if sse_base == 0.0 {
        return Err(Error::Numeric(
            "baseline SSE is zero; R² undefined on this test set".into(),
        ));
    }
    Ok(1.0 - sse / sse_base)
}

fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, v| acc * v as f64)
}

/// Truncated mutual-majorization estimate: the smallest ε consistent with the
/// empirical residuals up to level (g, h),
/// `ε̂ = max_{(m,q)} (residual_{m,q} / (m!·q!))^{1/(m+q)}`.
pub fn mutual_majorization_estimate(
    scores: &[f64],
    z: &DMatrix<f64>,
    g: usize,
    h: usize,
) -> Result<f64> {
    if g == 0 || h == 0 {
        return Err(Error::Parameter("levels must satisfy g, h >= 1".into()));
    }
    let n = scores.len();
    if z.nrows() != n {
        return Err(Error::Shape("scores and z have different lengths".into()));
    }
    let ident = DMatrix::identity(1, 1);
    let omega = DMatrix::from_iterator(n, 1, scores.iter().copied());
    let mut eps = 0.0f64;
    for m in 1..=g {
        for q in 1..=h {
            let res = residual_linf(&ident, &omega, z, m, q, DEFAULT_TENSOR_BUDGET)?;
            let candidate = (res / (factorial(m) * factorial(q))).powf(1.0 / (m + q) as f64);
            eps = eps.max(candidate);
        }
    }
    Ok(eps)
}

/// Result of [`mutual_characteristic_bound`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharacteristicBound {
    pub bound: f64,
    /// Sphere suprema were Monte-Carlo approximated (multivariate inputs).
    pub approximate: bool,
    pub j_term: f64,
    pub p_term: f64,
}

fn directional_mixed_moment(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    s: &[f64],
    t: &[f64],
    pu: usize,
    qv: usize,
) -> f64 {
    let n = u.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        let mut a = 0.0;
        for j in 0..u.ncols() {
            a += s[j] * u[(i, j)];
        }
        let mut b = 0.0;
        for j in 0..v.ncols() {
            b += t[j] * v[(i, j)];
        }
        sum += a.powi(pu as i32) * b.powi(qv as i32);
    }
    sum / n as f64
}

/// Max over the four sign variants (±s, ±t), which all lie on the sphere.
fn sign_sup(base: f64, pu: usize, qv: usize) -> f64 {
    let mut best = base;
    for su in [1.0f64, -1.0] {
        for sv in [1.0f64, -1.0] {
            best = best.max(base * su.powi(pu as i32) * sv.powi(qv as i32));
        }
    }
    best
}

/// Moment-based upper bound on the mutual characteristic of (U, V):
/// `[(J + P) / ((g+1)!·(h+1)!)]^{1/(g+h+3)}`, valid when all joint-minus-
/// product moment residuals up to level (g, h) are below `residual_tol`.
///
/// J and P are empirical sphere suprema of directional moments of order
/// (g+1, h+1): exact over the ±1 directions when both inputs are scalar, and
/// approximated by a fixed-seed sample of 10⁴ directions otherwise (the
/// result is then flagged approximate).
pub fn mutual_characteristic_bound(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    g: usize,
    h: usize,
    residual_tol: f64,
) -> Result<CharacteristicBound> {
    if g == 0 || h == 0 {
        return Err(Error::Parameter("levels must satisfy g, h >= 1".into()));
    }
    let n = u.nrows();
    if v.nrows() != n {
        return Err(Error::Shape("u and v have different sample counts".into()));
    }
    let ident = DMatrix::identity(v.ncols(), v.ncols());
    for m in 1..=g {
        for q in 1..=h {
            let res = residual_linf(&ident, v, u, m, q, DEFAULT_TENSOR_BUDGET)?;
            if res > residual_tol {
                return Err(Error::ResidualTooLarge {
                    m,
                    q,
                    value: res,
                    tol: residual_tol,
                });
            }
        }
    }

    let (pu, dv) = (u.ncols(), v.ncols());
    let (eu, ev) = (g + 1, h + 1);
    let scalar = pu == 1 && dv == 1;
    let (j_term, p_term) = if scalar {
        let base = directional_mixed_moment(u, v, &[1.0], &[1.0], eu, ev);
        let ju = directional_mixed_moment(u, v, &[1.0], &[1.0], eu, 0);
        let jv = directional_mixed_moment(u, v, &[1.0], &[1.0], 0, ev);
        let j = sign_sup(base, eu, ev);
        let p = sign_sup(ju, eu, 0) * sign_sup(jv, 0, ev);
        (j, p)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(DIRECTION_SEED);
        let draw = |dim: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            loop {
                let d: Vec<f64> = (0..dim)
                    .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                    .collect();
                let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    return d.iter().map(|x| x / norm).collect();
                }
            }
        };
        let mut j = f64::NEG_INFINITY;
        let mut psup_u = f64::NEG_INFINITY;
        let mut psup_v = f64::NEG_INFINITY;
        for _ in 0..N_DIRECTIONS {
            // J: (s, t) jointly on the unit sphere of dimension pu + dv
            let joint = draw(pu + dv, &mut rng);
            let (s, t) = joint.split_at(pu);
            let base = directional_mixed_moment(u, v, s, t, eu, ev);
            j = j.max(sign_sup(base, eu, ev));
            // P: separate unit spheres
            let s = draw(pu, &mut rng);
            let t = draw(dv, &mut rng);
            let mu = directional_mixed_moment(u, v, &s, &t, eu, 0);
            let mv = directional_mixed_moment(u, v, &s, &t, 0, ev);
            psup_u = psup_u.max(sign_sup(mu, eu, 0));
            psup_v = psup_v.max(sign_sup(mv, 0, ev));
        }
        (j, psup_u * psup_v)
    };

    let denom = factorial(g + 1) * factorial(h + 1);
    let base = (j_term + p_term) / denom;
    let bound = if base <= 0.0 {
        0.0
    } else {
        base.powf(1.0 / (g + h + 3) as f64)
    };
    Ok(CharacteristicBound {
        bound,
        approximate: !scalar,
        j_term,
        p_term,
    })
}

/// KS fairness value with the variant auto-selected by the protected
/// attribute type.
pub fn fairness_value(scores: &[f64], ds: &Dataset) -> Result<(f64, KsMethod)> {
    let z: Vec<f64> = ds.z_raw.iter().copied().collect();
    match ds.z_kind {
        ProtectedKind::Binary => Ok((ks_binary(scores, &z)?, KsMethod::Binary)),
        ProtectedKind::Categorical => Ok((ks_categorical(scores, &z)?, KsMethod::Categorical)),
        ProtectedKind::Continuous => Ok((ks_joint_product(scores, &z)?, KsMethod::JointProduct)),
    }
}

/// Full fairness diagnostics for a scored dataset, with the
/// mutual-majorization estimate truncated at level (g, h).
pub fn fairness_report(scores: &[f64], ds: &Dataset, g: usize, h: usize) -> Result<FairnessReport> {
    let (ks, method) = fairness_value(scores, ds)?;
    let binary_labels = ds.y.iter().all(|&v| v == 1.0 || v == -1.0);
    let eo = if binary_labels && ds.z_kind != ProtectedKind::Continuous {
        let z: Vec<f64> = ds.z_raw.iter().copied().collect();
        let y: Vec<f64> = ds.y.iter().copied().collect();
        match equalized_odds_gap(scores, &z, &y) {
            Ok(v) => Some(v),
            Err(Error::Cell { .. }) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let mm_hat = mutual_majorization_estimate(scores, &ds.z, g, h)?;
    Ok(FairnessReport {
        ks,
        method,
        eo,
        mm_hat,
    })
}
