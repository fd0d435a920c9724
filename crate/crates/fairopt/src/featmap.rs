//! The polynomial feature map ω and linear decision rules δ(x,z) = B·ω(x,z).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// An ordered list of monomials over the concatenated entries of (x, z).
///
/// Each monomial is an exponent vector of length `n_x + n_z`; the all-zero
/// vector is the constant monomial. Generated maps order monomials
/// lexicographically by multi-index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapSpec {
    pub monomials: Vec<Vec<u32>>,
    pub n_x: usize,
    pub n_z: usize,
}

impl FeatureMapSpec {
    /// Number of output features p.
    pub fn p(&self) -> usize {
        self.monomials.len()
    }

    /// Maximum total degree ρ (at least 1 by construction).
    pub fn rho(&self) -> u32 {
        self.monomials
            .iter()
            .map(|m| m.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
            .max(1)
    }

    /// Whether any monomial touches an entry of z.
    pub fn uses_z(&self) -> bool {
        self.monomials.iter().any(|m| m[self.n_x..].iter().any(|&e| e > 0))
    }

    /// The default map `[1, x_1, ..., x_{p_x}]`: affine in x, no z monomials.
    pub fn affine_x(n_x: usize, n_z: usize) -> Self {
        let mut monomials = vec![vec![0u32; n_x + n_z]];
        for j in 0..n_x {
            let mut m = vec![0u32; n_x + n_z];
            m[j] = 1;
            monomials.push(m);
        }
        FeatureMapSpec { monomials, n_x, n_z }
    }

    /// The identity map `[x_1, ..., x_{p_x}]` without a constant term.
    pub fn linear_x(n_x: usize, n_z: usize) -> Self {
        let monomials = (0..n_x)
            .map(|j| {
                let mut m = vec![0u32; n_x + n_z];
                m[j] = 1;
                m
            })
            .collect();
        FeatureMapSpec { monomials, n_x, n_z }
    }

    /// All monomials of total degree at most `max_degree` over x (and z when
    /// `include_z`), ordered lexicographically by multi-index.
    pub fn polynomial(n_x: usize, n_z: usize, max_degree: u32, include_z: bool) -> Self {
        let width = n_x + n_z;
        let active = if include_z { width } else { n_x };
        let mut monomials = Vec::new();
        let mut current = vec![0u32; width];
        gen_monomials(&mut monomials, &mut current, 0, active, max_degree);
        monomials.sort();
        FeatureMapSpec { monomials, n_x, n_z }
    }

    pub fn from_monomials(monomials: Vec<Vec<u32>>, n_x: usize, n_z: usize) -> Result<Self> {
        for m in &monomials {
            if m.len() != n_x + n_z {
                return Err(Error::Shape(format!(
                    "monomial has {} exponents, expected {}",
                    m.len(),
                    n_x + n_z
                )));
            }
        }
        Ok(FeatureMapSpec { monomials, n_x, n_z })
    }

    /// Evaluate Ω = ω(x, z) for one sample.
    pub fn eval(&self, x: &[f64], z: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.n_x || z.len() != self.n_z {
            return Err(Error::Shape(format!(
                "feature map expects x of length {} and z of length {}, got {} and {}",
                self.n_x,
                self.n_z,
                x.len(),
                z.len()
            )));
        }
        let mut out = DVector::zeros(self.p());
        for (j, mono) in self.monomials.iter().enumerate() {
            let mut v = 1.0;
            for (k, &e) in mono.iter().enumerate() {
                if e > 0 {
                    let base = if k < self.n_x { x[k] } else { z[k - self.n_x] };
                    for _ in 0..e {
                        v *= base;
                    }
                }
            }
            out[j] = v;
        }
        Ok(out)
    }

    /// Evaluate the feature map on every dataset row, giving Ω as n × p.
    pub fn eval_dataset(&self, ds: &Dataset) -> Result<DMatrix<f64>> {
        if ds.p_x() != self.n_x || ds.r() != self.n_z {
            return Err(Error::Shape(format!(
                "feature map built for {}x/{}z columns, dataset has {}/{}",
                self.n_x,
                self.n_z,
                ds.p_x(),
                ds.r()
            )));
        }
        let n = ds.n();
        let mut omega = DMatrix::zeros(n, self.p());
        let mut xrow = vec![0.0; self.n_x];
        let mut zrow = vec![0.0; self.n_z];
        for i in 0..n {
            for j in 0..self.n_x {
                xrow[j] = ds.x[(i, j)];
            }
            for j in 0..self.n_z {
                zrow[j] = ds.z[(i, j)];
            }
            let row = self.eval(&xrow, &zrow)?;
            for j in 0..self.p() {
                omega[(i, j)] = row[j];
            }
        }
        Ok(omega)
    }
}

fn gen_monomials(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, pos: usize, active: usize, left: u32) {
    if pos == active {
        out.push(current.clone());
        return;
    }
    for e in 0..=left {
        current[pos] = e;
        gen_monomials(out, current, pos + 1, active, left - e);
    }
    current[pos] = 0;
}

/// A trained linear decision rule δ(x,z) = B·ω(x,z) with B of shape d × p.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRule {
    pub b: DMatrix<f64>,
    pub feature_map: FeatureMapSpec,
}

impl DecisionRule {
    pub fn new(b: DMatrix<f64>, feature_map: FeatureMapSpec) -> Result<Self> {
        if b.ncols() != feature_map.p() {
            return Err(Error::Shape(format!(
                "coefficient matrix has {} columns but the feature map produces {}",
                b.ncols(),
                feature_map.p()
            )));
        }
        Ok(DecisionRule { b, feature_map })
    }

    pub fn d(&self) -> usize {
        self.b.nrows()
    }

    /// Frobenius norm of B, i.e. the Euclidean norm of the flattened matrix.
    pub fn coef_norm(&self) -> f64 {
        self.b.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn decide(&self, x: &[f64], z: &[f64]) -> Result<DVector<f64>> {
        Ok(&self.b * self.feature_map.eval(x, z)?)
    }

    /// Scalar scores for every dataset row (d = 1 rules).
    pub fn scores(&self, ds: &Dataset) -> Result<DVector<f64>> {
        if self.d() != 1 {
            return Err(Error::Unsupported(format!(
                "scores are defined for d = 1 rules, this rule has d = {}",
                self.d()
            )));
        }
        let omega = self.feature_map.eval_dataset(ds)?;
        Ok(DVector::from_iterator(
            ds.n(),
            (0..ds.n()).map(|i| {
                let mut s = 0.0;
                for j in 0..self.feature_map.p() {
                    s += self.b[(0, j)] * omega[(i, j)];
                }
                s
            }),
        ))
    }
}
