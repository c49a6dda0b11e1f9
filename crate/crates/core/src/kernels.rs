//! Generalization kernels and memory-influence functions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, squared_distance, DenseMatrix};

/// Kernel `K(x, z)` of the generalization term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    /// `exp(-sigma * ||x - z||^2)`
    Rbf { sigma: f64 },
}

impl KernelSpec {
    pub fn rbf(sigma: f64) -> Result<Self> {
        let k = KernelSpec::Rbf { sigma };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { sigma } if sigma > 0.0 && sigma.is_finite() => Ok(()),
            KernelSpec::Rbf { sigma } => Err(Error::InvalidParameter(format!(
                "rbf sigma must be positive and finite, got {sigma}"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Rbf { .. } => "rbf",
        }
    }

    pub fn param(&self) -> Option<f64> {
        match *self {
            KernelSpec::Linear => None,
            KernelSpec::Rbf { sigma } => Some(sigma),
        }
    }

    /// Same variant with a new parameter; linear kernels ignore it.
    pub fn with_param(&self, param: f64) -> Result<Self> {
        match self {
            KernelSpec::Linear => Ok(KernelSpec::Linear),
            KernelSpec::Rbf { .. } => KernelSpec::rbf(param),
        }
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(x, z),
            KernelSpec::Rbf { sigma } => (-sigma * squared_distance(x, z)).exp(),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => f.write_str("linear"),
            KernelSpec::Rbf { sigma } => write!(f, "rbf:{sigma}"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = split_spec(s)?;
        match (name, param) {
            ("linear", None) => Ok(KernelSpec::Linear),
            ("rbf", Some(p)) => KernelSpec::rbf(p),
            ("rbf", None) => Err(Error::InvalidParameter(
                "rbf kernel needs a parameter, e.g. rbf:0.5".into(),
            )),
            _ => Err(Error::InvalidParameter(format!(
                "unknown kernel '{s}' (expected linear or rbf:<sigma>)"
            ))),
        }
    }
}

fn split_spec(s: &str) -> Result<(&str, Option<f64>)> {
    match s.split_once(':') {
        None => Ok((s.trim(), None)),
        Some((name, p)) => {
            let v: f64 = p.trim().parse().map_err(|_| {
                Error::InvalidParameter(format!("cannot parse parameter in '{s}'"))
            })?;
            Ok((name.trim(), Some(v)))
        }
    }
}

/// The four memory-influence function families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfluenceVariant {
    Gaussian,
    Hinge,
    Ball,
    Inverse,
}

impl InfluenceVariant {
    pub const ALL: [InfluenceVariant; 4] = [
        InfluenceVariant::Gaussian,
        InfluenceVariant::Hinge,
        InfluenceVariant::Ball,
        InfluenceVariant::Inverse,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            InfluenceVariant::Gaussian => "gaussian",
            InfluenceVariant::Hinge => "hinge",
            InfluenceVariant::Ball => "ball",
            InfluenceVariant::Inverse => "inverse",
        }
    }

    pub fn with_param(self, param: f64) -> Result<InfluenceSpec> {
        InfluenceSpec::new(self, param)
    }
}

impl fmt::Display for InfluenceVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InfluenceVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian" => Ok(InfluenceVariant::Gaussian),
            "hinge" => Ok(InfluenceVariant::Hinge),
            "ball" => Ok(InfluenceVariant::Ball),
            "inverse" => Ok(InfluenceVariant::Inverse),
            other => Err(Error::InvalidParameter(format!(
                "unknown influence '{other}' (expected gaussian, hinge, ball or inverse)"
            ))),
        }
    }
}

/// Memory-influence function `δ(x, z)` with its positive parameter.
///
/// * gaussian(σ): `exp(-||x-z||² / (2σ²)) / (σ √(2π))`
/// * hinge(ρ): `max(ρ - ||x-z||, 0)`
/// * ball(ε): `||x-z||` when `||x-z|| <= ε`, else 0
/// * inverse(β): `β / ||x-z||` when `x != z`, else 1
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfluenceSpec {
    pub variant: InfluenceVariant,
    pub param: f64,
}

impl InfluenceSpec {
    pub fn new(variant: InfluenceVariant, param: f64) -> Result<Self> {
        let s = Self { variant, param };
        s.validate()?;
        Ok(s)
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(InfluenceVariant::Gaussian, sigma)
    }

    pub fn hinge(rho: f64) -> Result<Self> {
        Self::new(InfluenceVariant::Hinge, rho)
    }

    pub fn ball(epsilon: f64) -> Result<Self> {
        Self::new(InfluenceVariant::Ball, epsilon)
    }

    pub fn inverse(beta: f64) -> Result<Self> {
        Self::new(InfluenceVariant::Inverse, beta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.param > 0.0 && self.param.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "{} influence parameter must be positive and finite, got {}",
                self.variant, self.param
            )))
        }
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        let p = self.param;
        match self.variant {
            InfluenceVariant::Gaussian => {
                let d2 = squared_distance(x, z);
                (-d2 / (2.0 * p * p)).exp() / (p * (2.0 * std::f64::consts::PI).sqrt())
            }
            InfluenceVariant::Hinge => (p - squared_distance(x, z).sqrt()).max(0.0),
            InfluenceVariant::Ball => {
                let d = squared_distance(x, z).sqrt();
                if d <= p {
                    d
                } else {
                    0.0
                }
            }
            InfluenceVariant::Inverse => {
                if x == z {
                    1.0
                } else {
                    p / squared_distance(x, z).sqrt()
                }
            }
        }
    }
}

impl fmt::Display for InfluenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.variant, self.param)
    }
}

impl FromStr for InfluenceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = split_spec(s)?;
        let variant: InfluenceVariant = name.parse()?;
        let param = param.ok_or_else(|| {
            Error::InvalidParameter(format!(
                "influence '{name}' needs a parameter, e.g. {name}:1.0"
            ))
        })?;
        InfluenceSpec::new(variant, param)
    }
}

fn check_same_len(x: &[f64], z: &[f64]) -> Result<()> {
    if x.len() == z.len() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {}",
            x.len(),
            z.len()
        )))
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], z: &[f64]) -> Result<f64> {
    check_same_len(x, z)?;
    Ok(spec.eval_unchecked(x, z))
}

pub fn influence_eval(spec: &InfluenceSpec, x: &[f64], z: &[f64]) -> Result<f64> {
    check_same_len(x, z)?;
    Ok(spec.eval_unchecked(x, z))
}

fn check_shared_cols(a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.cols() == b.cols() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "feature matrices with {} and {} columns",
            a.cols(),
            b.cols()
        )))
    }
}

fn pairwise(a: &DenseMatrix, b: &DenseMatrix, f: impl Fn(&[f64], &[f64]) -> f64) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.rows(), b.rows());
    for (i, ai) in a.row_iter().enumerate() {
        for (dst, bj) in out.row_mut(i).iter_mut().zip(b.row_iter()) {
            *dst = f(ai, bj);
        }
    }
    out
}

/// Evaluates the lower triangle and mirrors it, so the result is exactly symmetric.
fn pairwise_symmetric(x: &DenseMatrix, f: impl Fn(&[f64], &[f64]) -> f64) -> DenseMatrix {
    let m = x.rows();
    let mut out = DenseMatrix::zeros(m, m);
    for i in 0..m {
        let xi = x.row(i);
        for j in 0..=i {
            out.set(i, j, f(xi, x.row(j)));
        }
    }
    out.mirror_lower();
    out
}

/// `K(A, B)` with entry `(i, j) = K(a_i, b_j)`.
pub fn gram_matrix(spec: &KernelSpec, a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    check_shared_cols(a, b)?;
    Ok(pairwise(a, b, |x, z| spec.eval_unchecked(x, z)))
}

/// `K(X, X)`, exactly symmetric.
pub fn gram_symmetric(spec: &KernelSpec, x: &DenseMatrix) -> DenseMatrix {
    pairwise_symmetric(x, |a, b| spec.eval_unchecked(a, b))
}

/// Influence matrix `Δ` with entry `(i, j) = δ(x_i, x_j)`, exactly symmetric.
pub fn influence_matrix(spec: &InfluenceSpec, x: &DenseMatrix) -> DenseMatrix {
    pairwise_symmetric(x, |a, b| spec.eval_unchecked(a, b))
}

/// Cross influence matrix with entry `(i, j) = δ(a_i, b_j)`.
pub fn influence_cross(
    spec: &InfluenceSpec,
    a: &DenseMatrix,
    b: &DenseMatrix,
) -> Result<DenseMatrix> {
    check_shared_cols(a, b)?;
    Ok(pairwise(a, b, |x, z| spec.eval_unchecked(x, z)))
}

/// Positive and negative class means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidPair {
    pub centroid_pos: Vec<f64>,
    pub centroid_neg: Vec<f64>,
}

impl CentroidPair {
    pub fn for_label(&self, label: i8) -> &[f64] {
        if label > 0 {
            &self.centroid_pos
        } else {
            &self.centroid_neg
        }
    }
}

pub fn class_centroids(x: &DenseMatrix, y: &[i8]) -> Result<CentroidPair> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows and {} labels",
            x.rows(),
            y.len()
        )));
    }
    let n = x.cols();
    let mut pos = vec![0.0; n];
    let mut neg = vec![0.0; n];
    let (mut n_pos, mut n_neg) = (0usize, 0usize);
    for (row, &label) in x.row_iter().zip(y) {
        let (acc, count) = if label > 0 {
            (&mut pos, &mut n_pos)
        } else {
            (&mut neg, &mut n_neg)
        };
        *count += 1;
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    if n_pos == 0 {
        return Err(Error::MissingClass(1));
    }
    if n_neg == 0 {
        return Err(Error::MissingClass(-1));
    }
    pos.iter_mut().for_each(|v| *v /= n_pos as f64);
    neg.iter_mut().for_each(|v| *v /= n_neg as f64);
    Ok(CentroidPair {
        centroid_pos: pos,
        centroid_neg: neg,
    })
}

/// `δ_i = δ(c_{y_i}, x_i)`: influence between each sample and its own class centroid.
pub fn mimm_delta_vector(
    spec: &InfluenceSpec,
    x: &DenseMatrix,
    y: &[i8],
    cents: &CentroidPair,
) -> Result<Vec<f64>> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows and {} labels",
            x.rows(),
            y.len()
        )));
    }
    if cents.centroid_pos.len() != x.cols() || cents.centroid_neg.len() != x.cols() {
        return Err(Error::DimensionMismatch(
            "centroid length differs from feature count".into(),
        ));
    }
    Ok(x.row_iter()
        .zip(y)
        .map(|(row, &label)| spec.eval_unchecked(cents.for_label(label), row))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

    fn col(values: &[f64]) -> DenseMatrix {
        DenseMatrix::from_row_major(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(kernel_eval(&KernelSpec::Linear, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        let rbf = KernelSpec::rbf(3.7).unwrap();
        assert_eq!(kernel_eval(&rbf, &[0.3, -1.0], &[0.3, -1.0]).unwrap(), 1.0);
        let rbf1 = KernelSpec::rbf(1.0).unwrap();
        let v = kernel_eval(&rbf1, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
        assert!(kernel_eval(&rbf1, &[0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn gram_examples() {
        let g = gram_matrix(&KernelSpec::Linear, &col(&[0.0, 1.0]), &col(&[0.0, 1.0])).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0, 0.0, 1.0]);
        let p = DenseMatrix::from_rows(&[[2.0, -1.0]]).unwrap();
        let g = gram_matrix(&KernelSpec::Linear, &p, &p).unwrap();
        assert_eq!(g.as_slice(), &[5.0]);
        assert!(gram_matrix(&KernelSpec::Linear, &p, &col(&[1.0])).is_err());
    }

    #[test]
    fn influence_examples() {
        let g = InfluenceSpec::gaussian(1.0).unwrap();
        assert!((influence_eval(&g, &[1.0], &[1.0]).unwrap() - INV_SQRT_2PI).abs() < 1e-15);

        let h = InfluenceSpec::hinge(1.0).unwrap();
        assert_eq!(influence_eval(&h, &[0.0], &[2.0]).unwrap(), 0.0);

        let b = InfluenceSpec::ball(0.5).unwrap();
        assert!((influence_eval(&b, &[0.0], &[0.3]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(influence_eval(&b, &[0.0], &[0.6]).unwrap(), 0.0);
        assert_eq!(influence_eval(&b, &[0.2], &[0.2]).unwrap(), 0.0);

        let inv = InfluenceSpec::inverse(2.0).unwrap();
        assert_eq!(influence_eval(&inv, &[1.0, 1.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(influence_eval(&inv, &[0.0], &[4.0]).unwrap(), 0.5);
    }

    #[test]
    fn influence_matrix_examples() {
        let g = influence_matrix(&InfluenceSpec::gaussian(1.0).unwrap(), &col(&[5.0]));
        assert!((g.get(0, 0) - 0.398942).abs() < 1e-6);

        let dup = influence_matrix(&InfluenceSpec::inverse(1.0).unwrap(), &col(&[3.0, 3.0]));
        assert_eq!(dup.as_slice(), &[1.0, 1.0, 1.0, 1.0]);

        // max(2 - |i - j|, 0) on {0, 1}
        let h = influence_matrix(&InfluenceSpec::hinge(2.0).unwrap(), &col(&[0.0, 1.0]));
        assert_eq!(h.as_slice(), &[2.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn centroid_examples() {
        let c = class_centroids(&col(&[0.0, 2.0, 1.0]), &[1, 1, -1]).unwrap();
        assert_eq!(c.centroid_pos, vec![1.0]);
        assert_eq!(c.centroid_neg, vec![1.0]);

        let c = class_centroids(&col(&[4.0, -2.0]), &[-1, 1]).unwrap();
        assert_eq!(c.centroid_pos, vec![-2.0]);
        assert_eq!(c.centroid_neg, vec![4.0]);

        assert!(matches!(
            class_centroids(&col(&[0.0, 1.0]), &[1, 1]),
            Err(Error::MissingClass(-1))
        ));
    }

    #[test]
    fn delta_vector_examples() {
        let x = col(&[0.0, 3.0]);
        let y = [1, -1];
        let c = class_centroids(&x, &y).unwrap();
        let g = mimm_delta_vector(&InfluenceSpec::gaussian(1.0).unwrap(), &x, &y, &c).unwrap();
        assert!(g.iter().all(|v| (v - INV_SQRT_2PI).abs() < 1e-15));
        let inv = mimm_delta_vector(&InfluenceSpec::inverse(0.7).unwrap(), &x, &y, &c).unwrap();
        assert_eq!(inv, vec![1.0, 1.0]);

        // centroid_pos = 1, so distances are (1, 1, 0) and hinge(3) gives (2, 2, 3).
        let x = col(&[0.0, 2.0, 1.0]);
        let y = [1, 1, -1];
        let c = class_centroids(&x, &y).unwrap();
        let h = mimm_delta_vector(&InfluenceSpec::hinge(3.0).unwrap(), &x, &y, &c).unwrap();
        assert_eq!(h, vec![2.0, 2.0, 3.0]);

        let b = mimm_delta_vector(&InfluenceSpec::ball(0.5).unwrap(), &x, &y, &c).unwrap();
        assert_eq!(b, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("linear".parse::<KernelSpec>().unwrap(), KernelSpec::Linear);
        assert_eq!(
            "rbf:2.0".parse::<KernelSpec>().unwrap(),
            KernelSpec::Rbf { sigma: 2.0 }
        );
        assert!("rbf".parse::<KernelSpec>().is_err());
        assert!("rbf:-1".parse::<KernelSpec>().is_err());
        assert!("poly:2".parse::<KernelSpec>().is_err());

        let s: InfluenceSpec = "gaussian:0.5".parse().unwrap();
        assert_eq!(s, InfluenceSpec::gaussian(0.5).unwrap());
        assert_eq!(s.to_string().parse::<InfluenceSpec>().unwrap(), s);
        assert!("inverse".parse::<InfluenceSpec>().is_err());
        assert!("ball:0".parse::<InfluenceSpec>().is_err());
        assert!("cosine:1".parse::<InfluenceSpec>().is_err());
    }
}
