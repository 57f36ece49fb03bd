//! Metallic means, metallic structures on Euclidean space and the
//! correspondence with almost product structures.
//!
//! A `(p, q)`-metallic structure is a linear map `J` with `J² = pJ + qI`.
//! On `E^{2a+b}` with coordinates `(x^i, y^i, z^j)` the block structures built
//! here are symmetric, hence compatible with the flat metric.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Frobenius tolerance for exact constructions.
pub const CONSTRUCTION_TOL: f64 = 1e-12;

/// A sign `±1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+1")]
    Plus,
    #[serde(rename = "-1")]
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn from_int(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(Error::Domain(format!("sign must be +1 or -1, got {other}"))),
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl std::ops::Mul for Sign {
    type Output = Sign;

    fn mul(self, rhs: Sign) -> Sign {
        if self == rhs {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sign::Plus => write!(f, "+1"),
            Sign::Minus => write!(f, "-1"),
        }
    }
}

/// The pair `(p, q)` together with the two roots of `x² = px + q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetallicParams {
    pub p: u32,
    pub q: u32,
    /// Positive root `(p + √Δ)/2`.
    pub sigma: f64,
    /// Conjugate root `p − σ`.
    pub sigma_bar: f64,
    /// Discriminant `p² + 4q`.
    pub delta: f64,
}

impl MetallicParams {
    pub fn p(&self) -> f64 {
        f64::from(self.p)
    }

    pub fn q(&self) -> f64 {
        f64::from(self.q)
    }

    pub fn sqrt_delta(&self) -> f64 {
        self.delta.sqrt()
    }

    /// Value of `x² − px − q`.
    pub fn characteristic(&self, x: f64) -> f64 {
        x * x - self.p() * x - self.q()
    }
}

/// The `(p, q)`-metallic number and its companions.
pub fn metallic_ratio(p: i64, q: i64) -> Result<MetallicParams> {
    if p < 1 || q < 1 {
        return Err(Error::Domain(format!(
            "p and q must be positive integers, got p={p}, q={q}"
        )));
    }
    let p = u32::try_from(p).map_err(|_| Error::Domain(format!("p={p} is too large")))?;
    let q = u32::try_from(q).map_err(|_| Error::Domain(format!("q={q} is too large")))?;
    let pf = f64::from(p);
    let delta = pf * pf + 4.0 * f64::from(q);
    let sigma = (pf + delta.sqrt()) / 2.0;
    Ok(MetallicParams {
        p,
        q,
        sigma,
        sigma_bar: pf - sigma,
        delta,
    })
}

/// Named members of the metallic means family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Golden,
    Silver,
    Bronze,
    Copper,
    Nickel,
    Subtle,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Golden,
        Preset::Silver,
        Preset::Bronze,
        Preset::Copper,
        Preset::Nickel,
        Preset::Subtle,
    ];

    /// The five presets that carry an explicit structure on `E^{2a+b}`.
    pub const STRUCTURES: [Preset; 5] = [
        Preset::Golden,
        Preset::Silver,
        Preset::Bronze,
        Preset::Copper,
        Preset::Nickel,
    ];

    pub fn pq(self) -> (u32, u32) {
        match self {
            Preset::Golden => (1, 1),
            Preset::Silver => (2, 1),
            Preset::Bronze => (3, 1),
            Preset::Copper => (1, 2),
            Preset::Nickel => (1, 3),
            Preset::Subtle => (4, 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Golden => "golden",
            Preset::Silver => "silver",
            Preset::Bronze => "bronze",
            Preset::Copper => "copper",
            Preset::Nickel => "nickel",
            Preset::Subtle => "subtle",
        }
    }

    /// The mean written in its traditional closed form.
    pub fn constant(self) -> f64 {
        match self {
            Preset::Golden => (1.0 + 5f64.sqrt()) / 2.0,
            Preset::Silver => 1.0 + 2f64.sqrt(),
            Preset::Bronze => (3.0 + 13f64.sqrt()) / 2.0,
            Preset::Copper => 2.0,
            Preset::Nickel => (1.0 + 13f64.sqrt()) / 2.0,
            Preset::Subtle => 2.0 + 5f64.sqrt(),
        }
    }

    pub fn params(self) -> MetallicParams {
        let (p, q) = self.pq();
        metallic_ratio(i64::from(p), i64::from(q)).expect("presets have positive (p, q)")
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown preset '{s}'")))
    }
}

/// A metallic structure on `E^{2a+b}` in block form.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientStructure {
    pub params: MetallicParams,
    pub a: usize,
    pub b: usize,
    pub lambda: Sign,
    pub epsilon: Vec<Sign>,
    pub matrix: Matrix,
}

impl AmbientStructure {
    pub fn dim(&self) -> usize {
        2 * self.a + self.b
    }

    /// True when every `λ·ε_j` equals `+1`, i.e. the z block is `σ·I_b`.
    pub fn is_standard_orientation(&self) -> bool {
        self.epsilon.iter().all(|&e| self.lambda * e == Sign::Plus)
    }
}

/// Assemble `J_λ` on `E^{2a+b}`.
///
/// The `(x, y)` blocks are `p/2·I_a` on the diagonal and `λ√Δ/2·I_a` off the
/// diagonal; `z^j` is scaled by `p/2 + λε_j√Δ/2`.
pub fn build_ambient_structure(
    params: MetallicParams,
    a: usize,
    b: usize,
    lambda: Sign,
    epsilon: &[i64],
) -> Result<AmbientStructure> {
    if a == 0 {
        return Err(Error::Domain("block count a must be at least 1".into()));
    }
    ensure_dim(b, epsilon.len())?;
    let epsilon = epsilon
        .iter()
        .map(|&e| Sign::from_int(e))
        .collect::<Result<Vec<_>>>()?;

    let n = 2 * a + b;
    let half_p = params.p() / 2.0;
    let half_root = params.sqrt_delta() / 2.0;
    let mut m = Matrix::zeros(n, n);
    for i in 0..a {
        m[(i, i)] = half_p;
        m[(a + i, a + i)] = half_p;
        m[(i, a + i)] = lambda.value() * half_root;
        m[(a + i, i)] = lambda.value() * half_root;
    }
    for (j, &e) in epsilon.iter().enumerate() {
        m[(2 * a + j, 2 * a + j)] = half_p + (lambda * e).value() * half_root;
    }
    Ok(AmbientStructure {
        params,
        a,
        b,
        lambda,
        epsilon,
        matrix: m,
    })
}

/// `‖J² − pJ − qI‖_F`.
pub fn verify_polynomial(j: &Matrix, params: &MetallicParams) -> f64 {
    let n = j.nrows();
    let residual = j * j - j * params.p() - Matrix::identity(n, n) * params.q();
    residual.norm()
}

/// `‖G·J − Jᵀ·G‖_F`: the failure of `g(JX, Y) = g(X, JY)`.
pub fn verify_compatibility(j: &Matrix, metric: &Matrix) -> Result<f64> {
    if !j.is_square() {
        return Err(Error::Domain("structure matrix must be square".into()));
    }
    if !metric.is_square() {
        return Err(Error::Domain("metric matrix must be square".into()));
    }
    ensure_dim(j.nrows(), metric.nrows())?;
    Ok((metric * j - j.transpose() * metric).norm())
}

/// Largest `|g(JX,JY) − p·g(X,JY) − q·g(X,Y)|` over the flat-metric pairs.
pub fn verify_metric_corollary(
    j: &Matrix,
    params: &MetallicParams,
    pairs: &[(Vector, Vector)],
) -> f64 {
    pairs
        .iter()
        .map(|(x, y)| {
            let jx = j * x;
            let jy = j * y;
            (jx.dot(&jy) - params.p() * x.dot(&jy) - params.q() * x.dot(y)).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest distance from an eigenvalue of the symmetric matrix `J` to `{σ, σ̄}`.
pub fn spectrum_defect(j: &Matrix, params: &MetallicParams) -> f64 {
    let eig = SymmetricEigen::new(j.clone());
    eig.eigenvalues
        .iter()
        .map(|&ev| (ev - params.sigma).abs().min((ev - params.sigma_bar).abs()))
        .fold(0.0, f64::max)
}

/// An almost product structure `F`, `F² = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductStructure {
    matrix: Matrix,
}

impl ProductStructure {
    /// Accepts `F` when `‖F² − I‖_F` is below `tol`.
    pub fn new(matrix: Matrix, tol: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Domain("product structure must be square".into()));
        }
        let defect = involution_defect(&matrix);
        if defect > tol {
            return Err(Error::Domain(format!(
                "not an almost product structure: ‖F² − I‖ = {defect:e}"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }
}

/// `‖F² − I‖_F`.
pub fn involution_defect(f: &Matrix) -> f64 {
    let n = f.nrows();
    (f * f - Matrix::identity(n, n)).norm()
}

/// `J = p/2·I ± (2σ − p)/2·F`; the `+` branch is `J₁`, the `−` branch `J₂`.
pub fn structure_from_product(
    f: &ProductStructure,
    params: &MetallicParams,
    branch: Sign,
) -> Matrix {
    let n = f.matrix.nrows();
    let scale = branch.value() * (2.0 * params.sigma - params.p()) / 2.0;
    Matrix::identity(n, n) * (params.p() / 2.0) + &f.matrix * scale
}

/// `F_± = ±(2J − pI)/(2σ − p)`.
pub fn product_from_structure(
    j: &Matrix,
    params: &MetallicParams,
    branch: Sign,
) -> Result<ProductStructure> {
    if !j.is_square() {
        return Err(Error::Domain("structure matrix must be square".into()));
    }
    let n = j.nrows();
    let residual = verify_polynomial(j, params);
    let scale = 1.0 + j.norm() * j.norm();
    if residual > 1e-10 * scale {
        return Err(Error::Domain(format!(
            "matrix is not metallic: ‖J² − pJ − qI‖ = {residual:e}"
        )));
    }
    let denom = 2.0 * params.sigma - params.p();
    let f = (j * 2.0 - Matrix::identity(n, n) * params.p()) * (branch.value() / denom);
    ProductStructure::new(f, 1e-9 * n as f64)
}
