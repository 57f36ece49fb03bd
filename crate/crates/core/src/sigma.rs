//! The Σ-structure `(P, g, u_α, ξ_α, a_{αβ})` induced on a submanifold by an
//! ambient metallic structure `J`.
//!
//! For tangent `X` and normal frame `N_α`:
//!
//! ```text
//! J X   = P X  + Σ u_α(X) N_α
//! J N_α = ξ_α  + Σ a_{αβ} N_β
//! ```
//!
//! Two construction paths are provided: generic induction by projection, and
//! the explicit formulas for round spheres in `E^{2a+b}`.

use nalgebra::SymmetricEigen;

use crate::error::{ensure_dim, Error, Result};
use crate::jet::{FrameJet, ScalarJet, VectorJet};
use crate::metallic::{verify_polynomial, AmbientStructure, Matrix, MetallicParams, Vector};
use crate::surface::{
    project_tangent, unit_normal_frame, DerivativeMode, EmbeddedSurface, SurfaceKind, SurfacePoint,
    VectorField,
};

/// Squared norms of the `x`, `y` and `z` coordinate groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateSplit {
    pub r1_sq: f64,
    pub r2_sq: f64,
    pub r3_sq: f64,
}

impl CoordinateSplit {
    pub fn of(coords: &Vector, a: usize, b: usize) -> Self {
        let sq = |start: usize, len: usize| coords.rows(start, len).norm_squared();
        Self {
            r1_sq: sq(0, a),
            r2_sq: sq(a, a),
            r3_sq: sq(2 * a, b),
        }
    }

    pub fn total(&self) -> f64 {
        self.r1_sq + self.r2_sq + self.r3_sq
    }
}

/// Induced data at one surface point.
///
/// `p_map` acts on ambient coordinates; it maps tangent vectors to tangent
/// vectors and annihilates normals. `u[α]` holds the components of the
/// covector `u_α` restricted to the tangent space.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaAtPoint {
    pub base: SurfacePoint,
    pub params: MetallicParams,
    pub p_map: Matrix,
    pub xi: Vec<Vector>,
    pub u: Vec<Vector>,
    pub a: Matrix,
    pub split: Option<CoordinateSplit>,
}

impl SigmaAtPoint {
    pub fn codim(&self) -> usize {
        self.xi.len()
    }

    pub fn apply_p(&self, x: &Vector) -> Vector {
        &self.p_map * x
    }

    pub fn u_of(&self, alpha: usize, x: &Vector) -> f64 {
        self.u[alpha].dot(x)
    }

    pub fn normals(&self) -> Vec<Vector> {
        unit_normal_frame(&self.base).normals
    }
}

/// An ambient metallic structure restricted to one surface; the source of
/// the Σ-data as fields.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaField {
    pub params: MetallicParams,
    pub j: Matrix,
    pub surface: EmbeddedSurface,
    /// `(a, b)` block layout when `J` comes from the block construction.
    pub layout: Option<(usize, usize)>,
}

impl SigmaField {
    pub fn new(structure: &AmbientStructure, surface: EmbeddedSurface) -> Result<Self> {
        ensure_dim(structure.dim(), surface.ambient_dim)?;
        Ok(Self {
            params: structure.params,
            j: structure.matrix.clone(),
            surface,
            layout: Some((structure.a, structure.b)),
        })
    }

    /// Any symmetric metallic matrix, validated against `J² = pJ + qI`.
    pub fn from_matrix(
        params: MetallicParams,
        j: Matrix,
        surface: EmbeddedSurface,
    ) -> Result<Self> {
        if !j.is_square() {
            return Err(Error::Domain("structure matrix must be square".into()));
        }
        ensure_dim(j.nrows(), surface.ambient_dim)?;
        let residual = verify_polynomial(&j, &params);
        if residual > 1e-10 * (1.0 + j.norm_squared()) {
            return Err(Error::Domain(format!(
                "matrix is not metallic (residual {residual:e})"
            )));
        }
        if (&j - j.transpose()).norm() > 1e-12 * (1.0 + j.norm()) {
            return Err(Error::Domain("structure matrix must be symmetric".into()));
        }
        Ok(Self {
            params,
            j,
            surface,
            layout: None,
        })
    }

    pub fn at(&self, x: &SurfacePoint) -> SigmaAtPoint {
        induce(&self.params, &self.j, x, self.layout)
    }

    /// `P Z` for a tangent field `Z`.
    pub fn p_of<F: VectorField>(&self, inner: F) -> PField<'_, F> {
        PField { j: &self.j, inner }
    }

    pub fn xi_field(&self, alpha: usize) -> XiField<'_> {
        XiField { j: &self.j, alpha }
    }

    /// Jet of `u_α(Z) = ⟨J Z, N_α⟩`.
    pub fn u_jet(&self, frame: &FrameJet, alpha: usize, z: &VectorJet) -> ScalarJet {
        z.map(&self.j).dot(&frame.normal(alpha))
    }

    /// Jet of `a_{αβ} = ⟨J N_α, N_β⟩`.
    pub fn a_jet(&self, frame: &FrameJet, alpha: usize, beta: usize) -> ScalarJet {
        frame.normal(alpha).map(&self.j).dot(&frame.normal(beta))
    }
}

/// The field `P Z = (J Z)^⊤`.
pub struct PField<'a, F> {
    j: &'a Matrix,
    inner: F,
}

impl<F: VectorField> VectorField for PField<'_, F> {
    fn jet(&self, frame: &FrameJet) -> VectorJet {
        frame.project(&self.inner.jet(frame).map(self.j))
    }
}

/// The field `ξ_α = (J N_α)^⊤`.
pub struct XiField<'a> {
    j: &'a Matrix,
    alpha: usize,
}

impl VectorField for XiField<'_> {
    fn jet(&self, frame: &FrameJet) -> VectorJet {
        frame.project(&frame.normal(self.alpha).map(self.j))
    }
}

fn induce(
    params: &MetallicParams,
    j: &Matrix,
    x: &SurfacePoint,
    layout: Option<(usize, usize)>,
) -> SigmaAtPoint {
    let normals = unit_normal_frame(x).normals;
    let proj = x.tangent_projector();
    let r = normals.len();
    let jn: Vec<Vector> = normals.iter().map(|n| j * n).collect();
    let xi = jn.iter().map(|v| project_tangent(x, v)).collect();
    let u = normals
        .iter()
        .map(|n| &proj * (j.transpose() * n))
        .collect();
    let a = Matrix::from_fn(r, r, |alpha, beta| jn[alpha].dot(&normals[beta]));
    SigmaAtPoint {
        base: x.clone(),
        params: *params,
        p_map: &proj * j * &proj,
        xi,
        u,
        a,
        split: layout.map(|(la, lb)| CoordinateSplit::of(x.coords(), la, lb)),
    }
}

/// Generic induction: `P = (J·)^⊤`, `ξ_α = (J N_α)^⊤`, `a_{αβ} = ⟨J N_α, N_β⟩`.
pub fn induce_sigma(
    structure: &AmbientStructure,
    surface: &EmbeddedSurface,
    x: &SurfacePoint,
) -> Result<SigmaAtPoint> {
    ensure_dim(structure.dim(), surface.ambient_dim)?;
    ensure_dim(surface.ambient_dim, x.coords().len())?;
    Ok(induce(
        &structure.params,
        &structure.matrix,
        x,
        Some((structure.a, structure.b)),
    ))
}

/// Explicit Σ-structure on `S^{2a+b−1}(R)` for `λε_j = 1`.
///
/// ```text
/// 𝒜    = [p/2 (r₁² + r₂²) + λ√Δ Σ xⁱyⁱ + σ r₃²] / R²
/// ξ    = ((p/2 − 𝒜)xⁱ + λ√Δ/2 yⁱ, (p/2 − 𝒜)yⁱ + λ√Δ/2 xⁱ, (p/2 − 𝒜 + √Δ/2) zʲ) / R
/// u(X) = λ√Δ/(2R) [Σ (yⁱXⁱ + xⁱYⁱ) + λ Σ zʲZʲ]
/// P X  = (p/2 Xⁱ + λ√Δ/2 Yⁱ, p/2 Yⁱ + λ√Δ/2 Xⁱ, σ Zʲ) − u(X)/R · x
/// ```
pub fn closed_form_sigma_sphere(
    structure: &AmbientStructure,
    x: &SurfacePoint,
) -> Result<SigmaAtPoint> {
    let radius = match x.surface().kind {
        SurfaceKind::Sphere { radius } => radius,
        SurfaceKind::HyperplaneSphere { .. } => {
            return Err(Error::UnsupportedConfiguration(
                "closed forms exist only for round spheres".into(),
            ))
        }
    };
    if !structure.is_standard_orientation() {
        return Err(Error::UnsupportedConfiguration(
            "closed forms assume λ·ε_j = +1 for every j".into(),
        ));
    }
    ensure_dim(structure.dim(), x.coords().len())?;

    let (a, b) = (structure.a, structure.b);
    let params = structure.params;
    let half_p = params.p() / 2.0;
    let root = params.sqrt_delta();
    let lambda = structure.lambda.value();
    let sigma = params.sigma;
    let c = x.coords();
    let split = CoordinateSplit::of(c, a, b);
    let xy: f64 = (0..a).map(|i| c[i] * c[a + i]).sum();

    let big_a = (half_p * (split.r1_sq + split.r2_sq) + lambda * root * xy + sigma * split.r3_sq)
        / (radius * radius);

    let n = 2 * a + b;
    let mut xi = Vector::zeros(n);
    let mut u_cov = Vector::zeros(n);
    let mut j_part = Matrix::zeros(n, n);
    for i in 0..a {
        xi[i] = ((half_p - big_a) * c[i] + lambda * root / 2.0 * c[a + i]) / radius;
        xi[a + i] = ((half_p - big_a) * c[a + i] + lambda * root / 2.0 * c[i]) / radius;
        u_cov[i] = lambda * root / (2.0 * radius) * c[a + i];
        u_cov[a + i] = lambda * root / (2.0 * radius) * c[i];
        j_part[(i, i)] = half_p;
        j_part[(a + i, a + i)] = half_p;
        j_part[(i, a + i)] = lambda * root / 2.0;
        j_part[(a + i, i)] = lambda * root / 2.0;
    }
    for k in 2 * a..n {
        xi[k] = (half_p - big_a + root / 2.0) * c[k] / radius;
        u_cov[k] = root / (2.0 * radius) * c[k];
        j_part[(k, k)] = sigma;
    }

    let proj = x.tangent_projector();
    let p_map = (j_part - c * u_cov.transpose() / radius) * &proj;
    Ok(SigmaAtPoint {
        base: x.clone(),
        params,
        p_map,
        xi: vec![xi],
        u: vec![&proj * u_cov],
        a: Matrix::from_element(1, 1, big_a),
        split: Some(split),
    })
}

/// Largest componentwise difference between two Σ-structures at the same point.
pub fn sigma_discrepancy(lhs: &SigmaAtPoint, rhs: &SigmaAtPoint) -> Result<f64> {
    ensure_dim(lhs.codim(), rhs.codim())?;
    let max_abs = |m: &Matrix| m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut worst = max_abs(&(&lhs.a - &rhs.a)).max(max_abs(&(&lhs.p_map - &rhs.p_map)));
    for alpha in 0..lhs.codim() {
        worst = worst.max((&lhs.xi[alpha] - &rhs.xi[alpha]).amax());
        worst = worst.max((&lhs.u[alpha] - &rhs.u[alpha]).amax());
    }
    if let (Some(l), Some(r)) = (lhs.split, rhs.split) {
        worst = worst
            .max((l.r1_sq - r.r1_sq).abs())
            .max((l.r2_sq - r.r2_sq).abs())
            .max((l.r3_sq - r.r3_sq).abs());
    }
    Ok(worst)
}

/// Maximum residual of each algebraic identity of the induced structure.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StructureResiduals {
    /// `P²X = pPX + qX − Σ u_α(X) ξ_α`
    pub eq9: f64,
    /// `u_α(PX) = p u_α(X) − Σ a_{αβ} u_β(X)`
    pub eq10_i: f64,
    /// `a_{αβ} = a_{βα}`
    pub eq10_ii: f64,
    /// `u_β(ξ_α) = q δ_{αβ} + p a_{αβ} − Σ a_{αγ} a_{γβ}`
    pub eq11_i: f64,
    /// `P ξ_α = p ξ_α − Σ a_{αβ} ξ_β`
    pub eq11_ii: f64,
    /// `g(PX, Y) = g(X, PY)`
    pub eq12_i: f64,
    /// `u_α(X) = g(X, ξ_α)`
    pub eq12_ii: f64,
}

impl StructureResiduals {
    pub fn max(&self) -> f64 {
        [
            self.eq9,
            self.eq10_i,
            self.eq10_ii,
            self.eq11_i,
            self.eq11_ii,
            self.eq12_i,
            self.eq12_ii,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn check_structure_relations(sigma: &SigmaAtPoint, samples: &[(Vector, Vector)]) -> StructureResiduals {
    let p = sigma.params.p();
    let q = sigma.params.q();
    let r = sigma.codim();
    let a = &sigma.a;
    let mut res = StructureResiduals {
        eq10_ii: (a - a.transpose()).amax(),
        ..Default::default()
    };

    let gram_formula = Matrix::identity(r, r) * q + a * p - a * a;
    for alpha in 0..r {
        for beta in 0..r {
            let lhs = sigma.u_of(beta, &sigma.xi[alpha]);
            res.eq11_i = res.eq11_i.max((lhs - gram_formula[(alpha, beta)]).abs());
        }
        let mut rhs = &sigma.xi[alpha] * p;
        for beta in 0..r {
            rhs -= &sigma.xi[beta] * a[(alpha, beta)];
        }
        res.eq11_ii = res
            .eq11_ii
            .max((sigma.apply_p(&sigma.xi[alpha]) - rhs).norm());
    }

    for (x, y) in samples {
        let px = sigma.apply_p(x);
        let mut rhs = &px * p + x * q;
        for alpha in 0..r {
            rhs -= &sigma.xi[alpha] * sigma.u_of(alpha, x);
        }
        res.eq9 = res.eq9.max((sigma.apply_p(&px) - rhs).norm());

        for alpha in 0..r {
            let mut rhs = p * sigma.u_of(alpha, x);
            for beta in 0..r {
                rhs -= a[(alpha, beta)] * sigma.u_of(beta, x);
            }
            res.eq10_i = res.eq10_i.max((sigma.u_of(alpha, &px) - rhs).abs());
            res.eq12_ii = res
                .eq12_ii
                .max((sigma.u_of(alpha, x) - x.dot(&sigma.xi[alpha])).abs());
        }
        res.eq12_i = res.eq12_i.max((px.dot(y) - x.dot(&sigma.apply_p(y))).abs());
    }
    res
}

/// How far `J X = PX + Σ u_α(X) N_α` and `J N_α = ξ_α + Σ a_{αβ} N_β` are from
/// reassembling exactly.
pub fn reconstruction_residual(sigma: &SigmaAtPoint, j: &Matrix, samples: &[Vector]) -> f64 {
    let normals = sigma.normals();
    let r = normals.len();
    let mut worst = 0.0f64;
    for x in samples {
        let mut rebuilt = sigma.apply_p(x);
        for (alpha, n) in normals.iter().enumerate() {
            rebuilt += n * sigma.u_of(alpha, x);
        }
        worst = worst.max((j * x - rebuilt).norm());
    }
    for alpha in 0..r {
        let mut rebuilt = sigma.xi[alpha].clone();
        for (beta, n) in normals.iter().enumerate() {
            rebuilt += n * sigma.a[(alpha, beta)];
        }
        worst = worst.max((j * &normals[alpha] - rebuilt).norm());
    }
    worst
}

/// `Γ_{αβ} = g(ξ_α, ξ_β)` from inner products.
pub fn gram_by_inner_products(sigma: &SigmaAtPoint) -> Matrix {
    let r = sigma.codim();
    Matrix::from_fn(r, r, |i, j| sigma.xi[i].dot(&sigma.xi[j]))
}

/// `Γ = qI + pA − A²` from the `a_{αβ}` matrix.
pub fn gram_by_formula(a: &Matrix, params: &MetallicParams) -> Matrix {
    let r = a.nrows();
    Matrix::identity(r, r) * params.q() + a * params.p() - a * a
}

/// Number of eigenvalues of the symmetric `Γ` above `tol·(trace Γ + Δ/4)`.
pub fn gram_rank(gram: &Matrix, params: &MetallicParams, tol: f64) -> usize {
    let threshold = tol * (gram.trace().max(0.0) + params.delta / 4.0);
    SymmetricEigen::new(gram.clone())
        .eigenvalues
        .iter()
        .filter(|&&ev| ev > threshold)
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Invariance {
    Invariant,
    NonInvariant,
    DegeneratePoint,
}

/// Pointwise classification of the tangent space with respect to `J`.
///
/// A vanishing Gram matrix alone cannot tell an invariant submanifold from an
/// isolated zero of the `ξ_α`, so the rates `∇ξ_α` decide between the two.
pub fn classify_invariance(field: &SigmaField, sigma: &SigmaAtPoint, tol: f64) -> Invariance {
    let r = sigma.codim();
    let params = &sigma.params;
    let metallic_defect =
        (&sigma.a * &sigma.a - &sigma.a * params.p() - Matrix::identity(r, r) * params.q()).amax();
    if metallic_defect <= tol {
        let proj = sigma.base.tangent_projector();
        let moving = (0..proj.ncols()).any(|k| {
            let dir = proj.column(k).into_owned();
            (0..r).any(|alpha| {
                crate::surface::induced_derivative(
                    &dir,
                    &field.xi_field(alpha),
                    &sigma.base,
                    DerivativeMode::Analytic,
                )
                .map(|d| d.amax() > tol)
                .unwrap_or(true)
            })
        });
        return if moving {
            Invariance::DegeneratePoint
        } else {
            Invariance::Invariant
        };
    }
    let gram = gram_by_inner_products(sigma);
    if gram_rank(&gram, params, tol) == r {
        Invariance::NonInvariant
    } else {
        Invariance::DegeneratePoint
    }
}
