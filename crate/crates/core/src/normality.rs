//! Normality of the induced structure: the commutators `B_α = PA_α − A_αP`,
//! the torsion and `du_α` formulas, and linear independence of the `ξ_α`
//! through the Gram matrix `Γ_{αβ} = g(ξ_α, ξ_β)`.

use serde::{Deserialize, Serialize};

use crate::covariant::{exterior_du, nijenhuis_p, NijenhuisMode, PointContext};
use crate::error::Result;
use crate::metallic::{Matrix, MetallicParams, Vector};
use crate::sigma::{
    classify_invariance, gram_by_formula, gram_by_inner_products, gram_rank, Invariance,
    SigmaAtPoint, SigmaField,
};
use crate::surface::{extend_field, DerivativeMode, SurfacePoint};

/// Relative eigenvalue threshold for rank decisions on `Γ`.
pub const RANK_TOL: f64 = 1e-8;

/// `B_α = P A_α − A_α P`.
pub fn commutator_b(ctx: &PointContext, alpha: usize) -> Matrix {
    let p = &ctx.sigma.p_map;
    p * &ctx.shape[alpha] - &ctx.shape[alpha] * p
}

/// `max |g(B X, Y) + g(B Y, X)|` over tangent unit directions, via `Π(B + Bᵀ)Π`.
pub fn skew_defect(b: &Matrix, x: &SurfacePoint) -> f64 {
    let proj = x.tangent_projector();
    (&proj * (b + b.transpose()) * &proj).norm()
}

impl PointContext {
    /// `Σ_α [g(X, ξ_α) B_α Y − g(Y, ξ_α) B_α X − g(B_α X, Y) ξ_α]`.
    pub fn eq22_rhs(&self, x: &Vector, y: &Vector) -> Vector {
        let s = &self.sigma;
        let mut out = Vector::zeros(x.len());
        for alpha in 0..self.codim() {
            let b = commutator_b(self, alpha);
            let bx = &b * x;
            out += &b * y * x.dot(&s.xi[alpha]) - &bx * y.dot(&s.xi[alpha]);
            out -= &s.xi[alpha] * bx.dot(y);
        }
        out
    }

    /// `−g(B_α X, Y) + Σ_β [l_{αβ}(X) g(Y, ξ_β) − l_{αβ}(Y) g(X, ξ_β)]`, i.e. `2du_α(X, Y)`.
    pub fn eq23_rhs(&self, x: &Vector, y: &Vector, alpha: usize) -> f64 {
        let s = &self.sigma;
        let (lx, ly) = (self.l(x), self.l(y));
        let mut out = -(commutator_b(self, alpha) * x).dot(y);
        for beta in 0..self.codim() {
            out += lx[(alpha, beta)] * y.dot(&s.xi[beta]) - ly[(alpha, beta)] * x.dot(&s.xi[beta]);
        }
        out
    }

    /// Right-hand side of `N_P(X, Y) − 2Σ du_α(X, Y) ξ_α`.
    pub fn eq24_rhs(&self, x: &Vector, y: &Vector) -> Vector {
        let s = &self.sigma;
        let (lx, ly) = (self.l(x), self.l(y));
        let mut out = self.eq25_difference(x, y);
        for alpha in 0..self.codim() {
            let mut coeff = 0.0;
            for beta in 0..self.codim() {
                coeff +=
                    lx[(alpha, beta)] * y.dot(&s.xi[beta]) - ly[(alpha, beta)] * x.dot(&s.xi[beta]);
            }
            out -= &s.xi[alpha] * coeff;
        }
        out
    }

    /// `Σ g(X, ξ_α) B_α Y − Σ g(Y, ξ_α) B_α X`.
    pub fn eq25_difference(&self, x: &Vector, y: &Vector) -> Vector {
        let s = &self.sigma;
        let mut out = Vector::zeros(x.len());
        for alpha in 0..self.codim() {
            let b = commutator_b(self, alpha);
            out += &b * y * x.dot(&s.xi[alpha]) - &b * x * y.dot(&s.xi[alpha]);
        }
        out
    }

    /// `(∇_X P) Y` assembled from pointwise data rather than differentiation.
    pub fn nabla_p_algebraic(&self, x: &Vector, y: &Vector) -> Vector {
        self.eq17_rhs(x, y)
    }

    /// `N_P(X, Y)` from the covariant pattern fed with [`Self::nabla_p_algebraic`].
    pub fn nijenhuis_algebraic(&self, x: &Vector, y: &Vector) -> Vector {
        let s = &self.sigma;
        let (px, py) = (s.apply_p(x), s.apply_p(y));
        self.nabla_p_algebraic(&px, y)
            - self.nabla_p_algebraic(&py, x)
            - s.apply_p(&(self.nabla_p_algebraic(x, y) - self.nabla_p_algebraic(y, x)))
    }

    /// `2du_α(X, Y) = (∇_X u_α)(Y) − (∇_Y u_α)(X)` with the covariant
    /// derivatives taken from their pointwise expressions.
    pub fn two_du_algebraic(&self, x: &Vector, y: &Vector, alpha: usize) -> f64 {
        self.eq18_rhs(x, y, alpha) - self.eq18_rhs(y, x, alpha)
    }
}

/// `N_P(X, Y) − 2Σ du_α(X, Y) ξ_α`, from brackets and exterior derivatives.
pub fn normality_defect(
    field: &SigmaField,
    x: &SurfacePoint,
    xv: &Vector,
    yv: &Vector,
    mode: DerivativeMode,
) -> Result<Vector> {
    let (xf, yf) = (extend_field(xv), extend_field(yv));
    let sigma = field.at(x);
    let mut out = nijenhuis_p(field, &xf, &yf, x, NijenhuisMode::Bracket, mode)?;
    for alpha in 0..sigma.codim() {
        out -= &sigma.xi[alpha] * (2.0 * exterior_du(field, &xf, &yf, x, alpha, mode)?);
    }
    Ok(out)
}

/// `max ‖N_P(X, Y) − 2Σ du_α(X, Y) ξ_α‖` over the tangent pairs.
pub fn normality_residual(
    field: &SigmaField,
    x: &SurfacePoint,
    samples: &[(Vector, Vector)],
    mode: DerivativeMode,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for (xv, yv) in samples {
        worst = worst.max(normality_defect(field, x, xv, yv, mode)?.norm());
    }
    Ok(worst)
}

/// `max ‖N_P(X, Y) − eq22_rhs(X, Y)‖` with `N_P` taken from brackets.
pub fn verify_torsion_formula(
    field: &SigmaField,
    x: &SurfacePoint,
    samples: &[(Vector, Vector)],
    mode: DerivativeMode,
) -> Result<f64> {
    let ctx = PointContext::new(field, x);
    let mut worst = 0.0f64;
    for (xv, yv) in samples {
        let n = nijenhuis_p(
            field,
            &extend_field(xv),
            &extend_field(yv),
            x,
            NijenhuisMode::Bracket,
            mode,
        )?;
        worst = worst.max((n - ctx.eq22_rhs(xv, yv)).norm());
    }
    Ok(worst)
}

/// `max |2du_α(X, Y) − eq23_rhs(X, Y)|` with `du_α` from its exterior-derivative definition.
pub fn verify_du_formula(
    field: &SigmaField,
    x: &SurfacePoint,
    samples: &[(Vector, Vector)],
    alpha: usize,
    mode: DerivativeMode,
) -> Result<f64> {
    let ctx = PointContext::new(field, x);
    let mut worst = 0.0f64;
    for (xv, yv) in samples {
        let du = exterior_du(field, &extend_field(xv), &extend_field(yv), x, alpha, mode)?;
        worst = worst.max((2.0 * du - ctx.eq23_rhs(xv, yv, alpha)).abs());
    }
    Ok(worst)
}

/// `max ‖(N_P − 2Σ du_α ⊗ ξ_α)(X, Y) − eq24_rhs(X, Y)‖`.
pub fn verify_combined_formula(
    field: &SigmaField,
    x: &SurfacePoint,
    samples: &[(Vector, Vector)],
    mode: DerivativeMode,
) -> Result<f64> {
    let ctx = PointContext::new(field, x);
    let mut worst = 0.0f64;
    for (xv, yv) in samples {
        let lhs = normality_defect(field, x, xv, yv, mode)?;
        worst = worst.max((lhs - ctx.eq24_rhs(xv, yv)).norm());
    }
    Ok(worst)
}

/// `max ‖Σ g(X, ξ_α) B_α Y − Σ g(Y, ξ_α) B_α X‖` (the relation left when `l = 0`).
pub fn verify_symmetric_relation(ctx: &PointContext, samples: &[(Vector, Vector)]) -> f64 {
    samples
        .iter()
        .map(|(xv, yv)| ctx.eq25_difference(xv, yv).norm())
        .fold(0.0, f64::max)
}

/// Outcome of a synthetic shape-operator perturbation at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationProbe {
    /// Largest `‖B̃_α‖_F`.
    pub commutator_norm: f64,
    /// Largest `‖eq22_rhs‖` over the samples.
    pub torsion_rhs_norm: f64,
    /// `max ‖N_P − eq22_rhs‖` with both sides built from `Ã`.
    pub torsion_identity_residual: f64,
    /// `max ‖N_P − 2Σ du_α ξ_α‖` with both sides built from `Ã`.
    pub normality_residual: f64,
}

/// Replace every `A_α` by `A_α + ε·S` (with `S` symmetric) and push the result
/// through the same algebra that produces `N_P` and `du_α`.
pub fn perturbation_probe(
    ctx: &PointContext,
    perturbation: &Matrix,
    epsilon: f64,
    samples: &[(Vector, Vector)],
) -> PerturbationProbe {
    let proj = ctx.base().tangent_projector();
    let sym = (perturbation + perturbation.transpose()) * 0.5;
    let bump = &proj * sym * &proj * epsilon;
    let shape = ctx.shape.iter().map(|a| a + &bump).collect();
    let probe = ctx.clone().with_shape_operators(shape);

    let commutator_norm = (0..probe.codim())
        .map(|alpha| commutator_b(&probe, alpha).norm())
        .fold(0.0, f64::max);
    let mut out = PerturbationProbe {
        commutator_norm,
        torsion_rhs_norm: 0.0,
        torsion_identity_residual: 0.0,
        normality_residual: 0.0,
    };
    for (xv, yv) in samples {
        let n = probe.nijenhuis_algebraic(xv, yv);
        let rhs = probe.eq22_rhs(xv, yv);
        out.torsion_rhs_norm = out.torsion_rhs_norm.max(rhs.norm());
        out.torsion_identity_residual = out.torsion_identity_residual.max((&n - rhs).norm());
        let mut defect = n;
        for alpha in 0..probe.codim() {
            defect -= &probe.sigma.xi[alpha] * probe.two_du_algebraic(xv, yv, alpha);
        }
        out.normality_residual = out.normality_residual.max(defect.norm());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramReport {
    pub by_inner_products: Matrix,
    pub by_formula: Matrix,
    /// `max |Γ_inner − Γ_formula|`.
    pub agreement: f64,
    pub det: f64,
    pub rank: usize,
}

pub fn gram_matrix(sigma: &SigmaAtPoint) -> GramReport {
    let by_inner_products = gram_by_inner_products(sigma);
    let by_formula = gram_by_formula(&sigma.a, &sigma.params);
    let agreement = (&by_inner_products - &by_formula).amax();
    let det = by_inner_products.determinant();
    let rank = gram_rank(&by_inner_products, &sigma.params, RANK_TOL);
    GramReport {
        by_inner_products,
        by_formula,
        agreement,
        det,
        rank,
    }
}

/// Roots of `a ↦ det Γ(a) = q + pa − a²` for `r = 1`, recovered by sampling
/// the Gram formula at three abscissae and solving the fitted quadratic.
pub fn gram_determinant_roots(params: &MetallicParams) -> (f64, f64) {
    let det_at = |a: f64| gram_by_formula(&Matrix::from_element(1, 1, a), params).determinant();
    let (f0, f1, fm1) = (det_at(0.0), det_at(1.0), det_at(-1.0));
    let c = f0;
    let b = (f1 - fm1) / 2.0;
    let a = (f1 + fm1) / 2.0 - f0;
    let disc = (b * b - 4.0 * a * c).sqrt();
    // Stable quadratic roots.
    let qv = -0.5 * (b + b.signum() * disc);
    let (r1, r2) = (qv / a, c / qv);
    (r1.max(r2), r1.min(r2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointIndependence {
    pub index: usize,
    pub rank: usize,
    pub det: f64,
    pub classification: Invariance,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceSummary {
    pub codim: usize,
    pub points: Vec<PointIndependence>,
    pub min_abs_det: f64,
    pub flagged: usize,
}

impl IndependenceSummary {
    pub fn flagged_fraction(&self) -> f64 {
        if self.points.is_empty() {
            0.0
        } else {
            self.flagged as f64 / self.points.len() as f64
        }
    }
}

/// Why `ξ_1, …, ξ_r` fail to be independent at a point, if they do.
pub fn degeneracy_reason(sigma: &SigmaAtPoint, gram: &GramReport) -> Option<String> {
    let r = sigma.codim();
    if gram.rank == r {
        return None;
    }
    let floor = RANK_TOL * (gram.by_inner_products.trace().max(0.0) + sigma.params.delta / 4.0);
    let vanishing: Vec<usize> = (0..r)
        .filter(|&alpha| gram.by_inner_products[(alpha, alpha)] <= floor)
        .collect();
    Some(if vanishing.len() == r {
        "all ξ vanish: the tangent space is J-invariant at this point".to_string()
    } else if !vanishing.is_empty() {
        let names: Vec<String> = vanishing.iter().map(|a| format!("N{}", a + 1)).collect();
        format!("normal direction {} is J-invariant", names.join(", "))
    } else {
        "ξ vectors are linearly dependent".to_string()
    })
}

pub fn linear_independence_report(
    field: &SigmaField,
    points: &[SurfacePoint],
) -> IndependenceSummary {
    let mut summary = IndependenceSummary {
        codim: field.surface.codim(),
        points: Vec::with_capacity(points.len()),
        min_abs_det: f64::INFINITY,
        flagged: 0,
    };
    for (index, x) in points.iter().enumerate() {
        let sigma = field.at(x);
        let entry = point_independence(field, &sigma, index);
        summary.min_abs_det = summary.min_abs_det.min(entry.det.abs());
        if entry.reason.is_some() {
            summary.flagged += 1;
        }
        summary.points.push(entry);
    }
    summary
}

pub fn point_independence(
    field: &SigmaField,
    sigma: &SigmaAtPoint,
    index: usize,
) -> PointIndependence {
    let gram = gram_matrix(sigma);
    PointIndependence {
        index,
        rank: gram.rank,
        det: gram.det,
        classification: classify_invariance(field, sigma, RANK_TOL),
        reason: degeneracy_reason(sigma, &gram),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metallic::{build_ambient_structure, Preset, Sign};
    use crate::surface::{point_stream, sample_point, EmbeddedSurface};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn golden(surface: EmbeddedSurface) -> SigmaField {
        let j = build_ambient_structure(Preset::Golden.params(), 1, 1, Sign::Plus, &[1]).unwrap();
        SigmaField::new(&j, surface).unwrap()
    }

    #[test]
    fn gram_fixtures() {
        let field = golden(EmbeddedSurface::sphere(3, 1.0).unwrap());
        let eq = field.at(&field.surface.point(v(&[1.0, 0.0, 0.0])).unwrap());
        let g = gram_matrix(&eq);
        assert!((g.by_inner_products[(0, 0)] - 1.25).abs() <= 1e-12);
        assert!((g.det - 1.25).abs() <= 1e-12);
        assert_eq!(g.rank, 1);
        let pole = field.at(&field.surface.point(v(&[0.0, 0.0, 1.0])).unwrap());
        let g = gram_matrix(&pole);
        assert!(g.by_inner_products[(0, 0)].abs() <= 1e-12);
        assert_eq!(g.rank, 0);
    }

    #[test]
    fn hyperplane_gram_is_singular() {
        let field = golden(EmbeddedSurface::hyperplane_sphere(3, 1.0, 0.5).unwrap());
        for i in 0..20 {
            let x = sample_point(&field.surface, &mut point_stream(11, i));
            let sigma = field.at(&x);
            let g = gram_matrix(&sigma);
            assert!(g.by_inner_products[(1, 1)].abs() <= 1e-12);
            assert!(g.det.abs() <= 1e-12);
            assert!(g.rank <= 1);
            let reason = degeneracy_reason(&sigma, &g).unwrap();
            assert_eq!(reason, "normal direction N2 is J-invariant");
        }
    }

    #[test]
    fn determinant_roots_are_the_metallic_pair() {
        for preset in Preset::ALL {
            let params = preset.params();
            let (hi, lo) = gram_determinant_roots(&params);
            assert!((hi - params.sigma).abs() <= 1e-10);
            assert!((lo - params.sigma_bar).abs() <= 1e-10);
        }
    }

    #[test]
    fn commutators_vanish_on_umbilic_surfaces() {
        let field = golden(EmbeddedSurface::hyperplane_sphere(3, 1.0, 0.5).unwrap());
        let x = sample_point(&field.surface, &mut point_stream(1, 3));
        let ctx = PointContext::new(&field, &x);
        for alpha in 0..2 {
            assert!(commutator_b(&ctx, alpha).norm() <= 1e-12);
        }
    }

    #[test]
    fn perturbed_shape_operator_is_detected() {
        let field = golden(EmbeddedSurface::sphere(3, 1.0).unwrap());
        let x = field.surface.point(v(&[0.6, 0.0, 0.8])).unwrap();
        let ctx = PointContext::new(&field, &x);
        let s = Matrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
        let samples = vec![(v(&[0.0, 1.0, 0.0]), v(&[0.8, 0.0, -0.6]))];
        let probe = perturbation_probe(&ctx, &s, 1e-2, &samples);
        assert!(probe.commutator_norm > 1e-4);
        assert!(probe.torsion_identity_residual <= 1e-12);
        assert!(probe.normality_residual > 1e-4);
        let b = commutator_b(
            &ctx.clone().with_shape_operators(vec![
                &ctx.shape[0] + &x.tangent_projector() * &s * &x.tangent_projector() * 1e-2,
            ]),
            0,
        );
        assert!(skew_defect(&b, &x) <= 1e-12);
    }
}
