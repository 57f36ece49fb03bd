//! Covariant derivatives of the Σ-structure, the Nijenhuis tensor of `P` and
//! the exterior derivative of the `u_α`.
//!
//! Left-hand sides are computed from first principles by differentiating the
//! induced fields (analytic jets or central differences). Right-hand sides
//! are assembled from pointwise data: `A_α`, `h_α`, `l_{αβ}`, `P`, `ξ_α`,
//! `u_α`, `a_{αβ}`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metallic::{Matrix, Vector};
use crate::sigma::{SigmaAtPoint, SigmaField};
use crate::surface::{
    ambient_derivative, induced_derivative, lie_bracket, normal_connection_coeffs,
    scalar_derivative, shape_operator, DerivativeMode, SurfacePoint, VectorField,
};

/// Pointwise data needed by the structure equations.
#[derive(Debug, Clone)]
pub struct PointContext {
    pub sigma: SigmaAtPoint,
    pub shape: Vec<Matrix>,
}

impl PointContext {
    pub fn new(field: &SigmaField, x: &SurfacePoint) -> Self {
        let sigma = field.at(x);
        let shape = (0..sigma.codim())
            .map(|alpha| shape_operator(x, alpha))
            .collect();
        Self { sigma, shape }
    }

    /// Replace the shape operators, e.g. by a synthetic non-umbilic one.
    pub fn with_shape_operators(mut self, shape: Vec<Matrix>) -> Self {
        assert_eq!(shape.len(), self.sigma.codim());
        self.shape = shape;
        self
    }

    pub fn codim(&self) -> usize {
        self.sigma.codim()
    }

    pub fn base(&self) -> &SurfacePoint {
        &self.sigma.base
    }

    /// `h_α(X, Y) = g(A_α X, Y)`.
    pub fn h(&self, alpha: usize, x: &Vector, y: &Vector) -> f64 {
        (&self.shape[alpha] * x).dot(y)
    }

    /// `l_{αβ}(X)`.
    pub fn l(&self, x: &Vector) -> Matrix {
        normal_connection_coeffs(self.base(), x)
    }

    pub fn eq17_rhs(&self, x: &Vector, y: &Vector) -> Vector {
        let s = &self.sigma;
        let mut out = Vector::zeros(x.len());
        for alpha in 0..self.codim() {
            out += &s.xi[alpha] * self.h(alpha, x, y);
            out += &self.shape[alpha] * x * s.u_of(alpha, y);
        }
        out
    }

    pub fn eq18_rhs(&self, x: &Vector, y: &Vector, alpha: usize) -> f64 {
        let s = &self.sigma;
        let l = self.l(x);
        let mut out = -self.h(alpha, x, &s.apply_p(y));
        for beta in 0..self.codim() {
            out += l[(alpha, beta)] * s.u_of(beta, y) + s.a[(beta, alpha)] * self.h(beta, x, y);
        }
        out
    }

    pub fn eq19_rhs(&self, x: &Vector, alpha: usize) -> Vector {
        let s = &self.sigma;
        let l = self.l(x);
        let mut out = -s.apply_p(&(&self.shape[alpha] * x));
        for beta in 0..self.codim() {
            out += &self.shape[beta] * x * s.a[(alpha, beta)];
            out += &s.xi[beta] * l[(alpha, beta)];
        }
        out
    }

    pub fn eq20_rhs(&self, x: &Vector) -> Matrix {
        let s = &self.sigma;
        let r = self.codim();
        let l = self.l(x);
        Matrix::from_fn(r, r, |alpha, beta| {
            let mut out =
                -s.u_of(alpha, &(&self.shape[beta] * x)) - s.u_of(beta, &(&self.shape[alpha] * x));
            for gamma in 0..r {
                out +=
                    s.a[(gamma, beta)] * l[(alpha, gamma)] + s.a[(alpha, gamma)] * l[(beta, gamma)];
            }
            out
        })
    }
}

/// `(∇_X P) Y = ∇_X(PY) − P(∇_X Y)`.
pub fn nabla_p<Y: VectorField>(
    field: &SigmaField,
    xv: &Vector,
    y_field: &Y,
    x: &SurfacePoint,
    mode: DerivativeMode,
) -> Result<Vector> {
    let py = field.p_of(y_field);
    let sigma = field.at(x);
    Ok(induced_derivative(xv, &py, x, mode)?
        - sigma.apply_p(&induced_derivative(xv, y_field, x, mode)?))
}

/// `(∇_X u_α)(Y) = X(u_α(Y)) − u_α(∇_X Y)`.
pub fn nabla_u<Y: VectorField>(
    field: &SigmaField,
    xv: &Vector,
    y_field: &Y,
    x: &SurfacePoint,
    alpha: usize,
    mode: DerivativeMode,
) -> Result<f64> {
    let directional = scalar_derivative(x, xv, mode, |frame| {
        field.u_jet(frame, alpha, &y_field.jet(frame))
    })?;
    let sigma = field.at(x);
    Ok(directional - sigma.u_of(alpha, &induced_derivative(xv, y_field, x, mode)?))
}

/// `∇_X ξ_α`.
pub fn nabla_xi(
    field: &SigmaField,
    xv: &Vector,
    x: &SurfacePoint,
    alpha: usize,
    mode: DerivativeMode,
) -> Result<Vector> {
    induced_derivative(xv, &field.xi_field(alpha), x, mode)
}

/// The matrix of directional derivatives `X(a_{αβ})`.
pub fn derivative_a(
    field: &SigmaField,
    xv: &Vector,
    x: &SurfacePoint,
    mode: DerivativeMode,
) -> Result<Matrix> {
    let r = field.surface.codim();
    let mut out = Matrix::zeros(r, r);
    for alpha in 0..r {
        for beta in 0..r {
            out[(alpha, beta)] =
                scalar_derivative(x, xv, mode, |frame| field.a_jet(frame, alpha, beta))?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NijenhuisMode {
    /// `[PX, PY] + P²[X, Y] − P[PX, Y] − P[X, PY]`.
    Bracket,
    /// `(∇_{PX}P)Y − (∇_{PY}P)X − P[(∇_X P)Y − (∇_Y P)X]`.
    Covariant,
}

pub fn nijenhuis_p<X: VectorField, Y: VectorField>(
    field: &SigmaField,
    x_field: &X,
    y_field: &Y,
    x: &SurfacePoint,
    mode: NijenhuisMode,
    deriv: DerivativeMode,
) -> Result<Vector> {
    let sigma = field.at(x);
    let px_field = field.p_of(x_field);
    let py_field = field.p_of(y_field);
    match mode {
        NijenhuisMode::Bracket => {
            let b_pxpy = lie_bracket(&px_field, &py_field, x, deriv)?;
            let b_xy = lie_bracket(x_field, y_field, x, deriv)?;
            let b_pxy = lie_bracket(&px_field, y_field, x, deriv)?;
            let b_xpy = lie_bracket(x_field, &py_field, x, deriv)?;
            Ok(b_pxpy + sigma.apply_p(&sigma.apply_p(&b_xy))
                - sigma.apply_p(&b_pxy)
                - sigma.apply_p(&b_xpy))
        }
        NijenhuisMode::Covariant => {
            let xv = x_field.value_at(x);
            let yv = y_field.value_at(x);
            let pxv = sigma.apply_p(&xv);
            let pyv = sigma.apply_p(&yv);
            let first = nabla_p(field, &pxv, y_field, x, deriv)?;
            let second = nabla_p(field, &pyv, x_field, x, deriv)?;
            let inner =
                nabla_p(field, &xv, y_field, x, deriv)? - nabla_p(field, &yv, x_field, x, deriv)?;
            Ok(first - second - sigma.apply_p(&inner))
        }
    }
}

/// `du_α(X, Y)` with `2du_α(X, Y) = X(u_α(Y)) − Y(u_α(X)) − u_α([X, Y])`.
pub fn exterior_du<X: VectorField, Y: VectorField>(
    field: &SigmaField,
    x_field: &X,
    y_field: &Y,
    x: &SurfacePoint,
    alpha: usize,
    mode: DerivativeMode,
) -> Result<f64> {
    let xv = x_field.value_at(x);
    let yv = y_field.value_at(x);
    let x_of_uy = scalar_derivative(x, &xv, mode, |frame| {
        field.u_jet(frame, alpha, &y_field.jet(frame))
    })?;
    let y_of_ux = scalar_derivative(x, &yv, mode, |frame| {
        field.u_jet(frame, alpha, &x_field.jet(frame))
    })?;
    let bracket = lie_bracket(x_field, y_field, x, mode)?;
    let sigma = field.at(x);
    Ok(0.5 * (x_of_uy - y_of_ux - sigma.u_of(alpha, &bracket)))
}

/// Ambient derivative of an extended field along `v` written out for the
/// round sphere: `−(⟨W, V⟩x + ⟨W, x⟩V)/R²`.
pub fn sphere_extended_derivative(w: &Vector, x: &Vector, v: &Vector, radius: f64) -> Vector {
    -(x * w.dot(v) + v * w.dot(x)) / (radius * radius)
}

/// Check that `ambient_derivative` on extended fields matches the sphere formula.
pub fn sphere_derivative_defect<F: VectorField>(
    field: &F,
    w: &Vector,
    x: &SurfacePoint,
    v: &Vector,
    radius: f64,
) -> Result<f64> {
    let d = ambient_derivative(field, x, v, DerivativeMode::Analytic)?;
    Ok((d - sphere_extended_derivative(w, x.coords(), v, radius)).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metallic::{build_ambient_structure, Preset, Sign};
    use crate::surface::{extend_field, EmbeddedSurface};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn golden_s2() -> SigmaField {
        let j = build_ambient_structure(Preset::Golden.params(), 1, 1, Sign::Plus, &[1]).unwrap();
        SigmaField::new(&j, EmbeddedSurface::sphere(3, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn nabla_p_fixture() {
        let field = golden_s2();
        let x = field.surface.point(v(&[1.0, 0.0, 0.0])).unwrap();
        let e2 = v(&[0.0, 1.0, 0.0]);
        let lhs = nabla_p(
            &field,
            &e2,
            &extend_field(&e2),
            &x,
            DerivativeMode::Analytic,
        )
        .unwrap();
        let expected = v(&[0.0, -5f64.sqrt(), 0.0]);
        assert!((&lhs - &expected).norm() <= 1e-14);
        let rhs = PointContext::new(&field, &x).eq17_rhs(&e2, &e2);
        assert!((rhs - expected).norm() <= 1e-14);
    }

    #[test]
    fn nabla_u_and_xi_fixture() {
        let field = golden_s2();
        let x = field.surface.point(v(&[1.0, 0.0, 0.0])).unwrap();
        let e2 = v(&[0.0, 1.0, 0.0]);
        let du = nabla_u(
            &field,
            &e2,
            &extend_field(&e2),
            &x,
            0,
            DerivativeMode::Analytic,
        )
        .unwrap();
        assert!(du.abs() <= 1e-14);
        let dxi = nabla_xi(&field, &e2, &x, 0, DerivativeMode::Analytic).unwrap();
        assert!(dxi.norm() <= 1e-14);
        let da = derivative_a(&field, &e2, &x, DerivativeMode::Analytic).unwrap();
        assert!((da[(0, 0)] - 5f64.sqrt()).abs() <= 1e-14);
        let zero = extend_field(&Vector::zeros(3));
        assert_eq!(
            nabla_u(&field, &e2, &zero, &x, 0, DerivativeMode::Analytic).unwrap(),
            0.0
        );
    }

    #[test]
    fn xi_has_a_nondegenerate_zero_at_the_pole() {
        let field = golden_s2();
        let pole = field.surface.point(v(&[0.0, 0.0, 1.0])).unwrap();
        let e1 = v(&[1.0, 0.0, 0.0]);
        let dxi = nabla_xi(&field, &e1, &pole, 0, DerivativeMode::Analytic).unwrap();
        let sigma = field.at(&pole);
        let phi = Preset::Golden.constant();
        let expected = sigma.apply_p(&e1) - &e1 * phi;
        assert!((&dxi - expected).norm() <= 1e-14);
        assert!(dxi.norm() > 0.5);
    }

    #[test]
    fn nijenhuis_and_du_are_alternating() {
        let field = golden_s2();
        let x = field.surface.point(v(&[0.6, 0.0, 0.8])).unwrap();
        let a = extend_field(&v(&[0.3, -1.0, 0.2]));
        let b = extend_field(&v(&[1.0, 0.5, -0.4]));
        for mode in [NijenhuisMode::Bracket, NijenhuisMode::Covariant] {
            let naa = nijenhuis_p(&field, &a, &a, &x, mode, DerivativeMode::Analytic).unwrap();
            assert!(naa.norm() <= 1e-14);
            let nab = nijenhuis_p(&field, &a, &b, &x, mode, DerivativeMode::Analytic).unwrap();
            let nba = nijenhuis_p(&field, &b, &a, &x, mode, DerivativeMode::Analytic).unwrap();
            assert!((nab + nba).norm() <= 1e-10);
        }
        let daa = exterior_du(&field, &a, &a, &x, 0, DerivativeMode::Analytic).unwrap();
        assert!(daa.abs() <= 1e-15);
        let dab = exterior_du(&field, &a, &b, &x, 0, DerivativeMode::Analytic).unwrap();
        let dba = exterior_du(&field, &b, &a, &x, 0, DerivativeMode::Analytic).unwrap();
        assert!((dab + dba).abs() <= 1e-12);
    }
}
