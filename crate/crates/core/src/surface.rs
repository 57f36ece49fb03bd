//! Embedded surfaces of Euclidean space and their extrinsic geometry.
//!
//! Two surfaces are supported: the round sphere `‖x‖ = R` (codimension 1) and
//! a sphere of radius `r′` inside the affine hyperplane `x_n = c`
//! (codimension 2). Both carry a global smooth orthonormal normal frame, so
//! tangent fields, shape operators and normal-connection coefficients are
//! computed from closed-form normals.
//!
//! Sign convention: `D_X N_α = −A_α X + ∇^⊥_X N_α` with the outward normal,
//! which makes the sphere's shape operator `−(1/R)·Id`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::jet::{FrameJet, ScalarJet, VectorJet};
use crate::metallic::{Matrix, Vector};

/// Relative step used by the finite-difference path.
pub const FD_RELATIVE_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurfaceKind {
    Sphere { radius: f64 },
    HyperplaneSphere { sub_radius: f64, offset: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedSurface {
    pub kind: SurfaceKind,
    pub ambient_dim: usize,
}

impl EmbeddedSurface {
    pub fn sphere(ambient_dim: usize, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Domain(format!(
                "sphere radius must be positive, got {radius}"
            )));
        }
        if ambient_dim < 2 {
            return Err(Error::Domain(
                "sphere needs an ambient dimension of at least 2".into(),
            ));
        }
        Ok(Self {
            kind: SurfaceKind::Sphere { radius },
            ambient_dim,
        })
    }

    pub fn hyperplane_sphere(ambient_dim: usize, sub_radius: f64, offset: f64) -> Result<Self> {
        if !(sub_radius.is_finite() && sub_radius > 0.0) {
            return Err(Error::Domain(format!(
                "sub-sphere radius must be positive, got {sub_radius}"
            )));
        }
        if !offset.is_finite() {
            return Err(Error::Domain("hyperplane offset must be finite".into()));
        }
        if ambient_dim < 3 {
            return Err(Error::Domain(
                "hyperplane-sphere needs an ambient dimension of at least 3".into(),
            ));
        }
        Ok(Self {
            kind: SurfaceKind::HyperplaneSphere { sub_radius, offset },
            ambient_dim,
        })
    }

    pub fn codim(&self) -> usize {
        match self.kind {
            SurfaceKind::Sphere { .. } => 1,
            SurfaceKind::HyperplaneSphere { .. } => 2,
        }
    }

    pub fn dim(&self) -> usize {
        self.ambient_dim - self.codim()
    }

    /// Radius of the round sphere that carries the surface.
    pub fn scale(&self) -> f64 {
        match self.kind {
            SurfaceKind::Sphere { radius } => radius,
            SurfaceKind::HyperplaneSphere { sub_radius, .. } => sub_radius,
        }
    }

    fn center(&self) -> Vector {
        let mut c = Vector::zeros(self.ambient_dim);
        if let SurfaceKind::HyperplaneSphere { offset, .. } = self.kind {
            c[self.ambient_dim - 1] = offset;
        }
        c
    }

    /// Largest violation of the defining equations at `coords`.
    pub fn defect(&self, coords: &Vector) -> f64 {
        match self.kind {
            SurfaceKind::Sphere { radius } => (coords.norm() - radius).abs(),
            SurfaceKind::HyperplaneSphere { sub_radius, offset } => {
                let last = self.ambient_dim - 1;
                let planar = coords.rows(0, last).norm();
                (planar - sub_radius)
                    .abs()
                    .max((coords[last] - offset).abs())
            }
        }
    }

    /// Wrap `coords` as a surface point after checking the defining equations.
    pub fn point(&self, coords: Vector) -> Result<SurfacePoint> {
        ensure_dim(self.ambient_dim, coords.len())?;
        let defect = self.defect(&coords);
        if defect > 1e-10 * self.scale().max(1.0) {
            return Err(Error::Domain(format!(
                "point is off the surface by {defect:e}"
            )));
        }
        Ok(SurfacePoint {
            surface: *self,
            coords,
        })
    }

    /// Radial offset from the center, restricted to the hyperplane when present.
    fn radial(&self, coords: &Vector) -> Vector {
        let mut y = coords - self.center();
        if let SurfaceKind::HyperplaneSphere { .. } = self.kind {
            y[self.ambient_dim - 1] = 0.0;
        }
        y
    }

    fn flatten(&self, v: &Vector) -> Vector {
        let mut v = v.clone();
        if let SurfaceKind::HyperplaneSphere { .. } = self.kind {
            v[self.ambient_dim - 1] = 0.0;
        }
        v
    }

    /// Normal frame at `coords` and its rates of change along `direction`.
    pub fn frame_jet(&self, coords: &Vector, direction: &Vector) -> FrameJet {
        let y = self.radial(coords);
        let len = y.norm();
        let n1 = &y / len;
        let dv = self.flatten(direction);
        let rate1 = (&dv - &n1 * n1.dot(&dv)) / len;
        let (normals, normal_rates) = match self.kind {
            SurfaceKind::Sphere { .. } => (vec![n1], vec![rate1]),
            SurfaceKind::HyperplaneSphere { .. } => {
                let mut n2 = Vector::zeros(self.ambient_dim);
                n2[self.ambient_dim - 1] = 1.0;
                (vec![n1, n2], vec![rate1, Vector::zeros(self.ambient_dim)])
            }
        };
        FrameJet {
            point: coords.clone(),
            direction: direction.clone(),
            normals,
            normal_rates,
        }
    }

    /// Frame at rest (zero direction).
    pub fn frame(&self, coords: &Vector) -> FrameJet {
        self.frame_jet(coords, &Vector::zeros(self.ambient_dim))
    }

    /// Radial renormalisation `γ(t)` with `γ(0) = x`, `γ′(0) = v` for tangent `v`.
    pub fn curve(&self, coords: &Vector, v: &Vector, t: f64) -> Vector {
        let y = self.radial(coords) + self.flatten(v) * t;
        self.center() + &y * (self.scale() / y.norm())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePoint {
    surface: EmbeddedSurface,
    coords: Vector,
}

impl SurfacePoint {
    pub fn coords(&self) -> &Vector {
        &self.coords
    }

    pub fn surface(&self) -> &EmbeddedSurface {
        &self.surface
    }

    pub fn frame(&self) -> FrameJet {
        self.surface.frame(&self.coords)
    }

    pub fn frame_jet(&self, direction: &Vector) -> FrameJet {
        self.surface.frame_jet(&self.coords, direction)
    }

    /// Orthogonal projector onto the tangent space, as an ambient matrix.
    pub fn tangent_projector(&self) -> Matrix {
        let n = self.surface.ambient_dim;
        let mut proj = Matrix::identity(n, n);
        for normal in unit_normal_frame(self).normals {
            proj -= &normal * normal.transpose();
        }
        proj
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalFrame {
    pub normals: Vec<Vector>,
}

/// Seeded generator for the `index`-th sample of a run.
pub fn point_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Isotropic Gaussian direction of unit length.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vector {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let len = v.norm();
        if len > 1e-8 {
            return v / len;
        }
    }
}

/// Uniform sample (normalised isotropic Gaussian) on the surface.
pub fn sample_point<R: Rng + ?Sized>(surface: &EmbeddedSurface, rng: &mut R) -> SurfacePoint {
    let coords = match surface.kind {
        SurfaceKind::Sphere { radius } => random_unit_vector(rng, surface.ambient_dim) * radius,
        SurfaceKind::HyperplaneSphere { sub_radius, offset } => {
            let last = surface.ambient_dim - 1;
            let planar = random_unit_vector(rng, last) * sub_radius;
            let mut c = Vector::zeros(surface.ambient_dim);
            c.rows_mut(0, last).copy_from(&planar);
            c[last] = offset;
            c
        }
    };
    SurfacePoint {
        surface: *surface,
        coords,
    }
}

pub fn unit_normal_frame(x: &SurfacePoint) -> NormalFrame {
    NormalFrame {
        normals: x.frame().normals,
    }
}

/// `V − Σ⟨V, N_α⟩N_α`.
pub fn project_tangent(x: &SurfacePoint, v: &Vector) -> Vector {
    let mut out = v.clone();
    for n in unit_normal_frame(x).normals {
        out -= &n * n.dot(v);
    }
    out
}

/// A tangent vector field on a surface, evaluated through its first-order jet.
pub trait VectorField: Send + Sync {
    /// Value and directional derivative (along `frame.direction`) at `frame.point`.
    fn jet(&self, frame: &FrameJet) -> VectorJet;

    fn value_at(&self, x: &SurfacePoint) -> Vector {
        self.jet(&x.frame()).value
    }
}

impl<F: VectorField + ?Sized> VectorField for &F {
    fn jet(&self, frame: &FrameJet) -> VectorJet {
        (**self).jet(frame)
    }
}

/// The tangent field `Y(x) = W − Σ⟨W, N_α(x)⟩N_α(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedField {
    pub generator: Vector,
}

impl VectorField for ExtendedField {
    fn jet(&self, frame: &FrameJet) -> VectorJet {
        frame.project(&VectorJet::constant(self.generator.clone()))
    }
}

pub fn extend_field(w: &Vector) -> ExtendedField {
    ExtendedField {
        generator: w.clone(),
    }
}

/// How directional derivatives of fields are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum DerivativeMode {
    /// Exact product-rule propagation through closed-form normals.
    Analytic,
    /// Central differences along the radial curve `γ(t)`.
    FiniteDifference { step: f64 },
}

impl DerivativeMode {
    /// Central differences with `h = 1e-5·R`.
    pub fn default_fd(surface: &EmbeddedSurface) -> Self {
        DerivativeMode::FiniteDifference {
            step: FD_RELATIVE_STEP * surface.scale(),
        }
    }

    fn checked_step(self) -> Result<Option<f64>> {
        match self {
            DerivativeMode::Analytic => Ok(None),
            DerivativeMode::FiniteDifference { step } if step.is_finite() && step > 0.0 => {
                Ok(Some(step))
            }
            DerivativeMode::FiniteDifference { step } => Err(Error::Domain(format!(
                "finite-difference step must be positive, got {step}"
            ))),
        }
    }
}

/// `D_V Y` for the flat ambient connection.
pub fn ambient_derivative<F: VectorField + ?Sized>(
    field: &F,
    x: &SurfacePoint,
    v: &Vector,
    mode: DerivativeMode,
) -> Result<Vector> {
    match mode.checked_step()? {
        None => Ok(field.jet(&x.frame_jet(v)).rate),
        Some(h) => {
            let s = x.surface();
            let fwd = field.jet(&s.frame(&s.curve(x.coords(), v, h))).value;
            let bwd = field.jet(&s.frame(&s.curve(x.coords(), v, -h))).value;
            Ok((fwd - bwd) / (2.0 * h))
        }
    }
}

/// Derivative along `v` of a scalar function described through frame jets.
pub fn scalar_derivative<G>(x: &SurfacePoint, v: &Vector, mode: DerivativeMode, f: G) -> Result<f64>
where
    G: Fn(&FrameJet) -> ScalarJet,
{
    match mode.checked_step()? {
        None => Ok(f(&x.frame_jet(v)).rate),
        Some(h) => {
            let s = x.surface();
            let fwd = f(&s.frame(&s.curve(x.coords(), v, h))).value;
            let bwd = f(&s.frame(&s.curve(x.coords(), v, -h))).value;
            Ok((fwd - bwd) / (2.0 * h))
        }
    }
}

/// `[X, Y] = D_X Y − D_Y X`.
pub fn lie_bracket<X: VectorField + ?Sized, Y: VectorField + ?Sized>(
    x_field: &X,
    y_field: &Y,
    x: &SurfacePoint,
    mode: DerivativeMode,
) -> Result<Vector> {
    let xv = x_field.value_at(x);
    let yv = y_field.value_at(x);
    Ok(ambient_derivative(y_field, x, &xv, mode)? - ambient_derivative(x_field, x, &yv, mode)?)
}

/// Gauss decomposition `D_X Y = ∇_X Y + Σ h_α(X, Y) N_α`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussSplit {
    pub tangential: Vector,
    pub second_fundamental: Vec<f64>,
}

pub fn gauss_split<Y: VectorField + ?Sized>(
    xv: &Vector,
    y_field: &Y,
    x: &SurfacePoint,
    mode: DerivativeMode,
) -> Result<GaussSplit> {
    let d = ambient_derivative(y_field, x, xv, mode)?;
    let normals = unit_normal_frame(x).normals;
    let second_fundamental = normals.iter().map(|n| n.dot(&d)).collect();
    let mut tangential = d;
    for n in &normals {
        tangential -= n * n.dot(&tangential);
    }
    Ok(GaussSplit {
        tangential,
        second_fundamental,
    })
}

/// Induced Levi-Civita derivative `∇_X Y`.
pub fn induced_derivative<Y: VectorField + ?Sized>(
    xv: &Vector,
    y_field: &Y,
    x: &SurfacePoint,
    mode: DerivativeMode,
) -> Result<Vector> {
    Ok(gauss_split(xv, y_field, x, mode)?.tangential)
}

/// `A_α` as an ambient matrix: `A_α X = −(D_X N_α)^⊤` on tangent `X`, zero on normals.
pub fn shape_operator(x: &SurfacePoint, alpha: usize) -> Matrix {
    let n = x.surface().ambient_dim;
    let proj = x.tangent_projector();
    let mut a = Matrix::zeros(n, n);
    for k in 0..n {
        let t = proj.column(k).into_owned();
        let rate = &x.frame_jet(&t).normal_rates[alpha];
        a.set_column(k, &(-(&proj * rate)));
    }
    a
}

/// `l_{αβ}(X) = ⟨D_X N_α, N_β⟩`.
pub fn normal_connection_coeffs(x: &SurfacePoint, xv: &Vector) -> Matrix {
    let frame = x.frame_jet(xv);
    let r = frame.codim();
    Matrix::from_fn(r, r, |alpha, beta| {
        frame.normal_rates[alpha].dot(&frame.normals[beta])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn sphere_samples_lie_on_the_sphere_and_are_reproducible() {
        let s = EmbeddedSurface::sphere(5, 2.5).unwrap();
        for i in 0..50 {
            let p = sample_point(&s, &mut point_stream(7, i));
            assert!((p.coords().norm() - 2.5).abs() <= 1e-12);
            let again = sample_point(&s, &mut point_stream(7, i));
            assert_eq!(p, again);
        }
        let a = sample_point(&s, &mut point_stream(7, 0));
        let b = sample_point(&s, &mut point_stream(7, 1));
        assert_ne!(a, b);
    }

    #[test]
    fn hyperplane_samples_keep_the_offset() {
        let s = EmbeddedSurface::hyperplane_sphere(4, 1.0, 0.5).unwrap();
        for i in 0..20 {
            let p = sample_point(&s, &mut point_stream(3, i));
            assert_eq!(p.coords()[3], 0.5);
            assert!((p.coords().rows(0, 3).norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn invalid_surfaces_are_rejected() {
        assert!(EmbeddedSurface::sphere(3, 0.0).is_err());
        assert!(EmbeddedSurface::sphere(3, -1.0).is_err());
        assert!(EmbeddedSurface::hyperplane_sphere(2, 1.0, 0.0).is_err());
        assert!(EmbeddedSurface::hyperplane_sphere(4, 0.0, 0.0).is_err());
        let s = EmbeddedSurface::sphere(3, 1.0).unwrap();
        assert!(s.point(v(&[1.0, 1.0, 0.0])).is_err());
        assert!(s.point(v(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn normals() {
        let s1 = EmbeddedSurface::sphere(3, 1.0).unwrap();
        let f = unit_normal_frame(&s1.point(v(&[1.0, 0.0, 0.0])).unwrap());
        assert_eq!(f.normals, vec![v(&[1.0, 0.0, 0.0])]);
        let s2 = EmbeddedSurface::sphere(3, 2.0).unwrap();
        let f = unit_normal_frame(&s2.point(v(&[0.0, 2.0, 0.0])).unwrap());
        assert_eq!(f.normals, vec![v(&[0.0, 1.0, 0.0])]);
        let h = EmbeddedSurface::hyperplane_sphere(4, 1.0, 0.0).unwrap();
        let f = unit_normal_frame(&h.point(v(&[1.0, 0.0, 0.0, 0.0])).unwrap());
        assert_eq!(
            f.normals,
            vec![v(&[1.0, 0.0, 0.0, 0.0]), v(&[0.0, 0.0, 0.0, 1.0])]
        );
    }

    #[test]
    fn projection_examples() {
        let s = EmbeddedSurface::sphere(3, 1.0).unwrap();
        let x = s.point(v(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(
            project_tangent(&x, &v(&[1.0, 1.0, 0.0])),
            v(&[0.0, 1.0, 0.0])
        );
        assert!(project_tangent(&x, &v(&[1.0, 0.0, 0.0])).norm() == 0.0);
        let field = extend_field(&v(&[0.0, 1.0, 0.0]));
        assert_eq!(field.value_at(&x), v(&[0.0, 1.0, 0.0]));
        assert!(extend_field(&Vector::zeros(3)).value_at(&x).norm() == 0.0);
    }

    #[test]
    fn great_circle_derivative() {
        let s = EmbeddedSurface::sphere(3, 1.0).unwrap();
        let x = s.point(v(&[1.0, 0.0, 0.0])).unwrap();
        let field = extend_field(&v(&[0.0, 1.0, 0.0]));
        let d =
            ambient_derivative(&field, &x, &v(&[0.0, 1.0, 0.0]), DerivativeMode::Analytic).unwrap();
        assert!((d - v(&[-1.0, 0.0, 0.0])).norm() <= 1e-15);
    }

    #[test]
    fn non_positive_step_is_a_domain_error() {
        let s = EmbeddedSurface::sphere(3, 1.0).unwrap();
        let x = s.point(v(&[1.0, 0.0, 0.0])).unwrap();
        let field = extend_field(&v(&[0.0, 1.0, 0.0]));
        for step in [0.0, -1e-5, f64::NAN] {
            let mode = DerivativeMode::FiniteDifference { step };
            assert!(matches!(
                ambient_derivative(&field, &x, &v(&[0.0, 1.0, 0.0]), mode),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn bracket_vanishes_at_the_pole_for_coordinate_generators() {
        let s = EmbeddedSurface::sphere(3, 1.0).unwrap();
        let pole = s.point(v(&[0.0, 0.0, 1.0])).unwrap();
        let e1 = extend_field(&v(&[1.0, 0.0, 0.0]));
        let e2 = extend_field(&v(&[0.0, 1.0, 0.0]));
        let b = lie_bracket(&e1, &e2, &pole, DerivativeMode::Analytic).unwrap();
        assert!(b.norm() <= 1e-15);
        let bxx = lie_bracket(&e1, &e1, &pole, DerivativeMode::Analytic).unwrap();
        assert!(bxx.norm() == 0.0);
    }

    #[test]
    fn shape_operators_of_shipped_surfaces() {
        let s = EmbeddedSurface::sphere(4, 2.0).unwrap();
        let x = sample_point(&s, &mut point_stream(1, 0));
        let a = shape_operator(&x, 0);
        let expected = x.tangent_projector() * (-0.5);
        assert!((a - expected).norm() <= 1e-14);

        let h = EmbeddedSurface::hyperplane_sphere(5, 0.75, 0.5).unwrap();
        let y = sample_point(&h, &mut point_stream(1, 0));
        let a1 = shape_operator(&y, 0);
        assert!((a1 - y.tangent_projector() * (-1.0 / 0.75)).norm() <= 1e-14);
        assert!(shape_operator(&y, 1).norm() == 0.0);
    }

    #[test]
    fn normal_connection_vanishes() {
        let h = EmbeddedSurface::hyperplane_sphere(5, 1.0, 0.5).unwrap();
        let mut rng = point_stream(2, 0);
        let y = sample_point(&h, &mut rng);
        let t = project_tangent(&y, &random_unit_vector(&mut rng, 5));
        assert!(normal_connection_coeffs(&y, &t).norm() <= 1e-15);
        let s = EmbeddedSurface::sphere(3, 1.0).unwrap();
        let x = sample_point(&s, &mut rng);
        let t = project_tangent(&x, &random_unit_vector(&mut rng, 3));
        let l = normal_connection_coeffs(&x, &t);
        assert_eq!(l.shape(), (1, 1));
        assert!(l[(0, 0)].abs() <= 1e-15);
    }
}
