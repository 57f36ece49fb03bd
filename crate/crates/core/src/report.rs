//! Run configuration, the verification suite and machine-readable reports.
//!
//! Exit-code contract of the command-line front end: `0` every identity
//! passes, `1` usage or configuration error, `2` verification failure,
//! `3` I/O failure.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariant::{
    derivative_a, nabla_p, nabla_u, nabla_xi, nijenhuis_p, NijenhuisMode, PointContext,
};
use crate::error::{Error, Result};
use crate::metallic::{
    build_ambient_structure, involution_defect, metallic_ratio, product_from_structure,
    spectrum_defect, structure_from_product, verify_compatibility, verify_metric_corollary,
    verify_polynomial, AmbientStructure, Matrix, MetallicParams, Preset, Sign, Vector,
};
use crate::normality::{
    commutator_b, gram_matrix, normality_residual, point_independence, verify_combined_formula,
    verify_du_formula, verify_symmetric_relation, verify_torsion_formula, PointIndependence,
};
use crate::sigma::{
    check_structure_relations, closed_form_sigma_sphere, reconstruction_residual, sigma_discrepancy,
    SigmaField,
};
use crate::surface::{
    ambient_derivative, extend_field, gauss_split, induced_derivative, normal_connection_coeffs,
    point_stream, project_tangent, random_unit_vector, sample_point, scalar_derivative,
    shape_operator, DerivativeMode, EmbeddedSurface, SurfaceKind, VectorField,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the directory used when no `--out` is given.
pub const OUTPUT_DIR_ENV: &str = "METALLIC_VERIFY_OUT_DIR";

pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const VERIFICATION_FAILURE: i32 = 2;
    pub const IO_FAILURE: i32 = 3;
}

/// Tangent pairs drawn at every sample point.
const PAIRS_PER_POINT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scope {
    Global,
    PerPoint,
}

struct IdentitySpec {
    id: &'static str,
    description: &'static str,
    tolerance: f64,
    scope: Scope,
}

const fn spec(
    id: &'static str,
    description: &'static str,
    tolerance: f64,
    scope: Scope,
) -> IdentitySpec {
    IdentitySpec {
        id,
        description,
        tolerance,
        scope,
    }
}

const CONSTRUCTION: f64 = 1e-12;
const ALGEBRAIC: f64 = 1e-9;
const DIFFERENTIAL: f64 = 1e-8;
const FINITE_DIFFERENCE: f64 = 1e-4;

/// Every identity a full report must contain, in execution order.
const IDENTITIES: &[IdentitySpec] = &[
    spec(
        "eq1",
        "metallic numbers solve x^2 = px + q",
        CONSTRUCTION,
        Scope::Global,
    ),
    spec(
        "eq2",
        "Golden structure satisfies J^2 = J + I",
        CONSTRUCTION,
        Scope::Global,
    ),
    spec("eq3", "J^2 = pJ + qI", CONSTRUCTION, Scope::Global),
    spec("eq4", "g(JX, Y) = g(X, JY)", CONSTRUCTION, Scope::Global),
    spec(
        "eq5",
        "g(JX, JY) = p g(X, JY) + q g(X, Y)",
        CONSTRUCTION,
        Scope::PerPoint,
    ),
    spec(
        "eq6",
        "J1, J2 built from an almost product structure are metallic",
        CONSTRUCTION,
        Scope::Global,
    ),
    spec(
        "eq7",
        "F+ and F- are almost product structures inverse to eq6",
        CONSTRUCTION,
        Scope::Global,
    ),
    spec(
        "spectrum",
        "eigenvalues of J lie in {sigma, sigma_bar}",
        1e-10,
        Scope::Global,
    ),
    spec(
        "eq33",
        "per-axis eigenstructure of J_lambda",
        CONSTRUCTION,
        Scope::Global,
    ),
    spec(
        "eq46_50",
        "named structures match their literal matrices",
        CONSTRUCTION,
        Scope::Global,
    ),
    spec(
        "eq8",
        "JX = PX + sum u(X) N and JN = xi + sum a N reassemble",
        CONSTRUCTION,
        Scope::PerPoint,
    ),
    spec(
        "eq9",
        "P^2 X = pPX + qX - sum u(X) xi",
        ALGEBRAIC,
        Scope::PerPoint,
    ),
    spec(
        "eq10i",
        "u(PX) = p u(X) - sum a u(X)",
        ALGEBRAIC,
        Scope::PerPoint,
    ),
    spec("eq10ii", "a is symmetric", ALGEBRAIC, Scope::PerPoint),
    spec(
        "eq11i",
        "u_b(xi_a) = q delta + p a - a^2",
        ALGEBRAIC,
        Scope::PerPoint,
    ),
    spec(
        "eq11ii",
        "P xi = p xi - sum a xi",
        ALGEBRAIC,
        Scope::PerPoint,
    ),
    spec("eq12i", "P is g-self-adjoint", ALGEBRAIC, Scope::PerPoint),
    spec("eq12ii", "u(X) = g(X, xi)", ALGEBRAIC, Scope::PerPoint),
    spec(
        "eq13i",
        "Gauss formula: h symmetric, nabla tangent",
        1e-10,
        Scope::PerPoint,
    ),
    spec(
        "eq13ii",
        "Weingarten formula: g(AX, Y) = h(X, Y), A self-adjoint",
        1e-10,
        Scope::PerPoint,
    ),
    spec(
        "eq14",
        "normal connection coefficients are skew",
        CONSTRUCTION,
        Scope::PerPoint,
    ),
    spec(
        "torsion_free",
        "nabla_X Y - nabla_Y X = [X, Y]",
        1e-10,
        Scope::PerPoint,
    ),
    spec(
        "metric_compatibility",
        "X g(Y, Z) = g(nabla_X Y, Z) + g(Y, nabla_X Z)",
        DIFFERENTIAL,
        Scope::PerPoint,
    ),
    spec(
        "fd_cross_check",
        "analytic ambient derivatives match central differences",
        1e-5,
        Scope::PerPoint,
    ),
    spec(
        "eq41_45",
        "closed-form sphere structure matches generic induction",
        1e-10,
        Scope::PerPoint,
    ),
    spec(
        "eq15_16",
        "Nijenhuis tensor: bracket form equals covariant form",
        DIFFERENTIAL,
        Scope::PerPoint,
    ),
    spec(
        "eq17",
        "(nabla_X P)Y formula, analytic path",
        DIFFERENTIAL,
        Scope::PerPoint,
    ),
    spec(
        "eq18",
        "(nabla_X u)(Y) formula, analytic path",
        DIFFERENTIAL,
        Scope::PerPoint,
    ),
    spec(
        "eq19",
        "nabla_X xi formula, analytic path",
        DIFFERENTIAL,
        Scope::PerPoint,
    ),
    spec(
        "eq20",
        "X(a) formula, analytic path",
        DIFFERENTIAL,
        Scope::PerPoint,
    ),
    spec(
        "eq17_fd",
        "(nabla_X P)Y formula, finite-difference path",
        FINITE_DIFFERENCE,
        Scope::PerPoint,
    ),
    spec(
        "eq18_fd",
        "(nabla_X u)(Y) formula, finite-difference path",
        FINITE_DIFFERENCE,
        Scope::PerPoint,
    ),
    spec(
        "eq19_fd",
        "nabla_X xi formula, finite-difference path",
        FINITE_DIFFERENCE,
        Scope::PerPoint,
    ),
    spec(
        "eq20_fd",
        "X(a) formula, finite-difference path",
        FINITE_DIFFERENCE,
        Scope::PerPoint,
    ),
    spec(
        "sphere_specializations",
        "round-sphere forms of the covariant identities",
        DIFFERENTIAL,
        Scope::PerPoint,
    ),
    spec(
        "eq21",
        "normality N_P = 2 sum du (x) xi",
        DIFFERENTIAL,
        Scope::PerPoint,
    ),
    spec(
        "eq22",
        "N_P through the commutators B",
        DIFFERENTIAL,
        Scope::PerPoint,
    ),
    spec("eq23", "2du through B and l", DIFFERENTIAL, Scope::PerPoint),
    spec(
        "eq24",
        "N_P - 2 sum du xi through B and l",
        DIFFERENTIAL,
        Scope::PerPoint,
    ),
    spec(
        "eq25",
        "symmetric commutator relation",
        DIFFERENTIAL,
        Scope::PerPoint,
    ),
    spec(
        "eq26",
        "Gram matrix: inner products equal q I + p a - a^2",
        1e-10,
        Scope::PerPoint,
    ),
    spec(
        "eq27_31",
        "commutator relations of the normality argument",
        DIFFERENTIAL,
        Scope::PerPoint,
    ),
];

/// Identifiers every full report contains, in order.
pub fn identity_ids() -> Vec<&'static str> {
    IDENTITIES.iter().map(|s| s.id).collect()
}

fn identity_index(id: &str) -> Option<usize> {
    IDENTITIES.iter().position(|s| s.id == id)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonSpec {
    /// `ε_j = λ` for every `j`, so that `λε_j = +1`.
    Auto,
    AllPlus,
    Signs(Vec<i64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub p: u32,
    pub q: u32,
    pub preset: Option<Preset>,
    pub lambda: Sign,
    pub epsilon: EpsilonSpec,
    pub dims: (usize, usize),
    pub surface: SurfaceKind,
    pub samples: usize,
    pub seed: u64,
    pub tolerances: BTreeMap<String, f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            p: 1,
            q: 1,
            preset: Some(Preset::Golden),
            lambda: Sign::Plus,
            epsilon: EpsilonSpec::Auto,
            dims: (1, 1),
            surface: SurfaceKind::Sphere { radius: 1.0 },
            samples: 1000,
            seed: 42,
            tolerances: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn with_preset(preset: Preset) -> Self {
        let (p, q) = preset.pq();
        Self {
            p,
            q,
            preset: Some(preset),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 || self.q < 1 {
            return Err(Error::Config("p and q must be positive integers".into()));
        }
        if let Some(preset) = self.preset {
            if preset.pq() != (self.p, self.q) {
                return Err(Error::Config(format!(
                    "preset {} fixes (p, q) = {:?}, but ({}, {}) was requested",
                    preset.name(),
                    preset.pq(),
                    self.p,
                    self.q
                )));
            }
        }
        if self.samples < 1 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        let (a, b) = self.dims;
        if a < 1 {
            return Err(Error::Config("dims: a must be at least 1".into()));
        }
        if let EpsilonSpec::Signs(signs) = &self.epsilon {
            if signs.len() != b {
                return Err(Error::Config(format!(
                    "epsilon has {} entries but b = {b}",
                    signs.len()
                )));
            }
            if signs.iter().any(|&s| s != 1 && s != -1) {
                return Err(Error::Config("epsilon entries must be +1 or -1".into()));
            }
        }
        self.build_surface()?;
        for (id, tol) in &self.tolerances {
            if identity_index(id).is_none() {
                return Err(Error::Config(format!(
                    "unknown identity id '{id}' in tolerance override"
                )));
            }
            if !(tol.is_finite() && *tol > 0.0) {
                return Err(Error::Config(format!(
                    "tolerance for {id} must be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<MetallicParams> {
        metallic_ratio(i64::from(self.p), i64::from(self.q))
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn epsilon_signs(&self) -> Vec<i64> {
        let b = self.dims.1;
        match &self.epsilon {
            EpsilonSpec::Auto => vec![self.lambda.value() as i64; b],
            EpsilonSpec::AllPlus => vec![1; b],
            EpsilonSpec::Signs(s) => s.clone(),
        }
    }

    pub fn build_structure(&self) -> Result<AmbientStructure> {
        let (a, b) = self.dims;
        build_ambient_structure(self.params()?, a, b, self.lambda, &self.epsilon_signs())
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build_surface(&self) -> Result<EmbeddedSurface> {
        let dim = 2 * self.dims.0 + self.dims.1;
        let surface = match self.surface {
            SurfaceKind::Sphere { radius } => EmbeddedSurface::sphere(dim, radius),
            SurfaceKind::HyperplaneSphere { sub_radius, offset } => {
                EmbeddedSurface::hyperplane_sphere(dim, sub_radius, offset)
            }
        };
        surface.map_err(|e| Error::Config(e.to_string()))
    }

    pub fn tolerance(&self, id: &str) -> f64 {
        self.tolerances
            .get(id)
            .copied()
            .unwrap_or_else(|| IDENTITIES[identity_index(id).expect("known identity")].tolerance)
    }

    /// The named structure whose literal matrix applies, if any.
    fn named_structure(&self) -> Option<Preset> {
        Preset::STRUCTURES
            .into_iter()
            .find(|p| p.pq() == (self.p, self.q))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracySummary {
    pub flagged_points: usize,
    pub total_points: usize,
    pub reasons: BTreeMap<String, usize>,
    pub classifications: BTreeMap<String, usize>,
    pub min_abs_det: f64,
    pub first_flagged: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub id: String,
    pub description: String,
    pub applicable: bool,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub worst_index: Option<usize>,
    pub worst_point: Option<Vec<f64>>,
    pub tolerance: f64,
    pub pass: bool,
    pub residuals: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degeneracy: Option<DegeneracySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub schema_version: u32,
    pub config: RunConfig,
    pub fd_step: f64,
    pub identities: Vec<IdentityRecord>,
    pub all_pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
}

impl ResidualReport {
    pub fn record(&self, id: &str) -> Option<&IdentityRecord> {
        self.identities.iter().find(|r| r.id == id)
    }

    /// Identifiers that are missing or duplicated relative to the catalogue.
    pub fn coverage_gaps(&self) -> Vec<String> {
        let mut gaps = Vec::new();
        for id in identity_ids() {
            match self.identities.iter().filter(|r| r.id == id).count() {
                1 => {}
                0 => gaps.push(format!("missing {id}")),
                n => gaps.push(format!("{id} appears {n} times")),
            }
        }
        for r in &self.identities {
            if identity_index(&r.id).is_none() {
                gaps.push(format!("unexpected {}", r.id));
            }
        }
        gaps
    }

    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        let mut s = serde_json::to_string_pretty(&value)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn csv_row_count(&self) -> usize {
        self.identities.iter().map(|r| r.residuals.len()).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["identity", "point_index", "residual", "tolerance", "pass"])?;
        for r in &self.identities {
            for (i, res) in r.residuals.iter().enumerate() {
                wtr.write_record([
                    r.id.clone(),
                    i.to_string(),
                    res.to_string(),
                    r.tolerance.to_string(),
                    (*res <= r.tolerance).to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Write the report to `path`, or to standard output when `path` is `None`.
pub fn emit_report(report: &ResidualReport, format: Format, path: Option<&Path>) -> Result<()> {
    let mut buf = Vec::new();
    match format {
        Format::Json => buf.extend_from_slice(report.to_json()?.as_bytes()),
        Format::Csv => report.write_csv(&mut buf)?,
    }
    match path {
        Some(p) => std::fs::write(p, buf)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(&buf)?;
            lock.flush()?;
        }
    }
    Ok(())
}

struct Setup {
    structure: AmbientStructure,
    field: SigmaField,
    surface: EmbeddedSurface,
    fd: DerivativeMode,
    closed_form: bool,
}

#[derive(Debug, Clone)]
struct PointOutcome {
    coords: Vec<f64>,
    residuals: Vec<Option<f64>>,
    independence: PointIndependence,
}

struct Recorder(Vec<Option<f64>>);

impl Recorder {
    fn new() -> Self {
        Self(vec![None; IDENTITIES.len()])
    }

    fn set(&mut self, id: &str, value: f64) {
        let idx = identity_index(id).expect("known identity");
        let slot = &mut self.0[idx];
        // NaN must surface as a failure, not vanish in `max`.
        let value = if value.is_nan() { f64::INFINITY } else { value };
        *slot = Some(slot.map_or(value, |v| v.max(value)));
    }
}

fn global_residuals(config: &RunConfig, setup: &Setup) -> Result<Recorder> {
    let mut rec = Recorder::new();
    let s = &setup.structure;
    let params = s.params;
    let j = &s.matrix;
    let n = s.dim();

    let rel = |x: f64| params.characteristic(x).abs() / (x * x).max(1.0);
    let mut eq1 = rel(params.sigma).max(rel(params.sigma_bar));
    if let Some(preset) = config.preset {
        eq1 = eq1.max((params.sigma - preset.constant()).abs());
    }
    rec.set("eq1", eq1);

    let golden = build_ambient_structure(
        Preset::Golden.params(),
        s.a,
        s.b,
        s.lambda,
        &config.epsilon_signs(),
    )?;
    let g = &golden.matrix;
    rec.set("eq2", (g * g - g - Matrix::identity(n, n)).norm());

    rec.set("eq3", verify_polynomial(j, &params));
    rec.set("eq4", verify_compatibility(j, &Matrix::identity(n, n))?);

    let f_plus = product_from_structure(j, &params, Sign::Plus)?;
    let f_minus = product_from_structure(j, &params, Sign::Minus)?;
    let j1 = structure_from_product(&f_plus, &params, Sign::Plus);
    let j2 = structure_from_product(&f_plus, &params, Sign::Minus);
    let eq6 = verify_polynomial(&j1, &params)
        .max(verify_polynomial(&j2, &params))
        .max((&j1 + &j2 - Matrix::identity(n, n) * params.p()).norm())
        .max((&j1 - j).norm());
    rec.set("eq6", eq6);
    let back = product_from_structure(&j1, &params, Sign::Plus)?;
    let eq7 = involution_defect(f_plus.matrix())
        .max(involution_defect(f_minus.matrix()))
        .max((f_plus.matrix() + f_minus.matrix()).norm())
        .max((back.matrix() - f_plus.matrix()).norm());
    rec.set("eq7", eq7);

    rec.set("spectrum", spectrum_defect(j, &params));

    let half_p = params.p() / 2.0;
    let half_root = params.sqrt_delta() / 2.0;
    let lambda = s.lambda.value();
    let mut eq33 = 0.0f64;
    for i in 0..s.a {
        for sign in [1.0, -1.0] {
            let mut v = Vector::zeros(n);
            v[i] = std::f64::consts::FRAC_1_SQRT_2;
            v[s.a + i] = sign * std::f64::consts::FRAC_1_SQRT_2;
            let ev = half_p + sign * lambda * half_root;
            eq33 = eq33.max((j * &v - &v * ev).norm());
        }
    }
    for (k, &e) in s.epsilon.iter().enumerate() {
        let mut v = Vector::zeros(n);
        v[2 * s.a + k] = 1.0;
        let ev = if s.lambda * e == Sign::Plus {
            params.sigma
        } else {
            params.sigma_bar
        };
        eq33 = eq33.max((j * &v - &v * ev).norm());
    }
    rec.set("eq33", eq33);

    if let (Some(preset), true) = (config.named_structure(), s.is_standard_orientation()) {
        let (diag, off, z) = literal_entries(preset);
        let mut literal = Matrix::zeros(n, n);
        for i in 0..s.a {
            literal[(i, i)] = diag;
            literal[(s.a + i, s.a + i)] = diag;
            literal[(i, s.a + i)] = lambda * off;
            literal[(s.a + i, i)] = lambda * off;
        }
        for k in 0..s.b {
            literal[(2 * s.a + k, 2 * s.a + k)] = z;
        }
        rec.set("eq46_50", (literal - j).norm());
    }
    Ok(rec)
}

/// `(p/2, √Δ/2, σ)` written the way the named structures are usually displayed.
fn literal_entries(preset: Preset) -> (f64, f64, f64) {
    let s5 = 5f64.sqrt();
    let s13 = 13f64.sqrt();
    match preset {
        Preset::Golden => (0.5, s5 / 2.0, (1.0 + s5) / 2.0),
        Preset::Silver => (1.0, 2f64.sqrt(), 1.0 + 2f64.sqrt()),
        Preset::Bronze => (1.5, s13 / 2.0, (3.0 + s13) / 2.0),
        Preset::Copper => (0.5, 1.5, 2.0),
        Preset::Nickel => (0.5, s13 / 2.0, (1.0 + s13) / 2.0),
        Preset::Subtle => (2.0, 5f64.sqrt(), 2.0 + 5f64.sqrt()),
    }
}

fn evaluate_point(setup: &Setup, seed: u64, index: usize) -> Result<PointOutcome> {
    let mut rng = point_stream(seed, index as u64);
    let surface = &setup.surface;
    let n = surface.ambient_dim;
    let x = sample_point(surface, &mut rng);
    let ambient: Vec<(Vector, Vector)> = (0..PAIRS_PER_POINT)
        .map(|_| {
            (
                random_unit_vector(&mut rng, n),
                random_unit_vector(&mut rng, n),
            )
        })
        .collect();
    let pairs: Vec<(Vector, Vector)> = ambient
        .iter()
        .map(|(a, b)| (project_tangent(&x, a), project_tangent(&x, b)))
        .collect();

    let field = &setup.field;
    let params = setup.structure.params;
    let j = &setup.structure.matrix;
    let sigma = field.at(&x);
    let ctx = PointContext::new(field, &x);
    let r = sigma.codim();
    let analytic = DerivativeMode::Analytic;
    let fd = setup.fd;
    let mut rec = Recorder::new();

    rec.set("eq5", verify_metric_corollary(j, &params, &ambient));

    let tangents: Vec<Vector> = pairs
        .iter()
        .flat_map(|(a, b)| [a.clone(), b.clone()])
        .collect();
    rec.set("eq8", reconstruction_residual(&sigma, j, &tangents));
    let t1 = check_structure_relations(&sigma, &pairs);
    rec.set("eq9", t1.eq9);
    rec.set("eq10i", t1.eq10_i);
    rec.set("eq10ii", t1.eq10_ii);
    rec.set("eq11i", t1.eq11_i);
    rec.set("eq11ii", t1.eq11_ii);
    rec.set("eq12i", t1.eq12_i);
    rec.set("eq12ii", t1.eq12_ii);

    let shape: Vec<Matrix> = (0..r).map(|alpha| shape_operator(&x, alpha)).collect();
    for (k, (xv, yv)) in pairs.iter().enumerate() {
        let (xf, yf) = (extend_field(xv), extend_field(yv));
        let zv = &pairs[(k + 1) % pairs.len()].0;
        let zf = extend_field(zv);

        let split_xy = gauss_split(xv, &yf, &x, analytic)?;
        let split_yx = gauss_split(yv, &xf, &x, analytic)?;
        let normals = sigma.normals();
        let mut eq13i = 0.0f64;
        let mut eq13ii = 0.0f64;
        for alpha in 0..r {
            let h_xy = split_xy.second_fundamental[alpha];
            eq13i = eq13i
                .max((h_xy - split_yx.second_fundamental[alpha]).abs())
                .max(split_xy.tangential.dot(&normals[alpha]).abs());
            let a_x = &shape[alpha] * xv;
            eq13ii = eq13ii
                .max((a_x.dot(yv) - h_xy).abs())
                .max((a_x.dot(yv) - xv.dot(&(&shape[alpha] * yv))).abs());
        }
        rec.set("eq13i", eq13i);
        rec.set("eq13ii", eq13ii);
        let l = normal_connection_coeffs(&x, xv);
        rec.set("eq14", (&l + l.transpose()).amax());

        let bracket = crate::surface::lie_bracket(&xf, &yf, &x, analytic)?;
        rec.set(
            "torsion_free",
            (&split_xy.tangential - &split_yx.tangential - bracket).norm(),
        );
        let dyz = scalar_derivative(&x, xv, fd, |frame| yf.jet(frame).dot(&zf.jet(frame)))?;
        let rhs = induced_derivative(xv, &yf, &x, analytic)?.dot(zv)
            + yv.dot(&induced_derivative(xv, &zf, &x, analytic)?);
        rec.set("metric_compatibility", (dyz - rhs).abs());
        let fd_cross = (ambient_derivative(&yf, &x, xv, analytic)?
            - ambient_derivative(&yf, &x, xv, fd)?)
        .norm();
        rec.set("fd_cross_check", fd_cross);

        let n_bracket = nijenhuis_p(field, &xf, &yf, &x, NijenhuisMode::Bracket, analytic)?;
        let n_cov = nijenhuis_p(field, &xf, &yf, &x, NijenhuisMode::Covariant, analytic)?;
        rec.set("eq15_16", (n_bracket - n_cov).norm());

        for (mode, suffix) in [(analytic, ""), (fd, "_fd")] {
            let lhs17 = nabla_p(field, xv, &yf, &x, mode)?;
            rec.set(
                &format!("eq17{suffix}"),
                (lhs17 - ctx.eq17_rhs(xv, yv)).norm(),
            );
            for alpha in 0..r {
                let lhs18 = nabla_u(field, xv, &yf, &x, alpha, mode)?;
                rec.set(
                    &format!("eq18{suffix}"),
                    (lhs18 - ctx.eq18_rhs(xv, yv, alpha)).abs(),
                );
                let lhs19 = nabla_xi(field, xv, &x, alpha, mode)?;
                rec.set(
                    &format!("eq19{suffix}"),
                    (lhs19 - ctx.eq19_rhs(xv, alpha)).norm(),
                );
            }
            let lhs20 = derivative_a(field, xv, &x, mode)?;
            rec.set(&format!("eq20{suffix}"), (lhs20 - ctx.eq20_rhs(xv)).amax());
        }

        if let SurfaceKind::Sphere { radius } = surface.kind {
            let xi = &sigma.xi[0];
            let a = sigma.a[(0, 0)];
            let lhs17 = nabla_p(field, xv, &yf, &x, analytic)?;
            let sp17 = -(xi * xv.dot(yv) + xv * sigma.u_of(0, yv)) / radius;
            let lhs20 = derivative_a(field, xv, &x, analytic)?[(0, 0)];
            let sp20 = 2.0 / radius * sigma.u_of(0, xv);
            let lhs19 = nabla_xi(field, xv, &x, 0, analytic)?;
            let sp19 = (sigma.apply_p(xv) - xv * a) / radius;
            rec.set(
                "sphere_specializations",
                (lhs17 - sp17)
                    .norm()
                    .max((lhs20 - sp20).abs())
                    .max((lhs19 - sp19).norm()),
            );
        }

        let one = [(xv.clone(), yv.clone())];
        rec.set("eq21", normality_residual(field, &x, &one, analytic)?);
        rec.set("eq22", verify_torsion_formula(field, &x, &one, analytic)?);
        for alpha in 0..r {
            rec.set("eq23", verify_du_formula(field, &x, &one, alpha, analytic)?);
        }
        rec.set("eq24", verify_combined_formula(field, &x, &one, analytic)?);
        rec.set("eq25", verify_symmetric_relation(&ctx, &one));

        // Relations used to pass from the symmetric commutator identity to B = 0.
        let mut chain29 = Vector::zeros(n);
        let mut chain31 = 0.0;
        for alpha in 0..r {
            let b = commutator_b(&ctx, alpha);
            let bx = &b * xv;
            chain29 += &bx * yv.dot(&sigma.xi[alpha]) + &sigma.xi[alpha] * bx.dot(yv);
            chain31 += yv.dot(&sigma.xi[alpha]) * bx.dot(zv);
        }
        rec.set("eq27_31", chain29.norm().max(chain31.abs()));
    }

    if setup.closed_form {
        let closed = closed_form_sigma_sphere(&setup.structure, &x)?;
        rec.set("eq41_45", sigma_discrepancy(&closed, &sigma)?);
    }

    let gram = gram_matrix(&sigma);
    rec.set("eq26", gram.agreement);

    Ok(PointOutcome {
        coords: x.coords().iter().copied().collect(),
        residuals: rec.0,
        independence: point_independence(field, &sigma, index),
    })
}

fn applicable_per_point(config: &RunConfig, setup: &Setup, id: &str) -> bool {
    match id {
        "eq41_45" => setup.closed_form,
        "sphere_specializations" => matches!(config.surface, SurfaceKind::Sphere { .. }),
        _ => true,
    }
}

/// Run every verification for `config`. The result depends only on the
/// configuration, not on the size of the rayon pool it runs in.
pub fn run_suite(config: &RunConfig) -> Result<ResidualReport> {
    config.validate()?;
    let structure = config.build_structure()?;
    let surface = config.build_surface()?;
    let field = SigmaField::new(&structure, surface)?;
    let setup = Setup {
        closed_form: matches!(surface.kind, SurfaceKind::Sphere { .. })
            && structure.is_standard_orientation(),
        fd: DerivativeMode::default_fd(&surface),
        structure,
        field,
        surface,
    };

    let global = global_residuals(config, &setup)?;
    let outcomes: Vec<PointOutcome> = (0..config.samples)
        .into_par_iter()
        .map(|i| evaluate_point(&setup, config.seed, i))
        .collect::<Result<_>>()?;

    let mut identities = Vec::with_capacity(IDENTITIES.len());
    for (k, spec) in IDENTITIES.iter().enumerate() {
        let tolerance = config.tolerance(spec.id);
        let (residuals, coords): (Vec<f64>, Vec<Option<&Vec<f64>>>) = match spec.scope {
            Scope::Global => global.0[k]
                .map(|v| (vec![v], vec![None]))
                .unwrap_or_default(),
            Scope::PerPoint => {
                if applicable_per_point(config, &setup, spec.id) {
                    outcomes
                        .iter()
                        .filter_map(|o| o.residuals[k].map(|v| (v, Some(&o.coords))))
                        .unzip()
                } else {
                    (Vec::new(), Vec::new())
                }
            }
        };
        let applicable = !residuals.is_empty();
        let (mut worst_index, mut max_residual) = (None, 0.0f64);
        for (i, &v) in residuals.iter().enumerate() {
            if worst_index.is_none() || v > max_residual {
                worst_index = Some(i);
                max_residual = v;
            }
        }
        let mean_residual = if applicable {
            residuals.iter().sum::<f64>() / residuals.len() as f64
        } else {
            0.0
        };
        let worst_point = worst_index.and_then(|i| coords[i].cloned());
        let degeneracy = (spec.id == "eq26").then(|| degeneracy_summary(&outcomes));
        identities.push(IdentityRecord {
            id: spec.id.to_string(),
            description: spec.description.to_string(),
            applicable,
            max_residual,
            mean_residual,
            worst_index: if spec.scope == Scope::PerPoint {
                worst_index
            } else {
                None
            },
            worst_point,
            tolerance,
            pass: max_residual <= tolerance,
            residuals,
            degeneracy,
        });
    }

    let mut report = ResidualReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        fd_step: match setup.fd {
            DerivativeMode::FiniteDifference { step } => step,
            DerivativeMode::Analytic => 0.0,
        },
        all_pass: false,
        identities,
        wall_time_seconds: None,
    };
    report.all_pass = report.coverage_gaps().is_empty() && report.identities.iter().all(|r| r.pass);
    Ok(report)
}

fn degeneracy_summary(outcomes: &[PointOutcome]) -> DegeneracySummary {
    let mut summary = DegeneracySummary {
        flagged_points: 0,
        total_points: outcomes.len(),
        reasons: BTreeMap::new(),
        classifications: BTreeMap::new(),
        min_abs_det: f64::INFINITY,
        first_flagged: Vec::new(),
    };
    for o in outcomes {
        let ind = &o.independence;
        summary.min_abs_det = summary.min_abs_det.min(ind.det.abs());
        let class = serde_json::to_value(ind.classification)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        *summary.classifications.entry(class).or_default() += 1;
        if let Some(reason) = &ind.reason {
            summary.flagged_points += 1;
            *summary.reasons.entry(reason.clone()).or_default() += 1;
            if summary.first_flagged.len() < 16 {
                summary.first_flagged.push(ind.index);
            }
        }
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_ids_are_unique() {
        let mut ids = identity_ids();
        let n = ids.len();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), n);
    }

    #[test]
    fn config_validation() {
        RunConfig::default().validate().unwrap();
        let bad = [
            RunConfig {
                samples: 0,
                ..RunConfig::default()
            },
            RunConfig {
                p: 2,
                ..RunConfig::default()
            },
            RunConfig {
                surface: SurfaceKind::Sphere { radius: -1.0 },
                ..RunConfig::default()
            },
            RunConfig {
                tolerances: [("eq99".to_string(), 1e-3)].into(),
                ..RunConfig::default()
            },
            RunConfig {
                epsilon: EpsilonSpec::Signs(vec![1, 1]),
                ..RunConfig::default()
            },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn epsilon_defaults_follow_lambda() {
        let mut c = RunConfig {
            dims: (1, 3),
            lambda: Sign::Minus,
            ..RunConfig::default()
        };
        assert_eq!(c.epsilon_signs(), vec![-1, -1, -1]);
        assert!(c.build_structure().unwrap().is_standard_orientation());
        c.epsilon = EpsilonSpec::AllPlus;
        assert!(!c.build_structure().unwrap().is_standard_orientation());
    }
}
