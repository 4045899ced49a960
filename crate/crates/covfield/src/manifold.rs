//! Closed-form geometry of the three model manifolds: ℝⁿ, the unit sphere
//! S² and the hyperbolic plane H² in the hyperboloid model.
//!
//! Points are stored in ambient embedding coordinates (ℝⁿ, or ℝ³ for the
//! two curved models). Charts are materialized only as tangent frames, so
//! the metric representation of a canonical chart is the identity and the
//! general tensor formulas stay exercisable through explicit jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{CovfieldError, Result};
use crate::spd::SpdMatrix;

/// Angular margin below π at which the strict sphere log map reports the cut locus.
pub const ANTIPODAL_MARGIN: f64 = 1e-6;

/// Constraint tolerance for point coordinates (relative to the coordinate scale).
pub const POINT_TOL: f64 = 1e-12;

/// Tangency tolerance for vector components (relative to the vector scale).
pub const TANGENT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Manifold {
    Euclidean(usize),
    Sphere2,
    Hyperbolic2,
}

impl Manifold {
    /// Intrinsic dimension n.
    pub fn dimension(self) -> usize {
        match self {
            Manifold::Euclidean(n) => n,
            Manifold::Sphere2 | Manifold::Hyperbolic2 => 2,
        }
    }

    /// Dimension of the ambient embedding space.
    pub fn ambient_dim(self) -> usize {
        match self {
            Manifold::Euclidean(n) => n,
            Manifold::Sphere2 | Manifold::Hyperbolic2 => 3,
        }
    }

    pub fn injectivity_radius(self) -> f64 {
        match self {
            Manifold::Sphere2 => std::f64::consts::PI,
            _ => f64::INFINITY,
        }
    }

    /// Serialization tag: `euclidean:n`, `sphere2`, `hyperbolic2`.
    pub fn tag(self) -> String {
        match self {
            Manifold::Euclidean(n) => format!("euclidean:{n}"),
            Manifold::Sphere2 => "sphere2".to_string(),
            Manifold::Hyperbolic2 => "hyperbolic2".to_string(),
        }
    }

    pub fn parse_tag(tag: &str) -> Result<Self> {
        if tag == "sphere2" {
            return Ok(Manifold::Sphere2);
        }
        if tag == "hyperbolic2" {
            return Ok(Manifold::Hyperbolic2);
        }
        if let Some(dim) = tag.strip_prefix("euclidean:") {
            let n: usize = dim.parse().map_err(|_| {
                CovfieldError::InvalidArgument(format!("bad euclidean dimension in tag {tag:?}"))
            })?;
            if n == 0 {
                return Err(CovfieldError::InvalidArgument(
                    "euclidean dimension must be positive".into(),
                ));
            }
            return Ok(Manifold::Euclidean(n));
        }
        Err(CovfieldError::InvalidArgument(format!(
            "unknown manifold tag {tag:?} (expected euclidean:n, sphere2 or hyperbolic2)"
        )))
    }

    /// Ambient pairing compatible with the metric: the Euclidean dot product,
    /// except on H² where it is the Minkowski form x₁y₁ + x₂y₂ − x₃y₃.
    pub fn ambient_inner(self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        match self {
            Manifold::Hyperbolic2 => a[0] * b[0] + a[1] * b[1] - a[2] * b[2],
            _ => a.dot(b),
        }
    }

    /// Constraint defect of candidate coordinates, scaled to be comparable to
    /// [`POINT_TOL`] regardless of how far the point sits from the origin.
    fn point_defect(self, c: &DVector<f64>) -> f64 {
        match self {
            Manifold::Euclidean(_) => 0.0,
            Manifold::Sphere2 => (c.norm() - 1.0).abs(),
            Manifold::Hyperbolic2 => {
                if c[2] <= 0.0 {
                    return f64::INFINITY;
                }
                let q = c[2] * c[2] - c[0] * c[0] - c[1] * c[1];
                (q - 1.0).abs() / c[2].powi(2).max(1.0)
            }
        }
    }

    pub fn point(self, coords: Vec<f64>) -> Result<ManifoldPoint> {
        ManifoldPoint::new(self, DVector::from_vec(coords))
    }
}

/// A point of a model manifold in ambient embedding coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldPoint {
    manifold: Manifold,
    coords: DVector<f64>,
}

impl ManifoldPoint {
    pub fn new(manifold: Manifold, coords: DVector<f64>) -> Result<Self> {
        if coords.len() != manifold.ambient_dim() {
            return Err(CovfieldError::InvalidArgument(format!(
                "expected {} coordinates for {}, got {}",
                manifold.ambient_dim(),
                manifold.tag(),
                coords.len()
            )));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(CovfieldError::InvalidArgument(
                "point coordinates must be finite".into(),
            ));
        }
        let defect = manifold.point_defect(&coords);
        if defect > POINT_TOL {
            return Err(CovfieldError::InvalidPoint {
                manifold: manifold.tag(),
                defect,
            });
        }
        Ok(Self { manifold, coords })
    }

    /// Internal constructor for coordinates already projected onto the model.
    pub(crate) fn new_unchecked(manifold: Manifold, coords: DVector<f64>) -> Self {
        debug_assert!(manifold.point_defect(&coords) <= 64.0 * POINT_TOL);
        Self { manifold, coords }
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    /// Coordinate-wise closeness used for base-point identity checks.
    pub fn approx_eq(&self, other: &ManifoldPoint, tol: f64) -> bool {
        self.manifold == other.manifold
            && (&self.coords - &other.coords).amax() <= tol
    }
}

/// A tangent vector, carried together with its base point.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    base: ManifoldPoint,
    components: DVector<f64>,
}

impl TangentVector {
    pub fn new(base: ManifoldPoint, components: DVector<f64>) -> Result<Self> {
        if components.len() != base.manifold().ambient_dim() {
            return Err(CovfieldError::InvalidArgument(
                "tangent component count does not match the ambient dimension".into(),
            ));
        }
        if components.iter().any(|x| !x.is_finite()) {
            return Err(CovfieldError::InvalidArgument(
                "tangent components must be finite".into(),
            ));
        }
        let scale = components.amax().max(1.0) * base.coords().amax().max(1.0);
        let defect = match base.manifold() {
            Manifold::Euclidean(_) => 0.0,
            m => m.ambient_inner(&components, base.coords()).abs(),
        };
        if defect > TANGENT_TOL * scale {
            return Err(CovfieldError::NotTangent { defect });
        }
        Ok(Self { base, components })
    }

    pub(crate) fn new_unchecked(base: ManifoldPoint, components: DVector<f64>) -> Self {
        Self { base, components }
    }

    pub fn zero(base: ManifoldPoint) -> Self {
        let dim = base.manifold().ambient_dim();
        Self {
            base,
            components: DVector::zeros(dim),
        }
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn components(&self) -> &DVector<f64> {
        &self.components
    }

    /// Metric norm ‖v‖ (Minkowski-induced on H², where it is positive on
    /// tangent directions).
    pub fn norm(&self) -> f64 {
        let m = self.base.manifold();
        m.ambient_inner(&self.components, &self.components)
            .max(0.0)
            .sqrt()
    }

    pub fn scale(&self, s: f64) -> TangentVector {
        TangentVector {
            base: self.base.clone(),
            components: &self.components * s,
        }
    }
}

fn ensure_same_manifold(q: &ManifoldPoint, p: &ManifoldPoint) -> Result<()> {
    if q.manifold() != p.manifold() {
        return Err(CovfieldError::ManifoldMismatch);
    }
    Ok(())
}

fn ensure_base(q: &ManifoldPoint, v: &TangentVector) -> Result<()> {
    if !v.base().approx_eq(q, POINT_TOL) {
        return Err(CovfieldError::MismatchedBase);
    }
    Ok(())
}

/// Exponential map: the point at unit time along the geodesic from `q` with
/// initial velocity `v`. Strict on S²: ‖v‖ ≥ π is rejected as the cut locus.
pub fn exp(q: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
    exp_impl(q, v, true)
}

/// Exponential map with sphere wraparound permitted (‖v‖ ≥ π allowed).
pub fn exp_wrapped(q: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
    exp_impl(q, v, false)
}

fn exp_impl(q: &ManifoldPoint, v: &TangentVector, strict: bool) -> Result<ManifoldPoint> {
    ensure_base(q, v)?;
    let m = q.manifold();
    match m {
        Manifold::Euclidean(_) => Ok(ManifoldPoint::new_unchecked(
            m,
            q.coords() + v.components(),
        )),
        Manifold::Sphere2 => {
            let t = v.norm();
            if strict && t >= std::f64::consts::PI {
                return Err(CovfieldError::CutLocus(format!(
                    "sphere exponential of a vector of norm {t} (≥ π) in strict mode"
                )));
            }
            if t == 0.0 {
                return Ok(q.clone());
            }
            let u = v.components() / t;
            let mut c = q.coords() * t.cos() + u * t.sin();
            c /= c.norm();
            Ok(ManifoldPoint::new_unchecked(m, c))
        }
        Manifold::Hyperbolic2 => {
            let t = v.norm();
            if t == 0.0 {
                return Ok(q.clone());
            }
            let u = v.components() / t;
            let mut c = q.coords() * t.cosh() + u * t.sinh();
            // Re-project onto the hyperboloid sheet.
            c[2] = (1.0 + c[0] * c[0] + c[1] * c[1]).sqrt();
            Ok(ManifoldPoint::new_unchecked(m, c))
        }
    }
}

/// Inverse exponential map: the tangent vector at `q` pointing to `p`.
/// Strict on S²: near-antipodal `p` (angle > π − [`ANTIPODAL_MARGIN`]) is an
/// error because the direction is not determined there.
pub fn log(q: &ManifoldPoint, p: &ManifoldPoint) -> Result<TangentVector> {
    let (v, near_cut) = log_lenient(q, p)?;
    if near_cut {
        return Err(CovfieldError::CutLocus(format!(
            "log map of a near-antipodal point (angle {:.12})",
            v.norm()
        )));
    }
    Ok(v)
}

/// Lenient log map. The flag is true when `p` is within [`ANTIPODAL_MARGIN`]
/// of the antipode on S²; the returned vector then has norm ≈ π but an
/// arbitrarily chosen direction.
pub fn log_lenient(q: &ManifoldPoint, p: &ManifoldPoint) -> Result<(TangentVector, bool)> {
    ensure_same_manifold(q, p)?;
    let m = q.manifold();
    match m {
        Manifold::Euclidean(_) => Ok((
            TangentVector::new_unchecked(q.clone(), p.coords() - q.coords()),
            false,
        )),
        Manifold::Sphere2 => {
            let cos = q.coords().dot(p.coords()).clamp(-1.0, 1.0);
            let theta = sphere_angle(q.coords(), p.coords());
            if theta > std::f64::consts::PI - ANTIPODAL_MARGIN {
                let u = canonical_frame(q).column(0).into_owned();
                return Ok((
                    TangentVector::new_unchecked(q.clone(), u * theta),
                    true,
                ));
            }
            let mut w = p.coords() - q.coords() * cos;
            let wn = w.norm();
            if wn == 0.0 || theta == 0.0 {
                return Ok((TangentVector::zero(q.clone()), false));
            }
            w *= theta / wn;
            // Orthogonality hygiene against accumulated rounding.
            let drift = w.dot(q.coords());
            w -= q.coords() * drift;
            Ok((TangentVector::new_unchecked(q.clone(), w), false))
        }
        Manifold::Hyperbolic2 => {
            let d = hyperbolic_distance(q.coords(), p.coords());
            if d == 0.0 {
                return Ok((TangentVector::zero(q.clone()), false));
            }
            // w = p − cosh(d)·q written as (p − q) − u·q with u = cosh d − 1,
            // which avoids the cancellation of the direct form near q.
            let u = d.cosh() - 1.0;
            let mut w = (p.coords() - q.coords()) - q.coords() * u;
            let wn = m.ambient_inner(&w, &w).max(0.0).sqrt();
            if wn == 0.0 {
                return Ok((TangentVector::zero(q.clone()), false));
            }
            w *= d / wn;
            let drift = m.ambient_inner(&w, q.coords());
            // ⟨q,q⟩ = −1, so adding drift·q removes the normal component.
            w += q.coords() * drift;
            Ok((TangentVector::new_unchecked(q.clone(), w), false))
        }
    }
}

/// Geodesic distance. Well defined everywhere, including antipodal pairs.
pub fn distance(q: &ManifoldPoint, p: &ManifoldPoint) -> Result<f64> {
    ensure_same_manifold(q, p)?;
    Ok(match q.manifold() {
        Manifold::Euclidean(_) => (p.coords() - q.coords()).norm(),
        Manifold::Sphere2 => sphere_angle(q.coords(), p.coords()),
        Manifold::Hyperbolic2 => hyperbolic_distance(q.coords(), p.coords()),
    })
}

/// Angle between unit vectors through atan2, which keeps full precision at
/// small separations where acos of the dot product loses half the digits.
fn sphere_angle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let cross = cross3(a, b).norm();
    let dot = a.dot(b);
    cross.atan2(dot)
}

/// Hyperboloid distance via u = cosh d − 1 computed without cancellation:
/// u = −⟨q, p − q⟩ and acosh(1 + u) = ln(1 + u + √(u(u + 2))).
fn hyperbolic_distance(q: &DVector<f64>, p: &DVector<f64>) -> f64 {
    let m = Manifold::Hyperbolic2;
    let diff = p - q;
    let u = (-m.ambient_inner(q, &diff)).max(0.0);
    (u + (u * (u + 2.0)).sqrt()).ln_1p()
}

/// Assemble an ambient_dim × n matrix from owned column vectors.
pub(crate) fn matrix_from_cols(cols: &[DVector<f64>]) -> DMatrix<f64> {
    let rows = cols[0].len();
    DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// Deterministic orthonormal tangent frame at a point, as columns of an
/// ambient_dim × n matrix.
fn canonical_frame(p: &ManifoldPoint) -> DMatrix<f64> {
    let m = p.manifold();
    match m {
        Manifold::Euclidean(n) => DMatrix::identity(n, n),
        Manifold::Sphere2 => {
            let c = p.coords();
            // Axis least aligned with p keeps the cross product well conditioned.
            let mut axis = DVector::zeros(3);
            let k = (0..3)
                .min_by(|&i, &j| c[i].abs().partial_cmp(&c[j].abs()).unwrap())
                .unwrap();
            axis[k] = 1.0;
            let e1 = cross3(c, &axis);
            let e1 = &e1 / e1.norm();
            let e2 = cross3(c, &e1);
            let e2 = &e2 / e2.norm();
            matrix_from_cols(&[e1, e2])
        }
        Manifold::Hyperbolic2 => {
            // Minkowski-project the first two coordinate axes and Gram-Schmidt.
            let c = p.coords();
            let mut cols: Vec<DVector<f64>> = Vec::with_capacity(2);
            for k in 0..2 {
                let mut a = DVector::zeros(3);
                a[k] = 1.0;
                let drift = m.ambient_inner(&a, c);
                let mut v = a + c * drift;
                for prev in cols.iter() {
                    let g = m.ambient_inner(&v, prev);
                    v -= prev * g;
                }
                let n = m.ambient_inner(&v, &v).sqrt();
                cols.push(v / n);
            }
            matrix_from_cols(&cols)
        }
    }
}

/// A system of coordinates at a base point, realized as a tangent frame.
/// Canonical charts are orthonormal; arbitrary nonsingular frames are
/// accepted so the tensor transformation laws can be exercised directly.
#[derive(Clone, Debug)]
pub struct Chart {
    base: ManifoldPoint,
    frame: DMatrix<f64>,
    gram: DMatrix<f64>,
    orthonormal: bool,
}

impl Chart {
    /// Chart with the deterministic orthonormal frame at `base`.
    pub fn canonical(base: &ManifoldPoint) -> Chart {
        let frame = canonical_frame(base);
        let n = base.manifold().dimension();
        Chart {
            base: base.clone(),
            frame,
            gram: DMatrix::identity(n, n),
            orthonormal: true,
        }
    }

    /// Chart with an arbitrary frame given as columns. The columns must be
    /// tangent at `base` and linearly independent.
    pub fn new(base: ManifoldPoint, frame: DMatrix<f64>) -> Result<Chart> {
        let m = base.manifold();
        let n = m.dimension();
        if frame.nrows() != m.ambient_dim() || frame.ncols() != n {
            return Err(CovfieldError::InvalidArgument(
                "chart frame must have one tangent column per intrinsic dimension".into(),
            ));
        }
        for j in 0..n {
            let col = frame.column(j).into_owned();
            TangentVector::new(base.clone(), col)?;
        }
        let gram = frame_gram(m, &frame);
        let det = gram.determinant();
        if !(det.abs() > 1e-14 * gram.amax().powi(n as i32).max(1e-300)) {
            return Err(CovfieldError::DegenerateFrame { det });
        }
        let orthonormal = is_identity(&gram, TANGENT_TOL);
        Ok(Chart {
            base,
            frame,
            gram,
            orthonormal,
        })
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        is_identity(&self.gram, tol)
    }

    /// Components of a tangent vector in this chart (solves the Gram system
    /// when the frame is not orthonormal).
    pub fn components(&self, v: &TangentVector) -> Result<DVector<f64>> {
        ensure_base(&self.base, v)?;
        let m = self.base.manifold();
        let n = self.frame.ncols();
        let mut b = DVector::zeros(n);
        for j in 0..n {
            b[j] = m.ambient_inner(&self.frame.column(j).into_owned(), v.components());
        }
        if self.orthonormal {
            return Ok(b);
        }
        self.gram
            .clone()
            .lu()
            .solve(&b)
            .ok_or(CovfieldError::DegenerateFrame {
                det: self.gram.determinant(),
            })
    }

    /// Tangent vector with the given chart components.
    pub fn vector(&self, components: &DVector<f64>) -> TangentVector {
        TangentVector::new_unchecked(self.base.clone(), &self.frame * components)
    }
}

fn frame_gram(m: Manifold, frame: &DMatrix<f64>) -> DMatrix<f64> {
    let n = frame.ncols();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = m.ambient_inner(
                &frame.column(i).into_owned(),
                &frame.column(j).into_owned(),
            );
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

fn is_identity(g: &DMatrix<f64>, tol: f64) -> bool {
    let n = g.nrows();
    (0..n).all(|i| (0..n).all(|j| (g[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs() <= tol))
}

/// Coordinate representation G_x of the metric in a chart: the Gram matrix
/// of the frame under the manifold metric. Identity for orthonormal frames.
pub fn metric_at(chart: &Chart) -> SpdMatrix {
    SpdMatrix::new(chart.gram.clone()).expect("frame gram matrix is symmetric by construction")
}

fn cross3(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}
