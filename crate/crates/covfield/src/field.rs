//! Covariance tensors Σ(q) of a discrete distribution, amplitude-controlled
//! extended fields, trace/variance fields, the intrinsic mean, and
//! continuity probes along converging trajectories.

use nalgebra::{DMatrix, DVector};

use crate::error::{CovfieldError, Result};
use crate::manifold::{self, Chart, Manifold, ManifoldPoint, TangentVector};
use crate::spd::SpdMatrix;

/// A probability mass function on a finite support set.
#[derive(Clone, Debug)]
pub struct Pmf {
    support: Vec<ManifoldPoint>,
    weights: DVector<f64>,
}

/// Weight-sum tolerance for simplex membership.
pub const SIMPLEX_TOL: f64 = 1e-12;

impl Pmf {
    pub fn new(support: Vec<ManifoldPoint>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(CovfieldError::InvalidArgument(
                "pmf support must be nonempty".into(),
            ));
        }
        if support.len() != weights.len() {
            return Err(CovfieldError::InvalidArgument(format!(
                "{} support points but {} weights",
                support.len(),
                weights.len()
            )));
        }
        let m = support[0].manifold();
        if support.iter().any(|p| p.manifold() != m) {
            return Err(CovfieldError::ManifoldMismatch);
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CovfieldError::InvalidArgument(
                "pmf weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(CovfieldError::InvalidArgument(format!(
                "pmf weights sum to {sum}, not 1"
            )));
        }
        Ok(Self {
            support,
            weights: DVector::from_vec(weights),
        })
    }

    /// Equal weights on the given points.
    pub fn uniform(support: Vec<ManifoldPoint>) -> Result<Self> {
        let k = support.len();
        if k == 0 {
            return Err(CovfieldError::InvalidArgument(
                "pmf support must be nonempty".into(),
            ));
        }
        let w = 1.0 / k as f64;
        // Force an exact simplex sum regardless of 1/k rounding.
        let mut weights = vec![w; k];
        let sum: f64 = weights.iter().sum();
        weights[k - 1] += 1.0 - sum;
        Pmf::new(support, weights)
    }

    pub fn point_mass(p: ManifoldPoint) -> Self {
        Self {
            support: vec![p],
            weights: DVector::from_element(1, 1.0),
        }
    }

    pub fn support(&self) -> &[ManifoldPoint] {
        &self.support
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn manifold(&self) -> Manifold {
        self.support[0].manifold()
    }

    /// Same support, different weights.
    pub fn reweighted(&self, weights: Vec<f64>) -> Result<Pmf> {
        Pmf::new(self.support.clone(), weights)
    }
}

/// Amplitude function r(t) inside the extended covariance integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AmplitudeFn {
    /// r ≡ 1 (the default covariance field).
    Unit,
    /// r(t; a) = (1 − a/t)², which tempers the trace of the field.
    OneMinusOverT { a: f64 },
}

impl AmplitudeFn {
    pub fn scaled(a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(CovfieldError::InvalidArgument(format!(
                "amplitude parameter a must be positive and finite, got {a}"
            )));
        }
        Ok(AmplitudeFn::OneMinusOverT { a })
    }

    /// r(t) for t > 0. The scaled form diverges as t → 0; the field
    /// evaluation never calls this at t = 0 (the rank-one term there is the
    /// zero matrix and its contribution is defined to be zero).
    pub fn value(self, t: f64) -> f64 {
        match self {
            AmplitudeFn::Unit => 1.0,
            AmplitudeFn::OneMinusOverT { a } => {
                let s = 1.0 - a / t;
                s * s
            }
        }
    }

    /// The weighted squared distance d²·r(d) entering the 𝒴 matrix and the
    /// trace field. Evaluated in the product form (d − a)², which is finite
    /// for all d; the d = 0 term is 0 by the zero-contribution convention.
    pub fn y_entry(self, d: f64) -> f64 {
        if d == 0.0 {
            return 0.0;
        }
        match self {
            AmplitudeFn::Unit => d * d,
            AmplitudeFn::OneMinusOverT { a } => {
                let s = d - a;
                s * s
            }
        }
    }

    /// Parse `unit`, `a=<v>` or `optimal:R=<v>`.
    pub fn parse(s: &str) -> Result<Self> {
        if s == "unit" {
            return Ok(AmplitudeFn::Unit);
        }
        if let Some(v) = s.strip_prefix("a=") {
            let a: f64 = v.parse().map_err(|_| {
                CovfieldError::InvalidArgument(format!("bad amplitude parameter in {s:?}"))
            })?;
            return AmplitudeFn::scaled(a);
        }
        if let Some(v) = s.strip_prefix("optimal:R=") {
            let r: f64 = v.parse().map_err(|_| {
                CovfieldError::InvalidArgument(format!("bad geodesic radius in {s:?}"))
            })?;
            return optimal_amplitude(r);
        }
        Err(CovfieldError::InvalidArgument(format!(
            "bad amplitude spec {s:?} (expected unit, a=<v> or optimal:R=<v>)"
        )))
    }

    pub fn spec_string(self) -> String {
        match self {
            AmplitudeFn::Unit => "unit".to_string(),
            AmplitudeFn::OneMinusOverT { a } => format!("a={a}"),
        }
    }
}

/// The amplitude r(t; a) = (1 − a/t)² with a = R/2, the trace-minimizing
/// member of the family for distributions of geodesic radius R.
pub fn optimal_amplitude(radius: f64) -> Result<AmplitudeFn> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(CovfieldError::InvalidArgument(format!(
            "geodesic radius must be positive and finite, got {radius}"
        )));
    }
    AmplitudeFn::scaled(radius / 2.0)
}

/// A covariance tensor at a point, with components in a chart frame.
#[derive(Clone, Debug)]
pub struct CovarianceTensor {
    pub at: ManifoldPoint,
    pub sigma: SpdMatrix,
    pub amplitude: AmplitudeFn,
    /// Set when the pushed-forward support is (numerically) contained in a
    /// hyperplane, so the tensor is only semidefinite.
    pub degenerate: bool,
}

/// Rank-one tensor Z(q, p) = (log_q p)(log_q p)ᵀ in the chart frame.
/// Its trace equals d²(q, p) when the frame is orthonormal.
pub fn z_tensor(q: &ManifoldPoint, p: &ManifoldPoint, chart: &Chart) -> Result<SpdMatrix> {
    let l = manifold::log(q, p)?;
    let c = chart.components(&l)?;
    SpdMatrix::new(&c * c.transpose())
}

fn weighted_outer(
    c: &DVector<f64>,
    d: f64,
    weight: f64,
    r: AmplitudeFn,
    acc: &mut DMatrix<f64>,
) {
    if d == 0.0 {
        return;
    }
    let factor = match r {
        AmplitudeFn::Unit => weight,
        AmplitudeFn::OneMinusOverT { a } => {
            // c cᵀ r(d) = ((d − a)/d)² c cᵀ, finite for every d > 0.
            let s = (d - a) / d;
            weight * s * s
        }
    };
    // acc += factor · c cᵀ
    let n = c.len();
    for i in 0..n {
        for j in 0..n {
            acc[(i, j)] += factor * c[i] * c[j];
        }
    }
}

/// Covariance tensor of a pmf at `q`: Σ(q) = Σᵢ fᵢ Z(q, pᵢ) r(d(q, pᵢ)).
pub fn covariance_at(
    q: &ManifoldPoint,
    pmf: &Pmf,
    r: AmplitudeFn,
    chart: &Chart,
) -> Result<CovarianceTensor> {
    if pmf.manifold() != q.manifold() {
        return Err(CovfieldError::ManifoldMismatch);
    }
    let n = q.manifold().dimension();
    let mut acc = DMatrix::zeros(n, n);
    let mut offenders = Vec::new();
    for (i, p) in pmf.support().iter().enumerate() {
        match manifold::log(q, p) {
            Ok(l) => {
                let d = l.norm();
                let c = chart.components(&l)?;
                weighted_outer(&c, d, pmf.weights()[i], r, &mut acc);
            }
            Err(CovfieldError::CutLocus(_)) => offenders.push(i),
            Err(e) => return Err(e),
        }
    }
    if !offenders.is_empty() {
        return Err(CovfieldError::CutLocus(format!(
            "support points {offenders:?} lie at the cut locus of the evaluation point"
        )));
    }
    let sigma = SpdMatrix::new(acc)?;
    let degenerate = !sigma.is_strictly_pd();
    Ok(CovarianceTensor {
        at: q.clone(),
        sigma,
        amplitude: r,
        degenerate,
    })
}

/// The scalar ⟨w, (GΣ)(v)⟩ = w_xᵀ G_x Σ_x G_x v_x in the chart of Σ.
/// Chart-invariant: transforming every piece by a jacobian leaves it fixed.
pub fn operator_quadratic_form(
    sigma: &SpdMatrix,
    chart: &Chart,
    v: &TangentVector,
    w: &TangentVector,
) -> Result<f64> {
    let g = manifold::metric_at(chart);
    let vc = chart.components(v)?;
    let wc = chart.components(w)?;
    Ok((wc.transpose() * g.entries() * sigma.entries() * g.entries() * vc)[(0, 0)])
}

/// The trace field tr(GΣ(q)) = Σᵢ fᵢ d²(q, pᵢ) r(d(q, pᵢ)) — the "variance"
/// ρ(q) of the pmf when r ≡ 1. Frame-independent.
pub fn trace_field(q: &ManifoldPoint, pmf: &Pmf, r: AmplitudeFn) -> Result<f64> {
    if pmf.manifold() != q.manifold() {
        return Err(CovfieldError::ManifoldMismatch);
    }
    let mut acc = 0.0;
    let mut offenders = Vec::new();
    for (i, p) in pmf.support().iter().enumerate() {
        match manifold::distance(q, p) {
            Ok(d) => {
                if q.manifold() == Manifold::Sphere2
                    && d > std::f64::consts::PI - manifold::ANTIPODAL_MARGIN
                {
                    offenders.push(i);
                } else {
                    acc += pmf.weights()[i] * r.y_entry(d);
                }
            }
            Err(e) => return Err(e),
        }
    }
    if !offenders.is_empty() {
        return Err(CovfieldError::CutLocus(format!(
            "support points {offenders:?} lie at the cut locus of the evaluation point"
        )));
    }
    Ok(acc)
}

/// Options for the intrinsic-mean gradient iteration.
#[derive(Clone, Copy, Debug)]
pub struct MeanOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub step_init: f64,
}

impl Default for MeanOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 512,
            step_init: 1.0,
        }
    }
}

/// Intrinsic (Fréchet) mean: the minimizer of q ↦ tr(GΣ(q)) with r ≡ 1,
/// found by the gradient iteration q ← exp_q(τ Σᵢ fᵢ log_q pᵢ), with τ
/// halved whenever the objective fails to decrease.
pub fn intrinsic_mean(pmf: &Pmf, init: &ManifoldPoint, opts: MeanOptions) -> Result<ManifoldPoint> {
    if pmf.manifold() != init.manifold() {
        return Err(CovfieldError::ManifoldMismatch);
    }
    let mut q = init.clone();
    let mut value = trace_field(&q, pmf, AmplitudeFn::Unit)?;
    let mut grad_norm = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let mut mean = DVector::zeros(q.manifold().ambient_dim());
        for (i, p) in pmf.support().iter().enumerate() {
            let l = manifold::log(&q, p)?;
            mean += l.components() * pmf.weights()[i];
        }
        let step_vec = TangentVector::new_unchecked(q.clone(), mean);
        grad_norm = step_vec.norm();
        if grad_norm <= opts.tol {
            return Ok(q);
        }
        let mut tau = opts.step_init;
        loop {
            let cand = manifold::exp(&q, &step_vec.scale(tau))?;
            let cand_value = trace_field(&cand, pmf, AmplitudeFn::Unit)?;
            if cand_value < value {
                q = cand;
                value = cand_value;
                break;
            }
            tau *= 0.5;
            if tau < 1e-16 {
                // Stationary within floating-point resolution.
                return Ok(q);
            }
        }
    }
    Err(CovfieldError::NoConvergence {
        iterations: opts.max_iter,
        grad_norm,
    })
}

/// Sequences gathered along a trajectory converging to q₀.
#[derive(Clone, Debug)]
pub struct ContinuityReport {
    pub traces: Vec<f64>,
    pub quadratic_forms: Vec<f64>,
    pub eigenvalues: Vec<Vec<f64>>,
    pub limit_trace: f64,
    pub limit_form: f64,
    pub limit_eigenvalues: Vec<f64>,
    pub trace_deviation: Vec<f64>,
    pub form_deviation: Vec<f64>,
    pub eigen_deviation: Vec<f64>,
    /// Largest of the three deviations at the final trajectory point.
    pub max_tail_deviation: f64,
}

/// Frame at `p` that converges to the canonical frame at `q0` as p → q0:
/// the q0 frame columns projected onto the tangent space at p and
/// re-orthonormalized.
fn transported_chart(q0_chart: &Chart, p: &ManifoldPoint) -> Result<Chart> {
    let m = p.manifold();
    if let Manifold::Euclidean(_) = m {
        return Ok(Chart::canonical(p));
    }
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(2);
    for j in 0..q0_chart.frame().ncols() {
        let a = q0_chart.frame().column(j).into_owned();
        // Remove the normal component at p (sign differs between the
        // sphere's Euclidean normal and the hyperboloid's Minkowski one).
        let mut v = match m {
            Manifold::Sphere2 => &a - p.coords() * a.dot(p.coords()),
            Manifold::Hyperbolic2 => {
                let drift = m.ambient_inner(&a, p.coords());
                &a + p.coords() * drift
            }
            Manifold::Euclidean(_) => unreachable!(),
        };
        for prev in cols.iter() {
            let g = m.ambient_inner(&v, prev);
            v -= prev * g;
        }
        let n = m.ambient_inner(&v, &v).max(0.0).sqrt();
        if n < 1e-8 {
            return Err(CovfieldError::DegenerateFrame { det: n });
        }
        cols.push(v / n);
    }
    Chart::new(p.clone(), manifold::matrix_from_cols(&cols))
}

/// Evaluate trace, a fixed quadratic form, and the operator spectrum of the
/// covariance field along a trajectory q_k → q₀, reporting deviations from
/// the values at q₀.
pub fn continuity_probe(
    pmf: &Pmf,
    q0: &ManifoldPoint,
    r: AmplitudeFn,
    trajectory: &[ManifoldPoint],
) -> Result<ContinuityReport> {
    let mut last = f64::INFINITY;
    for p in trajectory {
        let d = manifold::distance(q0, p)?;
        if d > last + 1e-12 {
            return Err(CovfieldError::InvalidArgument(
                "trajectory distances to q0 must be non-increasing".into(),
            ));
        }
        last = d;
    }

    let chart0 = Chart::canonical(q0);
    let eval = |q: &ManifoldPoint| -> Result<(f64, f64, Vec<f64>)> {
        let chart = transported_chart(&chart0, q)?;
        let cov = covariance_at(q, pmf, r, &chart)?;
        let tr = trace_field(q, pmf, r)?;
        let n = q.manifold().dimension();
        // Fixed chart coefficients make the probe vectors converge with the frame.
        let vc = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let wc = DVector::from_fn(n, |i, _| 1.0 / (i as f64 + 1.0));
        let v = chart.vector(&vc);
        let w = chart.vector(&wc);
        let form = operator_quadratic_form(&cov.sigma, &chart, &v, &w)?;
        let eig: Vec<f64> = cov.sigma.eigenvalues().iter().copied().collect();
        Ok((tr, form, eig))
    };

    let (limit_trace, limit_form, limit_eigenvalues) = eval(q0)?;
    let mut report = ContinuityReport {
        traces: Vec::new(),
        quadratic_forms: Vec::new(),
        eigenvalues: Vec::new(),
        limit_trace,
        limit_form,
        limit_eigenvalues: limit_eigenvalues.clone(),
        trace_deviation: Vec::new(),
        form_deviation: Vec::new(),
        eigen_deviation: Vec::new(),
        max_tail_deviation: 0.0,
    };
    for q in trajectory {
        let (tr, form, eig) = eval(q)?;
        report.trace_deviation.push((tr - limit_trace).abs());
        report.form_deviation.push((form - limit_form).abs());
        let edev = eig
            .iter()
            .zip(&limit_eigenvalues)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        report.eigen_deviation.push(edev);
        report.traces.push(tr);
        report.quadratic_forms.push(form);
        report.eigenvalues.push(eig);
    }
    if let (Some(t), Some(f), Some(e)) = (
        report.trace_deviation.last(),
        report.form_deviation.last(),
        report.eigen_deviation.last(),
    ) {
        report.max_tail_deviation = t.max(*f).max(*e);
    }
    Ok(report)
}

/// Eigenvalues of the covariance operator GΣ in a chart, computed through
/// the symmetric matrix G^{1/2} Σ G^{1/2} similar to GΣ.
pub fn operator_spectrum(g: &SpdMatrix, sigma: &SpdMatrix) -> Result<DVector<f64>> {
    let s = g.sqrt()?;
    let m = s.entries() * sigma.entries() * s.entries();
    Ok(SpdMatrix::new((&m + m.transpose()) * 0.5)?.eigenvalues())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn e2(x: f64, y: f64) -> ManifoldPoint {
        Manifold::Euclidean(2).point(vec![x, y]).unwrap()
    }

    #[test]
    fn z_tensor_cases() {
        let q = e2(0.0, 0.0);
        let chart = Chart::canonical(&q);
        let z0 = z_tensor(&q, &q, &chart).unwrap();
        assert_eq!(z0.entries().amax(), 0.0);

        let z = z_tensor(&q, &e2(1.0, 0.0), &chart).unwrap();
        assert_relative_eq!(z.entries()[(0, 0)], 1.0, epsilon = 1e-15);
        assert_eq!(z.entries()[(0, 1)], 0.0);
        assert_eq!(z.entries()[(1, 1)], 0.0);
    }

    #[test]
    fn covariance_of_two_point_pmf() {
        let pmf = Pmf::new(vec![e2(0.0, 0.0), e2(1.0, 0.0)], vec![0.5, 0.5]).unwrap();
        let q = e2(0.0, 0.0);
        let chart = Chart::canonical(&q);
        let cov = covariance_at(&q, &pmf, AmplitudeFn::Unit, &chart).unwrap();
        assert_relative_eq!(cov.sigma.entries()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_eq!(cov.sigma.entries()[(1, 1)], 0.0);
        assert!(cov.degenerate, "support on a line through q is flagged");
    }

    #[test]
    fn point_mass_covariance_matches_z() {
        let p = e2(0.7, -0.3);
        let pmf = Pmf::point_mass(p.clone());
        let q = e2(0.0, 0.0);
        let chart = Chart::canonical(&q);
        let cov = covariance_at(&q, &pmf, AmplitudeFn::Unit, &chart).unwrap();
        let z = z_tensor(&q, &p, &chart).unwrap();
        assert_relative_eq!(
            (cov.sigma.entries() - z.entries()).amax(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn trace_field_agrees_with_covariance_trace() {
        let pmf = Pmf::new(
            vec![e2(0.1, 0.2), e2(-0.5, 0.8), e2(1.5, -0.4)],
            vec![0.2, 0.3, 0.5],
        )
        .unwrap();
        let q = e2(0.25, 0.25);
        let chart = Chart::canonical(&q);
        for r in [AmplitudeFn::Unit, AmplitudeFn::scaled(0.7).unwrap()] {
            let cov = covariance_at(&q, &pmf, r, &chart).unwrap();
            let tr = trace_field(&q, &pmf, r).unwrap();
            assert_relative_eq!(cov.sigma.trace(), tr, epsilon = 1e-12);
        }
    }

    #[test]
    fn trace_field_zero_at_point_mass_base() {
        let p = Manifold::Sphere2.point(vec![0.0, 0.0, 1.0]).unwrap();
        let pmf = Pmf::point_mass(p.clone());
        assert_eq!(trace_field(&p, &pmf, AmplitudeFn::Unit).unwrap(), 0.0);
        // Zero-contribution convention also under a scaled amplitude.
        assert_eq!(
            trace_field(&p, &pmf, AmplitudeFn::scaled(1.0).unwrap()).unwrap(),
            0.0
        );
    }

    #[test]
    fn euclidean_mean_in_one_step() {
        let pmf = Pmf::new(
            vec![e2(0.0, 0.0), e2(2.0, 0.0), e2(0.0, 4.0)],
            vec![0.25, 0.25, 0.5],
        )
        .unwrap();
        let mean = intrinsic_mean(&pmf, &e2(5.0, 5.0), MeanOptions::default()).unwrap();
        assert_relative_eq!(mean.coords()[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(mean.coords()[1], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn sphere_mean_of_symmetric_pair_is_midpoint() {
        let a = Manifold::Sphere2.point(vec![1.0, 0.0, 0.0]).unwrap();
        let b = Manifold::Sphere2.point(vec![0.0, 1.0, 0.0]).unwrap();
        let pmf = Pmf::new(vec![a, b], vec![0.5, 0.5]).unwrap();
        let init = Manifold::Sphere2
            .point(vec![0.8, 0.6, 0.0])
            .unwrap();
        let mean = intrinsic_mean(&pmf, &init, MeanOptions::default()).unwrap();
        let s = 1.0 / 2.0_f64.sqrt();
        assert_relative_eq!(mean.coords()[0], s, epsilon = 1e-8);
        assert_relative_eq!(mean.coords()[1], s, epsilon = 1e-8);
        assert!(mean.coords()[2].abs() < 1e-8);
    }

    #[test]
    fn optimal_amplitude_is_half_radius() {
        match optimal_amplitude(std::f64::consts::PI).unwrap() {
            AmplitudeFn::OneMinusOverT { a } => {
                assert_relative_eq!(a, std::f64::consts::FRAC_PI_2, epsilon = 1e-15)
            }
            _ => panic!("expected scaled amplitude"),
        }
        match optimal_amplitude(2.0).unwrap() {
            AmplitudeFn::OneMinusOverT { a } => assert_relative_eq!(a, 1.0, epsilon = 1e-15),
            _ => panic!("expected scaled amplitude"),
        }
        // The bound R²/3 − aR + a² over a grid is minimized at a = R/2.
        let r = 1.7;
        let g = |a: f64| r * r / 3.0 - a * r + a * a;
        let mut best = (f64::INFINITY, 0.0);
        let mut a = 0.05;
        while a <= r {
            if g(a) < best.0 {
                best = (g(a), a);
            }
            a += 0.05;
        }
        assert!((best.1 - r / 2.0).abs() <= 0.051);
    }

    #[test]
    fn quadratic_form_reduces_to_inner_product_for_identity_sigma() {
        let q = Manifold::Sphere2.point(vec![0.0, 0.0, 1.0]).unwrap();
        let chart = Chart::canonical(&q);
        let sigma = SpdMatrix::identity(2);
        let v = chart.vector(&DVector::from_vec(vec![0.3, -0.4]));
        let w = chart.vector(&DVector::from_vec(vec![1.0, 2.0]));
        let form = operator_quadratic_form(&sigma, &chart, &v, &w).unwrap();
        let dot = v.components().dot(w.components());
        assert_relative_eq!(form, dot, epsilon = 1e-12);
        assert_eq!(
            operator_quadratic_form(&sigma, &chart, &TangentVector::zero(q.clone()), &w).unwrap(),
            0.0
        );
    }

    #[test]
    fn constant_trajectory_probe_has_zero_deviation() {
        let q0 = Manifold::Sphere2.point(vec![0.0, 0.0, 1.0]).unwrap();
        let p = Manifold::Sphere2.point(vec![0.6, 0.0, 0.8]).unwrap();
        let pmf = Pmf::new(vec![q0.clone(), p], vec![0.4, 0.6]).unwrap();
        let traj = vec![q0.clone(), q0.clone(), q0.clone()];
        let rep = continuity_probe(&pmf, &q0, AmplitudeFn::Unit, &traj).unwrap();
        assert_eq!(rep.max_tail_deviation, 0.0);
    }

    #[test]
    fn pmf_validation() {
        let a = e2(0.0, 0.0);
        let b = e2(1.0, 1.0);
        assert!(Pmf::new(vec![a.clone(), b.clone()], vec![0.5, 0.6]).is_err());
        assert!(Pmf::new(vec![a.clone(), b.clone()], vec![1.1, -0.1]).is_err());
        assert!(Pmf::new(vec![], vec![]).is_err());
        let sphere_p = Manifold::Sphere2.point(vec![0.0, 0.0, 1.0]).unwrap();
        assert!(Pmf::new(vec![a, sphere_p], vec![0.5, 0.5]).is_err());
    }
}
