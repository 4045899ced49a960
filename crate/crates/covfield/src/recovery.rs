//! The inverse problem: recover a pmf from a covariance set by minimizing
//! H(f) = (1/k) Σⱼ h(Σ[f]ⱼ, Cⱼ) over the probability simplex.
//!
//! The solver is projected gradient descent with Euclidean projection onto
//! the simplex and a backtracking (halving) Armijo line search, warm-started
//! each iteration with a safeguarded Barzilai–Borwein step length.

use nalgebra::{DMatrix, DVector};

use crate::error::{CovfieldError, Result};
use crate::field::{covariance_at, AmplitudeFn, Pmf};
use crate::manifold::{self, Chart, Manifold, ManifoldPoint};
use crate::spd::{invariant, numerical_rank, singular_values, InvariantKind, SpdMatrix};

/// Default relative tolerance for rank decisions.
pub const RANK_REL_TOL: f64 = 1e-9;

/// Ridge factor applied when an iterate makes some Σ[f]ⱼ singular for an
/// inverse-requiring invariant.
pub const PSD_SHIFT: f64 = 1e-12;

/// Observation points 𝒬 with one orthonormal chart per point.
#[derive(Clone, Debug)]
pub struct ObservationSet {
    points: Vec<ManifoldPoint>,
    charts: Vec<Chart>,
}

impl ObservationSet {
    pub fn with_canonical_charts(points: Vec<ManifoldPoint>) -> Result<Self> {
        let charts = points.iter().map(Chart::canonical).collect();
        Self::new(points, charts)
    }

    pub fn new(points: Vec<ManifoldPoint>, charts: Vec<Chart>) -> Result<Self> {
        if points.is_empty() {
            return Err(CovfieldError::InvalidArgument(
                "observation set must be nonempty".into(),
            ));
        }
        if points.len() != charts.len() {
            return Err(CovfieldError::InvalidArgument(
                "one chart per observation point is required".into(),
            ));
        }
        let m = points[0].manifold();
        for (p, c) in points.iter().zip(&charts) {
            if p.manifold() != m {
                return Err(CovfieldError::ManifoldMismatch);
            }
            if !c.base().approx_eq(p, crate::manifold::POINT_TOL) {
                return Err(CovfieldError::InvalidArgument(
                    "chart base does not match its observation point".into(),
                ));
            }
            if !c.is_orthonormal(crate::manifold::TANGENT_TOL) {
                return Err(CovfieldError::InvalidArgument(
                    "observation charts must be orthonormal".into(),
                ));
            }
        }
        Ok(Self { points, charts })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[ManifoldPoint] {
        &self.points
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn manifold(&self) -> Manifold {
        self.points[0].manifold()
    }
}

/// The k×k matrix 𝒴 with entries d²(qⱼ, pᵢ)·r(d(qⱼ, pᵢ)). Its rank governs
/// recoverability; with r ≡ 1 the entries are squared geodesic distances.
#[derive(Clone, Debug)]
pub struct YMatrix {
    entries: DMatrix<f64>,
    amplitude: AmplitudeFn,
}

impl YMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn amplitude(&self) -> AmplitudeFn {
        self.amplitude
    }
}

/// Build 𝒴 for support points `p` observed from `q`.
pub fn build_y_matrix(
    p: &[ManifoldPoint],
    q: &ObservationSet,
    r: AmplitudeFn,
) -> Result<YMatrix> {
    let rows = q.len();
    let cols = p.len();
    let mut entries = DMatrix::zeros(rows, cols);
    for (j, qj) in q.points().iter().enumerate() {
        for (i, pi) in p.iter().enumerate() {
            let d = manifold::distance(qj, pi)?;
            entries[(j, i)] = r.y_entry(d);
        }
    }
    Ok(YMatrix {
        entries,
        amplitude: r,
    })
}

#[derive(Clone, Debug)]
pub struct RankDiagnostic {
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub full_rank: bool,
}

/// Numerical rank of 𝒴 plus its singular spectrum for drift analysis.
pub fn rank_diagnostic(y: &YMatrix, rel_tol: f64) -> RankDiagnostic {
    let rank = numerical_rank(&y.entries, rel_tol);
    let sv = singular_values(&y.entries);
    let full_rank = rank == y.entries.nrows().min(y.entries.ncols());
    RankDiagnostic {
        rank,
        singular_values: sv,
        full_rank,
    }
}

/// Observed covariance tensors Cⱼ, one per observation point.
#[derive(Clone, Debug)]
pub struct CovarianceSet {
    observations: ObservationSet,
    tensors: Vec<SpdMatrix>,
    amplitude: AmplitudeFn,
}

impl CovarianceSet {
    pub fn new(
        observations: ObservationSet,
        tensors: Vec<SpdMatrix>,
        amplitude: AmplitudeFn,
    ) -> Result<Self> {
        if observations.len() != tensors.len() {
            return Err(CovfieldError::InvalidArgument(
                "one tensor per observation point is required".into(),
            ));
        }
        let n = observations.manifold().dimension();
        for (j, t) in tensors.iter().enumerate() {
            if t.dim() != n {
                return Err(CovfieldError::InvalidArgument(format!(
                    "tensor {j} has dimension {} but the manifold dimension is {n}",
                    t.dim()
                )));
            }
            let min = t.min_eigenvalue();
            if min < -1e-10 * t.trace().abs().max(1.0) {
                return Err(CovfieldError::NotSpd(format!(
                    "tensor {j} has eigenvalue {min:.3e}"
                )));
            }
        }
        Ok(Self {
            observations,
            tensors,
            amplitude,
        })
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.observations
    }

    pub fn tensors(&self) -> &[SpdMatrix] {
        &self.tensors
    }

    pub fn amplitude(&self) -> AmplitudeFn {
        self.amplitude
    }
}

/// Forward map: the covariance set {Σ[f](qⱼ)}ⱼ of a pmf.
pub fn forward_covariance_set(
    pmf: &Pmf,
    q: &ObservationSet,
    r: AmplitudeFn,
) -> Result<CovarianceSet> {
    let mut tensors = Vec::with_capacity(q.len());
    for (qj, chart) in q.points().iter().zip(q.charts()) {
        tensors.push(covariance_at(qj, pmf, r, chart)?.sigma);
    }
    CovarianceSet::new(q.clone(), tensors, r)
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub kind: InvariantKind,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_init: f64,
    /// Reserved for randomized initialization; the default deterministic
    /// solver starts at the uniform weights and draws nothing.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kind: InvariantKind::TrDifSq,
            max_iter: 5000,
            grad_tol: 1e-10,
            step_init: 1.0,
            seed: 0,
        }
    }
}

/// A recovery instance with the per-pair tensors Yⱼᵢ precomputed.
#[derive(Clone, Debug)]
pub struct RecoveryProblem {
    k: usize,
    n: usize,
    /// Yⱼᵢ tensors, indexed [j][i]; empty in trace-only instances.
    y_tensors: Vec<Vec<SpdMatrix>>,
    /// 𝒴 (the trace matrix of the tensors).
    y_scalar: DMatrix<f64>,
    c: Vec<SpdMatrix>,
    c_trace: DVector<f64>,
    /// C⁻¹ and C^{−1/2}, present when every Cⱼ is strictly SPD.
    c_inv: Option<Vec<SpdMatrix>>,
    c_inv_sqrt: Option<Vec<SpdMatrix>>,
    amplitude: AmplitudeFn,
}

impl RecoveryProblem {
    /// Build from an observed covariance set and candidate support points.
    pub fn new(c: &CovarianceSet, p: &[ManifoldPoint]) -> Result<Self> {
        let q = c.observations();
        let k = q.len();
        if p.is_empty() {
            return Err(CovfieldError::InvalidArgument(
                "support set must be nonempty".into(),
            ));
        }
        if p.len() != k {
            return Err(CovfieldError::InvalidArgument(format!(
                "square systems only: {} support points vs {} observations",
                p.len(),
                k
            )));
        }
        let n = q.manifold().dimension();
        let r = c.amplitude();
        let mut y_tensors = Vec::with_capacity(k);
        let mut y_scalar = DMatrix::zeros(k, k);
        for (j, (qj, chart)) in q.points().iter().zip(q.charts()).enumerate() {
            let mut row = Vec::with_capacity(k);
            for (i, pi) in p.iter().enumerate() {
                let single = Pmf::point_mass(pi.clone());
                let t = covariance_at(qj, &single, r, chart)?.sigma;
                y_scalar[(j, i)] = t.trace();
                row.push(t);
            }
            y_tensors.push(row);
        }
        let c_trace = DVector::from_iterator(k, c.tensors().iter().map(SpdMatrix::trace));
        let strict = c.tensors().iter().all(SpdMatrix::is_strictly_pd);
        let (c_inv, c_inv_sqrt) = if strict {
            let mut inv = Vec::with_capacity(k);
            let mut inv_sqrt = Vec::with_capacity(k);
            for t in c.tensors() {
                inv.push(t.inverse()?);
                inv_sqrt.push(t.inv_sqrt()?);
            }
            (Some(inv), Some(inv_sqrt))
        } else {
            (None, None)
        };
        Ok(Self {
            k,
            n,
            y_tensors,
            y_scalar,
            c: c.tensors().to_vec(),
            c_trace,
            c_inv,
            c_inv_sqrt,
            amplitude: r,
        })
    }

    /// Trace-only instance: enough for the TrDif/TrDifSq objectives, which
    /// consume nothing beyond the scalar field tr(GΣ).
    pub fn from_traces(y: &YMatrix, c_traces: Vec<f64>) -> Result<Self> {
        let k = y.entries().nrows();
        if y.entries().ncols() != k || c_traces.len() != k {
            return Err(CovfieldError::InvalidArgument(
                "square trace systems only".into(),
            ));
        }
        Ok(Self {
            k,
            n: 0,
            y_tensors: Vec::new(),
            y_scalar: y.entries().clone(),
            c: Vec::new(),
            c_trace: DVector::from_vec(c_traces),
            c_inv: None,
            c_inv_sqrt: None,
            amplitude: y.amplitude(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn y_scalar(&self) -> &DMatrix<f64> {
        &self.y_scalar
    }

    pub fn amplitude(&self) -> AmplitudeFn {
        self.amplitude
    }

    pub fn rank(&self, rel_tol: f64) -> RankDiagnostic {
        let y = YMatrix {
            entries: self.y_scalar.clone(),
            amplitude: self.amplitude,
        };
        rank_diagnostic(&y, rel_tol)
    }

    fn check_weights(&self, f: &DVector<f64>) -> Result<()> {
        if f.len() != self.k {
            return Err(CovfieldError::InvalidArgument(format!(
                "expected {} weights, got {}",
                self.k,
                f.len()
            )));
        }
        Ok(())
    }

    fn is_trace_only(&self) -> bool {
        self.y_tensors.is_empty()
    }

    fn require_tensors(&self, kind: InvariantKind) -> Result<()> {
        if self.is_trace_only() && !kind.takes_reference() {
            return Err(CovfieldError::InvalidArgument(format!(
                "trace-only instance supports trdif/trdifsq, not {}",
                kind.name()
            )));
        }
        Ok(())
    }

    /// Σ[f]ⱼ = Σᵢ fᵢ Yⱼᵢ.
    pub fn sigma_of(&self, f: &DVector<f64>, j: usize) -> Result<SpdMatrix> {
        self.check_weights(f)?;
        if self.is_trace_only() {
            return Err(CovfieldError::InvalidArgument(
                "trace-only instance holds no tensors".into(),
            ));
        }
        let mut acc = DMatrix::zeros(self.n, self.n);
        for (i, t) in self.y_tensors[j].iter().enumerate() {
            acc += t.entries() * f[i];
        }
        SpdMatrix::new(acc)
    }

    /// Σ[f]ⱼ with the PSD shift applied when an inverse-requiring kind needs
    /// strictness. Returns the (possibly ridged) tensor and a flag.
    fn sigma_strict(&self, f: &DVector<f64>, j: usize) -> Result<(SpdMatrix, bool)> {
        let s = self.sigma_of(f, j)?;
        if s.is_strictly_pd() {
            Ok((s, false))
        } else {
            Ok((s.ridged(PSD_SHIFT), true))
        }
    }

    /// H(f) = (1/k) Σⱼ h(Σ[f]ⱼ, Cⱼ).
    pub fn objective(&self, f: &DVector<f64>, kind: InvariantKind) -> Result<f64> {
        Ok(self.objective_flagged(f, kind)?.0)
    }

    fn objective_flagged(&self, f: &DVector<f64>, kind: InvariantKind) -> Result<(f64, bool)> {
        self.check_weights(f)?;
        self.require_tensors(kind)?;
        let kf = self.k as f64;
        match kind {
            InvariantKind::TrDif | InvariantKind::TrDifSq => {
                // Z = G⁻¹ = identity in the orthonormal observation charts,
                // so only the traces enter.
                let resid = &self.y_scalar * f - &self.c_trace;
                let sum: f64 = resid
                    .iter()
                    .map(|t| if kind == InvariantKind::TrDif { t.abs() } else { t * t })
                    .sum();
                Ok((sum / kf, false))
            }
            _ => {
                let mut sum = 0.0;
                let mut ridged = false;
                for j in 0..self.k {
                    let (s, r) = self.sigma_strict(f, j)?;
                    ridged |= r;
                    sum += invariant(kind, &s, &self.c[j], None).map_err(|e| match e {
                        CovfieldError::NotSpd(msg) => {
                            CovfieldError::NotSpd(format!("observation {j}: {msg}"))
                        }
                        other => other,
                    })?;
                }
                Ok((sum / kf, ridged))
            }
        }
    }

    /// Analytic gradient of H for the convex kinds TrDifSq, Lik and TrSq.
    pub fn gradient(&self, f: &DVector<f64>, kind: InvariantKind) -> Result<DVector<f64>> {
        self.check_weights(f)?;
        let kf = self.k as f64;
        match kind {
            InvariantKind::TrDifSq => {
                let resid = &self.y_scalar * f - &self.c_trace;
                Ok(self.y_scalar.transpose() * resid * (2.0 / kf))
            }
            InvariantKind::Lik => {
                self.require_tensors(kind)?;
                let c_inv = self.c_inv.as_ref().ok_or_else(|| {
                    CovfieldError::NotSpd("lik gradient needs strictly SPD observations".into())
                })?;
                let mut g = DVector::zeros(self.k);
                for j in 0..self.k {
                    let (sj, _) = self.sigma_strict(f, j)?;
                    let sj_inv = sj.inverse()?;
                    for s in 0..self.k {
                        let y = self.y_tensors[j][s].entries();
                        g[s] += frob(y, c_inv[j].entries()) - frob(y, sj_inv.entries());
                    }
                }
                Ok(g / kf)
            }
            InvariantKind::TrSq => {
                self.require_tensors(kind)?;
                let w = self.c_inv_sqrt.as_ref().ok_or_else(|| {
                    CovfieldError::NotSpd("trsq gradient needs strictly SPD observations".into())
                })?;
                let mut g = DVector::zeros(self.k);
                for j in 0..self.k {
                    let (sj, _) = self.sigma_strict(f, j)?;
                    let wj = w[j].entries();
                    let m = SpdMatrix::new(wj * sj.entries() * wj)?;
                    let m_inv = m.inverse()?;
                    let d = m.entries() - m_inv.entries();
                    // d/dΣ tr((M − M⁻¹)²) = 2 W (D + M⁻¹ D M⁻¹) W.
                    let core = &d + m_inv.entries() * &d * m_inv.entries();
                    let kmat = wj * core * wj;
                    for s in 0..self.k {
                        g[s] += 2.0 * frob(&kmat, self.y_tensors[j][s].entries());
                    }
                }
                Ok(g / kf)
            }
            other => Err(CovfieldError::InvalidArgument(format!(
                "no analytic gradient for {}; use trdifsq, lik or trsq",
                other.name()
            ))),
        }
    }

    /// Closed-form Hessian of the TrDifSq objective: (2/k) 𝒴ᵀ𝒴.
    pub fn trdifsq_hessian(&self) -> DMatrix<f64> {
        self.y_scalar.transpose() * &self.y_scalar * (2.0 / self.k as f64)
    }

    /// Analytic Hessian of H for the convex kinds.
    pub fn hessian(&self, f: &DVector<f64>, kind: InvariantKind) -> Result<DMatrix<f64>> {
        self.check_weights(f)?;
        let kf = self.k as f64;
        match kind {
            InvariantKind::TrDifSq => Ok(self.trdifsq_hessian()),
            InvariantKind::Lik => {
                self.require_tensors(kind)?;
                let mut h = DMatrix::zeros(self.k, self.k);
                for j in 0..self.k {
                    let (sj, _) = self.sigma_strict(f, j)?;
                    let sj_inv = sj.inverse()?;
                    // tr(Σ⁻¹ Yₛ Σ⁻¹ Yₗ) assembled from the conjugated tensors.
                    let conj: Vec<DMatrix<f64>> = (0..self.k)
                        .map(|s| sj_inv.entries() * self.y_tensors[j][s].entries())
                        .collect();
                    for s in 0..self.k {
                        for l in 0..=s {
                            let v = (&conj[s] * &conj[l]).trace();
                            h[(s, l)] += v;
                            h[(l, s)] += if s == l { 0.0 } else { v };
                        }
                    }
                }
                Ok(h / kf)
            }
            InvariantKind::TrSq => {
                self.require_tensors(kind)?;
                let w = self.c_inv_sqrt.as_ref().ok_or_else(|| {
                    CovfieldError::NotSpd("trsq hessian needs strictly SPD observations".into())
                })?;
                let mut h = DMatrix::zeros(self.k, self.k);
                for j in 0..self.k {
                    let (sj, _) = self.sigma_strict(f, j)?;
                    let wj = w[j].entries();
                    let m = SpdMatrix::new(wj * sj.entries() * wj)?;
                    let m1 = m.inverse()?;
                    let m2 = SpdMatrix::new(m1.entries() * m1.entries())?;
                    let m3 = SpdMatrix::new(m2.entries() * m1.entries())?;
                    let ty: Vec<DMatrix<f64>> = (0..self.k)
                        .map(|s| wj * self.y_tensors[j][s].entries() * wj)
                        .collect();
                    for s in 0..self.k {
                        for l in 0..=s {
                            let v = (&ty[s] * &ty[l]).trace()
                                + (&ty[s] * m1.entries() * &ty[l] * m3.entries()).trace()
                                + (&ty[s] * m2.entries() * &ty[l] * m2.entries()).trace()
                                + (&ty[s] * m3.entries() * &ty[l] * m1.entries()).trace();
                            h[(s, l)] += 2.0 * v;
                            h[(l, s)] += if s == l { 0.0 } else { 2.0 * v };
                        }
                    }
                }
                Ok(h / kf)
            }
            other => Err(CovfieldError::InvalidArgument(format!(
                "no analytic hessian for {}",
                other.name()
            ))),
        }
    }
}

fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    // tr(AB) for symmetric A, B.
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let k = v.len();
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cssv = 0.0;
    let mut rho = 0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cssv += ui;
        let t = (cssv - 1.0) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            rho = i + 1;
            theta = t;
        }
    }
    if rho == 0 {
        // All mass to the largest coordinate (degenerate input).
        let mut out = DVector::zeros(k);
        let arg = v.imax();
        out[arg] = 1.0;
        return out;
    }
    let mut out = v.map(|x| (x - theta).max(0.0));
    // Exact renormalization against rounding drift.
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        out /= s;
    }
    out
}

#[derive(Clone, Debug)]
pub struct RecoveryOutcome {
    pub weights: Vec<f64>,
    pub h_value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub projected_grad_norm: f64,
    pub rank: RankDiagnostic,
    pub ridge_applied: bool,
    pub objective_trace: Vec<f64>,
}

/// Minimize H over the simplex by projected gradient descent. Returns the
/// best feasible iterate; `converged` is false when the iteration budget is
/// exhausted first. A rank-deficient 𝒴 is reported, not rejected.
pub fn recover_pmf(
    c: &CovarianceSet,
    p: &[ManifoldPoint],
    opts: &SolverOptions,
) -> Result<RecoveryOutcome> {
    let problem = RecoveryProblem::new(c, p)?;
    solve_problem(&problem, opts)
}

/// Newton step restricted to the face {fᵢ = 0 for i ∉ free} ∩ {Σf = 1},
/// solved through the KKT system of the equality-constrained model. Returns
/// a full-length direction (zeros on the fixed set), or None when the
/// system is too degenerate to produce a useful direction.
fn face_newton_direction(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    free: &[usize],
) -> Option<DVector<f64>> {
    let m = free.len();
    if m < 2 {
        return None;
    }
    let mut kkt = DMatrix::zeros(m + 1, m + 1);
    let mut rhs = DVector::zeros(m + 1);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            kkt[(a, b)] = h[(i, j)];
        }
        kkt[(a, m)] = 1.0;
        kkt[(m, a)] = 1.0;
        rhs[a] = -g[i];
    }
    // Rank-deficient Hessians (Euclidean instances) get the least-squares
    // solution through a pseudo-inverse.
    let svd = kkt.svd(true, true);
    let sol = svd.solve(&rhs, 1e-13).ok()?;
    let mut dir = DVector::zeros(g.len());
    let mut valid = false;
    for (a, &i) in free.iter().enumerate() {
        if !sol[a].is_finite() {
            return None;
        }
        dir[i] = sol[a];
        valid |= sol[a] != 0.0;
    }
    valid.then_some(dir)
}

/// Solver entry point shared by tensor-backed and trace-only instances.
pub fn solve_problem(problem: &RecoveryProblem, opts: &SolverOptions) -> Result<RecoveryOutcome> {
    if !opts.kind.is_convex() {
        return Err(CovfieldError::InvalidArgument(format!(
            "{} is not a convex objective; use trdifsq, lik or trsq",
            opts.kind.name()
        )));
    }
    let k = problem.k();
    let rank = problem.rank(RANK_REL_TOL);
    if !rank.full_rank {
        log::warn!(
            "recovery instance is rank deficient: rank {} of {}",
            rank.rank,
            k
        );
    }

    let kind = opts.kind;
    let mut f = DVector::from_element(k, 1.0 / k as f64);
    let (mut h, mut ridged) = problem.objective_flagged(&f, kind)?;
    let mut g = problem.gradient(&f, kind)?;
    let mut objective_trace = vec![h];
    let mut tau = opts.step_init.max(1e-12);
    let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
    // Non-monotone (GLL) reference window: Armijo against the recent maximum
    // keeps the Barzilai–Borwein steps alive on ill-conditioned instances.
    let mut recent = std::collections::VecDeque::with_capacity(10);
    recent.push_back(h);
    let mut pg_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    // Track the best iterate: non-monotone steps may end above it.
    let mut best = (h, f.clone());

    while iterations < opts.max_iter {
        pg_norm = (&f - project_simplex(&(&f - &g))).norm();
        if pg_norm <= opts.grad_tol {
            converged = true;
            break;
        }
        // Barzilai–Borwein warm start for the line search, safeguarded.
        if let Some((s, y)) = &prev {
            let sy = s.dot(y);
            if sy > 0.0 {
                tau = (s.dot(s) / sy).clamp(1e-12, 1e12);
            }
        }
        let h_ref = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut accepted = false;
        let mut t = tau;
        while t >= 1e-18 {
            let cand = project_simplex(&(&f - &g * t));
            let dir = &cand - &f;
            let (h_cand, r_cand) = problem.objective_flagged(&cand, kind)?;
            if h_cand <= h_ref + 1e-4 * g.dot(&dir) {
                let g_cand = problem.gradient(&cand, kind)?;
                prev = Some((dir, &g_cand - &g));
                f = cand;
                h = h_cand;
                ridged |= r_cand;
                g = g_cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        // Newton acceleration on the current face: the gradient step alone
        // crawls on ill-conditioned instances, while the equality-constrained
        // Newton model is exact for TrDifSq and quadratically convergent for
        // Lik and TrSq.
        if accepted {
            if let Ok(hess) = problem.hessian(&f, kind) {
                let free: Vec<usize> =
                    (0..k).filter(|&i| f[i] > 1e-14 || g[i] < 0.0).collect();
                if let Some(dir) = face_newton_direction(&hess, &g, &free) {
                    // Largest feasible step along the direction.
                    let mut alpha_max: f64 = 1.0;
                    for i in 0..k {
                        if dir[i] < 0.0 {
                            alpha_max = alpha_max.min(-f[i] / dir[i]);
                        }
                    }
                    let mut alpha = alpha_max.min(1.0);
                    for _ in 0..8 {
                        if alpha <= 0.0 {
                            break;
                        }
                        let cand = project_simplex(&(&f + &dir * alpha));
                        if let Ok((h_cand, r_cand)) = problem.objective_flagged(&cand, kind) {
                            if h_cand < h {
                                let g_cand = problem.gradient(&cand, kind)?;
                                prev = Some((&cand - &f, &g_cand - &g));
                                f = cand;
                                h = h_cand;
                                ridged |= r_cand;
                                g = g_cand;
                                break;
                            }
                        }
                        alpha *= 0.5;
                    }
                }
            }
        }
        iterations += 1;
        objective_trace.push(h);
        if !accepted {
            // Line search stalled at floating-point resolution; the iterate
            // is stationary for all practical purposes.
            converged = pg_norm <= opts.grad_tol.max(1e-8);
            break;
        }
        if h < best.0 {
            best = (h, f.clone());
        }
        if recent.len() == 10 {
            recent.pop_front();
        }
        recent.push_back(h);
        debug_assert!(
            f.iter().all(|&x| x >= 0.0) && (f.iter().sum::<f64>() - 1.0).abs() <= 1e-12,
            "iterate left the simplex"
        );
    }
    if h > best.0 {
        f = best.1;
        h = best.0;
        g = problem.gradient(&f, kind)?;
    }
    if iterations >= opts.max_iter {
        pg_norm = (&f - project_simplex(&(&f - &g))).norm();
        converged = pg_norm <= opts.grad_tol;
    }

    Ok(RecoveryOutcome {
        weights: f.iter().copied().collect(),
        h_value: h,
        iterations,
        converged,
        projected_grad_norm: pg_norm,
        rank,
        ridge_applied: ridged,
        objective_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use approx::assert_relative_eq;

    fn sphere_instance(seed: u64, k: usize) -> (Pmf, ObservationSet) {
        let mut rng = sample::rng_from_seed(seed);
        let support: Vec<ManifoldPoint> = (0..k).map(|_| sample::uniform_sphere(&mut rng)).collect();
        let obs_points: Vec<ManifoldPoint> =
            (0..k).map(|_| sample::uniform_sphere(&mut rng)).collect();
        let pmf = Pmf::new(support, sample::random_weights(k, &mut rng)).unwrap();
        let obs = ObservationSet::with_canonical_charts(obs_points).unwrap();
        (pmf, obs)
    }

    #[test]
    fn y_matrix_basics() {
        let p = Manifold::Sphere2.point(vec![0.0, 0.0, 1.0]).unwrap();
        let obs = ObservationSet::with_canonical_charts(vec![p.clone()]).unwrap();
        let y = build_y_matrix(&[p.clone()], &obs, AmplitudeFn::Unit).unwrap();
        assert_eq!(y.entries()[(0, 0)], 0.0);

        let q = Manifold::Sphere2.point(vec![1.0, 0.0, 0.0]).unwrap();
        let obs2 = ObservationSet::with_canonical_charts(vec![p.clone(), q.clone()]).unwrap();
        let y2 = build_y_matrix(&[p, q], &obs2, AmplitudeFn::Unit).unwrap();
        let quarter = (std::f64::consts::FRAC_PI_2).powi(2);
        assert_relative_eq!(y2.entries()[(0, 1)], quarter, epsilon = 1e-12);
        assert_relative_eq!(y2.entries()[(1, 0)], quarter, epsilon = 1e-12);
    }

    #[test]
    fn euclidean_rank_is_capped_at_n_plus_2() {
        let mut rng = sample::rng_from_seed(42);
        let pts = sample::scatter(Manifold::Euclidean(2), 10, &mut rng).unwrap();
        let obs_pts = sample::scatter(Manifold::Euclidean(2), 10, &mut rng).unwrap();
        let obs = ObservationSet::with_canonical_charts(obs_pts).unwrap();
        let y = build_y_matrix(&pts, &obs, AmplitudeFn::Unit).unwrap();
        let d = rank_diagnostic(&y, RANK_REL_TOL);
        assert!(d.rank <= 4, "rank {} exceeds n+2", d.rank);
        assert!(!d.full_rank);
    }

    #[test]
    fn forward_set_matches_direct_covariance_calls() {
        let (pmf, obs) = sphere_instance(3, 4);
        let set = forward_covariance_set(&pmf, &obs, AmplitudeFn::Unit).unwrap();
        for (j, (qj, chart)) in obs.points().iter().zip(obs.charts()).enumerate() {
            let direct = covariance_at(qj, &pmf, AmplitudeFn::Unit, chart).unwrap();
            assert_eq!(direct.sigma.entries(), set.tensors()[j].entries());
        }
    }

    #[test]
    fn objective_vanishes_at_the_generating_weights() {
        let (pmf, obs) = sphere_instance(17, 6);
        let set = forward_covariance_set(&pmf, &obs, AmplitudeFn::Unit).unwrap();
        let problem = RecoveryProblem::new(&set, pmf.support()).unwrap();
        let f0 = pmf.weights().clone();
        for kind in [InvariantKind::TrDifSq, InvariantKind::Lik, InvariantKind::TrSq] {
            let h = problem.objective(&f0, kind).unwrap();
            assert!(h.abs() <= 1e-12, "{}: H(f0) = {h}", kind.name());
        }
        // Interior exact fit: the projected gradient vanishes.
        let g = problem.gradient(&f0, InvariantKind::TrDifSq).unwrap();
        let pg = (&f0 - project_simplex(&(&f0 - &g))).norm();
        assert!(pg <= 1e-8, "projected gradient {pg} at the exact fit");
    }

    #[test]
    fn perturbed_tensors_raise_the_objective_continuously() {
        let (pmf, obs) = sphere_instance(29, 5);
        let f0 = pmf.weights().clone();
        let base = forward_covariance_set(&pmf, &obs, AmplitudeFn::Unit).unwrap();
        let mut prev = f64::INFINITY;
        for eps in [1e-2, 1e-4, 1e-6] {
            let tensors: Vec<SpdMatrix> = base
                .tensors()
                .iter()
                .map(|t| t.ridged(eps))
                .collect();
            let set = CovarianceSet::new(obs.clone(), tensors, AmplitudeFn::Unit).unwrap();
            let problem = RecoveryProblem::new(&set, pmf.support()).unwrap();
            let h = problem.objective(&f0, InvariantKind::Lik).unwrap();
            assert!(h > 0.0 && h < prev, "eps {eps}: H = {h}, prev {prev}");
            prev = h;
        }
    }

    #[test]
    fn simplex_projection_properties() {
        let cases = [
            DVector::from_vec(vec![0.2, 0.3, 0.5]),
            DVector::from_vec(vec![1.5, -0.7, 0.1]),
            DVector::from_vec(vec![-3.0, -4.0, -5.0]),
        ];
        for v in cases {
            let p = project_simplex(&v);
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
        // Already-feasible points are fixed.
        let f = DVector::from_vec(vec![0.2, 0.3, 0.5]);
        assert_relative_eq!((project_simplex(&f) - &f).amax(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_round_trip_recovery_on_the_sphere() {
        let (pmf, obs) = sphere_instance(11, 10);
        let set = forward_covariance_set(&pmf, &obs, AmplitudeFn::Unit).unwrap();
        let opts = SolverOptions::default();
        let out = recover_pmf(&set, pmf.support(), &opts).unwrap();
        let err = pmf
            .weights()
            .iter()
            .zip(&out.weights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(
            err <= 1e-4,
            "recovery error {err} after {} iterations (pg {})",
            out.iterations,
            out.projected_grad_norm
        );
        assert!(out.rank.full_rank, "expected full-rank sphere instance");
    }

    #[test]
    fn two_point_solver_matches_grid_search() {
        let (pmf, obs) = sphere_instance(23, 2);
        let set = forward_covariance_set(&pmf, &obs, AmplitudeFn::Unit).unwrap();
        let problem = RecoveryProblem::new(&set, pmf.support()).unwrap();
        // Brute-force sweep of the 1-simplex.
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=4000 {
            let a = i as f64 / 4000.0;
            let f = DVector::from_vec(vec![a, 1.0 - a]);
            let h = problem.objective(&f, InvariantKind::TrDifSq).unwrap();
            if h < best.0 {
                best = (h, a);
            }
        }
        let out = recover_pmf(&set, pmf.support(), &SolverOptions::default()).unwrap();
        assert!(
            (out.weights[0] - best.1).abs() <= 1.0 / 4000.0 + 1e-6,
            "solver {} vs grid {}",
            out.weights[0],
            best.1
        );
    }

    #[test]
    fn non_convex_kind_is_rejected_by_the_solver() {
        let (pmf, obs) = sphere_instance(5, 3);
        let set = forward_covariance_set(&pmf, &obs, AmplitudeFn::Unit).unwrap();
        let opts = SolverOptions {
            kind: InvariantKind::TrLn2,
            ..Default::default()
        };
        assert!(matches!(
            recover_pmf(&set, pmf.support(), &opts),
            Err(CovfieldError::InvalidArgument(_))
        ));
    }

    #[test]
    fn trace_only_instance_solves_trdifsq() {
        let (pmf, obs) = sphere_instance(31, 8);
        let y = build_y_matrix(pmf.support(), &obs, AmplitudeFn::Unit).unwrap();
        let c: Vec<f64> = (y.entries() * pmf.weights()).iter().copied().collect();
        let problem = RecoveryProblem::from_traces(&y, c).unwrap();
        let out = solve_problem(&problem, &SolverOptions::default()).unwrap();
        let err = pmf
            .weights()
            .iter()
            .zip(&out.weights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-4, "trace-only recovery error {err}");
        assert!(matches!(
            problem.objective(&pmf.weights().clone(), InvariantKind::Lik),
            Err(CovfieldError::InvalidArgument(_))
        ));
    }
}
