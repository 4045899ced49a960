//! Demonstration experiments: pairwise trace statistics on S², rank scans
//! of 𝒴, consistency of the recovery under shrinking tensor noise, the
//! partition-based recovery of a continuous distribution on a spherical
//! cap, and the empirical Lipschitz constant of the log map.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{CovfieldError, Result};
use crate::field::{AmplitudeFn, Pmf};
use crate::manifold::{self, Chart, Manifold, ManifoldPoint};
use crate::recovery::{
    build_y_matrix, forward_covariance_set, rank_diagnostic, solve_problem, CovarianceSet,
    ObservationSet, RankDiagnostic, RecoveryProblem, SolverOptions,
};
use crate::sample;
use crate::spd::{InvariantKind, SpdMatrix};

// ---------------------------------------------------------------------------
// Pairwise trace statistics on the uniform sphere (demo-s2)

#[derive(Clone, Debug)]
pub struct S2DemoReport {
    pub k: usize,
    pub seed: u64,
    /// Per-pair estimate of E d² and its standard error.
    pub unit_estimate: f64,
    pub unit_se: f64,
    pub unit_target: f64,
    /// Per-pair estimate of E (d − π/2)² and its standard error.
    pub adjusted_estimate: f64,
    pub adjusted_se: f64,
    pub adjusted_target: f64,
    pub ratio: f64,
    pub ratio_target: f64,
}

/// U-statistic standard error from the pairwise values: per-point means
/// estimate the projection variance ζ₁ and the pair variance supplies ζ₂.
fn u_statistic_se(k: usize, mean: f64, sum_sq: f64, pair_count: f64, point_means: &[f64]) -> f64 {
    let zeta2 = (sum_sq / pair_count - mean * mean).max(0.0);
    let mean_of_means = point_means.iter().sum::<f64>() / k as f64;
    let raw_var_means = point_means
        .iter()
        .map(|m| (m - mean_of_means).powi(2))
        .sum::<f64>()
        / (k as f64 - 1.0);
    // Var of the per-point means carries a ζ₂/(k−1) bias term.
    let zeta1 = (raw_var_means - zeta2 / (k as f64 - 1.0)).max(0.0);
    let kf = k as f64;
    ((4.0 * (kf - 2.0) * zeta1 + 2.0 * zeta2) / (kf * (kf - 1.0))).sqrt()
}

/// Draw k uniform sphere points and estimate the per-pair expectations
/// E tr(G Z(y_j, y_i)) for r ≡ 1 and for r(t) = (1 − π/(2t))².
pub fn s2_pairwise_demo(k: usize, seed: u64) -> Result<S2DemoReport> {
    if k < 3 {
        return Err(CovfieldError::InvalidArgument(
            "the pairwise demo needs at least 3 samples".into(),
        ));
    }
    let mut rng = sample::rng_from_seed(seed);
    let pts: Vec<ManifoldPoint> = (0..k).map(|_| sample::uniform_sphere(&mut rng)).collect();

    let mut sum = [0.0f64; 2];
    let mut sum_sq = [0.0f64; 2];
    let mut point_sums = vec![[0.0f64; 2]; k];
    let half_pi = std::f64::consts::FRAC_PI_2;
    for j in 0..k {
        for i in (j + 1)..k {
            let d = manifold::distance(&pts[j], &pts[i])?;
            let h = [d * d, (d - half_pi) * (d - half_pi)];
            for (t, &v) in h.iter().enumerate() {
                sum[t] += v;
                sum_sq[t] += v * v;
                point_sums[j][t] += v;
                point_sums[i][t] += v;
            }
        }
    }
    let pair_count = (k * (k - 1) / 2) as f64;
    let mut est = [0.0f64; 2];
    let mut se = [0.0f64; 2];
    for t in 0..2 {
        est[t] = sum[t] / pair_count;
        let means: Vec<f64> = point_sums
            .iter()
            .map(|s| s[t] / (k as f64 - 1.0))
            .collect();
        se[t] = u_statistic_se(k, est[t], sum_sq[t], pair_count, &means);
    }
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    Ok(S2DemoReport {
        k,
        seed,
        unit_estimate: est[0],
        unit_se: se[0],
        unit_target: pi2 / 2.0 - 2.0,
        adjusted_estimate: est[1],
        adjusted_se: se[1],
        adjusted_target: pi2 / 4.0 - 2.0,
        ratio: est[0] / est[1],
        ratio_target: (pi2 / 2.0 - 2.0) / (pi2 / 4.0 - 2.0),
    })
}

// ---------------------------------------------------------------------------
// Rank scans

#[derive(Clone, Debug)]
pub struct RankScanTrial {
    pub trial: u64,
    pub rank: usize,
    pub full_rank: bool,
    pub largest_sv: f64,
    pub smallest_retained_sv: f64,
    pub smallest_sv: f64,
}

/// Per-trial numerical rank of 𝒴 built from independent k-scatters of
/// support and observation points.
pub fn rank_scan(
    manifold: Manifold,
    k: usize,
    trials: u64,
    r: AmplitudeFn,
    rel_tol: f64,
    seed: u64,
) -> Result<Vec<RankScanTrial>> {
    let mut out = Vec::with_capacity(trials as usize);
    for trial in 0..trials {
        let mut rng = sample::rng_for_trial(seed, trial);
        let p = sample::scatter(manifold, k, &mut rng)?;
        let q = sample::scatter(manifold, k, &mut rng)?;
        let obs = ObservationSet::with_canonical_charts(q)?;
        let y = build_y_matrix(&p, &obs, r)?;
        let d = rank_diagnostic(&y, rel_tol);
        let smallest_retained = if d.rank > 0 {
            d.singular_values[d.rank - 1]
        } else {
            0.0
        };
        out.push(RankScanTrial {
            trial,
            rank: d.rank,
            full_rank: d.full_rank,
            largest_sv: d.singular_values[0],
            smallest_retained_sv: smallest_retained,
            smallest_sv: *d.singular_values.last().unwrap(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Consistency under shrinking tensor noise

#[derive(Clone, Debug)]
pub struct ConsistencyReport {
    pub epsilons: Vec<f64>,
    /// ‖f̂ᵐ − f⁰‖₂ per noise level.
    pub errors: Vec<f64>,
    pub h_values: Vec<f64>,
    /// Least-squares constant c in error ≈ c·ε over the positive-ε entries.
    pub fitted_constant: f64,
    /// Whether the final third of the schedule satisfies error ≤ c·ε + tol.
    pub eventually_bounded: bool,
}

fn sym_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::exp));
    let out = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    let t = out.transpose();
    (out + t) * 0.5
}

/// Perturb the exact covariance set of `f0` congruently, Cⱼᵐ = E Cⱼ Eᵀ with
/// E = exp(S) for a random symmetric S of spectral norm ε, recover, and
/// report the weight errors per noise level.
pub fn consistency_experiment(
    f0: &Pmf,
    q: &ObservationSet,
    kind: InvariantKind,
    r: AmplitudeFn,
    noise_schedule: &[f64],
    seed: u64,
) -> Result<ConsistencyReport> {
    let base = forward_covariance_set(f0, q, r)?;
    let n = q.manifold().dimension();
    let mut errors = Vec::with_capacity(noise_schedule.len());
    let mut h_values = Vec::with_capacity(noise_schedule.len());
    for (m, &eps) in noise_schedule.iter().enumerate() {
        let mut rng = sample::rng_for_trial(seed, m as u64);
        let tensors: Vec<SpdMatrix> = base
            .tensors()
            .iter()
            .map(|c| {
                let e = sym_exp(&sample::random_symmetric(n, eps, &mut rng));
                SpdMatrix::new(&e * c.entries() * e.transpose())
            })
            .collect::<Result<_>>()?;
        let noisy = CovarianceSet::new(q.clone(), tensors, r)?;
        let opts = SolverOptions {
            kind,
            ..Default::default()
        };
        let out = crate::recovery::recover_pmf(&noisy, f0.support(), &opts)?;
        let err = f0
            .weights()
            .iter()
            .zip(&out.weights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        errors.push(err);
        h_values.push(out.h_value);
    }
    let num: f64 = noise_schedule
        .iter()
        .zip(&errors)
        .map(|(e, err)| e * err)
        .sum();
    let den: f64 = noise_schedule.iter().map(|e| e * e).sum();
    let fitted_constant = if den > 0.0 { num / den } else { 0.0 };
    let tail_start = noise_schedule.len() - noise_schedule.len().div_ceil(3);
    let eventually_bounded = noise_schedule
        .iter()
        .zip(&errors)
        .skip(tail_start)
        .all(|(&eps, &err)| err <= fitted_constant * eps * 2.0 + 1e-7);
    Ok(ConsistencyReport {
        epsilons: noise_schedule.to_vec(),
        errors,
        h_values,
        fitted_constant,
        eventually_bounded,
    })
}

// ---------------------------------------------------------------------------
// Partition of a spherical cap and continuous recovery

/// One cell of the cap partition, in polar coordinates about the cap center:
/// colatitude band [t0, t1] × longitude arc [phi0, phi1]. The innermost cell
/// is the full polar disc (phi spans the whole circle).
#[derive(Clone, Debug)]
pub struct CapCell {
    pub t0: f64,
    pub t1: f64,
    pub phi0: f64,
    pub phi1: f64,
    pub center: ManifoldPoint,
    pub area: f64,
    /// Analytic diameter bound Δt + sin(t₁)·Δφ (≤ 1/m by construction).
    pub diameter_bound: f64,
    /// Max pairwise geodesic distance over the cell corners.
    pub measured_diameter: f64,
}

/// Partition of the geodesic cap B(center, radius) on S² into cells of
/// geodesic diameter at most 1/m: colatitude bands of height ≤ 1/(2m),
/// subdivided in longitude so the arc width is ≤ 1/(2m).
pub fn partition_cap(
    center: &ManifoldPoint,
    radius: f64,
    m: u32,
) -> Result<Vec<CapCell>> {
    if center.manifold() != Manifold::Sphere2 {
        return Err(CovfieldError::InvalidArgument(
            "cap partitions are defined on the sphere".into(),
        ));
    }
    if !(radius > 0.0) || radius >= std::f64::consts::PI {
        return Err(CovfieldError::InvalidArgument(
            "cap radius must lie in (0, π)".into(),
        ));
    }
    if m == 0 {
        return Err(CovfieldError::InvalidArgument(
            "resolution m must be positive".into(),
        ));
    }
    let target = 1.0 / (2.0 * m as f64);
    let bands = (radius / target).ceil() as usize;
    let dt = radius / bands as f64;
    let chart = Chart::canonical(center);
    let embed = |t: f64, phi: f64| -> Result<ManifoldPoint> {
        let c = DVector::from_vec(vec![t * phi.cos(), t * phi.sin()]);
        manifold::exp(center, &chart.vector(&c))
    };

    let mut cells = Vec::new();
    for b in 0..bands {
        let t0 = b as f64 * dt;
        let t1 = t0 + dt;
        if b == 0 {
            // Polar disc: diameter 2·dt ≤ 1/m.
            cells.push(CapCell {
                t0,
                t1,
                phi0: 0.0,
                phi1: std::f64::consts::TAU,
                center: center.clone(),
                area: std::f64::consts::TAU * (1.0 - t1.cos()),
                diameter_bound: 2.0 * dt,
                measured_diameter: 2.0 * dt,
            });
            continue;
        }
        let circumference = std::f64::consts::TAU * t1.sin();
        let slots = (circumference / target).ceil().max(1.0) as usize;
        let dphi = std::f64::consts::TAU / slots as f64;
        for s in 0..slots {
            let phi0 = s as f64 * dphi;
            let phi1 = phi0 + dphi;
            let cell_center = embed(0.5 * (t0 + t1), 0.5 * (phi0 + phi1))?;
            let corners = [
                embed(t0, phi0)?,
                embed(t0, phi1)?,
                embed(t1, phi0)?,
                embed(t1, phi1)?,
            ];
            let mut measured: f64 = 0.0;
            for a in 0..4 {
                for bb in (a + 1)..4 {
                    measured = measured.max(manifold::distance(&corners[a], &corners[bb])?);
                }
            }
            cells.push(CapCell {
                t0,
                t1,
                phi0,
                phi1,
                center: cell_center,
                area: dphi * (t0.cos() - t1.cos()),
                diameter_bound: dt + t1.sin() * dphi,
                measured_diameter: measured,
            });
        }
    }
    Ok(cells)
}

impl CapCell {
    /// Whether the polar coordinates (t, φ) fall inside this cell.
    fn contains(&self, t: f64, phi: f64) -> bool {
        if t < self.t0 || t > self.t1 {
            return false;
        }
        if self.phi1 - self.phi0 >= std::f64::consts::TAU - 1e-12 {
            return true;
        }
        let mut p = phi.rem_euclid(std::f64::consts::TAU);
        if p < self.phi0 {
            p += std::f64::consts::TAU;
        }
        p >= self.phi0 && p <= self.phi1
    }

    /// Uniform draw from the cell with respect to spherical area.
    fn sample_point(
        &self,
        center: &ManifoldPoint,
        chart: &Chart,
        rng: &mut impl Rng,
    ) -> Result<ManifoldPoint> {
        let u: f64 = rng.random();
        let cos_t = self.t0.cos() - u * (self.t0.cos() - self.t1.cos());
        let t = cos_t.clamp(-1.0, 1.0).acos();
        let phi = rng.random_range(self.phi0..self.phi1);
        let c = DVector::from_vec(vec![t * phi.cos(), t * phi.sin()]);
        manifold::exp(center, &chart.vector(&c))
    }
}

/// Target distributions whose covariance field is handed to the recovery.
#[derive(Clone, Debug)]
pub enum TargetDistribution {
    PointMass(ManifoldPoint),
    /// Uniform on the partitioned cap itself.
    UniformCap,
}

#[derive(Clone, Debug)]
pub struct ContinuousRecoveryReport {
    pub resolution: u32,
    pub cell_count: usize,
    pub recovered: Vec<f64>,
    pub true_masses: Vec<f64>,
    /// Total-variation distance ½ Σ |f̂ − F(Uⱼ)|.
    pub tv_error: f64,
    pub max_cell_error: f64,
    pub max_cell_diameter: f64,
    pub rank: RankDiagnostic,
    pub mc_draws: usize,
}

/// Recover the cell masses of a distribution on a spherical cap from its
/// covariance field alone. The field is evaluated at one uniform draw per
/// cell; for a point mass the evaluation is exact, otherwise it is Monte
/// Carlo with a draw count adapted to the discretization error target.
pub fn continuous_recovery(
    target: &TargetDistribution,
    cap_center: &ManifoldPoint,
    cap_radius: f64,
    m: u32,
    kind: InvariantKind,
    seed: u64,
) -> Result<ContinuousRecoveryReport> {
    let cells = partition_cap(cap_center, cap_radius, m)?;
    let k = cells.len();
    let chart = Chart::canonical(cap_center);
    let mut rng = sample::rng_from_seed(seed);

    // One observation point per cell, uniform within the cell.
    let mut obs_points = Vec::with_capacity(k);
    for cell in &cells {
        obs_points.push(cell.sample_point(cap_center, &chart, &mut rng)?);
    }
    let observations = ObservationSet::with_canonical_charts(obs_points)?;
    let support: Vec<ManifoldPoint> = cells.iter().map(|c| c.center.clone()).collect();

    // True cell masses.
    let total_area: f64 = cells.iter().map(|c| c.area).sum();
    let true_masses: Vec<f64> = match target {
        TargetDistribution::UniformCap => cells.iter().map(|c| c.area / total_area).collect(),
        TargetDistribution::PointMass(p) => {
            let l = manifold::log(cap_center, p)?;
            let comps = chart.components(&l)?;
            let t = l.norm();
            let phi = comps[1].atan2(comps[0]);
            if t > cap_radius + 1e-12 {
                return Err(CovfieldError::InvalidArgument(
                    "point mass lies outside the cap".into(),
                ));
            }
            let mut masses = vec![0.0; k];
            let idx = cells
                .iter()
                .position(|c| c.contains(t, phi))
                .ok_or_else(|| CovfieldError::Domain("point mass escaped the partition".into()))?;
            masses[idx] = 1.0;
            masses
        }
    };

    // Evaluate the field at the observation points.
    let r = AmplitudeFn::Unit;
    let (problem, mc_draws) = match target {
        TargetDistribution::PointMass(p) => {
            let pm = Pmf::point_mass(p.clone());
            let set = forward_covariance_set(&pm, &observations, r)?;
            (RecoveryProblem::new(&set, &support)?, 1)
        }
        TargetDistribution::UniformCap => {
            // Adapt the pool size to the cell-discretization scale.
            let rho = (2.0 * cap_radius).min(std::f64::consts::PI - 1e-3);
            let beta = rho / rho.sin();
            let disc = beta * 1.0 / (8.0 * m as f64 * m as f64);
            let pilot = 2048;
            let mut pool = Vec::with_capacity(pilot);
            for _ in 0..pilot {
                pool.push(sample::uniform_ball(cap_center, cap_radius, &mut rng)?);
            }
            let d0: Vec<f64> = pool
                .iter()
                .map(|x| manifold::distance(cap_center, x).map(|d| d * d))
                .collect::<Result<_>>()?;
            let mean = d0.iter().sum::<f64>() / d0.len() as f64;
            let var = d0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d0.len() - 1) as f64;
            let needed = ((var / (disc * disc)).ceil() as usize).clamp(pilot, 300_000);
            for _ in pilot..needed {
                pool.push(sample::uniform_ball(cap_center, cap_radius, &mut rng)?);
            }
            if kind.takes_reference() {
                // Scalar pipeline: these objectives read only tr(GΣ) = ρ(q).
                let y = build_y_matrix(&support, &observations, r)?;
                let mut traces = Vec::with_capacity(k);
                for q in observations.points() {
                    let mut acc = 0.0;
                    for x in &pool {
                        let d = manifold::distance(q, x)?;
                        acc += r.y_entry(d);
                    }
                    traces.push(acc / pool.len() as f64);
                }
                (RecoveryProblem::from_traces(&y, traces)?, pool.len())
            } else {
                let empirical = Pmf::uniform(pool.clone())?;
                let set = forward_covariance_set(&empirical, &observations, r)?;
                (RecoveryProblem::new(&set, &support)?, pool.len())
            }
        }
    };

    let opts = SolverOptions {
        kind,
        max_iter: 20_000,
        ..Default::default()
    };
    let out = solve_problem(&problem, &opts)?;

    let tv_error = 0.5
        * out
            .weights
            .iter()
            .zip(&true_masses)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    let max_cell_error = out
        .weights
        .iter()
        .zip(&true_masses)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max);
    let max_cell_diameter = cells
        .iter()
        .map(|c| c.measured_diameter)
        .fold(0.0_f64, f64::max);

    Ok(ContinuousRecoveryReport {
        resolution: m,
        cell_count: k,
        recovered: out.weights,
        true_masses,
        tv_error,
        max_cell_error,
        max_cell_diameter,
        rank: out.rank,
        mc_draws,
    })
}

// ---------------------------------------------------------------------------
// Empirical Lipschitz constant of the log map

#[derive(Clone, Debug)]
pub struct LipschitzReport {
    /// Supremum of ‖log_q p₁ − log_q p₂‖ / d(p₁, p₂) over the samples.
    pub empirical_beta: f64,
    /// ρ / sin ρ for a compact of geodesic diameter ρ.
    pub bound: f64,
    pub diameter: f64,
    pub samples: usize,
}

/// Sample triples (q, p₁, p₂) in a spherical ball of geodesic diameter ρ and
/// measure the worst log-map ratio. Half of the pairs are drawn nearby
/// (p₂ ≈ p₁) to probe the differential limit.
pub fn lipschitz_probe(
    center: &ManifoldPoint,
    diameter: f64,
    samples: usize,
    seed: u64,
) -> Result<LipschitzReport> {
    if center.manifold() != Manifold::Sphere2 {
        return Err(CovfieldError::InvalidArgument(
            "the lipschitz probe is defined on the sphere".into(),
        ));
    }
    if !(diameter > 0.0) || diameter >= std::f64::consts::PI {
        return Err(CovfieldError::InvalidArgument(
            "the compact must have geodesic diameter in (0, π)".into(),
        ));
    }
    let radius = diameter / 2.0;
    let mut rng = sample::rng_from_seed(seed);
    let mut beta: f64 = 0.0;
    let mut used = 0;
    while used < samples {
        let q = sample::uniform_ball(center, radius, &mut rng)?;
        let p1 = sample::uniform_ball(center, radius, &mut rng)?;
        let p2 = if used % 2 == 0 {
            sample::uniform_ball(center, radius, &mut rng)?
        } else {
            // Nearby partner: a short step from p₁ staying inside the ball.
            let dir: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let len: f64 = rng.random_range(1e-7..1e-4);
            let chart = Chart::canonical(&p1);
            let c = DVector::from_vec(vec![len * dir.cos(), len * dir.sin()]);
            let cand = manifold::exp(&p1, &chart.vector(&c))?;
            if manifold::distance(center, &cand)? > radius {
                continue;
            }
            cand
        };
        let sep = manifold::distance(&p1, &p2)?;
        if sep < 1e-12 {
            continue;
        }
        let l1 = manifold::log(&q, &p1)?;
        let l2 = manifold::log(&q, &p2)?;
        let diff = (l1.components() - l2.components()).norm();
        beta = beta.max(diff / sep);
        used += 1;
    }
    Ok(LipschitzReport {
        empirical_beta: beta,
        bound: diameter / diameter.sin(),
        diameter,
        samples: used,
    })
}

// ---------------------------------------------------------------------------
// Euclidean non-identifiability witness

/// Two distinct pmfs on the same Euclidean support with equal mean and
/// second moments: f₁ = f₀ + t·u for a null vector u of the moment map.
/// Any covariance set of f₀ (r ≡ 1) then has H(f₁) = 0 as well.
pub fn euclidean_unidentifiable_pair(
    n: usize,
    k: usize,
    seed: u64,
) -> Result<(Pmf, Vec<f64>)> {
    let moments = 1 + n + n * (n + 1) / 2;
    if k <= moments {
        return Err(CovfieldError::InvalidArgument(format!(
            "need more than {moments} support points in dimension {n} for a moment null vector"
        )));
    }
    let mut rng = sample::rng_from_seed(seed);
    let pts = sample::scatter(Manifold::Euclidean(n), k, &mut rng)?;
    let f0 = sample::random_weights(k, &mut rng);

    // Moment map rows: total mass, means, second moments.
    let mut mm = DMatrix::zeros(moments, k);
    for (i, p) in pts.iter().enumerate() {
        let c = p.coords();
        mm[(0, i)] = 1.0;
        for a in 0..n {
            mm[(1 + a, i)] = c[a];
        }
        let mut row = 1 + n;
        for a in 0..n {
            for b in a..n {
                mm[(row, i)] = c[a] * c[b];
                row += 1;
            }
        }
    }
    // Null direction through the k×k Gram matrix (the thin SVD of the wide
    // moment matrix does not expose the null space).
    let gram = mm.transpose() * &mm;
    let eig = gram.symmetric_eigen();
    let mut arg = 0;
    for i in 0..eig.eigenvalues.len() {
        if eig.eigenvalues[i] < eig.eigenvalues[arg] {
            arg = i;
        }
    }
    let u: DVector<f64> = eig.eigenvectors.column(arg).into_owned();
    let residual = (&mm * &u).norm();
    if residual > 1e-10 {
        return Err(CovfieldError::Domain(format!(
            "no usable moment null vector (residual {residual:.3e})"
        )));
    }
    // Step keeping f₁ strictly inside the simplex.
    let mut t = f64::INFINITY;
    for (w, du) in f0.iter().zip(u.iter()) {
        if *du < 0.0 {
            t = t.min(w / -du);
        }
    }
    let t = 0.5 * t.min(1.0);
    let f1: Vec<f64> = f0.iter().zip(u.iter()).map(|(w, du)| w + t * du).collect();
    let pmf0 = Pmf::new(pts, f0)?;
    // Repair the simplex sum against rounding before validation.
    let sum: f64 = f1.iter().sum();
    let mut f1 = f1;
    let last = f1.len() - 1;
    f1[last] += 1.0 - sum;
    Ok((pmf0, f1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn demo_estimates_land_near_targets() {
        let rep = s2_pairwise_demo(900, 42).unwrap();
        assert!(
            (rep.unit_estimate - rep.unit_target).abs() <= 3.0 * rep.unit_se,
            "unit estimate {} vs {} (se {})",
            rep.unit_estimate,
            rep.unit_target,
            rep.unit_se
        );
        assert!(
            (rep.adjusted_estimate - rep.adjusted_target).abs() <= 3.0 * rep.adjusted_se,
            "adjusted estimate {} vs {} (se {})",
            rep.adjusted_estimate,
            rep.adjusted_target,
            rep.adjusted_se
        );
        assert_relative_eq!(rep.ratio_target, 6.278980, epsilon = 1e-6);
    }

    #[test]
    fn rank_scan_shapes() {
        let rows = rank_scan(
            Manifold::Euclidean(2),
            8,
            10,
            AmplitudeFn::Unit,
            1e-9,
            3,
        )
        .unwrap();
        assert_eq!(rows.len(), 10);
        assert!(rows.iter().all(|t| t.rank <= 4));

        let rows = rank_scan(Manifold::Sphere2, 8, 10, AmplitudeFn::Unit, 1e-9, 3).unwrap();
        assert!(rows.iter().all(|t| t.rank == 8));
    }

    #[test]
    fn zero_noise_consistency_recovers_exactly() {
        let mut rng = sample::rng_from_seed(4);
        let pts: Vec<ManifoldPoint> = (0..6).map(|_| sample::uniform_sphere(&mut rng)).collect();
        let qs: Vec<ManifoldPoint> = (0..6).map(|_| sample::uniform_sphere(&mut rng)).collect();
        let f0 = Pmf::new(pts, sample::random_weights(6, &mut rng)).unwrap();
        let obs = ObservationSet::with_canonical_charts(qs).unwrap();
        let rep = consistency_experiment(
            &f0,
            &obs,
            InvariantKind::TrDifSq,
            AmplitudeFn::Unit,
            &[0.0, 0.0],
            9,
        )
        .unwrap();
        assert!(rep.errors.iter().all(|&e| e <= 1e-6), "{:?}", rep.errors);
    }

    #[test]
    fn cap_partition_respects_diameter_and_area() {
        let center = Manifold::Sphere2.point(vec![0.0, 0.0, 1.0]).unwrap();
        for m in [1u32, 2, 3] {
            let cells = partition_cap(&center, 1.0, m).unwrap();
            let total: f64 = cells.iter().map(|c| c.area).sum();
            let cap_area = std::f64::consts::TAU * (1.0 - 1.0_f64.cos());
            assert_relative_eq!(total, cap_area, epsilon = 1e-10);
            for c in &cells {
                assert!(
                    c.diameter_bound <= 1.0 / m as f64 + 1e-12,
                    "bound {} at m {m}",
                    c.diameter_bound
                );
                assert!(c.measured_diameter <= 1.0 / m as f64 + 1e-9);
            }
        }
    }

    #[test]
    fn point_mass_recovery_concentrates() {
        let center = Manifold::Sphere2.point(vec![0.0, 0.0, 1.0]).unwrap();
        let cells = partition_cap(&center, 1.0, 1).unwrap();
        let target = TargetDistribution::PointMass(cells[2].center.clone());
        let rep =
            continuous_recovery(&target, &center, 1.0, 1, InvariantKind::TrDifSq, 5).unwrap();
        assert!(
            rep.recovered[2] >= 0.99,
            "mass {} in target cell of {:?}",
            rep.recovered[2],
            rep.recovered
        );
    }

    #[test]
    fn lipschitz_bound_in_the_flat_limit() {
        let center = Manifold::Sphere2.point(vec![0.0, 0.0, 1.0]).unwrap();
        let rep = lipschitz_probe(&center, 0.02, 3000, 7).unwrap();
        assert!(rep.empirical_beta <= 1.001, "beta {}", rep.empirical_beta);
        assert!(rep.empirical_beta >= 0.999, "beta {}", rep.empirical_beta);
    }

    #[test]
    fn moment_null_pair_matches_forward_sets() {
        let (f0, f1) = euclidean_unidentifiable_pair(2, 10, 11).unwrap();
        assert!(f1.iter().all(|&w| w >= 0.0));
        let delta: f64 = f0
            .weights()
            .iter()
            .zip(&f1)
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(delta > 1e-3, "pair is not distinct: {delta}");
        let mut rng = sample::rng_from_seed(13);
        let qs = sample::scatter(Manifold::Euclidean(2), 10, &mut rng).unwrap();
        let obs = ObservationSet::with_canonical_charts(qs).unwrap();
        let set = forward_covariance_set(&f0, &obs, AmplitudeFn::Unit).unwrap();
        let problem = RecoveryProblem::new(&set, f0.support()).unwrap();
        let h = problem
            .objective(&DVector::from_vec(f1), InvariantKind::TrDifSq)
            .unwrap();
        assert!(h <= 1e-10, "H(f1) = {h}");
    }
}
