//! Seeded random generation of points, pmfs and matrices.
//!
//! All draws go through a caller-supplied ChaCha8 generator so a 64-bit seed
//! fully determines every experiment. Uniform sphere points come from
//! normalized Gaussian triples; geodesic balls are sampled in polar form
//! with the exact area density of the model (sin t on S², sinh t on H²).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::field::Pmf;
use crate::manifold::{self, Chart, Manifold, ManifoldPoint, TangentVector};
use crate::spd::SpdMatrix;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for a numbered sub-experiment of a master seed.
pub fn rng_for_trial(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ trial.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Uniform point on the unit sphere via a normalized Gaussian triple.
pub fn uniform_sphere(rng: &mut impl Rng) -> ManifoldPoint {
    loop {
        let g: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if n > 1e-12 {
            let c = DVector::from_vec(vec![g[0] / n, g[1] / n, g[2] / n]);
            return ManifoldPoint::new_unchecked(Manifold::Sphere2, c);
        }
    }
}

fn polar_point(
    center: &ManifoldPoint,
    t: f64,
    phi: f64,
) -> Result<ManifoldPoint> {
    let chart = Chart::canonical(center);
    let c = DVector::from_vec(vec![t * phi.cos(), t * phi.sin()]);
    let v: TangentVector = chart.vector(&c);
    manifold::exp(center, &v)
}

/// Uniform point in the geodesic ball of the given radius around `center`,
/// with respect to the Riemannian area of the model.
pub fn uniform_ball(center: &ManifoldPoint, radius: f64, rng: &mut impl Rng) -> Result<ManifoldPoint> {
    let u: f64 = rng.random();
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    match center.manifold() {
        Manifold::Euclidean(n) => {
            // Radius by the n-dimensional volume CDF, direction by Gaussian.
            let t = radius * u.powf(1.0 / n as f64);
            let mut g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let gn = g.norm();
            if gn < 1e-12 {
                g = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
            } else {
                g /= gn;
            }
            Ok(ManifoldPoint::new_unchecked(
                center.manifold(),
                center.coords() + g * t,
            ))
        }
        Manifold::Sphere2 => {
            // Area of a cap of radius t is 2π(1 − cos t).
            let t = (1.0 - u * (1.0 - radius.cos())).clamp(-1.0, 1.0).acos();
            polar_point(center, t, phi)
        }
        Manifold::Hyperbolic2 => {
            // Area of a hyperbolic disc of radius t is 2π(cosh t − 1).
            let t = (1.0 + u * (radius.cosh() - 1.0)).acosh();
            polar_point(center, t, phi)
        }
    }
}

/// Uniform point in the axis-aligned cube [−half, half]ⁿ.
pub fn uniform_box(n: usize, half: f64, rng: &mut impl Rng) -> ManifoldPoint {
    let c = DVector::from_fn(n, |_, _| rng.random_range(-half..=half));
    ManifoldPoint::new_unchecked(Manifold::Euclidean(n), c)
}

/// `k` independent draws suited to rank scans: uniform on the whole sphere,
/// in a radius-2 hyperbolic ball, or in the unit cube.
pub fn scatter(manifold: Manifold, k: usize, rng: &mut impl Rng) -> Result<Vec<ManifoldPoint>> {
    let mut pts = Vec::with_capacity(k);
    for _ in 0..k {
        pts.push(match manifold {
            Manifold::Euclidean(n) => uniform_box(n, 1.0, rng),
            Manifold::Sphere2 => uniform_sphere(rng),
            Manifold::Hyperbolic2 => {
                let center = Manifold::Hyperbolic2.point(vec![0.0, 0.0, 1.0])?;
                uniform_ball(&center, 2.0, rng)?
            }
        });
    }
    Ok(pts)
}

/// Interior-leaning random weights: normalized exponentials (Dirichlet(1)).
pub fn random_weights(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let sum: f64 = w.iter().sum();
    for x in &mut w {
        *x /= sum;
    }
    let s: f64 = w.iter().sum();
    w[k - 1] += 1.0 - s;
    w
}

/// Random pmf supported on `scatter` points.
pub fn random_pmf(manifold: Manifold, k: usize, rng: &mut impl Rng) -> Result<Pmf> {
    Pmf::new(scatter(manifold, k, rng)?, random_weights(k, rng))
}

/// Random symmetric matrix with the given spectral norm.
pub fn random_symmetric(n: usize, norm: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sym = (&raw + raw.transpose()) * 0.5;
    let scale = SpdMatrix::new(sym.clone())
        .map(|s| s.eigenvalues().amax())
        .unwrap_or(0.0);
    if scale == 0.0 {
        return DMatrix::zeros(n, n);
    }
    sym * (norm / scale)
}

/// Random SPD matrix with eigenvalues log-uniform in [lo, hi].
pub fn random_spd(n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> SpdMatrix {
    let q = random_rotation(n, rng);
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| {
        (rng.random_range(lo.ln()..=hi.ln())).exp()
    }));
    let m = &q * d * q.transpose();
    SpdMatrix::new((&m + m.transpose()) * 0.5).expect("symmetric by construction")
}

/// Random nonsingular matrix with singular values log-uniform in [lo, hi]
/// (condition number at most hi/lo).
pub fn random_conditioned(n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let u = random_rotation(n, rng);
    let v = random_rotation(n, rng);
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| {
        (rng.random_range(lo.ln()..=hi.ln())).exp()
    }));
    u * d * v.transpose()
}

fn random_rotation(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = raw.qr();
    qr.q()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_samples_are_unit_and_deterministic() {
        let mut rng = rng_from_seed(7);
        let a = uniform_sphere(&mut rng);
        assert!((a.coords().norm() - 1.0).abs() < 1e-12);
        let mut rng2 = rng_from_seed(7);
        let b = uniform_sphere(&mut rng2);
        assert_eq!(a.coords(), b.coords());
    }

    #[test]
    fn ball_samples_stay_in_ball() {
        let mut rng = rng_from_seed(11);
        let centers = [
            Manifold::Sphere2.point(vec![0.0, 0.0, 1.0]).unwrap(),
            Manifold::Hyperbolic2.point(vec![0.0, 0.0, 1.0]).unwrap(),
            Manifold::Euclidean(3).point(vec![1.0, 0.0, -1.0]).unwrap(),
        ];
        for c in centers {
            for _ in 0..200 {
                let p = uniform_ball(&c, 1.3, &mut rng).unwrap();
                let d = manifold::distance(&c, &p).unwrap();
                assert!(d <= 1.3 + 1e-9, "distance {d} outside the ball");
            }
        }
    }

    #[test]
    fn random_weights_form_a_pmf() {
        let mut rng = rng_from_seed(3);
        let w = random_weights(12, &mut rng);
        assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
        assert!(w.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn random_spd_is_strictly_pd() {
        let mut rng = rng_from_seed(5);
        for _ in 0..20 {
            let m = random_spd(3, 0.2, 5.0, &mut rng);
            assert!(m.is_strictly_pd());
        }
    }

    #[test]
    fn random_symmetric_hits_requested_norm() {
        let mut rng = rng_from_seed(9);
        let s = random_symmetric(3, 0.25, &mut rng);
        let top = SpdMatrix::new(s).unwrap().eigenvalues().amax();
        assert!((top - 0.25).abs() < 1e-12);
    }
}
