//! Fixed-step RK4 integration of the geodesic equations in a chart.
//!
//! This path exists as an independent verification oracle for the
//! closed-form exponential maps, not as the production exp. The sphere is
//! integrated in polar coordinates of the round metric (with the chart
//! rotated so the initial data sit on the equator, pointing along it); the
//! hyperbolic plane in the graph coordinates (x₁, x₂) of the hyperboloid.

use nalgebra::{DMatrix, DVector};

use crate::error::{CovfieldError, Result};
use crate::manifold::{Manifold, ManifoldPoint, TangentVector};

/// Colatitude guard: the polar chart is declared overflowed when the
/// trajectory comes this close to either pole.
const POLE_GUARD: f64 = 1e-2;

fn rk4<const N: usize>(
    mut state: [f64; N],
    t: f64,
    steps: usize,
    deriv: impl Fn(&[f64; N]) -> Result<[f64; N]>,
    check: impl Fn(&[f64; N], usize) -> Result<()>,
) -> Result<[f64; N]> {
    let h = t / steps as f64;
    for step in 0..steps {
        check(&state, step)?;
        let k1 = deriv(&state)?;
        let k2 = deriv(&add(&state, &k1, h / 2.0))?;
        let k3 = deriv(&add(&state, &k2, h / 2.0))?;
        let k4 = deriv(&add(&state, &k3, h))?;
        for i in 0..N {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    check(&state, steps)?;
    Ok(state)
}

fn add<const N: usize>(s: &[f64; N], d: &[f64; N], h: f64) -> [f64; N] {
    std::array::from_fn(|i| s[i] + h * d[i])
}

/// Integrate the sphere geodesic system in polar coordinates (θ, φ) with the
/// round-metric Christoffel symbols. State is (θ, φ, θ̇, φ̇). Errors with
/// `ChartOverflow` when the trajectory reaches the polar singularities.
pub fn sphere_polar_rk4(
    state: [f64; 4],
    t: f64,
    steps: usize,
) -> Result<[f64; 4]> {
    rk4(
        state,
        t,
        steps,
        |s| {
            let (theta, dtheta, dphi) = (s[0], s[2], s[3]);
            let (sin, cos) = theta.sin_cos();
            if sin.abs() < POLE_GUARD {
                // Intermediate RK4 stages must not evaluate cot θ at the pole.
                return Err(CovfieldError::ChartOverflow { step: 0 });
            }
            Ok([
                dtheta,
                dphi,
                sin * cos * dphi * dphi,
                -2.0 * (cos / sin) * dtheta * dphi,
            ])
        },
        |s, step| {
            if s[0].sin().abs() < POLE_GUARD || s.iter().any(|x| !x.is_finite()) {
                return Err(CovfieldError::ChartOverflow { step });
            }
            Ok(())
        },
    )
}

/// Integrate the hyperboloid geodesic system in graph coordinates (x₁, x₂),
/// where Γᵏᵢⱼ = −xₖ gᵢⱼ with g = I − xxᵀ/(1 + ‖x‖²). State is (x₁, x₂, ẋ₁, ẋ₂).
pub fn hyperboloid_graph_rk4(state: [f64; 4], t: f64, steps: usize) -> Result<[f64; 4]> {
    rk4(
        state,
        t,
        steps,
        |s| {
            let (x1, x2, v1, v2) = (s[0], s[1], s[2], s[3]);
            let w2 = 1.0 + x1 * x1 + x2 * x2;
            let g11 = 1.0 - x1 * x1 / w2;
            let g22 = 1.0 - x2 * x2 / w2;
            let g12 = -x1 * x2 / w2;
            let speed2 = g11 * v1 * v1 + 2.0 * g12 * v1 * v2 + g22 * v2 * v2;
            Ok([v1, v2, x1 * speed2, x2 * speed2])
        },
        |_, _| Ok(()),
    )
}

/// Numerical geodesic oracle: the point γ(t) reached from `q` with initial
/// velocity `v`, by RK4 with `steps` fixed steps. Error is O(steps⁻⁴).
pub fn geodesic_ode(
    q: &ManifoldPoint,
    v: &TangentVector,
    t: f64,
    steps: usize,
) -> Result<ManifoldPoint> {
    if steps == 0 {
        return Err(CovfieldError::InvalidArgument(
            "steps must be at least 1".into(),
        ));
    }
    if !v.base().approx_eq(q, crate::manifold::POINT_TOL) {
        return Err(CovfieldError::MismatchedBase);
    }
    let m = q.manifold();
    match m {
        Manifold::Euclidean(n) => {
            // Zero Christoffel symbols: integrate the trivial system anyway so
            // the oracle exercises the same code path on every manifold.
            let mut state = vec![0.0; 2 * n];
            state[n..].copy_from_slice(v.components().as_slice());
            let h = t / steps as f64;
            for _ in 0..steps {
                // RK4 on ẋ = v, v̇ = 0 collapses to an exact Euler update.
                for i in 0..n {
                    state[i] += h * state[n + i];
                }
            }
            let coords = DVector::from_iterator(n, q.coords().iter().zip(&state).map(|(a, b)| a + b));
            Ok(ManifoldPoint::new_unchecked(m, coords))
        }
        Manifold::Sphere2 => {
            let speed = v.norm();
            if speed == 0.0 || t == 0.0 {
                return Ok(q.clone());
            }
            // Rotate the initial data onto the equator of the polar chart:
            // q ↦ (1,0,0) and the unit velocity ↦ ∂φ = (0,1,0).
            let qc = q.coords();
            let u = v.components() / speed;
            let w = cross(qc, &u);
            let rot = crate::manifold::matrix_from_cols(&[qc.clone(), u, w]);
            // In this chart the start is (θ, φ) = (π/2, 0) with θ̇ = 0,
            // φ̇ = speed.
            let end = sphere_polar_rk4([std::f64::consts::FRAC_PI_2, 0.0, 0.0, speed], t, steps)?;
            let (theta, phi) = (end[0], end[1]);
            let local = DVector::from_vec(vec![
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ]);
            let mut c: DVector<f64> = &rot * local;
            c /= c.norm();
            Ok(ManifoldPoint::new_unchecked(m, c))
        }
        Manifold::Hyperbolic2 => {
            let qc = q.coords();
            let vc = v.components();
            let end = hyperboloid_graph_rk4([qc[0], qc[1], vc[0], vc[1]], t, steps)?;
            let (x1, x2) = (end[0], end[1]);
            let coords = DVector::from_vec(vec![x1, x2, (1.0 + x1 * x1 + x2 * x2).sqrt()]);
            Ok(ManifoldPoint::new_unchecked(m, coords))
        }
    }
}

fn cross(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{distance, exp};
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn euclidean_ode_is_exact_translation() {
        let q = Manifold::Euclidean(3).point(vec![1.0, -2.0, 0.5]).unwrap();
        let v = TangentVector::new(q.clone(), DVector::from_vec(vec![0.3, 0.1, -0.7])).unwrap();
        let p = geodesic_ode(&q, &v, 2.0, 7).unwrap();
        for i in 0..3 {
            assert_relative_eq!(
                p.coords()[i],
                q.coords()[i] + 2.0 * v.components()[i],
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn sphere_ode_matches_quarter_circle() {
        let q = Manifold::Sphere2.point(vec![0.0, 0.0, 1.0]).unwrap();
        let v =
            TangentVector::new(q.clone(), DVector::from_vec(vec![FRAC_PI_2, 0.0, 0.0])).unwrap();
        let p = geodesic_ode(&q, &v, 1.0, 1000).unwrap();
        let target = Manifold::Sphere2.point(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(distance(&p, &target).unwrap() < 1e-6);
    }

    #[test]
    fn hyperbolic_ode_matches_radial_geodesic() {
        let q = Manifold::Hyperbolic2.point(vec![0.0, 0.0, 1.0]).unwrap();
        let v = TangentVector::new(q.clone(), DVector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
        let p = geodesic_ode(&q, &v, 1.0, 1000).unwrap();
        let target = Manifold::Hyperbolic2
            .point(vec![1.0_f64.sinh(), 0.0, 1.0_f64.cosh()])
            .unwrap();
        assert!(distance(&p, &target).unwrap() < 1e-6);
    }

    #[test]
    fn long_sphere_geodesics_stay_on_the_equatorial_chart() {
        let q = Manifold::Sphere2.point(vec![0.6, 0.0, 0.8]).unwrap();
        let raw = DVector::from_vec(vec![0.1, 0.9, 0.2]);
        let tangent = &raw - q.coords() * raw.dot(q.coords());
        let v = TangentVector::new(q.clone(), tangent).unwrap();
        let scaled = v.scale(3.0 / v.norm());
        let ode = geodesic_ode(&q, &scaled, 1.0, 1000).unwrap();
        let closed = exp(&q, &scaled).unwrap();
        assert!(distance(&ode, &closed).unwrap() < 1e-6);
    }

    #[test]
    fn raw_polar_chart_overflows_at_the_pole() {
        // A meridian geodesic from the equator reaches the pole at arc π/2.
        let res = sphere_polar_rk4([FRAC_PI_2, 0.0, -1.0, 0.0], 0.9 * PI, 1000);
        assert!(matches!(res, Err(CovfieldError::ChartOverflow { .. })));
    }

    #[test]
    fn zero_steps_is_rejected() {
        let q = Manifold::Sphere2.point(vec![0.0, 0.0, 1.0]).unwrap();
        let v = TangentVector::zero(q.clone());
        assert!(geodesic_ode(&q, &v, 1.0, 0).is_err());
    }
}
