use covfield::field::{AmplitudeFn, Pmf};
use covfield::recovery::{
    forward_covariance_set, recover_pmf, ObservationSet, SolverOptions,
};
use covfield::sample;
use nalgebra::DMatrix;

fn main() {
    let mut max_iters = 0;
    let mut max_err: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = sample::rng_from_seed(seed);
        let p: Vec<_> = (0..10).map(|_| sample::uniform_sphere(&mut rng)).collect();
        let q: Vec<_> = (0..10).map(|_| sample::uniform_sphere(&mut rng)).collect();
        let pmf = Pmf::new(p, sample::random_weights(10, &mut rng)).unwrap();
        let obs = ObservationSet::with_canonical_charts(q).unwrap();
        let set = forward_covariance_set(&pmf, &obs, AmplitudeFn::Unit).unwrap();

        // Restricted smallest singular value on the simplex tangent space.
        let problem = covfield::recovery::RecoveryProblem::new(&set, pmf.support()).unwrap();
        let y = problem.y_scalar();
        let k = 10;
        let ones = DMatrix::from_element(k, k, 1.0 / k as f64);
        let proj = DMatrix::<f64>::identity(k, k) - ones;
        let yt = y * &proj;
        let sv = covfield::spd::singular_values(&yt);
        let restricted_min = sv[k - 2]; // one zero from the projector itself

        let opts = SolverOptions {
            max_iter: 200_000,
            grad_tol: 1e-14,
            ..Default::default()
        };
        let out = recover_pmf(&set, pmf.support(), &opts).unwrap();
        let err: f64 = pmf
            .weights()
            .iter()
            .zip(&out.weights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        // Find first iteration index where the trace of H implies err<=1e-4:
        // cheap proxy: rerun with increasing budgets is expensive; instead
        // report final state.
        println!(
            "seed {seed}: restricted_sigma_min {restricted_min:.3e} iters {} pg {:.2e} err {err:.3e} H {:.3e} conv {}",
            out.iterations, out.projected_grad_norm, out.h_value, out.converged
        );
        max_iters = max_iters.max(out.iterations);
        max_err = max_err.max(err);
    }
    println!("max iters {max_iters} max err {max_err:.3e}");
}
