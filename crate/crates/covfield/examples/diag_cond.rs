use covfield::field::AmplitudeFn;
use covfield::recovery::{build_y_matrix, ObservationSet};
use covfield::sample;

fn main() {
    for layout in ["independent", "q_equals_p"] {
        let mut worst: f64 = 0.0;
        let mut worst_seed = 0;
        for seed in 0..20u64 {
            let mut rng = sample::rng_from_seed(seed);
            let p: Vec<_> = (0..10).map(|_| sample::uniform_sphere(&mut rng)).collect();
            let q = if layout == "independent" {
                (0..10).map(|_| sample::uniform_sphere(&mut rng)).collect()
            } else {
                p.clone()
            };
            let obs = ObservationSet::with_canonical_charts(q).unwrap();
            let y = build_y_matrix(&p, &obs, AmplitudeFn::Unit).unwrap();
            let sv = covfield::spd::singular_values(y.entries());
            let cond = sv[0] / sv[sv.len() - 1];
            if cond > worst {
                worst = cond;
                worst_seed = seed;
            }
            if seed < 4 {
                println!(
                    "{layout} seed {seed}: sigma_max {:.3e} sigma_min {:.3e} cond {:.3e}",
                    sv[0],
                    sv[sv.len() - 1],
                    cond
                );
            }
        }
        println!("{layout}: worst cond {worst:.3e} at seed {worst_seed}\n");
    }
}
