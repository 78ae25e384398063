mod common;

use paleojoint_core::rng::{Purpose, Streams};
use paleojoint_core::smc::{ParticleFilter, ThetaModel};

fn replicate_logliks(n_x: usize, reps: u64, seed: u64) -> (Vec<f64>, f64) {
    let forcing = common::forcing();
    let (ctx, p) = common::surrogate_context(40, 7, &forcing);
    let exact = common::kalman_loglik(&ctx, &p);
    let model = ThetaModel::new(&ctx, p).unwrap();
    let streams = Streams::new(seed);
    let lls = (0..reps)
        .map(|r| {
            let mut rng = streams.get(Purpose::Test, r, n_x as u64, 0);
            ParticleFilter::run(&model, n_x, ctx.slices(), false, &mut rng).log_lik
        })
        .collect();
    (lls, exact)
}

#[test]
fn particle_filter_tracks_the_kalman_likelihood() {
    let (lls, exact) = replicate_logliks(512, 40, 3);
    let (mean, sd) = common::mean_sd(&lls);
    let se = common::bootstrap_se(&lls, 500, 1);
    assert!((mean - exact).abs() < 3.0 * se + sd * sd / 2.0, "{mean} vs {exact} (se {se})");
    let ratios: Vec<f64> = lls.iter().map(|l| (l - exact).exp()).collect();
    let (rm, rsd) = common::mean_sd(&ratios);
    assert!((rm - 1.0).abs() < 3.0 * rsd / (ratios.len() as f64).sqrt(), "{rm} ± {rsd}");
}

#[test]
fn estimator_variance_falls_as_particles_double() {
    let (small, _) = replicate_logliks(64, 40, 4);
    let (large, _) = replicate_logliks(256, 40, 5);
    let v_small = common::mean_sd(&small).1.powi(2);
    let v_large = common::mean_sd(&large).1.powi(2);
    // Variance scales as 1/N; a fourfold increase should cut it well below half.
    assert!(v_large < 0.5 * v_small, "{v_small} -> {v_large}");
}
