use ph_core::cubical::betti_oracle;
use ph_core::grid::{distance_transform, DEFAULT_TRUNCATION};
use ph_core::synth::{framed_loops, inject_error, make_synthetic_gt, monotonicity_experiment, InjectParams, MonotonicityConfig, NetworkParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn default_networks_have_at_least_four_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let mask = make_synthetic_gt(128, &NetworkParams::default(), &mut rng).unwrap();
        let dmap = distance_transform(&mask, DEFAULT_TRUNCATION).unwrap();
        // roads are exactly the zero level of the distance map
        let loops = betti_oracle(&dmap, 1, 0.0).unwrap();
        assert!(loops >= 4, "{loops} loops");
    }
}

#[test]
fn injected_errors_move_the_framed_loop_count_by_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mask = make_synthetic_gt(96, &NetworkParams::default(), &mut rng).unwrap();
    let mut dmap = distance_transform(&mask, 20.0).unwrap();
    let mut mask = mask;
    for _ in 0..15 {
        let before = framed_loops(&mask).unwrap() as i64;
        let inj = inject_error(&dmap, &mask, &InjectParams::default(), &mut rng).unwrap();
        let after = framed_loops(&inj.mask).unwrap() as i64;
        assert_eq!((after - before).abs(), 1);
        assert_eq!(inj.dmap, distance_transform(&inj.mask, 20.0).unwrap());
        dmap = inj.dmap;
        mask = inj.mask;
    }
}

#[test]
fn a_first_error_almost_always_raises_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let gt = vec![make_synthetic_gt(128, &NetworkParams::default(), &mut rng).unwrap()];
    let cfg = MonotonicityConfig {
        n_errors: 1,
        n_trials: 40,
        ..MonotonicityConfig::default()
    };
    let report = monotonicity_experiment(&gt, &cfg, &mut rng).unwrap();
    for (k, kind) in report.kinds.iter().enumerate() {
        let raised = report.trials.iter().filter(|t| t.deltas[k][0] > 0.0).count();
        assert!(raised * 100 >= 95 * report.trials.len(), "{}: {raised}/{}", kind.name, report.trials.len());
    }
}
