use proptest::prelude::*;

use alfi::meta::{rollout, MetaProblem, RolloutSpec, TrainConfig};
use alfi::nn::{encode_sets, updater_forward, NetworkConfig, RecurrentUpdater};
use alfi::proposal::{log_density_value, score, ProposalParams};
use alfi::simulators::{SimulatorKind, SimulatorSpec};
use alfi::{RandomSource, Tape, Tensor};

fn updater(sim: &SimulatorSpec, clip: f64, seed: u64) -> RecurrentUpdater {
    let mut rng = RandomSource::new(seed);
    let net = NetworkConfig {
        encoder_hidden: vec![8],
        code: 4,
        combiner_hidden: vec![8],
        pre: 8,
        gru_hidden: 6,
    };
    let mut f = RecurrentUpdater::new(sim.feature_dim(), sim.param_dim(), &net, clip, sim.psi_scaling(), &mut rng).unwrap();
    for v in f.post.weight.data_mut() {
        *v = 6.0 * (rng.uniform() - 0.5);
    }
    f
}

fn rows(data: &[f64], cols: usize) -> Vec<Vec<f64>> {
    data.chunks(cols).map(<[f64]>::to_vec).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn update_never_exceeds_clip(
        psi in prop::collection::vec(-20.0f64..20.0, 4),
        codes in prop::collection::vec(-50.0f64..50.0, 4 * 4),
        scores in prop::collection::vec(-50.0f64..50.0, 3 * 4),
        clip in 0.01f64..1.0,
        seed in 0u64..1000,
    ) {
        let sim = SimulatorSpec::linear_regression();
        let f = updater(&sim, clip, seed);
        let mut t = Tape::no_grad();
        let b = f.bind(&mut t);
        let psi = t.constant(Tensor::row(&psi));
        let state = b.initial_state(&mut t);
        let real = t.constant(Tensor::row(&codes[..4]));
        let gen = t.constant(Tensor::from_rows(&rows(&codes[4..], 4)).unwrap());
        let sc = t.constant(Tensor::from_rows(&rows(&scores, 4)).unwrap());
        let (delta, _) = updater_forward(&mut t, &b, psi, state, real, gen, sc).unwrap();
        prop_assert!(t.value(delta).max_abs() <= clip);
    }

    #[test]
    fn set_encoding_ignores_order(
        data in prop::collection::vec(-3.0f64..3.0, 12 * 3),
        perm_seed in any::<u64>(),
    ) {
        let sim = SimulatorSpec::linear_regression();
        let f = updater(&sim, 0.3, 1);
        let mut shuffled = rows(&data, 3);
        RandomSource::new(perm_seed).shuffle(&mut shuffled);
        let mut t = Tape::no_grad();
        let b = f.bind(&mut t);
        let x = t.constant(Tensor::from_rows(&rows(&data, 3)).unwrap());
        let y = t.constant(Tensor::from_rows(&shuffled).unwrap());
        let cx = encode_sets(&mut t, &b.encoder, x, 12).unwrap();
        let cy = encode_sets(&mut t, &b.encoder, y, 12).unwrap();
        prop_assert_eq!(t.value(cx), t.value(cy));
    }

    #[test]
    fn score_is_the_log_density_gradient(
        mean in -3.0f64..3.0,
        log_std in -1.5f64..1.5,
        theta in -3.0f64..3.0,
    ) {
        let psi = ProposalParams::new(vec![mean], vec![log_std]).unwrap();
        let s = score(&[theta], &psi);
        let h = 1e-5;
        let at = |m: f64, r: f64| log_density_value(&[theta], &ProposalParams::new(vec![m], vec![r]).unwrap());
        let dm = (at(mean + h, log_std) - at(mean - h, log_std)) / (2.0 * h);
        let dr = (at(mean, log_std + h) - at(mean, log_std - h)) / (2.0 * h);
        prop_assert!((s[0] - dm).abs() <= 1e-6 * (1.0 + dm.abs()));
        prop_assert!((s[1] - dr).abs() <= 1e-6 * (1.0 + dr.abs()));
    }
}

#[test]
fn trajectories_stay_within_the_telescoped_bound() {
    for kind in [SimulatorKind::Poisson, SimulatorKind::LinearRegression, SimulatorKind::Multivariate, SimulatorKind::Weinberg] {
        let sim = SimulatorSpec::from_kind(kind);
        let cfg = TrainConfig::defaults_for(kind);
        let f = updater(&sim, cfg.clip, 3);
        let spec = RolloutSpec {
            theta_batch: 4,
            x_batch: 8,
            ..RolloutSpec::from(&cfg)
        };
        for seed in 0..5 {
            let prob = MetaProblem::generate(&sim, seed, 8).unwrap();
            let r = rollout(&f, &sim, &prob, &spec, &RandomSource::new(100 + seed)).unwrap();
            assert_eq!(r.psis.len(), cfg.iterations);
            let span = r.psis[0]
                .to_flat()
                .iter()
                .zip(r.final_psi().to_flat())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(span <= (cfg.iterations - 1) as f64 * cfg.clip + 1e-12, "{kind}: {span}");
        }
    }
}
