use diffsort::data::{synth_generate, Dataset, RankingGroup, SynthSpec};
use diffsort::objective::GroundTruthPermutation;
use diffsort::schedule::{ComparatorSchedule, NetworkKind};
use diffsort::train::{
    evaluate, group_loss_and_grad, train_loop, Architecture, LossKind, ScoringModel, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn parameter_gradient_error(
    model: &ScoringModel,
    group: &RankingGroup,
    config: &TrainConfig,
) -> f64 {
    let schedule = ComparatorSchedule::new(config.kind, config.n).unwrap();
    let (_, analytic) = group_loss_and_grad(model, group, &schedule, config).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..model.params.len() {
        let mut probe = model.clone();
        probe.params[k] += h;
        let up = group_loss_and_grad(&probe, group, &schedule, config)
            .unwrap()
            .0;
        probe.params[k] -= 2.0 * h;
        let down = group_loss_and_grad(&probe, group, &schedule, config)
            .unwrap()
            .0;
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[k].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[k] - numeric).abs() / scale);
    }
    worst
}

fn random_group(rng: &mut ChaCha8Rng, n: usize, d: usize) -> RankingGroup {
    let items: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let keys: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    RankingGroup::new(items, GroundTruthPermutation::from_keys(&keys)).unwrap()
}

#[test]
fn end_to_end_parameter_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in [NetworkKind::OddEven, NetworkKind::Bitonic] {
        let mut config = TrainConfig::new(kind, 4).unwrap();
        let model = ScoringModel::init(Architecture::Linear, 3, 2).unwrap();
        for _ in 0..5 {
            let group = random_group(&mut rng, 4, 3);
            let err = parameter_gradient_error(&model, &group, &config);
            assert!(err < 1e-3, "{kind} ranking: {err:e}");
        }
        config.loss = LossKind::TopK { k: 1 };
        let group = random_group(&mut rng, 4, 3);
        assert!(parameter_gradient_error(&model, &group, &config) < 1e-3);
    }
}

#[test]
fn mlp_parameter_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut config = TrainConfig::new(NetworkKind::Bitonic, 4).unwrap();
    config.architecture = Architecture::Mlp { hidden: vec![5] };
    let model = ScoringModel::init(config.architecture.clone(), 3, 9).unwrap();
    let group = random_group(&mut rng, 4, 3);
    let err = parameter_gradient_error(&model, &group, &config);
    assert!(err < 1e-3, "{err:e}");
}

#[test]
fn constant_model_is_at_chance() {
    let synth = synth_generate(&SynthSpec::new(4, 3, 6000, 0.0, 12)).unwrap();
    let model = ScoringModel::zeros(Architecture::Linear, 4).unwrap();
    let report = evaluate(&model, &synth.dataset, None, 3, 0).unwrap();
    assert!((report.em - 1.0 / 6.0).abs() < 0.02, "{}", report.em);
}

#[test]
fn latent_scorer_under_heavy_noise_is_at_chance() {
    let mut spec = SynthSpec::new(1, 5, 10_000, 1e3, 31);
    spec.weights = Some(vec![1.0]);
    let synth = synth_generate(&spec).unwrap();
    let oracle = ScoringModel::new(Architecture::Linear, 1, vec![1.0, 0.0]).unwrap();
    let report = evaluate(&oracle, &synth.dataset, None, 5, 0).unwrap();
    assert!((report.em - 1.0 / 120.0).abs() < 0.01, "{}", report.em);
}

#[test]
fn training_reduces_loss_and_is_reproducible() {
    let synth = synth_generate(&SynthSpec::new(4, 4, 300, 0.0, 2)).unwrap();
    let mut config = TrainConfig::new(NetworkKind::Bitonic, 4).unwrap();
    config.steps = 300;
    config.batch = 16;
    config.adam.lr = 0.01;
    config.seed = 4;
    let a = train_loop(&synth.dataset, &config).unwrap();
    let b = train_loop(&synth.dataset, &config).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model.params, b.model.params);
    assert_eq!(a.history.len(), 300);
    let head: f64 = a.history[..50].iter().sum();
    let tail: f64 = a.history[250..].iter().sum();
    assert!(tail < 0.5 * head, "{head} -> {tail}");
}

#[test]
fn training_rejects_mismatched_groups() {
    let synth = synth_generate(&SynthSpec::new(2, 4, 10, 0.0, 0)).unwrap();
    let config = TrainConfig::new(NetworkKind::OddEven, 5).unwrap();
    assert!(train_loop(&synth.dataset, &config).is_err());
    let bitonic = TrainConfig::new(NetworkKind::Bitonic, 6);
    assert!(bitonic.is_err());
    let empty = Dataset::new(Vec::new());
    assert!(empty.is_err());
}
