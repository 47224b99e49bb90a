use pbsim_core::modelkit::{Activation, LossKind, Model, Target};
use pbsim_core::optim::{Method, MitigationSpec, OptimizerConfig, PredictionForm};
use pbsim_core::pipeline::{
    pb_train, sequential_train, stage_delays, uniform_delay_train, Consistency, CyclicStream, DelaySpec,
    PbSimulator, PipelineSpec, RunOptions, Sample, ShuffledStream,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn task(seed: u64) -> (Model, Vec<Sample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Model::mlp(&[4, 6, 5, 3], Activation::Tanh, LossKind::SoftmaxCrossEntropy, &mut rng).unwrap();
    let data = (0..50)
        .map(|id| Sample {
            id,
            input: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
            target: Target::Class(id % 3),
        })
        .collect();
    (model, data)
}

fn mitigation() -> impl Strategy<Value = MitigationSpec> {
    prop_oneof![
        Just(MitigationSpec::plain()),
        Just(MitigationSpec::of(Method::Gsc)),
        Just(MitigationSpec::of(Method::Lwp)),
        Just(MitigationSpec::of(Method::Lwp).with_form(PredictionForm::WeightDifference)),
        Just(MitigationSpec::of(Method::LwpPlusGsc)),
        Just(MitigationSpec::of(Method::LwpPlusGsc).with_form(PredictionForm::WeightDifference)),
        (0.5f64..1.0).prop_map(MitigationSpec::grad_shrink),
    ]
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(1e-300))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// The pipelined simulator and the delayed-gradient simulator are
    /// separate implementations of the same weight-version semantics.
    #[test]
    fn pb_matches_delay_buffer(
        seed in 0u64..1000,
        delays in prop::collection::vec(0usize..9, 6),
        mitigation in mitigation(),
        consistent in any::<bool>(),
        micro_batch in 1usize..3,
    ) {
        let (model, data) = task(seed);
        let cfg = OptimizerConfig::new(0.05, 0.9, mitigation);
        let consistency = if consistent { Consistency::Consistent } else { Consistency::Inconsistent };
        let mut spec = PipelineSpec::with_delays(delays.clone()).with_consistency(consistency);
        spec.micro_batch = micro_batch;
        let opts = RunOptions::new(150);
        let pb = pb_train(&model, &mut ShuffledStream::new(&data, seed).unwrap(), &spec, &cfg, &opts).unwrap();
        let ud = uniform_delay_train(
            &model,
            &mut ShuffledStream::new(&data, seed).unwrap(),
            &DelaySpec { delays, consistency },
            &cfg,
            micro_batch,
            &opts,
        )
        .unwrap();
        prop_assert!(max_rel(&pb.losses(), &ud.losses()) <= 1e-12);
    }

    #[test]
    fn zero_delay_pipeline_is_sequential(seed in 0u64..1000, m in 0.0f64..0.95, combined in any::<bool>()) {
        let (model, data) = task(seed);
        let mitigation = if combined { MitigationSpec::of(Method::LwpPlusGsc) } else { MitigationSpec::plain() };
        let seq = sequential_train(
            &model,
            &mut ShuffledStream::new(&data, seed).unwrap(),
            &OptimizerConfig::sgdm(0.05, m),
            1,
            &RunOptions::new(200),
        )
        .unwrap();
        let pb = pb_train(
            &model,
            &mut ShuffledStream::new(&data, seed).unwrap(),
            &PipelineSpec::with_delays(vec![0; model.num_stages()]),
            &OptimizerConfig::new(0.05, m, mitigation),
            &RunOptions::new(200),
        )
        .unwrap();
        prop_assert!(max_rel(&seq.losses(), &pb.losses()) < 1e-12);
    }

    #[test]
    fn runs_are_bit_reproducible(seed in 0u64..1000) {
        let (model, data) = task(seed);
        let spec = PipelineSpec::pipelined(model.num_stages()).unwrap();
        let cfg = OptimizerConfig::new(0.05, 0.9, MitigationSpec::of(Method::SpecTrain));
        let opts = RunOptions::new(100).with_eval(25, &data).with_seed(seed);
        let a = pb_train(&model, &mut ShuffledStream::new(&data, seed).unwrap(), &spec, &cfg, &opts).unwrap();
        let b = pb_train(&model, &mut ShuffledStream::new(&data, seed).unwrap(), &spec, &cfg, &opts).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn stash_never_exceeds_delay_plus_one() {
    let (model, data) = task(9);
    let delays = stage_delays(model.num_stages()).unwrap();
    for method in [Method::Plain, Method::WeightStash, Method::SpecTrain, Method::LwpPlusGsc] {
        let spec = PipelineSpec::with_delays(delays.clone()).with_consistency(Consistency::Stashed);
        let mut sim = PbSimulator::new(&model, spec, OptimizerConfig::new(0.05, 0.9, MitigationSpec::of(method))).unwrap();
        let mut stream = CyclicStream::new(&data).unwrap();
        for _ in 0..60 {
            sim.tick(&pbsim_core::pipeline::DataStream::batch(&mut stream, 1).unwrap()).unwrap();
        }
        for (s, &len) in sim.max_stash_len().iter().enumerate() {
            assert!(len <= delays[s] + 1, "{method:?} stage {s}: {len}");
        }
    }
}

#[test]
fn weight_stash_method_equals_stashed_consistency() {
    let (model, data) = task(11);
    let delays = stage_delays(model.num_stages()).unwrap();
    let run = |method, consistency| {
        let spec = PipelineSpec::with_delays(delays.clone()).with_consistency(consistency);
        pb_train(
            &model,
            &mut CyclicStream::new(&data).unwrap(),
            &spec,
            &OptimizerConfig::new(0.05, 0.9, MitigationSpec::of(method)),
            &RunOptions::new(120),
        )
        .unwrap()
        .losses()
    };
    assert_eq!(run(Method::WeightStash, Consistency::Inconsistent), run(Method::Plain, Consistency::Stashed));
}

#[test]
fn fill_and_drain_is_minibatch_sgd() {
    let (model, data) = task(12);
    let cfg = OptimizerConfig::sgdm(0.1, 0.5);
    let fd = pb_train(
        &model,
        &mut CyclicStream::new(&data).unwrap(),
        &PipelineSpec::fill_and_drain(model.num_stages(), 5),
        &cfg,
        &RunOptions::new(40),
    )
    .unwrap();
    let seq = sequential_train(&model, &mut CyclicStream::new(&data).unwrap(), &cfg, 5, &RunOptions::new(40)).unwrap();
    assert_eq!(fd.losses(), seq.losses());
}

#[test]
fn spectrain_runs_and_differs_from_plain() {
    let (model, data) = task(13);
    let spec = PipelineSpec::pipelined(model.num_stages()).unwrap();
    let go = |method| {
        pb_train(
            &model,
            &mut CyclicStream::new(&data).unwrap(),
            &spec,
            &OptimizerConfig::new(0.05, 0.9, MitigationSpec::of(method)),
            &RunOptions::new(200).with_eval(0, &data),
        )
        .unwrap()
    };
    let plain = go(Method::Plain);
    let spectrain = go(Method::SpecTrain);
    assert!(!spectrain.diverged);
    assert_ne!(plain.losses(), spectrain.losses());
    assert!(spectrain.final_loss().unwrap().is_finite());
}
