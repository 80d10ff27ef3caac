use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use riscovert::detector::{train, TrainConfig};
use riscovert::experiment::{detection_probability, generate_dataset, Attack, DatasetSpec};
use riscovert::signals::{qpsk_frame, scale_to_power, stream};
use riscovert::{craft, Architecture, DetectorModel, IqTensor, Label, PowerDbm, Scenario, Side};

struct Fixture {
    scenario: Scenario,
    model: DetectorModel,
    train_set: Vec<riscovert::LabeledExample>,
}

fn fixture() -> Fixture {
    let scenario = Scenario::reference(70.0).unwrap();
    let spec = DatasetSpec { samples_per_cell: 20, ..DatasetSpec::default() };
    let ds = generate_dataset(&scenario, &spec, Side::Eavesdropper, 3).unwrap();
    let cfg = TrainConfig { epochs: 3, seed: 4, ..TrainConfig::default() };
    let (model, _) = train(Architecture::default(), 0.1, ds.train(), ds.validation(), &cfg).unwrap();
    Fixture { scenario, model, train_set: ds.train().to_vec() }
}

fn benches(c: &mut Criterion) {
    let fx = fixture();
    let mut rng = stream(9, &[0]);
    let frame = scale_to_power(&qpsk_frame(16, &mut rng).unwrap(), PowerDbm(30.0));
    let input = IqTensor::from_frame(&frame);

    c.bench_function("forward", |b| b.iter(|| fx.model.forward(black_box(&input)).unwrap()));
    c.bench_function("input_gradient", |b| {
        b.iter(|| fx.model.input_gradient(black_box(&input), Label::Noise).unwrap())
    });

    let g_eve = fx.scenario.gain(Side::Eavesdropper, 2).unwrap();
    let budget = fx.scenario.budget(PowerDbm(25.0)).unwrap();
    c.bench_function("craft", |b| b.iter(|| craft(&fx.model, black_box(&frame), black_box(g_eve), &budget).unwrap()));

    let mut group = c.benchmark_group("slow");
    group.sample_size(10);
    group.bench_function("train_epoch", |b| {
        let cfg = TrainConfig { epochs: 1, seed: 5, ..TrainConfig::default() };
        b.iter_batched(
            || fx.train_set.clone(),
            |set| train(Architecture::default(), 0.1, &set, &[], &cfg).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.bench_function("detection_probability_100", |b| {
        let attack = Attack { eve_model: &fx.model, power: PowerDbm(25.0) };
        b.iter(|| detection_probability(&fx.model, &fx.scenario, Side::Receiver, 2, Some(attack), 100, 11).unwrap())
    });
    group.finish();
}

criterion_group!(pipeline, benches);
criterion_main!(pipeline);
